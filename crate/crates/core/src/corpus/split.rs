use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotatedNote, CorpusError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Note-to-split assignment.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    pub assignment: BTreeMap<String, Split>,
    pub seed: u64,
}

impl SplitSpec {
    /// Tab-separated `id<TAB>split` lines, sorted by id.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# seed {}\n", self.seed);
        for (id, split) in &self.assignment {
            out.push_str(&format!("{id}\t{split}\n"));
        }
        out
    }

    pub fn parse_tsv(input: &str, origin: &str) -> Result<SplitSpec, CorpusError> {
        let mut spec = SplitSpec::default();
        for (i, line) in input.lines().enumerate() {
            let malformed = |message: String| CorpusError::Malformed {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            if let Some(rest) = line.strip_prefix("# seed ") {
                spec.seed = rest
                    .trim()
                    .parse()
                    .map_err(|_| malformed(format!("bad seed {rest:?}")))?;
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, split) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected `id<TAB>split`".into()))?;
            let split: Split = split.trim().parse().map_err(malformed)?;
            if spec.assignment.insert(id.to_string(), split).is_some() {
                return Err(malformed(format!("note {id} assigned twice")));
            }
        }
        Ok(spec)
    }
}

/// How to partition a corpus.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitPlan {
    Explicit(SplitSpec),
    Ratios {
        train: f64,
        dev: f64,
        test: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<AnnotatedNote>,
    pub dev: Vec<AnnotatedNote>,
    pub test: Vec<AnnotatedNote>,
    /// The assignment that produced this partition.
    pub spec: SplitSpec,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[AnnotatedNote] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.dev.len(), self.test.len())
    }
}

const RATIO_TOLERANCE: f64 = 1e-9;

/// Partitions a corpus into train/dev/test.
///
/// Random plans shuffle the lexicographically sorted ids, so the result depends
/// only on the id set, the ratios and the seed. Within each split notes keep
/// their corpus order.
pub fn split_corpus(corpus: &[AnnotatedNote], plan: &SplitPlan) -> Result<Splits, CorpusError> {
    let spec = match plan {
        SplitPlan::Explicit(spec) => {
            let ids: HashSet<&str> = corpus.iter().map(|n| n.id()).collect();
            if let Some(unknown) = spec.assignment.keys().find(|id| !ids.contains(id.as_str())) {
                return Err(CorpusError::UnknownSplitId(unknown.clone()));
            }
            if let Some(missing) = corpus.iter().find(|n| !spec.assignment.contains_key(n.id())) {
                return Err(CorpusError::UnassignedNote(missing.id().to_string()));
            }
            spec.clone()
        }
        &SplitPlan::Ratios {
            train,
            dev,
            test,
            seed,
        } => {
            let invalid = |reason: &str| CorpusError::InvalidRatios {
                train,
                dev,
                test,
                reason: reason.to_string(),
            };
            if [train, dev, test].iter().any(|r| !r.is_finite() || *r < 0.0) {
                return Err(invalid("ratios must be finite and non-negative"));
            }
            if (train + dev + test - 1.0).abs() > RATIO_TOLERANCE {
                return Err(invalid("ratios must sum to 1"));
            }
            let mut ids: Vec<&str> = corpus.iter().map(|n| n.id()).collect();
            ids.sort_unstable();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ids.shuffle(&mut rng);

            let n = ids.len();
            let n_train = ((n as f64) * train).round().min(n as f64) as usize;
            let n_dev = ((n as f64) * dev).round().min((n - n_train) as f64) as usize;
            let mut assignment = BTreeMap::new();
            for (i, id) in ids.into_iter().enumerate() {
                let split = if i < n_train {
                    Split::Train
                } else if i < n_train + n_dev {
                    Split::Dev
                } else {
                    Split::Test
                };
                assignment.insert(id.to_string(), split);
            }
            SplitSpec { assignment, seed }
        }
    };

    let mut splits = Splits {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        spec: SplitSpec::default(),
    };
    for note in corpus {
        match spec.assignment[note.id()] {
            Split::Train => splits.train.push(note.clone()),
            Split::Dev => splits.dev.push(note.clone()),
            Split::Test => splits.test.push(note.clone()),
        }
    }
    splits.spec = spec;
    Ok(splits)
}
