//! Templated synthetic notes for desk-scale testing.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AnnotatedNote, CorpusError, Note, SpanAnnotation, SymptomCategory};

pub type PhraseBank = BTreeMap<SymptomCategory, Vec<String>>;

/// Example phrases from the annotation guideline category definitions.
pub fn default_phrase_bank() -> PhraseBank {
    let entries: [(SymptomCategory, &[&str]); 8] = [
        (
            SymptomCategory::DisturbedAttention,
            &["disoriented", "unable to follow directions", "confused", "altered mental status"],
        ),
        (
            SymptomCategory::DisturbedPerception,
            &["trying to poison me", "stealing from me", "hallucinations"],
        ),
        (
            SymptomCategory::PsychomotorActivity,
            &["pulling off tubes", "combative", "restless", "spitting"],
        ),
        (
            SymptomCategory::Fluctuations,
            &["becomes more agitated", "progressively", "increasingly"],
        ),
        (
            SymptomCategory::MemoryDeficit,
            &["forgetfulness", "did not know why he was brought here", "short term memory loss"],
        ),
        (
            SymptomCategory::ConsciousnessLevel,
            &["unable to stay awake", "unresponsive", "lethargic", "drowsy"],
        ),
        (
            SymptomCategory::DisturbedSleep,
            &["trouble falling asleep", "poor sleep", "minimal sleep"],
        ),
        (
            SymptomCategory::DisorganizedThinking,
            &["unable to clearly verbalize", "fixated on", "screaming incoherent words"],
        ),
    ];
    entries
        .into_iter()
        .map(|(c, phrases)| (c, phrases.iter().map(|p| p.to_string()).collect()))
        .collect()
}

const SYMPTOM_TEMPLATES: &[&str] = &[
    "Patient {} overnight.",
    "Pt noted to be {} this morning.",
    "Nursing reports patient {} during the shift.",
    "Per family, {} at home.",
    "On exam, {} and requires monitoring.",
    "Staff observed patient {} after dinner.",
];

const FILLER: &[&str] = &[
    "Vital signs stable.",
    "Family at bedside.",
    "Tolerating diet well.",
    "Will continue current plan of care.",
    "Pain controlled with medication.",
    "Ambulating with assistance.",
    "Labs reviewed with team.",
    "Skin intact, no new wounds.",
    "Discussed discharge planning with case management.",
];

const NOTE_TYPES: &[&str] = &["progress", "nursing", "consult"];

/// Generates `n_notes` synthetic notes whose annotations cover the embedded
/// phrases exactly. Each note embeds between 3 and 6 distinct phrases (fewer
/// when the bank is smaller), mixed with filler sentences.
pub fn synth_generate(
    seed: u64,
    n_notes: usize,
    phrase_bank: &PhraseBank,
) -> Result<Vec<AnnotatedNote>, CorpusError> {
    if n_notes == 0 {
        return Err(CorpusError::NoNotesRequested);
    }
    let pool: Vec<(SymptomCategory, &str)> = phrase_bank
        .iter()
        .flat_map(|(c, phrases)| {
            phrases
                .iter()
                .map(|p| p.trim())
                .filter(|p| !p.is_empty())
                .map(move |p| (*c, p))
        })
        .collect();
    if pool.is_empty() {
        return Err(CorpusError::EmptyPhraseBank);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = pool.len().min(3);
    let hi = pool.len().min(6);
    let mut notes = Vec::with_capacity(n_notes);
    for i in 0..n_notes {
        let k = rng.random_range(lo..=hi);
        let chosen: Vec<&(SymptomCategory, &str)> = pool.choose_multiple(&mut rng, k).collect();
        let n_filler = rng.random_range(1..=3usize);

        // true = symptom sentence
        let mut layout: Vec<bool> = std::iter::repeat_n(true, k)
            .chain(std::iter::repeat_n(false, n_filler))
            .collect();
        layout.shuffle(&mut rng);

        let mut text = String::new();
        let mut char_len = 0usize;
        let mut annotations = Vec::with_capacity(k);
        let mut next_phrase = chosen.into_iter();
        for (s, is_symptom) in layout.into_iter().enumerate() {
            if s > 0 {
                let sep = match rng.random_range(0..10u8) {
                    0 => "\n\n",
                    1 | 2 => "\n",
                    _ => " ",
                };
                text.push_str(sep);
                char_len += sep.chars().count();
            }
            if is_symptom {
                let &(category, phrase) = next_phrase.next().expect("k phrases chosen");
                let template = SYMPTOM_TEMPLATES.choose(&mut rng).expect("non-empty");
                let (before, after) = template.split_once("{}").expect("template slot");
                text.push_str(before);
                char_len += before.chars().count();
                let start = char_len;
                text.push_str(phrase);
                char_len += phrase.chars().count();
                annotations.push(SpanAnnotation {
                    start,
                    end: char_len,
                    category,
                    surface: phrase.to_string(),
                    annotator: None,
                });
                text.push_str(after);
                char_len += after.chars().count();
            } else {
                let filler = FILLER.choose(&mut rng).expect("non-empty");
                text.push_str(filler);
                char_len += filler.chars().count();
            }
        }

        let mut note = Note::new(format!("note-{:05}", i + 1), text);
        note.metadata.insert("source".into(), "synthetic".into());
        note.metadata.insert(
            "note_type".into(),
            NOTE_TYPES.choose(&mut rng).expect("non-empty").to_string(),
        );
        notes.push(AnnotatedNote::new(note, annotations));
    }
    Ok(notes)
}
