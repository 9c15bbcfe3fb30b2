//! Versioned binary model container with a SHA-256 checksum, plus a JSON
//! manifest next to it.
//!
//! Layout: `MAGIC` (8 bytes), format version (u32 LE), payload length
//! (u64 LE), payload, SHA-256 of the payload (32 bytes). The payload holds
//! length-prefixed UTF-8 strings for labels, keywords and features, then the
//! weights row by row and the bias, all f64 LE.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TaggerError, TaggerModel, TrainConfig, TrainLog};
use crate::preprocess::BioLabel;

pub const MAGIC: &[u8; 8] = b"DLRTAGGR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub labels: Vec<String>,
    pub feature_count: usize,
    pub keyword_count: usize,
    pub checksum: String,
    pub config: Option<TrainConfig>,
    pub best_epoch: Option<usize>,
    pub dev_score: Option<f64>,
}

/// `model.bin` -> `model.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

fn put_strs<S: AsRef<str>>(buf: &mut Vec<u8>, items: &[S]) {
    buf.extend_from_slice(&(items.len() as u32).to_le_bytes());
    for s in items {
        put_str(buf, s.as_ref());
    }
}

/// Serializes a model into the binary container.
pub fn encode_model(model: &TaggerModel) -> Vec<u8> {
    let mut payload = Vec::new();
    let labels: Vec<String> = model.labels().iter().map(|l| l.to_string()).collect();
    put_strs(&mut payload, &labels);
    put_strs(&mut payload, model.keywords());
    put_strs(&mut payload, model.features());
    for w in model.weights().iter().chain(model.bias()) {
        payload.extend_from_slice(&w.to_le_bytes());
    }

    let mut out = Vec::with_capacity(payload.len() + 52);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TaggerError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| TaggerError::Corrupt("unexpected end of payload".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, TaggerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, TaggerError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, TaggerError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| TaggerError::Corrupt("invalid UTF-8 string".into()))
    }

    fn strings(&mut self) -> Result<Vec<String>, TaggerError> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.string()).collect()
    }
}

/// Parses the binary container, verifying magic, version and checksum.
pub fn decode_model(bytes: &[u8]) -> Result<TaggerModel, TaggerError> {
    if bytes.len() < 20 {
        return Err(TaggerError::Corrupt("file too short".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(TaggerError::Corrupt("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(TaggerError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 20 + len + 32 {
        return Err(TaggerError::Corrupt(format!(
            "length mismatch: header says {len} payload bytes, file has {}",
            bytes.len().saturating_sub(52)
        )));
    }
    let payload = &bytes[20..20 + len];
    if Sha256::digest(payload).as_slice() != &bytes[20 + len..] {
        return Err(TaggerError::Corrupt("checksum mismatch".into()));
    }

    let mut r = Reader { buf: payload, pos: 0 };
    let labels = r
        .strings()?
        .iter()
        .map(|s| s.parse::<BioLabel>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| TaggerError::Corrupt(e.to_string()))?;
    let keywords = r.strings()?;
    let features = r.strings()?;
    let n_weights = labels.len() * features.len();
    let weights = (0..n_weights).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let bias = (0..labels.len()).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    if r.pos != payload.len() {
        return Err(TaggerError::Corrupt("trailing bytes in payload".into()));
    }
    TaggerModel::from_parts(labels, features, keywords, weights, bias)
}

fn io_err(path: &Path, source: std::io::Error) -> TaggerError {
    TaggerError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the model container and its manifest.
pub fn save_model(
    model: &TaggerModel,
    path: &Path,
    config: Option<&TrainConfig>,
    log: Option<&TrainLog>,
) -> Result<ModelManifest, TaggerError> {
    let bytes = encode_model(model);
    let payload_len = bytes.len() - 52;
    let checksum = hex(&bytes[20 + payload_len..]);
    fs::write(path, &bytes).map_err(|e| io_err(path, e))?;
    let manifest = ModelManifest {
        format_version: FORMAT_VERSION,
        labels: model.labels().iter().map(|l| l.to_string()).collect(),
        feature_count: model.n_features(),
        keyword_count: model.keywords().len(),
        checksum,
        config: config.cloned(),
        best_epoch: log.map(|l| l.best_epoch),
        dev_score: log.and_then(|l| l.best_dev_f1),
    };
    let mpath = manifest_path(path);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&mpath, json).map_err(|e| io_err(&mpath, e))?;
    Ok(manifest)
}

/// Reads a model. When a manifest sits next to the container, its label set
/// and checksum must agree with the container.
pub fn load_model(path: &Path) -> Result<TaggerModel, TaggerError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let model = decode_model(&bytes)?;
    let mpath = manifest_path(path);
    if mpath.exists() {
        let text = fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
        let manifest: ModelManifest = serde_json::from_str(&text)
            .map_err(|e| TaggerError::Corrupt(format!("manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(TaggerError::VersionMismatch {
                found: manifest.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let labels: Vec<String> = model.labels().iter().map(|l| l.to_string()).collect();
        if manifest.labels != labels {
            return Err(TaggerError::LabelSetMismatch {
                expected: manifest.labels,
                found: labels,
            });
        }
        if manifest.checksum != hex(&bytes[bytes.len() - 32..]) {
            return Err(TaggerError::Corrupt("manifest checksum does not match model".into()));
        }
    }
    Ok(model)
}

/// Like [`load_model`], additionally requiring a specific label set.
pub fn load_model_expecting(path: &Path, labels: &[BioLabel]) -> Result<TaggerModel, TaggerError> {
    let model = load_model(path)?;
    if model.labels() != labels {
        return Err(TaggerError::LabelSetMismatch {
            expected: labels.iter().map(|l| l.to_string()).collect(),
            found: model.labels().iter().map(|l| l.to_string()).collect(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{default_phrase_bank, synth_generate};
    use crate::preprocess::{label_inventory, preprocess_corpus};
    use crate::tagger::{predict_examples, train};

    fn trained() -> (TaggerModel, Vec<crate::preprocess::SequenceExample>, TrainConfig, TrainLog) {
        let corpus = synth_generate(11, 10, &default_phrase_bank()).unwrap();
        let ex = preprocess_corpus(&corpus, false).0;
        let config = TrainConfig {
            epochs: 3,
            keywords: vec!["confused".into()],
            ..TrainConfig::default()
        };
        let (model, log) = train(&ex, &ex, &config).unwrap();
        (model, ex, config, log)
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let (model, ex, config, log) = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let manifest = save_model(&model, &path, Some(&config), Some(&log)).unwrap();
        assert_eq!(manifest.labels.len(), 17);
        assert!(manifest_path(&path).exists());
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.weights(), model.weights());
        assert_eq!(loaded.keywords(), model.keywords());
        assert_eq!(predict_examples(&loaded, &ex), predict_examples(&model, &ex));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let (model, ..) = trained();
        let bytes = encode_model(&model);
        for cut in [0, 10, 30, bytes.len() - 1] {
            assert!(matches!(decode_model(&bytes[..cut]), Err(TaggerError::Corrupt(_))), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(decode_model(&flipped), Err(TaggerError::Corrupt(_))));
        let mut newer = bytes;
        newer[8] = 2;
        assert!(matches!(decode_model(&newer), Err(TaggerError::VersionMismatch { found: 2, .. })));
    }

    #[test]
    fn label_set_mismatch() {
        let (model, ..) = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&model, &path, None, None).unwrap();
        assert!(load_model_expecting(&path, &label_inventory(false)).is_ok());
        assert!(matches!(
            load_model_expecting(&path, &label_inventory(true)),
            Err(TaggerError::LabelSetMismatch { .. })
        ));
    }

    #[test]
    fn manifest_must_match_container() {
        let (model, ..) = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&model, &path, None, None).unwrap();
        let mpath = manifest_path(&path);
        let mut m: ModelManifest = serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
        m.checksum = "00".repeat(32);
        fs::write(&mpath, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(load_model(&path), Err(TaggerError::Corrupt(_))));
    }
}
