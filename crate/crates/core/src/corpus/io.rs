use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate, AnnotatedNote, CorpusError, Note, SpanAnnotation, SymptomCategory};

/// On-disk corpus layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One JSON note per line.
    Jsonl,
    /// A directory of `<id>.txt` / `<id>.ann` pairs.
    Standoff,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "standoff" => Ok(CorpusFormat::Standoff),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NoteRecord {
    id: String,
    text: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    #[serde(default)]
    annotations: Vec<SpanAnnotation>,
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads and validates a corpus. Invalid corpora are rejected, never repaired.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<AnnotatedNote>, CorpusError> {
    match format {
        CorpusFormat::Jsonl => {
            let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
            parse_jsonl(BufReader::new(file), &path.display().to_string())
        }
        CorpusFormat::Standoff => load_standoff(path),
    }
}

/// Parses JSONL from any reader; `origin` names the source in error messages.
pub fn parse_jsonl<R: BufRead>(reader: R, origin: &str) -> Result<Vec<AnnotatedNote>, CorpusError> {
    let mut notes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io {
            path: origin.to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: NoteRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        if record.id.is_empty() {
            return Err(CorpusError::Malformed {
                path: origin.to_string(),
                line: i + 1,
                message: "empty note id".into(),
            });
        }
        notes.push(AnnotatedNote::new(
            Note {
                id: record.id,
                text: record.text,
                metadata: record.metadata,
            },
            record.annotations,
        ));
    }
    check_corpus(&notes)?;
    Ok(notes)
}

fn check_corpus(notes: &[AnnotatedNote]) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for note in notes {
        if !seen.insert(note.id()) {
            return Err(CorpusError::DuplicateId(note.id().to_string()));
        }
        if let Some(v) = validate(note).into_iter().next() {
            return Err(CorpusError::Invalid {
                note_id: note.id().to_string(),
                violation: v,
            });
        }
    }
    Ok(())
}

/// Serializes a corpus as JSONL, one note per line.
pub fn to_jsonl(corpus: &[AnnotatedNote]) -> String {
    let mut out = String::new();
    for note in corpus {
        let record = NoteRecord {
            id: note.note.id.clone(),
            text: note.note.text.clone(),
            metadata: note.note.metadata.clone(),
            annotations: note.annotations.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("note record serializes"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(
    corpus: &[AnnotatedNote],
    path: &Path,
    format: CorpusFormat,
) -> Result<(), CorpusError> {
    match format {
        CorpusFormat::Jsonl => fs::write(path, to_jsonl(corpus)).map_err(|e| io_err(path, e)),
        CorpusFormat::Standoff => save_standoff(corpus, path),
    }
}

// Standoff `.ann` layout, one record per line:
//   T<n>\t<category> <start> <end>\t<surface>[\t<annotator>]
//   #meta\t<key>\t<value>
// Other lines starting with `#` are comments. Tabs, newlines and backslashes in
// free-text fields are backslash-escaped.

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape sequence \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

fn save_standoff(corpus: &[AnnotatedNote], dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for note in corpus {
        let txt = dir.join(format!("{}.txt", note.id()));
        fs::write(&txt, &note.note.text).map_err(|e| io_err(&txt, e))?;
        let mut ann = String::new();
        for (k, v) in &note.note.metadata {
            ann.push_str(&format!("#meta\t{}\t{}\n", escape(k), escape(v)));
        }
        for (i, a) in note.annotations.iter().enumerate() {
            ann.push_str(&format!(
                "T{}\t{} {} {}\t{}",
                i + 1,
                a.category.name(),
                a.start,
                a.end,
                escape(&a.surface)
            ));
            if let Some(who) = &a.annotator {
                ann.push('\t');
                ann.push_str(&escape(who));
            }
            ann.push('\n');
        }
        let path = dir.join(format!("{}.ann", note.id()));
        fs::write(&path, ann).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn load_standoff(dir: &Path) -> Result<Vec<AnnotatedNote>, CorpusError> {
    let mut stems = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") => {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    stems.push(stem.to_string());
                }
            }
            Some("ann") if !path.with_extension("txt").exists() => {
                return Err(CorpusError::Malformed {
                    path: path.display().to_string(),
                    line: 0,
                    message: "annotation file without matching .txt".into(),
                });
            }
            _ => {}
        }
    }
    stems.sort();

    let mut notes = Vec::with_capacity(stems.len());
    for id in stems {
        let txt = dir.join(format!("{id}.txt"));
        let mut text = String::new();
        fs::File::open(&txt)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| io_err(&txt, e))?;
        let ann_path = dir.join(format!("{id}.ann"));
        let mut note = Note::new(id, text);
        let mut annotations = Vec::new();
        if ann_path.exists() {
            let content = fs::read_to_string(&ann_path).map_err(|e| io_err(&ann_path, e))?;
            parse_ann(&content, &ann_path, &mut note, &mut annotations)?;
        }
        notes.push(AnnotatedNote::new(note, annotations));
    }
    check_corpus(&notes)?;
    Ok(notes)
}

fn parse_ann(
    content: &str,
    path: &Path,
    note: &mut Note,
    annotations: &mut Vec<SpanAnnotation>,
) -> Result<(), CorpusError> {
    let malformed = |line: usize, message: String| CorpusError::Malformed {
        path: path.display().to_string(),
        line,
        message,
    };
    for (i, raw) in content.lines().enumerate() {
        let lineno = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(rest) = raw.strip_prefix("#meta\t") {
            let (k, v) = rest
                .split_once('\t')
                .ok_or_else(|| malformed(lineno, "metadata line needs key and value".into()))?;
            let k = unescape(k).map_err(|m| malformed(lineno, m))?;
            let v = unescape(v).map_err(|m| malformed(lineno, m))?;
            note.metadata.insert(k, v);
            continue;
        }
        if raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(malformed(
                lineno,
                format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let mut span = fields[1].split(' ');
        let (cat, start, end) = match (span.next(), span.next(), span.next(), span.next()) {
            (Some(c), Some(s), Some(e), None) => (c, s, e),
            _ => {
                return Err(malformed(
                    lineno,
                    format!("expected `category start end`, found {:?}", fields[1]),
                ))
            }
        };
        let category: SymptomCategory = cat.parse().map_err(|e| malformed(lineno, format!("{e}")))?;
        let start: usize = start
            .parse()
            .map_err(|_| malformed(lineno, format!("bad start offset {start:?}")))?;
        let end: usize = end
            .parse()
            .map_err(|_| malformed(lineno, format!("bad end offset {end:?}")))?;
        let surface = unescape(fields[2]).map_err(|m| malformed(lineno, m))?;
        let annotator = match fields.get(3) {
            Some(who) => Some(unescape(who).map_err(|m| malformed(lineno, m))?),
            None => None,
        };
        annotations.push(SpanAnnotation {
            start,
            end,
            category,
            surface,
            annotator,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_jsonl_is_empty_corpus() {
        let notes = parse_jsonl("".as_bytes(), "mem").unwrap();
        assert!(notes.is_empty());
    }

    #[test]
    fn standoff_single_annotation() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("n1.txt"), "Pt is confused.").unwrap();
        fs::write(
            dir.path().join("n1.ann"),
            "T1\tDisturbedAttention 6 14\tconfused\n",
        )
        .unwrap();
        let notes = load_corpus(dir.path(), CorpusFormat::Standoff).unwrap();
        assert_eq!(notes.len(), 1);
        let a = &notes[0].annotations[0];
        assert_eq!((a.start, a.end), (6, 14));
        assert_eq!(a.category, SymptomCategory::DisturbedAttention);
        assert_eq!(a.surface, "confused");
    }

    #[test]
    fn standoff_surface_mismatch_names_note() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("n7.txt"), "Pt is agitated.").unwrap();
        fs::write(
            dir.path().join("n7.ann"),
            "T1\tPsychomotorActivity 6 14\trestless\n",
        )
        .unwrap();
        let err = load_corpus(dir.path(), CorpusFormat::Standoff).unwrap_err();
        match &err {
            CorpusError::Invalid { note_id, violation } => {
                assert_eq!(note_id, "n7");
                assert!(matches!(violation.rule, super::super::Rule::SurfaceMismatch { .. }));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn jsonl_reports_line_of_malformed_record() {
        let input = "{\"id\":\"a\",\"text\":\"x\"}\n{not json}\n";
        match parse_jsonl(input.as_bytes(), "c.jsonl").unwrap_err() {
            CorpusError::Malformed { line, path, .. } => {
                assert_eq!(line, 2);
                assert_eq!(path, "c.jsonl");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn jsonl_rejects_duplicate_ids() {
        let input = "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n";
        assert!(matches!(
            parse_jsonl(input.as_bytes(), "c").unwrap_err(),
            CorpusError::DuplicateId(id) if id == "a"
        ));
    }

    #[test]
    fn jsonl_rejects_out_of_bounds() {
        let input = r#"{"id":"a","text":"calm","annotations":[{"start":1,"end":9,"category":"Fluctuations","surface":"alm"}]}"#;
        assert!(matches!(
            parse_jsonl(input.as_bytes(), "c").unwrap_err(),
            CorpusError::Invalid { .. }
        ));
    }

    #[test]
    fn jsonl_rejects_unknown_category() {
        let input = r#"{"id":"a","text":"calm","annotations":[{"start":0,"end":4,"category":"Calm","surface":"calm"}]}"#;
        assert!(matches!(
            parse_jsonl(input.as_bytes(), "c").unwrap_err(),
            CorpusError::Malformed { line: 1, .. }
        ));
    }

    #[test]
    fn escape_round_trip() {
        let s = "a\tb\\n\nc\r";
        assert_eq!(unescape(&escape(s)).unwrap(), s);
        assert!(unescape("bad\\q").is_err());
    }
}
