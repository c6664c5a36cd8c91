use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::Conversation;
use crate::error::{Error, Result};

/// Reads one conversation per line. When `labels` is given, every emotion must
/// belong to it.
pub fn load_jsonl(path: &Path, labels: Option<&[String]>) -> Result<Vec<Conversation>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ingest = |line: usize, message: String| Error::Ingestion {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let conv: Conversation = serde_json::from_str(&line).map_err(|e| ingest(lineno, format!("malformed conversation: {e}")))?;
        if conv.utterances.is_empty() {
            return Err(ingest(lineno, format!("conversation {} has no utterances", conv.id)));
        }
        if let Some(labels) = labels {
            for u in &conv.utterances {
                if !labels.iter().any(|l| l == &u.emotion) {
                    return Err(ingest(
                        lineno,
                        format!("unknown emotion label {:?} in conversation {}", u.emotion, conv.id),
                    ));
                }
            }
        }
        out.push(conv);
    }
    if out.is_empty() {
        return Err(ingest(0, "file contains no conversations".into()));
    }
    Ok(out)
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn ec_like_file_loads_with_four_labels() {
        let dir = tempfile::tempdir().unwrap();
        let body = [
            r#"{"id":"c1","utterances":[{"speaker":"spk_a","text":"grin","emotion":"happy"},{"speaker":"spk_b","text":"tears","emotion":"sad"},{"speaker":"spk_a","text":"meh","emotion":"others"}]}"#,
            r#"{"id":"c2","utterances":[{"speaker":"spk_a","text":"yell","emotion":"angry"}]}"#,
        ]
        .join("\n");
        let p = write(&dir, "ec.jsonl", &body);
        let convs = load_jsonl(&p, None).unwrap();
        let mut labels: Vec<_> = convs.iter().flat_map(|c| c.utterances.iter().map(|u| u.emotion.clone())).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels, ["angry", "happy", "others", "sad"]);
    }

    #[test]
    fn unknown_label_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let body = [
            r#"{"id":"c1","utterances":[{"speaker":"a","text":"x","emotion":"happy"}]}"#,
            r#"{"id":"c2","utterances":[{"speaker":"a","text":"x","emotion":"bored"}]}"#,
        ]
        .join("\n");
        let p = write(&dir, "bad.jsonl", &body);
        let labels = vec!["happy".to_string()];
        match load_jsonl(&p, Some(&labels)) {
            Err(Error::Ingestion { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("bored"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_empty_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "junk.jsonl", "{not json}\n");
        assert!(matches!(load_jsonl(&p, None), Err(Error::Ingestion { line: 1, .. })));
        let p = write(&dir, "empty.jsonl", "");
        assert!(matches!(load_jsonl(&p, None), Err(Error::Ingestion { .. })));
    }
}
