use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StoreError;

/// One `{"id": ..., "text": ...}` line of a query or document JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TextRecord>, StoreError> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TextRecord = serde_json::from_str(line).map_err(|e| StoreError::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(StoreError::DuplicateId(rec.id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<TextRecord>, StoreError> {
    parse_jsonl(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records() {
        let recs = parse_jsonl(
            "{\"id\":\"q1\",\"text\":\"who is she\"}\n\n{\"id\":\"q2\",\"text\":\"x\"}\n",
        )
        .unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].text, "who is she");
        assert!(parse_jsonl("{\"id\":1}").is_err());
    }
}
