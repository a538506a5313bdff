use std::collections::HashMap;
use std::path::Path;

use super::StoreError;

/// Labels read from an `id<TAB>label` file. Class indices follow first-seen
/// order of the label strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabelTable {
    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, &l) in self.ids.iter().zip(&self.labels) {
            out.push_str(id);
            out.push('\t');
            out.push_str(&self.class_names[l]);
            out.push('\n');
        }
        out
    }
}

pub fn parse_labels(text: &str) -> Result<LabelTable, StoreError> {
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashMap<String, usize> = HashMap::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(id), Some(label), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(StoreError::Parse {
                line: lineno + 1,
                message: "expected `id<TAB>label`".into(),
            });
        };
        if id.is_empty() || label.is_empty() {
            return Err(StoreError::Parse {
                line: lineno + 1,
                message: "empty id or label".into(),
            });
        }
        if seen.insert(id.to_string(), lineno).is_some() {
            return Err(StoreError::DuplicateId(id.to_string()));
        }
        let next = class_names.len();
        let idx = *class_index.entry(label.to_string()).or_insert_with(|| {
            class_names.push(label.to_string());
            next
        });
        ids.push(id.to_string());
        labels.push(idx);
    }
    Ok(LabelTable {
        ids,
        labels,
        class_names,
    })
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelTable, StoreError> {
    parse_labels(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_seen_class_order() {
        let t = parse_labels("a\tf\nb\tm\nc\tf\n").unwrap();
        assert_eq!(t.class_names, vec!["f", "m"]);
        assert_eq!(t.labels, vec![0, 1, 0]);
        assert_eq!(t.to_tsv(), "a\tf\nb\tm\nc\tf\n");
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(
            parse_labels("a\tf\nb\n"),
            Err(StoreError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_labels("a\tf\na\tm\n"),
            Err(StoreError::DuplicateId(_))
        ));
    }
}
