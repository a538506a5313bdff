use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::path::Path;

use super::StoreError;

/// Relevance judgments, `query_id -> doc_id -> grade`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    entries: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a judgment. Re-inserting the same grade is a no-op; a
    /// different grade for an existing pair is an error.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Result<(), StoreError> {
        let docs = self.entries.entry(query_id.to_string()).or_default();
        match docs.entry(doc_id.to_string()) {
            Entry::Vacant(v) => {
                v.insert(grade);
                Ok(())
            }
            Entry::Occupied(o) if *o.get() == grade => Ok(()),
            Entry::Occupied(o) => Err(StoreError::ConflictingGrade {
                query_id: query_id.to_string(),
                doc_id: doc_id.to_string(),
                first: *o.get(),
                second: grade,
            }),
        }
    }

    pub fn get(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.entries.get(query_id)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.entries.get(query_id)?.get(doc_id).copied()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> {
        self.entries.iter().map(|(q, d)| (q.as_str(), d))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 4-column `query_id 0 doc_id grade` lines in sorted order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.entries {
            for (d, g) in docs {
                out.push_str(&format!("{q} 0 {d} {g}\n"));
            }
        }
        out
    }
}

pub fn parse_qrels(text: &str) -> Result<Qrels, StoreError> {
    let mut qrels = Qrels::new();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(StoreError::Parse {
                line: lineno + 1,
                message: format!("expected 4 columns, found {}", fields.len()),
            });
        }
        let grade: u32 = fields[3].parse().map_err(|_| StoreError::Parse {
            line: lineno + 1,
            message: format!("grade {:?} is not a non-negative integer", fields[3]),
        })?;
        qrels.insert(fields[0], fields[2], grade)?;
    }
    Ok(qrels)
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<Qrels, StoreError> {
    parse_qrels(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_four_columns() {
        let q = parse_qrels("q1 0 d1 1\nq1 0 d2 0\n\nq2\t0\td9\t3\n").unwrap();
        assert_eq!(q.grade("q1", "d1"), Some(1));
        assert_eq!(q.grade("q2", "d9"), Some(3));
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn duplicate_lines() {
        assert!(parse_qrels("q 0 d 1\nq 0 d 1\n").is_ok());
        assert!(matches!(
            parse_qrels("q 0 d 1\nq 0 d 2\n"),
            Err(StoreError::ConflictingGrade {
                first: 1,
                second: 2,
                ..
            })
        ));
    }

    #[test]
    fn rejects_bad_grades_and_columns() {
        assert!(matches!(
            parse_qrels("q 0 d -1\n"),
            Err(StoreError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_qrels("q 0 d\n"),
            Err(StoreError::Parse { line: 1, .. })
        ));
    }
}
