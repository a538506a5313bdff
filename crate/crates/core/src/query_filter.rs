//! Lexical filtering of entity queries and construction of gender groups.
//!
//! The automatic pass is deliberately high-recall: a query is an entity
//! query if it contains an entity cue word, and gendered if it contains any
//! term of the lexicon. Manual annotations then decide the subject gender and
//! whether the query actually constrains the gender of the answer.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::GroupSpec;
use crate::store::TextRecord;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("annotation line {line}: {message}")]
    AnnotationParse { line: usize, message: String },
    #[error("invalid annotation for {query_id}: {message}")]
    InvalidAnnotation { query_id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderLexicon {
    female: BTreeSet<String>,
    male: BTreeSet<String>,
    entity: BTreeSet<String>,
}

const DEFAULT_FEMALE: &[&str] = &[
    "she", "her", "hers", "woman", "women", "actress", "sister", "mother", "queen", "wife", "girl",
    "female",
];
const DEFAULT_MALE: &[&str] = &[
    "he", "him", "his", "man", "men", "actor", "brother", "father", "king", "husband", "boy",
    "male",
];
const DEFAULT_ENTITY: &[&str] = &["who", "whose", "whom", "person", "name"];

impl Default for GenderLexicon {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            female: set(DEFAULT_FEMALE),
            male: set(DEFAULT_MALE),
            entity: set(DEFAULT_ENTITY),
        }
    }
}

impl GenderLexicon {
    pub fn new(
        female: BTreeSet<String>,
        male: BTreeSet<String>,
        entity: BTreeSet<String>,
    ) -> Result<Self, FilterError> {
        for term in female.iter().chain(&male).chain(&entity) {
            let toks = tokenize(term);
            if toks.len() != 1 || toks[0] != *term {
                return Err(FilterError::Lexicon {
                    line: 0,
                    message: format!("{term:?} is not a lowercase single token"),
                });
            }
        }
        if let Some(both) = female.intersection(&male).next() {
            return Err(FilterError::Lexicon {
                line: 0,
                message: format!("{both:?} listed as both female and male"),
            });
        }
        Ok(Self {
            female,
            male,
            entity,
        })
    }

    pub fn female_terms(&self) -> &BTreeSet<String> {
        &self.female
    }

    pub fn male_terms(&self) -> &BTreeSet<String> {
        &self.male
    }

    pub fn entity_cues(&self) -> &BTreeSet<String> {
        &self.entity
    }

    /// Parses `[female]`, `[male]` and `[entity]` sections, one term per
    /// line. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, FilterError> {
        let mut sections: [BTreeSet<String>; 3] = Default::default();
        let mut current: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                current = Some(match line {
                    "[female]" => 0,
                    "[male]" => 1,
                    "[entity]" => 2,
                    other => {
                        return Err(FilterError::Lexicon {
                            line: i + 1,
                            message: format!("unknown section {other}"),
                        })
                    }
                });
                continue;
            }
            let Some(idx) = current else {
                return Err(FilterError::Lexicon {
                    line: i + 1,
                    message: "term before any section header".into(),
                });
            };
            sections[idx].insert(line.to_string());
        }
        let [female, male, entity] = sections;
        Self::new(female, male, entity).map_err(|e| match e {
            FilterError::Lexicon { message, .. } => FilterError::Lexicon { line: 0, message },
            other => other,
        })
    }

    /// Sections in fixed order with sorted terms.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, set) in [
            ("female", &self.female),
            ("male", &self.male),
            ("entity", &self.entity),
        ] {
            out.push_str(&format!("[{name}]\n"));
            for t in set {
                out.push_str(t);
                out.push('\n');
            }
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FilterError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// True iff some entity cue occurs as a whole token.
pub fn detect_entity_query(text: &str, lex: &GenderLexicon) -> bool {
    tokenize(text).iter().any(|t| lex.entity.contains(t))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderHits {
    pub female: Vec<String>,
    pub male: Vec<String>,
}

/// Gendered lexicon terms in order of occurrence.
pub fn detect_gender_terms(text: &str, lex: &GenderLexicon) -> GenderHits {
    let mut hits = GenderHits::default();
    for t in tokenize(text) {
        if lex.female.contains(&t) {
            hits.female.push(t);
        } else if lex.male.contains(&t) {
            hits.male.push(t);
        }
    }
    hits
}

/// Output of the automatic pass for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCandidate {
    pub query_id: String,
    pub text: String,
    pub entity: bool,
    pub hits: GenderHits,
}

impl QueryCandidate {
    pub fn is_gendered(&self) -> bool {
        !self.hits.female.is_empty() || !self.hits.male.is_empty()
    }
}

pub fn screen_queries(queries: &[TextRecord], lex: &GenderLexicon) -> Vec<QueryCandidate> {
    queries
        .iter()
        .map(|q| QueryCandidate {
            query_id: q.id.clone(),
            text: q.text.clone(),
            entity: detect_entity_query(&q.text, lex),
            hits: detect_gender_terms(&q.text, lex),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectGender {
    Male,
    Female,
    Neutral,
}

impl fmt::Display for SubjectGender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubjectGender::Male => "male",
            SubjectGender::Female => "female",
            SubjectGender::Neutral => "neutral",
        })
    }
}

impl FromStr for SubjectGender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "male" | "m" => Ok(SubjectGender::Male),
            "female" | "f" => Ok(SubjectGender::Female),
            "neutral" | "none" | "n" => Ok(SubjectGender::Neutral),
            other => Err(format!("unknown gender {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedQuery {
    pub query_id: String,
    pub text: String,
    pub subject_gender: SubjectGender,
    pub constrains_gender: bool,
}

impl AnnotatedQuery {
    fn validate(&self) -> Result<(), FilterError> {
        if self.constrains_gender && self.subject_gender == SubjectGender::Neutral {
            return Err(FilterError::InvalidAnnotation {
                query_id: self.query_id.clone(),
                message: "a neutral subject cannot constrain gender".into(),
            });
        }
        Ok(())
    }
}

/// Parses `query_id<TAB>gender<TAB>constrains(0/1)` lines; texts are left
/// empty (see [`attach_text`]).
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotatedQuery>, FilterError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| FilterError::AnnotationParse {
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if cols.len() != 3 {
            return Err(err(format!("expected 3 columns, found {}", cols.len())));
        }
        let subject_gender = cols[1].parse().map_err(err)?;
        let constrains_gender = match cols[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(err(format!("constrains flag {other:?} is not 0/1"))),
        };
        let q = AnnotatedQuery {
            query_id: cols[0].to_string(),
            text: String::new(),
            subject_gender,
            constrains_gender,
        };
        q.validate()?;
        out.push(q);
    }
    Ok(out)
}

pub fn annotations_to_tsv(annotations: &[AnnotatedQuery]) -> String {
    annotations
        .iter()
        .map(|a| {
            format!(
                "{}\t{}\t{}\n",
                a.query_id,
                a.subject_gender,
                u8::from(a.constrains_gender)
            )
        })
        .collect()
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotatedQuery>, FilterError> {
    parse_annotations(&std::fs::read_to_string(path)?)
}

/// Fills annotation texts from query records with matching ids.
pub fn attach_text(annotations: &mut [AnnotatedQuery], queries: &[TextRecord]) {
    let by_id: BTreeMap<&str, &str> = queries
        .iter()
        .map(|q| (q.id.as_str(), q.text.as_str()))
        .collect();
    for a in annotations {
        if let Some(t) = by_id.get(a.query_id.as_str()) {
            a.text = t.to_string();
        }
    }
}

pub const FEMALE_GROUP: &str = "female";
pub const MALE_GROUP: &str = "male";
pub const NEUTRAL_GROUP: &str = "neutral";

/// Female and male groups take gendered queries (only those that constrain
/// the answer when `require_constraint`); the neutral group takes
/// neutral-subject queries. All three groups are always present.
pub fn build_group_spec(
    annotations: &[AnnotatedQuery],
    require_constraint: bool,
) -> Result<GroupSpec, FilterError> {
    let mut seen = HashSet::new();
    let mut female = BTreeSet::new();
    let mut male = BTreeSet::new();
    let mut neutral = BTreeSet::new();
    for a in annotations {
        a.validate()?;
        if !seen.insert(a.query_id.as_str()) {
            return Err(FilterError::InvalidAnnotation {
                query_id: a.query_id.clone(),
                message: "annotated more than once".into(),
            });
        }
        let keep = a.constrains_gender || !require_constraint;
        match a.subject_gender {
            SubjectGender::Female if keep => female.insert(a.query_id.clone()),
            SubjectGender::Male if keep => male.insert(a.query_id.clone()),
            SubjectGender::Neutral => neutral.insert(a.query_id.clone()),
            _ => false,
        };
    }
    let mut groups = BTreeMap::new();
    groups.insert(FEMALE_GROUP.to_string(), female);
    groups.insert(MALE_GROUP.to_string(), male);
    groups.insert(NEUTRAL_GROUP.to_string(), neutral);
    Ok(GroupSpec::new(groups).expect("groups built disjoint"))
}
