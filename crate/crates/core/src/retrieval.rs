//! Exact dot-product retrieval.
//!
//! Every query is scored against every document. Scores are raw dot
//! products (no normalisation) accumulated in f64. Rankings break score ties
//! by ascending document id, so runs are identical across thread counts.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{NumericsError, ProjectionMatrix};
use crate::store::EmbeddingMatrix;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("non-finite input value")]
    NonFinite,
    #[error("run line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedRun {
    pub rankings: BTreeMap<String, Vec<RankedDoc>>,
    pub depth: usize,
    pub tag: String,
}

impl RankedRun {
    pub fn get(&self, query_id: &str) -> Option<&[RankedDoc]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    /// Document ids of one query in rank order.
    pub fn doc_ids(&self, query_id: &str) -> Vec<&str> {
        self.get(query_id)
            .map(|docs| docs.iter().map(|d| d.doc_id.as_str()).collect())
            .unwrap_or_default()
    }

    /// Six whitespace-separated columns per line, queries in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (qid, docs) in &self.rankings {
            for d in docs {
                out.push_str(&format!(
                    "{qid} Q0 {} {} {:.6} {}\n",
                    d.doc_id, d.rank, d.score, self.tag
                ));
            }
        }
        out
    }
}

/// Dot product accumulated left to right in f64.
pub fn score(q: &[f32], doc: &[f32]) -> Result<f64, RetrievalError> {
    if q.len() != doc.len() {
        return Err(RetrievalError::DimMismatch {
            left: q.len(),
            right: doc.len(),
        });
    }
    Ok(dot(q, doc))
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        s += f64::from(*x) * f64::from(*y);
    }
    s
}

/// Heap entry; the greatest entry is the one to evict first.
#[derive(Clone, Copy)]
struct Candidate {
    score: f64,
    /// Position of the document in ascending id order.
    order: u32,
    doc: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.order.cmp(&other.order))
    }
}

/// Documents scored per block; keeps a block of the corpus hot in cache
/// while a query's heap is updated.
const DOC_BLOCK: usize = 4096;

/// Top-`depth` documents for every query. With a projection, both sides are
/// projected before scoring.
pub fn retrieve(
    queries: &EmbeddingMatrix,
    corpus: &EmbeddingMatrix,
    depth: usize,
    projection: Option<&ProjectionMatrix>,
    tag: &str,
) -> Result<RankedRun, RetrievalError> {
    if depth == 0 {
        return Err(RetrievalError::ZeroDepth);
    }
    if corpus.n() == 0 {
        return Err(RetrievalError::EmptyCorpus);
    }
    if queries.dim() != corpus.dim() {
        return Err(RetrievalError::DimMismatch {
            left: queries.dim(),
            right: corpus.dim(),
        });
    }
    let projected;
    let (queries, corpus) = match projection {
        Some(p) => {
            projected = (p.apply_embeddings(queries)?, p.apply_embeddings(corpus)?);
            (&projected.0, &projected.1)
        }
        None => (queries, corpus),
    };

    let mut by_id: Vec<u32> = (0..corpus.n() as u32).collect();
    by_id.sort_by(|&a, &b| corpus.ids()[a as usize].cmp(&corpus.ids()[b as usize]));
    let mut order = vec![0u32; corpus.n()];
    for (pos, &doc) in by_id.iter().enumerate() {
        order[doc as usize] = pos as u32;
    }

    let keep = depth.min(corpus.n());
    let lists: Vec<Vec<RankedDoc>> = (0..queries.n())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(keep + 1);
            for start in (0..corpus.n()).step_by(DOC_BLOCK) {
                let end = (start + DOC_BLOCK).min(corpus.n());
                for (doc, &ord) in order.iter().enumerate().take(end).skip(start) {
                    let c = Candidate {
                        score: dot(q, corpus.row(doc)),
                        order: ord,
                        doc: doc as u32,
                    };
                    if heap.len() < keep {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            heap.into_sorted_vec()
                .into_iter()
                .enumerate()
                .map(|(i, c)| RankedDoc {
                    doc_id: corpus.ids()[c.doc as usize].clone(),
                    score: c.score,
                    rank: i + 1,
                })
                .collect()
        })
        .collect();

    let rankings = queries.ids().iter().cloned().zip(lists).collect();
    Ok(RankedRun {
        rankings,
        depth,
        tag: tag.to_string(),
    })
}

pub fn write_run(run: &RankedRun, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(run.to_text().as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Parses a six-column run. The depth is the longest list; the tag is taken
/// from the first line.
pub fn parse_run(text: &str) -> Result<RankedRun, RetrievalError> {
    let mut run = RankedRun::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| RetrievalError::Parse {
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(err(format!("expected 6 columns, found {}", cols.len())));
        }
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| err(format!("bad rank {:?}", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| err(format!("bad score {:?}", cols[4])))?;
        if run.rankings.is_empty() {
            run.tag = cols[5].to_string();
        }
        let list = run.rankings.entry(cols[0].to_string()).or_default();
        if list.iter().any(|d| d.doc_id == cols[2]) {
            return Err(err(format!(
                "document {} listed twice for {}",
                cols[2], cols[0]
            )));
        }
        list.push(RankedDoc {
            doc_id: cols[2].to_string(),
            score,
            rank,
        });
    }
    for list in run.rankings.values_mut() {
        list.sort_by_key(|d| d.rank);
        run.depth = run.depth.max(list.len());
    }
    Ok(run)
}

pub fn read_run(path: impl AsRef<Path>) -> Result<RankedRun, RetrievalError> {
    parse_run(&std::fs::read_to_string(path)?)
}
