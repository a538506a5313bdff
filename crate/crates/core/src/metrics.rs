//! Rank-based retrieval metrics and group fairness gaps.
//!
//! NDCG uses gain `2^grade − 1` and discount `log2(rank + 1)`; the other
//! metrics treat grade ≥ 1 as relevant. MAP@k divides by the total number of
//! relevant documents of the query, not by the number retrieved. Queries
//! with no relevant document are skipped and reported, never scored 0.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::RankedRun;
use crate::store::Qrels;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("query has no relevant documents")]
    NoRelevantDocs,
    #[error("no query appears in both the run and the qrels")]
    EmptyIntersection,
    #[error("metric {0:?} not present in the report")]
    UnknownMetric(String),
    #[error("group {0:?} has no evaluated queries")]
    MissingGroupQueries(String),
    #[error("query {query_id} belongs to groups {first} and {second}")]
    OverlappingGroups {
        query_id: String,
        first: String,
        second: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ndcg,
    Recall,
    Map,
    Mrr,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Ndcg, Metric::Recall, Metric::Map, Metric::Mrr];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ndcg => "ndcg",
            Metric::Recall => "recall",
            Metric::Map => "map",
            Metric::Mrr => "mrr",
        }
    }

    /// `"ndcg@10"` style key.
    pub fn key(self, k: usize) -> String {
        format!("{}@{k}", self.name())
    }

    pub fn compute<S: AsRef<str>>(
        self,
        ranking: &[S],
        judged: &BTreeMap<String, u32>,
        k: usize,
    ) -> Result<f64, MetricsError> {
        match self {
            Metric::Ndcg => ndcg_at_k(ranking, judged, k),
            Metric::Recall => recall_at_k(ranking, judged, k),
            Metric::Map => map_at_k(ranking, judged, k),
            Metric::Mrr => mrr_at_k(ranking, judged, k),
        }
    }
}

/// Splits `"ndcg@10"` into its metric and cutoff.
pub fn parse_metric_key(key: &str) -> Option<(Metric, usize)> {
    let (name, k) = key.split_once('@')?;
    let metric = Metric::ALL.into_iter().find(|m| m.name() == name)?;
    Some((metric, k.parse().ok()?))
}

fn check(judged: &BTreeMap<String, u32>, k: usize) -> Result<usize, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    let relevant = judged.values().filter(|&&g| g >= 1).count();
    if relevant == 0 {
        return Err(MetricsError::NoRelevantDocs);
    }
    Ok(relevant)
}

fn grade_of<S: AsRef<str>>(judged: &BTreeMap<String, u32>, doc: &S) -> u32 {
    judged.get(doc.as_ref()).copied().unwrap_or(0)
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

pub fn ndcg_at_k<S: AsRef<str>>(
    ranking: &[S],
    judged: &BTreeMap<String, u32>,
    k: usize,
) -> Result<f64, MetricsError> {
    check(judged, k)?;
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain(grade_of(judged, d)) / (i as f64 + 2.0).log2())
        .sum();
    let mut ideal: Vec<u32> = judged.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) / (i as f64 + 2.0).log2())
        .sum();
    Ok(dcg / idcg)
}

pub fn recall_at_k<S: AsRef<str>>(
    ranking: &[S],
    judged: &BTreeMap<String, u32>,
    k: usize,
) -> Result<f64, MetricsError> {
    let relevant = check(judged, k)?;
    let hits = ranking
        .iter()
        .take(k)
        .filter(|d| grade_of(judged, *d) >= 1)
        .count();
    Ok(hits as f64 / relevant as f64)
}

pub fn map_at_k<S: AsRef<str>>(
    ranking: &[S],
    judged: &BTreeMap<String, u32>,
    k: usize,
) -> Result<f64, MetricsError> {
    let relevant = check(judged, k)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranking.iter().take(k).enumerate() {
        if grade_of(judged, d) >= 1 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant as f64)
}

pub fn mrr_at_k<S: AsRef<str>>(
    ranking: &[S],
    judged: &BTreeMap<String, u32>,
    k: usize,
) -> Result<f64, MetricsError> {
    check(judged, k)?;
    Ok(ranking
        .iter()
        .take(k)
        .position(|d| grade_of(judged, d) >= 1)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// In the run but absent from the qrels.
    NoJudgments,
    /// Judged, but no document has grade ≥ 1.
    NoRelevant,
    /// Judged, but absent from the run.
    NotInRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedQuery {
    pub query_id: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_query: BTreeMap<String, BTreeMap<String, f64>>,
    pub aggregate: BTreeMap<String, f64>,
    pub evaluated_query_count: usize,
    pub skipped_queries: Vec<SkippedQuery>,
}

impl MetricReport {
    /// `query_id,metric,k,value` rows, per query then metric key order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_id,metric,k,value\n");
        for (qid, values) in &self.per_query {
            for (key, v) in values {
                let (name, k) = key.split_once('@').unwrap_or((key.as_str(), ""));
                out.push_str(&format!("{qid},{name},{k},{v}\n"));
            }
        }
        out
    }

    /// Per-query values of one metric key.
    pub fn values(&self, key: &str) -> Result<BTreeMap<&str, f64>, MetricsError> {
        if !self.aggregate.contains_key(key) && self.evaluated_query_count > 0 {
            return Err(MetricsError::UnknownMetric(key.to_string()));
        }
        Ok(self
            .per_query
            .iter()
            .filter_map(|(q, m)| m.get(key).map(|v| (q.as_str(), *v)))
            .collect())
    }
}

/// Scores every query present in both the run and the qrels at every
/// requested cutoff.
pub fn evaluate_run(
    run: &RankedRun,
    qrels: &Qrels,
    ks: &[usize],
) -> Result<MetricReport, MetricsError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(MetricsError::InvalidK);
    }
    let mut skipped = Vec::new();
    let mut both = Vec::new();
    for qid in run.query_ids() {
        match qrels.get(qid) {
            None => skipped.push(SkippedQuery {
                query_id: qid.to_string(),
                reason: SkipReason::NoJudgments,
            }),
            Some(judged) => both.push((qid, judged)),
        }
    }
    for qid in qrels.query_ids() {
        if run.get(qid).is_none() {
            skipped.push(SkippedQuery {
                query_id: qid.to_string(),
                reason: SkipReason::NotInRun,
            });
        }
    }
    if both.is_empty() {
        return Err(MetricsError::EmptyIntersection);
    }

    let scored: Vec<(String, Option<BTreeMap<String, f64>>)> = both
        .par_iter()
        .map(|&(qid, judged)| {
            let ranking = run.doc_ids(qid);
            if check(judged, 1).is_err() {
                return (qid.to_string(), None);
            }
            let mut values = BTreeMap::new();
            for &k in ks {
                for m in Metric::ALL {
                    let v = m.compute(&ranking, judged, k).expect("checked above");
                    values.insert(m.key(k), v);
                }
            }
            (qid.to_string(), Some(values))
        })
        .collect();

    let mut per_query = BTreeMap::new();
    for (qid, values) in scored {
        match values {
            Some(v) => {
                per_query.insert(qid, v);
            }
            None => skipped.push(SkippedQuery {
                query_id: qid,
                reason: SkipReason::NoRelevant,
            }),
        }
    }
    skipped.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let mut aggregate = BTreeMap::new();
    if !per_query.is_empty() {
        let keys: Vec<String> = per_query.values().next().unwrap().keys().cloned().collect();
        for key in keys {
            let sum: f64 = per_query
                .values()
                .map(|m: &BTreeMap<String, f64>| m[&key])
                .sum();
            aggregate.insert(key, sum / per_query.len() as f64);
        }
    }
    Ok(MetricReport {
        evaluated_query_count: per_query.len(),
        per_query,
        aggregate,
        skipped_queries: skipped,
    })
}

/// Named, pairwise-disjoint sets of query ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGroups", into = "RawGroups")]
pub struct GroupSpec {
    groups: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawGroups {
    groups: BTreeMap<String, BTreeSet<String>>,
}

impl TryFrom<RawGroups> for GroupSpec {
    type Error = MetricsError;

    fn try_from(raw: RawGroups) -> Result<Self, Self::Error> {
        GroupSpec::new(raw.groups)
    }
}

impl From<GroupSpec> for RawGroups {
    fn from(g: GroupSpec) -> Self {
        RawGroups { groups: g.groups }
    }
}

impl GroupSpec {
    pub fn new(groups: BTreeMap<String, BTreeSet<String>>) -> Result<Self, MetricsError> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (name, members) in &groups {
            for q in members {
                if let Some(first) = owner.insert(q, name) {
                    return Err(MetricsError::OverlappingGroups {
                        query_id: q.clone(),
                        first: first.to_string(),
                        second: name.clone(),
                    });
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn group(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.groups.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.groups.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub mean: f64,
    /// Group members that were evaluated.
    pub evaluated: usize,
    /// Group members absent from the report (skipped or never run).
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub metric: String,
    pub groups: BTreeMap<String, GroupStat>,
    /// `mean(female) − mean(male)`.
    pub gap: f64,
    /// Mean of the neutral control group when it has evaluated queries.
    pub control_mean: Option<f64>,
}

pub const FEMALE: &str = "female";
pub const MALE: &str = "male";
pub const NEUTRAL: &str = "neutral";

/// Per-group means of one metric and the female − male gap. Every group
/// other than female and male (typically `neutral`) is reported but never
/// enters the gap.
pub fn fairness_gap(
    report: &MetricReport,
    groups: &GroupSpec,
    metric: &str,
) -> Result<FairnessReport, MetricsError> {
    let values = report.values(metric)?;
    let mut stats = BTreeMap::new();
    for (name, members) in groups.iter() {
        let present: Vec<f64> = members
            .iter()
            .filter_map(|q| values.get(q.as_str()).copied())
            .collect();
        if present.is_empty() {
            continue;
        }
        stats.insert(
            name.to_string(),
            GroupStat {
                mean: present.iter().sum::<f64>() / present.len() as f64,
                evaluated: present.len(),
                missing: members.len() - present.len(),
            },
        );
    }
    let mean_of = |g: &str| {
        stats
            .get(g)
            .map(|s| s.mean)
            .ok_or_else(|| MetricsError::MissingGroupQueries(g.to_string()))
    };
    let gap = mean_of(FEMALE)? - mean_of(MALE)?;
    Ok(FairnessReport {
        metric: metric.to_string(),
        control_mean: stats.get(NEUTRAL).map(|s| s.mean),
        groups: stats,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::RankedDoc;

    fn judged(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn ndcg_examples() {
        let j = judged(&[("a", 1)]);
        assert_eq!(ndcg_at_k(&["a", "b"], &j, 10).unwrap(), 1.0);
        let v = ndcg_at_k(&["b", "a"], &j, 10).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.63093).abs() < 1e-5);
        let j = judged(&[("a", 3), ("b", 2)]);
        assert_eq!(ndcg_at_k(&["a", "b"], &j, 10).unwrap(), 1.0);
        assert!(ndcg_at_k(&["b", "a"], &j, 10).unwrap() < 1.0);
        assert_eq!(
            ndcg_at_k(&["x"], &judged(&[("a", 0)]), 10),
            Err(MetricsError::NoRelevantDocs)
        );
        assert_eq!(
            ndcg_at_k(&["a"], &judged(&[("a", 1)]), 0),
            Err(MetricsError::InvalidK)
        );
    }

    #[test]
    fn binary_metric_examples() {
        let j = judged(&[("a", 1), ("b", 1), ("c", 1), ("d", 1)]);
        let mut ranking: Vec<String> = (0..100).map(|i| format!("x{i}")).collect();
        ranking[3] = "a".into();
        ranking[50] = "c".into();
        assert_eq!(recall_at_k(&ranking, &j, 100).unwrap(), 0.5);
        assert_eq!(mrr_at_k(&ranking, &j, 100).unwrap(), 0.25);
        assert_eq!(mrr_at_k(&ranking, &j, 3).unwrap(), 0.0);

        let j = judged(&[("a", 1), ("b", 2)]);
        assert_eq!(map_at_k(&["a", "b", "c"], &j, 10).unwrap(), 1.0);
        // one of two relevant retrieved at rank 2
        assert_eq!(map_at_k(&["c", "b"], &j, 10).unwrap(), 0.25);
    }

    fn run(lists: &[(&str, &[&str])]) -> RankedRun {
        RankedRun {
            rankings: lists
                .iter()
                .map(|(q, docs)| {
                    let docs = docs
                        .iter()
                        .enumerate()
                        .map(|(i, d)| RankedDoc {
                            doc_id: d.to_string(),
                            score: -(i as f64),
                            rank: i + 1,
                        })
                        .collect();
                    (q.to_string(), docs)
                })
                .collect(),
            depth: 10,
            tag: "t".into(),
        }
    }

    #[test]
    fn evaluate_and_skip() {
        let mut qrels = Qrels::new();
        qrels.insert("q1", "a", 1).unwrap();
        qrels.insert("q2", "b", 1).unwrap();
        qrels.insert("q3", "c", 0).unwrap();
        let r = run(&[("q1", &["a", "z"]), ("q3", &["c"]), ("q4", &["a"])]);
        let rep = evaluate_run(&r, &qrels, &[10]).unwrap();
        assert_eq!(rep.evaluated_query_count, 1);
        assert_eq!(rep.aggregate["ndcg@10"], 1.0);
        let reasons: Vec<_> = rep
            .skipped_queries
            .iter()
            .map(|s| (s.query_id.as_str(), s.reason))
            .collect();
        assert_eq!(
            reasons,
            vec![
                ("q2", SkipReason::NotInRun),
                ("q3", SkipReason::NoRelevant),
                ("q4", SkipReason::NoJudgments)
            ]
        );
        let csv = rep.to_csv();
        assert!(csv.starts_with("query_id,metric,k,value\n"));
        assert!(csv.contains("q1,ndcg,10,1\n"));

        let disjoint = run(&[("q9", &["a"])]);
        assert_eq!(
            evaluate_run(&disjoint, &qrels, &[10]),
            Err(MetricsError::EmptyIntersection)
        );
        assert_eq!(evaluate_run(&r, &qrels, &[0]), Err(MetricsError::InvalidK));
    }

    fn report(values: &[(&str, f64)]) -> MetricReport {
        let per_query: BTreeMap<_, _> = values
            .iter()
            .map(|(q, v)| (q.to_string(), BTreeMap::from([("ndcg@10".to_string(), *v)])))
            .collect();
        let mean = values.iter().map(|x| x.1).sum::<f64>() / values.len() as f64;
        MetricReport {
            evaluated_query_count: per_query.len(),
            per_query,
            aggregate: BTreeMap::from([("ndcg@10".to_string(), mean)]),
            skipped_queries: vec![],
        }
    }

    fn groups(spec: &[(&str, &[&str])]) -> GroupSpec {
        GroupSpec::new(
            spec.iter()
                .map(|(g, qs)| (g.to_string(), qs.iter().map(|q| q.to_string()).collect()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn gap_examples() {
        let rep = report(&[("f1", 0.2), ("f2", 0.4), ("m1", 0.4), ("n1", 0.9)]);
        let g = groups(&[
            ("female", &["f1", "f2"]),
            ("male", &["m1", "m2"]),
            ("neutral", &["n1"]),
        ]);
        let out = fairness_gap(&rep, &g, "ndcg@10").unwrap();
        assert!((out.gap + 0.1).abs() < 1e-12);
        assert_eq!(out.control_mean, Some(0.9));
        assert_eq!(out.groups["male"].missing, 1);

        let rep = report(&[("f1", 0.5), ("m1", 0.5)]);
        let g = groups(&[("female", &["f1"]), ("male", &["m1"])]);
        assert_eq!(fairness_gap(&rep, &g, "ndcg@10").unwrap().gap, 0.0);

        let g = groups(&[("female", &[]), ("male", &["m1"])]);
        assert_eq!(
            fairness_gap(&rep, &g, "ndcg@10"),
            Err(MetricsError::MissingGroupQueries("female".into()))
        );
        assert!(matches!(
            fairness_gap(
                &rep,
                &groups(&[("female", &["f1"]), ("male", &["m1"])]),
                "map@3"
            ),
            Err(MetricsError::UnknownMetric(_))
        ));
    }

    #[test]
    fn group_spec_json() {
        let g = groups(&[("female", &["q1"]), ("male", &["q2"])]);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"groups":{"female":["q1"],"male":["q2"]}}"#);
        assert_eq!(serde_json::from_str::<GroupSpec>(&json).unwrap(), g);
        let overlap = r#"{"groups":{"female":["q1"],"male":["q1"]}}"#;
        assert!(serde_json::from_str::<GroupSpec>(overlap).is_err());
    }

    #[test]
    fn metric_keys() {
        assert_eq!(parse_metric_key("ndcg@10"), Some((Metric::Ndcg, 10)));
        assert_eq!(parse_metric_key("recall@100"), Some((Metric::Recall, 100)));
        assert_eq!(parse_metric_key("p@5"), None);
        assert_eq!(Metric::Map.key(3), "map@3");
    }
}
