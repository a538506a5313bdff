use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Metric values indexed by `(seed, dataset)`, plus optional per-dataset
/// reference values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedRunTable {
    cells: BTreeMap<(String, String), f64>,
    references: BTreeMap<String, f64>,
}

impl SeedRunTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_cells(cells: Vec<(String, String, f64)>) -> Result<Self, AnalysisError> {
        let mut t = Self::new();
        for (s, d, v) in cells {
            t.insert(s, d, v)?;
        }
        Ok(t)
    }

    pub fn insert(
        &mut self,
        seed: String,
        dataset: String,
        value: f64,
    ) -> Result<(), AnalysisError> {
        if !value.is_finite() {
            return Err(AnalysisError::NonFinite);
        }
        if self.cells.contains_key(&(seed.clone(), dataset.clone())) {
            return Err(AnalysisError::DuplicateCell { seed, dataset });
        }
        self.cells.insert((seed, dataset), value);
        Ok(())
    }

    pub fn get(&self, seed: &str, dataset: &str) -> Option<f64> {
        self.cells
            .get(&(seed.to_string(), dataset.to_string()))
            .copied()
    }

    pub fn seeds(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|(s, _)| s.as_str()).collect()
    }

    pub fn datasets(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|(_, d)| d.as_str()).collect()
    }

    /// `(seed, value)` pairs of one dataset, in seed order.
    pub fn dataset_values(&self, dataset: &str) -> Vec<(String, f64)> {
        self.cells
            .iter()
            .filter(|((_, d), _)| d == dataset)
            .map(|((s, _), v)| (s.clone(), *v))
            .collect()
    }

    pub fn set_reference(&mut self, dataset: &str, value: f64) {
        self.references.insert(dataset.to_string(), value);
    }

    pub fn reference(&self, dataset: &str) -> Option<f64> {
        self.references.get(dataset).copied()
    }

    /// Parses `seed,dataset,value` rows after a header line.
    pub fn parse_csv(text: &str) -> Result<Self, AnalysisError> {
        let mut t = Self::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let err = |message: String| AnalysisError::Parse {
                line: i + 1,
                message,
            };
            if cols.len() != 3 {
                return Err(err(format!("expected 3 columns, found {}", cols.len())));
            }
            let v: f64 = cols[2]
                .parse()
                .map_err(|_| err(format!("bad value {:?}", cols[2])))?;
            t.insert(cols[0].to_string(), cols[1].to_string(), v)?;
        }
        Ok(t)
    }

    /// Parses `dataset,reference` rows after a header line.
    pub fn parse_reference_csv(&mut self, text: &str) -> Result<(), AnalysisError> {
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let v = match cols.as_slice() {
                [_, v] => v.parse::<f64>().ok().filter(|v| v.is_finite()),
                _ => None,
            };
            let Some(v) = v else {
                return Err(AnalysisError::Parse {
                    line: i + 1,
                    message: "expected `dataset,reference`".into(),
                });
            };
            self.set_reference(cols[0], v);
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,dataset,value\n");
        for ((s, d), v) in &self.cells {
            out.push_str(&format!("{s},{d},{v}\n"));
        }
        out
    }

    pub fn references_to_csv(&self) -> String {
        let mut out = String::from("dataset,reference\n");
        for (d, v) in &self.references {
            out.push_str(&format!("{d},{v}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub seed: String,
    pub value: f64,
    /// Dense rank, 1 = highest value.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRanking {
    /// Sorted by rank, then seed id.
    pub entries: Vec<RankEntry>,
    /// Empty when every seed scored the same.
    pub best: Vec<String>,
    pub worst: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flip {
    pub seed: String,
    pub best_on: String,
    pub worst_on: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingCell {
    pub seed: String,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub best_count: usize,
    pub worst_count: usize,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRanking {
    pub datasets: BTreeMap<String, DatasetRanking>,
    pub flips: Vec<Flip>,
    pub missing_cells: Vec<MissingCell>,
    pub seeds: BTreeMap<String, SeedSummary>,
}

/// Ranks seeds within each dataset and lists every seed that is best on one
/// dataset and worst on another. Holes in the table are ranked around and
/// reported in `missing_cells`.
pub fn rank_seeds(table: &SeedRunTable) -> Result<SeedRanking, AnalysisError> {
    let seeds = table.seeds();
    let datasets = table.datasets();
    if seeds.len() < 2 {
        return Err(AnalysisError::TooFewSeeds(seeds.len()));
    }
    if datasets.len() < 2 {
        return Err(AnalysisError::TooFewDatasets(datasets.len()));
    }

    let mut missing_cells = Vec::new();
    let mut out = BTreeMap::new();
    for &d in &datasets {
        for &s in &seeds {
            if table.get(s, d).is_none() {
                missing_cells.push(MissingCell {
                    seed: s.to_string(),
                    dataset: d.to_string(),
                });
            }
        }
        let mut values = table.dataset_values(d);
        values.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut entries: Vec<RankEntry> = Vec::with_capacity(values.len());
        for (seed, value) in values {
            let rank = match entries.last() {
                Some(prev) if prev.value == value => prev.rank,
                Some(prev) => prev.rank + 1,
                None => 1,
            };
            entries.push(RankEntry { seed, value, rank });
        }
        let last_rank = entries.last().map_or(1, |e| e.rank);
        let (best, worst) = if last_rank >= 2 {
            let pick = |r: usize| {
                entries
                    .iter()
                    .filter(|e| e.rank == r)
                    .map(|e| e.seed.clone())
                    .collect()
            };
            (pick(1), pick(last_rank))
        } else {
            (Vec::new(), Vec::new())
        };
        out.insert(
            d.to_string(),
            DatasetRanking {
                entries,
                best,
                worst,
            },
        );
    }

    let mut flips = Vec::new();
    for (d1, r1) in &out {
        for s in &r1.best {
            for (d2, r2) in &out {
                if d1 != d2 && r2.worst.contains(s) {
                    flips.push(Flip {
                        seed: s.clone(),
                        best_on: d1.clone(),
                        worst_on: d2.clone(),
                    });
                }
            }
        }
    }
    flips.sort();

    let mut summaries = BTreeMap::new();
    for &s in &seeds {
        let ranks: Vec<usize> = out
            .values()
            .filter_map(|r| r.entries.iter().find(|e| e.seed == s).map(|e| e.rank))
            .collect();
        summaries.insert(
            s.to_string(),
            SeedSummary {
                best_count: out
                    .values()
                    .filter(|r| r.best.iter().any(|b| b == s))
                    .count(),
                worst_count: out
                    .values()
                    .filter(|r| r.worst.iter().any(|w| w == s))
                    .count(),
                mean_rank: ranks.iter().sum::<usize>() as f64 / ranks.len() as f64,
            },
        );
    }

    Ok(SeedRanking {
        datasets: out,
        flips,
        missing_cells,
        seeds: summaries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub dataset: String,
    pub n: usize,
    pub mean: f64,
    /// Population variance.
    pub var: f64,
    pub min: f64,
    pub max: f64,
    pub reference: Option<f64>,
    /// Fraction of seed values ≤ the reference.
    pub reference_percentile: Option<f64>,
}

pub fn distribution_report(
    table: &SeedRunTable,
    dataset: &str,
) -> Result<DistributionReport, AnalysisError> {
    let values: Vec<f64> = table
        .dataset_values(dataset)
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    if values.is_empty() {
        return Err(AnalysisError::MissingDataset(dataset.to_string()));
    }
    if values.len() < 2 {
        return Err(AnalysisError::TooFewSeeds(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let reference = table.reference(dataset);
    Ok(DistributionReport {
        dataset: dataset.to_string(),
        n: values.len(),
        mean,
        var,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        reference,
        reference_percentile: reference
            .map(|r| values.iter().filter(|&&v| v <= r).count() as f64 / n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(cells: &[(&str, &str, f64)]) -> SeedRunTable {
        SeedRunTable::from_cells(
            cells
                .iter()
                .map(|(s, d, v)| (s.to_string(), d.to_string(), *v))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_by_two_flip() {
        let t = table(&[
            ("s1", "d1", 0.5),
            ("s2", "d1", 0.4),
            ("s1", "d2", 0.1),
            ("s2", "d2", 0.2),
        ]);
        let r = rank_seeds(&t).unwrap();
        assert_eq!(r.datasets["d1"].best, vec!["s1"]);
        assert_eq!(r.datasets["d2"].worst, vec!["s1"]);
        let flipped: Vec<_> = r.flips.iter().map(|f| f.seed.as_str()).collect();
        assert_eq!(flipped, vec!["s1", "s2"]);
        assert_eq!(r.seeds["s1"].best_count, 1);
        assert_eq!(r.seeds["s1"].mean_rank, 1.5);
    }

    #[test]
    fn ties_share_rank() {
        let t = table(&[
            ("a", "d1", 0.3),
            ("b", "d1", 0.3),
            ("c", "d1", 0.1),
            ("a", "d2", 0.2),
            ("b", "d2", 0.2),
            ("c", "d2", 0.2),
        ]);
        let r = rank_seeds(&t).unwrap();
        let ranks: Vec<_> = r.datasets["d1"]
            .entries
            .iter()
            .map(|e| (e.seed.as_str(), e.rank))
            .collect();
        assert_eq!(ranks, vec![("a", 1), ("b", 1), ("c", 2)]);
        assert!(r.datasets["d2"].best.is_empty());
        assert!(r.flips.is_empty());
    }

    #[test]
    fn holes_and_errors() {
        let t = table(&[("s1", "d1", 0.5), ("s2", "d1", 0.4), ("s1", "d2", 0.1)]);
        let r = rank_seeds(&t).unwrap();
        assert_eq!(
            r.missing_cells,
            vec![MissingCell {
                seed: "s2".into(),
                dataset: "d2".into()
            }]
        );
        assert!(r.datasets["d2"].best.is_empty());

        assert_eq!(
            rank_seeds(&table(&[("s1", "d1", 0.1), ("s1", "d2", 0.2)])).unwrap_err(),
            AnalysisError::TooFewSeeds(1)
        );
        assert_eq!(
            rank_seeds(&table(&[("s1", "d1", 0.1), ("s2", "d1", 0.2)])).unwrap_err(),
            AnalysisError::TooFewDatasets(1)
        );
        assert!(matches!(
            SeedRunTable::from_cells(vec![
                ("s".into(), "d".into(), 0.1),
                ("s".into(), "d".into(), 0.2)
            ]),
            Err(AnalysisError::DuplicateCell { .. })
        ));
    }

    #[test]
    fn distribution_examples() {
        let mut t = table(&[("a", "d", 0.2), ("b", "d", 0.4), ("c", "d", 0.6)]);
        t.set_reference("d", 0.1);
        let r = distribution_report(&t, "d").unwrap();
        assert_eq!(r.reference_percentile, Some(0.0));
        assert!((r.mean - 0.4).abs() < 1e-12);
        assert!((r.var - 0.08 / 3.0).abs() < 1e-12);
        assert_eq!((r.min, r.max), (0.2, 0.6));
        t.set_reference("d", 0.6);
        assert_eq!(
            distribution_report(&t, "d").unwrap().reference_percentile,
            Some(1.0)
        );
        assert_eq!(
            distribution_report(&t, "x").unwrap_err(),
            AnalysisError::MissingDataset("x".into())
        );
    }

    #[test]
    fn csv_round_trip() {
        let mut t = table(&[("s1", "d1", 0.5), ("s2", "d1", 0.25)]);
        t.set_reference("d1", 0.3);
        let mut back = SeedRunTable::parse_csv(&t.to_csv()).unwrap();
        back.parse_reference_csv(&t.references_to_csv()).unwrap();
        assert_eq!(back, t);
        assert!(SeedRunTable::parse_csv("seed,dataset,value\ns1,d1\n").is_err());
    }
}
