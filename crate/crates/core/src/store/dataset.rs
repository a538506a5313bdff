use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, LabelTable, StoreError};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// Embedding rows paired with discrete labels, before any split is assigned.
#[derive(Debug, Clone)]
pub struct LabeledRows {
    embeddings: Arc<EmbeddingMatrix>,
    labels: Arc<[usize]>,
    class_names: Arc<[String]>,
}

impl LabeledRows {
    pub fn new(
        embeddings: Arc<EmbeddingMatrix>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self, StoreError> {
        let k = class_names.len();
        if k < 2 {
            return Err(StoreError::TooFewClasses(k));
        }
        if labels.len() != embeddings.n() {
            return Err(StoreError::HeaderMismatch {
                expected: embeddings.n() as u64,
                actual: labels.len() as u64,
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(StoreError::LabelOutOfRange { label, k });
        }
        Ok(Self {
            embeddings,
            labels: labels.into(),
            class_names: class_names.into(),
        })
    }

    /// Aligns a label table to the embedding rows by id. Every embedding row
    /// must be labelled and every label must name an embedding row.
    pub fn from_table(
        embeddings: Arc<EmbeddingMatrix>,
        table: &LabelTable,
    ) -> Result<Self, StoreError> {
        let mut labels = vec![usize::MAX; embeddings.n()];
        for (id, &label) in table.ids.iter().zip(&table.labels) {
            let row = embeddings
                .position(id)
                .ok_or_else(|| StoreError::UnknownId(id.clone()))?;
            labels[row] = label;
        }
        if let Some(row) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(StoreError::MissingLabel(embeddings.ids()[row].clone()));
        }
        Self::new(embeddings, labels, table.class_names.clone())
    }

    pub fn embeddings(&self) -> &Arc<EmbeddingMatrix> {
        &self.embeddings
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.class_names.len()
    }
}

/// A [`LabeledRows`] with train/dev/test row assignments.
///
/// Split membership is stored as row-index lists. The order of `train`
/// matters: online coding reads it as the transmission order.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    rows: LabeledRows,
    train: Arc<[usize]>,
    dev: Arc<[usize]>,
    test: Arc<[usize]>,
}

impl LabeledDataset {
    /// Builds a dataset from explicit, pairwise-disjoint split lists.
    pub fn from_splits(
        rows: LabeledRows,
        train: Vec<usize>,
        dev: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self, StoreError> {
        let n = rows.n();
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&dev).chain(&test) {
            if i >= n {
                return Err(StoreError::InvalidSplit(format!("row {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(StoreError::InvalidSplit(format!("row {i} assigned twice")));
            }
        }
        Ok(Self {
            rows,
            train: train.into(),
            dev: dev.into(),
            test: test.into(),
        })
    }

    pub fn rows(&self) -> &LabeledRows {
        &self.rows
    }

    pub fn embeddings(&self) -> &Arc<EmbeddingMatrix> {
        self.rows.embeddings()
    }

    pub fn k(&self) -> usize {
        self.rows.k()
    }

    pub fn dim(&self) -> usize {
        self.rows.embeddings.dim()
    }

    pub fn class_names(&self) -> &[String] {
        self.rows.class_names()
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn split_of(&self, row: usize) -> Option<Split> {
        [Split::Train, Split::Dev, Split::Test]
            .into_iter()
            .find(|&s| self.indices(s).contains(&row))
    }

    /// Feature rows of a split, in split order.
    pub fn features(&self, split: Split) -> Array2<f32> {
        gather(&self.rows.embeddings, self.indices(split))
    }

    pub fn labels(&self, split: Split) -> Vec<usize> {
        self.indices(split)
            .iter()
            .map(|&i| self.rows.labels[i])
            .collect()
    }

    /// Same split assignment over a different embedding matrix with the same
    /// ids (used for projected copies).
    pub fn with_embeddings(&self, embeddings: Arc<EmbeddingMatrix>) -> Result<Self, StoreError> {
        if embeddings.ids() != self.rows.embeddings.ids() {
            return Err(StoreError::InvalidSplit(
                "replacement embeddings must carry the same ids".into(),
            ));
        }
        Ok(Self {
            rows: LabeledRows {
                embeddings,
                labels: self.rows.labels.clone(),
                class_names: self.rows.class_names.clone(),
            },
            train: self.train.clone(),
            dev: self.dev.clone(),
            test: self.test.clone(),
        })
    }

    /// Fails if the train split is empty or some class never occurs in it.
    pub fn validate_for_probing(&self) -> Result<(), StoreError> {
        if self.train.is_empty() {
            return Err(StoreError::TooFewRows {
                required: 1,
                found: 0,
            });
        }
        let mut present = vec![false; self.k()];
        for &i in self.train.iter() {
            present[self.rows.labels[i]] = true;
        }
        if let Some(c) = present.iter().position(|p| !p) {
            return Err(StoreError::MissingClassInTrain(
                self.rows.class_names[c].clone(),
            ));
        }
        Ok(())
    }
}

fn gather(m: &EmbeddingMatrix, rows: &[usize]) -> Array2<f32> {
    let d = m.dim();
    let mut out = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        out.extend_from_slice(m.row(r));
    }
    Array2::from_shape_vec((rows.len(), d), out).expect("gathered shape")
}

/// Train/dev/test fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, dev: f64, test: f64, seed: u64) -> Result<Self, StoreError> {
        let spec = Self {
            train,
            dev,
            test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        for (name, f) in [
            ("train", self.train),
            ("dev", self.dev),
            ("test", self.test),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(StoreError::InvalidSplit(format!(
                    "{name} fraction {f} not in (0, 1)"
                )));
            }
        }
        let sum = self.train + self.dev + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(StoreError::InvalidSplit(format!("fractions sum to {sum}")));
        }
        Ok(())
    }

    /// `(train, dev, test)` sizes for `n` rows: dev and test are floor
    /// allocations and train takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // the epsilon absorbs products like 0.29 * 100 = 28.999999999999996
        let alloc = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let dev = alloc(self.dev);
        let test = alloc(self.test);
        (n - dev - test, dev, test)
    }
}

pub const MIN_SPLIT_ROWS: usize = 10;

/// Shuffles rows with the split seed and cuts them into train, dev and test.
pub fn split_dataset(rows: LabeledRows, spec: &SplitSpec) -> Result<LabeledDataset, StoreError> {
    spec.validate()?;
    let n = rows.n();
    if n < MIN_SPLIT_ROWS {
        return Err(StoreError::TooFewRows {
            required: MIN_SPLIT_ROWS,
            found: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(spec.seed));
    let (n_train, n_dev, _) = spec.sizes(n);
    let test = order.split_off(n_train + n_dev);
    let dev = order.split_off(n_train);
    LabeledDataset::from_splits(rows, order, dev, test)
}

/// Cuts the train split into consecutive shards of `shard_size` rows (the
/// last may be shorter). Dev and test are shared by every shard.
pub fn shard_dataset(
    ds: &LabeledDataset,
    shard_size: usize,
) -> Result<Vec<LabeledDataset>, StoreError> {
    if shard_size == 0 {
        return Err(StoreError::ZeroShardSize);
    }
    Ok(ds
        .train
        .chunks(shard_size)
        .map(|chunk| LabeledDataset {
            rows: ds.rows.clone(),
            train: chunk.into(),
            dev: ds.dev.clone(),
            test: ds.test.clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize, k: usize) -> LabeledRows {
        let emb = EmbeddingMatrix::with_generated_ids("r", 1, (0..n).map(|i| i as f32).collect())
            .unwrap();
        let class_names = (0..k).map(|c| format!("c{c}")).collect();
        LabeledRows::new(Arc::new(emb), (0..n).map(|i| i % k).collect(), class_names).unwrap()
    }

    fn default_split(seed: u64) -> SplitSpec {
        SplitSpec::new(0.65, 0.10, 0.25, seed).unwrap()
    }

    #[test]
    fn exact_fraction_sizes() {
        let ds = split_dataset(rows(100, 2), &default_split(1)).unwrap();
        let sizes = (
            ds.indices(Split::Train).len(),
            ds.indices(Split::Dev).len(),
            ds.indices(Split::Test).len(),
        );
        assert_eq!(sizes, (65, 10, 25));
    }

    #[test]
    fn eleven_rows_remainder_to_train() {
        // floor(1.1) = 1 dev, floor(2.75) = 2 test, 11 - 3 = 8 train
        let ds = split_dataset(rows(11, 2), &default_split(7)).unwrap();
        assert_eq!(ds.indices(Split::Train).len(), 8);
        assert_eq!(ds.indices(Split::Dev).len(), 1);
        assert_eq!(ds.indices(Split::Test).len(), 2);
    }

    #[test]
    fn biographies_scale_split() {
        // Published counts for this corpus: 255,710 / 39,369 / 98,344. Those
        // splits were fixed upstream rather than floor-allocated, so we only
        // expect agreement to within a few dozen rows.
        let (train, dev, test) = default_split(0).sizes(393_423);
        assert_eq!((train, dev, test), (255_726, 39_342, 98_355));
        assert_eq!(train + dev + test, 255_710 + 39_369 + 98_344);
        for (ours, published) in [(train, 255_710i64), (dev, 39_369), (test, 98_344)] {
            assert!((ours as i64 - published).abs() <= 30);
        }
    }

    #[test]
    fn split_is_deterministic_and_covering() {
        let a = split_dataset(rows(57, 3), &default_split(9)).unwrap();
        let b = split_dataset(rows(57, 3), &default_split(9)).unwrap();
        let c = split_dataset(rows(57, 3), &default_split(10)).unwrap();
        for s in [Split::Train, Split::Dev, Split::Test] {
            assert_eq!(a.indices(s), b.indices(s));
        }
        assert_ne!(a.indices(Split::Train), c.indices(Split::Train));
        let mut all: Vec<usize> = [Split::Train, Split::Dev, Split::Test]
            .iter()
            .flat_map(|&s| a.indices(s).to_vec())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
        assert_eq!(a.split_of(a.indices(Split::Dev)[0]), Some(Split::Dev));
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_dataset(rows(9, 2), &default_split(1)),
            Err(StoreError::TooFewRows { found: 9, .. })
        ));
        assert!(SplitSpec::new(0.5, 0.5, 0.0, 1).is_err());
        assert!(SplitSpec::new(0.6, 0.1, 0.25, 1).is_err());
    }

    #[test]
    fn shard_counts() {
        let base =
            split_dataset(rows(20, 2), &SplitSpec::new(0.5, 0.25, 0.25, 3).unwrap()).unwrap();
        assert_eq!(base.indices(Split::Train).len(), 10);
        let one = shard_dataset(&base, 10).unwrap();
        assert_eq!(one.len(), 1);
        let four = shard_dataset(&base, 3).unwrap();
        let sizes: Vec<usize> = four.iter().map(|s| s.indices(Split::Train).len()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        for s in &four {
            assert_eq!(s.indices(Split::Test), base.indices(Split::Test));
        }
        assert!(matches!(
            shard_dataset(&base, 0),
            Err(StoreError::ZeroShardSize)
        ));
    }

    #[test]
    fn large_shard_count_is_ceil() {
        // 6,943,105 train rows in 650,000-row shards
        let n_train: usize = 6_943_105;
        let shard = 650_000;
        let oracle = (n_train + shard - 1) / shard;
        assert_eq!(oracle, 11);
        assert_eq!(n_train.div_ceil(shard), oracle);
    }

    #[test]
    fn probing_validation_flags_test_only_class() {
        let r = rows(12, 2);
        // class c1 rows are the odd indices; put them all in test
        let train: Vec<usize> = (0..12).step_by(2).collect();
        let test: Vec<usize> = (1..12).step_by(2).collect();
        let ds = LabeledDataset::from_splits(r, train, vec![], test).unwrap();
        assert!(matches!(
            ds.validate_for_probing(),
            Err(StoreError::MissingClassInTrain(c)) if c == "c1"
        ));
    }

    #[test]
    fn table_alignment() {
        let emb = Arc::new(
            EmbeddingMatrix::new(vec!["x".into(), "y".into()], 1, vec![0.0, 1.0]).unwrap(),
        );
        let t = super::super::parse_labels("y\tm\nx\tf\n").unwrap();
        let r = LabeledRows::from_table(emb.clone(), &t).unwrap();
        assert_eq!(r.labels(), &[1, 0]);
        let partial = super::super::parse_labels("y\tm\nz\tf\n").unwrap();
        assert!(matches!(
            LabeledRows::from_table(emb, &partial),
            Err(StoreError::UnknownId(z)) if z == "z"
        ));
    }
}
