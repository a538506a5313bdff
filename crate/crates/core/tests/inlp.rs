//! Concept removal on constructed data.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use reprobe_core::inlp::{fit_inlp, load_projection, verify_removal, InlpError, StopReason};
use reprobe_core::mdl::{online_codelength, ProbeConfig};
use reprobe_core::numerics::{ProjectionMatrix, TrainConfig};
use reprobe_core::seed;
use reprobe_core::store::{
    split_dataset, EmbeddingMatrix, LabeledDataset, LabeledRows, Split, SplitSpec,
};
use reprobe_core::synth::{planted, PlantedConfig};

fn split(rows: LabeledRows, seed: u64) -> LabeledDataset {
    split_dataset(rows, &SplitSpec::new(0.65, 0.10, 0.25, seed).unwrap()).unwrap()
}

/// Points uniform in the square, labelled by the sign of coordinate 0.
fn sign_dataset(n: usize, seed_value: u64) -> LabeledDataset {
    let mut rng = seed::rng(seed_value);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..n {
        let x: f32 = rng.random_range(-1.0..1.0);
        let y: f32 = rng.random_range(-1.0..1.0);
        data.extend([x, y]);
        labels.push(usize::from(x > 0.0));
    }
    let m = EmbeddingMatrix::with_generated_ids("p", 2, data).unwrap();
    let rows = LabeledRows::new(Arc::new(m), labels, vec!["neg".into(), "pos".into()]).unwrap();
    split(rows, seed_value)
}

/// Best accuracy of any 1-D threshold rule on the projected values,
/// searched exhaustively over all cut points and both orientations.
fn best_threshold_accuracy(values: &[f64], labels: &[usize]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let n = values.len() as f64;
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    let mut best = 0.0f64;
    let mut pos_below = 0usize;
    for cut in 0..=order.len() {
        if cut > 0 {
            pos_below += labels[order[cut - 1]];
        }
        let neg_below = cut - pos_below;
        let pos_above = total_pos - pos_below;
        let neg_above = (order.len() - cut) - pos_above;
        // "below → neg, above → pos" and its mirror
        best = best.max((neg_below + pos_above) as f64 / n);
        best = best.max((pos_below + neg_above) as f64 / n);
    }
    best
}

#[test]
fn removes_the_sign_coordinate() {
    let ds = sign_dataset(2000, 7);
    let r = fit_inlp(&ds, 1, 0.02, &TrainConfig::default().with_seed(7)).unwrap();
    assert_eq!(r.removed_rank, 1);
    assert_eq!(
        r.iterations_run, 1,
        "{:?} vs {}",
        r.per_iteration_accuracy, r.majority_baseline
    );
    let p = r.projection.matrix();
    assert!(p[[0, 0]].abs() < 0.05, "{p:?}");
    assert!((p[[1, 1]] - 1.0).abs() < 0.05, "{p:?}");

    // all remaining information lies on one line; no separator on it beats
    // chance by more than a little
    let x = r.projection.apply(ds.features(Split::Test).view()).unwrap();
    let dir = [p[[0, 1]], p[[1, 1]]];
    let proj: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|row| f64::from(row[0]) * dir[0] + f64::from(row[1]) * dir[1])
        .collect();
    let acc = best_threshold_accuracy(&proj, &ds.labels(Split::Test));
    let pos = ds.labels(Split::Test).iter().sum::<usize>() as f64 / proj.len() as f64;
    let majority = pos.max(1.0 - pos);
    assert!(acc <= majority.max(0.5) + 0.05, "acc {acc}");
}

#[test]
fn independent_labels_stop_at_once() {
    for seed_value in 0..4 {
        let mut rng = seed::rng(seed_value);
        let n = 20_000;
        let data: Vec<f32> = (0..n * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let m = EmbeddingMatrix::with_generated_ids("r", 6, data).unwrap();
        let names = vec!["a".into(), "b".into(), "c".into()];
        let ds = split(
            LabeledRows::new(Arc::new(m), labels, names).unwrap(),
            seed_value,
        );
        let r = fit_inlp(&ds, 30, 0.02, &TrainConfig::default().with_seed(seed_value)).unwrap();
        let acc = r.per_iteration_accuracy[0];
        assert_eq!(r.iterations_run, 1, "{acc} vs {}", r.majority_baseline);
        assert_eq!(r.stop_reason, StopReason::ReachedBaseline);
        assert!(r.removed_rank <= 2);
        assert!(
            (acc - r.majority_baseline).abs() <= 0.03,
            "{acc} vs {}",
            r.majority_baseline
        );
    }
}

#[test]
fn planted_concept_is_removed() {
    let data = planted(&PlantedConfig {
        n: 2048,
        seed: 5,
        ..PlantedConfig::default()
    });
    let rows = LabeledRows::from_table(Arc::new(data.embeddings.clone()), &data.binary).unwrap();
    let ds = split(rows, 5);
    let cfg = TrainConfig::default().with_seed(5);
    let r = fit_inlp(&ds, 30, 0.02, &cfg).unwrap();
    let d = ds.dim();

    // invariants
    let p = r.projection.matrix();
    let pp = p.dot(p);
    assert!(pp.iter().zip(p.iter()).all(|(a, b)| (a - b).abs() < 1e-6));
    assert!(p
        .iter()
        .zip(p.t().iter())
        .all(|(a, b)| (a - b).abs() < 1e-12));
    assert_eq!(r.removed_rank, d - r.projection.rank());
    assert_eq!(r.basis.nrows(), r.removed_rank);
    // every removed direction stays annihilated
    let residual = r.basis.dot(p);
    assert!(residual.iter().all(|v| v.abs() < 1e-9));
    assert!(*r.per_iteration_accuracy.last().unwrap() <= r.majority_baseline + 0.02);

    let before = online_codelength(&ds, &ProbeConfig::default(), "raw").unwrap();
    let after = verify_removal(&ds, &r.projection, &ProbeConfig::default(), "inlp").unwrap();
    assert!(before.compression > 1.5);
    assert!(after.compression <= 1.3, "after {}", after.compression);
}

#[test]
fn identity_and_zero_projections() {
    let data = planted(&PlantedConfig {
        n: 600,
        ..PlantedConfig::default()
    });
    let rows = LabeledRows::from_table(Arc::new(data.embeddings.clone()), &data.binary).unwrap();
    let ds = split(rows, 1);
    let cfg = ProbeConfig::default();
    let raw = online_codelength(&ds, &cfg, "e").unwrap();
    let same = verify_removal(&ds, &ProjectionMatrix::identity(ds.dim()), &cfg, "e").unwrap();
    assert_eq!(raw, same);

    let zero = ProjectionMatrix::from_matrix(Array2::zeros((ds.dim(), ds.dim())), 1e-12).unwrap();
    let flat = verify_removal(&ds, &zero, &cfg, "e").unwrap();
    assert!(
        (0.9..=1.1).contains(&flat.compression),
        "{}",
        flat.compression
    );
}

#[test]
fn degenerate_dimension_is_reported() {
    // four classes in two dimensions: three centred directions cannot fit
    let mut rng = seed::rng(0);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 0..400 {
        let c = i % 4;
        let (cx, cy) = [(5.0, 0.0), (-5.0, 0.0), (0.0, 5.0), (0.0, -5.0)][c];
        data.extend([
            cx + rng.random_range(-0.5f32..0.5),
            cy + rng.random_range(-0.5f32..0.5),
        ]);
        labels.push(c);
    }
    let m = EmbeddingMatrix::with_generated_ids("q", 2, data).unwrap();
    let names = (0..4).map(|c| format!("c{c}")).collect();
    let ds = split(LabeledRows::new(Arc::new(m), labels, names).unwrap(), 0);
    assert!(matches!(
        fit_inlp(&ds, 5, 0.02, &TrainConfig::default()),
        Err(InlpError::DegenerateDim { dim: 2, .. })
    ));
}

#[test]
fn persisted_projection_round_trips() {
    let ds = sign_dataset(500, 2);
    let r = fit_inlp(&ds, 3, 0.02, &TrainConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("projection.emb1");
    r.save(&path).unwrap();
    let (p, meta) = load_projection(&path).unwrap();
    let meta = meta.unwrap();
    assert_eq!(meta, r.metadata());
    let diff = p
        .matrix()
        .iter()
        .zip(r.projection.matrix().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-6);

    // a non-projection stored in the same container is refused
    let bad = EmbeddingMatrix::new(
        vec!["row_0".into(), "row_1".into()],
        2,
        vec![1.0, 1.0, 0.0, 1.0],
    )
    .unwrap();
    reprobe_core::store::write_embeddings(&bad, dir.path().join("bad.emb1")).unwrap();
    assert!(load_projection(dir.path().join("bad.emb1")).is_err());
}

#[test]
fn empty_train_is_rejected() {
    let m = EmbeddingMatrix::with_generated_ids("e", 2, vec![0.0; 8]).unwrap();
    let rows =
        LabeledRows::new(Arc::new(m), vec![0, 1, 0, 1], vec!["a".into(), "b".into()]).unwrap();
    let ds = LabeledDataset::from_splits(rows, vec![], vec![0, 1], vec![2, 3]).unwrap();
    assert!(matches!(
        fit_inlp(&ds, 1, 0.0, &TrainConfig::default()),
        Err(InlpError::EmptyTrain)
    ));
}
