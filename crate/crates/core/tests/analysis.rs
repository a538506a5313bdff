//! Cross-run statistics on synthetic tables and samples.

use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use reprobe_core::analysis::{
    anisotropy_report, correlate, distribution_report, rank_seeds, SeedRunTable,
};
use reprobe_core::seed;
use reprobe_core::synth::{gaussian_embeddings, planted_seed_table};

#[test]
fn fisher_interval_covers_the_true_correlation() {
    let mut rng = seed::rng(42);
    let draws = 1000;
    let mut covered = 0;
    for _ in 0..draws {
        let n = rng.random_range(10..60);
        let rho: f64 = rng.random_range(-0.8..0.8);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            x.push(a);
            y.push(rho * a + (1.0 - rho * rho).sqrt() * b);
        }
        let c = correlate(&x, &y).unwrap();
        assert!(c.ci95.0 <= c.r && c.r <= c.ci95.1);
        if c.ci95.0 <= rho && rho <= c.ci95.1 {
            covered += 1;
        }
    }
    let rate = covered as f64 / draws as f64;
    assert!(rate >= 0.93, "coverage {rate}");
}

/// Every (seed, d1, d2) triple where the seed is strictly best on d1 and
/// strictly worst on d2, found by comparing against all other seeds.
fn brute_force_flips(t: &SeedRunTable) -> Vec<(String, String, String)> {
    let seeds: Vec<&str> = t.seeds().into_iter().collect();
    let datasets: Vec<&str> = t.datasets().into_iter().collect();
    let top = |s: &str, d: &str| {
        let v = t.get(s, d).unwrap();
        let all: Vec<f64> = seeds.iter().filter_map(|o| t.get(o, d)).collect();
        let distinct = all.iter().any(|x| *x != all[0]);
        let best = all.iter().all(|x| *x <= v);
        let worst = all.iter().all(|x| *x >= v);
        (distinct && best, distinct && worst)
    };
    let mut out = Vec::new();
    for s in &seeds {
        for d1 in &datasets {
            for d2 in &datasets {
                if d1 != d2 && top(s, d1).0 && top(s, d2).1 {
                    out.push((s.to_string(), d1.to_string(), d2.to_string()));
                }
            }
        }
    }
    out.sort();
    out
}

fn flips_of(t: &SeedRunTable) -> Vec<(String, String, String)> {
    rank_seeds(t)
        .unwrap()
        .flips
        .into_iter()
        .map(|f| (f.seed, f.best_on, f.worst_on))
        .collect()
}

#[test]
fn random_tables_match_brute_force() {
    for s in 0..30 {
        let mut rng = seed::rng(s);
        let mut cells = Vec::new();
        for i in 0..10 {
            for j in 0..14 {
                // coarse values so ties happen
                let v = f64::from(rng.random_range(0..6u32)) / 10.0;
                cells.push((format!("s{i}"), format!("d{j}"), v));
            }
        }
        let t = SeedRunTable::from_cells(cells).unwrap();
        assert_eq!(flips_of(&t), brute_force_flips(&t));
    }
}

#[test]
fn planted_flips_are_recovered() {
    for s in 0..5 {
        let (t, planted) = planted_seed_table(24, 14, 3, false, s);
        let expected: Vec<_> = planted
            .iter()
            .map(|f| (f.seed.clone(), f.best_on.clone(), f.worst_on.clone()))
            .collect();
        assert_eq!(flips_of(&t), expected);
        assert_eq!(brute_force_flips(&t), expected);
    }
}

#[test]
fn reference_at_the_median() {
    let mut rng = seed::rng(8);
    let mut values: Vec<f64> = (0..24).map(|_| rng.random_range(0.2..0.5)).collect();
    let cells = values
        .iter()
        .enumerate()
        .map(|(i, v)| (format!("seed{i}"), "nq".to_string(), *v))
        .collect();
    let mut t = SeedRunTable::from_cells(cells).unwrap();
    values.sort_by(f64::total_cmp);
    let median = 0.5 * (values[11] + values[12]);
    t.set_reference("nq", median);
    let r = distribution_report(&t, "nq").unwrap();
    // empirical CDF at the median of 24 distinct values
    let ecdf = values.iter().filter(|v| **v <= median).count() as f64 / 24.0;
    assert_eq!(r.reference_percentile, Some(ecdf));
    assert!((ecdf - 0.5).abs() < 1e-12);
}

#[test]
fn gaussian_cloud_is_isotropic() {
    let m = gaussian_embeddings(1000, 64, 17, "g");
    let r = anisotropy_report(&m, 1000, 17).unwrap();
    assert_eq!(r.n_pairs, 499_500);
    assert!(r.cos_mean.abs() < 0.05, "cos_mean {}", r.cos_mean);
    assert!((r.l2_mean - 8.0).abs() < 0.2, "l2_mean {}", r.l2_mean);
}

proptest! {
    #[test]
    fn ranking_ignores_monotone_transforms(
        values in proptest::collection::vec(0.0f64..1.0, 12),
        a in 0.1f64..5.0,
        b in -1.0f64..1.0,
    ) {
        let cells = |f: &dyn Fn(f64) -> f64| {
            values
                .iter()
                .enumerate()
                .map(|(i, v)| (format!("s{}", i % 4), format!("d{}", i / 4), f(*v)))
                .collect::<Vec<_>>()
        };
        let raw = SeedRunTable::from_cells(cells(&|v| v)).unwrap();
        let moved = SeedRunTable::from_cells(cells(&|v| (a * v + b).exp())).unwrap();
        let r1 = rank_seeds(&raw).unwrap();
        let r2 = rank_seeds(&moved).unwrap();
        prop_assert_eq!(&r1.flips, &r2.flips);
        for (d, rank) in &r1.datasets {
            let other = &r2.datasets[d];
            let a: Vec<_> = rank.entries.iter().map(|e| (&e.seed, e.rank)).collect();
            let b: Vec<_> = other.entries.iter().map(|e| (&e.seed, e.rank)).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn cosines_stay_in_range(seed_value in any::<u64>(), n in 2usize..40, d in 1usize..8) {
        let m = gaussian_embeddings(n, d, seed_value, "p");
        let r = anisotropy_report(&m, n, seed_value).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r.cos_mean));
        prop_assert!(r.cos_var >= 0.0 && r.dot_var >= 0.0 && r.l2_var >= 0.0);
    }
}
