//! Deterministic synthetic fixtures with planted structure.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::SeedRunTable;
use crate::metrics::GroupSpec;
use crate::numerics::ProjectionMatrix;
use crate::query_filter::{AnnotatedQuery, SubjectGender};
use crate::seed;
use crate::store::{EmbeddingMatrix, LabelTable, Qrels, TextRecord};

/// Isotropic Gaussian noise plus two planted labels: a binary attribute on
/// coordinate 0 and a multi-class attribute on one-hot coordinates `1..`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// Probability of the second binary class.
    pub binary_prior: f64,
    /// Distance between the two binary class means along coordinate 0.
    pub binary_separation: f64,
    pub multiclass_k: usize,
    /// Offset of each multi-class mean along its own coordinate.
    pub multiclass_separation: f64,
    /// Standard deviation of the isotropic noise.
    pub noise: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n: 4096,
            d: 32,
            seed: 0,
            binary_prior: 0.45,
            binary_separation: 2.0,
            multiclass_k: 5,
            multiclass_separation: 1.5,
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    pub embeddings: EmbeddingMatrix,
    pub binary: LabelTable,
    pub multiclass: LabelTable,
}

pub const BINARY_CLASSES: [&str; 2] = ["m", "f"];

pub fn planted(cfg: &PlantedConfig) -> PlantedData {
    assert!(
        cfg.d > cfg.multiclass_k,
        "need d > multiclass_k for one-hot means"
    );
    let mut rng = seed::rng(cfg.seed);
    let mut data = Vec::with_capacity(cfg.n * cfg.d);
    let mut binary = Vec::with_capacity(cfg.n);
    let mut multi = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let b = usize::from(rng.random::<f64>() < cfg.binary_prior);
        let m = rng.random_range(0..cfg.multiclass_k);
        for j in 0..cfg.d {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut v = cfg.noise * z;
            if j == 0 {
                v += if b == 1 { 0.5 } else { -0.5 } * cfg.binary_separation;
            } else if j == 1 + m {
                v += cfg.multiclass_separation;
            }
            data.push(v as f32);
        }
        binary.push(b);
        multi.push(m);
    }
    let ids: Vec<String> = (0..cfg.n).map(|i| format!("doc{i}")).collect();
    let embeddings = EmbeddingMatrix::new(ids.clone(), cfg.d, data).expect("finite synthetic data");
    PlantedData {
        embeddings,
        binary: relabel(
            &ids,
            &binary,
            BINARY_CLASSES.iter().map(|s| s.to_string()).collect(),
        ),
        multiclass: relabel(
            &ids,
            &multi,
            (0..cfg.multiclass_k)
                .map(|c| format!("occupation{c}"))
                .collect(),
        ),
    }
}

/// Label table with class indices renumbered into first-seen order so that
/// writing and re-reading it is lossless.
fn relabel(ids: &[String], labels: &[usize], names: Vec<String>) -> LabelTable {
    let mut order: Vec<usize> = Vec::new();
    let mut map = vec![usize::MAX; names.len()];
    let labels = labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = order.len();
                order.push(l);
            }
            map[l]
        })
        .collect();
    LabelTable {
        ids: ids.to_vec(),
        labels,
        class_names: order.into_iter().map(|l| names[l].clone()).collect(),
    }
}

/// Same ids, labels shuffled with `seed` (destroys any label signal while
/// keeping class frequencies).
pub fn permute_labels(table: &LabelTable, seed: u64) -> LabelTable {
    let mut labels: Vec<usize> = table.labels.clone();
    labels.shuffle(&mut seed::rng(seed));
    relabel(&table.ids, &labels, table.class_names.clone())
}

pub fn gaussian_embeddings(n: usize, d: usize, seed: u64, prefix: &str) -> EmbeddingMatrix {
    let mut rng = seed::rng(seed);
    let data = (0..n * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z as f32
        })
        .collect();
    EmbeddingMatrix::with_generated_ids(prefix, d, data).expect("finite")
}

/// A gendered retrieval benchmark: every query targets one document, and
/// female queries are noisier than male ones so the fixture has a built-in
/// allocation gap that does not come from the gender coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub n_docs: usize,
    pub queries_per_group: usize,
    pub d: usize,
    pub seed: u64,
    pub male_noise: f64,
    pub female_noise: f64,
    pub neutral_noise: f64,
    /// Magnitude of the gender coordinate on gendered documents.
    pub gender_signal: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            n_docs: 2000,
            queries_per_group: 40,
            d: 32,
            seed: 0,
            male_noise: 0.8,
            female_noise: 1.1,
            neutral_noise: 0.8,
            gender_signal: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalFixture {
    pub corpus: EmbeddingMatrix,
    pub queries: EmbeddingMatrix,
    pub qrels: Qrels,
    pub query_text: Vec<TextRecord>,
    pub annotations: Vec<AnnotatedQuery>,
    /// Gender label of every corpus document (`f`, `m` or `n`).
    pub doc_gender: LabelTable,
}

pub fn retrieval_fixture(cfg: &RetrievalConfig) -> RetrievalFixture {
    let mut rng = seed::rng(cfg.seed);
    let d = cfg.d;
    let normal = |rng: &mut seed::Rng| -> f64 { StandardNormal.sample(rng) };

    // documents cycle through female, male, neutral
    let mut doc_data = Vec::with_capacity(cfg.n_docs * d);
    let mut doc_gender = Vec::with_capacity(cfg.n_docs);
    for i in 0..cfg.n_docs {
        let g = i % 3;
        for j in 0..d {
            let mut v = normal(&mut rng);
            if j == 0 {
                v = match g {
                    0 => cfg.gender_signal,
                    1 => -cfg.gender_signal,
                    _ => 0.0,
                } + 0.1 * v;
            }
            doc_data.push(v as f32);
        }
        doc_gender.push(g);
    }
    let doc_ids: Vec<String> = (0..cfg.n_docs).map(|i| format!("d{i}")).collect();
    let corpus = EmbeddingMatrix::new(doc_ids.clone(), d, doc_data.clone()).expect("finite");

    let groups = [
        (SubjectGender::Female, 0usize, cfg.female_noise, "female"),
        (SubjectGender::Male, 1, cfg.male_noise, "male"),
        (SubjectGender::Neutral, 2, cfg.neutral_noise, "neutral"),
    ];
    let mut q_data = Vec::new();
    let mut q_ids = Vec::new();
    let mut qrels = Qrels::new();
    let mut texts = Vec::new();
    let mut annotations = Vec::new();
    for (gender, doc_class, noise, word) in groups {
        let candidates: Vec<usize> = (0..cfg.n_docs).filter(|i| i % 3 == doc_class).collect();
        for qi in 0..cfg.queries_per_group {
            let target = candidates[rng.random_range(0..candidates.len())];
            let qid = format!("q{}_{qi}", &word[..1]);
            let row = &doc_data[target * d..(target + 1) * d];
            for (j, &v) in row.iter().enumerate() {
                let jitter = if j == 0 { 0.1 } else { noise };
                q_data.push((v as f64 + jitter * normal(&mut rng)) as f32);
            }
            qrels.insert(&qid, &doc_ids[target], 1).expect("fresh pair");
            let text = match gender {
                SubjectGender::Female => format!("who is the woman known as entity {target}"),
                SubjectGender::Male => format!("who is the man known as entity {target}"),
                SubjectGender::Neutral => format!("who founded the organisation {target}"),
            };
            texts.push(TextRecord {
                id: qid.clone(),
                text: text.clone(),
            });
            annotations.push(AnnotatedQuery {
                query_id: qid.clone(),
                text,
                subject_gender: gender,
                constrains_gender: gender != SubjectGender::Neutral,
            });
            q_ids.push(qid);
        }
    }
    let queries = EmbeddingMatrix::new(q_ids, d, q_data).expect("finite");
    let doc_gender = relabel(
        &doc_ids,
        &doc_gender,
        vec!["f".to_string(), "m".to_string(), "n".to_string()],
    );
    RetrievalFixture {
        corpus,
        queries,
        qrels,
        query_text: texts,
        annotations,
        doc_gender,
    }
}

/// Hit counts for one query group of [`gap_fixture`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub queries: usize,
    /// Queries whose relevant document is ranked first before projection.
    pub hits: usize,
    /// How many of those hits drop out of the top 10 once coordinate 0 is
    /// projected away.
    pub lost: usize,
}

/// Retrieval fixture with exactly known NDCG@10 per query, before and after
/// removing coordinate 0.
#[derive(Debug, Clone)]
pub struct GapFixture {
    pub corpus: EmbeddingMatrix,
    pub queries: EmbeddingMatrix,
    pub qrels: Qrels,
    pub groups: GroupSpec,
    /// Removes coordinate 0.
    pub projection: ProjectionMatrix,
}

/// Every query owns a private coordinate and ten distractor documents. A
/// query's NDCG@10 is 1 when its relevant document ranks first and 0 when
/// it falls below the distractors, so group means are hit fractions.
pub fn gap_fixture(plans: &[(&str, GroupPlan)]) -> GapFixture {
    let total: usize = plans.iter().map(|(_, p)| p.queries).sum();
    let d = 1 + total;
    let unit = |c: usize, scale: f32, shared: f32| {
        let mut v = vec![0.0f32; d];
        v[c] = scale;
        v[0] = shared;
        v
    };
    let (mut q_ids, mut q_data) = (Vec::new(), Vec::new());
    let (mut doc_ids, mut doc_data) = (Vec::new(), Vec::new());
    let mut qrels = Qrels::new();
    let mut groups = BTreeMap::new();
    let mut c = 0;
    for (name, plan) in plans {
        assert!(plan.lost <= plan.hits && plan.hits <= plan.queries);
        let mut members = BTreeSet::new();
        for i in 0..plan.queries {
            c += 1;
            let qid = format!("{name}{i}");
            // (relevant, distractor) along the private coordinate; lost hits
            // rely on coordinate 0 to beat their distractors
            let (rel, distractor) = if i < plan.lost {
                (unit(c, 1.0, 1.0), 1.5)
            } else if i < plan.hits {
                (unit(c, 2.0, 0.0), 1.0)
            } else {
                (unit(c, 0.5, 0.0), 1.5)
            };
            let rel_id = format!("{qid}_rel");
            doc_ids.push(rel_id.clone());
            doc_data.extend(rel);
            for j in 0..10 {
                doc_ids.push(format!("{qid}_x{j}"));
                doc_data.extend(unit(c, distractor, 0.0));
            }
            qrels.insert(&qid, &rel_id, 1).expect("fresh pair");
            q_ids.push(qid.clone());
            q_data.extend(unit(c, 1.0, 1.0));
            members.insert(qid);
        }
        groups.insert(name.to_string(), members);
    }
    let mut p = ndarray::Array2::<f64>::eye(d);
    p[[0, 0]] = 0.0;
    GapFixture {
        corpus: EmbeddingMatrix::new(doc_ids, d, doc_data).expect("finite"),
        queries: EmbeddingMatrix::new(q_ids, d, q_data).expect("finite"),
        qrels,
        groups: GroupSpec::new(groups).expect("distinct prefixes"),
        projection: ProjectionMatrix::from_matrix(p, 1e-12).expect("coordinate projection"),
    }
}

/// A flip planted into a seed table: `seed` is strictly best on `best_on` and
/// strictly worst on `worst_on`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedFlip {
    pub seed: String,
    pub best_on: String,
    pub worst_on: String,
}

/// A `n_seeds × n_datasets` table where the best and worst seed of every
/// dataset is fixed by construction. `n_flips` seeds are made best on one
/// dataset and worst on another; the remaining best slots go to a pool of
/// seeds that are never worst anywhere (and vice versa), so the planted
/// flips are the only ones.
pub fn planted_seed_table(
    n_seeds: usize,
    n_datasets: usize,
    n_flips: usize,
    reference: bool,
    seed_value: u64,
) -> (SeedRunTable, Vec<PlantedFlip>) {
    assert!(n_datasets >= 2 && n_flips <= n_datasets);
    assert!(
        n_seeds >= n_flips + 2,
        "need room for best-only and worst-only seeds"
    );
    let mut rng = seed::rng(seed_value);
    let seeds: Vec<String> = (0..n_seeds).map(|s| format!("seed{s}")).collect();
    let datasets: Vec<String> = (0..n_datasets).map(|d| format!("dataset{d}")).collect();

    let mut seed_order: Vec<usize> = (0..n_seeds).collect();
    seed_order.shuffle(&mut rng);
    let flip_seeds = &seed_order[..n_flips];
    let rest = &seed_order[n_flips..];
    let (best_pool, worst_pool) = rest.split_at(rest.len() / 2);

    let mut best = vec![usize::MAX; n_datasets];
    let mut worst = vec![usize::MAX; n_datasets];
    let mut ds_order: Vec<usize> = (0..n_datasets).collect();
    ds_order.shuffle(&mut rng);
    let mut flips = Vec::new();
    for (i, &s) in flip_seeds.iter().enumerate() {
        // best on ds_order[i], worst on the next dataset in the cycle
        let b = ds_order[i];
        let w = ds_order[(i + 1) % n_datasets];
        best[b] = s;
        worst[w] = s;
        flips.push(PlantedFlip {
            seed: seeds[s].clone(),
            best_on: datasets[b].clone(),
            worst_on: datasets[w].clone(),
        });
    }
    for d in 0..n_datasets {
        if best[d] == usize::MAX {
            best[d] = best_pool[rng.random_range(0..best_pool.len())];
        }
        if worst[d] == usize::MAX {
            worst[d] = worst_pool[rng.random_range(0..worst_pool.len())];
        }
    }

    let mut cells = Vec::new();
    for (d, ds) in datasets.iter().enumerate() {
        let base = rng.random_range(0.2..0.6);
        for (s, sd) in seeds.iter().enumerate() {
            let v = if s == best[d] {
                base + 0.15 + rng.random_range(0.0..0.02)
            } else if s == worst[d] {
                base - 0.15 - rng.random_range(0.0..0.02)
            } else {
                base + rng.random_range(-0.1..0.1)
            };
            cells.push((sd.clone(), ds.clone(), v));
        }
    }
    let mut table = SeedRunTable::from_cells(cells).expect("unique synthetic cells");
    if reference {
        for ds in &datasets {
            let values = table.dataset_values(ds);
            let mean = values.iter().map(|(_, v)| v).sum::<f64>() / values.len() as f64;
            table.set_reference(ds, mean - 0.05);
        }
    }
    flips.sort();
    (table, flips)
}

/// One point of a synthetic seed sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub seed: String,
    pub compression: f64,
    pub performance: f64,
}

/// `n` seeds whose performance is linear in compression plus Gaussian noise
/// of standard deviation `noise`. Compressions are uniform on [1.5, 3.5).
pub fn planted_sweep(n: usize, slope: f64, noise: f64, seed_value: u64) -> Vec<SweepPoint> {
    let mut rng = seed::rng(seed_value);
    (0..n)
        .map(|i| {
            let compression = rng.random_range(1.5..3.5);
            let z: f64 = StandardNormal.sample(&mut rng);
            SweepPoint {
                seed: format!("seed{i}"),
                compression,
                performance: 0.3 + slope * compression + noise * z,
            }
        })
        .collect()
}
