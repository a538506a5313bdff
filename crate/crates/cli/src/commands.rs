//! One function per subcommand. Each resolves its inputs first so that a
//! config problem surfaces before any work (and so `--dry-run` can stop
//! there).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::Serialize;

use reprobe_core::analysis::{self, SeedRunTable};
use reprobe_core::inlp::{self, InlpMetadata};
use reprobe_core::mdl::{self, ProbeReport};
use reprobe_core::metrics::{self, MetricReport};
use reprobe_core::query_filter::{self, GenderLexicon, QueryCandidate};
use reprobe_core::retrieval;
use reprobe_core::store::{self, LabeledDataset, LabeledRows, Split};
use reprobe_core::synth;

use crate::config::{existing, require, ConfigError, PipelineConfig};
use crate::output::{read_json, Ctx, DataError, Table};

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "labels".into())
}

fn dataset(
    emb: &Arc<store::EmbeddingMatrix>,
    labels: &Path,
    cfg: &PipelineConfig,
) -> Result<LabeledDataset> {
    let table =
        store::load_labels(labels).with_context(|| format!("loading {}", labels.display()))?;
    let rows = LabeledRows::from_table(emb.clone(), &table)
        .with_context(|| format!("aligning {} with the embeddings", labels.display()))?;
    Ok(store::split_dataset(rows, &cfg.split_spec()?)?)
}

fn load_emb(path: &Path) -> Result<store::EmbeddingMatrix> {
    store::load_embeddings(path).with_context(|| format!("loading {}", path.display()))
}

pub fn probe(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let emb_path = require("embeddings", &cfg.paths.embeddings)?;
    if cfg.paths.labels.is_empty() {
        return Err(
            ConfigError("paths.labels is not set (use --config or --labels)".into()).into(),
        );
    }
    let labels: Vec<PathBuf> = cfg
        .paths
        .labels
        .iter()
        .map(|l| existing("labels", l))
        .collect::<Result<_, _>>()?;
    let outputs: Vec<PathBuf> = labels
        .iter()
        .map(|l| ctx.out(&format!("probe_{}.json", stem(l))))
        .collect();
    let mut inputs = vec![emb_path.clone()];
    inputs.extend(labels.iter().cloned());
    if ctx.plan(&inputs, &outputs)? {
        return Ok(());
    }

    let probe_cfg = cfg.probe_config()?;
    let emb = Arc::new(load_emb(&emb_path)?);
    let source = emb_path.display().to_string();
    for (l, out) in labels.iter().zip(&outputs) {
        let ds = dataset(&emb, l, cfg)?;
        let report = mdl::online_codelength(&ds, &probe_cfg, &source)?;
        ctx.write_json(out, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct InlpOutput {
    labels: PathBuf,
    projection: PathBuf,
    inlp: InlpMetadata,
    /// Most frequent class share on the test split.
    test_majority: Option<f64>,
    before: ProbeReport,
    after: ProbeReport,
}

fn majority_share(labels: &[usize], k: usize) -> Option<f64> {
    if labels.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; k];
    labels.iter().for_each(|&l| counts[l] += 1);
    Some(*counts.iter().max().expect("k >= 2") as f64 / labels.len() as f64)
}

pub fn inlp(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let emb_path = require("embeddings", &cfg.paths.embeddings)?;
    let labels = require("labels", &cfg.paths.labels.first().cloned())?;
    let proj_path = ctx.out("projection.emb1");
    let report_path = ctx.out("inlp.json");
    let outputs = [
        proj_path.clone(),
        inlp::sidecar_path(&proj_path),
        report_path.clone(),
    ];
    if ctx.plan(&[emb_path.clone(), labels.clone()], &outputs)? {
        return Ok(());
    }

    let probe_cfg = cfg.probe_config()?;
    let emb = Arc::new(load_emb(&emb_path)?);
    let ds = dataset(&emb, &labels, cfg)?;
    let source = emb_path.display().to_string();
    let before = mdl::online_codelength(&ds, &probe_cfg, &source)?;
    let fit = inlp::fit_inlp(
        &ds,
        cfg.inlp.max_iterations,
        cfg.inlp.stop_margin,
        &cfg.train_config("inlp"),
    )?;
    fit.save(&proj_path)?;
    let after = inlp::verify_removal(
        &ds,
        &fit.projection,
        &probe_cfg,
        &format!("{source} (projected)"),
    )?;
    let out = InlpOutput {
        labels,
        projection: proj_path,
        inlp: fit.metadata(),
        test_majority: majority_share(&ds.labels(Split::Test), ds.k()),
        before,
        after,
    };
    ctx.write_json(&report_path, &out)
}

#[derive(Serialize)]
struct RunSummary {
    queries: usize,
    corpus: usize,
    depth: usize,
    tag: String,
    projection: Option<PathBuf>,
}

pub fn retrieve(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let q_path = require("queries", &cfg.paths.queries)?;
    let c_path = require("corpus", &cfg.paths.corpus)?;
    let p_path = match &cfg.paths.projection {
        Some(p) => Some(existing("projection", p)?),
        None => None,
    };
    let run_path = ctx.out("run.txt");
    let mut inputs = vec![q_path.clone(), c_path.clone()];
    inputs.extend(p_path.clone());
    if ctx.plan(
        &inputs,
        &[run_path.clone(), crate::output::sidecar(&run_path)],
    )? {
        return Ok(());
    }

    let queries = load_emb(&q_path)?;
    let corpus = load_emb(&c_path)?;
    let projection = match &p_path {
        Some(p) => Some(inlp::load_projection(p)?.0),
        None => None,
    };
    let run = retrieval::retrieve(
        &queries,
        &corpus,
        cfg.retrieval.depth,
        projection.as_ref(),
        &cfg.retrieval.tag,
    )?;
    let summary = RunSummary {
        queries: queries.n(),
        corpus: corpus.n(),
        depth: cfg.retrieval.depth,
        tag: cfg.retrieval.tag.clone(),
        projection: p_path,
    };
    ctx.write_with_sidecar(&run_path, &run.to_text(), &summary)
}

pub fn eval(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let run_path = require("run", &cfg.paths.run)?;
    let qrels_path = require("qrels", &cfg.paths.qrels)?;
    let json = ctx.out("metrics.json");
    let csv = ctx.out("metrics.csv");
    if ctx.plan(
        &[run_path.clone(), qrels_path.clone()],
        &[json.clone(), csv.clone(), crate::output::sidecar(&csv)],
    )? {
        return Ok(());
    }

    let run = retrieval::read_run(&run_path)
        .with_context(|| format!("loading {}", run_path.display()))?;
    let qrels = store::load_qrels(&qrels_path)
        .with_context(|| format!("loading {}", qrels_path.display()))?;
    let report = metrics::evaluate_run(&run, &qrels, &cfg.eval.ks)?;
    ctx.write_json(&json, &report)?;
    ctx.write_with_sidecar(&csv, &report.to_csv(), &report.aggregate)
}

/// Groups come from a spec file, or are built from annotations.
fn group_source(cfg: &PipelineConfig) -> Result<(PathBuf, bool)> {
    if let Some(g) = &cfg.paths.groups {
        return Ok((existing("groups", g)?, false));
    }
    let a = require("annotations", &cfg.paths.annotations).map_err(|e| {
        ConfigError(format!(
            "fairness needs paths.groups or paths.annotations: {e}"
        ))
    })?;
    Ok((a, true))
}

pub fn fairness(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let metrics_path = require("metrics", &cfg.paths.metrics)?;
    let (groups_path, from_annotations) = group_source(cfg)?;
    let out = ctx.out("fairness.json");
    if ctx.plan(
        &[metrics_path.clone(), groups_path.clone()],
        std::slice::from_ref(&out),
    )? {
        return Ok(());
    }

    let report: MetricReport = read_json(&metrics_path)?;
    let groups = if from_annotations {
        let ann = query_filter::load_annotations(&groups_path)
            .with_context(|| format!("loading {}", groups_path.display()))?;
        query_filter::build_group_spec(&ann, cfg.fairness.require_constraint)?
    } else {
        read_json(&groups_path)?
    };
    let f = metrics::fairness_gap(&report, &groups, &cfg.fairness.metric)?;
    ctx.write_json(&out, &f)
}

#[derive(Serialize)]
struct FilterOutput {
    lexicon: Option<PathBuf>,
    total: usize,
    entity: usize,
    gendered: usize,
    entity_and_gendered: usize,
    /// Group sizes when annotations were given.
    groups: Option<BTreeMap<String, usize>>,
    candidates: Vec<QueryCandidate>,
}

pub fn filter_queries(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let text_path = require("query_text", &cfg.paths.query_text)?;
    let lex_path = match &cfg.paths.lexicon {
        Some(p) => Some(existing("lexicon", p)?),
        None => None,
    };
    let ann_path = match &cfg.paths.annotations {
        Some(p) => Some(existing("annotations", p)?),
        None => None,
    };
    let screen_out = ctx.out("query_filter.json");
    let groups_out = ctx.out("groups.json");
    let mut inputs = vec![text_path.clone()];
    inputs.extend(lex_path.clone());
    inputs.extend(ann_path.clone());
    let mut outputs = vec![screen_out.clone()];
    if ann_path.is_some() {
        outputs.push(groups_out.clone());
    }
    if ctx.plan(&inputs, &outputs)? {
        return Ok(());
    }

    let lex = match &lex_path {
        Some(p) => GenderLexicon::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => GenderLexicon::default(),
    };
    let queries = store::load_jsonl(&text_path)
        .with_context(|| format!("loading {}", text_path.display()))?;
    let candidates = query_filter::screen_queries(&queries, &lex);
    let groups = match &ann_path {
        Some(p) => {
            let ann = query_filter::load_annotations(p)
                .with_context(|| format!("loading {}", p.display()))?;
            Some(query_filter::build_group_spec(
                &ann,
                cfg.fairness.require_constraint,
            )?)
        }
        None => None,
    };
    let out = FilterOutput {
        lexicon: lex_path,
        total: candidates.len(),
        entity: candidates.iter().filter(|c| c.entity).count(),
        gendered: candidates.iter().filter(|c| c.is_gendered()).count(),
        entity_and_gendered: candidates
            .iter()
            .filter(|c| c.entity && c.is_gendered())
            .count(),
        groups: groups
            .as_ref()
            .map(|g| g.iter().map(|(n, m)| (n.to_string(), m.len())).collect()),
        candidates,
    };
    ctx.write_json(&screen_out, &out)?;
    if let Some(g) = &groups {
        ctx.write_json(&groups_out, g)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CorrelateOutput {
    x: String,
    y: String,
    correlation: analysis::CorrelationResult,
}

pub fn correlate(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let points = require("points", &cfg.paths.points)?;
    let out = ctx.out("correlation.json");
    if ctx.plan(std::slice::from_ref(&points), std::slice::from_ref(&out))? {
        return Ok(());
    }
    let text = std::fs::read_to_string(&points)?;
    let table = Table::parse(&text, &points)?;
    let x = table.column(&cfg.correlate.x, &points)?;
    let y = table.column(&cfg.correlate.y, &points)?;
    let result = CorrelateOutput {
        x: cfg.correlate.x.clone(),
        y: cfg.correlate.y.clone(),
        correlation: analysis::correlate(&x, &y)?,
    };
    ctx.write_json(&out, &result)
}

#[derive(Serialize)]
struct RankOutput {
    ranking: analysis::SeedRanking,
    distributions: Vec<analysis::DistributionReport>,
}

pub fn rank_seeds(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let table_path = require("seed_table", &cfg.paths.seed_table)?;
    let ref_path = match &cfg.paths.reference {
        Some(p) => Some(existing("reference", p)?),
        None => None,
    };
    let out = ctx.out("seed_ranking.json");
    let mut inputs = vec![table_path.clone()];
    inputs.extend(ref_path.clone());
    if ctx.plan(&inputs, std::slice::from_ref(&out))? {
        return Ok(());
    }

    let mut table = SeedRunTable::parse_csv(&std::fs::read_to_string(&table_path)?)
        .with_context(|| format!("loading {}", table_path.display()))?;
    if let Some(p) = &ref_path {
        table
            .parse_reference_csv(&std::fs::read_to_string(p)?)
            .with_context(|| format!("loading {}", p.display()))?;
    }
    let ranking = analysis::rank_seeds(&table)?;
    let distributions = table
        .datasets()
        .into_iter()
        .map(|d| analysis::distribution_report(&table, d))
        .collect::<Result<_, _>>()?;
    ctx.write_json(
        &out,
        &RankOutput {
            ranking,
            distributions,
        },
    )
}

pub fn anisotropy(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let emb_path = require("embeddings", &cfg.paths.embeddings)?;
    let out = ctx.out("anisotropy.json");
    if ctx.plan(std::slice::from_ref(&emb_path), std::slice::from_ref(&out))? {
        return Ok(());
    }
    let emb = load_emb(&emb_path)?;
    let report =
        analysis::anisotropy_report(&emb, cfg.anisotropy.samples, cfg.op_seed("anisotropy"))?;
    ctx.write_json(&out, &report)
}

/// Files written by `synth`, relative to the output directory.
pub const SYNTH_FILES: &[&str] = &[
    "probe.emb1",
    "gender.tsv",
    "occupation.tsv",
    "corpus.emb1",
    "queries.emb1",
    "qrels.txt",
    "queries.jsonl",
    "annotations.tsv",
    "lexicon.txt",
    "seed_table.csv",
    "reference.csv",
    "sweep.csv",
    "config.toml",
    "synth.json",
];

#[derive(Serialize)]
struct SynthOutput {
    planted: synth::PlantedConfig,
    retrieval: synth::RetrievalConfig,
    seed_table: SeedTableShape,
    planted_flips: Vec<synth::PlantedFlip>,
    sweep_points: usize,
    files: Vec<&'static str>,
}

#[derive(Serialize)]
struct SeedTableShape {
    seeds: usize,
    datasets: usize,
    flips: usize,
}

/// The config `synth` writes next to its fixtures: every path points at a
/// generated file, outputs go to `results/`.
fn fixture_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        seed,
        out_dir: PathBuf::from("results"),
        ..PipelineConfig::default()
    };
    let p = &mut cfg.paths;
    p.embeddings = Some("probe.emb1".into());
    p.labels = vec!["gender.tsv".into(), "occupation.tsv".into()];
    p.corpus = Some("corpus.emb1".into());
    p.queries = Some("queries.emb1".into());
    p.query_text = Some("queries.jsonl".into());
    p.qrels = Some("qrels.txt".into());
    p.run = Some("results/run.txt".into());
    p.metrics = Some("results/metrics.json".into());
    p.lexicon = Some("lexicon.txt".into());
    p.annotations = Some("annotations.tsv".into());
    p.seed_table = Some("seed_table.csv".into());
    p.reference = Some("reference.csv".into());
    p.points = Some("sweep.csv".into());
    cfg
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let outputs: Vec<PathBuf> = SYNTH_FILES.iter().map(|f| ctx.out(f)).collect();
    if ctx.plan(&[], &outputs)? {
        return Ok(());
    }
    let out = |name: &str| ctx.out(name);
    let write = |name: &str, body: String| -> Result<()> {
        std::fs::write(out(name), body).with_context(|| format!("writing {}", out(name).display()))
    };

    let planted_cfg = synth::PlantedConfig {
        seed: cfg.op_seed("synth-planted"),
        ..synth::PlantedConfig::default()
    };
    let planted = synth::planted(&planted_cfg);
    store::write_embeddings(&planted.embeddings, out("probe.emb1"))?;
    write("gender.tsv", planted.binary.to_tsv())?;
    write("occupation.tsv", planted.multiclass.to_tsv())?;

    let retrieval_cfg = synth::RetrievalConfig {
        seed: cfg.op_seed("synth-retrieval"),
        ..synth::RetrievalConfig::default()
    };
    let fx = synth::retrieval_fixture(&retrieval_cfg);
    store::write_embeddings(&fx.corpus, out("corpus.emb1"))?;
    store::write_embeddings(&fx.queries, out("queries.emb1"))?;
    write("qrels.txt", fx.qrels.to_text())?;
    let mut jsonl = String::new();
    for r in &fx.query_text {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    write("queries.jsonl", jsonl)?;
    write(
        "annotations.tsv",
        query_filter::annotations_to_tsv(&fx.annotations),
    )?;
    write("lexicon.txt", GenderLexicon::default().to_text())?;

    let shape = SeedTableShape {
        seeds: 24,
        datasets: 14,
        flips: 4,
    };
    let (table, flips) = synth::planted_seed_table(
        shape.seeds,
        shape.datasets,
        shape.flips,
        true,
        cfg.op_seed("synth-seeds"),
    );
    write("seed_table.csv", table.to_csv())?;
    write("reference.csv", table.references_to_csv())?;

    let sweep = synth::planted_sweep(24, 0.05, 0.02, cfg.op_seed("synth-sweep"));
    let mut csv = String::from("seed,compression,ndcg@10\n");
    for p in &sweep {
        csv.push_str(&format!("{},{},{}\n", p.seed, p.compression, p.performance));
    }
    write("sweep.csv", csv)?;
    write("config.toml", toml::to_string(&fixture_config(cfg.seed))?)?;

    let summary = SynthOutput {
        planted: planted_cfg,
        retrieval: retrieval_cfg,
        seed_table: shape,
        planted_flips: flips,
        sweep_points: sweep.len(),
        files: SYNTH_FILES.to_vec(),
    };
    ctx.write_json(&out("synth.json"), &summary)
}

/// Whether any core error type or [`DataError`] appears in the chain.
pub fn is_data_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<DataError>()
            || e.is::<store::StoreError>()
            || e.is::<mdl::MdlError>()
            || e.is::<inlp::InlpError>()
            || e.is::<retrieval::RetrievalError>()
            || e.is::<metrics::MetricsError>()
            || e.is::<query_filter::FilterError>()
            || e.is::<analysis::AnalysisError>()
            || e.is::<reprobe_core::numerics::NumericsError>()
            || e.is::<reprobe_core::numerics::ProjectionLoadError>()
    })
}
