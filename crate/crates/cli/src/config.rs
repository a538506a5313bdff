//! Pipeline configuration: one TOML file plus command-line overrides.
//!
//! Relative paths inside a config file are resolved against the file's
//! directory; paths given as flags are used as-is.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use reprobe_core::mdl::{BlockSchedule, ProbeConfig};
use reprobe_core::metrics::parse_metric_key;
use reprobe_core::numerics::{ProbeArch, TrainConfig};
use reprobe_core::seed::derive_seed;
use reprobe_core::store::SplitSpec;

/// Anything wrong with the configuration or the files it names.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub split: SplitSection,
    pub probe: ProbeSection,
    pub inlp: InlpSection,
    pub retrieval: RetrievalSection,
    pub eval: EvalSection,
    pub fairness: FairnessSection,
    pub correlate: CorrelateSection,
    pub anisotropy: AnisotropySection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            paths: Paths::default(),
            split: SplitSection::default(),
            probe: ProbeSection::default(),
            inlp: InlpSection::default(),
            retrieval: RetrievalSection::default(),
            eval: EvalSection::default(),
            fairness: FairnessSection::default(),
            correlate: CorrelateSection::default(),
            anisotropy: AnisotropySection::default(),
        }
    }
}

/// Input files. Which ones are required depends on the command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// EMB1 matrix for probe, inlp and anisotropy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// Label TSVs; probe runs once per file, inlp uses the first.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Query embeddings (EMB1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<PathBuf>,
    /// Query texts (JSONL).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_text: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qrels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<PathBuf>,
    /// Metric report JSON written by `eval`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PathBuf>,
    /// Group spec JSON; takes precedence over `annotations` in `fairness`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_table: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    /// CSV with a header row, read by `correlate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<PathBuf>,
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                *p = join(base, p);
            }
        };
        for p in [
            &mut self.embeddings,
            &mut self.corpus,
            &mut self.queries,
            &mut self.query_text,
            &mut self.qrels,
            &mut self.run,
            &mut self.metrics,
            &mut self.groups,
            &mut self.lexicon,
            &mut self.annotations,
            &mut self.projection,
            &mut self.seed_table,
            &mut self.reference,
            &mut self.points,
        ] {
            fix(p);
        }
        for l in &mut self.labels {
            *l = join(base, l);
        }
    }
}

fn join(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || base.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train: 0.65,
            dev: 0.10,
            test: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    /// `uniform`, `linear` or `mlp`.
    pub arch: String,
    /// Hidden width, only read for `mlp`.
    pub hidden: usize,
    pub schedule: Vec<f64>,
    pub min_first_block: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_penalty: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        let s = BlockSchedule::default();
        let t = TrainConfig::default();
        Self {
            arch: "linear".into(),
            hidden: 64,
            schedule: s.fractions().to_vec(),
            min_first_block: s.min_first_block(),
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            l2_penalty: t.l2_penalty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InlpSection {
    pub max_iterations: usize,
    pub stop_margin: f64,
}

impl Default for InlpSection {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            stop_margin: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub depth: usize,
    pub tag: String,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            depth: 100,
            tag: "reprobe".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { ks: vec![10, 100] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessSection {
    /// Metric key as written by `eval`, e.g. `ndcg@10`.
    pub metric: String,
    /// Gendered queries only enter a group when their annotation says the
    /// gender constrains the answer.
    pub require_constraint: bool,
}

impl Default for FairnessSection {
    fn default() -> Self {
        Self {
            metric: "ndcg@10".into(),
            require_constraint: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateSection {
    /// Column names in the points CSV.
    pub x: String,
    pub y: String,
}

impl Default for CorrelateSection {
    fn default() -> Self {
        Self {
            x: "compression".into(),
            y: "ndcg@10".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnisotropySection {
    pub samples: usize,
}

impl Default for AnisotropySection {
    fn default() -> Self {
        Self { samples: 1000 }
    }
}

/// Flags shared by every subcommand. Anything set here wins over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Validate inputs and print the plan without writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Label TSV; repeat for several label sets.
    #[arg(long, global = true)]
    pub labels: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub queries: Option<PathBuf>,
    #[arg(long, global = true)]
    pub query_text: Option<PathBuf>,
    #[arg(long, global = true)]
    pub qrels: Option<PathBuf>,
    #[arg(long, global = true)]
    pub run: Option<PathBuf>,
    #[arg(long, global = true)]
    pub metrics: Option<PathBuf>,
    #[arg(long, global = true)]
    pub groups: Option<PathBuf>,
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, global = true)]
    pub annotations: Option<PathBuf>,
    #[arg(long, global = true)]
    pub projection: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed_table: Option<PathBuf>,
    #[arg(long, global = true)]
    pub reference: Option<PathBuf>,
    #[arg(long, global = true)]
    pub points: Option<PathBuf>,
}

impl PipelineConfig {
    /// Reads the config file named by `--config` (if any) and applies the
    /// remaining flags on top.
    pub fn load(o: &Overrides) -> Result<Self, ConfigError> {
        let mut cfg = match &o.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| bad(format!("cannot read config file {}: {e}", path.display())))?;
                let mut cfg: PipelineConfig = toml::from_str(&text)
                    .map_err(|e| bad(format!("invalid config {}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.paths.rebase(base);
                cfg.out_dir = join(base, &cfg.out_dir);
                cfg
            }
            None => PipelineConfig::default(),
        };

        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if let Some(d) = &o.out_dir {
            cfg.out_dir = d.clone();
        }
        let p = &mut cfg.paths;
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set(&mut p.embeddings, &o.embeddings);
        set(&mut p.corpus, &o.corpus);
        set(&mut p.queries, &o.queries);
        set(&mut p.query_text, &o.query_text);
        set(&mut p.qrels, &o.qrels);
        set(&mut p.run, &o.run);
        set(&mut p.metrics, &o.metrics);
        set(&mut p.groups, &o.groups);
        set(&mut p.lexicon, &o.lexicon);
        set(&mut p.annotations, &o.annotations);
        set(&mut p.projection, &o.projection);
        set(&mut p.seed_table, &o.seed_table);
        set(&mut p.reference, &o.reference);
        set(&mut p.points, &o.points);
        if !o.labels.is_empty() {
            p.labels.clone_from(&o.labels);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks values that do not depend on the command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.split_spec()?;
        self.probe_config()?;
        if self.inlp.max_iterations == 0 {
            return Err(bad("inlp.max_iterations must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.inlp.stop_margin) {
            return Err(bad("inlp.stop_margin must be in [0, 1)"));
        }
        if self.retrieval.depth == 0 {
            return Err(bad("retrieval.depth must be at least 1"));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(bad("eval.ks must be a non-empty list of positive cutoffs"));
        }
        if parse_metric_key(&self.fairness.metric).is_none() {
            return Err(bad(format!(
                "fairness.metric {:?} is not a metric key like ndcg@10",
                self.fairness.metric
            )));
        }
        if self.anisotropy.samples < 2 {
            return Err(bad("anisotropy.samples must be at least 2"));
        }
        Ok(())
    }

    /// Seed of one stochastic operation.
    pub fn op_seed(&self, tag: &str) -> u64 {
        derive_seed(self.seed, tag)
    }

    pub fn split_spec(&self) -> Result<SplitSpec, ConfigError> {
        let s = &self.split;
        SplitSpec::new(s.train, s.dev, s.test, self.op_seed("split"))
            .map_err(|e| bad(format!("split: {e}")))
    }

    pub fn train_config(&self, tag: &str) -> TrainConfig {
        TrainConfig {
            learning_rate: self.probe.learning_rate,
            epochs: self.probe.epochs,
            batch_size: self.probe.batch_size,
            l2_penalty: self.probe.l2_penalty,
            seed: self.op_seed(tag),
            shuffle: true,
        }
    }

    pub fn probe_config(&self) -> Result<ProbeConfig, ConfigError> {
        let arch = match self.probe.arch.as_str() {
            "uniform" => ProbeArch::Uniform,
            "linear" => ProbeArch::Linear,
            "mlp" if self.probe.hidden > 0 => ProbeArch::Mlp {
                hidden: self.probe.hidden,
            },
            "mlp" => return Err(bad("probe.hidden must be at least 1")),
            other => {
                return Err(bad(format!(
                    "probe.arch {other:?} is not one of uniform, linear, mlp"
                )))
            }
        };
        let schedule = BlockSchedule::new(self.probe.schedule.clone(), self.probe.min_first_block)
            .map_err(|e| bad(format!("probe.schedule: {e}")))?;
        let train = self.train_config("probe");
        train.validate().map_err(|e| bad(format!("probe: {e}")))?;
        Ok(ProbeConfig {
            schedule,
            arch,
            train,
        })
    }
}

/// A path that must be set and must exist.
pub fn require(key: &str, path: &Option<PathBuf>) -> Result<PathBuf, ConfigError> {
    let p = path.as_ref().ok_or_else(|| {
        bad(format!(
            "paths.{key} is not set (use --config or --{})",
            key.replace('_', "-")
        ))
    })?;
    existing(key, p)
}

pub fn existing(key: &str, p: &Path) -> Result<PathBuf, ConfigError> {
    if !p.is_file() {
        return Err(bad(format!("{key} file not found: {}", p.display())));
    }
    Ok(p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "seed = 3\n[paths]\nlabels = [\"l.tsv\"]\nembeddings = \"/abs/e.emb1\"\n",
        )
        .unwrap();
        let o = Overrides {
            config: Some(path),
            seed: Some(9),
            ..Overrides::default()
        };
        let cfg = PipelineConfig::load(&o).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.paths.labels, vec![dir.path().join("l.tsv")]);
        assert_eq!(cfg.paths.embeddings, Some(PathBuf::from("/abs/e.emb1")));
        assert_eq!(cfg.out_dir, dir.path().join("out"));
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = PipelineConfig::default();
        cfg.probe.arch = "tree".into();
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.split.train = 0.9;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.fairness.metric = "ndcg".into();
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<PipelineConfig>("unknown = 1").is_err());
    }

    #[test]
    fn op_seeds_differ_by_tag() {
        let cfg = PipelineConfig::default();
        assert_ne!(cfg.op_seed("split"), cfg.op_seed("probe"));
        assert_eq!(cfg.op_seed("split"), derive_seed(0, "split"));
    }
}
