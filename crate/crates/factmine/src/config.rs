//! Flat `key = value` configuration. Later sources override earlier ones:
//! built-in defaults, then the config file, then command-line flags.
//!
//! Values are re-rendered canonically after parsing, so two configs that
//! mean the same thing hash the same.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use factmine_core::synth::SynthVocab;
use factmine_core::{ExclusionPolicy, MiningConfig, RagMode, Split, SynthParams, TrainConfig};

use crate::error::{Error, Result};
use crate::io;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub pairs: PathBuf,
    pub checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub index: PathBuf,
    pub run: PathBuf,
    pub oracle_run: PathBuf,
    pub report: PathBuf,
    pub sweep: PathBuf,
    pub rag: PathBuf,
    pub seed: u64,
    pub synth: SynthParams,
    pub mining: MiningConfig,
    pub train: TrainConfig,
    pub policy: ExclusionPolicy,
    pub eval_split: Split,
    pub eval_k: usize,
    pub eval_chexbert_threshold: f64,
    pub eval_radgraph_threshold: f64,
    pub sweep_chexbert_grid: Vec<f64>,
    pub sweep_radgraph_grid: Vec<f64>,
    pub rag_mode: RagMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        PipelineConfig {
            corpus: "corpus.jsonl".into(),
            pairs: "pairs.jsonl".into(),
            checkpoint: "checkpoint.bin".into(),
            train_log: "train_log.jsonl".into(),
            index: "index.bin".into(),
            run: "run.jsonl".into(),
            oracle_run: "oracle_run.jsonl".into(),
            report: "report.json".into(),
            sweep: "sweep.json".into(),
            rag: "rag.jsonl".into(),
            seed: 0,
            synth: SynthParams::with_splits(0, 400, 50, 50),
            mining: MiningConfig::default(),
            eval_split: Split::Validation,
            eval_k: train.val_depth,
            eval_chexbert_threshold: train.val_chexbert_threshold,
            eval_radgraph_threshold: train.val_radgraph_threshold,
            policy: train.val_policy,
            train,
            sweep_chexbert_grid: vec![0.0, 0.4, 0.8, 1.0],
            sweep_radgraph_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            rag_mode: RagMode::Rag,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

fn render_grid(grid: &[f64]) -> String {
    grid.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = |x: &Path| x.display().to_string();
        let s = &self.synth;
        let t = &self.train;
        vec![
            ("corpus", p(&self.corpus)),
            ("pairs", p(&self.pairs)),
            ("checkpoint", p(&self.checkpoint)),
            ("train_log", p(&self.train_log)),
            ("index", p(&self.index)),
            ("run", p(&self.run)),
            ("oracle_run", p(&self.oracle_run)),
            ("report", p(&self.report)),
            ("sweep", p(&self.sweep)),
            ("rag", p(&self.rag)),
            ("seed", self.seed.to_string()),
            ("synth.n_train", s.n_train.to_string()),
            ("synth.n_validation", s.n_validation.to_string()),
            ("synth.n_test", s.n_test.to_string()),
            ("synth.image_dim", s.image_dim.to_string()),
            ("synth.text_dim", s.text_dim.to_string()),
            ("synth.label_prior", s.label_prior.to_string()),
            ("synth.signal", s.signal.to_string()),
            ("synth.image_noise", s.image_noise.to_string()),
            ("synth.text_noise", s.text_noise.to_string()),
            ("synth.repeat_patient", s.repeat_patient.to_string()),
            ("mining.chexbert_threshold", self.mining.chexbert_threshold.to_string()),
            ("mining.radgraph_threshold", self.mining.radgraph_threshold.to_string()),
            ("mining.top_k", self.mining.top_k.to_string()),
            ("mining.include_self", self.mining.include_self.to_string()),
            ("train.embed_dim", t.embed_dim.to_string()),
            ("train.temperature", t.temperature.to_string()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.max_epochs", t.max_epochs.to_string()),
            ("train.early_stop_patience", t.early_stop_patience.to_string()),
            ("train.hard_negative_k", t.hard_negative_k.to_string()),
            ("train.weight_decay", t.weight_decay.to_string()),
            ("policy.exclude_self", self.policy.exclude_self.to_string()),
            (
                "policy.exclude_same_patient",
                self.policy.exclude_same_patient.to_string(),
            ),
            ("policy.min_report_chars", self.policy.min_report_chars.to_string()),
            ("eval.split", self.eval_split.as_str().to_string()),
            ("eval.k", self.eval_k.to_string()),
            ("eval.chexbert_threshold", self.eval_chexbert_threshold.to_string()),
            ("eval.radgraph_threshold", self.eval_radgraph_threshold.to_string()),
            ("sweep.chexbert_grid", render_grid(&self.sweep_chexbert_grid)),
            ("sweep.radgraph_grid", render_grid(&self.sweep_radgraph_grid)),
            ("rag.mode", self.rag_mode.as_str().to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "corpus" => self.corpus = v.into(),
            "pairs" => self.pairs = v.into(),
            "checkpoint" => self.checkpoint = v.into(),
            "train_log" => self.train_log = v.into(),
            "index" => self.index = v.into(),
            "run" => self.run = v.into(),
            "oracle_run" => self.oracle_run = v.into(),
            "report" => self.report = v.into(),
            "sweep" => self.sweep = v.into(),
            "rag" => self.rag = v.into(),
            "seed" => self.seed = parse(key, v)?,
            "synth.n_train" => self.synth.n_train = parse(key, v)?,
            "synth.n_validation" => self.synth.n_validation = parse(key, v)?,
            "synth.n_test" => self.synth.n_test = parse(key, v)?,
            "synth.image_dim" => self.synth.image_dim = parse(key, v)?,
            "synth.text_dim" => self.synth.text_dim = parse(key, v)?,
            "synth.label_prior" => self.synth.label_prior = parse(key, v)?,
            "synth.signal" => self.synth.signal = parse(key, v)?,
            "synth.image_noise" => self.synth.image_noise = parse(key, v)?,
            "synth.text_noise" => self.synth.text_noise = parse(key, v)?,
            "synth.repeat_patient" => self.synth.repeat_patient = parse(key, v)?,
            "mining.chexbert_threshold" => self.mining.chexbert_threshold = parse(key, v)?,
            "mining.radgraph_threshold" => self.mining.radgraph_threshold = parse(key, v)?,
            "mining.top_k" => self.mining.top_k = parse(key, v)?,
            "mining.include_self" => self.mining.include_self = parse(key, v)?,
            "train.embed_dim" => self.train.embed_dim = parse(key, v)?,
            "train.temperature" => self.train.temperature = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.max_epochs" => self.train.max_epochs = parse(key, v)?,
            "train.early_stop_patience" => self.train.early_stop_patience = parse(key, v)?,
            "train.hard_negative_k" => self.train.hard_negative_k = parse(key, v)?,
            "train.weight_decay" => self.train.weight_decay = parse(key, v)?,
            "policy.exclude_self" => self.policy.exclude_self = parse(key, v)?,
            "policy.exclude_same_patient" => self.policy.exclude_same_patient = parse(key, v)?,
            "policy.min_report_chars" => self.policy.min_report_chars = parse(key, v)?,
            "eval.split" => {
                self.eval_split = v
                    .parse()
                    .map_err(|e: factmine_core::Error| Error::Config(e.to_string()))?
            }
            "eval.k" => self.eval_k = parse(key, v)?,
            "eval.chexbert_threshold" => self.eval_chexbert_threshold = parse(key, v)?,
            "eval.radgraph_threshold" => self.eval_radgraph_threshold = parse(key, v)?,
            "sweep.chexbert_grid" => self.sweep_chexbert_grid = parse_grid(key, v)?,
            "sweep.radgraph_grid" => self.sweep_radgraph_grid = parse_grid(key, v)?,
            "rag.mode" => {
                self.rag_mode = v
                    .parse()
                    .map_err(|e: factmine_core::Error| Error::Config(e.to_string()))?
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` assignments, e.g. from `--set`.
    pub fn apply<S: AsRef<str>>(&mut self, assignments: &[S]) -> Result<()> {
        for a in assignments {
            let a = a.as_ref();
            let (k, v) = a
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{a}`")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Reads a flat config file. A provenance sidecar (`.json`) is accepted
    /// too, which replays the exact configuration of an earlier command.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        if path.extension().is_some_and(|e| e == "json") {
            let prov: crate::provenance::Provenance = io::read_json(path)?;
            for (k, v) in &prov.config {
                cfg.set(k, v)?;
            }
            return Ok(cfg);
        }
        let text =
            String::from_utf8(io::read_bytes(path)?).map_err(|_| Error::malformed(path, 0, "config is not UTF-8"))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::malformed(path, i + 1, "expected key = value"))?;
            cfg.set(k.trim(), v)
                .map_err(|e| Error::malformed(path, i + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn sha256(&self) -> String {
        io::sha256_hex(self.to_text().as_bytes())
    }

    /// Synthetic corpus parameters with the shared seed applied.
    pub fn synth_params(&self) -> SynthParams {
        SynthParams {
            seed: self.seed,
            vocab: SynthVocab::chest(),
            ..self.synth.clone()
        }
    }

    /// Training parameters; validation uses the evaluation settings.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            val_chexbert_threshold: self.eval_chexbert_threshold,
            val_radgraph_threshold: self.eval_radgraph_threshold,
            val_depth: self.eval_k,
            val_policy: self.policy,
            ..self.train.clone()
        }
    }

    pub fn sweep_grid(&self) -> Vec<MiningConfig> {
        factmine_core::mining::threshold_grid(
            &self.sweep_chexbert_grid,
            &self.sweep_radgraph_grid,
            self.mining.top_k,
            self.mining.include_self,
        )
    }

    /// Joins every output path that is still relative onto `dir`.
    pub fn rebase_outputs(&mut self, dir: &Path) {
        for p in [
            &mut self.corpus,
            &mut self.pairs,
            &mut self.checkpoint,
            &mut self.train_log,
            &mut self.index,
            &mut self.run,
            &mut self.oracle_run,
            &mut self.report,
            &mut self.sweep,
            &mut self.rag,
        ] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}
