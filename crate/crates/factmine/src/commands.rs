//! One function per subcommand. Each reads its inputs from the paths in
//! the config, writes its artifact plus a provenance sidecar, and returns a
//! JSON summary for stdout.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use factmine_core::eval::split_ids;
use factmine_core::metrics::{instance_score, rouge_l_text};
use factmine_core::mining::SweepRow;
use factmine_core::train::train_with_observer;
use factmine_core::{
    build_index, build_rag_dataset, eval_retrieval, judge_relevance, mrr, synth_corpus, Corpus, EncoderParams, PairSet,
    RagMode, RelevanceJudgment, RetrievalRun,
};
use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::records::{write_rag, write_train_log, EvalReport, QueryLine, SweepLine, SweepReport, TrainLogLine};
use crate::io::{self, Checkpoint, CORPUS_SCHEMA};
use crate::parallel;
use crate::provenance::{self, FileHash};

pub const EVAL_SCHEMA: &str = "factmine-eval/1";
pub const SWEEP_SCHEMA: &str = "factmine-sweep/1";

fn load_corpus(cfg: &PipelineConfig) -> Result<Corpus> {
    io::load_corpus(&cfg.corpus, CORPUS_SCHEMA)
}

fn load_params(cfg: &PipelineConfig) -> Result<EncoderParams> {
    Ok(io::read_checkpoint(&cfg.checkpoint)?.params)
}

/// Short content hash naming a checkpoint inside runs.
pub fn checkpoint_id(path: &Path) -> Result<String> {
    Ok(io::sha256_file(path)?[..16].to_string())
}

pub fn synth(cfg: &PipelineConfig) -> Result<Value> {
    let corpus = synth_corpus(&cfg.synth_params())?;
    io::write_corpus(&cfg.corpus, &corpus)?;
    provenance::record("synth", cfg, &[], &[&cfg.corpus])?;
    Ok(json!({
        "command": "synth",
        "corpus": cfg.corpus.display().to_string(),
        "records": corpus.len(),
    }))
}

pub fn mine(cfg: &PipelineConfig) -> Result<Value> {
    let corpus = load_corpus(cfg)?;
    let pairs = parallel::mine_pairs(&corpus, &cfg.mining)?;
    io::write_pairs(&cfg.pairs, &pairs)?;
    provenance::record("mine", cfg, &[&cfg.corpus], &[&cfg.pairs])?;
    Ok(json!({
        "command": "mine",
        "pairs": cfg.pairs.display().to_string(),
        "queries": pairs.queries.len(),
        "pair_count": pairs.pair_count(),
        "mean_pairs_per_query": pairs.mean_pairs_per_query(),
        "zero_pair_fraction": pairs.zero_pair_fraction(),
    }))
}

fn non_increasing_along<K: Ord>(
    rows: &[SweepRow],
    key: impl Fn(&SweepRow) -> (K, u64),
    order: impl Fn(&SweepRow) -> f64,
) -> bool {
    let mut groups: BTreeMap<(K, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(key(r)).or_default().push(r);
    }
    groups.values_mut().all(|g| {
        g.sort_by(|a, b| order(a).total_cmp(&order(b)));
        g.windows(2).all(|w| w[1].mean_pairs <= w[0].mean_pairs)
    })
}

/// Pair statistics for every grid point. With `with_checkpoint`, also MRR
/// of the checkpoint's retrieval run under each grid point's judgments.
pub fn sweep(cfg: &PipelineConfig, with_checkpoint: bool) -> Result<Value> {
    let corpus = load_corpus(cfg)?;
    let grid = cfg.sweep_grid();
    let rows = parallel::threshold_sweep(&corpus, &grid)?;
    let mut inputs: Vec<&Path> = vec![&cfg.corpus];
    let run = if with_checkpoint {
        inputs.push(&cfg.checkpoint);
        let params = load_params(cfg)?;
        let index = build_index(&corpus, &params, factmine_core::Split::Train)?;
        let id = checkpoint_id(&cfg.checkpoint)?;
        Some(parallel::retrieve(
            &corpus,
            &params,
            &index,
            cfg.eval_split,
            cfg.eval_k,
            &cfg.policy,
            &id,
        )?)
    } else {
        None
    };
    let mut lines = Vec::with_capacity(rows.len());
    for r in &rows {
        let mut line = SweepLine {
            chexbert_threshold: r.config.chexbert_threshold,
            radgraph_threshold: r.config.radgraph_threshold,
            top_k: r.config.top_k,
            include_self: r.config.include_self,
            queries: r.queries,
            mean_candidates: r.mean_candidates,
            mean_pairs: r.mean_pairs,
            zero_pair_fraction: r.zero_pair_fraction,
            mrr: None,
            mrr_judged_only: None,
            judged_fraction: None,
        };
        if let Some(run) = &run {
            let j = judge_relevance(
                &corpus,
                cfg.eval_split,
                r.config.chexbert_threshold,
                r.config.radgraph_threshold,
            )?;
            line.mrr = Some(mrr(run, &j));
            line.mrr_judged_only = Some(factmine_core::eval::mrr_judged_only(run, &j));
            line.judged_fraction = Some(j.judged_count() as f64 / j.relevant.len().max(1) as f64);
        }
        lines.push(line);
    }
    let by_chex = |r: &SweepRow| (r.config.chexbert_threshold.to_bits(), r.config.top_k as u64);
    let by_rad = |r: &SweepRow| (r.config.radgraph_threshold.to_bits(), r.config.top_k as u64);
    let loosest = lines.iter().min_by(|a, b| {
        (a.chexbert_threshold + a.radgraph_threshold).total_cmp(&(b.chexbert_threshold + b.radgraph_threshold))
    });
    let strictest = lines.iter().max_by(|a, b| {
        (a.chexbert_threshold + a.radgraph_threshold).total_cmp(&(b.chexbert_threshold + b.radgraph_threshold))
    });
    let file_inputs = inputs.iter().map(|p| FileHash::of(p)).collect::<Result<Vec<_>>>()?;
    let report = SweepReport {
        schema_version: SWEEP_SCHEMA.to_string(),
        monotone_in_radgraph: non_increasing_along(&rows, by_chex, |r| r.config.radgraph_threshold),
        monotone_in_chexbert: non_increasing_along(&rows, by_rad, |r| r.config.chexbert_threshold),
        zero_pair_fraction_loosest: loosest.map_or(0.0, |l| l.zero_pair_fraction),
        zero_pair_fraction_strictest: strictest.map_or(0.0, |l| l.zero_pair_fraction),
        rows: lines,
        config: cfg.to_map(),
        provenance: provenance::describe(cfg, &file_inputs),
    };
    io::write_json(&cfg.sweep, &report)?;
    provenance::record("sweep", cfg, &inputs, &[&cfg.sweep])?;
    Ok(json!({
        "command": "sweep",
        "sweep": cfg.sweep.display().to_string(),
        "rows": report.rows.len(),
        "monotone_in_radgraph": report.monotone_in_radgraph,
        "monotone_in_chexbert": report.monotone_in_chexbert,
    }))
}

pub fn train(cfg: &PipelineConfig) -> Result<Value> {
    let corpus = load_corpus(cfg)?;
    let pairs = io::read_pairs(&cfg.pairs)?;
    let config = cfg.train_config();
    let start = Instant::now();
    let mut log = Vec::new();
    let outcome = train_with_observer(&corpus, &pairs, &config, &mut |rec| {
        log.push(TrainLogLine::new(rec, start.elapsed().as_millis() as u64));
    })?;
    io::write_checkpoint(
        &cfg.checkpoint,
        &Checkpoint {
            params: outcome.params,
            seed: cfg.seed,
        },
    )?;
    write_train_log(&cfg.train_log, &log)?;
    provenance::record(
        "train",
        cfg,
        &[&cfg.corpus, &cfg.pairs],
        &[&cfg.checkpoint, &cfg.train_log],
    )?;
    Ok(json!({
        "command": "train",
        "checkpoint": cfg.checkpoint.display().to_string(),
        "epochs": log.len(),
        "initial_val_mrr": outcome.log.initial_val_mrr,
        "best_val_mrr": outcome.log.best_val_mrr,
        "best_stage": outcome.log.best_stage,
        "best_epoch": outcome.log.best_epoch,
    }))
}

pub fn index(cfg: &PipelineConfig) -> Result<Value> {
    let corpus = load_corpus(cfg)?;
    let params = load_params(cfg)?;
    let index = build_index(&corpus, &params, factmine_core::Split::Train)?;
    io::write_index(&cfg.index, &index)?;
    provenance::record("index", cfg, &[&cfg.corpus, &cfg.checkpoint], &[&cfg.index])?;
    Ok(json!({
        "command": "index",
        "index": cfg.index.display().to_string(),
        "rows": index.len(),
        "dim": index.dim(),
    }))
}

pub fn retrieve(cfg: &PipelineConfig) -> Result<Value> {
    let corpus = load_corpus(cfg)?;
    let params = load_params(cfg)?;
    let index = io::read_index(&cfg.index)?;
    if index.dim() != params.embed_dim {
        return Err(Error::Config(format!(
            "index dimension {} does not match checkpoint embedding dimension {}",
            index.dim(),
            params.embed_dim
        )));
    }
    let id = checkpoint_id(&cfg.checkpoint)?;
    let run = parallel::retrieve(&corpus, &params, &index, cfg.eval_split, cfg.eval_k, &cfg.policy, &id)?;
    io::write_run(&cfg.run, &run)?;
    provenance::record(
        "retrieve",
        cfg,
        &[&cfg.corpus, &cfg.checkpoint, &cfg.index],
        &[&cfg.run],
    )?;
    Ok(json!({
        "command": "retrieve",
        "run": cfg.run.display().to_string(),
        "queries": run.queries.len(),
        "checkpoint_id": id,
    }))
}

/// Mined pairs as relevance judgments: each query's mined documents,
/// without the query itself.
pub fn qrels_from_pairs(pairs: &PairSet) -> RelevanceJudgment {
    let relevant = pairs
        .queries
        .iter()
        .map(|q| {
            let docs: BTreeSet<String> = q.mined().map(|p| p.doc_id.clone()).collect();
            (q.query_id.clone(), docs)
        })
        .collect();
    RelevanceJudgment {
        chexbert_threshold: pairs.config.chexbert_threshold,
        radgraph_threshold: pairs.config.radgraph_threshold,
        relevant,
    }
}

/// Scores a persisted run. `run_path` defaults to the config's run.
pub fn evaluate(cfg: &PipelineConfig, run_path: Option<&Path>, qrels: Option<&Path>) -> Result<Value> {
    let run_path = run_path.unwrap_or(&cfg.run);
    let corpus = load_corpus(cfg)?;
    let run = io::read_run(run_path)?;
    let report = build_report(cfg, &corpus, &run, run_path, qrels)?;
    io::write_json(&cfg.report, &report)?;
    let mut inputs: Vec<&Path> = vec![&cfg.corpus, run_path];
    inputs.extend(qrels);
    provenance::record("eval", cfg, &inputs, &[&cfg.report])?;
    Ok(json!({
        "command": "eval",
        "report": cfg.report.display().to_string(),
        "f1_chexbert_micro": report.f1_chexbert_micro,
        "f1_radgraph_mean": report.f1_radgraph_mean,
        "rouge_l_mean": report.rouge_l_mean,
        "mrr": report.mrr,
    }))
}

pub fn build_report(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    run: &RetrievalRun,
    run_path: &Path,
    qrels: Option<&Path>,
) -> Result<EvalReport> {
    let expected = split_ids(corpus, cfg.eval_split);
    let ev = eval_retrieval(run, corpus, &expected)?;
    let (judgments, kind) = match qrels {
        Some(p) => (qrels_from_pairs(&io::read_pairs(p)?), "qrels"),
        None => (
            judge_relevance(
                corpus,
                cfg.eval_split,
                cfg.eval_chexbert_threshold,
                cfg.eval_radgraph_threshold,
            )?,
            "thresholds",
        ),
    };
    let mut inputs = vec![FileHash::of(&cfg.corpus)?, FileHash::of(run_path)?];
    if let Some(p) = qrels {
        inputs.push(FileHash::of(p)?);
    }
    Ok(EvalReport {
        schema_version: EVAL_SCHEMA.to_string(),
        split: cfg.eval_split.as_str().to_string(),
        queries: expected.len(),
        checkpoint_id: run.provenance.checkpoint_id.clone(),
        f1_chexbert_micro: ev.score.f1_chexbert_micro,
        f1_radgraph_mean: ev.score.f1_radgraph_mean,
        rouge_l_mean: ev.score.rouge_l_mean,
        mrr: mrr(run, &judgments),
        mrr_judged_only: factmine_core::eval::mrr_judged_only(run, &judgments),
        judged_queries: judgments.relevant.values().filter(|s| !s.is_empty()).count(),
        judgments: kind.to_string(),
        chexbert_threshold: judgments.chexbert_threshold,
        radgraph_threshold: judgments.radgraph_threshold,
        per_query: ev
            .per_query
            .into_iter()
            .map(|q| QueryLine {
                query_id: q.query_id,
                doc_id: q.doc_id,
                f1_radgraph: q.instance.f1_radgraph,
                f1_chexbert_instance: q.instance.f1_chexbert_instance,
                rouge_l: q.rouge_l,
            })
            .collect(),
        config: cfg.to_map(),
        provenance: provenance::describe(cfg, &inputs),
    })
}

pub fn oracle(cfg: &PipelineConfig) -> Result<Value> {
    let corpus = load_corpus(cfg)?;
    let run = parallel::oracle_run(&corpus, cfg.eval_split, &cfg.policy)?;
    io::write_run(&cfg.oracle_run, &run)?;
    provenance::record("oracle", cfg, &[&cfg.corpus], &[&cfg.oracle_run])?;
    Ok(json!({
        "command": "oracle",
        "run": cfg.oracle_run.display().to_string(),
        "queries": run.queries.len(),
    }))
}

pub fn build_rag(cfg: &PipelineConfig) -> Result<Value> {
    let corpus = load_corpus(cfg)?;
    let mut inputs: Vec<&Path> = vec![&cfg.corpus];
    let params = if cfg.rag_mode == RagMode::Rag {
        inputs.push(&cfg.checkpoint);
        Some(load_params(cfg)?)
    } else {
        None
    };
    let ds = build_rag_dataset(&corpus, params.as_ref(), &cfg.policy, cfg.rag_mode)?;
    write_rag(&cfg.rag, &ds)?;
    provenance::record("build-rag", cfg, &inputs, &[&cfg.rag])?;
    if !ds.fallbacks.is_empty() {
        eprintln!(
            "warning: {} queries had no eligible document and use the plain prompt",
            ds.fallbacks.len()
        );
    }
    Ok(json!({
        "command": "build-rag",
        "rag": cfg.rag.display().to_string(),
        "mode": cfg.rag_mode.as_str(),
        "examples": ds.examples.len(),
        "fallbacks": ds.fallbacks.len(),
        "skipped_empty_target": ds.skipped_empty_target.len(),
    }))
}

/// Pairwise scores of two reports of the corpus.
pub fn score(cfg: &PipelineConfig, reference: &str, hypothesis: &str) -> Result<Value> {
    let corpus = load_corpus(cfg)?;
    let r = corpus.require(reference)?;
    let h = corpus.require(hypothesis)?;
    let s = instance_score((&r.labels, &r.graph), (&h.labels, &h.graph));
    Ok(json!({
        "command": "score",
        "reference": reference,
        "hypothesis": hypothesis,
        "f1_radgraph": s.f1_radgraph,
        "f1_chexbert_instance": s.f1_chexbert_instance,
        "rouge_l": rouge_l_text(&r.report_text, &h.report_text),
    }))
}

/// mine → train → index → retrieve → eval, optionally preceded by synth.
pub fn pipeline(cfg: &PipelineConfig, with_synth: bool) -> Result<Value> {
    let mut steps = Vec::new();
    if with_synth {
        steps.push(synth(cfg)?);
    }
    steps.push(mine(cfg)?);
    steps.push(train(cfg)?);
    steps.push(index(cfg)?);
    steps.push(retrieve(cfg)?);
    steps.push(evaluate(cfg, None, None)?);
    Ok(json!({ "command": "pipeline", "steps": steps }))
}
