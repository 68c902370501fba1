use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tlv_core::analysis::{
    export_head_heatmaps, export_heatmap, redundancy_index, run_sweep, sweep_csv, zeroing_probe, HeatmapArtifact,
    ProbeResult, Selection, SweepRow, INDEX_FRACTIONS,
};
use tlv_core::ingest::{
    filter_caption, parse_corpus, read_video, write_video, CaptionRecord, CaptionRules, SampleSpec, VideoMeta,
};
use tlv_core::numeric::{encode_checkpoint, load_checkpoint, ParamGroup, Tensor};
use tlv_core::resampler::{token_budget, Method};
use tlv_core::train::{evaluate, run_stage, FreezePlan, Stage, ToyModel, TrainingReport};

use crate::config::{ExperimentConfig, SweepConfig};
use crate::manifest::{Invocation, Manifest, MANIFEST_FILE};
use crate::{create_dir, write_file, CliError, CliResult};

pub const CHECKPOINT_FILE: &str = "checkpoint.tlvr";
pub const LOSS_FILE: &str = "loss.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn cmd_sample(video: &Path, spec: &SampleSpec) -> CliResult<Vec<usize>> {
    let (meta, _) = read_video(video)?;
    Ok(spec.sample(&meta)?)
}

/// Writes a clip whose entry `(f, t, k)` is `f + t/100 + k/10000`, so
/// any sampled frame can be identified from its values.
pub fn cmd_gen_video(out: &Path, frames: usize, rate: f64, tokens: usize, dim: usize) -> CliResult<()> {
    let meta = VideoMeta::new(frames, rate)?;
    let mut data = Vec::with_capacity(frames * tokens * dim);
    for f in 0..frames {
        for t in 0..tokens {
            for k in 0..dim {
                data.push(f as f64 + t as f64 / 100.0 + k as f64 / 10_000.0);
            }
        }
    }
    let tensor = Tensor::new(vec![frames, tokens, dim], data)?;
    write_video(out, &meta, &tensor)?;
    Ok(())
}

pub fn cmd_curate(corpus: &Path, rules: Option<&Path>) -> CliResult<Vec<CaptionRecord>> {
    let rules = match rules {
        Some(p) => CaptionRules::load(p)?,
        None => CaptionRules::default(),
    };
    let text = std::fs::read_to_string(corpus)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", corpus.display())))?;
    Ok(parse_corpus(&text)?
        .into_iter()
        .map(|r| filter_caption(r, &rules))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetArgs {
    pub method: Method,
    pub frames: Vec<usize>,
    pub per_frame: Option<usize>,
    pub queries: Option<usize>,
    pub tokens_per_frame: usize,
}

/// `(frames, delivered tokens)` per requested frame count.
pub fn cmd_budget(args: &BudgetArgs) -> CliResult<Vec<(usize, usize)>> {
    if args.frames.is_empty() || args.frames.contains(&0) {
        return Err(CliError::Input("--frames needs positive frame counts".into()));
    }
    let (per_frame, total) = match args.method {
        Method::Image => (
            args.per_frame
                .ok_or_else(|| CliError::Input("image method needs --per-frame".into()))?,
            0,
        ),
        _ => (
            0,
            args.queries
                .ok_or_else(|| CliError::Input(format!("{} method needs --queries", args.method)))?,
        ),
    };
    Ok(args
        .frames
        .iter()
        .map(|&n| (n, token_budget(args.method, n, args.tokens_per_frame, total, per_frame).queries_out_count))
        .collect())
}

/// Runs `body` between a "running" manifest and its finalized form.
fn with_manifest<T>(
    dir: &Path,
    invocation: Invocation,
    body: impl FnOnce(&mut Manifest) -> CliResult<T>,
) -> CliResult<T> {
    create_dir(dir)?;
    let mut manifest = Manifest::begin(invocation);
    manifest.write(dir)?;
    let result = body(&mut manifest);
    manifest.finish(dir, result.as_ref().err().map(ToString::to_string))?;
    result
}

#[derive(Debug, Serialize)]
struct StageSummary {
    stage: Stage,
    steps: usize,
    warmup_steps: usize,
    eval_loss_before: f64,
    eval_loss_after: f64,
    accuracy: f64,
    digests_before: std::collections::BTreeMap<ParamGroup, String>,
    digests_after: std::collections::BTreeMap<ParamGroup, String>,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    method: Method,
    token_budget: usize,
    stages: Vec<StageSummary>,
    final_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub reports: Vec<TrainingReport>,
    pub final_accuracy: f64,
    pub model: ToyModel,
}

fn loss_csv(reports: &[TrainingReport]) -> String {
    let mut s = String::from("stage,step,loss,lr\n");
    let mut step = 0;
    for r in reports {
        for (loss, lr) in r.losses.iter().zip(&r.lrs) {
            writeln!(s, "{},{step},{loss},{lr}", r.stage).unwrap();
            step += 1;
        }
    }
    s
}

/// Trains the configured stages in order and writes `loss.csv`,
/// `summary.json`, `checkpoint.tlvr` and `manifest.json` into `dir`.
pub fn cmd_train(config: &ExperimentConfig, dir: &Path) -> CliResult<TrainOutcome> {
    config.validate()?;
    let invocation = Invocation::Train { config: config.clone() };
    with_manifest(dir, invocation, |manifest| {
        let mut model = ToyModel::new(config.model.clone())?;
        let mut reports = Vec::new();
        let stages = [(Stage::Pretrain, &config.pretrain), (Stage::Finetune, &config.finetune)];
        for (stage, cfg) in stages {
            if let Some(cfg) = cfg {
                reports.push(run_stage(&mut model, FreezePlan::for_stage(stage), cfg, &config.task)?);
            }
        }
        let final_accuracy = evaluate(&model, &config.task, config.eval.samples, config.eval.seed)?;
        let c = &config.model;
        let per_frame = if c.method == Method::Image { c.total_queries / c.frames } else { 0 };
        let summary = TrainSummary {
            method: c.method,
            token_budget: token_budget(c.method, c.frames, c.tokens_per_frame, c.total_queries, per_frame)
                .queries_out_count,
            stages: reports
                .iter()
                .map(|r| StageSummary {
                    stage: r.stage,
                    steps: r.steps,
                    warmup_steps: r.warmup_steps,
                    eval_loss_before: r.eval_loss_before,
                    eval_loss_after: r.eval_loss_after,
                    accuracy: r.accuracy,
                    digests_before: r.digests_before.clone(),
                    digests_after: r.digests_after.clone(),
                })
                .collect(),
            final_accuracy,
        };
        write_file(&dir.join(LOSS_FILE), loss_csv(&reports))?;
        write_file(
            &dir.join(SUMMARY_FILE),
            serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
        )?;
        write_file(&dir.join(CHECKPOINT_FILE), encode_checkpoint(&model.store))?;
        for (k, v) in [("loss", LOSS_FILE), ("summary", SUMMARY_FILE), ("checkpoint", CHECKPOINT_FILE)] {
            manifest.artifacts.insert(k.into(), v.into());
        }
        Ok(TrainOutcome {
            dir: dir.to_path_buf(),
            reports,
            final_accuracy,
            model,
        })
    })
}

/// Rebuilds a trained model from a `train` run directory.
pub fn load_run(run: &Path) -> CliResult<(ExperimentConfig, ToyModel)> {
    let manifest_path = run.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(CliError::Missing(manifest_path));
    }
    let manifest = Manifest::read(&manifest_path)?;
    let Invocation::Train { config } = manifest.invocation else {
        return Err(CliError::Input(format!(
            "{} is not a train manifest",
            manifest_path.display()
        )));
    };
    let checkpoint = run.join(CHECKPOINT_FILE);
    if !checkpoint.is_file() {
        return Err(CliError::Missing(checkpoint));
    }
    let mut model = ToyModel::new(config.model.clone())?;
    load_checkpoint(&mut model.store, &checkpoint)?;
    model.mark_trained(config.total_steps());
    Ok((config, model))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeArgs {
    pub run: PathBuf,
    pub fractions: Vec<f64>,
    pub selection: Selection,
    pub seeds: Vec<u64>,
    pub samples: usize,
}

#[derive(Debug, Serialize)]
struct ProbeSummary<'a> {
    #[serde(flatten)]
    result: &'a ProbeResult,
    redundancy_index: Option<f64>,
}

pub fn cmd_probe(args: &ProbeArgs, dir: &Path) -> CliResult<ProbeResult> {
    let (config, model) = load_run(&args.run)?;
    let invocation = Invocation::Probe {
        run: args.run.clone(),
        fractions: args.fractions.clone(),
        selection: args.selection,
        seeds: args.seeds.clone(),
        samples: args.samples,
    };
    with_manifest(dir, invocation, |manifest| {
        let result = zeroing_probe(&model, &config.task, &args.fractions, args.selection, &args.seeds, args.samples)?;
        let covers = INDEX_FRACTIONS
            .iter()
            .all(|f| args.fractions.iter().any(|x| (x - f).abs() < 1e-12));
        let index = if covers { Some(redundancy_index(&result.curve())?) } else { None };
        write_file(&dir.join("probe.csv"), result.to_csv())?;
        let summary = ProbeSummary { result: &result, redundancy_index: index };
        write_file(
            &dir.join("probe.json"),
            serde_json::to_string_pretty(&summary).expect("probe serializes") + "\n",
        )?;
        manifest.artifacts.insert("curve".into(), "probe.csv".into());
        manifest.artifacts.insert("summary".into(), "probe.json".into());
        Ok(result)
    })
}

/// Exports the attention of one generated clip, plus per-head maps.
pub fn cmd_heatmap(run: &Path, clip_seed: u64, dir: &Path) -> CliResult<HeatmapArtifact> {
    let (config, model) = load_run(run)?;
    let invocation = Invocation::Heatmap {
        run: run.to_path_buf(),
        clip_seed,
    };
    with_manifest(dir, invocation, |manifest| {
        let clip = config.task.generate(1, clip_seed)?.sequences.remove(0);
        let out = model.resample(&clip)?;
        let stem = dir.join("attention");
        let art = export_heatmap(&out, &stem)?;
        let heads = export_head_heatmaps(&out, &stem)?;
        for (k, p) in [("csv", &art.csv), ("pgm", &art.pgm), ("annotations", &art.annotations)] {
            manifest.artifacts.insert(k.into(), file_name(p));
        }
        for (h, p) in heads.iter().enumerate() {
            manifest.artifacts.insert(format!("head{h}"), file_name(p));
        }
        Ok(art)
    })
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_sweep(config: &SweepConfig, dir: &Path) -> CliResult<Vec<SweepRow>> {
    let base = config.base()?;
    if config.grid.is_empty() {
        return Err(CliError::Config("sweep grid has no points".into()));
    }
    let invocation = Invocation::Sweep { config: config.clone() };
    with_manifest(dir, invocation, |manifest| {
        let rows = run_sweep(&config.grid, &base)?;
        write_file(&dir.join("sweep.csv"), sweep_csv(&rows))?;
        manifest.artifacts.insert("table".into(), "sweep.csv".into());
        Ok(rows)
    })
}

/// Re-runs the command recorded in a manifest, writing into `dir`.
pub fn cmd_replay(manifest_path: &Path, dir: &Path) -> CliResult<Invocation> {
    let manifest = Manifest::read(manifest_path)?;
    match &manifest.invocation {
        Invocation::Train { config } => cmd_train(config, dir).map(|_| ()),
        Invocation::Sweep { config } => cmd_sweep(config, dir).map(|_| ()),
        Invocation::Probe {
            run,
            fractions,
            selection,
            seeds,
            samples,
        } => cmd_probe(
            &ProbeArgs {
                run: run.clone(),
                fractions: fractions.clone(),
                selection: *selection,
                seeds: seeds.clone(),
                samples: *samples,
            },
            dir,
        )
        .map(|_| ()),
        Invocation::Heatmap { run, clip_seed } => cmd_heatmap(run, *clip_seed, dir).map(|_| ()),
    }?;
    Ok(manifest.invocation)
}
