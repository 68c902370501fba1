//! Acceptance suite: one line per criterion, then a single verdict.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlv_cli::{cmd_budget, cmd_replay, cmd_train, BudgetArgs, ExperimentConfig, CHECKPOINT_FILE};
use tlv_core::analysis::{export_heatmap, read_heatmap_csv, zeroing_probe, Selection};
use tlv_core::ingest::{fps_sample, uniform_sample, VideoMeta};
use tlv_core::numeric::{finite_diff_check, ParamGroup, ParamStore, PeKind, Tensor};
use tlv_core::resampler::{
    token_budget, FeatureSequence, GroupPlan, Method, Resampler, ResamplerConfig, Routing,
};
use tlv_core::train::{
    evaluate, run_stage, FreezePlan, ModelConfig, Stage, SyntheticTask, TaskKind, ToyModel, TrainConfig,
};

type Check = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_seq(rng: &mut ChaCha8Rng, frames: usize, tokens: usize, dim: usize) -> FeatureSequence {
    let data = (0..frames * tokens * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureSequence::new(Tensor::new(vec![frames, tokens, dim], data).unwrap()).unwrap()
}

fn resampler(seed: u64, d_vis: usize, d_model: usize, queries: usize, pe: PeKind, heads: usize) -> (ParamStore, Resampler) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ResamplerConfig {
        d_vis,
        d_model,
        total_queries: queries,
        heads,
        depth: 1,
        pe,
        max_len: 64,
        identity_projections: false,
    };
    let r = Resampler::new(&mut store, "r", cfg, &mut rng).unwrap();
    if let Some(id) = r.position_encoding().param() {
        for v in store.get_mut(id).value.data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    (store, r)
}

fn recall_task() -> SyntheticTask {
    SyntheticTask {
        kind: TaskKind::Recall,
        vocab: 4,
        frames: 4,
        tokens_per_frame: 4,
        dim: 8,
        noise: 0.3,
        symbol_seed: 11,
    }
}

fn toy(method: Method, heads: usize) -> ToyModel {
    ToyModel::new(ModelConfig {
        method,
        frames: 4,
        tokens_per_frame: 4,
        d_raw: 8,
        d_vis: 8,
        d_model: 16,
        total_queries: 8,
        groups: None,
        frame_aligned: false,
        heads,
        depth: 1,
        pe: PeKind::Learned,
        classes: 4,
        init_seed: 3,
    })
    .unwrap()
}

fn config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config/train_group.toml")
}

fn equivalence_a() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let frames = rng.random_range(1..=8);
        let tokens = rng.random_range(1..=4);
        let d_model = [8, 16, 32][seed as usize % 3];
        let queries = rng.random_range(1..=16);
        let (store, r) = resampler(seed, 6, d_model, queries, PeKind::Learned, 1 + seed as usize % 2);
        let seq = random_seq(&mut rng, frames, tokens, 6);
        let plan = GroupPlan::new(1, queries, frames * tokens).map_err(|e| e.to_string())?;
        let g = r.group_resample(&store, &seq, &plan).map_err(|e| e.to_string())?;
        let n = r.naive_video_resample(&store, &seq).map_err(|e| e.to_string())?;
        worst = worst.max(g.queries_out.max_abs_diff(&n.queries_out));
    }
    ensure(worst <= 1e-12, format!("max |group(M=1) - naive| = {worst:.3e} over 50 seeds (tol 1e-12)"))
}

fn equivalence_b() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + seed);
        let frames = rng.random_range(1..=8);
        let tokens = rng.random_range(1..=4);
        let per_frame = rng.random_range(1..=3);
        let d_model = [8, 16, 32][seed as usize % 3];
        let (store, r) = resampler(seed, 5, d_model, frames * per_frame, PeKind::None, 1 + seed as usize % 2);
        let seq = random_seq(&mut rng, frames, tokens, 5);
        let plan = GroupPlan::frame_aligned(frames, frames * per_frame, frames, tokens).map_err(|e| e.to_string())?;
        let g = r.group_resample(&store, &seq, &plan).map_err(|e| e.to_string())?;
        let i = r.image_level_resample(&store, &seq, per_frame).map_err(|e| e.to_string())?;
        worst = worst.max(g.queries_out.max_abs_diff(&i.queries_out));
    }
    ensure(worst <= 1e-12, format!("max |group(M=N, no PE) - image| = {worst:.3e} over 50 seeds (tol 1e-12)"))
}

fn gradient_fidelity() -> Check {
    let routings = [
        ("image", Routing::Image { per_frame_queries: 2 }, PeKind::None),
        ("naive", Routing::Naive, PeKind::Learned),
        ("group", Routing::Group(GroupPlan::new(2, 4, 8).unwrap()), PeKind::Learned),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, routing, pe) in routings {
        let (mut store, r) = resampler(31, 8, 8, 4, pe, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let seq = random_seq(&mut rng, 2, 4, 8);
        let weights = Tensor::new(vec![4, 8], (0..32).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect()).unwrap();
        let report = finite_diff_check(
            &mut store,
            |g| {
                let x = g.constant(seq.concat())?;
                let trace = r.forward(g, x, 2, &routing)?;
                let w = g.constant(weights.clone())?;
                let prod = g.matmul_nt(trace.queries_out, w)?;
                g.sum(prod)
            },
            1e-5,
            1e-5,
        )
        .map_err(|e| e.to_string())?;
        ok &= report.passed() && report.max_rel_error() <= 1e-5;
        parts.push(format!("{name} {:.2e}", report.max_rel_error()));
    }
    ensure(ok, format!("max relative error: {} (tol 1e-5)", parts.join(", ")))
}

fn attention_structure() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let clip = recall_task().generate(1, 5).map_err(|e| e.to_string())?.sequences.remove(0);
    let mut zero_cells = 0;
    let mut worst_row: f64 = 0.0;
    for method in [Method::Group, Method::Image] {
        let model = toy(method, 2);
        let out = model.resample(&clip).map_err(|e| e.to_string())?;
        let art = export_heatmap(&out, &dir.path().join(method.as_str())).map_err(|e| e.to_string())?;
        let csv = read_heatmap_csv(&art.csv).map_err(|e| e.to_string())?;
        // Four aligned blocks: 2 queries per frame of 4 tokens.
        for q in 0..8 {
            let span = (q / 2) * 4..(q / 2 + 1) * 4;
            let mut sum = 0.0;
            for t in 0..16 {
                let v = csv.get(q, t);
                if span.contains(&t) {
                    sum += v;
                } else if v.to_bits() != 0 {
                    return Err(format!("{method}: cell ({q},{t}) = {v:e}, expected exact 0"));
                } else {
                    zero_cells += 1;
                }
            }
            worst_row = worst_row.max((sum - 1.0).abs());
        }
    }
    ensure(
        worst_row <= 1e-10,
        format!("{zero_cells} off-block cells exactly 0; max |row sum - 1| = {worst_row:.2e} (tol 1e-10)"),
    )
}

fn budget_law() -> Check {
    let image = cmd_budget(&BudgetArgs {
        method: Method::Image,
        frames: vec![16],
        per_frame: Some(8),
        queries: None,
        tokens_per_frame: 729,
    })
    .map_err(|e| e.to_string())?;
    if image != [(16, 128)] || token_budget(Method::Image, 16, 729, 0, 8).queries_out_count != 128 {
        return Err(format!("image-level (16 frames, 8 per frame) gave {image:?}"));
    }
    for method in [Method::Naive, Method::Group] {
        let rows = cmd_budget(&BudgetArgs {
            method,
            frames: vec![8, 16, 64],
            per_frame: None,
            queries: Some(128),
            tokens_per_frame: 729,
        })
        .map_err(|e| e.to_string())?;
        for (n, tokens) in rows {
            let law = token_budget(method, n, 729, 128, 0).queries_out_count;
            if tokens != 128 || law != 128 {
                return Err(format!("{method} at N={n}: command {tokens}, law {law}"));
            }
        }
    }
    Ok("image 16x8 = 128; naive and group = 128 for N in {8, 16, 64}".into())
}

fn sampling_arithmetic() -> Check {
    let m100 = VideoMeta::new(100, 30.0).unwrap();
    let oracle: Vec<usize> = (0..4).map(|i| ((i as f64 + 0.5) * 100.0 / 4.0).floor() as usize).collect();
    let got = uniform_sample(&m100, 4).map_err(|e| e.to_string())?;
    if got != oracle || got != [12, 37, 62, 87] {
        return Err(format!("uniform_sample(100, 4) = {got:?}"));
    }
    let long = VideoMeta::new(7500, 25.0).unwrap();
    let capped = fps_sample(&long, 1.0, 64).map_err(|e| e.to_string())?;
    if capped != uniform_sample(&long, 64).unwrap() {
        return Err("300 candidates did not fall back to uniform(64)".into());
    }
    let exact = VideoMeta::new(64 * 25, 25.0).unwrap();
    let at_cap = fps_sample(&exact, 1.0, 64).map_err(|e| e.to_string())?;
    let direct: Vec<usize> = (0..64).map(|j| j * 25).collect();
    if at_cap != direct {
        return Err("64 candidates should not trigger the cap".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..10_000 {
        let total = rng.random_range(1..5000);
        let meta = VideoMeta::new(total, rng.random_range(1.0..60.0)).unwrap();
        let max = rng.random_range(1..=128);
        let idx = if case % 2 == 0 {
            uniform_sample(&meta, max)
        } else {
            fps_sample(&meta, rng.random_range(0.05..5.0), max)
        }
        .map_err(|e| e.to_string())?;
        let increasing = idx.windows(2).all(|w| w[0] < w[1]);
        if idx.is_empty() || !increasing || idx.iter().any(|&i| i >= total) || idx.len() > max {
            return Err(format!("case {case}: {total} frames, max {max}: {idx:?}"));
        }
    }
    Ok("uniform(100,4) = [12,37,62,87]; cap falls back above 64; 10^4 fuzz metas clean".into())
}

fn freeze_contract() -> Check {
    let task = recall_task();
    let mut model = toy(Method::Group, 1);
    let pre = run_stage(
        &mut model,
        FreezePlan::for_stage(Stage::Pretrain),
        &TrainConfig::desk(Stage::Pretrain, 200, 3),
        &task,
    )
    .map_err(|e| e.to_string())?;
    let fine = run_stage(
        &mut model,
        FreezePlan::for_stage(Stage::Finetune),
        &TrainConfig::desk(Stage::Finetune, 200, 3),
        &task,
    )
    .map_err(|e| e.to_string())?;
    let ok = !pre.changed(ParamGroup::Head)
        && !pre.changed(ParamGroup::Encoder)
        && pre.changed(ParamGroup::Resampler)
        && !fine.changed(ParamGroup::Encoder)
        && fine.changed(ParamGroup::Head);
    ensure(
        ok,
        format!(
            "pretrain: head {} encoder {}; finetune: encoder {}, head {}",
            if pre.changed(ParamGroup::Head) { "CHANGED" } else { "unchanged" },
            if pre.changed(ParamGroup::Encoder) { "CHANGED" } else { "unchanged" },
            if fine.changed(ParamGroup::Encoder) { "CHANGED" } else { "unchanged" },
            if fine.changed(ParamGroup::Head) { "updated" } else { "not updated" },
        ),
    )
}

fn schedule_exactness() -> Check {
    let mut model = toy(Method::Naive, 1);
    let mut cfg = TrainConfig::published(Stage::Pretrain, 1000, 4);
    cfg.batch_size = 4;
    cfg.eval_samples = 16;
    let report = run_stage(&mut model, FreezePlan::for_stage(Stage::Pretrain), &cfg, &recall_task())
        .map_err(|e| e.to_string())?;
    let (peak, tw, total) = (1e-4, 30.0, 1000.0);
    let mut worst: f64 = 0.0;
    for (t, lr) in report.lrs.iter().enumerate() {
        let t = t as f64;
        let want = if t < tw {
            peak * t / tw
        } else {
            peak * 0.5 * (1.0 + (PI * (t - tw) / (total - tw)).cos())
        };
        worst = worst.max((lr - want).abs());
    }
    ensure(
        report.warmup_steps == 30 && report.lrs.len() == 1000 && worst <= 1e-12,
        format!(
            "warmup {} steps, {} lr values, max deviation {worst:.2e} (tol 1e-12)",
            report.warmup_steps,
            report.lrs.len()
        ),
    )
}

fn trainability() -> Check {
    let task = recall_task();
    let mut parts = Vec::new();
    let mut ok = true;
    for method in Method::ALL {
        let mut model = toy(method, 1);
        let cfg = TrainConfig::desk(Stage::Finetune, 2000, 17);
        let r = run_stage(&mut model, FreezePlan::for_stage(Stage::Finetune), &cfg, &task).map_err(|e| e.to_string())?;
        let acc = evaluate(&model, &task, 1000, 99).map_err(|e| e.to_string())?;
        ok &= acc >= 0.9 && r.eval_loss_after < r.eval_loss_before;
        parts.push(format!(
            "{method} acc {acc:.3} loss {:.3}->{:.3}",
            r.eval_loss_before, r.eval_loss_after
        ));
    }
    ensure(ok, format!("{} (floor 0.9)", parts.join("; ")))
}

fn probe_behavior() -> Check {
    let task = recall_task();
    let fractions = [0.0, 0.25, 0.5, 0.75, 1.0];
    let seeds = [1, 2, 3, 4, 5];
    let samples = 500;
    let mut lines = Vec::new();
    let mut retention_75 = Vec::new();
    for method in [Method::Naive, Method::Group] {
        let mut model = toy(method, 1);
        let cfg = TrainConfig::desk(Stage::Finetune, 2000, 17);
        run_stage(&mut model, FreezePlan::for_stage(Stage::Finetune), &cfg, &task).map_err(|e| e.to_string())?;
        let r = zeroing_probe(&model, &task, &fractions, Selection::Random, &seeds, samples).map_err(|e| e.to_string())?;
        let zero = r.at(0.0).unwrap();
        if zero.retention_mean != 1.0 {
            return Err(format!("{method}: fraction 0 retention {}", zero.retention_mean));
        }
        let all = r.at(1.0).unwrap();
        let n = (samples * seeds.len()) as f64;
        let sigma = (0.25 * 0.75 / n).sqrt();
        if (all.accuracy_mean - 0.25).abs() > 3.0 * sigma {
            return Err(format!(
                "{method}: fraction 1 accuracy {:.4} outside 0.25 +/- {:.4}",
                all.accuracy_mean,
                3.0 * sigma
            ));
        }
        let p75 = r.at(0.75).unwrap();
        retention_75.push(p75.retention_mean);
        lines.push(format!(
            "{method} retention@0.75 {:.3}+/-{:.3}, acc@1.0 {:.3}",
            p75.retention_mean, p75.retention_sd, all.accuracy_mean
        ));
    }
    let ordering = if retention_75[0] >= retention_75[1] { "naive >= group (as expected)" } else { "naive < group (differs from expectation)" };
    Ok(format!(
        "{}; {ordering}; naive keeps {:.0}% at 25% of queries vs ~95% reported at full scale",
        lines.join("; "),
        100.0 * retention_75[0]
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig::load(&config_path()).map_err(|e| e.to_string())?;
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    cmd_train(&cfg, &first).map_err(|e| e.to_string())?;
    cmd_replay(&first.join("manifest.json"), &second).map_err(|e| e.to_string())?;
    let a = std::fs::read(first.join(CHECKPOINT_FILE)).map_err(|e| e.to_string())?;
    let b = std::fs::read(second.join(CHECKPOINT_FILE)).map_err(|e| e.to_string())?;
    let la = std::fs::read(first.join("loss.csv")).map_err(|e| e.to_string())?;
    let lb = std::fs::read(second.join("loss.csv")).map_err(|e| e.to_string())?;
    ensure(
        a == b && la == lb,
        format!("replayed checkpoint ({} bytes) and loss curve {}", a.len(), if a == b && la == lb { "bitwise identical" } else { "DIFFER" }),
    )
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 11] = [
        ("oracle equivalence A", 10, equivalence_a),
        ("oracle equivalence B", 10, equivalence_b),
        ("gradient fidelity", 60, gradient_fidelity),
        ("attention structure", 5, attention_structure),
        ("token-budget law", 1, budget_law),
        ("sampling arithmetic", 10, sampling_arithmetic),
        ("freeze contract", 120, freeze_contract),
        ("schedule exactness", 5, schedule_exactness),
        ("trainability floor", 600, trainability),
        ("probe behavior", 1200, probe_behavior),
        ("determinism", 300, determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        println!(
            "[{}] {:>2} {name}: {detail} [{:.2}s, limit {limit}s{}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", OVER TIME" }
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
