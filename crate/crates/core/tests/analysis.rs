use proptest::prelude::*;
use tlv_core::analysis::*;
use tlv_core::numeric::PeKind;
use tlv_core::resampler::{token_budget, Method};
use tlv_core::train::*;
use tlv_core::Error;

fn task(frames: usize, tokens: usize) -> SyntheticTask {
    SyntheticTask {
        kind: TaskKind::Recall,
        vocab: 4,
        frames,
        tokens_per_frame: tokens,
        dim: 8,
        noise: 0.3,
        symbol_seed: 11,
    }
}

fn config(method: Method, groups: Option<usize>) -> ModelConfig {
    ModelConfig {
        method,
        frames: 4,
        tokens_per_frame: 4,
        d_raw: 8,
        d_vis: 8,
        d_model: 16,
        total_queries: 8,
        groups,
        frame_aligned: false,
        heads: 2,
        depth: 1,
        pe: PeKind::Learned,
        classes: 4,
        init_seed: 3,
    }
}

fn trained(method: Method) -> ToyModel {
    let mut m = ToyModel::new(config(method, None)).unwrap();
    let cfg = TrainConfig::desk(Stage::Finetune, 400, 8);
    run_stage(&mut m, FreezePlan::for_stage(Stage::Finetune), &cfg, &task(4, 4)).unwrap();
    m
}

/// Allowed token range of query `q` for `m` aligned groups.
fn allowed(q: usize, total_q: usize, len: usize, m: usize) -> std::ops::Range<usize> {
    let g = q / (total_q / m);
    g * len / m..(g + 1) * len / m
}

fn check_blocks(method: Method, m: usize) {
    let model = ToyModel::new(config(method, Some(m))).unwrap();
    let clip = task(4, 4).generate(1, 3).unwrap().sequences.remove(0);
    let out = model.resample(&clip).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let art = export_heatmap(&out, &dir.path().join("attn")).unwrap();
    let csv = read_heatmap_csv(&art.csv).unwrap();
    assert_eq!(csv.shape(), &[8, 16]);
    let pgm = std::fs::read_to_string(&art.pgm).unwrap();
    let pixels: Vec<Vec<u32>> = pgm
        .lines()
        .skip(4)
        .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
        .collect();
    for q in 0..8 {
        let span = allowed(q, 8, 16, m);
        let mut sum = 0.0;
        for t in 0..16 {
            let v = csv.get(q, t);
            if span.contains(&t) {
                assert!(v > 0.0);
                sum += v;
            } else {
                assert_eq!(v.to_bits(), 0.0f64.to_bits(), "cell ({q},{t})");
                assert_eq!(pixels[q][t], 0);
            }
        }
        assert!((sum - 1.0).abs() <= 1e-10);
        assert_eq!(*pixels[q].iter().max().unwrap(), 255);
    }
}

#[test]
fn group_heatmap_has_four_blocks() {
    check_blocks(Method::Group, 4);
}

#[test]
fn image_heatmap_is_per_frame() {
    check_blocks(Method::Image, 4);
}

#[test]
fn naive_heatmap_has_no_forced_zeros() {
    check_blocks(Method::Naive, 1);
}

#[test]
fn annotations_list_frames_and_blocks() {
    let model = ToyModel::new(config(Method::Group, Some(2))).unwrap();
    let clip = task(4, 4).generate(1, 3).unwrap().sequences.remove(0);
    let out = model.resample(&clip).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let art = export_heatmap(&out, &dir.path().join("sub/attn")).unwrap();
    let text = std::fs::read_to_string(&art.annotations).unwrap();
    assert!(text.contains("frame 3 tokens 12..16"));
    assert!(text.contains("block 0 queries 0..4 tokens 0..8"));
    assert!(text.contains("block 1 queries 4..8 tokens 8..16"));
    let heads = export_head_heatmaps(&out, &dir.path().join("attn")).unwrap();
    assert_eq!(heads.len(), 2);
    let mean = read_heatmap_csv(&art.csv).unwrap();
    let h0 = read_heatmap_csv(&heads[0]).unwrap();
    let h1 = read_heatmap_csv(&heads[1]).unwrap();
    for (i, v) in mean.data().iter().enumerate() {
        assert!((v - (h0.data()[i] + h1.data()[i]) / 2.0).abs() < 1e-15);
    }
}

#[test]
fn dropped_attention_is_unavailable() {
    let model = ToyModel::new(config(Method::Naive, None)).unwrap();
    let clip = task(4, 4).generate(1, 3).unwrap().sequences.remove(0);
    let mut out = model.resample(&clip).unwrap();
    out.drop_attention();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(export_heatmap(&out, &dir.path().join("x")), Err(Error::Unavailable(_))));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn probe_endpoints_and_determinism() {
    let model = trained(Method::Naive);
    let fractions = [0.0, 0.25, 0.5, 0.75, 1.0];
    let seeds = [1, 2, 3, 4, 5];
    let n = 1000;
    let a = zeroing_probe(&model, &task(4, 4), &fractions, Selection::Random, &seeds, n).unwrap();
    assert!(a.warnings.is_empty(), "{:?}", a.warnings);
    assert_eq!(a.at(0.0).unwrap().retention_mean, 1.0);
    assert!(a.at(0.0).unwrap().accuracy_mean > 0.9);
    let sigma = (0.25 * 0.75 / n as f64).sqrt();
    assert!(a.at(1.0).unwrap().accuracy_mean <= 0.25 + 3.0 * sigma, "{a:?}");
    let b = zeroing_probe(&model, &task(4, 4), &fractions, Selection::Random, &seeds, n).unwrap();
    assert_eq!(a, b);
    let index = redundancy_index(&a.curve()).unwrap();
    assert!((0.0..=1.0).contains(&index));
}

#[test]
fn probe_warns_when_untrained() {
    let model = ToyModel::new(config(Method::Group, None)).unwrap();
    let r = zeroing_probe(&model, &task(4, 4), &[0.0, 0.5], Selection::First, &[1], 50).unwrap();
    assert_eq!(r.warnings.len(), 1);
    assert_eq!(r.points.len(), 2);
    let err = zeroing_probe(&model, &task(4, 4), &[0.5], Selection::First, &[1], 50).unwrap_err();
    assert!(matches!(err, Error::Argument(_)));
}

fn cheap_base(tokens: usize) -> SweepBase {
    let mut model = config(Method::Group, None);
    model.tokens_per_frame = tokens;
    model.heads = 1;
    let mut finetune = TrainConfig::desk(Stage::Finetune, 3, 1);
    finetune.batch_size = 4;
    finetune.eval_samples = 8;
    SweepBase {
        model,
        task: task(4, tokens),
        pretrain: None,
        finetune,
        eval_samples: 16,
        eval_seed: 2,
    }
}

#[test]
fn sweep_marks_image_equivalent_and_skips() {
    let grid = SweepGrid {
        frames: vec![16],
        total_queries: vec![128],
        groups: vec![16, 3, 4],
        queries_per_group: vec![8, 3],
    };
    let rows = run_sweep(&grid, &cheap_base(2)).unwrap();
    // (16,128,16) appears once even though both axes name it.
    assert_eq!(rows.len(), 4);
    let m16 = &rows[0];
    assert_eq!(m16.status, PointStatus::Ok);
    assert!(m16.note.contains("image-equivalent"));
    assert_eq!(m16.queries_per_group, Some(8));
    let m3 = &rows[1];
    assert_eq!((m3.groups, m3.status), (3, PointStatus::Skipped));
    assert!(m3.note.contains("skipped"));
    assert_eq!(rows[2].status, PointStatus::Ok);
    assert!(!rows[2].note.contains("image-equivalent"));
    assert_eq!(rows[3].status, PointStatus::Skipped);
    for r in &rows {
        assert_eq!(r.token_budget, token_budget(Method::Group, r.frames, 2, r.total_queries, 0).queries_out_count);
    }
    let csv = sweep_csv(&rows);
    assert_eq!(csv.lines().next().unwrap(), SWEEP_HEADER);
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn sweep_covers_valid_points_once() {
    let grid = SweepGrid {
        frames: vec![2, 4],
        total_queries: vec![4, 8],
        groups: vec![1, 2, 4],
        queries_per_group: vec![],
    };
    let rows = run_sweep(&grid, &cheap_base(2)).unwrap();
    assert_eq!(rows.len(), 12);
    let mut keys: Vec<_> = rows.iter().map(|r| (r.frames, r.total_queries, r.groups)).collect();
    keys.dedup();
    assert_eq!(keys.len(), 12);
    for r in &rows {
        let valid = r.total_queries % r.groups == 0 && (r.frames * 2) % r.groups == 0;
        assert_eq!(r.status == PointStatus::Ok, valid, "{r:?}");
    }
    assert!(run_sweep(&SweepGrid::default(), &cheap_base(2)).is_err());
}

fn curve(r: &[f64]) -> Vec<(f64, f64)> {
    INDEX_FRACTIONS.iter().copied().zip(r.iter().copied()).collect()
}

proptest! {
    #[test]
    fn index_monotone_under_dominance(
        low in prop::collection::vec(0.0f64..1.0, 5),
        lift in prop::collection::vec(0.0f64..1.0, 5),
    ) {
        let high: Vec<f64> = low.iter().zip(&lift).map(|(a, b)| (a + b).min(1.0)).collect();
        let lo = redundancy_index(&curve(&low)).unwrap();
        let hi = redundancy_index(&curve(&high)).unwrap();
        prop_assert!(hi >= lo);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }
}
