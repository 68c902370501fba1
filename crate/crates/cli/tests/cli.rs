use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tlv_cli::{ExperimentConfig, Manifest, RunStatus, SweepConfig};

fn tlv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlv"))
        .args(args)
        .env_remove("TLV_ARTIFACT_ROOT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config")
}

fn small_config(dir: &Path, edit: impl Fn(&str) -> String) -> PathBuf {
    let text = std::fs::read_to_string(config_dir().join("train_group.toml")).unwrap();
    let text = edit(&text)
        .replace("steps_per_epoch = 500", "steps_per_epoch = 20")
        .replace("steps_per_epoch = 1500", "steps_per_epoch = 20")
        .replace("samples = 1000", "samples = 50");
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn train_small(dir: &Path) -> PathBuf {
    let cfg = small_config(dir, str::to_string);
    let run = dir.join("run");
    let o = tlv(&["train", "--config", p(&cfg), "--out", p(&run)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    run
}

#[test]
fn sample_uniform_and_fps_cap() {
    let dir = tempfile::tempdir().unwrap();
    let v100 = dir.path().join("v100.tlvv");
    assert!(tlv(&["gen-video", p(&v100), "--frames", "100"]).status.success());
    let o = tlv(&["sample", p(&v100), "--uniform", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let want: String = (0..4).map(|i| format!("{}\n", (2 * i + 1) * 100 / 8)).collect();
    assert_eq!(stdout(&o), want);

    let long = dir.path().join("long.tlvv");
    assert!(tlv(&["gen-video", p(&long), "--frames", "7500", "--rate", "25"]).status.success());
    let o = tlv(&["sample", p(&long), "--fps", "1", "--max", "64"]);
    let idx: Vec<usize> = stdout(&o).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(idx.len(), 64);
    assert!(idx.windows(2).all(|w| w[0] < w[1]) && idx[63] < 7500);
}

#[test]
fn sample_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.tlvv");
    assert_eq!(tlv(&["sample", p(&missing), "--uniform", "4"]).status.code(), Some(2));
    let v = dir.path().join("v.tlvv");
    assert!(tlv(&["gen-video", p(&v), "--frames", "10", "--tokens", "2", "--dim", "3"]).status.success());
    let bytes = std::fs::read(&v).unwrap();
    std::fs::write(&v, &bytes[..bytes.len() - 5]).unwrap();
    let o = tlv(&["sample", p(&v), "--uniform", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("format error at byte"));
    assert_eq!(tlv(&["sample", p(&v)]).status.code(), Some(2));
}

#[test]
fn budget_prints_token_counts() {
    let o = tlv(&["budget", "--method", "image", "--frames", "16", "--per-frame", "8"]);
    assert_eq!(stdout(&o), "128\n");
    let o = tlv(&["budget", "--method", "group", "--frames", "8,16,64", "--queries", "128"]);
    assert_eq!(stdout(&o), "128\n128\n128\n");
    let o = tlv(&["budget", "--method", "image", "--frames", "4,8", "--per-frame", "8"]);
    assert_eq!(stdout(&o), "32\n64\n");
    assert_eq!(tlv(&["budget", "--method", "naive", "--frames", "8"]).status.code(), Some(2));
    assert_eq!(tlv(&["budget", "--method", "bogus", "--frames", "8"]).status.code(), Some(2));
}

#[test]
fn train_writes_artifacts_with_monotone_steps() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_small(dir.path());
    for f in ["loss.csv", "summary.json", "checkpoint.tlvr", "manifest.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("stage,step,loss,lr"));
    let steps: Vec<usize> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(steps, (0..40).collect::<Vec<_>>());
    let manifest = Manifest::read(&run.join("manifest.json")).unwrap();
    assert_eq!(manifest.status, RunStatus::Ok);
    assert!(manifest.finished_unix.is_some());
    assert_eq!(manifest.artifacts.len(), 3);
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), str::to_string);
    let run = dir.path().join("naive");
    let o = tlv(&["train", "--config", p(&cfg), "--out", p(&run), "--method", "naive", "--seed", "99", "--steps", "3"]);
    assert!(o.status.success());
    let m = Manifest::read(&run.join("manifest.json")).unwrap();
    let tlv_cli::Invocation::Train { config } = m.invocation else { panic!() };
    assert_eq!(config.model.method.as_str(), "naive");
    assert_eq!(config.model.init_seed, 99);
    assert_eq!(config.finetune.unwrap().steps_per_epoch, 3);
    assert_eq!(m.seed, Some(99));
}

#[test]
fn invalid_group_plan_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), |t| t.replace("frames = 4", "frames = 16"));
    let o = tlv(&["train", "--config", p(&cfg), "--queries", "128", "--groups", "3", "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("128 queries do not divide into 3 groups"));

    let bad = dir.path().join("v2.toml");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("schema_version = 1", "schema_version = 2");
    std::fs::write(&bad, text).unwrap();
    assert_eq!(tlv(&["train", "--config", p(&bad)]).status.code(), Some(3));
    assert_eq!(tlv(&["train", "--config", p(&dir.path().join("none.toml"))]).status.code(), Some(2));
}

#[test]
fn missing_checkpoint_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_small(dir.path());
    std::fs::remove_file(run.join("checkpoint.tlvr")).unwrap();
    let out = dir.path().join("h");
    assert_eq!(tlv(&["heatmap", "--run", p(&run), "--out", p(&out)]).status.code(), Some(4));
    assert_eq!(tlv(&["probe", "--run", p(&run), "--out", p(&out)]).status.code(), Some(4));
    let nowhere = dir.path().join("nowhere");
    assert_eq!(tlv(&["probe", "--run", p(&nowhere)]).status.code(), Some(4));
}

#[test]
fn heatmap_and_probe_on_group_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_small(dir.path());
    let heat = dir.path().join("heat");
    let o = tlv(&["heatmap", "--run", p(&run), "--out", p(&heat)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["attention.csv", "attention.pgm", "attention.annotations.txt", "attention.head0.csv", "manifest.json"] {
        assert!(heat.join(f).is_file(), "{f}");
    }
    let ann = std::fs::read_to_string(heat.join("attention.annotations.txt")).unwrap();
    assert_eq!(ann.lines().filter(|l| l.starts_with("block ")).count(), 4);

    let probe = dir.path().join("probe");
    let o = tlv(&["probe", "--run", p(&run), "--out", p(&probe), "--samples", "40", "--seeds", "1,2"]);
    assert!(o.status.success());
    let csv = stdout(&o);
    assert!(csv.lines().nth(1).unwrap().starts_with("0,0,"));
    assert_eq!(csv.lines().count(), 6);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(probe.join("probe.json")).unwrap()).unwrap();
    assert!(json["redundancy_index"].is_number());
}

#[test]
fn artifact_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), str::to_string);
    let root = dir.path().join("root");
    let o = Command::new(env!("CARGO_BIN_EXE_tlv"))
        .args(["train", "--config", p(&cfg), "--steps", "2"])
        .env("TLV_ARTIFACT_ROOT", &root)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(root.join("train-group-seed7").join("checkpoint.tlvr").is_file());
}

#[test]
fn sweep_flags_image_equivalent_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_dir().join("sweep_groups.toml"))
        .unwrap()
        .replace("steps_per_epoch = 300", "steps_per_epoch = 2")
        .replace("samples = 500", "samples = 8")
        .replace("groups = [1, 2, 3, 4, 8, 16]", "groups = [16, 3]");
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("sweep");
    let o = tlv(&["sweep", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("16,128,16,8,ok,") && rows[1].ends_with("image-equivalent"));
    assert!(rows[2].starts_with("16,128,3,,skipped,"));
    let parsed = SweepConfig::load(&cfg).unwrap();
    assert_eq!(parsed.grid.groups, vec![16, 3]);
}

#[test]
fn replay_reproduces_train_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_small(dir.path());
    let again = dir.path().join("again");
    let o = tlv(&["replay", p(&run.join("manifest.json")), "--out", p(&again)]);
    assert!(o.status.success());
    for f in ["checkpoint.tlvr", "loss.csv", "summary.json"] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn curate_reports_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.tsv");
    std::fs::write(&corpus, "a\t10\tA dog runs on grass\nb\t90\tA cat sleeps\nc\t5\tShot from a LOW CAMERA ANGLE\n").unwrap();
    let o = tlv(&["curate", p(&corpus)]);
    assert_eq!(stdout(&o), "a\tkept\nb\trejected\tduration\nc\trejected\tcamera-angle\n");
    std::fs::write(&corpus, "only two\tfields\n").unwrap();
    assert_eq!(tlv(&["curate", p(&corpus)]).status.code(), Some(2));
}

#[test]
fn bundled_configs_parse() {
    let cfg = ExperimentConfig::load(&config_dir().join("train_group.toml")).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.total_steps(), 2000);
    SweepConfig::load(&config_dir().join("sweep_groups.toml")).unwrap().base().unwrap();
}
