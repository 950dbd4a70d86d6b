//! End-to-end checks of the executable: exit-code taxonomy, byte-level
//! reproducibility of seeded subcommands, and the config round-trip.

use std::path::Path;
use std::process::Command;

fn vpp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vpp"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn no_arguments_prints_usage_and_exits_one() {
    let out = vpp().output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"), "{text}");
}

#[test]
fn unknown_flag_exits_one() {
    let out = vpp().args(["render-axis", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = vpp().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn render_axis_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let st = vpp()
            .args([
                "render-axis",
                "--variant",
                "edge",
                "--unit",
                "0.1",
                "--font",
                "10",
                "--out",
            ])
            .arg(out)
            .output()
            .unwrap();
        assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    }
    assert_eq!(read(&a.join("axis.png")), read(&b.join("axis.png")));
}

#[test]
fn render_axis_reports_label_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = vpp()
        .args(["render-axis", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("11 x-labels"), "{text}");
    assert!(text.contains("11 y-labels"), "{text}");
}

#[test]
fn overcrowded_axis_spec_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = vpp()
        .args([
            "render-axis",
            "--unit",
            "0.05",
            "--canvas",
            "128",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlap"));
}

#[test]
fn config_file_round_trip_reproduces_render() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let st = vpp()
        .args(["render-axis", "--unit", "0.2", "--font", "8", "--out"])
        .arg(&first)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    // Re-run purely from the dumped effective config.
    let second = dir.path().join("second");
    let st = vpp()
        .args(["render-axis", "--config"])
        .arg(first.join("effective.cfg"))
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert_eq!(read(&first.join("axis.png")), read(&second.join("axis.png")));
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "volume = 11\n").unwrap();
    let out = vpp()
        .args(["render-axis", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("volume"));
}

#[test]
fn forge_fixtures_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../vpp-core/fixtures");
    let out = vpp()
        .args(["forge", "--kind", "cb-grd", "--input"])
        .arg(root.join("cb_grd.jsonl"))
        .arg("--dims")
        .arg(root.join("dims.jsonl"))
        .args(["--instruction", "sample", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let unified = std::fs::read_to_string(dir.path().join("unified.jsonl")).unwrap();
    assert_eq!(unified.lines().count(), 2);
    assert!(unified.contains("black pants"));
    assert!(!unified.contains('<'), "special tokens must be gone");
    let validation = std::fs::read_to_string(dir.path().join("validation.txt")).unwrap();
    assert!(validation.contains("ok"));
}

#[test]
fn forge_missing_dims_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../vpp-core/fixtures");
    let out = vpp()
        .args(["forge", "--kind", "cb-grd", "--input"])
        .arg(root.join("cb_grd.jsonl"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("record 1"));
}

#[test]
fn synth_corpus_reproducible_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let st = vpp()
            .args(["synth", "--n", "6", "--seed", "9", "--canvas", "32", "--grid", "8", "--max-side", "0.55", "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    }
    assert_eq!(read(&a.join("index.jsonl")), read(&b.join("index.jsonl")));
    assert_eq!(
        read(&a.join("images/000003.png")),
        read(&b.join("images/000003.png"))
    );
}

#[test]
fn train_then_eval_small_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let run = dir.path().join("run");
    let st = vpp()
        .args(["synth", "--n", "16", "--seed", "3", "--canvas", "16", "--grid", "4", "--min-side", "0.25", "--max-side", "0.5", "--out"])
        .arg(&corpus)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let st = vpp()
        .args([
            "train",
            "--epochs",
            "1",
            "--batch",
            "4",
            "--image-side",
            "16",
            "--dim",
            "16",
            "--encoder-layers",
            "1",
            "--decoder-layers",
            "1",
            "--heads",
            "2",
            "--queries",
            "2",
            "--seed",
            "5",
            "--corpus",
        ])
        .arg(&corpus)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(run.join("checkpoint.json").exists());
    let loss_csv = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert!(loss_csv.starts_with("epoch,loss"));
    assert_eq!(loss_csv.lines().count(), 2);

    let st = vpp()
        .args(["eval", "--split", "test", "--checkpoint"])
        .arg(run.join("checkpoint.json"))
        .arg("--corpus")
        .arg(&corpus)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let text = String::from_utf8_lossy(&st.stdout);
    assert!(text.contains("acc"), "{text}");
    assert!(run.join("eval.md").exists());
}

#[test]
fn missing_corpus_exits_runtime_or_data() {
    let out = vpp()
        .args(["train", "--corpus", "/nonexistent/corpus", "--out", "/tmp/x-vpp-test"])
        .output()
        .unwrap();
    let code = out.status.code().unwrap();
    assert!(code == 2 || code == 3, "got {code}");
}
