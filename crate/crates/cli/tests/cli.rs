use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo")
}

fn signaffect(args: &[&str], out: &Path) -> Output {
    let conf = demo_dir().join("demo.conf");
    Command::new(env!("CARGO_BIN_EXE_signaffect"))
        .args(args)
        .arg("--config")
        .arg(&conf)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stats_for_one_label_writes_table_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let o = signaffect(&["stats", "--label", "confusion", "--top-k", "3"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(tmp.path().join("ranking_empath-like_confusion.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("feature,probability,support"));
    assert_eq!(lines.next(), Some("head pos: tilt side=left,1.000,10"));
    assert_eq!(lines.count(), 2);
    assert!(!tmp.path().join("ranking_liwc-like_sad.csv").exists());
}

#[test]
fn unknown_label_warns_but_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let o = signaffect(&["stats", "--label", "horror"], tmp.path());
    assert!(o.status.success());
    assert!(stderr(&o).contains("not among the retained labels"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(signaffect(&["bogus"], tmp.path()).status.code(), Some(1));
    assert_eq!(
        signaffect(&["ingest", "--group-folds-by", "video"], tmp.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        signaffect(&["ingest", "--fer-threshold", "1.5"], tmp.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        signaffect(&["ingest", "--set", "colour=red"], tmp.path()).status.code(),
        Some(1)
    );
}

#[test]
fn data_errors_exit_2_and_leave_no_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(
        &bad,
        "video_id,tier,value,start_frame,end_frame\nv,eye brows,raised,9,3\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = signaffect(&["ingest", "--set", &format!("spans={}", bad.display())], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("inverted span at record 1"), "{}", stderr(&o));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);

    let o = signaffect(&["ingest", "--fer", "/nonexistent/fer.jsonl"], &out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn too_high_threshold_is_a_data_error_for_training() {
    let tmp = tempfile::tempdir().unwrap();
    let o = signaffect(&["train", "--min-frames", "100"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("min_frames 100"), "{}", stderr(&o));
}

#[test]
fn fer_features_reach_the_frame_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = signaffect(&["ingest"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let frames = fs::read_to_string(tmp.path().join("frames.jsonl")).unwrap();
    let happy = frames
        .lines()
        .filter(|l| l.contains(r#"["fer","emotion","happy"]"#))
        .count();
    let surprise = frames
        .lines()
        .filter(|l| l.contains(r#"["fer","emotion","surprise"]"#))
        .count();
    assert_eq!((happy, surprise), (5, 5));
}
