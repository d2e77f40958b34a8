use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dyca(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyca"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

const SCENARIO: &str = r#"
version = 1
name = "short"
duration_seconds = 40.0
sample_rate_hz = 256.0
channels = 12
snr_db = 20.0
seed = 5
initial_jitter = 0.01
bursts = [{ start_seconds = 12.0, duration_seconds = 15.0 }]

[shilnikov]
mu = 1.0
alpha = 0.8
beta = 5.0
gamma = 9.0
initial_state = [0.05, 0.0, 0.0]
step_seconds = 0.00048828125
time_scale = 30.0

[background]
sources = 4
rms_ratio = 1.0
"#;

fn synth_short(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let sc = dir.join(format!("{name}.toml"));
    std::fs::write(&sc, SCENARIO.replace("seed = 5", &format!("seed = {seed}"))).unwrap();
    let csv = dir.join(format!("{name}.csv"));
    let o = dyca(
        dir,
        &["synth", "--scenario", sc.to_str().unwrap(), "-o", csv.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    csv
}

fn data_rows(text: &str) -> usize {
    text.lines().count() - 1
}

fn window_count(samples: usize, window: usize, step: usize) -> usize {
    (samples - window) / step + 1
}

#[test]
fn synth_writes_recording_and_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_short(dir.path(), "rec", 5);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("time,ch0,ch1,"));
    assert_eq!(data_rows(&text), 40 * 256);
    let ann: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json")).unwrap()).unwrap();
    assert_eq!(
        ann,
        serde_json::json!([{ "start_s": 12.0, "end_s": 27.0, "label": "seizure" }])
    );
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(synth_short(dir.path(), "a", 9)).unwrap();
    let b = std::fs::read(synth_short(dir.path(), "b", 9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn detect_emits_one_row_per_window() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_short(dir.path(), "rec", 5);
    let o = dyca(
        dir.path(),
        &[
            "detect",
            "--window-s",
            "3",
            "--overlap",
            "0.9",
            "--threshold",
            "0.9",
            "--k",
            "2",
            "rec.csv",
            "--annotations",
            "rec.json",
            "--metrics",
            "m.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("window_index,start_s,lambda1,lambda2,lambda3,decision,label"));
    assert_eq!(data_rows(&out), window_count(40 * 256, 768, 77));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert!(m["tp"].as_u64().unwrap() > 0);
    assert!(csv.exists());
}

#[test]
fn config_precedence_flag_over_file_over_default() {
    let dir = tempfile::tempdir().unwrap();
    synth_short(dir.path(), "rec", 5);
    let rows = |args: &[&str]| {
        let mut all = args.to_vec();
        all.push("rec.csv");
        let o = dyca(dir.path(), &all);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        data_rows(&stdout(&o))
    };
    std::fs::write(dir.path().join("run.toml"), "window_s = 2.0\noverlap = 0.5\n").unwrap();

    // default: 3 s windows, 90 % overlap
    assert_eq!(rows(&["detect"]), window_count(10240, 768, 77));
    // file: 2 s windows, 50 % overlap
    assert_eq!(rows(&["--config", "run.toml", "detect"]), window_count(10240, 512, 256));
    // flag beats file for window_s, file still supplies overlap
    assert_eq!(
        rows(&["--config", "run.toml", "detect", "--window-s", "1"]),
        window_count(10240, 256, 128)
    );
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    synth_short(dir.path(), "rec", 5);
    std::fs::write(dir.path().join("bad.toml"), "threshold = 0.8\nwindow_seconds = 2\n").unwrap();
    let o = dyca(dir.path(), &["--config", "bad.toml", "detect", "rec.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let e = error_json(&o);
    assert_eq!(e["error"]["kind"], "input");
    assert!(e["error"]["message"].as_str().unwrap().contains("window_seconds"));
}

#[test]
fn sweep_has_one_row_per_threshold() {
    let dir = tempfile::tempdir().unwrap();
    synth_short(dir.path(), "a", 1);
    synth_short(dir.path(), "b", 2);
    let o = dyca(
        dir.path(),
        &["sweep", "--k", "2", "--grid", "0.5:0.995:0.005", "a.csv", "b.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(data_rows(&out), 100);
    let header = out.lines().next().unwrap();
    assert!(header.starts_with("threshold,spc_mean,spc_std,spc_n"));
    assert!(header.contains("d2_fnr"));
}

fn oscillator_csv(path: &Path) {
    let mixing = [[0.3, -1.1], [0.8, 0.4], [-0.5, 0.9], [1.2, 0.1], [0.2, -0.7]];
    let fs = 1000.0;
    let mut text = String::from("time,a,b,c,d,e\n");
    for i in 0..10_000 {
        let t = i as f64 / fs;
        let (s, c) = (
            (2.0 * std::f64::consts::PI * t).sin(),
            (2.0 * std::f64::consts::PI * t).cos(),
        );
        write!(text, "{:.16e}", t).unwrap();
        for m in &mixing {
            write!(text, ",{:.16e}", m[0] * s + m[1] * c).unwrap();
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn fit_on_harmonic_oscillator() {
    let dir = tempfile::tempdir().unwrap();
    oscillator_csv(&dir.path().join("osc.csv"));
    let o = dyca(dir.path(), &["fit", "osc.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(model["eigenvalues"][0].as_f64().unwrap() >= 1.0 - 1e-6);
    assert_eq!(model["m"], 2);
    assert_eq!(model["channels"], serde_json::json!(["a", "b", "c", "d", "e"]));
}

#[test]
fn project_writes_amplitudes() {
    let dir = tempfile::tempdir().unwrap();
    synth_short(dir.path(), "rec", 5);
    for (method, header) in [
        ("dyca", "time,u1,u2,v1"),
        ("pca", "time,pc1,pc2,pc3"),
        ("ica", "time,ic1,ic2,ic3"),
    ] {
        let o = dyca(
            dir.path(),
            &[
                "project",
                "rec.csv",
                "--method",
                method,
                "--start-s",
                "12",
                "--end-s",
                "27",
            ],
        );
        assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        let out = stdout(&o);
        assert_eq!(out.lines().next().unwrap(), header);
        assert_eq!(data_rows(&out), 15 * 256);
    }
}

#[test]
fn baselines_compare_against_sources() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("s.toml");
    std::fs::write(&sc, SCENARIO).unwrap();
    let o = dyca(
        dir.path(),
        &["synth", "--scenario", "s.toml", "-o", "rec.csv", "--sources", "src.csv"],
    );
    assert!(o.status.success());
    let o = dyca(
        dir.path(),
        &[
            "baselines",
            "rec.csv",
            "--annotations",
            "rec.json",
            "--sources",
            "src.csv",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let dy = r["angles_deg"]["dyca"].as_f64().unwrap();
    let pca = r["angles_deg"]["pca"].as_f64().unwrap();
    assert!(dy < pca, "dyca {dy} pca {pca}");
}

#[test]
fn eigplot_lists_requested_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    synth_short(dir.path(), "rec", 5);
    let o = dyca(dir.path(), &["eigplot", "rec.csv", "--count", "5"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(
        out.lines().next().unwrap(),
        "window_index,start_s,center_s,lambda1,lambda2,lambda3,lambda4,lambda5"
    );
    assert_eq!(data_rows(&out), window_count(10240, 768, 77));
}

#[test]
fn missing_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = dyca(dir.path(), &["detect", "missing.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_json(&o)["error"]["input"], "missing.csv");
}

#[test]
fn malformed_csv_names_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "time,a,b\n0,1,2\n0.01,1,oops\n0.02,1,2\n").unwrap();
    let o = dyca(dir.path(), &["fit", "bad.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = error_json(&o)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("bad.csv:3:3"), "{msg}");
}

#[test]
fn numerical_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("time,a,b\n");
    for i in 0..50 {
        writeln!(text, "{},1,2", i as f64 * 0.01).unwrap();
    }
    std::fs::write(dir.path().join("flat.csv"), text).unwrap();
    let o = dyca(dir.path(), &["fit", "flat.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["kind"], "numerical");
}

#[test]
fn bad_flag_value_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dyca(dir.path(), &["detect", "x.csv", "--threshold", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = dyca(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}
