use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dyca::baselines::{baseline_project, best_ica, ica_fit, pca_fit, trajectory_angle_degrees, BaselineModel};
use dyca::detector::{detect as run_detect, sweep_results, window_eigenvalues, WindowResult};
use dyca::io::{self, ModelDocument};
use dyca::{dyca_fit, project as dyca_project, Event, Scenario, Signal};
use ndarray::{s, Array2};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

fn lib<E: Into<dyca::Error>>(path: Option<&Path>) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::from_lib(e, path)
}

fn write_err(path: Option<&Path>) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError {
        kind: crate::ErrorKind::Input,
        message: e.to_string(),
        input: Some(path.map_or_else(|| "stdout".to_string(), |p| p.display().to_string())),
    }
}

fn read_signal(path: &Path) -> Result<Signal, CliError> {
    io::read_recording(path).map_err(lib(Some(path)))
}

fn read_events(path: &Path) -> Result<Vec<Event>, CliError> {
    io::read_annotations(path).map_err(lib(Some(path)))
}

fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut out = io::output(path).map_err(lib(path))?;
    match f(&mut out).and_then(|_| out.flush()) {
        // A reader such as `head` closed the pipe early.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(write_err(path)),
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    with_output(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario document (TOML, or JSON by extension); defaults to the built-in scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Generate the six-recording evaluation suite into the `--output` directory.
    #[arg(long)]
    suite: bool,
    /// Recording CSV (or directory with `--suite`).
    #[arg(long, short)]
    output: PathBuf,
    /// Annotation JSON [default: output with .json extension]
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Also write the ground-truth source trajectories (zero outside bursts).
    #[arg(long)]
    sources: Option<PathBuf>,
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(e.to_string(), path))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("scenario: {e}"), path))
    } else {
        toml::from_str(&text).map_err(|e| CliError::input(format!("scenario: {}", e.message()), path))
    }
}

fn write_scenario_outputs(
    scenario: &Scenario,
    csv: &Path,
    annotations: &Path,
    sources: Option<&Path>,
) -> Result<(), CliError> {
    let (rec, truth) = scenario.build_with_sources().map_err(lib(None))?;
    io::write_recording(csv, &rec.signal).map_err(lib(Some(csv)))?;
    io::write_annotations(annotations, &rec.events).map_err(lib(Some(annotations)))?;
    if let Some(path) = sources {
        let mut full = Array2::zeros((3, rec.signal.n_samples()));
        for b in &truth {
            let len = b.sources.n_samples();
            full.slice_mut(s![.., b.first_sample..b.first_sample + len])
                .assign(&b.sources.data());
        }
        let names = ["x1", "x2", "x3"].map(String::from).to_vec();
        let sig = Signal::new(full, rec.signal.sample_rate_hz())
            .and_then(|s| s.with_channel_names(names))
            .map_err(lib(None))?;
        io::write_recording(path, &sig).map_err(lib(Some(path)))?;
    }
    Ok(())
}

pub fn synth(a: &SynthArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let base = match &a.scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::default(),
    };
    if a.suite {
        std::fs::create_dir_all(&a.output).map_err(|e| CliError::input(e.to_string(), &a.output))?;
        let seed = cfg.seed.unwrap_or(0);
        for sc in Scenario::evaluation_suite(seed) {
            let sc = RunConfig {
                seed: None,
                duration_s: None,
                ..cfg.clone()
            }
            .apply_to_scenario(sc);
            let stem = a.output.join(&sc.name);
            write_scenario_outputs(&sc, &stem.with_extension("csv"), &stem.with_extension("json"), None)?;
        }
        return Ok(());
    }
    let sc = cfg.apply_to_scenario(base);
    let annotations = a.annotations.clone().unwrap_or_else(|| a.output.with_extension("json"));
    write_scenario_outputs(&sc, &a.output, &annotations, a.sources.as_deref())
}

#[derive(Debug, Args)]
pub struct FitArgs {
    recording: PathBuf,
    #[arg(long)]
    start_s: Option<f64>,
    #[arg(long)]
    end_s: Option<f64>,
    /// Model JSON [default: stdout]
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn select_range(sig: Signal, start: Option<f64>, end: Option<f64>, path: &Path) -> Result<(Signal, f64), CliError> {
    if start.is_none() && end.is_none() {
        return Ok((sig, 0.0));
    }
    let a = start.unwrap_or(0.0);
    let b = end.unwrap_or_else(|| sig.duration_seconds());
    let part = sig.time_range(a, b).map_err(lib(Some(path)))?;
    Ok((part, a))
}

pub fn fit(a: &FitArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let sig = read_signal(&a.recording)?;
    let (sig, start) = select_range(sig, a.start_s, a.end_s, &a.recording)?;
    let model = dyca_fit(&sig, &cfg.dyca_options()?).map_err(lib(Some(&a.recording)))?;
    write_json(a.output.as_deref(), &ModelDocument::new(&model, &sig, start))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Dyca,
    Pca,
    Ica,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    recording: PathBuf,
    #[arg(long, value_enum, default_value = "dyca")]
    method: Method,
    /// With ICA, rank components by their variance inside these events.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    start_s: Option<f64>,
    #[arg(long)]
    end_s: Option<f64>,
    /// Amplitude CSV [default: stdout]
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Amplitudes and channel names of a `k`-component projection.
fn projection(
    sig: &Signal,
    method: Method,
    k: usize,
    events: Option<&[Event]>,
    cfg: &RunConfig,
    path: &Path,
) -> Result<(Signal, Vec<String>), CliError> {
    let names = |prefix: &str| (1..=k).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
    match method {
        Method::Dyca => {
            let model = dyca_fit(sig, &cfg.dyca_options()?).map_err(lib(Some(path)))?;
            let (basis, names) = if k == 3 {
                let b = model.trajectory_basis().map_err(lib(Some(path)))?;
                (b, vec!["u1".into(), "u2".into(), "v1".into()])
            } else {
                if k == 0 || k > model.basis.ncols() {
                    return Err(CliError::input_key(
                        format!("DyCA basis has {} columns, asked for {k}", model.basis.ncols()),
                        "components",
                    ));
                }
                (model.basis.slice(s![.., ..k]).to_owned(), names("b"))
            };
            Ok((dyca_project(sig, &basis).map_err(lib(Some(path)))?, names))
        }
        Method::Pca => {
            let m: BaselineModel = pca_fit(sig, k).map_err(lib(Some(path)))?.into();
            Ok((baseline_project(sig, &m, k).map_err(lib(Some(path)))?, names("pc")))
        }
        Method::Ica => {
            let opts = cfg.ica_options();
            let m: BaselineModel = match events {
                Some(ev) => best_ica(sig, ev, k, &opts),
                None => ica_fit(sig, k, &opts),
            }
            .map_err(lib(Some(path)))?
            .into();
            Ok((baseline_project(sig, &m, k).map_err(lib(Some(path)))?, names("ic")))
        }
    }
}

pub fn project(a: &ProjectArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let sig = read_signal(&a.recording)?;
    let events = a.annotations.as_deref().map(read_events).transpose()?;
    let (sig, start) = select_range(sig, a.start_s, a.end_s, &a.recording)?;
    let k = cfg.components.unwrap_or(3);
    let (x, names) = projection(&sig, a.method, k, events.as_deref(), cfg, &a.recording)?;
    with_output(a.output.as_deref(), |w| io::write_amplitudes_to(w, &x, &names, start))
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    recording: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Window CSV [default: stdout]
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write SPC/FDR/FNR as JSON (requires annotations).
    #[arg(long)]
    metrics: Option<PathBuf>,
}

pub fn detect(a: &DetectArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let det = cfg.detector_config()?;
    let sig = read_signal(&a.recording)?;
    let events = a.annotations.as_deref().map(read_events).transpose()?;
    let results = run_detect(&sig, events.as_deref(), &det).map_err(lib(Some(&a.recording)))?;
    with_output(a.output.as_deref(), |w| io::write_windows_to(w, &results))?;
    if let Some(path) = &a.metrics {
        let m = dyca::compute_metrics(&results).map_err(|e| CliError::input_key(e.to_string(), "annotations"))?;
        write_json(Some(path), &m)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Recording CSVs; annotations default to the sibling `.json` files.
    #[arg(required = true)]
    recordings: Vec<PathBuf>,
    /// Annotation files, one per recording, in the same order.
    #[arg(long, num_args = 1..)]
    annotations: Vec<PathBuf>,
    /// Sweep CSV [default: stdout]
    #[arg(long, short)]
    output: Option<PathBuf>,
}

pub fn sweep(a: &SweepArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let det = cfg.detector_config()?;
    let grid = cfg.grid()?;
    if !a.annotations.is_empty() && a.annotations.len() != a.recordings.len() {
        return Err(CliError::input_key(
            format!(
                "{} recordings but {} annotation files",
                a.recordings.len(),
                a.annotations.len()
            ),
            "annotations",
        ));
    }
    let mut results: Vec<Vec<WindowResult>> = Vec::with_capacity(a.recordings.len());
    for (i, rec) in a.recordings.iter().enumerate() {
        let ann = a
            .annotations
            .get(i)
            .cloned()
            .unwrap_or_else(|| rec.with_extension("json"));
        let sig = read_signal(rec)?;
        let events = read_events(&ann)?;
        results.push(run_detect(&sig, Some(&events), &det).map_err(lib(Some(rec)))?);
    }
    let sweep = sweep_results(&results, &det, &grid).map_err(lib(None))?;
    with_output(a.output.as_deref(), |w| io::write_sweep_to(w, &sweep))
}

#[derive(Debug, Args)]
pub struct BaselinesArgs {
    recording: PathBuf,
    /// Events; ICA components are ranked by their variance inside them and,
    /// without an explicit range, the longest event is analysed.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Ground-truth sources (as written by `synth --sources`) for angle comparison.
    #[arg(long)]
    sources: Option<PathBuf>,
    #[arg(long)]
    start_s: Option<f64>,
    #[arg(long)]
    end_s: Option<f64>,
    /// Report JSON [default: stdout]
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct BaselineReport {
    start_s: f64,
    end_s: f64,
    pca: dyca::PcaModel,
    ica: dyca::IcaModel,
    /// Largest principal angle (degrees) between each 3-component trajectory
    /// and the ground-truth sources.
    angles_deg: Option<Angles>,
}

#[derive(Serialize)]
struct Angles {
    dyca: f64,
    pca: f64,
    ica: f64,
}

pub fn baselines(a: &BaselinesArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let full = read_signal(&a.recording)?;
    let events = a.annotations.as_deref().map(read_events).transpose()?;
    let (mut start, mut end) = (a.start_s, a.end_s);
    if start.is_none() && end.is_none() {
        if let Some(longest) = events
            .as_ref()
            .and_then(|ev| ev.iter().max_by(|x, y| x.duration().total_cmp(&y.duration())))
        {
            start = Some(longest.start_s);
            end = Some(longest.end_s);
        }
    }
    let (sig, t0) = select_range(full.clone(), start, end, &a.recording)?;
    let k = cfg.components.unwrap_or(3);
    let opts = cfg.ica_options();
    let pca = pca_fit(&sig, k).map_err(lib(Some(&a.recording)))?;
    let ica = match &events {
        Some(ev) => best_ica(&full, ev, k, &opts),
        None => ica_fit(&sig, k, &opts),
    }
    .map_err(lib(Some(&a.recording)))?;

    let angles_deg = match &a.sources {
        None => None,
        Some(path) => {
            let src = read_signal(path)?;
            if src.n_samples() != full.n_samples() {
                return Err(CliError::input("sources and recording differ in length", path));
            }
            let (src, _) = select_range(src, start, end, path)?;
            let angle = |x: &Signal| trajectory_angle_degrees(x.data(), src.data()).map_err(lib(Some(path)));
            let (xd, _) = projection(&sig, Method::Dyca, 3, None, cfg, &a.recording)?;
            let xp = baseline_project(&sig, &pca.clone().into(), k).map_err(lib(Some(&a.recording)))?;
            let xi = baseline_project(&sig, &ica.clone().into(), k).map_err(lib(Some(&a.recording)))?;
            Some(Angles {
                dyca: angle(&xd)?,
                pca: angle(&xp)?,
                ica: angle(&xi)?,
            })
        }
    };
    let report = BaselineReport {
        start_s: t0,
        end_s: t0 + sig.duration_seconds(),
        pca,
        ica,
        angles_deg,
    };
    write_json(a.output.as_deref(), &report)
}

#[derive(Debug, Args)]
pub struct EigplotArgs {
    recording: PathBuf,
    /// Number of eigenvalues per window [default: all]
    #[arg(long)]
    count: Option<usize>,
    /// CSV [default: stdout]
    #[arg(long, short)]
    output: Option<PathBuf>,
}

pub fn eigplot(a: &EigplotArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let det = cfg.detector_config()?;
    let sig = read_signal(&a.recording)?;
    let count = a.count.unwrap_or(sig.n_channels()).min(sig.n_channels());
    let fs = sig.sample_rate_hz();
    let rows = window_eigenvalues(&sig, &det.window, &det.dyca, count).map_err(lib(Some(&a.recording)))?;
    let mut header = vec!["window_index".to_string(), "start_s".into(), "center_s".into()];
    header.extend((1..=count).map(|i| format!("lambda{i}")));
    with_output(a.output.as_deref(), |w| {
        writeln!(w, "{}", header.join(","))?;
        for (view, eig) in &rows {
            let mut f = vec![
                view.index.to_string(),
                io::fmt_f64(view.start_seconds(fs)),
                io::fmt_f64((view.start_seconds(fs) + view.end_seconds(fs)) / 2.0),
            ];
            match eig {
                Ok(v) => f.extend(v.iter().map(|&l| io::fmt_f64(l))),
                Err(_) => f.extend((0..count).map(|_| io::NA.to_string())),
            }
            writeln!(w, "{}", f.join(","))?;
        }
        Ok(())
    })
}
