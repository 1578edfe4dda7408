//! Command-line experiments.
//!
//! Exit codes: 0 when the verification passes, 2 when it fails, 1 for usage,
//! configuration and runtime errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::convexity::{
    self, convex_hull, even_index_audit, level_connectivity_scan, momentum_image_sample, verify_hull_equals_fixed_images,
    LevelClass, Tolerance,
};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::flow::{self, FlowStatus};
use crate::loops::{loop_momentum_experiment, LoopExperimentConfig};
use crate::models::{ManifoldModel, ModelKind, ModelSpec, ParamValue};
use crate::report::{ccw_order, json_f64, Report, ScatterPlot, Verdict};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

const DEFAULT_OUT: &str = "toruslab-out";
const DEFAULT_HULL_TOL: f64 = 2e-2;
const DEFAULT_PAIR_TRIALS: usize = 1000;
const DEFAULT_LEVEL_SAMPLES: usize = 400;
const DEFAULT_FLOW_TIME: f64 = 5.0;
const DEFAULT_XI_DRAWS: usize = 20;
const XI_REDRAWS: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "toruslab", version, about = "Momentum maps, gradient flows and convexity checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare the sampled momentum image with the hull of fixed-point images.
    VerifyConvexity(Flags),
    /// Count connected components of momentum levels.
    LevelConnectivity(Flags),
    /// Integrate the descending gradient flow of a momentum component.
    TraceFlow(Flags),
    /// Momentum image of the truncated based loop group.
    Loopgroup(Flags),
    /// Index and coindex of momentum components at fixed points.
    EvenIndex(Flags),
}

impl Command {
    fn parts(&self) -> (&'static str, &Flags) {
        match self {
            Command::VerifyConvexity(f) => ("verify-convexity", f),
            Command::LevelConnectivity(f) => ("level-connectivity", f),
            Command::TraceFlow(f) => ("trace-flow", f),
            Command::Loopgroup(f) => ("loopgroup", f),
            Command::EvenIndex(f) => ("even-index", f),
        }
    }
}

#[derive(Debug, clap::Args)]
struct Flags {
    /// JSON experiment configuration; flags given alongside override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Model parameter `key=value` (repeatable).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Level values separated by `;`, components by `,` (e.g. `-1;0;0.5`).
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: bool,
    /// Use the flow with unit descent speed.
    #[arg(long)]
    normalized: bool,
    /// Start point of the flow, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
    /// Momentum direction ξ, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<String>,
    /// Flow time.
    #[arg(long)]
    time: Option<f64>,
    /// Flow step size.
    #[arg(long)]
    step: Option<f64>,
}

/// Everything an experiment depends on. Stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub grid: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub plot: bool,
    #[serde(default)]
    pub normalized: bool,
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    #[serde(default)]
    pub xi: Option<Vec<f64>>,
    #[serde(default)]
    pub time: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
}

fn default_out() -> PathBuf {
    PathBuf::from(DEFAULT_OUT)
}

pub const COMMANDS: [&str; 5] = ["verify-convexity", "level-connectivity", "trace-flow", "loopgroup", "even-index"];

impl ExperimentConfig {
    pub fn new(command: &str, model: ModelSpec) -> Self {
        Self {
            command: command.to_string(),
            model,
            seed: 0,
            samples: None,
            tolerance: None,
            grid: None,
            out: default_out(),
            plot: false,
            normalized: false,
            start: None,
            xi: None,
            time: None,
            step: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !COMMANDS.contains(&cfg.command.as_str()) {
            return Err(Error::Config(format!("unknown command {:?}", cfg.command)));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn parse_list(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number {s:?} in {what}"))))
        .collect()
}

fn parse_grid(raw: &str) -> Result<Vec<Vec<f64>>> {
    raw.split(';').filter(|s| !s.trim().is_empty()).map(|s| parse_list(s, "--grid")).collect()
}

fn merge(command: &str, flags: &Flags) -> Result<ExperimentConfig> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.command != command {
                return Err(Error::Config(format!("config is for {:?}, not {command:?}", cfg.command)));
            }
            cfg
        }
        None => {
            let default_model = if command == "loopgroup" { "loop-truncation" } else { "sphere" };
            ExperimentConfig::new(command, ModelSpec::new(default_model))
        }
    };
    if let Some(m) = &flags.model {
        if *m != cfg.model.name {
            cfg.model = ModelSpec::new(m);
        }
    }
    for kv in &flags.params {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--param expects key=value, got {kv:?}")))?;
        cfg.model.params.insert(k.trim().to_string(), ParamValue::parse(v));
    }
    cfg.seed = flags.seed.unwrap_or(cfg.seed);
    cfg.samples = flags.samples.or(cfg.samples);
    cfg.tolerance = flags.tol.or(cfg.tolerance);
    if let Some(g) = &flags.grid {
        cfg.grid = Some(parse_grid(g)?);
    }
    if let Some(o) = &flags.out {
        cfg.out = o.clone();
    }
    cfg.plot |= flags.plot;
    cfg.normalized |= flags.normalized;
    if let Some(s) = &flags.start {
        cfg.start = Some(parse_list(s, "--start")?);
    }
    if let Some(x) = &flags.xi {
        cfg.xi = Some(parse_list(x, "--xi")?);
    }
    cfg.time = flags.time.or(cfg.time);
    cfg.step = flags.step.or(cfg.step);
    Ok(cfg)
}

/// Files produced by a command, written after the computation finishes.
struct Outcome {
    report: Report,
    files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(report: Report) -> Self {
        Self { report, files: vec![] }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.report.artifacts.push(name.to_string());
        self.files.push((name.to_string(), bytes));
    }

    fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        self.report.write(dir)
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let mut text = e.render().to_string();
            if e.use_stderr() && !text.contains("Usage:") {
                text = format!("{text}\n{}\n", Cli::command().render_usage());
            }
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let (command, flags) = cli.command.parts();
    let cfg = match merge(command, flags) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    match execute(&cfg) {
        Ok(outcome) => {
            if let Err(e) = outcome.write(&cfg.out) {
                let _ = writeln!(err, "error: writing {}: {e}", cfg.out.display());
                return EXIT_USAGE;
            }
            for w in &outcome.report.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            let verdict = outcome.report.verdict;
            let _ = writeln!(
                out,
                "{} {}: {} ({})",
                cfg.command,
                cfg.model.name,
                if verdict == Verdict::Pass { "PASS" } else { "FAIL" },
                cfg.out.join(crate::report::REPORT_FILE).display()
            );
            if verdict == Verdict::Pass {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

/// Runs a configured experiment without touching the file system.
fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let model = cfg.model.instantiate()?;
    match cfg.command.as_str() {
        "verify-convexity" => cmd_verify_convexity(cfg, &model),
        "level-connectivity" => cmd_level_connectivity(cfg, &model),
        "trace-flow" => cmd_trace_flow(cfg, &model),
        "loopgroup" => cmd_loopgroup(cfg, &model),
        "even-index" => cmd_even_index(cfg, &model),
        other => Err(Error::Config(format!("unknown command {other:?}"))),
    }
}

fn base_report(cfg: &ExperimentConfig) -> Report {
    let mut r = Report::new(&cfg.model.name, &cfg.command, &cfg.model.params, cfg.seed);
    r.tolerance = cfg.tolerance;
    r
}

fn vec_json(v: &DVector<f64>) -> serde_json::Value {
    serde_json::Value::Array(v.iter().map(|&x| json_f64(x)).collect())
}

fn plane_point(v: &DVector<f64>) -> (f64, f64) {
    (v[0], if v.len() > 1 { v[1] } else { 0.0 })
}

fn cloud_csv(cloud: &[DVector<f64>]) -> Vec<u8> {
    let n = cloud.first().map_or(0, |c| c.len());
    let mut s = (0..n).map(|i| format!("mu{i}")).collect::<Vec<_>>().join(",") + "\n";
    for c in cloud {
        s += &c.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(",");
        s.push('\n');
    }
    s.into_bytes()
}

fn hull_polygon(points: &[DVector<f64>]) -> Vec<(f64, f64)> {
    let flat: Vec<DVector<f64>> = points.iter().map(|p| {
        let (x, y) = plane_point(p);
        DVector::from_vec(vec![x, y])
    }).collect();
    match convex_hull(&flat) {
        Ok(h) => ccw_order(&h.vertices().iter().map(plane_point).collect::<Vec<_>>()),
        Err(_) => vec![],
    }
}

fn cmd_verify_convexity(cfg: &ExperimentConfig, model: &ManifoldModel) -> Result<Outcome> {
    let samples = cfg.samples.unwrap_or(10_000);
    let compact = matches!(model.kind(), ModelKind::Sphere | ModelKind::SphereProduct { .. } | ModelKind::HeightCircleMap);
    let mut report = base_report(cfg);
    let result = if compact && model.action_dim() <= 3 {
        let tol = cfg.tolerance.unwrap_or(DEFAULT_HULL_TOL);
        report.tolerance = Some(tol);
        report.metric("mode", "hull-equals-fixed-images");
        verify_hull_equals_fixed_images(model, samples, tol, cfg.seed)?
    } else {
        let cloud = momentum_image_sample(model, samples, cfg.seed)?;
        let tolerance = cfg.tolerance.map_or(Tolerance::cloud_relative(), Tolerance::Absolute);
        report.metric("mode", "midpoint-convexity");
        let r = convexity::verify_convexity(&cloud, DEFAULT_PAIR_TRIALS, tolerance, cfg.seed);
        report.tolerance = Some(r.tolerance);
        report.metric("pair_trials", r.pair_trials);
        report.metric("midpoint_violations", r.midpoint_violations);
        r
    };
    report.verdict = Verdict::from_pass(result.pass);
    report.metric("samples", samples);
    report.metric("tolerance_mode", &result.tolerance_mode);
    report.metric("max_outside_distance", json_f64(result.max_outside_distance));
    report.metric("hull_vertices", result.hull_vertices.iter().map(vec_json).collect::<Vec<_>>());
    report.metric("fixed_images", result.fixed_images.iter().map(vec_json).collect::<Vec<_>>());

    let mut outcome = Outcome::new(report);
    outcome.add("momentum.csv", cloud_csv(&result.samples));
    if cfg.plot {
        let plot = ScatterPlot {
            title: format!("momentum image of {}", cfg.model.name),
            x_label: "mu0".into(),
            y_label: if model.action_dim() > 1 { "mu1".into() } else { String::new() },
            points: result.samples.iter().map(plane_point).collect(),
            hull: hull_polygon(&result.samples),
            marks: result.fixed_images.iter().map(plane_point).collect(),
        };
        outcome.add("momentum.svg", plot.to_svg().into_bytes());
    }
    Ok(outcome)
}

/// Evenly spaced levels across the range of fixed-point images.
fn default_grid(model: &ManifoldModel) -> Vec<DVector<f64>> {
    let n = model.action_dim();
    let images: Vec<DVector<f64>> = model.fixed_points_in_chart().iter().map(|r| r.mu_image.clone()).collect();
    let ranges: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let lo = images.iter().map(|m| m[i]).fold(f64::INFINITY, f64::min);
            let hi = images.iter().map(|m| m[i]).fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 1e-12 {
                (lo, hi)
            } else {
                (lo - 1.0, lo + 1.0)
            }
        })
        .collect();
    let per_axis = match n {
        1 => 9,
        2 => 3,
        _ => 1,
    };
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        if per_axis == 1 {
            return vec![(lo + hi) / 2.0];
        }
        (0..per_axis).map(|k| lo + (hi - lo) * k as f64 / (per_axis - 1) as f64).collect()
    };
    let mut grid = vec![vec![]];
    for r in ranges {
        let values = axis(r);
        grid = grid.into_iter().flat_map(|g: Vec<f64>| values.iter().map(move |&v| [g.clone(), vec![v]].concat())).collect();
    }
    grid.into_iter().map(DVector::from_vec).collect()
}

fn cmd_level_connectivity(cfg: &ExperimentConfig, model: &ManifoldModel) -> Result<Outcome> {
    let grid: Vec<DVector<f64>> = match &cfg.grid {
        Some(g) => g.iter().map(|v| DVector::from_column_slice(v)).collect(),
        None => default_grid(model),
    };
    let samples = cfg.samples.unwrap_or(DEFAULT_LEVEL_SAMPLES);
    let scan = level_connectivity_scan(model, &grid, samples, cfg.seed)?;
    let mut report = base_report(cfg);
    let mut pass = true;
    let mut levels = Vec::new();
    let mut csv = String::from("level,class,components,points,failure_rate,epsilon\n");
    for l in &scan.levels {
        let value: Vec<String> = l.value.iter().map(|v| v.to_string()).collect();
        let value = value.join(" ");
        if l.class == LevelClass::Regular && l.component_count != 1 {
            pass = false;
        }
        if l.class == LevelClass::Singular && l.component_count > 1 {
            report.warnings.push(format!("level {value} is singular and has {} components", l.component_count));
        }
        levels.push(json!({
            "value": vec_json(&l.value),
            "class": l.class.label(),
            "components": l.component_count,
            "points": l.point_count,
            "failure_rate": json_f64(l.failure_rate),
            "epsilon": json_f64(l.epsilon),
        }));
        csv += &format!(
            "{value},{},{},{},{:.6e},{:.6e}\n",
            l.class.label(),
            l.component_count,
            l.point_count,
            l.failure_rate,
            l.epsilon
        );
    }
    report.verdict = Verdict::from_pass(pass);
    report.metric("samples_per_level", samples);
    report.metric("levels", levels);
    report.metric("connected_regular_fraction", json_f64(scan.connected_regular_fraction));
    let mut outcome = Outcome::new(report);
    outcome.add("levels.csv", csv.into_bytes());
    Ok(outcome)
}

fn cmd_trace_flow(cfg: &ExperimentConfig, model: &ManifoldModel) -> Result<Outcome> {
    let xi = cfg.xi.clone().unwrap_or_else(|| vec![1.0; model.action_dim()]);
    if xi.len() != model.action_dim() {
        return Err(Error::DimensionMismatch(format!("ξ of length {} for a rank-{} action", xi.len(), model.action_dim())));
    }
    let f = ScalarField::momentum(model, &xi);
    let start = match &cfg.start {
        Some(s) => {
            let x = DVector::from_column_slice(s);
            if x.len() != model.ambient_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "start point of length {} for ambient {}",
                    x.len(),
                    model.ambient_dim()
                )));
            }
            if model.is_flat() {
                x
            } else {
                model.project_to_manifold(&x)?
            }
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            model.sample_point(&mut rng)?
        }
    };
    let t_end = cfg.time.unwrap_or(DEFAULT_FLOW_TIME);
    let step = cfg.step.unwrap_or(flow::DEFAULT_STEP);
    let traj = if cfg.normalized {
        flow::normalized_flow(model, &f, &start, t_end, step)?
    } else {
        flow::integrate_flow(model, &f, &start, t_end, step)?
    };
    let mut report = base_report(cfg);
    report.verdict = Verdict::from_pass(traj.status != FlowStatus::StepFailure);
    report.metric("flow", if cfg.normalized { "normalized" } else { "gradient" });
    report.metric("xi", &xi);
    report.metric("status", traj.status.label());
    report.metric("steps", traj.times.len() - 1);
    report.metric("start", vec_json(&start));
    report.metric("final_time", json_f64(traj.final_time()));
    report.metric("final_point", vec_json(traj.final_point()));
    report.metric("final_value", json_f64(*traj.f_values.last().expect("nonempty trajectory")));
    report.metric("final_grad_norm", json_f64(*traj.grad_norms.last().expect("nonempty trajectory")));
    let mut outcome = Outcome::new(report);
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    outcome.add("trajectory.csv", csv);
    if cfg.plot {
        let plot = ScatterPlot {
            title: format!("{} along the flow", f.name()),
            x_label: "t".into(),
            y_label: "f".into(),
            points: traj.times.iter().copied().zip(traj.f_values.iter().copied()).collect(),
            ..Default::default()
        };
        outcome.add("trajectory.svg", plot.to_svg().into_bytes());
    }
    Ok(outcome)
}

fn cmd_loopgroup(cfg: &ExperimentConfig, model: &ManifoldModel) -> Result<Outcome> {
    let ModelKind::LoopTruncation { degree, grid_n } = model.kind() else {
        return Err(Error::Config(format!("loopgroup runs on loop-truncation, not {}", model.name())));
    };
    let mut lcfg = LoopExperimentConfig::new(degree, cfg.samples.unwrap_or(2000), cfg.seed);
    lcfg.grid_n = grid_n;
    if let Some(t) = cfg.tolerance {
        lcfg.envelope_tol = t;
    }
    let exp = loop_momentum_experiment(&lcfg)?;
    let mut report = base_report(cfg);
    report.tolerance = Some(lcfg.envelope_tol);
    report.verdict = Verdict::from_pass(exp.pass);
    report.metric("K", degree);
    report.metric("grid_n", grid_n);
    report.metric("samples", lcfg.sample_count);
    report.metric("sigma", lcfg.sigma);
    report.metric(
        "fixed_images",
        exp.image.fixed_images.iter().map(|&(k, e)| json!({"k": k, "p": k, "E": json_f64(e)})).collect::<Vec<_>>(),
    );
    report.metric("midpoint_violations", exp.report.midpoint_violations);
    report.metric("pair_trials", exp.report.pair_trials);
    report.metric("midpoint_tolerance_mode", &exp.report.tolerance_mode);
    report.metric("midpoint_tolerance", json_f64(exp.report.tolerance));
    report.metric("envelope_violations", exp.envelope_violations);
    report.metric("min_envelope_gap", json_f64(exp.min_envelope_gap));
    report.metric("min_cauchy_schwarz_gap", json_f64(exp.min_cauchy_schwarz_gap));
    let mut outcome = Outcome::new(report);
    let mut csv = Vec::new();
    exp.image.write_csv(&mut csv)?;
    outcome.add("momentum_image.csv", csv);
    if cfg.plot {
        let marks: Vec<(f64, f64)> = exp.image.fixed_images.iter().map(|&(k, e)| (k as f64, e)).collect();
        let plot = ScatterPlot {
            title: format!("loop momentum image, K = {degree}"),
            x_label: "p".into(),
            y_label: "E".into(),
            points: exp.image.points.clone(),
            hull: marks.clone(),
            marks,
        };
        outcome.add("momentum_image.svg", plot.to_svg().into_bytes());
    }
    Ok(outcome)
}

fn cmd_even_index(cfg: &ExperimentConfig, model: &ManifoldModel) -> Result<Outcome> {
    let n = model.action_dim();
    let mut audits = Vec::new();
    match &cfg.xi {
        Some(xi) => audits.push(even_index_audit(model, xi)?),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for _ in 0..cfg.samples.unwrap_or(DEFAULT_XI_DRAWS) {
                let mut attempt = 0;
                loop {
                    let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    match even_index_audit(model, &xi) {
                        Ok(a) => {
                            audits.push(a);
                            break;
                        }
                        Err(Error::DegenerateHessian { .. }) if attempt < XI_REDRAWS => attempt += 1,
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }
    let odd = audits.iter().flat_map(|a| &a.entries).filter(|e| !e.even).count();
    let index_one: usize = audits.iter().map(|a| a.index_one_count).sum();
    let mut report = base_report(cfg);
    report.verdict = Verdict::from_pass(odd == 0);
    report.metric("draws", audits.len());
    report.metric("odd_count", odd);
    report.metric("index_one_count", index_one);
    report.metric(
        "audits",
        audits
            .iter()
            .map(|a| {
                json!({
                    "xi": a.xi.iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
                    "fixed_points": a.entries.iter().map(|e| json!({
                        "mu": vec_json(&e.mu_image),
                        "index": e.index,
                        "coindex": e.coindex,
                    })).collect::<Vec<_>>(),
                })
            })
            .collect::<Vec<_>>(),
    );
    Ok(Outcome::new(report))
}
