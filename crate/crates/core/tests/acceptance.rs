//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or overruns its time budget.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use toruslab::convexity::{
    choose_good_projection, even_index_audit, level_connectivity_scan, rationally_independent,
    verify_hull_equals_fixed_images, Independence, LevelClass,
};
use toruslab::field::ScalarField;
use toruslab::flow::{integrate_flow, normalized_flow, DEFAULT_STEP};
use toruslab::loops::{
    conjugate_loop, energy, homomorphism, loop_eval, loop_momentum_experiment, momentum_t, rotate_loop,
    FourierLoop, LoopExperimentConfig,
};
use toruslab::models::{registry_get, ManifoldModel, ParamValue, Params};
use toruslab::symplectic::{build_frame, compatible_complex_structure};
use toruslab::Error;

type Check = std::result::Result<(bool, String), String>;
type Criterion = (&'static str, u64, fn() -> Check);

fn model(name: &str, params: &[(&str, i64)]) -> ManifoldModel {
    let params: Params = params.iter().map(|&(k, v)| (k.to_string(), ParamValue::Int(v))).collect();
    registry_get(name, &params).expect("registry model")
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.amax()
}

fn closed_form_flow() -> Check {
    let m = model("morse-chart", &[("d_plus", 1), ("d_minus", 1)]);
    let f = ScalarField::canonical(&m);
    let traj = integrate_flow(&m, &f, &v(&[1.0, 1.0]), 2.0, DEFAULT_STEP).map_err(|e| e.to_string())?;
    let err = traj
        .times
        .iter()
        .zip(&traj.points)
        .map(|(&t, x)| (x[0] - (-2.0 * t).exp()).abs().max((x[1] - (2.0 * t).exp()).abs()))
        .fold(0.0, f64::max);
    let span = traj.final_time();
    Ok((err <= 1e-6 && (span - 2.0).abs() < 1e-12, format!("sup error {err:.2e} over t ∈ [0, {span}]")))
}

fn normalized_descent() -> Check {
    let mut worst: f64 = 0.0;
    let mut longest: f64 = 0.0;
    for m in [model("morse-chart", &[("d_plus", 1), ("d_minus", 1)]), model("sphere", &[])] {
        let f = ScalarField::canonical(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let x0 = m.sample_point(&mut rng).map_err(|e| e.to_string())?;
            let traj = normalized_flow(&m, &f, &x0, 1.0, DEFAULT_STEP).map_err(|e| format!("{}: {e}", m.name()))?;
            let f0 = traj.f_values[0];
            for (&t, &ft) in traj.times.iter().zip(&traj.f_values) {
                worst = worst.max((ft - (f0 - t)).abs() / (1.0 + t));
            }
            longest = longest.max(traj.final_time());
        }
    }
    Ok((worst <= 1e-6, format!("max |f − (f₀ − t)|/(1+t) = {worst:.2e}, 200 starts, longest run t = {longest:.3}")))
}

fn hull_equals_fixed_images() -> Check {
    let sphere = verify_hull_equals_fixed_images(&model("sphere", &[]), 10_000, 2e-2, 3).map_err(|e| e.to_string())?;
    let mut ends: Vec<f64> = sphere.hull_vertices.iter().map(|p| p[0]).collect();
    ends.sort_by(f64::total_cmp);
    let sphere_ok = sphere.pass && ends.len() == 2 && (ends[0] + 1.0).abs() <= 2e-2 && (ends[1] - 1.0).abs() <= 2e-2;

    let square = verify_hull_equals_fixed_images(&model("sphere-product", &[("n", 2)]), 10_000, 2e-2, 3)
        .map_err(|e| e.to_string())?;
    let corners = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
    let matched = corners
        .iter()
        .filter(|c| square.hull_vertices.iter().any(|p| (p[0] - c[0]).abs() <= 2e-2 && (p[1] - c[1]).abs() <= 2e-2))
        .count();
    let square_ok = square.pass && square.hull_vertices.len() == 4 && matched == 4;
    Ok((
        sphere_ok && square_ok,
        format!(
            "sphere hull [{:.4}, {:.4}] gap {:.1e}; square {} vertices, {matched}/4 corners matched, gap {:.1e}",
            ends.first().copied().unwrap_or(f64::NAN),
            ends.last().copied().unwrap_or(f64::NAN),
            sphere.max_outside_distance,
            square.hull_vertices.len(),
            square.max_outside_distance
        ),
    ))
}

fn counterexample_detection() -> Check {
    let m = model("height-circle-map", &[]);
    let values = [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 0.9];
    let grid: Vec<DVector<f64>> = values.iter().map(|&c| v(&[c])).collect();
    let scan = level_connectivity_scan(&m, &grid, 400, 4).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = scan.levels.iter().map(|l| l.component_count).collect();
    let singular_ok = scan.levels[0].class == LevelClass::Singular && counts[0] == 2;
    let regular = scan.levels[1..].iter().filter(|l| l.class == LevelClass::Regular && l.component_count == 1).count();
    Ok((singular_ok && regular == 8, format!("components {counts:?}; {regular}/8 regular levels connected")))
}

fn complex_structure_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut min_positive = f64::INFINITY;
    for trial in 0..100 {
        let d = 1 + trial % 6;
        let n = 2 * d;
        let mut standard = DMatrix::zeros(n, n);
        for i in 0..d {
            standard[(2 * i, 2 * i + 1)] = -1.0;
            standard[(2 * i + 1, 2 * i)] = 1.0;
        }
        let p = DMatrix::identity(n, n) + gaussian(&mut rng, n, n) * (0.3 / (n as f64).sqrt());
        let b = gaussian(&mut rng, n, n) / (n as f64).sqrt();
        let metric = b.transpose() * &b + DMatrix::identity(n, n) * 0.5;
        let omega = p.transpose() * standard * &p;
        let frame = build_frame(omega.clone(), metric.clone()).map_err(|e| e.to_string())?;
        let j = compatible_complex_structure(&frame).map_err(|e| e.to_string())?.j;
        worst = worst
            .max(max_abs(&(&j * &j + DMatrix::identity(n, n))))
            .max(max_abs(&(j.transpose() * &metric * &j - &metric)))
            .max(max_abs(&(j.transpose() * &omega * &j - &omega)));
        // ω(u, Ju) = uᵀ JᵀΩ u
        let form = j.transpose() * &omega;
        let sym = (&form + form.transpose()) * 0.5;
        min_positive = min_positive.min(sym.symmetric_eigenvalues().min());
    }
    Ok((
        worst <= 1e-9 && min_positive > 0.0,
        format!("max defect {worst:.2e} over 100 frames of dim 2..12, min eigenvalue of ω(·, J·) {min_positive:.3}"),
    ))
}

fn even_index() -> Check {
    let instances: Vec<ManifoldModel> = vec![
        model("morse-chart", &[("d_plus", 1), ("d_minus", 1)]),
        model("morse-chart", &[("d_plus", 2), ("d_minus", 2)]),
        model("sphere", &[]),
        model("sphere-product", &[("n", 2)]),
        model("sphere-product", &[("n", 3)]),
        model("height-circle-map", &[]),
        model("loop-truncation", &[("K", 2)]),
        model("loop-truncation", &[("K", 3)]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut audited, mut points, mut odd, mut ones) = (0, 0, 0, 0);
    let mut skipped = vec![];
    for m in &instances {
        if !m.is_symplectic() {
            skipped.push(m.name());
            continue;
        }
        let mut draws = 0;
        let mut attempts = 0;
        while draws < 20 {
            attempts += 1;
            if attempts > 200 {
                return Err(format!("{}: no nondegenerate ξ in 200 draws", m.name()));
            }
            let xi: Vec<f64> = (0..m.action_dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
            match even_index_audit(m, &xi) {
                Ok(r) => {
                    draws += 1;
                    points += r.entries.len();
                    odd += r.entries.iter().filter(|e| !e.even).count();
                    ones += r.index_one_count;
                }
                Err(Error::DegenerateHessian { .. }) => {}
                Err(e) => return Err(format!("{}: {e}", m.name())),
            }
        }
        audited += 1;
    }
    Ok((
        odd == 0 && ones == 0,
        format!(
            "{audited} models × 20 ξ, {points} fixed points, {odd} odd, {ones} with index/coindex 1; no symplectic structure: {}",
            skipped.join(", ")
        ),
    ))
}

fn rational_independence() -> Check {
    let pair = rationally_independent(&[3.0, 8f64.sqrt()], 50, None).map_err(|e| e.to_string())?;
    let theta = [3.0, 8f64.sqrt(), 1.0 + 2f64.sqrt()];
    let triple = rationally_independent(&theta, 50, None).map_err(|e| e.to_string())?;
    let (dependent, residual, witness) = match &triple {
        Independence::Dependent { witness, .. } => {
            let r = witness.iter().zip(&theta).map(|(&s, t)| s as f64 * t).sum::<f64>().abs();
            (witness.iter().any(|&s| s != 0), r, format!("{witness:?}"))
        }
        Independence::Independent { .. } => (false, f64::NAN, "none".into()),
    };
    Ok((
        pair.is_independent() && dependent && residual < 1e-12,
        format!("(3, √8) independent: {}; witness {witness} with |Σsθ| = {residual:.1e}", pair.is_independent()),
    ))
}

fn good_projection() -> Check {
    let mut worst_kernel: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    let mut most_trials = 0;
    let mut uncertified = 0;
    for n1 in [2usize, 3] {
        let embedding = DMatrix::identity(n1, n1);
        let normal = DVector::from_fn(n1, |i, _| 1.0 + i as f64);
        for seed in 0..1000u64 {
            let c = choose_good_projection(n1, &embedding, &normal, 100, seed).map_err(|e| format!("n+1 = {n1}, seed {seed}: {e}"))?;
            worst_kernel = worst_kernel.max((&c.matrix * &c.kernel).amax());
            worst_orth = worst_orth.max(c.witness_theta.dot(&c.kernel).abs());
            most_trials = most_trials.max(c.trials_used);
            let recheck = rationally_independent((&embedding * &c.witness_theta).as_slice(), 50, None).map_err(|e| e.to_string())?;
            if !c.certificate.is_independent() || !recheck.is_independent() {
                uncertified += 1;
            }
        }
    }
    Ok((
        worst_kernel <= 1e-12 && worst_orth <= 1e-12 && uncertified == 0 && most_trials <= 100,
        format!(
            "2000 runs: max |matrix·p| {worst_kernel:.1e}, max |⟨θ,p⟩| {worst_orth:.1e}, {uncertified} uncertified, at most {most_trials} trials"
        ),
    ))
}

fn loop_functionals() -> Check {
    let mut worst_closed: f64 = 0.0;
    for k in -5i64..=5 {
        let g = homomorphism(k, 512);
        worst_closed = worst_closed.max((energy(&g) - (k * k) as f64 / 2.0).abs()).max((momentum_t(&g) - k as f64).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_inv: f64 = 0.0;
    for _ in 0..100 {
        let lp = FourierLoop::random(3, 1.0, 512, &mut rng).map_err(|e| e.to_string())?;
        let g = loop_eval(&lp).map_err(|e| e.to_string())?;
        let (e0, p0) = (energy(&g), momentum_t(&g));
        let phi = rng.random_range(0.0..2.0 * PI);
        let s = rng.random_range(0.0..2.0 * PI);
        for moved in [rotate_loop(phi, &g), conjugate_loop(s, &g)] {
            worst_inv = worst_inv.max((energy(&moved) - e0).abs()).max((momentum_t(&moved) - p0).abs());
        }
    }
    Ok((
        worst_closed <= 1e-9 && worst_inv <= 1e-8,
        format!("γ_k error {worst_closed:.1e} for |k| ≤ 5; invariance defect {worst_inv:.1e} on 100 loops"),
    ))
}

fn loop_convexity() -> Check {
    let exp = loop_momentum_experiment(&LoopExperimentConfig::new(3, 10_000, 10)).map_err(|e| e.to_string())?;
    Ok((
        exp.pass && exp.report.midpoint_violations == 0 && exp.envelope_violations == 0,
        format!(
            "{} midpoint violations in {} trials ({}), {} envelope violations, min envelope gap {:.2e}, min E − p²/2 {:.2e}",
            exp.report.midpoint_violations,
            exp.report.pair_trials,
            exp.report.tolerance_mode,
            exp.envelope_violations,
            exp.min_envelope_gap,
            exp.min_cauchy_schwarz_gap
        ),
    ))
}

fn cli_outputs(dir: &Path, args: &[&str]) -> std::result::Result<Vec<(String, Vec<u8>)>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_toruslab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.code() == Some(1) {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|name| name != "run_info.json")
        .map(|name| {
            let bytes = fs::read(dir.join(&name)).unwrap_or_default();
            (name, bytes)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn cli_determinism() -> Check {
    let commands: [&[&str]; 5] = [
        &["verify-convexity", "--model", "sphere-product", "--param", "n=3", "--samples", "2000", "--seed", "11", "--plot"],
        &["level-connectivity", "--model", "height-circle-map", "--seed", "11"],
        &["trace-flow", "--model", "sphere", "--seed", "11", "--time", "2"],
        &["loopgroup", "--model", "loop-truncation", "--param", "K=2", "--samples", "500", "--seed", "11"],
        &["even-index", "--model", "sphere-product", "--param", "n=2", "--seed", "11"],
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    let mut differing = vec![];
    for (i, args) in commands.iter().enumerate() {
        let a = cli_outputs(&tmp.path().join(format!("{i}a")), args)?;
        let b = cli_outputs(&tmp.path().join(format!("{i}b")), args)?;
        compared += a.len();
        if a != b {
            differing.push(args[0]);
        }
    }
    Ok((differing.is_empty(), format!("{compared} files from 5 commands compared; differing: {differing:?}")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("closed-form flow on morse-chart(1,1)", 1, closed_form_flow),
        ("normalized descent f(ψ_t x) = f(x) − t", 5, normalized_descent),
        ("hull of momentum image equals hull of fixed images", 10, hull_equals_fixed_images),
        ("disconnected singular level of the height map", 10, counterexample_detection),
        ("compatible complex structures", 5, complex_structure_suite),
        ("even index and coindex at fixed points", 10, even_index),
        ("rational independence", 1, rational_independence),
        ("good projection", 10, good_projection),
        ("loop group energy and momentum", 30, loop_functionals),
        ("loop momentum convexity surrogate", 60, loop_convexity),
        ("CLI determinism", 60, cli_determinism),
    ];
    let mut failures = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let (pass, detail) = match result {
            Ok((pass, detail)) => (pass && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        let timing = format!("{:.2}s of {limit}s{}", elapsed.as_secs_f64(), if in_time { "" } else { ", over budget" });
        println!("{verdict} criterion {}: {name}: {detail} [{timing}]", i + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
