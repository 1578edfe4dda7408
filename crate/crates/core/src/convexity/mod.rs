//! Convexity checks for momentum images.

mod hull;
mod rational;

pub use hull::{convex_hull, Hull};
pub use rational::{
    certify_choice, choose_good_projection, rationally_independent, Independence, ProjectionChoice, DEFAULT_COEFF_BOUND,
};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::flow::{self, connected_components, sample_momentum_level, Epsilon, FlowStatus};
use crate::models::{FixedPointRecord, ManifoldModel};
use crate::symplectic::{self, hessian_spectrum};

/// Rank threshold for dμ on tangent spaces.
pub const RANK_TOL: f64 = 1e-7;
const HYPERPLANE_TOL: f64 = 1e-6;
const FIXED_LEVEL_TOL: f64 = 1e-9;
const REFINE_DIRECTIONS: usize = 64;
const REFINE_TIME: f64 = 40.0;

/// Tolerance for membership of a convex combination in a sampled cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Absolute(f64),
    /// `factor` times the distance from the nearest cloud point to its
    /// `neighbors`-th nearest neighbour.
    CloudRelative { factor: f64, neighbors: usize },
}

impl Tolerance {
    pub fn cloud_relative() -> Self {
        Tolerance::CloudRelative { factor: 3.0, neighbors: 8 }
    }

    pub fn describe(&self) -> String {
        match self {
            Tolerance::Absolute(t) => format!("absolute {t}"),
            Tolerance::CloudRelative { factor, neighbors } => format!("cloud-relative {factor} x {neighbors}-NN spacing"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvexityReport {
    pub samples: Vec<DVector<f64>>,
    pub hull_vertices: Vec<DVector<f64>>,
    pub fixed_images: Vec<DVector<f64>>,
    /// Largest distance found outside the set being tested.
    pub max_outside_distance: f64,
    pub midpoint_violations: usize,
    pub pair_trials: usize,
    /// Largest tolerance applied.
    pub tolerance: f64,
    pub tolerance_mode: String,
    pub pass: bool,
}

/// μ images of `count` sampled points.
pub fn momentum_image_sample(model: &ManifoldModel, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    Ok(sample_points(model, count, seed)?.iter().map(|x| model.momentum(x)).collect())
}

fn sample_points(model: &ManifoldModel, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            model.sample_point(&mut rng)
        })
        .collect()
}

fn nearest(cloud: &[DVector<f64>], z: &DVector<f64>) -> (usize, f64) {
    cloud
        .iter()
        .enumerate()
        .map(|(i, q)| (i, (q - z).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::INFINITY))
}

fn kth_neighbor_distance(cloud: &[DVector<f64>], i: usize, k: usize) -> f64 {
    let mut d: Vec<f64> =
        cloud.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| (q - &cloud[i]).norm()).collect();
    if d.is_empty() {
        return 0.0;
    }
    let k = k.clamp(1, d.len());
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    d[k - 1]
}

/// Tests random convex combinations of cloud points for membership in the
/// cloud, up to the tolerance.
pub fn verify_convexity(cloud: &[DVector<f64>], pair_trials: usize, tolerance: Tolerance, seed: u64) -> ConvexityReport {
    let checks: Vec<(f64, f64)> = if cloud.is_empty() {
        vec![]
    } else {
        (0..pair_trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
                rng.set_stream(i as u64);
                let a = rng.random_range(0..cloud.len());
                let b = rng.random_range(0..cloud.len());
                let t: f64 = rng.random();
                let z = &cloud[a] * (1.0 - t) + &cloud[b] * t;
                let (q, d) = nearest(cloud, &z);
                let tol = match tolerance {
                    Tolerance::Absolute(v) => v,
                    Tolerance::CloudRelative { factor, neighbors } => factor * kth_neighbor_distance(cloud, q, neighbors),
                };
                (d, tol)
            })
            .collect()
    };
    let midpoint_violations = checks.iter().filter(|(d, t)| d > t).count();
    let max_outside_distance = checks.iter().map(|c| c.0).fold(0.0, f64::max);
    let tol_used = match tolerance {
        Tolerance::Absolute(v) => v,
        Tolerance::CloudRelative { .. } => checks.iter().map(|c| c.1).fold(0.0, f64::max),
    };
    let hull_vertices = if cloud.first().is_some_and(|p| p.len() <= 3) {
        convex_hull(cloud).map(|h| h.vertices().to_vec()).unwrap_or_default()
    } else {
        vec![]
    };
    ConvexityReport {
        samples: cloud.to_vec(),
        hull_vertices,
        fixed_images: vec![],
        max_outside_distance,
        midpoint_violations,
        pair_trials,
        tolerance: tol_used,
        tolerance_mode: tolerance.describe(),
        pass: midpoint_violations == 0,
    }
}

/// Compares a cloud with the hull of the fixed images: (a) every sample lies
/// within `tol` of the hull, (b) every hull vertex of the cloud lies within
/// `tol` of a fixed image and every fixed image within `tol` of the cloud's hull.
pub fn verify_hull_against_fixed_images(
    cloud: &[DVector<f64>],
    fixed_images: &[DVector<f64>],
    tol: f64,
) -> Result<ConvexityReport> {
    let fixed_hull = convex_hull(fixed_images)?;
    let cloud_hull = convex_hull(cloud)?;
    let containment = cloud.iter().map(|x| fixed_hull.distance_outside(x)).fold(0.0, f64::max);
    let vertex_gap = cloud_hull
        .vertices()
        .iter()
        .map(|v| fixed_images.iter().map(|f| (f - v).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let coverage_gap = fixed_images.iter().map(|f| cloud_hull.distance_outside(f)).fold(0.0, f64::max);
    let worst = containment.max(vertex_gap).max(coverage_gap);
    Ok(ConvexityReport {
        samples: cloud.to_vec(),
        hull_vertices: cloud_hull.vertices().to_vec(),
        fixed_images: fixed_images.to_vec(),
        max_outside_distance: worst,
        midpoint_violations: 0,
        pair_trials: 0,
        tolerance: tol,
        tolerance_mode: Tolerance::Absolute(tol).describe(),
        pass: worst <= tol,
    })
}

/// Unit directions used to refine the extremes of a cloud.
fn refinement_directions(n: usize) -> Vec<DVector<f64>> {
    match n {
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..REFINE_DIRECTIONS)
            .map(|i| {
                let a = 2.0 * PI * (i as f64 + 0.5) / REFINE_DIRECTIONS as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            // Fibonacci lattice on the sphere, padded with zeros beyond three entries.
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..REFINE_DIRECTIONS)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / REFINE_DIRECTIONS as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    let mut v = DVector::zeros(n);
                    v[0] = r * a.cos();
                    v[1] = r * a.sin();
                    v[2] = z;
                    v
                })
                .collect()
        }
    }
}

/// Support refinement: for each direction u, take the sample maximising ⟨μ, u⟩
/// and follow the ascending flow of μ^u from it. Returns the μ images of the
/// end points, which are points of the manifold like any other sample.
pub fn refine_support(model: &ManifoldModel, points: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    if points.is_empty() {
        return Ok(vec![]);
    }
    let images: Vec<DVector<f64>> = points.iter().map(|x| model.momentum(x)).collect();
    refinement_directions(model.action_dim())
        .into_par_iter()
        .map(|u| {
            let best = (0..points.len())
                .max_by(|&a, &b| images[a].dot(&u).total_cmp(&images[b].dot(&u)))
                .expect("nonempty cloud");
            let f = ScalarField::momentum(model, (-&u).as_slice());
            let traj = flow::integrate_flow(model, &f, &points[best], REFINE_TIME, flow::DEFAULT_STEP)?;
            let end = match &traj.status {
                FlowStatus::Converged { point, .. } => point.clone(),
                _ => traj.final_point().clone(),
            };
            Ok(model.momentum(&end))
        })
        .collect()
}

/// Samples the momentum image, refines its extremes, and compares it with the
/// hull of the fixed-point images.
pub fn verify_hull_equals_fixed_images(
    model: &ManifoldModel,
    sample_count: usize,
    tolerance: f64,
    seed: u64,
) -> Result<ConvexityReport> {
    let fixed = model.fixed_points()?;
    let fixed_images: Vec<DVector<f64>> = fixed.iter().map(|r| r.mu_image.clone()).collect();
    let points = sample_points(model, sample_count, seed)?;
    let mut cloud: Vec<DVector<f64>> = points.iter().map(|x| model.momentum(x)).collect();
    cloud.extend(refine_support(model, &points)?);
    verify_hull_against_fixed_images(&cloud, &fixed_images, tolerance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelClass {
    Regular,
    Singular,
    /// The level is empty; vacuously regular.
    Empty,
}

impl LevelClass {
    pub fn label(&self) -> &'static str {
        match self {
            LevelClass::Regular => "regular",
            LevelClass::Singular => "singular",
            LevelClass::Empty => "empty",
        }
    }

    pub fn is_regular(&self) -> bool {
        !matches!(self, LevelClass::Singular)
    }
}

#[derive(Debug, Clone)]
pub struct LevelReport {
    pub value: DVector<f64>,
    pub class: LevelClass,
    pub point_count: usize,
    pub failure_rate: f64,
    /// Smallest singular value of dμ on tangent spaces over the level sample.
    pub min_singular_value: f64,
    /// Distance to the union of weight hyperplanes (singular values only).
    pub hyperplane_distance: Option<f64>,
    pub component_count: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct LevelScan {
    pub levels: Vec<LevelReport>,
    /// Every singular value lies within 1e-6 of a weight hyperplane.
    pub hyperplanes_cover_singular_values: bool,
    /// Fraction of nonempty regular values whose level has one component.
    pub connected_regular_fraction: f64,
}

fn tangent_rank_gap(model: &ManifoldModel, x: &DVector<f64>) -> f64 {
    let b = model.tangent_basis(x);
    let dmu = model.momentum_jacobian(x) * b;
    let s = dmu.singular_values();
    let n = model.action_dim();
    if s.len() < n {
        0.0
    } else {
        s.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Affine hyperplanes through μ(p) spanned by n−1 independent weights at p.
/// Each is returned as (point, unit normal).
fn weight_hyperplanes(model: &ManifoldModel) -> Option<Vec<(DVector<f64>, DVector<f64>)>> {
    let n = model.action_dim();
    let fixed = model.fixed_points().ok()?;
    let mut planes = Vec::new();
    for rec in &fixed {
        let (frame, gens) = model.isotropy_data(rec).ok()?;
        let weights = symplectic::isotropy_weights(&frame, &gens).ok()?;
        let mut distinct: Vec<Vec<i64>> = weights.weights.clone();
        distinct.sort();
        distinct.dedup();
        if n == 1 {
            planes.push((rec.mu_image.clone(), DVector::from_element(1, 1.0)));
            continue;
        }
        for combo in combinations(distinct.len(), n - 1) {
            let cols: Vec<DVector<f64>> = combo
                .iter()
                .map(|&i| DVector::from_iterator(n, distinct[i].iter().map(|&w| w as f64)))
                .collect();
            let span = DMatrix::from_columns(&cols);
            let svd = span.clone().svd(true, false);
            if svd.singular_values.iter().any(|s| *s < 1e-9) {
                continue;
            }
            let u = svd.u.expect("u requested");
            let proj = DMatrix::identity(n, n) - &u * u.transpose();
            let normal = crate::linalg::projector_range_basis(&proj).column(0).into_owned();
            planes.push((rec.mu_image.clone(), normal));
        }
    }
    Some(planes)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = Vec::new();
    for first in 0..=(n - k) {
        for rest in combinations(n - first - 1, k - 1) {
            let mut c = vec![first];
            c.extend(rest.iter().map(|r| r + first + 1));
            out.push(c);
        }
    }
    out
}

fn fixed_on_level(fixed: &[FixedPointRecord], c: &DVector<f64>) -> Vec<DVector<f64>> {
    fixed.iter().filter(|r| (&r.mu_image - c).amax() <= FIXED_LEVEL_TOL).map(|r| r.point.clone()).collect()
}

/// Samples each requested level, classifies it, and counts its components.
fn scan_levels(model: &ManifoldModel, grid: &[DVector<f64>], samples_per_level: usize, seed: u64) -> Result<LevelScan> {
    let n = model.action_dim();
    if let Some(c) = grid.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch(format!("grid value of length {} for a rank-{n} action", c.len())));
    }
    let fixed = model.fixed_points_in_chart();
    let planes = weight_hyperplanes(model);
    let mut levels = Vec::with_capacity(grid.len());
    for (gi, c) in grid.iter().enumerate() {
        let lifted = model.lift_level(c);
        let mut points = Vec::new();
        let (mut attempted, mut failed) = (0, 0);
        for (li, level) in lifted.iter().enumerate() {
            let per = samples_per_level.div_ceil(lifted.len());
            let level_seed = seed.wrapping_add(1_000_003 * (gi as u64)).wrapping_add(7919 * li as u64);
            let sample = sample_momentum_level(model, level, per, level_seed);
            attempted += sample.attempted;
            failed += sample.failed;
            points.extend(sample.points);
            points.extend(fixed_on_level(&fixed, level));
        }
        let failure_rate = if attempted == 0 { 0.0 } else { failed as f64 / attempted as f64 };
        let min_sv = points.iter().map(|x| tangent_rank_gap(model, x)).fold(f64::INFINITY, f64::min);
        let class = if points.is_empty() {
            LevelClass::Empty
        } else if min_sv < RANK_TOL {
            LevelClass::Singular
        } else {
            LevelClass::Regular
        };
        let hyperplane_distance = match (class, &planes) {
            (LevelClass::Singular, Some(planes)) => Some(
                lifted
                    .iter()
                    .map(|level| {
                        planes.iter().map(|(p, nrm)| (level - p).dot(nrm).abs()).fold(f64::INFINITY, f64::min)
                    })
                    .fold(0.0, f64::max),
            ),
            _ => None,
        };
        let labels = connected_components(&points, Epsilon::Auto);
        levels.push(LevelReport {
            value: c.clone(),
            class,
            point_count: points.len(),
            failure_rate,
            min_singular_value: min_sv,
            hyperplane_distance,
            component_count: labels.component_count,
            epsilon: labels.epsilon,
        });
    }
    let hyperplanes_cover_singular_values =
        levels.iter().filter_map(|l| l.hyperplane_distance).all(|d| d <= HYPERPLANE_TOL);
    let regular: Vec<&LevelReport> = levels.iter().filter(|l| l.class == LevelClass::Regular).collect();
    let connected_regular_fraction = if regular.is_empty() {
        1.0
    } else {
        regular.iter().filter(|l| l.component_count == 1).count() as f64 / regular.len() as f64
    };
    Ok(LevelScan { levels, hyperplanes_cover_singular_values, connected_regular_fraction })
}

/// Classifies grid values as regular, singular or empty and checks that the
/// singular ones lie on hyperplanes through fixed-point images.
pub fn regular_value_scan(model: &ManifoldModel, grid: &[DVector<f64>], samples_per_level: usize, seed: u64) -> Result<LevelScan> {
    scan_levels(model, grid, samples_per_level, seed)
}

/// Counts connected components of each level on the grid.
pub fn level_connectivity_scan(
    model: &ManifoldModel,
    grid: &[DVector<f64>],
    samples_per_level: usize,
    seed: u64,
) -> Result<LevelScan> {
    scan_levels(model, grid, samples_per_level, seed)
}

#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub point: DVector<f64>,
    pub mu_image: DVector<f64>,
    pub index: usize,
    pub coindex: usize,
    pub even: bool,
}

#[derive(Debug, Clone)]
pub struct EvenIndexReport {
    pub xi: Vec<f64>,
    pub entries: Vec<IndexEntry>,
    pub all_even: bool,
    /// Number of fixed points with index or coindex equal to 1.
    pub index_one_count: usize,
}

/// Index and coindex of μ^ξ at every fixed point of a Hamiltonian model.
pub fn even_index_audit(model: &ManifoldModel, xi: &[f64]) -> Result<EvenIndexReport> {
    if xi.len() != model.action_dim() {
        return Err(Error::DimensionMismatch(format!("ξ of length {} for a rank-{} action", xi.len(), model.action_dim())));
    }
    if !model.is_symplectic() {
        return Err(Error::NoSymplecticStructure(model.name().into()));
    }
    let mut entries = Vec::new();
    for (i, rec) in model.fixed_points_in_chart().iter().enumerate() {
        let h = rec.hessian(xi);
        let scale = h.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let spectrum = hessian_spectrum(&h, Some(1e-8 * scale.max(1.0)))?;
        if spectrum.degenerate || scale == 0.0 {
            return Err(Error::DegenerateHessian { index: i, eigenvalue: spectrum.smallest_magnitude() });
        }
        let even = spectrum.index % 2 == 0 && spectrum.coindex % 2 == 0;
        entries.push(IndexEntry {
            point: rec.point.clone(),
            mu_image: rec.mu_image.clone(),
            index: spectrum.index,
            coindex: spectrum.coindex,
            even,
        });
    }
    let all_even = entries.iter().all(|e| e.even);
    let index_one_count = entries.iter().filter(|e| e.index == 1 || e.coindex == 1).count();
    Ok(EvenIndexReport { xi: xi.to_vec(), entries, all_even, index_one_count })
}
