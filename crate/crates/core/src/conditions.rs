//! Checkers for the weak-dependence hypotheses: the triangular interaction
//! matrices, extraction of the dependence parameter delta, per-coordinate
//! distance-entropy constants, and sampled falsification of the
//! sub-quadratic, entropy-distance, and contractivity bounds.
//!
//! Sampling gives falsification power, not proof: a passing check means no
//! violation was found among the tested tuples. Exhaustive enumeration is
//! available for small grids.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::divergence::kl_log_mass;
use crate::error::{Error, Result};
use crate::model::{weighted_distance, GridDensity, LocalSpec, Model, Weights};
use crate::transport::{w2_gaussian_1d, w2_quantile_1d};

/// How the mixed partials behind the interaction matrices were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum PartialsMethod {
    /// Constant partials read off a Gaussian precision matrix.
    Exact,
    /// Analytic second partials of a Hamiltonian expression, supremum over
    /// all enumerated grid points.
    AnalyticSup,
}

/// Normalized interaction matrices. `B1` is strictly upper-triangular,
/// `B2` strictly lower-triangular, with entries
/// `beta_{i,k} = d2V/dx_i dx_k / sqrt(rho_i rho_k)`; `A1`/`A2` carry the
/// entrywise absolute suprema.
#[derive(Debug, Clone)]
pub struct BetaMatrices {
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub method: PartialsMethod,
}

/// Interaction matrices of a model. Gaussian models have constant partials
/// `J_{ik}`; grid models need a Hamiltonian expression, whose analytic
/// second partials are maximized over every grid point.
pub fn beta_matrices(model: &Model) -> Result<BetaMatrices> {
    let weights = model.weights()?;
    let n = model.dim();
    let mut b1 = DMatrix::zeros(n, n);
    let mut b2 = DMatrix::zeros(n, n);
    let mut a1 = DMatrix::zeros(n, n);
    let mut a2 = DMatrix::zeros(n, n);
    let method;
    match model {
        Model::Gaussian(m) => {
            method = PartialsMethod::Exact;
            for i in 0..n {
                for k in 0..n {
                    if i == k {
                        continue;
                    }
                    let beta =
                        m.precision()[(i, k)] / (weights.rho()[i] * weights.rho()[k]).sqrt();
                    if i < k {
                        b1[(i, k)] = beta;
                        a1[(i, k)] = beta.abs();
                    } else {
                        b2[(i, k)] = beta;
                        a2[(i, k)] = beta.abs();
                    }
                }
            }
        }
        Model::Grid(m) => {
            let expr = m.expr().ok_or(Error::PartialsUnavailable)?;
            method = PartialsMethod::AnalyticSup;
            let states = enumerate_states(m.grids());
            for i in 0..n {
                for k in 0..n {
                    if i == k {
                        continue;
                    }
                    let d2 = expr.second_partial(i + 1, k + 1)?;
                    // signed value of largest magnitude, and the magnitude
                    // itself, over the grid
                    let mut signed = 0.0f64;
                    let mut mag = 0.0f64;
                    for x in &states {
                        let v = d2.eval(x);
                        if v.abs() > mag {
                            mag = v.abs();
                            signed = v;
                        }
                    }
                    let scale = (weights.rho()[i] * weights.rho()[k]).sqrt();
                    if i < k {
                        b1[(i, k)] = signed / scale;
                        a1[(i, k)] = mag / scale;
                    } else {
                        b2[(i, k)] = signed / scale;
                        a2[(i, k)] = mag / scale;
                    }
                }
            }
        }
    }
    Ok(BetaMatrices {
        b1,
        b2,
        a1,
        a2,
        method,
    })
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Largest admissible dependence parameter:
/// `delta = 1 - 2 max(||B1||, ||B2||)`. May be nonpositive, which
/// downstream certification treats as failure.
pub fn delta_from_condition_c(b: &BetaMatrices) -> f64 {
    1.0 - 2.0 * spectral_norm(&b.b1).max(spectral_norm(&b.b2))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum DeMethod {
    /// Closed-form constant `J_ii` of a Gaussian conditional.
    GaussianExact,
    /// Minimum of `2 D(r||Q_i) / W^2(r, Q_i)` over a structured family of
    /// test densities and every enumerated condition.
    GridEmpirical { seed: u64 },
}

/// A per-coordinate distance-entropy constant together with its
/// one-sidedness: empirical values can only overestimate the true constant.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DeConstant {
    pub value: f64,
    pub upper_bound_only: bool,
    pub method: DeMethod,
}

/// Distance-entropy constant of coordinate `i` (1-based).
pub fn de_constant(model: &Model, i: usize, method: DeMethod) -> Result<DeConstant> {
    let n = model.dim();
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, dim: n });
    }
    match (model, method) {
        (Model::Gaussian(m), DeMethod::GaussianExact) => Ok(DeConstant {
            value: m.precision()[(i - 1, i - 1)],
            upper_bound_only: false,
            method,
        }),
        (Model::Grid(m), DeMethod::GridEmpirical { seed }) => {
            let ax = i - 1;
            let grid = &m.grids()[ax];
            if grid.len() < 2 {
                return Err(Error::DegenerateSpec(i));
            }
            let _ = seed; // recorded in the tag; the test family is deterministic
            let mut best = f64::INFINITY;
            let mut rest_idx = vec![0usize; n];
            loop {
                let lq = m.local_log_pmf_by_index(ax, &rest_idx);
                let q = GridDensity::new(vec![grid.clone()], lq.clone())?;
                for lr in test_family(&lq, grid) {
                    let r = GridDensity::normalized(vec![grid.clone()], lr)?;
                    let w = w2_quantile_1d(&r, &q)?;
                    if w * w <= 1e-12 {
                        continue;
                    }
                    let d = kl_log_mass(r.log_mass(), q.log_mass());
                    best = best.min(2.0 * d / (w * w));
                }
                if !advance_skipping(&mut rest_idx, m.shape(), ax) {
                    break;
                }
            }
            Ok(DeConstant {
                value: best,
                upper_bound_only: true,
                method,
            })
        }
        _ => Err(Error::VariantMismatch("de_constant")),
    }
}

/// Structured 1-D test densities around a reference log pmf: exponential
/// tilts, point-mass mixtures, and adjacent mass transfers. The family is
/// deterministic so empirical constants are reproducible; the infimum near
/// the reference is probed by the small-transfer members.
fn test_family(lq: &[f64], grid: &[f64]) -> Vec<Vec<f64>> {
    let mut fam = Vec::new();
    for s in [-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0] {
        fam.push(
            lq.iter()
                .zip(grid)
                .map(|(&l, &x)| l + s * x)
                .collect::<Vec<f64>>(),
        );
    }
    for eps in [0.3, 0.6, 0.9] {
        for k in 0..grid.len() {
            let mix: Vec<f64> = lq
                .iter()
                .enumerate()
                .map(|(j, &l)| {
                    let base = (1.0 - eps) * l.exp();
                    let spike = if j == k { eps } else { 0.0 };
                    (base + spike).ln()
                })
                .collect();
            fam.push(mix);
        }
    }
    // transfer a fraction of the mass of one point to a neighbor
    for frac in [1e-3, 1e-2, 0.1] {
        for j in 0..grid.len() {
            for k in [j.wrapping_sub(1), j + 1] {
                if k >= grid.len() {
                    continue;
                }
                let moved = frac * lq[j].exp();
                let r: Vec<f64> = lq
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| {
                        if i == j {
                            (l.exp() - moved).max(1e-300).ln()
                        } else if i == k {
                            (l.exp() + moved).ln()
                        } else {
                            l
                        }
                    })
                    .collect();
                fam.push(r);
            }
        }
    }
    fam
}

/// Advances a multi-index over `dims` holding `skip` fixed at 0.
fn advance_skipping(idx: &mut [usize], dims: &[usize], skip: usize) -> bool {
    for k in (0..dims.len()).rev() {
        if k == skip {
            continue;
        }
        idx[k] += 1;
        if idx[k] < dims[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

fn enumerate_states(grids: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dims: Vec<usize> = grids.iter().map(|g| g.len()).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; dims.len()];
    loop {
        out.push(
            idx.iter()
                .enumerate()
                .map(|(k, &j)| grids[k][j])
                .collect::<Vec<f64>>(),
        );
        if !crate::tensor::next_index(&mut idx, &dims) {
            break;
        }
    }
    out
}

/// First interleaved sum: coordinate i sees the frozen prefix from `zeta`,
/// its own value from `t`, and the tail from `y`.
fn phi_sum(model: &Model, zeta: &[f64], t: &[f64], y: &[f64]) -> Result<f64> {
    let n = model.dim();
    let mut s = 0.0;
    let mut x = vec![0.0; n];
    for i in 0..n {
        x[..i].copy_from_slice(&zeta[..i]);
        x[i] = t[i];
        x[(i + 1)..].copy_from_slice(&y[(i + 1)..]);
        s += model.hamiltonian_eval(&x)?;
    }
    Ok(s)
}

/// Mirrored sum: prefix from `y`, own value from `t`, frozen tail from
/// `zeta`.
fn psi_sum(model: &Model, zeta: &[f64], t: &[f64], y: &[f64]) -> Result<f64> {
    let n = model.dim();
    let mut s = 0.0;
    let mut x = vec![0.0; n];
    for i in 0..n {
        x[..i].copy_from_slice(&y[..i]);
        x[i] = t[i];
        x[(i + 1)..].copy_from_slice(&zeta[(i + 1)..]);
        s += model.hamiltonian_eval(&x)?;
    }
    Ok(s)
}

/// Sub-quadratic defect of one quintuple: the larger of the two interleaved
/// double differences minus `((1-delta)/2) d(t,u) d(y,z)`. Positive values
/// are violations.
#[allow(clippy::too_many_arguments)]
pub fn sq_defect(
    model: &Model,
    weights: &Weights,
    delta: f64,
    zeta: &[f64],
    t: &[f64],
    u: &[f64],
    y: &[f64],
    z: &[f64],
) -> Result<f64> {
    let dd = sq_double_differences(model, zeta, t, u, y, z)?;
    let bound = 0.5 * (1.0 - delta)
        * weighted_distance(weights, t, u)?
        * weighted_distance(weights, y, z)?;
    Ok(dd - bound)
}

/// Max of the absolute interleaved double differences over a quintuple.
fn sq_double_differences(
    model: &Model,
    zeta: &[f64],
    t: &[f64],
    u: &[f64],
    y: &[f64],
    z: &[f64],
) -> Result<f64> {
    let dd_phi = phi_sum(model, zeta, t, y)? - phi_sum(model, zeta, u, y)?
        - phi_sum(model, zeta, t, z)?
        + phi_sum(model, zeta, u, z)?;
    let dd_psi = psi_sum(model, zeta, t, y)? - psi_sum(model, zeta, u, y)?
        - psi_sum(model, zeta, t, z)?
        + psi_sum(model, zeta, u, z)?;
    Ok(dd_phi.abs().max(dd_psi.abs()))
}

/// Sampling plan for the bound checkers.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SamplerConfig {
    pub count: usize,
    pub seed: u64,
    /// Enumerate every tuple of grid states instead of sampling. Only
    /// available for grid models under the size cap.
    pub exhaustive: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            count: 10_000,
            seed: 0,
            exhaustive: false,
        }
    }
}

/// Outcome of one sampled bound check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckOutcome {
    pub pass: bool,
    /// Worst left-hand side minus right-hand side.
    pub worst_defect: f64,
    /// Worst left/right ratio over tuples with nonzero right-hand side
    /// (for the sub-quadratic check: double difference over the distance
    /// product, before the `(1-delta)/2` coefficient).
    pub worst_ratio: f64,
    /// Tuple realizing the worst defect, flattened point by point.
    pub witness: Option<Vec<Vec<f64>>>,
    pub sample_count: usize,
    pub seed: u64,
}

fn random_state(model: &Model, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match model {
        Model::Grid(m) => m
            .grids()
            .iter()
            .map(|g| {
                let k = if rng.gen_bool(0.4) {
                    if rng.gen_bool(0.5) {
                        0
                    } else {
                        g.len() - 1
                    }
                } else {
                    rng.gen_range(0..g.len())
                };
                g[k]
            })
            .collect(),
        Model::Gaussian(m) => (0..m.dim())
            .map(|i| {
                let sd = m.covariance()[(i, i)].sqrt();
                let mean = m.mean()[i];
                if rng.gen_bool(0.3) {
                    mean + if rng.gen_bool(0.5) { 3.0 * sd } else { -3.0 * sd }
                } else {
                    mean + sd * rng.gen_range(-3.0..3.0)
                }
            })
            .collect(),
    }
}

/// Copy of `x` moved to a different value along one axis.
fn perturb_axis(model: &Model, x: &[f64], axis: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = x.to_vec();
    match model {
        Model::Grid(m) => {
            let g = &m.grids()[axis];
            if g.len() > 1 {
                loop {
                    let k = rng.gen_range(0..g.len());
                    if (g[k] - x[axis]).abs() > 0.0 {
                        out[axis] = g[k];
                        break;
                    }
                }
            }
        }
        Model::Gaussian(m) => {
            let sd = m.covariance()[(axis, axis)].sqrt();
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            out[axis] += sign * sd * rng.gen_range(0.5..2.0);
        }
    }
    out
}

/// Sampled check of the sub-quadratic bounds. Mixes generic quintuples with
/// axis-aligned ones (each difference supported on a single coordinate),
/// which realize the extremal ratio for constant-partial models.
pub fn check_sq(
    model: &Model,
    weights: &Weights,
    delta: f64,
    cfg: &SamplerConfig,
) -> Result<CheckOutcome> {
    let n = model.dim();
    let mut worst_defect = f64::NEG_INFINITY;
    let mut worst_ratio: f64 = 0.0;
    let mut witness = None;
    let mut samples = 0usize;
    let mut consider = |model: &Model,
                        zeta: &[f64],
                        t: &[f64],
                        u: &[f64],
                        y: &[f64],
                        z: &[f64]|
     -> Result<()> {
        let dd = sq_double_differences(model, zeta, t, u, y, z)?;
        let denom = weighted_distance(weights, t, u)? * weighted_distance(weights, y, z)?;
        let defect = dd - 0.5 * (1.0 - delta) * denom;
        if denom > 1e-12 {
            worst_ratio = worst_ratio.max(dd / denom);
        }
        if defect > worst_defect {
            worst_defect = defect;
            witness = Some(vec![
                zeta.to_vec(),
                t.to_vec(),
                u.to_vec(),
                y.to_vec(),
                z.to_vec(),
            ]);
        }
        Ok(())
    };
    if cfg.exhaustive {
        let states = exhaustive_states(model, 5)?;
        for zeta in &states {
            for t in &states {
                for u in &states {
                    for y in &states {
                        for z in &states {
                            consider(model, zeta, t, u, y, z)?;
                            samples += 1;
                        }
                    }
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.count {
            let zeta = random_state(model, &mut rng);
            let (t, u, y, z) = if rng.gen_bool(0.5) {
                let t = random_state(model, &mut rng);
                let u = perturb_axis(model, &t, rng.gen_range(0..n), &mut rng);
                let y = random_state(model, &mut rng);
                let z = perturb_axis(model, &y, rng.gen_range(0..n), &mut rng);
                (t, u, y, z)
            } else {
                (
                    random_state(model, &mut rng),
                    random_state(model, &mut rng),
                    random_state(model, &mut rng),
                    random_state(model, &mut rng),
                )
            };
            consider(model, &zeta, &t, &u, &y, &z)?;
            samples += 1;
        }
    }
    Ok(CheckOutcome {
        pass: worst_defect <= 1e-9,
        worst_defect,
        worst_ratio,
        witness,
        sample_count: samples,
        seed: cfg.seed,
    })
}

fn exhaustive_states(model: &Model, tuple_arity: u32) -> Result<Vec<Vec<f64>>> {
    let m = match model {
        Model::Grid(m) => m,
        Model::Gaussian(_) => {
            return Err(Error::VariantMismatch(
                "exhaustive enumeration needs a grid model",
            ))
        }
    };
    let states = enumerate_states(m.grids());
    let total = (states.len() as f64).powi(tuple_arity as i32);
    if total > 2_000_000.0 {
        return Err(Error::SizeLimitExceeded {
            got: total as usize,
            cap: 2_000_000,
        });
    }
    Ok(states)
}

/// Condition for coordinate `i0` (0-based) interleaving the prefix of `a`
/// with the tail of `b`.
fn interleaved_condition(a: &[f64], b: &[f64], i0: usize) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .filter(|&j| j != i0)
        .map(|j| if j < i0 { a[j] } else { b[j] })
        .collect()
}

fn local_kl(p: &LocalSpec, q: &LocalSpec) -> Result<f64> {
    match (p, q) {
        (
            LocalSpec::Gaussian1D { mean: mp, var: vp },
            LocalSpec::Gaussian1D { mean: mq, var: vq },
        ) => Ok(0.5 * ((vq / vp).ln() + (vp + (mp - mq) * (mp - mq)) / vq - 1.0)),
        (LocalSpec::GridPmf { log_mass: lp, .. }, LocalSpec::GridPmf { log_mass: lq, .. }) => {
            Ok(kl_log_mass(lp, lq))
        }
        _ => Err(Error::VariantMismatch("local_kl")),
    }
}

fn local_w2(p: &LocalSpec, q: &LocalSpec) -> Result<f64> {
    match (p, q) {
        (
            LocalSpec::Gaussian1D { mean: mp, var: vp },
            LocalSpec::Gaussian1D { mean: mq, var: vq },
        ) => w2_gaussian_1d(*mp, *vp, *mq, *vq),
        (
            LocalSpec::GridPmf {
                grid: gp,
                log_mass: lp,
            },
            LocalSpec::GridPmf {
                grid: gq,
                log_mass: lq,
            },
        ) => w2_quantile_1d(
            &GridDensity::new(vec![gp.clone()], lp.clone())?,
            &GridDensity::new(vec![gq.clone()], lq.clone())?,
        ),
        _ => Err(Error::VariantMismatch("local_w2")),
    }
}

enum PairwiseKind {
    EntropyDistance,
    Contractivity,
}

fn check_pairwise(
    model: &Model,
    weights: &Weights,
    delta: f64,
    cfg: &SamplerConfig,
    kind: PairwiseKind,
) -> Result<CheckOutcome> {
    let n = model.dim();
    let mut worst_defect = f64::NEG_INFINITY;
    let mut worst_ratio: f64 = 0.0;
    let mut witness = None;
    let mut samples = 0usize;
    let mut consider =
        |y1: &[f64], z1: &[f64], y2: &[f64], z2: &[f64]| -> Result<()> {
            let mut lhs = 0.0;
            for i0 in 0..n {
                let cy = interleaved_condition(y1, y2, i0);
                let cz = interleaved_condition(z1, z2, i0);
                let qy = model.local_specification(i0 + 1, &cy)?;
                let qz = model.local_specification(i0 + 1, &cz)?;
                match kind {
                    PairwiseKind::EntropyDistance => lhs += local_kl(&qy, &qz)?,
                    PairwiseKind::Contractivity => {
                        let w = local_w2(&qy, &qz)?;
                        lhs += weights.rho()[i0] * w * w;
                    }
                }
            }
            let dsum = weighted_distance(weights, y1, z1)? + weighted_distance(weights, y2, z2)?;
            let coeff = match kind {
                PairwiseKind::EntropyDistance => (1.0 - delta) * (1.0 - delta) / 8.0,
                PairwiseKind::Contractivity => 0.5 * (1.0 - delta) * (1.0 - delta),
            };
            let rhs = coeff * dsum * dsum;
            let ratio = if rhs <= 1e-15 {
                if lhs <= 1e-12 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                lhs / rhs
            };
            worst_ratio = worst_ratio.max(ratio);
            let defect = lhs - rhs;
            if defect > worst_defect {
                worst_defect = defect;
                witness = Some(vec![y1.to_vec(), z1.to_vec(), y2.to_vec(), z2.to_vec()]);
            }
            Ok(())
        };
    if cfg.exhaustive {
        let states = exhaustive_states(model, 4)?;
        for y1 in &states {
            for z1 in &states {
                for y2 in &states {
                    for z2 in &states {
                        consider(y1, z1, y2, z2)?;
                        samples += 1;
                    }
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
        for _ in 0..cfg.count {
            let (y1, z1, y2, z2) = if rng.gen_bool(0.5) {
                // one pair differs along a single axis, the other coincides
                let y1 = random_state(model, &mut rng);
                let z1 = perturb_axis(model, &y1, rng.gen_range(0..n), &mut rng);
                let y2 = random_state(model, &mut rng);
                if rng.gen_bool(0.5) {
                    (y1, z1, y2.clone(), y2)
                } else {
                    (y2.clone(), y2, y1, z1)
                }
            } else {
                (
                    random_state(model, &mut rng),
                    random_state(model, &mut rng),
                    random_state(model, &mut rng),
                    random_state(model, &mut rng),
                )
            };
            consider(&y1, &z1, &y2, &z2)?;
            samples += 1;
        }
    }
    Ok(CheckOutcome {
        pass: worst_ratio <= 1.0 + 1e-9,
        worst_defect,
        worst_ratio,
        witness,
        sample_count: samples,
        seed: cfg.seed,
    })
}

/// Sampled check of the entropy-distance bound: summed divergences of
/// interleaved conditionals against `((1-delta)^2/8)` times the squared
/// sum of weighted distances.
pub fn check_ed(
    model: &Model,
    weights: &Weights,
    delta: f64,
    cfg: &SamplerConfig,
) -> Result<CheckOutcome> {
    check_pairwise(model, weights, delta, cfg, PairwiseKind::EntropyDistance)
}

/// Sampled check of the contractivity bound: weighted squared W-distances
/// of interleaved conditionals against `(1-delta)^2/2` times the squared
/// sum of weighted distances.
pub fn check_co(
    model: &Model,
    weights: &Weights,
    delta: f64,
    cfg: &SamplerConfig,
) -> Result<CheckOutcome> {
    check_pairwise(model, weights, delta, cfg, PairwiseKind::Contractivity)
}

/// Assembled hypothesis report for a model.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConditionReport {
    pub delta: f64,
    pub norm_b1: f64,
    pub norm_b2: f64,
    pub de_constants: Vec<DeConstant>,
    pub sq: CheckOutcome,
    pub ed: CheckOutcome,
    pub co: CheckOutcome,
    pub sample_count: usize,
    pub seed: u64,
    pub certified: bool,
}

/// Runs every checker with delta extracted from the interaction matrices.
/// Certification requires positive delta, all three sampled checks passing,
/// and positive distance-entropy evidence for every coordinate.
pub fn full_condition_report(model: &Model, cfg: &SamplerConfig) -> Result<ConditionReport> {
    let beta = beta_matrices(model)?;
    let weights = model.weights()?;
    let norm_b1 = spectral_norm(&beta.b1);
    let norm_b2 = spectral_norm(&beta.b2);
    let delta = delta_from_condition_c(&beta);
    let de_constants: Result<Vec<DeConstant>> = (1..=model.dim())
        .map(|i| match model {
            Model::Gaussian(_) => de_constant(model, i, DeMethod::GaussianExact),
            Model::Grid(_) => de_constant(model, i, DeMethod::GridEmpirical { seed: cfg.seed }),
        })
        .collect();
    let de_constants = de_constants?;
    let sq = check_sq(model, &weights, delta, cfg)?;
    let ed = check_ed(model, &weights, delta, cfg)?;
    let co = check_co(model, &weights, delta, cfg)?;
    let certified = delta > 0.0
        && sq.pass
        && ed.pass
        && co.pass
        && de_constants.iter().all(|c| c.value > 0.0 && c.value.is_finite());
    let sample_count = sq.sample_count + ed.sample_count + co.sample_count;
    Ok(ConditionReport {
        delta,
        norm_b1,
        norm_b2,
        de_constants,
        sq,
        ed,
        co,
        sample_count,
        seed: cfg.seed,
        certified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_gaussian, GridModel};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn gaussian_coupled(beta: f64) -> Model {
        Model::Gaussian(
            build_gaussian(
                DMatrix::from_row_slice(2, 2, &[1.0, beta, beta, 1.0]),
                DVector::zeros(2),
            )
            .unwrap(),
        )
    }

    fn small_cfg(seed: u64) -> SamplerConfig {
        SamplerConfig {
            count: 2000,
            seed,
            exhaustive: false,
        }
    }

    #[test]
    fn beta_matrices_gaussian_examples() {
        let b = beta_matrices(&Model::Gaussian(
            build_gaussian(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap(),
        ))
        .unwrap();
        assert_eq!(b.method, PartialsMethod::Exact);
        assert_eq!(b.b1.amax(), 0.0);
        assert_eq!(b.b2.amax(), 0.0);

        let b = beta_matrices(&gaussian_coupled(0.25)).unwrap();
        assert_abs_diff_eq!(b.b1[(0, 1)], 0.25);
        assert_eq!(b.b1[(1, 0)], 0.0);
        assert_abs_diff_eq!(b.b2[(1, 0)], 0.25);
        assert_eq!(b.a1, b.b1.abs());

        // tridiagonal, unit diagonal, off-diagonal 0.2
        let n = 4;
        let mut j = DMatrix::identity(n, n);
        for i in 0..n - 1 {
            j[(i, i + 1)] = 0.2;
            j[(i + 1, i)] = 0.2;
        }
        let b = beta_matrices(&Model::Gaussian(
            build_gaussian(j, DVector::zeros(n)).unwrap(),
        ))
        .unwrap();
        for i in 0..n - 1 {
            assert_abs_diff_eq!(b.b1[(i, i + 1)], 0.2);
        }
    }

    #[test]
    fn beta_matrices_need_partials() {
        let m = GridModel::from_fn(
            vec![vec![-1.0, 1.0], vec![-1.0, 1.0]],
            vec![vec![1.0; 2]; 2],
            |x| 0.1 * x[0] * x[1],
        )
        .unwrap()
        .with_weights(Weights::uniform(2))
        .unwrap();
        assert!(matches!(
            beta_matrices(&Model::Grid(m)),
            Err(Error::PartialsUnavailable)
        ));
    }

    #[test]
    fn beta_matrices_from_expression() {
        let m = GridModel::from_expr(
            vec![vec![-1.0, 1.0], vec![-1.0, 1.0]],
            vec![vec![1.0; 2]; 2],
            crate::expr::HamiltonianExpr::parse("0.25*x1*x2", 2).unwrap(),
        )
        .unwrap()
        .with_weights(Weights::uniform(2))
        .unwrap();
        let b = beta_matrices(&Model::Grid(m)).unwrap();
        assert_eq!(b.method, PartialsMethod::AnalyticSup);
        assert_abs_diff_eq!(b.b1[(0, 1)], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(b.a2[(1, 0)], 0.25, epsilon = 1e-14);
    }

    // Power-iteration oracle for the largest singular value.
    fn power_iteration_norm(m: &DMatrix<f64>) -> f64 {
        let mtm = m.transpose() * m;
        let mut v = DVector::from_element(m.ncols(), 1.0).normalize();
        for _ in 0..10_000 {
            v = (&mtm * v).normalize();
        }
        (&mtm * &v).dot(&v).sqrt()
    }

    #[test]
    fn spectral_norm_examples() {
        assert_abs_diff_eq!(spectral_norm(&DMatrix::identity(3, 3)), 1.0, epsilon = 1e-12);
        let shift = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(spectral_norm(&shift), 1.0, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let m = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            assert_abs_diff_eq!(spectral_norm(&m), power_iteration_norm(&m), epsilon = 1e-9);
        }
    }

    #[test]
    fn delta_examples() {
        let b = beta_matrices(&Model::Gaussian(
            build_gaussian(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap(),
        ))
        .unwrap();
        assert_abs_diff_eq!(delta_from_condition_c(&b), 1.0);
        let b = beta_matrices(&gaussian_coupled(0.25)).unwrap();
        assert_abs_diff_eq!(delta_from_condition_c(&b), 0.5, epsilon = 1e-12);
        let b = beta_matrices(&gaussian_coupled(0.6)).unwrap();
        assert_abs_diff_eq!(delta_from_condition_c(&b), -0.2, epsilon = 1e-12);
    }

    #[test]
    fn delta_antitone_in_coupling() {
        let mut last = f64::INFINITY;
        let mut s = 0.0;
        while s <= 0.9 {
            let d = delta_from_condition_c(&beta_matrices(&gaussian_coupled(s)).unwrap());
            assert!(d <= last + 1e-12);
            last = d;
            s += 0.05;
        }
    }

    #[test]
    fn b_norm_bounded_by_a_norm() {
        let m = GridModel::from_expr(
            vec![vec![-1.0, 0.0, 1.0], vec![-1.0, 0.0, 1.0]],
            vec![vec![1.0; 3]; 2],
            crate::expr::HamiltonianExpr::parse("0.2*x1*x2 + 0.1*cosh(x1)*x2", 2).unwrap(),
        )
        .unwrap()
        .with_weights(Weights::uniform(2))
        .unwrap();
        let b = beta_matrices(&Model::Grid(m)).unwrap();
        assert!(spectral_norm(&b.b1) <= spectral_norm(&b.a1) + 1e-12);
        assert!(spectral_norm(&b.b2) <= spectral_norm(&b.a2) + 1e-12);
    }

    #[test]
    fn sq_defect_examples() {
        let model = gaussian_coupled(0.25);
        let w = Weights::uniform(2);
        let zeta = [0.3, -0.7];
        // degenerate quintuple
        let t = [1.0, 2.0];
        assert_abs_diff_eq!(
            sq_defect(&model, &w, 0.5, &zeta, &t, &t, &[0.0, 1.0], &[0.0, 0.0]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // tight quintuple: t-u = e1, y-z = e2
        let (t, u) = ([1.0, 5.0], [0.0, 5.0]);
        let (y, z) = ([9.0, 1.0], [9.0, 0.0]);
        let d = sq_defect(&model, &w, 0.5, &zeta, &t, &u, &y, &z).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
        let d = sq_defect(&model, &w, 0.6, &zeta, &t, &u, &y, &z).unwrap();
        assert_abs_diff_eq!(d, 0.05, epsilon = 1e-12);
    }

    // For a quadratic Hamiltonian the interleaved double differences reduce
    // to bilinear forms in the difference vectors.
    #[test]
    fn gaussian_double_difference_bilinear_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 3;
        let mut j = DMatrix::identity(n, n);
        j[(0, 1)] = 0.2;
        j[(1, 0)] = 0.2;
        j[(1, 2)] = -0.15;
        j[(2, 1)] = -0.15;
        j[(0, 2)] = 0.1;
        j[(2, 0)] = 0.1;
        let model = Model::Gaussian(build_gaussian(j.clone(), DVector::zeros(n)).unwrap());
        for _ in 0..40 {
            let mut pt = || -> Vec<f64> { (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect() };
            let (zeta, t, u, y, z) = (pt(), pt(), pt(), pt(), pt());
            let mut upper = 0.0;
            let mut lower = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let prod = j[(a, b)] * (t[a] - u[a]) * (y[b] - z[b]);
                    if a < b {
                        upper += prod;
                    } else if a > b {
                        lower += prod;
                    }
                }
            }
            let got = sq_double_differences(&model, &zeta, &t, &u, &y, &z).unwrap();
            assert_abs_diff_eq!(got, upper.abs().max(lower.abs()), epsilon = 1e-9);
        }
    }

    #[test]
    fn check_sq_independent_model_passes() {
        let model = Model::Gaussian(
            build_gaussian(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap(),
        );
        let out = check_sq(&model, &Weights::uniform(2), 1.0, &small_cfg(1)).unwrap();
        assert!(out.pass, "worst defect {}", out.worst_defect);
        assert!(out.worst_ratio.abs() <= 1e-9);
    }

    #[test]
    fn check_sq_ratio_recovers_interaction_norm() {
        let model = gaussian_coupled(0.25);
        let w = Weights::uniform(2);
        let out = check_sq(&model, &w, 0.5, &small_cfg(2)).unwrap();
        assert!(out.pass, "worst defect {}", out.worst_defect);
        assert!((out.worst_ratio - 0.25).abs() <= 1e-6, "{}", out.worst_ratio);
    }

    #[test]
    fn check_sq_detects_overclaimed_delta() {
        let model = gaussian_coupled(0.25);
        let w = Weights::uniform(2);
        let out = check_sq(&model, &w, 0.8, &small_cfg(3)).unwrap();
        assert!(!out.pass);
        let wit = out.witness.unwrap();
        // witness replay
        let d = sq_defect(
            &model, &w, 0.8, &wit[0], &wit[1], &wit[2], &wit[3], &wit[4],
        )
        .unwrap();
        assert!(d > 1e-9);
        assert_abs_diff_eq!(d, out.worst_defect, epsilon = 1e-12);
    }

    #[test]
    fn check_ed_gaussian() {
        let model = gaussian_coupled(0.25);
        let w = Weights::uniform(2);
        let out = check_ed(&model, &w, 0.5, &small_cfg(4)).unwrap();
        assert!(out.pass, "worst ratio {}", out.worst_ratio);
        // raising delta past the admissible value produces violations
        let out = check_ed(&model, &w, 0.7, &small_cfg(5)).unwrap();
        assert!(out.worst_ratio > 1.0 + 1e-9);
        assert!(!out.pass);
    }

    #[test]
    fn check_co_gaussian() {
        let model = gaussian_coupled(0.25);
        let w = Weights::uniform(2);
        let out = check_co(&model, &w, 0.5, &small_cfg(6)).unwrap();
        assert!(out.pass, "worst ratio {}", out.worst_ratio);
        // independent model: conditionals never move, any delta <= 1 passes
        let ind = Model::Gaussian(
            build_gaussian(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap(),
        );
        let out = check_co(&ind, &Weights::uniform(2), 1.0, &small_cfg(7)).unwrap();
        assert!(out.pass);
        assert!(out.worst_defect <= 1e-12);
    }

    #[test]
    fn checks_exhaustive_on_tiny_grid() {
        // Two-point conditionals have weak distance-entropy constants, so the
        // weights must sit below 2*D/W^2 of the worst conditional pair for the
        // contractivity bound to hold; rho = 0.5 leaves delta = 0.2 > 0.
        let w = Weights::new(vec![0.5, 0.5]).unwrap();
        let m = GridModel::from_expr(
            vec![vec![-1.0, 1.0], vec![-1.0, 1.0]],
            vec![vec![1.0; 2]; 2],
            crate::expr::HamiltonianExpr::parse("0.2*x1*x2", 2).unwrap(),
        )
        .unwrap()
        .with_weights(w.clone())
        .unwrap();
        let model = Model::Grid(m);
        let beta = beta_matrices(&model).unwrap();
        let delta = delta_from_condition_c(&beta);
        assert_abs_diff_eq!(delta, 0.2, epsilon = 1e-12);
        let cfg = SamplerConfig {
            count: 0,
            seed: 0,
            exhaustive: true,
        };
        let sq = check_sq(&model, &w, delta, &cfg).unwrap();
        assert!(sq.pass, "worst defect {}", sq.worst_defect);
        assert_eq!(sq.sample_count, 4usize.pow(5));
        let ed = check_ed(&model, &w, delta, &cfg).unwrap();
        assert!(ed.pass, "worst ratio {}", ed.worst_ratio);
        let co = check_co(&model, &w, delta, &cfg).unwrap();
        assert!(co.pass, "worst ratio {}", co.worst_ratio);
    }

    #[test]
    fn de_constant_gaussian_exact() {
        let model = gaussian_coupled(0.25);
        let c = de_constant(&model, 1, DeMethod::GaussianExact).unwrap();
        assert_abs_diff_eq!(c.value, 1.0);
        assert!(!c.upper_bound_only);
        // the exact constant is achieved by the translated family:
        // D = m^2/(2 sigma^2), W^2 = m^2, ratio = 1/sigma^2 for every m
        let var = 2.5;
        for m in [0.3, 1.0, 2.0] {
            let d = m * m / (2.0 * var);
            let w = w2_gaussian_1d(m, var, 0.0, var).unwrap();
            assert_abs_diff_eq!(2.0 * d / (w * w), 1.0 / var, epsilon = 1e-12);
        }
    }

    #[test]
    fn de_constant_grid_empirical() {
        // log-concave 5-point discretization of a unit Gaussian
        let grid: Vec<f64> = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
        let m = GridModel::from_expr(
            vec![grid],
            vec![vec![1.0; 5]],
            crate::expr::HamiltonianExpr::parse("x1^2/2", 1).unwrap(),
        )
        .unwrap()
            .with_weights(Weights::uniform(1))
            .unwrap();
        let model = Model::Grid(m);
        let a = de_constant(&model, 1, DeMethod::GridEmpirical { seed: 1 }).unwrap();
        let b = de_constant(&model, 1, DeMethod::GridEmpirical { seed: 2 }).unwrap();
        assert!(a.value > 0.0 && a.value.is_finite());
        assert!(a.upper_bound_only);
        assert!((a.value - b.value).abs() <= 0.1 * a.value.max(b.value));
    }

    #[test]
    fn full_report_certifies_weak_coupling() {
        let r = full_condition_report(&gaussian_coupled(0.25), &small_cfg(8)).unwrap();
        assert_abs_diff_eq!(r.delta, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.norm_b1, 0.25, epsilon = 1e-12);
        assert!(r.certified);

        let r = full_condition_report(
            &Model::Gaussian(build_gaussian(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap()),
            &small_cfg(9),
        )
        .unwrap();
        assert_abs_diff_eq!(r.delta, 1.0);
        assert!(r.certified);

        let r = full_condition_report(&gaussian_coupled(0.6), &small_cfg(10)).unwrap();
        assert_abs_diff_eq!(r.delta, -0.2, epsilon = 1e-12);
        assert!(!r.certified);
    }
}
