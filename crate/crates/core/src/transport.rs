//! Quadratic Wasserstein distances under the weighted product metric.
//!
//! Three exact code paths: the 1-D Gaussian closed form, the Bures-type
//! closed form for multivariate Gaussians (after rescaling coordinates by
//! the root weights), and an exact transportation simplex on grids. A
//! monotone quantile coupling provides an independent 1-D oracle.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{GaussianDensity, GridDensity, Weights};
use crate::tensor;

/// An explicit coupling between two grid laws: support pairs with masses.
#[derive(Debug, Clone)]
pub struct CouplingPlan {
    pub entries: Vec<PlanEntry>,
}

#[derive(Debug, Clone)]
pub struct PlanEntry {
    /// Source point coordinates.
    pub x: Vec<f64>,
    /// Target point coordinates.
    pub y: Vec<f64>,
    /// Flat state index of the source in the support enumeration.
    pub source: usize,
    /// Flat state index of the target in the support enumeration.
    pub target: usize,
    pub mass: f64,
}

impl CouplingPlan {
    /// Largest violation of the marginal constraints against the given
    /// point masses (indexed like the support enumerations used to build
    /// the plan).
    pub fn marginal_residual(&self, p_mass: &[f64], q_mass: &[f64]) -> f64 {
        let mut row = vec![0.0f64; p_mass.len()];
        let mut col = vec![0.0f64; q_mass.len()];
        for e in &self.entries {
            row[e.source] += e.mass;
            col[e.target] += e.mass;
        }
        let mut worst: f64 = 0.0;
        for (a, b) in row.iter().zip(p_mass) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in col.iter().zip(q_mass) {
            worst = worst.max((a - b).abs());
        }
        worst
    }
}

/// `W(N(m1,v1), N(m2,v2)) = sqrt((m1-m2)^2 + (sqrt(v1)-sqrt(v2))^2)`.
pub fn w2_gaussian_1d(mean_p: f64, var_p: f64, mean_q: f64, var_q: f64) -> Result<f64> {
    if !(var_p > 0.0 && var_q > 0.0) {
        return Err(Error::NotPositiveDefinite(var_p.min(var_q)));
    }
    let dm = mean_p - mean_q;
    let ds = var_p.sqrt() - var_q.sqrt();
    Ok((dm * dm + ds * ds).sqrt())
}

/// Symmetric PSD square root by eigendecomposition. Eigenvalues are floored
/// at zero; anything below `-1e-10` is a genuine breach and is rejected.
fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -1e-10 {
        return Err(Error::NonPsdIntermediate(min));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Weighted Gaussian W-distance: rescale each coordinate by the root
/// weight, then apply the Bures formula
/// `W^2 = |m_p - m_q|^2 + tr(S_p + S_q - 2 (S_p^{1/2} S_q S_p^{1/2})^{1/2})`
/// to the rescaled means and covariances.
pub fn w2_gaussian_weighted(
    p: &GaussianDensity,
    q: &GaussianDensity,
    weights: &Weights,
) -> Result<f64> {
    let n = p.dim();
    if q.dim() != n || weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if q.dim() != n { q.dim() } else { weights.len() },
        });
    }
    let scale = DVector::from_iterator(n, weights.rho().iter().map(|r| r.sqrt()));
    let t = DMatrix::from_diagonal(&scale);
    let mp = &t * p.mean();
    let mq = &t * q.mean();
    let sp = &t * p.cov() * &t;
    let sq = &t * q.cov() * &t;
    let sp_root = matrix_sqrt_psd(&sp)?;
    let cross = matrix_sqrt_psd(&(&sp_root * &sq * &sp_root))?;
    let w2 = (mp - mq).norm_squared() + (sp + sq - cross * 2.0).trace();
    Ok(w2.max(0.0).sqrt())
}

/// Support of a grid law: (coordinates, flat tensor index, mass) of each
/// charged state.
fn support(d: &GridDensity) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dims = d.shape();
    let mut pts = Vec::new();
    let mut mass = Vec::new();
    let mut idx = vec![0usize; dims.len()];
    let mut flat = 0usize;
    loop {
        let lm = d.log_mass()[flat];
        if lm > f64::NEG_INFINITY {
            let x: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| d.grids()[k][i])
                .collect();
            pts.push(x);
            mass.push(lm.exp());
        }
        flat += 1;
        if !tensor::next_index(&mut idx, &dims) {
            break;
        }
    }
    (pts, mass)
}

/// Exact optimal transport between two laws on a common product grid with
/// cost `d(x,y)^2 = sum_i rho_i (x_i - y_i)^2`. Returns the W-distance
/// (root of the optimal cost) and an optimal plan.
pub fn w2_grid_exact(
    p: &GridDensity,
    q: &GridDensity,
    weights: &Weights,
) -> Result<(f64, CouplingPlan)> {
    if p.grids() != q.grids() {
        return Err(Error::SupportMismatch("transport grids differ"));
    }
    if weights.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: weights.len(),
        });
    }
    let (xs, mut a) = support(p);
    let (ys, mut b) = support(q);
    let m = xs.len();
    let n = ys.len();
    if m == 0 || n == 0 {
        return Err(Error::InfeasibleMarginals(1.0));
    }
    if m.saturating_mul(n) > 1_000_000 {
        return Err(Error::SizeLimitExceeded {
            got: m.saturating_mul(n),
            cap: 1_000_000,
        });
    }
    let sum_a: f64 = a.iter().sum();
    let sum_b: f64 = b.iter().sum();
    if (sum_a - 1.0).abs() > 1e-9 || (sum_b - 1.0).abs() > 1e-9 {
        return Err(Error::InfeasibleMarginals(
            (sum_a - 1.0).abs().max((sum_b - 1.0).abs()),
        ));
    }
    // balance exactly so the simplex sees a feasible problem
    let ratio = sum_a / sum_b;
    for v in &mut b {
        *v *= ratio;
    }
    let cost = |i: usize, j: usize| -> f64 {
        xs[i]
            .iter()
            .zip(&ys[j])
            .zip(weights.rho())
            .map(|((x, y), r)| r * (x - y) * (x - y))
            .sum()
    };
    let plan = transport_simplex(&a, &b, &cost)?;
    let mut total = 0.0;
    let mut entries = Vec::new();
    for &(i, j, mass) in &plan {
        if mass <= 0.0 {
            continue;
        }
        total += mass * cost(i, j);
        entries.push(PlanEntry {
            x: xs[i].clone(),
            y: ys[j].clone(),
            source: i,
            target: j,
            mass,
        });
    }
    // restore the source-side normalization for reporting
    let _ = &mut a;
    Ok((total.max(0.0).sqrt(), CouplingPlan { entries }))
}

/// Dense transportation simplex with northwest-corner start and Bland's
/// lowest-index rule for both the entering and the leaving variable, so
/// every run is deterministic and degenerate ties cannot cycle.
fn transport_simplex(
    a: &[f64],
    b: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
) -> Result<Vec<(usize, usize, f64)>> {
    let m = a.len();
    let n = b.len();
    let mut x = vec![0.0f64; m * n];
    let mut basic = vec![false; m * n];
    // northwest corner: exactly m + n - 1 basic cells forming a tree
    let mut rem_a = a.to_vec();
    let mut rem_b = b.to_vec();
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let t = rem_a[i].min(rem_b[j]).max(0.0);
        x[i * n + j] = t;
        basic[i * n + j] = true;
        rem_a[i] -= t;
        rem_b[j] -= t;
        if i + 1 == m && j + 1 == n {
            break;
        }
        if j + 1 == n || (i + 1 != m && rem_a[i] <= rem_b[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }

    let nodes = m + n; // rows 0..m, columns m..m+n
    let max_iter = 2000 * (m + n) + 1000;
    for _ in 0..max_iter {
        // potentials from the basis tree
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        let mut queue = vec![0usize];
        let mut head = 0;
        while head < queue.len() {
            let node = queue[head];
            head += 1;
            if node < m {
                for jj in 0..n {
                    if basic[node * n + jj] && v[jj].is_nan() {
                        v[jj] = cost(node, jj) - u[node];
                        queue.push(m + jj);
                    }
                }
            } else {
                let jj = node - m;
                for ii in 0..m {
                    if basic[ii * n + jj] && u[ii].is_nan() {
                        u[ii] = cost(ii, jj) - v[jj];
                        queue.push(ii);
                    }
                }
            }
        }
        if queue.len() != nodes {
            return Err(Error::SimplexStalled);
        }
        // entering variable: lowest flat index with negative reduced cost
        let mut enter = None;
        'scan: for ii in 0..m {
            for jj in 0..n {
                if !basic[ii * n + jj] && cost(ii, jj) - u[ii] - v[jj] < -1e-12 {
                    enter = Some((ii, jj));
                    break 'scan;
                }
            }
        }
        let (ei, ej) = match enter {
            Some(e) => e,
            None => {
                let mut out = Vec::new();
                for ii in 0..m {
                    for jj in 0..n {
                        if basic[ii * n + jj] {
                            out.push((ii, jj, x[ii * n + jj]));
                        }
                    }
                }
                return Ok(out);
            }
        };
        // unique cycle: path from column ej back to row ei through the tree
        let mut parent = vec![usize::MAX; nodes];
        let mut parent_cell = vec![usize::MAX; nodes];
        let start = m + ej;
        parent[start] = start;
        let mut queue = vec![start];
        let mut head = 0;
        while head < queue.len() {
            let node = queue[head];
            head += 1;
            if node == ei {
                break;
            }
            if node < m {
                for jj in 0..n {
                    let c = node * n + jj;
                    if basic[c] && parent[m + jj] == usize::MAX {
                        parent[m + jj] = node;
                        parent_cell[m + jj] = c;
                        queue.push(m + jj);
                    }
                }
            } else {
                let jj = node - m;
                for ii in 0..m {
                    let c = ii * n + jj;
                    if basic[c] && parent[ii] == usize::MAX {
                        parent[ii] = node;
                        parent_cell[ii] = c;
                        queue.push(ii);
                    }
                }
            }
        }
        if parent[ei] == usize::MAX {
            return Err(Error::SimplexStalled);
        }
        // cells around the cycle, alternating signs, entering cell positive
        let mut minus = Vec::new();
        let mut plus = vec![ei * n + ej];
        let mut node = ei;
        let mut sign_minus = true;
        while node != start {
            let cell = parent_cell[node];
            if sign_minus {
                minus.push(cell);
            } else {
                plus.push(cell);
            }
            sign_minus = !sign_minus;
            node = parent[node];
        }
        let theta = minus.iter().map(|&c| x[c]).fold(f64::INFINITY, f64::min);
        let leave = *minus
            .iter()
            .filter(|&&c| x[c] <= theta)
            .min()
            .ok_or(Error::SimplexStalled)?;
        for &c in &plus {
            x[c] += theta;
        }
        for &c in &minus {
            x[c] = (x[c] - theta).max(0.0);
        }
        basic[ei * n + ej] = true;
        basic[leave] = false;
        x[leave] = 0.0;
    }
    Err(Error::SimplexStalled)
}

/// 1-D W-distance by the monotone (quantile) coupling, the classical
/// optimal coupling on the line. Grids may differ between the two laws.
pub fn w2_quantile_1d(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: p.dim().max(q.dim()),
        });
    }
    let xs = &p.grids()[0];
    let ys = &q.grids()[0];
    let pm: Vec<f64> = p.log_mass().iter().map(|l| l.exp()).collect();
    let qm: Vec<f64> = q.log_mass().iter().map(|l| l.exp()).collect();
    let mut i = 0usize;
    let mut j = 0usize;
    let mut ra = pm[0];
    let mut rb = qm[0];
    let mut w2 = 0.0;
    loop {
        let t = ra.min(rb);
        let d = xs[i] - ys[j];
        w2 += t * d * d;
        ra -= t;
        rb -= t;
        if ra <= 1e-15 {
            i += 1;
            if i == xs.len() {
                break;
            }
            ra = pm[i];
        }
        if rb <= 1e-15 {
            j += 1;
            if j == ys.len() {
                break;
            }
            rb = qm[j];
        }
    }
    Ok(w2.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grid1(grid: Vec<f64>, masses: &[f64]) -> GridDensity {
        GridDensity::new(vec![grid], masses.iter().map(|&m| m.ln()).collect()).unwrap()
    }

    #[test]
    fn gaussian_1d_examples() {
        assert_abs_diff_eq!(w2_gaussian_1d(0.3, 1.5, 0.3, 1.5).unwrap(), 0.0);
        assert_abs_diff_eq!(w2_gaussian_1d(0.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(w2_gaussian_1d(0.0, 1.0, 0.0, 4.0).unwrap(), 1.0);
        assert!(w2_gaussian_1d(0.0, 0.0, 0.0, 1.0).is_err());
    }

    // Discretized-quantile oracle: a fine discretization of both Gaussians
    // fed to the (independent) monotone-coupling path must approach the
    // closed form.
    #[test]
    fn gaussian_1d_against_discretized_quantile_oracle() {
        let disc = |mean: f64, var: f64| {
            let sd = var.sqrt();
            let step = 0.01 * sd;
            let grid: Vec<f64> = (-1200..=1200).map(|k| mean + k as f64 * step).collect();
            let lw: Vec<f64> = grid
                .iter()
                .map(|&x| -(x - mean) * (x - mean) / (2.0 * var))
                .collect();
            GridDensity::normalized(vec![grid], lw).unwrap()
        };
        for (mp, vp, mq, vq) in [(0.0, 1.0, 0.0, 4.0), (0.5, 1.0, -0.5, 2.0)] {
            let oracle = w2_quantile_1d(&disc(mp, vp), &disc(mq, vq)).unwrap();
            let exact = w2_gaussian_1d(mp, vp, mq, vq).unwrap();
            assert!((oracle - exact).abs() < 5e-3, "{oracle} vs {exact}");
        }
    }

    fn gauss(mean: Vec<f64>, cov: Vec<f64>) -> GaussianDensity {
        let n = mean.len();
        GaussianDensity::new(DVector::from_vec(mean), DMatrix::from_row_slice(n, n, &cov)).unwrap()
    }

    #[test]
    fn weighted_gaussian_examples() {
        let w = Weights::uniform(2);
        let p = gauss(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(w2_gaussian_weighted(&p, &p, &w).unwrap(), 0.0);
        // translation with equal covariances
        let q = gauss(vec![3.0, 4.0], vec![1.0, 0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(w2_gaussian_weighted(&p, &q, &w).unwrap(), 5.0, epsilon = 1e-10);
        // diagonal covariances decompose per coordinate
        let q = gauss(vec![0.0, 0.0], vec![4.0, 0.0, 0.0, 1.0]);
        assert_abs_diff_eq!(w2_gaussian_weighted(&p, &q, &w).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn weighted_gaussian_reduces_to_1d() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..50 {
            let (mp, vp) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.2..3.0));
            let (mq, vq) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.2..3.0));
            let a = w2_gaussian_weighted(
                &gauss(vec![mp], vec![vp]),
                &gauss(vec![mq], vec![vq]),
                &Weights::uniform(1),
            )
            .unwrap();
            let b = w2_gaussian_1d(mp, vp, mq, vq).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn weighted_gaussian_commuting_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        for _ in 0..30 {
            let w = Weights::new(vec![rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)]).unwrap();
            let (v1, v2) = (rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0));
            let (u1, u2) = (rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0));
            let m: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = gauss(vec![0.0, 0.0], vec![v1, 0.0, 0.0, v2]);
            let q = gauss(m.clone(), vec![u1, 0.0, 0.0, u2]);
            let got = w2_gaussian_weighted(&p, &q, &w).unwrap();
            let per_axis = w.rho()[0]
                * (m[0] * m[0] + (v1.sqrt() - u1.sqrt()).powi(2))
                + w.rho()[1] * (m[1] * m[1] + (v2.sqrt() - u2.sqrt()).powi(2));
            assert_abs_diff_eq!(got, per_axis.sqrt(), epsilon = 1e-9);
        }
    }

    #[test]
    fn grid_lp_examples() {
        let w = Weights::uniform(1);
        let p = grid1(vec![0.0, 1.0], &[1.0, 0.0]);
        let q = grid1(vec![0.0, 1.0], &[0.0, 1.0]);
        let (wd, plan) = w2_grid_exact(&p, &q, &w).unwrap();
        assert_abs_diff_eq!(wd, 1.0, epsilon = 1e-12);
        assert_eq!(plan.entries.len(), 1);

        let p = grid1(vec![0.0, 1.0], &[0.75, 0.25]);
        let q = grid1(vec![0.0, 1.0], &[0.25, 0.75]);
        let (wd, plan) = w2_grid_exact(&p, &q, &w).unwrap();
        assert_abs_diff_eq!(wd * wd, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(wd, 0.5f64.sqrt(), epsilon = 1e-12);
        assert!(plan.marginal_residual(&[0.75, 0.25], &[0.25, 0.75]) <= 1e-9);

        let (wd, plan) = w2_grid_exact(&p, &p, &w).unwrap();
        assert_abs_diff_eq!(wd, 0.0);
        for e in &plan.entries {
            assert_eq!(e.source, e.target);
        }
    }

    fn random_1d(rng: &mut ChaCha8Rng, len: usize) -> GridDensity {
        let mut grid: Vec<f64> = (0..len)
            .map(|k| k as f64 + rng.gen_range(-0.3..0.3))
            .collect();
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lw: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        GridDensity::normalized(vec![grid], lw).unwrap()
    }

    #[test]
    fn lp_matches_quantile_on_random_1d_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..50 {
            let len = rng.gen_range(2..8);
            let grid: Vec<f64> = {
                let mut g: Vec<f64> = (0..len)
                    .map(|k| k as f64 + rng.gen_range(-0.3..0.3))
                    .collect();
                g.sort_by(|a, b| a.partial_cmp(b).unwrap());
                g
            };
            let mk = |rng: &mut ChaCha8Rng| {
                let lw: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
                GridDensity::normalized(vec![grid.clone()], lw).unwrap()
            };
            let p = mk(&mut rng);
            let q = mk(&mut rng);
            let (lp, plan) = w2_grid_exact(&p, &q, &Weights::uniform(1)).unwrap();
            let quant = w2_quantile_1d(&p, &q).unwrap();
            assert!((lp - quant).abs() <= 1e-9, "trial {trial}: {lp} vs {quant}");
            let pm: Vec<f64> = p.log_mass().iter().map(|l| l.exp()).collect();
            let qm: Vec<f64> = q.log_mass().iter().map(|l| l.exp()).collect();
            assert!(plan.marginal_residual(&pm, &qm) <= 1e-9);
        }
    }

    #[test]
    fn product_laws_decompose_across_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let p1 = random_1d(&mut rng, 3);
            let q1 = {
                let lw: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                GridDensity::normalized(vec![p1.grids()[0].clone()], lw).unwrap()
            };
            let p2 = random_1d(&mut rng, 2);
            let q2 = {
                let lw: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
                GridDensity::normalized(vec![p2.grids()[0].clone()], lw).unwrap()
            };
            let prod = |a: &GridDensity, b: &GridDensity| {
                let mut lm = Vec::new();
                for &la in a.log_mass() {
                    for &lb in b.log_mass() {
                        lm.push(la + lb);
                    }
                }
                GridDensity::new(vec![a.grids()[0].clone(), b.grids()[0].clone()], lm).unwrap()
            };
            let w = Weights::uniform(2);
            let (joint, _) = w2_grid_exact(&prod(&p1, &p2), &prod(&q1, &q2), &w).unwrap();
            let (w1, _) = w2_grid_exact(&p1, &q1, &Weights::uniform(1)).unwrap();
            let (w2d, _) = w2_grid_exact(&p2, &q2, &Weights::uniform(1)).unwrap();
            let decomposed = (w1 * w1 + w2d * w2d).sqrt();
            assert!((joint - decomposed).abs() <= 1e-9, "{joint} vs {decomposed}");
        }
    }

    #[test]
    fn metric_axioms_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let grid: Vec<f64> = vec![-1.0, 0.0, 0.5, 2.0];
        let mk = |rng: &mut ChaCha8Rng| {
            let lw: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            GridDensity::normalized(vec![grid.clone()], lw).unwrap()
        };
        let w = Weights::uniform(1);
        for _ in 0..30 {
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let c = mk(&mut rng);
            let (dab, _) = w2_grid_exact(&a, &b, &w).unwrap();
            let (dba, _) = w2_grid_exact(&b, &a, &w).unwrap();
            let (dbc, _) = w2_grid_exact(&b, &c, &w).unwrap();
            let (dac, _) = w2_grid_exact(&a, &c, &w).unwrap();
            assert!((dab - dba).abs() <= 1e-9);
            assert!(dab >= 0.0);
            assert!(dab + dbc - dac >= -1e-9);
            // quantile path agrees with its own axioms
            let qab = w2_quantile_1d(&a, &b).unwrap();
            let qba = w2_quantile_1d(&b, &a).unwrap();
            assert!((qab - qba).abs() <= 1e-9);
            assert!(
                qab + w2_quantile_1d(&b, &c).unwrap() - w2_quantile_1d(&a, &c).unwrap() >= -1e-9
            );
        }
    }

    #[test]
    fn weight_scaling_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let p = random_1d(&mut rng, 4);
        let q = {
            let lw: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            GridDensity::normalized(vec![p.grids()[0].clone()], lw).unwrap()
        };
        for c in [0.25, 2.0, 9.0] {
            let (base, _) = w2_grid_exact(&p, &q, &Weights::uniform(1)).unwrap();
            let (scaled, _) = w2_grid_exact(&p, &q, &Weights::uniform(1).scaled(c)).unwrap();
            assert!((scaled - c.sqrt() * base).abs() <= 1e-9);
            // closed form scales exactly
            let gp = gauss(vec![0.3], vec![1.2]);
            let gq = gauss(vec![-0.4], vec![0.7]);
            let g1 = w2_gaussian_weighted(&gp, &gq, &Weights::uniform(1)).unwrap();
            let g2 = w2_gaussian_weighted(&gp, &gq, &Weights::uniform(1).scaled(c)).unwrap();
            assert_abs_diff_eq!(g2, c.sqrt() * g1, epsilon = 1e-12);
        }
    }

    #[test]
    fn quantile_point_masses() {
        let p = grid1(vec![0.0], &[1.0]);
        let q = grid1(vec![3.0], &[1.0]);
        assert_abs_diff_eq!(w2_quantile_1d(&p, &q).unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w2_quantile_1d(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let p = grid1(vec![0.0, 1.0], &[0.5, 0.5]);
        let q = grid1(vec![0.0, 2.0], &[0.5, 0.5]);
        assert!(matches!(
            w2_grid_exact(&p, &q, &Weights::uniform(1)),
            Err(Error::SupportMismatch(_))
        ));
    }
}
