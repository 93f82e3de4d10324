//! Spin-system models: the reference measure `q = exp(-V)` with its phase
//! spaces, metric weights and local specifications.
//!
//! Two families are realized exactly: multivariate Gaussians (precision
//! matrix J, linear term b) and finite real grids with a tabulated
//! Hamiltonian. Coordinates are 1-based in every public interface.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::HamiltonianExpr;
use crate::tensor;

/// Hard cap on the number of product-grid states kept for exact enumeration.
pub const MAX_GRID_STATES: usize = 1_000_000;

/// Tolerance for matching a real value against a grid point.
const GRID_MATCH_TOL: f64 = 1e-9;

/// Per-coordinate LSI weights rho_i defining the metric
/// `d(x,y) = sqrt(sum_i rho_i (x_i - y_i)^2)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Weights {
    rho: Vec<f64>,
}

impl Weights {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        for (k, &r) in rho.iter().enumerate() {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::DegenerateSpec(k + 1));
            }
        }
        Ok(Self { rho })
    }

    pub fn uniform(n: usize) -> Self {
        Self { rho: vec![1.0; n] }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// rho_i, 1-based.
    pub fn get(&self, i: usize) -> f64 {
        self.rho[i - 1]
    }

    pub fn min(&self) -> f64 {
        self.rho.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rho: self.rho.iter().map(|r| r * c).collect(),
        }
    }
}

/// The weighted product metric d^(n).
pub fn weighted_distance(weights: &Weights, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != weights.len() || y.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: x.len().max(y.len()),
        });
    }
    let s: f64 = weights
        .rho()
        .iter()
        .zip(x.iter().zip(y))
        .map(|(r, (a, b))| r * (a - b) * (a - b))
        .sum();
    Ok(s.sqrt())
}

/// One-coordinate conditional law Q_i(.|x_bar).
#[derive(Debug, Clone)]
pub enum LocalSpec {
    Gaussian1D { mean: f64, var: f64 },
    GridPmf { grid: Vec<f64>, log_mass: Vec<f64> },
}

/// Gaussian reference measure with Hamiltonian
/// `V(x) = x' J x / 2 - b' x` (up to an additive constant).
#[derive(Debug, Clone)]
pub struct GaussianModel {
    precision: DMatrix<f64>,
    linear: DVector<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Validated constructor for the Gaussian family.
pub fn build_gaussian(precision: DMatrix<f64>, linear: DVector<f64>) -> Result<GaussianModel> {
    GaussianModel::new(precision, linear)
}

impl GaussianModel {
    pub fn new(precision: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let n = precision.nrows();
        if precision.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: precision.ncols(),
            });
        }
        if linear.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: linear.len(),
            });
        }
        let scale = precision.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((precision[(i, j)] - precision[(j, i)]).abs());
            }
        }
        if worst > 1e-12 * scale.max(1.0) {
            return Err(Error::NotSymmetric(worst));
        }
        // Symmetrize exactly before factoring.
        let sym = (&precision + precision.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lambda_min <= 0.0 {
            return Err(Error::NotPositiveDefinite(lambda_min));
        }
        let chol = sym
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite(lambda_min))?;
        let mean = chol.solve(&linear);
        let cov = chol.inverse();
        Ok(Self {
            precision: sym,
            linear,
            mean,
            cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// LSI weights of the local specifications: rho_i = J_ii, the exact
    /// 1-D Gaussian LSI constant of the conditional with variance 1/J_ii.
    pub fn weights(&self) -> Weights {
        Weights {
            rho: (0..self.dim()).map(|i| self.precision[(i, i)]).collect(),
        }
    }

    pub fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let xv = DVector::from_column_slice(x);
        Ok(0.5 * xv.dot(&(&self.precision * &xv)) - self.linear.dot(&xv))
    }

    /// Conditional mean and variance of coordinate `i` (1-based) given a
    /// full configuration `x`; the entry `x[i-1]` is ignored.
    pub fn conditional_at(&self, i: usize, x: &[f64]) -> Result<(f64, f64)> {
        let n = self.dim();
        if i == 0 || i > n {
            return Err(Error::IndexOutOfRange { index: i, dim: n });
        }
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let ii = i - 1;
        let jii = self.precision[(ii, ii)];
        let mut s = self.linear[ii];
        for j in 0..n {
            if j != ii {
                s -= self.precision[(ii, j)] * x[j];
            }
        }
        Ok((s / jii, 1.0 / jii))
    }

    /// Q_i(.|x_bar) with `xbar` the n-1 values of the other coordinates in
    /// ascending coordinate order.
    pub fn local_specification(&self, i: usize, xbar: &[f64]) -> Result<LocalSpec> {
        let n = self.dim();
        if i == 0 || i > n {
            return Err(Error::IndexOutOfRange { index: i, dim: n });
        }
        if xbar.len() != n - 1 {
            return Err(Error::DimensionMismatch {
                expected: n - 1,
                got: xbar.len(),
            });
        }
        let full = insert_at(xbar, i - 1, 0.0);
        let (mean, var) = self.conditional_at(i, &full)?;
        Ok(LocalSpec::Gaussian1D { mean, var })
    }

    pub fn stationary(&self) -> GaussianDensity {
        GaussianDensity {
            mean: self.mean.clone(),
            cov: self.cov.clone(),
        }
    }
}

/// Finite real-grid model: per-coordinate ascending grids, per-point base
/// weights lambda_i, and V tabulated over the full product grid.
#[derive(Debug, Clone)]
pub struct GridModel {
    grids: Vec<Vec<f64>>,
    log_base: Vec<Vec<f64>>,
    v: Vec<f64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    log_norm: f64,
    expr: Option<HamiltonianExpr>,
    weights: Option<Weights>,
}

/// Validated constructor for the grid family from an evaluable Hamiltonian.
pub fn build_grid(
    grids: Vec<Vec<f64>>,
    hamiltonian: impl Fn(&[f64]) -> f64,
    base: Vec<Vec<f64>>,
    weights: Option<Weights>,
) -> Result<GridModel> {
    let mut m = GridModel::from_fn(grids, base, hamiltonian)?;
    if let Some(w) = weights {
        if w.len() != m.dim() {
            return Err(Error::DimensionMismatch {
                expected: m.dim(),
                got: w.len(),
            });
        }
        m.weights = Some(w);
    }
    Ok(m)
}

impl GridModel {
    pub fn from_fn(
        grids: Vec<Vec<f64>>,
        base: Vec<Vec<f64>>,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        Self::build(grids, base, f, None)
    }

    /// Builds from a parsed expression, keeping it for exact mixed partials.
    pub fn from_expr(
        grids: Vec<Vec<f64>>,
        base: Vec<Vec<f64>>,
        expr: HamiltonianExpr,
    ) -> Result<Self> {
        if expr.dim() != grids.len() {
            return Err(Error::DimensionMismatch {
                expected: grids.len(),
                got: expr.dim(),
            });
        }
        let e = expr.clone();
        Self::build(grids, base, move |x| e.eval(x), Some(expr))
    }

    fn build(
        grids: Vec<Vec<f64>>,
        base: Vec<Vec<f64>>,
        f: impl Fn(&[f64]) -> f64,
        expr: Option<HamiltonianExpr>,
    ) -> Result<Self> {
        let n = grids.len();
        if n == 0 {
            return Err(Error::EmptyGrid(0));
        }
        if base.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: base.len(),
            });
        }
        for (k, g) in grids.iter().enumerate() {
            if g.len() < 2 {
                return Err(Error::EmptyGrid(k + 1));
            }
            if !g.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::EmptyGrid(k + 1));
            }
            if base[k].len() != g.len() || base[k].iter().any(|&b| !(b > 0.0 && b.is_finite())) {
                return Err(Error::DegenerateSpec(k + 1));
            }
        }
        let shape: Vec<usize> = grids.iter().map(|g| g.len()).collect();
        let states = tensor::total(&shape);
        if states > MAX_GRID_STATES {
            return Err(Error::SizeLimitExceeded {
                got: states,
                cap: MAX_GRID_STATES,
            });
        }
        let strides = tensor::strides(&shape);
        let log_base: Vec<Vec<f64>> = base
            .iter()
            .map(|b| b.iter().map(|x| x.ln()).collect())
            .collect();
        let mut v = vec![0.0f64; states];
        let mut log_w = vec![0.0f64; states];
        let mut idx = vec![0usize; n];
        let mut point = vec![0.0f64; n];
        loop {
            for (k, &ik) in idx.iter().enumerate() {
                point[k] = grids[k][ik];
            }
            let val = f(&point);
            if !val.is_finite() {
                return Err(Error::NonFiniteHamiltonian(point.clone()));
            }
            let off = tensor::offset(&idx, &strides);
            v[off] = val;
            log_w[off] = -val
                + idx
                    .iter()
                    .enumerate()
                    .map(|(k, &ik)| log_base[k][ik])
                    .sum::<f64>();
            if !tensor::next_index(&mut idx, &shape) {
                break;
            }
        }
        let log_norm = tensor::log_sum_exp(&log_w);
        if !log_norm.is_finite() {
            return Err(Error::NonFiniteHamiltonian(point));
        }
        Ok(Self {
            grids,
            log_base,
            v,
            shape,
            strides,
            log_norm,
            expr,
            weights: None,
        })
    }

    pub fn with_weights(mut self, w: Weights) -> Result<Self> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: w.len(),
            });
        }
        self.weights = Some(w);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.grids.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn grids(&self) -> &[Vec<f64>] {
        &self.grids
    }

    pub fn state_count(&self) -> usize {
        self.v.len()
    }

    pub fn expr(&self) -> Option<&HamiltonianExpr> {
        self.expr.as_ref()
    }

    pub fn weights(&self) -> Option<&Weights> {
        self.weights.as_ref()
    }

    pub fn log_base(&self, i: usize) -> &[f64] {
        &self.log_base[i - 1]
    }

    pub fn v_at(&self, idx: &[usize]) -> f64 {
        self.v[tensor::offset(idx, &self.strides)]
    }

    /// Grid index of `value` on coordinate `i` (1-based).
    pub fn grid_index(&self, i: usize, value: f64) -> Result<usize> {
        let g = &self.grids[i - 1];
        g.iter()
            .position(|&p| (p - value).abs() <= GRID_MATCH_TOL)
            .ok_or(Error::PointNotOnGrid { index: i, value })
    }

    pub fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut idx = Vec::with_capacity(self.dim());
        for (k, &xi) in x.iter().enumerate() {
            idx.push(self.grid_index(k + 1, xi)?);
        }
        Ok(self.v_at(&idx))
    }

    /// Log pmf of Q_i(.|rest) along axis `i0` (0-based) with the other
    /// coordinate indices fixed to `rest_idx` (full-length slice, entry i0
    /// ignored).
    pub(crate) fn local_log_pmf_by_index(&self, i0: usize, rest_idx: &[usize]) -> Vec<f64> {
        let mut idx = rest_idx.to_vec();
        let m = self.shape[i0];
        let mut lw = Vec::with_capacity(m);
        for k in 0..m {
            idx[i0] = k;
            lw.push(-self.v_at(&idx) + self.log_base[i0][k]);
        }
        let z = tensor::log_sum_exp(&lw);
        for v in &mut lw {
            *v -= z;
        }
        lw
    }

    /// Q_i(.|x_bar) with `xbar` the n-1 values of the other coordinates.
    pub fn local_specification(&self, i: usize, xbar: &[f64]) -> Result<LocalSpec> {
        let n = self.dim();
        if i == 0 || i > n {
            return Err(Error::IndexOutOfRange { index: i, dim: n });
        }
        if xbar.len() != n - 1 {
            return Err(Error::DimensionMismatch {
                expected: n - 1,
                got: xbar.len(),
            });
        }
        let full = insert_at(xbar, i - 1, self.grids[i - 1][0]);
        let mut idx = Vec::with_capacity(n);
        for (k, &xk) in full.iter().enumerate() {
            idx.push(self.grid_index(k + 1, xk)?);
        }
        let log_mass = self.local_log_pmf_by_index(i - 1, &idx);
        Ok(LocalSpec::GridPmf {
            grid: self.grids[i - 1].clone(),
            log_mass,
        })
    }

    /// The normalized reference measure as a grid density.
    pub fn stationary(&self) -> GridDensity {
        let mut log_mass = vec![0.0f64; self.v.len()];
        let mut idx = vec![0usize; self.dim()];
        loop {
            let off = tensor::offset(&idx, &self.strides);
            log_mass[off] = -self.v[off]
                + idx
                    .iter()
                    .enumerate()
                    .map(|(k, &ik)| self.log_base[k][ik])
                    .sum::<f64>()
                - self.log_norm;
            if !tensor::next_index(&mut idx, &self.shape) {
                break;
            }
        }
        GridDensity {
            grids: self.grids.clone(),
            log_mass,
        }
    }
}

/// Either model family behind one handle.
#[derive(Debug, Clone)]
pub enum Model {
    Gaussian(GaussianModel),
    Grid(GridModel),
}

impl Model {
    pub fn dim(&self) -> usize {
        match self {
            Model::Gaussian(m) => m.dim(),
            Model::Grid(m) => m.dim(),
        }
    }

    pub fn weights(&self) -> Result<Weights> {
        match self {
            Model::Gaussian(m) => Ok(m.weights()),
            Model::Grid(m) => m
                .weights()
                .cloned()
                .ok_or_else(|| Error::NotCertified("grid model has no LSI weights set".into())),
        }
    }

    pub fn hamiltonian_eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Gaussian(m) => m.hamiltonian(x),
            Model::Grid(m) => m.hamiltonian(x),
        }
    }

    pub fn local_specification(&self, i: usize, xbar: &[f64]) -> Result<LocalSpec> {
        match self {
            Model::Gaussian(m) => m.local_specification(i, xbar),
            Model::Grid(m) => m.local_specification(i, xbar),
        }
    }

    /// The reference measure itself.
    pub fn stationary(&self) -> Density {
        match self {
            Model::Gaussian(m) => Density::Gaussian(m.stationary()),
            Model::Grid(m) => Density::Grid(m.stationary()),
        }
    }
}

/// A Gaussian probability law N(mean, cov).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cov.nrows(),
            });
        }
        let scale = cov.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((cov[(i, j)] - cov[(j, i)]).abs());
            }
        }
        if worst > 1e-10 * scale.max(1.0) {
            return Err(Error::NotSymmetric(worst));
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lambda_min <= 0.0 {
            return Err(Error::NotPositiveDefinite(lambda_min));
        }
        Ok(Self { mean, cov: sym })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// A fully tabulated probability law on a product grid, stored as log
/// point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grids: Vec<Vec<f64>>,
    log_mass: Vec<f64>,
}

impl GridDensity {
    /// Checks normalization to 1e-12 in total mass.
    pub fn new(grids: Vec<Vec<f64>>, log_mass: Vec<f64>) -> Result<Self> {
        let shape: Vec<usize> = grids.iter().map(|g| g.len()).collect();
        if tensor::total(&shape) != log_mass.len() {
            return Err(Error::DimensionMismatch {
                expected: tensor::total(&shape),
                got: log_mass.len(),
            });
        }
        let total = tensor::log_sum_exp(&log_mass);
        if (total.exp() - 1.0).abs() > 1e-12 {
            return Err(Error::InfeasibleMarginals((total.exp() - 1.0).abs()));
        }
        Ok(Self { grids, log_mass })
    }

    /// Normalizes arbitrary finite log weights into a density.
    pub fn normalized(grids: Vec<Vec<f64>>, mut log_weights: Vec<f64>) -> Result<Self> {
        let z = tensor::log_sum_exp(&log_weights);
        if !z.is_finite() {
            return Err(Error::NonFiniteHamiltonian(vec![]));
        }
        for v in &mut log_weights {
            *v -= z;
        }
        Ok(Self {
            grids,
            log_mass: log_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.grids.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.grids.iter().map(|g| g.len()).collect()
    }

    pub fn grids(&self) -> &[Vec<f64>] {
        &self.grids
    }

    pub fn log_mass(&self) -> &[f64] {
        &self.log_mass
    }

    pub(crate) fn log_mass_mut(&mut self) -> &mut [f64] {
        &mut self.log_mass
    }

    /// Marginal over all coordinates except those in `keep` (0-based,
    /// ascending).
    pub fn marginal_keep(&self, keep: &[usize]) -> GridDensity {
        let mut dims = self.shape();
        let mut log_t = self.log_mass.clone();
        // Drop axes from the back so earlier axis numbers stay valid.
        for ax in (0..dims.len()).rev() {
            if !keep.contains(&ax) {
                log_t = tensor::marginalize_axis(&log_t, &dims, ax);
                dims.remove(ax);
            }
        }
        let grids = keep.iter().map(|&k| self.grids[k].clone()).collect();
        GridDensity {
            grids,
            log_mass: log_t,
        }
    }
}

/// One probability law compatible with either model family.
#[derive(Debug, Clone)]
pub enum Density {
    Gaussian(GaussianDensity),
    Grid(GridDensity),
}

impl Density {
    pub fn dim(&self) -> usize {
        match self {
            Density::Gaussian(d) => d.dim(),
            Density::Grid(d) => d.dim(),
        }
    }
}

/// Inserts `value` at position `pos` into a copy of `rest`.
pub(crate) fn insert_at(rest: &[f64], pos: usize, value: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(rest.len() + 1);
    out.extend_from_slice(&rest[..pos]);
    out.push(value);
    out.extend_from_slice(&rest[pos..]);
    out
}
