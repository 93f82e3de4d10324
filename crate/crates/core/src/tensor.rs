//! Minimal dense multi-index helpers for log-domain grid tensors.
//!
//! Tensors are stored row-major (last coordinate fastest) in a flat
//! `Vec<f64>`. All probability manipulation happens on log values with
//! stable log-sum-exp.

/// Stable log(sum(exp(v))) over a slice of log values.
pub fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = vals.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

pub fn log_sum_exp_iter(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = vals.map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// Row-major strides for `dims`.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

pub fn total(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Flat offset of a multi-index.
pub fn offset(idx: &[usize], strides: &[usize]) -> usize {
    idx.iter().zip(strides).map(|(i, s)| i * s).sum()
}

/// Advances `idx` to the next multi-index in row-major order.
/// Returns false after the last index.
pub fn next_index(idx: &mut [usize], dims: &[usize]) -> bool {
    for k in (0..dims.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

/// Calls `f(base_offset)` for every lane along `axis`: the lane's elements
/// sit at `base_offset + k * strides[axis]` for `k < dims[axis]`.
pub fn for_each_lane(dims: &[usize], axis: usize, mut f: impl FnMut(usize)) {
    let st = strides(dims);
    let mut rest_dims: Vec<usize> = Vec::with_capacity(dims.len().saturating_sub(1));
    let mut rest_strides: Vec<usize> = Vec::with_capacity(dims.len().saturating_sub(1));
    for (k, (&d, &s)) in dims.iter().zip(&st).enumerate() {
        if k != axis {
            rest_dims.push(d);
            rest_strides.push(s);
        }
    }
    if rest_dims.is_empty() {
        f(0);
        return;
    }
    let mut idx = vec![0usize; rest_dims.len()];
    loop {
        f(offset(&idx, &rest_strides));
        if !next_index(&mut idx, &rest_dims) {
            break;
        }
    }
}

/// Log-marginalizes `log_t` (shape `dims`) over `axis`, returning the
/// reduced tensor with that axis removed.
pub fn marginalize_axis(log_t: &[f64], dims: &[usize], axis: usize) -> Vec<f64> {
    let st = strides(dims);
    let axis_len = dims[axis];
    let axis_stride = st[axis];
    let mut out = Vec::with_capacity(log_t.len() / axis_len);
    let mut lane = vec![0.0f64; axis_len];
    for_each_lane(dims, axis, |base| {
        for (k, l) in lane.iter_mut().enumerate() {
            *l = log_t[base + k * axis_stride];
        }
        out.push(log_sum_exp(&lane));
    });
    out
}
