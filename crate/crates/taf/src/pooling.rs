//! Non-learned baselines: global max/sum/mean pooling over the time axis and
//! fixed temporal-pyramid filter banks.

use crate::error::{Result, TafError};
use crate::filterbank::{FeatureSequence, FilterParams};
use crate::matrix::Matrix;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Sum,
    Mean,
}

impl PoolMode {
    pub fn name(self) -> &'static str {
        match self {
            PoolMode::Max => "max",
            PoolMode::Sum => "sum",
            PoolMode::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(PoolMode::Max),
            "sum" => Ok(PoolMode::Sum),
            "mean" => Ok(PoolMode::Mean),
            other => Err(TafError::InvalidArgument(format!(
                "unknown pool mode '{other}'"
            ))),
        }
    }
}

/// Collapses a `T×D` sequence to a `D`-vector along the time axis.
///
/// The empty case is unrepresentable: [`FeatureSequence`] guarantees `T ≥ 1`.
pub fn global_pool<F: Real>(x: &FeatureSequence<F>, mode: PoolMode) -> Vec<F> {
    let t = x.len();
    let d = x.dim();
    let mut out = x.data().row(0).to_vec();
    for r in 1..t {
        for (o, &v) in out.iter_mut().zip(x.data().row(r)) {
            *o = match mode {
                PoolMode::Max => o.max(v),
                PoolMode::Sum | PoolMode::Mean => *o + v,
            };
        }
    }
    if mode == PoolMode::Mean {
        let scale = F::one() / F::of(t as f64);
        for o in &mut out {
            *o = *o * scale;
        }
    }
    debug_assert_eq!(out.len(), d);
    out
}

/// `∂L/∂x` for [`global_pool`]. Max pooling routes the upstream gradient to
/// the earliest argmax frame per dimension (subgradient); sum broadcasts;
/// mean broadcasts scaled by `1/T`.
pub fn global_pool_backward<F: Real>(
    x: &FeatureSequence<F>,
    mode: PoolMode,
    upstream: &[F],
) -> Result<Matrix<F>> {
    let t = x.len();
    let d = x.dim();
    if upstream.len() != d {
        return Err(TafError::ShapeMismatch(format!(
            "upstream has {} entries, sequence dim is {d}",
            upstream.len()
        )));
    }
    let mut grad = Matrix::zeros(t, d);
    match mode {
        PoolMode::Max => {
            for c in 0..d {
                let mut best = 0usize;
                for r in 1..t {
                    if x.data()[(r, c)] > x.data()[(best, c)] {
                        best = r;
                    }
                }
                grad[(best, c)] = upstream[c];
            }
        }
        PoolMode::Sum => {
            for r in 0..t {
                grad.row_mut(r).copy_from_slice(upstream);
            }
        }
        PoolMode::Mean => {
            let scale = F::one() / F::of(t as f64);
            for r in 0..t {
                for (g, &u) in grad.row_mut(r).iter_mut().zip(upstream) {
                    *g = u * scale;
                }
            }
        }
    }
    Ok(grad)
}

/// Fixed (non-learnable) temporal-pyramid filters for a sequence of `seq_len`
/// frames: one filter over the whole span, two over the halves, four over the
/// quarters, ... down to `level` depths — `2^level − 1` filters total.
///
/// Depth `l`, segment `j`: relative center `(j + 0.5) / 2^l` so `g̃ = 2c − 1`,
/// and `δ̃ = 2^{−l}` so the taps span exactly the segment. The width is tied
/// to the segment: `σ = δ/2` for two or more taps, `σ = T / (4·2^l)` for a
/// single tap. `seq_len` fixes the absolute variance since `log σ²` is stored
/// in frame² units.
pub fn pyramid_params<F: Real>(level: usize, taps: usize, seq_len: usize) -> Vec<FilterParams<F>> {
    assert!(level >= 1, "pyramid level must be >= 1");
    assert!(taps >= 1, "tap count must be >= 1");
    assert!(seq_len >= 1, "sequence length must be >= 1");

    let mut filters = Vec::with_capacity((1usize << level) - 1);
    for depth in 0..level {
        let segments = 1usize << depth;
        let delta_tilde = 1.0 / segments as f64;
        for j in 0..segments {
            let c = (j as f64 + 0.5) / segments as f64;
            let sigma = if taps >= 2 {
                // half a tap stride: δ = T/(N−1)·δ̃
                0.5 * seq_len as f64 / (taps - 1) as f64 * delta_tilde
            } else {
                seq_len as f64 / (4.0 * segments as f64)
            };
            filters.push(FilterParams {
                g_tilde: F::of(2.0 * c - 1.0),
                log_delta_tilde: F::of(delta_tilde.ln()),
                log_sigma_sq: F::of((sigma * sigma).ln()),
            });
        }
    }
    filters
}
