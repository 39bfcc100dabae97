//! Temporal attention filters: a bank of Gaussian taps placed over a
//! variable-length sequence in relative coordinates.
//!
//! One filter is the learnable triple (g̃, log δ̃, log σ²). Materialized on a
//! sequence of length `T` with `N` taps it becomes an `N×T` row-normalized
//! weight matrix: tap `i` is a Gaussian over frame indices centered at
//!
//! ```text
//! g   = 0.5 · T · (g̃ + 1)
//! δ   = T / (N − 1) · δ̃          (δ = 0 when N = 1)
//! μ_i = g + (i − 0.5·N + 0.5) · δ
//! ```
//!
//! Reading a `T×D` sequence through the bank yields an `N×D` summary, and
//! every step is differentiable in the three parameters and the input.

use crate::error::{Result, TafError};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Lower clamp for a tap's normalization constant. A tap pushed far outside
/// the frame grid keeps a bounded, attenuated output instead of dividing by a
/// vanishing sum.
pub const NORM_EPSILON: f64 = 1e-8;

/// Learnable parameters of one temporal attention filter.
///
/// `g_tilde` is the unconstrained relative center; stride and variance live in
/// log space so that δ̃ and σ² stay positive. The same struct doubles as the
/// gradient triple returned by [`read_backward`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterParams<F> {
    pub g_tilde: F,
    pub log_delta_tilde: F,
    pub log_sigma_sq: F,
}

impl<F: Real> FilterParams<F> {
    pub fn new(g_tilde: F, log_delta_tilde: F, log_sigma_sq: F) -> Result<Self> {
        let p = FilterParams {
            g_tilde,
            log_delta_tilde,
            log_sigma_sq,
        };
        if !p.is_finite() {
            return Err(TafError::InvalidArgument(format!(
                "non-finite filter parameters: {p:?}"
            )));
        }
        Ok(p)
    }

    /// The all-zero triple: centered, stride spanning the whole sequence,
    /// unit variance.
    pub fn centered() -> Self {
        FilterParams {
            g_tilde: F::zero(),
            log_delta_tilde: F::zero(),
            log_sigma_sq: F::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.g_tilde.is_finite() && self.log_delta_tilde.is_finite() && self.log_sigma_sq.is_finite()
    }

    /// δ̃ = exp(log δ̃).
    pub fn delta_tilde(&self) -> F {
        self.log_delta_tilde.exp()
    }

    /// σ² = exp(log σ²).
    pub fn sigma_sq(&self) -> F {
        self.log_sigma_sq.exp()
    }

    /// Filter center as a fraction of sequence length: 0.5·(g̃ + 1).
    pub fn center_rel(&self) -> F {
        F::of(0.5) * (self.g_tilde + F::one())
    }

    /// Absolute center in frames for a sequence of `seq_len` frames.
    pub fn center_frames(&self, seq_len: usize) -> F {
        F::of(0.5) * F::of(seq_len as f64) * (self.g_tilde + F::one())
    }

    /// Absolute tap stride in frames; zero for a single tap.
    pub fn stride_frames(&self, seq_len: usize, taps: usize) -> F {
        if taps < 2 {
            F::zero()
        } else {
            F::of(seq_len as f64) / F::of((taps - 1) as f64) * self.delta_tilde()
        }
    }
}

/// A filter materialized on one concrete sequence length: the `N×T`
/// row-normalized tap weights plus what the backward pass needs.
#[derive(Clone, Debug)]
pub struct FilterBank<F> {
    weights: Matrix<F>,
    mu: Vec<F>,
    raw_row_sums: Vec<F>,
}

impl<F: Real> FilterBank<F> {
    /// Number of Gaussian taps (rows).
    pub fn taps(&self) -> usize {
        self.weights.rows()
    }

    /// Sequence length the bank was materialized for (columns).
    pub fn seq_len(&self) -> usize {
        self.weights.cols()
    }

    /// Row-normalized tap weights, `taps × seq_len`.
    pub fn weights(&self) -> &Matrix<F> {
        &self.weights
    }

    /// Tap centers in frame coordinates; may lie off the `0..T-1` grid.
    pub fn mu(&self) -> &[F] {
        &self.mu
    }

    /// Pre-clamp sum of the raw Gaussian row; below [`NORM_EPSILON`] means the
    /// degenerate clamp fired for that row.
    pub fn raw_row_sum(&self, tap: usize) -> F {
        self.raw_row_sums[tap]
    }

    /// Normalization constant actually divided by: `max(raw sum, ε)`.
    pub fn normalizer(&self, tap: usize) -> F {
        self.raw_row_sums[tap].max(F::of(NORM_EPSILON))
    }
}

/// Builds the `taps × seq_len` Gaussian weight matrix for `params`.
///
/// Tap centers follow the relative-coordinate placement in the module docs;
/// each row is evaluated on the integer frame grid `0..seq_len` and divided by
/// `max(row sum, ε)`.
pub fn materialize<F: Real>(
    params: &FilterParams<F>,
    seq_len: usize,
    taps: usize,
) -> Result<FilterBank<F>> {
    if seq_len == 0 || taps == 0 {
        return Err(TafError::InvalidArgument(format!(
            "materialize needs seq_len >= 1 and taps >= 1, got {seq_len} and {taps}"
        )));
    }
    if !params.is_finite() {
        return Err(TafError::InvalidArgument(format!(
            "non-finite filter parameters: {params:?}"
        )));
    }

    let center = params.center_frames(seq_len);
    let stride = params.stride_frames(seq_len, taps);
    let sigma_sq = params.sigma_sq();
    let two_sigma_sq = F::of(2.0) * sigma_sq;
    let eps = F::of(NORM_EPSILON);

    let mut weights = Matrix::zeros(taps, seq_len);
    let mut mu = Vec::with_capacity(taps);
    let mut raw_row_sums = Vec::with_capacity(taps);

    for i in 0..taps {
        let offset = F::of(i as f64) - F::of(0.5) * F::of(taps as f64) + F::of(0.5);
        let mu_i = center + offset * stride;
        mu.push(mu_i);

        let row = weights.row_mut(i);
        let mut sum = F::zero();
        for (t, w) in row.iter_mut().enumerate() {
            let dt = F::of(t as f64) - mu_i;
            *w = (-(dt * dt) / two_sigma_sq).exp();
            sum = sum + *w;
        }
        let z = sum.max(eps);
        for w in row.iter_mut() {
            *w = *w / z;
        }
        raw_row_sums.push(sum);
    }

    Ok(FilterBank {
        weights,
        mu,
        raw_row_sums,
    })
}

/// Applies the bank to a `T×D` sequence: `out[i,d] = Σ_t w[i,t]·x[t,d]`.
pub fn read<F: Real>(bank: &FilterBank<F>, x: &FeatureSequence<F>) -> Result<Matrix<F>> {
    if bank.seq_len() != x.len() {
        return Err(TafError::ShapeMismatch(format!(
            "bank materialized for {} frames, sequence has {}",
            bank.seq_len(),
            x.len()
        )));
    }
    let taps = bank.taps();
    let dim = x.dim();
    let mut out = Matrix::zeros(taps, dim);
    for i in 0..taps {
        let w_row = bank.weights.row(i);
        let out_row = out.row_mut(i);
        for (t, &w) in w_row.iter().enumerate() {
            for (o, &v) in out_row.iter_mut().zip(x.data().row(t)) {
                *o = *o + w * v;
            }
        }
    }
    Ok(out)
}

/// Gradients of a scalar loss through [`read`] ∘ [`materialize`]: the triple
/// `∂L/∂(g̃, log δ̃, log σ²)` plus `∂L/∂x`.
#[derive(Clone, Debug)]
pub struct ReadGrads<F> {
    pub params: FilterParams<F>,
    pub input: Matrix<F>,
}

/// Analytic backward pass for `L = ⟨upstream, read(materialize(params), x)⟩`.
///
/// `bank` must be the bank materialized from `params` on `x.len()` frames with
/// the forward pass's tap count; `upstream` is `∂L/∂out`, shaped `taps × D`.
pub fn read_backward<F: Real>(
    bank: &FilterBank<F>,
    params: &FilterParams<F>,
    x: &FeatureSequence<F>,
    upstream: &Matrix<F>,
) -> Result<ReadGrads<F>> {
    let taps = bank.taps();
    let seq_len = bank.seq_len();
    if x.len() != seq_len {
        return Err(TafError::ShapeMismatch(format!(
            "bank materialized for {seq_len} frames, sequence has {}",
            x.len()
        )));
    }
    if upstream.rows() != taps || upstream.cols() != x.dim() {
        return Err(TafError::ShapeMismatch(format!(
            "upstream is {}x{}, expected {}x{}",
            upstream.rows(),
            upstream.cols(),
            taps,
            x.dim()
        )));
    }

    let sigma_sq = params.sigma_sq();
    let eps = F::of(NORM_EPSILON);
    let stride = params.stride_frames(seq_len, taps);
    let half = F::of(0.5);

    let mut d_g_tilde = F::zero();
    let mut d_log_delta = F::zero();
    let mut d_log_sigma_sq = F::zero();
    let mut d_input = Matrix::zeros(seq_len, x.dim());

    // Per-tap chain: G[i,t] = Σ_d u[i,d]·x[t,d] is ∂L/∂w[i,t]; push it back
    // through the row normalization and the Gaussian to μ_i and σ².
    let mut g_row = vec![F::zero(); seq_len];
    for i in 0..taps {
        let u_row = upstream.row(i);
        let w_row = bank.weights.row(i);
        let mu_i = bank.mu[i];
        let raw_sum = bank.raw_row_sums[i];
        let z = raw_sum.max(eps);
        let clamped = raw_sum <= eps;

        let mut weighted_g = F::zero();
        for (t, g) in g_row.iter_mut().enumerate() {
            let mut acc = F::zero();
            for (&u, &v) in u_row.iter().zip(x.data().row(t)) {
                acc = acc + u * v;
            }
            *g = acc;
            weighted_g = weighted_g + acc * w_row[t];
        }

        let mut d_mu = F::zero();
        for (t, (&g, &w)) in g_row.iter().zip(w_row).enumerate() {
            // ∂L/∂e[i,t] with e the unnormalized Gaussian value.
            let d_e = if clamped {
                g / z
            } else {
                (g - weighted_g) / z
            };
            let e = w * z;
            let dt = F::of(t as f64) - mu_i;
            d_mu = d_mu + d_e * e * dt / sigma_sq;
            d_log_sigma_sq = d_log_sigma_sq + d_e * e * (dt * dt) / (F::of(2.0) * sigma_sq);
        }

        let offset = F::of(i as f64) - half * F::of(taps as f64) + half;
        d_g_tilde = d_g_tilde + d_mu * half * F::of(seq_len as f64);
        d_log_delta = d_log_delta + d_mu * offset * stride;

        for (t, &w) in w_row.iter().enumerate() {
            for (di, &u) in d_input.row_mut(t).iter_mut().zip(u_row) {
                *di = *di + u * w;
            }
        }
    }

    Ok(ReadGrads {
        params: FilterParams {
            g_tilde: d_g_tilde,
            log_delta_tilde: d_log_delta,
            log_sigma_sq: d_log_sigma_sq,
        },
        input: d_input,
    })
}

/// A variable-length input: `T×D` feature matrix with a class label and an
/// identifier. `T ≥ 1`, `D ≥ 1`, all entries finite.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence<F> {
    data: Matrix<F>,
    label: usize,
    id: String,
}

impl<F: Real> FeatureSequence<F> {
    pub fn new(data: Matrix<F>, label: usize, id: impl Into<String>) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(TafError::InvalidArgument(format!(
                "feature sequence must be at least 1x1, got {}x{}",
                data.rows(),
                data.cols()
            )));
        }
        if !data.is_finite() {
            return Err(TafError::InvalidArgument(
                "feature sequence contains non-finite values".into(),
            ));
        }
        Ok(FeatureSequence {
            data,
            label,
            id: id.into(),
        })
    }

    /// Number of frames (unit observations), `T`.
    #[allow(clippy::len_without_is_empty)] // T >= 1 by construction
    pub fn len(&self) -> usize {
        self.data.rows()
    }

    /// Per-frame feature width, `D`.
    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn data(&self) -> &Matrix<F> {
        &self.data
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    /// Copy with the first `k` frames dropped; `k` must leave at least one.
    pub fn drop_front(&self, k: usize) -> Result<Self> {
        if k >= self.len() {
            return Err(TafError::InvalidArgument(format!(
                "cannot drop {k} of {} frames",
                self.len()
            )));
        }
        let rows = self.len() - k;
        let mut data = Matrix::zeros(rows, self.dim());
        for r in 0..rows {
            data.row_mut(r).copy_from_slice(self.data.row(r + k));
        }
        Ok(FeatureSequence {
            data,
            label: self.label,
            id: self.id.clone(),
        })
    }
}
