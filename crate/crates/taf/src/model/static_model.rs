//! Static-filter classifier: `M` learned temporal attention filters shared
//! across all inputs, concatenated and fed to the MLP head.

use crate::error::{Result, TafError};
use crate::filterbank::{materialize, read, read_backward, FeatureSequence, FilterBank, FilterParams};
use crate::matrix::Matrix;
use crate::scalar::Real;

use super::head::{HeadCache, MlpHead};

/// `M` filter triples stored flat as `[g̃, log δ̃, log σ²]` per filter, plus
/// the tap count shared by all filters and the classification head.
///
/// Filter outputs are concatenated in `(filter, tap, dim)` order, so the head
/// input width is `M·N·D`.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticModel<F> {
    pub(crate) filter_params: Vec<F>,
    pub(crate) taps: usize,
    pub(crate) head: MlpHead<F>,
}

#[derive(Clone, Debug)]
pub struct StaticCache<F> {
    pub(crate) banks: Vec<FilterBank<F>>,
    pub(crate) concat: Vec<F>,
    pub(crate) head: HeadCache<F>,
}

impl<F: Real> StaticModel<F> {
    pub fn new(filters: &[FilterParams<F>], taps: usize, head: MlpHead<F>) -> Result<Self> {
        if filters.is_empty() || taps == 0 {
            return Err(TafError::InvalidArgument(
                "static model needs at least one filter and one tap".into(),
            ));
        }
        if !head.input_dim().is_multiple_of(filters.len() * taps) {
            return Err(TafError::ShapeMismatch(format!(
                "head input {} is not a multiple of filters*taps = {}",
                head.input_dim(),
                filters.len() * taps
            )));
        }
        let mut filter_params = Vec::with_capacity(filters.len() * 3);
        for p in filters {
            if !p.is_finite() {
                return Err(TafError::InvalidArgument(format!(
                    "non-finite filter parameters: {p:?}"
                )));
            }
            filter_params.extend_from_slice(&[p.g_tilde, p.log_delta_tilde, p.log_sigma_sq]);
        }
        Ok(StaticModel {
            filter_params,
            taps,
            head,
        })
    }

    pub fn filter_count(&self) -> usize {
        self.filter_params.len() / 3
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn feature_dim(&self) -> usize {
        self.head.input_dim() / (self.filter_count() * self.taps)
    }

    pub fn head(&self) -> &MlpHead<F> {
        &self.head
    }

    pub fn filter(&self, m: usize) -> FilterParams<F> {
        FilterParams {
            g_tilde: self.filter_params[3 * m],
            log_delta_tilde: self.filter_params[3 * m + 1],
            log_sigma_sq: self.filter_params[3 * m + 2],
        }
    }

    pub fn set_filter(&mut self, m: usize, p: FilterParams<F>) {
        self.filter_params[3 * m] = p.g_tilde;
        self.filter_params[3 * m + 1] = p.log_delta_tilde;
        self.filter_params[3 * m + 2] = p.log_sigma_sq;
    }

    pub fn forward(&self, x: &FeatureSequence<F>) -> Result<(Vec<F>, StaticCache<F>)> {
        if x.dim() != self.feature_dim() {
            return Err(TafError::ShapeMismatch(format!(
                "model expects feature dim {}, sequence has {}",
                self.feature_dim(),
                x.dim()
            )));
        }
        let m_count = self.filter_count();
        let mut banks = Vec::with_capacity(m_count);
        let mut concat = Vec::with_capacity(self.head.input_dim());
        for m in 0..m_count {
            let bank = materialize(&self.filter(m), x.len(), self.taps)?;
            let out = read(&bank, x)?;
            concat.extend_from_slice(out.data());
            banks.push(bank);
        }
        let head = self.head.forward(&concat)?;
        let probs = head.probs.clone();
        Ok((probs, StaticCache { banks, concat, head }))
    }

    /// Exact reverse of [`Self::forward`] for `dlogits = ∂L/∂logits`.
    /// Returns gradients in a model-shaped mirror plus `∂L/∂x`.
    pub fn backward(
        &self,
        x: &FeatureSequence<F>,
        cache: &StaticCache<F>,
        dlogits: &[F],
    ) -> Result<(StaticModel<F>, Matrix<F>)> {
        if dlogits.len() != self.head.class_count() {
            return Err(TafError::ShapeMismatch(format!(
                "dlogits has {} entries, model has {} classes",
                dlogits.len(),
                self.head.class_count()
            )));
        }
        let (head_grads, dv) = self.head.backward(&cache.concat, &cache.head, dlogits);

        let d = self.feature_dim();
        let block = self.taps * d;
        let mut filter_grads = vec![F::zero(); self.filter_params.len()];
        let mut d_input = Matrix::zeros(x.len(), d);
        for m in 0..self.filter_count() {
            let upstream = Matrix::from_vec(self.taps, d, dv[m * block..(m + 1) * block].to_vec())?;
            let rg = read_backward(&cache.banks[m], &self.filter(m), x, &upstream)?;
            filter_grads[3 * m] = rg.params.g_tilde;
            filter_grads[3 * m + 1] = rg.params.log_delta_tilde;
            filter_grads[3 * m + 2] = rg.params.log_sigma_sq;
            for (acc, &g) in d_input.data_mut().iter_mut().zip(rg.input.data()) {
                *acc = *acc + g;
            }
        }
        Ok((
            StaticModel {
                filter_params: filter_grads,
                taps: self.taps,
                head: head_grads,
            },
            d_input,
        ))
    }

    pub(crate) fn param_arrays(&self) -> Vec<(String, &[F])> {
        let mut v = vec![("filters".to_string(), self.filter_params.as_slice())];
        v.extend(self.head.param_arrays());
        v
    }

    pub(crate) fn param_arrays_mut(&mut self) -> Vec<(String, &mut [F])> {
        let mut v = vec![("filters".to_string(), self.filter_params.as_mut_slice())];
        v.extend(self.head.param_arrays_mut());
        v
    }
}
