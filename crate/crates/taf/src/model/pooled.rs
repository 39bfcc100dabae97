//! Baseline classifiers: global pooling (max/sum/mean) and fixed
//! temporal-pyramid filter banks, each followed by the shared MLP head.

use crate::error::{Result, TafError};
use crate::filterbank::{materialize, read, read_backward, FeatureSequence, FilterBank, FilterParams};
use crate::matrix::Matrix;
use crate::pooling::{global_pool, global_pool_backward, pyramid_params, PoolMode};
use crate::scalar::Real;

use super::head::{HeadCache, MlpHead};

/// Global pooling over time, then the head. The head input width is `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledModel<F> {
    pub(crate) mode: PoolMode,
    pub(crate) head: MlpHead<F>,
}

#[derive(Clone, Debug)]
pub struct PooledCache<F> {
    pub(crate) pooled: Vec<F>,
    pub(crate) head: HeadCache<F>,
}

impl<F: Real> PooledModel<F> {
    pub fn new(mode: PoolMode, head: MlpHead<F>) -> Self {
        PooledModel { mode, head }
    }

    pub fn mode(&self) -> PoolMode {
        self.mode
    }

    pub fn feature_dim(&self) -> usize {
        self.head.input_dim()
    }

    pub fn head(&self) -> &MlpHead<F> {
        &self.head
    }

    pub fn forward(&self, x: &FeatureSequence<F>) -> Result<(Vec<F>, PooledCache<F>)> {
        if x.dim() != self.feature_dim() {
            return Err(TafError::ShapeMismatch(format!(
                "model expects feature dim {}, sequence has {}",
                self.feature_dim(),
                x.dim()
            )));
        }
        let pooled = global_pool(x, self.mode);
        let head = self.head.forward(&pooled)?;
        let probs = head.probs.clone();
        Ok((probs, PooledCache { pooled, head }))
    }

    pub fn backward(
        &self,
        x: &FeatureSequence<F>,
        cache: &PooledCache<F>,
        dlogits: &[F],
    ) -> Result<(PooledModel<F>, Matrix<F>)> {
        let (head_grads, d_pooled) = self.head.backward(&cache.pooled, &cache.head, dlogits);
        let d_input = global_pool_backward(x, self.mode, &d_pooled)?;
        Ok((
            PooledModel {
                mode: self.mode,
                head: head_grads,
            },
            d_input,
        ))
    }

    pub(crate) fn param_arrays(&self) -> Vec<(String, &[F])> {
        self.head.param_arrays()
    }

    pub(crate) fn param_arrays_mut(&mut self) -> Vec<(String, &mut [F])> {
        self.head.param_arrays_mut()
    }
}

/// Fixed temporal-pyramid filters, then the head. The filters are recomputed
/// for every sequence length and carry no trainable parameters; only the head
/// learns. Head input width is `(2^level − 1)·taps·D`.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidModel<F> {
    pub(crate) level: usize,
    pub(crate) taps: usize,
    pub(crate) head: MlpHead<F>,
}

#[derive(Clone, Debug)]
pub struct PyramidCache<F> {
    pub(crate) params: Vec<FilterParams<F>>,
    pub(crate) banks: Vec<FilterBank<F>>,
    pub(crate) concat: Vec<F>,
    pub(crate) head: HeadCache<F>,
}

impl<F: Real> PyramidModel<F> {
    pub fn new(level: usize, taps: usize, head: MlpHead<F>) -> Result<Self> {
        if level == 0 || taps == 0 {
            return Err(TafError::InvalidArgument(
                "pyramid needs level >= 1 and taps >= 1".into(),
            ));
        }
        let filters = (1usize << level) - 1;
        if !head.input_dim().is_multiple_of(filters * taps) {
            return Err(TafError::ShapeMismatch(format!(
                "head input {} is not a multiple of filters*taps = {}",
                head.input_dim(),
                filters * taps
            )));
        }
        Ok(PyramidModel { level, taps, head })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn filter_count(&self) -> usize {
        (1usize << self.level) - 1
    }

    pub fn feature_dim(&self) -> usize {
        self.head.input_dim() / (self.filter_count() * self.taps)
    }

    pub fn head(&self) -> &MlpHead<F> {
        &self.head
    }

    pub fn forward(&self, x: &FeatureSequence<F>) -> Result<(Vec<F>, PyramidCache<F>)> {
        if x.dim() != self.feature_dim() {
            return Err(TafError::ShapeMismatch(format!(
                "model expects feature dim {}, sequence has {}",
                self.feature_dim(),
                x.dim()
            )));
        }
        let params = pyramid_params::<F>(self.level, self.taps, x.len());
        let mut banks = Vec::with_capacity(params.len());
        let mut concat = Vec::with_capacity(self.head.input_dim());
        for p in &params {
            let bank = materialize(p, x.len(), self.taps)?;
            let out = read(&bank, x)?;
            concat.extend_from_slice(out.data());
            banks.push(bank);
        }
        let head = self.head.forward(&concat)?;
        let probs = head.probs.clone();
        Ok((
            probs,
            PyramidCache {
                params,
                banks,
                concat,
                head,
            },
        ))
    }

    pub fn backward(
        &self,
        x: &FeatureSequence<F>,
        cache: &PyramidCache<F>,
        dlogits: &[F],
    ) -> Result<(PyramidModel<F>, Matrix<F>)> {
        let (head_grads, dv) = self.head.backward(&cache.concat, &cache.head, dlogits);
        let d = x.dim();
        let block = self.taps * d;
        let mut d_input = Matrix::zeros(x.len(), d);
        for (m, p) in cache.params.iter().enumerate() {
            let upstream = Matrix::from_vec(self.taps, d, dv[m * block..(m + 1) * block].to_vec())?;
            // Placement is fixed: parameter gradients are discarded, only the
            // input gradient flows.
            let rg = read_backward(&cache.banks[m], p, x, &upstream)?;
            for (acc, &g) in d_input.data_mut().iter_mut().zip(rg.input.data()) {
                *acc = *acc + g;
            }
        }
        Ok((
            PyramidModel {
                level: self.level,
                taps: self.taps,
                head: head_grads,
            },
            d_input,
        ))
    }

    pub(crate) fn param_arrays(&self) -> Vec<(String, &[F])> {
        self.head.param_arrays()
    }

    pub(crate) fn param_arrays_mut(&mut self) -> Vec<(String, &mut [F])> {
        self.head.param_arrays_mut()
    }
}
