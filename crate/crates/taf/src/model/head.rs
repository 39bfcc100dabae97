//! Two-layer classification head: hidden ReLU layer, then softmax class scores.

use crate::error::{Result, TafError};
use crate::matrix::Matrix;
use crate::scalar::Real;

use super::softmax;

/// `hidden = relu(W1·v + b1)`, `probs = softmax(W2·hidden + b2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpHead<F> {
    pub(crate) w1: Matrix<F>, // hidden × input
    pub(crate) b1: Vec<F>,
    pub(crate) w2: Matrix<F>, // classes × hidden
    pub(crate) b2: Vec<F>,
}

/// Forward activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct HeadCache<F> {
    pub(crate) pre_hidden: Vec<F>,
    pub(crate) hidden: Vec<F>,
    pub(crate) probs: Vec<F>,
}

impl<F: Real> MlpHead<F> {
    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || classes == 0 {
            return Err(TafError::InvalidArgument(format!(
                "head dims must be positive, got input {input}, hidden {hidden}, classes {classes}"
            )));
        }
        Ok(MlpHead {
            w1: Matrix::zeros(hidden, input),
            b1: vec![F::zero(); hidden],
            w2: Matrix::zeros(classes, hidden),
            b2: vec![F::zero(); classes],
        })
    }

    pub fn from_parts(w1: Matrix<F>, b1: Vec<F>, w2: Matrix<F>, b2: Vec<F>) -> Result<Self> {
        if b1.len() != w1.rows() || w2.cols() != w1.rows() || b2.len() != w2.rows() {
            return Err(TafError::ShapeMismatch(
                "inconsistent head layer dimensions".into(),
            ));
        }
        let head = MlpHead { w1, b1, w2, b2 };
        if head.input_dim() == 0 || head.class_count() == 0 {
            return Err(TafError::InvalidArgument("degenerate head dims".into()));
        }
        Ok(head)
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn class_count(&self) -> usize {
        self.w2.rows()
    }

    pub fn forward(&self, v: &[F]) -> Result<HeadCache<F>> {
        if v.len() != self.input_dim() {
            return Err(TafError::ShapeMismatch(format!(
                "head expects input of {}, got {}",
                self.input_dim(),
                v.len()
            )));
        }
        let mut pre_hidden = self.w1.matvec(v);
        for (z, &b) in pre_hidden.iter_mut().zip(&self.b1) {
            *z = *z + b;
        }
        let hidden: Vec<F> = pre_hidden.iter().map(|&z| z.max(F::zero())).collect();
        let mut logits = self.w2.matvec(&hidden);
        for (l, &b) in logits.iter_mut().zip(&self.b2) {
            *l = *l + b;
        }
        let probs = softmax(&logits);
        Ok(HeadCache {
            pre_hidden,
            hidden,
            probs,
        })
    }

    /// Backward from `dlogits = ∂L/∂logits`. Returns gradients in a
    /// head-shaped mirror plus `∂L/∂v`.
    pub fn backward(&self, v: &[F], cache: &HeadCache<F>, dlogits: &[F]) -> (MlpHead<F>, Vec<F>) {
        debug_assert_eq!(dlogits.len(), self.class_count());
        let mut grads = MlpHead {
            w1: Matrix::zeros(self.hidden_dim(), self.input_dim()),
            b1: vec![F::zero(); self.hidden_dim()],
            w2: Matrix::zeros(self.class_count(), self.hidden_dim()),
            b2: vec![F::zero(); self.class_count()],
        };
        for (c, &dl) in dlogits.iter().enumerate() {
            for (g, &h) in grads.w2.row_mut(c).iter_mut().zip(&cache.hidden) {
                *g = dl * h;
            }
            grads.b2[c] = dl;
        }
        let d_hidden = self.w2.matvec_transposed(dlogits);
        let d_pre: Vec<F> = d_hidden
            .iter()
            .zip(&cache.pre_hidden)
            .map(|(&dh, &z)| if z > F::zero() { dh } else { F::zero() })
            .collect();
        for (h, &dz) in d_pre.iter().enumerate() {
            for (g, &vi) in grads.w1.row_mut(h).iter_mut().zip(v) {
                *g = dz * vi;
            }
            grads.b1[h] = dz;
        }
        let dv = self.w1.matvec_transposed(&d_pre);
        (grads, dv)
    }

    pub(crate) fn param_arrays(&self) -> Vec<(String, &[F])> {
        vec![
            ("head.w1".into(), self.w1.data()),
            ("head.b1".into(), self.b1.as_slice()),
            ("head.w2".into(), self.w2.data()),
            ("head.b2".into(), self.b2.as_slice()),
        ]
    }

    pub(crate) fn param_arrays_mut(&mut self) -> Vec<(String, &mut [F])> {
        vec![
            ("head.w1".into(), self.w1.data_mut()),
            ("head.b1".into(), self.b1.as_mut_slice()),
            ("head.w2".into(), self.w2.data_mut()),
            ("head.b2".into(), self.b2.as_mut_slice()),
        ]
    }
}
