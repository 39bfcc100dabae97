//! Classifier variants over a shared MLP head, parameter-mirror gradient
//! storage, and the text checkpoint format.

mod checkpoint;
mod head;
mod lstm;
mod pooled;
mod static_model;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpointed};
pub use head::{HeadCache, MlpHead};
pub use lstm::{LstmCache, LstmCell, LstmModel};
pub use pooled::{PooledCache, PooledModel, PyramidCache, PyramidModel};
pub use static_model::{StaticCache, StaticModel};

use crate::error::{Result, TafError};
use crate::filterbank::FeatureSequence;
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Numerically stable softmax.
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits
        .iter()
        .fold(F::neg_infinity(), |acc, &v| acc.max(v));
    let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Which classifier to build; carries the architecture knobs that are not
/// learned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Max,
    Sum,
    Mean,
    Pyramid {
        level: usize,
        taps: usize,
    },
    Static {
        filters: usize,
        taps: usize,
    },
    Lstm {
        filters: usize,
        taps: usize,
        steps: usize,
        lstm_hidden: usize,
    },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Max => "max",
            ModelKind::Sum => "sum",
            ModelKind::Mean => "mean",
            ModelKind::Pyramid { .. } => "pyramid",
            ModelKind::Static { .. } => "static",
            ModelKind::Lstm { .. } => "lstm",
        }
    }
}

/// One trainable classifier: its kind plus every learnable array.
///
/// Gradients reuse this type: a bundle's `params` is a model-shaped mirror
/// holding `∂L/∂θ` in place of each parameter θ.
#[derive(Clone, Debug, PartialEq)]
pub enum Model<F> {
    Pooled(PooledModel<F>),
    Pyramid(PyramidModel<F>),
    Static(StaticModel<F>),
    Lstm(LstmModel<F>),
}

/// Forward activations for one sample, matching the model variant.
#[derive(Clone, Debug)]
pub enum Cache<F> {
    Pooled(PooledCache<F>),
    Pyramid(PyramidCache<F>),
    Static(StaticCache<F>),
    Lstm(LstmCache<F>),
}

/// Per-sample gradients: a model-shaped parameter mirror plus `∂L/∂x`.
#[derive(Clone, Debug)]
pub struct GradientBundle<F> {
    pub params: Model<F>,
    pub input: Matrix<F>,
}

impl<F: Real> Model<F> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Pooled(m) => m.mode().name(),
            Model::Pyramid(_) => "pyramid",
            Model::Static(_) => "static",
            Model::Lstm(_) => "lstm",
        }
    }

    pub fn class_count(&self) -> usize {
        self.head().class_count()
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Model::Pooled(m) => m.feature_dim(),
            Model::Pyramid(m) => m.feature_dim(),
            Model::Static(m) => m.feature_dim(),
            Model::Lstm(m) => m.feature_dim(),
        }
    }

    pub fn head(&self) -> &MlpHead<F> {
        match self {
            Model::Pooled(m) => m.head(),
            Model::Pyramid(m) => m.head(),
            Model::Static(m) => m.head(),
            Model::Lstm(m) => m.head(),
        }
    }

    pub fn forward(&self, x: &FeatureSequence<F>) -> Result<(Vec<F>, Cache<F>)> {
        Ok(match self {
            Model::Pooled(m) => {
                let (p, c) = m.forward(x)?;
                (p, Cache::Pooled(c))
            }
            Model::Pyramid(m) => {
                let (p, c) = m.forward(x)?;
                (p, Cache::Pyramid(c))
            }
            Model::Static(m) => {
                let (p, c) = m.forward(x)?;
                (p, Cache::Static(c))
            }
            Model::Lstm(m) => {
                let (p, c) = m.forward(x)?;
                (p, Cache::Lstm(c))
            }
        })
    }

    pub fn backward(
        &self,
        x: &FeatureSequence<F>,
        cache: &Cache<F>,
        dlogits: &[F],
    ) -> Result<GradientBundle<F>> {
        let (params, input) = match (self, cache) {
            (Model::Pooled(m), Cache::Pooled(c)) => {
                let (g, dx) = m.backward(x, c, dlogits)?;
                (Model::Pooled(g), dx)
            }
            (Model::Pyramid(m), Cache::Pyramid(c)) => {
                let (g, dx) = m.backward(x, c, dlogits)?;
                (Model::Pyramid(g), dx)
            }
            (Model::Static(m), Cache::Static(c)) => {
                let (g, dx) = m.backward(x, c, dlogits)?;
                (Model::Static(g), dx)
            }
            (Model::Lstm(m), Cache::Lstm(c)) => {
                let (g, dx) = m.backward(x, c, dlogits)?;
                (Model::Lstm(g), dx)
            }
            _ => {
                return Err(TafError::ShapeMismatch(
                    "cache does not match model kind".into(),
                ))
            }
        };
        Ok(GradientBundle { params, input })
    }

    /// Class probabilities for one sample.
    pub fn probs(&self, x: &FeatureSequence<F>) -> Result<Vec<F>> {
        Ok(self.forward(x)?.0)
    }

    /// Predicted class: argmax probability, ties to the lowest index.
    pub fn predict(&self, x: &FeatureSequence<F>) -> Result<usize> {
        let probs = self.probs(x)?;
        let mut best = 0usize;
        for (c, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = c;
            }
        }
        Ok(best)
    }

    /// Every trainable array with a stable group name, in a fixed order.
    pub fn param_arrays(&self) -> Vec<(String, &[F])> {
        match self {
            Model::Pooled(m) => m.param_arrays(),
            Model::Pyramid(m) => m.param_arrays(),
            Model::Static(m) => m.param_arrays(),
            Model::Lstm(m) => m.param_arrays(),
        }
    }

    pub fn param_arrays_mut(&mut self) -> Vec<(String, &mut [F])> {
        match self {
            Model::Pooled(m) => m.param_arrays_mut(),
            Model::Pyramid(m) => m.param_arrays_mut(),
            Model::Static(m) => m.param_arrays_mut(),
            Model::Lstm(m) => m.param_arrays_mut(),
        }
    }

    /// Same architecture, all trainable arrays zeroed. The starting point for
    /// gradient accumulators and optimizer velocity.
    pub fn zeros_like(&self) -> Model<F> {
        let mut clone = self.clone();
        for (_, arr) in clone.param_arrays_mut() {
            for v in arr {
                *v = F::zero();
            }
        }
        clone
    }

    /// `self += scale · other`, array by array. Errors if the architectures
    /// differ.
    pub fn add_scaled(&mut self, other: &Model<F>, scale: F) -> Result<()> {
        let theirs = other.param_arrays();
        let mut mine = self.param_arrays_mut();
        if mine.len() != theirs.len() {
            return Err(TafError::ShapeMismatch(
                "models have different parameter groups".into(),
            ));
        }
        for ((name_a, a), (name_b, b)) in mine.iter_mut().zip(&theirs) {
            if name_a != name_b || a.len() != b.len() {
                return Err(TafError::ShapeMismatch(format!(
                    "parameter group mismatch: {name_a}[{}] vs {name_b}[{}]",
                    a.len(),
                    b.len()
                )));
            }
            for (av, &bv) in a.iter_mut().zip(b.iter()) {
                *av = *av + scale * bv;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: F) {
        for (_, arr) in self.param_arrays_mut() {
            for v in arr {
                *v = *v * s;
            }
        }
    }

    /// L2 norm over all trainable arrays.
    pub fn global_norm(&self) -> F {
        let mut acc = F::zero();
        for (_, arr) in self.param_arrays() {
            for &v in arr {
                acc = acc + v * v;
            }
        }
        acc.sqrt()
    }
}

/// One-vs-all ensemble: one binary model per class; the combiner predicts the
/// class whose model assigns the highest positive-class probability, ties to
/// the lowest class index. Class `c`'s positives are labeled 1, the rest 0.
#[derive(Clone, Debug)]
pub struct OneVsAllModel<F> {
    pub members: Vec<Model<F>>,
}

impl<F: Real> OneVsAllModel<F> {
    pub fn new(members: Vec<Model<F>>) -> Result<Self> {
        if members.len() < 2 {
            return Err(TafError::InvalidArgument(
                "one-vs-all needs at least two classes".into(),
            ));
        }
        if members.iter().any(|m| m.class_count() != 2) {
            return Err(TafError::InvalidArgument(
                "one-vs-all members must be binary classifiers".into(),
            ));
        }
        Ok(OneVsAllModel { members })
    }

    pub fn class_count(&self) -> usize {
        self.members.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.members[0].feature_dim()
    }

    /// Positive-class probability from every member.
    pub fn scores(&self, x: &FeatureSequence<F>) -> Result<Vec<F>> {
        self.members.iter().map(|m| Ok(m.probs(x)?[1])).collect()
    }

    pub fn predict(&self, x: &FeatureSequence<F>) -> Result<usize> {
        let scores = self.scores(x)?;
        let mut best = 0usize;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::FilterParams;
    use crate::pooling::PoolMode;

    fn tiny_static() -> Model<f64> {
        let head = MlpHead::<f64>::zeros(4, 3, 2).unwrap();
        Model::Static(
            StaticModel::new(
                &[FilterParams::centered(), FilterParams::centered()],
                2,
                head,
            )
            .unwrap(),
        )
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax(&[0.0f64; 4]);
        for v in p {
            assert!((v - 0.25).abs() <= 1e-12);
        }
    }

    #[test]
    fn zeros_like_keeps_shape_and_zeroes_values() {
        let mut m = tiny_static();
        for (_, arr) in m.param_arrays_mut() {
            for v in arr {
                *v = 1.5;
            }
        }
        let z = m.zeros_like();
        for (name, arr) in z.param_arrays() {
            assert!(arr.iter().all(|&v| v == 0.0), "group {name}");
        }
        assert_eq!(m.param_arrays().len(), z.param_arrays().len());
    }

    #[test]
    fn add_scaled_and_norm() {
        let mut a = tiny_static().zeros_like();
        let mut b = tiny_static().zeros_like();
        for (_, arr) in b.param_arrays_mut() {
            for v in arr {
                *v = 2.0;
            }
        }
        a.add_scaled(&b, 0.5).unwrap();
        let total: f64 = a
            .param_arrays()
            .iter()
            .map(|(_, arr)| arr.iter().sum::<f64>())
            .sum();
        let count: usize = a.param_arrays().iter().map(|(_, arr)| arr.len()).sum();
        assert_eq!(total, count as f64);
        assert!((a.global_norm() - (count as f64).sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn pooled_models_train_only_the_head() {
        let head = MlpHead::<f64>::zeros(3, 2, 2).unwrap();
        let model = Model::Pooled(PooledModel::new(PoolMode::Mean, head));
        let groups: Vec<String> = model.param_arrays().into_iter().map(|(n, _)| n).collect();
        assert_eq!(groups, ["head.w1", "head.b1", "head.w2", "head.b2"]);
    }

    #[test]
    fn ova_untrained_ties_break_to_class_zero() {
        let head = MlpHead::<f64>::zeros(3, 2, 2).unwrap();
        let members = (0..4)
            .map(|_| Model::Pooled(PooledModel::new(PoolMode::Mean, head.clone())))
            .collect();
        let ova = OneVsAllModel::new(members).unwrap();
        let x = FeatureSequence::new(
            Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.5]]).unwrap(),
            3,
            "s",
        )
        .unwrap();
        assert_eq!(ova.predict(&x).unwrap(), 0);
    }
}
