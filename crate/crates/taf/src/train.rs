//! Loss, SGD with momentum, frame-skip augmentation, the training loops
//! (multiclass and one-vs-all), and the finite-difference gradient checker.

use rand::{Rng, SeedableRng};

use crate::data::{standard_normal, Dataset};
use crate::error::{Result, TafError};
use crate::filterbank::{FeatureSequence, FilterParams};
use crate::matrix::Matrix;
use crate::model::{
    LstmCell, LstmModel, MlpHead, Model, ModelKind, OneVsAllModel, PooledModel, PyramidModel,
    StaticModel,
};
use crate::pooling::PoolMode;
use crate::scalar::Real;
use crate::Prng;

/// Global-norm bound applied to LSTM-model gradient bundles.
pub const LSTM_GRAD_CLIP: f64 = 5.0;

/// Knobs of one training run. `hidden` is the MLP head width; the
/// architecture itself comes from [`ModelKind`].
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Upper bound for the frame-skip augmentation; 0 disables it.
    pub max_skip: usize,
    pub one_vs_all: bool,
    pub hidden: usize,
    /// Record split accuracy every this many iterations; 0 disables.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10_000,
            batch_size: 100,
            momentum: 0.9,
            learning_rate: 0.01,
            seed: 1,
            max_skip: 5,
            one_vs_all: false,
            hidden: 256,
            eval_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(TafError::InvalidArgument(
                "learning_rate must be finite and non-negative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TafError::InvalidArgument(
                "momentum must lie in [0, 1)".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(TafError::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(TafError::InvalidArgument("hidden must be >= 1".into()));
        }
        Ok(())
    }
}

/// One training-loop record: batch loss, and periodically the accuracy on the
/// evaluation split (test when present, train otherwise).
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryEntry<F> {
    pub iteration: usize,
    pub loss: F,
    pub eval_accuracy: Option<f64>,
}

/// Softmax cross-entropy: `loss = −log probs[label]` (probability clamped
/// below at 1e-12) and its gradient w.r.t. the logits,
/// `dlogits = probs − onehot(label)`.
pub fn cross_entropy<F: Real>(probs: &[F], label: usize) -> Result<(F, Vec<F>)> {
    if label >= probs.len() {
        return Err(TafError::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    let p = probs[label].max(F::of(1e-12));
    let loss = -p.ln();
    let dlogits = probs
        .iter()
        .enumerate()
        .map(|(c, &pc)| if c == label { pc - F::one() } else { pc })
        .collect();
    Ok((loss, dlogits))
}

/// One momentum step over every trainable array:
/// `v ← momentum·v − lr·g`, then `p ← p + v`.
pub fn sgd_momentum_step<F: Real>(
    params: &mut Model<F>,
    velocity: &mut Model<F>,
    grads: &Model<F>,
    learning_rate: F,
    momentum: F,
) -> Result<()> {
    let g_arrays = grads.param_arrays();
    let mut v_arrays = velocity.param_arrays_mut();
    let mut p_arrays = params.param_arrays_mut();
    if g_arrays.len() != v_arrays.len() || g_arrays.len() != p_arrays.len() {
        return Err(TafError::ShapeMismatch(
            "optimizer state does not match model".into(),
        ));
    }
    for (((_, g), (_, v)), (_, p)) in g_arrays.iter().zip(&mut v_arrays).zip(&mut p_arrays) {
        if g.len() != v.len() || g.len() != p.len() {
            return Err(TafError::ShapeMismatch(
                "optimizer array length mismatch".into(),
            ));
        }
        for ((&gv, vv), pv) in g.iter().zip(v.iter_mut()).zip(p.iter_mut()) {
            *vv = momentum * *vv - learning_rate * gv;
            *pv = *pv + *vv;
        }
    }
    Ok(())
}

/// Frame-skip augmentation: drops the first `k` frames with `k` drawn
/// uniformly from `{0 ..= min(max_skip, T−1)}`. Label and id are preserved.
pub fn augment_skip<F: Real>(
    x: &FeatureSequence<F>,
    max_skip: usize,
    rng: &mut Prng,
) -> FeatureSequence<F> {
    let bound = max_skip.min(x.len() - 1);
    if bound == 0 {
        return x.clone();
    }
    let k = rng.random_range(0..=bound);
    if k == 0 {
        x.clone()
    } else {
        x.drop_front(k).expect("k < len by construction")
    }
}

/// Scales `grads` so its global L2 norm does not exceed `max_norm`.
pub fn clip_global_norm<F: Real>(grads: &mut Model<F>, max_norm: F) {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
}

/// Builds a model of `kind` with the standard initialization: filter centers
/// g̃ ~ N(0, 0.4²) with log δ̃ = log σ² = 0; dense weights ~ N(0, 1/fan_in);
/// biases zero except the LSTM forget gate at +1; the LSTM parameter head
/// starts at exactly zero so the first iteration reads the whole sequence.
///
/// Draw order is fixed (filters / LSTM cell first, then the head) so a seed
/// pins the full parameter vector.
pub fn init_model<F: Real>(
    kind: &ModelKind,
    feature_dim: usize,
    classes: usize,
    hidden: usize,
    rng: &mut Prng,
) -> Result<Model<F>> {
    if feature_dim == 0 || classes == 0 {
        return Err(TafError::InvalidArgument(
            "feature_dim and classes must be positive".into(),
        ));
    }
    let init_head = |input: usize, rng: &mut Prng| -> Result<MlpHead<F>> {
        let mut head = MlpHead::zeros(input, hidden, classes)?;
        let s1 = (input as f64).sqrt().recip();
        for v in head.w1.data_mut() {
            *v = F::of(s1 * standard_normal(rng));
        }
        let s2 = (hidden as f64).sqrt().recip();
        for v in head.w2.data_mut() {
            *v = F::of(s2 * standard_normal(rng));
        }
        Ok(head)
    };
    match kind {
        ModelKind::Max => Ok(Model::Pooled(PooledModel::new(
            PoolMode::Max,
            init_head(feature_dim, rng)?,
        ))),
        ModelKind::Sum => Ok(Model::Pooled(PooledModel::new(
            PoolMode::Sum,
            init_head(feature_dim, rng)?,
        ))),
        ModelKind::Mean => Ok(Model::Pooled(PooledModel::new(
            PoolMode::Mean,
            init_head(feature_dim, rng)?,
        ))),
        ModelKind::Pyramid { level, taps } => {
            let filters = (1usize << level) - 1;
            let head = init_head(filters * taps * feature_dim, rng)?;
            Ok(Model::Pyramid(PyramidModel::new(*level, *taps, head)?))
        }
        ModelKind::Static { filters, taps } => {
            let params: Vec<FilterParams<F>> = (0..*filters)
                .map(|_| FilterParams {
                    g_tilde: F::of(0.4 * standard_normal(rng)),
                    log_delta_tilde: F::zero(),
                    log_sigma_sq: F::zero(),
                })
                .collect();
            let head = init_head(filters * taps * feature_dim, rng)?;
            Ok(Model::Static(StaticModel::new(&params, *taps, head)?))
        }
        ModelKind::Lstm {
            filters,
            taps,
            steps,
            lstm_hidden,
        } => {
            let input = filters * taps * feature_dim;
            let mut cell = LstmCell::zeros(input, *lstm_hidden)?;
            let sx = (input as f64).sqrt().recip();
            for v in cell.wx.data_mut() {
                *v = F::of(sx * standard_normal(rng));
            }
            let sh = (*lstm_hidden as f64).sqrt().recip();
            for v in cell.wh.data_mut() {
                *v = F::of(sh * standard_normal(rng));
            }
            for k in *lstm_hidden..2 * *lstm_hidden {
                cell.b[k] = F::one(); // forget gate bias
            }
            let map_w = Matrix::zeros(3 * filters, *lstm_hidden);
            let map_b = vec![F::zero(); 3 * filters];
            let head = init_head(input, rng)?;
            Ok(Model::Lstm(LstmModel::new(
                cell, map_w, map_b, *steps, *taps, head,
            )?))
        }
    }
}

/// Fraction of `samples` the model labels correctly.
pub fn evaluate<F: Real>(model: &Model<F>, samples: &[FeatureSequence<F>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(TafError::Dataset("cannot evaluate an empty split".into()));
    }
    let mut hits = 0usize;
    for s in samples {
        if model.predict(s)? == s.label() {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Fraction of `samples` the ensemble labels correctly.
pub fn evaluate_one_vs_all<F: Real>(
    model: &OneVsAllModel<F>,
    samples: &[FeatureSequence<F>],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(TafError::Dataset("cannot evaluate an empty split".into()));
    }
    let mut hits = 0usize;
    for s in samples {
        if model.predict(s)? == s.label() {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

fn check_dataset<F: Real>(data: &Dataset<F>) -> Result<()> {
    if data.train.is_empty() {
        return Err(TafError::Dataset("training split is empty".into()));
    }
    for s in data.train.iter().chain(&data.test) {
        if s.dim() != data.dim {
            return Err(TafError::Dataset(format!(
                "inconsistent feature dim: {} has {}, dataset says {}",
                s.id(),
                s.dim(),
                data.dim
            )));
        }
        if s.label() >= data.classes {
            return Err(TafError::Dataset(format!(
                "label {} out of range for {} classes",
                s.label(),
                data.classes
            )));
        }
    }
    Ok(())
}

/// Trains one model with seeded mini-batch SGD.
///
/// Batches are drawn with replacement from the training split; per-sample
/// gradients are averaged in draw order; one momentum step per batch. The
/// whole run is a pure function of `(kind, data, config)`.
pub fn fit<F: Real>(
    kind: &ModelKind,
    data: &Dataset<F>,
    cfg: &TrainConfig,
) -> Result<(Model<F>, Vec<HistoryEntry<F>>)> {
    cfg.validate()?;
    check_dataset(data)?;
    let mut rng = Prng::seed_from_u64(cfg.seed);
    let mut model = init_model::<F>(kind, data.dim, data.classes, cfg.hidden, &mut rng)?;
    let mut velocity = model.zeros_like();
    let lr = F::of(cfg.learning_rate);
    let momentum = F::of(cfg.momentum);
    let eval_split: &[FeatureSequence<F>] = if data.test.is_empty() {
        &data.train
    } else {
        &data.test
    };
    let is_lstm = matches!(kind, ModelKind::Lstm { .. });
    let batch_scale = F::one() / F::of(cfg.batch_size as f64);

    let mut history = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let mut grads = model.zeros_like();
        let mut batch_loss = F::zero();
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..data.train.len());
            let sample = if cfg.max_skip > 0 {
                augment_skip(&data.train[idx], cfg.max_skip, &mut rng)
            } else {
                data.train[idx].clone()
            };
            let (probs, cache) = model.forward(&sample)?;
            let (loss, dlogits) = cross_entropy(&probs, sample.label())?;
            let bundle = model.backward(&sample, &cache, &dlogits)?;
            grads.add_scaled(&bundle.params, F::one())?;
            batch_loss = batch_loss + loss;
        }
        grads.scale(batch_scale);
        batch_loss = batch_loss * batch_scale;
        if is_lstm {
            clip_global_norm(&mut grads, F::of(LSTM_GRAD_CLIP));
        }
        sgd_momentum_step(&mut model, &mut velocity, &grads, lr, momentum)?;

        let eval_accuracy = if cfg.eval_every > 0 && iteration % cfg.eval_every == 0 {
            Some(evaluate(&model, eval_split)?)
        } else {
            None
        };
        history.push(HistoryEntry {
            iteration,
            loss: batch_loss,
            eval_accuracy,
        });
    }
    Ok((model, history))
}

/// One training history per one-vs-all member, indexed by class.
pub type MemberHistories<F> = Vec<Vec<HistoryEntry<F>>>;

/// Trains one binary model per class (positives relabeled 1, everything else
/// 0), every member with the same seed and config. Prediction is the argmax
/// of the members' positive-class probabilities.
pub fn fit_one_vs_all<F: Real>(
    kind: &ModelKind,
    data: &Dataset<F>,
    cfg: &TrainConfig,
) -> Result<(OneVsAllModel<F>, MemberHistories<F>)> {
    if data.classes < 2 {
        return Err(TafError::Dataset(
            "one-vs-all needs at least two classes".into(),
        ));
    }
    check_dataset(data)?;
    let mut members = Vec::with_capacity(data.classes);
    let mut histories = Vec::with_capacity(data.classes);
    for class in 0..data.classes {
        if !data.train.iter().any(|s| s.label() == class) {
            return Err(TafError::Dataset(format!(
                "class {class} has no positive training examples"
            )));
        }
        let relabel = |s: &FeatureSequence<F>| {
            s.clone().with_label(usize::from(s.label() == class))
        };
        let binary = Dataset {
            train: data.train.iter().map(relabel).collect(),
            test: data.test.iter().map(relabel).collect(),
            classes: 2,
            dim: data.dim,
        };
        let (model, history) = fit(kind, &binary, cfg)?;
        members.push(model);
        histories.push(history);
    }
    Ok((OneVsAllModel::new(members)?, histories))
}

/// Input dimensions for a gradient check.
#[derive(Clone, Copy, Debug)]
pub struct CheckDims {
    pub seq_len: usize,
    pub feature_dim: usize,
    pub classes: usize,
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
    pub step: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.groups.iter().fold(0.0, |m, g| m.max(g.max_rel_err))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tolerance
    }
}

fn loss_of(model: &Model<f64>, x: &FeatureSequence<f64>, label: usize) -> Result<f64> {
    let (probs, _) = model.forward(x)?;
    Ok(cross_entropy(&probs, label)?.0)
}

/// Compares an analytic parameter-gradient mirror against central finite
/// differences of the cross-entropy loss, per parameter group. Relative error
/// uses a `max(|analytic|, |numeric|, 1e-8)` denominator.
pub fn compare_with_finite_differences(
    model: &Model<f64>,
    x: &FeatureSequence<f64>,
    label: usize,
    analytic: &Model<f64>,
    step: f64,
) -> Result<Vec<GroupReport>> {
    let analytic_arrays: Vec<(String, Vec<f64>)> = analytic
        .param_arrays()
        .into_iter()
        .map(|(n, a)| (n, a.to_vec()))
        .collect();
    let mut probe = model.clone();
    let mut reports = Vec::new();
    for (group_idx, (name, values)) in analytic_arrays.iter().enumerate() {
        let mut max_rel = 0.0f64;
        for (k, &a) in values.iter().enumerate() {
            let base = {
                let arrays = probe.param_arrays();
                arrays[group_idx].1[k]
            };
            set_param(&mut probe, group_idx, k, base + step);
            let plus = loss_of(&probe, x, label)?;
            set_param(&mut probe, group_idx, k, base - step);
            let minus = loss_of(&probe, x, label)?;
            set_param(&mut probe, group_idx, k, base);
            let numeric = (plus - minus) / (2.0 * step);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        reports.push(GroupReport {
            name: name.clone(),
            max_rel_err: max_rel,
            checked: values.len(),
        });
    }
    Ok(reports)
}

fn set_param(model: &mut Model<f64>, group: usize, index: usize, value: f64) {
    let mut arrays = model.param_arrays_mut();
    arrays[group].1[index] = value;
}

/// Verifies every analytic parameter gradient of a seeded model against
/// central finite differences in f64 on one seeded sample. All parameter
/// arrays are filled with N(0, 0.3²) noise so no path through the model is
/// dead.
pub fn grad_check(
    kind: &ModelKind,
    dims: &CheckDims,
    seed: u64,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut rng = Prng::seed_from_u64(seed);
    let mut model = init_model::<f64>(kind, dims.feature_dim, dims.classes, dims.hidden, &mut rng)?;
    for (_, arr) in model.param_arrays_mut() {
        for v in arr {
            *v = 0.3 * standard_normal(&mut rng);
        }
    }
    let mut data = Matrix::zeros(dims.seq_len, dims.feature_dim);
    for v in data.data_mut() {
        *v = standard_normal(&mut rng);
    }
    let label = rng.random_range(0..dims.classes);
    let x = FeatureSequence::new(data, label, "grad-check")?;

    let (probs, cache) = model.forward(&x)?;
    let (_, dlogits) = cross_entropy(&probs, label)?;
    let bundle = model.backward(&x, &cache, &dlogits)?;
    let groups = compare_with_finite_differences(&model, &x, label, &bundle.params, step)?;
    Ok(GradCheckReport {
        groups,
        tolerance,
        step,
    })
}
