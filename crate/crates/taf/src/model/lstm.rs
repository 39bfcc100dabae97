//! Adaptive-filter classifier: an LSTM re-reads the sequence for `S`
//! iterations, emitting fresh filter parameters from its hidden state each
//! time, so the attention placement adjusts to the particular input.
//!
//! Iteration `s` computes `params_s = W·h_{s−1} + b` (one `(g̃, log δ̃,
//! log σ²)` triple per filter), materializes and reads the filters on the
//! input, feeds the concatenated outputs to the LSTM cell, and after the last
//! iteration classifies the final filter outputs through the MLP head.

use crate::error::{Result, TafError};
use crate::filterbank::{materialize, read, read_backward, FeatureSequence, FilterBank, FilterParams};
use crate::matrix::Matrix;
use crate::scalar::Real;

use super::head::{HeadCache, MlpHead};

/// Standard LSTM cell with fused gate matrices; row blocks are ordered
/// `[input, forget, output, candidate]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell<F> {
    pub(crate) wx: Matrix<F>, // 4H × I
    pub(crate) wh: Matrix<F>, // 4H × H
    pub(crate) b: Vec<F>,     // 4H
}

#[derive(Clone, Debug)]
pub(crate) struct CellCache<F> {
    gates: Vec<F>, // 4H post-activation
    tanh_c: Vec<F>,
}

fn sigmoid<F: Real>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

impl<F: Real> LstmCell<F> {
    pub fn zeros(input: usize, hidden: usize) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(TafError::InvalidArgument(
                "lstm cell dims must be positive".into(),
            ));
        }
        Ok(LstmCell {
            wx: Matrix::zeros(4 * hidden, input),
            wh: Matrix::zeros(4 * hidden, hidden),
            b: vec![F::zero(); 4 * hidden],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.wx.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.wh.cols()
    }

    fn step(&self, x: &[F], h_prev: &[F], c_prev: &[F]) -> (Vec<F>, Vec<F>, CellCache<F>) {
        let hid = self.hidden_dim();
        let mut z = self.wx.matvec(x);
        let zh = self.wh.matvec(h_prev);
        for ((zv, &hv), &bv) in z.iter_mut().zip(&zh).zip(&self.b) {
            *zv = *zv + hv + bv;
        }
        let mut gates = vec![F::zero(); 4 * hid];
        for k in 0..hid {
            gates[k] = sigmoid(z[k]); // input
            gates[hid + k] = sigmoid(z[hid + k]); // forget
            gates[2 * hid + k] = sigmoid(z[2 * hid + k]); // output
            gates[3 * hid + k] = z[3 * hid + k].tanh(); // candidate
        }
        let mut c = vec![F::zero(); hid];
        let mut tanh_c = vec![F::zero(); hid];
        let mut h = vec![F::zero(); hid];
        for k in 0..hid {
            c[k] = gates[hid + k] * c_prev[k] + gates[k] * gates[3 * hid + k];
            tanh_c[k] = c[k].tanh();
            h[k] = gates[2 * hid + k] * tanh_c[k];
        }
        (h, c, CellCache { gates, tanh_c })
    }

    /// Reverse of [`Self::step`]. `dh`/`dc` are the gradients flowing into
    /// this step's outputs; gate-parameter gradients accumulate into `grads`.
    #[allow(clippy::too_many_arguments)]
    fn step_backward(
        &self,
        x: &[F],
        h_prev: &[F],
        c_prev: &[F],
        cache: &CellCache<F>,
        dh: &[F],
        dc: &[F],
        grads: &mut LstmCell<F>,
    ) -> (Vec<F>, Vec<F>, Vec<F>) {
        let hid = self.hidden_dim();
        let one = F::one();
        let mut dz = vec![F::zero(); 4 * hid];
        let mut dc_prev = vec![F::zero(); hid];
        for k in 0..hid {
            let i = cache.gates[k];
            let f = cache.gates[hid + k];
            let o = cache.gates[2 * hid + k];
            let g = cache.gates[3 * hid + k];
            let tc = cache.tanh_c[k];
            let dc_total = dc[k] + dh[k] * o * (one - tc * tc);
            let d_i = dc_total * g;
            let d_f = dc_total * c_prev[k];
            let d_o = dh[k] * tc;
            let d_g = dc_total * i;
            dz[k] = d_i * i * (one - i);
            dz[hid + k] = d_f * f * (one - f);
            dz[2 * hid + k] = d_o * o * (one - o);
            dz[3 * hid + k] = d_g * (one - g * g);
            dc_prev[k] = dc_total * f;
        }
        for (row, &dzv) in dz.iter().enumerate() {
            for (gw, &xv) in grads.wx.row_mut(row).iter_mut().zip(x) {
                *gw = *gw + dzv * xv;
            }
            for (gw, &hv) in grads.wh.row_mut(row).iter_mut().zip(h_prev) {
                *gw = *gw + dzv * hv;
            }
            grads.b[row] = grads.b[row] + dzv;
        }
        let dx = self.wx.matvec_transposed(&dz);
        let dh_prev = self.wh.matvec_transposed(&dz);
        (dx, dh_prev, dc_prev)
    }
}

/// The adaptive-filter model: LSTM cell, the affine parameter head mapping
/// hidden state to `M` filter triples, iteration count, and the classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmModel<F> {
    pub(crate) cell: LstmCell<F>,
    pub(crate) map_w: Matrix<F>, // 3M × H
    pub(crate) map_b: Vec<F>,    // 3M
    pub(crate) steps: usize,
    pub(crate) taps: usize,
    pub(crate) classifier: MlpHead<F>,
}

#[derive(Clone, Debug)]
pub(crate) struct StepCache<F> {
    params: Vec<FilterParams<F>>,
    banks: Vec<FilterBank<F>>,
    concat: Vec<F>,
    h_prev: Vec<F>,
    c_prev: Vec<F>,
    cell: CellCache<F>,
}

#[derive(Clone, Debug)]
pub struct LstmCache<F> {
    pub(crate) per_step: Vec<StepCache<F>>,
    pub(crate) head: HeadCache<F>,
}

impl<F: Real> LstmCache<F> {
    /// The filter parameters emitted at each iteration, `S` entries of `M`
    /// triples each.
    pub fn param_trace(&self) -> Vec<Vec<FilterParams<F>>> {
        self.per_step.iter().map(|s| s.params.clone()).collect()
    }
}

impl<F: Real> LstmModel<F> {
    pub fn new(
        cell: LstmCell<F>,
        map_w: Matrix<F>,
        map_b: Vec<F>,
        steps: usize,
        taps: usize,
        classifier: MlpHead<F>,
    ) -> Result<Self> {
        if steps == 0 || taps == 0 {
            return Err(TafError::InvalidArgument(
                "lstm model needs steps >= 1 and taps >= 1".into(),
            ));
        }
        if !map_b.len().is_multiple_of(3) || map_b.is_empty() {
            return Err(TafError::ShapeMismatch(
                "parameter head must emit 3 values per filter".into(),
            ));
        }
        let filters = map_b.len() / 3;
        if map_w.rows() != map_b.len() || map_w.cols() != cell.hidden_dim() {
            return Err(TafError::ShapeMismatch(format!(
                "parameter head is {}x{}, expected {}x{}",
                map_w.rows(),
                map_w.cols(),
                map_b.len(),
                cell.hidden_dim()
            )));
        }
        if classifier.input_dim() != cell.input_dim()
            || !classifier.input_dim().is_multiple_of(filters * taps)
        {
            return Err(TafError::ShapeMismatch(format!(
                "classifier input {} must equal lstm input {} and divide filters*taps",
                classifier.input_dim(),
                cell.input_dim()
            )));
        }
        Ok(LstmModel {
            cell,
            map_w,
            map_b,
            steps,
            taps,
            classifier,
        })
    }

    pub fn filter_count(&self) -> usize {
        self.map_b.len() / 3
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn lstm_hidden(&self) -> usize {
        self.cell.hidden_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.classifier.input_dim() / (self.filter_count() * self.taps)
    }

    pub fn head(&self) -> &MlpHead<F> {
        &self.classifier
    }

    /// Filter parameters the first iteration uses before any input is seen:
    /// the parameter head applied to the zero hidden state, i.e. its bias.
    pub fn initial_params(&self) -> Vec<FilterParams<F>> {
        (0..self.filter_count())
            .map(|m| FilterParams {
                g_tilde: self.map_b[3 * m],
                log_delta_tilde: self.map_b[3 * m + 1],
                log_sigma_sq: self.map_b[3 * m + 2],
            })
            .collect()
    }

    pub fn forward(&self, x: &FeatureSequence<F>) -> Result<(Vec<F>, LstmCache<F>)> {
        if x.dim() != self.feature_dim() {
            return Err(TafError::ShapeMismatch(format!(
                "model expects feature dim {}, sequence has {}",
                self.feature_dim(),
                x.dim()
            )));
        }
        let hid = self.cell.hidden_dim();
        let m_count = self.filter_count();
        let d = x.dim();
        let mut h = vec![F::zero(); hid];
        let mut c = vec![F::zero(); hid];
        let mut per_step = Vec::with_capacity(self.steps);
        for _ in 0..self.steps {
            let mut raw = self.map_w.matvec(&h);
            for (r, &b) in raw.iter_mut().zip(&self.map_b) {
                *r = *r + b;
            }
            let params: Vec<FilterParams<F>> = (0..m_count)
                .map(|m| FilterParams {
                    g_tilde: raw[3 * m],
                    log_delta_tilde: raw[3 * m + 1],
                    log_sigma_sq: raw[3 * m + 2],
                })
                .collect();
            let mut banks = Vec::with_capacity(m_count);
            let mut concat = Vec::with_capacity(m_count * self.taps * d);
            for p in &params {
                let bank = materialize(p, x.len(), self.taps)?;
                let out = read(&bank, x)?;
                concat.extend_from_slice(out.data());
                banks.push(bank);
            }
            let (h_next, c_next, cell_cache) = self.cell.step(&concat, &h, &c);
            per_step.push(StepCache {
                params,
                banks,
                concat,
                h_prev: h.clone(),
                c_prev: c.clone(),
                cell: cell_cache,
            });
            h = h_next;
            c = c_next;
        }
        let final_concat = &per_step.last().expect("steps >= 1").concat;
        let head = self.classifier.forward(final_concat)?;
        let probs = head.probs.clone();
        Ok((probs, LstmCache { per_step, head }))
    }

    /// Backpropagation through time across all iterations: through the
    /// classifier, the filter read/materialization at every step, the LSTM
    /// cell, and the parameter head.
    pub fn backward(
        &self,
        x: &FeatureSequence<F>,
        cache: &LstmCache<F>,
        dlogits: &[F],
    ) -> Result<(LstmModel<F>, Matrix<F>)> {
        if dlogits.len() != self.classifier.class_count() {
            return Err(TafError::ShapeMismatch(format!(
                "dlogits has {} entries, model has {} classes",
                dlogits.len(),
                self.classifier.class_count()
            )));
        }
        if cache.per_step.len() != self.steps {
            return Err(TafError::ShapeMismatch(
                "cache does not match model iteration count".into(),
            ));
        }
        let hid = self.cell.hidden_dim();
        let d = x.dim();
        let block = self.taps * d;

        let last = cache.per_step.last().expect("steps >= 1");
        let (head_grads, dv_classifier) =
            self.classifier.backward(&last.concat, &cache.head, dlogits);

        let mut cell_grads = LstmCell::zeros(self.cell.input_dim(), hid)?;
        let mut map_w_grads = Matrix::zeros(self.map_w.rows(), self.map_w.cols());
        let mut map_b_grads = vec![F::zero(); self.map_b.len()];
        let mut d_input = Matrix::zeros(x.len(), d);

        // The final hidden/cell state feeds nothing downstream.
        let mut dh = vec![F::zero(); hid];
        let mut dc = vec![F::zero(); hid];

        for (s, step) in cache.per_step.iter().enumerate().rev() {
            // Gradient into this step's filter outputs: from the cell input,
            // plus the classifier at the last step.
            let (dx_cell, dh_prev_cell, dc_prev) = self.cell.step_backward(
                &step.concat,
                &step.h_prev,
                &step.c_prev,
                &step.cell,
                &dh,
                &dc,
                &mut cell_grads,
            );
            let mut dv = dx_cell;
            if s == self.steps - 1 {
                for (a, &b) in dv.iter_mut().zip(&dv_classifier) {
                    *a = *a + b;
                }
            }

            // Through each filter's read + materialization.
            let mut d_raw = vec![F::zero(); self.map_b.len()];
            for (m, p) in step.params.iter().enumerate() {
                let upstream =
                    Matrix::from_vec(self.taps, d, dv[m * block..(m + 1) * block].to_vec())?;
                let rg = read_backward(&step.banks[m], p, x, &upstream)?;
                d_raw[3 * m] = rg.params.g_tilde;
                d_raw[3 * m + 1] = rg.params.log_delta_tilde;
                d_raw[3 * m + 2] = rg.params.log_sigma_sq;
                for (acc, &g) in d_input.data_mut().iter_mut().zip(rg.input.data()) {
                    *acc = *acc + g;
                }
            }

            // Through the parameter head: params_s = W·h_{s−1} + b.
            for (r, &dr) in d_raw.iter().enumerate() {
                for (gw, &hv) in map_w_grads.row_mut(r).iter_mut().zip(&step.h_prev) {
                    *gw = *gw + dr * hv;
                }
                map_b_grads[r] = map_b_grads[r] + dr;
            }
            let dh_prev_map = self.map_w.matvec_transposed(&d_raw);

            dh = dh_prev_cell
                .iter()
                .zip(&dh_prev_map)
                .map(|(&a, &b)| a + b)
                .collect();
            dc = dc_prev;
        }

        Ok((
            LstmModel {
                cell: cell_grads,
                map_w: map_w_grads,
                map_b: map_b_grads,
                steps: self.steps,
                taps: self.taps,
                classifier: head_grads,
            },
            d_input,
        ))
    }

    pub(crate) fn param_arrays(&self) -> Vec<(String, &[F])> {
        let mut v = vec![
            ("lstm.wx".to_string(), self.cell.wx.data()),
            ("lstm.wh".to_string(), self.cell.wh.data()),
            ("lstm.b".to_string(), self.cell.b.as_slice()),
            ("map.w".to_string(), self.map_w.data()),
            ("map.b".to_string(), self.map_b.as_slice()),
        ];
        v.extend(self.classifier.param_arrays());
        v
    }

    pub(crate) fn param_arrays_mut(&mut self) -> Vec<(String, &mut [F])> {
        let mut v = vec![
            ("lstm.wx".to_string(), self.cell.wx.data_mut()),
            ("lstm.wh".to_string(), self.cell.wh.data_mut()),
            ("lstm.b".to_string(), self.cell.b.as_mut_slice()),
            ("map.w".to_string(), self.map_w.data_mut()),
            ("map.b".to_string(), self.map_b.as_mut_slice()),
        ];
        v.extend(self.classifier.param_arrays_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StaticModel;
    use rand::{Rng, SeedableRng};

    type Prng = rand_chacha::ChaCha8Rng;

    fn random_seq(seed: u64, t: usize, d: usize) -> FeatureSequence<f64> {
        let mut rng = Prng::seed_from_u64(seed);
        let mut m = Matrix::zeros(t, d);
        for v in m.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        FeatureSequence::new(m, 0, "x").unwrap()
    }

    fn random_lstm(seed: u64, filters: usize, taps: usize, steps: usize, d: usize) -> LstmModel<f64> {
        let mut rng = Prng::seed_from_u64(seed);
        let input = filters * taps * d;
        let hidden = 4;
        let mut cell = LstmCell::zeros(input, hidden).unwrap();
        for (arr, scale) in [(&mut cell.wx, 0.4), (&mut cell.wh, 0.4)] {
            for v in arr.data_mut() {
                *v = rng.random_range(-scale..scale);
            }
        }
        let mut map_w = Matrix::zeros(3 * filters, hidden);
        for v in map_w.data_mut() {
            *v = rng.random_range(-0.3..0.3);
        }
        let map_b = (0..3 * filters).map(|_| rng.random_range(-0.2..0.2)).collect();
        let mut head = MlpHead::zeros(input, 5, 2).unwrap();
        for (_, arr) in head.param_arrays_mut() {
            for v in arr {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        LstmModel::new(cell, map_w, map_b, steps, taps, head).unwrap()
    }

    #[test]
    fn zero_parameter_head_starts_centered_and_full_span() {
        // W = 0, b = 0 per filter: the first iteration reads the whole
        // sequence with a centered filter (g̃=0, δ̃=1, σ²=1).
        let model = LstmModel::new(
            LstmCell::zeros(6, 4).unwrap(),
            Matrix::zeros(3, 4),
            vec![0.0; 3],
            4,
            3,
            MlpHead::zeros(6, 4, 2).unwrap(),
        )
        .unwrap();
        let x = random_seq(1, 10, 2);
        let (_, cache) = model.forward(&x).unwrap();
        let trace = cache.param_trace();
        assert_eq!(trace.len(), 4);
        let first = trace[0][0];
        assert_eq!(first.g_tilde, 0.0);
        assert!((first.delta_tilde() - 1.0).abs() <= 1e-15);
        assert!((first.sigma_sq() - 1.0).abs() <= 1e-15);
        for p in &model.initial_params() {
            assert_eq!(p.g_tilde, 0.0);
        }
    }

    #[test]
    fn trace_has_steps_entries_of_filter_triples() {
        let model = random_lstm(3, 2, 2, 3, 2);
        let x = random_seq(5, 9, 2);
        let (probs, cache) = model.forward(&x).unwrap();
        let trace = cache.param_trace();
        assert_eq!(trace.len(), 3);
        assert!(trace.iter().all(|step| step.len() == 2));
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9);
        assert!(probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn single_step_zero_map_matches_static_model() {
        // S=1 with zero map weights reads the filters off the bias, which is
        // exactly a static model with those filter parameters.
        let d = 2;
        let taps = 3;
        let filters = vec![
            FilterParams::new(0.2, -0.1, 0.3).unwrap(),
            FilterParams::new(-0.4, 0.2, -0.2).unwrap(),
        ];
        let mut rng = Prng::seed_from_u64(8);
        let mut head = MlpHead::zeros(2 * taps * d, 5, 2).unwrap();
        for (_, arr) in head.param_arrays_mut() {
            for v in arr {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let mut cell = LstmCell::zeros(2 * taps * d, 4).unwrap();
        for v in cell.wx.data_mut() {
            *v = rng.random_range(-0.4..0.4);
        }
        let map_b = filters
            .iter()
            .flat_map(|p| [p.g_tilde, p.log_delta_tilde, p.log_sigma_sq])
            .collect();
        let lstm = LstmModel::new(
            cell,
            Matrix::zeros(6, 4),
            map_b,
            1,
            taps,
            head.clone(),
        )
        .unwrap();
        let static_model = StaticModel::new(&filters, taps, head).unwrap();

        let x = random_seq(21, 8, d);
        let (lp, lcache) = lstm.forward(&x).unwrap();
        let (sp, scache) = static_model.forward(&x).unwrap();
        for (a, b) in lp.iter().zip(&sp) {
            assert!((a - b).abs() <= 1e-15);
        }

        // gradients agree too: classifier and filter triples line up
        let dlogits = [0.6, -0.6];
        let (lg, ldx) = lstm.backward(&x, &lcache, &dlogits).unwrap();
        let (sg, sdx) = static_model.backward(&x, &scache, &dlogits).unwrap();
        for (a, b) in ldx.data().iter().zip(sdx.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (m, _) in filters.iter().enumerate() {
            let triple = [
                lg.map_b[3 * m],
                lg.map_b[3 * m + 1],
                lg.map_b[3 * m + 2],
            ];
            let sf = sg.filter(m);
            assert!((triple[0] - sf.g_tilde).abs() <= 1e-12);
            assert!((triple[1] - sf.log_delta_tilde).abs() <= 1e-12);
            assert!((triple[2] - sf.log_sigma_sq).abs() <= 1e-12);
        }
        // the map weight gradient through h_0 = 0 vanishes
        assert!(lg.map_w.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_bundle() {
        let model = random_lstm(11, 1, 3, 2, 2);
        let x = random_seq(2, 8, 2);
        let (_, cache) = model.forward(&x).unwrap();
        let (grads, d_input) = model.backward(&x, &cache, &[0.0, 0.0]).unwrap();
        for (_, arr) in grads.param_arrays() {
            assert!(arr.iter().all(|&v| v == 0.0));
        }
        assert!(d_input.data().iter().all(|&v| v == 0.0));
    }
}
