//! Two stacked LSTM layers with a linear read-out, trained with truncated
//! backpropagation through time and RMSprop.
//!
//! Everything runs in `f64` on flat row-major buffers. Gate rows are laid
//! out in the order input, forget, cell candidate, output: rows `0..h` of
//! `w`, `u` and `b` belong to the input gate, `h..2h` to the forget gate
//! and so on.
//!
//! The network is stateful: hidden and cell vectors survive between calls
//! to [`LstmModel::forward`] until [`LstmModel::reset_state`]. Gradients,
//! on the other hand, never cross a call boundary: the state entering a
//! batch is treated as a constant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{make_batches, TimeSeries};
use crate::error::{Error, Result};
use crate::rng;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input: usize,
    pub hidden: usize,
    /// 4h × d input weights.
    pub w: Vec<f64>,
    /// 4h × h recurrent weights.
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmLayer {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayer {
            input,
            hidden,
            w: vec![0.0; 4 * hidden * input],
            u: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform ±1/√fan_in weights, zero biases except the forget gate at 1.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(input, hidden);
        let sw = 1.0 / (input as f64).sqrt();
        let su = 1.0 / (hidden as f64).sqrt();
        layer.w.iter_mut().for_each(|v| *v = rng.gen_range(-sw..sw));
        layer.u.iter_mut().for_each(|v| *v = rng.gen_range(-su..su));
        layer.b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        layer
    }

    fn check(&self) -> Result<()> {
        let (d, h) = (self.input, self.hidden);
        if self.w.len() != 4 * h * d || self.u.len() != 4 * h * h || self.b.len() != 4 * h {
            return Err(Error::Shape(format!(
                "LSTM layer tensors do not match d = {d}, h = {h}"
            )));
        }
        if self.w.iter().chain(&self.u).chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite LSTM weight".into()));
        }
        Ok(())
    }

    /// Activated gates (i, f, g, o) for one step, written into `gates`.
    fn gates(&self, x: &[f64], h: &[f64], gates: &mut [f64]) {
        let (d, hd) = (self.input, self.hidden);
        for r in 0..4 * hd {
            let a = self.b[r] + dot(&self.w[r * d..(r + 1) * d], x) + dot(&self.u[r * hd..(r + 1) * hd], h);
            gates[r] = if (2 * hd..3 * hd).contains(&r) {
                a.tanh()
            } else {
                sigmoid(a)
            };
        }
    }

    fn cell(&self, gates: &[f64], c_prev: &[f64], c: &mut [f64], tanh_c: &mut [f64], h: &mut [f64]) {
        let hd = self.hidden;
        for j in 0..hd {
            let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
    }

    /// Runs `len` steps, recording everything backprop needs.
    fn forward_seq(&self, xs: &[f64], h0: &[f64], c0: &[f64]) -> LayerTape {
        let (d, hd) = (self.input, self.hidden);
        let len = xs.len() / d;
        let mut tape = LayerTape {
            xs: xs.to_vec(),
            hs: vec![0.0; (len + 1) * hd],
            cs: vec![0.0; (len + 1) * hd],
            gates: vec![0.0; len * 4 * hd],
            tanh_c: vec![0.0; len * hd],
        };
        tape.hs[..hd].copy_from_slice(h0);
        tape.cs[..hd].copy_from_slice(c0);
        for t in 0..len {
            let (hs_prev, hs_next) = tape.hs.split_at_mut((t + 1) * hd);
            let (cs_prev, cs_next) = tape.cs.split_at_mut((t + 1) * hd);
            let gates = &mut tape.gates[t * 4 * hd..(t + 1) * 4 * hd];
            self.gates(&xs[t * d..(t + 1) * d], &hs_prev[t * hd..], gates);
            self.cell(
                gates,
                &cs_prev[t * hd..],
                &mut cs_next[..hd],
                &mut tape.tanh_c[t * hd..(t + 1) * hd],
                &mut hs_next[..hd],
            );
        }
        tape
    }

    /// Backprop through a recorded sequence. `dh_out` is the loss gradient
    /// w.r.t. every emitted hidden vector. Gradient flow through the
    /// recurrence is cut every `tbptt` steps. Returns the input gradients.
    fn backward_seq(&self, tape: &LayerTape, dh_out: &[f64], tbptt: usize, grads: &mut LstmLayer) -> Vec<f64> {
        let (d, hd) = (self.input, self.hidden);
        let len = tape.xs.len() / d;
        let mut dxs = vec![0.0; len * d];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut da = vec![0.0; 4 * hd];
        for t in (0..len).rev() {
            let gates = &tape.gates[t * 4 * hd..(t + 1) * 4 * hd];
            let tanh_c = &tape.tanh_c[t * hd..(t + 1) * hd];
            let c_prev = &tape.cs[t * hd..(t + 1) * hd];
            let h_prev = &tape.hs[t * hd..(t + 1) * hd];
            let x = &tape.xs[t * d..(t + 1) * d];
            for j in 0..hd {
                let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
                let dh = dh_out[t * hd + j] + dh_next[j];
                let dc = dc_next[j] + dh * o * (1.0 - tanh_c[j] * tanh_c[j]);
                da[j] = dc * g * i * (1.0 - i);
                da[hd + j] = dc * c_prev[j] * f * (1.0 - f);
                da[2 * hd + j] = dc * i * (1.0 - g * g);
                da[3 * hd + j] = dh * tanh_c[j] * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            let dx = &mut dxs[t * d..(t + 1) * d];
            for r in 0..4 * hd {
                let a = da[r];
                if a == 0.0 {
                    continue;
                }
                grads.b[r] += a;
                axpy(a, x, &mut grads.w[r * d..(r + 1) * d]);
                axpy(a, h_prev, &mut grads.u[r * hd..(r + 1) * hd]);
                axpy(a, &self.w[r * d..(r + 1) * d], dx);
                axpy(a, &self.u[r * hd..(r + 1) * hd], &mut dh_next);
            }
            if t % tbptt == 0 {
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                dc_next.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        dxs
    }
}

/// One LSTM step: `(h', c')` from input `x` and previous `(h, c)`.
pub fn lstm_step(layer: &LstmLayer, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let hd = layer.hidden;
    if x.len() != layer.input || h.len() != hd || c.len() != hd {
        return Err(Error::Shape(format!(
            "lstm_step: x {}, h {}, c {} for layer d = {}, h = {hd}",
            x.len(),
            h.len(),
            c.len(),
            layer.input
        )));
    }
    let mut gates = vec![0.0; 4 * hd];
    layer.gates(x, h, &mut gates);
    let (mut c2, mut tc, mut h2) = (vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]);
    layer.cell(&gates, c, &mut c2, &mut tc, &mut h2);
    Ok((h2, c2))
}

#[derive(Debug, Clone)]
struct LayerTape {
    xs: Vec<f64>,
    /// Hidden vectors, row 0 is the entering state.
    hs: Vec<f64>,
    cs: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LayerTape {
    fn emitted(&self, hd: usize) -> &[f64] {
        &self.hs[hd..]
    }

    fn final_state(&self, hd: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.hs.len();
        (self.hs[n - hd..].to_vec(), self.cs[n - hd..].to_vec())
    }
}

/// Everything recorded by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    generation: u64,
    steps: usize,
    l1: LayerTape,
    mask: Vec<f64>,
    l2: LayerTape,
}

impl Tape {
    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Hidden and cell vectors of both layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub h1: Vec<f64>,
    pub c1: Vec<f64>,
    pub h2: Vec<f64>,
    pub c2: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(h1: usize, h2: usize) -> Self {
        RecurrentState {
            h1: vec![0.0; h1],
            c1: vec![0.0; h1],
            h2: vec![0.0; h2],
            c2: vec![0.0; h2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmModel {
    pub layer1: LstmLayer,
    pub layer2: LstmLayer,
    /// m × h₂ read-out weights.
    pub output_w: Vec<f64>,
    pub output_b: Vec<f64>,
    pub dropout_p: f64,
    #[serde(skip)]
    state: Option<RecurrentState>,
    #[serde(skip)]
    generation: u64,
}

/// Weights, dropout rate and recurrent state; the tape generation counter
/// is bookkeeping and not compared.
impl PartialEq for LstmModel {
    fn eq(&self, other: &Self) -> bool {
        self.layer1 == other.layer1
            && self.layer2 == other.layer2
            && self.output_w == other.output_w
            && self.output_b == other.output_b
            && self.dropout_p == other.dropout_p
            && self.state == other.state
    }
}

/// Gradients with the same tensor layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layer1: LstmLayer,
    pub layer2: LstmLayer,
    pub output_w: Vec<f64>,
    pub output_b: Vec<f64>,
}

impl Gradients {
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.layer1.w,
            &self.layer1.u,
            &self.layer1.b,
            &self.layer2.w,
            &self.layer2.u,
            &self.layer2.b,
            &self.output_w,
            &self.output_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.layer1.w,
            &mut self.layer1.u,
            &mut self.layer1.b,
            &mut self.layer2.w,
            &mut self.layer2.u,
            &mut self.layer2.b,
            &mut self.output_w,
            &mut self.output_b,
        ]
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the
    /// norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for t in self.tensors_mut() {
                t.iter_mut().for_each(|g| *g *= scale);
            }
        }
        norm
    }
}

pub const TENSOR_NAMES: [&str; 8] = [
    "layer1.w",
    "layer1.u",
    "layer1.b",
    "layer2.w",
    "layer2.u",
    "layer2.b",
    "output.w",
    "output.b",
];

impl LstmModel {
    /// Randomly initialised model mapping `channels` inputs to `channels`
    /// outputs through hidden widths `(h1, h2)`.
    pub fn new<R: Rng>(channels: usize, hidden: (usize, usize), dropout_p: f64, rng: &mut R) -> Result<Self> {
        let (h1, h2) = hidden;
        if channels == 0 || h1 == 0 || h2 == 0 {
            return Err(Error::InvalidParam("model widths must be ≥ 1".into()));
        }
        check_dropout(dropout_p)?;
        let layer1 = LstmLayer::init(channels, h1, rng);
        let layer2 = LstmLayer::init(h1, h2, rng);
        let so = 1.0 / (h2 as f64).sqrt();
        let output_w = (0..channels * h2).map(|_| rng.gen_range(-so..so)).collect();
        Ok(LstmModel {
            layer1,
            layer2,
            output_w,
            output_b: vec![0.0; channels],
            dropout_p,
            state: None,
            generation: 0,
        })
    }

    pub fn channels(&self) -> usize {
        self.layer1.input
    }

    pub fn hidden_sizes(&self) -> (usize, usize) {
        (self.layer1.hidden, self.layer2.hidden)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Shape and finiteness checks, for models read from disk.
    pub fn validate(&self) -> Result<()> {
        self.layer1.check()?;
        self.layer2.check()?;
        check_dropout(self.dropout_p)?;
        let (m, h2) = (self.channels(), self.layer2.hidden);
        if self.layer2.input != self.layer1.hidden || self.output_w.len() != m * h2 || self.output_b.len() != m {
            return Err(Error::Shape("inconsistent layer widths".into()));
        }
        if self.output_w.iter().chain(&self.output_b).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite read-out weight".into()));
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.layer1.w,
            &self.layer1.u,
            &self.layer1.b,
            &self.layer2.w,
            &self.layer2.u,
            &self.layer2.b,
            &self.output_w,
            &self.output_b,
        ]
    }

    /// Mutable access to the weights. Invalidates outstanding tapes.
    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        self.generation += 1;
        [
            &mut self.layer1.w,
            &mut self.layer1.u,
            &mut self.layer1.b,
            &mut self.layer2.w,
            &mut self.layer2.u,
            &mut self.layer2.b,
            &mut self.output_w,
            &mut self.output_b,
        ]
    }

    pub fn zero_gradients(&self) -> Gradients {
        let (d, h1, h2) = (self.channels(), self.layer1.hidden, self.layer2.hidden);
        Gradients {
            layer1: LstmLayer::zeros(d, h1),
            layer2: LstmLayer::zeros(h1, h2),
            output_w: vec![0.0; self.output_w.len()],
            output_b: vec![0.0; self.output_b.len()],
        }
    }

    pub fn reset_state(&mut self) {
        self.state = None;
    }

    /// Current recurrent state (zeros when reset).
    pub fn state(&self) -> RecurrentState {
        self.state
            .clone()
            .unwrap_or_else(|| RecurrentState::zeros(self.layer1.hidden, self.layer2.hidden))
    }

    pub fn set_state(&mut self, state: RecurrentState) -> Result<()> {
        let (h1, h2) = self.hidden_sizes();
        if state.h1.len() != h1 || state.c1.len() != h1 || state.h2.len() != h2 || state.c2.len() != h2 {
            return Err(Error::Shape("recurrent state widths do not match the model".into()));
        }
        self.state = Some(state);
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<usize> {
        let m = self.channels();
        if input.is_empty() || !input.len().is_multiple_of(m) {
            return Err(Error::Shape(format!(
                "input of {} values is not a whole number of {m}-channel rows",
                input.len()
            )));
        }
        Ok(input.len() / m)
    }

    fn readout(&self, hs: &[f64]) -> Vec<f64> {
        let (m, h2) = (self.channels(), self.layer2.hidden);
        let steps = hs.len() / h2;
        let mut out = Vec::with_capacity(steps * m);
        for t in 0..steps {
            let h = &hs[t * h2..(t + 1) * h2];
            for k in 0..m {
                out.push(self.output_b[k] + dot(&self.output_w[k * h2..(k + 1) * h2], h));
            }
        }
        out
    }

    fn run(&mut self, input: &[f64], mask: Option<Vec<f64>>) -> Tape {
        let (h1, h2) = self.hidden_sizes();
        let state = self.state();
        let l1 = self.layer1.forward_seq(input, &state.h1, &state.c1);
        let mut x2 = l1.emitted(h1).to_vec();
        let mask = mask.unwrap_or_default();
        if !mask.is_empty() {
            x2.iter_mut().zip(&mask).for_each(|(x, k)| *x *= k);
        }
        let l2 = self.layer2.forward_seq(&x2, &state.h2, &state.c2);
        let (nh1, nc1) = l1.final_state(h1);
        let (nh2, nc2) = l2.final_state(h2);
        self.state = Some(RecurrentState {
            h1: nh1,
            c1: nc1,
            h2: nh2,
            c2: nc2,
        });
        Tape {
            generation: self.generation,
            steps: input.len() / self.channels(),
            l1,
            mask,
            l2,
        }
    }

    /// Inference pass over `steps × m` rows. Dropout is off; the recurrent
    /// state carries over to the next call.
    pub fn forward(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let tape = self.run(input, None);
        Ok(self.readout(tape.l2.emitted(self.layer2.hidden)))
    }

    /// Training pass: inverted dropout on the layer-1 output, masks drawn
    /// from `rng` and kept on the tape.
    pub fn forward_train<R: Rng>(&mut self, input: &[f64], rng: &mut R) -> Result<(Vec<f64>, Tape)> {
        let steps = self.check_input(input)?;
        let mask = if self.dropout_p > 0.0 {
            let keep = 1.0 / (1.0 - self.dropout_p);
            let p = self.dropout_p;
            Some(
                (0..steps * self.layer1.hidden)
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                    .collect(),
            )
        } else {
            None
        };
        let tape = self.run(input, mask);
        let out = self.readout(tape.l2.emitted(self.layer2.hidden));
        Ok((out, tape))
    }

    /// Gradients of the loss w.r.t. every weight, given the loss gradient
    /// w.r.t. the predictions of the taped pass.
    pub fn backward(&self, tape: &Tape, dpred: &[f64], tbptt: usize) -> Result<Gradients> {
        if tape.generation != self.generation {
            return Err(Error::InvalidParam(
                "tape is stale: weights changed since the forward pass".into(),
            ));
        }
        let (m, h1, h2) = (self.channels(), self.layer1.hidden, self.layer2.hidden);
        if dpred.len() != tape.steps * m {
            return Err(Error::Shape(format!(
                "loss gradient has {} entries, tape covers {}",
                dpred.len(),
                tape.steps * m
            )));
        }
        let tbptt = tbptt.max(1);
        let mut grads = self.zero_gradients();
        let hs2 = tape.l2.emitted(h2);
        let mut dh2 = vec![0.0; tape.steps * h2];
        for t in 0..tape.steps {
            let h = &hs2[t * h2..(t + 1) * h2];
            let dh = &mut dh2[t * h2..(t + 1) * h2];
            for k in 0..m {
                let dy = dpred[t * m + k];
                grads.output_b[k] += dy;
                axpy(dy, h, &mut grads.output_w[k * h2..(k + 1) * h2]);
                axpy(dy, &self.output_w[k * h2..(k + 1) * h2], dh);
            }
        }
        let mut dh1 = self.layer2.backward_seq(&tape.l2, &dh2, tbptt, &mut grads.layer2);
        if !tape.mask.is_empty() {
            dh1.iter_mut().zip(&tape.mask).for_each(|(g, k)| *g *= k);
        }
        debug_assert_eq!(dh1.len(), tape.steps * h1);
        self.layer1.backward_seq(&tape.l1, &dh1, tbptt, &mut grads.layer1);
        Ok(grads)
    }
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParam(format!("dropout_p must lie in [0, 1), got {p}")));
    }
    Ok(())
}

/// Mean squared error over all entries and its gradient w.r.t. `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mse_loss: prediction has {} entries, target {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let r = p - t;
            loss += r * r;
            2.0 * r / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// One RMSprop update of a single tensor.
pub fn rmsprop_step(param: &mut [f64], grad: &[f64], accum: &mut [f64], lr: f64, rho: f64, eps: f64) {
    for ((p, g), v) in param.iter_mut().zip(grad).zip(accum.iter_mut()) {
        *v = rho * *v + (1.0 - rho) * g * g;
        *p -= lr * g / (v.sqrt() + eps);
    }
}

#[derive(Debug, Clone)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    accum: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(model: &LstmModel, config: &TrainConfig) -> Self {
        RmsProp {
            learning_rate: config.learning_rate,
            rho: config.rmsprop_decay,
            epsilon: config.rmsprop_epsilon,
            clip_norm: config.gradient_clip_norm,
            accum: model.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    /// Clips `grads` to the global norm bound, then updates the model.
    /// Returns the pre-clip gradient norm.
    pub fn step(&mut self, model: &mut LstmModel, grads: &mut Gradients) -> f64 {
        let norm = grads.clip_global_norm(self.clip_norm);
        let (lr, rho, eps) = (self.learning_rate, self.rho, self.epsilon);
        for ((p, g), v) in model.tensors_mut().into_iter().zip(grads.tensors()).zip(&mut self.accum) {
            rmsprop_step(p, g, v, lr, rho, eps);
        }
        norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Batch length w.
    pub window: usize,
    pub hidden: (usize, usize),
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub epochs: usize,
    /// Defaults to the batch length when `None`.
    pub tbptt_length: Option<usize>,
    pub gradient_clip_norm: f64,
    pub seed: u64,
    pub dropout_p: f64,
    /// Stop after this many epochs without an improvement of `min_delta`.
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window: 120,
            hidden: (64, 64),
            learning_rate: 1e-3,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            epochs: 100,
            tbptt_length: None,
            gradient_clip_norm: 5.0,
            seed: 0,
            dropout_p: 0.1,
            patience: 10,
            min_delta: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidParam("window must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParam("learning_rate must be > 0".into()));
        }
        if !(self.rmsprop_decay > 0.0 && self.rmsprop_decay < 1.0) {
            return Err(Error::InvalidParam("rmsprop_decay must lie in (0, 1)".into()));
        }
        if !(self.rmsprop_epsilon > 0.0) {
            return Err(Error::InvalidParam("rmsprop_epsilon must be > 0".into()));
        }
        if self.tbptt_length == Some(0) {
            return Err(Error::InvalidParam("tbptt_length must be ≥ 1".into()));
        }
        if !(self.gradient_clip_norm > 0.0) {
            return Err(Error::InvalidParam("gradient_clip_norm must be > 0".into()));
        }
        check_dropout(self.dropout_p)
    }

    pub fn tbptt(&self) -> usize {
        self.tbptt_length.unwrap_or(self.window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss per completed epoch.
    pub loss_history: Vec<f64>,
    pub stopped_early: bool,
}

/// Fits `model` to predict batch i+1 from batch i over one long stateful
/// pass per epoch. State is zeroed at the start of each epoch.
pub fn train(model: &mut LstmModel, series: &TimeSeries, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let w = config.window;
    if series.len() < 2 * w {
        return Err(Error::TooShort {
            required: 2 * w,
            actual: series.len(),
        });
    }
    if series.width() != model.channels() {
        return Err(Error::Shape(format!(
            "series has {} channels, model expects {}",
            series.width(),
            model.channels()
        )));
    }
    model.dropout_p = config.dropout_p;
    let batches = make_batches(series, w)?;
    let mut optimizer = RmsProp::new(model, config);
    let mut dropout_rng = rng::substream(config.seed, rng::DROPOUT);
    let tbptt = config.tbptt();

    let mut history = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        model.reset_state();
        let mut total = 0.0;
        for (step, pair) in batches.windows(2).enumerate() {
            let (pred, tape) = model.forward_train(&pair[0].values, &mut dropout_rng)?;
            let (loss, dpred) = mse_loss(&pred, &pair[1].values)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let mut grads = model.backward(&tape, &dpred, tbptt)?;
            optimizer.step(model, &mut grads);
            total += loss;
        }
        let mean = total / (batches.len() - 1) as f64;
        history.push(mean);
        if mean < best - config.min_delta {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                model.reset_state();
                return Ok(TrainReport {
                    loss_history: history,
                    stopped_early: true,
                });
            }
        }
    }
    model.reset_state();
    Ok(TrainReport {
        loss_history: history,
        stopped_early: false,
    })
}
