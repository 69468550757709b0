//! Elman recurrent network mapping motor angles to (β, γ, z_p).
//!
//! `h_t = tanh(W_h·h_{t−1} + W_x·x_t + b)`, `y_t = W_out·h_t + b_out`, with
//! `h_0 = 0`. Inputs and outputs are z-scored with training statistics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Target};
use crate::error::{Error, Result};
use crate::scaling::AffineScaler;

pub const MODEL_KIND: &str = "rnn";

const IN: usize = 3;
const OUT: usize = 3;
/// Normalized inputs are clipped here so that extreme angles saturate the
/// cell instead of overflowing to `inf − inf`.
const INPUT_LIMIT: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnConfig {
    pub hidden_size: usize,
    /// Consecutive samples per training sequence. With 1 every sample is
    /// its own sequence and the recurrent weights receive no gradient.
    pub seq_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for RnnConfig {
    fn default() -> Self {
        RnnConfig {
            hidden_size: 64,
            seq_len: 1,
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 7,
        }
    }
}

impl RnnConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("hidden_size", self.hidden_size),
            ("seq_len", self.seq_len),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// All trainable parameters in one flat buffer.
///
/// Layout: `W_x` (H×3), `W_h` (H×H), `b` (H), `W_out` (3×H), `b_out` (3),
/// matrices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    hidden: usize,
    data: Vec<f64>,
}

impl Weights {
    pub fn zeros(hidden: usize) -> Self {
        Weights {
            hidden,
            data: vec![0.0; Self::len_for(hidden)],
        }
    }

    fn len_for(h: usize) -> usize {
        h * IN + h * h + h + OUT * h + OUT
    }

    /// Uniform in `±1/√fan_in` per layer.
    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(hidden);
        let bound_x = 1.0 / (IN as f64).sqrt();
        let bound_h = 1.0 / (hidden as f64).sqrt();
        let (wx, rest) = w.data.split_at_mut(hidden * IN);
        for v in wx {
            *v = rng.random_range(-bound_x..bound_x);
        }
        // W_h, b and the readout all take the hidden state as fan-in
        for v in rest {
            *v = rng.random_range(-bound_h..bound_h);
        }
        w
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn offsets(&self) -> [usize; 5] {
        let h = self.hidden;
        let wh = h * IN;
        let b = wh + h * h;
        let wo = b + h;
        let bo = wo + OUT * h;
        [0, wh, b, wo, bo]
    }

    pub fn w_x(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[0]..o[1]]
    }

    pub fn w_h(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[1]..o[2]]
    }

    pub fn b(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[2]..o[3]]
    }

    pub fn w_out(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[3]..o[4]]
    }

    pub fn b_out(&self) -> &[f64] {
        let o = self.offsets();
        &self.data[o[4]..]
    }

    fn split_mut(&mut self) -> [&mut [f64]; 5] {
        let o = self.offsets();
        let (wx, rest) = self.data.split_at_mut(o[1]);
        let (wh, rest) = rest.split_at_mut(o[2] - o[1]);
        let (b, rest) = rest.split_at_mut(o[3] - o[2]);
        let (wo, bo) = rest.split_at_mut(o[4] - o[3]);
        [wx, wh, b, wo, bo]
    }

    /// Runs the cell over a normalized sequence; returns normalized outputs.
    pub fn forward(&self, xs: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let mut states = Vec::new();
        self.run(xs, &mut states)
    }

    /// Forward pass keeping hidden states `h_1..h_T` in `states`, flat.
    fn run(&self, xs: &[[f64; 3]], states: &mut Vec<f64>) -> Vec<[f64; 3]> {
        let h = self.hidden;
        let (wx, wh, b, wo, bo) = (self.w_x(), self.w_h(), self.b(), self.w_out(), self.b_out());
        states.clear();
        states.resize(xs.len() * h, 0.0);
        let mut ys = Vec::with_capacity(xs.len());
        for (t, x) in xs.iter().enumerate() {
            let (prev, cur) = states.split_at_mut(t * h);
            let cur = &mut cur[..h];
            let prev = if t == 0 { None } else { Some(&prev[(t - 1) * h..]) };
            for i in 0..h {
                let row = &wx[i * IN..(i + 1) * IN];
                let mut a = b[i] + row[0] * x[0] + row[1] * x[1] + row[2] * x[2];
                // h_0 = 0, so the recurrent term starts at t = 1
                if let Some(prev) = prev {
                    a += dot(&wh[i * h..(i + 1) * h], prev);
                }
                cur[i] = a.tanh();
            }
            ys.push(std::array::from_fn(|k| bo[k] + dot(&wo[k * h..(k + 1) * h], cur)));
        }
        ys
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reusable buffers for [`accumulate_gradient`].
#[derive(Debug, Default)]
pub struct Scratch {
    states: Vec<f64>,
    dh_next: Vec<f64>,
    da: Vec<f64>,
}

/// Adds `∂L/∂w` of one sequence to `grad` and returns the sequence's summed
/// squared error. `L = weight · Σ_t ‖y_t − target_t‖²`.
pub fn accumulate_gradient(
    w: &Weights,
    xs: &[[f64; 3]],
    targets: &[[f64; 3]],
    weight: f64,
    grad: &mut Weights,
    scratch: &mut Scratch,
) -> f64 {
    let h = w.hidden;
    let ys = w.run(xs, &mut scratch.states);
    let (wh, wo) = (w.w_h(), w.w_out());
    let [gwx, gwh, gb, gwo, gbo] = grad.split_mut();
    scratch.dh_next.clear();
    scratch.dh_next.resize(h, 0.0);
    scratch.da.resize(h, 0.0);
    let mut sse = 0.0;
    for t in (0..xs.len()).rev() {
        let ht = &scratch.states[t * h..(t + 1) * h];
        let mut dy = [0.0; OUT];
        for k in 0..OUT {
            let e = ys[t][k] - targets[t][k];
            sse += e * e;
            dy[k] = 2.0 * weight * e;
            gbo[k] += dy[k];
            for (g, hv) in gwo[k * h..(k + 1) * h].iter_mut().zip(ht) {
                *g += dy[k] * hv;
            }
        }
        let x = xs[t];
        for i in 0..h {
            let dh = scratch.dh_next[i]
                + dy[0] * wo[i]
                + dy[1] * wo[h + i]
                + dy[2] * wo[2 * h + i];
            let da = dh * (1.0 - ht[i] * ht[i]);
            scratch.da[i] = da;
            gb[i] += da;
            let g = &mut gwx[i * IN..(i + 1) * IN];
            g[0] += da * x[0];
            g[1] += da * x[1];
            g[2] += da * x[2];
        }
        if t > 0 {
            let hp = &scratch.states[(t - 1) * h..t * h];
            for i in 0..h {
                let da = scratch.da[i];
                for (g, hv) in gwh[i * h..(i + 1) * h].iter_mut().zip(hp) {
                    *g += da * hv;
                }
            }
            for j in 0..h {
                scratch.dh_next[j] = (0..h).map(|i| wh[i * h + j] * scratch.da[i]).sum();
            }
        }
    }
    sse
}

/// Mean squared error over all steps and outputs of a batch of sequences,
/// together with its gradient.
pub fn batch_loss_and_gradient(
    w: &Weights,
    batch: &[(&[[f64; 3]], &[[f64; 3]])],
) -> (f64, Weights) {
    let count: usize = batch.iter().map(|(x, _)| x.len()).sum();
    let weight = 1.0 / (count * OUT) as f64;
    let mut grad = Weights::zeros(w.hidden);
    let mut scratch = Scratch::default();
    let mut sse = 0.0;
    for (xs, ys) in batch {
        sse += accumulate_gradient(w, xs, ys, weight, &mut grad, &mut scratch);
    }
    (sse * weight, grad)
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Per-epoch mean squared errors on normalized outputs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTrace {
    /// Mean of the batch losses seen during the epoch.
    pub train: Vec<f64>,
    /// Loss on the validation split after the epoch.
    pub val: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    config: RnnConfig,
    weights: Weights,
    input_scaling: AffineScaler,
    output_scaling: AffineScaler,
    loss_trace: Option<LossTrace>,
}

impl RnnModel {
    pub fn new(
        config: RnnConfig,
        weights: Weights,
        input_scaling: AffineScaler,
        output_scaling: AffineScaler,
    ) -> Result<Self> {
        config.validate()?;
        if weights.hidden != config.hidden_size {
            return Err(Error::InvalidArgument("weights do not match hidden_size".into()));
        }
        if weights.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weights".into()));
        }
        Ok(RnnModel {
            config,
            weights,
            input_scaling,
            output_scaling,
            loss_trace: None,
        })
    }

    pub fn train(config: &RnnConfig, train: &Dataset, val: &Dataset) -> Result<(Self, LossTrace)> {
        config.validate()?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let input_scaling = AffineScaler::z_score(&train.inputs())?;
        let output_scaling = AffineScaler::z_score(&train.outputs())?;
        let norm = |d: &Dataset| -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
            let x = d.inputs().iter().map(|v| input_scaling.apply(v)).collect();
            let y = d.outputs().iter().map(|v| output_scaling.apply(v)).collect();
            (x, y)
        };
        let (tx, ty) = norm(train);
        let (vx, vy) = norm(val);

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut weights = Weights::init(config.hidden_size, &mut rng);
        let mut adam = Adam::new(weights.data.len());
        let starts: Vec<usize> = (0..tx.len()).step_by(config.seq_len).collect();
        let mut order = starts.clone();
        let mut trace = LossTrace::default();
        let mut grad = Weights::zeros(config.hidden_size);
        let mut scratch = Scratch::default();

        for epoch in 1..=config.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(config.batch_size) {
                let count: usize = chunk
                    .iter()
                    .map(|&s| (s + config.seq_len).min(tx.len()) - s)
                    .sum();
                let weight = 1.0 / (count * OUT) as f64;
                grad.data.iter_mut().for_each(|g| *g = 0.0);
                let mut sse = 0.0;
                for &s in chunk {
                    let e = (s + config.seq_len).min(tx.len());
                    sse += accumulate_gradient(&weights, &tx[s..e], &ty[s..e], weight, &mut grad, &mut scratch);
                }
                let loss = sse * weight;
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch });
                }
                match config.optimizer {
                    Optimizer::Adam => adam.update(&mut weights.data, &grad.data, config.learning_rate),
                    Optimizer::Sgd => {
                        for (p, g) in weights.data.iter_mut().zip(&grad.data) {
                            *p -= config.learning_rate * g;
                        }
                    }
                }
                if weights.data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { epoch });
                }
                loss_sum += loss;
                batches += 1;
            }
            let val_loss = sequence_mse(&weights, &vx, &vy, config.seq_len);
            if !val_loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            trace.train.push(loss_sum / batches as f64);
            trace.val.push(val_loss);
        }
        let mut model = RnnModel::new(config.clone(), weights, input_scaling, output_scaling)?;
        model.loss_trace = Some(trace.clone());
        Ok((model, trace))
    }

    pub fn config(&self) -> &RnnConfig {
        &self.config
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn input_scaling(&self) -> &AffineScaler {
        &self.input_scaling
    }

    pub fn output_scaling(&self) -> &AffineScaler {
        &self.output_scaling
    }

    /// Loss trace of the run that produced the model, if known.
    pub fn loss_trace(&self) -> Option<&LossTrace> {
        self.loss_trace.as_ref()
    }

    /// Outputs for a sequence of motor angles, carrying the hidden state
    /// from step to step.
    pub fn forward(&self, thetas: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let xs: Vec<[f64; 3]> = thetas
            .iter()
            .map(|t| self.input_scaling.apply(t).map(|v| v.clamp(-INPUT_LIMIT, INPUT_LIMIT)))
            .collect();
        self.weights
            .forward(&xs)
            .iter()
            .map(|y| self.output_scaling.invert(y))
            .collect()
    }

    /// `(β, γ, z_p)` from a length-one sequence.
    pub fn predict_raw(&self, theta: &[f64; 3]) -> [f64; 3] {
        self.forward(std::slice::from_ref(theta))[0]
    }

    pub fn predict(&self, theta: &[f64; 3]) -> Target {
        Target::from_array(self.predict_raw(theta))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&RnnFile::from(self))?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: RnnFile = serde_json::from_str(json)?;
        file.try_into()
    }
}

/// Mean squared error over normalized data split into consecutive
/// sequences of `seq_len`.
fn sequence_mse(w: &Weights, xs: &[[f64; 3]], ys: &[[f64; 3]], seq_len: usize) -> f64 {
    let mut sse = 0.0;
    for (x, y) in xs.chunks(seq_len).zip(ys.chunks(seq_len)) {
        for (p, t) in w.forward(x).iter().zip(y) {
            sse += (0..OUT).map(|k| (p[k] - t[k]).powi(2)).sum::<f64>();
        }
    }
    sse / (xs.len() * OUT) as f64
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RnnFile {
    kind: String,
    config: RnnConfig,
    activation: String,
    /// Row-major matrices, one inner vector per row.
    w_x: Vec<Vec<f64>>,
    w_h: Vec<Vec<f64>>,
    b: Vec<f64>,
    w_out: Vec<Vec<f64>>,
    b_out: Vec<f64>,
    input_scaling: AffineScaler,
    output_scaling: AffineScaler,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loss_trace: Option<LossTrace>,
}

fn rows(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width).map(<[f64]>::to_vec).collect()
}

impl From<&RnnModel> for RnnFile {
    fn from(m: &RnnModel) -> Self {
        let w = &m.weights;
        let h = w.hidden;
        RnnFile {
            kind: MODEL_KIND.into(),
            config: m.config.clone(),
            activation: "tanh".into(),
            w_x: rows(w.w_x(), IN),
            w_h: rows(w.w_h(), h),
            b: w.b().to_vec(),
            w_out: rows(w.w_out(), h),
            b_out: w.b_out().to_vec(),
            input_scaling: m.input_scaling,
            output_scaling: m.output_scaling,
            loss_trace: m.loss_trace.clone(),
        }
    }
}

impl TryFrom<RnnFile> for RnnModel {
    type Error = Error;

    fn try_from(f: RnnFile) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidArgument(format!("rnn model file: {msg}"));
        if f.kind != MODEL_KIND {
            return Err(bad("kind is not 'rnn'"));
        }
        if f.activation != "tanh" {
            return Err(bad("only tanh activation is supported"));
        }
        let h = f.config.hidden_size;
        let shape_ok = |m: &Vec<Vec<f64>>, r: usize, c: usize| m.len() == r && m.iter().all(|row| row.len() == c);
        if !(shape_ok(&f.w_x, h, IN)
            && shape_ok(&f.w_h, h, h)
            && f.b.len() == h
            && shape_ok(&f.w_out, OUT, h)
            && f.b_out.len() == OUT)
        {
            return Err(bad("weight shapes do not match hidden_size"));
        }
        let data: Vec<f64> = f
            .w_x
            .iter()
            .chain(&f.w_h)
            .flatten()
            .chain(&f.b)
            .chain(f.w_out.iter().flatten())
            .chain(&f.b_out)
            .copied()
            .collect();
        let weights = Weights { hidden: h, data };
        let mut model = RnnModel::new(f.config, weights, f.input_scaling, f.output_scaling)?;
        model.loss_trace = f.loss_trace;
        Ok(model)
    }
}
