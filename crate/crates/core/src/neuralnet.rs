//! Dense feed-forward networks in double precision.
//!
//! Hidden layers use ReLU followed by inverted dropout; the output head is
//! either linear (Q-values) or softmax (classifier). Batches are row-major
//! `rows x width` slices.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SYMCKNET";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Linear,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetSpec {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    /// Drop probability applied after every hidden layer in train mode.
    pub dropout: f64,
    pub head: Head,
}

impl DenseNetSpec {
    pub fn new(widths: Vec<usize>, dropout: f64, head: Head) -> Result<Self> {
        let spec = DenseNetSpec { widths, dropout, head };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer widths {:?}", self.widths)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Weights (`outputs x inputs`, row-major) and biases of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }
}

/// Gradients with the same layout as [`DenseNet`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    spec: DenseNetSpec,
    layers: Vec<Layer>,
}

struct Trace {
    /// `acts[l]` is the input of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Per hidden layer: ReLU derivative times dropout scale.
    masks: Vec<Vec<f64>>,
    /// Raw output of the last layer (logits for softmax heads).
    output: Vec<f64>,
}

/// `c = a * b^T (+ c if accumulate)`, `a: m x k`, `b: n x k`.
fn gemm_abt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    let beta = if accumulate { 1.0 } else { 0.0 };
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c = a^T * b`, `a: k x m`, `b: k x n`.
fn gemm_atb(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c = a * b`, `a: m x k`, `b: k x n`.
fn gemm_ab(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Row-wise softmax in place.
pub fn softmax_rows(values: &mut [f64], width: usize) {
    for row in values.chunks_mut(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(spec: DenseNetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                for v in &mut layer.weights {
                    *v = rng.gen_range(-limit..=limit);
                }
                layer
            })
            .collect();
        Ok(DenseNet { spec, layers })
    }

    pub fn zeros(spec: DenseNetSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec.widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(DenseNet { spec, layers })
    }

    pub fn spec(&self) -> &DenseNetSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn rows_of(&self, input: &[f64]) -> Result<usize> {
        let width = self.spec.input_width();
        if !input.len().is_multiple_of(width) || input.is_empty() {
            return Err(Error::ShapeMismatch { expected: width, actual: input.len() });
        }
        Ok(input.len() / width)
    }

    fn run<R: Rng + ?Sized>(&self, input: &[f64], mode: Mode, rng: &mut R, keep: bool) -> Result<Trace> {
        let rows = self.rows_of(input)?;
        let last = self.layers.len() - 1;
        let drop = if mode == Mode::Train { self.spec.dropout } else { 0.0 };
        let scale = 1.0 / (1.0 - drop);
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(last);
        let mut current = input.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; rows * layer.outputs];
            for row in z.chunks_mut(layer.outputs) {
                row.copy_from_slice(&layer.bias);
            }
            gemm_abt(rows, layer.inputs, layer.outputs, &current, &layer.weights, &mut z, true);
            if l < last {
                let mut mask = vec![0.0; z.len()];
                for (v, m) in z.iter_mut().zip(mask.iter_mut()) {
                    let kept = drop == 0.0 || rng.gen::<f64>() >= drop;
                    if *v > 0.0 && kept {
                        *m = scale;
                        *v *= scale;
                    } else {
                        *v = 0.0;
                    }
                }
                if keep {
                    masks.push(mask);
                }
            }
            let prev = std::mem::replace(&mut current, z);
            if keep {
                acts.push(prev);
            }
        }
        Ok(Trace { acts, masks, output: current })
    }

    /// Forward pass. Eval mode applies no dropout and ignores `rng`.
    pub fn forward<R: Rng + ?Sized>(&self, input: &[f64], mode: Mode, rng: &mut R) -> Result<Vec<f64>> {
        let mut out = self.run(input, mode, rng, false)?.output;
        if self.spec.head == Head::Softmax {
            softmax_rows(&mut out, self.spec.output_width());
        }
        Ok(out)
    }

    /// Eval-mode forward pass.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input, Mode::Eval, &mut rand::rngs::mock::StepRng::new(0, 0))
    }

    fn backward(&self, trace: &Trace, d_out: Vec<f64>, rows: usize) -> Gradients {
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        let mut delta = d_out;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g = &mut grads[l];
            gemm_atb(layer.outputs, rows, layer.inputs, &delta, &trace.acts[l], &mut g.weights);
            for row in delta.chunks(layer.outputs) {
                for (b, d) in g.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; rows * layer.inputs];
                gemm_ab(rows, layer.outputs, layer.inputs, &delta, &layer.weights, &mut prev);
                for (p, m) in prev.iter_mut().zip(&trace.masks[l - 1]) {
                    *p *= m;
                }
                delta = prev;
            }
        }
        Gradients { layers: grads }
    }

    /// Mean squared TD error over the selected outputs and its gradient.
    pub fn q_loss_grad<R: Rng + ?Sized>(
        &self,
        states: &[f64],
        actions: &[usize],
        targets: &[f64],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, Gradients)> {
        let rows = self.rows_of(states)?;
        if actions.len() != rows || targets.len() != rows {
            return Err(Error::ShapeMismatch { expected: rows, actual: actions.len().min(targets.len()) });
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("Q targets"));
        }
        let width = self.spec.output_width();
        if let Some(&bad) = actions.iter().find(|&&a| a >= width) {
            return Err(Error::IndexOutOfRange { index: bad, len: width });
        }
        let trace = self.run(states, mode, rng, true)?;
        let mut d_out = vec![0.0; rows * width];
        let mut loss = 0.0;
        for r in 0..rows {
            let idx = r * width + actions[r];
            let err = trace.output[idx] - targets[r];
            loss += err * err;
            d_out[idx] = 2.0 * err / rows as f64;
        }
        let grads = self.backward(&trace, d_out, rows);
        Ok((loss / rows as f64, grads))
    }

    /// Mean negative log-likelihood of `labels` under the softmax output.
    pub fn ce_loss_grad<R: Rng + ?Sized>(
        &self,
        states: &[f64],
        labels: &[usize],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(f64, Gradients)> {
        let rows = self.rows_of(states)?;
        if labels.len() != rows {
            return Err(Error::ShapeMismatch { expected: rows, actual: labels.len() });
        }
        let width = self.spec.output_width();
        if let Some(&bad) = labels.iter().find(|&&a| a >= width) {
            return Err(Error::IndexOutOfRange { index: bad, len: width });
        }
        let trace = self.run(states, mode, rng, true)?;
        let mut probs = trace.output.clone();
        softmax_rows(&mut probs, width);
        let mut loss = 0.0;
        for r in 0..rows {
            let row = &trace.output[r * width..(r + 1) * width];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[r]];
            probs[r * width + labels[r]] -= 1.0;
        }
        for p in &mut probs {
            *p /= rows as f64;
        }
        let grads = self.backward(&trace, probs, rows);
        Ok((loss / rows as f64, grads))
    }

    /// Serializes the network and, optionally, its optimizer state.
    pub fn to_bytes(&self, optimizer: Option<&Optimizer>) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.num_params() * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.spec.head {
            Head::Linear => 0,
            Head::Softmax => 1,
        });
        out.extend_from_slice(&self.spec.dropout.to_le_bytes());
        out.extend_from_slice(&(self.spec.widths.len() as u32).to_le_bytes());
        for &w in &self.spec.widths {
            out.extend_from_slice(&(w as u64).to_le_bytes());
        }
        let put = |out: &mut Vec<u8>, values: &[f64]| {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for layer in &self.layers {
            put(&mut out, &layer.weights);
            put(&mut out, &layer.bias);
        }
        match optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                let (kind, b1, b2, eps) = match opt.kind {
                    OptimizerKind::Adam { beta1, beta2, eps } => (0u8, beta1, beta2, eps),
                    OptimizerKind::Sgd => (1u8, 0.0, 0.0, 0.0),
                };
                out.push(kind);
                for v in [opt.learning_rate, b1, b2, eps] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&opt.step.to_le_bytes());
                out.push(u8::from(!opt.first.is_empty()));
                for moment in opt.first.iter().chain(&opt.second) {
                    put(&mut out, moment);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<(DenseNet, Option<Optimizer>), String> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| "truncated header")?;
        if &magic != MAGIC {
            return Err("bad magic".into());
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let head = match read_u8(&mut r)? {
            0 => Head::Linear,
            1 => Head::Softmax,
            other => return Err(format!("bad head tag {other}")),
        };
        let dropout = read_f64(&mut r)?;
        let n = read_u32(&mut r)? as usize;
        if n > 64 {
            return Err("implausible layer count".into());
        }
        let widths = (0..n).map(|_| read_u64(&mut r).map(|w| w as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let spec = DenseNetSpec::new(widths, dropout, head).map_err(|e| e.to_string())?;
        let mut net = DenseNet::zeros(spec).map_err(|e| e.to_string())?;
        for layer in &mut net.layers {
            read_into(&mut r, &mut layer.weights)?;
            read_into(&mut r, &mut layer.bias)?;
        }
        let optimizer = match read_u8(&mut r)? {
            0 => None,
            1 => {
                let kind = read_u8(&mut r)?;
                let lr = read_f64(&mut r)?;
                let (b1, b2, eps) = (read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
                let step = read_u64(&mut r)?;
                let has_moments = read_u8(&mut r)? == 1;
                let kind = match kind {
                    0 => OptimizerKind::Adam { beta1: b1, beta2: b2, eps },
                    1 => OptimizerKind::Sgd,
                    other => return Err(format!("bad optimizer tag {other}")),
                };
                let mut opt = Optimizer::new(kind, lr);
                opt.step = step;
                if has_moments {
                    opt.first = net.layers.iter().flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]]).collect();
                    opt.second = opt.first.clone();
                    for m in opt.first.iter_mut().chain(opt.second.iter_mut()) {
                        read_into(&mut r, m)?;
                    }
                }
                Some(opt)
            }
            other => return Err(format!("bad optimizer flag {other}")),
        };
        if !r.is_empty() {
            return Err(format!("{} trailing bytes", r.len()));
        }
        Ok((net, optimizer))
    }

    pub fn save(&self, optimizer: Option<&Optimizer>, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes(optimizer)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(DenseNet, Option<Optimizer>)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        DenseNet::from_bytes(&bytes).map_err(|reason| Error::Checkpoint { path: path.to_path_buf(), reason })
    }
}

fn read_u8(r: &mut &[u8]) -> std::result::Result<u8, String> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(|_| "truncated".to_string())?;
    Ok(b[0])
}

fn read_u32(r: &mut &[u8]) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| "truncated".to_string())?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> std::result::Result<u64, String> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| "truncated".to_string())?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut &[u8]) -> std::result::Result<f64, String> {
    read_u64(r).map(f64::from_bits)
}

fn read_into(r: &mut &[u8], out: &mut [f64]) -> std::result::Result<(), String> {
    for v in out.iter_mut() {
        *v = read_f64(r)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive-moment (or plain SGD) parameter updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Optimizer { kind, learning_rate, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::default(), learning_rate)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Non-finite gradients are rejected before any
    /// parameter is touched.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len()
            || grads.layers.iter().zip(&net.layers).any(|(g, l)| g.weights.len() != l.weights.len() || g.bias.len() != l.bias.len())
        {
            return Err(Error::ShapeMismatch { expected: net.num_params(), actual: grads.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum() });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
                    for (p, d) in layer.weights.iter_mut().zip(&g.weights) {
                        *p -= lr * d;
                    }
                    for (p, d) in layer.bias.iter_mut().zip(&g.bias) {
                        *p -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.first.is_empty() {
                    self.first = net.layers.iter().flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]]).collect();
                    self.second = self.first.clone();
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let mut k = 0;
                for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
                    for (params, grad) in [(&mut layer.weights, &g.weights), (&mut layer.bias, &g.bias)] {
                        let m = &mut self.first[k];
                        let v = &mut self.second[k];
                        for i in 0..params.len() {
                            let d = grad[i];
                            m[i] = beta1 * m[i] + (1.0 - beta1) * d;
                            v[i] = beta2 * v[i] + (1.0 - beta2) * d * d;
                            params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                        }
                        k += 1;
                    }
                }
            }
        }
        if !net.is_finite() {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(())
    }
}
