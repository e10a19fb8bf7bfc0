//! Classifiers with hand-derived gradients: multinomial logistic regression
//! and a one-hidden-layer ReLU network.
//!
//! Parameters live in one flat vector so the federated algorithms can treat
//! every model as a point in `R^p`. Layouts (all matrices row-major):
//!
//! * linear: `W (C×D)`, `b (C)`
//! * mlp: `W1 (H×D)`, `b1 (H)`, `W2 (C×H)`, `b2 (C)`

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{check_len, Error, Result};
use crate::geometry::RngStream;
use crate::numerics::{dot_unchecked, log_sum_exp, softmax_in_place, DenseVector};

/// Architecture descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelShape {
    pub input: usize,
    /// Hidden width; `None` for the linear model.
    pub hidden: Option<usize>,
    pub classes: usize,
}

impl ModelShape {
    pub fn linear(input: usize, classes: usize) -> Self {
        Self {
            input,
            hidden: None,
            classes,
        }
    }

    pub fn mlp(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            input,
            hidden: Some(hidden),
            classes,
        }
    }

    pub fn param_count(&self) -> usize {
        match self.hidden {
            None => self.classes * self.input + self.classes,
            Some(h) => h * self.input + h + self.classes * h + self.classes,
        }
    }

    /// Cross-entropy is convex in the parameters only for the linear model.
    pub fn is_convex(&self) -> bool {
        self.hidden.is_none()
    }

    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.classes == 0 || self.hidden == Some(0) {
            return Err(Error::param(format!("degenerate model shape {self:?}")));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch<'_>) -> Result<()> {
        check_len(self.input, batch.feature_dim())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub flat: DenseVector,
}

impl ModelParams {
    pub fn new(shape: ModelShape, flat: DenseVector) -> Result<Self> {
        shape.validate()?;
        check_len(shape.param_count(), flat.len())?;
        if !flat.is_finite() {
            return Err(Error::Invariant("model parameters must be finite".into()));
        }
        Ok(Self { shape, flat })
    }

    pub fn zeros(shape: ModelShape) -> Self {
        Self {
            shape,
            flat: DenseVector::zeros(shape.param_count()),
        }
    }

    /// Linear models start at zero; hidden layers draw from
    /// `U(-1/√fan_in, 1/√fan_in)` with zero biases.
    pub fn init(shape: ModelShape, rng: &mut RngStream) -> Result<Self> {
        shape.validate()?;
        let mut p = Self::zeros(shape);
        if let Some(h) = shape.hidden {
            let d = shape.input;
            let b1 = 1.0 / (d as f64).sqrt();
            for v in &mut p.flat[..h * d] {
                *v = rng.random_range(-b1..b1);
            }
            let start = h * d + h;
            let b2 = 1.0 / (h as f64).sqrt();
            for v in &mut p.flat[start..start + shape.classes * h] {
                *v = rng.random_range(-b2..b2);
            }
        }
        Ok(p)
    }
}

/// Loss value and gradient from one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: DenseVector,
}

/// Scratch buffers reused across samples.
struct Workspace {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    dhidden: Vec<f64>,
}

impl Workspace {
    fn new(shape: &ModelShape) -> Self {
        let h = shape.hidden.unwrap_or(0);
        Self {
            hidden_pre: vec![0.0; h],
            hidden: vec![0.0; h],
            logits: vec![0.0; shape.classes],
            dhidden: vec![0.0; h],
        }
    }
}

/// Fills `ws.logits` (and hidden activations for the MLP).
fn forward(shape: &ModelShape, params: &[f64], x: &[f64], ws: &mut Workspace) {
    let d = shape.input;
    let c = shape.classes;
    match shape.hidden {
        None => {
            let (w, b) = params.split_at(c * d);
            for k in 0..c {
                ws.logits[k] = dot_unchecked(&w[k * d..(k + 1) * d], x) + b[k];
            }
        }
        Some(h) => {
            let (w1, rest) = params.split_at(h * d);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(c * h);
            for j in 0..h {
                let pre = dot_unchecked(&w1[j * d..(j + 1) * d], x) + b1[j];
                ws.hidden_pre[j] = pre;
                ws.hidden[j] = pre.max(0.0);
            }
            for k in 0..c {
                ws.logits[k] = dot_unchecked(&w2[k * h..(k + 1) * h], &ws.hidden) + b2[k];
            }
        }
    }
}

/// Adds `scale · ∂(−ln softmax(z)_y)/∂θ` into `grad`. Expects `ws.logits`
/// already turned into probabilities.
fn backward(shape: &ModelShape, params: &[f64], x: &[f64], y: usize, scale: f64, ws: &mut Workspace, grad: &mut [f64]) {
    let d = shape.input;
    let c = shape.classes;
    match shape.hidden {
        None => {
            let (gw, gb) = grad.split_at_mut(c * d);
            for k in 0..c {
                let g = (ws.logits[k] - f64::from(u8::from(k == y))) * scale;
                if g == 0.0 {
                    continue;
                }
                gb[k] += g;
                for (gv, xv) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                    *gv += g * xv;
                }
            }
        }
        Some(h) => {
            let w2 = &params[h * d + h..h * d + h + c * h];
            let (gw1, rest) = grad.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(c * h);
            ws.dhidden.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..c {
                let g = (ws.logits[k] - f64::from(u8::from(k == y))) * scale;
                gb2[k] += g;
                let row = &w2[k * h..(k + 1) * h];
                for j in 0..h {
                    gw2[k * h + j] += g * ws.hidden[j];
                    ws.dhidden[j] += g * row[j];
                }
            }
            for j in 0..h {
                // ReLU subgradient at 0 is taken as 0.
                if ws.hidden_pre[j] <= 0.0 {
                    continue;
                }
                let g = ws.dhidden[j];
                gb1[j] += g;
                for (gv, xv) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *gv += g * xv;
                }
            }
        }
    }
}

/// Mean cross-entropy over the batch.
pub fn forward_loss(p: &ModelParams, batch: &Batch<'_>) -> Result<f64> {
    loss_flat(&p.shape, &p.flat, batch)
}

/// Mean cross-entropy and its analytic gradient.
pub fn loss_grad(p: &ModelParams, batch: &Batch<'_>) -> Result<LossGrad> {
    loss_grad_flat(&p.shape, &p.flat, batch)
}

pub(crate) fn loss_grad_flat(shape: &ModelShape, params: &[f64], batch: &Batch<'_>) -> Result<LossGrad> {
    check_len(shape.param_count(), params.len())?;
    shape.check_batch(batch)?;
    if batch.is_empty() {
        return Err(Error::state("cannot evaluate the gradient on an empty batch"));
    }
    let mut ws = Workspace::new(shape);
    let mut grad = DenseVector::zeros(params.len());
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for (x, y) in batch.iter() {
        forward(shape, params, x, &mut ws);
        total += log_sum_exp(&ws.logits) - ws.logits[y];
        softmax_in_place(&mut ws.logits);
        backward(shape, params, x, y, scale, &mut ws, &mut grad);
    }
    Ok(LossGrad {
        loss: total * scale,
        grad,
    })
}

pub(crate) fn loss_flat(shape: &ModelShape, params: &[f64], batch: &Batch<'_>) -> Result<f64> {
    check_len(shape.param_count(), params.len())?;
    shape.check_batch(batch)?;
    if batch.is_empty() {
        return Err(Error::state("cannot evaluate the loss on an empty batch"));
    }
    let mut ws = Workspace::new(shape);
    let mut total = 0.0;
    for (x, y) in batch.iter() {
        forward(shape, params, x, &mut ws);
        total += log_sum_exp(&ws.logits) - ws.logits[y];
    }
    Ok(total / batch.len() as f64)
}

/// Exact mean gradient over an entire shard.
pub fn full_gradient(p: &ModelParams, shard: &Batch<'_>) -> Result<DenseVector> {
    if shard.is_empty() {
        return Err(Error::state("full gradient of an empty shard"));
    }
    Ok(loss_grad(p, shard)?.grad)
}

/// Fraction of samples whose arg-max logit (lowest class on ties) equals the label.
pub fn accuracy(p: &ModelParams, set: &Batch<'_>) -> Result<f64> {
    accuracy_flat(&p.shape, &p.flat, set)
}

pub(crate) fn accuracy_flat(shape: &ModelShape, params: &[f64], set: &Batch<'_>) -> Result<f64> {
    check_len(shape.param_count(), params.len())?;
    shape.check_batch(set)?;
    if set.is_empty() {
        return Err(Error::state("accuracy of an empty set"));
    }
    let mut ws = Workspace::new(shape);
    let mut correct = 0usize;
    for (x, y) in set.iter() {
        forward(shape, params, x, &mut ws);
        let mut best = 0;
        for k in 1..shape.classes {
            if ws.logits[k] > ws.logits[best] {
                best = k;
            }
        }
        correct += usize::from(best == y);
    }
    Ok(correct as f64 / set.len() as f64)
}

const CHECKPOINT_TAG: &str = "fedrobust-model";

/// Writes a one-line shape header followed by a little-endian `u64` length
/// and that many little-endian `f64` values.
pub fn save_checkpoint(p: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = format!(
        "{CHECKPOINT_TAG} input={} hidden={} classes={}\n",
        p.shape.input,
        p.shape.hidden.unwrap_or(0),
        p.shape.classes
    )
    .into_bytes();
    bytes.extend_from_slice(&(p.flat.len() as u64).to_le_bytes());
    for v in p.flat.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let fail = |offset: usize, reason: &str| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.to_string(),
    };
    let newline = bytes.iter().position(|b| *b == b'\n').ok_or_else(|| fail(0, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| fail(0, "header is not UTF-8"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(CHECKPOINT_TAG) {
        return Err(fail(0, "not a model checkpoint"));
    }
    let mut get = |name: &str| -> Result<usize> {
        fields
            .next()
            .and_then(|f| f.strip_prefix(name)?.strip_prefix('='))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| fail(0, "malformed shape header"))
    };
    let input = get("input")?;
    let hidden = get("hidden")?;
    let classes = get("classes")?;
    let shape = ModelShape {
        input,
        hidden: (hidden > 0).then_some(hidden),
        classes,
    };
    let body = &bytes[newline + 1..];
    let len_bytes = body.get(..8).ok_or_else(|| fail(newline + 1, "truncated length"))?;
    let len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
    let data = &body[8..];
    if data.len() != len * 8 {
        return Err(fail(newline + 9, "payload length does not match the declared count"));
    }
    let flat: DenseVector = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ModelParams::new(shape, flat)
}
