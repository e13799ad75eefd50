use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{Network, Norm};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// One training example: `T × input_dim` input and `T × output_dim` target.
pub type SeqPair = (Array2<f64>, Array2<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Frames per minibatch for frame-wise models.
    pub batch_size: usize,
    /// Utterances per minibatch for sequence models.
    pub sequence_batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Learning rate multiplier applied once per epoch.
    pub lr_decay: f64,
    /// Global gradient-norm clip, applied to recurrent models only.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 128,
            sequence_batch: 4,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_decay: 1.0,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 || self.sequence_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("Adam betas must lie in [0, 1) and eps be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if self.clip_norm.is_some_and(|c| c <= 0.0) {
            return bad("clip norm must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean squared error per element over each epoch's minibatches.
    pub loss_curve: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        }
    }
}

fn check_data(net: &Network, data: &[SeqPair]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let spec = net.spec();
    for (i, (x, y)) in data.iter().enumerate() {
        if x.ncols() != spec.input_dim || y.ncols() != spec.output_dim || x.nrows() != y.nrows() || x.nrows() == 0 {
            return Err(Error::shape(format!(
                "example {i}: input {:?} / target {:?} do not fit a {}→{} model",
                x.dim(),
                y.dim(),
                spec.input_dim,
                spec.output_dim
            )));
        }
    }
    Ok(())
}

/// Adam on mean squared error. Normalization statistics are fitted on
/// `data` unless the network already carries them (a warm-started copy).
pub fn train(net: &mut Network, data: &[SeqPair], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_data(net, data)?;
    if net.norms().0.is_none() {
        let input = Norm::fit(data.iter().map(|(x, _)| x.view()))?;
        let output = Norm::fit(data.iter().map(|(_, y)| y.view()))?;
        net.set_norms(input, output)?;
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut adam = Adam::new(net.param_count());
    let mut grads = vec![0.0; net.param_count()];
    let clip = if net.spec().arch.is_recurrent() { cfg.clip_norm } else { None };
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut lr = cfg.lr;

    let mut step = |net: &mut Network, grads: &mut [f64], lr: f64| {
        if let Some(c) = clip {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > c {
                grads.iter_mut().for_each(|g| *g *= c / norm);
            }
        }
        adam.update(net.params_mut(), grads, lr, cfg);
    };

    if net.spec().arch.is_sequence() {
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let (mut sse, mut count) = (0.0, 0usize);
            for batch in order.chunks(cfg.sequence_batch) {
                let elems: usize = batch.iter().map(|&i| data[i].1.len()).sum();
                grads.fill(0.0);
                for &i in batch {
                    sse += net
                        .accumulate_grad(data[i].0.view(), data[i].1.view(), elems as f64, &mut grads)
                        .map_err(|e| annotate(e, epoch))?;
                }
                count += elems;
                step(net, &mut grads, lr);
            }
            curve.push(sse / count as f64);
            lr *= cfg.lr_decay;
        }
    } else {
        let xs = concatenate(Axis(0), &data.iter().map(|(x, _)| x.view()).collect::<Vec<_>>()).map_err(|e| Error::shape(e.to_string()))?;
        let ys = concatenate(Axis(0), &data.iter().map(|(_, y)| y.view()).collect::<Vec<_>>()).map_err(|e| Error::shape(e.to_string()))?;
        let mut order: Vec<usize> = (0..xs.nrows()).collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut sse = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let xb = xs.select(Axis(0), batch);
                let yb = ys.select(Axis(0), batch);
                grads.fill(0.0);
                sse += net
                    .accumulate_grad(xb.view(), yb.view(), yb.len() as f64, &mut grads)
                    .map_err(|e| annotate(e, epoch))?;
                step(net, &mut grads, lr);
            }
            curve.push(sse / ys.len() as f64);
            lr *= cfg.lr_decay;
        }
    }
    if net.params().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weights after training".into()));
    }
    Ok(TrainReport { loss_curve: curve })
}

fn annotate(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {}", epoch + 1)),
        other => other,
    }
}

/// Mean squared error per element of `net` over `data`.
pub fn mse(net: &Network, data: &[SeqPair]) -> Result<f64> {
    check_data(net, data)?;
    let (mut sse, mut n) = (0.0, 0usize);
    for (x, y) in data {
        let out = net.forward(x.view())?;
        sse += (&out - y).iter().map(|e| e * e).sum::<f64>();
        n += y.len();
    }
    Ok(sse / n as f64)
}

/// Concatenates each frame with its `radius` neighbours on both sides,
/// repeating the edge frames.
pub fn stack_context(x: ArrayView2<f64>, radius: usize) -> Array2<f64> {
    if radius == 0 {
        return x.to_owned();
    }
    let (t_len, d) = x.dim();
    let width = 2 * radius + 1;
    let mut out = Array2::zeros((t_len, d * width));
    for t in 0..t_len {
        for k in 0..width {
            let src = (t + k).saturating_sub(radius).min(t_len - 1);
            out.row_mut(t).slice_mut(ndarray::s![k * d..(k + 1) * d]).assign(&x.row(src));
        }
    }
    out
}
