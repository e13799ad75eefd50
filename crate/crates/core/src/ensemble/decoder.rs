use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::AttributeTag;
use crate::dsdt::{Dsdt, PartitionPlan};
use crate::error::{Error, Result};
use crate::nn::{train, Architecture, ModelSpec, Network, SeqPair, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Bf,
    Lr,
    Fc,
    Cn,
}

impl DecoderKind {
    pub fn label(self) -> &'static str {
        match self {
            DecoderKind::Bf => "BF",
            DecoderKind::Lr => "LR",
            DecoderKind::Fc => "FC",
            DecoderKind::Cn => "CN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub kind: DecoderKind,
    /// Ridge term of the linear decoder.
    pub lambda: f64,
    pub fc_width: usize,
    pub cn_channels: usize,
    pub cn_kernel: usize,
    pub cn_width: usize,
    pub train: TrainConfig,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            kind: DecoderKind::Lr,
            lambda: 1e-3,
            fc_width: 128,
            cn_channels: 16,
            cn_kernel: 11,
            cn_width: 128,
            train: TrainConfig::default(),
        }
    }
}

/// Affine map from concatenated branch features; the last weight row is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecoder {
    pub weights: Array2<f64>,
    pub lambda: f64,
}

impl LinearDecoder {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows() - 1
    }

    pub fn apply(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        let d = self.input_dim();
        if z.ncols() != d {
            return Err(Error::shape(format!("linear decoder expects {d} inputs, got {}", z.ncols())));
        }
        let mut y = z.dot(&self.weights.slice(s![..d, ..]));
        y += &self.weights.slice(s![d.., ..]);
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decoder {
    /// Picks the branch matching the oracle tag; has no parameters.
    BestFirst,
    Linear(LinearDecoder),
    Neural(Network),
}

impl Decoder {
    pub fn kind(&self) -> DecoderKind {
        match self {
            Decoder::BestFirst => DecoderKind::Bf,
            Decoder::Linear(_) => DecoderKind::Lr,
            Decoder::Neural(n) => match n.spec().arch {
                Architecture::CnDecoder { .. } => DecoderKind::Cn,
                _ => DecoderKind::Fc,
            },
        }
    }

    /// Applies a trained decoder to the `T × Σdims` concatenation.
    pub fn apply(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Decoder::BestFirst => Err(Error::invalid("the BF decoder selects a branch; use decode_bf")),
            Decoder::Linear(l) => l.apply(z),
            Decoder::Neural(n) => n.forward(z),
        }
    }
}

/// Cholesky factor of a symmetric positive definite matrix. A pivot at or
/// below `n·ε·max diag` counts as singular.
fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let max_diag = a.diag().iter().cloned().fold(0.0, f64::max);
    let tol = 10.0 * n as f64 * f64::EPSILON * max_diag;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let row_j = l.row(j).to_owned();
        let d = a[[j, j]] - row_j.slice(s![..j]).dot(&row_j.slice(s![..j]));
        if !(d > tol) {
            return Err(Error::RankDeficient);
        }
        let pivot = d.sqrt();
        l[[j, j]] = pivot;
        for i in j + 1..n {
            let v = (a[[i, j]] - l.row(i).slice(s![..j]).dot(&row_j.slice(s![..j]))) / pivot;
            l[[i, j]] = v;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = B` by forward and back substitution.
fn cholesky_solve(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            let f = l[[i, k]];
            if f != 0.0 {
                let (done, mut rest) = y.view_mut().split_at(Axis(0), i);
                let mut yi = rest.row_mut(0);
                yi.scaled_add(-f, &done.row(k));
            }
        }
        let d = l[[i, i]];
        y.row_mut(i).mapv_inplace(|v| v / d);
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let f = l[[k, i]];
            if f != 0.0 {
                let (mut head, tail) = y.view_mut().split_at(Axis(0), i + 1);
                head.row_mut(i).scaled_add(-f, &tail.row(k - i - 1));
            }
        }
        let d = l[[i, i]];
        y.row_mut(i).mapv_inplace(|v| v / d);
    }
    y
}

/// Ridge least squares `W = (λI + YᵀY)⁻¹ YᵀX` with `Y = [Z, 1]`, solved by a
/// Cholesky factorization of the normal equations plus one step of
/// iterative refinement.
pub fn fit_lr_decoder(z: ArrayView2<f64>, x: ArrayView2<f64>, lambda: f64) -> Result<LinearDecoder> {
    let (n, d) = z.dim();
    if x.nrows() != n || n == 0 {
        return Err(Error::shape(format!("{} feature frames vs {} target frames", n, x.nrows())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("ridge λ must be a non-negative number"));
    }
    if z.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("decoder training features".into()));
    }
    let p = d + 1;
    let mut a = Array2::<f64>::zeros((p, p));
    general_mat_mul(1.0, &z.t(), &z, 0.0, &mut a.slice_mut(s![..d, ..d]));
    let col_sums: Array1<f64> = z.sum_axis(Axis(0));
    a.slice_mut(s![..d, d]).assign(&col_sums);
    a.slice_mut(s![d, ..d]).assign(&col_sums);
    a[[d, d]] = n as f64;
    for i in 0..p {
        a[[i, i]] += lambda;
    }
    let mut b = Array2::<f64>::zeros((p, x.ncols()));
    general_mat_mul(1.0, &z.t(), &x, 0.0, &mut b.slice_mut(s![..d, ..]));
    b.row_mut(d).assign(&x.sum_axis(Axis(0)));

    let l = cholesky(&a)?;
    let mut w = cholesky_solve(&l, &b);
    let residual = &b - &a.dot(&w);
    w += &cholesky_solve(&l, &residual);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient);
    }
    Ok(LinearDecoder { weights: w, lambda })
}

pub fn decoder_spec(kind: DecoderKind, input_dim: usize, output_dim: usize, cfg: &DecoderConfig) -> Result<ModelSpec> {
    let arch = match kind {
        DecoderKind::Fc => Architecture::FcDecoder { width: cfg.fc_width },
        DecoderKind::Cn => Architecture::CnDecoder { channels: cfg.cn_channels, kernel: cfg.cn_kernel, width: cfg.cn_width },
        other => return Err(Error::invalid(format!("{} is not a trainable network decoder", other.label()))),
    };
    ModelSpec::new(arch, input_dim, output_dim)
}

/// FC maps frames independently; CN convolves over each utterance's frames.
pub fn train_nn_decoder(set: &[SeqPair], kind: DecoderKind, cfg: &DecoderConfig, seed: u64) -> Result<Network> {
    let (input_dim, output_dim) = match set.first() {
        Some((z, x)) => (z.ncols(), x.ncols()),
        None => return Err(Error::invalid("empty decoder training set")),
    };
    let mut net = Network::new(decoder_spec(kind, input_dim, output_dim, cfg)?, seed)?;
    train(&mut net, set, &cfg.train)?;
    Ok(net)
}

/// Fits the decoder named by `cfg.kind` on per-utterance (Z, X) pairs.
pub fn fit_decoder(set: &[SeqPair], cfg: &DecoderConfig, seed: u64) -> Result<Decoder> {
    match cfg.kind {
        DecoderKind::Bf => Ok(Decoder::BestFirst),
        DecoderKind::Lr => {
            if set.is_empty() {
                return Err(Error::invalid("empty decoder training set"));
            }
            let z = concatenate(Axis(0), &set.iter().map(|(z, _)| z.view()).collect::<Vec<_>>()).map_err(|e| Error::shape(e.to_string()))?;
            let x = concatenate(Axis(0), &set.iter().map(|(_, x)| x.view()).collect::<Vec<_>>()).map_err(|e| Error::shape(e.to_string()))?;
            Ok(Decoder::Linear(fit_lr_decoder(z.view(), x.view(), cfg.lambda)?))
        }
        kind => Ok(Decoder::Neural(train_nn_decoder(set, kind, cfg, seed)?)),
    }
}

/// Output of the deepest plan node whose predicate chain matches `tag`,
/// returned unmodified. `node_outputs` is in plan node order.
pub fn decode_bf(tree: &Dsdt, plan: &PartitionPlan, node_outputs: &[Array2<f64>], tag: &AttributeTag) -> Result<Array2<f64>> {
    if node_outputs.len() != plan.nodes.len() {
        return Err(Error::shape(format!("{} node outputs for a {}-node plan", node_outputs.len(), plan.nodes.len())));
    }
    let mut best: Option<(usize, usize)> = None;
    for (slot, &id) in plan.nodes.iter().enumerate() {
        if tree.tag_matches(id, tag) {
            let depth = tree.node(id)?.depth;
            if best.is_none_or(|(_, d)| depth > d) {
                best = Some((slot, depth));
            }
        }
    }
    match best {
        Some((slot, _)) => Ok(node_outputs[slot].clone()),
        None => Err(Error::NoMatchingBranch(tag.describe())),
    }
}
