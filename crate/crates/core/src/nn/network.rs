use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::ConvBlock;
use super::lstm::{LstmBlock, LstmCell, LstmTrace};
use super::spec::{Activation, Architecture, ModelSpec};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Fixed per-dimension affine normalization, fitted once on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norm {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Norm {
    pub fn identity(dims: usize) -> Self {
        Norm { mean: vec![0.0; dims], scale: vec![1.0; dims] }
    }

    /// Mean and standard deviation over all rows; near-constant dimensions keep scale 1.
    pub fn fit<'a>(blocks: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Result<Self> {
        let mut sum: Option<Array1<f64>> = None;
        let mut sq: Option<Array1<f64>> = None;
        let mut n = 0usize;
        for b in blocks {
            let s1 = b.sum_axis(Axis(0));
            let s2 = b.mapv(|v| v * v).sum_axis(Axis(0));
            match (&mut sum, &mut sq) {
                (Some(a), Some(q)) => {
                    if a.len() != s1.len() {
                        return Err(Error::shape("inconsistent feature dims while fitting normalization"));
                    }
                    *a += &s1;
                    *q += &s2;
                }
                _ => {
                    sum = Some(s1);
                    sq = Some(s2);
                }
            }
            n += b.nrows();
        }
        let (Some(sum), Some(sq)) = (sum, sq) else {
            return Err(Error::invalid("cannot fit normalization on no data"));
        };
        if n == 0 {
            return Err(Error::invalid("cannot fit normalization on no frames"));
        }
        let mean = &sum / n as f64;
        let scale = (&sq / n as f64 - &mean * &mean).mapv(|v| {
            let sd = v.max(0.0).sqrt();
            if sd > 1e-3 {
                sd
            } else {
                1.0
            }
        });
        Ok(Norm { mean: mean.to_vec(), scale: scale.to_vec() })
    }

    fn normalize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    fn denormalize(&self, mut y: Array2<f64>) -> Array2<f64> {
        for mut row in y.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = *v * s + m;
            }
        }
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Layer {
    Dense { d_in: usize, d_out: usize, act: Activation, w: usize, b: usize },
    Conv { block: ConvBlock, act: Activation },
    Blstm { fwd: LstmBlock, bwd: LstmBlock },
}

/// Highway link: activation of layer `from` projected by `w` (to_dim × from_dim)
/// into the pre-activation of dense layer `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Skip {
    from: usize,
    to: usize,
    from_dim: usize,
    to_dim: usize,
    w: usize,
}

enum Cache {
    Dense { input: Array2<f64>, out: Array2<f64> },
    Conv { cols: Array2<f64>, out: Array2<f64> },
    Blstm { input: Array2<f64>, fwd: LstmTrace, bwd: LstmTrace },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    seed: u64,
    layers: Vec<Layer>,
    skip: Option<Skip>,
    params: Vec<f64>,
    input_norm: Option<Norm>,
    output_norm: Option<Norm>,
}

fn view<'a>(p: &'a [f64], rows: usize, cols: usize, at: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &p[at..at + rows * cols]).expect("weight view")
}

fn view_mut<'a>(p: &'a mut [f64], rows: usize, cols: usize, at: usize) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut p[at..at + rows * cols]).expect("weight view")
}

fn add_bias(z: &mut Array2<f64>, p: &[f64], at: usize) {
    let d = z.ncols();
    *z += &view(p, 1, d, at);
}

fn add_col_sums(grads: &mut [f64], at: usize, dz: &Array2<f64>) {
    for (g, v) in grads[at..at + dz.ncols()].iter_mut().zip(dz.sum_axis(Axis(0))) {
        *g += v;
    }
}

fn apply_act(z: &mut Array2<f64>, act: Activation) {
    if act != Activation::Identity {
        z.mapv_inplace(|v| act.apply(v));
    }
}

fn act_backward(mut da: Array2<f64>, out: &Array2<f64>, act: Activation) -> Array2<f64> {
    if act != Activation::Identity {
        da.zip_mut_with(out, |d, &a| *d *= act.deriv_from_output(a));
    }
    da
}

impl Network {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut skip = None;
        let mut at = 0usize;
        let dense = |layers: &mut Vec<Layer>, at: &mut usize, d_in: usize, d_out: usize, act: Activation| {
            layers.push(Layer::Dense { d_in, d_out, act, w: *at, b: *at + d_in * d_out });
            *at += d_in * d_out + d_out;
        };
        let (i, o) = (spec.input_dim, spec.output_dim);
        match spec.arch {
            Architecture::Linear => dense(&mut layers, &mut at, i, o, Activation::Identity),
            Architecture::Ddae { layers: n, width, activation } | Architecture::Hddae { layers: n, width, activation } => {
                let mut d = i;
                for _ in 0..n {
                    dense(&mut layers, &mut at, d, width, activation);
                    d = width;
                }
                dense(&mut layers, &mut at, d, o, Activation::Identity);
                if matches!(spec.arch, Architecture::Hddae { .. }) {
                    skip = Some(Skip { from: 0, to: n - 1, from_dim: width, to_dim: width, w: at });
                    at += width * width;
                }
            }
            Architecture::Blstm { layers: n, cells } => {
                let mut d = i;
                for _ in 0..n {
                    let fwd = LstmBlock::new(d, cells, at);
                    let bwd = LstmBlock::new(d, cells, fwd.end());
                    at = bwd.end();
                    layers.push(Layer::Blstm { fwd, bwd });
                    d = 2 * cells;
                }
                dense(&mut layers, &mut at, d, o, Activation::Identity);
            }
            Architecture::FcDecoder { width } => {
                dense(&mut layers, &mut at, i, width, Activation::Relu);
                dense(&mut layers, &mut at, width, width, Activation::Relu);
                dense(&mut layers, &mut at, width, o, Activation::Identity);
            }
            Architecture::CnDecoder { channels, kernel, width } => {
                let mut c = i;
                for _ in 0..3 {
                    let block = ConvBlock::new(c, channels, kernel, at);
                    at = block.end();
                    layers.push(Layer::Conv { block, act: Activation::Relu });
                    c = channels;
                }
                dense(&mut layers, &mut at, c, width, Activation::Relu);
                dense(&mut layers, &mut at, width, width, Activation::Relu);
                dense(&mut layers, &mut at, width, o, Activation::Identity);
            }
        }
        let mut net = Network { spec, seed, layers, skip, params: vec![0.0; at], input_norm: None, output_norm: None };
        net.init(seed);
        Ok(net)
    }

    fn init(&mut self, seed: u64) {
        let mut rng = rng_from_seed(seed);
        let mut fill = |p: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in p {
                *v = rng.random_range(-limit..=limit);
            }
        };
        let params = &mut self.params;
        for layer in &self.layers {
            match layer {
                Layer::Dense { d_in, d_out, w, .. } => fill(&mut params[*w..*w + d_in * d_out], *d_in, *d_out),
                Layer::Conv { block, .. } => {
                    fill(&mut params[block.w..block.b], block.kernel * block.c_in, block.c_out)
                }
                Layer::Blstm { fwd, bwd } => {
                    for b in [fwd, bwd] {
                        let h = b.hidden;
                        fill(&mut params[b.w..b.u], b.d_in + h, h);
                        fill(&mut params[b.u..b.b], h, h);
                    }
                }
            }
        }
        if let Some(s) = self.skip {
            fill(&mut params[s.w..s.w + s.from_dim * s.to_dim], s.from_dim, s.to_dim);
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn norms(&self) -> (Option<&Norm>, Option<&Norm>) {
        (self.input_norm.as_ref(), self.output_norm.as_ref())
    }

    pub fn set_norms(&mut self, input: Norm, output: Norm) -> Result<()> {
        if input.mean.len() != self.spec.input_dim || output.mean.len() != self.spec.output_dim {
            return Err(Error::shape("normalization dims do not match the model"));
        }
        self.input_norm = Some(input);
        self.output_norm = Some(output);
        Ok(())
    }

    pub(crate) fn clear_norms(&mut self) {
        self.input_norm = None;
        self.output_norm = None;
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::shape(format!("model expects {} input dims, got {}", self.spec.input_dim, x.ncols())));
        }
        if x.nrows() == 0 {
            return Err(Error::shape("empty input sequence"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model input".into()));
        }
        Ok(())
    }

    /// Maps a `T × input_dim` block to `T × output_dim`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let xn = match &self.input_norm {
            Some(n) => n.normalize(x),
            None => x.to_owned(),
        };
        let (y, _) = self.run(xn);
        let y = match &self.output_norm {
            Some(n) => n.denormalize(y),
            None => y,
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} forward pass", self.spec.arch.name())));
        }
        Ok(y)
    }

    fn run(&self, x: Array2<f64>) -> (Array2<f64>, Vec<Cache>) {
        let p = &self.params;
        let mut caches: Vec<Cache> = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for (li, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::Dense { d_in, d_out, act, w, b } => {
                    let mut z = cur.dot(&view(p, d_out, d_in, w).t());
                    add_bias(&mut z, p, b);
                    if let Some(s) = self.skip.filter(|s| s.to == li) {
                        let Cache::Dense { out: src, .. } = &caches[s.from] else { unreachable!("skip source is dense") };
                        general_mat_mul(1.0, src, &view(p, s.to_dim, s.from_dim, s.w).t(), 1.0, &mut z);
                    }
                    apply_act(&mut z, act);
                    caches.push(Cache::Dense { input: cur, out: z.clone() });
                    cur = z;
                }
                Layer::Conv { block, act } => {
                    let (mut z, cols) = block.forward(p, cur.view());
                    apply_act(&mut z, act);
                    caches.push(Cache::Conv { cols, out: z.clone() });
                    cur = z;
                }
                Layer::Blstm { fwd, bwd } => {
                    let (hf, tf) = fwd.forward(p, cur.view(), false);
                    let (hb, tb) = bwd.forward(p, cur.view(), true);
                    let out = concatenate![Axis(1), hf, hb];
                    caches.push(Cache::Blstm { input: cur, fwd: tf, bwd: tb });
                    cur = out;
                }
            }
        }
        (cur, caches)
    }

    fn backprop(&self, caches: Vec<Cache>, dout: Array2<f64>, grads: &mut [f64]) {
        let p = &self.params;
        let mut d = dout;
        let mut skip_grad: Option<Array2<f64>> = None;
        for (li, (layer, cache)) in self.layers.iter().zip(caches.iter()).enumerate().rev() {
            if self.skip.is_some_and(|s| s.from == li) {
                if let Some(extra) = skip_grad.take() {
                    d += &extra;
                }
            }
            d = match (*layer, cache) {
                (Layer::Dense { d_in, d_out, act, w, b }, Cache::Dense { input, out }) => {
                    let dz = act_backward(d, out, act);
                    general_mat_mul(1.0, &dz.t(), input, 1.0, &mut view_mut(grads, d_out, d_in, w));
                    add_col_sums(grads, b, &dz);
                    if let Some(s) = self.skip.filter(|s| s.to == li) {
                        let Cache::Dense { out: src, .. } = &caches[s.from] else { unreachable!("skip source is dense") };
                        general_mat_mul(1.0, &dz.t(), src, 1.0, &mut view_mut(grads, s.to_dim, s.from_dim, s.w));
                        skip_grad = Some(dz.dot(&view(p, s.to_dim, s.from_dim, s.w)));
                    }
                    if li == 0 {
                        break;
                    }
                    dz.dot(&view(p, d_out, d_in, w))
                }
                (Layer::Conv { block, act }, Cache::Conv { cols, out }) => {
                    let dz = act_backward(d, out, act);
                    block.backward(p, cols, dz.view(), grads)
                }
                (Layer::Blstm { fwd, bwd }, Cache::Blstm { input, fwd: tf, bwd: tb }) => {
                    let h = fwd.hidden;
                    let dxf = fwd.backward(p, input.view(), tf, d.slice(s![.., ..h]), false, grads);
                    let dxb = bwd.backward(p, input.view(), tb, d.slice(s![.., h..]), true, grads);
                    dxf + dxb
                }
                _ => unreachable!("cache matches layer"),
            };
        }
    }

    /// Adds the gradient of `Σ (y − target)² / denom` to `grads` and returns
    /// the unscaled sum of squared errors. Errors are measured after output
    /// denormalization.
    pub(crate) fn accumulate_grad(&self, x: ArrayView2<f64>, target: ArrayView2<f64>, denom: f64, grads: &mut [f64]) -> Result<f64> {
        self.check_input(x)?;
        if target.dim() != (x.nrows(), self.spec.output_dim) {
            return Err(Error::shape(format!(
                "target is {:?}, expected ({}, {})",
                target.dim(),
                x.nrows(),
                self.spec.output_dim
            )));
        }
        let xn = match &self.input_norm {
            Some(n) => n.normalize(x),
            None => x.to_owned(),
        };
        let (yn, caches) = self.run(xn);
        let mut err = match &self.output_norm {
            Some(n) => n.denormalize(yn),
            None => yn,
        };
        err -= &target;
        let sse: f64 = err.iter().map(|e| e * e).sum();
        if !sse.is_finite() {
            return Err(Error::NonFinite(format!("{} training loss", self.spec.arch.name())));
        }
        let mut dy = err * (2.0 / denom);
        if let Some(n) = &self.output_norm {
            for mut row in dy.rows_mut() {
                for (v, s) in row.iter_mut().zip(&n.scale) {
                    *v *= s;
                }
            }
        }
        self.backprop(caches, dy, grads);
        Ok(sse)
    }

    /// LSTM cells of BLSTM layer `layer` as (forward, backward).
    pub fn lstm_cells(&self, layer: usize) -> Option<(LstmCell, LstmCell)> {
        match self.layers.iter().filter(|l| matches!(l, Layer::Blstm { .. })).nth(layer)? {
            Layer::Blstm { fwd, bwd } => Some((fwd.to_cell(&self.params), bwd.to_cell(&self.params))),
            _ => None,
        }
    }

    /// Swaps the forward and backward direction of every BLSTM layer, and
    /// the matching input halves of whatever consumes its output.
    pub fn mirrored(&self) -> Network {
        let mut out = self.clone();
        let p = &mut out.params;
        for (li, layer) in self.layers.iter().enumerate() {
            let Layer::Blstm { fwd, bwd } = *layer else { continue };
            let n = fwd.end() - fwd.w;
            let (a, b) = p[fwd.w..bwd.end()].split_at_mut(n);
            a.swap_with_slice(b);
            let h = fwd.hidden;
            match self.layers[li + 1] {
                Layer::Dense { d_in, d_out, w, .. } => {
                    for r in 0..d_out {
                        let row = &mut p[w + r * d_in..w + (r + 1) * d_in];
                        let (l, rgt) = row.split_at_mut(h);
                        l.swap_with_slice(rgt);
                    }
                }
                Layer::Blstm { fwd: nf, bwd: nb } => {
                    for blk in [nf, nb] {
                        let cols = blk.d_in + blk.hidden;
                        for r in 0..4 * blk.hidden {
                            let row = &mut p[blk.w + r * cols..blk.w + r * cols + blk.d_in];
                            let (l, rgt) = row.split_at_mut(h);
                            l.swap_with_slice(rgt);
                        }
                    }
                }
                Layer::Conv { .. } => unreachable!("BLSTM is never followed by a convolution"),
            }
        }
        out
    }
}
