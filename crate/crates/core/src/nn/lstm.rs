use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};

use super::spec::logistic;
use crate::error::{Error, Result};

/// One LSTM memory block with peephole matrices on the cell state.
/// Gate weights act on `m_t = [x_t; h_{t-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_f: Array2<f64>,
    pub w_i: Array2<f64>,
    pub w_c: Array2<f64>,
    pub w_o: Array2<f64>,
    pub u_f: Array2<f64>,
    pub u_i: Array2<f64>,
    pub u_o: Array2<f64>,
    pub b_f: Array1<f64>,
    pub b_i: Array1<f64>,
    pub b_c: Array1<f64>,
    pub b_o: Array1<f64>,
}

impl LstmCell {
    /// All-zero cell over `m_dim`-dimensional concatenated inputs.
    pub fn zeros(m_dim: usize, hidden: usize) -> Self {
        let w = || Array2::zeros((hidden, m_dim));
        let u = || Array2::zeros((hidden, hidden));
        let b = || Array1::zeros(hidden);
        LstmCell {
            w_f: w(),
            w_i: w(),
            w_c: w(),
            w_o: w(),
            u_f: u(),
            u_i: u(),
            u_o: u(),
            b_f: b(),
            b_i: b(),
            b_c: b(),
            b_o: b(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_f.len()
    }

    pub fn m_dim(&self) -> usize {
        self.w_f.ncols()
    }
}

/// One time step: returns `(h_t, c_t)`.
pub fn lstm_step(cell: &LstmCell, m_t: ArrayView1<f64>, c_prev: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    if m_t.len() != cell.m_dim() || c_prev.len() != cell.hidden() {
        return Err(Error::shape(format!(
            "lstm_step expects m of {} and c of {}, got {} and {}",
            cell.m_dim(),
            cell.hidden(),
            m_t.len(),
            c_prev.len()
        )));
    }
    let f = (cell.w_f.dot(&m_t) + cell.u_f.dot(&c_prev) + &cell.b_f).mapv(logistic);
    let i = (cell.w_i.dot(&m_t) + cell.u_i.dot(&c_prev) + &cell.b_i).mapv(logistic);
    let c = &f * &c_prev + &i * &(cell.w_c.dot(&m_t) + &cell.b_c).mapv(f64::tanh);
    let o = (cell.w_o.dot(&m_t) + cell.u_o.dot(&c) + &cell.b_o).mapv(logistic);
    let h = &o * &c.mapv(f64::tanh);
    Ok((h, c))
}

/// Parameter offsets of one LSTM direction inside a flat vector.
/// `w` is 4H × (d_in + H) with gate rows ordered f, i, c, o; `u` stacks
/// U_f, U_i, U_o (3H × H); `b` is 4H.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LstmBlock {
    pub d_in: usize,
    pub hidden: usize,
    pub w: usize,
    pub u: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    f: Array2<f64>,
    i: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    c: Array2<f64>,
    c_prev: Array2<f64>,
    h_prev: Array2<f64>,
}

impl LstmBlock {
    pub fn new(d_in: usize, hidden: usize, offset: usize) -> Self {
        let w = offset;
        let u = w + 4 * hidden * (d_in + hidden);
        let b = u + 3 * hidden * hidden;
        LstmBlock { d_in, hidden, w, u, b }
    }

    pub fn end(&self) -> usize {
        self.b + 4 * self.hidden
    }

    pub fn w<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        let n = 4 * self.hidden * (self.d_in + self.hidden);
        ArrayView2::from_shape((4 * self.hidden, self.d_in + self.hidden), &p[self.w..self.w + n]).expect("lstm w")
    }

    pub fn u<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        let n = 3 * self.hidden * self.hidden;
        ArrayView2::from_shape((3 * self.hidden, self.hidden), &p[self.u..self.u + n]).expect("lstm u")
    }

    pub fn bias<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[self.b..self.b + 4 * self.hidden])
    }

    pub fn to_cell(&self, p: &[f64]) -> LstmCell {
        let h = self.hidden;
        let w = self.w(p);
        let u = self.u(p);
        let b = self.bias(p);
        LstmCell {
            w_f: w.slice(s![0..h, ..]).to_owned(),
            w_i: w.slice(s![h..2 * h, ..]).to_owned(),
            w_c: w.slice(s![2 * h..3 * h, ..]).to_owned(),
            w_o: w.slice(s![3 * h..4 * h, ..]).to_owned(),
            u_f: u.slice(s![0..h, ..]).to_owned(),
            u_i: u.slice(s![h..2 * h, ..]).to_owned(),
            u_o: u.slice(s![2 * h..3 * h, ..]).to_owned(),
            b_f: b.slice(s![0..h]).to_owned(),
            b_i: b.slice(s![h..2 * h]).to_owned(),
            b_c: b.slice(s![2 * h..3 * h]).to_owned(),
            b_o: b.slice(s![3 * h..4 * h]).to_owned(),
        }
    }

    /// Runs the sequence in time order (or reversed); outputs are indexed by
    /// original time either way.
    pub fn forward(&self, p: &[f64], x: ArrayView2<f64>, reverse: bool) -> (Array2<f64>, LstmTrace) {
        let (t_len, h) = (x.nrows(), self.hidden);
        let w = self.w(p);
        let wx = w.slice(s![.., ..self.d_in]);
        let wh = w.slice(s![.., self.d_in..]);
        let u = self.u(p);
        let (uf, ui, uo) = (u.slice(s![0..h, ..]), u.slice(s![h..2 * h, ..]), u.slice(s![2 * h.., ..]));
        let b = self.bias(p);
        let xw = x.dot(&wx.t());
        let z = || Array2::zeros((t_len, h));
        let mut tr = LstmTrace { f: z(), i: z(), g: z(), o: z(), c: z(), c_prev: z(), h_prev: z() };
        let mut out = z();
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            let mut pre = &xw.row(t) + &b + &wh.dot(&h_prev);
            let f = (&pre.slice(s![0..h]) + &uf.dot(&c_prev)).mapv(logistic);
            let i = (&pre.slice(s![h..2 * h]) + &ui.dot(&c_prev)).mapv(logistic);
            let g = pre.slice(s![2 * h..3 * h]).mapv(f64::tanh);
            let c = &f * &c_prev + &i * &g;
            let mut zo = pre.slice_mut(s![3 * h..]);
            zo += &uo.dot(&c);
            let o = zo.mapv(logistic);
            let hv = &o * &c.mapv(f64::tanh);
            tr.f.row_mut(t).assign(&f);
            tr.i.row_mut(t).assign(&i);
            tr.g.row_mut(t).assign(&g);
            tr.o.row_mut(t).assign(&o);
            tr.c.row_mut(t).assign(&c);
            tr.c_prev.row_mut(t).assign(&c_prev);
            tr.h_prev.row_mut(t).assign(&h_prev);
            out.row_mut(t).assign(&hv);
            h_prev = hv;
            c_prev = c;
        }
        (out, tr)
    }

    /// Backpropagation through time; accumulates into `grads` and returns
    /// the gradient with respect to `x`.
    pub fn backward(
        &self,
        p: &[f64],
        x: ArrayView2<f64>,
        tr: &LstmTrace,
        dh_out: ArrayView2<f64>,
        reverse: bool,
        grads: &mut [f64],
    ) -> Array2<f64> {
        let (t_len, h) = (x.nrows(), self.hidden);
        let w = self.w(p);
        let wx = w.slice(s![.., ..self.d_in]);
        let wh = w.slice(s![.., self.d_in..]);
        let u = self.u(p);
        let (uf, ui, uo) = (u.slice(s![0..h, ..]), u.slice(s![h..2 * h, ..]), u.slice(s![2 * h.., ..]));
        let mut dz = Array2::<f64>::zeros((t_len, 4 * h));
        let mut dh_rec = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for step in (0..t_len).rev() {
            let t = if reverse { t_len - 1 - step } else { step };
            let (f, i, g, o) = (tr.f.row(t), tr.i.row(t), tr.g.row(t), tr.o.row(t));
            let tc = tr.c.row(t).mapv(f64::tanh);
            let dh = &dh_out.row(t) + &dh_rec;
            let dzo = &dh * &tc * &o.mapv(|v| v * (1.0 - v));
            let dc = &dc_next + &(&dh * &o * &tc.mapv(|v| 1.0 - v * v)) + &uo.t().dot(&dzo);
            let dzf = &dc * &tr.c_prev.row(t) * &f.mapv(|v| v * (1.0 - v));
            let dzi = &dc * &g * &i.mapv(|v| v * (1.0 - v));
            let dzc = &dc * &i * &g.mapv(|v| 1.0 - v * v);
            dc_next = &dc * &f + &uf.t().dot(&dzf) + &ui.t().dot(&dzi);
            let mut row = dz.row_mut(t);
            row.slice_mut(s![0..h]).assign(&dzf);
            row.slice_mut(s![h..2 * h]).assign(&dzi);
            row.slice_mut(s![2 * h..3 * h]).assign(&dzc);
            row.slice_mut(s![3 * h..]).assign(&dzo);
            dh_rec = wh.t().dot(&row);
        }
        {
            let n = 4 * h * (self.d_in + h);
            let mut gw = ArrayViewMut2::from_shape((4 * h, self.d_in + h), &mut grads[self.w..self.w + n]).expect("lstm dw");
            general_mat_mul(1.0, &dz.t(), &x, 1.0, &mut gw.slice_mut(s![.., ..self.d_in]));
            general_mat_mul(1.0, &dz.t(), &tr.h_prev, 1.0, &mut gw.slice_mut(s![.., self.d_in..]));
        }
        {
            let mut gu = ArrayViewMut2::from_shape((3 * h, h), &mut grads[self.u..self.u + 3 * h * h]).expect("lstm du");
            general_mat_mul(1.0, &dz.slice(s![.., 0..h]).t(), &tr.c_prev, 1.0, &mut gu.slice_mut(s![0..h, ..]));
            general_mat_mul(1.0, &dz.slice(s![.., h..2 * h]).t(), &tr.c_prev, 1.0, &mut gu.slice_mut(s![h..2 * h, ..]));
            general_mat_mul(1.0, &dz.slice(s![.., 3 * h..]).t(), &tr.c, 1.0, &mut gu.slice_mut(s![2 * h.., ..]));
        }
        for (gb, v) in grads[self.b..self.b + 4 * h].iter_mut().zip(dz.sum_axis(Axis(0))) {
            *gb += v;
        }
        dz.dot(&wx)
    }
}
