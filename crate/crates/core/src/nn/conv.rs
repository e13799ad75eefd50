use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

/// Same-padded, stride-1 convolution over time. Weights are
/// `c_out × (kernel · c_in)` with tap-major columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ConvBlock {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub w: usize,
    pub b: usize,
}

impl ConvBlock {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, offset: usize) -> Self {
        ConvBlock { c_in, c_out, kernel, w: offset, b: offset + c_out * kernel * c_in }
    }

    pub fn end(&self) -> usize {
        self.b + self.c_out
    }

    fn cols(&self) -> usize {
        self.kernel * self.c_in
    }

    pub fn w<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.c_out, self.cols()), &p[self.w..self.b]).expect("conv w")
    }

    pub fn im2col(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let t_len = x.nrows();
        let pad = self.kernel / 2;
        let mut cols = Array2::zeros((t_len, self.cols()));
        for t in 0..t_len {
            for j in 0..self.kernel {
                let src = t + j;
                if src < pad || src - pad >= t_len {
                    continue;
                }
                cols.row_mut(t)
                    .slice_mut(ndarray::s![j * self.c_in..(j + 1) * self.c_in])
                    .assign(&x.row(src - pad));
            }
        }
        cols
    }

    /// Pre-activation output and the im2col matrix kept for the backward pass.
    pub fn forward(&self, p: &[f64], x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let cols = self.im2col(x);
        let mut z = cols.dot(&self.w(p).t());
        z += &ArrayView2::from_shape((1, self.c_out), &p[self.b..self.end()]).expect("conv b");
        (z, cols)
    }

    pub fn backward(&self, p: &[f64], cols: &Array2<f64>, dz: ArrayView2<f64>, grads: &mut [f64]) -> Array2<f64> {
        {
            let mut gw = ArrayViewMut2::from_shape((self.c_out, self.cols()), &mut grads[self.w..self.b]).expect("conv dw");
            general_mat_mul(1.0, &dz.t(), cols, 1.0, &mut gw);
        }
        for (g, v) in grads[self.b..self.end()].iter_mut().zip(dz.sum_axis(Axis(0))) {
            *g += v;
        }
        let dcols = dz.dot(&self.w(p));
        let t_len = dz.nrows();
        let pad = self.kernel / 2;
        let mut dx = Array2::zeros((t_len, self.c_in));
        for t in 0..t_len {
            for j in 0..self.kernel {
                let src = t + j;
                if src < pad || src - pad >= t_len {
                    continue;
                }
                let mut row = dx.row_mut(src - pad);
                row += &dcols.row(t).slice(ndarray::s![j * self.c_in..(j + 1) * self.c_in]);
            }
        }
        dx
    }
}
