use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};

use super::network::Network;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: usize,
    pub checked: usize,
}

/// Compares analytic gradients of the MSE against a random target with
/// central differences on `coords` random parameters (all of them if fewer).
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(net: &Network, input: ArrayView2<f64>, eps: f64, coords: usize, seed: u64) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let target = Array2::from_shape_fn((input.nrows(), net.spec().output_dim), |_| normal.sample(&mut rng));
    let denom = target.len() as f64;
    let mut analytic = vec![0.0; net.param_count()];
    net.accumulate_grad(input, target.view(), denom, &mut analytic)?;

    let loss = |n: &Network| -> Result<f64> {
        let y = n.forward(input)?;
        Ok((&y - &target).iter().map(|e| e * e).sum::<f64>() / denom)
    };
    let total = net.param_count();
    let picks = if coords >= total { (0..total).collect() } else { sample(&mut rng, total, coords).into_vec() };
    let mut probe = net.clone();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst_param: 0, checked: picks.len() };
    for &k in &picks {
        let original = probe.params()[k];
        probe.params_mut()[k] = original + eps;
        let up = loss(&probe)?;
        probe.params_mut()[k] = original - eps;
        let down = loss(&probe)?;
        probe.params_mut()[k] = original;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_param = k;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Architecture, ModelSpec, Norm};

    fn probe(t: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((t, d), |(a, b)| ((a * 31 + b * 7) as f64 * 0.173).sin())
    }

    fn check(arch: Architecture, i: usize, o: usize, t: usize, tol: f64) {
        let net = Network::new(ModelSpec::new(arch.clone(), i, o).unwrap(), 17).unwrap();
        let r = grad_check(&net, probe(t, i).view(), 1e-5, 200, 23).unwrap();
        assert!(r.checked >= 200.min(net.param_count()));
        assert!(r.max_rel_err <= tol, "{arch:?}: {r:?}");
    }

    #[test]
    fn ddae_gradients() {
        check(Architecture::Ddae { layers: 3, width: 16, activation: Activation::Tanh }, 10, 6, 4, 1e-5);
        check(Architecture::Ddae { layers: 3, width: 16, activation: Activation::Logistic }, 10, 6, 4, 1e-5);
    }

    #[test]
    fn hddae_gradients() {
        check(Architecture::Hddae { layers: 4, width: 12, activation: Activation::Tanh }, 8, 5, 3, 1e-5);
    }

    #[test]
    fn blstm_gradients() {
        check(Architecture::Blstm { layers: 1, cells: 8 }, 6, 4, 5, 1e-4);
        check(Architecture::Blstm { layers: 2, cells: 5 }, 4, 3, 5, 1e-4);
    }

    #[test]
    fn conv_gradients() {
        check(Architecture::CnDecoder { channels: 4, kernel: 11, width: 6 }, 5, 3, 14, 1e-5);
    }

    #[test]
    fn gradients_hold_with_normalization() {
        let spec = ModelSpec::new(Architecture::Ddae { layers: 2, width: 8, activation: Activation::Tanh }, 4, 3).unwrap();
        let mut net = Network::new(spec, 2).unwrap();
        net.set_norms(
            Norm { mean: vec![0.1, -0.2, 0.3, 0.0], scale: vec![2.0, 0.5, 1.0, 3.0] },
            Norm { mean: vec![1.0, 2.0, 3.0], scale: vec![0.7, 1.3, 2.0] },
        )
        .unwrap();
        let r = grad_check(&net, probe(5, 4).view(), 1e-5, 500, 1).unwrap();
        assert!(r.max_rel_err <= 1e-5, "{r:?}");
    }
}
