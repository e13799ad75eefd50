use crate::error::{Error, Result};

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rational resampling by `up / down` with a Kaiser-windowed sinc
/// anti-aliasing filter (β = 5, 10 zero crossings per side), applied in
/// polyphase form. Output length is `ceil(len · up / down)`.
pub fn resample_poly(x: &[f64], up: usize, down: usize) -> Result<Vec<f64>> {
    if up == 0 || down == 0 {
        return Err(Error::invalid("resampling factors must be positive"));
    }
    let g = gcd(up, down);
    let (up, down) = (up / g, down / g);
    if up == 1 && down == 1 {
        return Ok(x.to_vec());
    }
    let max_rate = up.max(down);
    let half = 10 * max_rate;
    let taps = 2 * half + 1;
    let cutoff = 1.0 / max_rate as f64;
    let beta = 5.0;
    let norm = bessel_i0(beta);
    let h: Vec<f64> = (0..taps)
        .map(|i| {
            let n = i as f64 - half as f64;
            let arg = std::f64::consts::PI * cutoff * n;
            let sinc = if n == 0.0 { 1.0 } else { arg.sin() / arg };
            let r = n / half as f64;
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
            up as f64 * cutoff * sinc * w
        })
        .collect();
    let out_len = (x.len() * up).div_ceil(down);
    let mut y = vec![0.0; out_len];
    for (m, out) in y.iter_mut().enumerate() {
        // Position on the upsampled grid, centred on the filter.
        let centre = (m * down) as isize;
        let mut acc = 0.0;
        // Only taps landing on multiples of `up` see a nonzero input.
        let first = centre - half as isize;
        let start = first.rem_euclid(up as isize);
        let start = if start == 0 { 0 } else { up as isize - start };
        let mut j = start;
        while j < taps as isize {
            let pos = first + j;
            let idx = pos / up as isize;
            if pos >= 0 && (idx as usize) < x.len() {
                acc += h[taps - 1 - j as usize] * x[idx as usize];
            }
            j += up as isize;
        }
        *out = acc;
    }
    Ok(y)
}
