use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::LpsFeatures;
use crate::error::{Error, Result};

/// Overlapping low/high bin ranges (1-based, inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandSplitSpec {
    pub low: (usize, usize),
    pub high: (usize, usize),
    pub bins: usize,
}

impl Default for BandSplitSpec {
    fn default() -> Self {
        Self {
            low: (1, 150),
            high: (108, 257),
            bins: 257,
        }
    }
}

impl BandSplitSpec {
    pub fn low_width(&self) -> usize {
        self.low.1 - self.low.0 + 1
    }

    pub fn high_width(&self) -> usize {
        self.high.1 - self.high.0 + 1
    }

    fn check(&self) -> Result<()> {
        let ok = self.low.0 == 1
            && self.high.1 == self.bins
            && self.high.0 > self.low.0
            && self.high.0 <= self.low.1
            && self.low.1 < self.high.1;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("band spec {self:?} does not cover 1..{} with overlap", self.bins)))
        }
    }

    /// Crossfade weight on the low band for 1-based `bin` inside the overlap.
    pub fn low_weight(&self, bin: usize) -> f64 {
        let (a, b) = (self.high.0, self.low.1);
        if bin <= a {
            1.0
        } else if bin >= b {
            0.0
        } else {
            (b - bin) as f64 / (b - a) as f64
        }
    }
}

/// Slices a T × 257 matrix into the low and high column ranges.
pub fn spectral_split(lps: ArrayView2<f64>, spec: &BandSplitSpec) -> Result<(Array2<f64>, Array2<f64>)> {
    spec.check()?;
    if lps.ncols() != spec.bins {
        return Err(Error::shape(format!("expected {} bins, got {}", spec.bins, lps.ncols())));
    }
    let low = lps.slice(s![.., spec.low.0 - 1..spec.low.1]).to_owned();
    let high = lps.slice(s![.., spec.high.0 - 1..spec.high.1]).to_owned();
    Ok((low, high))
}

/// Reassembles full-width frames, linearly crossfading across the overlap.
pub fn spectral_merge(low: ArrayView2<f64>, high: ArrayView2<f64>, spec: &BandSplitSpec) -> Result<Array2<f64>> {
    spec.check()?;
    if low.ncols() != spec.low_width() || high.ncols() != spec.high_width() || low.nrows() != high.nrows() {
        return Err(Error::shape(format!(
            "low {:?} / high {:?} do not match band spec",
            low.dim(),
            high.dim()
        )));
    }
    let frames = low.nrows();
    let mut out = Array2::zeros((frames, spec.bins));
    for bin in 1..=spec.bins {
        let col = bin - 1;
        let in_low = bin <= spec.low.1;
        let in_high = bin >= spec.high.0;
        for t in 0..frames {
            out[[t, col]] = match (in_low, in_high) {
                (true, false) => low[[t, col]],
                (false, true) => high[[t, bin - spec.high.0]],
                _ => {
                    let l = low[[t, col]];
                    let h = high[[t, bin - spec.high.0]];
                    let w = spec.low_weight(bin);
                    if w == 1.0 {
                        l
                    } else if w == 0.0 {
                        h
                    } else {
                        h + w * (l - h)
                    }
                }
            };
        }
    }
    Ok(out)
}

impl LpsFeatures {
    pub fn with_frames(&self, frames: Array2<f64>) -> LpsFeatures {
        LpsFeatures {
            frames,
            config: self.config,
            num_samples: self.num_samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overlap_bin_appears_in_both_bands() {
        let spec = BandSplitSpec::default();
        let mut x = Array2::zeros((1, 257));
        x[[0, 119]] = 7.0;
        let (low, high) = spectral_split(x.view(), &spec).unwrap();
        assert_eq!(low.dim(), (1, 150));
        assert_eq!(high.dim(), (1, 150));
        assert_eq!(low[[0, 119]], 7.0);
        assert_eq!(high[[0, 12]], 7.0);
    }

    #[test]
    fn edge_bins_belong_to_one_band() {
        let spec = BandSplitSpec::default();
        let mut x = Array2::zeros((1, 257));
        x[[0, 0]] = 1.0;
        x[[0, 256]] = 2.0;
        let (low, high) = spectral_split(x.view(), &spec).unwrap();
        assert_eq!(low.sum(), 1.0);
        assert_eq!(high.sum(), 2.0);
    }

    #[test]
    fn ramp_endpoints() {
        let spec = BandSplitSpec::default();
        assert_eq!(spec.low_weight(108), 1.0);
        assert_eq!(spec.low_weight(150), 0.0);
        assert!((spec.low_weight(129) - 0.5).abs() < 1e-12);
        let low = Array2::from_elem((1, 150), 1.0);
        let high = Array2::from_elem((1, 150), 3.0);
        let m = spectral_merge(low.view(), high.view(), &spec).unwrap();
        assert_eq!(m[[0, 107]], 1.0);
        assert_eq!(m[[0, 149]], 3.0);
        assert!((m[[0, 128]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn equal_overlap_merges_to_either_input() {
        let spec = BandSplitSpec::default();
        let low = Array2::from_shape_fn((2, 150), |(t, k)| (t * 1000 + k) as f64 * 0.37);
        let mut high = Array2::zeros((2, 150));
        for t in 0..2 {
            for k in 0..150 {
                let bin = k + 108;
                high[[t, k]] = if bin <= 150 { low[[t, bin - 1]] } else { -1.0 };
            }
        }
        let m = spectral_merge(low.view(), high.view(), &spec).unwrap();
        for t in 0..2 {
            for bin in 108..=150 {
                assert_eq!(m[[t, bin - 1]], low[[t, bin - 1]]);
            }
        }
    }

    #[test]
    fn wrong_shapes_rejected() {
        let spec = BandSplitSpec::default();
        assert!(spectral_split(Array2::<f64>::zeros((1, 256)).view(), &spec).is_err());
        let a = Array2::<f64>::zeros((1, 150));
        let b = Array2::<f64>::zeros((2, 150));
        assert!(spectral_merge(a.view(), b.view(), &spec).is_err());
    }

    proptest! {
        #[test]
        fn merge_after_split_is_identity(values in proptest::collection::vec(-50.0f64..10.0, 257 * 3)) {
            let spec = BandSplitSpec::default();
            let x = Array2::from_shape_vec((3, 257), values).unwrap();
            let (low, high) = spectral_split(x.view(), &spec).unwrap();
            // Concatenated slices re-read at their original indices.
            for t in 0..3 {
                for bin in 1..=257usize {
                    if bin <= 150 { prop_assert_eq!(low[[t, bin - 1]], x[[t, bin - 1]]); }
                    if bin >= 108 { prop_assert_eq!(high[[t, bin - 108]], x[[t, bin - 1]]); }
                }
            }
            let merged = spectral_merge(low.view(), high.view(), &spec).unwrap();
            prop_assert_eq!(merged, x);
        }
    }
}
