//! Feature front-end: STFT log-power spectra, spectral band slicing and the
//! one-level biorthogonal 3.7 wavelet split.

mod bands;
mod dump;
mod stft;
mod wavelet;

pub use bands::{spectral_merge, spectral_split, BandSplitSpec};
pub use dump::{read_feature_dump, write_feature_dump};
pub use stft::{
    stft_analyze, stft_synthesize, LpsFeatures, PhaseMatrix, Stft, StftConfig, LPS_FLOOR,
};
pub use wavelet::{wavelet_merge, wavelet_split, WaveletBands, BIOR37};
