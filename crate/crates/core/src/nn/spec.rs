use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Logistic,
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Logistic => logistic(v),
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output `a`.
    pub(crate) fn deriv_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

pub(crate) fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    /// One affine layer.
    Linear,
    /// `layers` hidden dense layers of `width`, then an affine output.
    Ddae { layers: usize, width: usize, activation: Activation },
    /// DDAE plus a learned projection of the first hidden activation added
    /// to the last hidden layer's pre-activation. Needs at least 3 layers.
    Hddae { layers: usize, width: usize, activation: Activation },
    /// Stacked bidirectional LSTM layers followed by an affine projection
    /// of the concatenated last-layer states.
    Blstm { layers: usize, cells: usize },
    /// Two dense layers and an affine output, applied per frame.
    FcDecoder { width: usize },
    /// Three same-padded 1-D convolutions over time, two dense layers and an
    /// affine output.
    CnDecoder { channels: usize, kernel: usize, width: usize },
}

impl Architecture {
    pub fn tag(&self) -> u8 {
        match self {
            Architecture::Linear => 0,
            Architecture::Ddae { .. } => 1,
            Architecture::Hddae { .. } => 2,
            Architecture::Blstm { .. } => 3,
            Architecture::FcDecoder { .. } => 4,
            Architecture::CnDecoder { .. } => 5,
        }
    }

    /// Sequence models see whole utterances; the rest map frames independently.
    pub fn is_sequence(&self) -> bool {
        matches!(self, Architecture::Blstm { .. } | Architecture::CnDecoder { .. })
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, Architecture::Blstm { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::Ddae { .. } => "ddae",
            Architecture::Hddae { .. } => "hddae",
            Architecture::Blstm { .. } => "blstm",
            Architecture::FcDecoder { .. } => "fc",
            Architecture::CnDecoder { .. } => "cn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl ModelSpec {
    pub fn new(arch: Architecture, input_dim: usize, output_dim: usize) -> Result<Self> {
        let spec = ModelSpec { arch, input_dim, output_dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("unrealizable model: {m}")));
        if self.input_dim == 0 || self.output_dim == 0 {
            return bad("zero input or output dimension");
        }
        match self.arch {
            Architecture::Linear => {}
            Architecture::Ddae { layers, width, .. } => {
                if layers == 0 || width == 0 {
                    return bad("DDAE needs positive layers and width");
                }
            }
            Architecture::Hddae { layers, width, .. } => {
                if layers < 3 || width == 0 {
                    return bad("HDDAE needs at least 3 layers and positive width");
                }
            }
            Architecture::Blstm { layers, cells } => {
                if layers == 0 || cells == 0 {
                    return bad("BLSTM needs positive layers and cells");
                }
            }
            Architecture::FcDecoder { width } => {
                if width == 0 {
                    return bad("zero decoder width");
                }
            }
            Architecture::CnDecoder { channels, kernel, width } => {
                if channels == 0 || width == 0 || kernel % 2 == 0 {
                    return bad("CN decoder needs positive sizes and an odd kernel");
                }
            }
        }
        Ok(())
    }
}
