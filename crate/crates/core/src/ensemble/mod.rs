//! Multi-branched encoder of per-node component models and the fusion
//! decoders that combine their outputs.

mod components;
mod decoder;
mod features;
mod system;

pub use components::{subset_digest, train_components, ComponentConfig, ComponentModel, ModelCache, MultiBranchEncoder};
pub use decoder::{
    decode_bf, decoder_spec, fit_decoder, fit_lr_decoder, train_nn_decoder, Decoder, DecoderConfig, DecoderKind, LinearDecoder,
};
pub use features::{concat_nodes, merge_node, FeatureConfig, NoisyView, Prepared, WdView};
pub use system::{decoder_training_set, encode_nodes, enhance_utterance, prepare_corpus, DaemeSystem, Provenance, SystemConfig};
