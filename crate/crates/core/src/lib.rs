//! Multi-line handwriting recognition built from scratch: a multi-directional
//! 2D LSTM encoder shared by a collapse + CTC line recognizer and an
//! attention-based character decoder, with the training machinery and a
//! synthetic data generator.

pub mod attention;
pub mod checkpoint;
pub mod checks;
pub mod cli;
pub mod ctc;
pub mod datagen;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod font;
pub mod gradcheck;
pub mod kernels;
pub mod mdlstm;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod params;
pub mod tensor;
pub mod trainer;
pub mod viz;
pub mod vocab;

pub use error::{Error, Result};
pub use tensor::{ParamSet, Real, Tensor};
