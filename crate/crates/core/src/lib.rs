//! Hand-gesture recognition for a 9x9 textile tactile sensor.
//!
//! The crate covers the whole path from sensor packets to gesture labels:
//!
//! * [`osc`], [`dataset`], [`model_file`] and [`listener`]: wire format,
//!   dataset files, model files and live UDP intake.
//! * [`preprocess`] and [`augment`]: filtering, normalization, padding,
//!   finger tracking and shift augmentation.
//! * [`features`]: spatio-temporal wavelet statistics, touch-pattern
//!   features and motion history images.
//! * [`classical`] and [`nn`]: KNN, random forest and SMO-trained SVM, plus
//!   a small CNN / LSTM / CNN-LSTM engine with manual backpropagation.
//! * [`synth`]: a seeded generator of synthetic gesture corpora.
//! * [`eval`] and [`method`]: splits, leave-one-subject-out search,
//!   confusion matrices, streaming segmentation and the nine trainable
//!   recognition methods.

pub mod augment;
pub mod classical;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod listener;
pub mod method;
pub mod model_file;
pub mod nn;
pub mod osc;
pub mod preprocess;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{Frame, GestureClass, Recording, SensorCoord, Speed, Tilt};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/frames.md")]
    mod frames {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    mod classifiers {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
