//! Image-free training of a linear convolutional inverse for blind
//! super-resolution.
//!
//! The library trains a small linear CNN to invert a space of anisotropic
//! Gaussian blur kernels: the network is driven so that convolving any blur
//! kernel with the network's impulse response yields a discrete impulse,
//! with regularizers anchoring the operator's DC gain and center response.
//! The trained operator (or its collapsed single-kernel form) is then applied
//! to bicubically upsampled low-resolution images to recover detail, at any
//! integer scale factor, without ever training on image data.

pub mod dil;
pub mod format;
pub mod gallery;
pub mod img;
pub mod lcnn;
pub mod metrics;
pub mod resize;
pub mod seed;
pub mod sr;
pub mod synth;
pub mod tensor;

pub use dil::{DilLossTerms, TrainConfig, TrainHistory};
pub use gallery::{DegradationKernel, GalleryConfig, GaussianParams, KernelGallery};
pub use img::ImageTensor;
pub use lcnn::{EffectiveKernel, LcnnModel};
pub use sr::ScaleFactor;
pub use tensor::{ChannelStack, ConvLayerWeights, Grid2D, Padding, ShapeError};
