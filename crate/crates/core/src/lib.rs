//! Wavelet-flow video autoencoder core.
//!
//! * [`tensor`]: rank-4 `(c, t, h, w)` tensors, seeded RNG, VTensor files.
//! * [`wavelet`]: Haar filter banks, 3D/2D transforms, the 4x8x8 pyramid.
//! * [`subband`]: per-subband energy and entropy statistics.
//! * [`causal`]: causal 3D convolution, streaming-safe normalization and the
//!   causal cache that makes chunked inference match whole-clip inference.
//! * [`net`]: forward-only encoder/decoder with the energy-flow pathway.
//! * [`losses`]: L1, wavelet-consistency, KL and adversarial weighting terms.

pub mod causal;
pub mod error;
pub mod losses;
pub mod net;
pub mod plan;
pub mod subband;
pub mod tensor;
pub mod wavelet;

pub use error::{Error, Result};
pub use plan::ChunkPlan;
pub use tensor::{Rng, Shape, VideoTensor};
pub use wavelet::{SubbandSet2D, SubbandSet3D, WaveletPyramid};
