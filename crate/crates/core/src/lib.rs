//! Diffusion-based picture composition.
//!
//! A user places landmark patches on a canvas ([`canvas`]); the sampler fills the
//! rest by DDPM reverse diffusion, re-encoding the known region at every step and
//! optionally resampling inside a window of timesteps ([`sampler`]). [`spectral`]
//! shows which frequency bands the forward process destroys first.

pub mod canvas;
pub mod datasets;
pub mod denoiser;
pub mod error;
pub mod noise;
pub mod sampler;
pub mod schedule;
pub mod spectral;
pub mod tensor;

pub use canvas::{rasterize, Composition, CompositionSpec, Patch, Placement, Rasterized};
pub use denoiser::{Denoiser, EpsilonPrediction, GaussianDenoiser, GmmDenoiser, GmmModel, ToyDenoiser, VarianceMode};
pub use error::{Error, Result};
pub use noise::{GaussianNoiseSource, TrajectoryNoise};
pub use sampler::{
    build_resample_plan, count_ops, paint, unconditional_sample, CancelToken, CompositionInput, KnownNoiseIndex,
    Manifest, OpCountReport, PaintObserver, PaintResult, PartialPaint, ResampleConfig, ResamplePlan, SamplerOptions,
    Snapshot, Strategy,
};
pub use schedule::Schedule;
pub use tensor::{Mask, Shape, Tensor};
