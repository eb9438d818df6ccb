//! Fusion of thermal and visual frames captured by sensors with mismatched
//! resolution and field of view.
//!
//! Two registration-aware pipelines sit at the centre of the crate:
//!
//! - [`rgif`]: ECC affine registration followed by a guided filter that uses
//!   the visual luminance as guide and the thermal frame as filtering input.
//! - [`rgmaf`]: per-pixel modality attention gated by a local reliability map
//!   (NCC times edge-direction consistency) and applied to a base/detail
//!   luminance decomposition that never darkens the thermal frame.
//!
//! Around them live the image primitives ([`imgcore`]), the geometric
//! toolbox ([`registration`]), classical fusion baselines ([`baselines`]) and
//! the evaluation/benchmark harness ([`evalbench`]).

pub mod baselines;
pub mod error;
pub mod evalbench;
pub mod imgcore;
pub mod registration;
pub mod rgif;
pub mod rgmaf;
pub mod synthetic;

pub use error::{Error, Result};
pub use evalbench::{Annotation, BoundingBox, Detection, EvalReport, TimingReport};
pub use imgcore::{Image, KernelSpec};
pub use registration::{
    AffineWarp, FlowField, Homography, Mask, RegistrationConfig, RegistrationMode,
};
pub use rgif::{GuidedFilterParams, RgifConfig};
pub use rgmaf::RgmafConfig;
