//! Underwater acoustic ray tracing through stratified sound velocity
//! profiles, and iterative ray-tracing localization (IRTUL) of targets with
//! unknown depth from round-trip time-of-arrival measurements.
//!
//! The numerical core ([`svp`], [`raytrace`], [`localize`]) is generic over
//! the scalar type; the aliases at the crate root fix it to `f64`, which is
//! what the simulator and the command line use.
//!
//! ```
//! use irtul::{Svp, raytrace};
//!
//! let svp = Svp::new(vec![(0.0, 1500.0), (1000.0, 1500.0)]).unwrap();
//! let t = raytrace::propagation_time(&svp, std::f64::consts::FRAC_PI_4).unwrap();
//! assert!((t - 1000.0 * 2f64.sqrt() / 1500.0).abs() < 1e-12);
//! ```

pub mod cli;
pub mod linalg;
pub mod localize;
pub mod raytrace;
pub mod sim;
pub mod svp;

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar the numerical core is written against (`f32` or `f64`).
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub use localize::{IrtulConfig, LocalizationResult, Measurement, Position};
pub use raytrace::{Heading, RayError, RayTraceResult};
pub use svp::{ProfileError, SimplificationControl, SoundVelocityProfile};

/// Sound velocity profile in `f64`.
pub type Svp = SoundVelocityProfile<f64>;
/// Position in `f64` metres.
pub type Pos = Position<f64>;
/// One reference node's measurement in `f64`.
pub type Meas = Measurement<f64>;
/// IRTUL thresholds in `f64`.
pub type Config = IrtulConfig<f64>;
/// Ray tracing result in `f64`.
pub type Trace = RayTraceResult<f64>;
