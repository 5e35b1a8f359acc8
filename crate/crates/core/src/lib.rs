//! Effective capacity of full-duplex buffer-aided relaying under
//! statistical end-to-end delay constraints.

pub mod capacity;
pub mod delay;
pub mod fading;
pub mod mgf;
pub mod policies;
pub mod quad;
pub mod queuesim;
pub mod roots;
pub mod scalar;
pub mod sweep;

pub use capacity::{effective_capacity, CapacityError, CapacityResult, CaseLabel, PolicyFamily};
pub use delay::{DelayConstraint, DelayError};
pub use fading::{FadingSpec, LinkFading, RelayPolicy, Scenario};
pub use mgf::{Engine, Evaluator, ExponentPoint};
pub use policies::{mcg_policy, MdeFamily};
pub use scalar::Real;

pub type DelayConstraintF64 = delay::DelayConstraint<f64>;
pub type DelayConstraintF32 = delay::DelayConstraint<f32>;
