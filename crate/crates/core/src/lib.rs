//! Rear-wheel anti-lock braking for an integrated electric parking brake.
//!
//! The crate contains the plant (vehicle, tyre, EPB actuator), the estimation
//! layer (load-torque sliding-mode observer, road friction estimator), the
//! cascaded sliding-mode controllers with a PID baseline, and a deterministic
//! fixed-step simulation engine with trace and metrics output.
//!
//! All physics and control code is generic over the scalar type through
//! [`Real`]; the `*64` aliases at the crate root fix it to `f64`, which is what
//! the simulator and the command-line front end use.

// `!(x > 0)` is how validation rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub mod actuator;
pub mod control;
pub mod error;
pub mod estimator;
pub mod observer;
pub mod sim;
pub mod tyre;
pub mod vehicle;

pub use error::{Error, Result};

/// Floating point scalar used by every model in the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal or parameter into this scalar.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        self.max(lo).min(hi)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type TyreParams64 = tyre::TyreParams<f64>;
pub type TyreCurve64 = tyre::TyreCurve<f64>;
pub type VehicleParams64 = vehicle::VehicleParams<f64>;
pub type VehicleState64 = vehicle::VehicleState<f64>;
pub type ActuatorParams64 = actuator::ActuatorParams<f64>;
pub type ActuatorState64 = actuator::ActuatorState<f64>;

pub type ObserverGains64 = observer::ObserverGains<f64>;
pub type LoadTorqueObserver64 = observer::LoadTorqueObserver<f64>;
pub type EstimatorConfig64 = estimator::EstimatorConfig<f64>;
pub type FrictionEstimator64 = estimator::FrictionEstimator<f64>;
pub type Scenario64 = sim::ScenarioSpec<f64>;
pub type Simulator64 = sim::Simulator<f64>;
pub type TraceRecord64 = sim::TraceRecord<f64>;
pub type RunMetrics64 = sim::RunMetrics;
