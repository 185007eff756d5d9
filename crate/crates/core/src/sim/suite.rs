//! The canonical road cases.

use super::scenario::{RoadSegment, ScenarioSpec};
use crate::Real;

fn with_road<T: Real>(name: &str, road: &[(f64, f64)]) -> ScenarioSpec<T> {
    ScenarioSpec {
        name: name.into(),
        road: road.iter().map(|&(start_s, mu)| RoadSegment { start_s: T::lit(start_s), mu: T::lit(mu) }).collect(),
        ..ScenarioSpec::default()
    }
}

/// Constant friction 0.8.
pub fn single_mu<T: Real>() -> ScenarioSpec<T> {
    with_road("single_mu_0.8", &[(0.0, 0.8)])
}

/// Friction drops from 0.8 to 0.2 at 2 s.
pub fn high_to_low<T: Real>() -> ScenarioSpec<T> {
    with_road("high_to_low", &[(0.0, 0.8), (2.0, 0.2)])
}

/// Friction rises from 0.2 to 0.8 at 2 s.
pub fn low_to_high<T: Real>() -> ScenarioSpec<T> {
    with_road("low_to_high", &[(0.0, 0.2), (2.0, 0.8)])
}

/// Estimator schedule: 0.2, then 0.8 from 1.3 s, then 0.5 from 2.7 s.
pub fn estimator_schedule<T: Real>() -> ScenarioSpec<T> {
    with_road("estimator_schedule", &[(0.0, 0.2), (1.3, 0.8), (2.7, 0.5)])
}

pub fn all<T: Real>() -> Vec<ScenarioSpec<T>> {
    vec![single_mu(), high_to_low(), low_to_high(), estimator_schedule()]
}
