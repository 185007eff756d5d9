//! Road friction estimation from the μ-slip trajectory and the optimal slip map.
//!
//! The slope of utilized friction over slip classifies the operating point:
//! the linear band extrapolates with the nominal slope `k1`, the transitional
//! band with the measured slope, and the frictional band (past the peak)
//! keeps the previous utilized value.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::tyre::{TyreCurve, MU_MAX, MU_MIN};
use crate::{Error, Real, Result};

pub const OPTIMAL_SLIP_A1: f64 = 0.05;
pub const OPTIMAL_SLIP_A2: f64 = 0.13;
pub const OPTIMAL_SLIP_MIN: f64 = 0.1;
pub const OPTIMAL_SLIP_MAX: f64 = 0.3;
/// Utilized friction is clamped to this ceiling.
pub const UTILIZED_MU_MAX: f64 = 1.5;
/// Slip increments below this are treated as no change.
pub const SLIP_GUARD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig<T> {
    /// Slope of the linear region, per unit slip.
    pub k1: T,
    /// Slope of the peak region.
    pub k0: T,
    pub delta1: T,
    pub delta2: T,
    pub delta3: T,
    pub delta4: T,
    pub t_ctrl_s: T,
    pub mu_min: T,
    pub mu_max: T,
    /// Largest change of the estimate per second.
    pub slew_per_s: T,
    /// Samples in the least-squares slope window.
    pub window: usize,
    pub initial_mu: T,
    /// Loads below this are not used, N.
    pub fz_guard_n: T,
    /// Treat slopes below the frictional band like the frictional band instead
    /// of holding the estimate.
    pub steep_drop_is_frictional: bool,
    /// Before the peak the utilized friction only bounds the road friction
    /// from below, so the linear and transitional updates never lower the
    /// estimate.
    pub pre_peak_raises_only: bool,
}

/// Linear-region slope of the default tyre at the static rear load.
const DEFAULT_K1: f64 = 27.357;

impl<T: Real> Default for EstimatorConfig<T> {
    fn default() -> Self {
        Self::with_slope(T::lit(DEFAULT_K1))
    }
}

impl<T: Real> EstimatorConfig<T> {
    /// Band layout derived from the linear-region slope `k1`.
    pub fn with_slope(k1: T) -> Self {
        Self {
            k1,
            k0: T::zero(),
            delta1: T::lit(0.25) * k1,
            delta2: T::lit(0.25) * k1,
            delta3: T::lit(0.1) * k1,
            delta4: T::lit(0.1) * k1,
            t_ctrl_s: T::lit(1e-3),
            mu_min: T::lit(MU_MIN),
            mu_max: T::lit(MU_MAX),
            slew_per_s: T::lit(10.0),
            window: 5,
            initial_mu: T::lit(0.5),
            fz_guard_n: T::lit(100.0),
            steep_drop_is_frictional: true,
            pre_peak_raises_only: true,
        }
    }

    /// Takes `k1` from the tyre's initial slope at load `fz_n`.
    pub fn from_tyre(curve: &TyreCurve<T>, fz_n: T) -> Self {
        Self::with_slope(curve.initial_slope(fz_n))
    }

    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if !(self.k1 > self.k0 && self.k0 >= z) {
            return Err(Error::Config("estimator needs k1 > k0 >= 0".into()));
        }
        if [self.delta1, self.delta2, self.delta3, self.delta4].iter().any(|&d| !(d > z)) {
            return Err(Error::Config("estimator bands need positive deltas".into()));
        }
        // bands ordered: [-d4, k0+d3) < [k0+d3, k1-d1) < [k1-d1, k1+d2]
        if !(self.k0 + self.delta3 < self.k1 - self.delta1) {
            return Err(Error::Config("estimator transitional band is empty".into()));
        }
        if !(self.mu_min > z && self.mu_max > self.mu_min) {
            return Err(Error::Config("estimator mu bounds invalid".into()));
        }
        if !(self.t_ctrl_s > z && self.slew_per_s > z) || self.window < 2 {
            return Err(Error::Config("estimator needs T > 0, slew > 0, window >= 2".into()));
        }
        if self.initial_mu < self.mu_min || self.initial_mu > self.mu_max {
            return Err(Error::Config("estimator initial mu outside bounds".into()));
        }
        Ok(())
    }

    pub fn classify(&self, k: T) -> Region {
        if k > self.k1 + self.delta2 {
            Region::Above
        } else if k >= self.k1 - self.delta1 {
            Region::Linear
        } else if k >= self.k0 + self.delta3 {
            Region::Transitional
        } else if k >= -self.delta4 {
            Region::Frictional
        } else {
            Region::Below
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Linear,
    Transitional,
    Frictional,
    /// Slope steeper than the linear band.
    Above,
    /// Slope more negative than the frictional band.
    Below,
}

/// `F_x/F_z` clamped to `[0, 1.5]`; `None` below the load guard.
pub fn utilized_mu<T: Real>(fx: T, fz: T, fz_guard: T) -> Option<T> {
    if !(fz > fz_guard) || !fx.is_finite() {
        return None;
    }
    Some((fx / fz).clamp_to(T::zero(), T::lit(UTILIZED_MU_MAX)))
}

/// Two-point slope of utilized friction over slip; `k_prev` when slip is
/// unchanged.
pub fn slope<T: Real>(mu: T, mu_prev: T, slip: T, slip_prev: T, k_prev: T) -> T {
    let d = slip - slip_prev;
    if d.abs() > T::lit(SLIP_GUARD) {
        (mu - mu_prev) / d
    } else {
        k_prev
    }
}

/// Least-squares slope of `(slip, mu)` pairs; `k_prev` when the slip spread
/// is below the guard.
pub fn window_slope<T: Real>(pts: &[(T, T)], k_prev: T) -> T {
    if pts.len() < 2 {
        return k_prev;
    }
    let n = T::lit(pts.len() as f64);
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let guard = T::lit(SLIP_GUARD);
    if sxx <= guard * guard {
        k_prev
    } else {
        sxy / sxx
    }
}

/// `0.05·μ + 0.13` limited to `[0.1, 0.3]`.
pub fn optimal_slip<T: Real>(mu_max: T) -> T {
    (T::lit(OPTIMAL_SLIP_A1) * mu_max + T::lit(OPTIMAL_SLIP_A2))
        .clamp_to(T::lit(OPTIMAL_SLIP_MIN), T::lit(OPTIMAL_SLIP_MAX))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorState<T> {
    pub mu_x_prev: T,
    pub slip_prev: T,
    pub k_prev: T,
    pub mu_hat: T,
}

/// Raw estimate for one sample before slew limiting; `None` means hold.
pub fn classify_and_update<T: Real>(
    state: &EstimatorState<T>,
    k: T,
    mu_x: T,
    slip: T,
    cfg: &EstimatorConfig<T>,
) -> (Region, Option<T>) {
    let d_slip = slip - state.slip_prev;
    let region = cfg.classify(k);
    let pre_peak = |v: T| {
        if cfg.pre_peak_raises_only {
            v.max(state.mu_hat)
        } else {
            v
        }
    };
    let raw = match region {
        Region::Linear => Some(pre_peak(mu_x + cfg.k1 * d_slip)),
        Region::Transitional => Some(pre_peak(mu_x + k * d_slip)),
        Region::Frictional => Some(state.mu_x_prev),
        Region::Below if cfg.steep_drop_is_frictional => Some(state.mu_x_prev),
        Region::Below | Region::Above => None,
    };
    (region, raw)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorOutput<T> {
    pub mu_hat: T,
    pub slip_target: T,
    pub mu_x: T,
    pub slope: T,
    pub region: Option<Region>,
    /// Set when the load guard rejected the sample.
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct FrictionEstimator<T> {
    pub config: EstimatorConfig<T>,
    state: EstimatorState<T>,
    history: VecDeque<(T, T)>,
    primed: bool,
}

impl<T: Real> FrictionEstimator<T> {
    pub fn new(config: EstimatorConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: EstimatorState {
                mu_x_prev: T::zero(),
                slip_prev: T::zero(),
                k_prev: config.k1,
                mu_hat: config.initial_mu,
            },
            history: VecDeque::with_capacity(config.window),
            primed: false,
            config,
        })
    }

    pub fn state(&self) -> &EstimatorState<T> {
        &self.state
    }

    pub fn mu_hat(&self) -> T {
        self.state.mu_hat
    }

    pub fn slip_target(&self) -> T {
        optimal_slip(self.state.mu_hat)
    }

    /// Processes one control period with rear tyre force `fx`, load `fz` and
    /// slip `slip`.
    pub fn update(&mut self, fx: T, fz: T, slip: T) -> EstimatorOutput<T> {
        let cfg = self.config;
        let Some(mu_x) = utilized_mu(fx, fz, cfg.fz_guard_n) else {
            return EstimatorOutput {
                mu_hat: self.state.mu_hat,
                slip_target: self.slip_target(),
                mu_x: self.state.mu_x_prev,
                slope: self.state.k_prev,
                region: None,
                flagged: true,
            };
        };
        if self.history.len() == cfg.window {
            self.history.pop_front();
        }
        self.history.push_back((slip, mu_x));
        if !self.primed {
            self.primed = true;
            self.state.mu_x_prev = mu_x;
            self.state.slip_prev = slip;
            return self.output(mu_x, None);
        }
        let pts: Vec<(T, T)> = self.history.iter().copied().collect();
        let k = window_slope(&pts, self.state.k_prev);
        let (region, raw) = classify_and_update(&self.state, k, mu_x, slip, &cfg);
        if let Some(target) = raw {
            let step = cfg.slew_per_s * cfg.t_ctrl_s;
            let next = self.state.mu_hat + (target - self.state.mu_hat).clamp_to(-step, step);
            self.state.mu_hat = next.clamp_to(cfg.mu_min, cfg.mu_max);
        }
        self.state.k_prev = k;
        self.state.mu_x_prev = mu_x;
        self.state.slip_prev = slip;
        self.output(mu_x, Some(region))
    }

    fn output(&self, mu_x: T, region: Option<Region>) -> EstimatorOutput<T> {
        EstimatorOutput {
            mu_hat: self.state.mu_hat,
            slip_target: self.slip_target(),
            mu_x,
            slope: self.state.k_prev,
            region,
            flagged: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tyre::{build_lookup, LookupGrids, TyreModel, TyreParams};

    #[test]
    fn utilized_mu_examples() {
        assert_eq!(utilized_mu(3200.0, 4000.0, 100.0), Some(0.8));
        assert_eq!(utilized_mu(0.0, 4000.0, 100.0), Some(0.0));
        assert_eq!(utilized_mu(10.0, 50.0, 100.0), None);
        assert_eq!(utilized_mu(-5.0, 4000.0, 100.0), Some(0.0));
        assert_eq!(utilized_mu(9000.0, 4000.0, 100.0), Some(1.5));
    }

    #[test]
    fn utilized_mu_at_tyre_peak() {
        let tyre = TyreParams::<f64>::default();
        let fz = 4000.0;
        let peak = (1..=1000).map(|i| tyre.force(i as f64 / 1000.0, fz, 0.8)).fold(0.0, f64::max);
        let mu = utilized_mu(peak, fz, 100.0).unwrap();
        assert!((mu - 0.8).abs() < 0.01, "{mu}");
    }

    #[test]
    fn slope_examples() {
        assert_eq!(slope(0.5, 0.4, 0.1, 0.1, 7.0), 7.0);
        assert!((slope(0.41f64, 0.40, 0.105, 0.1, 0.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn window_slope_matches_polyfit() {
        // least-squares line through five points, solved by hand:
        // x = 0.1..0.14, y = 3x + noise(+1,-1,0,+1,-1)·1e-3
        let noise = [1e-3, -1e-3, 0.0, 1e-3, -1e-3];
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|i| {
                let x = 0.1 + 0.01 * i as f64;
                (x, 3.0 * x + noise[i])
            })
            .collect();
        // Σ(x−x̄)·n_i = 0.01·(−2·1e-3 + −1·−1e-3 + 0 + 1·1e-3 + 2·−1e-3) = −2e-5; Σ(x−x̄)² = 1e-3
        let expected = 3.0 - 2e-5 / 1e-3;
        assert!((window_slope(&pts, 0.0) - expected).abs() < 1e-9);
        // two points degenerate to the plain difference
        let two = [(0.1f64, 0.40), (0.105, 0.41)];
        assert!((window_slope(&two, 0.0) - 2.0).abs() < 1e-9);
        assert_eq!(window_slope(&[(0.1, 0.4), (0.1, 0.5)], 9.0), 9.0);
    }

    #[test]
    fn optimal_slip_examples() {
        assert!((optimal_slip(0.8f64) - 0.17).abs() < 1e-15);
        assert!((optimal_slip(0.2f64) - 0.14).abs() < 1e-15);
        assert!((optimal_slip(2.0f64) - 0.23).abs() < 1e-15);
        assert_eq!(optimal_slip(-1.0), 0.1);
    }

    #[test]
    fn update_formulas() {
        let cfg = EstimatorConfig::<f64>::default();
        let st = EstimatorState { mu_x_prev: 0.35, slip_prev: 0.05, k_prev: cfg.k1, mu_hat: 0.5 };
        let (r, v) = classify_and_update(&st, cfg.k1, 0.4, 0.06, &cfg);
        assert_eq!(r, Region::Linear);
        assert!((v.unwrap() - (0.4 + 0.01 * cfg.k1)).abs() < 1e-12);
        let (r, v) = classify_and_update(&st, 0.0, 0.4, 0.06, &cfg);
        assert_eq!(r, Region::Frictional);
        assert_eq!(v, Some(0.35));
        let (r, v) = classify_and_update(&st, 10.0, 0.4, 0.06, &cfg);
        assert_eq!(r, Region::Transitional);
        assert!((v.unwrap() - 0.5).abs() < 1e-12);
        let (r, v) = classify_and_update(&st, 100.0, 0.4, 0.06, &cfg);
        assert_eq!(r, Region::Above);
        assert_eq!(v, None);
    }

    #[test]
    fn pre_peak_updates_only_raise() {
        let cfg = EstimatorConfig::<f64>::default();
        let st = EstimatorState { mu_x_prev: 0.05, slip_prev: 0.01, k_prev: cfg.k1, mu_hat: 0.5 };
        let (r, v) = classify_and_update(&st, cfg.k1, 0.05, 0.011, &cfg);
        assert_eq!(r, Region::Linear);
        assert_eq!(v, Some(0.5));
        let loose = EstimatorConfig { pre_peak_raises_only: false, ..cfg };
        let (_, v) = classify_and_update(&st, cfg.k1, 0.05, 0.011, &loose);
        assert!((v.unwrap() - (0.05 + 0.001 * cfg.k1)).abs() < 1e-12);
    }

    #[test]
    fn bands_validated() {
        let mut cfg = EstimatorConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.delta3 = cfg.k1;
        assert!(cfg.validate().is_err());
        let mut cfg = EstimatorConfig::<f64>::default();
        cfg.k0 = cfg.k1 + 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_visits_regions_in_order() {
        let tyre = TyreParams::<f64>::default();
        let curve = build_lookup(&tyre, LookupGrids::default()).unwrap();
        let fz = 4267.35;
        let mut cfg = EstimatorConfig::from_tyre(&curve, fz);
        cfg.window = 2;
        let mut est = FrictionEstimator::new(cfg).unwrap();
        let mut seen = Vec::new();
        for i in 0..=400 {
            let slip = i as f64 * 0.0005;
            let out = est.update(tyre.force(slip, fz, 1.0), fz, slip);
            if let Some(r) = out.region {
                if seen.last() != Some(&r) {
                    seen.push(r);
                }
            }
        }
        assert_eq!(seen, vec![Region::Linear, Region::Transitional, Region::Frictional], "{seen:?}");
    }

    #[test]
    fn settles_on_steady_braking() {
        let tyre = TyreParams::<f64>::default();
        let fz = 4000.0;
        let mut est = FrictionEstimator::new(EstimatorConfig::default()).unwrap();
        let mut t = 0.0;
        let mut settled = None;
        for n in 0..1000 {
            // slip ramps to 0.17 and dithers around it
            let slip = (n as f64 * 0.001).min(0.17) + 0.002 * (n as f64 * 0.7).sin();
            let out = est.update(tyre.force(slip, fz, 0.8), fz, slip);
            t += 1e-3;
            if settled.is_none() && (out.mu_hat - 0.8).abs() < 0.08 {
                settled = Some(t);
            }
        }
        assert!(settled.unwrap() < 0.3, "{settled:?}");
        assert!((est.mu_hat() - 0.8).abs() < 0.08, "{}", est.mu_hat());
    }

    #[test]
    fn low_load_flags_sample() {
        let mut est = FrictionEstimator::new(EstimatorConfig::<f64>::default()).unwrap();
        let out = est.update(10.0, 20.0, 0.1);
        assert!(out.flagged);
        assert_eq!(out.mu_hat, 0.5);
    }
}
