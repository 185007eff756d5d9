//! Sliding-mode observer for motor speed and load torque, and reconstruction of
//! the brake torque from the observed load.
//!
//! With `e1 = ω̂ − ω` and `e2 = T̂ − T` the error dynamics are
//!
//! ```text
//! ė1 = −(c_n/J_n)·e1 − e2/J_n + U
//! ė2 = g·U
//! ```
//!
//! The switching term `U = k·sat(e1/φ)` with `k < 0` drives `e1` to zero.
//! On the surface `e1 = 0` the equivalent injection is `U = e2/J_n`, leaving
//! `ė2 = (g/J_n)·e2`; with `g < 0` the torque error decays at rate `|g|/J_n`.
//!
//! The load torque seen by the motor carries the clamp force only while the
//! screw slides. At standstill the thread friction absorbs an arbitrary part of
//! the motor torque, so the brake torque estimate is carried forward from the
//! last motion phase by integrating the measured motor angle through the
//! caliper stiffness.

use serde::{Deserialize, Serialize};

use crate::actuator::{ActuatorConstants, ActuatorParams, CaliperParams};
use crate::{Error, Real, Result};

/// `s/φ` limited to `[−1, 1]`.
pub fn saturation<T: Real>(s: T, phi: T) -> T {
    (s / phi).clamp_to(-T::one(), T::one())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverGains<T> {
    /// Sliding gain, rad/s², negative.
    pub k: T,
    /// Torque feedback gain, kg·m², negative.
    pub g: T,
    /// Boundary layer width, rad/s.
    pub phi: T,
    pub t_ctrl_s: T,
    /// Euler substeps per control period.
    pub substeps: u32,
    /// Motor speed above which the observed load is trusted for the brake
    /// torque estimate, rad/s.
    pub motion_threshold_rad_s: T,
    /// Time constant pulling the brake torque estimate to the observed value
    /// during motion, s.
    pub blend_tau_s: T,
    /// Time the motor must keep turning one way before the observed load is
    /// blended in, s.
    pub settle_s: T,
}

/// Torque error decay time `J_n/|g|` used for the default feedback gain.
pub const DEFAULT_DECAY_TIME_S: f64 = 0.005;

impl<T: Real> Default for ObserverGains<T> {
    fn default() -> Self {
        let j_n = ActuatorConstants::new(&ActuatorParams::<T>::default())
            .map(|c| c.j_n.forward)
            .unwrap_or_else(|_| T::lit(5e-6));
        Self {
            k: T::lit(-5e4),
            g: -j_n / T::lit(DEFAULT_DECAY_TIME_S),
            phi: T::lit(10.0),
            t_ctrl_s: T::lit(1e-3),
            substeps: 10,
            motion_threshold_rad_s: T::lit(5.0),
            blend_tau_s: T::lit(3.0),
            settle_s: T::lit(0.01),
        }
    }
}

impl<T: Real> ObserverGains<T> {
    /// Sets `g` so that the torque error decays with time constant `tau`.
    pub fn with_decay_time(mut self, j_n: T, tau: T) -> Self {
        self.g = -j_n / tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if !(self.k < z) {
            return Err(Error::Config(format!("observer k = {} must be negative", self.k)));
        }
        if !(self.g < z) {
            return Err(Error::Config(format!("observer g = {} must be negative", self.g)));
        }
        if !(self.phi > z && self.t_ctrl_s > z) || self.substeps == 0 {
            return Err(Error::Config("observer needs phi > 0, T_ctrl > 0, substeps >= 1".into()));
        }
        if self.blend_tau_s < z || self.motion_threshold_rad_s < z || self.settle_s < z {
            return Err(Error::Config("observer blend time, settle time and motion threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObserverState<T> {
    pub omega_hat: T,
    pub t_r_hat: T,
    /// Speed error at the end of the last step.
    pub e1: T,
    /// Switching injection at the end of the last step.
    pub u: T,
}

/// Motor constants the observer model needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverModel<T> {
    pub j_n: T,
    pub c_n: T,
    pub k_t: T,
}

/// One control period of the observer, split into `gains.substeps` forward
/// Euler steps with the measurements held.
pub fn smo_step<T: Real>(
    gains: &ObserverGains<T>,
    state: &ObserverState<T>,
    omega_m: T,
    current: T,
    model: &ObserverModel<T>,
    dt: T,
) -> ObserverState<T> {
    let n = T::lit(gains.substeps as f64);
    let h = dt / n;
    let mut s = *state;
    let drive = model.k_t * current;
    for _ in 0..gains.substeps {
        let e1 = s.omega_hat - omega_m;
        let u = gains.k * saturation(e1, gains.phi);
        let w_dot = (drive - model.c_n * s.omega_hat - s.t_r_hat) / model.j_n + u;
        s.omega_hat = s.omega_hat + h * w_dot;
        s.t_r_hat = s.t_r_hat + h * gains.g * u;
        s.u = u;
    }
    s.e1 = s.omega_hat - omega_m;
    s
}

/// Brake torque implied by an observed load torque for the given direction.
pub fn brake_torque_from_load<T: Real>(t_r_hat: T, consts: &ActuatorConstants<T>, forward: bool) -> T {
    consts.brake_from_load(t_r_hat, forward)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverOutput<T> {
    pub omega_hat: T,
    pub t_r_hat: T,
    pub t_epb_hat: T,
    /// Set when the measurement was rejected and the estimate frozen.
    pub frozen: bool,
}

/// Observer plus brake torque reconstruction for one actuator.
#[derive(Clone, Debug)]
pub struct LoadTorqueObserver<T> {
    pub gains: ObserverGains<T>,
    consts: ActuatorConstants<T>,
    k_t: T,
    caliper: CaliperParams<T>,
    /// Nut position carried by the measured motor rotation, m.
    nut_hat: T,
    t_epb_max: T,
    state: ObserverState<T>,
    t_epb_hat: T,
    /// Time spent turning in the current direction; negative for backwards.
    run_s: T,
    frozen_samples: u64,
}

impl<T: Real> LoadTorqueObserver<T> {
    pub fn new(gains: ObserverGains<T>, params: &ActuatorParams<T>) -> Result<Self> {
        gains.validate()?;
        let consts = ActuatorConstants::new(params)?;
        let k_t = params.motor.torque_const_nm_per_a;
        // clamp force reached by the stall torque, doubled as a generous bound
        let stall = k_t * params.motor.supply_voltage_v / params.motor.resistance_ohm;
        let t_epb_max = T::lit(2.0) * consts.brake_from_load(stall, true);
        Ok(Self {
            gains,
            consts,
            k_t,
            caliper: params.caliper,
            nut_hat: T::zero(),
            t_epb_max,
            state: ObserverState::default(),
            t_epb_hat: T::zero(),
            run_s: T::zero(),
            frozen_samples: 0,
        })
    }

    pub fn state(&self) -> &ObserverState<T> {
        &self.state
    }

    pub fn brake_torque_estimate(&self) -> T {
        self.t_epb_hat
    }

    pub fn frozen_samples(&self) -> u64 {
        self.frozen_samples
    }

    pub fn constants(&self) -> &ActuatorConstants<T> {
        &self.consts
    }

    /// Processes one control period of speed and current measurements.
    pub fn update(&mut self, omega_m: T, current: T) -> ObserverOutput<T> {
        let dt = self.gains.t_ctrl_s;
        if !omega_m.is_finite() || !current.is_finite() {
            self.frozen_samples += 1;
            return self.output(true);
        }
        let forward = omega_m >= T::zero();
        let model =
            ObserverModel { j_n: self.consts.j_n.select(forward), c_n: self.consts.c_n.select(forward), k_t: self.k_t };
        let next = smo_step(&self.gains, &self.state, omega_m, current, &model, dt);
        if !(next.omega_hat.is_finite() && next.t_r_hat.is_finite()) {
            self.frozen_samples += 1;
            return self.output(true);
        }
        self.state = next;

        // carry the nut with the measured rotation, then pull it towards the
        // position implied by the observed load while the screw slides forward
        // against the pads
        let cal = &self.caliper;
        let per_m = self.consts.brake_per_clamp * cal.stiffness_n_per_m;
        let mut x = self.nut_hat + self.consts.nut_per_rad * omega_m * dt;
        self.run_s = if omega_m.abs() <= self.gains.motion_threshold_rad_s {
            T::zero()
        } else if forward {
            self.run_s.max(T::zero()) + dt
        } else {
            self.run_s.min(T::zero()) - dt
        };
        if self.run_s > self.gains.settle_s {
            let observed = brake_torque_from_load(self.state.t_r_hat, &self.consts, true);
            if observed > T::zero() {
                let alpha = if self.gains.blend_tau_s > T::zero() {
                    (dt / self.gains.blend_tau_s).min(T::one())
                } else {
                    T::one()
                };
                x = x + alpha * (cal.clearance_m + observed / per_m - x);
            }
        }
        self.nut_hat = x.clamp_to(T::zero(), cal.travel_limit_m);
        self.t_epb_hat = (per_m * (self.nut_hat - cal.clearance_m)).clamp_to(T::zero(), self.t_epb_max);
        self.output(false)
    }

    fn output(&self, frozen: bool) -> ObserverOutput<T> {
        ObserverOutput {
            omega_hat: self.state.omega_hat,
            t_r_hat: self.state.t_r_hat,
            t_epb_hat: self.t_epb_hat,
            frozen,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ObserverModel<f64> {
        ObserverModel { j_n: 5e-6, c_n: 1.2e-5, k_t: 0.011 }
    }

    #[test]
    fn saturation_examples() {
        assert_eq!(saturation(0.0, 2.0), 0.0);
        assert_eq!(saturation(-4.0, 2.0), -1.0);
        assert_eq!(saturation(1.0, 2.0), 0.5);
        assert_eq!(saturation(100.0, 2.0), 1.0);
    }

    #[test]
    fn exact_estimate_is_fixed_point() {
        let m = model();
        let gains = ObserverGains::default().with_decay_time(m.j_n, 0.005);
        let (i, t_r) = (10.0, 0.05);
        // speed at which the motor is in equilibrium with this load
        let w = (m.k_t * i - t_r) / m.c_n;
        let s = ObserverState { omega_hat: w, t_r_hat: t_r, e1: 0.0, u: 0.0 };
        let n = smo_step(&gains, &s, w, i, &m, 1e-3);
        assert!((n.omega_hat - w).abs() < 1e-9 * w);
        assert!((n.t_r_hat - t_r).abs() < 1e-15);
    }

    /// Motor driven by a fixed current against a constant load, exact solution.
    fn true_speed(m: &ObserverModel<f64>, i: f64, t_r: f64, w0: f64, t: f64) -> f64 {
        let w_inf = (m.k_t * i - t_r) / m.c_n;
        w_inf + (w0 - w_inf) * (-m.c_n / m.j_n * t).exp()
    }

    #[test]
    fn converges_to_constant_load() {
        let m = model();
        let gains = ObserverGains::default().with_decay_time(m.j_n, 0.005);
        let (i, t_r) = (25.0, 0.2);
        let mut s = ObserverState::default();
        for n in 1..=50 {
            let w = true_speed(&m, i, t_r, 0.0, n as f64 * 1e-3);
            s = smo_step(&gains, &s, w, i, &m, 1e-3);
        }
        assert!((s.t_r_hat - t_r).abs() / t_r < 0.05, "{}", s.t_r_hat);
    }

    #[test]
    fn torque_error_decays_at_design_rate() {
        let m = model();
        let tau = 0.005;
        let gains = ObserverGains::default().with_decay_time(m.j_n, tau);
        // the motor runs at a steady 500 rad/s; a load step of 0.1 N·m is met by
        // a current step so the speed stays put
        let w = 500.0;
        let i0 = m.c_n * w / m.k_t;
        let t_r = 0.1;
        let i1 = i0 + t_r / m.k_t;
        let mut s = ObserverState { omega_hat: w, t_r_hat: 0.0, e1: 0.0, u: 0.0 };
        let mut pts = Vec::new();
        for n in 1..=40 {
            s = smo_step(&gains, &s, w, i1, &m, 1e-3);
            let t = n as f64 * 1e-3;
            if (0.005..=0.025).contains(&t) {
                pts.push((t, (s.t_r_hat - t_r).abs().ln()));
            }
        }
        let n = pts.len() as f64;
        let (mt, me) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
        let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - me)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
        assert!((-slope * tau - 1.0).abs() < 0.1, "rate {} vs {}", -slope, 1.0 / tau);
    }

    #[test]
    fn deterministic() {
        let m = model();
        let gains = ObserverGains::default();
        let run = || {
            let mut s = ObserverState::default();
            for n in 0..100 {
                s = smo_step(&gains, &s, (n as f64).sin() * 50.0, 5.0, &m, 1e-3);
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shared_constants_reconstruct_plant_torque() {
        let p = ActuatorParams::<f64>::default();
        let k = ActuatorConstants::new(&p).unwrap();
        assert_eq!(brake_torque_from_load(0.0, &k, true), 0.0);
        let f = 12_000.0;
        let t = brake_torque_from_load(k.load_torque(f, true), &k, true);
        assert!((t - crate::actuator::brake_torque(f, &p.caliper)).abs() < 1e-9);
    }

    #[test]
    fn non_finite_measurement_freezes() {
        let mut obs = LoadTorqueObserver::new(ObserverGains::default(), &ActuatorParams::<f64>::default()).unwrap();
        obs.update(10.0, 1.0);
        let before = *obs.state();
        let out = obs.update(f64::NAN, 1.0);
        assert!(out.frozen);
        assert_eq!(*obs.state(), before);
        assert_eq!(obs.frozen_samples(), 1);
    }

    #[test]
    fn gain_signs_checked() {
        let g = ObserverGains::<f64> { g: 1.0, ..Default::default() };
        assert!(g.validate().is_err());
        let g = ObserverGains::<f64> { k: 10.0, ..Default::default() };
        assert!(g.validate().is_err());
        assert!(ObserverGains::<f64>::default().validate().is_ok());
    }
}
