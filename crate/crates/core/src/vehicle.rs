//! Four-wheel longitudinal vehicle with quasi-static pitch load transfer.
//!
//! State is one body speed and position plus four wheel speeds. Forces and
//! torques are carried as magnitudes in the braking sense; [`vehicle_derivatives`]
//! is the only place signs are applied. The vertical loads depend on the body
//! acceleration, which in turn depends on the tyre forces; the loop is broken
//! by evaluating the loads with the acceleration of the previous step.

use serde::{Deserialize, Serialize};

use crate::tyre::TyreModel;
use crate::{Error, Real, Result};

pub const FL: usize = 0;
pub const FR: usize = 1;
pub const RL: usize = 2;
pub const RR: usize = 3;

/// Below this speed the slip ratio is defined as zero and the run stops.
pub const V_EPS: f64 = 0.1;
/// Largest body acceleration magnitude accepted by the load-transfer model.
pub const MAX_ACCEL: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams<T> {
    pub mass_kg: T,
    /// Centre of gravity to front axle (a).
    pub cg_to_front_m: T,
    /// Centre of gravity to rear axle (b).
    pub cg_to_rear_m: T,
    pub cg_height_m: T,
    pub wheel_radius_front_m: T,
    pub wheel_radius_rear_m: T,
    pub wheel_inertia_front_kgm2: T,
    pub wheel_inertia_rear_kgm2: T,
    pub gravity_mps2: T,
}

impl<T: Real> Default for VehicleParams<T> {
    fn default() -> Self {
        Self {
            mass_kg: T::lit(2100.0),
            cg_to_front_m: T::lit(1.16),
            cg_to_rear_m: T::lit(1.64),
            cg_height_m: T::lit(0.55),
            wheel_radius_front_m: T::lit(0.327),
            wheel_radius_rear_m: T::lit(0.327),
            wheel_inertia_front_kgm2: T::lit(1.7),
            wheel_inertia_rear_kgm2: T::lit(1.7),
            gravity_mps2: T::lit(9.81),
        }
    }
}

impl<T: Real> VehicleParams<T> {
    pub fn wheelbase(&self) -> T {
        self.cg_to_front_m + self.cg_to_rear_m
    }

    pub fn radius(&self, wheel: usize) -> T {
        if wheel < RL {
            self.wheel_radius_front_m
        } else {
            self.wheel_radius_rear_m
        }
    }

    pub fn inertia(&self, wheel: usize) -> T {
        if wheel < RL {
            self.wheel_inertia_front_kgm2
        } else {
            self.wheel_inertia_rear_kgm2
        }
    }

    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        let checks = [
            (self.mass_kg > z, "mass_kg must be positive"),
            (self.cg_to_front_m > z, "cg_to_front_m must be positive"),
            (self.cg_to_rear_m > z, "cg_to_rear_m must be positive"),
            (self.cg_height_m > z, "cg_height_m must be positive"),
            (self.wheel_radius_front_m > z && self.wheel_radius_rear_m > z, "wheel radii must be positive"),
            (self.wheel_inertia_front_kgm2 > z && self.wheel_inertia_rear_kgm2 > z, "wheel inertias must be positive"),
            (self.gravity_mps2 > z, "gravity_mps2 must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(format!("vehicle: {msg}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VehicleState<T> {
    pub v_x: T,
    pub x: T,
    /// Wheel speeds in the order FL, FR, RL, RR.
    pub omega: [T; 4],
    /// Body acceleration of the previous step, signed (negative when braking).
    pub a_x_prev: T,
}

impl<T: Real> VehicleState<T> {
    /// Free rolling at speed `v`.
    pub fn rolling(p: &VehicleParams<T>, v: T) -> Self {
        let mut omega = [T::zero(); 4];
        for (w, o) in omega.iter_mut().enumerate() {
            *o = v / p.radius(w);
        }
        Self { v_x: v, x: T::zero(), omega, a_x_prev: T::zero() }
    }
}

/// Vertical load per wheel on each axle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxleLoads<T> {
    pub front: T,
    pub rear: T,
    /// Set when one axle would have gone negative and was clamped.
    pub clamped: bool,
}

impl<T: Real> AxleLoads<T> {
    pub fn for_wheel(&self, wheel: usize) -> T {
        if wheel < RL {
            self.front
        } else {
            self.rear
        }
    }
}

/// Per-wheel loads for signed body acceleration `accel` (m/s²).
pub fn axle_loads<T: Real>(p: &VehicleParams<T>, accel: T) -> AxleLoads<T> {
    let lim = T::lit(MAX_ACCEL);
    let accel = accel.clamp_to(-lim, lim);
    let k = p.mass_kg / (T::lit(2.0) * p.wheelbase());
    let front = k * (p.gravity_mps2 * p.cg_to_rear_m - accel * p.cg_height_m);
    let rear = k * (p.gravity_mps2 * p.cg_to_front_m + accel * p.cg_height_m);
    let half_weight = p.mass_kg * p.gravity_mps2 / T::lit(2.0);
    if front < T::zero() {
        AxleLoads { front: T::zero(), rear: half_weight, clamped: true }
    } else if rear < T::zero() {
        AxleLoads { front: half_weight, rear: T::zero(), clamped: true }
    } else {
        AxleLoads { front, rear, clamped: false }
    }
}

/// Slip ratio magnitude in `[0, 1]`. Both the braking and the driving branch
/// are covered; below [`V_EPS`] on both speeds the slip is zero.
pub fn slip_ratio<T: Real>(v_x: T, omega: T, radius: T) -> T {
    signed_slip(v_x, omega, radius).abs()
}

/// Slip with sign: positive while braking (wheel slower than the body),
/// negative while driving.
pub fn signed_slip<T: Real>(v_x: T, omega: T, radius: T) -> T {
    let v = v_x.max(T::zero());
    let wr = (omega * radius).max(T::zero());
    let eps = T::lit(V_EPS);
    if v < eps && wr < eps {
        T::zero()
    } else if v >= wr {
        (v - wr) / v
    } else {
        -(wr - v) / wr
    }
}

/// Torques applied at each wheel, all non-negative magnitudes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WheelTorques<T> {
    /// Hydraulic service brake.
    pub service: [T; 4],
    /// Drive torque (front axle only).
    pub drive: [T; 4],
    /// Parking-brake actuator torque (rear axle only).
    pub epb: [T; 4],
}

impl<T: Real> WheelTorques<T> {
    pub fn rear_epb(left: T, right: T) -> Self {
        let z = T::zero();
        Self { service: [z; 4], drive: [z; 4], epb: [z, z, left, right] }
    }

    fn braking(&self, wheel: usize) -> T {
        let epb = if wheel >= RL { self.epb[wheel] } else { T::zero() };
        self.service[wheel] + epb
    }

    fn driving(&self, wheel: usize) -> T {
        if wheel < RL {
            self.drive[wheel]
        } else {
            T::zero()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleDerivative<T> {
    pub v_dot: T,
    pub x_dot: T,
    pub omega_dot: [T; 4],
    /// Tyre force per wheel, positive when it decelerates the body.
    pub force: [T; 4],
    pub slip: [T; 4],
    pub loads: AxleLoads<T>,
}

/// Time derivatives of the vehicle state. `mu` is the road friction under the
/// front and rear axle.
pub fn vehicle_derivatives<T: Real, M: TyreModel<T> + ?Sized>(
    p: &VehicleParams<T>,
    s: &VehicleState<T>,
    torques: &WheelTorques<T>,
    tyre: &M,
    mu: [T; 2],
) -> Result<VehicleDerivative<T>> {
    let all = torques.service.iter().chain(&torques.drive).chain(&torques.epb);
    if all.clone().any(|t| !t.is_finite()) {
        return Err(Error::Numerical { t: f64::NAN, reason: "non-finite wheel torque".into() });
    }

    let loads = axle_loads(p, s.a_x_prev);
    let mut force = [T::zero(); 4];
    let mut slip = [T::zero(); 4];
    let mut omega_dot = [T::zero(); 4];
    for w in 0..4 {
        let r = p.radius(w);
        let lam = signed_slip(s.v_x, s.omega[w], r);
        let axle_mu = if w < RL { mu[0] } else { mu[1] };
        let f = tyre.force(lam.abs(), loads.for_wheel(w), axle_mu);
        let f = if lam < T::zero() { -f } else { f };
        slip[w] = lam;
        force[w] = f;

        let drive = torques.driving(w);
        let brake = torques.braking(w);
        let mut acc = (f * r + drive - brake) / p.inertia(w);
        // static friction of a stopped wheel: brake torque cannot spin it backwards
        if s.omega[w] <= T::zero() && acc < T::zero() {
            acc = T::zero();
        }
        omega_dot[w] = acc;
    }

    let total: T = force.iter().copied().sum();
    let mut v_dot = -total / p.mass_kg;
    if s.v_x <= T::zero() && v_dot < T::zero() {
        v_dot = T::zero();
    }

    let d = VehicleDerivative { v_dot, x_dot: s.v_x.max(T::zero()), omega_dot, force, slip, loads };
    if !d.v_dot.is_finite() || d.omega_dot.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical {
            t: f64::NAN,
            reason: format!("non-finite vehicle derivative (v = {}, omega = {:?})", s.v_x, s.omega),
        });
    }
    Ok(d)
}

/// Quasi-steady deceleration when only the rear axle brakes at friction `mu`
/// with the tyre at its force peak: solves `m·a = 2·mu·F_zr(a)`.
pub fn rear_only_peak_deceleration<T: Real>(p: &VehicleParams<T>, mu: T) -> T {
    mu * p.gravity_mps2 * p.cg_to_front_m / (p.wheelbase() + mu * p.cg_height_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tyre::TyreParams;

    fn p() -> VehicleParams<f64> {
        VehicleParams::default()
    }

    #[test]
    fn static_loads() {
        let l = axle_loads(&p(), 0.0);
        assert!((l.front - 6033.15).abs() < 1e-6);
        assert!((l.rear - 4267.35).abs() < 1e-6);
        assert!(!l.clamped);
    }

    #[test]
    fn braking_unloads_rear_axle() {
        let l = axle_loads(&p(), -4.0);
        assert!((l.rear - 3442.35).abs() < 1e-6, "{}", l.rear);
        assert!(l.front > 6033.15);
    }

    #[test]
    fn clamp_is_flagged() {
        let mut q = p();
        q.cg_height_m = 3.0;
        let l = axle_loads(&q, -11.0);
        assert!(l.clamped);
        assert_eq!(l.rear, 0.0);
        assert!((2.0 * (l.front + l.rear) - q.mass_kg * q.gravity_mps2).abs() < 1e-9);
    }

    #[test]
    fn slip_examples() {
        assert_eq!(slip_ratio(20.0, 20.0 / 0.327, 0.327), 0.0);
        assert!((slip_ratio(20.0f64, 10.0 / 0.327, 0.327) - 0.5).abs() < 1e-12);
        assert_eq!(slip_ratio(20.0, 0.0, 0.327), 1.0);
        assert_eq!(slip_ratio(0.05, 0.0, 0.327), 0.0);
        // driving branch
        assert!((signed_slip(10.0f64, 20.0 / 0.327, 0.327) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn free_rolling_is_equilibrium() {
        let s = VehicleState::rolling(&p(), 17.0);
        let d = vehicle_derivatives(&p(), &s, &WheelTorques::default(), &TyreParams::default(), [0.8, 0.8]).unwrap();
        assert_eq!(d.v_dot, 0.0);
        assert!(d.omega_dot.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn rear_only_peak_deceleration_matches_closed_form() {
        // Closed form from m·a = 2·mu·(m/2L)(g·a_cg - a·h):
        // a = mu·g·a_cg / (L + mu·h) = 0.8·9.81·1.16 / 3.24
        let q = p();
        let expected = 0.8 * 9.81 * 1.16 / (2.8 + 0.8 * 0.55);
        assert!((rear_only_peak_deceleration(&q, 0.8) - expected).abs() < 1e-12);

        // Same value from the derivative assembly with the rear wheels held at
        // the peak slip and the one-step load lag iterated to its fixed point.
        let tyre = TyreParams::default();
        let mut s = VehicleState::rolling(&q, 20.0);
        let mut a = 0.0;
        for _ in 0..200 {
            s.a_x_prev = a;
            let fzr = axle_loads(&q, a).rear;
            let peak = dense_peak_slip(&tyre, fzr);
            s.omega[RL] = 20.0 * (1.0 - peak) / q.wheel_radius_rear_m;
            s.omega[RR] = s.omega[RL];
            let d = vehicle_derivatives(&q, &s, &WheelTorques::default(), &tyre, [0.8, 0.8]).unwrap();
            a = d.v_dot;
        }
        assert!((-a - expected).abs() < 1e-6, "{a} vs {expected}");
    }

    fn dense_peak_slip(t: &TyreParams<f64>, fz: f64) -> f64 {
        (0..=20000)
            .map(|i| i as f64 * 1e-5)
            .max_by(|a, b| t.base_force(*a, fz).partial_cmp(&t.base_force(*b, fz)).unwrap())
            .unwrap()
    }

    #[test]
    fn huge_epb_torque_locks_rear_wheels() {
        let q = p();
        let tyre = TyreParams::default();
        let mut s = VehicleState::rolling(&q, 20.0);
        let tq = WheelTorques::rear_epb(5000.0, 5000.0);
        let dt = 1e-5;
        let mut t = 0.0;
        while s.omega[RL] > 0.0 && t < 0.5 {
            let d = vehicle_derivatives(&q, &s, &tq, &tyre, [0.8, 0.8]).unwrap();
            s.v_x += dt * d.v_dot;
            for w in 0..4 {
                s.omega[w] = (s.omega[w] + dt * d.omega_dot[w]).max(0.0);
            }
            s.a_x_prev = d.v_dot;
            t += dt;
        }
        assert!(t < 0.5, "wheel did not lock");
        assert_eq!(slip_ratio(s.v_x, s.omega[RL], q.wheel_radius_rear_m), 1.0);
    }

    #[test]
    fn locked_wheel_does_not_reverse() {
        let q = p();
        let mut s = VehicleState::rolling(&q, 5.0);
        s.omega[RL] = 0.0;
        let d = vehicle_derivatives(&q, &s, &WheelTorques::rear_epb(3000.0, 0.0), &TyreParams::default(), [0.8, 0.8])
            .unwrap();
        assert_eq!(d.omega_dot[RL], 0.0);
    }

    #[test]
    fn nan_torque_is_rejected() {
        let s = VehicleState::rolling(&p(), 10.0);
        let r =
            vehicle_derivatives(&p(), &s, &WheelTorques::rear_epb(f64::NAN, 0.0), &TyreParams::default(), [0.8, 0.8]);
        assert!(r.is_err());
    }
}
