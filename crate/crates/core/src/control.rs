//! Cascaded sliding-mode ABS control with a PID baseline.
//!
//! Upper loop: slip error → desired brake torque per rear wheel. The control
//! law is the equivalent control of the rear slip dynamics
//!
//! ```text
//! λ̇ = (R/(J·v))·(T − R·F_xr) − (1 − λ)·ΣF/(m·v)
//! ```
//!
//! (forces as braking magnitudes) solved for `T` with `λ̇` replaced by the
//! reaching law target `λ̇_d − c·e − ε1·s − ε2·sat(s/φ)`.
//!
//! Lower loop: torque error → PWM duty, inverting the quasi-static relation
//! between duty, motor speed and brake torque with the direction-dependent
//! gain of the screw.

use serde::{Deserialize, Serialize};

use crate::actuator::{ActuatorConstants, ActuatorParams};
use crate::observer::saturation;
use crate::{Error, Real, Result};

/// Below this speed the slip controller hands over to a full apply.
pub const ABS_QUIT_SPEED: f64 = 1.0;
/// Below this speed the run ends.
pub const STOP_SPEED: f64 = 0.1;
/// Default upper bound of the torque command per rear wheel, N·m.
pub const DEFAULT_T_MAX: f64 = 1300.0;

/// First-order filtered finite difference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilteredDerivative<T> {
    pub tau: T,
    prev: Option<T>,
    value: T,
}

impl<T: Real> FilteredDerivative<T> {
    pub fn new(tau: T) -> Self {
        Self { tau, prev: None, value: T::zero() }
    }

    pub fn update(&mut self, x: T, dt: T) -> T {
        if let Some(p) = self.prev {
            let raw = (x - p) / dt;
            self.value = self.value + dt / (self.tau + dt) * (raw - self.value);
        }
        self.prev = Some(x);
        self.value
    }

    pub fn value(&self) -> T {
        self.value
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupervisorMode {
    Active,
    /// Slip control off, full apply.
    Quit,
    Stop,
}

pub fn supervisor<T: Real>(v_x: T) -> SupervisorMode {
    if v_x < T::lit(STOP_SPEED) {
        SupervisorMode::Stop
    } else if v_x < T::lit(ABS_QUIT_SPEED) {
        SupervisorMode::Quit
    } else {
        SupervisorMode::Active
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpperGains<T> {
    pub c_slip: T,
    pub eps1: T,
    pub eps2: T,
    pub phi_s: T,
    pub t_max_nm: T,
    /// Filter time constant of the target slip derivative, s.
    pub deriv_tau_s: T,
}

impl<T: Real> Default for UpperGains<T> {
    fn default() -> Self {
        Self {
            c_slip: T::lit(5.0),
            eps1: T::lit(5.0),
            eps2: T::lit(3.0),
            phi_s: T::lit(0.15),
            t_max_nm: T::lit(DEFAULT_T_MAX),
            deriv_tau_s: T::lit(0.01),
        }
    }
}

impl<T: Real> UpperGains<T> {
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if !(self.c_slip > z)
            || self.eps1 < z
            || self.eps2 < z
            || !(self.phi_s > z)
            || !(self.t_max_nm > z)
            || self.deriv_tau_s < z
        {
            return Err(Error::Config("upper gains need c > 0, eps >= 0, phi > 0, T_max > 0".into()));
        }
        Ok(())
    }
}

/// Plant quantities the upper law needs; forces are braking magnitudes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpperInputs<T> {
    pub slip: T,
    pub slip_target: T,
    pub slip_target_rate: T,
    pub v_x: T,
    /// Tyre force of one rear wheel.
    pub f_xr: T,
    /// Sum of all four tyre forces.
    pub f_total: T,
    pub wheel_inertia: T,
    pub wheel_radius: T,
    pub mass: T,
}

/// Unclamped torque of the upper law for sliding variable `s`.
pub fn upper_smc_law<T: Real>(inp: &UpperInputs<T>, s: T, g: &UpperGains<T>) -> T {
    let e = inp.slip - inp.slip_target;
    let reach = inp.slip_target_rate - g.c_slip * e - g.eps1 * s - g.eps2 * saturation(s, g.phi_s);
    let (j, r) = (inp.wheel_inertia, inp.wheel_radius);
    (j / r) * (r * r * inp.f_xr / j + (T::one() - inp.slip) * inp.f_total / inp.mass + inp.v_x * reach)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpperOutput<T> {
    pub torque: T,
    pub raw: T,
    pub s: T,
    pub clamped: bool,
}

#[derive(Clone, Debug)]
pub struct UpperSmc<T> {
    pub gains: UpperGains<T>,
    integral: T,
}

impl<T: Real> UpperSmc<T> {
    pub fn new(gains: UpperGains<T>) -> Result<Self> {
        gains.validate()?;
        Ok(Self { gains, integral: T::zero() })
    }

    pub fn integral(&self) -> T {
        self.integral
    }

    /// `hold_integral` freezes the surface integral, used while the torque
    /// loop downstream is saturated.
    pub fn step(&mut self, inp: &UpperInputs<T>, dt: T, hold_integral: bool) -> UpperOutput<T> {
        let e = inp.slip - inp.slip_target;
        let candidate = self.integral + e * dt;
        let s = e + self.gains.c_slip * candidate;
        let raw = upper_smc_law(inp, s, &self.gains);
        let torque = raw.clamp_to(T::zero(), self.gains.t_max_nm);
        let clamped = torque != raw;
        // conditional integration: keep integrating only when it moves the
        // command back inside its range
        let winds_up = (raw > self.gains.t_max_nm && e < T::zero()) || (raw < T::zero() && e > T::zero());
        if !hold_integral && !winds_up {
            self.integral = candidate;
        }
        UpperOutput { torque, raw, s: e + self.gains.c_slip * self.integral, clamped }
    }

    pub fn reset(&mut self) {
        self.integral = T::zero();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowerGains<T> {
    pub c_torque: T,
    pub eps3: T,
    pub eps4: T,
    pub phi_t: T,
    /// Filter time constant for the error and motor-speed derivatives, s.
    pub deriv_tau_s: T,
    /// Weight of the back-EMF and damping compensation `Q2·ω`.
    pub speed_comp: T,
    /// Weight of the inertia compensation `J_n·ω̇`.
    pub inertia_comp: T,
    /// Hold band as a fraction of the demanded torque. The loop parks with
    /// zero duty once the error falls within half the band, letting the
    /// self-locking screw keep the clamp, and resumes when it leaves the band.
    pub hold_band: T,
    /// Lower bound on the hold band, N·m.
    pub hold_floor_nm: T,
}

impl<T: Real> Default for LowerGains<T> {
    fn default() -> Self {
        Self {
            c_torque: T::lit(0.15),
            eps3: T::lit(70.0),
            eps4: T::lit(5.0),
            phi_t: T::lit(5.0),
            deriv_tau_s: T::lit(0.005),
            speed_comp: T::zero(),
            inertia_comp: T::zero(),
            hold_band: T::lit(0.04),
            hold_floor_nm: T::lit(8.0),
        }
    }
}

impl<T: Real> LowerGains<T> {
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if self.c_torque < z
            || self.eps3 < z
            || self.eps4 < z
            || !(self.phi_t > z)
            || self.deriv_tau_s < z
            || self.speed_comp < z
            || self.inertia_comp < z
            || self.hold_band < z
            || self.hold_floor_nm < z
        {
            return Err(Error::Config("lower gains need c >= 0, eps >= 0, phi > 0".into()));
        }
        Ok(())
    }
}

/// Actuator constants of the lower law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerConstants<T> {
    /// `k_t·V/R`, N·m per unit duty.
    pub q1: T,
    /// `(k_t·k_e + c_n·R)/R` per direction, N·m·s/rad.
    pub q2_fwd: T,
    pub q2_bwd: T,
    pub q3: T,
    pub eta_n: T,
    /// Brake torque per motor-shaft torque while applying.
    pub gain_fwd: T,
    /// Brake torque per motor-shaft torque while releasing (negative).
    pub gain_bwd: T,
    pub j_n_fwd: T,
    pub j_n_bwd: T,
}

impl<T: Real> LowerConstants<T> {
    pub fn new(p: &ActuatorParams<T>) -> Result<Self> {
        let k = ActuatorConstants::new(p)?;
        let m = &p.motor;
        let d = &p.drivetrain;
        let s = &p.screw;
        let gamma = s.lead_angle();
        let q3 = T::TAU() * p.caliper.pad_friction * p.caliper.effective_radius_m
            / (T::PI() * s.mean_diameter_m * s.sliding_friction * gamma.cos() + s.lead_m);
        let eta_n = d.backward_efficiency();
        let i18 = d.i18();
        let us_sin = s.sliding_friction * gamma.sin();
        let gain_fwd = q3 * (i18 * d.eta89 * eta_n - us_sin);
        let gain_bwd = q3 / eta_n * (us_sin * eta_n - i18 * d.eta89);
        let tiny = T::lit(1e-9);
        if gain_fwd.abs() < tiny || gain_bwd.abs() < tiny {
            return Err(Error::Config("lower controller gain denominator vanishes".into()));
        }
        let q2 =
            |c_n: T| (m.torque_const_nm_per_a * m.emf_const_vs_per_rad + c_n * m.resistance_ohm) / m.resistance_ohm;
        Ok(Self {
            q1: m.torque_const_nm_per_a * m.supply_voltage_v / m.resistance_ohm,
            q2_fwd: q2(k.c_n.forward),
            q2_bwd: q2(k.c_n.backward),
            q3,
            eta_n,
            gain_fwd,
            gain_bwd,
            j_n_fwd: k.j_n.forward,
            j_n_bwd: k.j_n.backward,
        })
    }
}

/// Duty that makes the quasi-static brake torque equal `target` at motor
/// speed `omega` and acceleration `omega_dot`.
/// Motor speed over which the branch weight moves from the requested
/// direction to the direction of motion, rad/s.
pub const BRANCH_SPEED_RAD_S: f64 = 50.0;

/// Direction weight in `[−1, 1]`: the sign of the motor speed when turning,
/// the direction requested by the feedback when standing still, with a linear
/// blend in between.
pub fn branch_weight<T: Real>(omega: T, request: T) -> T {
    (omega / T::lit(BRANCH_SPEED_RAD_S) + request).clamp_to(-T::one(), T::one())
}

/// Duty for a desired brake torque plus a feedback term in brake-torque
/// units. The feedforward goes through the apply or release map according to
/// the branch weight `w`; the feedback always goes through the apply gain so
/// its sign is kept when releasing.
pub fn lower_smc_law<T: Real>(
    t_desired: T,
    feedback: T,
    w: T,
    omega: T,
    omega_dot: T,
    g: &LowerGains<T>,
    c: &LowerConstants<T>,
) -> T {
    let (feedforward, q2, j) = if w >= T::zero() {
        (w * t_desired / c.gain_fwd, c.q2_fwd, c.j_n_fwd)
    } else {
        (-w * t_desired / c.gain_bwd, c.q2_bwd, c.j_n_bwd)
    };
    let motor_torque = feedforward + feedback / c.gain_fwd;
    (motor_torque + g.speed_comp * q2 * omega + g.inertia_comp * j * omega_dot) / c.q1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerOutput<T> {
    pub duty: T,
    pub raw: T,
    pub s: T,
    pub saturated: bool,
    /// Inside the hold band.
    pub holding: bool,
}

#[derive(Clone, Debug)]
pub struct LowerSmc<T> {
    pub gains: LowerGains<T>,
    pub consts: LowerConstants<T>,
    integral: T,
    holding: bool,
    err_rate: FilteredDerivative<T>,
    omega_rate: FilteredDerivative<T>,
}

impl<T: Real> LowerSmc<T> {
    pub fn new(gains: LowerGains<T>, params: &ActuatorParams<T>) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            consts: LowerConstants::new(params)?,
            integral: T::zero(),
            holding: false,
            err_rate: FilteredDerivative::new(gains.deriv_tau_s),
            omega_rate: FilteredDerivative::new(gains.deriv_tau_s),
            gains,
        })
    }

    pub fn step(&mut self, t_hat: T, t_desired: T, omega: T, dt: T) -> LowerOutput<T> {
        let g = self.gains;
        let e = t_hat - t_desired;
        let e_dot = self.err_rate.update(e, dt);
        let omega_dot = self.omega_rate.update(omega, dt);
        let band = (g.hold_band * t_desired.abs()).max(g.hold_floor_nm);
        if self.holding {
            self.holding = e.abs() <= band;
        } else {
            self.holding = e.abs() <= T::lit(0.5) * band;
        }
        if self.holding {
            return LowerOutput {
                duty: T::zero(),
                raw: T::zero(),
                s: g.c_torque * e + self.integral,
                saturated: false,
                holding: true,
            };
        }
        let candidate = self.integral + e * dt;
        let s = g.c_torque * e + candidate;
        let sat = saturation(s, g.phi_t);
        let feedback = -g.c_torque * e_dot - g.eps3 * s - g.eps4 * sat;
        let w = branch_weight(omega, -sat);
        let raw = lower_smc_law(t_desired, feedback, w, omega, omega_dot, &g, &self.consts);
        let duty = raw.clamp_to(-T::one(), T::one());
        let saturated = duty != raw;
        if !saturated {
            self.integral = candidate;
        }
        LowerOutput { duty, raw, s: g.c_torque * e + self.integral, saturated, holding: false }
    }

    pub fn reset(&mut self) {
        self.integral = T::zero();
        self.holding = false;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains<T> {
    /// N·m per unit slip.
    pub kp: T,
    pub ki: T,
    pub kd: T,
    pub deriv_tau_s: T,
    pub t_max_nm: T,
}

impl<T: Real> Default for PidGains<T> {
    fn default() -> Self {
        Self {
            kp: T::lit(3000.0),
            ki: T::lit(8000.0),
            kd: T::lit(30.0),
            deriv_tau_s: T::lit(0.01),
            t_max_nm: T::lit(DEFAULT_T_MAX),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PidBaseline<T> {
    pub gains: PidGains<T>,
    integral: T,
    rate: FilteredDerivative<T>,
}

impl<T: Real> PidBaseline<T> {
    pub fn new(gains: PidGains<T>) -> Result<Self> {
        if [gains.kp, gains.ki, gains.kd].iter().any(|g| !g.is_finite() || *g < T::zero())
            || !(gains.t_max_nm > T::zero())
        {
            return Err(Error::Config("PID gains must be finite and non-negative".into()));
        }
        Ok(Self { rate: FilteredDerivative::new(gains.deriv_tau_s), integral: T::zero(), gains })
    }

    /// Torque command and whether it was clamped.
    pub fn step(&mut self, slip: T, slip_target: T, dt: T) -> (T, bool) {
        let g = self.gains;
        let e = slip_target - slip;
        let d = self.rate.update(e, dt);
        let candidate = self.integral + e * dt;
        let raw = g.kp * e + g.ki * candidate + g.kd * d;
        let out = raw.clamp_to(T::zero(), g.t_max_nm);
        let winds_up = (raw > g.t_max_nm && e > T::zero()) || (raw < T::zero() && e < T::zero());
        if !winds_up {
            self.integral = candidate;
        }
        (out, out != raw)
    }

    pub fn reset(&mut self) {
        self.integral = T::zero();
    }
}
