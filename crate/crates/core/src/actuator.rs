//! Electromechanical parking-brake actuator.
//!
//! Chain: PWM-driven brushed DC motor, belt and two planetary stages lumped
//! into an equivalent inertia and damping, a self-locking screw/nut with
//! Coulomb thread friction, and a caliper spring-damper that produces the clamp
//! force. The brake torque is `mu_b · r · F_Q` with a single friction interface.
//!
//! The screw friction makes the load torque seen by the motor depend on the
//! direction of motion. At standstill the thread holds any motor torque inside
//! the band `[T_r(backward), T_r(forward)]`; the plant models this as an
//! explicit stick mode so that an unpowered actuator keeps its clamp force.

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorParams<T> {
    pub supply_voltage_v: T,
    pub resistance_ohm: T,
    pub inductance_h: T,
    /// Back-EMF constant, V·s/rad.
    pub emf_const_vs_per_rad: T,
    /// Torque constant, N·m/A (equal to the EMF constant in SI units).
    pub torque_const_nm_per_a: T,
    pub rotor_inertia_kgm2: T,
    pub damping_nms_per_rad: T,
}

impl<T: Real> Default for MotorParams<T> {
    fn default() -> Self {
        Self {
            supply_voltage_v: T::lit(12.0),
            resistance_ohm: T::lit(0.365),
            inductance_h: T::lit(0.00083),
            emf_const_vs_per_rad: T::lit(0.011),
            torque_const_nm_per_a: T::lit(0.011),
            rotor_inertia_kgm2: T::lit(4.21e-6),
            damping_nms_per_rad: T::lit(1e-5),
        }
    }
}

/// Belt stage (1→2), two planetary stages (3→5, 6→8) and the screw (8→9).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrivetrainParams<T> {
    pub i12: T,
    pub i35: T,
    pub i68: T,
    /// Speed ratio motor → first-stage planet.
    pub i14: T,
    /// Speed ratio motor → second-stage planet.
    pub i17: T,
    pub eta12: T,
    pub eta35: T,
    pub eta68: T,
    pub eta21: T,
    pub eta53: T,
    pub eta86: T,
    pub eta89: T,
    pub j1_kgm2: T,
    pub j2_kgm2: T,
    pub j3_kgm2: T,
    pub j4_kgm2: T,
    pub j5_kgm2: T,
    pub j6_kgm2: T,
    pub j7_kgm2: T,
    pub j8_kgm2: T,
    pub j9_kgm2: T,
    pub m4_kg: T,
    pub r5_m: T,
    pub m7_kg: T,
    pub r8_m: T,
    pub planets: T,
    pub c1_nms_per_rad: T,
    pub c2_nms_per_rad: T,
    pub c3_nms_per_rad: T,
    /// Load-independent friction torque at the motor shaft.
    pub no_load_torque_nm: T,
}

impl<T: Real> Default for DrivetrainParams<T> {
    fn default() -> Self {
        Self {
            i12: T::lit(3.0),
            i35: T::lit(5.0),
            i68: T::lit(5.0),
            i14: T::lit(9.0),
            i17: T::lit(45.0),
            eta12: T::lit(0.95),
            eta35: T::lit(0.9),
            eta68: T::lit(0.9),
            eta21: T::lit(0.9),
            eta53: T::lit(0.9),
            eta86: T::lit(0.9),
            eta89: T::lit(0.9),
            j1_kgm2: T::lit(5e-7),
            j2_kgm2: T::lit(2e-6),
            j3_kgm2: T::lit(2e-7),
            j4_kgm2: T::lit(5e-8),
            j5_kgm2: T::lit(2e-6),
            j6_kgm2: T::lit(2e-7),
            j7_kgm2: T::lit(5e-8),
            j8_kgm2: T::lit(5e-6),
            j9_kgm2: T::lit(2e-6),
            m4_kg: T::lit(0.005),
            r5_m: T::lit(0.008),
            m7_kg: T::lit(0.008),
            r8_m: T::lit(0.01),
            planets: T::lit(3.0),
            c1_nms_per_rad: T::lit(1e-6),
            c2_nms_per_rad: T::lit(1e-5),
            c3_nms_per_rad: T::lit(1e-4),
            no_load_torque_nm: T::lit(0.004),
        }
    }
}

impl<T: Real> DrivetrainParams<T> {
    pub fn i18(&self) -> T {
        self.i12 * self.i35 * self.i68
    }

    pub fn forward_efficiency(&self) -> T {
        self.eta12 * self.eta35 * self.eta68
    }

    pub fn backward_efficiency(&self) -> T {
        self.eta21 * self.eta53 * self.eta86
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScrewParams<T> {
    pub lead_m: T,
    pub mean_diameter_m: T,
    pub sliding_friction: T,
    pub max_static_friction_n: T,
}

impl<T: Real> Default for ScrewParams<T> {
    fn default() -> Self {
        Self {
            lead_m: T::lit(0.002),
            mean_diameter_m: T::lit(0.008),
            sliding_friction: T::lit(0.15),
            max_static_friction_n: T::lit(5000.0),
        }
    }
}

impl<T: Real> ScrewParams<T> {
    pub fn lead_angle(&self) -> T {
        (self.lead_m / (T::PI() * self.mean_diameter_m)).atan()
    }

    pub fn is_self_locking(&self) -> bool {
        self.sliding_friction > self.lead_angle().tan()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaliperParams<T> {
    pub stiffness_n_per_m: T,
    pub damping_ns_per_m: T,
    pub clearance_m: T,
    pub pad_friction: T,
    pub effective_radius_m: T,
    /// Nut travel at the mechanical hard stop.
    pub travel_limit_m: T,
}

impl<T: Real> Default for CaliperParams<T> {
    fn default() -> Self {
        Self {
            stiffness_n_per_m: T::lit(3e7),
            damping_ns_per_m: T::lit(1e4),
            clearance_m: T::lit(1e-4),
            pad_friction: T::lit(0.35),
            effective_radius_m: T::lit(0.2),
            travel_limit_m: T::lit(1.2e-3),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct ActuatorParams<T> {
    pub motor: MotorParams<T>,
    pub drivetrain: DrivetrainParams<T>,
    pub screw: ScrewParams<T>,
    pub caliper: CaliperParams<T>,
}

impl<T: Real> Default for ActuatorParams<T> {
    fn default() -> Self {
        Self {
            motor: MotorParams::default(),
            drivetrain: DrivetrainParams::default(),
            screw: ScrewParams::default(),
            caliper: CaliperParams::default(),
        }
    }
}

/// A quantity that differs between forward (apply) and backward (release)
/// rotation of the motor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch<T> {
    pub forward: T,
    pub backward: T,
}

impl<T: Copy> Branch<T> {
    pub fn select(&self, forward: bool) -> T {
        if forward {
            self.forward
        } else {
            self.backward
        }
    }
}

/// Equivalent inertia and damping of the gear train at the motor shaft.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reduction<T> {
    pub j_eq: Branch<T>,
    pub c_eq: Branch<T>,
}

/// Reflects the gear train to the motor shaft. Efficiencies divide the
/// reflected terms when the motor drives and multiply them when it is driven.
pub fn reduce_drivetrain<T: Real>(d: &DrivetrainParams<T>) -> Result<Reduction<T>> {
    let i15 = d.i12 * d.i35;
    let i16 = i15;
    let i18 = d.i18();
    let n = d.planets;

    let stage1 = (d.j2_kgm2 + d.j3_kgm2) / (d.i12 * d.i12)
        + n * d.m4_kg * d.r5_m * d.r5_m / (d.i12 * i15)
        + n * d.j4_kgm2 / (d.i12 * d.i14);
    let stage2 = (d.j5_kgm2 + d.j6_kgm2) / (d.i12 * d.i35 * i16)
        + n * d.j7_kgm2 / (d.i12 * d.i35 * d.i17)
        + n * d.m7_kg * d.r8_m * d.r8_m / (d.i12 * d.i35 * i18);
    let stage3 = (d.j8_kgm2 + d.j9_kgm2) / (d.i12 * d.i35 * d.i68 * i18);

    let j_fwd = d.j1_kgm2 + (stage1 + (stage2 + stage3 / d.eta68) / d.eta35) / d.eta12;
    let j_bwd = d.j1_kgm2 + d.eta21 * (stage1 + d.eta53 * (stage2 + d.eta86 * stage3));

    let c_fwd = d.c1_nms_per_rad
        + d.c2_nms_per_rad / (d.eta12 * d.i12 * d.i12)
        + d.c3_nms_per_rad / (d.forward_efficiency() * d.i12 * d.i35 * d.i68 * i18);
    let c_bwd = d.c1_nms_per_rad
        + d.eta21 * d.c2_nms_per_rad / (d.i12 * d.i12)
        + d.backward_efficiency() * d.c3_nms_per_rad / (d.i12 * d.i35 * d.i68 * i18);

    for (name, v) in [("J_eq forward", j_fwd), ("J_eq backward", j_bwd)] {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::Config(format!("{name} = {v} is not positive")));
        }
    }
    for (name, v) in [("c_eq forward", c_fwd), ("c_eq backward", c_bwd)] {
        if v < T::zero() || !v.is_finite() {
            return Err(Error::Config(format!("{name} = {v} is negative")));
        }
    }
    Ok(Reduction { j_eq: Branch { forward: j_fwd, backward: j_bwd }, c_eq: Branch { forward: c_fwd, backward: c_bwd } })
}

/// Forces on the thread for a horizontal drive force `drive` and axial load
/// `axial`: input torque, friction demand and Coulomb friction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreadForces<T> {
    pub screw_torque: T,
    pub friction_demand: T,
    pub coulomb: T,
}

pub fn thread_forces<T: Real>(s: &ScrewParams<T>, drive: T, axial: T) -> ThreadForces<T> {
    let g = s.lead_angle();
    ThreadForces {
        screw_torque: drive * s.mean_diameter_m / T::lit(2.0),
        friction_demand: drive * g.cos() - axial * g.sin(),
        coulomb: s.sliding_friction * (drive * g.sin() + axial * g.cos()),
    }
}

/// Thread friction force: sliding value while moving, the demanded force
/// while it stays below the static limit, the static limit otherwise.
pub fn thread_friction<T: Real>(s: &ScrewParams<T>, velocity: T, demand: T, coulomb: T) -> T {
    if velocity != T::zero() {
        coulomb
    } else if demand.abs() < s.max_static_friction_n {
        demand
    } else {
        s.max_static_friction_n * demand.signum()
    }
}

pub fn brake_torque<T: Real>(clamp_force: T, cal: &CaliperParams<T>) -> T {
    cal.pad_friction * cal.effective_radius_m * clamp_force.max(T::zero())
}

/// Constants derived once from [`ActuatorParams`] and shared by the plant,
/// the observer and the controllers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActuatorConstants<T> {
    pub i18: T,
    pub j_n: Branch<T>,
    pub c_n: Branch<T>,
    /// Motor-shaft load torque per newton of clamp force.
    pub load_per_clamp: Branch<T>,
    pub no_load_torque: T,
    /// Nut travel per radian of motor rotation.
    pub nut_per_rad: T,
    /// Brake torque per newton of clamp force.
    pub brake_per_clamp: T,
}

impl<T: Real> ActuatorConstants<T> {
    pub fn new(p: &ActuatorParams<T>) -> Result<Self> {
        validate(p)?;
        let red = reduce_drivetrain(&p.drivetrain)?;
        let d = &p.drivetrain;
        let s = &p.screw;
        let i18 = d.i18();
        let two_pi = T::TAU();
        let fric = T::PI() * s.mean_diameter_m * s.sliding_friction * s.lead_angle().cos();
        let fwd = (fric + s.lead_m) / (two_pi * i18 * d.forward_efficiency() * d.eta89);
        let bwd = d.backward_efficiency() * (s.lead_m - fric) / (two_pi * i18 * d.eta89);
        Ok(Self {
            i18,
            j_n: Branch {
                forward: p.motor.rotor_inertia_kgm2 + red.j_eq.forward,
                backward: p.motor.rotor_inertia_kgm2 + red.j_eq.backward,
            },
            c_n: Branch {
                forward: p.motor.damping_nms_per_rad + red.c_eq.forward,
                backward: p.motor.damping_nms_per_rad + red.c_eq.backward,
            },
            load_per_clamp: Branch { forward: fwd, backward: bwd },
            no_load_torque: d.no_load_torque_nm,
            nut_per_rad: s.lead_m / (two_pi * i18),
            brake_per_clamp: p.caliper.pad_friction * p.caliper.effective_radius_m,
        })
    }

    /// Load torque at the motor shaft while moving in the given direction.
    pub fn load_torque(&self, clamp_force: T, forward: bool) -> T {
        if forward {
            self.no_load_torque + self.load_per_clamp.forward * clamp_force
        } else {
            -self.no_load_torque + self.load_per_clamp.backward * clamp_force
        }
    }

    /// Brake torque implied by a motor-shaft load torque; the inverse of
    /// [`Self::load_torque`] composed with the pad friction.
    pub fn brake_from_load(&self, load_torque: T, forward: bool) -> T {
        let k = self.load_per_clamp.select(forward);
        let offset = if forward { self.no_load_torque } else { -self.no_load_torque };
        let clamp = (load_torque - offset) / k;
        self.brake_per_clamp * clamp.max(T::zero())
    }
}

fn validate<T: Real>(p: &ActuatorParams<T>) -> Result<()> {
    let z = T::zero();
    let one = T::one();
    let m = &p.motor;
    if [
        m.supply_voltage_v,
        m.resistance_ohm,
        m.inductance_h,
        m.emf_const_vs_per_rad,
        m.torque_const_nm_per_a,
        m.rotor_inertia_kgm2,
    ]
    .iter()
    .any(|&v| !(v > z))
        || m.damping_nms_per_rad < z
    {
        return Err(Error::Config("motor parameters must be positive".into()));
    }
    let d = &p.drivetrain;
    if [d.i12, d.i35, d.i68, d.i14, d.i17].iter().any(|&r| !(r > one)) {
        return Err(Error::Config("gear ratios must exceed 1".into()));
    }
    if [d.eta12, d.eta35, d.eta68, d.eta21, d.eta53, d.eta86, d.eta89].iter().any(|&e| !(e > z && e <= one)) {
        return Err(Error::Config("efficiencies must lie in (0, 1]".into()));
    }
    let s = &p.screw;
    if !(s.lead_m > z && s.mean_diameter_m > z && s.sliding_friction >= z) {
        return Err(Error::Config("screw geometry must be positive".into()));
    }
    let c = &p.caliper;
    if !(c.stiffness_n_per_m > z) || c.damping_ns_per_m < z || c.clearance_m < z || c.travel_limit_m <= c.clearance_m {
        return Err(Error::Config("caliper needs k_c > 0, b_c >= 0, 0 <= s_mc < travel limit".into()));
    }
    Ok(())
}

/// Motor electrical/mechanical state for [`motor_step`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MotorState<T> {
    pub theta: T,
    pub omega: T,
    pub current: T,
}

fn motor_rates<T: Real>(p: &MotorParams<T>, j_n: T, c_n: T, s: &MotorState<T>, duty: T, load: T) -> MotorState<T> {
    MotorState {
        theta: s.omega,
        omega: (p.torque_const_nm_per_a * s.current - c_n * s.omega - load) / j_n,
        current: (duty * p.supply_voltage_v - p.emf_const_vs_per_rad * s.omega - p.resistance_ohm * s.current)
            / p.inductance_h,
    }
}

fn axpy<T: Real>(s: &MotorState<T>, k: &MotorState<T>, h: T) -> MotorState<T> {
    MotorState { theta: s.theta + h * k.theta, omega: s.omega + h * k.omega, current: s.current + h * k.current }
}

fn rk4_combine<T: Real>(s: &MotorState<T>, k: [MotorState<T>; 4], dt: T) -> MotorState<T> {
    let two = T::lit(2.0);
    let sixth = dt / T::lit(6.0);
    MotorState {
        theta: s.theta + sixth * (k[0].theta + two * k[1].theta + two * k[2].theta + k[3].theta),
        omega: s.omega + sixth * (k[0].omega + two * k[1].omega + two * k[2].omega + k[3].omega),
        current: s.current + sixth * (k[0].current + two * k[1].current + two * k[2].current + k[3].current),
    }
}

/// One RK4 step of the reduced motor equations with a constant load torque.
pub fn motor_step<T: Real>(
    p: &MotorParams<T>,
    j_n: T,
    c_n: T,
    state: &MotorState<T>,
    duty: T,
    load: T,
    dt: T,
) -> Result<MotorState<T>> {
    let duty = duty.clamp_to(-T::one(), T::one());
    let half = dt / T::lit(2.0);
    let k1 = motor_rates(p, j_n, c_n, state, duty, load);
    let k2 = motor_rates(p, j_n, c_n, &axpy(state, &k1, half), duty, load);
    let k3 = motor_rates(p, j_n, c_n, &axpy(state, &k2, half), duty, load);
    let k4 = motor_rates(p, j_n, c_n, &axpy(state, &k3, dt), duty, load);
    let next = rk4_combine(state, [k1, k2, k3, k4], dt);
    if !(next.theta.is_finite() && next.omega.is_finite() && next.current.is_finite()) {
        return Err(Error::Numerical { t: f64::NAN, reason: "motor state became non-finite".into() });
    }
    Ok(next)
}

/// Nut kinematics and clamp force for a motor angle and speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScrewChain<T> {
    pub nut_position: T,
    pub nut_velocity: T,
    pub clamp_force: T,
    /// Load torque for forward and backward rotation.
    pub load_torque: Branch<T>,
}

pub fn screw_chain<T: Real>(k: &ActuatorConstants<T>, cal: &CaliperParams<T>, theta_m: T, omega_m: T) -> ScrewChain<T> {
    let s = theta_m * k.nut_per_rad;
    let v = omega_m * k.nut_per_rad;
    let clamp = if s > cal.clearance_m {
        (cal.stiffness_n_per_m * (s - cal.clearance_m) + cal.damping_ns_per_m * v).max(T::zero())
    } else {
        T::zero()
    };
    ScrewChain {
        nut_position: s,
        nut_velocity: v,
        clamp_force: clamp,
        load_torque: Branch { forward: k.load_torque(clamp, true), backward: k.load_torque(clamp, false) },
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionMode {
    /// Thread static friction holds the nut.
    #[default]
    Stick,
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActuatorState<T> {
    pub motor: MotorState<T>,
    pub mode: MotionMode,
}

/// Derived outputs of the actuator at a state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActuatorOutputs<T> {
    pub nut_position: T,
    pub clamp_force: T,
    pub brake_torque: T,
    /// Load torque actually transmitted to the motor shaft.
    pub load_torque: T,
}

/// Events raised while stepping the actuator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ActuatorEvents {
    pub hard_stop: bool,
    pub stuck: bool,
}

/// Parking-brake actuator plant for one wheel.
#[derive(Clone, Debug)]
pub struct EpbActuator<T> {
    pub params: ActuatorParams<T>,
    pub consts: ActuatorConstants<T>,
}

impl<T: Real> EpbActuator<T> {
    pub fn new(params: ActuatorParams<T>) -> Result<Self> {
        let consts = ActuatorConstants::new(&params)?;
        Ok(Self { params, consts })
    }

    fn drive_torque(&self, s: &MotorState<T>) -> T {
        self.params.motor.torque_const_nm_per_a * s.current
    }

    pub fn outputs(&self, s: &ActuatorState<T>) -> ActuatorOutputs<T> {
        let chain = screw_chain(&self.consts, &self.params.caliper, s.motor.theta, s.motor.omega);
        let load = match s.mode {
            MotionMode::Forward => chain.load_torque.forward,
            MotionMode::Backward => chain.load_torque.backward,
            MotionMode::Stick => {
                self.drive_torque(&s.motor).clamp_to(chain.load_torque.backward, chain.load_torque.forward)
            }
        };
        ActuatorOutputs {
            nut_position: chain.nut_position,
            clamp_force: chain.clamp_force,
            brake_torque: brake_torque(chain.clamp_force, &self.params.caliper),
            load_torque: load,
        }
    }

    /// Breakaway check at the start of a step: leaves stick mode when the
    /// motor torque exceeds the static band.
    pub fn pre_step(&self, s: &mut ActuatorState<T>) {
        if s.mode != MotionMode::Stick {
            return;
        }
        let chain = screw_chain(&self.consts, &self.params.caliper, s.motor.theta, T::zero());
        let drive = self.drive_torque(&s.motor);
        let at_limit = chain.nut_position >= self.params.caliper.travel_limit_m;
        let at_home = chain.nut_position <= T::zero();
        if drive > chain.load_torque.forward && !at_limit {
            s.mode = MotionMode::Forward;
        } else if drive < chain.load_torque.backward && !at_home {
            s.mode = MotionMode::Backward;
        }
    }

    /// State derivative with the motion mode held fixed.
    pub fn rates(&self, s: &ActuatorState<T>, duty: T) -> MotorState<T> {
        let m = &self.params.motor;
        let current_rate =
            (duty * m.supply_voltage_v - m.emf_const_vs_per_rad * s.motor.omega - m.resistance_ohm * s.motor.current)
                / m.inductance_h;
        match s.mode {
            MotionMode::Stick => MotorState { theta: T::zero(), omega: T::zero(), current: current_rate },
            MotionMode::Forward | MotionMode::Backward => {
                let fwd = s.mode == MotionMode::Forward;
                let chain = screw_chain(&self.consts, &self.params.caliper, s.motor.theta, s.motor.omega);
                let load = chain.load_torque.select(fwd);
                let j = self.consts.j_n.select(fwd);
                let c = self.consts.c_n.select(fwd);
                MotorState {
                    theta: s.motor.omega,
                    omega: (self.drive_torque(&s.motor) - c * s.motor.omega - load) / j,
                    current: current_rate,
                }
            }
        }
    }

    /// Mode transitions after a step: sticking on a speed reversal, hard stops
    /// at the travel limits.
    pub fn post_step(&self, s: &mut ActuatorState<T>) -> ActuatorEvents {
        let mut ev = ActuatorEvents::default();
        let reversed = match s.mode {
            MotionMode::Forward => s.motor.omega <= T::zero(),
            MotionMode::Backward => s.motor.omega >= T::zero(),
            MotionMode::Stick => false,
        };
        if reversed {
            s.motor.omega = T::zero();
            s.mode = MotionMode::Stick;
            ev.stuck = true;
        }
        let limit = self.params.caliper.travel_limit_m / self.consts.nut_per_rad;
        if s.motor.theta > limit || s.motor.theta < T::zero() {
            s.motor.theta = s.motor.theta.clamp_to(T::zero(), limit);
            s.motor.omega = T::zero();
            s.mode = MotionMode::Stick;
            ev.hard_stop = true;
        }
        ev
    }

    /// Standalone RK4 step, used when the actuator is simulated on its own.
    pub fn step(&self, s: &mut ActuatorState<T>, duty: T, dt: T) -> Result<ActuatorEvents> {
        let duty = duty.clamp_to(-T::one(), T::one());
        self.pre_step(s);
        let half = dt / T::lit(2.0);
        let at = |st: &ActuatorState<T>, k: &MotorState<T>, h: T| ActuatorState {
            motor: axpy(&st.motor, k, h),
            mode: st.mode,
        };
        let k1 = self.rates(s, duty);
        let k2 = self.rates(&at(s, &k1, half), duty);
        let k3 = self.rates(&at(s, &k2, half), duty);
        let k4 = self.rates(&at(s, &k3, dt), duty);
        s.motor = rk4_combine(&s.motor, [k1, k2, k3, k4], dt);
        if !(s.motor.theta.is_finite() && s.motor.omega.is_finite() && s.motor.current.is_finite()) {
            return Err(Error::Numerical { t: f64::NAN, reason: "actuator state became non-finite".into() });
        }
        Ok(self.post_step(s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ActuatorParams<f64> {
        ActuatorParams::default()
    }

    #[test]
    fn unit_efficiency_collapses_branches() {
        let mut d = DrivetrainParams::<f64>::default();
        for e in [&mut d.eta12, &mut d.eta35, &mut d.eta68, &mut d.eta21, &mut d.eta53, &mut d.eta86] {
            *e = 1.0;
        }
        let r = reduce_drivetrain(&d).unwrap();
        assert!((r.j_eq.forward - r.j_eq.backward).abs() < 1e-20);
        assert!((r.c_eq.forward - r.c_eq.backward).abs() < 1e-20);
    }

    #[test]
    fn default_reduction_term_by_term() {
        let d = DrivetrainParams::<f64>::default();
        // hand sum with i15 = i16 = 15, i18 = 75
        let s1 = 2.2e-6 / 9.0 + 3.0 * 0.005 * 0.008f64.powi(2) / (3.0 * 15.0) + 3.0 * 5e-8 / (3.0 * 9.0);
        let s2 = 2.2e-6 / (3.0 * 5.0 * 15.0)
            + 3.0 * 5e-8 / (3.0 * 5.0 * 45.0)
            + 3.0 * 0.008 * 0.01f64.powi(2) / (3.0 * 5.0 * 75.0);
        let s3 = 7e-6 / (3.0 * 5.0 * 5.0 * 75.0);
        let expected = 5e-7 + (s1 + (s2 + s3 / 0.9) / 0.9) / 0.95;
        let r = reduce_drivetrain(&d).unwrap();
        assert!((r.j_eq.forward - expected).abs() < 1e-18, "{} vs {expected}", r.j_eq.forward);
        assert!(r.j_eq.forward >= r.j_eq.backward);
        assert!(r.c_eq.forward >= r.c_eq.backward);
    }

    #[test]
    fn large_ratios_leave_first_inertia() {
        let mut d = DrivetrainParams::<f64>::default();
        for r in [&mut d.i12, &mut d.i35, &mut d.i68, &mut d.i14, &mut d.i17] {
            *r = 1e6;
        }
        let r = reduce_drivetrain(&d).unwrap();
        assert!((r.j_eq.forward - d.j1_kgm2).abs() / d.j1_kgm2 < 1e-9);
    }

    #[test]
    fn motor_equilibrium_at_rest() {
        let m = MotorParams::<f64>::default();
        let s = MotorState::default();
        let n = motor_step(&m, 5e-6, 1e-5, &s, 0.0, 0.0, 1e-4).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn locked_rotor_current() {
        let m = MotorParams::<f64>::default();
        let mut s = MotorState::default();
        for _ in 0..20000 {
            // a rotor inertia this large stands in for a locked shaft
            s = motor_step(&m, 1e12, 1e-5, &s, 1.0, 0.0, 1e-5).unwrap();
        }
        assert!((s.current - 12.0 / 0.365).abs() < 1e-6, "{}", s.current);
    }

    #[test]
    fn no_load_speed() {
        let m = MotorParams::<f64>::default();
        let (j, c) = (5e-6, 1.2e-5);
        let mut s = MotorState::default();
        for _ in 0..100_000 {
            s = motor_step(&m, j, c, &s, 1.0, 0.0, 1e-5).unwrap();
        }
        let expected = 12.0 * 0.011 / (0.011 * 0.011 + c * 0.365);
        assert!((s.omega - expected).abs() / expected < 1e-6, "{} vs {expected}", s.omega);
        assert!(s.current.abs() <= 12.0 / 0.365);
    }

    #[test]
    fn clamp_force_examples() {
        let p = params();
        let k = ActuatorConstants::new(&p).unwrap();
        // inside clearance: no clamp, only the no-load friction
        let c = screw_chain(&k, &p.caliper, 0.5e-4 / k.nut_per_rad, 0.0);
        assert_eq!(c.clamp_force, 0.0);
        assert_eq!(c.load_torque.forward, p.drivetrain.no_load_torque_nm);
        // 0.1 mm past contact, at rest: 3e7 · 1e-4
        let c = screw_chain(&k, &p.caliper, (p.caliper.clearance_m + 1e-4) / k.nut_per_rad, 0.0);
        assert!((c.clamp_force - 3000.0).abs() < 1e-6, "{}", c.clamp_force);
    }

    #[test]
    fn static_thread_friction_matches_demand() {
        let s = ScrewParams::<f64>::default();
        assert_eq!(thread_friction(&s, 0.0, 120.0, 900.0), 120.0);
        assert_eq!(thread_friction(&s, 0.0, -9000.0, 900.0), -5000.0);
        assert_eq!(thread_friction(&s, 1e-3, 120.0, 900.0), 900.0);
        let f = thread_forces(&s, 100.0, 0.0);
        assert!((f.screw_torque - 0.4).abs() < 1e-12);
    }

    #[test]
    fn brake_torque_examples() {
        let cal = CaliperParams::<f64>::default();
        assert_eq!(brake_torque(0.0, &cal), 0.0);
        assert!((brake_torque(10_000.0, &cal) - 700.0).abs() < 1e-9);
        assert!((brake_torque(21_000.0, &cal) - 1470.0).abs() < 1e-9);
    }

    #[test]
    fn stall_clamp_force_from_closed_form() {
        // stall torque k_t·V/R balances T0 + K_fwd·F_Q
        let p = params();
        let k = ActuatorConstants::new(&p).unwrap();
        let stall = 0.011 * 12.0 / 0.365;
        let f = (stall - 0.004) / k.load_per_clamp.forward;
        assert!((f - 20_270.7).abs() < 1.0, "{f}");
        assert!(brake_torque(f, &p.caliper) > 1400.0);
    }

    #[test]
    fn forward_load_exceeds_backward_magnitude() {
        let k = ActuatorConstants::new(&params()).unwrap();
        for f in [100.0, 5000.0, 20000.0] {
            assert!(k.load_torque(f, true) > k.load_torque(f, false).abs());
        }
        assert!(params().screw.is_self_locking());
        assert!(k.load_per_clamp.backward < 0.0);
    }

    #[test]
    fn reconstruction_inverts_plant_load() {
        let k = ActuatorConstants::new(&params()).unwrap();
        let cal = CaliperParams::<f64>::default();
        for f in [0.0, 1.0, 2500.0, 19000.0] {
            for fwd in [true, false] {
                let t = k.brake_from_load(k.load_torque(f, fwd), fwd);
                assert!((t - brake_torque(f, &cal)).abs() <= 1e-9 * (1.0 + t), "{t}");
            }
        }
    }

    fn apply(act: &EpbActuator<f64>, s: &mut ActuatorState<f64>, duty: f64, secs: f64) {
        let dt = 5e-5;
        for _ in 0..(secs / dt).round() as usize {
            act.step(s, duty, dt).unwrap();
        }
    }

    #[test]
    fn self_locking_holds_clamp() {
        let act = EpbActuator::new(params()).unwrap();
        let mut s = ActuatorState::default();
        apply(&act, &mut s, 0.6, 0.15);
        let f0 = act.outputs(&s).clamp_force;
        assert!(f0 > 5000.0, "{f0}");
        apply(&act, &mut s, 0.0, 0.5);
        assert_eq!(s.motor.omega, 0.0);
        assert_eq!(s.mode, MotionMode::Stick);
        let f1 = act.outputs(&s).clamp_force;
        assert!((f1 - f0).abs() / f0 < 0.05, "{f0} -> {f1}");
        apply(&act, &mut s, 0.0, 1.0);
        assert_eq!(act.outputs(&s).clamp_force, f1);
    }

    #[test]
    fn reverse_duty_releases() {
        let act = EpbActuator::new(params()).unwrap();
        let mut s = ActuatorState::default();
        apply(&act, &mut s, 1.0, 0.2);
        assert!(act.outputs(&s).clamp_force > 10_000.0);
        apply(&act, &mut s, -1.0, 0.2);
        assert_eq!(act.outputs(&s).clamp_force, 0.0);
    }

    #[test]
    fn apply_stroke_energy_balance() {
        let p = params();
        let act = EpbActuator::new(p).unwrap();
        let mut s = ActuatorState::default();
        let dt = 5e-6;
        let (mut e_in, mut e_cu) = (0.0, 0.0);
        for _ in 0..(0.2 / dt) as usize {
            let i0 = s.motor.current;
            act.step(&mut s, 1.0, dt).unwrap();
            let i = 0.5 * (i0 + s.motor.current);
            e_in += 12.0 * i * dt;
            e_cu += 0.365 * i * i * dt;
        }
        let out = act.outputs(&s);
        let pen = out.nut_position - p.caliper.clearance_m;
        let e_clamp = 0.5 * p.caliper.stiffness_n_per_m * pen * pen;
        let e_store =
            0.5 * p.motor.inductance_h * s.motor.current.powi(2) + 0.5 * act.consts.j_n.forward * s.motor.omega.powi(2);
        assert!(e_clamp > 0.0 && e_cu > 0.0);
        assert!(e_in >= e_clamp + e_cu + e_store, "{e_in} < {e_clamp} + {e_cu} + {e_store}");
    }

    #[test]
    fn hard_stop_is_reported() {
        let mut p = params();
        p.caliper.stiffness_n_per_m = 1e5;
        let act = EpbActuator::new(p).unwrap();
        let mut s = ActuatorState::default();
        let mut hit = false;
        for _ in 0..20000 {
            hit |= act.step(&mut s, 1.0, 5e-5).unwrap().hard_stop;
        }
        assert!(hit);
        assert!(act.outputs(&s).nut_position <= p.caliper.travel_limit_m + 1e-15);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = params();
        p.drivetrain.eta89 = 1.2;
        assert!(ActuatorConstants::new(&p).is_err());
        let mut p = params();
        p.drivetrain.i12 = 0.5;
        assert!(EpbActuator::new(p).is_err());
    }
}
