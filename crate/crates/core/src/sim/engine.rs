//! Fixed-step co-simulation of the plant and the control stack.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::metrics::{compute_metrics, MetricsContext, RunMetrics};
use super::scenario::{road_mu, ControllerKind, ScenarioSpec};
use super::trace::{flags, TraceRecord};
use crate::actuator::{ActuatorState, EpbActuator, MotorState};
use crate::control::{supervisor, FilteredDerivative, LowerSmc, PidBaseline, SupervisorMode, UpperInputs, UpperSmc};
use crate::estimator::FrictionEstimator;
use crate::observer::LoadTorqueObserver;
use crate::tyre::{build_lookup, LookupGrids, TyreCurve, TyreModel};
use crate::vehicle::{axle_loads, slip_ratio, vehicle_derivatives, VehicleState, WheelTorques, FL, RL, RR, V_EPS};
use crate::{Error, Real, Result};

/// Motor speed beyond which the run is treated as diverged, rad/s.
const OMEGA_M_LIMIT: f64 = 1e5;
/// Wheel counted as locked below this fraction of the body speed.
const LOCK_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantState<T> {
    pub vehicle: VehicleState<T>,
    /// Left and right rear actuators.
    pub actuators: [ActuatorState<T>; 2],
}

#[derive(Clone, Copy, Debug)]
struct PlantRates<T> {
    v: T,
    x: T,
    omega: [T; 4],
    act: [MotorState<T>; 2],
    accel: T,
    load_residual: T,
    load_clamped: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub trace: Vec<TraceRecord<T>>,
    pub metrics: RunMetrics,
}

/// A run stopped by a numerical failure, with the trace up to that point.
#[derive(Debug)]
pub struct RunAbort<T> {
    pub error: Error,
    pub trace: Vec<TraceRecord<T>>,
}

pub struct Simulator<T> {
    spec: ScenarioSpec<T>,
    curve: TyreCurve<T>,
    actuator: EpbActuator<T>,
}

impl<T: Real> Simulator<T> {
    pub fn new(spec: ScenarioSpec<T>) -> Result<Self> {
        spec.validate()?;
        let curve = build_lookup(&spec.tyre, LookupGrids::default())?;
        let actuator = EpbActuator::new(spec.actuator)?;
        Ok(Self { spec, curve, actuator })
    }

    pub fn spec(&self) -> &ScenarioSpec<T> {
        &self.spec
    }

    pub fn curve(&self) -> &TyreCurve<T> {
        &self.curve
    }

    fn rates(&self, s: &PlantState<T>, duty: [T; 2], mu: T) -> Result<PlantRates<T>> {
        let p = &self.spec.vehicle;
        let mut brake = [T::zero(); 2];
        for (b, a) in brake.iter_mut().zip(&s.actuators) {
            *b = self.actuator.outputs(a).brake_torque;
        }
        let torques = WheelTorques::rear_epb(brake[0], brake[1]);
        let d = vehicle_derivatives(p, &s.vehicle, &torques, &self.spec.tyre, [mu, mu])?;
        let weight = p.mass_kg * p.gravity_mps2;
        let residual = (T::lit(2.0) * (d.loads.front + d.loads.rear) - weight).abs() / weight;
        Ok(PlantRates {
            v: d.v_dot,
            x: d.x_dot,
            omega: d.omega_dot,
            act: [self.actuator.rates(&s.actuators[0], duty[0]), self.actuator.rates(&s.actuators[1], duty[1])],
            accel: d.v_dot,
            load_residual: residual,
            load_clamped: d.loads.clamped,
        })
    }

    fn advance(s: &PlantState<T>, k: &PlantRates<T>, h: T) -> PlantState<T> {
        let mut n = *s;
        n.vehicle.v_x = s.vehicle.v_x + h * k.v;
        n.vehicle.x = s.vehicle.x + h * k.x;
        for w in 0..4 {
            n.vehicle.omega[w] = s.vehicle.omega[w] + h * k.omega[w];
        }
        for a in 0..2 {
            let m = &s.actuators[a].motor;
            let r = &k.act[a];
            n.actuators[a].motor = MotorState {
                theta: m.theta + h * r.theta,
                omega: m.omega + h * r.omega,
                current: m.current + h * r.current,
            };
        }
        n
    }

    /// One classical RK4 step of the joint plant. Returns the step's events and
    /// the load residual at its start.
    fn plant_step(&self, s: &mut PlantState<T>, duty: [T; 2], mu: T, dt: T) -> Result<(u32, T)> {
        for a in &mut s.actuators {
            self.actuator.pre_step(a);
        }
        let half = dt / T::lit(2.0);
        let k1 = self.rates(s, duty, mu)?;
        let k2 = self.rates(&Self::advance(s, &k1, half), duty, mu)?;
        let k3 = self.rates(&Self::advance(s, &k2, half), duty, mu)?;
        let k4 = self.rates(&Self::advance(s, &k3, dt), duty, mu)?;
        let two = T::lit(2.0);
        let avg = |a: T, b: T, c: T, d: T| (a + two * b + two * c + d) / T::lit(6.0);
        let mut combined = k1;
        combined.v = avg(k1.v, k2.v, k3.v, k4.v);
        combined.x = avg(k1.x, k2.x, k3.x, k4.x);
        for w in 0..4 {
            combined.omega[w] = avg(k1.omega[w], k2.omega[w], k3.omega[w], k4.omega[w]);
        }
        for a in 0..2 {
            let (r1, r2, r3, r4) = (k1.act[a], k2.act[a], k3.act[a], k4.act[a]);
            combined.act[a] = MotorState {
                theta: avg(r1.theta, r2.theta, r3.theta, r4.theta),
                omega: avg(r1.omega, r2.omega, r3.omega, r4.omega),
                current: avg(r1.current, r2.current, r3.current, r4.current),
            };
        }
        let mut next = Self::advance(s, &combined, dt);
        next.vehicle.v_x = next.vehicle.v_x.max(T::zero());
        for o in &mut next.vehicle.omega {
            *o = o.max(T::zero());
        }
        next.vehicle.a_x_prev = k1.accel;
        let mut ev = 0;
        if k1.load_clamped {
            ev |= flags::LOAD_CLAMPED;
        }
        for a in &mut next.actuators {
            if self.actuator.post_step(a).hard_stop {
                ev |= flags::HARD_STOP;
            }
        }
        *s = next;
        Ok((ev, k1.load_residual))
    }

    fn check_finite(s: &PlantState<T>) -> std::result::Result<(), String> {
        let v = &s.vehicle;
        if !(v.v_x.is_finite() && v.x.is_finite() && v.omega.iter().all(|o| o.is_finite())) {
            return Err("vehicle state became non-finite".into());
        }
        for a in &s.actuators {
            let m = &a.motor;
            if !(m.theta.is_finite() && m.omega.is_finite() && m.current.is_finite()) {
                return Err("actuator state became non-finite".into());
            }
            if m.omega.abs() > T::lit(OMEGA_M_LIMIT) {
                return Err(format!("motor speed {} rad/s diverged", m.omega));
            }
        }
        Ok(())
    }

    pub fn run(&self) -> std::result::Result<RunOutput<T>, Box<RunAbort<T>>> {
        let mut trace = Vec::new();
        match self.run_into(&mut trace) {
            Ok((residual, steps)) => {
                let spec = &self.spec;
                let ctx = MetricsContext {
                    t_ctrl_s: spec.t_ctrl_s.to_f64_lossy(),
                    phi_s: spec.upper.phi_s.to_f64_lossy(),
                    phi_t: spec.lower.phi_t.to_f64_lossy(),
                    upper_is_smc: spec.controller == ControllerKind::Smc,
                };
                let mut metrics = compute_metrics(&trace, &spec.switch_times(), &ctx);
                metrics.scenario = spec.name.clone();
                metrics.controller = spec.controller.to_string();
                metrics.load_residual_max = residual;
                metrics.plant_steps = steps;
                metrics.stopped = trace.last().map(|r| r.v_x < T::lit(crate::control::STOP_SPEED)).unwrap_or(true);
                Ok(RunOutput { trace, metrics })
            }
            Err(error) => Err(Box::new(RunAbort { error, trace })),
        }
    }

    fn run_into(&self, trace: &mut Vec<TraceRecord<T>>) -> Result<(f64, u64)> {
        let spec = &self.spec;
        let vp = &spec.vehicle;
        let dt_ctrl = spec.t_ctrl_s;
        let dt = spec.dt_plant_s;
        let substeps = spec.substeps();
        let r_r = vp.wheel_radius_rear_m;
        let r_f = vp.wheel_radius_front_m;

        let mut plant =
            PlantState { vehicle: VehicleState::rolling(vp, spec.v0_mps), actuators: [ActuatorState::default(); 2] };
        let mut estimator = FrictionEstimator::new(spec.estimator)?;
        let mut upper = UpperSmc::new(spec.upper)?;
        let mut pid = PidBaseline::new(spec.pid)?;
        let mut target_rate = FilteredDerivative::new(spec.upper.deriv_tau_s);
        let mut observers = [
            LoadTorqueObserver::new(spec.observer, &spec.actuator)?,
            LoadTorqueObserver::new(spec.observer, &spec.actuator)?,
        ];
        let mut lowers = [LowerSmc::new(spec.lower, &spec.actuator)?, LowerSmc::new(spec.lower, &spec.actuator)?];
        let mut noise = Noise::new(spec)?;
        let t_max = match spec.controller {
            ControllerKind::Smc => spec.upper.t_max_nm,
            ControllerKind::Pid => spec.pid.t_max_nm,
        };

        let mut hold_integral = false;
        let mut residual_max = 0.0f64;
        let mut plant_steps = 0u64;
        let n_ctrl = (spec.duration_s / dt_ctrl).to_f64_lossy().round() as u64;
        for k in 0..=n_ctrl {
            let t = T::lit(k as f64) * dt_ctrl;
            let veh = plant.vehicle;
            let mu_true = road_mu(&spec.road, t);

            // measurements
            let v_meas = (veh.v_x + noise.sample(0)).max(T::zero());
            let mut omega_meas = veh.omega;
            for o in &mut omega_meas {
                *o = (*o + noise.sample(1)).max(T::zero());
            }
            let motor_meas: [(T, T); 2] = [0, 1].map(|i| {
                let m = plant.actuators[i].motor;
                (m.omega + noise.sample(2), m.current + noise.sample(3))
            });

            let mode = supervisor(v_meas);
            let slip_l = slip_ratio(v_meas, omega_meas[RL], r_r);
            let slip_rr = slip_ratio(v_meas, omega_meas[RR], r_r);
            let slip_r = (slip_l + slip_rr) / T::lit(2.0);
            let slip_f = slip_ratio(v_meas, omega_meas[FL], r_f);

            // friction estimate from the body deceleration
            let accel = veh.a_x_prev;
            let decel = -accel;
            let loads = axle_loads(vp, accel);
            let front_spin = vp.wheel_inertia_front_kgm2 * decel / (r_f * r_f);
            let f_rear = (vp.mass_kg * decel - T::lit(2.0) * front_spin) / T::lit(2.0);
            let est = estimator.update(f_rear, loads.rear, slip_r);
            let slip_target = est.slip_target;
            let slip_target_rate = target_rate.update(slip_target, dt_ctrl);

            let mut row_flags = 0u32;
            if est.flagged {
                row_flags |= flags::EST_FLAGGED;
            }
            if loads.clamped {
                row_flags |= flags::LOAD_CLAMPED;
            }
            let locked = [RL, RR]
                .iter()
                .any(|&w| veh.v_x > T::lit(V_EPS) && veh.omega[w] * r_r <= T::lit(LOCK_FRACTION) * veh.v_x);
            if locked {
                row_flags |= flags::WHEEL_LOCK;
            }

            let (t_cmd, s_r, cmd_clamped) = match mode {
                SupervisorMode::Active => match spec.controller {
                    ControllerKind::Smc => {
                        let f_xr = self.curve.force(slip_r, loads.rear, est.mu_hat);
                        let f_xf = self.curve.force(slip_f, loads.front, est.mu_hat);
                        let inp = UpperInputs {
                            slip: slip_r,
                            slip_target,
                            slip_target_rate,
                            v_x: v_meas,
                            f_xr,
                            f_total: T::lit(2.0) * (f_xr + f_xf),
                            wheel_inertia: vp.wheel_inertia_rear_kgm2,
                            wheel_radius: r_r,
                            mass: vp.mass_kg,
                        };
                        let out = upper.step(&inp, dt_ctrl, hold_integral);
                        (out.torque, out.s, out.clamped)
                    }
                    ControllerKind::Pid => {
                        let (cmd, clamped) = pid.step(slip_r, slip_target, dt_ctrl);
                        (cmd, slip_r - slip_target, clamped)
                    }
                },
                SupervisorMode::Quit | SupervisorMode::Stop => (t_max, slip_r - slip_target, false),
            };
            if mode != SupervisorMode::Active {
                row_flags |= flags::ABS_QUIT;
            }
            if cmd_clamped {
                row_flags |= flags::CMD_CLAMPED;
            }

            let mut duty = [T::zero(); 2];
            let mut t_hat = [T::zero(); 2];
            let mut s_t = T::zero();
            let mut any_sat = false;
            for i in 0..2 {
                let (w_m, i_a) = motor_meas[i];
                let obs = observers[i].update(w_m, i_a);
                if obs.frozen {
                    row_flags |= flags::OBS_FROZEN;
                }
                t_hat[i] = obs.t_epb_hat;
                if mode == SupervisorMode::Active {
                    let out = lowers[i].step(obs.t_epb_hat, t_cmd, w_m, dt_ctrl);
                    duty[i] = out.duty;
                    any_sat |= out.saturated;
                    if out.holding {
                        row_flags |= flags::TORQUE_HOLD;
                    }
                    if i == 0 {
                        s_t = out.s;
                    }
                } else {
                    duty[i] = T::one();
                    any_sat = true;
                }
            }
            if any_sat {
                row_flags |= flags::DUTY_SAT;
            }
            hold_integral = any_sat;

            let act0 = self.actuator.outputs(&plant.actuators[0]);
            trace.push(TraceRecord {
                t,
                v_x: veh.v_x,
                x: veh.x,
                omega_rl: veh.omega[RL],
                omega_rr: veh.omega[RR],
                slip_r,
                slip_target,
                mu_true,
                mu_hat: est.mu_hat,
                t_cmd,
                t_act: act0.brake_torque,
                t_hat: t_hat[0],
                clamp_force: act0.clamp_force,
                current: plant.actuators[0].motor.current,
                omega_m: plant.actuators[0].motor.omega,
                duty: duty[0],
                s_r,
                s_t,
                flags: row_flags,
            });
            if mode == SupervisorMode::Stop || k == n_ctrl {
                break;
            }

            for j in 0..substeps {
                let ts = t + T::lit(j as f64) * dt;
                let (ev, residual) =
                    self.plant_step(&mut plant, duty, road_mu(&spec.road, ts), dt).map_err(|e| match e {
                        Error::Numerical { reason, .. } => Error::Numerical { t: ts.to_f64_lossy(), reason },
                        other => other,
                    })?;
                plant_steps += 1;
                if ev & flags::LOAD_CLAMPED == 0 {
                    residual_max = residual_max.max(residual.to_f64_lossy());
                }
                if let Some(last) = trace.last_mut() {
                    last.flags |= ev;
                }
                Self::check_finite(&plant).map_err(|reason| Error::Numerical { t: ts.to_f64_lossy(), reason })?;
            }
        }
        Ok((residual_max, plant_steps))
    }
}

/// Seeded measurement noise: speed, wheel speed, motor speed, current.
struct Noise<T> {
    rng: ChaCha8Rng,
    dists: [Option<Normal<f64>>; 4],
    _t: std::marker::PhantomData<T>,
}

impl<T: Real> Noise<T> {
    fn new(spec: &ScenarioSpec<T>) -> Result<Self> {
        let n = spec.noise;
        let mk = |sd: T| -> Result<Option<Normal<f64>>> {
            let sd = sd.to_f64_lossy();
            if sd == 0.0 {
                Ok(None)
            } else {
                Normal::new(0.0, sd).map(Some).map_err(|e| Error::Scenario(e.to_string()))
            }
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            dists: [mk(n.speed_mps)?, mk(n.wheel_speed_rad_s)?, mk(n.motor_speed_rad_s)?, mk(n.current_a)?],
            _t: std::marker::PhantomData,
        })
    }

    fn sample(&mut self, channel: usize) -> T {
        match &self.dists[channel] {
            Some(d) => T::lit(d.sample(&mut self.rng)),
            None => T::zero(),
        }
    }
}
