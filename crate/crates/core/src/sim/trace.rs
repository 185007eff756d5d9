//! Per-control-period trace rows and their CSV form.

use std::io::Write;

use serde::Serialize;

use crate::{Error, Real, Result};

pub mod flags {
    /// Slip control handed over to a full apply.
    pub const ABS_QUIT: u32 = 1;
    /// Torque command clamped to its range.
    pub const CMD_CLAMPED: u32 = 1 << 1;
    /// Duty saturated at ±1 on either actuator.
    pub const DUTY_SAT: u32 = 1 << 2;
    /// A rear wheel is locked.
    pub const WHEEL_LOCK: u32 = 1 << 3;
    /// Observer rejected a measurement.
    pub const OBS_FROZEN: u32 = 1 << 4;
    /// Estimator rejected the load.
    pub const EST_FLAGGED: u32 = 1 << 5;
    /// Axle load clamped at zero.
    pub const LOAD_CLAMPED: u32 = 1 << 6;
    /// Actuator reached a travel limit during the period.
    pub const HARD_STOP: u32 = 1 << 7;
    /// Torque loop parked inside its hold band on either actuator.
    pub const TORQUE_HOLD: u32 = 1 << 8;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRecord<T> {
    pub t: T,
    pub v_x: T,
    pub x: T,
    pub omega_rl: T,
    pub omega_rr: T,
    pub slip_r: T,
    pub slip_target: T,
    pub mu_true: T,
    pub mu_hat: T,
    pub t_cmd: T,
    pub t_act: T,
    pub t_hat: T,
    pub clamp_force: T,
    pub current: T,
    pub omega_m: T,
    pub duty: T,
    pub s_r: T,
    pub s_t: T,
    pub flags: u32,
}

pub const TRACE_COLUMNS: [&str; 19] = [
    "t",
    "v_x",
    "x",
    "omega_rl",
    "omega_rr",
    "slip_r",
    "slip_target",
    "mu_true",
    "mu_hat",
    "t_cmd",
    "t_act",
    "t_hat",
    "clamp_force",
    "current",
    "omega_m",
    "duty",
    "s_r",
    "s_t",
    "flags",
];

impl<T: Real> TraceRecord<T> {
    pub fn has(&self, flag: u32) -> bool {
        self.flags & flag != 0
    }

    fn values(&self) -> [T; 18] {
        [
            self.t,
            self.v_x,
            self.x,
            self.omega_rl,
            self.omega_rr,
            self.slip_r,
            self.slip_target,
            self.mu_true,
            self.mu_hat,
            self.t_cmd,
            self.t_act,
            self.t_hat,
            self.clamp_force,
            self.current,
            self.omega_m,
            self.duty,
            self.s_r,
            self.s_t,
        ]
    }
}

/// Nine significant digits in scientific notation.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        // one spelling for both signed zeros
        return "0".into();
    }
    format!("{x:.8e}")
}

pub fn write_csv<T: Real, W: Write>(records: &[TraceRecord<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(TRACE_COLUMNS.len());
    for r in records {
        row.clear();
        row.extend(r.values().iter().map(|v| format_sig9(v.to_f64_lossy())));
        row.push(r.flags.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
