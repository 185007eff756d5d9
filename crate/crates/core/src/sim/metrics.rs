//! Run metrics computed from a trace.
//!
//! The trace is cut into road segments at the friction switches. Each segment
//! ends early at the ABS hand-over speed or the stop. Its steady window starts
//! once the relative slip error has stayed within twice the tracking band for
//! [`SETTLE_HOLD_S`]; tracking errors are evaluated over that window.

use std::fmt::Write as _;

use serde::Serialize;

use super::trace::{flags, TraceRecord};
use crate::{Real, Result};

/// Relative slip tracking band.
pub const SLIP_BAND: f64 = 0.10;
/// Time the slip error must stay within twice the band to end the transient.
pub const SETTLE_HOLD_S: f64 = 0.2;
/// Relative friction estimation band for the re-convergence time.
pub const MU_BAND: f64 = 0.10;
/// Torques below this are excluded from relative torque errors, N·m.
pub const TORQUE_FLOOR_NM: f64 = 50.0;
/// Duty hysteresis for counting direction reversals.
pub const DUTY_REVERSAL_BAND: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsContext {
    pub t_ctrl_s: f64,
    pub phi_s: f64,
    pub phi_t: f64,
    /// Whether `s_r` in the trace is a sliding variable (SMC) or a plain error.
    pub upper_is_smc: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorStats {
    pub max: f64,
    pub mean: f64,
    pub samples: usize,
}

impl ErrorStats {
    fn from(values: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut max, mut sum, mut n) = (0.0f64, 0.0, 0usize);
        for v in values {
            max = max.max(v);
            sum += v;
            n += 1;
        }
        (n > 0).then(|| ErrorStats { max, mean: sum / n as f64, samples: n })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SegmentMetrics {
    pub start_s: f64,
    pub end_s: f64,
    pub mu: f64,
    pub steady_start_s: Option<f64>,
    pub slip_err: Option<ErrorStats>,
    pub mu_err: Option<ErrorStats>,
    /// Time after the segment start at which the friction estimate enters
    /// its band for good.
    pub mu_reconverge_s: Option<f64>,
    pub torque_err: Option<ErrorStats>,
    pub smo_err: Option<ErrorStats>,
    pub duty_reversals_per_s: Option<f64>,
    /// Largest slip overshoot above the target within the segment.
    pub slip_excursion: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LyapunovStats {
    pub samples: usize,
    pub violations: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub controller: String,
    pub stopped: bool,
    pub stopping_distance_m: f64,
    pub stop_time_s: f64,
    pub abs_quit_time_s: Option<f64>,
    pub lock_events: usize,
    pub lyapunov_upper: Option<LyapunovStats>,
    pub lyapunov_lower: LyapunovStats,
    /// Largest relative deviation of the total axle load from the weight.
    pub load_residual_max: f64,
    pub duty_min: f64,
    pub duty_max: f64,
    pub t_cmd_min: f64,
    pub t_cmd_max: f64,
    pub segments: Vec<SegmentMetrics>,
    pub control_updates: usize,
    pub plant_steps: u64,
}

fn f<T: Real>(x: T) -> f64 {
    x.to_f64_lossy()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// First time in `rows` from which `ok` holds continuously for `hold` seconds.
fn settle_time<T: Real>(rows: &[TraceRecord<T>], hold: f64, ok: impl Fn(&TraceRecord<T>) -> bool) -> Option<f64> {
    let mut since: Option<f64> = None;
    for r in rows {
        let t = f(r.t);
        if ok(r) {
            let s = *since.get_or_insert(t);
            if t - s >= hold - 1e-12 {
                return Some(s);
            }
        } else {
            since = None;
        }
    }
    None
}

fn duty_reversals<T: Real>(rows: &[TraceRecord<T>]) -> usize {
    let mut last = 0i8;
    let mut n = 0;
    for r in rows {
        let d = f(r.duty);
        let sign = if d > DUTY_REVERSAL_BAND {
            1
        } else if d < -DUTY_REVERSAL_BAND {
            -1
        } else {
            0
        };
        if sign != 0 {
            if last != 0 && sign != last {
                n += 1;
            }
            last = sign;
        }
    }
    n
}

fn lyapunov<T: Real>(
    trace: &[TraceRecord<T>],
    dt: f64,
    phi: f64,
    s: impl Fn(&TraceRecord<T>) -> f64,
    excluded: u32,
) -> LyapunovStats {
    let mut st = LyapunovStats::default();
    for w in trace.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let skip = flags::ABS_QUIT | excluded;
        if a.flags & skip != 0 || b.flags & skip != 0 {
            continue;
        }
        let s0 = s(a);
        if s0.abs() <= phi {
            continue;
        }
        st.samples += 1;
        let s_dot = (s(b) - s0) / dt;
        if s0 * s_dot > 0.0 {
            st.violations += 1;
        }
    }
    st.fraction = if st.samples > 0 { st.violations as f64 / st.samples as f64 } else { 0.0 };
    st
}

pub fn compute_metrics<T: Real>(trace: &[TraceRecord<T>], switch_times: &[T], ctx: &MetricsContext) -> RunMetrics {
    let mut m = RunMetrics {
        duty_min: f64::INFINITY,
        duty_max: f64::NEG_INFINITY,
        t_cmd_min: f64::INFINITY,
        t_cmd_max: f64::NEG_INFINITY,
        control_updates: trace.len(),
        ..RunMetrics::default()
    };
    let Some(last) = trace.last() else {
        m.duty_min = 0.0;
        m.duty_max = 0.0;
        m.t_cmd_min = 0.0;
        m.t_cmd_max = 0.0;
        m.stopped = true;
        return m;
    };
    m.stopping_distance_m = f(last.x);
    m.stop_time_s = f(last.t);
    m.abs_quit_time_s = trace.iter().find(|r| r.has(flags::ABS_QUIT)).map(|r| f(r.t));

    let mut locked = false;
    for r in trace {
        m.duty_min = m.duty_min.min(f(r.duty));
        m.duty_max = m.duty_max.max(f(r.duty));
        m.t_cmd_min = m.t_cmd_min.min(f(r.t_cmd));
        m.t_cmd_max = m.t_cmd_max.max(f(r.t_cmd));
        let now = r.has(flags::WHEEL_LOCK) && !r.has(flags::ABS_QUIT);
        if now && !locked {
            m.lock_events += 1;
        }
        locked = now;
    }

    if ctx.upper_is_smc {
        m.lyapunov_upper =
            Some(lyapunov(trace, ctx.t_ctrl_s, ctx.phi_s, |r| f(r.s_r), flags::CMD_CLAMPED | flags::DUTY_SAT));
    }
    m.lyapunov_lower = lyapunov(trace, ctx.t_ctrl_s, ctx.phi_t, |r| f(r.s_t), flags::DUTY_SAT | flags::TORQUE_HOLD);

    let end_t = m.abs_quit_time_s.unwrap_or(m.stop_time_s + ctx.t_ctrl_s);
    let mut bounds: Vec<f64> = vec![0.0];
    bounds.extend(switch_times.iter().map(|&t| f(t)));
    for (i, &start) in bounds.iter().enumerate() {
        if start >= end_t {
            break;
        }
        let end = bounds.get(i + 1).copied().unwrap_or(f64::INFINITY).min(end_t);
        let rows: Vec<TraceRecord<T>> = trace.iter().filter(|r| f(r.t) >= start && f(r.t) < end).copied().collect();
        if rows.is_empty() {
            continue;
        }
        m.segments.push(segment(&rows, start, end, ctx));
    }
    m
}

fn segment<T: Real>(rows: &[TraceRecord<T>], start: f64, end: f64, ctx: &MetricsContext) -> SegmentMetrics {
    let mu = f(rows[0].mu_true);
    let slip_rel = |r: &TraceRecord<T>| rel(f(r.slip_r), f(r.slip_target));
    let steady_start = settle_time(rows, SETTLE_HOLD_S, |r| slip_rel(r) <= 2.0 * SLIP_BAND);
    let steady: Vec<&TraceRecord<T>> = match steady_start {
        Some(s) => rows.iter().filter(|r| f(r.t) >= s).collect(),
        None => Vec::new(),
    };
    let mu_ok = |r: &TraceRecord<T>| rel(f(r.mu_hat), f(r.mu_true)) <= MU_BAND;
    let mu_reconverge = rows
        .iter()
        .rposition(|r| !mu_ok(r))
        .map(|i| i + 1)
        .or(Some(0))
        .filter(|&i| i < rows.len())
        .map(|i| f(rows[i].t) - start);
    let duration = steady.last().zip(steady.first()).map(|(l, s)| f(l.t) - f(s.t) + ctx.t_ctrl_s);
    let torque_rows = || steady.iter().filter(|r| f(r.t_cmd) >= TORQUE_FLOOR_NM && !r.has(flags::ABS_QUIT));
    SegmentMetrics {
        start_s: start,
        end_s: if end.is_finite() { end } else { f(rows[rows.len() - 1].t) + ctx.t_ctrl_s },
        mu,
        steady_start_s: steady_start,
        slip_err: ErrorStats::from(steady.iter().map(|r| slip_rel(r))),
        mu_err: ErrorStats::from(steady.iter().map(|r| rel(f(r.mu_hat), f(r.mu_true)))),
        mu_reconverge_s: mu_reconverge,
        torque_err: ErrorStats::from(torque_rows().map(|r| rel(f(r.t_act), f(r.t_cmd)))),
        smo_err: ErrorStats::from(
            steady.iter().filter(|r| f(r.t_act) >= TORQUE_FLOOR_NM).map(|r| rel(f(r.t_hat), f(r.t_act))),
        ),
        duty_reversals_per_s: duration
            .filter(|d| *d > 0.0)
            .map(|d| duty_reversals(&steady.iter().map(|r| **r).collect::<Vec<_>>()) as f64 / d),
        slip_excursion: rows.iter().map(|r| f(r.slip_r) - f(r.slip_target)).fold(0.0, f64::max),
    }
}

impl RunMetrics {
    /// Worst steady value of a per-segment statistic across segments.
    pub fn worst(&self, pick: impl Fn(&SegmentMetrics) -> Option<f64>) -> Option<f64> {
        self.segments.iter().filter_map(pick).reduce(f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| crate::Error::Config(e.to_string()))
    }

    /// Flat `key = value` listing.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let v = serde_json::to_value(self).unwrap_or_default();
        flatten("", &v, &mut out);
        out
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        Value::Null => {
            let _ = writeln!(out, "{prefix} = none");
        }
        Value::String(s) => {
            let _ = writeln!(out, "{prefix} = {s}");
        }
        other => {
            let _ = writeln!(out, "{prefix} = {other}");
        }
    }
}
