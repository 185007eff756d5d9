//! Longitudinal tyre force from the Magic Formula and a trilinear lookup table.
//!
//! The factor equations are written for the classic coefficient magnitudes:
//! vertical load in kN and slip in percent. With the default MXV8 coefficients
//! `D = 1000·Fz[kN]`, so the base curve peaks at a friction coefficient of one
//! and the road friction enters as a pure output scale.
//!
//! Public entry points take SI values (N, slip as a fraction) and convert.

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Supported vertical load range for the factor equations, kN.
pub const FZ_MIN_KN: f64 = 0.5;
pub const FZ_MAX_KN: f64 = 10.0;
/// Supported road friction range.
pub const MU_MIN: f64 = 0.05;
pub const MU_MAX: f64 = 1.2;

/// Magic Formula coefficients `a0..a8`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TyreParams<T> {
    pub a0: T,
    pub a1: T,
    pub a2: T,
    pub a3: T,
    pub a4: T,
    pub a5: T,
    pub a6: T,
    pub a7: T,
    pub a8: T,
}

impl<T: Real> Default for TyreParams<T> {
    /// Michelin MXV8 205/55R16 coefficients.
    fn default() -> Self {
        Self {
            a0: T::zero(),
            a1: T::lit(1000.0),
            a2: T::lit(1.55),
            a3: T::lit(60.0),
            a4: T::lit(300.0),
            a5: T::lit(0.17),
            a6: T::zero(),
            a7: T::zero(),
            a8: T::lit(0.2),
        }
    }
}

/// Stiffness, shape, peak and curvature factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MfFactors<T> {
    pub b: T,
    pub c: T,
    pub d: T,
    pub e: T,
}

impl<T: Real> TyreParams<T> {
    pub fn validate(&self) -> Result<()> {
        let c = self.a2.to_f64_lossy();
        if !(c > 1.0 && c < 2.0) {
            return Err(Error::Config(format!(
                "tyre shape factor a2 = {c} must lie in (1, 2) for a single-peaked curve"
            )));
        }
        for fz in [1.0, 2.5, 5.0, 7.5, 10.0] {
            let f = self.factors_unchecked(T::lit(fz));
            if !(f.b > T::zero() && f.d > T::zero()) || !f.b.is_finite() || !f.e.is_finite() {
                return Err(Error::Config(format!(
                    "tyre factors not positive/finite at Fz = {fz} kN (B = {}, D = {})",
                    f.b, f.d
                )));
            }
        }
        Ok(())
    }

    fn factors_unchecked(&self, fz_kn: T) -> MfFactors<T> {
        let c = self.a2;
        let d = self.a0 * fz_kn * fz_kn + self.a1 * fz_kn;
        let b = (self.a3 * fz_kn * fz_kn + self.a4 * fz_kn) / (c * d * (self.a5 * fz_kn).exp());
        let e = self.a6 * fz_kn * fz_kn + self.a7 * fz_kn + self.a8;
        MfFactors { b, c, d, e }
    }

    /// Base curve at `slip_pct` (percent) and `fz_kn` without range checks.
    fn base_unchecked(&self, slip_pct: T, fz_kn: T) -> T {
        let f = self.factors_unchecked(fz_kn);
        let x = f.b * slip_pct;
        f.d * (f.c * (x - f.e * (x - x.atan())).atan()).sin()
    }

    /// Base force in N for slip as a fraction and load in N. Loads below the
    /// factor range scale the lowest supported curve linearly to zero.
    fn base_si(&self, slip: T, fz_n: T) -> T {
        if fz_n <= T::zero() {
            return T::zero();
        }
        let fz_kn = fz_n / T::lit(1000.0);
        let lo = T::lit(FZ_MIN_KN);
        let pct = slip * T::lit(100.0);
        if fz_kn < lo {
            self.base_unchecked(pct, lo) * fz_kn / lo
        } else {
            self.base_unchecked(pct, fz_kn)
        }
    }
}

/// Factors `(B, C, D, E)` at vertical load `fz_kn`.
pub fn mf_factors<T: Real>(params: &TyreParams<T>, fz_kn: T) -> Result<MfFactors<T>> {
    check_range("vertical load [kN]", fz_kn, FZ_MIN_KN, FZ_MAX_KN)?;
    let f = params.factors_unchecked(fz_kn);
    if !(f.b.is_finite() && f.d.is_finite() && f.e.is_finite()) || f.b <= T::zero() || f.d <= T::zero() {
        return Err(Error::Config(format!("non-physical tyre factors at Fz = {fz_kn} kN: B = {}, D = {}", f.b, f.d)));
    }
    Ok(f)
}

/// Base-curve force in N at `slip_pct` percent and `fz_kn` kN.
pub fn mf_base_force<T: Real>(params: &TyreParams<T>, slip_pct: T, fz_kn: T) -> Result<T> {
    check_range("slip [%]", slip_pct, 0.0, 100.0)?;
    mf_factors(params, fz_kn)?;
    Ok(params.base_unchecked(slip_pct, fz_kn))
}

/// Anything that can produce the unit-peak base curve in SI units.
pub trait TyreModel<T: Real>: Send + Sync {
    /// Base force (road friction 1) in N; `slip` is a fraction, `fz_n` in N.
    fn base_force(&self, slip: T, fz_n: T) -> T;

    /// Force magnitude opposing motion during braking, N. Total function used
    /// on the simulation hot path; inputs are clamped to the supported ranges.
    fn force(&self, slip: T, fz_n: T, mu: T) -> T {
        let slip = slip.clamp_to(T::zero(), T::one());
        mu * self.base_force(slip, fz_n)
    }
}

impl<T: Real> TyreModel<T> for TyreParams<T> {
    fn base_force(&self, slip: T, fz_n: T) -> T {
        self.base_si(slip, fz_n)
    }
}

/// Checked longitudinal force for slip fraction, load in N and road friction.
pub fn tyre_force<T: Real, M: TyreModel<T> + ?Sized>(model: &M, slip: T, fz_n: T, mu: T) -> Result<T> {
    check_range("slip", slip, 0.0, 1.0)?;
    check_range("road friction", mu, MU_MIN, MU_MAX)?;
    if fz_n < T::zero() || !fz_n.is_finite() {
        return Err(Error::domain("vertical load [N]", fz_n.to_f64_lossy(), 0.0, FZ_MAX_KN * 1000.0));
    }
    check_range("vertical load [N]", fz_n, 0.0, FZ_MAX_KN * 1000.0)?;
    Ok(model.force(slip, fz_n, mu))
}

fn check_range<T: Real>(quantity: &'static str, value: T, min: f64, max: f64) -> Result<()> {
    let v = value.to_f64_lossy();
    if v.is_finite() && v >= min && v <= max {
        Ok(())
    } else {
        Err(Error::domain(quantity, v, min, max))
    }
}

/// Grid axes for [`build_lookup`].
#[derive(Clone, Debug, PartialEq)]
pub struct LookupGrids<T> {
    pub load_kn: Vec<T>,
    pub mu: Vec<T>,
    pub slip_pct: Vec<T>,
}

impl<T: Real> Default for LookupGrids<T> {
    /// 0.5 % slip, 0.25 kN load and 0.05 friction steps.
    fn default() -> Self {
        let lin = |lo: f64, hi: f64, n: usize| -> Vec<T> {
            (0..n).map(|i| T::lit(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect()
        };
        Self { load_kn: lin(0.5, 10.0, 39), mu: lin(0.05, 1.2, 24), slip_pct: lin(0.0, 100.0, 201) }
    }
}

/// Precomputed force table `G(Fz, mu, slip)` with per-load curve features.
#[derive(Clone, Debug)]
pub struct TyreCurve<T> {
    load_kn: Vec<T>,
    mu: Vec<T>,
    slip_pct: Vec<T>,
    /// Row-major `[load][mu][slip]`, N.
    force: Vec<T>,
    peak_slip_pct: Vec<T>,
    initial_slope: Vec<T>,
}

/// Tabulates the Magic Formula over the given grids.
pub fn build_lookup<T: Real>(params: &TyreParams<T>, grids: LookupGrids<T>) -> Result<TyreCurve<T>> {
    params.validate()?;
    check_axis("load", &grids.load_kn, 1.0, 8.0)?;
    check_axis("mu", &grids.mu, MU_MIN, MU_MAX)?;
    check_axis("slip", &grids.slip_pct, 0.0, 100.0)?;
    if grids.slip_pct[0] != T::zero() {
        return Err(Error::Config("slip grid must start at 0 %".into()));
    }
    if *grids.load_kn.first().unwrap() < T::lit(FZ_MIN_KN) || *grids.load_kn.last().unwrap() > T::lit(FZ_MAX_KN) {
        return Err(Error::Config("load grid exceeds the supported factor range".into()));
    }

    let (nl, nm, ns) = (grids.load_kn.len(), grids.mu.len(), grids.slip_pct.len());
    let mut force = Vec::with_capacity(nl * nm * ns);
    let mut peak_slip_pct = Vec::with_capacity(nl);
    let mut initial_slope = Vec::with_capacity(nl);
    for &fz in &grids.load_kn {
        let base: Vec<T> = grids.slip_pct.iter().map(|&s| params.base_unchecked(s, fz)).collect();
        for &mu in &grids.mu {
            force.extend(base.iter().map(|&f| mu * f));
        }
        let (imax, _) =
            base.iter().enumerate().fold((0, T::neg_infinity()), |acc, (i, &f)| if f > acc.1 { (i, f) } else { acc });
        peak_slip_pct.push(grids.slip_pct[imax]);
        // d(F/Fz)/d(slip fraction) over the first cell
        let fz_n = fz * T::lit(1000.0);
        let ds = grids.slip_pct[1] / T::lit(100.0);
        initial_slope.push((base[1] - base[0]) / fz_n / ds);
    }

    Ok(TyreCurve {
        load_kn: grids.load_kn,
        mu: grids.mu,
        slip_pct: grids.slip_pct,
        force,
        peak_slip_pct,
        initial_slope,
    })
}

fn check_axis<T: Real>(name: &str, axis: &[T], lo: f64, hi: f64) -> Result<()> {
    if axis.len() < 2 {
        return Err(Error::Config(format!("{name} grid needs at least two nodes")));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(format!("{name} grid is not strictly increasing")));
    }
    let (first, last) = (axis[0].to_f64_lossy(), axis[axis.len() - 1].to_f64_lossy());
    if first > lo + 1e-12 || last < hi - 1e-12 {
        return Err(Error::Config(format!("{name} grid [{first}, {last}] must cover [{lo}, {hi}]")));
    }
    Ok(())
}

/// Bracketing cell index and weight of `x` on `axis`, clamped to the ends.
fn locate<T: Real>(axis: &[T], x: T) -> (usize, T) {
    let n = axis.len();
    if x <= axis[0] {
        return (0, T::zero());
    }
    if x >= axis[n - 1] {
        return (n - 2, T::one());
    }
    let i = axis.partition_point(|&a| a <= x) - 1;
    let i = i.min(n - 2);
    (i, (x - axis[i]) / (axis[i + 1] - axis[i]))
}

impl<T: Real> TyreCurve<T> {
    fn at(&self, l: usize, m: usize, s: usize) -> T {
        self.force[(l * self.mu.len() + m) * self.slip_pct.len() + s]
    }

    /// Trilinear interpolation of the table, N.
    pub fn interpolate(&self, fz_kn: T, mu: T, slip_pct: T) -> T {
        let (l, wl) = locate(&self.load_kn, fz_kn);
        let (m, wm) = locate(&self.mu, mu);
        let (s, ws) = locate(&self.slip_pct, slip_pct);
        let one = T::one();
        let mut acc = T::zero();
        for (dl, fl) in [(0, one - wl), (1, wl)] {
            for (dm, fm) in [(0, one - wm), (1, wm)] {
                for (ds, fs) in [(0, one - ws), (1, ws)] {
                    let w = fl * fm * fs;
                    if w != T::zero() {
                        acc = acc + w * self.at(l + dl, m + dm, s + ds);
                    }
                }
            }
        }
        acc
    }

    /// Slip (percent) of the base-curve maximum at load `fz_n`.
    pub fn peak_slip_pct(&self, fz_n: T) -> T {
        self.interp_load(&self.peak_slip_pct, fz_n / T::lit(1000.0))
    }

    /// Small-slip slope of the base friction curve, per unit slip fraction.
    pub fn initial_slope(&self, fz_n: T) -> T {
        self.interp_load(&self.initial_slope, fz_n / T::lit(1000.0))
    }

    fn interp_load(&self, values: &[T], fz_kn: T) -> T {
        let (i, w) = locate(&self.load_kn, fz_kn);
        values[i] * (T::one() - w) + values[i + 1] * w
    }

    pub fn load_grid_kn(&self) -> &[T] {
        &self.load_kn
    }

    pub fn mu_grid(&self) -> &[T] {
        &self.mu
    }

    pub fn slip_grid_pct(&self) -> &[T] {
        &self.slip_pct
    }
}

impl<T: Real> TyreModel<T> for TyreCurve<T> {
    fn base_force(&self, slip: T, fz_n: T) -> T {
        self.interpolate(fz_n / T::lit(1000.0), T::one(), slip * T::lit(100.0))
    }

    fn force(&self, slip: T, fz_n: T, mu: T) -> T {
        if fz_n <= T::zero() {
            return T::zero();
        }
        let slip = slip.clamp_to(T::zero(), T::one());
        self.interpolate(fz_n / T::lit(1000.0), mu, slip * T::lit(100.0))
    }
}
