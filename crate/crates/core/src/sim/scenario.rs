//! Scenario description loaded from TOML.

use serde::{Deserialize, Serialize};

use crate::actuator::ActuatorParams;
use crate::control::{LowerGains, PidGains, UpperGains};
use crate::estimator::EstimatorConfig;
use crate::observer::ObserverGains;
use crate::tyre::{TyreParams, MU_MAX, MU_MIN};
use crate::vehicle::VehicleParams;
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    #[default]
    Smc,
    Pid,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerKind::Smc => "smc",
            ControllerKind::Pid => "pid",
        })
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smc" => Ok(ControllerKind::Smc),
            "pid" => Ok(ControllerKind::Pid),
            other => Err(Error::Scenario(format!("controller must be smc or pid, got {other:?}"))),
        }
    }
}

/// Road friction from `start_s` until the next segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSegment<T> {
    pub start_s: T,
    pub mu: T,
}

/// Additive Gaussian measurement noise, standard deviations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig<T> {
    pub speed_mps: T,
    pub wheel_speed_rad_s: T,
    pub motor_speed_rad_s: T,
    pub current_a: T,
}

impl<T: Real> Default for NoiseConfig<T> {
    fn default() -> Self {
        Self { speed_mps: T::zero(), wheel_speed_rad_s: T::zero(), motor_speed_rad_s: T::zero(), current_a: T::zero() }
    }
}

impl<T: Real> NoiseConfig<T> {
    pub fn is_zero(&self) -> bool {
        [self.speed_mps, self.wheel_speed_rad_s, self.motor_speed_rad_s, self.current_a].iter().all(|v| *v == T::zero())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct ScenarioSpec<T> {
    pub name: String,
    pub v0_mps: T,
    pub duration_s: T,
    pub road: Vec<RoadSegment<T>>,
    pub controller: ControllerKind,
    pub dt_plant_s: T,
    pub t_ctrl_s: T,
    /// Seed of the measurement noise generator.
    pub seed: u64,
    pub noise: NoiseConfig<T>,
    pub vehicle: VehicleParams<T>,
    pub tyre: TyreParams<T>,
    pub actuator: ActuatorParams<T>,
    pub observer: ObserverGains<T>,
    pub estimator: EstimatorConfig<T>,
    pub upper: UpperGains<T>,
    pub lower: LowerGains<T>,
    pub pid: PidGains<T>,
}

impl<T: Real> Default for ScenarioSpec<T> {
    fn default() -> Self {
        Self {
            name: "single_mu_0.8".into(),
            v0_mps: T::lit(17.0),
            duration_s: T::lit(10.0),
            road: vec![RoadSegment { start_s: T::zero(), mu: T::lit(0.8) }],
            controller: ControllerKind::Smc,
            dt_plant_s: T::lit(5e-5),
            t_ctrl_s: T::lit(1e-3),
            seed: 0,
            noise: NoiseConfig::default(),
            vehicle: VehicleParams::default(),
            tyre: TyreParams::default(),
            actuator: ActuatorParams::default(),
            observer: ObserverGains::default(),
            estimator: EstimatorConfig::default(),
            upper: UpperGains::default(),
            lower: LowerGains::default(),
            pid: PidGains::default(),
        }
    }
}

/// Road friction at time `t`: the last segment starting at or before `t`.
pub fn road_mu<T: Real>(road: &[RoadSegment<T>], t: T) -> T {
    road.iter().take_while(|s| s.start_s <= t).last().or(road.first()).map(|s| s.mu).unwrap_or_else(T::one)
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> ScenarioSpec<T> {
    /// Parses a scenario, applying `key=value` overrides (dotted paths into
    /// the TOML tree) before validation.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Scenario(e.to_string()))?;
        for (key, value) in overrides {
            set_path(&mut table, key, value)?;
        }
        let spec: Self = table.try_into().map_err(|e: toml::de::Error| Error::Scenario(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &std::path::Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    /// The fully resolved scenario as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn set_path(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Scenario(format!("bad override key {key:?}")));
    }
    let value = parse_value(raw);
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Scenario(format!("override {key:?}: {p:?} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Interprets an override value as a TOML literal, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl<T: Real> ScenarioSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if !(self.v0_mps >= T::zero()) || !self.v0_mps.is_finite() {
            return bad(format!("v0_mps = {} must be finite and >= 0", self.v0_mps));
        }
        if !(self.duration_s > T::zero()) || !self.duration_s.is_finite() {
            return bad(format!("duration_s = {} must be positive", self.duration_s));
        }
        if self.road.is_empty() {
            return bad("road needs at least one segment".into());
        }
        if self.road[0].start_s != T::zero() {
            return bad(format!("road[0].start_s = {} must be 0", self.road[0].start_s));
        }
        for (i, w) in self.road.windows(2).enumerate() {
            if !(w[1].start_s > w[0].start_s) {
                return bad(format!("road[{}].start_s must be after road[{i}].start_s", i + 1));
            }
        }
        for (i, s) in self.road.iter().enumerate() {
            if !(s.mu >= T::lit(MU_MIN) && s.mu <= T::lit(MU_MAX)) {
                return bad(format!("road[{i}].mu = {} outside [{MU_MIN}, {MU_MAX}]", s.mu));
            }
        }
        if !(self.dt_plant_s > T::zero() && self.t_ctrl_s > T::zero()) {
            return bad("dt_plant_s and t_ctrl_s must be positive".into());
        }
        let ratio = (self.t_ctrl_s / self.dt_plant_s).to_f64_lossy();
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
            return bad(format!("dt_plant_s = {} must divide t_ctrl_s = {} exactly", self.dt_plant_s, self.t_ctrl_s));
        }
        let n = self.noise;
        if [n.speed_mps, n.wheel_speed_rad_s, n.motor_speed_rad_s, n.current_a]
            .iter()
            .any(|v| !(*v >= T::zero()) || !v.is_finite())
        {
            return bad("noise standard deviations must be finite and >= 0".into());
        }
        let wrap = |e: Error| Error::Scenario(e.to_string());
        self.vehicle.validate().map_err(wrap)?;
        self.tyre.validate().map_err(wrap)?;
        crate::actuator::ActuatorConstants::new(&self.actuator).map_err(wrap)?;
        self.observer.validate().map_err(wrap)?;
        self.estimator.validate().map_err(wrap)?;
        self.upper.validate().map_err(wrap)?;
        self.lower.validate().map_err(wrap)?;
        crate::control::LowerConstants::new(&self.actuator).map_err(wrap)?;
        crate::control::PidBaseline::new(self.pid).map_err(wrap)?;
        Ok(())
    }

    /// Plant substeps per control period.
    pub fn substeps(&self) -> usize {
        (self.t_ctrl_s / self.dt_plant_s).to_f64_lossy().round() as usize
    }

    /// Times at which the road friction changes.
    pub fn switch_times(&self) -> Vec<T> {
        self.road.iter().skip(1).map(|s| s.start_s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type S = ScenarioSpec<f64>;

    fn fig9() -> Vec<RoadSegment<f64>> {
        vec![
            RoadSegment { start_s: 0.0, mu: 0.2 },
            RoadSegment { start_s: 1.3, mu: 0.8 },
            RoadSegment { start_s: 2.7, mu: 0.5 },
        ]
    }

    #[test]
    fn road_mu_is_right_continuous() {
        let r = fig9();
        assert_eq!(road_mu(&r, 1.0), 0.2);
        assert_eq!(road_mu(&r, 1.3), 0.8);
        assert_eq!(road_mu(&r, 2.0), 0.8);
        assert_eq!(road_mu(&r, 99.0), 0.5);
    }

    #[test]
    fn default_is_valid() {
        S::default().validate().unwrap();
        assert_eq!(S::default().substeps(), 20);
    }

    #[test]
    fn parses_minimal_file() {
        let s = S::from_toml_str(
            "name = \"x\"\nv0_mps = 12.0\ncontroller = \"pid\"\n[[road]]\nstart_s = 0.0\nmu = 0.5\n[[road]]\nstart_s = 2.0\nmu = 0.2\n",
            &[],
        )
        .unwrap();
        assert_eq!(s.v0_mps, 12.0);
        assert_eq!(s.controller, ControllerKind::Pid);
        assert_eq!(s.road.len(), 2);
        assert_eq!(s.vehicle, VehicleParams::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = S::from_toml_str("v0 = 3.0\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Scenario(_)));
        assert!(err.to_string().contains("v0"), "{err}");
        let err = S::from_toml_str("[upper]\nepsilon = 3.0\n", &[]).unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
    }

    #[test]
    fn overrides_apply_and_validate() {
        let o = |k: &str, v: &str| vec![(k.to_string(), v.to_string())];
        let s = S::from_toml_str("", &o("upper.eps1", "80")).unwrap();
        assert_eq!(s.upper.eps1, 80.0);
        let s = S::from_toml_str("", &o("controller", "pid")).unwrap();
        assert_eq!(s.controller, ControllerKind::Pid);
        assert!(S::from_toml_str("", &o("upper.nope", "1.0")).is_err());
        assert!(S::from_toml_str("", &o("dt_plant_s", "0.0003")).is_err());
    }

    #[test]
    fn invalid_roads_rejected() {
        let mut s = S { road: vec![RoadSegment { start_s: 0.5, mu: 0.8 }], ..S::default() };
        assert!(s.validate().is_err());
        s.road = vec![RoadSegment { start_s: 0.0, mu: 0.8 }, RoadSegment { start_s: 0.0, mu: 0.2 }];
        assert!(s.validate().is_err());
        s.road = vec![RoadSegment { start_s: 0.0, mu: 3.0 }];
        assert!(s.validate().is_err());
    }

    #[test]
    fn resolved_toml_round_trips() {
        let s = S { road: fig9(), ..S::default() };
        let text = s.to_toml().unwrap();
        let back = S::from_toml_str(&text, &[]).unwrap();
        assert_eq!(back, s);
    }
}
