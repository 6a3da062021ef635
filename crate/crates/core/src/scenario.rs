//! Time-varying boundary data: injection concentrations, prices, bounds and
//! discretization settings.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::EnergyDemand;
use crate::physics::{GasConstants, DEFAULT_L0, DEFAULT_MACH, DEFAULT_P0};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Sinusoidal concentration `eta0 + delta * sin(2 pi nu t / period)`.
pub fn injection_profile(eta0: f64, delta: f64, nu: f64, t: f64, period: f64) -> f64 {
    eta0 + delta * (2.0 * PI * nu * t / period).sin()
}

/// Shape of a time-varying quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ProfileSpec {
    Constant {
        value: f64,
    },
    Sinusoid {
        #[serde(alias = "mean")]
        eta0: f64,
        #[serde(alias = "amplitude")]
        delta: f64,
        nu: f64,
    },
    /// Piecewise constant: the value at `times[k]` holds until `times[k + 1]`.
    Series {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

/// A plain number or a tagged profile object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Value(f64),
    Spec(ProfileSpec),
}

impl From<f64> for Profile {
    fn from(v: f64) -> Self {
        Profile::Value(v)
    }
}

impl Profile {
    /// Value at time `t` (hours); sinusoids use `period` as their basis and
    /// series wrap around it.
    pub fn eval(&self, t: f64, period: f64) -> f64 {
        match self {
            Profile::Value(v) | Profile::Spec(ProfileSpec::Constant { value: v }) => *v,
            Profile::Spec(ProfileSpec::Sinusoid { eta0, delta, nu }) => {
                injection_profile(*eta0, *delta, *nu, t, period)
            }
            Profile::Spec(ProfileSpec::Series { times, values }) => {
                let t = t.rem_euclid(period);
                match times.iter().rposition(|&s| s <= t + 1e-12) {
                    Some(k) => values[k],
                    None => *values.last().expect("validated non-empty"),
                }
            }
        }
    }

    /// Smallest and largest values the profile can take.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Profile::Value(v) | Profile::Spec(ProfileSpec::Constant { value: v }) => (*v, *v),
            Profile::Spec(ProfileSpec::Sinusoid { eta0, delta, .. }) => {
                (eta0 - delta.abs(), eta0 + delta.abs())
            }
            Profile::Spec(ProfileSpec::Series { values, .. }) => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
        }
    }

    pub fn validate(&self, field: &str) -> Result<(), ScenarioError> {
        match self {
            Profile::Spec(ProfileSpec::Series { times, values }) => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(invalid(field, "series needs equal, non-empty times and values"));
                }
                if times.windows(2).any(|w| w[1] < w[0]) {
                    return Err(invalid(field, "series times must be non-decreasing"));
                }
            }
            Profile::Spec(ProfileSpec::Sinusoid { nu, .. }) if !nu.is_finite() => {
                return Err(invalid(field, "sinusoid frequency must be finite"));
            }
            _ => {}
        }
        let (lo, hi) = self.range();
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(invalid(field, "profile values must be finite"));
        }
        Ok(())
    }

    pub fn validate_fraction(&self, field: &str) -> Result<(), ScenarioError> {
        self.validate(field)?;
        let (lo, hi) = self.range();
        if lo < 0.0 || hi > 1.0 {
            return Err(invalid(field, format!("mass fraction range [{lo}, {hi}] leaves [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    /// Hydrogen offer price ($/kg).
    pub c_h2: Profile,
    /// Natural gas offer price ($/kg).
    pub c_ng: Profile,
    /// Consumer bid for delivered energy ($/MJ).
    pub c_energy: Profile,
    /// Electricity price for compression ($/kWh).
    #[serde(default = "default_zeta")]
    pub zeta: f64,
}

fn default_zeta() -> f64 {
    0.07
}

impl Default for Prices {
    fn default() -> Self {
        Self {
            c_h2: Profile::Value(3.0),
            c_ng: Profile::Value(0.13),
            c_energy: Profile::Value(0.02),
            zeta: default_zeta(),
        }
    }
}

/// Per-node supply price override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyPrice {
    pub c_h2: Profile,
    pub c_ng: Profile,
}

/// Constants of the simplified adiabatic compression work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressorCost {
    /// Specific heat ratio.
    pub mu: f64,
    /// Specific gravity.
    pub g: f64,
    /// Suction temperature (K).
    pub t: f64,
}

impl Default for CompressorCost {
    fn default() -> Self {
        Self {
            mu: 1.31,
            g: 0.505,
            t: 288.7,
        }
    }
}

impl CompressorCost {
    /// Work coefficient K in W per (kg/s).
    pub fn k(&self) -> f64 {
        286.76 * self.mu * self.t / (self.g * (self.mu - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    #[serde(default = "default_l0")]
    pub l0: f64,
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default = "default_mach")]
    pub mach: f64,
}

fn default_l0() -> f64 {
    DEFAULT_L0
}
fn default_p0() -> f64 {
    DEFAULT_P0
}
fn default_mach() -> f64 {
    DEFAULT_MACH
}

impl Default for ScaleSpec {
    fn default() -> Self {
        Self {
            l0: DEFAULT_L0,
            p0: DEFAULT_P0,
            mach: DEFAULT_MACH,
        }
    }
}

fn default_xi() -> f64 {
    0.5
}
fn default_qs_max() -> f64 {
    1000.0
}
fn default_smoothing() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Optimization horizon T_f (h).
    pub horizon_h: f64,
    /// Time step (h); must divide the horizon.
    pub dt_h: f64,
    /// Maximum pipe segment length (m).
    pub dl_m: f64,
    /// Basis period of sinusoidal profiles (h); defaults to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_h: Option<f64>,
    /// Supply mass fraction per slack/injection node.
    #[serde(default)]
    pub injection: BTreeMap<String, Profile>,
    /// Withdrawal demand overrides per node.
    #[serde(default)]
    pub withdrawals: BTreeMap<String, EnergyDemand>,
    #[serde(default)]
    pub prices: Prices,
    #[serde(default)]
    pub supply_prices: BTreeMap<String, SupplyPrice>,
    #[serde(default)]
    pub compressor_cost: CompressorCost,
    /// Weight of the economic term against compression cost.
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default)]
    pub gas: GasConstants,
    #[serde(default)]
    pub scales: ScaleSpec,
    /// Supply flow cap (kg/s) for nodes that do not set one.
    #[serde(default = "default_qs_max")]
    pub qs_max_default: f64,
    /// Dimensionless smoothing of |phi| in the friction term.
    #[serde(default = "default_smoothing")]
    pub flow_smoothing: f64,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn period(&self) -> f64 {
        self.period_h.unwrap_or(self.horizon_h)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.horizon_h > 0.0) {
            return Err(invalid("horizon_h", "must be positive"));
        }
        if !(self.dt_h > 0.0) {
            return Err(invalid("dt_h", "must be positive"));
        }
        let steps = self.horizon_h / self.dt_h;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(invalid("dt_h", "must divide the horizon evenly"));
        }
        if !(self.dl_m > 0.0) {
            return Err(invalid("dl_m", "must be positive"));
        }
        if !(self.period() > 0.0) {
            return Err(invalid("period_h", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(invalid("xi", "must lie in [0, 1]"));
        }
        if !(self.compressor_cost.mu > 1.0 && self.compressor_cost.g > 0.0) {
            return Err(invalid("compressor_cost", "needs mu > 1 and g > 0"));
        }
        if !(self.qs_max_default > 0.0) {
            return Err(invalid("qs_max_default", "must be positive"));
        }
        if !(self.flow_smoothing >= 0.0) {
            return Err(invalid("flow_smoothing", "must be non-negative"));
        }
        self.gas
            .validate()
            .map_err(|e| invalid("gas", e.to_string()))?;
        for (node, p) in &self.injection {
            p.validate_fraction(&format!("injection.{node}"))?;
        }
        for (node, d) in &self.withdrawals {
            d.value().validate(&format!("withdrawals.{node}"))?;
        }
        self.prices.c_h2.validate("prices.c_h2")?;
        self.prices.c_ng.validate("prices.c_ng")?;
        self.prices.c_energy.validate("prices.c_energy")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sinusoid_examples() {
        assert_eq!(injection_profile(0.1, 0.05, 2.0, 0.0, 24.0), 0.1);
        assert_relative_eq!(
            injection_profile(0.1, 0.05, 2.0, 3.0, 24.0),
            0.15,
            max_relative = 1e-14
        );
        for t in [0.0, 1.3, 7.0, 22.5] {
            assert_eq!(injection_profile(0.07, 0.0, 2.0, t, 24.0), 0.07);
        }
    }

    #[test]
    fn sinusoid_is_periodic_in_period_over_nu() {
        for k in 0..50 {
            let t = k as f64 * 0.37;
            let a = injection_profile(0.1, 0.05, 2.0, t, 24.0);
            let b = injection_profile(0.1, 0.05, 2.0, t + 12.0, 24.0);
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn series_is_piecewise_constant_and_wraps() {
        let p = Profile::Spec(ProfileSpec::Series {
            times: vec![0.0, 6.0, 12.0],
            values: vec![1.0, 2.0, 3.0],
        });
        assert_eq!(p.eval(0.0, 24.0), 1.0);
        assert_eq!(p.eval(5.99, 24.0), 1.0);
        assert_eq!(p.eval(6.0, 24.0), 2.0);
        assert_eq!(p.eval(23.0, 24.0), 3.0);
        assert_eq!(p.eval(24.5, 24.0), 1.0);
    }

    #[test]
    fn parse_minimal_and_reject_bad_dt() {
        let ok = r#"{"horizon_h": 24, "dt_h": 0.5, "dl_m": 10000,
            "injection": {"N1": {"type": "sinusoid", "eta0": 0.1, "delta": 0.05, "nu": 2}}}"#;
        let s = Scenario::parse(ok).unwrap();
        assert_eq!(s.xi, 0.5);
        assert_eq!(s.prices.zeta, 0.07);
        let bad = r#"{"horizon_h": 24, "dt_h": 0.7, "dl_m": 10000}"#;
        assert!(matches!(Scenario::parse(bad), Err(ScenarioError::Invalid { .. })));
        let frac = r#"{"horizon_h": 24, "dt_h": 1, "dl_m": 1,
            "injection": {"N1": {"type": "sinusoid", "eta0": 0.02, "delta": 0.05, "nu": 1}}}"#;
        assert!(Scenario::parse(frac).is_err());
    }

    #[test]
    fn compression_constant() {
        assert_relative_eq!(CompressorCost::default().k(), 692_761.237_432_130_3, max_relative = 1e-12);
    }
}
