//! Ideal H2/NG mixture thermodynamics and non-dimensionalization scales.
//!
//! Pressures are in Pa, densities in kg/m³, sound speeds in m/s, calorific
//! values in MJ/kg and mass flows in kg/s. Every function here is pure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("mass fraction {0} outside [0, 1]")]
    MassFraction(f64),
    #[error("partial densities must be non-negative with positive sum (got {rho_h2}, {rho_ng})")]
    Density { rho_h2: f64, rho_ng: f64 },
    #[error("withdrawal flow must be non-negative (got {0})")]
    NegativeFlow(f64),
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("gas constants violate ordering: {0}")]
    Ordering(&'static str),
}

fn positive(name: &'static str, value: f64) -> Result<f64, PhysicsError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(PhysicsError::NonPositive { name, value })
    }
}

fn check_fraction(eta: f64) -> Result<f64, PhysicsError> {
    if (0.0..=1.0).contains(&eta) {
        Ok(eta)
    } else {
        Err(PhysicsError::MassFraction(eta))
    }
}

/// Pure-species sound speeds and calorific values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasConstants {
    /// Sound speed in pure hydrogen (m/s).
    pub a_h2: f64,
    /// Sound speed in pure natural gas (m/s).
    pub a_ng: f64,
    /// Calorific value of hydrogen (MJ/kg).
    pub r_h2: f64,
    /// Calorific value of natural gas (MJ/kg).
    pub r_ng: f64,
}

impl Default for GasConstants {
    /// Ideal-gas sound speeds at 288.7 K (molar masses 2.016 and 16.04 g/mol)
    /// and standard higher heating values.
    fn default() -> Self {
        Self {
            a_h2: 1091.4,
            a_ng: 386.9,
            r_h2: 141.8,
            r_ng: 44.2,
        }
    }
}

impl GasConstants {
    pub fn new(a_h2: f64, a_ng: f64, r_h2: f64, r_ng: f64) -> Result<Self, PhysicsError> {
        let g = Self {
            a_h2,
            a_ng,
            r_h2,
            r_ng,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        positive("a_ng", self.a_ng)?;
        positive("r_ng", self.r_ng)?;
        if self.a_h2 <= self.a_ng {
            return Err(PhysicsError::Ordering("a_h2 > a_ng required"));
        }
        if self.r_h2 <= self.r_ng {
            return Err(PhysicsError::Ordering("r_h2 > r_ng required"));
        }
        Ok(())
    }

    /// Mixture calorific value (MJ/kg) at mass fraction `eta`, unchecked.
    pub fn calorific(&self, eta: f64) -> f64 {
        eta * self.r_h2 + (1.0 - eta) * self.r_ng
    }

    /// Squared mixture sound speed, unchecked.
    pub fn sound_speed_sq(&self, eta: f64) -> f64 {
        self.a_h2 * self.a_h2 * eta + self.a_ng * self.a_ng * (1.0 - eta)
    }
}

/// Squared sound speed of the mixture at H2 mass fraction `eta`.
pub fn mixture_sound_speed_sq(eta: f64, g: &GasConstants) -> Result<f64, PhysicsError> {
    Ok(g.sound_speed_sq(check_fraction(eta)?))
}

/// Ideal-gas pressure from partial densities (sum of partial pressures).
pub fn eos_pressure(rho_h2: f64, rho_ng: f64, g: &GasConstants) -> Result<f64, PhysicsError> {
    if !(rho_h2 >= 0.0 && rho_ng >= 0.0 && rho_h2 + rho_ng > 0.0) {
        return Err(PhysicsError::Density { rho_h2, rho_ng });
    }
    Ok(g.a_h2 * g.a_h2 * rho_h2 + g.a_ng * g.a_ng * rho_ng)
}

/// Energy flow (MJ/s) carried by a withdrawal of `qw` kg/s at mass fraction `eta`.
pub fn energy_rate(eta: f64, qw: f64, g: &GasConstants) -> Result<f64, PhysicsError> {
    let eta = check_fraction(eta)?;
    if !(qw >= 0.0) {
        return Err(PhysicsError::NegativeFlow(qw));
    }
    Ok(g.calorific(eta) * qw)
}

/// Nominal values used to make the transcribed equations dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondimScales {
    /// Length scale (m).
    pub l0: f64,
    /// Pressure scale (Pa).
    pub p0: f64,
    /// Nominal Mach number v0/a0.
    pub mach: f64,
    /// Nominal wave speed (m/s).
    pub a0: f64,
    /// Nominal flow speed (m/s).
    pub v0: f64,
    /// Nominal density (kg/m³).
    pub rho0: f64,
    /// Nominal mass flux (kg/m²/s).
    pub phi0: f64,
    /// Nominal cross-section (m²).
    pub area0: f64,
    /// Rate constant v0/l0 (1/s).
    pub kappa: f64,
}

impl NondimScales {
    /// Nominal mass flow rho0 * area0 * v0 (kg/s).
    pub fn flow0(&self) -> f64 {
        self.phi0 * self.area0
    }
}

pub const DEFAULT_L0: f64 = 1000.0;
pub const DEFAULT_P0: f64 = 1.0e6;
pub const DEFAULT_MACH: f64 = 1.0 / 300.0;

pub fn nondim_scales(
    l0: f64,
    p0: f64,
    mach: f64,
    g: &GasConstants,
) -> Result<NondimScales, PhysicsError> {
    positive("l0", l0)?;
    positive("p0", p0)?;
    positive("mach", mach)?;
    positive("a_h2", g.a_h2)?;
    positive("a_ng", g.a_ng)?;
    let a0 = (g.a_h2 * g.a_ng).sqrt();
    let v0 = a0 * mach;
    let rho0 = p0 / (a0 * a0);
    let phi0 = rho0 * v0;
    Ok(NondimScales {
        l0,
        p0,
        mach,
        a0,
        v0,
        rho0,
        phi0,
        area0: 1.0,
        kappa: v0 / l0,
    })
}

/// Dimensionless friction resistance of a pipe segment.
///
/// The friction drop `lambda L / (2 D) * phi|phi| / rho` divided by the
/// pressure scale `a0² rho0` leaves the factor `(phi0 / (a0 rho0))² = M²`, so
/// `beta = M² lambda L / (2 D)`. The ratio L/D is scale free.
pub fn pipe_beta(lambda: f64, length: f64, diameter: f64, mach: f64) -> Result<f64, PhysicsError> {
    if !(lambda >= 0.0) {
        return Err(PhysicsError::NonPositive {
            name: "lambda",
            value: lambda,
        });
    }
    positive("length", length)?;
    positive("diameter", diameter)?;
    positive("mach", mach)?;
    Ok(mach * mach * lambda * length / (2.0 * diameter))
}

/// Thermodynamic state at one node and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    pub rho_h2: f64,
    pub rho_ng: f64,
    pub eta: f64,
    pub a2: f64,
    pub p: f64,
}

impl MixtureState {
    pub fn from_partial_densities(
        rho_h2: f64,
        rho_ng: f64,
        g: &GasConstants,
    ) -> Result<Self, PhysicsError> {
        let p = eos_pressure(rho_h2, rho_ng, g)?;
        let eta = rho_h2 / (rho_h2 + rho_ng);
        Ok(Self {
            rho_h2,
            rho_ng,
            eta,
            a2: g.sound_speed_sq(eta),
            p,
        })
    }

    /// State with pressure `p` and mass fraction `eta` (EOS inversion).
    pub fn from_pressure(p: f64, eta: f64, g: &GasConstants) -> Result<Self, PhysicsError> {
        positive("pressure", p)?;
        let a2 = mixture_sound_speed_sq(eta, g)?;
        let rho = p / a2;
        Ok(Self {
            rho_h2: eta * rho,
            rho_ng: (1.0 - eta) * rho,
            eta,
            a2,
            p,
        })
    }

    pub fn density(&self) -> f64 {
        self.rho_h2 + self.rho_ng
    }

    /// Largest relative mismatch between the stored redundant fields and the
    /// values implied by the partial densities.
    pub fn drift(&self, g: &GasConstants) -> f64 {
        let rho = self.density();
        let eta = self.rho_h2 / rho;
        let a2 = g.sound_speed_sq(eta);
        let p = a2 * rho;
        let d_eta = (self.eta - eta).abs();
        let d_a2 = (self.a2 - a2).abs() / a2;
        let d_p = (self.p - p).abs() / p;
        d_eta.max(d_a2).max(d_p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn sound_speed_limits_and_blend() {
        let g = GasConstants::default();
        assert_eq!(mixture_sound_speed_sq(0.0, &g).unwrap(), 386.9 * 386.9);
        assert_eq!(mixture_sound_speed_sq(1.0, &g).unwrap(), 1091.4 * 1091.4);
        assert_relative_eq!(
            mixture_sound_speed_sq(0.1, &g).unwrap(),
            253_837.845,
            max_relative = 1e-12
        );
        assert!(matches!(
            mixture_sound_speed_sq(1.2, &g),
            Err(PhysicsError::MassFraction(_))
        ));
    }

    #[test]
    fn eos_examples() {
        let g = GasConstants::default();
        assert_eq!(eos_pressure(0.0, 20.0, &g).unwrap(), 386.9 * 386.9 * 20.0);
        assert_eq!(eos_pressure(2.0, 0.0, &g).unwrap(), 1091.4 * 1091.4 * 2.0);
        assert_relative_eq!(
            eos_pressure(3.0, 27.0, &g).unwrap(),
            7_615_135.35,
            max_relative = 1e-12
        );
        assert!(eos_pressure(0.0, 0.0, &g).is_err());
    }

    #[test]
    fn energy_examples() {
        let g = GasConstants::default();
        assert_eq!(energy_rate(0.3, 0.0, &g).unwrap(), 0.0);
        assert_relative_eq!(energy_rate(0.1, 100.0, &g).unwrap(), 5396.0, max_relative = 1e-12);
        let qw = 8000.0 / g.calorific(0.1);
        assert_relative_eq!(qw, 148.257_968_865_826_5, max_relative = 1e-12);
        assert!(energy_rate(0.1, -1.0, &g).is_err());
    }

    #[test]
    fn scales() {
        // Constants whose geometric mean is exactly 672 m/s.
        let g = GasConstants::new(1008.0, 448.0, 141.8, 44.2).unwrap();
        let s = nondim_scales(1000.0, 1e6, 1.0 / 300.0, &g).unwrap();
        assert_relative_eq!(s.a0, 672.0, max_relative = 1e-14);
        assert_relative_eq!(s.v0, 2.24, max_relative = 1e-14);
        assert_relative_eq!(s.rho0, 2.214_427_437_641_723_5, max_relative = 1e-12);
        assert_relative_eq!(s.kappa, 2.24e-3, max_relative = 1e-14);
        assert_relative_eq!(s.flow0(), s.rho0 * s.v0, max_relative = 1e-14);
        assert!(nondim_scales(0.0, 1e6, 0.1, &g).is_err());
    }

    #[test]
    fn beta_examples() {
        assert_eq!(pipe_beta(0.0, 1e4, 0.9144, 1.0 / 300.0).unwrap(), 0.0);
        let b = pipe_beta(0.01, 1e4, 0.9144, 1.0 / 300.0).unwrap();
        assert_relative_eq!(b, 6.075_629_435_209_49e-4, max_relative = 1e-12);
        let b2 = pipe_beta(0.01, 2e4, 0.9144, 1.0 / 300.0).unwrap();
        assert_relative_eq!(b2, 2.0 * b, max_relative = 1e-14);
        let half = pipe_beta(0.01, 1e4, 0.9144, 1.0 / 600.0).unwrap();
        assert_relative_eq!(half, b / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn rejects_misordered_constants() {
        assert!(GasConstants::new(300.0, 400.0, 141.8, 44.2).is_err());
        assert!(GasConstants::new(1000.0, 400.0, 40.0, 44.2).is_err());
    }

    #[test]
    fn state_inversion_matches_slack_density() {
        let g = GasConstants::default();
        let s = MixtureState::from_pressure(4.337e6, 0.1, &g).unwrap();
        assert_relative_eq!(s.density(), 17.085_710_761_529_67, max_relative = 1e-12);
        assert!(s.drift(&g) < 1e-14);
        let mut bad = s;
        bad.eta = 0.11;
        assert!(bad.drift(&g) > 1e-3);
    }

    proptest! {
        #[test]
        fn eos_matches_blended_sound_speed(rh in 0.0f64..50.0, rn in 1e-3f64..80.0) {
            let g = GasConstants::default();
            let p = eos_pressure(rh, rn, &g).unwrap();
            let eta = rh / (rh + rn);
            let q = mixture_sound_speed_sq(eta, &g).unwrap() * (rh + rn);
            prop_assert!((p - q).abs() <= 1e-12 * p);
        }

        #[test]
        fn eos_is_additive(r1 in 0.0f64..20.0, r2 in 0.0f64..20.0, n1 in 0.1f64..20.0, n2 in 0.1f64..20.0) {
            let g = GasConstants::default();
            let lhs = eos_pressure(r1 + r2, n1 + n2, &g).unwrap();
            let rhs = eos_pressure(r1, n1, &g).unwrap() + eos_pressure(r2, n2, &g).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
        }

        #[test]
        fn energy_increases_with_hydrogen(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0, q in 0.1f64..500.0) {
            let g = GasConstants::default();
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(energy_rate(lo, q, &g).unwrap() <= energy_rate(hi, q, &g).unwrap());
        }

        #[test]
        fn beta_is_squared_speed_ratio_times_friction(lam in 1e-4f64..0.1, len in 10.0f64..1e5, d in 0.1f64..2.0, m in 1e-4f64..0.1) {
            // (phi0 / (a0 rho0))^2 = (v0 / a0)^2 = M^2, so halving M quarters beta.
            let full = pipe_beta(lam, len, d, m).unwrap();
            let half = pipe_beta(lam, len, d, m / 2.0).unwrap();
            prop_assert!((half / full - 0.25).abs() <= 1e-12);
            prop_assert!((full - m * m * lam * len / (2.0 * d)).abs() <= 1e-12 * full);
        }
    }
}
