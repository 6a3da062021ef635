//! Residuals of the discrete model written directly from plain numbers.
//!
//! The assembled problem evaluates the same equations through [`super::terms`];
//! these functions are the readable reference used by the audits and tests.

use crate::physics::GasConstants;
use crate::solver::EvalError;

/// Endpoint partial densities of one segment at one time (dimensionless).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointDensities {
    pub h2_in: f64,
    pub ng_in: f64,
    pub h2_out: f64,
    pub ng_out: f64,
}

impl EndpointDensities {
    pub fn mean(&self) -> f64 {
        0.5 * (self.h2_in + self.ng_in + self.h2_out + self.ng_out)
    }
}

/// Dimensionless constants of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentCoefficients {
    /// Length over the length scale.
    pub length: f64,
    /// Cross-section over the area scale.
    pub area: f64,
    /// Rate constant v0/l0 (1/s).
    pub kappa: f64,
    /// Step (s); unused when the grid has one point.
    pub dt_s: f64,
    pub beta: f64,
    /// Squared pure-species sound speeds over a0².
    pub c_h2: f64,
    pub c_ng: f64,
    /// Smoothing of |phi|; 0 gives the exact absolute value.
    pub eps: f64,
}

impl SegmentCoefficients {
    /// Multiplier of the storage difference in the continuity rows.
    pub fn storage(&self) -> f64 {
        self.length * self.area / (self.kappa * self.dt_s)
    }
}

/// H2 continuity, NG continuity and momentum of one segment between times
/// `t_n` and its successor. Continuity rows are multiplied by `L A / kappa`.
pub fn pipe_segment_residuals(
    now: EndpointDensities,
    next: EndpointDensities,
    f0: f64,
    fl: f64,
    eta_in: f64,
    gamma_out: f64,
    c: &SegmentCoefficients,
) -> Result<[f64; 3], EvalError> {
    let s = c.storage();
    let d_h2 = (next.h2_in + next.h2_out) - (now.h2_in + now.h2_out);
    let d_ng = (next.ng_in + next.ng_out) - (now.ng_in + now.ng_out);
    let h2 = s * d_h2 / 2.0 + gamma_out * fl - eta_in * f0;
    let ng = s * d_ng / 2.0 + (1.0 - gamma_out) * fl - (1.0 - eta_in) * f0;
    let rho = now.mean();
    if !(rho > 0.0) {
        return Err(EvalError::new(format!("mean segment density {rho} is not positive")));
    }
    let phi = (f0 + fl) / (2.0 * c.area);
    let p_in = c.c_h2 * now.h2_in + c.c_ng * now.ng_in;
    let p_out = c.c_h2 * now.h2_out + c.c_ng * now.ng_out;
    let mom = p_out - p_in + c.beta * phi * phi.hypot(c.eps) / rho;
    Ok([h2, ng, mom])
}

/// `p_j² - alpha² p_i²`.
pub fn compressor_residual(p_in: f64, p_out: f64, alpha: f64) -> f64 {
    p_out * p_out - alpha * alpha * p_in * p_in
}

/// Boost ratio that satisfies [`compressor_residual`] for positive pressures.
pub fn compressor_ratio(p_in: f64, p_out: f64) -> f64 {
    p_out / p_in
}

/// H2 and NG balance at a node. `inflows` carry the concentration delivered
/// by each incoming edge; outgoing edges and the withdrawal carry the node's
/// own concentration `eta`.
pub fn nodal_balance_residuals(
    inflows: &[(f64, f64)],
    outflows: &[f64],
    eta: f64,
    supply: Option<(f64, f64)>,
    q_w: f64,
) -> [f64; 2] {
    let mut h2 = 0.0;
    let mut ng = 0.0;
    for &(f, gamma) in inflows {
        h2 += gamma * f;
        ng += (1.0 - gamma) * f;
    }
    for &f in outflows {
        h2 -= eta * f;
        ng -= (1.0 - eta) * f;
    }
    if let Some((q_s, eta_s)) = supply {
        h2 += eta_s * q_s;
        ng += (1.0 - eta_s) * q_s;
    }
    h2 -= eta * q_w;
    ng -= (1.0 - eta) * q_w;
    [h2, ng]
}

/// Total mass balance, written without species weights.
pub fn total_mass_residual(inflows: &[(f64, f64)], outflows: &[f64], supply: Option<(f64, f64)>, q_w: f64) -> f64 {
    inflows.iter().map(|x| x.0).sum::<f64>() - outflows.iter().sum::<f64>()
        + supply.map_or(0.0, |s| s.0)
        - q_w
}

/// Mass fraction definition with the denominator cleared.
pub fn mass_fraction_residual(rho_h2: f64, rho_ng: f64, eta: f64) -> f64 {
    eta * (rho_h2 + rho_ng) - rho_h2
}

pub fn slack_pressure_residual(p: f64, p_slack: f64) -> f64 {
    p - p_slack
}

/// Distances to the lower and upper pressure bound; both non-negative when
/// the bound holds.
pub fn pressure_bound_margins(p: f64, p_min: f64, p_max: f64) -> (f64, f64) {
    (p - p_min, p_max - p)
}

/// `g_E - R(eta) q_w` in MJ/s.
pub fn energy_residual(g_e: f64, eta: f64, q_w: f64, gas: &GasConstants) -> f64 {
    g_e - gas.calorific(eta) * q_w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn coeffs() -> SegmentCoefficients {
        SegmentCoefficients {
            length: 10.0,
            area: 0.6567,
            kappa: 2.166e-3,
            dt_s: 1800.0,
            beta: 6.0756e-4,
            c_h2: 2.82,
            c_ng: 0.3545,
            eps: 1e-8,
        }
    }

    #[test]
    fn equilibrium_has_zero_residuals() {
        let s = EndpointDensities { h2_in: 0.7, ng_in: 6.3, h2_out: 0.7, ng_out: 6.3 };
        let r = pipe_segment_residuals(s, s, 0.0, 0.0, 0.1, 0.1, &coeffs()).unwrap();
        assert_eq!(r, [0.0, 0.0, 0.0]);
        let z = EndpointDensities { h2_in: 0.0, ng_in: 0.0, h2_out: 0.0, ng_out: 0.0 };
        assert!(pipe_segment_residuals(z, z, 1.0, 1.0, 0.1, 0.1, &coeffs()).is_err());
    }

    #[test]
    fn steady_homogeneous_momentum_is_the_squared_pressure_law() {
        // With a single species, p = c rho and the lumped momentum equation is
        // exactly p_L² - p_0² = -2 beta c phi|phi|.
        let c = SegmentCoefficients { c_h2: 0.0, ..coeffs() };
        let f = 29.0;
        let phi = f / c.area;
        let p0 = 4.337;
        let pl = (p0 * p0 - 2.0 * c.beta * c.c_ng * phi * phi).sqrt();
        let s = EndpointDensities { h2_in: 0.0, ng_in: p0 / c.c_ng, h2_out: 0.0, ng_out: pl / c.c_ng };
        let r = pipe_segment_residuals(s, s, f, f, 0.0, 0.0, &c).unwrap();
        assert!(r[2].abs() < 1e-12, "{}", r[2]);
    }

    #[test]
    fn mixing_average() {
        let r = nodal_balance_residuals(&[(50.0, 0.05), (50.0, 0.15)], &[100.0], 0.10, None, 0.0);
        assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12);
        let r = nodal_balance_residuals(&[(148.26, 0.1)], &[], 0.1, None, 148.26);
        assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12);
        let r = nodal_balance_residuals(&[(80.0, 0.1)], &[80.0], 0.1, None, 0.0);
        assert_eq!(r, [0.0, 0.0]);
    }

    #[test]
    fn species_rows_sum_to_total_mass() {
        let inflows = [(12.0, 0.3), (7.5, 0.02)];
        let outflows = [4.0, 9.0];
        let r = nodal_balance_residuals(&inflows, &outflows, 0.17, Some((3.0, 0.4)), 2.0);
        let total = total_mass_residual(&inflows, &outflows, Some((3.0, 0.4)), 2.0);
        assert_relative_eq!(r[0] + r[1], total, max_relative = 1e-14);
    }

    #[test]
    fn compatibility_examples() {
        assert_eq!(mass_fraction_residual(1.0, 9.0, 0.1), 0.0);
        assert_eq!(pressure_bound_margins(6.0e6, 3.0e6, 6.0e6).1, 0.0);
        assert_relative_eq!(compressor_ratio(4.337e6, 6.0e6), 1.383_444_777_495_965, max_relative = 1e-12);
        let a = compressor_ratio(4.337e6, 6.0e6);
        assert!(compressor_residual(4.337, 6.0, a).abs() < 1e-12);
        assert_eq!(compressor_residual(4.0, 4.0, 1.0), 0.0);
        let g = GasConstants::default();
        let q = 8000.0 / g.calorific(0.15);
        assert_relative_eq!(q, 135.961_930_659_415_34, max_relative = 1e-9);
        assert!(energy_residual(8000.0, 0.15, q, &g).abs() < 1e-9);
        assert_eq!(energy_residual(0.0, 0.3, 0.0, &g), 0.0);
    }
}
