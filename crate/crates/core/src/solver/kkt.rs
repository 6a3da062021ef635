//! First-order optimality residuals of a returned point, independent of the
//! solver's internal scaling.

use serde::Serialize;

use super::{EvalError, Nlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktDiagnostics {
    /// `||grad f + J' lambda - z_l + z_u||_inf / (1 + ||multipliers||_inf)`.
    pub stationarity: f64,
    /// Largest violation of rows and variable bounds.
    pub feasibility: f64,
    /// Largest product of a multiplier with its bound gap, scaled like stationarity.
    pub complementarity: f64,
    /// Multipliers of the wrong sign, in the same scaling.
    pub dual_sign: f64,
}

impl KktDiagnostics {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity).max(self.dual_sign)
    }
}

/// Lagrangian `f + lambda' c - z_l'(x - xl) - z_u'(xu - x)`; a positive row
/// multiplier belongs to an active upper bound.
pub fn kkt_residual<P: Nlp + ?Sized>(
    nlp: &P,
    x: &[f64],
    lambda: &[f64],
    z_lower: &[f64],
    z_upper: &[f64],
) -> Result<KktDiagnostics, EvalError> {
    let n = nlp.n();
    let m = nlp.m();
    let mut g = vec![0.0; n];
    nlp.gradient(x, &mut g)?;
    let mut c = vec![0.0; m];
    nlp.constraints(x, &mut c)?;
    let (jr, jc) = nlp.jacobian_structure();
    let mut jv = vec![0.0; jr.len()];
    nlp.jacobian_values(x, &mut jv)?;
    for ((&r, &col), &v) in jr.iter().zip(jc).zip(&jv) {
        g[col] += v * lambda[r];
    }
    let scale = 1.0
        + lambda
            .iter()
            .chain(z_lower)
            .chain(z_upper)
            .fold(0.0f64, |a, v| a.max(v.abs()));
    let (xl, xu) = nlp.variable_bounds();
    let (cl, cu) = nlp.constraint_bounds();
    let mut stat = 0.0f64;
    let mut feas = 0.0f64;
    let mut compl = 0.0f64;
    let mut sign = 0.0f64;
    for i in 0..n {
        let fixed = xl[i] == xu[i];
        if !fixed {
            stat = stat.max((g[i] - z_lower[i] + z_upper[i]).abs());
        }
        feas = feas.max(xl[i] - x[i]).max(x[i] - xu[i]);
        if xl[i].is_finite() && !fixed {
            compl = compl.max(z_lower[i] * (x[i] - xl[i]).max(0.0));
        }
        if xu[i].is_finite() && !fixed {
            compl = compl.max(z_upper[i] * (xu[i] - x[i]).max(0.0));
        }
        sign = sign.max(-z_lower[i]).max(-z_upper[i]);
    }
    for r in 0..m {
        feas = feas.max(cl[r] - c[r]).max(c[r] - cu[r]);
        if cl[r] != cu[r] {
            if lambda[r] > 0.0 {
                if cu[r].is_finite() {
                    compl = compl.max(lambda[r] * (cu[r] - c[r]).max(0.0));
                } else {
                    sign = sign.max(lambda[r]);
                }
            } else if cl[r].is_finite() {
                compl = compl.max(-lambda[r] * (c[r] - cl[r]).max(0.0));
            } else {
                sign = sign.max(-lambda[r]);
            }
        }
    }
    Ok(KktDiagnostics {
        stationarity: stat / scale,
        feasibility: feas.max(0.0),
        complementarity: compl / scale,
        dual_sign: sign / scale,
    })
}
