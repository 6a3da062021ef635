//! Building blocks of residual rows and of the objective, each with exact
//! first and second derivatives.

use crate::solver::EvalError;

pub const MAX_VARS: usize = 6;

pub type LocalGrad = [f64; MAX_VARS];
pub type LocalHess = [[f64; MAX_VARS]; MAX_VARS];

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// `coef * x`
    Linear { var: usize, coef: f64 },
    /// `coef * x_a * x_b` with `a != b`
    Bilinear { a: usize, b: usize, coef: f64 },
    /// `beta * phi * sqrt(phi² + eps²) / rho` with `phi = (f0 + fL) / (2 A)`
    /// and `rho` half the sum of the four endpoint partial densities.
    Friction {
        f0: usize,
        fl: usize,
        rho: [usize; 4],
        beta: f64,
        inv_area: f64,
        eps: f64,
    },
    /// `P_out² - alpha² P_in²` where each pressure is a weighted sum of two
    /// partial densities.
    Boost {
        p_in: [(usize, f64); 2],
        p_out: [(usize, f64); 2],
        alpha: usize,
    },
    /// `coef * fc * (sqrt(alpha) - 1)`
    Work { fc: usize, alpha: usize, coef: f64 },
}

/// `h(phi) = phi * sqrt(phi² + eps²)` and its first two derivatives.
pub fn smooth_abs_product(phi: f64, eps: f64) -> (f64, f64, f64) {
    let s = phi.hypot(eps);
    if s == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let h = phi * s;
    let d1 = s + phi * phi / s;
    let d2 = 3.0 * phi / s - phi.powi(3) / s.powi(3);
    (h, d1, d2)
}

impl Term {
    pub fn is_linear(&self) -> bool {
        matches!(self, Term::Linear { .. })
    }

    /// Variables touched by the term, in local order.
    pub fn vars(&self, out: &mut [usize; MAX_VARS]) -> usize {
        match *self {
            Term::Linear { var, .. } => {
                out[0] = var;
                1
            }
            Term::Bilinear { a, b, .. } => {
                out[0] = a;
                out[1] = b;
                2
            }
            Term::Friction { f0, fl, rho, .. } => {
                out[0] = f0;
                out[1] = fl;
                out[2..6].copy_from_slice(&rho);
                6
            }
            Term::Boost { p_in, p_out, alpha } => {
                out[0] = p_in[0].0;
                out[1] = p_in[1].0;
                out[2] = p_out[0].0;
                out[3] = p_out[1].0;
                out[4] = alpha;
                5
            }
            Term::Work { fc, alpha, .. } => {
                out[0] = fc;
                out[1] = alpha;
                2
            }
        }
    }

    /// Local index pairs `(p, q)` with `p >= q` whose second derivative may
    /// be nonzero.
    pub fn hessian_pattern(&self) -> Vec<(usize, usize)> {
        match self {
            Term::Linear { .. } => vec![],
            Term::Bilinear { .. } => vec![(1, 0)],
            Term::Friction { .. } => (0..6).flat_map(|p| (0..=p).map(move |q| (p, q))).collect(),
            Term::Boost { .. } => vec![(0, 0), (1, 0), (1, 1), (2, 2), (3, 2), (3, 3), (4, 0), (4, 1), (4, 4)],
            Term::Work { .. } => vec![(1, 0), (1, 1)],
        }
    }

    fn friction_state(x: &[f64], f0: usize, fl: usize, rho: &[usize; 4], inv_area: f64) -> Result<(f64, f64), EvalError> {
        let phi = 0.5 * (x[f0] + x[fl]) * inv_area;
        let r = 0.5 * (x[rho[0]] + x[rho[1]] + x[rho[2]] + x[rho[3]]);
        if !(r > 0.0) {
            return Err(EvalError::new(format!("mean segment density {r} is not positive")));
        }
        Ok((phi, r))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(match *self {
            Term::Linear { var, coef } => coef * x[var],
            Term::Bilinear { a, b, coef } => coef * x[a] * x[b],
            Term::Friction { f0, fl, ref rho, beta, inv_area, eps } => {
                let (phi, r) = Self::friction_state(x, f0, fl, rho, inv_area)?;
                beta * smooth_abs_product(phi, eps).0 / r
            }
            Term::Boost { p_in, p_out, alpha } => {
                let pi = p_in[0].1 * x[p_in[0].0] + p_in[1].1 * x[p_in[1].0];
                let pj = p_out[0].1 * x[p_out[0].0] + p_out[1].1 * x[p_out[1].0];
                let a = x[alpha];
                pj * pj - a * a * pi * pi
            }
            Term::Work { fc, alpha, coef } => {
                let a = x[alpha];
                if !(a > 0.0) {
                    return Err(EvalError::new(format!("compressor ratio {a} is not positive")));
                }
                coef * x[fc] * (a.sqrt() - 1.0)
            }
        })
    }

    /// Writes the local gradient into `g`.
    pub fn gradient(&self, x: &[f64], g: &mut LocalGrad) -> Result<(), EvalError> {
        match *self {
            Term::Linear { coef, .. } => g[0] = coef,
            Term::Bilinear { a, b, coef } => {
                g[0] = coef * x[b];
                g[1] = coef * x[a];
            }
            Term::Friction { f0, fl, ref rho, beta, inv_area, eps } => {
                let (phi, r) = Self::friction_state(x, f0, fl, rho, inv_area)?;
                let (h, d1, _) = smooth_abs_product(phi, eps);
                let gf = beta * d1 / r * 0.5 * inv_area;
                let gr = -beta * h / (r * r) * 0.5;
                g[0] = gf;
                g[1] = gf;
                g[2..6].fill(gr);
            }
            Term::Boost { p_in, p_out, alpha } => {
                let pi = p_in[0].1 * x[p_in[0].0] + p_in[1].1 * x[p_in[1].0];
                let pj = p_out[0].1 * x[p_out[0].0] + p_out[1].1 * x[p_out[1].0];
                let a = x[alpha];
                g[0] = -2.0 * a * a * pi * p_in[0].1;
                g[1] = -2.0 * a * a * pi * p_in[1].1;
                g[2] = 2.0 * pj * p_out[0].1;
                g[3] = 2.0 * pj * p_out[1].1;
                g[4] = -2.0 * a * pi * pi;
            }
            Term::Work { fc, alpha, coef } => {
                let a = x[alpha];
                if !(a > 0.0) {
                    return Err(EvalError::new(format!("compressor ratio {a} is not positive")));
                }
                let sa = a.sqrt();
                g[0] = coef * (sa - 1.0);
                g[1] = coef * x[fc] / (2.0 * sa);
            }
        }
        Ok(())
    }

    /// Writes the local Hessian (both triangles) into `h`; entries outside
    /// the pattern are left untouched.
    pub fn hessian(&self, x: &[f64], h: &mut LocalHess) -> Result<(), EvalError> {
        match *self {
            Term::Linear { .. } => {}
            Term::Bilinear { coef, .. } => {
                h[0][1] = coef;
                h[1][0] = coef;
            }
            Term::Friction { f0, fl, ref rho, beta, inv_area, eps } => {
                let (phi, r) = Self::friction_state(x, f0, fl, rho, inv_area)?;
                let (hv, d1, d2) = smooth_abs_product(phi, eps);
                let a = 0.5 * inv_area;
                let ff = beta * d2 / r * a * a;
                let fr = -beta * d1 / (r * r) * a * 0.5;
                let rr = 2.0 * beta * hv / (r * r * r) * 0.25;
                for p in 0..6 {
                    for q in 0..6 {
                        h[p][q] = match (p < 2, q < 2) {
                            (true, true) => ff,
                            (false, false) => rr,
                            _ => fr,
                        };
                    }
                }
            }
            Term::Boost { p_in, p_out, alpha } => {
                let pi = p_in[0].1 * x[p_in[0].0] + p_in[1].1 * x[p_in[1].0];
                let a = x[alpha];
                let ci = [p_in[0].1, p_in[1].1];
                let cj = [p_out[0].1, p_out[1].1];
                for p in 0..2 {
                    for q in 0..2 {
                        h[p][q] = -2.0 * a * a * ci[p] * ci[q];
                        h[2 + p][2 + q] = 2.0 * cj[p] * cj[q];
                    }
                    h[4][p] = -4.0 * a * pi * ci[p];
                    h[p][4] = h[4][p];
                }
                h[4][4] = -2.0 * pi * pi;
            }
            Term::Work { fc, alpha, coef } => {
                let a = x[alpha];
                if !(a > 0.0) {
                    return Err(EvalError::new(format!("compressor ratio {a} is not positive")));
                }
                let sa = a.sqrt();
                h[1][0] = coef / (2.0 * sa);
                h[0][1] = h[1][0];
                h[1][1] = -coef * x[fc] / (4.0 * a * sa);
            }
        }
        Ok(())
    }
}
