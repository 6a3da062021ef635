//! Primal-dual interior-point method with a filter line search.
//!
//! Inequality rows receive slack variables, so the internal problem is
//! `min f(w)` subject to `d(w) = 0` and simple bounds on `w`. Newton steps
//! come from the symmetric indefinite KKT system, regularized until its
//! inertia is correct. Steps are accepted by a filter on (infeasibility,
//! barrier objective) with second-order corrections; when the filter blocks
//! progress a regularized Gauss-Newton phase reduces infeasibility alone.

use serde::Serialize;

use super::ldl::{sym_matvec, NumericLdl, SymbolicLdl};
use super::{EvalError, Nlp, SolveResult, SolveStatus, SolverOptions};

const NONE: usize = usize::MAX;

/// One line of the optional iteration log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub inf_pr: f64,
    pub inf_du: f64,
    pub mu: f64,
    pub step_norm: f64,
    pub regularization: f64,
    pub alpha_pr: f64,
    pub alpha_du: f64,
    pub line_search_trials: usize,
    pub restoration: bool,
}

const TAU_MIN: f64 = 0.99;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_SIGMA: f64 = 1e10;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const DELTA_SWITCH: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const ETA_PHI: f64 = 1e-8;
const GAMMA_ALPHA: f64 = 0.05;
const KAPPA_SOC: f64 = 0.99;
const MAX_SOC: usize = 4;
const S_MAX: f64 = 100.0;
const DELTA_C: f64 = 1e-9;
const DELTA_W0: f64 = 1e-4;
const DELTA_W_MAX: f64 = 1e40;

/// Problem seen by the iteration: fixed variables removed, slacks added,
/// objective and rows scaled.
struct Internal<'a, P: Nlp + ?Sized> {
    nlp: &'a P,
    m: usize,
    template: Vec<f64>,
    free: Vec<usize>,
    nw: usize,
    lw: Vec<f64>,
    uw: Vec<f64>,
    /// Scaled right-hand side of equality rows; `NaN` marks inequality rows.
    target: Vec<f64>,
    slack_of: Vec<usize>,
    sf: f64,
    sc: Vec<f64>,
    /// Kept Jacobian entries: (row, w column, index in the problem's list).
    jac: Vec<(usize, usize, usize)>,
    /// All entries of A including slack columns.
    a_rows: Vec<usize>,
    a_cols: Vec<usize>,
    hess: Vec<(usize, usize, usize)>,
    n_jac_all: usize,
    n_hess_all: usize,
}

impl<'a, P: Nlp + ?Sized> Internal<'a, P> {
    fn new(nlp: &'a P, x0: &[f64]) -> Self {
        let n = nlp.n();
        let m = nlp.m();
        let (xl, xu) = nlp.variable_bounds();
        let (cl, cu) = nlp.constraint_bounds();
        let mut template = x0.to_vec();
        let mut free = Vec::new();
        let mut pos = vec![NONE; n];
        for i in 0..n {
            if xl[i] == xu[i] {
                template[i] = xl[i];
            } else {
                pos[i] = free.len();
                free.push(i);
            }
        }
        let mut lw: Vec<f64> = free.iter().map(|&i| xl[i]).collect();
        let mut uw: Vec<f64> = free.iter().map(|&i| xu[i]).collect();
        let mut slack_of = vec![NONE; m];
        let mut target = vec![f64::NAN; m];
        for r in 0..m {
            if cl[r] == cu[r] {
                target[r] = cl[r];
            } else {
                slack_of[r] = lw.len();
                lw.push(cl[r]);
                uw.push(cu[r]);
            }
        }
        let nw = lw.len();
        let (jr, jc) = nlp.jacobian_structure();
        let mut jac = Vec::new();
        for (k, (&r, &c)) in jr.iter().zip(jc).enumerate() {
            if pos[c] != NONE {
                jac.push((r, pos[c], k));
            }
        }
        let mut a_rows: Vec<usize> = jac.iter().map(|e| e.0).collect();
        let mut a_cols: Vec<usize> = jac.iter().map(|e| e.1).collect();
        for r in 0..m {
            if slack_of[r] != NONE {
                a_rows.push(r);
                a_cols.push(slack_of[r]);
            }
        }
        let (hr, hc) = nlp.hessian_structure();
        let mut hess = Vec::new();
        for (k, (&r, &c)) in hr.iter().zip(hc).enumerate() {
            if pos[r] != NONE && pos[c] != NONE {
                let (a, b) = (pos[r].max(pos[c]), pos[r].min(pos[c]));
                hess.push((a, b, k));
            }
        }
        Self {
            nlp,
            m,
            template,
            free,
            nw,
            lw,
            uw,
            target,
            slack_of,
            sf: 1.0,
            sc: vec![1.0; m],
            jac,
            a_rows,
            a_cols,
            hess,
            n_jac_all: jr.len(),
            n_hess_all: hr.len(),
        }
    }

    fn nx(&self) -> usize {
        self.free.len()
    }

    fn x_of(&self, w: &[f64]) -> Vec<f64> {
        let mut x = self.template.clone();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = w[k];
        }
        x
    }

    fn objective(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(self.sf * self.nlp.objective(x)?)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut g = vec![0.0; x.len()];
        self.nlp.gradient(x, &mut g)?;
        let mut gw = vec![0.0; self.nw];
        for (k, &i) in self.free.iter().enumerate() {
            gw[k] = self.sf * g[i];
        }
        Ok(gw)
    }

    /// Raw constraint values, unscaled.
    fn raw_constraints(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut c = vec![0.0; self.m];
        self.nlp.constraints(x, &mut c)?;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::new("constraint value is not finite"));
        }
        Ok(c)
    }

    fn residual(&self, w: &[f64], c: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|r| {
                let v = self.sc[r] * c[r];
                if self.slack_of[r] == NONE {
                    v - self.sc[r] * self.target[r]
                } else {
                    v - w[self.slack_of[r]]
                }
            })
            .collect()
    }

    fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut raw = vec![0.0; self.n_jac_all];
        self.nlp.jacobian_values(x, &mut raw)?;
        let mut v: Vec<f64> = self.jac.iter().map(|&(r, _, k)| self.sc[r] * raw[k]).collect();
        v.extend(std::iter::repeat_n(-1.0, self.a_rows.len() - self.jac.len()));
        if v.iter().any(|a| !a.is_finite()) {
            return Err(EvalError::new("Jacobian entry is not finite"));
        }
        Ok(v)
    }

    fn hessian(&self, x: &[f64], lambda: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut raw = vec![0.0; self.n_hess_all];
        let scaled: Vec<f64> = lambda.iter().zip(&self.sc).map(|(l, s)| l * s).collect();
        self.nlp.hessian_values(x, self.sf, &scaled, &mut raw)?;
        Ok(self.hess.iter().map(|&(_, _, k)| raw[k]).collect())
    }

    fn at_v(&self, a: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nw];
        for ((&r, &c), &val) in self.a_rows.iter().zip(&self.a_cols).zip(a) {
            out[c] += val * v[r];
        }
        out
    }

    fn a_v(&self, a: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for ((&r, &c), &val) in self.a_rows.iter().zip(&self.a_cols).zip(a) {
            out[r] += val * v[c];
        }
        out
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Trial point quantities.
struct Eval {
    x: Vec<f64>,
    f: f64,
    c: Vec<f64>,
    d: Vec<f64>,
    theta: f64,
}

struct Kkt {
    sym: SymbolicLdl,
    rows: Vec<usize>,
    cols: Vec<usize>,
    dim: usize,
}

impl Kkt {
    fn new<P: Nlp + ?Sized>(p: &Internal<'_, P>) -> Self {
        let dim = p.nw + p.m;
        let mut rows: Vec<usize> = (0..dim).collect();
        let mut cols: Vec<usize> = (0..dim).collect();
        for &(a, b, _) in &p.hess {
            rows.push(a);
            cols.push(b);
        }
        for (&r, &c) in p.a_rows.iter().zip(&p.a_cols) {
            rows.push(p.nw + r);
            cols.push(c);
        }
        let sym = SymbolicLdl::analyze(dim, &rows, &cols).expect("KKT pattern has a full diagonal");
        Self { sym, rows, cols, dim }
    }

    fn values(&self, nw: usize, primal_diag: &[f64], dual_diag: f64, hess: &[f64], a: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.rows.len());
        v.extend_from_slice(primal_diag);
        v.extend(std::iter::repeat_n(-dual_diag, self.dim - nw));
        v.extend_from_slice(hess);
        v.extend_from_slice(a);
        v
    }

    fn solve(&self, f: &NumericLdl, vals: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.sym.solve(f, &mut x);
        let scale = 1.0 + inf_norm(rhs);
        let mut r = vec![0.0; self.dim];
        for _ in 0..10 {
            sym_matvec(&self.rows, &self.cols, vals, &x, &mut r);
            for k in 0..self.dim {
                r[k] = rhs[k] - r[k];
            }
            if inf_norm(&r) <= 1e-12 * scale {
                break;
            }
            self.sym.solve(f, &mut r);
            for k in 0..self.dim {
                x[k] += r[k];
            }
        }
        x
    }
}

struct Solver<'a, P: Nlp + ?Sized> {
    p: Internal<'a, P>,
    opts: SolverOptions,
    kkt: Kkt,
    w: Vec<f64>,
    lambda: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    cur: Eval,
    grad: Vec<f64>,
    a: Vec<f64>,
    mu: f64,
    tau: f64,
    filter: Vec<(f64, f64)>,
    theta_max: f64,
    theta_min: f64,
    last_delta_w: f64,
    iter: usize,
    log: Vec<IterationRecord>,
}

enum Outcome {
    Converged,
    Infeasible(String),
    Limit,
    Failed(String),
}

pub fn solve<P: Nlp + ?Sized>(nlp: &P, x0: &[f64], opts: &SolverOptions) -> SolveResult {
    #[cfg(not(target_arch = "wasm32"))]
    let start = std::time::Instant::now();
    let mut result = match Solver::start(nlp, x0, opts) {
        Ok(mut s) => {
            let outcome = s.run();
            s.finish(outcome)
        }
        Err(msg) => SolveResult {
            status: SolveStatus::Error,
            x: x0.to_vec(),
            lambda: vec![0.0; nlp.m()],
            z_lower: vec![0.0; nlp.n()],
            z_upper: vec![0.0; nlp.n()],
            objective: f64::NAN,
            violation: f64::INFINITY,
            kkt_error: f64::INFINITY,
            iterations: 0,
            wall_time_s: 0.0,
            message: msg,
            log: Vec::new(),
        },
    };
    #[cfg(not(target_arch = "wasm32"))]
    {
        result.wall_time_s = start.elapsed().as_secs_f64();
    }
    #[cfg(target_arch = "wasm32")]
    {
        result.wall_time_s = 0.0;
    }
    result
}

impl<'a, P: Nlp + ?Sized> Solver<'a, P> {
    fn start(nlp: &'a P, x0: &[f64], opts: &SolverOptions) -> Result<Self, String> {
        opts.validate()?;
        if x0.len() != nlp.n() {
            return Err(format!("initial point has {} entries, expected {}", x0.len(), nlp.n()));
        }
        let mut p = Internal::new(nlp, x0);
        let nx = p.nx();
        let mut w = vec![0.0; p.nw];
        for k in 0..nx {
            w[k] = x0[p.free[k]];
        }
        push_into_bounds(&mut w[..nx], &p.lw[..nx], &p.uw[..nx], opts.bound_push);

        // Gradient-based scaling at the starting point.
        let x = p.x_of(&w);
        let g = p.gradient(&x).map_err(|e| format!("objective gradient at start: {e}"))?;
        let gmax = inf_norm(&g);
        if gmax > opts.gradient_scale_limit {
            p.sf = opts.gradient_scale_limit / gmax;
        }
        let jac = p.jacobian(&x).map_err(|e| format!("Jacobian at start: {e}"))?;
        let mut row_max = vec![0.0f64; p.m];
        for (&(r, _, _), v) in p.jac.iter().zip(&jac) {
            row_max[r] = row_max[r].max(v.abs());
        }
        for r in 0..p.m {
            if row_max[r] > opts.gradient_scale_limit {
                p.sc[r] = opts.gradient_scale_limit / row_max[r];
            }
        }
        for r in 0..p.m {
            let k = p.slack_of[r];
            if k != NONE {
                p.lw[k] *= p.sc[r];
                p.uw[k] *= p.sc[r];
            }
        }
        let c = p.raw_constraints(&x).map_err(|e| format!("constraints at start: {e}"))?;
        for r in 0..p.m {
            let k = p.slack_of[r];
            if k != NONE {
                w[k] = p.sc[r] * c[r];
            }
        }
        let (lo, hi) = (p.lw[nx..].to_vec(), p.uw[nx..].to_vec());
        push_into_bounds(&mut w[nx..], &lo, &hi, opts.bound_push);

        let kkt = Kkt::new(&p);
        let cur = evaluate(&p, &w).map_err(|e| format!("evaluation at start: {e}"))?;
        let x = cur.x.clone();
        let grad = p.gradient(&x).map_err(|e| e.to_string())?;
        let a = p.jacobian(&x).map_err(|e| e.to_string())?;
        let zl: Vec<f64> = p.lw.iter().map(|l| if l.is_finite() { 1.0 } else { 0.0 }).collect();
        let zu: Vec<f64> = p.uw.iter().map(|u| if u.is_finite() { 1.0 } else { 0.0 }).collect();
        let theta0 = cur.theta;
        let mut s = Self {
            p,
            opts: opts.clone(),
            kkt,
            w,
            lambda: Vec::new(),
            zl,
            zu,
            cur,
            grad,
            a,
            mu: opts.mu_init,
            tau: TAU_MIN.max(1.0 - opts.mu_init),
            filter: Vec::new(),
            theta_max: 1e4 * theta0.max(1.0),
            theta_min: 1e-4 * theta0.max(1.0),
            last_delta_w: 0.0,
            iter: 0,
            log: Vec::new(),
        };
        s.lambda = s.least_squares_multipliers();
        Ok(s)
    }

    fn least_squares_multipliers(&self) -> Vec<f64> {
        let p = &self.p;
        if p.m == 0 {
            return Vec::new();
        }
        let hess = vec![0.0; p.hess.len()];
        let diag = vec![1.0; p.nw];
        let vals = self.kkt.values(p.nw, &diag, DELTA_C, &hess, &self.a);
        let Ok(f) = self.kkt.sym.factor(&vals, 0.0) else {
            return vec![0.0; p.m];
        };
        let mut rhs = vec![0.0; self.kkt.dim];
        for k in 0..p.nw {
            rhs[k] = -(self.grad[k] - self.zl[k] + self.zu[k]);
        }
        let sol = self.kkt.solve(&f, &vals, &rhs);
        let lambda = sol[p.nw..].to_vec();
        if inf_norm(&lambda) > 1e3 || lambda.iter().any(|v| !v.is_finite()) {
            vec![0.0; p.m]
        } else {
            lambda
        }
    }

    fn slacks(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let sl = w.iter().zip(&self.p.lw).map(|(x, l)| x - l).collect();
        let su = w.iter().zip(&self.p.uw).map(|(x, u)| u - x).collect();
        (sl, su)
    }

    fn barrier(&self, w: &[f64], f: f64) -> f64 {
        let mut phi = f;
        for k in 0..self.p.nw {
            if self.p.lw[k].is_finite() {
                phi -= self.mu * (w[k] - self.p.lw[k]).ln();
            }
            if self.p.uw[k].is_finite() {
                phi -= self.mu * (self.p.uw[k] - w[k]).ln();
            }
        }
        phi
    }

    fn barrier_gradient(&self) -> Vec<f64> {
        let (sl, su) = self.slacks(&self.w);
        (0..self.p.nw)
            .map(|k| {
                let mut g = self.grad[k];
                if self.p.lw[k].is_finite() {
                    g -= self.mu / sl[k];
                }
                if self.p.uw[k].is_finite() {
                    g += self.mu / su[k];
                }
                g
            })
            .collect()
    }

    /// Scaled optimality error for barrier parameter `mu` and its parts.
    fn optimality_error(&self, mu: f64) -> (f64, f64, f64, f64) {
        let p = &self.p;
        let at_l = p.at_v(&self.a, &self.lambda);
        let (sl, su) = self.slacks(&self.w);
        let mut dual = 0.0f64;
        let mut compl = 0.0f64;
        for k in 0..p.nw {
            dual = dual.max((self.grad[k] + at_l[k] - self.zl[k] + self.zu[k]).abs());
            if p.lw[k].is_finite() {
                compl = compl.max((sl[k] * self.zl[k] - mu).abs());
            }
            if p.uw[k].is_finite() {
                compl = compl.max((su[k] * self.zu[k] - mu).abs());
            }
        }
        let primal = inf_norm(&self.cur.d);
        let z1 = one_norm(&self.zl) + one_norm(&self.zu);
        let nb = (self.zl.iter().filter(|&&z| z != 0.0).count() + self.zu.iter().filter(|&&z| z != 0.0).count()).max(1);
        let sd = (S_MAX.max((one_norm(&self.lambda) + z1) / (p.m + nb) as f64)) / S_MAX;
        let scc = (S_MAX.max(z1 / nb as f64)) / S_MAX;
        let e = (dual / sd).max(primal).max(compl / scc);
        (e, primal, dual, compl)
    }

    fn unscaled_violation(&self) -> f64 {
        let (cl, cu) = self.p.nlp.constraint_bounds();
        let mut v = 0.0f64;
        for r in 0..self.p.m {
            let c = self.cur.c[r];
            v = v.max(cl[r] - c).max(c - cu[r]);
        }
        v
    }

    fn record(&mut self, alpha_pr: f64, alpha_du: f64, step: f64, reg: f64, trials: usize, restoration: bool) {
        let (_, pr, du, _) = self.optimality_error(self.mu);
        self.log.push(IterationRecord {
            iter: self.iter,
            objective: self.cur.f / self.p.sf,
            inf_pr: pr,
            inf_du: du,
            mu: self.mu,
            step_norm: step,
            regularization: reg,
            alpha_pr,
            alpha_du,
            line_search_trials: trials,
            restoration,
        });
        if self.opts.verbose {
            log::info!(
                "iter {:4} f {:+.8e} pr {:.2e} du {:.2e} mu {:.1e} reg {:.1e} a {:.2e} ls {}{}",
                self.iter,
                self.cur.f / self.p.sf,
                pr,
                du,
                self.mu,
                reg,
                alpha_pr,
                trials,
                if restoration { " r" } else { "" }
            );
        }
    }

    fn run(&mut self) -> Outcome {
        self.record(0.0, 0.0, 0.0, 0.0, 0, false);
        let mut force_mu_update = false;
        loop {
            let (e0, _, _, _) = self.optimality_error(0.0);
            if e0 <= self.opts.kkt_tol && self.unscaled_violation() <= self.opts.kkt_tol {
                return Outcome::Converged;
            }
            if self.iter >= self.opts.max_iter {
                return Outcome::Limit;
            }
            // Monotone barrier update.
            loop {
                let (emu, _, _, _) = self.optimality_error(self.mu);
                let floor = self.opts.kkt_tol / 10.0;
                if (emu > KAPPA_EPS * self.mu && !force_mu_update) || self.mu <= floor {
                    break;
                }
                force_mu_update = false;
                self.mu = floor.max((self.opts.kappa_mu * self.mu).min(self.mu.powf(self.opts.theta_mu)));
                self.tau = TAU_MIN.max(1.0 - self.mu);
                self.filter.clear();
            }

            let x = self.cur.x.clone();
            let hess = match self.p.hessian(&x, &self.lambda) {
                Ok(h) => h,
                Err(e) => return Outcome::Failed(format!("Hessian evaluation failed: {e}")),
            };
            let (sl, su) = self.slacks(&self.w);
            let sigma: Vec<f64> = (0..self.p.nw)
                .map(|k| {
                    let mut s = 0.0;
                    if self.p.lw[k].is_finite() {
                        s += self.zl[k] / sl[k];
                    }
                    if self.p.uw[k].is_finite() {
                        s += self.zu[k] / su[k];
                    }
                    s
                })
                .collect();
            let Some((fac, vals, reg)) = self.factor_with_inertia(&sigma, &hess) else {
                return Outcome::Failed("KKT regularization exceeded its limit".into());
            };
            let gphi = self.barrier_gradient();
            let at_l = self.p.at_v(&self.a, &self.lambda);
            let mut rhs = vec![0.0; self.kkt.dim];
            for k in 0..self.p.nw {
                rhs[k] = -(gphi[k] + at_l[k]);
            }
            for r in 0..self.p.m {
                rhs[self.p.nw + r] = -self.cur.d[r];
            }
            let sol = self.kkt.solve(&fac, &vals, &rhs);
            let dw = sol[..self.p.nw].to_vec();
            let dl = sol[self.p.nw..].to_vec();
            if dw.iter().chain(&dl).any(|v| !v.is_finite()) {
                return Outcome::Failed("Newton step is not finite".into());
            }
            let (dzl, dzu) = self.bound_multiplier_steps(&dw, &sl, &su);

            let alpha_max = self.fraction_to_boundary(&dw);
            let alpha_z = self.dual_fraction_to_boundary(&dzl, &dzu);
            let tiny = dw
                .iter()
                .zip(&self.w)
                .all(|(d, w)| d.abs() <= 10.0 * f64::EPSILON * (1.0 + w.abs()));

            let step = inf_norm(&dw);
            self.iter += 1;
            if tiny {
                let w_new: Vec<f64> = self.w.iter().zip(&dw).map(|(w, d)| w + alpha_max * d).collect();
                if let Ok(ev) = evaluate(&self.p, &w_new) {
                    self.accept(w_new, ev, &dl, alpha_max, &dzl, &dzu, alpha_z);
                }
                force_mu_update = true;
                self.record(alpha_max, alpha_z, step, reg, 0, false);
                continue;
            }

            match self.line_search(&dw, alpha_max, &gphi, &fac, &vals, &rhs) {
                Some((w_new, ev, alpha, trials)) => {
                    self.accept(w_new, ev, &dl, alpha, &dzl, &dzu, alpha_z);
                    self.record(alpha, alpha_z, step, reg, trials, false);
                }
                None => match self.restoration() {
                    Ok(()) => {}
                    Err(outcome) => return outcome,
                },
            }
        }
    }

    fn bound_multiplier_steps(&self, dw: &[f64], sl: &[f64], su: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nw = self.p.nw;
        let mut dzl = vec![0.0; nw];
        let mut dzu = vec![0.0; nw];
        for k in 0..nw {
            if self.p.lw[k].is_finite() {
                dzl[k] = self.mu / sl[k] - self.zl[k] - self.zl[k] / sl[k] * dw[k];
            }
            if self.p.uw[k].is_finite() {
                dzu[k] = self.mu / su[k] - self.zu[k] + self.zu[k] / su[k] * dw[k];
            }
        }
        (dzl, dzu)
    }

    #[allow(clippy::too_many_arguments)]
    fn accept(&mut self, w: Vec<f64>, ev: Eval, dl: &[f64], alpha: f64, dzl: &[f64], dzu: &[f64], alpha_z: f64) {
        self.w = w;
        self.cur = ev;
        for r in 0..self.p.m {
            self.lambda[r] += alpha * dl[r];
        }
        for k in 0..self.p.nw {
            self.zl[k] += alpha_z * dzl[k];
            self.zu[k] += alpha_z * dzu[k];
        }
        self.refresh_derivatives();
        self.safeguard_multipliers();
    }

    fn refresh_derivatives(&mut self) {
        let x = self.cur.x.clone();
        // The point was evaluated successfully, so derivatives exist.
        self.grad = self.p.gradient(&x).unwrap_or_else(|_| vec![0.0; self.p.nw]);
        if let Ok(a) = self.p.jacobian(&x) {
            self.a = a;
        }
    }

    fn safeguard_multipliers(&mut self) {
        let (sl, su) = self.slacks(&self.w);
        for k in 0..self.p.nw {
            if self.p.lw[k].is_finite() {
                let lo = self.mu / (KAPPA_SIGMA * sl[k]);
                let hi = KAPPA_SIGMA * self.mu / sl[k];
                self.zl[k] = self.zl[k].clamp(lo, hi);
            }
            if self.p.uw[k].is_finite() {
                let lo = self.mu / (KAPPA_SIGMA * su[k]);
                let hi = KAPPA_SIGMA * self.mu / su[k];
                self.zu[k] = self.zu[k].clamp(lo, hi);
            }
        }
    }

    fn factor_with_inertia(&mut self, sigma: &[f64], hess: &[f64]) -> Option<(NumericLdl, Vec<f64>, f64)> {
        let nw = self.p.nw;
        let m = self.p.m;
        let mut delta_w = 0.0;
        let mut delta_c = DELTA_C;
        let mut first = true;
        loop {
            let diag: Vec<f64> = sigma.iter().map(|s| s + delta_w).collect();
            let vals = self.kkt.values(nw, &diag, delta_c, hess, &self.a);
            let ok = match self.kkt.sym.factor(&vals, 0.0) {
                Ok(f) if f.positive == nw && f.negative == m => Some(f),
                Ok(_) => None,
                Err(_) => {
                    delta_c = delta_c.max(1e-8 * self.mu.powf(0.25));
                    None
                }
            };
            if let Some(f) = ok {
                if delta_w > 0.0 {
                    self.last_delta_w = delta_w;
                }
                return Some((f, vals, delta_w));
            }
            delta_w = if first {
                first = false;
                if self.last_delta_w == 0.0 {
                    DELTA_W0
                } else {
                    self.opts.min_regularization.max(self.last_delta_w / 3.0)
                }
            } else if self.last_delta_w == 0.0 {
                100.0 * delta_w
            } else {
                8.0 * delta_w
            };
            if delta_w > DELTA_W_MAX {
                return None;
            }
        }
    }

    fn fraction_to_boundary(&self, dw: &[f64]) -> f64 {
        let mut alpha = 1.0f64;
        for k in 0..self.p.nw {
            if dw[k] < 0.0 && self.p.lw[k].is_finite() {
                alpha = alpha.min(-self.tau * (self.w[k] - self.p.lw[k]) / dw[k]);
            }
            if dw[k] > 0.0 && self.p.uw[k].is_finite() {
                alpha = alpha.min(self.tau * (self.p.uw[k] - self.w[k]) / dw[k]);
            }
        }
        alpha
    }

    fn dual_fraction_to_boundary(&self, dzl: &[f64], dzu: &[f64]) -> f64 {
        let mut alpha = 1.0f64;
        for k in 0..self.p.nw {
            if dzl[k] < 0.0 && self.zl[k] > 0.0 {
                alpha = alpha.min(-self.tau * self.zl[k] / dzl[k]);
            }
            if dzu[k] < 0.0 && self.zu[k] > 0.0 {
                alpha = alpha.min(-self.tau * self.zu[k] / dzu[k]);
            }
        }
        alpha
    }

    fn filter_accepts(&self, theta: f64, phi: f64) -> bool {
        theta <= self.theta_max && !self.filter.iter().any(|&(ft, fp)| theta >= ft && phi >= fp)
    }

    /// Filter line search. Returns the accepted point, its step length and
    /// the number of trials, or `None` when the step became too short.
    fn line_search(
        &mut self,
        dw: &[f64],
        alpha_max: f64,
        gphi: &[f64],
        fac: &NumericLdl,
        vals: &[f64],
        rhs: &[f64],
    ) -> Option<(Vec<f64>, Eval, f64, usize)> {
        let theta = self.cur.theta;
        let phi = self.barrier(&self.w, self.cur.f);
        let gd: f64 = gphi.iter().zip(dw).map(|(g, d)| g * d).sum();
        let alpha_min = if gd < 0.0 {
            let mut a = GAMMA_THETA.min(GAMMA_PHI * theta / -gd);
            if theta <= self.theta_min {
                a = a.min(DELTA_SWITCH * theta.powf(S_THETA) / (-gd).powf(S_PHI));
            }
            GAMMA_ALPHA * a
        } else {
            GAMMA_ALPHA * GAMMA_THETA
        };
        let mut alpha = alpha_max;
        let mut trials = 0;
        loop {
            trials += 1;
            let w_trial: Vec<f64> = self.w.iter().zip(dw).map(|(w, d)| w + alpha * d).collect();
            if let Ok(ev) = evaluate(&self.p, &w_trial) {
                let phi_t = self.barrier(&w_trial, ev.f);
                if phi_t.is_finite() {
                    if let Some(f_type) = self.acceptable(theta, phi, gd, alpha, ev.theta, phi_t) {
                        if !f_type {
                            self.filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                        }
                        return Some((w_trial, ev, alpha, trials));
                    }
                }
                if trials == 1 && ev.theta >= theta {
                    if let Some(res) = self.second_order_correction(alpha, &ev, theta, phi, gd, fac, vals, rhs) {
                        return Some((res.0, res.1, alpha, trials));
                    }
                }
            }
            alpha *= 0.5;
            if alpha < alpha_min {
                return None;
            }
        }
    }

    /// Acceptance test; `Some(true)` for an objective-decrease step that
    /// leaves the filter unchanged.
    fn acceptable(&self, theta: f64, phi: f64, gd: f64, alpha: f64, theta_t: f64, phi_t: f64) -> Option<bool> {
        if !self.filter_accepts(theta_t, phi_t) {
            return None;
        }
        let switching = gd < 0.0 && theta <= self.theta_min && alpha * (-gd).powf(S_PHI) > DELTA_SWITCH * theta.powf(S_THETA);
        if switching {
            if phi_t <= phi + ETA_PHI * alpha * gd {
                return Some(true);
            }
            return None;
        }
        if theta_t <= (1.0 - GAMMA_THETA) * theta || phi_t <= phi - GAMMA_PHI * theta {
            return Some(false);
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn second_order_correction(
        &mut self,
        alpha: f64,
        first: &Eval,
        theta: f64,
        phi: f64,
        gd: f64,
        fac: &NumericLdl,
        vals: &[f64],
        rhs: &[f64],
    ) -> Option<(Vec<f64>, Eval)> {
        let nw = self.p.nw;
        let mut c_soc: Vec<f64> = self.cur.d.iter().map(|d| alpha * d).collect();
        let mut trial_d = first.d.clone();
        let mut theta_prev = first.theta;
        for _ in 0..MAX_SOC {
            for r in 0..self.p.m {
                c_soc[r] += trial_d[r];
            }
            let mut rhs2 = rhs.to_vec();
            for r in 0..self.p.m {
                rhs2[nw + r] = -c_soc[r];
            }
            let sol = self.kkt.solve(fac, vals, &rhs2);
            let dw = &sol[..nw];
            let a_soc = self.fraction_to_boundary(dw);
            let w_soc: Vec<f64> = self.w.iter().zip(dw).map(|(w, d)| w + a_soc * d).collect();
            let ev = evaluate(&self.p, &w_soc).ok()?;
            let phi_s = self.barrier(&w_soc, ev.f);
            if !phi_s.is_finite() {
                return None;
            }
            if let Some(f_type) = self.acceptable(theta, phi, gd, alpha, ev.theta, phi_s) {
                if !f_type {
                    self.filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                }
                return Some((w_soc, ev));
            }
            if ev.theta > KAPPA_SOC * theta_prev {
                return None;
            }
            theta_prev = ev.theta;
            trial_d = ev.d;
        }
        None
    }

    /// Reduces infeasibility by regularized Gauss-Newton steps on
    /// `||d(w)||² / 2` with a proximity term and a log barrier on the bounds.
    fn restoration(&mut self) -> Result<(), Outcome> {
        let nw = self.p.nw;
        let m = self.p.m;
        let theta_start = self.cur.theta;
        let phi_start = self.barrier(&self.w, self.cur.f);
        self.filter.push(((1.0 - GAMMA_THETA) * theta_start, phi_start - GAMMA_PHI * theta_start));
        let w_ref = self.w.clone();
        let dr: Vec<f64> = w_ref.iter().map(|w| 1.0f64.min(1.0 / w.abs().max(1e-300))).collect();
        let zeta = self.mu.sqrt();
        let mut mu_r = self.mu.max(inf_norm(&self.cur.d));
        let hess0 = vec![0.0; self.p.hess.len()];
        let mut stall = 0;
        loop {
            if self.iter >= self.opts.max_iter {
                return Err(Outcome::Limit);
            }
            self.iter += 1;
            let (sl, su) = self.slacks(&self.w);
            let mut diag = vec![0.0; nw];
            let mut grad = vec![0.0; nw];
            for k in 0..nw {
                diag[k] = zeta * dr[k] + 1e-8;
                grad[k] = zeta * dr[k] * (self.w[k] - w_ref[k]);
                if self.p.lw[k].is_finite() {
                    diag[k] += mu_r / (sl[k] * sl[k]);
                    grad[k] -= mu_r / sl[k];
                }
                if self.p.uw[k].is_finite() {
                    diag[k] += mu_r / (su[k] * su[k]);
                    grad[k] += mu_r / su[k];
                }
            }
            let vals = self.kkt.values(nw, &diag, 1.0, &hess0, &self.a);
            let fac = match self.kkt.sym.factor(&vals, 0.0) {
                Ok(f) => f,
                Err(e) => return Err(Outcome::Failed(format!("restoration factorization failed: {e}"))),
            };
            let mut rhs = vec![0.0; nw + m];
            for k in 0..nw {
                rhs[k] = -grad[k];
            }
            for r in 0..m {
                rhs[nw + r] = -self.cur.d[r];
            }
            let sol = self.kkt.solve(&fac, &vals, &rhs);
            let dw = sol[..nw].to_vec();
            let alpha_max = self.fraction_to_boundary(&dw);
            let merit = |s: &Self, w: &[f64], d: &[f64]| -> f64 {
                let mut v = 0.5 * d.iter().map(|x| x * x).sum::<f64>();
                for k in 0..nw {
                    v += 0.5 * zeta * dr[k] * (w[k] - w_ref[k]).powi(2);
                    if s.p.lw[k].is_finite() {
                        v -= mu_r * (w[k] - s.p.lw[k]).ln();
                    }
                    if s.p.uw[k].is_finite() {
                        v -= mu_r * (s.p.uw[k] - w[k]).ln();
                    }
                }
                v
            };
            let m0 = merit(self, &self.w, &self.cur.d);
            let ad = self.p.a_v(&self.a, &dw);
            let slope: f64 = grad.iter().zip(&dw).map(|(g, d)| g * d).sum::<f64>()
                + self.cur.d.iter().zip(&ad).map(|(d, a)| d * a).sum::<f64>();
            let mut alpha = alpha_max;
            let mut accepted = None;
            for _ in 0..40 {
                let w_t: Vec<f64> = self.w.iter().zip(&dw).map(|(w, d)| w + alpha * d).collect();
                if let Ok(ev) = evaluate(&self.p, &w_t) {
                    let mt = merit(self, &w_t, &ev.d);
                    if mt.is_finite() && mt <= m0 + 1e-4 * alpha * slope.min(0.0) {
                        accepted = Some((w_t, ev));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((w_new, ev)) = accepted else {
                return Err(Outcome::Failed("restoration line search failed".into()));
            };
            let progress = ev.theta < 0.999 * self.cur.theta;
            self.w = w_new;
            self.cur = ev;
            self.refresh_derivatives();
            let (sl, su) = self.slacks(&self.w);
            for k in 0..nw {
                if self.p.lw[k].is_finite() {
                    self.zl[k] = self.mu / sl[k];
                }
                if self.p.uw[k].is_finite() {
                    self.zu[k] = self.mu / su[k];
                }
            }
            self.record(alpha, 0.0, inf_norm(&dw), 0.0, 1, true);
            mu_r = (0.2 * mu_r).max(1e-2 * self.mu);
            let phi = self.barrier(&self.w, self.cur.f);
            if self.cur.theta <= 0.9 * theta_start && self.filter_accepts(self.cur.theta, phi) {
                self.lambda = self.least_squares_multipliers();
                return Ok(());
            }
            stall = if progress { 0 } else { stall + 1 };
            let at_d = self.p.at_v(&self.a, &self.cur.d);
            let stationary = inf_norm(&at_d) <= 1e-9 * (1.0 + inf_norm(&self.cur.d));
            if (stationary || stall >= 20) && inf_norm(&self.cur.d) > self.opts.kkt_tol {
                return Err(Outcome::Infeasible(format!(
                    "restoration converged to an infeasible point (||c|| = {:.3e})",
                    inf_norm(&self.cur.d)
                )));
            }
        }
    }

    fn finish(self, outcome: Outcome) -> SolveResult {
        let p = &self.p;
        let (status, message) = match outcome {
            Outcome::Converged => (SolveStatus::LocalOptimum, "optimal solution found".to_string()),
            Outcome::Infeasible(m) => (SolveStatus::Infeasible, m),
            Outcome::Limit => (SolveStatus::IterationLimit, "iteration limit reached".to_string()),
            Outcome::Failed(m) => (SolveStatus::Error, m),
        };
        let n = p.nlp.n();
        let x = self.cur.x.clone();
        let lambda: Vec<f64> = self.lambda.iter().zip(&p.sc).map(|(l, s)| l * s / p.sf).collect();
        let mut z_lower = vec![0.0; n];
        let mut z_upper = vec![0.0; n];
        for (k, &i) in p.free.iter().enumerate() {
            z_lower[i] = self.zl[k] / p.sf;
            z_upper[i] = self.zu[k] / p.sf;
        }
        let (xl, xu) = p.nlp.variable_bounds();
        let mut violation = self.unscaled_violation();
        for i in 0..n {
            violation = violation.max(xl[i] - x[i]).max(x[i] - xu[i]);
        }
        let (kkt_error, _, _, _) = self.optimality_error(0.0);
        SolveResult {
            status,
            objective: self.cur.f / p.sf,
            x,
            lambda,
            z_lower,
            z_upper,
            violation: violation.max(0.0),
            kkt_error,
            iterations: self.iter,
            wall_time_s: 0.0,
            message,
            log: self.log,
        }
    }
}

fn evaluate<P: Nlp + ?Sized>(p: &Internal<'_, P>, w: &[f64]) -> Result<Eval, EvalError> {
    let x = p.x_of(w);
    let f = p.objective(&x)?;
    if !f.is_finite() {
        return Err(EvalError::new("objective is not finite"));
    }
    let c = p.raw_constraints(&x)?;
    let d = p.residual(w, &c);
    let theta = one_norm(&d);
    Ok(Eval { x, f, c, d, theta })
}

/// Moves a point strictly inside its bounds.
fn push_into_bounds(w: &mut [f64], lo: &[f64], hi: &[f64], push: f64) {
    for k in 0..w.len() {
        let (l, u) = (lo[k], hi[k]);
        let gap = if l.is_finite() && u.is_finite() { u - l } else { f64::INFINITY };
        if l.is_finite() {
            let pl = (push * l.abs().max(1.0)).min(push * gap);
            w[k] = w[k].max(l + pl);
        }
        if u.is_finite() {
            let pu = (push * u.abs().max(1.0)).min(push * gap);
            w[k] = w[k].min(u - pu);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x0 - 1)² + (x1 - 2)² s.t. x0 + x1 = 1, x0 ≥ 0, x1 ≤ 0.5 (inequality row).
    struct Tiny {
        xl: Vec<f64>,
        xu: Vec<f64>,
        cl: Vec<f64>,
        cu: Vec<f64>,
    }

    impl Nlp for Tiny {
        fn n(&self) -> usize {
            2
        }
        fn m(&self) -> usize {
            2
        }
        fn variable_bounds(&self) -> (&[f64], &[f64]) {
            (&self.xl, &self.xu)
        }
        fn constraint_bounds(&self) -> (&[f64], &[f64]) {
            (&self.cl, &self.cu)
        }
        fn objective(&self, x: &[f64]) -> Result<f64, EvalError> {
            Ok((x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2))
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) -> Result<(), EvalError> {
            g[0] = 2.0 * (x[0] - 1.0);
            g[1] = 2.0 * (x[1] - 2.0);
            Ok(())
        }
        fn constraints(&self, x: &[f64], c: &mut [f64]) -> Result<(), EvalError> {
            c[0] = x[0] + x[1];
            c[1] = x[1];
            Ok(())
        }
        fn jacobian_structure(&self) -> (&[usize], &[usize]) {
            (&[0, 0, 1], &[0, 1, 1])
        }
        fn jacobian_values(&self, _x: &[f64], v: &mut [f64]) -> Result<(), EvalError> {
            v.copy_from_slice(&[1.0, 1.0, 1.0]);
            Ok(())
        }
        fn hessian_structure(&self) -> (&[usize], &[usize]) {
            (&[0, 1], &[0, 1])
        }
        fn hessian_values(&self, _x: &[f64], s: f64, _l: &[f64], v: &mut [f64]) -> Result<(), EvalError> {
            v[0] = 2.0 * s;
            v[1] = 2.0 * s;
            Ok(())
        }
    }

    #[test]
    fn solves_small_constrained_qp() {
        let p = Tiny {
            xl: vec![0.0, f64::NEG_INFINITY],
            xu: vec![f64::INFINITY, f64::INFINITY],
            cl: vec![1.0, f64::NEG_INFINITY],
            cu: vec![1.0, 0.5],
        };
        let r = solve(&p, &[0.0, 0.0], &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::LocalOptimum, "{}", r.message);
        assert!((r.x[0] - 0.5).abs() < 1e-6 && (r.x[1] - 0.5).abs() < 1e-6, "{:?}", r.x);
        // Stationarity: grad f + J' lambda = 0 with lambda_1 > 0 on the active upper row.
        assert!(r.lambda[1] > 0.0);
    }

    #[test]
    fn fixed_variables_are_honoured() {
        let p = Tiny {
            xl: vec![0.25, f64::NEG_INFINITY],
            xu: vec![0.25, f64::INFINITY],
            cl: vec![1.0, f64::NEG_INFINITY],
            cu: vec![1.0, 1.0],
        };
        let r = solve(&p, &[0.0, 0.0], &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::LocalOptimum, "{}", r.message);
        assert_eq!(r.x[0], 0.25);
        assert!((r.x[1] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn reports_infeasibility() {
        // x0 + x1 = 1 with x1 <= -5 and x0 <= 0 cannot hold.
        let p = Tiny {
            xl: vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
            xu: vec![0.0, f64::INFINITY],
            cl: vec![1.0, f64::NEG_INFINITY],
            cu: vec![1.0, -5.0],
        };
        let r = solve(&p, &[0.0, 0.0], &SolverOptions::default());
        assert_ne!(r.status, SolveStatus::LocalOptimum);
    }
}
