//! Cyclic time grid over the optimization horizon.

use serde::Serialize;

use super::TranscriptionError;

/// `n` equally spaced points `t_k = k * dt` (hours), `k = 0..n`. The point
/// after the last one is the first: that wrap is the periodic boundary
/// condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    n: usize,
    dt_h: f64,
    horizon_h: f64,
}

pub fn build_time_grid(horizon_h: f64, dt_h: f64) -> Result<TimeGrid, TranscriptionError> {
    if !(horizon_h > 0.0 && dt_h > 0.0 && horizon_h.is_finite()) {
        return Err(TranscriptionError::Config(format!(
            "horizon {horizon_h} h and step {dt_h} h must be positive"
        )));
    }
    let r = horizon_h / dt_h;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * n {
        return Err(TranscriptionError::Config(format!(
            "step {dt_h} h does not divide horizon {horizon_h} h"
        )));
    }
    Ok(TimeGrid {
        n: n as usize,
        dt_h,
        horizon_h,
    })
}

impl TimeGrid {
    /// Single-point grid with `dt = horizon`.
    pub fn steady(horizon_h: f64) -> Self {
        Self {
            n: 1,
            dt_h: horizon_h,
            horizon_h,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_steady(&self) -> bool {
        self.n == 1
    }

    pub fn dt_h(&self) -> f64 {
        self.dt_h
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_h * 3600.0
    }

    pub fn horizon_h(&self) -> f64 {
        self.horizon_h
    }

    pub fn succ(&self, k: usize) -> usize {
        (k + 1) % self.n
    }

    pub fn time_h(&self, k: usize) -> f64 {
        k as f64 * self.dt_h
    }

    pub fn times_h(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.time_h(k)).collect()
    }
}

/// Forward difference `(x_succ - x_n) / dt`.
pub fn cyclic_derivative(x_succ: f64, x_n: f64, dt: f64) -> f64 {
    (x_succ - x_n) / dt
}

/// Forward differences of a sampled periodic series, wrapping at the end.
pub fn cyclic_derivatives(samples: &[f64], dt: f64) -> Vec<f64> {
    let n = samples.len();
    (0..n)
        .map(|k| cyclic_derivative(samples[(k + 1) % n], samples[k], dt))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_sizes() {
        assert_eq!(build_time_grid(24.0, 0.5).unwrap().len(), 48);
        assert_eq!(build_time_grid(24.0, 1.0).unwrap().len(), 24);
        let s = build_time_grid(24.0, 24.0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.succ(0), 0);
        assert_eq!(s, TimeGrid::steady(24.0));
        assert!(build_time_grid(24.0, 0.7).is_err());
        assert!(build_time_grid(24.0, 0.0).is_err());
    }

    #[test]
    fn derivatives() {
        assert!(cyclic_derivatives(&[3.0; 7], 0.5).iter().all(|&d| d == 0.0));
        assert_eq!(cyclic_derivatives(&[5.0], 24.0), vec![0.0]);
        let g = build_time_grid(24.0, 1.0).unwrap();
        let x: Vec<f64> = g
            .times_h()
            .iter()
            .map(|t| (2.0 * PI * t / 24.0).sin())
            .collect();
        let d = cyclic_derivatives(&x, 1.0);
        for k in 0..24 {
            let expect = (x[(k + 1) % 24] - x[k]) / 1.0;
            assert_eq!(d[k], expect);
        }
        assert_eq!(d[23], x[0] - x[23]);
    }

    proptest! {
        #[test]
        fn succ_is_a_bijection(n in 1usize..200) {
            let g = build_time_grid(n as f64 * 0.25, 0.25).unwrap();
            prop_assert_eq!(g.len(), n);
            let mut seen = vec![false; n];
            for k in 0..n {
                seen[g.succ(k)] = true;
            }
            prop_assert!(seen.iter().all(|&s| s));
            prop_assert!((g.len() as f64 * g.dt_h() - g.horizon_h()).abs() < 1e-12 * g.horizon_h());
        }
    }
}
