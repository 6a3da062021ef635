//! Sparse symmetric LDLᵀ factorization with 1×1 pivots.
//!
//! The ordering comes from approximate minimum degree. Elimination follows
//! the up-looking scheme driven by the elimination tree. Pivot signs give the
//! inertia, which the interior-point method uses to detect non-convexity.

use thiserror::Error;

const NONE: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdlError {
    #[error("pattern is invalid: {0}")]
    Pattern(String),
    #[error("pivot {0} is zero or not finite")]
    ZeroPivot(usize),
}

/// Ordering and fill pattern, reused across factorizations with the same
/// sparsity.
#[derive(Debug, Clone)]
pub struct SymbolicLdl {
    n: usize,
    /// New position to original index.
    perm: Vec<usize>,
    /// Upper-triangular CSC of the permuted matrix.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// Position in the permuted values of each input triplet.
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

/// Numeric factors `P A Pᵀ = L D Lᵀ`.
#[derive(Debug, Clone)]
pub struct NumericLdl {
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    pub positive: usize,
    pub negative: usize,
}

impl SymbolicLdl {
    /// Analyzes an `n × n` symmetric pattern given as coordinates of either
    /// triangle. Every diagonal entry must be present.
    pub fn analyze(n: usize, rows: &[usize], cols: &[usize]) -> Result<Self, LdlError> {
        if rows.len() != cols.len() {
            return Err(LdlError::Pattern("row and column lists differ in length".into()));
        }
        let mut has_diag = vec![false; n];
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (&r, &c) in rows.iter().zip(cols) {
            if r >= n || c >= n {
                return Err(LdlError::Pattern(format!("entry ({r}, {c}) outside {n}")));
            }
            if r == c {
                has_diag[r] = true;
            } else {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
        if let Some(k) = has_diag.iter().position(|d| !d) {
            return Err(LdlError::Pattern(format!("diagonal entry {k} missing")));
        }
        let perm = if n == 0 {
            Vec::new()
        } else {
            let mut ap = Vec::with_capacity(n + 1);
            let mut ai = Vec::new();
            ap.push(0);
            for (k, list) in adj.iter_mut().enumerate() {
                list.push(k);
                list.sort_unstable();
                list.dedup();
                ai.extend(list.iter().copied());
                ap.push(ai.len());
            }
            let (p, _, _) = amd::order(n, &ap, &ai, &amd::Control::default())
                .map_err(|s| LdlError::Pattern(format!("ordering failed: {s:?}")))?;
            p
        };
        let mut iperm = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            iperm[i] = k;
        }

        // Permuted upper triangle, column by column with sorted rows.
        let mut entries: Vec<(usize, usize, usize)> = rows
            .iter()
            .zip(cols)
            .enumerate()
            .map(|(t, (&r, &c))| {
                let (a, b) = (iperm[r], iperm[c]);
                (a.max(b), a.min(b), t)
            })
            .collect();
        entries.sort_unstable();
        let mut ap = vec![0; n + 1];
        let mut ai = Vec::with_capacity(entries.len());
        let mut map = vec![0; rows.len()];
        let mut last = (NONE, NONE);
        for &(col, row, t) in &entries {
            if (col, row) != last {
                ai.push(row);
                ap[col + 1] += 1;
                last = (col, row);
            }
            map[t] = ai.len() - 1;
        }
        for k in 0..n {
            ap[k + 1] += ap[k];
        }

        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &row in &ai[ap[j]..ap[j + 1]] {
                let mut i = row;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        Ok(Self {
            n,
            perm,
            ap,
            ai,
            map,
            etree,
            lp,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of strictly lower entries of L.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Factors the matrix whose triplet values (same order as the analyzed
    /// pattern, duplicates summed) are `vals`. Pivots with magnitude at most
    /// `zero_tol` abort the factorization.
    pub fn factor(&self, vals: &[f64], zero_tol: f64) -> Result<NumericLdl, LdlError> {
        let n = self.n;
        let mut ax = vec![0.0; self.ai.len()];
        for (t, &v) in vals.iter().enumerate() {
            ax[self.map[t]] += v;
        }
        let nnz = self.lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next = self.lp[..n].to_vec();
        let mut used = vec![false; n];
        let mut y = vec![0.0; n];
        let mut yidx = Vec::with_capacity(n);
        let mut stack = Vec::with_capacity(n);
        let (mut positive, mut negative) = (0, 0);

        for k in 0..n {
            yidx.clear();
            d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    d[k] = ax[p];
                    continue;
                }
                y[b] = ax[p];
                if !used[b] {
                    used[b] = true;
                    stack.clear();
                    stack.push(b);
                    let mut i = self.etree[b];
                    while i != NONE && i < k && !used[i] {
                        used[i] = true;
                        stack.push(i);
                        i = self.etree[i];
                    }
                    while let Some(s) = stack.pop() {
                        yidx.push(s);
                    }
                }
            }
            for &c in yidx.iter().rev() {
                let yc = y[c];
                let end = next[c];
                for j in self.lp[c]..end {
                    y[li[j]] -= lx[j] * yc;
                }
                li[end] = k;
                let l = yc * dinv[c];
                lx[end] = l;
                d[k] -= yc * l;
                next[c] += 1;
                y[c] = 0.0;
                used[c] = false;
            }
            if !(d[k].is_finite() && d[k].abs() > zero_tol) {
                return Err(LdlError::ZeroPivot(self.perm[k]));
            }
            dinv[k] = 1.0 / d[k];
            if d[k] > 0.0 {
                positive += 1;
            } else {
                negative += 1;
            }
        }
        Ok(NumericLdl {
            li,
            lx,
            d,
            positive,
            negative,
        })
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, f: &NumericLdl, b: &mut [f64]) {
        let n = self.n;
        let mut w: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let wi = w[i];
            for j in self.lp[i]..self.lp[i + 1] {
                w[f.li[j]] -= f.lx[j] * wi;
            }
        }
        for i in 0..n {
            w[i] /= f.d[i];
        }
        for i in (0..n).rev() {
            let mut s = w[i];
            for j in self.lp[i]..self.lp[i + 1] {
                s -= f.lx[j] * w[f.li[j]];
            }
            w[i] = s;
        }
        for (k, &i) in self.perm.iter().enumerate() {
            b[i] = w[k];
        }
    }
}

/// `y = A x` for a symmetric matrix stored as one-triangle triplets.
pub fn sym_matvec(rows: &[usize], cols: &[usize], vals: &[f64], x: &[f64], y: &mut [f64]) {
    y.fill(0.0);
    for ((&r, &c), &v) in rows.iter().zip(cols).zip(vals) {
        y[r] += v * x[c];
        if r != c {
            y[c] += v * x[r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quasidefinite(n1: usize, n2: usize, density: f64, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n1 + n2;
        let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..n {
            r.push(i);
            c.push(i);
            v.push(if i < n1 { 1.0 + rng.random::<f64>() * 3.0 } else { -(0.5 + rng.random::<f64>()) });
        }
        for i in 0..n {
            for j in 0..i {
                if rng.random::<f64>() < density {
                    // Couplings inside a block stay small so each block keeps its sign.
                    let mag = if (i < n1) == (j < n1) { 0.05 } else { 1.0 };
                    r.push(i);
                    c.push(j);
                    v.push(mag * (rng.random::<f64>() * 2.0 - 1.0));
                }
            }
        }
        (r, c, v)
    }

    #[test]
    fn solves_quasidefinite_and_counts_inertia() {
        for seed in 0..20 {
            let (r, c, v) = random_quasidefinite(30, 12, 0.15, seed);
            let n = 42;
            let sym = SymbolicLdl::analyze(n, &r, &c).unwrap();
            let f = sym.factor(&v, 1e-14).unwrap();
            assert_eq!((f.positive, f.negative), (30, 12));
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut b = vec![0.0; n];
            sym_matvec(&r, &c, &v, &x, &mut b);
            sym.solve(&f, &mut b);
            for k in 0..n {
                assert!((b[k] - x[k]).abs() < 1e-9, "{} vs {}", b[k], x[k]);
            }
        }
    }

    #[test]
    fn duplicates_are_summed_and_upper_entries_accepted() {
        // [[4, 1], [1, 3]] written as a split diagonal and an upper entry.
        let r = [0, 0, 1, 0];
        let c = [0, 0, 1, 1];
        let v = [1.5, 2.5, 3.0, 1.0];
        let sym = SymbolicLdl::analyze(2, &r, &c).unwrap();
        let f = sym.factor(&v, 0.0).unwrap();
        let mut b = [5.0, 4.0];
        sym.solve(&f, &mut b);
        assert!((b[0] - 1.0).abs() < 1e-14 && (b[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_pivot_and_missing_diagonal() {
        let sym = SymbolicLdl::analyze(2, &[0, 1, 1], &[0, 0, 1]).unwrap();
        // [[1, 1], [1, 1]] is singular.
        assert!(matches!(sym.factor(&[1.0, 1.0, 1.0], 1e-12), Err(LdlError::ZeroPivot(_))));
        assert!(SymbolicLdl::analyze(2, &[0, 1], &[0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn inertia_of_diagonal(d in proptest::collection::vec(prop_oneof![-5.0f64..-0.1, 0.1f64..5.0], 1..40)) {
            let n = d.len();
            let idx: Vec<usize> = (0..n).collect();
            let sym = SymbolicLdl::analyze(n, &idx, &idx).unwrap();
            let f = sym.factor(&d, 0.0).unwrap();
            prop_assert_eq!(f.positive, d.iter().filter(|&&x| x > 0.0).count());
            prop_assert_eq!(f.negative, d.iter().filter(|&&x| x < 0.0).count());
        }
    }
}
