// SPDX-License-Identifier: MIT OR Apache-2.0

//! Coordinate-wise midranks and the empirical rank covariance.
//!
//! Ranks are computed per coordinate; tied values (exact floating-point
//! equality) receive the average of the positions they occupy, so each
//! column of the table sums to `n(n+1)/2` exactly. Rank values are
//! half-integers, hence exactly representable, and the running prefix
//! sums are exact as well: every downstream quantity is a deterministic
//! function of the input ordering alone. This is what makes the whole
//! pipeline invariant under strictly increasing per-coordinate
//! transforms, bit for bit.
//!
//! The covariance normalizes ranks to the unit scale (`R/n` estimates
//! the marginal CDF), so its diagonal lies in `(0, 1/4]` and tends to
//! `Var(U) = 1/12` for a tie-free coordinate. See `notes` in the repo
//! root README for the ridge policy on degenerate inputs.

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::ObservationMatrix;

/// Midrank table of an observation matrix, with running per-coordinate
/// prefix sums for O(L) segment rank sums.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    n: usize,
    l: usize,
    ranks: Vec<f64>,
    /// `(n + 1) x l` row-major; `prefix[t * l + j]` is the sum of the
    /// first `t` ranks of coordinate `j`. Exact in f64: ranks are
    /// half-integers and their partial sums stay far below 2^53.
    prefix: Vec<f64>,
}

impl RankTable {
    /// Number of time samples.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of each observation.
    pub fn dim(&self) -> usize {
        self.l
    }

    /// Midrank of sample `t` in coordinate `j`, in `[1, n]`.
    pub fn rank(&self, t: usize, j: usize) -> f64 {
        self.ranks[t * self.l + j]
    }

    /// Flat row-major view of the rank table.
    pub fn ranks(&self) -> &[f64] {
        &self.ranks
    }

    /// Writes the per-coordinate rank sums over rows `[start, end)` into
    /// `out`. Exact: prefix sums of half-integers are exact in f64.
    pub fn rank_sums(&self, start: usize, end: usize, out: &mut [f64]) {
        debug_assert!(start <= end && end <= self.n);
        debug_assert_eq!(out.len(), self.l);
        let hi = &self.prefix[end * self.l..(end + 1) * self.l];
        let lo = &self.prefix[start * self.l..(start + 1) * self.l];
        for j in 0..self.l {
            out[j] = hi[j] - lo[j];
        }
    }

    /// Builds a rank table for an explicit row order of the same data.
    /// Ranks travel with their rows under a permutation, so this is a
    /// gather, not a re-sort; the covariance is unchanged because it
    /// sums over rows in any order.
    pub fn permuted(&self, order: &[usize]) -> RankTable {
        debug_assert_eq!(order.len(), self.n);
        let mut ranks = Vec::with_capacity(self.n * self.l);
        for &t in order {
            ranks.extend_from_slice(&self.ranks[t * self.l..(t + 1) * self.l]);
        }
        let prefix = build_prefix(&ranks, self.n, self.l);
        RankTable { n: self.n, l: self.l, ranks, prefix }
    }
}

fn build_prefix(ranks: &[f64], n: usize, l: usize) -> Vec<f64> {
    let mut prefix = vec![0.0; (n + 1) * l];
    for t in 0..n {
        for j in 0..l {
            prefix[(t + 1) * l + j] = prefix[t * l + j] + ranks[t * l + j];
        }
    }
    prefix
}

/// Computes coordinate-wise midranks of `x`.
///
/// Finiteness is guaranteed by `ObservationMatrix`, so this cannot fail.
/// Ties are exact value equality; each tied run gets the mean of the
/// positions it covers.
pub fn compute_ranks(x: &ObservationMatrix) -> RankTable {
    let (n, l) = (x.n(), x.dim());
    let mut ranks = vec![0.0; n * l];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for j in 0..l {
        order.clear();
        order.extend(0..n);
        order.sort_by(|&a, &b| x.value(a, j).total_cmp(&x.value(b, j)));
        let mut run_start = 0;
        while run_start < n {
            let v = x.value(order[run_start], j);
            let mut run_end = run_start + 1;
            while run_end < n && x.value(order[run_end], j) == v {
                run_end += 1;
            }
            // 1-based positions run_start+1 ..= run_end share the midrank.
            let midrank = (run_start + 1 + run_end) as f64 / 2.0;
            for &t in &order[run_start..run_end] {
                ranks[t * l + j] = midrank;
            }
            run_start = run_end;
        }
    }
    let prefix = build_prefix(&ranks, n, l);
    RankTable { n, l, ranks, prefix }
}

/// The ridge escalation schedule, as multiples of `trace / L`.
const RIDGE_FACTORS: [f64; 6] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2];

/// Empirical covariance of the normalized ranks, together with its
/// Cholesky factor and the ridge diagnostics.
#[derive(Debug, Clone)]
pub struct RankCovariance {
    l: usize,
    n: usize,
    sigma: Vec<f64>,
    factor: Vec<f64>,
    ridge: f64,
    condition_flag: bool,
}

impl RankCovariance {
    /// Dimension of the covariance.
    pub fn dim(&self) -> usize {
        self.l
    }

    /// Number of samples the covariance was estimated from.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Row-major `L x L` covariance (without the ridge).
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Entry `(i, j)` of the covariance.
    pub fn sigma_at(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.l + j]
    }

    /// The ridge that was added to factorize, 0.0 when none was needed.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// True when factorization needed a ridge (ill-conditioned input).
    pub fn condition_flag(&self) -> bool {
        self.condition_flag
    }

    /// Solves `F z = v` in place against the stored lower factor, so
    /// that `|z|^2 = v' (sigma + ridge I)^{-1} v`.
    pub fn whiten(&self, v: &mut [f64]) {
        linalg::forward_solve(&self.factor, self.l, v);
    }

    /// Solves `(sigma + ridge I) x = v` in place (both triangular solves).
    pub fn solve(&self, v: &mut [f64]) {
        linalg::forward_solve(&self.factor, self.l, v);
        linalg::backward_solve(&self.factor, self.l, v);
    }
}

/// Estimates the rank covariance of `rt` and factorizes it.
///
/// `sigma[l][l'] = (1/n) * sum_i (R_i^l / n - 1/2)(R_i^l' / n - 1/2)`,
/// the covariance of the empirical marginal CDFs evaluated at the data.
/// When the plain factorization fails, an escalating ridge
/// `{1e-10, 1e-8, ..., max_rel_ridge} x trace/L` is added until a factor
/// exists; `condition_flag` records that this happened. A matrix that
/// stays singular through the whole schedule is a hard error.
pub fn rank_covariance(rt: &RankTable, max_rel_ridge: f64) -> Result<RankCovariance> {
    if !(max_rel_ridge >= 0.0) {
        return Err(Error::invalid_input(format!(
            "ridge budget must be >= 0; got {max_rel_ridge}"
        )));
    }
    let (n, l) = (rt.n(), rt.dim());
    let nf = n as f64;
    let half = nf / 2.0;
    let mut sigma = vec![0.0; l * l];
    for i in 0..n {
        let row = &rt.ranks()[i * l..(i + 1) * l];
        for a in 0..l {
            let ca = row[a] - half;
            for b in a..l {
                sigma[a * l + b] += ca * (row[b] - half);
            }
        }
    }
    let scale = 1.0 / (nf * nf * nf);
    for a in 0..l {
        for b in a..l {
            let v = sigma[a * l + b] * scale;
            sigma[a * l + b] = v;
            sigma[b * l + a] = v;
        }
    }

    let trace: f64 = (0..l).map(|a| sigma[a * l + a]).sum();
    let unit = trace / l as f64;
    let pivot_floor = 1e-12 * unit;
    for &f in RIDGE_FACTORS.iter().filter(|&&f| f <= max_rel_ridge) {
        let ridge = f * unit;
        let mut work = sigma.clone();
        for a in 0..l {
            work[a * l + a] += ridge;
        }
        if let Some(factor) = linalg::cholesky_lower(&work, l, pivot_floor) {
            return Ok(RankCovariance {
                l,
                n,
                sigma,
                factor,
                ridge,
                condition_flag: ridge > 0.0,
            });
        }
    }
    Err(Error::numerical(format!(
        "rank covariance stayed singular through the ridge schedule (budget {max_rel_ridge})"
    )))
}
