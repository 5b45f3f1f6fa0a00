// SPDX-License-Identifier: MIT OR Apache-2.0

//! The rank-based multivariate Kruskal-Wallis statistic over a
//! segmentation, its fixed-boundary chi-square test, the single
//! change-point scan, and the permutation test.
//!
//! For a segmentation with boundaries `0 = b_0 < b_1 < ... < b_K = n`,
//! each segment contributes `len * v' S^{-1} v` where `v` is the
//! segment's mean-rank vector centered at `n/2` and `S` the rank
//! covariance; the statistic is `1/n^2` times the sum. Under the null
//! of one homogeneous segment, with boundary fractions held fixed, the
//! statistic converges to chi-square with `(K-1) * L` degrees of
//! freedom. Splitting a segment never lowers the summed cost
//! (Cauchy-Schwarz on the whitened rank sums), which is what makes the
//! dynamic program's refinement property hold.

use crate::error::{Error, Result};
use crate::matrix::ObservationMatrix;
use crate::rank::{compute_ranks, rank_covariance, RankCovariance, RankTable};
use crate::rng::{stream_rng, tag};
use rand::seq::SliceRandom;
use rayon::prelude::*;

/// Default cap of the relative ridge schedule used when a caller does
/// not thread an explicit budget (see `rank_covariance`).
pub const DEFAULT_RIDGE_BUDGET: f64 = 1e-2;

/// A set of change-point positions over `n` samples. A boundary `b`
/// cuts between samples `b-1` and `b`, i.e. segments are the half-open
/// ranges `[0, b_1), [b_1, b_2), ..., [b_{K-1}, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    n: usize,
    boundaries: Vec<usize>,
}

impl Segmentation {
    /// Validates strictly increasing interior boundaries in `(0, n)`.
    pub fn new(n: usize, boundaries: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_input("n must be >= 1; got 0"));
        }
        for (i, &b) in boundaries.iter().enumerate() {
            if b == 0 || b >= n {
                return Err(Error::invalid_input(format!(
                    "boundary {b} outside (0, {n})"
                )));
            }
            if i > 0 && boundaries[i - 1] >= b {
                return Err(Error::invalid_input(format!(
                    "boundaries must be strictly increasing; got {} then {b}",
                    boundaries[i - 1]
                )));
            }
        }
        Ok(Segmentation { n, boundaries })
    }

    /// Number of samples covered.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Interior boundaries, strictly increasing.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Number of segments, `K = boundaries + 1`.
    pub fn num_segments(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Half-open `[start, end)` ranges of the segments, in order.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_segments());
        let mut start = 0;
        for &b in &self.boundaries {
            out.push((start, b));
            start = b;
        }
        out.push((start, self.n));
        out
    }

    /// Smallest segment length.
    pub fn min_segment_len(&self) -> usize {
        self.segments().iter().map(|(s, e)| e - s).min().unwrap_or(self.n)
    }
}

/// The statistic for one segmentation, with its per-segment costs.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStatistic {
    /// `1/n^2` times the summed per-segment costs.
    pub value: f64,
    /// `(K - 1) * L` for `K` segments in dimension `L`.
    pub df: usize,
    /// The unnormalized cost of each segment, in order.
    pub per_segment_costs: Vec<f64>,
}

/// Mean-rank vector of rows `[start, end)`, centered at `n/2`.
pub fn mean_rank_vector(rt: &RankTable, start: usize, end: usize) -> Result<Vec<f64>> {
    if start >= end || end > rt.n() {
        return Err(Error::invalid_input(format!(
            "segment [{start}, {end}) invalid for n = {}",
            rt.n()
        )));
    }
    let l = rt.dim();
    let mut v = vec![0.0; l];
    rt.rank_sums(start, end, &mut v);
    let len = (end - start) as f64;
    let half = rt.n() as f64 / 2.0;
    for x in v.iter_mut() {
        *x = *x / len - half;
    }
    Ok(v)
}

/// Unchecked cost kernel shared by the scan, the statistic, and the
/// dynamic program: `len * v' (sigma + ridge I)^{-1} v`, evaluated as a
/// forward solve against the stored factor plus a dot product.
/// `scratch` must have length `rt.dim()`.
pub(crate) fn cost_kernel(
    rt: &RankTable,
    cov: &RankCovariance,
    start: usize,
    end: usize,
    scratch: &mut [f64],
) -> f64 {
    debug_assert!(start < end && end <= rt.n());
    let len = (end - start) as f64;
    let half = rt.n() as f64 / 2.0;
    rt.rank_sums(start, end, scratch);
    for x in scratch.iter_mut() {
        *x = *x / len - half;
    }
    cov.whiten(scratch);
    let mut q = 0.0;
    for &z in scratch.iter() {
        q += z * z;
    }
    len * q
}

/// Cost of the segment `[start, end)`: its length times the quadratic
/// form of the centered mean-rank vector in the inverse rank covariance.
pub fn segment_cost(
    rt: &RankTable,
    cov: &RankCovariance,
    start: usize,
    end: usize,
) -> Result<f64> {
    if start >= end || end > rt.n() {
        return Err(Error::invalid_input(format!(
            "segment [{start}, {end}) invalid for n = {}",
            rt.n()
        )));
    }
    if cov.dim() != rt.dim() {
        return Err(Error::invalid_input(format!(
            "covariance dimension {} does not match rank table dimension {}",
            cov.dim(),
            rt.dim()
        )));
    }
    let mut scratch = vec![0.0; rt.dim()];
    Ok(cost_kernel(rt, cov, start, end, &mut scratch))
}

/// Evaluates the statistic of `seg` on the ranks of the full series.
pub fn statistic(
    rt: &RankTable,
    cov: &RankCovariance,
    seg: &Segmentation,
) -> Result<SegmentStatistic> {
    if seg.n() != rt.n() {
        return Err(Error::invalid_input(format!(
            "segmentation over {} samples does not match n = {}",
            seg.n(),
            rt.n()
        )));
    }
    if cov.dim() != rt.dim() {
        return Err(Error::invalid_input(
            "covariance dimension does not match rank table dimension",
        ));
    }
    let mut scratch = vec![0.0; rt.dim()];
    let mut costs = Vec::with_capacity(seg.num_segments());
    for (s, e) in seg.segments() {
        costs.push(cost_kernel(rt, cov, s, e, &mut scratch));
    }
    let nf = rt.n() as f64;
    let value = costs.iter().sum::<f64>() / (nf * nf);
    let df = (seg.num_segments() - 1) * rt.dim();
    Ok(SegmentStatistic { value, df, per_segment_costs: costs })
}

/// Survival function of the chi-square distribution with `df` degrees
/// of freedom, via the regularized upper incomplete gamma function.
pub fn chi_square_survival(df: usize, t: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid_input("degrees of freedom must be >= 1; got 0"));
    }
    if !t.is_finite() {
        return Err(Error::invalid_input(format!("statistic must be finite; got {t}")));
    }
    if t <= 0.0 {
        return Ok(1.0);
    }
    Ok(statrs::function::gamma::gamma_ur(df as f64 / 2.0, t / 2.0))
}

/// Quantile function of the chi-square distribution with `df` degrees
/// of freedom, for `p` strictly inside (0, 1).
pub fn chi_square_quantile(df: usize, p: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid_input("degrees of freedom must be >= 1; got 0"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid_input(format!(
            "quantile level must lie strictly in (0, 1); got {p}"
        )));
    }
    use statrs::distribution::{Continuous, ContinuousCDF};
    let dist = statrs::distribution::ChiSquared::new(df as f64)
        .map_err(|e| Error::numerical(format!("chi-square with df = {df}: {e}")))?;
    // The generic inverse_cdf bisects to ~1e-6 absolute; polish with
    // Newton steps against the exact survival function and density.
    let mut q = dist.inverse_cdf(p).max(f64::MIN_POSITIVE);
    for _ in 0..8 {
        let g = chi_square_survival(df, q)? - (1.0 - p);
        let d = dist.pdf(q);
        if !(d > 0.0) || !d.is_finite() {
            break;
        }
        let step = g / d;
        let next = q + step;
        if !(next > 0.0 && next.is_finite()) {
            break;
        }
        q = next;
        if step.abs() <= 1e-14 * q {
            break;
        }
    }
    Ok(q)
}

/// Asymptotic p-value of a fixed-boundary test: the chi-square survival
/// at the statistic's value, with `(K-1) * L` degrees of freedom.
/// Undefined for a single segment (`df = 0`).
pub fn fixed_boundary_pvalue(stat: &SegmentStatistic) -> Result<f64> {
    if stat.df == 0 {
        return Err(Error::invalid_input(
            "fixed-boundary test undefined for a single segment (df = 0)",
        ));
    }
    chi_square_survival(stat.df, stat.value)
}

/// Scans all admissible single change points and returns the position
/// and value of the maximal statistic. Ties break to the smallest
/// index. Admissible cuts leave at least `min_seg_len` samples on each
/// side.
pub fn max_single_cp_scan(
    rt: &RankTable,
    cov: &RankCovariance,
    min_seg_len: usize,
) -> Result<(usize, f64)> {
    if min_seg_len < 1 {
        return Err(Error::invalid_input("min_seg_len must be >= 1; got 0"));
    }
    let n = rt.n();
    if n < 2 * min_seg_len {
        return Err(Error::invalid_input(format!(
            "n = {n} too short for two segments of length >= {min_seg_len}"
        )));
    }
    let nf = n as f64;
    let mut scratch = vec![0.0; rt.dim()];
    let mut best_idx = min_seg_len;
    let mut best_t = f64::NEG_INFINITY;
    for p in min_seg_len..=(n - min_seg_len) {
        let t = (cost_kernel(rt, cov, 0, p, &mut scratch)
            + cost_kernel(rt, cov, p, n, &mut scratch))
            / (nf * nf);
        if t > best_t {
            best_t = t;
            best_idx = p;
        }
    }
    Ok((best_idx, best_t))
}

/// Permutation p-value for an observed scan maximum, against rank
/// tables the caller has already computed.
///
/// Each of the `b` replicates permutes the row order uniformly at
/// random (rows stay intact across coordinates, preserving
/// cross-coordinate dependence) and re-runs the scan. Ranks travel
/// with their rows under a permutation and the covariance is a
/// row-order-invariant sum, so permuting the rank table is the same as
/// re-ranking permuted data. `p = (1 + #{T_b >= T_max}) / (b + 1)`.
/// Replicates use independent streams keyed `(seed, replicate)`, so the
/// result does not depend on execution order.
pub fn permutation_pvalue_with(
    rt: &RankTable,
    cov: &RankCovariance,
    t_max: f64,
    b: usize,
    min_seg_len: usize,
    seed: u64,
) -> Result<f64> {
    if b < 1 {
        return Err(Error::invalid_input("permutation count must be >= 1; got 0"));
    }
    let n = rt.n();
    if n < 2 * min_seg_len {
        return Err(Error::invalid_input(format!(
            "n = {n} too short for two segments of length >= {min_seg_len}"
        )));
    }
    let exceed: usize = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, &[tag::PERMUTATION, rep]);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let permuted = rt.permuted(&order);
            let (_, t) = max_single_cp_scan(&permuted, cov, min_seg_len)
                .expect("scan preconditions already checked");
            usize::from(t >= t_max)
        })
        .sum();
    Ok((1 + exceed) as f64 / (b + 1) as f64)
}

/// Permutation p-value computed from raw observations: ranks and
/// covariance are built internally with the default ridge budget.
pub fn permutation_pvalue(
    x: &ObservationMatrix,
    t_max: f64,
    b: usize,
    min_seg_len: usize,
    seed: u64,
) -> Result<f64> {
    let rt = compute_ranks(x);
    let cov = rank_covariance(&rt, DEFAULT_RIDGE_BUDGET)?;
    permutation_pvalue_with(&rt, &cov, t_max, b, min_seg_len, seed)
}
