// SPDX-License-Identifier: MIT OR Apache-2.0

//! Exact dynamic program over additive segment costs.
//!
//! `I_K(p)` is the best total cost of splitting the prefix `[0, p)`
//! into `K` segments; the recursion maximizes
//! `I_{K-1}(q) + cost(q, p)` over the admissible previous boundary `q`.
//! Work grows as `K * n^2` cost lookups, so providers are either cheap
//! per query or materialized into a triangle up front.

use crate::error::{Error, Result};
use crate::rank::{RankCovariance, RankTable};
use crate::stat::{cost_kernel, Segmentation};
use rayon::prelude::*;

/// Stack scratch capacity; dimensions beyond this fall back to a heap
/// buffer per query.
const STACK_DIM: usize = 16;

/// Additive gain of a half-open segment `[start, end)`. Implementations
/// must be pure: equal arguments give bit-equal results, which is what
/// lets a materialized cache agree with its source to the last ulp.
pub trait SegmentCost: Sync {
    /// Number of samples the costs are defined over.
    fn n(&self) -> usize;
    /// Cost of `[start, end)`; requires `start < end <= n`.
    fn cost(&self, start: usize, end: usize) -> f64;
}

/// Rank-statistic cost: `len * v' S^{-1} v` with `v` the centered
/// mean-rank vector of the segment (evaluated on demand from prefix
/// sums in O(L^2) per query).
pub struct RankCost<'a> {
    rt: &'a RankTable,
    cov: &'a RankCovariance,
}

impl<'a> RankCost<'a> {
    pub fn new(rt: &'a RankTable, cov: &'a RankCovariance) -> Result<Self> {
        if rt.dim() != cov.dim() {
            return Err(Error::invalid_input(format!(
                "rank table dimension {} does not match covariance dimension {}",
                rt.dim(),
                cov.dim()
            )));
        }
        Ok(RankCost { rt, cov })
    }
}

impl SegmentCost for RankCost<'_> {
    fn n(&self) -> usize {
        self.rt.n()
    }

    fn cost(&self, start: usize, end: usize) -> f64 {
        let l = self.rt.dim();
        if l <= STACK_DIM {
            let mut buf = [0.0; STACK_DIM];
            cost_kernel(self.rt, self.cov, start, end, &mut buf[..l])
        } else {
            let mut buf = vec![0.0; l];
            cost_kernel(self.rt, self.cov, start, end, &mut buf)
        }
    }
}

/// Memory needed to materialize every pairwise cost for `n` samples,
/// per the sizing rule `n^2 * 8` bytes.
pub fn materialization_bytes(n: usize) -> usize {
    n * n * 8
}

/// A dense cache of all segment costs, stored as the upper triangle
/// `start < end <= n`. Values are copied verbatim from the source
/// provider, so both agree to 0 ulps.
pub struct MaterializedCost {
    n: usize,
    tri: Vec<f64>,
}

impl MaterializedCost {
    /// Evaluates every pair once (rows in parallel; each entry depends
    /// only on its own indices, so the result is schedule-independent).
    pub fn from_provider(source: &(impl SegmentCost + ?Sized)) -> Self {
        let n = source.n();
        let mut tri = vec![0.0; n * (n + 1) / 2];
        let mut rows: Vec<(usize, &mut [f64])> = Vec::with_capacity(n);
        let mut rest: &mut [f64] = &mut tri;
        for start in 0..n {
            let (row, tail) = rest.split_at_mut(n - start);
            rows.push((start, row));
            rest = tail;
        }
        rows.into_par_iter().for_each(|(start, row)| {
            for (off, slot) in row.iter_mut().enumerate() {
                *slot = source.cost(start, start + 1 + off);
            }
        });
        MaterializedCost { n, tri }
    }

    fn index(&self, start: usize, end: usize) -> usize {
        // Row `start` holds ends `start+1 ..= n`.
        let row_offset = start * self.n - start * (start.saturating_sub(1)) / 2;
        row_offset + (end - start - 1)
    }
}

impl SegmentCost for MaterializedCost {
    fn n(&self) -> usize {
        self.n
    }

    fn cost(&self, start: usize, end: usize) -> f64 {
        self.tri[self.index(start, end)]
    }
}

/// Materializes `source` when the sizing rule fits `budget_bytes`,
/// otherwise returns it unchanged for on-demand evaluation.
pub enum CostAccess<'a, C: SegmentCost + ?Sized> {
    Materialized(MaterializedCost),
    OnDemand(&'a C),
}

impl<'a, C: SegmentCost + ?Sized> CostAccess<'a, C> {
    pub fn within_budget(source: &'a C, budget_bytes: usize) -> Self {
        if materialization_bytes(source.n()) <= budget_bytes {
            CostAccess::Materialized(MaterializedCost::from_provider(source))
        } else {
            CostAccess::OnDemand(source)
        }
    }
}

impl<C: SegmentCost + ?Sized> SegmentCost for CostAccess<'_, C> {
    fn n(&self) -> usize {
        match self {
            CostAccess::Materialized(m) => m.n(),
            CostAccess::OnDemand(c) => c.n(),
        }
    }

    fn cost(&self, start: usize, end: usize) -> f64 {
        match self {
            CostAccess::Materialized(m) => m.cost(start, end),
            CostAccess::OnDemand(c) => c.cost(start, end),
        }
    }
}

/// The filled dynamic-programming tables for `K = 1 ..= k_max`.
pub struct DpSolution {
    n: usize,
    k_max: usize,
    min_seg_len: usize,
    /// `k_max` rows of `n + 1` entries; row `K-1` holds `I_K(p)`.
    /// Infeasible prefixes hold negative infinity.
    values: Vec<f64>,
    /// Backpointers for `K >= 2`: row `K-2` holds the best previous
    /// boundary for each prefix end.
    back: Vec<u32>,
}

/// Runs the dynamic program up to `k_max` segments.
///
/// Ties in the maximization break to the smallest previous boundary:
/// candidates are visited in increasing order and only strict
/// improvements move the argmax.
pub fn solve(cost: &(impl SegmentCost + ?Sized), k_max: usize, min_seg_len: usize) -> Result<DpSolution> {
    let n = cost.n();
    if k_max < 1 {
        return Err(Error::invalid_input("k_max must be >= 1; got 0"));
    }
    if min_seg_len < 1 {
        return Err(Error::invalid_input("min_seg_len must be >= 1; got 0"));
    }
    if n < k_max * min_seg_len {
        return Err(Error::invalid_input(format!(
            "n = {n} cannot hold {k_max} segments of length >= {min_seg_len}"
        )));
    }
    if n > u32::MAX as usize {
        return Err(Error::invalid_input(format!("n = {n} exceeds the supported size")));
    }
    let width = n + 1;
    let mut values = vec![f64::NEG_INFINITY; k_max * width];
    let mut back = vec![0u32; k_max.saturating_sub(1) * width];
    for p in min_seg_len..=n {
        values[p] = cost.cost(0, p);
    }
    for k in 2..=k_max {
        let (prev_rows, cur_rows) = values.split_at_mut((k - 1) * width);
        let prev = &prev_rows[(k - 2) * width..];
        let cur = &mut cur_rows[..width];
        let back_row = &mut back[(k - 2) * width..(k - 1) * width];
        for p in (k * min_seg_len)..=n {
            let mut best = f64::NEG_INFINITY;
            let mut best_q = (k - 1) * min_seg_len;
            for q in ((k - 1) * min_seg_len)..=(p - min_seg_len) {
                let candidate = prev[q] + cost.cost(q, p);
                if candidate > best {
                    best = candidate;
                    best_q = q;
                }
            }
            cur[p] = best;
            back_row[p] = best_q as u32;
        }
    }
    Ok(DpSolution { n, k_max, min_seg_len, values, back })
}

impl DpSolution {
    /// Number of samples.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Largest segment count solved for.
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Minimum segment length the tables were built with.
    pub fn min_seg_len(&self) -> usize {
        self.min_seg_len
    }

    /// `I_K(p)`: best cost of covering `[0, p)` with `k` segments.
    pub fn value(&self, k: usize, p: usize) -> Result<f64> {
        if k < 1 || k > self.k_max || p > self.n {
            return Err(Error::invalid_input(format!(
                "value({k}, {p}) outside the solved tables (k_max = {}, n = {})",
                self.k_max, self.n
            )));
        }
        Ok(self.values[(k - 1) * (self.n + 1) + p])
    }

    /// `I_K(n)` for the full series.
    pub fn optimum(&self, k: usize) -> Result<f64> {
        self.value(k, self.n)
    }

    /// The optimal objective for each `K = 1 ..= k_max`.
    pub fn optimum_curve(&self) -> Vec<f64> {
        (1..=self.k_max)
            .map(|k| self.values[(k - 1) * (self.n + 1) + self.n])
            .collect()
    }

    /// Reconstructs the optimal `k`-segment segmentation from the
    /// backpointers.
    pub fn backtrack(&self, k: usize) -> Result<Segmentation> {
        if k < 1 || k > self.k_max {
            return Err(Error::invalid_input(format!(
                "k = {k} outside 1 ..= {}",
                self.k_max
            )));
        }
        let width = self.n + 1;
        let mut boundaries = Vec::with_capacity(k - 1);
        let mut p = self.n;
        for kk in (2..=k).rev() {
            let q = self.back[(kk - 2) * width + p] as usize;
            boundaries.push(q);
            p = q;
        }
        boundaries.reverse();
        Segmentation::new(self.n, boundaries)
    }

    /// Largest violation of the refinement property
    /// `I_{K+1}(n) >= I_K(n)`; exactly 0 or tiny float noise.
    pub fn refinement_violation(&self) -> f64 {
        let curve = self.optimum_curve();
        curve
            .windows(2)
            .map(|w| (w[0] - w[1]).max(0.0))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ObservationMatrix;
    use crate::rank::{compute_ranks, rank_covariance};
    use crate::stat::DEFAULT_RIDGE_BUDGET;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Test-only exhaustive search over all segmentations, visiting
    /// boundary vectors in lexicographic order and keeping strict
    /// improvements, mirroring the production tie-break.
    fn brute_force(
        cost: &impl SegmentCost,
        k: usize,
        min_seg_len: usize,
    ) -> (f64, Vec<usize>) {
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut cuts = Vec::with_capacity(k - 1);
        fn recurse(
            cost: &impl SegmentCost,
            k: usize,
            msl: usize,
            start: usize,
            acc: f64,
            cuts: &mut Vec<usize>,
            best: &mut (f64, Vec<usize>),
        ) {
            let n = cost.n();
            let remaining = k - cuts.len() - 1;
            if remaining == 0 {
                let total = acc + cost.cost(start, n);
                if total > best.0 {
                    *best = (total, cuts.clone());
                }
                return;
            }
            // Leave room for `remaining` more segments of length >= msl.
            for b in (start + msl)..=(n - remaining * msl) {
                cuts.push(b);
                recurse(cost, k, msl, b, acc + cost.cost(start, b), cuts, best);
                cuts.pop();
            }
        }
        recurse(cost, k, min_seg_len, 0, 0.0, &mut cuts, &mut best);
        best
    }

    fn rank_setup(
        values: Vec<f64>,
        n: usize,
        l: usize,
    ) -> (crate::rank::RankTable, crate::rank::RankCovariance) {
        let x = ObservationMatrix::from_flat(n, l, values).expect("finite");
        let rt = compute_ranks(&x);
        let cov = rank_covariance(&rt, DEFAULT_RIDGE_BUDGET).expect("nondegenerate");
        (rt, cov)
    }

    #[test]
    fn k_equal_one_is_the_full_span_cost() {
        let (rt, cov) = rank_setup((0..10).map(|v| v as f64).collect(), 10, 1);
        let cost = RankCost::new(&rt, &cov).expect("matching dims");
        let sol = solve(&cost, 1, 1).expect("feasible");
        let seg = sol.backtrack(1).expect("k in range");
        assert!(seg.boundaries().is_empty());
        assert_eq!(sol.optimum(1).expect("k in range"), cost.cost(0, 10));
    }

    #[test]
    fn recovers_a_clean_step_at_k_two() {
        let mut values = vec![0.0; 50];
        values.extend(vec![1.0; 50]);
        let (rt, cov) = rank_setup(values, 100, 1);
        let cost = RankCost::new(&rt, &cov).expect("matching dims");
        let sol = solve(&cost, 2, 1).expect("feasible");
        let seg = sol.backtrack(2).expect("k in range");
        assert_eq!(seg.boundaries(), &[50]);
    }

    #[test]
    fn recovers_two_boundaries_of_a_plateau() {
        let mut values = vec![0.0; 10];
        values.extend(vec![1.0; 10]);
        values.extend(vec![0.0; 10]);
        let (rt, cov) = rank_setup(values, 30, 1);
        let cost = RankCost::new(&rt, &cov).expect("matching dims");
        let sol = solve(&cost, 3, 1).expect("feasible");
        let seg = sol.backtrack(3).expect("k in range");
        assert_eq!(seg.boundaries(), &[10, 20]);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..60 {
            let n = rng.gen_range(4..=12);
            let l = rng.gen_range(1..=3);
            let msl = rng.gen_range(1..=2);
            let k_cap = (n / msl).min(4);
            let k = rng.gen_range(1..=k_cap);
            let values: Vec<f64> = (0..n * l).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (rt, cov) = rank_setup(values, n, l);
            let cost = RankCost::new(&rt, &cov).expect("matching dims");
            let sol = solve(&cost, k, msl).expect("feasible");
            let seg = sol.backtrack(k).expect("k in range");
            let (want_val, want_cuts) = brute_force(&cost, k, msl);
            let got_val = sol.optimum(k).expect("k in range");
            assert!(
                (got_val - want_val).abs() <= 1e-9 * want_val.abs().max(1.0),
                "trial {trial}: value {got_val} vs {want_val}"
            );
            assert_eq!(seg.boundaries(), &want_cuts[..], "trial {trial}: boundaries");
        }
    }

    #[test]
    fn every_backtracked_segment_respects_min_len() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..30 {
            let n = rng.gen_range(12..40);
            let msl = rng.gen_range(1..=3);
            let k = rng.gen_range(1..=(n / msl).min(5));
            let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let (rt, cov) = rank_setup(values, n, 1);
            let cost = RankCost::new(&rt, &cov).expect("matching dims");
            let sol = solve(&cost, k, msl).expect("feasible");
            let seg = sol.backtrack(k).expect("k in range");
            assert_eq!(seg.num_segments(), k);
            assert!(
                seg.min_segment_len() >= msl,
                "segment shorter than {msl}: {:?}",
                seg.boundaries()
            );
        }
    }

    #[test]
    fn refinement_never_regresses() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let n = rng.gen_range(10..40);
            let values: Vec<f64> = (0..n * 2).map(|_| rng.gen::<f64>()).collect();
            let (rt, cov) = rank_setup(values, n, 2);
            let cost = RankCost::new(&rt, &cov).expect("matching dims");
            let sol = solve(&cost, n.min(6), 1).expect("feasible");
            assert!(
                sol.refinement_violation() <= 1e-12,
                "I_K decreased: {}",
                sol.refinement_violation()
            );
        }
    }

    #[test]
    fn materialized_cache_agrees_to_the_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let n = 40;
        let values: Vec<f64> = (0..n * 2).map(|_| rng.gen::<f64>()).collect();
        let (rt, cov) = rank_setup(values, n, 2);
        let cost = RankCost::new(&rt, &cov).expect("matching dims");
        let cached = MaterializedCost::from_provider(&cost);
        for _ in 0..100 {
            let s = rng.gen_range(0..n);
            let e = rng.gen_range(s + 1..=n);
            assert_eq!(
                cached.cost(s, e).to_bits(),
                cost.cost(s, e).to_bits(),
                "cache must copy values verbatim at ({s}, {e})"
            );
        }
    }

    #[test]
    fn budget_rule_selects_the_access_path() {
        let (rt, cov) = rank_setup((0..20).map(|v| v as f64).collect(), 20, 1);
        let cost = RankCost::new(&rt, &cov).expect("matching dims");
        assert_eq!(materialization_bytes(20), 3200);
        match CostAccess::within_budget(&cost, 3200) {
            CostAccess::Materialized(_) => {}
            CostAccess::OnDemand(_) => panic!("3200 bytes fit exactly; expected cache"),
        }
        match CostAccess::within_budget(&cost, 3199) {
            CostAccess::OnDemand(_) => {}
            CostAccess::Materialized(_) => panic!("over budget; expected on-demand"),
        }
    }

    #[test]
    fn infeasible_shapes_are_rejected() {
        let (rt, cov) = rank_setup((0..6).map(|v| v as f64).collect(), 6, 1);
        let cost = RankCost::new(&rt, &cov).expect("matching dims");
        assert!(solve(&cost, 0, 1).is_err());
        assert!(solve(&cost, 1, 0).is_err());
        assert!(solve(&cost, 4, 2).is_err(), "4 * 2 > 6 cannot fit");
        let sol = solve(&cost, 3, 2).expect("3 * 2 = 6 fits exactly");
        let seg = sol.backtrack(3).expect("k in range");
        assert_eq!(seg.boundaries(), &[2, 4], "forced equal split");
    }
}
