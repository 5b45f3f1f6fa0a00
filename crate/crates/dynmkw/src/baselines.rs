// SPDX-License-Identifier: MIT OR Apache-2.0

//! Comparison methods: Gaussian mean-shift and Gaussian-kernel segment
//! costs for the same dynamic program, and binary segmentation driven
//! by the rank statistic.

use crate::dp::SegmentCost;
use crate::error::{Error, Result};
use crate::matrix::ObservationMatrix;
use crate::rank::{compute_ranks, rank_covariance};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::stat::{max_single_cp_scan, permutation_pvalue_with, Segmentation};
use rand::seq::index::sample;

/// Gaussian mean-shift gain: `len * |mean|^2` per segment, evaluated
/// from per-coordinate prefix sums. Maximizing the summed gains
/// minimizes the within-segment sum of squared errors. Sensitive to
/// heavy tails by construction; it is the contrast case for the rank
/// statistic's invariance.
pub struct LinearCost {
    n: usize,
    l: usize,
    /// `(n + 1) x l` running sums of the raw observations.
    prefix: Vec<f64>,
}

impl LinearCost {
    pub fn new(x: &ObservationMatrix) -> Self {
        let (n, l) = (x.n(), x.dim());
        let mut prefix = vec![0.0; (n + 1) * l];
        for t in 0..n {
            for j in 0..l {
                prefix[(t + 1) * l + j] = prefix[t * l + j] + x.value(t, j);
            }
        }
        LinearCost { n, l, prefix }
    }
}

impl SegmentCost for LinearCost {
    fn n(&self) -> usize {
        self.n
    }

    fn cost(&self, start: usize, end: usize) -> f64 {
        debug_assert!(start < end && end <= self.n);
        let len = (end - start) as f64;
        let hi = &self.prefix[end * self.l..(end + 1) * self.l];
        let lo = &self.prefix[start * self.l..(start + 1) * self.l];
        let mut s = 0.0;
        for j in 0..self.l {
            let d = hi[j] - lo[j];
            s += d * d;
        }
        s / len
    }
}

/// Default subsample cap for the median-heuristic bandwidth.
pub const BANDWIDTH_SUBSAMPLE_CAP: usize = 500;

/// Median-heuristic bandwidth: the lower median of the pairwise
/// Euclidean distances over a seeded subsample of at most
/// `BANDWIDTH_SUBSAMPLE_CAP` rows. A zero median falls back to the
/// smallest positive distance, and to 1.0 when every distance is zero.
pub fn median_bandwidth(x: &ObservationMatrix, seed: u64) -> f64 {
    let n = x.n();
    let rows: Vec<usize> = if n <= BANDWIDTH_SUBSAMPLE_CAP {
        (0..n).collect()
    } else {
        let mut rng = stream_rng(seed, &[tag::BANDWIDTH]);
        let mut idx = sample(&mut rng, n, BANDWIDTH_SUBSAMPLE_CAP).into_vec();
        idx.sort_unstable();
        idx
    };
    let mut dists = Vec::with_capacity(rows.len() * (rows.len().saturating_sub(1)) / 2);
    for (a, &s) in rows.iter().enumerate() {
        for &t in rows.iter().skip(a + 1) {
            let mut d2 = 0.0;
            for j in 0..x.dim() {
                let d = x.value(s, j) - x.value(t, j);
                d2 += d * d;
            }
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let median = dists[(dists.len() - 1) / 2];
    if median > 0.0 {
        return median;
    }
    match dists.iter().find(|&&d| d > 0.0) {
        Some(&d) => d,
        None => 1.0,
    }
}

/// Gaussian-kernel gain: `(1/len) * sum_{s,t in seg} k(x_s, x_t)` with
/// `k(x, y) = exp(-|x - y|^2 / (2 h^2))`. Maximizing the summed gains
/// minimizes the total kernel scatter, since `k(x, x) = 1` makes each
/// segment's scatter `len - gain`.
///
/// All pairwise sums come from a summed-area table over the Gram
/// matrix, so a query costs O(1) after an O(n^2 L) build that holds
/// `(n + 1)^2` doubles; `new` rejects builds beyond `memory_budget`
/// bytes.
pub struct KernelCost {
    n: usize,
    /// `(n + 1) x (n + 1)` summed-area table of the Gram matrix.
    sat: Vec<f64>,
    bandwidth: f64,
}

impl KernelCost {
    pub fn new(x: &ObservationMatrix, bandwidth: f64, memory_budget: usize) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::invalid_input(format!(
                "bandwidth must be positive and finite; got {bandwidth}"
            )));
        }
        let n = x.n();
        let need = (n + 1) * (n + 1) * std::mem::size_of::<f64>();
        if need > memory_budget {
            return Err(Error::invalid_input(format!(
                "kernel table needs {need} bytes for n = {n}; budget is {memory_budget}"
            )));
        }
        let w = n + 1;
        let mut sat = vec![0.0; w * w];
        let inv = -1.0 / (2.0 * bandwidth * bandwidth);
        // sat[i][j] = sum over s < i, t < j of k(x_s, x_t), built row by
        // row from the inclusion-exclusion recurrence.
        for i in 1..=n {
            let mut row_running = 0.0;
            for j in 1..=n {
                let mut d2 = 0.0;
                for c in 0..x.dim() {
                    let d = x.value(i - 1, c) - x.value(j - 1, c);
                    d2 += d * d;
                }
                row_running += (d2 * inv).exp();
                sat[i * w + j] = sat[(i - 1) * w + j] + row_running;
            }
        }
        Ok(KernelCost { n, sat, bandwidth })
    }

    /// Bandwidth the table was built with.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
}

impl SegmentCost for KernelCost {
    fn n(&self) -> usize {
        self.n
    }

    fn cost(&self, start: usize, end: usize) -> f64 {
        debug_assert!(start < end && end <= self.n);
        let w = self.n + 1;
        let total = self.sat[end * w + end] - 2.0 * self.sat[start * w + end]
            + self.sat[start * w + start];
        total / (end - start) as f64
    }
}

/// Configuration for binary segmentation.
#[derive(Debug, Clone)]
pub struct BinsegConfig {
    /// Split while the permutation p-value is at or below this level.
    pub alpha: f64,
    /// Permutations per segment test.
    pub permutations: usize,
    pub min_seg_len: usize,
    pub seed: u64,
    /// Ridge cap for each segment's local rank covariance.
    pub ridge_budget: f64,
}

impl Default for BinsegConfig {
    fn default() -> Self {
        BinsegConfig {
            alpha: 0.05,
            permutations: 199,
            min_seg_len: 1,
            seed: 0,
            ridge_budget: crate::stat::DEFAULT_RIDGE_BUDGET,
        }
    }
}

/// Recursive binary segmentation with the rank statistic.
///
/// Each candidate segment is re-ranked locally, its best single change
/// point is scored by a permutation test, and the segment splits while
/// the p-value stays at or below alpha. Per-segment RNG streams are
/// keyed by the segment's global bounds, so the segments a run visits
/// get identical p-values regardless of what happened elsewhere in the
/// tree; boundaries found at a stricter alpha are therefore a subset of
/// those found at a looser one on the same data and seed.
pub fn binseg_vost(x: &ObservationMatrix, cfg: &BinsegConfig) -> Result<Segmentation> {
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(Error::invalid_input(format!(
            "alpha must lie in [0, 1]; got {}",
            cfg.alpha
        )));
    }
    if cfg.min_seg_len < 1 {
        return Err(Error::invalid_input("min_seg_len must be >= 1; got 0"));
    }
    let mut boundaries = Vec::new();
    let mut stack = vec![(0usize, x.n())];
    while let Some((s, e)) = stack.pop() {
        if e - s < 2 * cfg.min_seg_len {
            continue;
        }
        let local = x.slice_rows(s, e)?;
        let rt = compute_ranks(&local);
        let cov = rank_covariance(&rt, cfg.ridge_budget)?;
        let (idx, t_max) = max_single_cp_scan(&rt, &cov, cfg.min_seg_len)?;
        let seg_seed = derive_seed(cfg.seed, &[s as u64, e as u64]);
        let p = permutation_pvalue_with(&rt, &cov, t_max, cfg.permutations, cfg.min_seg_len, seg_seed)?;
        if p <= cfg.alpha {
            let cut = s + idx;
            boundaries.push(cut);
            stack.push((s, cut));
            stack.push((cut, e));
        }
    }
    boundaries.sort_unstable();
    Segmentation::new(x.n(), boundaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::solve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_cost_closed_form_on_a_step() {
        let x = ObservationMatrix::from_column(&[0.0, 0.0, 1.0, 1.0]).expect("finite");
        let cost = LinearCost::new(&x);
        assert_eq!(cost.cost(0, 2), 0.0);
        assert_eq!(cost.cost(2, 4), 2.0);
        assert_eq!(cost.cost(0, 4), 1.0, "4 * (1/2)^2");
        let sol = solve(&cost, 2, 1).expect("feasible");
        assert_eq!(sol.backtrack(2).expect("k in range").boundaries(), &[2]);
    }

    #[test]
    fn linear_gains_complement_the_sse() {
        // Sum of squares minus summed gains equals the within-segment
        // SSE, for any segmentation.
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..30 {
            let n = rng.gen_range(5..40);
            let l = rng.gen_range(1..4);
            let values: Vec<f64> = (0..n * l).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = ObservationMatrix::from_flat(n, l, values).expect("finite");
            let cost = LinearCost::new(&x);
            let cuts: Vec<usize> = (1..n).filter(|_| rng.gen_bool(0.2)).collect();
            let seg = Segmentation::new(n, cuts).expect("valid");
            let mut gains = 0.0;
            let mut sse = 0.0;
            for (s, e) in seg.segments() {
                gains += cost.cost(s, e);
                for j in 0..l {
                    let mean: f64 =
                        (s..e).map(|t| x.value(t, j)).sum::<f64>() / (e - s) as f64;
                    sse += (s..e).map(|t| (x.value(t, j) - mean).powi(2)).sum::<f64>();
                }
            }
            let total_sq: f64 = x.values().iter().map(|v| v * v).sum();
            assert!(
                ((total_sq - gains) - sse).abs() <= 1e-9 * total_sq.max(1.0),
                "identity broken: {} vs {sse}",
                total_sq - gains
            );
        }
    }

    #[test]
    fn kernel_cost_matches_direct_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let n = 9;
        let l = 2;
        let values: Vec<f64> = (0..n * l).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = ObservationMatrix::from_flat(n, l, values).expect("finite");
        let h = 0.7;
        let cost = KernelCost::new(&x, h, usize::MAX).expect("budget fits");
        for s in 0..n {
            for e in s + 1..=n {
                let mut direct = 0.0;
                for a in s..e {
                    for b in s..e {
                        let mut d2 = 0.0;
                        for c in 0..l {
                            let d = x.value(a, c) - x.value(b, c);
                            d2 += d * d;
                        }
                        direct += (-d2 / (2.0 * h * h)).exp();
                    }
                }
                direct /= (e - s) as f64;
                let got = cost.cost(s, e);
                assert!(
                    (got - direct).abs() <= 1e-12 * direct.max(1.0),
                    "({s}, {e}): {got} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn kernel_with_huge_bandwidth_saturates_at_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let n = 60;
        let values: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = ObservationMatrix::from_flat(n, 2, values).expect("finite");
        let scale = x.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cost = KernelCost::new(&x, 1e6 * scale, usize::MAX).expect("budget fits");
        let sol = solve(&cost, 3, 1).expect("feasible");
        let best = sol.optimum(3).expect("k in range");
        assert!(
            (best - n as f64).abs() <= 1e-6,
            "flat kernel: optimum {best} should be ~{n}"
        );
    }

    #[test]
    fn kernel_rejects_bad_bandwidth_and_budget() {
        let x = ObservationMatrix::from_column(&[1.0, 2.0, 3.0]).expect("finite");
        assert!(KernelCost::new(&x, 0.0, usize::MAX).is_err());
        assert!(KernelCost::new(&x, -1.0, usize::MAX).is_err());
        assert!(KernelCost::new(&x, f64::INFINITY, usize::MAX).is_err());
        let err = match KernelCost::new(&x, 1.0, 10) {
            Err(e) => e,
            Ok(_) => panic!("budget too small to succeed"),
        };
        assert!(err.to_string().contains("budget"));
    }

    #[test]
    fn median_bandwidth_small_case_and_fallbacks() {
        let x = ObservationMatrix::from_column(&[0.0, 1.0, 3.0]).expect("finite");
        // Pairwise distances {1, 3, 2}; lower median of {1, 2, 3} is 2.
        assert_eq!(median_bandwidth(&x, 0), 2.0);

        let tied = ObservationMatrix::from_column(&[5.0, 5.0, 5.0, 7.0]).expect("finite");
        // Distances {0, 0, 0, 2, 2, 2}: zero median, smallest positive is 2.
        assert_eq!(median_bandwidth(&tied, 0), 2.0);

        let constant = ObservationMatrix::from_column(&[4.0; 6]).expect("finite");
        assert_eq!(median_bandwidth(&constant, 0), 1.0, "all-zero distances fall back to 1");
    }

    #[test]
    fn median_bandwidth_subsample_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let n = BANDWIDTH_SUBSAMPLE_CAP + 100;
        let values: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let x = ObservationMatrix::from_column(&values).expect("finite");
        let h1 = median_bandwidth(&x, 9);
        let h2 = median_bandwidth(&x, 9);
        assert_eq!(h1, h2, "same seed, same subsample");
        assert!(h1 > 0.0);
    }

    #[test]
    fn binseg_finds_both_steps_of_a_clean_staircase() {
        let mut values = vec![0.0; 30];
        values.extend(vec![1.0; 30]);
        values.extend(vec![0.0; 30]);
        let x = ObservationMatrix::from_column(&values).expect("finite");
        let seg = binseg_vost(&x, &BinsegConfig::default()).expect("valid");
        assert_eq!(seg.boundaries(), &[30, 60]);
    }

    #[test]
    fn binseg_leaves_constant_data_alone() {
        let x = ObservationMatrix::from_column(&[2.5; 50]).expect("finite");
        let seg = binseg_vost(&x, &BinsegConfig::default()).expect("valid");
        assert!(seg.boundaries().is_empty());
    }

    #[test]
    fn binseg_stricter_alpha_is_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for trial in 0..10 {
            let mut values: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
            values.extend((0..40).map(|_| 2.0 + rng.gen::<f64>()));
            values.extend((0..40).map(|_| rng.gen::<f64>()));
            let x = ObservationMatrix::from_column(&values).expect("finite");
            let strict = binseg_vost(
                &x,
                &BinsegConfig { alpha: 0.01, seed: trial, ..BinsegConfig::default() },
            )
            .expect("valid");
            let loose = binseg_vost(
                &x,
                &BinsegConfig { alpha: 0.05, seed: trial, ..BinsegConfig::default() },
            )
            .expect("valid");
            for b in strict.boundaries() {
                assert!(
                    loose.boundaries().contains(b),
                    "trial {trial}: boundary {b} found at 1% but not at 5%"
                );
            }
        }
    }

    #[test]
    fn binseg_is_deterministic_in_the_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let mut values: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
        values.extend((0..50).map(|_| 3.0 + rng.gen::<f64>()));
        let x = ObservationMatrix::from_column(&values).expect("finite");
        let a = binseg_vost(&x, &BinsegConfig { seed: 77, ..BinsegConfig::default() }).expect("valid");
        let b = binseg_vost(&x, &BinsegConfig { seed: 77, ..BinsegConfig::default() }).expect("valid");
        assert_eq!(a.boundaries(), b.boundaries());
    }

    #[test]
    fn binseg_validates_config() {
        let x = ObservationMatrix::from_column(&[1.0; 10]).expect("finite");
        assert!(binseg_vost(&x, &BinsegConfig { alpha: 1.2, ..BinsegConfig::default() }).is_err());
        assert!(
            binseg_vost(&x, &BinsegConfig { min_seg_len: 0, ..BinsegConfig::default() }).is_err()
        );
    }
}
