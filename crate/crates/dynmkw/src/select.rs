// SPDX-License-Identifier: MIT OR Apache-2.0

//! Choosing the number of change points.
//!
//! The objective curve `D -> I_{D+1}(n)` grows steeply while true
//! change points remain to be added and almost linearly afterwards. A
//! two-line fit locates that kink: for every interior candidate the
//! curve is split (kink belongs to both halves), each half gets an
//! ordinary least-squares line, and the candidate with the smallest
//! total residual sum of squares wins. Candidate selection is invariant
//! under affine rescaling of the curve.
//!
//! Zero change points never produce a kink, so a significance gate runs
//! first: the best single change point is scored by a permutation test
//! and the heuristic only runs when the null is rejected.

use crate::dp::{solve, CostAccess, RankCost};
use crate::error::{Error, Result};
use crate::matrix::ObservationMatrix;
use crate::rank::{compute_ranks, rank_covariance, RankCovariance, RankTable};
use crate::stat::{
    max_single_cp_scan, permutation_pvalue_with, Segmentation, DEFAULT_RIDGE_BUDGET,
};

/// Hard cap of the default candidate range for the number of changes.
pub const DEFAULT_D_MAX_CAP: usize = 20;

/// Default permutation count for the significance gate.
pub const DEFAULT_PERMUTATIONS: usize = 999;

/// Default memory budget for cost materialization: 1 GiB.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

/// Outcome of the zero-change significance gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateResult {
    /// True when the permutation p-value is at or below alpha.
    pub significant: bool,
    /// Permutation p-value of the best single change point.
    pub p_value: f64,
    /// Position of the best single change point.
    pub best_index: usize,
    /// Statistic value at that position.
    pub t_max: f64,
}

/// Outcome of model selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected number of change points (0 when the gate held).
    pub k_hat: usize,
    /// `(candidate, total RSS)` for every interior kink candidate;
    /// empty when the gate already decided on zero.
    pub rss_curve: Vec<(usize, f64)>,
    /// P-value of the significance gate.
    pub gate_pvalue: f64,
    /// True when the gate stopped the search at zero changes.
    pub gated: bool,
    /// True when the RSS curve is too flat to distinguish candidates
    /// (e.g. a perfectly linear objective curve).
    pub low_confidence: bool,
}

fn ols_rss(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut rss = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - (intercept + slope * x);
        rss += r * r;
    }
    rss
}

/// Locates the kink of an objective curve indexed by the number of
/// change points: `curve[d]` is the optimal objective with `d` changes,
/// `d = 0 ..= d_max`. Returns the selected number of changes and the
/// per-candidate RSS curve. Needs at least 4 points so that both sides
/// of every candidate hold two; ties break to the smallest candidate.
pub fn select_num_changes(curve: &[f64]) -> Result<(usize, Vec<(usize, f64)>, bool)> {
    if curve.len() < 4 {
        return Err(Error::invalid_input(format!(
            "objective curve needs >= 4 points; got {}",
            curve.len()
        )));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_input("objective curve has non-finite entries"));
    }
    let xs: Vec<f64> = (0..curve.len()).map(|d| d as f64).collect();
    let d_max = curve.len() - 1;
    let mut rss_curve = Vec::with_capacity(d_max - 1);
    let mut best = (1usize, f64::INFINITY);
    for kappa in 1..d_max {
        let rss = ols_rss(&xs[..=kappa], &curve[..=kappa])
            + ols_rss(&xs[kappa..], &curve[kappa..]);
        rss_curve.push((kappa, rss));
        if rss < best.1 {
            best = (kappa, rss);
        }
    }
    let max_rss = rss_curve.iter().map(|&(_, r)| r).fold(f64::NEG_INFINITY, f64::max);
    let min_rss = rss_curve.iter().map(|&(_, r)| r).fold(f64::INFINITY, f64::min);
    let low_confidence = (max_rss - min_rss) <= 1e-9 * max_rss.abs().max(1.0);
    Ok((best.0, rss_curve, low_confidence))
}

/// Runs the zero-change significance gate against precomputed ranks.
pub fn zero_gate_with(
    rt: &RankTable,
    cov: &RankCovariance,
    alpha: f64,
    permutations: usize,
    min_seg_len: usize,
    seed: u64,
) -> Result<GateResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid_input(format!(
            "alpha must lie in [0, 1]; got {alpha}"
        )));
    }
    let (best_index, t_max) = max_single_cp_scan(rt, cov, min_seg_len)?;
    let p_value = permutation_pvalue_with(rt, cov, t_max, permutations, min_seg_len, seed)?;
    Ok(GateResult { significant: p_value <= alpha, p_value, best_index, t_max })
}

/// Zero-change gate on raw observations, with the default ridge budget.
pub fn zero_gate(
    x: &ObservationMatrix,
    alpha: f64,
    permutations: usize,
    min_seg_len: usize,
    seed: u64,
) -> Result<GateResult> {
    let rt = compute_ranks(x);
    let cov = rank_covariance(&rt, DEFAULT_RIDGE_BUDGET)?;
    zero_gate_with(&rt, &cov, alpha, permutations, min_seg_len, seed)
}

/// Configuration of the unknown-K detection pipeline.
#[derive(Debug, Clone)]
pub struct AutoConfig {
    /// Largest number of change points considered; `None` means
    /// `min(20, n / (2 * min_seg_len))`.
    pub d_max: Option<usize>,
    pub min_seg_len: usize,
    /// Gate significance level.
    pub alpha: f64,
    /// Gate permutation count.
    pub permutations: usize,
    pub seed: u64,
    /// Cap of the relative ridge schedule for the rank covariance.
    pub ridge_budget: f64,
    /// Cost materialization budget in bytes.
    pub memory_budget: usize,
}

impl Default for AutoConfig {
    fn default() -> Self {
        AutoConfig {
            d_max: None,
            min_seg_len: 1,
            alpha: 0.05,
            permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            ridge_budget: DEFAULT_RIDGE_BUDGET,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// Full unknown-K detection outcome.
#[derive(Debug, Clone)]
pub struct AutoDetection {
    pub segmentation: Segmentation,
    pub selection: SelectionResult,
    /// Objective curve indexed by the number of change points; empty
    /// when the gate stopped at zero.
    pub i_curve: Vec<f64>,
    pub ridge: f64,
    pub condition_flag: bool,
}

/// Detects change points with unknown K: significance gate, then the
/// dynamic program over `1 ..= d_max + 1` segments, then the slope
/// heuristic on the objective curve.
pub fn detect_auto(x: &ObservationMatrix, cfg: &AutoConfig) -> Result<AutoDetection> {
    let n = x.n();
    let rt = compute_ranks(x);
    let cov = rank_covariance(&rt, cfg.ridge_budget)?;
    let gate = zero_gate_with(&rt, &cov, cfg.alpha, cfg.permutations, cfg.min_seg_len, cfg.seed)?;
    if !gate.significant {
        return Ok(AutoDetection {
            segmentation: Segmentation::new(n, Vec::new())?,
            selection: SelectionResult {
                k_hat: 0,
                rss_curve: Vec::new(),
                gate_pvalue: gate.p_value,
                gated: true,
                low_confidence: false,
            },
            i_curve: Vec::new(),
            ridge: cov.ridge(),
            condition_flag: cov.condition_flag(),
        });
    }
    let default_d_max = DEFAULT_D_MAX_CAP.min(n / (2 * cfg.min_seg_len));
    let feasible_d_max = n / cfg.min_seg_len - 1;
    let d_max = cfg.d_max.unwrap_or(default_d_max).min(feasible_d_max);
    if d_max < 3 {
        return Err(Error::invalid_input(format!(
            "d_max = {d_max} leaves fewer than 4 curve points; need n >= {} at min_seg_len {}",
            4 * cfg.min_seg_len, cfg.min_seg_len
        )));
    }
    let cost = RankCost::new(&rt, &cov)?;
    let access = CostAccess::within_budget(&cost, cfg.memory_budget);
    let sol = solve(&access, d_max + 1, cfg.min_seg_len)?;
    let i_curve = sol.optimum_curve();
    let (k_hat, rss_curve, low_confidence) = select_num_changes(&i_curve)?;
    let segmentation = sol.backtrack(k_hat + 1)?;
    Ok(AutoDetection {
        segmentation,
        selection: SelectionResult {
            k_hat,
            rss_curve,
            gate_pvalue: gate.p_value,
            gated: false,
            low_confidence,
        },
        i_curve,
        ridge: cov.ridge(),
        condition_flag: cov.condition_flag(),
    })
}

/// Detects exactly `num_changes` change points (known-K path).
pub fn detect_known(
    x: &ObservationMatrix,
    num_changes: usize,
    min_seg_len: usize,
    ridge_budget: f64,
    memory_budget: usize,
) -> Result<Segmentation> {
    let rt = compute_ranks(x);
    let cov = rank_covariance(&rt, ridge_budget)?;
    let cost = RankCost::new(&rt, &cov)?;
    let access = CostAccess::within_budget(&cost, memory_budget);
    let sol = solve(&access, num_changes + 1, min_seg_len)?;
    sol.backtrack(num_changes + 1)
}
