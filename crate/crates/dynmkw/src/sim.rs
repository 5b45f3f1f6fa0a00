// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic-data generation and Monte-Carlo benchmarking: a
//! piecewise-constant multivariate signal in correlated Gaussian
//! noise, an optional heavy-tailed outlier mixture, precision/recall
//! scoring against the true change points, and replicated head-to-head
//! method comparisons on shared noise seeds.

use crate::baselines::{binseg_vost, median_bandwidth, BinsegConfig, KernelCost, LinearCost};
use crate::dp::{solve, CostAccess};
use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;
use crate::matrix::ObservationMatrix;
use crate::rng::{derive_seed, stream_rng, tag};
use crate::select::{
    detect_auto, detect_known, AutoConfig, DEFAULT_MEMORY_BUDGET,
};
use crate::stat::{Segmentation, DEFAULT_RIDGE_BUDGET};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::{self, Write};

/// How `snr_db` converts to the noise scale sigma for a unit jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrConvention {
    /// sigma = amplitude * 10^(-snr_db / 20): decibels of an amplitude
    /// ratio. The default.
    Amplitude,
    /// sigma = amplitude * 10^(-snr_db / 10): decibels of a power
    /// ratio, exposed for comparison runs under the other reading.
    Power,
}

/// Scenario description for the synthetic benchmark.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Signal length.
    pub n: usize,
    /// Signal dimension.
    pub l: usize,
    /// Shared change-point indices, strictly increasing in (0, n).
    pub true_boundaries: Vec<usize>,
    /// Per-segment level vectors, one row of length `l` per segment.
    /// At every boundary at least one coordinate must change and at
    /// least one must stay, so no single coordinate tells the whole
    /// story.
    pub jump_pattern: Vec<Vec<f64>>,
    pub snr_db: f64,
    pub snr_convention: SnrConvention,
    /// Row-major `l x l` correlation matrix of the Gaussian noise.
    pub noise_correlation: Vec<f64>,
    /// Fraction of rows to contaminate, in [0, 1).
    pub outlier_rate: f64,
    /// Extra outlier noise variance over the background, in dB.
    pub outlier_excess_db: f64,
    pub replications: usize,
    pub seed: u64,
}

/// Row-major equicorrelation matrix: ones on the diagonal, `rho` off.
pub fn equicorrelation(l: usize, rho: f64) -> Vec<f64> {
    let mut m = vec![rho; l * l];
    for i in 0..l {
        m[i * l + i] = 1.0;
    }
    m
}

impl Default for SimConfig {
    /// The benchmark scenario: a five-dimensional signal of length 500
    /// with four shared change points at 100, 200, 300, 400; unit
    /// jumps touch two or three of the five coordinates per boundary
    /// and always leave at least one coordinate flat.
    fn default() -> Self {
        SimConfig {
            n: 500,
            l: 5,
            true_boundaries: vec![100, 200, 300, 400],
            jump_pattern: vec![
                vec![0.0, 0.0, 0.0, 0.0, 0.0],
                vec![1.0, 1.0, 0.0, 0.0, 1.0],
                vec![1.0, 0.0, 1.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 1.0, 1.0],
                vec![0.0, 1.0, 0.0, 1.0, 0.0],
            ],
            snr_db: 16.0,
            snr_convention: SnrConvention::Amplitude,
            noise_correlation: equicorrelation(5, 0.3),
            outlier_rate: 0.0,
            outlier_excess_db: 10.0,
            replications: 100,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Checks every structural invariant; the generators call this on
    /// entry.
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::invalid_input("n must be >= 1; got 0"));
        }
        if self.l < 1 {
            return Err(Error::invalid_input("l must be >= 1; got 0"));
        }
        for w in self.true_boundaries.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid_input(format!(
                    "true_boundaries must be strictly increasing; got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let (Some(&lo), Some(&hi)) = (self.true_boundaries.first(), self.true_boundaries.last()) {
            if lo == 0 || hi >= self.n {
                return Err(Error::invalid_input(format!(
                    "true_boundaries must lie strictly inside (0, {}); got {lo}..={hi}",
                    self.n
                )));
            }
        }
        if self.jump_pattern.len() != self.true_boundaries.len() + 1 {
            return Err(Error::invalid_input(format!(
                "jump_pattern needs {} segment rows; got {}",
                self.true_boundaries.len() + 1,
                self.jump_pattern.len()
            )));
        }
        for (s, row) in self.jump_pattern.iter().enumerate() {
            if row.len() != self.l {
                return Err(Error::invalid_input(format!(
                    "jump_pattern segment {s} has {} levels; dimension is {}",
                    row.len(),
                    self.l
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid_input(format!(
                    "jump_pattern segment {s}, coordinate {j} is not finite"
                )));
            }
        }
        for b in 1..self.jump_pattern.len() {
            let prev = &self.jump_pattern[b - 1];
            let next = &self.jump_pattern[b];
            let changed = prev.iter().zip(next).filter(|(p, q)| p != q).count();
            if changed == 0 {
                return Err(Error::invalid_input(format!(
                    "no coordinate changes at boundary {b}; every change point must move something"
                )));
            }
            if changed == self.l {
                return Err(Error::invalid_input(format!(
                    "every coordinate changes at boundary {b}; at least one must stay flat"
                )));
            }
        }
        if self.snr_db.is_nan() || !self.sigma().is_finite() {
            return Err(Error::invalid_input(format!(
                "snr_db = {} gives a non-finite noise scale",
                self.snr_db
            )));
        }
        if self.noise_correlation.len() != self.l * self.l {
            return Err(Error::invalid_input(format!(
                "noise_correlation must be {0} x {0} row-major; got {1} entries",
                self.l,
                self.noise_correlation.len()
            )));
        }
        for i in 0..self.l {
            let d = self.noise_correlation[i * self.l + i];
            if (d - 1.0).abs() > 1e-12 {
                return Err(Error::invalid_input(format!(
                    "noise_correlation diagonal entry {i} is {d}; a correlation matrix has unit diagonal"
                )));
            }
            for j in 0..i {
                let a = self.noise_correlation[i * self.l + j];
                let b = self.noise_correlation[j * self.l + i];
                if !a.is_finite() || (a - b).abs() > 1e-12 {
                    return Err(Error::invalid_input(format!(
                        "noise_correlation is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        if !(0.0..1.0).contains(&self.outlier_rate) {
            return Err(Error::invalid_input(format!(
                "outlier_rate must lie in [0, 1); got {}",
                self.outlier_rate
            )));
        }
        if !self.outlier_excess_db.is_finite() {
            return Err(Error::invalid_input(format!(
                "outlier_excess_db must be finite; got {}",
                self.outlier_excess_db
            )));
        }
        if self.replications < 1 {
            return Err(Error::invalid_input("replications must be >= 1; got 0"));
        }
        Ok(())
    }

    /// Largest absolute per-coordinate level change over all
    /// boundaries; 0 when there are no boundaries.
    pub fn amplitude(&self) -> f64 {
        let mut a = 0.0f64;
        for b in 1..self.jump_pattern.len() {
            for (p, q) in self.jump_pattern[b - 1].iter().zip(&self.jump_pattern[b]) {
                a = a.max((q - p).abs());
            }
        }
        a
    }

    /// Marginal noise standard deviation implied by the SNR.
    pub fn sigma(&self) -> f64 {
        let denom_exp = match self.snr_convention {
            SnrConvention::Amplitude => self.snr_db / 20.0,
            SnrConvention::Power => self.snr_db / 10.0,
        };
        self.amplitude() * 10f64.powf(-denom_exp)
    }
}

/// The noiseless piecewise-constant signal of a scenario.
pub fn baseline_signal(cfg: &SimConfig) -> Result<ObservationMatrix> {
    cfg.validate()?;
    let mut values = Vec::with_capacity(cfg.n * cfg.l);
    let mut seg = 0usize;
    for t in 0..cfg.n {
        if seg < cfg.true_boundaries.len() && t >= cfg.true_boundaries[seg] {
            seg += 1;
        }
        values.extend_from_slice(&cfg.jump_pattern[seg]);
    }
    ObservationMatrix::from_flat(cfg.n, cfg.l, values)
}

/// One replicate of the scenario: baseline plus correlated Gaussian
/// noise at the SNR-implied scale. Deterministic in (cfg.seed,
/// replicate); the same replicate index reuses the same underlying
/// standard-normal draws at every SNR, so sweeps are paired.
pub fn generate_signal(cfg: &SimConfig, replicate: usize) -> Result<ObservationMatrix> {
    cfg.validate()?;
    let l = cfg.l;
    let chol = cholesky_lower(&cfg.noise_correlation, l, 1e-12).ok_or_else(|| {
        Error::invalid_input("noise_correlation is not positive definite")
    })?;
    let sigma = cfg.sigma();
    let mut rng = stream_rng(cfg.seed, &[tag::NOISE, replicate as u64]);
    let mut values = baseline_signal(cfg)?.values().to_vec();
    let mut z = vec![0.0; l];
    for t in 0..cfg.n {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        let row = &mut values[t * l..(t + 1) * l];
        for (i, r) in row.iter_mut().enumerate() {
            // Lower-triangular mix: row i of chol times z.
            let mut noise = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                noise += chol[i * l + j] * zj;
            }
            *r += sigma * noise;
        }
    }
    ObservationMatrix::from_flat(cfg.n, cfg.l, values)
}

/// Pure-noise matrix: `n x l` iid standard normal draws, keyed by
/// (seed, replicate) like the scenario generator. The null case for
/// calibration runs.
pub fn gaussian_null(n: usize, l: usize, seed: u64, replicate: usize) -> Result<ObservationMatrix> {
    if n < 1 {
        return Err(Error::invalid_input("n must be >= 1; got 0"));
    }
    if l < 1 {
        return Err(Error::invalid_input("l must be >= 1; got 0"));
    }
    let mut rng = stream_rng(seed, &[tag::NOISE, replicate as u64]);
    let values: Vec<f64> = (0..n * l).map(|_| rng.sample(StandardNormal)).collect();
    ObservationMatrix::from_flat(n, l, values)
}

/// Adds heavy outlier noise to a uniformly chosen `ceil(rate * n)`
/// subset of rows: zero-mean Gaussian, iid across coordinates, with
/// variance `sigma^2 * 10^(excess_db / 10)`. Deterministic given seed.
pub fn inject_outliers(
    x: &ObservationMatrix,
    rate: f64,
    excess_db: f64,
    sigma: f64,
    seed: u64,
) -> Result<ObservationMatrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid_input(format!(
            "outlier rate must lie in [0, 1); got {rate}"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() || !excess_db.is_finite() {
        return Err(Error::invalid_input(format!(
            "outlier noise needs finite sigma >= 0 and excess_db; got {sigma} and {excess_db}"
        )));
    }
    let count = (rate * x.n() as f64).ceil() as usize;
    if count == 0 {
        return Ok(x.clone());
    }
    let out_sd = sigma * 10f64.powf(excess_db / 20.0);
    let mut rng = stream_rng(seed, &[tag::OUTLIER]);
    let mut rows = sample(&mut rng, x.n(), count).into_vec();
    rows.sort_unstable();
    let mut values = x.values().to_vec();
    for t in rows {
        for v in &mut values[t * x.dim()..(t + 1) * x.dim()] {
            let z: f64 = rng.sample(StandardNormal);
            *v += out_sd * z;
        }
    }
    ObservationMatrix::from_flat(x.n(), x.dim(), values)
}

/// Match quality of an estimated segmentation against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    /// Matched / detected; 1 when nothing was detected (no false
    /// positives to report).
    pub precision: f64,
    /// Matched / actual; 1 when there was nothing to find.
    pub recall: f64,
    /// Index tolerance the matching used.
    pub tolerance: usize,
}

/// Greedy one-to-one matching in increasing index order: a detection
/// and a true change pair up when they lie within `tolerance` samples,
/// and each side is consumed at most once.
pub fn precision_recall(est: &Segmentation, truth: &[usize], tolerance: usize) -> EvalMetrics {
    debug_assert!(truth.windows(2).all(|w| w[0] < w[1]), "truth must be sorted");
    let det = est.boundaries();
    let (mut i, mut j, mut matched) = (0usize, 0usize, 0usize);
    while i < det.len() && j < truth.len() {
        if det[i].abs_diff(truth[j]) <= tolerance {
            matched += 1;
            i += 1;
            j += 1;
        } else if det[i] < truth[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    let precision = if det.is_empty() { 1.0 } else { matched as f64 / det.len() as f64 };
    let recall = if truth.is_empty() { 1.0 } else { matched as f64 / truth.len() as f64 };
    EvalMetrics { precision, recall, tolerance }
}

/// Detection methods the harness can benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Rank statistic with dynamic programming.
    DynMkw,
    /// Gaussian mean-shift cost with dynamic programming.
    Linear,
    /// Gaussian-kernel cost with dynamic programming.
    Kernel,
    /// Binary segmentation driven by the rank permutation test.
    Binseg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DynMkw => "dynmkw",
            Method::Linear => "linear",
            Method::Kernel => "kernel",
            Method::Binseg => "binseg",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "dynmkw" => Ok(Method::DynMkw),
            "linear" => Ok(Method::Linear),
            "kernel" => Ok(Method::Kernel),
            "binseg" => Ok(Method::Binseg),
            other => Err(Error::invalid_input(format!(
                "unknown method {other:?}; expected dynmkw, linear, kernel, or binseg"
            ))),
        }
    }
}

/// Method and evaluation knobs shared by every replicate of a run.
#[derive(Debug, Clone)]
pub struct RunParams {
    /// Significance level for the gate (unknown-K rank method) and for
    /// binary segmentation's splitting test.
    pub alpha: f64,
    /// Permutations per significance test. 199 keeps replicated runs
    /// affordable; raise it for final sweeps.
    pub permutations: usize,
    pub min_seg_len: usize,
    pub ridge_budget: f64,
    pub memory_budget: usize,
    /// Sample tolerance of the precision/recall matching.
    pub tolerance: usize,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            alpha: 0.05,
            permutations: 199,
            min_seg_len: 1,
            ridge_budget: DEFAULT_RIDGE_BUDGET,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            tolerance: 1,
        }
    }
}

/// Mean and standard error of one metric over the replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    /// `None` with a single replicate, where no spread is estimable.
    pub stderr: Option<f64>,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let r = values.len();
    let mean = values.iter().sum::<f64>() / r as f64;
    let stderr = if r < 2 {
        None
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        Some((var / r as f64).sqrt())
    };
    MetricSummary { mean, stderr }
}

/// Aggregated outcome of one (method, scenario) Monte-Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub method: Method,
    pub snr_db: f64,
    pub outlier_rate: f64,
    pub replications: usize,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    /// Number of detected change points per replicate, summarized.
    pub detected: MetricSummary,
}

struct ReplicateOutcome {
    precision: f64,
    recall: f64,
    detected: usize,
}

fn with_replicate_context(e: Error, rep: usize, seed: u64) -> Error {
    match e {
        Error::InvalidInput(m) => {
            Error::InvalidInput(format!("replicate {rep} under seed {seed}: {m}"))
        }
        Error::Numerical(m) => {
            Error::Numerical(format!("replicate {rep} under seed {seed}: {m}"))
        }
    }
}

fn run_replicate(
    cfg: &SimConfig,
    method: Method,
    known_k: Option<usize>,
    params: &RunParams,
    rep: usize,
) -> Result<ReplicateOutcome> {
    let mut x = generate_signal(cfg, rep)?;
    // Clean and contaminated runs share the same noise stream; only
    // the outlier overlay differs.
    let rep_seed = derive_seed(cfg.seed, &[rep as u64]);
    if cfg.outlier_rate > 0.0 {
        x = inject_outliers(&x, cfg.outlier_rate, cfg.outlier_excess_db, cfg.sigma(), rep_seed)?;
    }
    let seg = match (method, known_k) {
        (Method::DynMkw, Some(k)) => {
            detect_known(&x, k, params.min_seg_len, params.ridge_budget, params.memory_budget)?
        }
        (Method::DynMkw, None) => {
            let auto_cfg = AutoConfig {
                d_max: None,
                min_seg_len: params.min_seg_len,
                alpha: params.alpha,
                permutations: params.permutations,
                seed: rep_seed,
                ridge_budget: params.ridge_budget,
                memory_budget: params.memory_budget,
            };
            detect_auto(&x, &auto_cfg)?.segmentation
        }
        (Method::Linear, Some(k)) => {
            let cost = LinearCost::new(&x);
            let access = CostAccess::within_budget(&cost, params.memory_budget);
            solve(&access, k + 1, params.min_seg_len)?.backtrack(k + 1)?
        }
        (Method::Kernel, Some(k)) => {
            let h = median_bandwidth(&x, rep_seed);
            let cost = KernelCost::new(&x, h, params.memory_budget)?;
            let access = CostAccess::within_budget(&cost, params.memory_budget);
            solve(&access, k + 1, params.min_seg_len)?.backtrack(k + 1)?
        }
        (Method::Binseg, None) => binseg_vost(
            &x,
            &BinsegConfig {
                alpha: params.alpha,
                permutations: params.permutations,
                min_seg_len: params.min_seg_len,
                seed: rep_seed,
                ridge_budget: params.ridge_budget,
            },
        )?,
        // Ruled out by the up-front validation in monte_carlo_with.
        _ => unreachable!("method/known_k combination validated before dispatch"),
    };
    let m = precision_recall(&seg, &cfg.true_boundaries, params.tolerance);
    Ok(ReplicateOutcome {
        precision: m.precision,
        recall: m.recall,
        detected: seg.boundaries().len(),
    })
}

/// Replicated evaluation of one method on one scenario with default
/// run parameters.
pub fn monte_carlo(
    cfg: &SimConfig,
    method: Method,
    known_k: Option<usize>,
) -> Result<MonteCarloSummary> {
    monte_carlo_with(cfg, method, known_k, &RunParams::default())
}

/// Replicated evaluation of one method on one scenario.
///
/// Replicates run in parallel on independent RNG streams keyed by
/// (cfg.seed, replicate); the method is not part of the key, so
/// head-to-head comparisons see identical data. A failing replicate
/// aborts the whole run and reports which replicate and seed it was.
pub fn monte_carlo_with(
    cfg: &SimConfig,
    method: Method,
    known_k: Option<usize>,
    params: &RunParams,
) -> Result<MonteCarloSummary> {
    cfg.validate()?;
    match (method, known_k) {
        (Method::Binseg, Some(_)) => {
            return Err(Error::invalid_input(
                "binary segmentation chooses its own number of changes; drop known_k",
            ));
        }
        (Method::Linear | Method::Kernel, None) => {
            return Err(Error::invalid_input(format!(
                "the {} baseline runs only at a known number of changes",
                method.name()
            )));
        }
        _ => {}
    }
    let outcomes: Vec<Result<ReplicateOutcome>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            run_replicate(cfg, method, known_k, params, rep)
                .map_err(|e| with_replicate_context(e, rep, cfg.seed))
        })
        .collect();
    let mut precisions = Vec::with_capacity(cfg.replications);
    let mut recalls = Vec::with_capacity(cfg.replications);
    let mut detected = Vec::with_capacity(cfg.replications);
    for outcome in outcomes {
        let o = outcome?;
        precisions.push(o.precision);
        recalls.push(o.recall);
        detected.push(o.detected as f64);
    }
    Ok(MonteCarloSummary {
        method,
        snr_db: cfg.snr_db,
        outlier_rate: cfg.outlier_rate,
        replications: cfg.replications,
        precision: summarize(&precisions),
        recall: summarize(&recalls),
        detected: summarize(&detected),
    })
}

/// Runs every method at every SNR of the grid on shared replicate
/// seeds; rows come back grouped by SNR, methods in the given order.
pub fn sweep(
    cfg: &SimConfig,
    methods: &[(Method, Option<usize>)],
    snr_grid: &[f64],
    params: &RunParams,
) -> Result<Vec<MonteCarloSummary>> {
    let mut rows = Vec::with_capacity(methods.len() * snr_grid.len());
    for &snr in snr_grid {
        let point = SimConfig { snr_db: snr, ..cfg.clone() };
        for &(method, known_k) in methods {
            rows.push(monte_carlo_with(&point, method, known_k, params)?);
        }
    }
    Ok(rows)
}

/// Writes summaries as tidy CSV: one row per metric with columns
/// method, snr_db, outlier_rate, metric, mean, stderr, replications.
/// A lone replicate writes NA for the standard error.
pub fn write_csv<W: Write>(rows: &[MonteCarloSummary], out: &mut W) -> io::Result<()> {
    writeln!(out, "method,snr_db,outlier_rate,metric,mean,stderr,replications")?;
    for s in rows {
        let metrics = [
            ("precision", &s.precision),
            ("recall", &s.recall),
            ("detected", &s.detected),
        ];
        for (name, m) in metrics {
            let se = match m.stderr {
                Some(v) => v.to_string(),
                None => "NA".to_string(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.method.name(),
                s.snr_db,
                s.outlier_rate,
                name,
                m.mean,
                se,
                s.replications
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SimConfig {
        SimConfig {
            n: 80,
            l: 2,
            true_boundaries: vec![20, 40, 60],
            jump_pattern: vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 1.0],
            ],
            snr_db: 40.0,
            noise_correlation: equicorrelation(2, 0.3),
            replications: 4,
            seed: 7,
            ..SimConfig::default()
        }
    }

    #[test]
    fn default_scenario_is_valid() {
        let cfg = SimConfig::default();
        cfg.validate().expect("default scenario must satisfy its own invariants");
        assert_eq!(cfg.amplitude(), 1.0);
    }

    #[test]
    fn sigma_frozen_values() {
        let mut cfg = SimConfig::default();
        assert!((cfg.sigma() - 0.15848931924611134).abs() <= 1e-15, "16 dB amplitude ratio");
        cfg.snr_convention = SnrConvention::Power;
        assert!((cfg.sigma() - 0.025118864315095794).abs() <= 1e-15, "16 dB power ratio");
        cfg.snr_convention = SnrConvention::Amplitude;
        cfg.snr_db = f64::INFINITY;
        assert_eq!(cfg.sigma(), 0.0, "infinite SNR means no noise");
    }

    #[test]
    fn infinite_snr_reproduces_the_baseline_exactly() {
        let cfg = SimConfig { snr_db: f64::INFINITY, ..small_cfg() };
        let x = generate_signal(&cfg, 3).expect("valid");
        let base = baseline_signal(&cfg).expect("valid");
        assert_eq!(x.values(), base.values());
    }

    #[test]
    fn generation_is_deterministic_per_replicate() {
        let cfg = small_cfg();
        let a = generate_signal(&cfg, 2).expect("valid");
        let b = generate_signal(&cfg, 2).expect("valid");
        assert_eq!(a.values(), b.values());
        let c = generate_signal(&cfg, 3).expect("valid");
        assert_ne!(a.values(), c.values(), "different replicates draw different noise");
    }

    #[test]
    fn noise_covariance_matches_the_target() {
        // Law of large numbers: the empirical covariance of the noise
        // over 1e5 rows stays within 3% of sigma^2 (the natural scale;
        // the diagonal entries themselves) of sigma^2 * correlation.
        let cfg = SimConfig {
            n: 100_000,
            true_boundaries: vec![25_000, 50_000, 75_000],
            jump_pattern: vec![
                vec![0.0, 0.0, 0.0, 0.0, 0.0],
                vec![1.0, 1.0, 0.0, 0.0, 1.0],
                vec![1.0, 0.0, 1.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 1.0, 1.0],
            ],
            snr_db: 20.0 * 2f64.log10(), // sigma = 1/2 exactly
            replications: 1,
            seed: 11,
            ..SimConfig::default()
        };
        let sigma = cfg.sigma();
        assert!((sigma - 0.5).abs() <= 1e-15);
        let x = generate_signal(&cfg, 0).expect("valid");
        let base = baseline_signal(&cfg).expect("valid");
        let l = cfg.l;
        let mut mean = vec![0.0; l];
        let noise: Vec<f64> = x
            .values()
            .iter()
            .zip(base.values())
            .map(|(a, b)| a - b)
            .collect();
        for t in 0..cfg.n {
            for j in 0..l {
                mean[j] += noise[t * l + j];
            }
        }
        for m in mean.iter_mut() {
            *m /= cfg.n as f64;
        }
        for i in 0..l {
            for j in 0..l {
                let mut c = 0.0;
                for t in 0..cfg.n {
                    c += (noise[t * l + i] - mean[i]) * (noise[t * l + j] - mean[j]);
                }
                c /= (cfg.n - 1) as f64;
                let target = sigma * sigma * if i == j { 1.0 } else { 0.3 };
                assert!(
                    (c - target).abs() <= 0.03 * sigma * sigma,
                    "covariance ({i}, {j}) = {c}, target {target}"
                );
            }
        }
    }

    #[test]
    fn non_positive_definite_correlation_is_rejected() {
        // Equicorrelation -0.5 in dimension 5 has eigenvalue 1 + 4*rho < 0.
        let cfg = SimConfig {
            noise_correlation: equicorrelation(5, -0.5),
            ..SimConfig::default()
        };
        let err = generate_signal(&cfg, 0).expect_err("not PSD");
        assert!(err.to_string().contains("positive definite"));
    }

    #[test]
    fn config_validation_catches_structural_mistakes() {
        let cfg = SimConfig { true_boundaries: vec![200, 100, 300, 400], ..SimConfig::default() };
        assert!(cfg.validate().is_err(), "unsorted boundaries");

        let cfg = SimConfig { true_boundaries: vec![100, 200, 300, 500], ..SimConfig::default() };
        assert!(cfg.validate().is_err(), "boundary at n");

        let mut cfg = small_cfg();
        cfg.jump_pattern[1] = cfg.jump_pattern[0].clone();
        assert!(cfg.validate().is_err(), "a boundary where nothing changes");

        let mut cfg = small_cfg();
        cfg.jump_pattern[1] = vec![1.0, 1.0];
        assert!(cfg.validate().is_err(), "a boundary where everything changes");

        let cfg = SimConfig { outlier_rate: 1.0, ..SimConfig::default() };
        assert!(cfg.validate().is_err(), "rate 1 would perturb every row");

        let cfg = SimConfig { replications: 0, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn gaussian_null_is_keyed_and_standard() {
        let a = gaussian_null(2000, 2, 9, 0).expect("valid");
        let b = gaussian_null(2000, 2, 9, 0).expect("valid");
        assert_eq!(a.values(), b.values());
        let c = gaussian_null(2000, 2, 9, 1).expect("valid");
        assert_ne!(a.values(), c.values());
        let mean: f64 = a.values().iter().sum::<f64>() / a.values().len() as f64;
        let var: f64 = a.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (a.values().len() - 1) as f64;
        assert!(mean.abs() <= 0.05, "mean {mean}");
        assert!((var - 1.0).abs() <= 0.05, "variance {var}");
        assert!(gaussian_null(0, 1, 0, 0).is_err());
        assert!(gaussian_null(1, 0, 0, 0).is_err());
    }

    #[test]
    fn outlier_injection_touches_exactly_the_ceiling_count() {
        let cfg = SimConfig { seed: 3, ..SimConfig::default() };
        let x = generate_signal(&cfg, 0).expect("valid");
        let y = inject_outliers(&x, 0.05, 10.0, cfg.sigma(), 42).expect("valid rate");
        let changed = (0..x.n())
            .filter(|&t| (0..x.dim()).any(|j| x.value(t, j) != y.value(t, j)))
            .count();
        assert_eq!(changed, 25, "ceil(0.05 * 500)");

        let same = inject_outliers(&x, 0.0, 10.0, cfg.sigma(), 42).expect("valid rate");
        assert_eq!(x.values(), same.values(), "rate 0 leaves the data untouched");

        assert!(inject_outliers(&x, 1.0, 10.0, 1.0, 0).is_err());
        assert!(inject_outliers(&x, -0.1, 10.0, 1.0, 0).is_err());
    }

    #[test]
    fn outlier_excess_is_a_variance_factor() {
        // On a zero matrix with sigma 1 and +10 dB excess, perturbed
        // entries are N(0, 10); their sample variance over ~25k draws
        // should sit near 10.
        let zeros = ObservationMatrix::from_flat(50_000, 1, vec![0.0; 50_000]).expect("finite");
        let y = inject_outliers(&zeros, 0.5, 10.0, 1.0, 5).expect("valid rate");
        let perturbed: Vec<f64> = y.values().iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(perturbed.len(), 25_000);
        let var = perturbed.iter().map(|v| v * v).sum::<f64>() / perturbed.len() as f64;
        assert!((var - 10.0).abs() <= 0.5, "sample variance {var} should be near 10");
    }

    #[test]
    fn precision_recall_frozen_cases() {
        let est = Segmentation::new(300, vec![100, 200]).expect("valid");
        let m = precision_recall(&est, &[101, 250], 1);
        assert_eq!((m.precision, m.recall), (0.5, 0.5));

        let exact = precision_recall(&est, &[100, 200], 1);
        assert_eq!((exact.precision, exact.recall), (1.0, 1.0));

        let empty = Segmentation::new(300, vec![]).expect("valid");
        let m = precision_recall(&empty, &[100, 200], 1);
        assert_eq!((m.precision, m.recall), (1.0, 0.0), "no detections means no false positives");

        let m = precision_recall(&empty, &[], 1);
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
    }

    #[test]
    fn equal_counts_force_precision_equal_recall() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..50 {
            let k = rng.gen_range(1..6);
            let pick = |rng: &mut ChaCha8Rng| {
                let mut v: Vec<usize> = Vec::new();
                while v.len() < k {
                    let c = rng.gen_range(1..99);
                    if !v.contains(&c) {
                        v.push(c);
                    }
                }
                v.sort_unstable();
                v
            };
            let est = Segmentation::new(100, pick(&mut rng)).expect("valid");
            let truth = pick(&mut rng);
            let m = precision_recall(&est, &truth, rng.gen_range(0..3));
            assert_eq!(m.precision, m.recall, "equal counts share the matched numerator");
        }
    }

    #[test]
    fn near_noiseless_known_k_is_perfect() {
        let cfg = SimConfig { replications: 5, ..small_cfg() };
        let s = monte_carlo(&cfg, Method::DynMkw, Some(3)).expect("runs");
        assert_eq!(s.precision.mean, 1.0);
        assert_eq!(s.recall.mean, 1.0);
        assert_eq!(s.detected.mean, 3.0);
    }

    #[test]
    fn binseg_runs_unknown_k_end_to_end() {
        let cfg = SimConfig { replications: 2, ..small_cfg() };
        let s = monte_carlo(&cfg, Method::Binseg, None).expect("runs");
        assert_eq!(s.precision.mean, 1.0, "40 dB staircase is unmissable");
        assert_eq!(s.recall.mean, 1.0);
    }

    #[test]
    fn method_and_known_k_combinations_are_validated() {
        let cfg = SimConfig { replications: 1, ..small_cfg() };
        assert!(monte_carlo(&cfg, Method::Binseg, Some(3)).is_err());
        assert!(monte_carlo(&cfg, Method::Linear, None).is_err());
        assert!(monte_carlo(&cfg, Method::Kernel, None).is_err());
        assert!("nonsense".parse::<Method>().is_err());
        assert_eq!("dynmkw".parse::<Method>().expect("known"), Method::DynMkw);
    }

    #[test]
    fn monte_carlo_is_reproducible_across_worker_counts() {
        let cfg = small_cfg();
        let reference = monte_carlo(&cfg, Method::DynMkw, Some(3)).expect("runs");
        let again = monte_carlo(&cfg, Method::DynMkw, Some(3)).expect("runs");
        assert_eq!(reference, again);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("pool");
        let serial = pool.install(|| monte_carlo(&cfg, Method::DynMkw, Some(3)).expect("runs"));
        assert_eq!(reference, serial, "aggregation must not depend on scheduling");
    }

    #[test]
    fn failing_replicate_reports_its_position() {
        let cfg = SimConfig { replications: 3, ..small_cfg() };
        // A kernel table for n = 80 cannot fit in 16 bytes.
        let params = RunParams { memory_budget: 16, ..RunParams::default() };
        let err = monte_carlo_with(&cfg, Method::Kernel, Some(3), &params)
            .expect_err("budget too small");
        let msg = err.to_string();
        assert!(msg.contains("replicate 0"), "got: {msg}");
        assert!(msg.contains("seed 7"), "got: {msg}");
    }

    #[test]
    fn sweep_emits_tidy_csv() {
        let cfg = SimConfig { replications: 2, ..small_cfg() };
        let methods = [(Method::DynMkw, Some(3)), (Method::Linear, Some(3))];
        let rows = sweep(&cfg, &methods, &[40.0, 30.0], &RunParams::default()).expect("runs");
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].snr_db, 40.0);
        assert_eq!(rows[1].method, Method::Linear, "methods grouped within each SNR");

        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).expect("in-memory write");
        let text = String::from_utf8(buf).expect("utf8");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,snr_db,outlier_rate,metric,mean,stderr,replications");
        assert_eq!(lines.len(), 1 + 4 * 3, "three metric rows per summary");
        assert!(lines[1].starts_with("dynmkw,40,0,precision,"));

        let single = SimConfig { replications: 1, ..cfg };
        let one = monte_carlo(&single, Method::DynMkw, Some(3)).expect("runs");
        let mut buf = Vec::new();
        write_csv(&[one], &mut buf).expect("in-memory write");
        let text = String::from_utf8(buf).expect("utf8");
        assert!(
            text.lines().nth(1).expect("row").contains(",NA,"),
            "single replicate has no standard error"
        );
    }
}
