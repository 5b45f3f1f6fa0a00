// SPDX-License-Identifier: MIT OR Apache-2.0

//! Implementations of the three subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use dynmkw::baselines::{binseg_vost, median_bandwidth, BinsegConfig, KernelCost, LinearCost};
use dynmkw::dp::{solve, CostAccess, RankCost, SegmentCost};
use dynmkw::select::DEFAULT_MEMORY_BUDGET;
use dynmkw::sim::{
    gaussian_null, sweep, write_csv, Method, RunParams, SimConfig, SnrConvention,
};
use dynmkw::stat::chi_square_quantile;
use dynmkw::{
    compute_ranks, detect_auto, rank_covariance, statistic, AutoConfig, ObservationMatrix,
    Segmentation,
};

use crate::error::{CliError, Result};
use crate::io::{parse_delimiter, read_csv};
use crate::{CalibrateArgs, MethodArg, SegmentArgs, SimulateArgs};

/// Structured result of the segment command, serialized as JSON.
///
/// Optional fields are present only when the chosen method computes
/// them; `wall_time_s` appears only under `--timing` so that default
/// output is byte-identical across runs.
#[derive(Debug, Serialize)]
pub struct SegmentationReport {
    pub schema_version: u32,
    pub method: String,
    pub n: usize,
    pub l: usize,
    pub column_labels: Vec<String>,
    pub min_seg_len: usize,
    /// Change-point positions: segment k ends just before boundary k.
    pub boundaries: Vec<usize>,
    /// Number of change points (= boundaries.len()).
    pub k_hat: usize,
    /// Objective value per segment count, 1 ..= K, when a full dynamic
    /// program ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_curve: Option<Vec<f64>>,
    /// Zero-change gate p-value (unknown-K rank method only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_pvalue: Option<f64>,
    /// Per-segment coordinate means: exactly K rows of L values.
    pub segment_means: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_flag: Option<bool>,
    /// Kernel bandwidth actually used (kernel method only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// Per-segment coordinate means over the detected boundaries.
fn segment_means(x: &ObservationMatrix, seg: &Segmentation) -> Vec<Vec<f64>> {
    let l = x.dim();
    seg.segments()
        .iter()
        .map(|&(s, e)| {
            let mut mean = vec![0.0; l];
            for t in s..e {
                for (m, v) in mean.iter_mut().zip(x.row(t)) {
                    *m += v;
                }
            }
            let len = (e - s) as f64;
            for m in &mut mean {
                *m /= len;
            }
            mean
        })
        .collect()
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| CliError::runtime(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn validate_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(CliError::usage(format!(
            "--{name} must lie strictly in (0, 1); got {v}"
        )));
    }
    Ok(())
}

/// Partial results of one detection path, merged into the report.
struct PathOutcome {
    seg: Segmentation,
    i_curve: Option<Vec<f64>>,
    gate_pvalue: Option<f64>,
    ridge: Option<f64>,
    condition_flag: Option<bool>,
    bandwidth: Option<f64>,
}

fn run_fixed_k(
    cost: &(impl SegmentCost + ?Sized),
    k: usize,
    min_seg_len: usize,
) -> Result<(Segmentation, Vec<f64>)> {
    let access = CostAccess::within_budget(cost, DEFAULT_MEMORY_BUDGET);
    let sol = solve(&access, k, min_seg_len)?;
    let seg = sol.backtrack(k)?;
    let curve = sol.optimum_curve();
    Ok((seg, curve))
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<()> {
    validate_unit_interval("alpha", args.alpha)?;
    if args.permutations == 0 {
        return Err(CliError::usage("--permutations must be >= 1; got 0"));
    }
    if args.min_seg_len == 0 {
        return Err(CliError::usage("--min-seg-len must be >= 1; got 0"));
    }
    if !(args.ridge_budget >= 0.0 && args.ridge_budget.is_finite()) {
        return Err(CliError::usage(format!(
            "--ridge-budget must be a finite value >= 0; got {}",
            args.ridge_budget
        )));
    }
    if let Some(k) = args.k {
        if k == 0 {
            return Err(CliError::usage("--k counts segments and must be >= 1; got 0"));
        }
    }
    if let Some(kmax) = args.kmax {
        if kmax < 4 {
            return Err(CliError::usage(format!(
                "--kmax must be >= 4 so the selection curve has enough points; got {kmax}"
            )));
        }
    }
    match args.method {
        MethodArg::Binseg if args.k.is_some() || args.kmax.is_some() => {
            return Err(CliError::usage(
                "binary segmentation chooses its own number of changes; drop --k/--kmax",
            ));
        }
        MethodArg::Linear | MethodArg::Kernel if args.kmax.is_some() => {
            return Err(CliError::usage(format!(
                "the {} baseline runs only at a fixed --k, not --kmax",
                method_name(args.method)
            )));
        }
        MethodArg::Linear | MethodArg::Kernel if args.k.is_none() => {
            return Err(CliError::usage(format!(
                "the {} baseline requires --k",
                method_name(args.method)
            )));
        }
        _ => {}
    }
    if let Some(h) = args.bandwidth {
        if args.method != MethodArg::Kernel {
            return Err(CliError::usage("--bandwidth applies only to --method kernel"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::usage(format!(
                "--bandwidth must be a finite value > 0; got {h}"
            )));
        }
    }

    let delimiter = parse_delimiter(&args.delimiter)?;
    let data = read_csv(&args.input, args.has_header, delimiter)?;
    let x = &data.matrix;

    let started = Instant::now();
    let outcome = match (args.method, args.k) {
        (MethodArg::Dynmkw, Some(k)) => {
            let rt = compute_ranks(x);
            let cov = rank_covariance(&rt, args.ridge_budget)?;
            let cost = RankCost::new(&rt, &cov)?;
            let (seg, curve) = run_fixed_k(&cost, k, args.min_seg_len)?;
            PathOutcome {
                seg,
                i_curve: Some(curve),
                gate_pvalue: None,
                ridge: Some(cov.ridge()),
                condition_flag: Some(cov.condition_flag()),
                bandwidth: None,
            }
        }
        (MethodArg::Dynmkw, None) => {
            let cfg = AutoConfig {
                d_max: args.kmax.map(|m| m - 1),
                min_seg_len: args.min_seg_len,
                alpha: args.alpha,
                permutations: args.permutations,
                seed: args.seed,
                ridge_budget: args.ridge_budget,
                memory_budget: DEFAULT_MEMORY_BUDGET,
            };
            let det = detect_auto(x, &cfg)?;
            PathOutcome {
                seg: det.segmentation,
                i_curve: Some(det.i_curve),
                gate_pvalue: Some(det.selection.gate_pvalue),
                ridge: Some(det.ridge),
                condition_flag: Some(det.condition_flag),
                bandwidth: None,
            }
        }
        (MethodArg::Linear, Some(k)) => {
            let cost = LinearCost::new(x);
            let (seg, curve) = run_fixed_k(&cost, k, args.min_seg_len)?;
            PathOutcome {
                seg,
                i_curve: Some(curve),
                gate_pvalue: None,
                ridge: None,
                condition_flag: None,
                bandwidth: None,
            }
        }
        (MethodArg::Kernel, Some(k)) => {
            let h = args.bandwidth.unwrap_or_else(|| median_bandwidth(x, args.seed));
            let cost = KernelCost::new(x, h, DEFAULT_MEMORY_BUDGET)?;
            let (seg, curve) = run_fixed_k(&cost, k, args.min_seg_len)?;
            PathOutcome {
                seg,
                i_curve: Some(curve),
                gate_pvalue: None,
                ridge: None,
                condition_flag: None,
                bandwidth: Some(h),
            }
        }
        (MethodArg::Binseg, _) => {
            let cfg = BinsegConfig {
                alpha: args.alpha,
                permutations: args.permutations,
                min_seg_len: args.min_seg_len,
                seed: args.seed,
                ridge_budget: args.ridge_budget,
            };
            let seg = binseg_vost(x, &cfg)?;
            PathOutcome {
                seg,
                i_curve: None,
                gate_pvalue: None,
                ridge: None,
                condition_flag: None,
                bandwidth: None,
            }
        }
        (MethodArg::Linear | MethodArg::Kernel, None) => unreachable!("validated above"),
    };
    let wall_time_s = args.timing.then(|| started.elapsed().as_secs_f64());

    let report = SegmentationReport {
        schema_version: 1,
        method: method_name(args.method).to_string(),
        n: x.n(),
        l: x.dim(),
        column_labels: data.labels,
        min_seg_len: args.min_seg_len,
        boundaries: outcome.seg.boundaries().to_vec(),
        k_hat: outcome.seg.boundaries().len(),
        i_curve: outcome.i_curve,
        gate_pvalue: outcome.gate_pvalue,
        segment_means: segment_means(x, &outcome.seg),
        ridge: outcome.ridge,
        condition_flag: outcome.condition_flag,
        bandwidth: outcome.bandwidth,
        seed: args.seed,
        wall_time_s,
    };
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::runtime(format!("serializing report: {e}")))?;
    text.push('\n');
    write_text(args.output.as_deref(), &text)
}

pub fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Dynmkw => "dynmkw",
        MethodArg::Linear => "linear",
        MethodArg::Kernel => "kernel",
        MethodArg::Binseg => "binseg",
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    validate_unit_interval("alpha", args.alpha)?;
    if args.permutations == 0 {
        return Err(CliError::usage("--permutations must be >= 1; got 0"));
    }
    if args.min_seg_len == 0 {
        return Err(CliError::usage("--min-seg-len must be >= 1; got 0"));
    }
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|s| Method::from_str(s.trim()).map_err(CliError::usage))
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(CliError::usage("--methods must name at least one method"));
    }

    let mut cfg = SimConfig::default();
    cfg.replications = args.replications;
    cfg.seed = args.seed;
    cfg.outlier_rate = args.outlier_rate;
    cfg.outlier_excess_db = args.outlier_excess_db;
    if args.power_snr {
        cfg.snr_convention = SnrConvention::Power;
    }
    cfg.validate().map_err(CliError::usage)?;

    let truth = cfg.true_boundaries.len();
    let pairs: Vec<(Method, Option<usize>)> = methods
        .iter()
        .map(|&m| match (args.known_k, m) {
            (true, Method::Binseg) => Err(CliError::usage(
                "binary segmentation chooses its own number of changes; \
                 drop binseg from --methods or drop --known-k",
            )),
            (true, _) => Ok((m, Some(truth))),
            (false, Method::Linear | Method::Kernel) => Err(CliError::usage(format!(
                "the {} baseline runs only at a known number of changes; pass --known-k",
                m.name()
            ))),
            (false, _) => Ok((m, None)),
        })
        .collect::<Result<_>>()?;

    let grid: Vec<f64> = match &args.snr_db {
        Some(g) if g.is_empty() => {
            return Err(CliError::usage("--snr-db must list at least one value"));
        }
        Some(g) => g.clone(),
        None => (0..=15).map(|i| (2 * i) as f64).collect(),
    };

    let params = RunParams {
        alpha: args.alpha,
        permutations: args.permutations,
        min_seg_len: args.min_seg_len,
        tolerance: args.tolerance,
        ..RunParams::default()
    };
    let rows = sweep(&cfg, &pairs, &grid, &params)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    let text = String::from_utf8(buf).expect("CSV output is ASCII");
    write_text(args.output.as_deref(), &text)
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    if args.replications == 0 {
        return Err(CliError::usage("--replications must be >= 1; got 0"));
    }
    if args.k < 2 {
        return Err(CliError::usage(format!(
            "--k must be >= 2 segments so the statistic is defined; got {}",
            args.k
        )));
    }
    if args.l == 0 {
        return Err(CliError::usage("--l must be >= 1; got 0"));
    }
    if args.n < 2 * args.k {
        return Err(CliError::usage(format!(
            "--n must be >= 2 * k = {} so every segment holds data; got {}",
            2 * args.k,
            args.n
        )));
    }

    // Fixed equally spaced boundaries; distinct because n >= 2k.
    let boundaries: Vec<usize> = (1..args.k).map(|i| i * args.n / args.k).collect();
    let seg = Segmentation::new(args.n, boundaries)?;
    let df = (args.k - 1) * args.l;

    let mut text = String::from("row_kind,index,value,df\n");
    for rep in 0..args.replications {
        let x = gaussian_null(args.n, args.l, args.seed, rep)?;
        let rt = compute_ranks(&x);
        let cov = rank_covariance(&rt, dynmkw::stat::DEFAULT_RIDGE_BUDGET)?;
        let st = statistic(&rt, &cov, &seg)?;
        text.push_str(&format!("t_sample,{rep},{},{}\n", st.value, st.df));
    }
    for percent in 1..=99u32 {
        let q = chi_square_quantile(df, f64::from(percent) / 100.0)?;
        text.push_str(&format!("chi2_quantile,{percent},{q},{df}\n"));
    }
    write_text(args.output.as_deref(), &text)
}
