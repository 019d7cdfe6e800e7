//! Trajectory CSV and summary JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use optosq::squeezing_db;
use serde::Serialize;

use crate::config::ModelKind;
use crate::{CliError, CliResult};

pub const TRAJECTORY_HEADER: &str =
    "t_s,re_a,im_a,re_b,im_b,V11,V12,V13,V14,V22,V23,V24,V33,V34,V44,var_pi4,var_opt,theta_opt";

/// Shortest decimal that parses back to the same `f64`: plain notation for
/// moderate magnitudes, exponent notation otherwise.
pub fn format_float(x: f64) -> String {
    let magnitude = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&magnitude) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// One CSV row. Quantities a model does not produce are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub t: f64,
    /// `re_a, im_a, re_b, im_b`.
    pub mean: [f64; 4],
    /// Upper triangle of the covariance, row by row.
    pub v: [f64; 10],
    pub var_pi4: f64,
    pub var_opt: f64,
    pub theta_opt: f64,
    pub var_rwa: Option<f64>,
}

pub fn trajectory_csv(rows: &[Row]) -> String {
    let with_rwa = rows.first().is_some_and(|r| r.var_rwa.is_some());
    let mut out = String::with_capacity(rows.len() * 300);
    out.push_str(TRAJECTORY_HEADER);
    if with_rwa {
        out.push_str(",var_rwa");
    }
    out.push('\n');
    for row in rows {
        let fields = std::iter::once(row.t)
            .chain(row.mean)
            .chain(row.v)
            .chain([row.var_pi4, row.var_opt, row.theta_opt])
            .chain(row.var_rwa.filter(|_| with_rwa));
        for (i, x) in fields.enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format_float(x));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub passed: bool,
    pub max_relative_asymmetry: f64,
    pub min_cavity_uncertainty: Option<f64>,
    pub min_mirror_uncertainty: f64,
    /// Time of the first row whose uncertainty product drops below the floor.
    pub first_violation_t_s: Option<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub model: ModelKind,
    /// Column the extrema below are taken from.
    pub variance_column: &'static str,
    pub min_variance: f64,
    pub theta_at_min: f64,
    pub t_at_min_s: f64,
    pub squeezing_db: f64,
    /// Mean of the variance column over rows in the last tenth of the run.
    pub steady_band_variance: f64,
    /// Extrema use only rows with `t_s` before this time (the first invariant violation).
    pub rows_considered_before_s: Option<f64>,
    pub rows: usize,
    pub xi0_rad_s: f64,
    pub nbar_m: f64,
    pub steps: usize,
    pub invariants: InvariantReport,
    /// Largest `|var_opt − var_rwa| / var_rwa` over the considered rows, when both models ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rwa_max_relative_gap: Option<f64>,
}

/// Extrema of `var_opt` over rows before `cutoff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrema {
    pub min_variance: f64,
    pub theta_at_min: f64,
    pub t_at_min: f64,
    pub squeezing_db: f64,
    pub steady_band: f64,
    pub rwa_max_relative_gap: Option<f64>,
}

pub fn extrema(rows: &[Row], t_final: f64, cutoff: Option<f64>) -> CliResult<Extrema> {
    let considered: Vec<&Row> = rows.iter().filter(|r| cutoff.is_none_or(|c| r.t < c)).collect();
    let best = considered
        .iter()
        .copied()
        .reduce(|best, r| if r.var_opt < best.var_opt { r } else { best })
        .ok_or_else(|| CliError::Invariant("no row satisfies the uncertainty relations".into()))?;
    let band: Vec<f64> = considered.iter().filter(|r| r.t >= 0.9 * t_final).map(|r| r.var_opt).collect();
    let steady_band = if band.is_empty() {
        f64::NAN
    } else {
        band.iter().sum::<f64>() / band.len() as f64
    };
    let rwa_max_relative_gap = considered
        .iter()
        .map(|r| r.var_rwa.map(|rwa| (r.var_opt - rwa).abs() / rwa))
        .try_fold(0.0f64, |acc, gap| gap.map(|g| acc.max(g)));
    Ok(Extrema {
        min_variance: best.var_opt,
        theta_at_min: best.theta_opt,
        t_at_min: best.t,
        squeezing_db: squeezing_db(best.var_opt)?,
        steady_band,
        rwa_max_relative_gap,
    })
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn summary_json(summary: &Summary) -> String {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    text
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub min_variance: f64,
    pub t_at_min_s: f64,
    pub steady_band_variance: f64,
    pub squeezed: bool,
    pub status: String,
    pub output_dir: String,
}

pub const SWEEP_HEADER: &str = "value,min_variance,t_at_min_s,steady_band_variance,squeezed,status,output_dir";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        // Status text may contain commas; quote it.
        let status = format!("\"{}\"", r.status.replace('"', "\"\""));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            format_float(r.value),
            format_float(r.min_variance),
            format_float(r.t_at_min_s),
            format_float(r.steady_band_variance),
            r.squeezed,
            status,
            r.output_dir
        );
    }
    out
}
