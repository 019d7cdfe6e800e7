//! `simulate` and `sweep`.

use std::path::Path;

use nalgebra::{Complex, Matrix2, Matrix4};
use optosq::linearized::{rotating_pi4_variance, SYMMETRY_TOLERANCE, UNCERTAINTY_TOLERANCE};
use optosq::model::periodic_mean_field;
use optosq::reduced::{rwa_covariance_propagate, thermal_estimate_variance, ReducedNoise};
use optosq::{
    optimal_squeezing_angle, propagate, CovarianceState, InitialState, MeanFieldState, ReducedParams,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{MeanFieldInit, ModelKind, Scenario, ScenarioConfig};
use crate::output::{self, InvariantReport, Row, Summary, SweepRow};
use crate::{CliError, CliResult};

pub const THREADS_ENV: &str = "OPTOSQ_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub rows: Vec<Row>,
    pub summary: Summary,
}

pub fn initial_mean(s: &Scenario) -> CliResult<MeanFieldState> {
    Ok(match s.mean_field {
        MeanFieldInit::Rest => MeanFieldState::ZERO,
        MeanFieldInit::Periodic => periodic_mean_field(&s.params, &s.drive, s.control.dt)?,
        MeanFieldInit::Explicit(pair) => MeanFieldState::new(
            Complex::new(pair.a[0], pair.a[1]),
            Complex::new(pair.b[0], pair.b[1]),
        ),
    })
}

pub fn simulate(cfg: &ScenarioConfig) -> CliResult<SimulationOutput> {
    let scenario = cfg.resolve()?;
    match scenario.model {
        ModelKind::Full | ModelKind::Both => simulate_full(&scenario),
        ModelKind::Rwa => simulate_rwa(&scenario),
    }
}

fn simulate_full(s: &Scenario) -> CliResult<SimulationOutput> {
    let init = InitialState {
        mean: initial_mean(s)?,
        covariance: s.covariance,
    };
    let trajectory = propagate(&s.params, &s.drive, &init, s.t_final, &s.control)?;
    let rp = ReducedParams::from_system(&s.params, &s.drive);
    let with_rwa = s.model == ModelKind::Both;
    let rows: Vec<Row> = trajectory
        .records
        .iter()
        .map(|r| Row {
            t: r.t,
            mean: [r.mean.a.re, r.mean.a.im, r.mean.b.re, r.mean.b.im],
            v: r.covariance.upper_triangle(),
            var_pi4: r.var_pi4,
            var_opt: r.var_opt,
            theta_opt: r.theta_opt,
            var_rwa: with_rwa.then(|| thermal_estimate_variance(r.t, &rp)),
        })
        .collect();

    let d = &trajectory.diagnostics;
    let violation = trajectory.first_uncertainty_violation(UNCERTAINTY_TOLERANCE).map(|r| r.t);
    let invariants = match trajectory.check_invariants(SYMMETRY_TOLERANCE, UNCERTAINTY_TOLERANCE) {
        Ok(()) => InvariantReport {
            passed: true,
            max_relative_asymmetry: d.max_relative_asymmetry,
            min_cavity_uncertainty: Some(d.min_cavity_uncertainty),
            min_mirror_uncertainty: d.min_mirror_uncertainty,
            first_violation_t_s: None,
            message: None,
        },
        Err(e) => InvariantReport {
            passed: false,
            max_relative_asymmetry: d.max_relative_asymmetry,
            min_cavity_uncertainty: Some(d.min_cavity_uncertainty),
            min_mirror_uncertainty: d.min_mirror_uncertainty,
            first_violation_t_s: violation,
            message: Some(e.to_string()),
        },
    };
    let summary = summarize(s, &rows, violation, invariants, d.steps.accepted)?;
    Ok(SimulationOutput { rows, summary })
}

/// Lab-frame mirror covariance from the rotating-frame one, `Rᵀ V R` with `R`
/// the rotation by `(ω_m − ξ₀)t`.
fn rotating_to_lab(v_rot: &Matrix2<f64>, phase: f64) -> Matrix2<f64> {
    let (s, c) = phase.sin_cos();
    let r = Matrix2::new(c, -s, s, c);
    r.transpose() * v_rot * r
}

fn simulate_rwa(s: &Scenario) -> CliResult<SimulationOutput> {
    let rp = ReducedParams::from_system(&s.params, &s.drive);
    let n_steps = (s.t_final / s.control.dt).ceil().max(1.0) as usize;
    if n_steps > s.control.max_steps {
        return Err(optosq::Error::MaxStepsExceeded {
            max_steps: s.control.max_steps,
            t: 0.0,
        }
        .into());
    }
    let records = rwa_covariance_propagate(&rp, s.t_final, n_steps, ReducedNoise::MirrorBath)?;
    let stride = s.control.output_stride;
    let last = records.len() - 1;
    let mut rows = Vec::with_capacity(records.len() / stride + 2);
    let mut min_mirror = f64::INFINITY;
    for (k, rec) in records.iter().enumerate() {
        let lab = rotating_to_lab(&rec.covariance, s.drive.modulation_freq * rec.t);
        let lab = 0.5 * (lab + lab.transpose());
        min_mirror = min_mirror.min(lab.determinant());
        if k % stride != 0 && k != last {
            continue;
        }
        let mut full = Matrix4::identity() * 0.5;
        full.fixed_view_mut::<2, 2>(2, 2).copy_from(&lab);
        let cov = CovarianceState::new(full)?;
        let (theta_opt, var_opt) = optimal_squeezing_angle(&cov);
        let nan = f64::NAN;
        rows.push(Row {
            t: rec.t,
            mean: [nan; 4],
            v: [nan, nan, nan, nan, nan, nan, nan, lab[(0, 0)], lab[(0, 1)], lab[(1, 1)]],
            var_pi4: rotating_pi4_variance(&cov, rec.t, &s.drive),
            var_opt,
            theta_opt,
            var_rwa: None,
        });
    }
    let floor = 0.25 * (1.0 - UNCERTAINTY_TOLERANCE);
    let violation = rows
        .iter()
        .find(|r| r.v[7] * r.v[9] - r.v[8] * r.v[8] < floor)
        .map(|r| r.t);
    let invariants = InvariantReport {
        passed: violation.is_none() && min_mirror >= floor,
        max_relative_asymmetry: 0.0,
        min_cavity_uncertainty: None,
        min_mirror_uncertainty: min_mirror,
        first_violation_t_s: violation,
        message: violation.map(|t| format!("mirror uncertainty product below {floor} at t = {t:e} s")),
    };
    let summary = summarize(s, &rows, violation, invariants, n_steps)?;
    Ok(SimulationOutput { rows, summary })
}

fn summarize(
    s: &Scenario,
    rows: &[Row],
    cutoff: Option<f64>,
    invariants: InvariantReport,
    steps: usize,
) -> CliResult<Summary> {
    let e = output::extrema(rows, s.t_final, cutoff)?;
    Ok(Summary {
        model: s.model,
        variance_column: "var_opt",
        min_variance: e.min_variance,
        theta_at_min: e.theta_at_min,
        t_at_min_s: e.t_at_min,
        squeezing_db: e.squeezing_db,
        steady_band_variance: e.steady_band,
        rows_considered_before_s: cutoff,
        rows: rows.len(),
        xi0_rad_s: s.drive.xi0,
        nbar_m: s.params.nbar_m,
        steps,
        invariants,
        rwa_max_relative_gap: e.rwa_max_relative_gap,
    })
}

pub fn write_simulation(dir: &Path, out: &SimulationOutput) -> CliResult<()> {
    output::write_file(&dir.join("trajectory.csv"), &output::trajectory_csv(&out.rows))?;
    output::write_file(&dir.join("summary.json"), &output::summary_json(&out.summary))
}

/// Runs a scenario and writes `trajectory.csv` and `summary.json` into `dir`,
/// whatever the outcome of the invariant checks.
pub fn simulate_to_dir(cfg: &ScenarioConfig, dir: &Path) -> CliResult<Summary> {
    let out = simulate(cfg)?;
    write_simulation(dir, &out)?;
    Ok(out.summary)
}

/// As [`simulate_to_dir`], but a failed invariant check is returned as
/// [`CliError::Invariant`] after the files are written.
pub fn cmd_simulate(cfg: &ScenarioConfig, dir: &Path) -> CliResult<Summary> {
    let summary = simulate_to_dir(cfg, dir)?;
    if let Some(msg) = &summary.invariants.message {
        return Err(CliError::Invariant(msg.clone()));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Largest exit status among the points; zero when all succeeded.
    pub exit_code: i32,
}

pub fn parse_threads(value: Option<&str>) -> CliResult<Option<usize>> {
    match value {
        None => Ok(None),
        Some(text) => match text.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {text:?}"))),
        },
    }
}

pub fn threads_from_env() -> CliResult<Option<usize>> {
    parse_threads(std::env::var(THREADS_ENV).ok().as_deref())
}

/// Runs every sweep point (concurrently, at most `threads` at a time) into
/// `dir/point_NN/` and writes `dir/sweep_summary.csv`. Failed points are
/// reported in the summary rather than aborting the sweep.
pub fn cmd_sweep(cfg: &ScenarioConfig, dir: &Path, threads: Option<usize>) -> CliResult<SweepOutcome> {
    cfg.resolve()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("the configuration has no `sweep` block".into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start the worker pool: {e}")))?;

    let results: Vec<(SweepRow, i32)> = pool.install(|| {
        sweep
            .values
            .par_iter()
            .enumerate()
            .map(|(i, &value)| {
                let name = format!("point_{i:02}");
                let point = cfg.with_sweep_value(sweep.variable, value);
                let point_dir = dir.join(&name);
                let config_text = serde_json::to_string_pretty(&point).expect("configuration serializes");
                let outcome = output::write_file(&point_dir.join("config.json"), &config_text)
                    .and_then(|_| simulate_to_dir(&point, &point_dir));
                match outcome {
                    Ok(s) => {
                        let (status, code) = match &s.invariants.message {
                            None => ("ok".to_string(), 0),
                            Some(msg) => (format!("invariant violation: {msg}"), 4),
                        };
                        let row = SweepRow {
                            value,
                            min_variance: s.min_variance,
                            t_at_min_s: s.t_at_min_s,
                            steady_band_variance: s.steady_band_variance,
                            squeezed: s.min_variance < 0.5,
                            status,
                            output_dir: name,
                        };
                        (row, code)
                    }
                    Err(e) => {
                        let row = SweepRow {
                            value,
                            min_variance: f64::NAN,
                            t_at_min_s: f64::NAN,
                            steady_band_variance: f64::NAN,
                            squeezed: false,
                            status: format!("error: {e}"),
                            output_dir: name,
                        };
                        (row, e.exit_code())
                    }
                }
            })
            .collect()
    });

    let exit_code = results.iter().map(|(_, c)| *c).max().unwrap_or(0);
    let rows: Vec<SweepRow> = results.into_iter().map(|(r, _)| r).collect();
    output::write_file(&dir.join("sweep_summary.csv"), &output::sweep_csv(&rows))?;
    Ok(SweepOutcome { rows, exit_code })
}
