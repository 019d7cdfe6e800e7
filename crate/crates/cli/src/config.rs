//! JSON scenario files.
//!
//! Frequencies and rates are ordinary frequencies in Hz and are multiplied by
//! 2π on load; times are in seconds. Unknown keys are rejected.
//!
//! | key | unit |
//! |---|---|
//! | `system.omega_m_hz`, `delta_c_hz`, `g_hz`, `gamma_c_hz`, `gamma_m_hz` | Hz |
//! | `system.geometry.omega_c_hz` | Hz |
//! | `system.geometry.m_eff_kg` | kg |
//! | `system.geometry.cavity_length_m` | m |
//! | `system.nbar_m` | phonons |
//! | `system.temperature_dimensionless` | k_B·T/(ħ·ω_m) |
//! | `drive.omega0_hz` | Hz |
//! | `init.mean_field.explicit.a`, `.b` | `[re, im]`, dimensionless |
//! | `init.covariance` | 4×4, dimensionless |
//! | `run.t_final_s`, `integration.dt_s`, `integration.dt_max_s` | s |
//! | `integration.abs_tol`, `rel_tol` | dimensionless |

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::Matrix4;
use optosq::integrator::IntegrationControl;
use optosq::model::{g_from_geometry, nbar_from_temperature_ratio, DriveShape, Geometry};
use optosq::{CovarianceState, DriveSpec, StepMode, SystemParams};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub drive: DriveConfig,
    #[serde(default)]
    pub init: InitConfig,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub omega_m_hz: f64,
    pub delta_c_hz: f64,
    /// Exactly one of `g_hz` and `geometry` must be given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    pub gamma_c_hz: f64,
    pub gamma_m_hz: f64,
    /// At most one of `nbar_m` and `temperature_dimensionless`; neither means zero temperature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_dimensionless: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub omega_c_hz: f64,
    pub m_eff_kg: f64,
    pub cavity_length_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveShapeConfig {
    #[default]
    Modulated,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub omega0_hz: f64,
    #[serde(default)]
    pub shape: DriveShapeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexPair {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

/// Starting point of the mean fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFieldInit {
    /// On the drive-periodic orbit of the mean-field equations.
    #[default]
    Periodic,
    /// Both fields at zero.
    Rest,
    Explicit(ComplexPair),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default)]
    pub mean_field: MeanFieldInit,
    /// Row-major symmetric covariance; the ground state when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<[[f64; 4]; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Full,
    Rwa,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    #[default]
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    #[serde(default)]
    pub mode: ModeConfig,
    /// Fixed step, or the first trial step in adaptive mode. Defaults to
    /// 1/100 of the fastest oscillation period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max_s: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

fn default_tol() -> f64 {
    IntegrationControl::default().abs_tol
}

fn default_max_steps() -> usize {
    IntegrationControl::default().max_steps
}

fn default_stride() -> usize {
    IntegrationControl::default().output_stride
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            mode: ModeConfig::Fixed,
            dt_s: None,
            abs_tol: default_tol(),
            rel_tol: default_tol(),
            dt_max_s: None,
            max_steps: default_max_steps(),
            output_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t_final_s: f64,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub integration: IntegrationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    TemperatureDimensionless,
    Nbar,
    Omega0,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::TemperatureDimensionless => "temperature_dimensionless",
            SweepVariable::Nbar => "nbar",
            SweepVariable::Omega0 => "omega0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// A configuration converted to angular units and validated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub params: SystemParams,
    pub drive: DriveSpec,
    pub mean_field: MeanFieldInit,
    pub covariance: CovarianceState,
    pub t_final: f64,
    pub model: ModelKind,
    pub control: IntegrationControl,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(config_err)
    }

    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn reference() -> Self {
        Self::from_json(crate::REFERENCE_CONFIG).expect("bundled configuration parses")
    }

    /// Copy of this configuration with the sweep variable set to `value`
    /// and the sweep block removed.
    pub fn with_sweep_value(&self, variable: SweepVariable, value: f64) -> Self {
        let mut cfg = self.clone();
        cfg.sweep = None;
        match variable {
            SweepVariable::TemperatureDimensionless => {
                cfg.system.temperature_dimensionless = Some(value);
                cfg.system.nbar_m = None;
            }
            SweepVariable::Nbar => {
                cfg.system.nbar_m = Some(value);
                cfg.system.temperature_dimensionless = None;
            }
            SweepVariable::Omega0 => cfg.drive.omega0_hz = value,
        }
        cfg
    }

    pub fn resolve(&self) -> CliResult<Scenario> {
        let sys = &self.system;
        let omega_m = TAU * sys.omega_m_hz;
        let g = match (sys.g_hz, &sys.geometry) {
            (Some(g), None) => TAU * g,
            (None, Some(geo)) => g_from_geometry(
                &Geometry {
                    omega_c: TAU * geo.omega_c_hz,
                    m_eff: geo.m_eff_kg,
                    cavity_length: geo.cavity_length_m,
                },
                omega_m,
            )
            .map_err(config_err)?,
            (Some(_), Some(_)) => return Err(config_err("system: give either `g_hz` or `geometry`, not both")),
            (None, None) => return Err(config_err("system: one of `g_hz` or `geometry` is required")),
        };
        let nbar_m = match (sys.nbar_m, sys.temperature_dimensionless) {
            (Some(n), None) => n,
            (None, Some(ratio)) => nbar_from_temperature_ratio(ratio).map_err(config_err)?,
            (None, None) => 0.0,
            (Some(_), Some(_)) => {
                return Err(config_err(
                    "system: give either `nbar_m` or `temperature_dimensionless`, not both",
                ))
            }
        };
        let params = SystemParams::new(
            omega_m,
            TAU * sys.delta_c_hz,
            g,
            TAU * sys.gamma_c_hz,
            TAU * sys.gamma_m_hz,
            nbar_m,
        )
        .map_err(config_err)?;

        let omega0 = TAU * self.drive.omega0_hz;
        let drive = match self.drive.shape {
            DriveShapeConfig::Modulated => DriveSpec::modulated(&params, omega0),
            DriveShapeConfig::Constant => DriveSpec::constant(&params, omega0),
        }
        .map_err(config_err)?;
        if drive.shape == DriveShape::Modulated && !(drive.modulation_freq > 0.0) {
            return Err(config_err(format!(
                "drive: ξ₀ = {:e} rad/s is not below ω_m; the modulation frequency ω_m − ξ₀ must be positive",
                drive.xi0
            )));
        }

        if let MeanFieldInit::Explicit(pair) = self.init.mean_field {
            if !pair.a.iter().chain(&pair.b).all(|x| x.is_finite()) {
                return Err(config_err("init.mean_field: explicit values must be finite"));
            }
        }
        let covariance = match self.init.covariance {
            None => CovarianceState::ground_state(),
            Some(rows) => {
                let m = Matrix4::from_fn(|i, j| rows[i][j]);
                CovarianceState::new(m).map_err(|e| config_err(format!("init.covariance: {e}")))?
            }
        };

        if !(self.run.t_final_s.is_finite() && self.run.t_final_s > 0.0) {
            return Err(config_err(format!("run.t_final_s must be positive, got {}", self.run.t_final_s)));
        }
        let ic = &self.run.integration;
        let control = IntegrationControl {
            mode: match ic.mode {
                ModeConfig::Fixed => StepMode::Fixed,
                ModeConfig::Adaptive => StepMode::Adaptive,
            },
            dt: ic.dt_s.unwrap_or_else(|| IntegrationControl::default_dt(params.omega_m, params.delta_c)),
            abs_tol: ic.abs_tol,
            rel_tol: ic.rel_tol,
            dt_max: ic.dt_max_s,
            max_steps: ic.max_steps,
            output_stride: ic.output_stride,
        };
        control.validate().map_err(|e| config_err(format!("run.integration: {e}")))?;

        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(config_err("sweep.values must not be empty"));
            }
            if let Some(bad) = sweep.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(config_err(format!("sweep.values must be finite and non-negative, got {bad}")));
            }
        }

        Ok(Scenario {
            params,
            drive,
            mean_field: self.init.mean_field,
            covariance,
            t_final: self.run.t_final_s,
            model: self.run.model,
            control,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_json() -> serde_json::Value {
        serde_json::from_str(crate::REFERENCE_CONFIG).unwrap()
    }

    fn parse(v: serde_json::Value) -> CliResult<Scenario> {
        ScenarioConfig::from_json(&v.to_string())?.resolve()
    }

    #[test]
    fn bundled_config_is_the_reference_set() {
        let s = ScenarioConfig::reference().resolve().unwrap();
        let p = SystemParams::reference();
        for (a, b) in [
            (s.params.omega_m, p.omega_m),
            (s.params.delta_c, p.delta_c),
            (s.params.g, p.g),
            (s.params.gamma_c, p.gamma_c),
            (s.params.gamma_m, p.gamma_m),
        ] {
            assert!((a / b - 1.0).abs() < 1e-15);
        }
        assert_eq!(s.params.nbar_m, 0.0);
        assert!((s.drive.omega0 / SystemParams::REFERENCE_OMEGA0 - 1.0).abs() < 1e-15);
        assert_eq!(s.control.dt, 1e-9);
        assert_eq!(s.model, ModelKind::Both);
        let sweep = ScenarioConfig::reference().sweep.unwrap();
        assert_eq!(sweep.values, vec![0.0, 20.0, 50.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = reference_json();
        v["system"]["omega_c_hz"] = 1.0.into();
        assert!(matches!(parse(v), Err(CliError::Config(_))));
        let mut v = reference_json();
        v["extra"] = 1.0.into();
        assert!(matches!(parse(v), Err(CliError::Config(_))));
    }

    #[test]
    fn temperature_converts_through_bose_einstein() {
        let mut v = reference_json();
        v["system"]["temperature_dimensionless"] = 20.0.into();
        let s = parse(v).unwrap();
        assert!((s.params.nbar_m - 1.0 / (0.05f64).exp_m1()).abs() < 1e-12);

        let mut v = reference_json();
        v["system"]["nbar_m"] = 3.0.into();
        assert!(matches!(parse(v.clone()), Err(CliError::Config(_))));
        v["system"].as_object_mut().unwrap().remove("temperature_dimensionless");
        assert_eq!(parse(v).unwrap().params.nbar_m, 3.0);
    }

    #[test]
    fn coupling_from_geometry() {
        let mut v = reference_json();
        v["system"].as_object_mut().unwrap().remove("g_hz");
        v["system"]["geometry"] = serde_json::json!({"omega_c_hz": 3e14, "m_eff_kg": 1e-12, "cavity_length_m": 1e-3});
        let s = parse(v.clone()).unwrap();
        let expected = g_from_geometry(
            &Geometry {
                omega_c: TAU * 3e14,
                m_eff: 1e-12,
                cavity_length: 1e-3,
            },
            TAU * 1e6,
        )
        .unwrap();
        assert_eq!(s.params.g, expected);
        v["system"]["g_hz"] = 100.0.into();
        assert!(matches!(parse(v), Err(CliError::Config(_))));
    }

    #[test]
    fn default_step_is_one_nanosecond_at_reference() {
        let mut v = reference_json();
        v["run"]["integration"].as_object_mut().unwrap().remove("dt_s");
        let s = parse(v).unwrap();
        assert!((s.control.dt - 1e-9).abs() < 1e-24);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for (path, value) in [
            (("system", "gamma_m_hz"), serde_json::json!(-1.0)),
            (("system", "omega_m_hz"), serde_json::json!(0.0)),
            (("run", "t_final_s"), serde_json::json!(0.0)),
        ] {
            let mut v = reference_json();
            v[path.0][path.1] = value;
            let err = parse(v).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{err}");
        }
        let mut v = reference_json();
        v["sweep"]["values"] = serde_json::json!([]);
        assert_eq!(parse(v).unwrap_err().exit_code(), 2);
        let mut v = reference_json();
        v["init"]["covariance"] = serde_json::json!([[0.1, 0, 0, 0], [0, 0.1, 0, 0], [0, 0, 0.5, 0], [0, 0, 0, 0.5]]);
        assert_eq!(parse(v).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn mean_field_init_forms() {
        let mut v = reference_json();
        v["init"]["mean_field"] = "rest".into();
        assert_eq!(parse(v.clone()).unwrap().mean_field, MeanFieldInit::Rest);
        v["init"]["mean_field"] = serde_json::json!({"explicit": {"a": [1.0, -2.0], "b": [3.0, 0.0]}});
        let s = parse(v).unwrap();
        assert_eq!(
            s.mean_field,
            MeanFieldInit::Explicit(ComplexPair {
                a: [1.0, -2.0],
                b: [3.0, 0.0]
            })
        );
    }

    #[test]
    fn sweep_value_substitution() {
        let cfg = ScenarioConfig::reference();
        let point = cfg.with_sweep_value(SweepVariable::Nbar, 7.0);
        assert!(point.sweep.is_none());
        assert_eq!(point.system.nbar_m, Some(7.0));
        assert_eq!(point.system.temperature_dimensionless, None);
        let point = cfg.with_sweep_value(SweepVariable::Omega0, 1e9);
        assert_eq!(point.drive.omega0_hz, 1e9);
    }
}
