//! `derive`: closed-form quantities and regime checks for a scenario.

use std::f64::consts::TAU;
use std::fmt;

use optosq::integrator::integrate;
use optosq::model::{drive_period, mean_field_rhs, periodic_mean_field, xi0, MeanFieldState, LARGE_DETUNING_FACTOR};
use optosq::reduced::{cavity_noise_bound, critical_nbar, critical_temperature, thermal_floor};
use optosq::{IntegrationControl, ReducedParams};
use serde::Serialize;

use crate::config::{Scenario, ScenarioConfig};
use crate::CliResult;

/// Ratio `2g·|Re⟨b⟩|/Δ_c` above which the mirror displacement is flagged as
/// a significant shift of the cavity detuning.
pub const DISPLACEMENT_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplacementCheck {
    /// Largest `2g·|Re⟨b⟩|/Δ_c` over one drive period on the periodic orbit.
    pub max_detuning_shift_ratio: f64,
    pub small: bool,
    /// ξ₀ re-evaluated at the period-averaged detuning `Δ_c − 2g·Re⟨b⟩`.
    pub xi_displaced_rad_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeriveReport {
    pub xi0_rad_s: f64,
    pub xi0_hz: f64,
    pub eta_rad_s: f64,
    /// `None` when γ_m = 0 (no finite threshold).
    pub nbar_c: Option<f64>,
    pub critical_temperature_dimensionless: Option<f64>,
    pub critical_temperature_k: Option<f64>,
    pub temperature_note: String,
    pub cavity_noise_bound: f64,
    pub nbar_m: f64,
    pub thermal_floor: f64,
    pub squeezing_possible: bool,
    pub detuning_ratio: f64,
    pub large_detuning: bool,
    pub shift_ratio: f64,
    pub small_shift: bool,
    pub displacement: Option<DisplacementCheck>,
    pub warnings: Vec<String>,
}

fn displacement_check(s: &Scenario) -> optosq::Result<DisplacementCheck> {
    let p = &s.params;
    let dt = s.control.dt;
    let start = periodic_mean_field(p, &s.drive, dt)?;
    let period = drive_period(p, &s.drive);
    let mut max_ratio = (2.0 * p.g * start.b.re).abs() / p.delta_c;
    let mut sum_re_b = 0.0;
    let mut samples = 0usize;
    let nan = MeanFieldState::new(f64::NAN.into(), f64::NAN.into());
    integrate(
        start,
        0.0,
        period,
        &IntegrationControl::fixed(dt),
        |t, y| mean_field_rhs(y, t, p, &s.drive).unwrap_or(nan),
        |_, _, y| {
            max_ratio = max_ratio.max((2.0 * p.g * y.b.re).abs() / p.delta_c);
            sum_re_b += y.b.re;
            samples += 1;
            Ok(())
        },
    )?;
    let mut displaced = *p;
    displaced.delta_c = p.delta_c - 2.0 * p.g * sum_re_b / samples as f64;
    Ok(DisplacementCheck {
        max_detuning_shift_ratio: max_ratio,
        small: max_ratio < DISPLACEMENT_LIMIT,
        xi_displaced_rad_s: xi0(&displaced, s.drive.omega0),
    })
}

pub fn derive(cfg: &ScenarioConfig) -> CliResult<DeriveReport> {
    let s = cfg.resolve()?;
    let p = &s.params;
    let rp = ReducedParams::from_system(p, &s.drive);
    let flags = p.regime(&s.drive);
    let mut warnings = Vec::new();

    let nbar_c = critical_nbar(&rp).ok();
    let critical = nbar_c.and_then(|n| critical_temperature(n, p.omega_m).ok());
    let squeezing_possible = rp.xi0 > 0.0;
    if !squeezing_possible {
        warnings.push("no squeezing possible: ξ₀ = 0 (zero coupling or zero drive)".into());
    }
    if nbar_c.is_none() {
        warnings.push("γ_m = 0: the critical occupation is unbounded".into());
    }
    if !flags.large_detuning {
        warnings.push(format!(
            "Δ_c/ω_m = {:.3} is below {LARGE_DETUNING_FACTOR}: the adiabatic cavity elimination is not reliable",
            flags.detuning_ratio
        ));
    }
    if !flags.small_shift {
        warnings.push(format!(
            "ω_m/ξ₀ = {:.3} is below 10: the rotating-wave reduction is not reliable",
            flags.shift_ratio
        ));
    }
    let displacement = match displacement_check(&s) {
        Ok(check) => {
            if !check.small {
                warnings.push(format!(
                    "mirror displacement shifts the detuning by up to {:.1}% of Δ_c",
                    100.0 * check.max_detuning_shift_ratio
                ));
            }
            Some(check)
        }
        Err(e) => {
            warnings.push(format!("mean-field pre-run failed: {e}"));
            None
        }
    };

    Ok(DeriveReport {
        xi0_rad_s: rp.xi0,
        xi0_hz: rp.xi0 / TAU,
        eta_rad_s: rp.eta,
        nbar_c,
        critical_temperature_dimensionless: critical.map(|c| c.dimensionless),
        critical_temperature_k: critical.map(|c| c.kelvin),
        temperature_note: "k_B·T_c/(ħω_m) is the primary result; the kelvin value is derived from it through \
                           ħω_m/k_B. A figure of 4.8 mK for the reference parameter set is about twice this \
                           kelvin value and is inconsistent with the dimensionless ratio."
            .into(),
        cavity_noise_bound: cavity_noise_bound(p, &rp),
        nbar_m: p.nbar_m,
        thermal_floor: thermal_floor(&rp),
        squeezing_possible,
        detuning_ratio: flags.detuning_ratio,
        large_detuning: flags.large_detuning,
        shift_ratio: flags.shift_ratio,
        small_shift: flags.small_shift,
        displacement,
        warnings,
    })
}

fn opt(x: Option<f64>, fmt: impl Fn(f64) -> String) -> String {
    x.map_or_else(|| "unbounded".to_string(), fmt)
}

impl fmt::Display for DeriveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "xi0                      {:.6e} rad/s  (2π × {:.2} Hz)", self.xi0_rad_s, self.xi0_hz)?;
        writeln!(f, "eta                      {:.6e} rad/s", self.eta_rad_s)?;
        writeln!(f, "nbar_c = xi0/(2 gamma_m) {}", opt(self.nbar_c, |x| format!("{x:.4}")))?;
        writeln!(
            f,
            "k_B T_c / (hbar omega_m) {}",
            opt(self.critical_temperature_dimensionless, |x| format!("{x:.4}"))
        )?;
        writeln!(f, "T_c                      {}", opt(self.critical_temperature_k, |x| format!("{:.4} mK", 1e3 * x)))?;
        writeln!(f, "  note: {}", self.temperature_note)?;
        writeln!(f, "cavity noise bound       {:.4e}", self.cavity_noise_bound)?;
        writeln!(f, "thermal floor (nbar_m = {:.4}) {:.4e}", self.nbar_m, self.thermal_floor)?;
        writeln!(f, "squeezing possible       {}", self.squeezing_possible)?;
        writeln!(f, "Delta_c / omega_m        {:.3}  large detuning: {}", self.detuning_ratio, self.large_detuning)?;
        writeln!(f, "omega_m / xi0            {:.3}  small shift: {}", self.shift_ratio, self.small_shift)?;
        match &self.displacement {
            Some(d) => {
                writeln!(
                    f,
                    "2g|Re b| / Delta_c       {:.4e}  small: {}",
                    d.max_detuning_shift_ratio, d.small
                )?;
                writeln!(
                    f,
                    "xi at displaced detuning {:.6e} rad/s  ({:+.2}% vs xi0)",
                    d.xi_displaced_rad_s,
                    if self.xi0_rad_s > 0.0 { 100.0 * (d.xi_displaced_rad_s / self.xi0_rad_s - 1.0) } else { 0.0 }
                )?;
            }
            None => writeln!(f, "2g|Re b| / Delta_c       unavailable")?,
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(edit: impl FnOnce(&mut ScenarioConfig)) -> DeriveReport {
        let mut cfg = ScenarioConfig::reference();
        edit(&mut cfg);
        derive(&cfg).unwrap()
    }

    #[test]
    fn reference_values() {
        let r = with(|_| {});
        assert!((r.xi0_hz - 9985.1).abs() < 0.5, "{}", r.xi0_hz);
        let nbar_c = r.nbar_c.unwrap();
        assert!((nbar_c / 50.0 - 1.0).abs() < 0.02);
        // k_B·T_c/(ħω_m) = 1/ln(1 + 1/n̄_c), checked from n̄_c independently.
        let ratio = r.critical_temperature_dimensionless.unwrap();
        assert!((ratio - 1.0 / (1.0 + 1.0 / nbar_c).ln()).abs() < 1e-12);
        assert!((r.cavity_noise_bound - 2.725e-3).abs() < 1e-5);
        assert!(r.large_detuning && r.small_shift && r.squeezing_possible);
        let d = r.displacement.unwrap();
        assert!(d.small && d.max_detuning_shift_ratio > 0.0);
        assert!(d.xi_displaced_rad_s > r.xi0_rad_s);
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
    }

    #[test]
    fn zero_coupling_cannot_squeeze() {
        let r = with(|c| c.system.g_hz = Some(0.0));
        assert_eq!(r.xi0_rad_s, 0.0);
        assert_eq!(r.nbar_c, Some(0.0));
        assert!(!r.squeezing_possible);
        assert!(r.warnings.iter().any(|w| w.contains("no squeezing possible")));
    }

    #[test]
    fn small_detuning_is_flagged() {
        // Δ_c = 2ω_m, with Ω₀ scaled as Δ_c^{3/2} to keep ξ₀ near the reference value.
        let r = with(|c| {
            c.system.delta_c_hz = 2.0e6;
            c.drive.omega0_hz *= 0.2f64.powf(1.5);
        });
        assert!(!r.large_detuning);
        assert!(r.warnings.iter().any(|w| w.contains("adiabatic")));
    }

    #[test]
    fn undamped_mirror_has_no_threshold() {
        let r = with(|c| c.system.gamma_m_hz = 0.0);
        assert_eq!(r.nbar_c, None);
        assert!(r.to_string().contains("unbounded"));
    }
}
