//! Reduced models obtained by eliminating the cavity in the large-detuning
//! limit. In the frame rotating at `ω_m − ξ₀` the mirror is a damped
//! parametric oscillator at resonance, whose second moments have closed
//! forms. These serve as oracles for the full linearized propagation and as
//! fast estimators of threshold quantities.

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegrationControl};
use crate::model::{drive_amplitude, temperature_ratio_from_nbar, DriveSpec, PhysicalConstants, SystemParams};

/// Parameters of the effective parametric oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedParams {
    pub xi0: f64,
    pub gamma_m: f64,
    pub nbar_m: f64,
    /// Optical spring strength η = 2g²Δ_c/(Δ_c² + γ_c²/4).
    pub eta: f64,
}

impl ReducedParams {
    pub fn from_system(params: &SystemParams, drive: &DriveSpec) -> Self {
        ReducedParams {
            xi0: drive.xi0,
            gamma_m: params.gamma_m,
            nbar_m: params.nbar_m,
            eta: params.eta(),
        }
    }

    /// Decay rate of the squeezed quadrature, `γ_m + ξ₀`.
    pub fn squeezing_rate(&self) -> f64 {
        self.gamma_m + self.xi0
    }
}

/// Cavity amplitude following the drive adiabatically.
#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticAmplitude {
    pub value: Complex64,
    /// Set when `Δ_c < 5·ω_m`, where the elimination is not justified.
    pub regime_warning: Option<String>,
}

/// `⟨a(t)⟩ ≈ −Ω(t)/(Δ_c − iγ_c/2)`.
pub fn adiabatic_cavity_amplitude(t: f64, params: &SystemParams, drive: &DriveSpec) -> AdiabaticAmplitude {
    let value = -Complex64::new(drive_amplitude(t, drive), 0.0) / Complex64::new(params.delta_c, -0.5 * params.gamma_c);
    let flags = params.regime(drive);
    let regime_warning = (!flags.large_detuning).then(|| {
        format!(
            "Δ_c/ω_m = {:.3} is below the large-detuning threshold; the adiabatic amplitude is unreliable",
            flags.detuning_ratio
        )
    });
    AdiabaticAmplitude { value, regime_warning }
}

/// Undamped squeezed variance `½·e^{−ξ₀t}`.
pub fn rwa_variance_undamped(t: f64, xi0: f64) -> f64 {
    0.5 * (-xi0 * t).exp()
}

/// Squeezed-quadrature variance with the mirror bath only:
/// `½e^{−(γ_m+ξ₀)t} + γ_m(n̄_m+½)/(γ_m+ξ₀)·(1 − e^{−(γ_m+ξ₀)t})`.
pub fn thermal_estimate_variance(t: f64, rp: &ReducedParams) -> f64 {
    let rate = rp.squeezing_rate();
    let decay = (-rate * t).exp();
    if rate == 0.0 {
        // γ_m = ξ₀ = 0: nothing moves.
        return 0.5;
    }
    0.5 * decay + rp.gamma_m * (rp.nbar_m + 0.5) / rate * (-(-rate * t).exp_m1())
}

/// Anti-squeezed counterpart, growing at `ξ₀ − γ_m`:
/// `½e^{(ξ₀−γ_m)t} + γ_m(n̄_m+½)·(e^{(ξ₀−γ_m)t} − 1)/(ξ₀ − γ_m)`.
pub fn antisqueezed_estimate_variance(t: f64, rp: &ReducedParams) -> f64 {
    let growth = rp.xi0 - rp.gamma_m;
    let diffusion = rp.gamma_m * (rp.nbar_m + 0.5);
    let factor = if growth == 0.0 {
        t
    } else {
        (growth * t).exp_m1() / growth
    };
    0.5 * (growth * t).exp() + diffusion * factor
}

/// Long-time limit of [`thermal_estimate_variance`].
pub fn thermal_floor(rp: &ReducedParams) -> f64 {
    let rate = rp.squeezing_rate();
    if rate == 0.0 {
        return 0.5;
    }
    rp.gamma_m * (rp.nbar_m + 0.5) / rate
}

/// Occupation below which the mirror squeezes, `n̄_c = ξ₀/(2γ_m)`.
pub fn critical_nbar(rp: &ReducedParams) -> Result<f64> {
    if !(rp.gamma_m > 0.0) {
        return Err(Error::Domain(format!(
            "critical occupation needs a positive mirror damping, got γ_m = {}",
            rp.gamma_m
        )));
    }
    Ok(rp.xi0 / (2.0 * rp.gamma_m))
}

/// Bath temperature at which the mirror occupation equals `nbar_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalTemperature {
    pub kelvin: f64,
    /// `k_B·T_c/(ħ·ω_m)`.
    pub dimensionless: f64,
}

/// `T_c = ħω_m / (k_B·ln(1 + 1/n̄_c))`.
pub fn critical_temperature(nbar_c: f64, omega_m: f64) -> Result<CriticalTemperature> {
    if !(nbar_c > 0.0) {
        return Err(Error::Domain(format!("critical occupation must be positive, got {nbar_c}")));
    }
    let dimensionless = temperature_ratio_from_nbar(nbar_c)?;
    let c = PhysicalConstants::CODATA_2018;
    Ok(CriticalTemperature {
        kelvin: dimensionless * c.hbar * omega_m / c.k_b,
        dimensionless,
    })
}

/// Order-of-magnitude contribution of cavity-field noise to the mirror
/// variance at long times: `ξ₀(γ_m + ξ₀ + γ_c)/[4Δ_c(γ_m + ξ₀)]`.
pub fn cavity_noise_bound(params: &SystemParams, rp: &ReducedParams) -> f64 {
    let rate = rp.squeezing_rate();
    if rate == 0.0 {
        return 0.0;
    }
    rp.xi0 * (rate + params.gamma_c) / (4.0 * params.delta_c * rate)
}

/// Noise sources kept by [`rwa_covariance_propagate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReducedNoise {
    /// Only the mirror's thermal bath.
    MirrorBath,
    /// Mirror bath plus the cavity-noise estimate added to the squeezed
    /// variance as `bound·(1 − e^{−(γ_m+ξ₀)t})`.
    WithCavityFloor { bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwaRecord {
    pub t: f64,
    /// Covariance of `(X_B, Y_B)`, the quadratures of the rotating-frame mode.
    pub covariance: Matrix2<f64>,
    /// Variance of `(X_B + Y_B)/√2`, including the cavity floor if requested.
    pub var_squeezed: f64,
    /// Variance of `(Y_B − X_B)/√2`.
    pub var_antisqueezed: f64,
}

/// Drift of the rotating-frame quadratures: `X' = −γ_m/2 X − ξ₀/2 Y`, `Y' = −ξ₀/2 X − γ_m/2 Y`.
pub fn rwa_drift(rp: &ReducedParams) -> Matrix2<f64> {
    let d = -0.5 * rp.gamma_m;
    let k = -0.5 * rp.xi0;
    Matrix2::new(d, k, k, d)
}

fn rotated_variances(cov: &Matrix2<f64>) -> (f64, f64) {
    let plus = 0.5 * (cov[(0, 0)] + cov[(1, 1)]) + cov[(0, 1)];
    let minus = 0.5 * (cov[(0, 0)] + cov[(1, 1)]) - cov[(0, 1)];
    (plus, minus)
}

/// Integrates the closed moment system of the resonant parametric oscillator
/// from the ground state with `n_steps` RK4 steps, recording every step.
pub fn rwa_covariance_propagate(rp: &ReducedParams, t_final: f64, n_steps: usize, noise: ReducedNoise) -> Result<Vec<RwaRecord>> {
    if !(t_final > 0.0) {
        return Err(Error::Domain(format!("t_final must be positive, got {t_final}")));
    }
    let n_steps = n_steps.max(1);
    let drift = rwa_drift(rp);
    let diffusion = Matrix2::identity() * (0.5 * rp.gamma_m * (2.0 * rp.nbar_m + 1.0));
    let rate = rp.squeezing_rate();
    let record = |t: f64, cov: Matrix2<f64>| {
        let (mut squeezed, anti) = rotated_variances(&cov);
        if let ReducedNoise::WithCavityFloor { bound } = noise {
            squeezed += bound * (-(-rate * t).exp_m1());
        }
        RwaRecord {
            t,
            covariance: cov,
            var_squeezed: squeezed,
            var_antisqueezed: anti,
        }
    };
    let initial = Matrix2::identity() * 0.5;
    let mut records = Vec::with_capacity(n_steps + 1);
    records.push(record(0.0, initial));
    let control = IntegrationControl {
        max_steps: n_steps,
        ..IntegrationControl::fixed(t_final / n_steps as f64)
    };
    integrate(
        initial,
        0.0,
        t_final,
        &control,
        |_, v: &Matrix2<f64>| {
            let dv = drift * v;
            dv + dv.transpose() + diffusion
        },
        |_, t, v| {
            *v = 0.5 * (*v + v.transpose());
            records.push(record(t, *v));
            Ok(())
        },
    )?;
    Ok(records)
}
