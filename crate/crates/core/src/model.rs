//! Physical parameters, the modulated drive and the classical mean-field equations.
//!
//! All rates and frequencies are angular (rad/s). Field amplitudes are
//! dimensionless: `|a|²` is the intracavity photon number and `b` the mean
//! phonon amplitude of the mirror.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Fixed CODATA 2018 values (exact in the SI since 2019).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
        hbar: 1.054_571_817e-34,
        k_b: 1.380_649e-23,
    };
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}

/// Cavity geometry from which the single-photon coupling can be derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    /// Cavity resonance, rad/s.
    pub omega_c: f64,
    /// Effective mirror mass, kg.
    pub m_eff: f64,
    /// Rest length of the cavity, m.
    pub cavity_length: f64,
}

/// Radiation-pressure coupling `g = ω_c·x_zpf/L` with `x_zpf = √(ħ/(2·m_eff·ω_m))`.
pub fn g_from_geometry(geometry: &Geometry, omega_m: f64) -> Result<f64> {
    let checks = [
        ("omega_c", geometry.omega_c),
        ("m_eff", geometry.m_eff),
        ("cavity_length", geometry.cavity_length),
        ("omega_m", omega_m),
    ];
    for (name, value) in checks {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Domain(format!(
                "geometry input `{name}` must be positive and finite, got {value}"
            )));
        }
    }
    let hbar = PhysicalConstants::CODATA_2018.hbar;
    let x_zpf = (hbar / (2.0 * geometry.m_eff * omega_m)).sqrt();
    Ok(geometry.omega_c * x_zpf / geometry.cavity_length)
}

/// Bose–Einstein occupation for a bath at `k_B·T / (ħ·ω)`; zero temperature gives zero.
pub fn nbar_from_temperature_ratio(ratio: f64) -> Result<f64> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(Error::Domain(format!(
            "temperature ratio must be finite and non-negative, got {ratio}"
        )));
    }
    if ratio == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (1.0 / ratio).exp_m1())
}

/// Inverse of [`nbar_from_temperature_ratio`]: `k_B·T/(ħ·ω) = 1/ln(1 + 1/n̄)`.
pub fn temperature_ratio_from_nbar(nbar: f64) -> Result<f64> {
    if !(nbar.is_finite() && nbar >= 0.0) {
        return Err(Error::Domain(format!(
            "thermal occupation must be finite and non-negative, got {nbar}"
        )));
    }
    if nbar == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (1.0 / nbar).ln_1p())
}

/// Rates defining the optomechanical system, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub omega_m: f64,
    /// Drive-cavity detuning `ω_c − ω_d`.
    pub delta_c: f64,
    pub g: f64,
    pub gamma_c: f64,
    pub gamma_m: f64,
    /// Thermal occupation of the mirror's bath.
    pub nbar_m: f64,
}

/// Default ratio `Δ_c/ω_m` above which the cavity is treated as adiabatically following.
pub const LARGE_DETUNING_FACTOR: f64 = 5.0;

impl SystemParams {
    pub fn new(
        omega_m: f64,
        delta_c: f64,
        g: f64,
        gamma_c: f64,
        gamma_m: f64,
        nbar_m: f64,
    ) -> Result<Self> {
        let params = SystemParams {
            omega_m,
            delta_c,
            g,
            gamma_c,
            gamma_m,
            nbar_m,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds the parameters from ordinary frequencies in Hz (each multiplied by 2π).
    pub fn from_hz(
        omega_m_hz: f64,
        delta_c_hz: f64,
        g_hz: f64,
        gamma_c_hz: f64,
        gamma_m_hz: f64,
        nbar_m: f64,
    ) -> Result<Self> {
        Self::new(
            TAU * omega_m_hz,
            TAU * delta_c_hz,
            TAU * g_hz,
            TAU * gamma_c_hz,
            TAU * gamma_m_hz,
            nbar_m,
        )
    }

    /// The reference squeezing scenario: ω_m = 2π·1 MHz, Δ_c = 2π·10 MHz,
    /// γ_m = 2π·100 Hz, γ_c = 2π·100 kHz, g = 2π·100 Hz, zero temperature.
    pub fn reference() -> Self {
        Self::from_hz(1.0e6, 1.0e7, 100.0, 1.0e5, 100.0, 0.0)
            .expect("reference parameters are valid")
    }

    /// Drive amplitude scale of the reference scenario, Ω₀ = 2π·31.6 GHz.
    pub const REFERENCE_OMEGA0: f64 = TAU * 31.6e9;

    pub fn validate(&self) -> Result<()> {
        let positive = [("omega_m", self.omega_m), ("delta_c", self.delta_c)];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(name, format!("must be positive and finite, got {value}")));
            }
        }
        let non_negative = [
            ("g", self.g),
            ("gamma_c", self.gamma_c),
            ("gamma_m", self.gamma_m),
            ("nbar_m", self.nbar_m),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(invalid(name, format!("must be non-negative and finite, got {value}")));
            }
        }
        Ok(())
    }

    pub fn with_nbar(mut self, nbar_m: f64) -> Result<Self> {
        self.nbar_m = nbar_m;
        self.validate()?;
        Ok(self)
    }

    /// `|Δ_c − iγ_c/2|²`, the squared cavity response denominator.
    pub fn cavity_denominator(&self) -> f64 {
        self.delta_c * self.delta_c + 0.25 * self.gamma_c * self.gamma_c
    }

    /// Optical spring strength η = 2g²Δ_c/(Δ_c² + γ_c²/4).
    pub fn eta(&self) -> f64 {
        2.0 * self.g * self.g * self.delta_c / self.cavity_denominator()
    }

    pub fn regime(&self, drive: &DriveSpec) -> RegimeFlags {
        RegimeFlags::evaluate(self, drive, LARGE_DETUNING_FACTOR)
    }
}

/// Validity indicators for the adiabatic/parametric reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeFlags {
    /// `Δ_c/ω_m`.
    pub detuning_ratio: f64,
    pub large_detuning: bool,
    /// `ω_m/ξ₀`; infinite when ξ₀ = 0.
    pub shift_ratio: f64,
    /// `ω_m ≫ ξ₀`, taken as a ratio of at least 10.
    pub small_shift: bool,
}

impl RegimeFlags {
    pub fn evaluate(params: &SystemParams, drive: &DriveSpec, factor: f64) -> Self {
        let detuning_ratio = params.delta_c / params.omega_m;
        let shift_ratio = if drive.xi0 > 0.0 {
            params.omega_m / drive.xi0
        } else {
            f64::INFINITY
        };
        RegimeFlags {
            detuning_ratio,
            large_detuning: detuning_ratio >= factor,
            shift_ratio,
            small_shift: shift_ratio >= 10.0,
        }
    }
}

/// Frequency shift and parametric gain ξ₀ = g²Ω₀²Δ_c/(Δ_c² + γ_c²/4)².
pub fn xi0(params: &SystemParams, omega0: f64) -> f64 {
    let den = params.cavity_denominator();
    params.g * params.g * omega0 * omega0 * params.delta_c / (den * den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveShape {
    /// `Ω(t) = Ω₀·sin[(ω_m − ξ₀)t]`.
    Modulated,
    /// `Ω(t) = Ω₀`.
    Constant,
}

/// Drive amplitude schedule with its cached frequency shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSpec {
    pub omega0: f64,
    pub xi0: f64,
    /// `ω_m − ξ₀`.
    pub modulation_freq: f64,
    pub shape: DriveShape,
}

impl DriveSpec {
    pub fn modulated(params: &SystemParams, omega0: f64) -> Result<Self> {
        Self::with_shape(params, omega0, DriveShape::Modulated)
    }

    pub fn constant(params: &SystemParams, omega0: f64) -> Result<Self> {
        Self::with_shape(params, omega0, DriveShape::Constant)
    }

    fn with_shape(params: &SystemParams, omega0: f64, shape: DriveShape) -> Result<Self> {
        if !(omega0.is_finite() && omega0 >= 0.0) {
            return Err(invalid("omega0", format!("must be non-negative and finite, got {omega0}")));
        }
        let xi0 = xi0(params, omega0);
        Ok(DriveSpec {
            omega0,
            xi0,
            modulation_freq: params.omega_m - xi0,
            shape,
        })
    }
}

/// Drive amplitude Ω(t) in rad/s.
pub fn drive_amplitude(t: f64, drive: &DriveSpec) -> f64 {
    match drive.shape {
        DriveShape::Modulated => drive.omega0 * (drive.modulation_freq * t).sin(),
        DriveShape::Constant => drive.omega0,
    }
}

/// Radiation-pressure shifted detuning Δ(t) = Δ_c − 2g·Re⟨b⟩.
pub fn effective_detuning(params: &SystemParams, b_mean: Complex64) -> f64 {
    params.delta_c - 2.0 * params.g * b_mean.re
}

/// Complex expectation values of the cavity and mirror modes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanFieldState {
    pub a: Complex64,
    pub b: Complex64,
}

impl MeanFieldState {
    pub const ZERO: MeanFieldState = MeanFieldState {
        a: Complex64::new(0.0, 0.0),
        b: Complex64::new(0.0, 0.0),
    };

    pub fn new(a: Complex64, b: Complex64) -> Self {
        MeanFieldState { a, b }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }
}

pub(crate) fn mean_field_derivative(
    state: &MeanFieldState,
    t: f64,
    params: &SystemParams,
    drive: &DriveSpec,
) -> MeanFieldState {
    let i = Complex64::i();
    let detuning = effective_detuning(params, state.b);
    let omega = drive_amplitude(t, drive);
    let da = -(i * detuning + 0.5 * params.gamma_c) * state.a - i * omega;
    let db = -(i * params.omega_m + 0.5 * params.gamma_m) * state.b
        + i * params.g * state.a.norm_sqr();
    MeanFieldState { a: da, b: db }
}

/// Time derivative of the mean fields:
/// `d⟨a⟩/dt = −[iΔ(t) + γ_c/2]⟨a⟩ − iΩ(t)`, `d⟨b⟩/dt = −(iω_m + γ_m/2)⟨b⟩ + ig|⟨a⟩|²`.
pub fn mean_field_rhs(
    state: &MeanFieldState,
    t: f64,
    params: &SystemParams,
    drive: &DriveSpec,
) -> Result<MeanFieldState> {
    if !state.is_finite() {
        return Err(Error::Divergence { last_good_t: t });
    }
    let d = mean_field_derivative(state, t, params, drive);
    if !d.is_finite() {
        return Err(Error::Divergence { last_good_t: t });
    }
    Ok(d)
}

/// Period of the drive schedule (`2π/(ω_m − ξ₀)`), or `2π/ω_m` for a constant drive.
pub fn drive_period(params: &SystemParams, drive: &DriveSpec) -> f64 {
    match drive.shape {
        DriveShape::Modulated => TAU / drive.modulation_freq.abs(),
        DriveShape::Constant => TAU / params.omega_m,
    }
}

/// Starting point of the periodic mean-field orbit locked to the drive.
///
/// Starting the mean fields from rest excites a free oscillation of the
/// mirror that the modulated optical spring amplifies at rate `ξ₀/2`, so
/// over long runs the mean displacement eventually shifts the detuning by a
/// sizable fraction of `Δ_c`. Starting on the periodic orbit avoids that
/// transient. The orbit is found by Newton iteration on the one-period map
/// integrated with RK4 at a step of at most `dt`.
pub fn periodic_mean_field(params: &SystemParams, drive: &DriveSpec, dt: f64) -> Result<MeanFieldState> {
    use nalgebra::{Matrix4, Vector4};

    params.validate()?;
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    if drive.shape == DriveShape::Modulated && !(drive.modulation_freq > 0.0) {
        return Err(Error::Domain(format!(
            "modulation frequency ω_m − ξ₀ = {} must be positive for a periodic orbit",
            drive.modulation_freq
        )));
    }
    let period = drive_period(params, drive);
    let n = (period / dt).ceil().max(1.0) as usize;
    let h = period / n as f64;

    let to_vec = |s: &MeanFieldState| Vector4::new(s.a.re, s.a.im, s.b.re, s.b.im);
    let from_vec = |v: &Vector4<f64>| MeanFieldState::new(Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3]));
    let flow = |y: &Vector4<f64>| -> Result<Vector4<f64>> {
        let mut state = from_vec(y);
        for k in 0..n {
            let t = k as f64 * h;
            state = crate::integrator::step(&state, t, h, |t, s| mean_field_derivative(s, t, params, drive))?;
        }
        Ok(to_vec(&state))
    };

    // Quasi-static guess: cavity at rest with the mean photon number, mirror at its static displacement.
    let mean_photons = match drive.shape {
        DriveShape::Modulated => 0.5,
        DriveShape::Constant => 1.0,
    } * drive.omega0
        * drive.omega0
        / params.cavity_denominator();
    let a_guess = -Complex64::new(drive_amplitude(0.0, drive), 0.0) / Complex64::new(params.delta_c, -0.5 * params.gamma_c);
    let b_guess = Complex64::new(params.g * mean_photons / params.omega_m, 0.0);
    let mut y = to_vec(&MeanFieldState::new(a_guess, b_guess));

    // Modulated drive: fixed point of the one-period map. Constant drive: root of the vector field.
    let residual = |y: &Vector4<f64>| -> Result<Vector4<f64>> {
        match drive.shape {
            DriveShape::Modulated => Ok(flow(y)? - y),
            DriveShape::Constant => Ok(to_vec(&mean_field_derivative(&from_vec(y), 0.0, params, drive))),
        }
    };
    let tolerance = match drive.shape {
        DriveShape::Modulated => 1e-11,
        DriveShape::Constant => 1e-11 * params.delta_c,
    };

    const MAX_ITER: usize = 40;
    for _ in 0..MAX_ITER {
        let f = residual(&y)?;
        if f.amax() <= tolerance * (1.0 + y.amax()) {
            return Ok(from_vec(&y));
        }
        let mut jac = Matrix4::zeros();
        for j in 0..4 {
            let step = 1e-6 * (1.0 + y[j].abs());
            let mut shifted = y;
            shifted[j] += step;
            jac.set_column(j, &((residual(&shifted)? - f) / step));
        }
        let delta = jac
            .lu()
            .solve(&(-f))
            .ok_or_else(|| Error::Domain("periodic orbit Jacobian is singular".into()))?;
        y += delta;
    }
    Err(Error::Domain(format!("periodic mean-field orbit did not converge in {MAX_ITER} Newton steps")))
}
