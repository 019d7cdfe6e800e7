//! Explicit Runge–Kutta stepping shared by every propagation path.
//!
//! The default is the classical fixed-step RK4. An adaptive mode uses the
//! Dormand–Prince 5(4) pair with a mixed absolute/relative error norm.

use nalgebra::{Complex, SMatrix};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::model::MeanFieldState;

/// Smallest step the adaptive controller will attempt, in seconds.
pub const DT_MIN: f64 = 1.0e-15;

/// A point in an ODE state space: closed under `y + h·k`.
pub trait OdeState: Clone {
    /// Returns `self + h·k`.
    fn axpy(&self, h: f64, k: &Self) -> Self;

    fn is_finite(&self) -> bool;

    /// Largest component ratio `|err_i| / (abs_tol + rel_tol·max(|y0_i|, |y1_i|))`.
    fn error_ratio(err: &Self, y0: &Self, y1: &Self, abs_tol: f64, rel_tol: f64) -> f64;
}

fn ratio(err: f64, y0: f64, y1: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    err.abs() / (abs_tol + rel_tol * y0.abs().max(y1.abs()))
}

impl OdeState for f64 {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        self + h * k
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn error_ratio(err: &Self, y0: &Self, y1: &Self, abs_tol: f64, rel_tol: f64) -> f64 {
        ratio(*err, *y0, *y1, abs_tol, rel_tol)
    }
}

impl<const R: usize, const C: usize> OdeState for SMatrix<f64, R, C> {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        self + k * h
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    fn error_ratio(err: &Self, y0: &Self, y1: &Self, abs_tol: f64, rel_tol: f64) -> f64 {
        err.iter()
            .zip(y0.iter().zip(y1.iter()))
            .map(|(e, (a, b))| ratio(*e, *a, *b, abs_tol, rel_tol))
            .fold(0.0, f64::max)
    }
}

impl<const R: usize, const C: usize> OdeState for SMatrix<Complex<f64>, R, C> {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        self + k * Complex64::new(h, 0.0)
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    fn error_ratio(err: &Self, y0: &Self, y1: &Self, abs_tol: f64, rel_tol: f64) -> f64 {
        err.iter()
            .zip(y0.iter().zip(y1.iter()))
            .map(|(e, (a, b))| {
                ratio(e.re, a.re, b.re, abs_tol, rel_tol)
                    .max(ratio(e.im, a.im, b.im, abs_tol, rel_tol))
            })
            .fold(0.0, f64::max)
    }
}

impl OdeState for MeanFieldState {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        MeanFieldState {
            a: self.a + k.a * h,
            b: self.b + k.b * h,
        }
    }

    fn is_finite(&self) -> bool {
        MeanFieldState::is_finite(self)
    }

    fn error_ratio(err: &Self, y0: &Self, y1: &Self, abs_tol: f64, rel_tol: f64) -> f64 {
        [
            ratio(err.a.re, y0.a.re, y1.a.re, abs_tol, rel_tol),
            ratio(err.a.im, y0.a.im, y1.a.im, abs_tol, rel_tol),
            ratio(err.b.re, y0.b.re, y1.b.re, abs_tol, rel_tol),
            ratio(err.b.im, y0.b.im, y1.b.im, abs_tol, rel_tol),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

macro_rules! tuple_state {
    ($($name:ident . $idx:tt),+) => {
        impl<$($name: OdeState),+> OdeState for ($($name,)+) {
            fn axpy(&self, h: f64, k: &Self) -> Self {
                ($(self.$idx.axpy(h, &k.$idx),)+)
            }

            fn is_finite(&self) -> bool {
                true $(&& self.$idx.is_finite())+
            }

            fn error_ratio(err: &Self, y0: &Self, y1: &Self, abs_tol: f64, rel_tol: f64) -> f64 {
                0.0f64 $(.max($name::error_ratio(&err.$idx, &y0.$idx, &y1.$idx, abs_tol, rel_tol)))+
            }
        }
    };
}

tuple_state!(A.0, B.1);
tuple_state!(A.0, B.1, C.2);
tuple_state!(A.0, B.1, C.2, D.3);
tuple_state!(A.0, B.1, C.2, D.3, E.4);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    Fixed,
    Adaptive,
}

/// Step-size and output controls for a propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationControl {
    pub mode: StepMode,
    /// Step for fixed mode; initial trial step for adaptive mode.
    pub dt: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Upper bound on adaptive steps; `None` leaves them unbounded.
    pub dt_max: Option<f64>,
    pub max_steps: usize,
    /// Emit an output record every this many accepted steps.
    pub output_stride: usize,
}

impl Default for IntegrationControl {
    fn default() -> Self {
        IntegrationControl {
            mode: StepMode::Fixed,
            dt: 1.0e-9,
            abs_tol: 1.0e-10,
            rel_tol: 1.0e-10,
            dt_max: None,
            max_steps: 100_000_000,
            output_stride: 100,
        }
    }
}

impl IntegrationControl {
    pub fn fixed(dt: f64) -> Self {
        IntegrationControl {
            dt,
            ..Default::default()
        }
    }

    pub fn adaptive(abs_tol: f64, rel_tol: f64) -> Self {
        IntegrationControl {
            mode: StepMode::Adaptive,
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }

    pub fn with_stride(mut self, output_stride: usize) -> Self {
        self.output_stride = output_stride;
        self
    }

    /// Step resolving the faster of the cavity and mirror oscillations with 100 points per period.
    pub fn default_dt(omega_m: f64, delta_c: f64) -> f64 {
        let fastest = omega_m.abs().max(delta_c.abs());
        std::f64::consts::TAU / fastest / 100.0
    }

    /// The tolerance the propagated entries are held to, used to scale cross-check thresholds.
    pub fn tolerance(&self) -> f64 {
        self.abs_tol
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(invalid("tolerance", "abs_tol and rel_tol must be positive"));
        }
        if let Some(dt_max) = self.dt_max {
            if !(dt_max > 0.0) {
                return Err(invalid("dt_max", format!("must be positive, got {dt_max}")));
            }
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps", "must be positive"));
        }
        if self.output_stride == 0 {
            return Err(invalid("output_stride", "must be positive"));
        }
        Ok(())
    }
}

/// One classical fourth-order Runge–Kutta step of `dy/dt = rhs(t, y)`.
pub fn step<S, F>(state: &S, t: f64, dt: f64, rhs: F) -> Result<S>
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    let half = 0.5 * dt;
    let k1 = rhs(t, state);
    let k2 = rhs(t + half, &state.axpy(half, &k1));
    let k3 = rhs(t + half, &state.axpy(half, &k2));
    let k4 = rhs(t + dt, &state.axpy(dt, &k3));
    let next = state
        .axpy(dt / 6.0, &k1)
        .axpy(dt / 3.0, &k2)
        .axpy(dt / 3.0, &k3)
        .axpy(dt / 6.0, &k4);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::Divergence { last_good_t: t })
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth-order weights minus the embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Result of one accepted adaptive step.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome<S> {
    pub state: S,
    pub dt_used: f64,
    pub dt_next: f64,
    /// Start times of trial steps rejected before acceptance.
    pub rejected_at: Vec<f64>,
}

fn dormand_prince<S, F>(state: &S, t: f64, dt: f64, rhs: &F) -> (S, S)
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    let k1 = rhs(t, state);
    let k2 = rhs(t + C2 * dt, &state.axpy(A21 * dt, &k1));
    let k3 = rhs(t + C3 * dt, &state.axpy(A31 * dt, &k1).axpy(A32 * dt, &k2));
    let k4 = rhs(
        t + C4 * dt,
        &state
            .axpy(A41 * dt, &k1)
            .axpy(A42 * dt, &k2)
            .axpy(A43 * dt, &k3),
    );
    let k5 = rhs(
        t + C5 * dt,
        &state
            .axpy(A51 * dt, &k1)
            .axpy(A52 * dt, &k2)
            .axpy(A53 * dt, &k3)
            .axpy(A54 * dt, &k4),
    );
    let k6 = rhs(
        t + dt,
        &state
            .axpy(A61 * dt, &k1)
            .axpy(A62 * dt, &k2)
            .axpy(A63 * dt, &k3)
            .axpy(A64 * dt, &k4)
            .axpy(A65 * dt, &k5),
    );
    let next = state
        .axpy(B1 * dt, &k1)
        .axpy(B3 * dt, &k3)
        .axpy(B4 * dt, &k4)
        .axpy(B5 * dt, &k5)
        .axpy(B6 * dt, &k6);
    let k7 = rhs(t + dt, &next);
    // err = dt·Σ E_i k_i, built from a zero-scaled copy of k1.
    let err = k1
        .axpy(-1.0, &k1)
        .axpy(E1 * dt, &k1)
        .axpy(E3 * dt, &k3)
        .axpy(E4 * dt, &k4)
        .axpy(E5 * dt, &k5)
        .axpy(E6 * dt, &k6)
        .axpy(E7 * dt, &k7);
    (next, err)
}

/// One accepted embedded-error step starting from the trial size `dt_try`.
///
/// Error is controlled per unit step: a step of size `dt` may spend the
/// fraction `dt / span` of the tolerances, so the local errors summed over
/// an integration of length `span` stay within `abs_tol + rel_tol·|y|`.
/// The step is retried with a smaller size until the scaled mixed error norm
/// is at most one. Steps below [`DT_MIN`] are reported as [`Error::StepUnderflow`].
pub fn adaptive_step<S, F>(
    state: &S,
    t: f64,
    dt_try: f64,
    span: f64,
    control: &IntegrationControl,
    rhs: F,
) -> Result<AdaptiveOutcome<S>>
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
{
    const SAFETY: f64 = 0.9;
    const MIN_FACTOR: f64 = 0.2;
    const MAX_FACTOR: f64 = 5.0;

    let cap = control.dt_max.unwrap_or(f64::INFINITY);
    let mut dt = dt_try.min(cap);
    let mut rejected_at = Vec::new();
    loop {
        if dt < DT_MIN {
            return Err(Error::StepUnderflow { t, dt });
        }
        let (next, err) = dormand_prince(state, t, dt, &rhs);
        let share = (dt / span).min(1.0);
        let norm = if next.is_finite() && err.is_finite() {
            S::error_ratio(&err, state, &next, control.abs_tol * share, control.rel_tol * share)
        } else {
            f64::INFINITY
        };
        if norm <= 1.0 {
            let factor = if norm == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * norm.powf(-0.25)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            return Ok(AdaptiveOutcome {
                state: next,
                dt_used: dt,
                dt_next: (dt * factor).min(cap),
                rejected_at,
            });
        }
        rejected_at.push(t);
        let factor = if norm.is_finite() {
            (SAFETY * norm.powf(-0.25)).clamp(MIN_FACTOR, 1.0)
        } else {
            MIN_FACTOR
        };
        dt *= factor;
    }
}

/// Counters reported by [`integrate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected_at: Vec<f64>,
}

/// Integrates from `t0` to `t_end` under `control`, calling `on_step` after
/// every accepted step with the step index (1-based), the new time and a
/// mutable reference to the state (for projections).
///
/// Fixed mode uses a uniform grid `t_k = t0 + k·(t_end − t0)/n` with the
/// smallest `n` whose spacing does not exceed `control.dt`.
pub fn integrate<S, F, G>(
    initial: S,
    t0: f64,
    t_end: f64,
    control: &IntegrationControl,
    rhs: F,
    mut on_step: G,
) -> Result<(S, StepStats)>
where
    S: OdeState,
    F: Fn(f64, &S) -> S,
    G: FnMut(usize, f64, &mut S) -> Result<()>,
{
    control.validate()?;
    if !(t_end > t0) {
        return Err(invalid("t_final", format!("must exceed the start time {t0}, got {t_end}")));
    }
    let mut stats = StepStats::default();
    let mut state = initial;
    match control.mode {
        StepMode::Fixed => {
            let span = t_end - t0;
            let n = ((span / control.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            if n > control.max_steps {
                return Err(Error::MaxStepsExceeded {
                    max_steps: control.max_steps,
                    t: t0,
                });
            }
            let h = span / n as f64;
            for k in 0..n {
                let t = t0 + k as f64 * h;
                let t_next = if k + 1 == n { t_end } else { t0 + (k + 1) as f64 * h };
                state = step(&state, t, t_next - t, &rhs)?;
                stats.accepted += 1;
                on_step(k + 1, t_next, &mut state)?;
            }
        }
        StepMode::Adaptive => {
            let mut t = t0;
            let mut dt = control.dt;
            while t < t_end {
                if stats.accepted >= control.max_steps {
                    return Err(Error::MaxStepsExceeded {
                        max_steps: control.max_steps,
                        t,
                    });
                }
                let remaining = t_end - t;
                let last = dt >= remaining;
                let trial = if last { remaining } else { dt };
                let outcome = adaptive_step(&state, t, trial, t_end - t0, control, &rhs)?;
                stats.rejected_at.extend(outcome.rejected_at);
                state = outcome.state;
                let reached_end = last && outcome.dt_used == trial;
                t = if reached_end { t_end } else { t + outcome.dt_used };
                stats.accepted += 1;
                on_step(stats.accepted, t, &mut state)?;
                dt = outcome.dt_next;
            }
        }
    }
    Ok((state, stats))
}

/// Symmetric part `(V + Vᵀ)/2` together with the Frobenius norm of the removed antisymmetric part.
pub fn project_symmetric<const N: usize>(v: &SMatrix<f64, N, N>) -> (SMatrix<f64, N, N>, f64) {
    let transposed = v.transpose();
    let asymmetry = 0.5 * (v - transposed).norm();
    ((v + transposed) * 0.5, asymmetry)
}
