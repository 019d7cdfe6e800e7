//! Linearized fluctuation dynamics around the mean fields.
//!
//! The fluctuation vector is ordered `(δX_a, δY_a, δX_b, δY_b)`. The
//! production path propagates the symmetrized second moments
//! `V = Re⟨v vᵀ⟩` through the Lyapunov equation `dV/dt = M V + V Mᵀ + C_sym`,
//! jointly with the mean fields that set the drift matrix `M(t)`.
//!
//! Two independent routes are kept for cross-checking: the ordered complex
//! moments `R = ⟨v vᵀ⟩` driven by the complex noise matrix, and the
//! fundamental-matrix solution `R = G R(0) Gᵀ + G Z Gᵀ`.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrator::{integrate, project_symmetric, IntegrationControl, StepStats};
use crate::model::{effective_detuning, mean_field_derivative, DriveSpec, MeanFieldState, SystemParams};

/// Drift matrix `M(t)` of the fluctuation equations, entries in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftMatrix(pub Matrix4<f64>);

/// Fills the drift matrix for the given mean fields.
///
/// With `⟨X_a⟩ = √2·Re⟨a⟩` and `⟨Y_a⟩ = √2·Im⟨a⟩` the coupling entries are
/// `M₁₃ = −√2g⟨Y_a⟩`, `M₂₃ = √2g⟨X_a⟩`, `M₄₁ = √2g⟨X_a⟩`, `M₄₂ = √2g⟨Y_a⟩`.
pub fn build_drift_matrix(state: &MeanFieldState, params: &SystemParams) -> DriftMatrix {
    let detuning = effective_detuning(params, state.b);
    let x_a = SQRT_2 * state.a.re;
    let y_a = SQRT_2 * state.a.im;
    let k = SQRT_2 * params.g;
    let hc = -0.5 * params.gamma_c;
    let hm = -0.5 * params.gamma_m;
    #[rustfmt::skip]
    let m = Matrix4::new(
        hc,        detuning, -k * y_a,         0.0,
        -detuning, hc,        k * x_a,         0.0,
        0.0,       0.0,       hm,              params.omega_m,
        k * x_a,   k * y_a,  -params.omega_m,  hm,
    );
    DriftMatrix(m)
}

/// Delta-correlated bath noise in complex (ordered) and symmetrized real form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseMatrix {
    pub complex: Matrix4<Complex64>,
    pub sym: Matrix4<f64>,
}

pub fn noise_matrix(params: &SystemParams) -> NoiseMatrix {
    let gc = 0.5 * params.gamma_c;
    let gm = 0.5 * params.gamma_m;
    let thermal = gm * (2.0 * params.nbar_m + 1.0);
    let re = |x: f64| Complex64::new(x, 0.0);
    let im = |x: f64| Complex64::new(0.0, x);
    let zero = Complex64::new(0.0, 0.0);
    #[rustfmt::skip]
    let complex = Matrix4::new(
        re(gc),  im(gc),  zero,         zero,
        im(-gc), re(gc),  zero,         zero,
        zero,    zero,    re(thermal),  im(gm),
        zero,    zero,    im(-gm),      re(thermal),
    );
    let sym = (complex + complex.transpose()).map(|z| 0.5 * z.re);
    NoiseMatrix { complex, sym }
}

/// Two-mode symplectic form `J = diag([[0, 1], [−1, 0]], [[0, 1], [−1, 0]])`.
pub fn symplectic_form() -> Matrix4<f64> {
    #[rustfmt::skip]
    let j = Matrix4::new(
        0.0,  1.0, 0.0, 0.0,
        -1.0, 0.0, 0.0, 0.0,
        0.0,  0.0, 0.0, 1.0,
        0.0,  0.0, -1.0, 0.0,
    );
    j
}

/// Symmetrized covariance of the fluctuation quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceState {
    v: Matrix4<f64>,
}

impl CovarianceState {
    /// Vacuum of both modes, `V = I/2`.
    pub fn ground_state() -> Self {
        CovarianceState {
            v: Matrix4::identity() * 0.5,
        }
    }

    /// Validates symmetry, finiteness and the single-mode uncertainty relations.
    pub fn new(v: Matrix4<f64>) -> Result<Self> {
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Domain("covariance entries must be finite".into()));
        }
        let asym = (v - v.transpose()).amax();
        if asym > 1e-12 * v.amax().max(1.0) {
            return Err(Error::Domain(format!("covariance is not symmetric (max |V − Vᵀ| = {asym:e})")));
        }
        let state = CovarianceState {
            v: project_symmetric(&v).0,
        };
        let (cavity, mirror) = state.uncertainty_products();
        if cavity < 0.25 * (1.0 - 1e-9) || mirror < 0.25 * (1.0 - 1e-9) {
            return Err(Error::Domain(format!(
                "covariance violates the uncertainty relation (det blocks {cavity}, {mirror} < 1/4)"
            )));
        }
        Ok(state)
    }

    pub(crate) fn from_unchecked(v: Matrix4<f64>) -> Self {
        CovarianceState { v }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.v
    }

    pub fn cavity_block(&self) -> Matrix2<f64> {
        self.v.fixed_view::<2, 2>(0, 0).into_owned()
    }

    pub fn mirror_block(&self) -> Matrix2<f64> {
        self.v.fixed_view::<2, 2>(2, 2).into_owned()
    }

    /// `(V₁₁V₂₂ − V₁₂², V₃₃V₄₄ − V₃₄²)`, each at least 1/4 for a physical state.
    pub fn uncertainty_products(&self) -> (f64, f64) {
        let v = &self.v;
        (
            v[(0, 0)] * v[(1, 1)] - v[(0, 1)] * v[(0, 1)],
            v[(2, 2)] * v[(3, 3)] - v[(2, 3)] * v[(2, 3)],
        )
    }

    /// The ten independent entries in row-major upper-triangle order
    /// `V11, V12, V13, V14, V22, V23, V24, V33, V34, V44`.
    pub fn upper_triangle(&self) -> [f64; 10] {
        let v = &self.v;
        [
            v[(0, 0)],
            v[(0, 1)],
            v[(0, 2)],
            v[(0, 3)],
            v[(1, 1)],
            v[(1, 2)],
            v[(1, 3)],
            v[(2, 2)],
            v[(2, 3)],
            v[(3, 3)],
        ]
    }
}

/// `M·V + V·Mᵀ + C_sym`.
pub fn covariance_rhs(v: &Matrix4<f64>, m: &DriftMatrix, c: &NoiseMatrix) -> Matrix4<f64> {
    let mv = m.0 * v;
    mv + mv.transpose() + c.sym
}

/// `M·R + R·Mᵀ + C` for the ordered complex moments.
pub fn ordered_covariance_rhs(r: &Matrix4<Complex64>, m: &DriftMatrix, c: &NoiseMatrix) -> Matrix4<Complex64> {
    let mc = m.0.map(|x| Complex64::new(x, 0.0));
    mc * r + r * mc.transpose() + c.complex
}

/// Variance of the rotated mirror quadrature `cos θ·X_b + sin θ·Y_b`.
pub fn quadrature_variance(v: &CovarianceState, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let m = &v.v;
    c * c * m[(2, 2)] + s * s * m[(3, 3)] + 2.0 * s * c * m[(2, 3)]
}

/// Angle in `[0, π)` minimizing [`quadrature_variance`] and the minimum itself.
///
/// The minimum is the smaller eigenvalue of the mirror block. An isotropic
/// block reports `θ = 0`.
pub fn optimal_squeezing_angle(v: &CovarianceState) -> (f64, f64) {
    let m = &v.v;
    let (a, d, c) = (m[(2, 2)], m[(3, 3)], m[(2, 3)]);
    let mean = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let radius = half_diff.hypot(c);
    let var_min = mean - radius;
    if radius <= 1e-15 * mean.abs() {
        return (0.0, var_min);
    }
    let phase = c.atan2(half_diff);
    let mut theta = (0.5 * (phase + PI)).rem_euclid(PI);
    if PI - theta < 1e-15 {
        theta = 0.0;
    }
    (theta, var_min)
}

/// Squeezing in dB below the vacuum level: `−10·log₁₀(2·var)`.
pub fn squeezing_db(var: f64) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Domain(format!("variance must be positive and finite, got {var}")));
    }
    Ok(-10.0 * (2.0 * var).log10())
}

/// Lab-frame angle of the quadrature at `theta_rot` in the frame rotating at `ω_m − ξ₀`.
pub fn lab_angle(theta_rot: f64, t: f64, drive: &DriveSpec) -> f64 {
    theta_rot - drive.modulation_freq * t
}

/// Variance of the π/4 quadrature of the rotating frame, `δB = δb·e^{i(ω_m−ξ₀)t}`.
pub fn rotating_pi4_variance(v: &CovarianceState, t: f64, drive: &DriveSpec) -> f64 {
    quadrature_variance(v, lab_angle(FRAC_PI_4, t, drive))
}

/// Mean fields and covariance at the start of a propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState {
    pub mean: MeanFieldState,
    pub covariance: CovarianceState,
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState {
            mean: MeanFieldState::ZERO,
            covariance: CovarianceState::ground_state(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Initial,
    Stride,
    /// Local minimum of the θ-optimal variance between stride records.
    Envelope,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub t: f64,
    pub mean: MeanFieldState,
    pub covariance: CovarianceState,
    pub var_pi4: f64,
    pub var_opt: f64,
    pub theta_opt: f64,
    pub kind: RecordKind,
}

impl Record {
    fn new(t: f64, mean: MeanFieldState, v: Matrix4<f64>, drive: &DriveSpec, kind: RecordKind) -> Self {
        let covariance = CovarianceState::from_unchecked(v);
        let (theta_opt, var_opt) = optimal_squeezing_angle(&covariance);
        Record {
            t,
            mean,
            covariance,
            var_pi4: rotating_pi4_variance(&covariance, t, drive),
            var_opt,
            theta_opt,
            kind,
        }
    }
}

/// Quality measures gathered while propagating.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Largest `‖V − Vᵀ‖_F / ‖V‖_F` seen before projection.
    pub max_relative_asymmetry: f64,
    pub min_cavity_uncertainty: f64,
    pub min_mirror_uncertainty: f64,
    pub steps: StepStats,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics {
            max_relative_asymmetry: 0.0,
            min_cavity_uncertainty: f64::INFINITY,
            min_mirror_uncertainty: f64::INFINITY,
            steps: StepStats::default(),
        }
    }
}

/// Default relative slack on the uncertainty products.
pub const UNCERTAINTY_TOLERANCE: f64 = 1e-6;
/// Default bound on the pre-projection relative asymmetry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    /// Record with the smallest θ-optimal variance (earliest on ties).
    pub fn min_optimal(&self) -> &Record {
        self.records
            .iter()
            .reduce(|best, r| if r.var_opt < best.var_opt { r } else { best })
            .expect("trajectory always holds the initial record")
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectory always holds the initial record")
    }

    /// Stride-aligned records (initial, stride and final), which share times
    /// across runs with the same clock.
    pub fn grid_records(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.kind != RecordKind::Envelope)
    }

    /// First record whose cavity or mirror uncertainty product falls below
    /// `1/4·(1 − uncertainty_tol)`.
    ///
    /// Once the anti-squeezed variance outgrows double precision relative to
    /// the squeezed one, the products stop being resolvable and every later
    /// record is numerically meaningless.
    pub fn first_uncertainty_violation(&self, uncertainty_tol: f64) -> Option<&Record> {
        let floor = 0.25 * (1.0 - uncertainty_tol);
        self.records.iter().find(|r| {
            let (cavity, mirror) = r.covariance.uncertainty_products();
            !(cavity >= floor && mirror >= floor)
        })
    }

    /// Records strictly before the first uncertainty violation.
    pub fn reliable_records(&self, uncertainty_tol: f64) -> &[Record] {
        let end = self
            .first_uncertainty_violation(uncertainty_tol)
            .map_or(self.records.len(), |bad| self.records.iter().take_while(|r| r.t < bad.t).count());
        &self.records[..end]
    }

    /// Checks symmetry drift and the uncertainty relations against the given tolerances.
    pub fn check_invariants(&self, symmetry_tol: f64, uncertainty_tol: f64) -> Result<()> {
        let d = &self.diagnostics;
        if d.max_relative_asymmetry > symmetry_tol {
            return Err(Error::Quality {
                t: self.last().t,
                reason: format!(
                    "symmetry drift {:e} exceeds {:e}",
                    d.max_relative_asymmetry, symmetry_tol
                ),
            });
        }
        if let Some(r) = self.first_uncertainty_violation(uncertainty_tol) {
            let (cavity, mirror) = r.covariance.uncertainty_products();
            return Err(Error::Quality {
                t: r.t,
                reason: format!(
                    "uncertainty products ({cavity}, {mirror}) fall below {}",
                    0.25 * (1.0 - uncertainty_tol)
                ),
            });
        }
        Ok(())
    }
}

type JointState = (MeanFieldState, Matrix4<f64>);

fn joint_rhs(params: &SystemParams, drive: &DriveSpec, noise: &NoiseMatrix) -> impl Fn(f64, &JointState) -> JointState {
    let (params, drive, noise) = (*params, *drive, *noise);
    move |t, (mean, v)| {
        let m = build_drift_matrix(mean, &params);
        (mean_field_derivative(mean, t, &params, &drive), covariance_rhs(v, &m, &noise))
    }
}

/// Jointly integrates the mean fields and the symmetrized covariance up to `t_final`.
///
/// Records are emitted at `t = 0`, every `control.output_stride` accepted
/// steps, at local minima of the θ-optimal variance, and at `t_final`. The
/// covariance is projected onto its symmetric part after every step; the
/// removed asymmetry and the uncertainty products are tracked in
/// [`Diagnostics`] rather than repaired.
pub fn propagate(
    params: &SystemParams,
    drive: &DriveSpec,
    init: &InitialState,
    t_final: f64,
    control: &IntegrationControl,
) -> Result<Trajectory> {
    params.validate()?;
    let noise = noise_matrix(params);
    let rhs = joint_rhs(params, drive, &noise);
    let stride = control.output_stride.max(1);

    let mut diagnostics = Diagnostics::default();
    let mut records = vec![Record::new(0.0, init.mean, *init.covariance.matrix(), drive, RecordKind::Initial)];
    let track = |d: &mut Diagnostics, r: &Record| {
        let (cavity, mirror) = r.covariance.uncertainty_products();
        d.min_cavity_uncertainty = d.min_cavity_uncertainty.min(cavity);
        d.min_mirror_uncertainty = d.min_mirror_uncertainty.min(mirror);
    };
    track(&mut diagnostics, &records[0]);

    // Sliding window over the two most recent steps for envelope detection.
    let mut older_var = f64::NAN;
    let mut previous: Option<(usize, f64, JointState, f64)> = None;

    let (_, steps) = integrate(
        (init.mean, *init.covariance.matrix()),
        0.0,
        t_final,
        control,
        &rhs,
        |k, t, state| {
            let (projected, asym) = project_symmetric(&state.1);
            let scale = projected.norm();
            if scale > 0.0 {
                diagnostics.max_relative_asymmetry = diagnostics.max_relative_asymmetry.max(asym / scale);
            }
            state.1 = projected;
            let (_, var) = optimal_squeezing_angle(&CovarianceState::from_unchecked(projected));

            if let Some((pk, pt, pstate, pvar)) = previous {
                let margin = 1e-12 * pvar.abs();
                let is_min = pvar + margin < older_var && pvar + margin < var;
                if is_min && pk % stride != 0 {
                    let r = Record::new(pt, pstate.0, pstate.1, drive, RecordKind::Envelope);
                    track(&mut diagnostics, &r);
                    records.push(r);
                }
                older_var = pvar;
            } else {
                older_var = records[0].var_opt;
            }

            let at_end = t >= t_final;
            if at_end || k % stride == 0 {
                let kind = if at_end { RecordKind::Final } else { RecordKind::Stride };
                let r = Record::new(t, state.0, state.1, drive, kind);
                track(&mut diagnostics, &r);
                records.push(r);
            }
            previous = Some((k, t, *state, var));
            Ok(())
        },
    )?;
    diagnostics.steps = steps;
    Ok(Trajectory { records, diagnostics })
}

/// Outcome of propagating the ordered complex moments alongside `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderedCheck {
    /// Largest `|R − Rᵀ − iJ|` entry over the run.
    pub max_commutator_deviation: f64,
    /// Largest `|Re(R + Rᵀ)/2 − V|` entry over the run.
    pub max_symmetric_deviation: f64,
    /// Largest `|Im(R + Rᵀ)/2|` entry over the run.
    pub max_symmetric_imaginary: f64,
}

/// Propagates `R = ⟨v vᵀ⟩` with the complex noise matrix next to the real
/// symmetrized path and reports how well the commutator content `R − Rᵀ = iJ`
/// and the symmetric part are preserved.
pub fn propagate_ordered(
    params: &SystemParams,
    drive: &DriveSpec,
    init: &InitialState,
    t_final: f64,
    control: &IntegrationControl,
) -> Result<OrderedCheck> {
    params.validate()?;
    let noise = noise_matrix(params);
    let ij = symplectic_form().map(|x| Complex64::new(0.0, x));
    let v0 = *init.covariance.matrix();
    let r0 = v0.map(|x| Complex64::new(x, 0.0)) + ij * Complex64::new(0.5, 0.0);
    let base = joint_rhs(params, drive, &noise);
    let rhs = |t: f64, s: &(MeanFieldState, Matrix4<f64>, Matrix4<Complex64>)| {
        let (dmean, dv) = base(t, &(s.0, s.1));
        let m = build_drift_matrix(&s.0, params);
        (dmean, dv, ordered_covariance_rhs(&s.2, &m, &noise))
    };
    let mut check = OrderedCheck {
        max_commutator_deviation: 0.0,
        max_symmetric_deviation: 0.0,
        max_symmetric_imaginary: 0.0,
    };
    integrate((init.mean, v0, r0), 0.0, t_final, control, rhs, |_, _, s| {
        s.1 = project_symmetric(&s.1).0;
        let r = &s.2;
        let commutator = (r - r.transpose() - ij).map(|z| z.norm()).max();
        let sym = (r + r.transpose()) * Complex64::new(0.5, 0.0);
        let re_dev = (sym.map(|z| z.re) - s.1).amax();
        let im_dev = sym.map(|z| z.im).amax();
        check.max_commutator_deviation = check.max_commutator_deviation.max(commutator);
        check.max_symmetric_deviation = check.max_symmetric_deviation.max(re_dev);
        check.max_symmetric_imaginary = check.max_symmetric_imaginary.max(im_dev);
        Ok(())
    })?;
    Ok(check)
}

/// Condition number of the fundamental matrix above which the check refuses to run.
pub const CONDITION_LIMIT: f64 = 1.0e6;

/// Comparison of the fundamental-matrix route against the Lyapunov route.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalCheck {
    /// Maximum entrywise `|R_G − V|` over the requested times.
    pub max_deviation: f64,
    pub samples: Vec<FundamentalSample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalSample {
    pub t: f64,
    /// Entrywise maximum of `|R_G − V|`.
    pub deviation: f64,
    pub condition: f64,
    /// Covariance assembled from the fundamental matrix.
    pub fundamental: Matrix4<f64>,
    /// Lyapunov-propagated covariance.
    pub lyapunov: Matrix4<f64>,
}

fn condition_number(g: &Matrix4<f64>) -> f64 {
    let sv = g.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

type FundamentalState = (MeanFieldState, Matrix4<f64>, Matrix4<f64>, Matrix4<f64>, Matrix4<f64>);

/// Integrates `dG/dt = M G` and `d(G⁻¹)/dt = −G⁻¹ M` with
/// `Z(t) = ∫ G⁻¹ C_sym G⁻ᵀ dτ`, forms `R = G V(0) Gᵀ + G Z Gᵀ` at every
/// time in `t_grid` (ascending, positive) and compares it with the
/// Lyapunov-propagated `V` integrated on the same clock.
pub fn fundamental_matrix_check(
    params: &SystemParams,
    drive: &DriveSpec,
    init: &InitialState,
    t_grid: &[f64],
    control: &IntegrationControl,
) -> Result<FundamentalCheck> {
    params.validate()?;
    let noise = noise_matrix(params);
    let base = joint_rhs(params, drive, &noise);
    let rhs = |t: f64, s: &FundamentalState| {
        let (dmean, dv) = base(t, &(s.0, s.1));
        let m = build_drift_matrix(&s.0, params).0;
        let dg = m * s.2;
        let dh = -(s.3 * m);
        let dz = s.3 * noise.sym * s.3.transpose();
        (dmean, dv, dg, dh, dz)
    };
    let v0 = *init.covariance.matrix();
    let mut state: FundamentalState = (init.mean, v0, Matrix4::identity(), Matrix4::identity(), Matrix4::zeros());
    let mut t = 0.0;
    let mut result = FundamentalCheck {
        max_deviation: 0.0,
        samples: Vec::with_capacity(t_grid.len()),
    };
    for &target in t_grid {
        if target < t {
            return Err(Error::Domain(format!("time grid must be ascending ({target} after {t})")));
        }
        if target > t {
            let (next, _) = integrate(state, t, target, control, rhs, |_, _, s| {
                s.1 = project_symmetric(&s.1).0;
                Ok(())
            })?;
            state = next;
            t = target;
        }
        let g = state.2;
        let cond = condition_number(&g);
        if cond > CONDITION_LIMIT {
            return Err(Error::Conditioning {
                t,
                cond,
                limit: CONDITION_LIMIT,
            });
        }
        let r = g * (v0 + state.4) * g.transpose();
        let deviation = (r - state.1).amax();
        result.max_deviation = result.max_deviation.max(deviation);
        result.samples.push(FundamentalSample {
            t,
            deviation,
            condition: cond,
            fundamental: r,
            lyapunov: state.1,
        });
    }
    Ok(result)
}
