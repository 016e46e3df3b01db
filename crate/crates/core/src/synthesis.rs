//! Backstepping synthesis of incrementally stabilizing feedback.
//!
//! For a system in parametric-strict-feedback form the stage controls and
//! virtual controls are
//!
//! ```text
//! k_l(x) = -b_{l-1} (x_{l-1} - φ_{l-2}(x)) - (λ/2)(x_l - φ_{l-1}(x)) + ∂φ_{l-1}/∂x · f(x)
//! φ_l(x) = (k_l(x) - h_l(x)) / b_l                       for l = 1..n-1
//! φ_{-1} = φ_0 = 0,  b_0 = 0,  x_0 = 0
//! ```
//!
//! and the feedback is `k(x, û) = (k_n(x) - h_n(x) + û) / g(x)`.
//!
//! `φ_{l-1}` reads only `x_1..x_{l-1}`, so the drift term `∂φ_{l-1}/∂x · f`
//! only needs `f_1..f_{l-1}`, none of which contain the input. That breaks
//! the apparent dependence of `k_l` on `k` itself, and `û` enters only
//! through the final division by `g`. Tests assert both facts numerically.
//!
//! Everything is evaluated over nested duals, so the virtual controls are
//! differentiated exactly as many times as the recursion needs.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::autodiff::{self, lift, reals, Dual};
use crate::error::{Error, Result};
use crate::model::{ParametricForm, StrictFeedbackSystem, VectorField};

/// Square matrix of duals, row-major.
pub type DualMatrix = Vec<Vec<Dual>>;

pub fn to_real_matrix(m: &DualMatrix) -> DMatrix<f64> {
    let n = m.len();
    DMatrix::from_fn(n, m.first().map_or(0, Vec::len), |i, j| m[i][j].real())
}

fn identity_matrix(n: usize) -> DualMatrix {
    (0..n)
        .map(|i| (0..n).map(|j| Dual::Real(if i == j { 1.0 } else { 0.0 })).collect())
        .collect()
}

/// `Aᵀ M A` for square dual matrices.
fn congruence(a: &DualMatrix, m: &DualMatrix) -> DualMatrix {
    let n = a.len();
    let mut ma = vec![vec![Dual::ZERO; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Dual::ZERO;
            for k in 0..n {
                acc += &m[i][k] * &a[k][j];
            }
            ma[i][j] = acc;
        }
    }
    let mut out = vec![vec![Dual::ZERO; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Dual::ZERO;
            for k in 0..n {
                acc += &a[k][i] * &ma[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Which construction produced a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Recursive,
    PsiJacobian,
    Pullback,
    Identity,
    Constant,
}

/// `x ↦ G(x)`, a symmetric positive-definite matrix field.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    fn kind(&self) -> MetricKind;
    fn eval(&self, x: &[Dual]) -> Result<DualMatrix>;

    fn eval_real(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(to_real_matrix(&self.eval(&lift(x))?))
    }
}

/// Controller produced by the backstepping recursion.
///
/// When built for a strict-feedback system, `coordinate_map` holds the
/// original system and every plant-side quantity first maps `x` to the
/// design coordinates `y = φ(x)`.
#[derive(Clone)]
pub struct SynthesizedController {
    lambda: f64,
    form: Arc<dyn ParametricForm>,
    coordinate_map: Option<Arc<StrictFeedbackSystem>>,
}

impl fmt::Debug for SynthesizedController {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SynthesizedController")
            .field("lambda", &self.lambda)
            .field("dim", &self.dim())
            .field("strict_feedback", &self.coordinate_map.is_some())
            .finish()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("contraction rate must be positive and finite, got {lambda}")))
    }
}

/// Synthesizes the feedback for a parametric-strict-feedback system.
pub fn synthesize(form: Arc<dyn ParametricForm>, lambda: f64) -> Result<SynthesizedController> {
    check_lambda(lambda)?;
    Ok(SynthesizedController { lambda, form, coordinate_map: None })
}

/// Synthesizes on the transformed system and applies it as `u = k(φ(x), û)`.
pub fn strict_feedback_controller(sys: Arc<StrictFeedbackSystem>, lambda: f64) -> Result<SynthesizedController> {
    check_lambda(lambda)?;
    let form: Arc<dyn ParametricForm> = Arc::new(sys.to_parametric());
    Ok(SynthesizedController { lambda, form, coordinate_map: Some(sys) })
}

impl SynthesizedController {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    pub fn form(&self) -> &Arc<dyn ParametricForm> {
        &self.form
    }

    pub fn coordinate_map(&self) -> Option<&Arc<StrictFeedbackSystem>> {
        self.coordinate_map.as_ref()
    }

    // b_0 = 0 by convention
    fn coupling(&self, l: usize) -> f64 {
        if l == 0 {
            0.0
        } else {
            self.form.coupling(l)
        }
    }

    /// Virtual control `φ_l(y)` for `0 <= l < n`; `φ_0 ≡ 0`.
    pub fn virtual_control(&self, l: usize, y: &[Dual]) -> Result<Dual> {
        if l == 0 {
            return Ok(Dual::ZERO);
        }
        debug_assert!(l < self.dim());
        let k = self.stage_control(l, y)?;
        Ok((k - self.form.drift(l, y)?) / self.form.coupling(l))
    }

    /// Stage control `k_l(y)` for `1 <= l <= n`.
    pub fn stage_control(&self, l: usize, y: &[Dual]) -> Result<Dual> {
        debug_assert!((1..=self.dim()).contains(&l));
        let n = self.dim();
        // φ_{l-1} and its derivative along (f_1, .., f_{l-1}, 0, .., 0)
        let (phi_prev, drift_term) = if l == 1 {
            (Dual::ZERO, Dual::ZERO)
        } else {
            let mut direction = vec![Dual::ZERO; n];
            for j in 1..l {
                direction[j - 1] = self.form.field_component(j, y, &Dual::ZERO)?;
            }
            autodiff::value_and_directional(|z: &[Dual]| self.virtual_control(l - 1, z), y, &direction)?
        };
        let mut k = (&y[l - 1] - &phi_prev) * (-0.5 * self.lambda) + drift_term;
        if l >= 2 {
            // x_0 = 0 and φ_{-1} = 0 make this term vanish at l = 1
            let phi_prev2 = self.virtual_control(l - 2, y)?;
            k -= self.coupling(l - 1) * (&y[l - 2] - phi_prev2);
        }
        Ok(k)
    }

    /// Feedback `k(y, û)` in design coordinates.
    pub fn control_law(&self, y: &[Dual], input: &Dual) -> Result<Dual> {
        let n = self.dim();
        let kn = self.stage_control(n, y)?;
        let g = self.form.input_gain(y)?;
        if g.real() == 0.0 {
            return Err(Error::Domain(crate::error::DomainError::new("input gain g vanishes")
                .with_context(crate::model::state_names(n).into_iter().zip(reals(y)).collect())));
        }
        Ok((kn - self.form.drift(n, y)? + input) / g)
    }

    /// `y = φ(x)` for strict-feedback plants, identity otherwise.
    pub fn to_design(&self, x: &[Dual]) -> Result<Vec<Dual>> {
        match &self.coordinate_map {
            Some(sys) => sys.transform(x),
            None => Ok(x.to_vec()),
        }
    }

    /// Plant-side feedback `u = k(φ(x), û)`.
    pub fn feedback(&self, x: &[Dual], input: &Dual) -> Result<Dual> {
        self.control_law(&self.to_design(x)?, input)
    }

    pub fn feedback_real(&self, x: &[f64], input: f64) -> Result<f64> {
        Ok(self.feedback(&lift(x), &Dual::Real(input))?.real())
    }

    /// `ψ(y) = (y_1, y_2 - φ_1(y), …, y_n - φ_{n-1}(y))`.
    pub fn psi(&self, y: &[Dual]) -> Result<Vec<Dual>> {
        (0..self.dim()).map(|i| Ok(&y[i] - self.virtual_control(i, y)?)).collect()
    }

    /// Error coordinates `z = ψ(φ(x))` of a plant state.
    pub fn error_coordinates(&self, x: &[Dual]) -> Result<Vec<Dual>> {
        self.psi(&self.to_design(x)?)
    }

    /// Distance induced by the synthesized metric: Euclidean distance in error coordinates.
    pub fn distance(&self, x: &[f64], other: &[f64]) -> Result<f64> {
        let a = reals(&self.error_coordinates(&lift(x))?);
        let b = reals(&self.error_coordinates(&lift(other))?);
        Ok(a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
    }

    /// Block recursion `G_1 = [1]`,
    /// `G_l = [[G_{l-1} + aᵀa, -aᵀ], [-a, 1]]` with `a = ∂φ_{l-1}/∂(y_1..y_{l-1})`.
    pub fn metric_recursive(&self, y: &[Dual]) -> Result<DualMatrix> {
        let n = self.dim();
        let mut g: DualMatrix = vec![vec![Dual::Real(1.0)]];
        for l in 2..=n {
            let grad = autodiff::gradient(|z: &[Dual]| self.virtual_control(l - 1, z), y)?;
            let a = &grad[..l - 1];
            let mut next = vec![vec![Dual::ZERO; l]; l];
            for i in 0..l - 1 {
                for j in 0..l - 1 {
                    next[i][j] = &g[i][j] + &a[i] * &a[j];
                }
                next[i][l - 1] = -&a[i];
                next[l - 1][i] = -&a[i];
            }
            next[l - 1][l - 1] = Dual::Real(1.0);
            g = next;
        }
        Ok(g)
    }

    /// Jacobian of ψ at `y`.
    pub fn psi_jacobian(&self, y: &[Dual]) -> Result<DualMatrix> {
        autodiff::jacobian(|z: &[Dual]| self.psi(z), y)
    }

    /// `G_n = J_ψᵀ J_ψ`, the pullback of the identity through ψ.
    pub fn metric_from_psi(&self, y: &[Dual]) -> Result<DualMatrix> {
        let j = self.psi_jacobian(y)?;
        Ok(congruence(&j, &identity_matrix(self.dim())))
    }

    pub fn recursive_metric(&self) -> RecursiveMetric {
        RecursiveMetric { ctrl: self.clone() }
    }

    pub fn psi_metric(&self) -> PsiMetric {
        PsiMetric { ctrl: self.clone() }
    }

    /// Metric in plant coordinates: `φ*G_n` for strict-feedback plants, `G_n` otherwise.
    pub fn plant_metric(&self) -> Arc<dyn MetricField> {
        let inner: Arc<dyn MetricField> = Arc::new(self.recursive_metric());
        match &self.coordinate_map {
            Some(sys) => Arc::new(PullbackMetric { inner, map: Arc::clone(sys) }),
            None => inner,
        }
    }

    /// Closed loop `ẏ = f'(y, k(y, û))` in design coordinates.
    pub fn closed_loop_design(&self) -> ClosedLoop {
        ClosedLoop { ctrl: self.clone(), plant_side: false }
    }

    /// Closed loop `ẋ = f(x, k(φ(x), û))` in plant coordinates.
    pub fn closed_loop(&self) -> ClosedLoop {
        ClosedLoop { ctrl: self.clone(), plant_side: true }
    }
}

/// Closed-loop vector field; its input is the external signal `û`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    ctrl: SynthesizedController,
    plant_side: bool,
}

impl ClosedLoop {
    pub fn controller(&self) -> &SynthesizedController {
        &self.ctrl
    }
}

impl VectorField for ClosedLoop {
    fn dim(&self) -> usize {
        self.ctrl.dim()
    }

    fn eval(&self, x: &[Dual], input: &Dual) -> Result<Vec<Dual>> {
        match (&self.ctrl.coordinate_map, self.plant_side) {
            (Some(sys), true) => {
                let u = self.ctrl.feedback(x, input)?;
                sys.eval(x, &u)
            }
            _ => {
                let u = self.ctrl.control_law(x, input)?;
                self.ctrl.form.field(x, &u)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecursiveMetric {
    ctrl: SynthesizedController,
}

impl MetricField for RecursiveMetric {
    fn dim(&self) -> usize {
        self.ctrl.dim()
    }
    fn kind(&self) -> MetricKind {
        MetricKind::Recursive
    }
    fn eval(&self, y: &[Dual]) -> Result<DualMatrix> {
        self.ctrl.metric_recursive(y)
    }
}

#[derive(Debug, Clone)]
pub struct PsiMetric {
    ctrl: SynthesizedController,
}

impl MetricField for PsiMetric {
    fn dim(&self) -> usize {
        self.ctrl.dim()
    }
    fn kind(&self) -> MetricKind {
        MetricKind::PsiJacobian
    }
    fn eval(&self, y: &[Dual]) -> Result<DualMatrix> {
        self.ctrl.metric_from_psi(y)
    }
}

/// `(φ*G)(x) = Θ(x)ᵀ G(φ(x)) Θ(x)` with `Θ = ∂φ/∂x`.
pub struct PullbackMetric {
    pub inner: Arc<dyn MetricField>,
    pub map: Arc<StrictFeedbackSystem>,
}

impl MetricField for PullbackMetric {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn kind(&self) -> MetricKind {
        MetricKind::Pullback
    }
    fn eval(&self, x: &[Dual]) -> Result<DualMatrix> {
        pullback_metric(self.inner.as_ref(), &self.map, x)
    }
}

/// Pulls `metric` back through the coordinate map of `map` at `x`.
pub fn pullback_metric(metric: &dyn MetricField, map: &StrictFeedbackSystem, x: &[Dual]) -> Result<DualMatrix> {
    let theta = map.coordinate_jacobian(x)?;
    let det = to_real_matrix(&theta).determinant();
    if !det.is_finite() || det.abs() < f64::MIN_POSITIVE {
        return Err(Error::SingularJacobian { point: reals(x) });
    }
    let g = metric.eval(&map.transform(x)?)?;
    Ok(congruence(&theta, &g))
}

/// Euclidean metric; useful as a deliberately wrong certificate.
#[derive(Debug, Clone)]
pub struct IdentityMetric(pub usize);

impl MetricField for IdentityMetric {
    fn dim(&self) -> usize {
        self.0
    }
    fn kind(&self) -> MetricKind {
        MetricKind::Identity
    }
    fn eval(&self, _x: &[Dual]) -> Result<DualMatrix> {
        Ok(identity_matrix(self.0))
    }
}

#[derive(Debug, Clone)]
pub struct ConstantMetric(pub DMatrix<f64>);

impl MetricField for ConstantMetric {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn kind(&self) -> MetricKind {
        MetricKind::Constant
    }
    fn eval(&self, _x: &[Dual]) -> Result<DualMatrix> {
        let m = &self.0;
        Ok((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| Dual::Real(m[(i, j)])).collect()).collect())
    }
}
