//! Pointwise certification of contraction metrics.
//!
//! With `F = (∂f/∂x)ᵀG + G ∂f/∂x + D_f G` (the last term is the derivative of
//! `G` along `f`), a metric contracts at rate λ with respect to states when
//! `Xᵀ(F + λG)X ≤ 0` for all `X`, i.e. when the largest eigenvalue of the
//! symmetrized `F + λG` is nonpositive.
//!
//! The state-and-input condition
//!
//! ```text
//! Xᵀ(F + λG)X + 2 Yᵀ Bᵀ G X ≤ α ‖X‖_G ‖Y‖      for all X, Y,   B = ∂f/∂u
//! ```
//!
//! splits into two finite checks. Setting `Y = 0` gives the state condition.
//! Scaling `Y` by `t → ∞` shows the `Y`-linear part must satisfy
//! `2‖BᵀGX‖ ≤ α‖X‖_G` on its own, and by Cauchy-Schwarz the two together are
//! sufficient. The supremum of `‖BᵀGX‖² / ‖X‖²_G` is `λ_max(BᵀGB)` (the
//! nonzero spectrum of `G⁻¹(GB)(GB)ᵀ`), so the input check reduces to the
//! margin `α² − 4·λ_max(BᵀGB) ≥ 0`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, lift, reals, Dual};
use crate::error::{Error, Result};
use crate::model::{Interval, VectorField};
use crate::sampling::Halton;
use crate::synthesis::{to_real_matrix, MetricField, MetricKind, SynthesizedController};

/// Pass thresholds. These are numerical policy, not part of the theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub state: f64,
    pub input: f64,
    pub positive_definite: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { state: 1e-7, input: 1e-9, positive_definite: 1e-10 }
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let values = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    if values.iter().all(|v| v.is_finite()) {
        Ok(values.iter().copied().collect())
    } else {
        Err(Error::Eigen)
    }
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// `∂f/∂x` at `(x, u)`.
pub fn state_jacobian(field: &dyn VectorField, x: &[f64], u: f64) -> Result<DMatrix<f64>> {
    let u = Dual::Real(u);
    let j = autodiff::jacobian(|z: &[Dual]| field.eval(z, &u), &lift(x))?;
    Ok(to_real_matrix(&j))
}

/// `∂f/∂u` at `(x, u)` as an `n × 1` matrix.
pub fn input_jacobian(field: &dyn VectorField, x: &[f64], u: f64) -> Result<DMatrix<f64>> {
    let (seeded, level) = autodiff::seed(&[Dual::Real(u)], &[Dual::Real(1.0)]);
    let out = field.eval(&lift(x), &seeded[0])?;
    Ok(DMatrix::from_iterator(out.len(), 1, out.iter().map(|c| c.tangent(level).real())))
}

/// Derivative of the metric along `direction`, by forward-mode AD.
pub fn metric_derivative(metric: &dyn MetricField, x: &[f64], direction: &[f64]) -> Result<DMatrix<f64>> {
    let (seeded, level) = autodiff::seed(&lift(x), &lift(direction));
    let g = metric.eval(&seeded)?;
    let n = g.len();
    Ok(DMatrix::from_fn(n, n, |i, j| g[i][j].tangent(level).real()))
}

/// Same derivative by central differences with step `h`.
pub fn metric_derivative_fd(metric: &dyn MetricField, x: &[f64], direction: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let plus: Vec<f64> = x.iter().zip(direction).map(|(a, v)| a + h * v).collect();
    let minus: Vec<f64> = x.iter().zip(direction).map(|(a, v)| a - h * v).collect();
    Ok((metric.eval_real(&plus)? - metric.eval_real(&minus)?) / (2.0 * h))
}

/// Symmetrized `F(x, u) + λ G(x)`.
pub fn defect_matrix(field: &dyn VectorField, metric: &dyn MetricField, lambda: f64, x: &[f64], u: f64) -> Result<DMatrix<f64>> {
    let jac = state_jacobian(field, x, u)?;
    let fx = field.eval_real(x, u)?;
    let g = metric.eval_real(x)?;
    let dg = metric_derivative(metric, x, &fx)?;
    let a = jac.transpose() * &g + &g * &jac + dg + &g * lambda;
    Ok(symmetrize(&a))
}

/// Largest eigenvalue of `F + λG`; nonpositive where the state condition holds.
pub fn state_defect(field: &dyn VectorField, metric: &dyn MetricField, lambda: f64, x: &[f64], u: f64) -> Result<f64> {
    max_eigenvalue(&defect_matrix(field, metric, lambda, x, u)?)
}

/// `α² − 4 λ_max(BᵀGB)`; nonnegative where the input part holds.
pub fn input_margin(g: &DMatrix<f64>, b: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    let btgb = b.transpose() * g * b;
    Ok(alpha * alpha - 4.0 * max_eigenvalue(&btgb)?)
}

pub fn input_defect(
    field: &dyn VectorField,
    metric: &dyn MetricField,
    _lambda: f64,
    alpha: f64,
    x: &[f64],
    u: f64,
) -> Result<f64> {
    let b = input_jacobian(field, x, u)?;
    input_margin(&metric.eval_real(x)?, &b, alpha)
}

/// Minimum eigenvalue of `G(x)` and whether it clears `tol`.
pub fn positive_definite(metric: &dyn MetricField, x: &[f64], tol: f64) -> Result<(bool, f64)> {
    let m = min_eigenvalue(&metric.eval_real(x)?)?;
    Ok((m > tol, m))
}

/// `V(x) = ½ Σ (x_{l+1} − φ_l(x))² = ½‖ψ(x)‖²`, in plant coordinates.
pub fn lyapunov_value(ctrl: &SynthesizedController, x: &[f64]) -> Result<f64> {
    let z = reals(&ctrl.error_coordinates(&lift(x))?);
    Ok(0.5 * z.iter().map(|v| v * v).sum::<f64>())
}

fn lyapunov_dual(ctrl: &SynthesizedController, x: &[Dual]) -> Result<Dual> {
    let z = ctrl.error_coordinates(x)?;
    Ok(z.iter().fold(Dual::ZERO, |acc, v| acc + v * v) * 0.5)
}

/// `∇V(x) · f_closed(x, û)`.
pub fn lyapunov_derivative(ctrl: &SynthesizedController, x: &[f64], input: f64) -> Result<f64> {
    let f = ctrl.closed_loop().eval_real(x, input)?;
    autodiff::real::directional_derivative(|z: &[Dual]| lyapunov_dual(ctrl, z), x, &f)
}

/// Hessian of V by nested forward mode.
pub fn lyapunov_hessian(ctrl: &SynthesizedController, x: &[f64]) -> Result<DMatrix<f64>> {
    let h = autodiff::hessian(|z: &[Dual]| lyapunov_dual(ctrl, z), &lift(x))?;
    Ok(to_real_matrix(&h))
}

/// Outcome of the checks at one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectResult {
    pub point: Vec<f64>,
    pub input: f64,
    pub max_eigenvalue_state_defect: f64,
    pub input_margin: f64,
    pub min_metric_eigenvalue: f64,
    pub pass: bool,
}

pub fn check_point(
    field: &dyn VectorField,
    metric: &dyn MetricField,
    lambda: f64,
    alpha: f64,
    x: &[f64],
    u: f64,
    tol: &Tolerances,
) -> Result<DefectResult> {
    let g = metric.eval_real(x)?;
    let state = state_defect(field, metric, lambda, x, u)?;
    let b = input_jacobian(field, x, u)?;
    let margin = input_margin(&g, &b, alpha)?;
    let min_eig = min_eigenvalue(&g)?;
    Ok(DefectResult {
        point: x.to_vec(),
        input: u,
        max_eigenvalue_state_defect: state,
        input_margin: margin,
        min_metric_eigenvalue: min_eig,
        pass: state <= tol.state && margin >= -tol.input && min_eig > tol.positive_definite,
    })
}

/// Sampling plan for [`verify_region`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionOptions {
    pub bounds: Vec<Interval>,
    pub input: Interval,
    pub samples: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSummary {
    pub contraction: bool,
    pub input: bool,
    pub positive_definite: bool,
    pub evaluation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub metric: MetricKind,
    pub lambda: f64,
    pub alpha: f64,
    pub samples: usize,
    pub seed: u64,
    pub bounds: Vec<Interval>,
    pub input_interval: Interval,
    pub tolerances: Tolerances,
    pub worst_state_defect: f64,
    pub max_abs_state_defect: f64,
    pub worst_state_sample: Option<DefectResult>,
    pub worst_input_margin: f64,
    pub worst_input_sample: Option<DefectResult>,
    pub min_metric_eigenvalue: f64,
    pub failed_samples: usize,
    pub evaluation_errors: usize,
    pub first_error: Option<String>,
    pub checks: CheckSummary,
    pub pass: bool,
    pub policy_note: String,
}

const POLICY_NOTE: &str = "tolerances and the sampling plan are numerical policy; the underlying inequalities are exact";

/// Runs [`check_point`] over a seeded Halton sample of `bounds × input`.
///
/// `point_map` sends each box sample to the coordinates the field and metric
/// are expressed in (e.g. `x ↦ φ(x)`); pass `None` to use the samples as is.
/// Failures are recorded in the report, never returned as errors.
pub fn verify_region(
    field: &dyn VectorField,
    metric: &dyn MetricField,
    lambda: f64,
    alpha: f64,
    opts: &RegionOptions,
    point_map: Option<&(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync)>,
) -> Result<VerificationReport> {
    if opts.samples == 0 {
        return Err(Error::InvalidArgument("verification needs at least one sample".into()));
    }
    let n = opts.bounds.len();
    let mut halton = Halton::new(n + 1, Some(opts.seed));
    let mut plan = Vec::with_capacity(opts.samples);
    let mut extended = opts.bounds.clone();
    extended.push(opts.input);
    for _ in 0..opts.samples {
        let mut p = halton.next_in(&extended);
        let u = p.pop().unwrap_or(0.0);
        plan.push((p, u));
    }
    let results: Vec<Result<DefectResult>> = plan
        .par_iter()
        .map(|(p, u)| {
            let x = match point_map {
                Some(map) => map(p)?,
                None => p.clone(),
            };
            check_point(field, metric, lambda, alpha, &x, *u, &opts.tolerances)
        })
        .collect();

    let mut worst_state: Option<DefectResult> = None;
    let mut worst_input: Option<DefectResult> = None;
    let mut max_abs = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let mut failed = 0;
    let mut errors = 0;
    let mut first_error = None;
    for r in results {
        match r {
            Ok(d) => {
                if !d.pass {
                    failed += 1;
                }
                max_abs = max_abs.max(d.max_eigenvalue_state_defect.abs());
                min_eig = min_eig.min(d.min_metric_eigenvalue);
                if worst_state.as_ref().is_none_or(|w| d.max_eigenvalue_state_defect > w.max_eigenvalue_state_defect) {
                    worst_state = Some(d.clone());
                }
                if worst_input.as_ref().is_none_or(|w| d.input_margin < w.input_margin) {
                    worst_input = Some(d);
                }
            }
            Err(e) => {
                errors += 1;
                if first_error.is_none() {
                    first_error = Some(e.to_string());
                }
            }
        }
    }
    let tol = opts.tolerances;
    let worst_state_defect = worst_state.as_ref().map_or(f64::NAN, |w| w.max_eigenvalue_state_defect);
    let worst_input_margin = worst_input.as_ref().map_or(f64::NAN, |w| w.input_margin);
    let checks = CheckSummary {
        contraction: worst_state_defect <= tol.state,
        input: worst_input_margin >= -tol.input,
        positive_definite: min_eig > tol.positive_definite,
        evaluation: errors == 0,
    };
    let pass = checks.contraction && checks.input && checks.positive_definite && checks.evaluation;
    Ok(VerificationReport {
        metric: metric.kind(),
        lambda,
        alpha,
        samples: opts.samples,
        seed: opts.seed,
        bounds: opts.bounds.clone(),
        input_interval: opts.input,
        tolerances: tol,
        worst_state_defect,
        max_abs_state_defect: max_abs,
        worst_state_sample: worst_state,
        worst_input_margin,
        worst_input_sample: worst_input,
        min_metric_eigenvalue: min_eig,
        failed_samples: failed,
        evaluation_errors: errors,
        first_error,
        checks,
        pass,
        policy_note: POLICY_NOTE.to_string(),
    })
}

impl VerificationReport {
    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut out = String::new();
        out.push_str(&format!(
            "metric {:?}, lambda = {}, alpha = {}, {} samples (seed {})\n",
            self.metric, self.lambda, self.alpha, self.samples, self.seed
        ));
        out.push_str(&format!("{:<22} {:>24} {:>12} {:>6}\n", "check", "worst value", "tolerance", ""));
        out.push_str(&format!(
            "{:<22} {:>24.6e} {:>12.1e} {:>6}\n",
            "contraction defect",
            self.worst_state_defect,
            self.tolerances.state,
            mark(self.checks.contraction)
        ));
        out.push_str(&format!(
            "{:<22} {:>24.6e} {:>12.1e} {:>6}\n",
            "input margin",
            self.worst_input_margin,
            -self.tolerances.input,
            mark(self.checks.input)
        ));
        out.push_str(&format!(
            "{:<22} {:>24.6e} {:>12.1e} {:>6}\n",
            "min metric eigenvalue",
            self.min_metric_eigenvalue,
            self.tolerances.positive_definite,
            mark(self.checks.positive_definite)
        ));
        out.push_str(&format!(
            "{:<22} {:>24} {:>12} {:>6}\n",
            "evaluation errors",
            self.evaluation_errors,
            0,
            mark(self.checks.evaluation)
        ));
        out.push_str(&format!("overall: {}\n", mark(self.pass)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::model::ParametricStrictFeedbackSystem;
    use crate::synthesis::{synthesize, ConstantMetric, IdentityMetric};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    struct Linear(DMatrix<f64>, DMatrix<f64>);

    impl VectorField for Linear {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn eval(&self, x: &[Dual], u: &Dual) -> Result<Vec<Dual>> {
            Ok((0..self.dim())
                .map(|i| {
                    let mut acc = self.1[(i, 0)] * u;
                    for j in 0..self.dim() {
                        acc += self.0[(i, j)] * &x[j];
                    }
                    acc
                })
                .collect())
        }
    }

    fn scalar_controller(lambda: f64) -> SynthesizedController {
        let sys = ParametricStrictFeedbackSystem::new(
            vec![parse("0").unwrap()],
            vec![],
            parse("1").unwrap(),
            BTreeMap::new(),
            vec![Interval::new(-1.0, 1.0)],
        )
        .unwrap();
        synthesize(Arc::new(sys), lambda).unwrap()
    }

    #[test]
    fn scalar_decay_cancels_exactly() {
        let lambda = 2.0;
        let f = Linear(DMatrix::from_element(1, 1, -lambda / 2.0), DMatrix::from_element(1, 1, 0.0));
        let d = state_defect(&f, &IdentityMetric(1), lambda, &[0.7], 0.0).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn scalar_input_margin_is_on_the_boundary() {
        let ctrl = scalar_controller(2.0);
        let m = input_defect(&ctrl.closed_loop(), &ctrl.recursive_metric(), 2.0, 2.0, &[0.3], 0.1).unwrap();
        assert_eq!(m, 0.0);
        let m0 = input_defect(&ctrl.closed_loop(), &ctrl.recursive_metric(), 2.0, 0.0, &[0.3], 0.1).unwrap();
        assert!(m0 < 0.0);
    }

    #[test]
    fn positive_definiteness() {
        let (ok, m) = positive_definite(&IdentityMetric(3), &[0.0; 3], 1e-10).unwrap();
        assert!(ok);
        assert_eq!(m, 1.0);
        let bad = ConstantMetric(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        let (ok, m) = positive_definite(&bad, &[0.0; 2], 1e-10).unwrap();
        assert!(!ok);
        assert!((m + 1.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_region_passes() {
        let ctrl = scalar_controller(2.0);
        let opts = RegionOptions {
            bounds: vec![Interval::new(-1.0, 1.0)],
            input: Interval::new(-1.0, 1.0),
            samples: 100,
            seed: 3,
            tolerances: Tolerances::default(),
        };
        let r = verify_region(&ctrl.closed_loop(), &ctrl.recursive_metric(), 2.0, 2.0, &opts, None).unwrap();
        assert!(r.pass, "{}", r.to_table());
        assert!(r.max_abs_state_defect <= 1e-12);
        let again = verify_region(&ctrl.closed_loop(), &ctrl.recursive_metric(), 2.0, 2.0, &opts, None).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn zero_samples_rejected() {
        let ctrl = scalar_controller(2.0);
        let opts = RegionOptions {
            bounds: vec![Interval::new(-1.0, 1.0)],
            input: Interval::new(0.0, 0.0),
            samples: 0,
            seed: 0,
            tolerances: Tolerances::default(),
        };
        assert!(verify_region(&ctrl.closed_loop(), &ctrl.recursive_metric(), 2.0, 2.0, &opts, None).is_err());
    }

    #[test]
    fn ad_and_fd_metric_derivatives_agree() {
        let sys = ParametricStrictFeedbackSystem::new(
            vec![parse("sin(x1)").unwrap(), parse("x1*x2").unwrap()],
            vec![1.5],
            parse("1").unwrap(),
            BTreeMap::new(),
            vec![Interval::new(-1.0, 1.0); 2],
        )
        .unwrap();
        let ctrl = synthesize(Arc::new(sys), 2.0).unwrap();
        let m = ctrl.recursive_metric();
        let x = [0.4, -0.3];
        let v = [0.8, 1.1];
        let ad = metric_derivative(&m, &x, &v).unwrap();
        let fd = metric_derivative_fd(&m, &x, &v, 1e-5).unwrap();
        assert!((ad - fd).amax() < 1e-5);
    }

    #[test]
    fn hessian_of_v_differs_from_metric_by_curvature_terms() {
        // Hess V = J_ψᵀ J_ψ + Σ ψ_i ∇²ψ_i; only the first term is the metric.
        let sys = ParametricStrictFeedbackSystem::new(
            vec![parse("sin(x1)").unwrap(), parse("0").unwrap()],
            vec![1.0],
            parse("1").unwrap(),
            BTreeMap::new(),
            vec![Interval::new(-1.0, 1.0); 2],
        )
        .unwrap();
        let ctrl = synthesize(Arc::new(sys), 2.0).unwrap();
        let x = [0.5, 0.2];
        let hess = lyapunov_hessian(&ctrl, &x).unwrap();
        let g = ctrl.recursive_metric().eval_real(&x).unwrap();
        // ψ_2 = x2 + x1 + sin x1, ∇²ψ_2 = diag(-sin x1, 0)
        let psi2 = 0.2 + 0.5 + f64::sin(0.5);
        let mut corrected = g.clone();
        corrected[(0, 0)] += psi2 * -f64::sin(0.5);
        assert!((hess - corrected).amax() < 1e-12);
    }
}
