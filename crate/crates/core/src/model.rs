//! Strict-feedback and parametric-strict-feedback systems, and the coordinate
//! change that turns the former into the latter.
//!
//! States are always named `x1..xn` inside expressions; every other
//! identifier must be a named parameter. The control input is a scalar and
//! ranges over all of ℝ.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{self, lift, reals, Dual};
use crate::error::{DomainError, Error, Result};
use crate::expr::{Compiled, Expression};
use crate::sampling::probe_points;

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn lerp(&self, t: f64) -> f64 {
        self.lo + t * (self.hi - self.lo)
    }

    fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// `ẋ = f(x, u)` evaluable over nested duals.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[Dual], u: &Dual) -> Result<Vec<Dual>>;

    fn eval_real(&self, x: &[f64], u: f64) -> Result<Vec<f64>> {
        Ok(reals(&self.eval(&lift(x), &Dual::Real(u))?))
    }
}

/// A system in parametric-strict-feedback form:
///
/// ```text
/// ẋ_l = drift_l(x_1..x_l) + coupling_l · x_{l+1}    (l < n)
/// ẋ_n = drift_n(x) + input_gain(x) · u
/// ```
///
/// Indices `l` are 1-based, matching the state names.
pub trait ParametricForm: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn drift(&self, l: usize, x: &[Dual]) -> Result<Dual>;
    /// Nonzero interconnection gain for `1 <= l < n`.
    fn coupling(&self, l: usize) -> f64;
    fn input_gain(&self, x: &[Dual]) -> Result<Dual>;

    /// Component `l` of the open-loop field.
    fn field_component(&self, l: usize, x: &[Dual], u: &Dual) -> Result<Dual> {
        let n = self.dim();
        let h = self.drift(l, x)?;
        if l < n {
            Ok(h + self.coupling(l) * &x[l])
        } else {
            Ok(h + self.input_gain(x)? * u)
        }
    }

    fn field(&self, x: &[Dual], u: &Dual) -> Result<Vec<Dual>> {
        check_dim(self.dim(), x.len())?;
        (1..=self.dim()).map(|l| self.field_component(l, x, u)).collect()
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

pub fn state_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn state_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Compiles `expr` after checking that it only reads `x1..x_max` and parameters.
fn compile_triangular(
    label: &str,
    expr: &Expression,
    max_state: usize,
    n: usize,
    params: &BTreeMap<String, f64>,
) -> Result<Compiled> {
    for name in expr.free_variables() {
        match state_index(&name) {
            Some(j) if j <= max_state => {}
            Some(j) if j <= n => {
                return Err(Error::InvalidSystem(format!(
                    "{label} may depend only on x1..x{max_state} but references x{j}"
                )))
            }
            _ if params.contains_key(&name) => {}
            _ => {
                return Err(Error::InvalidSystem(format!(
                    "{label} references `{name}`, which is neither a state of this {n}-state system nor a parameter"
                )))
            }
        }
    }
    expr.compile(&state_names(n), params)
}

fn validate_common(n: usize, params: &BTreeMap<String, f64>, bounds: &[Interval]) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidSystem("system needs at least one state".into()));
    }
    for (name, value) in params {
        if state_index(name).is_some() {
            return Err(Error::InvalidSystem(format!("parameter `{name}` shadows a state name")));
        }
        if !value.is_finite() {
            return Err(Error::InvalidSystem(format!("parameter `{name}` is not finite")));
        }
    }
    if bounds.len() != n {
        return Err(Error::InvalidSystem(format!(
            "validity box has {} intervals for {n} states",
            bounds.len()
        )));
    }
    if let Some(i) = bounds.iter().position(|b| !b.is_valid()) {
        return Err(Error::InvalidSystem(format!("validity interval for x{} is empty or not finite", i + 1)));
    }
    Ok(())
}

const GAIN_PROBES: usize = 256;

fn check_nonzero_on_box(label: &str, gain: &Compiled, bounds: &[Interval]) -> Result<()> {
    // a continuous gain that changes sign on the (connected) box vanishes somewhere in it
    let mut seen: Option<(f64, Vec<f64>)> = None;
    for p in probe_points(bounds, GAIN_PROBES) {
        match gain.eval::<f64>(&p) {
            Ok(v) if v != 0.0 => match &seen {
                Some((s, q)) if s.signum() != v.signum() => {
                    return Err(Error::InvalidSystem(format!(
                        "{label} changes sign between {q:?} and {p:?}, so it vanishes inside the validity box"
                    )))
                }
                Some(_) => {}
                None => seen = Some((v, p)),
            },
            Ok(_) => {
                return Err(Error::InvalidSystem(format!("{label} vanishes at {p:?} inside the validity box")))
            }
            Err(e) => {
                return Err(Error::InvalidSystem(format!("{label} cannot be evaluated at {p:?}: {e}")))
            }
        }
    }
    Ok(())
}

/// Parametric-strict-feedback system defined by expressions.
#[derive(Debug, Clone)]
pub struct ParametricStrictFeedbackSystem {
    drift_src: Vec<Expression>,
    gain_src: Expression,
    drift: Vec<Compiled>,
    coupling: Vec<f64>,
    gain: Compiled,
    params: BTreeMap<String, f64>,
    bounds: Vec<Interval>,
}

impl ParametricStrictFeedbackSystem {
    /// Validates and builds the system; `coupling` holds `n - 1` nonzero gains.
    pub fn new(
        drift: Vec<Expression>,
        coupling: Vec<f64>,
        input_gain: Expression,
        params: BTreeMap<String, f64>,
        bounds: Vec<Interval>,
    ) -> Result<Self> {
        let n = drift.len();
        validate_common(n, &params, &bounds)?;
        if coupling.len() != n - 1 {
            return Err(Error::InvalidSystem(format!(
                "expected {} coupling gains b_1..b_{} for {n} states, got {}",
                n - 1,
                n - 1,
                coupling.len()
            )));
        }
        if let Some(i) = coupling.iter().position(|b| *b == 0.0 || !b.is_finite()) {
            return Err(Error::InvalidSystem(format!(
                "coupling gain b_{} must be a nonzero finite constant, got {}",
                i + 1,
                coupling[i]
            )));
        }
        let compiled = drift
            .iter()
            .enumerate()
            .map(|(i, e)| compile_triangular(&format!("h_{}", i + 1), e, i + 1, n, &params))
            .collect::<Result<Vec<_>>>()?;
        let gain = compile_triangular("g", &input_gain, n, n, &params)?;
        check_nonzero_on_box("input gain g", &gain, &bounds)?;
        Ok(Self { drift_src: drift, gain_src: input_gain, drift: compiled, coupling, gain, params, bounds })
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn drift_expressions(&self) -> &[Expression] {
        &self.drift_src
    }

    pub fn input_gain_expression(&self) -> &Expression {
        &self.gain_src
    }

    pub fn couplings(&self) -> &[f64] {
        &self.coupling
    }
}

impl ParametricForm for ParametricStrictFeedbackSystem {
    fn dim(&self) -> usize {
        self.drift.len()
    }

    fn drift(&self, l: usize, x: &[Dual]) -> Result<Dual> {
        self.drift[l - 1].eval(x)
    }

    fn coupling(&self, l: usize) -> f64 {
        self.coupling[l - 1]
    }

    fn input_gain(&self, x: &[Dual]) -> Result<Dual> {
        self.gain.eval(x)
    }
}

impl VectorField for ParametricStrictFeedbackSystem {
    fn dim(&self) -> usize {
        self.drift.len()
    }

    fn eval(&self, x: &[Dual], u: &Dual) -> Result<Vec<Dual>> {
        self.field(x, u)
    }
}

/// Strict-feedback system `ẋ_l = h_l(x_1..x_l) + g_l(x_1..x_l)·x_{l+1}`,
/// `ẋ_n = h_n(x) + g_n(x)·u`.
#[derive(Debug, Clone)]
pub struct StrictFeedbackSystem {
    drift_src: Vec<Expression>,
    gain_src: Vec<Expression>,
    drift: Vec<Compiled>,
    gains: Vec<Compiled>,
    params: BTreeMap<String, f64>,
    bounds: Vec<Interval>,
}

impl StrictFeedbackSystem {
    pub fn new(
        drift: Vec<Expression>,
        gains: Vec<Expression>,
        params: BTreeMap<String, f64>,
        bounds: Vec<Interval>,
    ) -> Result<Self> {
        let n = drift.len();
        validate_common(n, &params, &bounds)?;
        if gains.len() != n {
            return Err(Error::InvalidSystem(format!("expected {n} gains g_1..g_{n}, got {}", gains.len())));
        }
        let compiled_drift = drift
            .iter()
            .enumerate()
            .map(|(i, e)| compile_triangular(&format!("h_{}", i + 1), e, i + 1, n, &params))
            .collect::<Result<Vec<_>>>()?;
        let compiled_gains = gains
            .iter()
            .enumerate()
            .map(|(i, e)| compile_triangular(&format!("g_{}", i + 1), e, i + 1, n, &params))
            .collect::<Result<Vec<_>>>()?;
        for (i, g) in compiled_gains.iter().enumerate() {
            check_nonzero_on_box(&format!("gain g_{}", i + 1), g, &bounds)?;
        }
        Ok(Self {
            drift_src: drift,
            gain_src: gains,
            drift: compiled_drift,
            gains: compiled_gains,
            params,
            bounds,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn drift_expressions(&self) -> &[Expression] {
        &self.drift_src
    }

    pub fn gain_expressions(&self) -> &[Expression] {
        &self.gain_src
    }

    pub(crate) fn drift_at(&self, l: usize, x: &[Dual]) -> Result<Dual> {
        self.drift[l - 1].eval(x)
    }

    pub(crate) fn gain_at(&self, l: usize, x: &[Dual]) -> Result<Dual> {
        self.gains[l - 1].eval(x)
    }

    /// Component `l` (1-based) of the coordinate map: `(∏_{i<l} g_i) · x_l`.
    pub fn coordinate_component(&self, l: usize, x: &[Dual]) -> Result<Dual> {
        let mut prod = Dual::Real(1.0);
        for i in 1..l {
            prod *= &self.gain_at(i, x)?;
        }
        Ok(prod * &x[l - 1])
    }

    /// `y = φ(x)` with `y_1 = x_1`, `y_l = (∏_{i<l} g_i(x_1..x_i)) · x_l`.
    pub fn transform(&self, x: &[Dual]) -> Result<Vec<Dual>> {
        check_dim(self.dim(), x.len())?;
        let mut y = Vec::with_capacity(x.len());
        let mut prod = Dual::Real(1.0);
        for l in 1..=self.dim() {
            if l > 1 {
                prod *= &self.gain_at(l - 1, x)?;
            }
            y.push(&prod * &x[l - 1]);
        }
        Ok(y)
    }

    /// Inverse of [`transform`](Self::transform) by forward substitution.
    pub fn invert(&self, y: &[Dual]) -> Result<Vec<Dual>> {
        check_dim(self.dim(), y.len())?;
        self.invert_prefix(y, self.dim())
    }

    /// Recovers `x_1..x_m` from `y_1..y_m`; later entries are left at zero.
    pub(crate) fn invert_prefix(&self, y: &[Dual], m: usize) -> Result<Vec<Dual>> {
        let mut x = vec![Dual::ZERO; self.dim()];
        let mut prod = Dual::Real(1.0);
        for l in 1..=m {
            if l > 1 {
                prod *= &self.gain_at(l - 1, &x)?;
            }
            if prod.real() == 0.0 {
                return Err(Error::Domain(DomainError::new(format!(
                    "coordinate inverse divides by a vanishing gain product at x{l}"
                ))));
            }
            x[l - 1] = &y[l - 1] / &prod;
        }
        Ok(x)
    }

    pub fn transform_real(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(reals(&self.transform(&lift(x))?))
    }

    pub fn invert_real(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(reals(&self.invert(&lift(y))?))
    }

    /// `∂φ/∂x` at `x`.
    pub fn coordinate_jacobian(&self, x: &[Dual]) -> Result<Vec<Vec<Dual>>> {
        autodiff::jacobian(|z: &[Dual]| self.transform(z), x)
    }

    /// The same system written in `y = φ(x)` coordinates.
    pub fn to_parametric(self: &Arc<Self>) -> TransformedSystem {
        TransformedSystem { base: Arc::clone(self) }
    }
}

impl VectorField for StrictFeedbackSystem {
    fn dim(&self) -> usize {
        self.drift.len()
    }

    fn eval(&self, x: &[Dual], u: &Dual) -> Result<Vec<Dual>> {
        check_dim(self.dim(), x.len())?;
        let n = self.dim();
        (1..=n)
            .map(|l| {
                let h = self.drift_at(l, x)?;
                let next = if l < n { x[l].clone() } else { u.clone() };
                Ok(h + self.gain_at(l, x)? * next)
            })
            .collect()
    }
}

/// Pushforward `Θ(x)·f(x, u)` at `x = φ⁻¹(y)`, with `Θ` the full AD Jacobian.
///
/// This is the direct route; [`TransformedSystem`] reaches the same field
/// through its triangular structure.
pub fn pushforward_field(sys: &StrictFeedbackSystem, y: &[Dual], u: &Dual) -> Result<Vec<Dual>> {
    let x = sys.invert(y)?;
    let theta = sys.coordinate_jacobian(&x)?;
    let f = sys.eval(&x, u)?;
    Ok(theta
        .iter()
        .map(|row| row.iter().zip(&f).fold(Dual::ZERO, |acc, (a, b)| acc + a * b))
        .collect())
}

/// A strict-feedback system seen in `y = φ(x)` coordinates, where it has
/// parametric-strict-feedback form with unit couplings and input gain
/// `∏ g_i`.
#[derive(Debug, Clone)]
pub struct TransformedSystem {
    base: Arc<StrictFeedbackSystem>,
}

impl TransformedSystem {
    pub fn base(&self) -> &Arc<StrictFeedbackSystem> {
        &self.base
    }
}

impl ParametricForm for TransformedSystem {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    // ẏ_l = Σ_{j≤l} ∂φ_l/∂x_j (h_j + g_j x_{j+1}). The j = l coupling term is
    // exactly y_{l+1}, so the drift keeps everything else and only ever reads
    // x_1..x_l, i.e. y_1..y_l.
    fn drift(&self, l: usize, y: &[Dual]) -> Result<Dual> {
        let n = self.base.dim();
        let x = self.base.invert_prefix(y, l)?;
        let mut acc = Dual::ZERO;
        for j in 1..=l {
            let mut axis = vec![Dual::ZERO; n];
            axis[j - 1] = Dual::Real(1.0);
            let slope = autodiff::directional_derivative(|z: &[Dual]| self.base.coordinate_component(l, z), &x, &axis)?;
            let mut term = self.base.drift_at(j, &x)?;
            if j < l {
                term += self.base.gain_at(j, &x)? * &x[j];
            }
            acc += slope * term;
        }
        Ok(acc)
    }

    fn coupling(&self, _l: usize) -> f64 {
        1.0
    }

    fn input_gain(&self, y: &[Dual]) -> Result<Dual> {
        let x = self.base.invert(y)?;
        let mut prod = Dual::Real(1.0);
        for i in 1..=self.base.dim() {
            prod *= &self.base.gain_at(i, &x)?;
        }
        Ok(prod)
    }
}

impl VectorField for TransformedSystem {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, y: &[Dual], u: &Dual) -> Result<Vec<Dual>> {
        self.field(y, u)
    }
}
