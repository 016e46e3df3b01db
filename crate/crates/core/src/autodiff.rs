//! Nested forward-mode differentiation.
//!
//! [`Dual`] is a dual number whose components are themselves duals, down to a
//! plain `f64` leaf. Every nested value carries its nesting level; a value of
//! lower level is constant with respect to every higher-level perturbation.
//! Differentiating at a point whose components live at level `L` seeds a new
//! perturbation at level `L + 1`, so an inner derivative can never be confused
//! with an outer one as long as every varying quantity reaches the function
//! through its point argument. Model constants are plain `f64`, which keeps
//! that rule true for everything in this crate.
//!
//! The nesting depth is decided at runtime: the backstepping recursion needs
//! one level per virtual control, and the number of states is only known once
//! a system is loaded.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::Arc;

/// Scalar types that expressions and models can be evaluated over.
///
/// The transcendental methods assume the caller already checked the argument
/// against the function's domain (see `expr`).
pub trait Scalar:
    Clone
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(value: f64) -> Self;
    /// Real part at the innermost level.
    fn value(&self) -> f64;
    /// True when every component is finite.
    fn all_finite(&self) -> bool;
    /// True when some perturbation component is nonzero.
    fn has_tangent(&self) -> bool;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tan(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn powi(&self, exponent: i32) -> Self;
}

impl Scalar for f64 {
    fn from_f64(value: f64) -> Self {
        value
    }
    fn value(&self) -> f64 {
        *self
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
    fn has_tangent(&self) -> bool {
        false
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn tan(&self) -> Self {
        f64::tan(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn powi(&self, exponent: i32) -> Self {
        f64::powi(*self, exponent)
    }
}

/// A dual number with runtime nesting depth.
#[derive(Clone, PartialEq)]
pub enum Dual {
    Real(f64),
    Nested(Arc<Node>),
}

/// One level of a nested dual: `re + eps·ε_level`.
///
/// Both components have a level strictly below `level`.
#[derive(Debug, PartialEq)]
pub struct Node {
    level: u32,
    re: Dual,
    eps: Dual,
}

impl Default for Dual {
    fn default() -> Self {
        Dual::Real(0.0)
    }
}

impl From<f64> for Dual {
    fn from(value: f64) -> Self {
        Dual::Real(value)
    }
}

impl fmt::Debug for Dual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dual::Real(v) => write!(f, "{v:?}"),
            Dual::Nested(node) => {
                write!(f, "dual{}({:?}, {:?})", node.level, node.re, node.eps)
            }
        }
    }
}

impl Dual {
    pub const ZERO: Dual = Dual::Real(0.0);

    pub fn constant(value: f64) -> Self {
        Dual::Real(value)
    }

    /// Builds `re + eps·ε` at the given level.
    ///
    /// Panics if a component already lives at `level` or above.
    pub fn new(level: u32, re: Dual, eps: Dual) -> Self {
        assert!(
            re.level() < level && eps.level() < level,
            "dual components must live below level {level}"
        );
        Self::make(level, re, eps)
    }

    /// Seeds a fresh perturbation one level above both arguments.
    pub fn variable(value: Dual, tangent: Dual) -> Self {
        let level = value.level().max(tangent.level()) + 1;
        Self::make(level, value, tangent)
    }

    // Zero tangents collapse: a lower-level value already means "constant in
    // this perturbation".
    fn make(level: u32, re: Dual, eps: Dual) -> Self {
        if eps.is_exact_zero() {
            re
        } else {
            Dual::Nested(Arc::new(Node { level, re, eps }))
        }
    }

    pub fn level(&self) -> u32 {
        match self {
            Dual::Real(_) => 0,
            Dual::Nested(node) => node.level,
        }
    }

    fn is_exact_zero(&self) -> bool {
        matches!(self, Dual::Real(v) if *v == 0.0)
    }

    /// Real part at the innermost level.
    pub fn real(&self) -> f64 {
        let mut cur = self;
        loop {
            match cur {
                Dual::Real(v) => return *v,
                Dual::Nested(node) => cur = &node.re,
            }
        }
    }

    /// Splits into (value, tangent) with respect to the perturbation at `level`.
    pub fn split(&self, level: u32) -> (Dual, Dual) {
        match self {
            Dual::Nested(node) if node.level == level => (node.re.clone(), node.eps.clone()),
            _ => (self.clone(), Dual::ZERO),
        }
    }

    /// Tangent component with respect to the perturbation at `level`.
    pub fn tangent(&self, level: u32) -> Dual {
        match self {
            Dual::Nested(node) if node.level == level => node.eps.clone(),
            _ => Dual::ZERO,
        }
    }

    /// Component with all perturbations at or above `level` dropped.
    pub fn primal(&self, level: u32) -> Dual {
        match self {
            Dual::Nested(node) if node.level >= level => node.re.primal(level),
            _ => self.clone(),
        }
    }

    fn map_unary(&self, f: &dyn Fn(&Dual) -> Dual, df: &dyn Fn(&Dual) -> Dual) -> Dual {
        match self {
            Dual::Real(_) => unreachable!("map_unary is only called on nested duals"),
            Dual::Nested(node) => {
                let value = f(&node.re);
                let slope = df(&node.re);
                Self::make(node.level, value, slope * &node.eps)
            }
        }
    }

    fn top_level(a: &Dual, b: &Dual) -> u32 {
        a.level().max(b.level())
    }

    pub fn sin(&self) -> Dual {
        match self {
            Dual::Real(v) => Dual::Real(v.sin()),
            _ => self.map_unary(&|x| x.sin(), &|x| x.cos()),
        }
    }

    pub fn cos(&self) -> Dual {
        match self {
            Dual::Real(v) => Dual::Real(v.cos()),
            _ => self.map_unary(&|x| x.cos(), &|x| -x.sin()),
        }
    }

    pub fn tan(&self) -> Dual {
        match self {
            Dual::Real(v) => Dual::Real(v.tan()),
            Dual::Nested(node) => {
                let t = node.re.tan();
                let slope = Dual::Real(1.0) + &t * &t;
                Self::make(node.level, t, slope * &node.eps)
            }
        }
    }

    pub fn exp(&self) -> Dual {
        match self {
            Dual::Real(v) => Dual::Real(v.exp()),
            Dual::Nested(node) => {
                let e = node.re.exp();
                let eps = &e * &node.eps;
                Self::make(node.level, e, eps)
            }
        }
    }

    pub fn ln(&self) -> Dual {
        match self {
            Dual::Real(v) => Dual::Real(v.ln()),
            Dual::Nested(node) => {
                Self::make(node.level, node.re.ln(), &node.eps / &node.re)
            }
        }
    }

    pub fn sqrt(&self) -> Dual {
        match self {
            Dual::Real(v) => Dual::Real(v.sqrt()),
            Dual::Nested(node) => {
                let s = node.re.sqrt();
                let eps = &node.eps / &(&s * 2.0);
                Self::make(node.level, s, eps)
            }
        }
    }

    pub fn abs(&self) -> Dual {
        if self.real() < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    pub fn powi(&self, exponent: i32) -> Dual {
        match self {
            Dual::Real(v) => Dual::Real(v.powi(exponent)),
            Dual::Nested(node) => {
                let value = node.re.powi(exponent);
                let slope = node.re.powi(exponent - 1) * f64::from(exponent);
                Self::make(node.level, value, slope * &node.eps)
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            Dual::Real(v) => v.is_finite(),
            Dual::Nested(node) => node.re.all_finite() && node.eps.all_finite(),
        }
    }
}

impl Scalar for Dual {
    fn from_f64(value: f64) -> Self {
        Dual::Real(value)
    }
    fn value(&self) -> f64 {
        self.real()
    }
    fn all_finite(&self) -> bool {
        Dual::all_finite(self)
    }
    fn has_tangent(&self) -> bool {
        matches!(self, Dual::Nested(_))
    }
    fn sin(&self) -> Self {
        Dual::sin(self)
    }
    fn cos(&self) -> Self {
        Dual::cos(self)
    }
    fn tan(&self) -> Self {
        Dual::tan(self)
    }
    fn exp(&self) -> Self {
        Dual::exp(self)
    }
    fn ln(&self) -> Self {
        Dual::ln(self)
    }
    fn sqrt(&self) -> Self {
        Dual::sqrt(self)
    }
    fn abs(&self) -> Self {
        Dual::abs(self)
    }
    fn powi(&self, exponent: i32) -> Self {
        Dual::powi(self, exponent)
    }
}

fn add(a: &Dual, b: &Dual) -> Dual {
    match (a, b) {
        (Dual::Real(x), Dual::Real(y)) => Dual::Real(x + y),
        _ => {
            let level = Dual::top_level(a, b);
            let (ar, ae) = a.split(level);
            let (br, be) = b.split(level);
            Dual::make(level, add(&ar, &br), add(&ae, &be))
        }
    }
}

fn sub(a: &Dual, b: &Dual) -> Dual {
    match (a, b) {
        (Dual::Real(x), Dual::Real(y)) => Dual::Real(x - y),
        _ => {
            let level = Dual::top_level(a, b);
            let (ar, ae) = a.split(level);
            let (br, be) = b.split(level);
            Dual::make(level, sub(&ar, &br), sub(&ae, &be))
        }
    }
}

fn neg(a: &Dual) -> Dual {
    match a {
        Dual::Real(x) => Dual::Real(-x),
        Dual::Nested(node) => Dual::make(node.level, neg(&node.re), neg(&node.eps)),
    }
}

fn mul(a: &Dual, b: &Dual) -> Dual {
    match (a, b) {
        (Dual::Real(x), Dual::Real(y)) => Dual::Real(x * y),
        _ => {
            let level = Dual::top_level(a, b);
            let (ar, ae) = a.split(level);
            let (br, be) = b.split(level);
            let re = mul(&ar, &br);
            let eps = match (ae.is_exact_zero(), be.is_exact_zero()) {
                (true, true) => Dual::ZERO,
                (true, false) => mul(&ar, &be),
                (false, true) => mul(&ae, &br),
                (false, false) => add(&mul(&ar, &be), &mul(&ae, &br)),
            };
            Dual::make(level, re, eps)
        }
    }
}

fn div(a: &Dual, b: &Dual) -> Dual {
    match (a, b) {
        (Dual::Real(x), Dual::Real(y)) => Dual::Real(x / y),
        _ => {
            let level = Dual::top_level(a, b);
            let (ar, ae) = a.split(level);
            let (br, be) = b.split(level);
            let q = div(&ar, &br);
            // (a/b)' = (a' - q b') / b
            let eps = if be.is_exact_zero() {
                div(&ae, &br)
            } else {
                div(&sub(&ae, &mul(&q, &be)), &br)
            };
            Dual::make(level, q, eps)
        }
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $func:ident) => {
        impl $trait<Dual> for Dual {
            type Output = Dual;
            fn $method(self, rhs: Dual) -> Dual {
                $func(&self, &rhs)
            }
        }
        impl<'a> $trait<&'a Dual> for Dual {
            type Output = Dual;
            fn $method(self, rhs: &'a Dual) -> Dual {
                $func(&self, rhs)
            }
        }
        impl<'a> $trait<Dual> for &'a Dual {
            type Output = Dual;
            fn $method(self, rhs: Dual) -> Dual {
                $func(self, &rhs)
            }
        }
        impl<'a, 'b> $trait<&'b Dual> for &'a Dual {
            type Output = Dual;
            fn $method(self, rhs: &'b Dual) -> Dual {
                $func(self, rhs)
            }
        }
        impl $trait<f64> for Dual {
            type Output = Dual;
            fn $method(self, rhs: f64) -> Dual {
                $func(&self, &Dual::Real(rhs))
            }
        }
        impl<'a> $trait<f64> for &'a Dual {
            type Output = Dual;
            fn $method(self, rhs: f64) -> Dual {
                $func(self, &Dual::Real(rhs))
            }
        }
        impl $trait<Dual> for f64 {
            type Output = Dual;
            fn $method(self, rhs: Dual) -> Dual {
                $func(&Dual::Real(self), &rhs)
            }
        }
        impl<'a> $trait<&'a Dual> for f64 {
            type Output = Dual;
            fn $method(self, rhs: &'a Dual) -> Dual {
                $func(&Dual::Real(self), rhs)
            }
        }
    };
}

forward_binop!(Add, add, add);
forward_binop!(Sub, sub, sub);
forward_binop!(Mul, mul, mul);
forward_binop!(Div, div, div);

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        neg(&self)
    }
}

impl Neg for &Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        neg(self)
    }
}

impl AddAssign<&Dual> for Dual {
    fn add_assign(&mut self, rhs: &Dual) {
        *self = add(self, rhs);
    }
}

impl AddAssign<Dual> for Dual {
    fn add_assign(&mut self, rhs: Dual) {
        *self = add(self, &rhs);
    }
}

impl SubAssign<Dual> for Dual {
    fn sub_assign(&mut self, rhs: Dual) {
        *self = sub(self, &rhs);
    }
}

impl MulAssign<&Dual> for Dual {
    fn mul_assign(&mut self, rhs: &Dual) {
        *self = mul(self, rhs);
    }
}

/// Lifts a real vector to constant duals.
pub fn lift(point: &[f64]) -> Vec<Dual> {
    point.iter().copied().map(Dual::Real).collect()
}

/// Innermost real parts of a dual vector.
pub fn reals(values: &[Dual]) -> Vec<f64> {
    values.iter().map(Dual::real).collect()
}

fn max_level(values: &[Dual]) -> u32 {
    values.iter().map(Dual::level).max().unwrap_or(0)
}

/// Seeds `point + ε·direction` with ε one level above every input component.
/// Returns the seeded point and the new level.
pub fn seed(point: &[Dual], direction: &[Dual]) -> (Vec<Dual>, u32) {
    assert_eq!(point.len(), direction.len(), "point/direction dimension mismatch");
    let level = max_level(point).max(max_level(direction)) + 1;
    let seeded = point
        .iter()
        .zip(direction)
        .map(|(x, v)| Dual::make(level, x.clone(), v.clone()))
        .collect();
    (seeded, level)
}

fn axis(n: usize, i: usize) -> Vec<Dual> {
    let mut e = vec![Dual::ZERO; n];
    e[i] = Dual::Real(1.0);
    e
}

/// Value and directional derivative of `f` at `point` along `direction`.
pub fn value_and_directional<F, E>(f: F, point: &[Dual], direction: &[Dual]) -> Result<(Dual, Dual), E>
where
    F: FnOnce(&[Dual]) -> Result<Dual, E>,
{
    let (seeded, level) = seed(point, direction);
    let out = f(&seeded)?;
    Ok(out.split(level))
}

/// Exact forward-mode directional derivative `∇f(point)·direction`.
pub fn directional_derivative<F, E>(f: F, point: &[Dual], direction: &[Dual]) -> Result<Dual, E>
where
    F: FnOnce(&[Dual]) -> Result<Dual, E>,
{
    value_and_directional(f, point, direction).map(|(_, d)| d)
}

pub fn gradient<F, E>(f: F, point: &[Dual]) -> Result<Vec<Dual>, E>
where
    F: Fn(&[Dual]) -> Result<Dual, E>,
{
    let n = point.len();
    (0..n)
        .map(|i| directional_derivative(&f, point, &axis(n, i)))
        .collect()
}

/// Jacobian of a vector function; row `i` is the gradient of component `i`.
pub fn jacobian<F, E>(f: F, point: &[Dual]) -> Result<Vec<Vec<Dual>>, E>
where
    F: Fn(&[Dual]) -> Result<Vec<Dual>, E>,
{
    let n = point.len();
    let mut rows: Vec<Vec<Dual>> = Vec::new();
    for j in 0..n {
        let (seeded, level) = seed(point, &axis(n, j));
        let out = f(&seeded)?;
        if rows.is_empty() {
            rows = vec![vec![Dual::ZERO; n]; out.len()];
        }
        for (row, component) in rows.iter_mut().zip(&out) {
            row[j] = component.tangent(level);
        }
    }
    Ok(rows)
}

/// Symmetrized Hessian computed by differentiating twice through nested duals.
pub fn hessian<F, E>(f: F, point: &[Dual]) -> Result<Vec<Vec<Dual>>, E>
where
    F: Fn(&[Dual]) -> Result<Dual, E>,
{
    let n = point.len();
    let mut h = vec![vec![Dual::ZERO; n]; n];
    for i in 0..n {
        let row = gradient(|y: &[Dual]| directional_derivative(&f, y, &axis(n, i)), point)?;
        for (j, entry) in row.into_iter().enumerate() {
            h[i][j] = entry;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (&h[i][j] + &h[j][i]) * 0.5;
            h[i][j] = avg.clone();
            h[j][i] = avg;
        }
    }
    Ok(h)
}

/// Plain-`f64` entry points.
pub mod real {
    use super::{lift, Dual};

    pub fn directional_derivative<F, E>(f: F, point: &[f64], direction: &[f64]) -> Result<f64, E>
    where
        F: FnOnce(&[Dual]) -> Result<Dual, E>,
    {
        super::directional_derivative(f, &lift(point), &lift(direction)).map(|d| d.real())
    }

    pub fn gradient<F, E>(f: F, point: &[f64]) -> Result<Vec<f64>, E>
    where
        F: Fn(&[Dual]) -> Result<Dual, E>,
    {
        super::gradient(f, &lift(point)).map(|g| g.iter().map(Dual::real).collect())
    }

    pub fn jacobian<F, E>(f: F, point: &[f64]) -> Result<Vec<Vec<f64>>, E>
    where
        F: Fn(&[Dual]) -> Result<Vec<Dual>, E>,
    {
        super::jacobian(f, &lift(point))
            .map(|rows| rows.iter().map(|r| r.iter().map(Dual::real).collect()).collect())
    }

    pub fn hessian<F, E>(f: F, point: &[f64]) -> Result<Vec<Vec<f64>>, E>
    where
        F: Fn(&[Dual]) -> Result<Dual, E>,
    {
        super::hessian(f, &lift(point))
            .map(|rows| rows.iter().map(|r| r.iter().map(Dual::real).collect()).collect())
    }
}

/// Central finite differences, kept independent of the dual arithmetic so
/// they can serve as a cross-check.
pub mod finite_diff {
    /// Step for first-order central differences.
    pub const FIRST_ORDER_STEP: f64 = 1e-5;
    /// Step for second-order central differences.
    pub const SECOND_ORDER_STEP: f64 = 1e-4;

    pub fn directional<F, E>(f: F, point: &[f64], direction: &[f64], h: f64) -> Result<f64, E>
    where
        F: Fn(&[f64]) -> Result<f64, E>,
    {
        let plus: Vec<f64> = point.iter().zip(direction).map(|(x, v)| x + h * v).collect();
        let minus: Vec<f64> = point.iter().zip(direction).map(|(x, v)| x - h * v).collect();
        Ok((f(&plus)? - f(&minus)?) / (2.0 * h))
    }

    pub fn gradient<F, E>(f: F, point: &[f64], h: f64) -> Result<Vec<f64>, E>
    where
        F: Fn(&[f64]) -> Result<f64, E>,
    {
        let n = point.len();
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                directional(&f, point, &e, h)
            })
            .collect()
    }

    pub fn jacobian<F, E>(f: F, point: &[f64], h: f64) -> Result<Vec<Vec<f64>>, E>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>, E>,
    {
        let n = point.len();
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut plus = point.to_vec();
            let mut minus = point.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let fp = f(&plus)?;
            let fm = f(&minus)?;
            cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
        }
        let m = cols.first().map_or(0, Vec::len);
        Ok((0..m).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
    }

    /// Second partials from the four-point central stencil.
    pub fn hessian<F, E>(f: F, point: &[f64], h: f64) -> Result<Vec<Vec<f64>>, E>
    where
        F: Fn(&[f64]) -> Result<f64, E>,
    {
        let n = point.len();
        let shifted = |i: usize, si: f64, j: usize, sj: f64| {
            let mut p = point.to_vec();
            p[i] += si * h;
            p[j] += sj * h;
            f(&p)
        };
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = (shifted(i, 1.0, j, 1.0)? - shifted(i, 1.0, j, -1.0)?
                    - shifted(i, -1.0, j, 1.0)?
                    + shifted(i, -1.0, j, -1.0)?)
                    / (4.0 * h * h);
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn ok<T>(v: T) -> Result<T, Infallible> {
        Ok(v)
    }

    #[test]
    fn product_rule_on_axis() {
        let d = real::directional_derivative(|x: &[Dual]| ok(&x[0] * &x[1]), &[2.0, 3.0], &[1.0, 0.0]).unwrap();
        assert_eq!(d, 3.0);
    }

    #[test]
    fn sin_slope_at_zero() {
        let d = real::directional_derivative(|x: &[Dual]| ok(x[0].sin()), &[0.0], &[1.0]).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn gradient_of_squares() {
        let g = real::gradient(|x: &[Dual]| ok(&x[0] * &x[0] + &x[1] * &x[1]), &[1.0, 2.0]).unwrap();
        assert_eq!(g, vec![2.0, 4.0]);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = real::gradient(|_: &[Dual]| ok(Dual::constant(7.0)), &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn jacobian_of_identity() {
        let j = real::jacobian(|x: &[Dual]| ok(x.to_vec()), &[0.3, -1.0, 2.0]).unwrap();
        for (i, row) in j.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == k { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn hessian_of_bilinear() {
        let h = real::hessian(|x: &[Dual]| ok(&x[0] * &x[1]), &[0.7, -0.2]).unwrap();
        assert_eq!(h, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn hessian_of_half_square() {
        let h = real::hessian(|x: &[Dual]| ok(&x[0] * &x[0] * 0.5), &[4.0]).unwrap();
        assert_eq!(h, vec![vec![1.0]]);
    }

    #[test]
    fn square_of_dual() {
        let x = Dual::variable(Dual::Real(3.0), Dual::Real(1.0));
        let y = &x * &x;
        assert_eq!(y.split(1), (Dual::Real(9.0), Dual::Real(6.0)));
    }

    #[test]
    fn outer_constant_does_not_leak_into_inner_derivative() {
        // d/dx [ x * d/dy (x + y) ] = 1 at any x; confusing the two
        // perturbations would give 2.
        let outer = |x: &[Dual]| -> Result<Dual, Infallible> {
            let inner = directional_derivative(
                |y: &[Dual]| ok(&x[0] + &y[0]),
                &[x[0].clone()],
                &[Dual::Real(1.0)],
            )?;
            ok(&x[0] * inner)
        };
        let d = real::directional_derivative(outer, &[5.0], &[1.0]).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn nested_third_derivative_of_cube() {
        // d³/dx³ x³ = 6, three levels deep.
        let f = |x: &[Dual]| ok(x[0].powi(3));
        let d1 = |x: &[Dual]| directional_derivative(f, x, &[Dual::Real(1.0)]);
        let d2 = |x: &[Dual]| directional_derivative(d1, x, &[Dual::Real(1.0)]);
        let d3 = real::directional_derivative(d2, &[1.7], &[1.0]).unwrap();
        assert!((d3 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn quotient_and_transcendentals_match_finite_differences() {
        let ad = |x: &[Dual]| ok((x[0].exp() * x[1].cos() + x[0].sqrt()) / (x[1].tan() + 3.0) - x[0].ln());
        let fd = |x: &[f64]| ok((x[0].exp() * x[1].cos() + x[0].sqrt()) / (x[1].tan() + 3.0) - x[0].ln());
        let p = [0.8, 0.4];
        let g = real::gradient(ad, &p).unwrap();
        let g_fd = finite_diff::gradient(fd, &p, finite_diff::FIRST_ORDER_STEP).unwrap();
        for (a, b) in g.iter().zip(&g_fd) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let h = real::hessian(ad, &p).unwrap();
        let h_fd = finite_diff::hessian(fd, &p, finite_diff::SECOND_ORDER_STEP).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[i][j] - h_fd[i][j]).abs() < 1e-4 * h[i][j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_tangent_collapses() {
        let x = Dual::variable(Dual::Real(2.0), Dual::Real(0.0));
        assert_eq!(x, Dual::Real(2.0));
    }
}
