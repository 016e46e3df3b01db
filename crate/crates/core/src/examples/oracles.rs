//! Hand transcriptions of the generator closed forms, in plain `f64`.
//!
//! Deliberately independent of the expression, autodiff and synthesis code.

use nalgebra::Matrix3;

use super::GeneratorParameters;
use crate::error::{DomainError, Result};

fn vsg(p: &GeneratorParameters) -> f64 {
    p.Vs * p.G_gen
}

/// Open-loop generator field.
pub fn generator_field(p: &GeneratorParameters, x: [f64; 3], u: f64) -> [f64; 3] {
    let s = (p.delta0 + x[0]).sin();
    [
        x[1],
        -p.E * x[1] + p.F * p.Pm0 + vsg(p) * p.eq0 * s + vsg(p) * s * x[2],
        -p.I * x[2] + p.J * p.Vs * s * x[1] - p.I * p.eq0 + p.I * p.Kc * u,
    ]
}

/// `η = (ξ1, ξ2, Vs·G·sin(δ0 + ξ1)·ξ3)`.
pub fn coordinate_map(p: &GeneratorParameters, x: [f64; 3]) -> [f64; 3] {
    [x[0], x[1], vsg(p) * (p.delta0 + x[0]).sin() * x[2]]
}

/// Jacobian of [`coordinate_map`].
pub fn theta(p: &GeneratorParameters, x: [f64; 3]) -> Matrix3<f64> {
    let a = p.delta0 + x[0];
    Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, vsg(p) * a.cos() * x[2], 0.0, vsg(p) * a.sin())
}

/// Field in transformed coordinates.
pub fn transformed_field(p: &GeneratorParameters, y: [f64; 3], u: f64) -> Result<[f64; 3]> {
    let a = p.delta0 + y[0];
    let (s, c) = (a.sin(), a.cos());
    if s == 0.0 {
        return Err(DomainError::new("cot(δ0 + y1) undefined: sin(δ0 + y1) = 0").into());
    }
    Ok([
        y[1],
        -p.E * y[1] + p.F * p.Pm0 + vsg(p) * p.eq0 * s + y[2],
        -p.I * vsg(p) * p.eq0 * s + p.J * p.Vs * p.Vs * p.G_gen * s * s * y[1] - p.I * y[2]
            + (c / s) * y[1] * y[2]
            + p.I * p.Kc * vsg(p) * s * u,
    ])
}

/// Virtual control φ1 for λ = 2.
pub fn phi1(eta: [f64; 3]) -> f64 {
    -eta[0]
}

/// Virtual control φ2 for λ = 2.
pub fn phi2(p: &GeneratorParameters, eta: [f64; 3]) -> f64 {
    -2.0 * eta[0] + (p.E - 2.0) * eta[1] - p.F * p.Pm0 - vsg(p) * p.eq0 * (p.delta0 + eta[0]).sin()
}

/// Stage control k3 for λ = 2.
pub fn k3(p: &GeneratorParameters, eta: [f64; 3]) -> f64 {
    let a = p.delta0 + eta[0];
    let e = p.E;
    (-5.0 + 3.0 * e - e * e) * eta[1] - 3.0 * eta[0] + (e - 3.0) * eta[2]
        + (e - 3.0) * p.F * p.Pm0
        + (e - 3.0) * vsg(p) * p.eq0 * a.sin()
        - vsg(p) * p.eq0 * a.cos() * eta[1]
}

/// Feedback `k(η, û)` for λ = 2, term by term as printed.
pub fn printed_control_oracle(p: &GeneratorParameters, eta: [f64; 3], input: f64) -> Result<f64> {
    let a = p.delta0 + eta[0];
    let (s, c) = (a.sin(), a.cos());
    if s == 0.0 {
        return Err(DomainError::new("sin(δ0 + η1) = 0: control law undefined")
            .with_context(vec![("eta1".into(), eta[0])])
            .into());
    }
    let e = p.E;
    let denom = p.I * p.Kc * p.Vs * p.G_gen * s;
    let bracket = (-5.0 + 3.0 * e - e * e) * eta[1] - 3.0 * eta[0]
        + (e - 3.0 + p.I) * eta[2]
        + (e - 3.0) * p.F * p.Pm0
        + (e - 3.0 + p.I) * p.Vs * p.G_gen * p.eq0 * s
        - p.Vs * p.G_gen * p.eq0 * c * eta[1]
        - p.J * p.Vs * p.Vs * p.G_gen * s * s * eta[1]
        - (c / s) * eta[1] * eta[2];
    Ok(bracket / denom + input / denom)
}

/// The printed 3×3 metric for λ = 2.
pub fn printed_metric_oracle(p: &GeneratorParameters, y: [f64; 3]) -> Matrix3<f64> {
    let e = p.E;
    let c = p.Vs * p.G_gen * p.eq0 * (p.delta0 + y[0]).cos();
    let m11 = 2.0 + (2.0 + c) * (2.0 + c);
    let m12 = -2.0 * e + 5.0 - (e - 2.0) * c;
    let m13 = 2.0 + c;
    let m22 = (e - 2.0) * (e - 2.0) + 1.0;
    let m23 = 2.0 - e;
    Matrix3::new(m11, m12, m13, m12, m22, m23, m13, m23, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_metric_entries() {
        let p = GeneratorParameters { E: 0.7, ..Default::default() };
        for y1 in [-0.8, 0.0, 0.45] {
            let m = printed_metric_oracle(&p, [y1, 0.3, -0.2]);
            assert_eq!(m[(2, 2)], 1.0);
            assert_eq!(m[(1, 2)], 2.0 - 0.7);
            assert!((m.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_structure() {
        let p = GeneratorParameters::default();
        let t = theta(&p, [0.2, 0.5, -0.4]);
        for (i, j) in [(0, 1), (0, 2), (1, 0), (1, 2), (2, 1)] {
            assert_eq!(t[(i, j)], 0.0);
        }
        assert_eq!(t[(0, 0)], 1.0);
        assert_eq!(t[(1, 1)], 1.0);
    }

    #[test]
    fn oracle_law_is_consistent_with_its_parts() {
        // k = (k3 − h'_3) / g' + û / g'
        let p = GeneratorParameters { E: 1.3, I: 0.8, J: 0.6, ..Default::default() };
        let eta = [0.3, -0.4, 0.9];
        let drift3 = transformed_field(&p, eta, 0.0).unwrap()[2];
        let g = p.I * p.Kc * p.Vs * p.G_gen * (p.delta0 + eta[0]).sin();
        let k = printed_control_oracle(&p, eta, 0.25).unwrap();
        assert!((k - (k3(&p, eta) - drift3 + 0.25) / g).abs() < 1e-12);
    }

    #[test]
    fn transformed_field_is_pushforward() {
        let p = GeneratorParameters::default();
        let x = [0.1, 0.2, -0.3];
        let u = 0.7;
        let f = generator_field(&p, x, u);
        let tf = theta(&p, x) * nalgebra::Vector3::from(f);
        let direct = transformed_field(&p, coordinate_map(&p, x), u).unwrap();
        for i in 0..3 {
            assert!((tf[i] - direct[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn control_domain_error() {
        let p = GeneratorParameters { delta0: 0.0, ..Default::default() };
        assert!(printed_control_oracle(&p, [0.0; 3], 0.0).is_err());
    }
}
