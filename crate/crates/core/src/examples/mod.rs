//! Built-in systems: a synchronous generator on an infinite bus and two small
//! pedagogical loops.
//!
//! The closed forms in [`oracles`] are written out by hand in plain `f64` and
//! share no code with synthesis, so agreement between the two is evidence.

pub mod oracles;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_3;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::parse;
use crate::model::{Interval, ParametricStrictFeedbackSystem, StrictFeedbackSystem};

/// Generator model constants. The composites (`E = D/2H`, `I = 1/T'`, ...)
/// are taken directly as values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct GeneratorParameters {
    pub E: f64,
    pub F: f64,
    pub G_gen: f64,
    pub I: f64,
    pub J: f64,
    pub Vs: f64,
    pub Kc: f64,
    pub delta0: f64,
    pub eq0: f64,
    pub Pm0: f64,
}

impl Default for GeneratorParameters {
    fn default() -> Self {
        Self { E: 1.0, F: 1.0, G_gen: -1.0, I: 1.0, J: 1.0, Vs: 1.0, Kc: 1.0, delta0: FRAC_PI_3, eq0: 1.0, Pm0: 1.0 }
    }
}

impl GeneratorParameters {
    /// Values bound to the identifiers used in the model expressions.
    pub fn bindings(&self) -> BTreeMap<String, f64> {
        [
            ("E", self.E),
            ("F", self.F),
            ("G_gen", self.G_gen),
            ("I", self.I),
            ("J", self.J),
            ("Vs", self.Vs),
            ("Kc", self.Kc),
            ("d0", self.delta0),
            ("eq0", self.eq0),
            ("Pm0", self.Pm0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn validate(&self) -> Result<()> {
        let named = [
            ("E", self.E),
            ("F", self.F),
            ("G_gen", self.G_gen),
            ("I", self.I),
            ("J", self.J),
            ("Vs", self.Vs),
            ("Kc", self.Kc),
            ("delta0", self.delta0),
            ("eq0", self.eq0),
            ("Pm0", self.Pm0),
        ];
        if let Some((k, _)) = named.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSystem(format!("generator parameter {k} must be finite")));
        }
        if self.Vs * self.G_gen == 0.0 {
            return Err(Error::InvalidSystem("generator requires Vs·G_gen ≠ 0".into()));
        }
        if self.I == 0.0 || self.Kc == 0.0 {
            return Err(Error::InvalidSystem("generator requires I ≠ 0 and Kc ≠ 0".into()));
        }
        Ok(())
    }
}

pub fn generator_box() -> Vec<Interval> {
    vec![Interval::new(-0.8, 0.8), Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0)]
}

/// The 3-state generator with the default box. Fails when a gain vanishes on
/// the box, e.g. `sin(δ0 + x1) = 0`.
pub fn generator_system(params: &GeneratorParameters) -> Result<StrictFeedbackSystem> {
    generator_system_on(params, generator_box())
}

pub fn generator_system_on(params: &GeneratorParameters, bounds: Vec<Interval>) -> Result<StrictFeedbackSystem> {
    params.validate()?;
    let drift = ["0", "-E*x2 + F*Pm0 + Vs*G_gen*eq0*sin(d0 + x1)", "-I*x3 + J*Vs*sin(d0 + x1)*x2 - I*eq0"];
    let gains = ["1", "Vs*G_gen*sin(d0 + x1)", "I*Kc"];
    StrictFeedbackSystem::new(
        drift.iter().map(|s| parse(s)).collect::<Result<_, _>>()?,
        gains.iter().map(|s| parse(s)).collect::<Result<_, _>>()?,
        params.bindings(),
        bounds,
    )
}

/// `ẋ = u`.
pub fn scalar_demo() -> ParametricStrictFeedbackSystem {
    ParametricStrictFeedbackSystem::new(
        vec![parse("0").expect("literal")],
        vec![],
        parse("1").expect("literal"),
        BTreeMap::new(),
        vec![Interval::new(-1.0, 1.0)],
    )
    .expect("scalar demo is valid")
}

/// `ẋ1 = sin(x1) + x2`, `ẋ2 = u`.
pub fn two_state_demo() -> ParametricStrictFeedbackSystem {
    ParametricStrictFeedbackSystem::new(
        vec![parse("sin(x1)").expect("literal"), parse("0").expect("literal")],
        vec![1.0],
        parse("1").expect("literal"),
        BTreeMap::new(),
        vec![Interval::new(-1.0, 1.0); 2],
    )
    .expect("two-state demo is valid")
}

/// Name → shared system, as exposed by the command line.
pub enum Builtin {
    Generator(Arc<StrictFeedbackSystem>),
    Parametric(Arc<ParametricStrictFeedbackSystem>),
}

pub const BUILTIN_NAMES: [&str; 3] = ["generator", "scalar-demo", "two-state-demo"];

pub fn builtin(name: &str) -> Option<Builtin> {
    match name {
        "generator" => Some(Builtin::Generator(Arc::new(
            generator_system(&GeneratorParameters::default()).expect("default generator is valid"),
        ))),
        "scalar-demo" => Some(Builtin::Parametric(Arc::new(scalar_demo()))),
        "two-state-demo" => Some(Builtin::Parametric(Arc::new(two_state_demo()))),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{lift, reals, Dual};
    use crate::model::VectorField;
    use crate::synthesis::{strict_feedback_controller, synthesize};

    #[test]
    fn generator_field_at_origin() {
        let p = GeneratorParameters::default();
        let sys = generator_system(&p).unwrap();
        let f = sys.eval_real(&[0.0; 3], 0.0).unwrap();
        let expected = [0.0, p.F * p.Pm0 + p.Vs * p.G_gen * p.eq0 * p.delta0.sin(), -p.I * p.eq0];
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn first_component_is_x2() {
        let sys = generator_system(&GeneratorParameters::default()).unwrap();
        for x in [[0.1, -0.7, 0.3], [0.5, 0.25, -1.0]] {
            assert_eq!(sys.eval_real(&x, 3.0).unwrap()[0], x[1]);
        }
    }

    #[test]
    fn invalid_generator_parameters() {
        let p = GeneratorParameters { Kc: 0.0, ..Default::default() };
        assert!(generator_system(&p).is_err());
        // sin(δ0 + x1) vanishes at x1 = -π/3, inside [-1.2, 1]
        let p = GeneratorParameters::default();
        let mut b = generator_box();
        b[0] = Interval::new(-1.2, 1.0);
        assert!(generator_system_on(&p, b).is_err());
    }

    #[test]
    fn control_at_origin_matches_hand_value() {
        let sys = Arc::new(generator_system(&GeneratorParameters::default()).unwrap());
        let ctrl = strict_feedback_controller(sys, 2.0).unwrap();
        let k = ctrl.control_law(&lift(&[0.0; 3]), &Dual::Real(0.0)).unwrap().real();
        // hand evaluation of the printed law with default parameters
        assert!((k - 1.3094010767585031).abs() < 1e-14, "{k}");
    }

    #[test]
    fn scalar_demo_law() {
        let ctrl = synthesize(Arc::new(scalar_demo()), 3.0).unwrap();
        for (x, u) in [(0.4, 0.0), (-0.9, 1.5)] {
            assert_eq!(ctrl.control_law(&[Dual::Real(x)], &Dual::Real(u)).unwrap().real(), -1.5 * x + u);
        }
    }

    #[test]
    fn two_state_metric_block_form() {
        let lambda = 2.0;
        let ctrl = synthesize(Arc::new(two_state_demo()), lambda).unwrap();
        let x = [0.3, -0.2];
        let g = reals(&ctrl.metric_recursive(&lift(&x)).unwrap().concat());
        // φ1 = -(λ/2)x1 - sin x1
        let a = -lambda / 2.0 - x[0].cos();
        let expected = [1.0 + a * a, -a, -a, 1.0];
        for (v, e) in g.iter().zip(expected) {
            assert!((v - e).abs() < 1e-14);
        }
    }

    #[test]
    fn builtins_resolve() {
        for name in BUILTIN_NAMES {
            assert!(builtin(name).is_some());
        }
        assert!(builtin("pendulum").is_none());
    }
}
