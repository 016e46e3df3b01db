use std::sync::Arc;

use deltabk::autodiff::{lift, reals, Dual};
use deltabk::examples::{generator_box, generator_system, scalar_demo, two_state_demo, GeneratorParameters};
use deltabk::expr::parse;
use deltabk::model::{Interval, ParametricStrictFeedbackSystem, VectorField};
use deltabk::sim::{self, InputSignal, PairTolerances};
use deltabk::synthesis::{strict_feedback_controller, synthesize, MetricField, SynthesizedController};
use deltabk::verify::{self, RegionOptions, Tolerances};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn generator_ctrl() -> SynthesizedController {
    strict_feedback_controller(Arc::new(generator_system(&GeneratorParameters::default()).unwrap()), 2.0).unwrap()
}

fn in_box(rng: &mut ChaCha8Rng, bounds: &[Interval]) -> Vec<f64> {
    bounds.iter().map(|b| rng.random_range(b.lo..b.hi)).collect()
}

#[test]
fn identical_initial_states_stay_at_zero_distance() {
    let ctrl = generator_ctrl();
    let x = [0.1, -0.3, 0.2];
    let u = InputSignal::schedule(vec![(0.0, 0.3), (0.5, -0.1)]).unwrap();
    let r = sim::gas_decay_check(&ctrl, &ctrl.closed_loop(), &x, &x, &u, 1.0, 1e-3, PairTolerances::default(), None)
        .unwrap();
    assert!(r.distances.iter().all(|d| *d == 0.0));
    assert!(r.pass);
}

#[test]
fn scalar_pair_decays_exactly() {
    let ctrl = synthesize(Arc::new(scalar_demo()), 2.0).unwrap();
    let u = InputSignal::expression(&parse("0.3*sin(2*t)").unwrap()).unwrap();
    let r = sim::gas_decay_check(&ctrl, &ctrl.closed_loop(), &[0.8], &[-0.5], &u, 3.0, 1e-3, PairTolerances::default(), None)
        .unwrap();
    for (t, d) in r.times.iter().zip(&r.distances) {
        assert!((d / r.initial_distance - (-t).exp()).abs() <= 1e-9);
    }
}

#[test]
fn generator_step_input_respects_iss_bound() {
    let ctrl = generator_ctrl();
    let zero = InputSignal::zero();
    let step = InputSignal::constant(0.1);
    let x = [0.2, -0.4, 0.1];
    let r = sim::iss_bound_check(&ctrl, &ctrl.closed_loop(), &x, &[-0.1, 0.3, 0.5], &zero, &step, 5.0, 1e-3, PairTolerances::default(), None)
        .unwrap();
    assert!(r.pass && r.min_bound_margin >= 0.0);
}

#[test]
fn equal_states_constant_input_gap_follows_envelope() {
    // z-space solution: d(t) = ‖∫ e^{(S - I)(t-s)} e_n c ds‖ ≤ (2/λ)(1 - e^{-λt/2})|c|
    let ctrl = generator_ctrl();
    let c = 0.2;
    let x = [0.0, 0.1, -0.1];
    let r = sim::iss_bound_check(&ctrl, &ctrl.closed_loop(), &x, &x, &InputSignal::zero(), &InputSignal::constant(c), 4.0, 1e-3, PairTolerances::default(), None)
        .unwrap();
    assert_eq!(r.initial_distance, 0.0);
    for (t, d) in r.times.iter().zip(&r.distances) {
        assert!(*d <= (1.0 - (-t).exp()) * c + 1e-6);
    }
}

#[test]
fn randomized_iss_suite() {
    let ctrl = generator_ctrl();
    let field = ctrl.closed_loop();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let bounds = generator_box();
    let cases: Vec<_> = (0..50)
        .map(|_| {
            let a = in_box(&mut rng, &bounds);
            let b = in_box(&mut rng, &bounds);
            let k = rng.random_range(1..2000) as f64 * 1e-3;
            let u = InputSignal::schedule(vec![(0.0, rng.random_range(-0.5..0.5)), (k, rng.random_range(-0.5..0.5))]).unwrap();
            let v = InputSignal::constant(rng.random_range(-0.5..0.5));
            (a, b, u, v)
        })
        .collect();
    let failures: Vec<usize> = cases
        .par_iter()
        .enumerate()
        .filter_map(|(i, (a, b, u, v))| {
            let r = sim::iss_bound_check(&ctrl, &field, a, b, u, v, 2.0, 1e-3, PairTolerances::default(), None);
            match r {
                Ok(r) if r.pass => None,
                _ => Some(i),
            }
        })
        .collect();
    assert!(failures.is_empty(), "ISS bound violated for pairs {failures:?}");
}

#[test]
fn generator_csv_fixture() {
    let ctrl = generator_ctrl();
    let r = sim::integrate(&ctrl.closed_loop(), &[0.3, 0.2, -0.1], &InputSignal::constant(0.05), 0.01, 1e-3, None).unwrap();
    let text = sim::export_csv(&r);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,x3,u"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|l| l.split(',').count() == 5));
    assert!(rows[0].starts_with(&format!("{:.16e},{:.16e},", 0.0, 0.3)), "{}", rows[0]);
    let back = deltabk::sim::TrajectoryRecord::from_csv(&text).unwrap();
    assert_eq!(back.states, r.states);
}

#[test]
fn open_loop_fails_contraction() {
    // without feedback the scalar integrator does not contract at any λ > 0
    struct Integrator;
    impl VectorField for Integrator {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, _: &[Dual], u: &Dual) -> deltabk::Result<Vec<Dual>> {
            Ok(vec![u.clone()])
        }
    }
    let opts = RegionOptions {
        bounds: vec![Interval::new(-1.0, 1.0)],
        input: Interval::new(-1.0, 1.0),
        samples: 10,
        seed: 1,
        tolerances: Tolerances::default(),
    };
    let r = verify::verify_region(&Integrator, &deltabk::synthesis::IdentityMetric(1), 2.0, 2.0, &opts, None).unwrap();
    assert!(!r.pass && !r.checks.contraction);
}

#[test]
fn two_state_demo_certifies() {
    let ctrl = synthesize(Arc::new(two_state_demo()), 1.5).unwrap();
    let opts = RegionOptions {
        bounds: vec![Interval::new(-1.0, 1.0); 2],
        input: Interval::new(-1.0, 1.0),
        samples: 500,
        seed: 4,
        tolerances: Tolerances::default(),
    };
    let r = verify::verify_region(&ctrl.closed_loop(), &ctrl.recursive_metric(), 1.5, 2.0, &opts, None).unwrap();
    assert!(r.pass, "{}", r.to_table());
}

fn random_parametric(rng: &mut ChaCha8Rng, n: usize) -> ParametricStrictFeedbackSystem {
    let terms = ["sin(x{i})", "x{i}^2", "cos(x{j})*x{i}", "x{j}*x{i}", "exp(0.3*x{i})"];
    let drift = (1..=n)
        .map(|l| {
            let j = rng.random_range(1..=l);
            let t = terms[rng.random_range(0..terms.len())].replace("{i}", &l.to_string()).replace("{j}", &j.to_string());
            parse(&format!("{:.3}*{t}", rng.random_range(-1.0..1.0))).unwrap()
        })
        .collect();
    let coupling = (1..n).map(|_| rng.random_range(0.5..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    ParametricStrictFeedbackSystem::new(
        drift,
        coupling,
        parse("2 + sin(x1)").unwrap(),
        Default::default(),
        vec![Interval::new(-1.0, 1.0); n],
    )
    .unwrap()
}

#[test]
fn random_systems_contract_with_zero_defect() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 1..=4 {
        for _ in 0..3 {
            let sys = Arc::new(random_parametric(&mut rng, n));
            let lambda = rng.random_range(0.5..3.0);
            let ctrl = synthesize(sys, lambda).unwrap();
            let opts = RegionOptions {
                bounds: vec![Interval::new(-1.0, 1.0); n],
                input: Interval::new(-1.0, 1.0),
                samples: 100,
                seed: n as u64,
                tolerances: Tolerances::default(),
            };
            let r = verify::verify_region(&ctrl.closed_loop(), &ctrl.recursive_metric(), lambda, 2.0, &opts, None).unwrap();
            assert!(r.pass, "n = {n}\n{}", r.to_table());
            // both metric constructions coincide and have unit determinant
            let x: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.2).collect();
            let a = ctrl.recursive_metric().eval_real(&x).unwrap();
            let b = ctrl.psi_metric().eval_real(&x).unwrap();
            assert!((&a - &b).amax() < 1e-10 * a.amax());
            assert!((a.determinant() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn error_coordinates_are_linear_along_the_loop() {
    // ż = (S - λ/2 I) z + e_n û with S skew: check via directional derivatives
    let ctrl = generator_ctrl();
    let x = [0.2, 0.1, -0.3];
    let input = 0.4;
    let f = ctrl.closed_loop().eval_real(&x, input).unwrap();
    let (seeded, level) = deltabk::autodiff::seed(&lift(&x), &lift(&f));
    let z = ctrl.error_coordinates(&seeded).unwrap();
    let zdot: Vec<f64> = z.iter().map(|c| c.tangent(level).real()).collect();
    let z0 = reals(&ctrl.error_coordinates(&lift(&x)).unwrap());
    let s_z: Vec<f64> = (0..3).map(|i| zdot[i] + z0[i] - if i == 2 { input } else { 0.0 }).collect();
    // S z must be orthogonal to z
    let dot: f64 = s_z.iter().zip(&z0).map(|(a, b)| a * b).sum();
    assert!(dot.abs() < 1e-12, "{dot}");
}

fn spd(values: &[f64], n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(n, n, &values[..n * n]);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Whenever the eigenvalue reduction certifies, no sampled (X, Y) violates
    /// the bilinear inequality.
    #[test]
    fn reduction_is_sound(
        n in 1usize..=4,
        g in proptest::collection::vec(-1.0f64..1.0, 16),
        r in proptest::collection::vec(-0.5f64..0.5, 16),
        b in proptest::collection::vec(-1.0f64..1.0, 4),
        shift in -1.5f64..0.5,
        alpha in 0.1f64..3.0,
        seed in any::<u64>(),
    ) {
        let g = spd(&g, n);
        let r = DMatrix::from_row_slice(n, n, &r[..n * n]);
        let a = (&r + r.transpose()) * 0.5 + DMatrix::identity(n, n) * shift;
        let b = DMatrix::from_column_slice(n, 1, &b[..n]);
        let certified = verify::max_eigenvalue(&a).unwrap() <= 0.0 && verify::input_margin(&g, &b, alpha).unwrap() >= 0.0;
        prop_assume!(certified);
        let gb = &g * &b;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10_000 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let y: f64 = rng.random_range(-1.0..1.0) * 10f64.powf(rng.random_range(-3.0..3.0));
            let lhs = (x.transpose() * &a * &x)[(0, 0)] + 2.0 * y * gb.column(0).dot(&x);
            let rhs = alpha * (x.transpose() * &g * &x)[(0, 0)].sqrt() * y.abs();
            prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()));
        }
    }
}
