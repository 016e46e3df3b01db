//! Fixed-step RK4 simulation of closed loops and trajectory-pair bound checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Compiled, Expression};
use crate::model::{Interval, VectorField};
use crate::synthesis::SynthesizedController;

/// Grid tolerance for snapping breakpoints and `t_end` to multiples of `h`.
const GRID_SNAP: f64 = 1e-9;

/// External input `û(t)`: a piecewise-constant schedule or an expression in `t`.
///
/// A schedule `[(t_0, v_0), (t_1, v_1), …]` holds `v_i` on `[t_i, t_{i+1})`
/// and `v_last` afterwards; before `t_0` the signal is zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SignalSpec", into = "SignalSpec")]
pub enum InputSignal {
    Schedule(Vec<(f64, f64)>),
    Expr { source: Expression, compiled: Compiled },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum SignalSpec {
    Schedule(Vec<(f64, f64)>),
    Expr(String),
}

impl TryFrom<SignalSpec> for InputSignal {
    type Error = Error;

    fn try_from(spec: SignalSpec) -> Result<Self> {
        match spec {
            SignalSpec::Schedule(points) => InputSignal::schedule(points),
            SignalSpec::Expr(src) => InputSignal::expression(&src.parse()?),
        }
    }
}

impl From<InputSignal> for SignalSpec {
    fn from(s: InputSignal) -> Self {
        match s {
            InputSignal::Schedule(points) => SignalSpec::Schedule(points),
            InputSignal::Expr { source, .. } => SignalSpec::Expr(source.to_string()),
        }
    }
}

impl PartialEq for InputSignal {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Schedule(a), Self::Schedule(b)) => a == b,
            (Self::Expr { source: a, .. }, Self::Expr { source: b, .. }) => a == b,
            _ => false,
        }
    }
}

impl InputSignal {
    pub fn zero() -> Self {
        Self::Schedule(vec![(0.0, 0.0)])
    }

    pub fn constant(value: f64) -> Self {
        Self::Schedule(vec![(0.0, value)])
    }

    pub fn schedule(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Signal("schedule needs at least one breakpoint".into()));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Signal("schedule entries must be finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Signal("schedule times must be strictly increasing".into()));
        }
        Ok(Self::Schedule(points))
    }

    /// Signal given by an expression whose only free variable is `t`.
    pub fn expression(source: &Expression) -> Result<Self> {
        if let Some(v) = source.free_variables().into_iter().find(|v| v != "t") {
            return Err(Error::Signal(format!("signal expression may only use `t`, found `{v}`")));
        }
        let compiled = source.compile(&["t".to_string()], &BTreeMap::new())?;
        Ok(Self::Expr { source: source.clone(), compiled })
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        match self {
            Self::Schedule(points) => {
                let idx = points.partition_point(|(ti, _)| *ti <= t);
                Ok(if idx == 0 { 0.0 } else { points[idx - 1].1 })
            }
            Self::Expr { compiled, .. } => compiled.eval(&[t]),
        }
    }

    /// Value fed to an RK4 stage at `t_k + offset`. Schedules are held at
    /// their step-start value so jumps fall exactly on grid boundaries.
    fn stage_value(&self, t_k: f64, offset: f64) -> Result<f64> {
        match self {
            Self::Schedule(_) => self.value(t_k),
            Self::Expr { .. } => self.value(t_k + offset),
        }
    }

    fn check_grid(&self, h: f64) -> Result<()> {
        if let Self::Schedule(points) = self {
            for (t, _) in points {
                let k = (t / h).round();
                if (k * h - t).abs() > GRID_SNAP * t.abs().max(1.0) {
                    return Err(Error::Signal(format!("breakpoint t = {t} is not a multiple of the step h = {h}")));
                }
            }
        }
        Ok(())
    }
}

/// `sup |û(t) − û′(t)|` over every value an integration on `[0, t_end]` with
/// step `h` applies.
pub fn sup_norm_difference(a: &InputSignal, b: &InputSignal, t_end: f64, h: f64) -> Result<f64> {
    let steps = grid_steps(t_end, h)?;
    let mut sup = 0.0f64;
    for k in 0..=steps {
        let t = k as f64 * h;
        for offset in [0.0, 0.5 * h, h] {
            sup = sup.max((a.stage_value(t, offset)? - b.stage_value(t, offset)?).abs());
        }
    }
    Ok(sup)
}

fn grid_steps(t_end: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be nonnegative, got {t_end}")));
    }
    let n = (t_end / h).round();
    if (n * h - t_end).abs() > GRID_SNAP * t_end.max(1.0) {
        return Err(Error::InvalidArgument(format!("t_end = {t_end} is not a multiple of h = {h}")));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

/// Where and why an integration stopped early.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeInfo {
    pub time: f64,
    pub reason: String,
}

/// States `x(t_k)` and applied inputs `û(t_k)` on the grid `t_k = k·h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub h: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<f64>,
    pub meta: RecordMeta,
    pub escape: Option<EscapeInfo>,
}

impl TrajectoryRecord {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    /// Converts an early stop into [`Error::Escape`].
    pub fn complete(self) -> Result<Self> {
        match &self.escape {
            Some(e) => Err(Error::Escape { time: e.time, reason: e.reason.clone() }),
            None => Ok(self),
        }
    }

    /// Rebuilds a record from [`export_csv`] output. `h` is read off the grid.
    pub fn from_csv(text: &str) -> Result<Self> {
        let (header, rows) = parse_csv(text)?;
        let n = header.len().saturating_sub(2);
        if header.len() < 2 || header[0] != "t" || header[header.len() - 1] != "u" {
            return Err(Error::InvalidArgument("trajectory CSV header must be `t,x1,…,xn,u`".into()));
        }
        let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        Ok(Self {
            h: times.get(1).copied().unwrap_or(0.0),
            states: rows.iter().map(|r| r[1..=n].to_vec()).collect(),
            inputs: rows.iter().map(|r| r[n + 1]).collect(),
            times,
            meta: RecordMeta::default(),
            escape: None,
        })
    }
}

fn axpy(x: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect()
}

fn outside(x: &[f64], bounds: Option<&[Interval]>) -> Option<String> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Some(format!("x{} became non-finite", i + 1));
    }
    let bounds = bounds?;
    x.iter()
        .zip(bounds)
        .position(|(v, b)| !b.contains(*v))
        .map(|i| format!("x{} = {} left the escape box [{}, {}]", i + 1, x[i], bounds[i].lo, bounds[i].hi))
}

/// Classical RK4 with fixed step `h` from `t = 0` to `t_end`.
///
/// Leaving `escape_box`, a non-finite state, or a domain error in the field
/// stops the run; the record keeps the states reached so far and is flagged.
pub fn integrate(
    field: &dyn VectorField,
    x0: &[f64],
    signal: &InputSignal,
    t_end: f64,
    h: f64,
    escape_box: Option<&[Interval]>,
) -> Result<TrajectoryRecord> {
    let steps = grid_steps(t_end, h)?;
    signal.check_grid(h)?;
    if x0.len() != field.dim() {
        return Err(Error::Dimension { expected: field.dim(), got: x0.len() });
    }
    if let Some(b) = escape_box {
        if b.len() != x0.len() {
            return Err(Error::Dimension { expected: x0.len(), got: b.len() });
        }
    }
    if let Some(reason) = outside(x0, escape_box) {
        return Err(Error::InvalidArgument(format!("initial state is invalid: {reason}")));
    }

    let mut record = TrajectoryRecord {
        h,
        times: vec![0.0],
        states: vec![x0.to_vec()],
        inputs: vec![signal.value(0.0)?],
        meta: RecordMeta::default(),
        escape: None,
    };
    let mut x = x0.to_vec();
    for k in 0..steps {
        let t = k as f64 * h;
        let step = || -> Result<Vec<f64>> {
            let k1 = field.eval_real(&x, signal.stage_value(t, 0.0)?)?;
            let k2 = field.eval_real(&axpy(&x, 0.5 * h, &k1), signal.stage_value(t, 0.5 * h)?)?;
            let k3 = field.eval_real(&axpy(&x, 0.5 * h, &k2), signal.stage_value(t, 0.5 * h)?)?;
            let k4 = field.eval_real(&axpy(&x, h, &k3), signal.stage_value(t, h)?)?;
            Ok((0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
        };
        let next = match step() {
            Ok(next) => next,
            Err(e) => {
                record.escape = Some(EscapeInfo { time: t, reason: e.to_string() });
                return Ok(record);
            }
        };
        let t_next = (k + 1) as f64 * h;
        if let Some(reason) = outside(&next, escape_box) {
            record.escape = Some(EscapeInfo { time: t_next, reason });
            return Ok(record);
        }
        let u_next = match signal.value(t_next) {
            Ok(u) => u,
            Err(e) => {
                record.escape = Some(EscapeInfo { time: t_next, reason: e.to_string() });
                return Ok(record);
            }
        };
        record.times.push(t_next);
        record.states.push(next.clone());
        record.inputs.push(u_next);
        x = next;
    }
    Ok(record)
}

/// Slack for the pair checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairTolerances {
    /// Relative tolerance (times `d(0)`) on the equal-input decay equality.
    pub equality: f64,
    /// Integration slack `ε_int` on the bounds.
    pub integration: f64,
}

impl Default for PairTolerances {
    fn default() -> Self {
        Self { equality: 1e-6, integration: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Gas,
    Iss,
}

/// Distances along a trajectory pair and how they compare with the bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub kind: PairKind,
    pub lambda: f64,
    pub initial_distance: f64,
    pub input_sup_difference: f64,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// `e^{-λt/2} d(0)`.
    pub envelope: Vec<f64>,
    /// Right-hand side of the checked bound, slack included.
    pub bound: Vec<f64>,
    /// `max_t |d(t) − e^{-λt/2} d(0)|`.
    pub max_equality_error: f64,
    /// `min_t (bound − d)`; nonnegative when the bound holds everywhere.
    pub min_bound_margin: f64,
    pub tolerances: PairTolerances,
    pub pass: bool,
    #[serde(skip)]
    pub first: TrajectoryRecord,
    #[serde(skip)]
    pub second: TrajectoryRecord,
}

#[allow(clippy::too_many_arguments)]
fn pair_run(
    kind: PairKind,
    ctrl: &SynthesizedController,
    field: &dyn VectorField,
    x0: &[f64],
    x0_other: &[f64],
    signal: &InputSignal,
    signal_other: &InputSignal,
    t_end: f64,
    h: f64,
    tol: PairTolerances,
    escape_box: Option<&[Interval]>,
) -> Result<PairReport> {
    let first = integrate(field, x0, signal, t_end, h, escape_box)?.complete()?;
    let second = integrate(field, x0_other, signal_other, t_end, h, escape_box)?.complete()?;
    let lambda = ctrl.lambda();
    let sup = sup_norm_difference(signal, signal_other, t_end, h)?;
    let distances = first
        .states
        .iter()
        .zip(&second.states)
        .map(|(a, b)| ctrl.distance(a, b))
        .collect::<Result<Vec<f64>>>()?;
    let d0 = distances[0];
    let times = first.times.clone();
    let decay: Vec<f64> = times.iter().map(|t| (-0.5 * lambda * t).exp()).collect();
    let envelope: Vec<f64> = decay.iter().map(|e| e * d0).collect();
    let bound: Vec<f64> = match kind {
        PairKind::Gas => envelope.iter().map(|e| e * (1.0 + tol.integration)).collect(),
        PairKind::Iss => decay
            .iter()
            .zip(&envelope)
            .map(|(e, env)| env + 2.0 / lambda * (1.0 - e) * sup + tol.integration)
            .collect(),
    };
    let max_equality_error = distances.iter().zip(&envelope).map(|(d, e)| (d - e).abs()).fold(0.0, f64::max);
    let min_bound_margin = distances.iter().zip(&bound).map(|(d, b)| b - d).fold(f64::INFINITY, f64::min);
    let pass = match kind {
        PairKind::Gas => min_bound_margin >= 0.0 && max_equality_error <= tol.equality * d0,
        PairKind::Iss => min_bound_margin >= 0.0,
    };
    Ok(PairReport {
        kind,
        lambda,
        initial_distance: d0,
        input_sup_difference: sup,
        times,
        distances,
        envelope,
        bound,
        max_equality_error,
        min_bound_margin,
        tolerances: tol,
        pass,
        first,
        second,
    })
}

/// Equal-input pair: checks `d(t) ≤ e^{-λt/2} d(0)(1 + ε_int)` and
/// `|d(t) − e^{-λt/2} d(0)| ≤ ε_eq · d(0)` on the grid.
#[allow(clippy::too_many_arguments)]
pub fn gas_decay_check(
    ctrl: &SynthesizedController,
    field: &dyn VectorField,
    x0: &[f64],
    x0_other: &[f64],
    signal: &InputSignal,
    t_end: f64,
    h: f64,
    tol: PairTolerances,
    escape_box: Option<&[Interval]>,
) -> Result<PairReport> {
    pair_run(PairKind::Gas, ctrl, field, x0, x0_other, signal, signal, t_end, h, tol, escape_box)
}

/// Pair with inputs `û`, `û′`: checks
/// `d(t) ≤ e^{-λt/2} d(0) + (2/λ)(1 − e^{-λt/2}) ‖û − û′‖∞ + ε_int`.
#[allow(clippy::too_many_arguments)]
pub fn iss_bound_check(
    ctrl: &SynthesizedController,
    field: &dyn VectorField,
    x0: &[f64],
    x0_other: &[f64],
    signal: &InputSignal,
    signal_other: &InputSignal,
    t_end: f64,
    h: f64,
    tol: PairTolerances,
    escape_box: Option<&[Interval]>,
) -> Result<PairReport> {
    pair_run(PairKind::Iss, ctrl, field, x0, x0_other, signal, signal_other, t_end, h, tol, escape_box)
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        // 17 significant digits round-trip every f64
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

/// `t,x1,…,xn,u` with one row per grid point.
pub fn export_csv(record: &TrajectoryRecord) -> String {
    let mut out = String::from("t");
    for i in 1..=record.dim() {
        let _ = write!(out, ",x{i}");
    }
    out.push_str(",u\n");
    for ((t, x), u) in record.times.iter().zip(&record.states).zip(&record.inputs) {
        push_row(&mut out, std::iter::once(*t).chain(x.iter().copied()).chain(std::iter::once(*u)));
    }
    out
}

/// `t,distance,envelope,bound` for a checked pair.
pub fn export_pair_csv(report: &PairReport) -> String {
    let mut out = String::from("t,distance,envelope,bound\n");
    for i in 0..report.times.len() {
        push_row(&mut out, [report.times[i], report.distances[i], report.envelope[i], report.bound[i]]);
    }
    out
}

/// Splits numeric CSV text into its header and rows.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|f| f.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("CSV row {}: {e}", i + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(Error::InvalidArgument(format!("CSV row {} has {} fields, expected {}", i + 1, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Dual;
    use crate::expr::parse;

    struct Decay(f64);

    impl VectorField for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, x: &[Dual], u: &Dual) -> Result<Vec<Dual>> {
            Ok(vec![-self.0 * &x[0] + u])
        }
    }

    #[test]
    fn exponential_decay() {
        let r = integrate(&Decay(1.0), &[1.0], &InputSignal::zero(), 1.0, 1e-3, None).unwrap();
        assert_eq!(r.times.len(), 1001);
        assert_eq!(r.times[1000], 1.0);
        assert!((r.last_state()[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_field_is_constant() {
        let r = integrate(&Decay(0.0), &[0.25], &InputSignal::zero(), 0.5, 0.1, None).unwrap();
        assert!(r.states.iter().all(|x| x[0] == 0.25));
    }

    #[test]
    fn fourth_order() {
        let err = |h: f64| {
            let r = integrate(&Decay(1.0), &[1.0], &InputSignal::zero(), 1.0, h, None).unwrap();
            (r.last_state()[0] - (-1.0f64).exp()).abs()
        };
        let (a, b, c) = (err(1e-2), err(5e-3), err(2.5e-3));
        assert!((a / b).log2() >= 3.8);
        assert!((b / c).log2() >= 3.8);
    }

    #[test]
    fn schedule_semantics() {
        let s = InputSignal::schedule(vec![(0.5, 1.0), (1.0, -2.0)]).unwrap();
        assert_eq!(s.value(0.0).unwrap(), 0.0);
        assert_eq!(s.value(0.5).unwrap(), 1.0);
        assert_eq!(s.value(0.99).unwrap(), 1.0);
        assert_eq!(s.value(1.0).unwrap(), -2.0);
        assert_eq!(s.value(7.0).unwrap(), -2.0);
        assert!(InputSignal::schedule(vec![(1.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(InputSignal::schedule(vec![]).is_err());
    }

    #[test]
    fn step_input_is_exact_on_grid() {
        // ẋ = -x + c·1[t ≥ 0.5]; with breakpoint on the grid RK4 keeps full order
        let s = InputSignal::schedule(vec![(0.0, 0.0), (0.5, 1.0)]).unwrap();
        let r = integrate(&Decay(1.0), &[1.0], &s, 1.0, 1e-3, None).unwrap();
        let exact = (-1.0f64).exp() + (1.0 - (-0.5f64).exp());
        assert!((r.last_state()[0] - exact).abs() < 1e-9);
        assert_eq!(r.inputs[499], 0.0);
        assert_eq!(r.inputs[500], 1.0);
    }

    #[test]
    fn off_grid_breakpoint_rejected() {
        let s = InputSignal::schedule(vec![(0.0, 0.0), (0.00105, 1.0)]).unwrap();
        assert!(matches!(integrate(&Decay(1.0), &[1.0], &s, 1.0, 1e-3, None), Err(Error::Signal(_))));
        assert!(integrate(&Decay(1.0), &[1.0], &InputSignal::zero(), 1.0005, 1e-3, None).is_err());
        assert!(integrate(&Decay(1.0), &[1.0], &InputSignal::zero(), 1.0, 0.0, None).is_err());
    }

    #[test]
    fn expression_signals() {
        let s = InputSignal::expression(&parse("sin(t)").unwrap()).unwrap();
        assert_eq!(s.value(0.3).unwrap(), f64::sin(0.3));
        assert!(InputSignal::expression(&parse("x1 + t").unwrap()).is_err());
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<InputSignal>(&json).unwrap(), s);
    }

    #[test]
    fn sup_norm() {
        let a = InputSignal::schedule(vec![(0.0, 0.0), (1.0, 0.3)]).unwrap();
        let b = InputSignal::constant(-0.1);
        assert!((sup_norm_difference(&a, &b, 2.0, 0.5).unwrap() - 0.4).abs() < 1e-15);
        // breakpoint past t_end never applies
        assert!((sup_norm_difference(&a, &b, 0.5, 0.5).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn escape_is_flagged() {
        let r = integrate(&Decay(-1.0), &[1.0], &InputSignal::zero(), 5.0, 0.01, Some(&[Interval::new(-2.0, 2.0)])).unwrap();
        let e = r.escape.clone().unwrap();
        assert!((e.time - 0.7).abs() < 1e-12, "{}", e.time);
        assert!(r.states.iter().all(|x| x[0] <= 2.0));
        assert!(matches!(r.complete(), Err(Error::Escape { .. })));
    }

    #[test]
    fn non_finite_state_is_flagged() {
        struct Blowup;
        impl VectorField for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, x: &[Dual], _: &Dual) -> Result<Vec<Dual>> {
                Ok(vec![&x[0] * &x[0] * 1e200])
            }
        }
        let r = integrate(&Blowup, &[1.0], &InputSignal::zero(), 1.0, 0.1, None).unwrap();
        assert!(r.escape.is_some());
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let r = integrate(&Decay(0.7), &[1.0], &InputSignal::constant(0.1), 0.2, 0.1, None).unwrap();
        let text = export_csv(&r);
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], "t,x1,u");
        assert_eq!(lines.len(), 5); // header, 3 rows, trailing empty
        assert!(!text.contains('\r'));
        let back = TrajectoryRecord::from_csv(&text).unwrap();
        assert_eq!(back.times, r.times);
        assert_eq!(back.states, r.states);
        assert_eq!(back.inputs, r.inputs);
        for (a, b) in back.states.iter().zip(&r.states) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn zero_horizon_gives_one_row() {
        let r = integrate(&Decay(1.0), &[0.3], &InputSignal::zero(), 0.0, 1e-3, None).unwrap();
        assert_eq!(export_csv(&r).lines().count(), 2);
    }
}
