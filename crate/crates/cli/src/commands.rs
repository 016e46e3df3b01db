use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use deltabk::model::VectorField;
use deltabk::sim::{self, PairKind, PairReport};
use deltabk::synthesis::{strict_feedback_controller, synthesize as synthesize_form, IdentityMetric, MetricField};
use deltabk::verify::{self, RegionOptions, VerificationReport};
use deltabk::{Dual, Error, SynthesizedController};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{default_pairs, Format, Plant, RunConfig, SystemKind};
use crate::{CommonArgs, MetricChoice};

/// Why a command stopped; maps onto the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    Check(String),
    Config(String),
    Domain(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config(_) => 2,
            Failure::Domain(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::Config(m) | Failure::Domain(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::SingularJacobian { .. } | Error::Eigen | Error::Escape { .. } => {
                Failure::Domain(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn load(args: &CommonArgs) -> Outcome<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::builtin(args.system.as_deref().unwrap_or("generator")),
    };
    if let (Some(name), Some(_)) = (&args.system, &args.config) {
        cfg.system = RunConfig::builtin(name).system;
    }
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if let Some(s) = args.seed {
        cfg.verify.seed = s;
    }
    if let Some(dir) = &args.out {
        cfg.output.directory = dir.clone();
    }
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

struct Session {
    cfg: RunConfig,
    plant: Plant,
    ctrl: SynthesizedController,
    hash: String,
}

fn session(args: &CommonArgs) -> Outcome<Session> {
    let cfg = load(args)?;
    let plant = cfg.system.build()?;
    let ctrl = match &plant {
        Plant::StrictFeedback(s) => strict_feedback_controller(Arc::clone(s), cfg.lambda)?,
        Plant::Parametric(s) => synthesize_form(s.clone(), cfg.lambda)?,
    };
    let hash = cfg.hash();
    Ok(Session { cfg, plant, ctrl, hash })
}

#[derive(Serialize)]
struct RunReport<'a> {
    command: &'a str,
    system: String,
    kind: SystemKind,
    n: usize,
    lambda: f64,
    alpha: f64,
    config_hash: &'a str,
    metric: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification: Option<Vec<RegionReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<SimulationReport>,
    pass: bool,
}

#[derive(Serialize)]
struct RegionReport {
    coordinates: &'static str,
    #[serde(flatten)]
    report: VerificationReport,
}

#[derive(Serialize)]
struct SimulationReport {
    t_end: f64,
    h: f64,
    pairs: Vec<PairSummary>,
    pass: bool,
}

#[derive(Serialize)]
struct PairSummary {
    index: usize,
    kind: PairKind,
    initial_states: [Vec<f64>; 2],
    initial_distance: f64,
    input_sup_difference: f64,
    max_equality_error: f64,
    min_bound_margin: f64,
    final_distance: f64,
    pass: bool,
    files: Vec<String>,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Outcome<String> {
    fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path: PathBuf = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(name.to_string())
}

fn parse_point(text: &str, n: usize) -> Outcome<Vec<f64>> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| Failure::Config(format!("--eval \"{text}\": {e}"))))
        .collect::<Outcome<Vec<f64>>>()?;
    if values.len() != n {
        return Err(Failure::Config(format!("--eval \"{text}\" has {} coordinates, the system has {n}", values.len())));
    }
    Ok(values)
}

fn print_summary(s: &Session) {
    let n = s.plant.dim();
    println!("system: {} ({}, n = {n})", s.cfg.system.name(), kind_name(s.plant.kind()));
    println!("lambda: {}", s.cfg.lambda);
    if let Plant::StrictFeedback(sys) = &s.plant {
        let g: Vec<String> = sys.gain_expressions().iter().map(ToString::to_string).collect();
        println!("coordinate map: y_l = g_1(x)...g_(l-1)(x) * x_l with g = [{}]", g.join(", "));
        println!("design system: y_l' = h'_l(y_1..y_l) + y_(l+1), y_n' = h'_n(y) + g_1...g_n * u");
    }
    let mut psi = vec!["z1 = y1".to_string()];
    for l in 2..=n {
        psi.push(format!("z{l} = y{l} - phi_{}(y1..y{})", l - 1, l - 1));
    }
    println!("error coordinates: {}", psi.join(", "));
    println!("closed loop in z: z' = (S - lambda/2 I) z + e_n v, S skew-symmetric");
    println!("control law: u = k(y, v) = (k_{n}(y) - h_{n}(y) + v) / g(y)");
    println!("metric: G = J_psi^T J_psi (det G = 1)");
}

fn kind_name(k: SystemKind) -> &'static str {
    match k {
        SystemKind::StrictFeedback => "strict-feedback",
        SystemKind::Parametric => "parametric-strict-feedback",
    }
}

pub fn synthesize(args: &CommonArgs, eval: &[String], input: f64) -> Outcome {
    let s = session(args)?;
    print_summary(&s);
    let n = s.plant.dim();
    for text in eval {
        let y = parse_point(text, n)?;
        let dual: Vec<Dual> = y.iter().copied().map(Dual::Real).collect();
        let k = s.ctrl.control_law(&dual, &Dual::Real(input))?.real();
        println!("k(y = {y:?}, v = {input}) = {k}");
        if let Plant::StrictFeedback(sys) = &s.plant {
            let x = sys.invert_real(&y)?;
            println!("  plant state x = phi^-1(y) = {x:?}");
        }
    }
    Ok(())
}

fn run_verification(s: &Session, metric: MetricChoice) -> Outcome<Vec<RegionReport>> {
    let opts = RegionOptions {
        bounds: s.plant.bounds(),
        input: s.cfg.verify.input_interval,
        samples: s.cfg.verify.samples,
        seed: s.cfg.verify.seed,
        tolerances: s.cfg.verify.tolerances,
    };
    let (lambda, alpha) = (s.cfg.lambda, s.cfg.alpha);
    let plant_metric: Arc<dyn MetricField> = match metric {
        MetricChoice::Synthesized => s.ctrl.plant_metric(),
        MetricChoice::Identity => Arc::new(IdentityMetric(s.plant.dim())),
    };
    let field = s.ctrl.closed_loop();
    let mut out = vec![RegionReport {
        coordinates: "plant",
        report: verify::verify_region(&field, plant_metric.as_ref(), lambda, alpha, &opts, None)?,
    }];
    if let (Plant::StrictFeedback(sys), MetricChoice::Synthesized) = (&s.plant, metric) {
        let sys = Arc::clone(sys);
        let map = move |x: &[f64]| sys.transform_real(x);
        let report = verify::verify_region(
            &s.ctrl.closed_loop_design(),
            &s.ctrl.recursive_metric(),
            lambda,
            alpha,
            &opts,
            Some(&map),
        )?;
        out.push(RegionReport { coordinates: "design", report });
    }
    Ok(out)
}

fn print_verification(regions: &[RegionReport]) {
    for r in regions {
        println!("[{} coordinates]", r.coordinates);
        print!("{}", r.report.to_table());
    }
}

fn run_simulation(s: &Session) -> Outcome<(SimulationReport, Vec<(String, String)>)> {
    let sim_cfg = &s.cfg.simulate;
    let pairs = if sim_cfg.pairs.is_empty() { default_pairs(&s.plant.bounds()) } else { sim_cfg.pairs.clone() };
    let field = s.ctrl.closed_loop();
    let escape = sim_cfg.escape_box.as_deref();
    let results: Vec<Result<PairReport, Error>> = pairs
        .par_iter()
        .map(|p| {
            let (u, v) = p.signals();
            let [a, b] = &p.initial_states;
            if p.shared_input() {
                sim::gas_decay_check(&s.ctrl, &field as &dyn VectorField, a, b, u, sim_cfg.t_end, sim_cfg.h, sim_cfg.tolerances, escape)
            } else {
                sim::iss_bound_check(&s.ctrl, &field, a, b, u, v, sim_cfg.t_end, sim_cfg.h, sim_cfg.tolerances, escape)
            }
        })
        .collect();
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for (i, (result, p)) in results.into_iter().zip(&pairs).enumerate() {
        let mut r = result.map_err(|e| match Failure::from(e) {
            Failure::Domain(m) => Failure::Domain(format!("pair {i}: {m}")),
            Failure::Config(m) => Failure::Config(format!("simulate.pairs[{i}]: {m}")),
            other => other,
        })?;
        for rec in [&mut r.first, &mut r.second] {
            rec.meta.lambda = Some(s.cfg.lambda);
            rec.meta.seed = Some(s.cfg.verify.seed);
            rec.meta.config_hash = Some(s.hash.clone());
        }
        let names = vec![format!("pair_{i}.csv"), format!("trajectory_{}.csv", 2 * i), format!("trajectory_{}.csv", 2 * i + 1)];
        files.push((names[0].clone(), sim::export_pair_csv(&r)));
        files.push((names[1].clone(), sim::export_csv(&r.first)));
        files.push((names[2].clone(), sim::export_csv(&r.second)));
        summaries.push(PairSummary {
            index: i,
            kind: r.kind,
            initial_states: p.initial_states.clone(),
            initial_distance: r.initial_distance,
            input_sup_difference: r.input_sup_difference,
            max_equality_error: r.max_equality_error,
            min_bound_margin: r.min_bound_margin,
            final_distance: *r.distances.last().unwrap_or(&0.0),
            pass: r.pass,
            files: names,
        });
    }
    let pass = summaries.iter().all(|p| p.pass);
    Ok((SimulationReport { t_end: sim_cfg.t_end, h: sim_cfg.h, pairs: summaries, pass }, files))
}

fn print_simulation(r: &SimulationReport) {
    for p in &r.pairs {
        let check = match p.kind {
            PairKind::Gas => format!("max |d - e^(-lambda t/2) d0| = {:.3e}", p.max_equality_error),
            PairKind::Iss => format!("sup |v - v'| = {:.3e}", p.input_sup_difference),
        };
        println!(
            "pair {} [{:?}]: d0 = {:.6e}, d(t_end) = {:.6e}, {check}, min bound margin = {:.3e}: {}",
            p.index,
            p.kind,
            p.initial_distance,
            p.final_distance,
            p.min_bound_margin,
            if p.pass { "PASS" } else { "FAIL" }
        );
    }
}

fn finish(s: &Session, command: &str, metric: MetricChoice, verification: Option<Vec<RegionReport>>, simulation: Option<(SimulationReport, Vec<(String, String)>)>) -> Outcome {
    let dir = &s.cfg.output.directory;
    let formats = &s.cfg.output.formats;
    let (simulation, csvs) = match simulation {
        Some((r, f)) => (Some(r), f),
        None => (None, Vec::new()),
    };
    let verified = verification.as_ref().is_none_or(|v| v.iter().all(|r| r.report.pass));
    let simulated = simulation.as_ref().is_none_or(|r| r.pass);
    let report = RunReport {
        command,
        system: s.cfg.system.name(),
        kind: s.plant.kind(),
        n: s.plant.dim(),
        lambda: s.cfg.lambda,
        alpha: s.cfg.alpha,
        config_hash: &s.hash,
        metric: match metric {
            MetricChoice::Synthesized => "synthesized",
            MetricChoice::Identity => "identity",
        },
        verification,
        simulation,
        pass: verified && simulated,
    };
    if formats.contains(&Format::Csv) {
        for (name, text) in &csvs {
            write_file(dir, name, text)?;
        }
    }
    if formats.contains(&Format::Json) {
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        write_file(dir, "report.json", &json)?;
    }
    if report.pass {
        println!("all checks passed; artifacts in {}", dir.display());
        Ok(())
    } else {
        Err(Failure::Check(format!("one or more checks failed; see {}", dir.join("report.json").display())))
    }
}

pub fn verify(args: &CommonArgs) -> Outcome {
    let s = session(args)?;
    let regions = run_verification(&s, args.metric)?;
    print_verification(&regions);
    finish(&s, "verify", args.metric, Some(regions), None)
}

pub fn simulate(args: &CommonArgs) -> Outcome {
    let s = session(args)?;
    let sim = run_simulation(&s)?;
    print_simulation(&sim.0);
    finish(&s, "simulate", args.metric, None, Some(sim))
}

pub fn demo(args: &CommonArgs) -> Outcome {
    let s = session(args)?;
    print_summary(&s);
    let zero: Vec<Dual> = vec![Dual::Real(0.0); s.plant.dim()];
    println!("k(y = 0, v = 0) = {}", s.ctrl.control_law(&zero, &Dual::Real(0.0))?.real());
    println!();
    let regions = run_verification(&s, args.metric)?;
    print_verification(&regions);
    println!();
    let sim = run_simulation(&s)?;
    print_simulation(&sim.0);
    finish(&s, "demo", args.metric, Some(regions), Some(sim))
}
