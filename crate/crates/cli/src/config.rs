//! TOML run configuration. Every table rejects unknown keys.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use deltabk::examples::{self, GeneratorParameters};
use deltabk::model::{Interval, ParametricStrictFeedbackSystem, StrictFeedbackSystem};
use deltabk::sim::{InputSignal, PairTolerances};
use deltabk::verify::Tolerances;
use deltabk::{parse, Error, Expression};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default = "default_two")]
    pub lambda: f64,
    #[serde(default = "default_two")]
    pub alpha: f64,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    StrictFeedback,
    Parametric,
}

/// Either `builtin = "<name>"` or an inline definition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub builtin: Option<String>,
    /// Overrides for `builtin = "generator"`.
    pub generator: Option<GeneratorParameters>,
    pub kind: Option<SystemKind>,
    pub n: Option<usize>,
    #[serde(default)]
    pub h: Vec<String>,
    #[serde(default)]
    pub g: Vec<String>,
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(rename = "box")]
    pub bounds: Option<Vec<Interval>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub samples: usize,
    pub seed: u64,
    pub input_interval: Interval,
    pub tolerances: Tolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { samples: 2000, seed: 0, input_interval: Interval::new(-1.0, 1.0), tolerances: Tolerances::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub t_end: f64,
    pub h: f64,
    pub escape_box: Option<Vec<Interval>>,
    pub tolerances: PairTolerances,
    /// Empty means the default pair set.
    pub pairs: Vec<PairConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { t_end: 5.0, h: 1e-3, escape_box: None, tolerances: PairTolerances::default(), pairs: Vec::new() }
    }
}

/// Two initial states and one shared or two separate input signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub initial_states: [Vec<f64>; 2],
    pub input_signals: Vec<InputSignal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Json, Format::Csv] }
    }
}

impl RunConfig {
    pub fn builtin(name: &str) -> Self {
        Self {
            system: SystemConfig { builtin: Some(name.to_string()), ..Default::default() },
            lambda: 2.0,
            alpha: 2.0,
            verify: VerifyConfig::default(),
            simulate: SimulateConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration,
    /// ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut normalized = self.clone();
        normalized.output = OutputConfig::default();
        let canonical = serde_json::to_vec(&normalized).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// Checks everything that does not need the system itself.
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("lambda", self.lambda), ("alpha", self.alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be a positive finite number, got {v}"));
            }
        }
        if self.verify.samples == 0 {
            return Err("verify.samples must be at least 1".into());
        }
        let iv = self.verify.input_interval;
        if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi) {
            return Err("verify.input_interval must be a finite [lo, hi] with lo <= hi".into());
        }
        let s = &self.simulate;
        if !(s.h > 0.0 && s.h.is_finite()) {
            return Err(format!("simulate.h must be positive, got {}", s.h));
        }
        if !(s.t_end >= 0.0 && s.t_end.is_finite()) {
            return Err(format!("simulate.t_end must be nonnegative, got {}", s.t_end));
        }
        for (i, p) in s.pairs.iter().enumerate() {
            if !(1..=2).contains(&p.input_signals.len()) {
                return Err(format!("simulate.pairs[{i}] needs one shared or two input signals"));
            }
        }
        Ok(())
    }
}

/// A resolved plant, ready for synthesis.
#[derive(Clone)]
pub enum Plant {
    StrictFeedback(Arc<StrictFeedbackSystem>),
    Parametric(Arc<ParametricStrictFeedbackSystem>),
}

impl Plant {
    pub fn dim(&self) -> usize {
        match self {
            Plant::StrictFeedback(s) => s.dim(),
            Plant::Parametric(s) => s.drift_expressions().len(),
        }
    }

    pub fn bounds(&self) -> Vec<Interval> {
        match self {
            Plant::StrictFeedback(s) => s.bounds().to_vec(),
            Plant::Parametric(s) => s.bounds().to_vec(),
        }
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            Plant::StrictFeedback(_) => SystemKind::StrictFeedback,
            Plant::Parametric(_) => SystemKind::Parametric,
        }
    }
}

fn parse_all(label: &str, sources: &[String]) -> Result<Vec<Expression>, Error> {
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            parse(s).map_err(|e| Error::InvalidSystem(format!("{label}[{i}] = \"{s}\": {e}")))
        })
        .collect()
}

impl SystemConfig {
    pub fn name(&self) -> String {
        match (&self.builtin, self.kind) {
            (Some(b), _) => b.clone(),
            (None, Some(SystemKind::StrictFeedback)) => "inline strict-feedback".into(),
            (None, _) => "inline parametric".into(),
        }
    }

    pub fn build(&self) -> Result<Plant, Error> {
        if let Some(name) = &self.builtin {
            let inline = self.kind.is_some() || !self.h.is_empty() || !self.g.is_empty() || !self.b.is_empty();
            if inline || !self.params.is_empty() || self.n.is_some() {
                return Err(Error::InvalidSystem(
                    "system.builtin cannot be combined with an inline definition (kind, n, h, g, b, params)".into(),
                ));
            }
            if name == "generator" {
                let p = self.generator.unwrap_or_default();
                let bounds = self.bounds.clone().unwrap_or_else(examples::generator_box);
                return Ok(Plant::StrictFeedback(Arc::new(examples::generator_system_on(&p, bounds)?)));
            }
            if self.generator.is_some() || self.bounds.is_some() {
                return Err(Error::InvalidSystem(format!("built-in `{name}` takes no generator parameters or box")));
            }
            return match examples::builtin(name) {
                Some(examples::Builtin::Generator(s)) => Ok(Plant::StrictFeedback(s)),
                Some(examples::Builtin::Parametric(s)) => Ok(Plant::Parametric(s)),
                None => Err(Error::InvalidSystem(format!(
                    "unknown built-in system `{name}` (expected one of {})",
                    examples::BUILTIN_NAMES.join(", ")
                ))),
            };
        }
        if self.generator.is_some() {
            return Err(Error::InvalidSystem("system.generator is only valid with builtin = \"generator\"".into()));
        }
        let kind = self
            .kind
            .ok_or_else(|| Error::InvalidSystem("system needs either `builtin` or `kind`".into()))?;
        let n = self.h.len();
        if n == 0 {
            return Err(Error::InvalidSystem("system.h must list at least one drift term".into()));
        }
        if let Some(declared) = self.n {
            if declared != n {
                return Err(Error::InvalidSystem(format!("system.n = {declared} but {n} drift terms were given")));
            }
        }
        let bounds = self
            .bounds
            .clone()
            .ok_or_else(|| Error::InvalidSystem("inline systems need a validity `box`".into()))?;
        let drift = parse_all("h", &self.h)?;
        match kind {
            SystemKind::StrictFeedback => {
                if !self.b.is_empty() {
                    return Err(Error::InvalidSystem("strict-feedback systems take gains `g`, not `b`".into()));
                }
                let gains = parse_all("g", &self.g)?;
                Ok(Plant::StrictFeedback(Arc::new(StrictFeedbackSystem::new(
                    drift,
                    gains,
                    self.params.clone(),
                    bounds,
                )?)))
            }
            SystemKind::Parametric => {
                if self.g.len() != 1 {
                    return Err(Error::InvalidSystem(format!(
                        "parametric systems take exactly one input gain `g`, got {}",
                        self.g.len()
                    )));
                }
                let gain = parse_all("g", &self.g)?.remove(0);
                Ok(Plant::Parametric(Arc::new(ParametricStrictFeedbackSystem::new(
                    drift,
                    self.b.clone(),
                    gain,
                    self.params.clone(),
                    bounds,
                )?)))
            }
        }
    }
}

impl PairConfig {
    pub fn signals(&self) -> (&InputSignal, &InputSignal) {
        let a = &self.input_signals[0];
        (a, self.input_signals.get(1).unwrap_or(a))
    }

    pub fn shared_input(&self) -> bool {
        self.input_signals.len() == 1
    }
}

/// Shared zero input from two box points, then zero versus a 0.1 step.
pub fn default_pairs(bounds: &[Interval]) -> Vec<PairConfig> {
    let at = |t: f64| bounds.iter().map(|b| b.lerp(t)).collect::<Vec<f64>>();
    vec![
        PairConfig { initial_states: [at(0.25), at(0.75)], input_signals: vec![InputSignal::zero()] },
        PairConfig { initial_states: [at(0.5), at(0.5)], input_signals: vec![InputSignal::zero(), InputSignal::constant(0.1)] },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_defaults() {
        let c = RunConfig::from_toml("[system]\nbuiltin = \"generator\"\n").unwrap();
        assert_eq!(c.lambda, 2.0);
        assert_eq!(c.verify.samples, 2000);
        assert_eq!(c, RunConfig::builtin("generator"));
        assert!(c.validate().is_ok());
        assert_eq!(c.system.build().unwrap().dim(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[system]\nbuiltin = \"generator\"\ncolour = 1\n").is_err());
        assert!(RunConfig::from_toml("lamda = 2\n[system]\nbuiltin = \"generator\"\n").is_err());
        assert!(RunConfig::from_toml("[system]\nbuiltin = \"generator\"\n[verify]\nsample = 3\n").is_err());
    }

    #[test]
    fn inline_parametric() {
        let text = r#"
            [system]
            kind = "parametric"
            h = ["sin(x1)", "a*x2"]
            b = [1.5]
            g = ["2 + cos(x1)"]
            params = { a = 0.3 }
            box = [[-1, 1], [-1, 1]]
        "#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.system.build().unwrap().dim(), 2);
    }

    #[test]
    fn zero_coupling_cites_invariant() {
        let text = r#"
            [system]
            kind = "parametric"
            h = ["0", "0"]
            b = [0.0]
            g = ["1"]
            box = [[-1, 1], [-1, 1]]
        "#;
        let err = RunConfig::from_toml(text).unwrap().system.build().err().unwrap().to_string();
        assert!(err.contains("b_1"), "{err}");
    }

    #[test]
    fn signals_in_pairs() {
        let text = r#"
            [system]
            builtin = "scalar-demo"
            [[simulate.pairs]]
            initial_states = [[0.1], [0.5]]
            input_signals = [{ schedule = [[0.0, 0.0], [1.0, 0.2]] }, { expr = "0.1*sin(t)" }]
        "#;
        let c = RunConfig::from_toml(text).unwrap();
        assert!(c.validate().is_ok());
        assert!(!c.simulate.pairs[0].shared_input());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::builtin("generator");
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.output.directory = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.verify.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
