//! Scenario files: a TOML document with `[problem]`, `[method]`, `[run]`,
//! `[output]` and an optional `[experiment]` grid.
//!
//! ```toml
//! [problem]
//! name = "rastrigin"
//! seed = 0
//! [problem.parameters]
//! start = [2.0, 2.0]
//!
//! [method]
//! name = "nsgd"
//! gamma = 0.1
//!
//! [run]
//! max_iters = 10000
//! cost_tol = 1e-10
//!
//! [output]
//! prefix = "rastrigin_nsgd"
//! ```
//!
//! Unknown keys are rejected and every numeric field is range-checked at
//! load time; errors carry the dotted key path. A manifest JSON written by a
//! previous run is accepted in place of a TOML file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adjoint::ConstrainedMethod;
use crate::error::{Error, Result};
use crate::optim_unconstrained::{InnerSolveConfig, UnconstrainedMethod, DIVERGENCE_COST};
use crate::problems::benchmarks::BenchmarkName;
use crate::problems::diffusion::DiffusionConfig;
use crate::problems::transport::Transport1DConfig;
use crate::splitting::DEFAULT_AVF_ORDER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemName {
    Rastrigin,
    Rosenbrock,
    Beale,
    Tomography,
    Transport1d,
    Diffusion,
}

impl ProblemName {
    pub const ALL: [ProblemName; 6] =
        [Self::Rastrigin, Self::Rosenbrock, Self::Beale, Self::Tomography, Self::Transport1d, Self::Diffusion];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rastrigin => "rastrigin",
            Self::Rosenbrock => "rosenbrock",
            Self::Beale => "beale",
            Self::Tomography => "tomography",
            Self::Transport1d => "transport1d",
            Self::Diffusion => "diffusion",
        }
    }

    pub fn benchmark(self) -> Option<BenchmarkName> {
        match self {
            Self::Rastrigin => Some(BenchmarkName::Rastrigin),
            Self::Rosenbrock => Some(BenchmarkName::Rosenbrock),
            Self::Beale => Some(BenchmarkName::Beale),
            _ => None,
        }
    }

    pub fn is_constrained(self) -> bool {
        matches!(self, Self::Transport1d | Self::Diffusion)
    }
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Splitting used for the benchmark functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplittingKind {
    #[default]
    LinearlyImplicit,
    Avf,
}

/// Union of all problem parameters; fields that do not apply to the chosen
/// problem must be absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParameters {
    // benchmarks
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splitting: Option<SplittingKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_order: Option<usize>,
    // tomography
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_qubits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_operators: Option<usize>,
    // transport
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport: Option<Transport1DConfig>,
    // diffusion
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<DiffusionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: ProblemName,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub parameters: ProblemParameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub name: String,
    pub gamma: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Anderson depth.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Diffusion splitting parameter; overrides `problem.parameters.diffusion.alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Implicit-step solver for the unconstrained split methods.
    #[serde(default)]
    pub inner: InnerSolveConfig,
    /// Constraint tolerance of the full-solve constrained baselines.
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_max_inner")]
    pub max_inner: usize,
    /// Use `θ + g + (S + G)ξ` in constrained Anderson updates.
    #[serde(default)]
    pub additive_sign: bool,
    /// Reject unconstrained Anderson proposals that raise the cost.
    #[serde(default = "default_true")]
    pub aa_safeguard: bool,
}

fn default_mu() -> f64 {
    0.9
}
fn default_m() -> usize {
    5
}
fn default_inner_tol() -> f64 {
    1e-6
}
fn default_max_inner() -> usize {
    100_000
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Unconstrained: stop when the cost falls to this value. Constrained:
    /// the objective threshold `η`.
    #[serde(default)]
    pub cost_tol: f64,
    #[serde(default)]
    pub grad_tol: f64,
    /// Constraint residual threshold `ε` for constrained runs.
    #[serde(default = "default_constraint_tol")]
    pub constraint_tol: f64,
    /// Absolute cost above which a run counts as diverged. Defaults to 1e12
    /// for unconstrained problems and to no cap for constrained ones; `inf`
    /// keeps only the non-finite check.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "extended_f64")]
    pub divergence_cost: Option<f64>,
    /// Cap relative to the initial cost; combined with `divergence_cost` by
    /// taking the smaller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_ratio: Option<f64>,
}

fn default_max_iters() -> usize {
    1000
}
fn default_constraint_tol() -> f64 {
    1e-6
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            cost_tol: 0.0,
            grad_tol: 0.0,
            constraint_tol: default_constraint_tol(),
            divergence_cost: None,
            divergence_ratio: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

/// Grid for `sweep`, `multistart` and `efficiency`. Empty lists fall back
/// to the single `[method]` entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gammas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_restarts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub problem: ProblemSection,
    pub method: MethodSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

/// A method name checked against the problem family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodName {
    Unconstrained(UnconstrainedMethod),
    Constrained(ConstrainedMethod),
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Unconstrained(m) => m.as_str(),
            Self::Constrained(m) => m.as_str(),
        }
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn parse_method(problem: ProblemName, name: &str, path: &str) -> Result<MethodName> {
    let r = if problem.is_constrained() {
        ConstrainedMethod::from_str(name).map(MethodName::Constrained)
    } else {
        UnconstrainedMethod::from_str(name).map(MethodName::Unconstrained)
    };
    r.map_err(|_| {
        let family = if problem.is_constrained() { "constrained" } else { "unconstrained" };
        Error::config(path, format!("`{name}` is not a {family} method, as required by problem `{problem}`"))
    })
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v >= 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be non-negative, got {v}")))
    }
}

fn absent<T>(o: &Option<T>, path: &str, problem: ProblemName) -> Result<()> {
    match o {
        Some(_) => Err(Error::config(path, format!("not a parameter of problem `{problem}`"))),
        None => Ok(()),
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| toml_error(&e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::config("manifest", e.to_string()))?;
        let inner = v.get("scenario").cloned().unwrap_or(v);
        let s: Scenario = serde_json::from_value(inner).map_err(|e| Error::config("manifest.scenario", e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Loads TOML, or a manifest when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read scenario: {e}")))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn method_name(&self) -> Result<MethodName> {
        parse_method(self.problem.name, &self.method.name, "method.name")
    }

    /// `experiment.methods`, or the single `[method]` name.
    pub fn grid_methods(&self) -> Result<Vec<MethodName>> {
        if self.experiment.methods.is_empty() {
            return Ok(vec![self.method_name()?]);
        }
        self.experiment
            .methods
            .iter()
            .enumerate()
            .map(|(i, m)| parse_method(self.problem.name, m, &format!("experiment.methods[{i}]")))
            .collect()
    }

    pub fn grid_gammas(&self) -> Vec<f64> {
        if self.experiment.gammas.is_empty() {
            vec![self.method.gamma]
        } else {
            self.experiment.gammas.clone()
        }
    }

    pub fn n_restarts(&self) -> usize {
        self.experiment.n_restarts.unwrap_or(100)
    }

    pub fn prefix(&self) -> String {
        self.output.prefix.clone().unwrap_or_else(|| format!("{}_{}", self.problem.name, self.method.name))
    }

    pub fn avf_order(&self) -> usize {
        self.problem.parameters.quad_order.unwrap_or(DEFAULT_AVF_ORDER)
    }

    pub fn splitting(&self) -> SplittingKind {
        self.problem.parameters.splitting.unwrap_or_default()
    }

    /// Divergence cap for a run that starts at cost `c0`.
    pub fn divergence_cap(&self, c0: f64) -> Option<f64> {
        let abs = match self.run.divergence_cost {
            Some(c) => Some(c),
            None if self.problem.name.is_constrained() => None,
            None => Some(DIVERGENCE_COST),
        }
        .filter(|c| c.is_finite());
        let rel = self.run.divergence_ratio.map(|r| r * c0);
        match (abs, rel) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn transport_config(&self) -> Transport1DConfig {
        self.problem.parameters.transport.clone().unwrap_or_default()
    }

    pub fn diffusion_config(&self) -> DiffusionConfig {
        let mut cfg = self.problem.parameters.diffusion.clone().unwrap_or_default();
        if let Some(a) = self.method.alpha {
            cfg.alpha = a;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.problem.name;
        let p = &self.problem.parameters;
        if name.benchmark().is_none() {
            absent(&p.start, "problem.parameters.start", name)?;
            absent(&p.splitting, "problem.parameters.splitting", name)?;
            absent(&p.quad_order, "problem.parameters.quad_order", name)?;
        }
        if name != ProblemName::Tomography {
            absent(&p.n_qubits, "problem.parameters.n_qubits", name)?;
            absent(&p.n_operators, "problem.parameters.n_operators", name)?;
        }
        if name != ProblemName::Transport1d {
            absent(&p.transport, "problem.parameters.transport", name)?;
        }
        if name != ProblemName::Diffusion {
            absent(&p.diffusion, "problem.parameters.diffusion", name)?;
            absent(&self.method.alpha, "method.alpha", name)?;
        }
        if let Some(start) = p.start {
            if start.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("problem.parameters.start", "must be finite"));
            }
        }
        if p.quad_order == Some(0) {
            return Err(Error::config("problem.parameters.quad_order", "must be positive"));
        }
        if name == ProblemName::Tomography {
            let nq = p.n_qubits.unwrap_or(6);
            if !(1..=10).contains(&nq) {
                return Err(Error::config("problem.parameters.n_qubits", "must lie in 1..=10"));
            }
            let nops = p.n_operators.unwrap_or(500);
            if nops == 0 || nops > 1 << (2 * nq) {
                return Err(Error::config(
                    "problem.parameters.n_operators",
                    format!("must lie in 1..={} for {nq} qubits", 1usize << (2 * nq)),
                ));
            }
        }
        if name == ProblemName::Transport1d {
            self.transport_config().validate().map_err(|e| prefix_path(e, "problem.parameters.transport"))?;
        }
        if name == ProblemName::Diffusion {
            self.diffusion_config().validate().map_err(|e| match e {
                Error::Config { path, reason } if path == "problem.alpha" && self.method.alpha.is_some() => {
                    Error::config("method.alpha", reason)
                }
                other => prefix_path(other, "problem.parameters.diffusion"),
            })?;
        }

        self.method_name()?;
        positive("method.gamma", self.method.gamma)?;
        non_negative("method.mu", self.method.mu)?;
        if self.method.mu >= 1.0 {
            return Err(Error::config("method.mu", format!("must be below 1, got {}", self.method.mu)));
        }
        if self.method.m == 0 {
            return Err(Error::config("method.m", "must be at least 1"));
        }
        positive("method.inner.tol", self.method.inner.tol)?;
        if self.method.inner.max_inner == 0 {
            return Err(Error::config("method.inner.max_inner", "must be positive"));
        }
        positive("method.inner.damping", self.method.inner.damping)?;
        positive("method.inner_tol", self.method.inner_tol)?;
        if self.method.max_inner == 0 {
            return Err(Error::config("method.max_inner", "must be positive"));
        }

        non_negative("run.cost_tol", self.run.cost_tol)?;
        non_negative("run.grad_tol", self.run.grad_tol)?;
        non_negative("run.constraint_tol", self.run.constraint_tol)?;
        if let Some(c) = self.run.divergence_cost {
            if !(c > 0.0) {
                return Err(Error::config("run.divergence_cost", "must be positive (use inf to disable)"));
            }
        }
        if let Some(r) = self.run.divergence_ratio {
            positive("run.divergence_ratio", r)?;
        }

        self.grid_methods()?;
        for (i, g) in self.experiment.gammas.iter().enumerate() {
            positive(&format!("experiment.gammas[{i}]"), *g)?;
        }
        if self.experiment.n_restarts == Some(0) {
            return Err(Error::config("experiment.n_restarts", "must be at least 1"));
        }
        if let Some(prefix) = &self.output.prefix {
            if prefix.is_empty() || prefix.contains(['/', '\\']) {
                return Err(Error::config("output.prefix", "must be a non-empty file name stem"));
            }
        }
        Ok(())
    }
}

fn prefix_path(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { path, reason } => {
            let leaf = path.strip_prefix("problem.").unwrap_or(&path);
            Error::config(format!("{prefix}.{leaf}"), reason)
        }
        other => other,
    }
}

/// Optional float that may be infinite. JSON has no infinity literal, so
/// infinities are written as the strings `"inf"` / `"-inf"`.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_infinite() => s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" }),
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" | "+inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got `{other}`"))),
            },
        }
    }
}

/// Turns a TOML error into a config error naming the offending key where
/// the parser reports one.
fn toml_error(e: &toml::de::Error) -> Error {
    let msg = e.message().to_string();
    let path = if let Some(rest) = msg.strip_prefix("unknown field `") {
        rest.split('`').next().unwrap_or("scenario").to_string()
    } else if let Some(rest) = msg.strip_prefix("missing field `") {
        rest.split('`').next().unwrap_or("scenario").to_string()
    } else {
        "scenario".to_string()
    };
    Error::config(path, msg)
}
