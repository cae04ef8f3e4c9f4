//! Run configuration: one JSON file, every section optional except `seed`.
//!
//! ```json
//! {
//!   "seed": 0,
//!   "system":  { "kind": "linear-delay", "a": 0.0, "b": -1.0, "g": 0.0, "theta": 1.0 },
//!   "lkf":     { "kind": "quad-exp", "c": 0.0, "kappa": 1.0 },
//!   "alpha":   { "kind": "identity" },
//!   "chi":     { "kind": "zero" },
//!   "samples": { "generator": "random-cubic-spline", "history_amplitude": 3.0,
//!                "input_amplitude": 2.0, "count": 200 },
//!   "solver":  { "step": 0.01, "horizon": 20.0 },
//!   "history": { "kind": "constant", "value": [1.0] },
//!   "input":   [0.0],
//!   "certify": { "kind": "dissipative-pointwise", "tol": 1e-6 },
//!   "estimate": { "property": "v-ugs", "eps": 0.1, "r": 1.0, "t_cap": 50.0,
//!                 "heldout_seeds": 2, "levels": 40 },
//!   "falsify": { "budget": 2000 },
//!   "example": { ... }
//! }
//! ```

use std::path::Path;

use dde_iss::comparison::{ComparisonFn, FnClass};
use dde_iss::dynamics::DelaySystem;
use dde_iss::estimate::Property;
use dde_iss::example::{alpha_example, example_system, BumpPsi, ClaimConfig};
use dde_iss::history::HistoryFunction;
use dde_iss::lkf::LkfCandidate;
use dde_iss::sampling::{HistoryGenerator, SampleSpace};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    /// The scalar benchmark with the bump nonlinearity.
    Example,
    LinearDelay { a: f64, b: f64, g: f64, theta: f64 },
    Zero { n: usize, m: usize, theta: f64 },
    Quadratic { theta: f64 },
    /// `x' = g(x(t)) + h(x(t-θ)) + k u` with piecewise-linear tables.
    Tabulated { g: Vec<(f64, f64)>, h: Vec<(f64, f64)>, k: f64, theta: f64 },
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self::Example
    }
}

impl SystemSpec {
    pub fn build(&self) -> dde_iss::Result<DelaySystem> {
        match self {
            Self::Example => Ok(example_system(BumpPsi)),
            Self::LinearDelay { a, b, g, theta } => DelaySystem::linear_delay(*a, *b, *g, *theta),
            Self::Zero { n, m, theta } => Ok(DelaySystem::zero(*n, *m, *theta)),
            Self::Quadratic { theta } => Ok(DelaySystem::quadratic(*theta)),
            Self::Tabulated { g, h, k, theta } => DelaySystem::tabulated(g.clone(), h.clone(), *k, *theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LkfSpec {
    QuadExp { c: f64, kappa: f64 },
    SupNorm,
}

impl Default for LkfSpec {
    fn default() -> Self {
        Self::QuadExp { c: 0.0, kappa: 1.0 }
    }
}

impl LkfSpec {
    pub fn build(&self, theta: f64) -> dde_iss::Result<LkfCandidate> {
        match self {
            Self::QuadExp { c, kappa } => LkfCandidate::quad_exp(theta, *c, *kappa),
            Self::SupNorm => Ok(LkfCandidate::sup_norm(theta)),
        }
    }
}

/// Comparison functions from the builtin catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FnSpec {
    Identity,
    Zero,
    Linear { k: f64 },
    Power { k: f64, p: f64 },
    ExpDecay { rate: f64 },
    /// `2ψ̃(s)s²` of the benchmark system.
    ExampleAlpha,
    /// Monotone interpolation through `(s, f(s))` pairs; `class` is one of
    /// `K`, `Kinf`, `L`, `PD`.
    Tabulated { class: FnClass, points: Vec<(f64, f64)> },
}

impl FnSpec {
    pub fn build(&self, label: &str) -> dde_iss::Result<ComparisonFn> {
        match self {
            Self::Identity => Ok(ComparisonFn::identity()),
            Self::Zero => Ok(ComparisonFn::zero()),
            Self::Linear { k } => ComparisonFn::linear(*k),
            Self::Power { k, p } => ComparisonFn::power(*k, *p),
            Self::ExpDecay { rate } => ComparisonFn::exp_decay(*rate),
            Self::ExampleAlpha => Ok(alpha_example(BumpPsi)),
            Self::Tabulated { class, points } => ComparisonFn::tabulated(*class, label, points),
        }
    }
}

fn default_alpha() -> FnSpec {
    FnSpec::ExampleAlpha
}

fn default_chi() -> FnSpec {
    FnSpec::Linear { k: 2.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplesSpec {
    pub generator: HistoryGenerator,
    pub history_amplitude: f64,
    pub input_amplitude: f64,
    pub count: usize,
}

impl Default for SamplesSpec {
    fn default() -> Self {
        Self {
            generator: HistoryGenerator::RandomCubicSpline,
            history_amplitude: 3.0,
            input_amplitude: 2.0,
            count: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    /// Defaults to `θ/100`.
    pub step: Option<f64>,
    pub horizon: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { step: None, horizon: 20.0 }
    }
}

/// Initial history for `simulate` and `lkf-eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HistorySpec {
    Constant { value: Vec<f64> },
    /// History CSV as written by the library (`tau, x…, dx…` rows).
    Csv { path: String },
    /// Draw number `index` of the configured sample space.
    Sample { index: usize },
}

impl Default for HistorySpec {
    fn default() -> Self {
        Self::Constant { value: vec![1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySpec {
    pub kind: String,
    pub tol: f64,
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self {
            kind: "implication-pointwise".into(),
            tol: dde_iss::certify::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSpec {
    pub property: Property,
    pub eps: f64,
    pub r: f64,
    pub t_cap: f64,
    pub heldout_seeds: usize,
    pub levels: usize,
}

impl Default for EstimateSpec {
    fn default() -> Self {
        Self {
            property: Property::VUgs,
            eps: 0.1,
            r: 1.0,
            t_cap: 50.0,
            heldout_seeds: 2,
            levels: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FalsifySpec {
    pub budget: usize,
}

impl Default for FalsifySpec {
    fn default() -> Self {
        Self { budget: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub lkf: LkfSpec,
    #[serde(default = "default_alpha")]
    pub alpha: FnSpec,
    #[serde(default = "default_chi")]
    pub chi: FnSpec,
    #[serde(default)]
    pub samples: SamplesSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub history: HistorySpec,
    /// Constant input value; empty means zero.
    #[serde(default)]
    pub input: Vec<f64>,
    #[serde(default)]
    pub certify: CertifySpec,
    #[serde(default)]
    pub estimate: EstimateSpec,
    #[serde(default)]
    pub falsify: FalsifySpec,
    #[serde(default)]
    pub example: ClaimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            system: SystemSpec::default(),
            lkf: LkfSpec::default(),
            alpha: default_alpha(),
            chi: default_chi(),
            samples: SamplesSpec::default(),
            solver: SolverSpec::default(),
            history: HistorySpec::default(),
            input: Vec::new(),
            certify: CertifySpec::default(),
            estimate: EstimateSpec::default(),
            falsify: FalsifySpec::default(),
            example: ClaimConfig::default(),
        }
    }
}

/// Everything built from a validated config.
pub struct Resolved {
    pub sys: DelaySystem,
    pub v: LkfCandidate,
    pub alpha: ComparisonFn,
    pub chi: ComparisonFn,
    pub space: SampleSpace,
    pub input: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn space(&self) -> SampleSpace {
        SampleSpace::new(
            self.seed,
            self.samples.generator,
            self.samples.history_amplitude,
            self.samples.input_amplitude,
            self.samples.count,
        )
    }

    /// Builds the objects and checks cross-references (dimensions, delay).
    pub fn resolve(&self) -> Result<Resolved, String> {
        let sys = self.system.build().map_err(|e| format!("system: {e}"))?;
        let v = self.lkf.build(sys.theta).map_err(|e| format!("lkf: {e}"))?;
        let alpha = self.alpha.build("alpha").map_err(|e| format!("alpha: {e}"))?;
        let chi = self.chi.build("chi").map_err(|e| format!("chi: {e}"))?;
        let input = if self.input.is_empty() {
            vec![0.0; sys.m]
        } else {
            self.input.clone()
        };
        if input.len() != sys.m {
            return Err(format!("input has {} components, system expects {}", input.len(), sys.m));
        }
        if let Some(h) = self.solver.step {
            if !(h > 0.0 && h <= sys.theta) {
                return Err(format!("solver step {h} must lie in (0, θ = {}]", sys.theta));
            }
        }
        if !(self.solver.horizon > 0.0 && self.solver.horizon.is_finite()) {
            return Err(format!("solver horizon must be positive, got {}", self.solver.horizon));
        }
        if self.samples.count == 0 {
            return Err("samples.count must be positive".into());
        }
        Ok(Resolved {
            space: self.space(),
            sys,
            v,
            alpha,
            chi,
            input,
        })
    }

    pub fn history(&self, sys: &DelaySystem) -> Result<HistoryFunction, String> {
        let phi = match &self.history {
            HistorySpec::Constant { value } => HistoryFunction::constant(sys.theta, value).map_err(|e| format!("history: {e}"))?,
            HistorySpec::Csv { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read history {path}: {e}"))?;
                HistoryFunction::from_csv(&text).map_err(|e| format!("history {path}: {e}"))?
            }
            HistorySpec::Sample { index } => self.space().sample(*index, sys.theta, sys.n, sys.m).phi,
        };
        if phi.dim() != sys.n {
            return Err(format!("history has dimension {}, system expects {}", phi.dim(), sys.n));
        }
        if (phi.theta() - sys.theta).abs() > 1e-12 * sys.theta {
            return Err(format!("history delay {} differs from system delay {}", phi.theta(), sys.theta));
        }
        Ok(phi)
    }
}
