//! Sampled checks of LKF dissipation conditions and a falsifier.
//!
//! Conditions are evaluated at pairs `(φ, 𝔲)` of a history and a constant
//! input value, with `D⁺V` estimated by the Driver derivative along the
//! drift `f(φ, 𝔲)`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::ComparisonFn;
use crate::dynamics::DelaySystem;
use crate::history::{HistoryAccess, HistoryFunction};
use crate::lkf::{driver_derivative, LkfCandidate};
use crate::report::{CheckReport, Outcome};
use crate::sampling::{catmull_rom, SampleSpace, SPLINE_KNOTS};
use crate::{Error, Result};

/// Which dissipation inequality to test.
///
/// | kind | gate | bound on `D⁺V` |
/// |---|---|---|
/// | `implication-pointwise` | `|φ(0)| ≥ χ(|𝔲|)` | `−α(|φ(0)|)` |
/// | `implication-lkf-wise` | `V(φ) ≥ χ(|𝔲|)` | `−α(V(φ))` |
/// | `dissipative-pointwise` | none | `−α(|φ(0)|) + χ(|𝔲|)` |
/// | `dissipative-lkf-wise` | none | `−α(V(φ)) + χ(|𝔲|)` |
/// | `ugs` | `V(φ) ≥ χ(|𝔲|)` | `0` |
/// | `klw` | `V(φ) ≥ χ(|𝔲|)` | `−α(|φ(0)|)` |
/// | `local-decay` | none, `𝔲 = 0` | `0` |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionKind {
    ImplicationPointwise,
    ImplicationLkfWise,
    DissipativePointwise,
    DissipativeLkfWise,
    Ugs,
    Klw,
    LocalDecay,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 7] = [
        Self::ImplicationPointwise,
        Self::ImplicationLkfWise,
        Self::DissipativePointwise,
        Self::DissipativeLkfWise,
        Self::Ugs,
        Self::Klw,
        Self::LocalDecay,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::ImplicationPointwise => "implication-pointwise",
            Self::ImplicationLkfWise => "implication-lkf-wise",
            Self::DissipativePointwise => "dissipative-pointwise",
            Self::DissipativeLkfWise => "dissipative-lkf-wise",
            Self::Ugs => "ugs",
            Self::Klw => "klw",
            Self::LocalDecay => "local-decay",
        }
    }

    /// Implication forms skip samples where the gate fails.
    pub fn is_gated(self) -> bool {
        matches!(self, Self::ImplicationPointwise | Self::ImplicationLkfWise | Self::Ugs | Self::Klw)
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for ConditionKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.to_ascii_lowercase();
        let k = match s.as_str() {
            "implication-pointwise" | "impl-pointwise" => Self::ImplicationPointwise,
            "implication-lkf-wise" | "impl-lkf-wise" | "impl-lkfwise" => Self::ImplicationLkfWise,
            "dissipative-pointwise" | "diss-pointwise" => Self::DissipativePointwise,
            "dissipative-lkf-wise" | "diss-lkf-wise" | "diss-lkfwise" => Self::DissipativeLkfWise,
            "ugs" => Self::Ugs,
            "klw" => Self::Klw,
            "local-decay" => Self::LocalDecay,
            _ => return Err(format!("unknown condition kind '{s}'")),
        };
        Ok(k)
    }
}

/// A condition together with everything needed to evaluate it.
#[derive(Debug, Clone)]
pub struct Condition<'a> {
    pub kind: ConditionKind,
    pub sys: &'a DelaySystem,
    pub v: &'a LkfCandidate,
    pub alpha: &'a ComparisonFn,
    pub chi: &'a ComparisonFn,
    /// Base tolerance; the effective one is `max(tol, 10 × estimate tolerance)`.
    pub tol: f64,
    pub h_seq: Option<Vec<f64>>,
}

/// Default base tolerance of a condition check.
pub const DEFAULT_TOL: f64 = 1e-6;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub lhs: f64,
    pub rhs: f64,
    pub gated: bool,
    pub tol: f64,
    pub converged: bool,
}

impl Evaluation {
    /// `lhs − rhs − tol`; positive means violated (when gated).
    pub fn margin(&self) -> f64 {
        self.lhs - self.rhs - self.tol
    }

    pub fn violated(&self) -> bool {
        self.gated && self.margin() > 0.0
    }
}

impl<'a> Condition<'a> {
    pub fn new(
        kind: ConditionKind,
        sys: &'a DelaySystem,
        v: &'a LkfCandidate,
        alpha: &'a ComparisonFn,
        chi: &'a ComparisonFn,
    ) -> Self {
        Self {
            kind,
            sys,
            v,
            alpha,
            chi,
            tol: DEFAULT_TOL,
            h_seq: None,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Evaluates the condition at `(φ, 𝔲)`.
    pub fn evaluate(&self, phi: &HistoryFunction, u: &[f64]) -> Result<Evaluation> {
        let zero_u;
        let u = if self.kind == ConditionKind::LocalDecay {
            zero_u = vec![0.0; self.sys.m];
            &zero_u[..]
        } else {
            u
        };
        if phi.dim() != self.sys.n {
            return Err(Error::DimensionMismatch {
                expected: self.sys.n,
                found: phi.dim(),
            });
        }
        let drift = self.sys.eval(phi, u);
        let est = driver_derivative(self.v, phi, &drift, self.h_seq.as_deref())?;
        let vphi = self.v.eval_unchecked(phi);
        let head = norm(phi.head());
        let un = norm(u);
        let chi_u = self.chi.eval(un);
        use ConditionKind::*;
        let (gated, rhs) = match self.kind {
            ImplicationPointwise => (head >= chi_u, -self.alpha.eval(head)),
            ImplicationLkfWise => (vphi >= chi_u, -self.alpha.eval(vphi)),
            DissipativePointwise => (true, -self.alpha.eval(head) + chi_u),
            DissipativeLkfWise => (true, -self.alpha.eval(vphi) + chi_u),
            Ugs => (vphi >= chi_u, 0.0),
            Klw => (vphi >= chi_u, -self.alpha.eval(head)),
            LocalDecay => (true, 0.0),
        };
        Ok(Evaluation {
            lhs: est.estimate,
            rhs,
            gated,
            tol: self.tol.max(10.0 * est.tolerance),
            converged: est.converged,
        })
    }
}

/// Runs the condition on every sample of `space`; violations are ordered by
/// sample index.
pub fn check_condition(cond: &Condition<'_>, space: &SampleSpace) -> Result<CheckReport> {
    let theta = cond.v.theta();
    let outcomes = (0..space.sample_count)
        .into_par_iter()
        .map(|i| {
            let s = space.sample(i, theta, cond.sys.n, cond.sys.m);
            let u = if cond.kind == ConditionKind::LocalDecay {
                vec![0.0; cond.sys.m]
            } else {
                s.u
            };
            let e = cond.evaluate(&s.phi, &u)?;
            Ok(Outcome {
                index: i,
                phi: s.phi,
                u,
                lhs: e.lhs,
                rhs: e.rhs,
                gated: e.gated,
                tol: e.tol,
                note: (!e.converged).then(|| "derivative quotients not monotonically convergent".to_string()),
            })
        })
        .collect::<Result<Vec<Outcome>>>()?;
    Ok(CheckReport::collect(cond.kind.id(), cond.tol, &outcomes))
}

type Scalar = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type Gradient = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Data of the growth-restriction method: a positive definite `Q` on `ℝⁿ`
/// with gradient, and comparison functions `α`, `γ`, `σ`.
#[derive(Clone)]
pub struct GrowthSpec {
    pub q: Scalar,
    pub grad_q: Gradient,
    pub alpha: ComparisonFn,
    pub gamma: ComparisonFn,
    pub sigma: ComparisonFn,
    pub theta: f64,
    pub label: String,
}

impl fmt::Debug for GrowthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrowthSpec").field("label", &self.label).field("theta", &self.theta).finish()
    }
}

impl GrowthSpec {
    /// `Q(x) = |x|²`.
    pub fn squared_norm(alpha: ComparisonFn, gamma: ComparisonFn, sigma: ComparisonFn, theta: f64) -> Self {
        Self {
            q: Arc::new(|x| x.iter().map(|v| v * v).sum()),
            grad_q: Arc::new(|x| x.iter().map(|v| 2.0 * v).collect()),
            alpha,
            gamma,
            sigma,
            theta,
            label: "|x|^2".into(),
        }
    }

    /// Spot checks `Q(0) = 0`, positivity on the given points and growth
    /// along the first coordinate ray.
    pub fn validate(&self, n: usize, points: &[Vec<f64>]) -> Result<()> {
        let z = vec![0.0; n];
        if (self.q)(&z) != 0.0 {
            return Err(Error::Config("Q(0) must be 0".into()));
        }
        for p in points {
            if norm(p) > 0.0 && !((self.q)(p) > 0.0) {
                return Err(Error::Config(format!("Q is not positive at {p:?}")));
            }
        }
        let mut prev = 0.0;
        for k in 0..=12 {
            let mut x = z.clone();
            x[0] = 10f64.powi(k - 3);
            let q = (self.q)(&x);
            if !(q > prev) {
                return Err(Error::Config("Q does not grow along the first coordinate ray".into()));
            }
            prev = q;
        }
        Ok(())
    }
}

/// Verdict of the limit sub-check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCheck {
    pub verdict: Verdict,
    /// `(s, α(s)/σ(s e^θ))` on a geometric grid.
    pub ratios: Vec<(f64, f64)>,
}

/// Estimates `lim_{s→∞} α(s)/σ(s e^θ)` on `s = 10^k` up to the domain cap of `α`.
pub fn limit_check(alpha: &ComparisonFn, sigma: &ComparisonFn, theta: f64) -> LimitCheck {
    let cap = alpha.domain_cap().max(10.0);
    let kmax = cap.log10().floor() as i32;
    let ratios: Vec<(f64, f64)> = (0..=kmax)
        .map(|k| {
            let s = 10f64.powi(k);
            let d = sigma.eval(s * theta.exp());
            (s, if d > 0.0 { alpha.eval(s) / d } else { f64::INFINITY })
        })
        .collect();
    let tail: Vec<f64> = ratios.iter().rev().take(4).map(|r| r.1).collect();
    let last = tail[0];
    let verdict = if tail.len() < 3 {
        Verdict::Inconclusive
    } else if last.is_infinite() || tail.iter().all(|&r| r > 1e-6) && {
        let (lo, hi) = tail[..3].iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        hi <= 1.1 * lo || tail[0] >= tail[1]
    } {
        Verdict::Pass
    } else if last < 1e-6 && tail.windows(2).all(|w| w[0] <= w[1]) {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    LimitCheck { verdict, ratios }
}

/// Result of [`check_growth_method`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub pass: bool,
    /// `D⁺V ≤ −α(Q(φ(0))) + γ(|𝔲|)`.
    pub dissipation: CheckReport,
    /// `∇Q(φ(0))·f(φ, 𝔲) ≤ σ(max_τ Q(φ(τ))) + γ(|𝔲|)`.
    pub gradient: CheckReport,
    pub limit: LimitCheck,
}

const GROWTH_MAX_POINTS: usize = 200;

fn max_q_on(phi: &HistoryFunction, q: &Scalar) -> f64 {
    let theta = phi.theta();
    let mut best = 0.0f64;
    let mut buf = vec![0.0; phi.dim()];
    for k in 0..=GROWTH_MAX_POINTS {
        let tau = -theta + theta * k as f64 / GROWTH_MAX_POINTS as f64;
        phi.at_into(tau, &mut buf);
        best = best.max(q(&buf));
    }
    for s in phi.segments() {
        phi.at_into(s.t0, &mut buf);
        best = best.max(q(&buf));
    }
    best
}

/// The three sub-checks of the growth-restriction method.
///
/// `space` supplies both histories and input values; pass a zero input
/// amplitude to test pure decay.
pub fn check_growth_method(sys: &DelaySystem, v: &LkfCandidate, gs: &GrowthSpec, space: &SampleSpace, tol: f64) -> Result<GrowthReport> {
    let theta = v.theta();
    let per_sample = (0..space.sample_count)
        .into_par_iter()
        .map(|i| {
            let s = space.sample(i, theta, sys.n, sys.m);
            let drift = sys.eval(&s.phi, &s.u);
            let est = driver_derivative(v, &s.phi, &drift, None)?;
            let un = norm(&s.u);
            let g = gs.gamma.eval(un);
            let head = s.phi.head().to_vec();
            let diss = Outcome {
                index: i,
                phi: s.phi.clone(),
                u: s.u.clone(),
                lhs: est.estimate,
                rhs: -gs.alpha.eval((gs.q)(&head)) + g,
                gated: true,
                tol: tol.max(10.0 * est.tolerance),
                note: None,
            };
            let grad = (gs.grad_q)(&head);
            let lhs: f64 = grad.iter().zip(&drift).map(|(a, b)| a * b).sum();
            let rhs = gs.sigma.eval(max_q_on(&s.phi, &gs.q)) + g;
            let gout = Outcome {
                index: i,
                phi: s.phi,
                u: s.u,
                lhs,
                rhs,
                gated: true,
                tol: tol * (1.0 + rhs.abs()),
                note: None,
            };
            Ok((diss, gout))
        })
        .collect::<Result<Vec<_>>>()?;
    let (d, g): (Vec<Outcome>, Vec<Outcome>) = per_sample.into_iter().unzip();
    let dissipation = CheckReport::collect("growth-dissipation", tol, &d);
    let gradient = CheckReport::collect("growth-gradient", tol, &g);
    let limit = limit_check(&gs.alpha, &gs.sigma, gs.theta);
    Ok(GrowthReport {
        pass: dissipation.pass && gradient.pass && limit.verdict == Verdict::Pass,
        dissipation,
        gradient,
        limit,
    })
}

/// A violating pair found by [`falsify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub phi_csv: String,
    pub u: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs − tol > 0`.
    pub margin: f64,
    pub evaluations: usize,
}

/// Search point: spline control values and an input value.
#[derive(Clone)]
struct Candidate {
    knots: Vec<Vec<f64>>,
    u: Vec<f64>,
}

impl Candidate {
    fn phi(&self, theta: f64) -> HistoryFunction {
        catmull_rom(theta, &self.knots)
    }
}

/// Smallest accepted evaluation budget.
pub const MIN_BUDGET: usize = 100;
const DESCENT_ITERS: usize = 20;

/// Random search over spline histories (control values in `[-R, R]`, inputs
/// in `[-A, A]`), then coordinate descent on the best gated candidate.
///
/// Returns the first pair whose margin is positive, or `None` when the
/// budget runs out.
pub fn falsify(cond: &Condition<'_>, space: &SampleSpace, budget: usize) -> Result<Option<Witness>> {
    if budget < MIN_BUDGET {
        return Err(Error::Config(format!("falsification budget must be at least {MIN_BUDGET}")));
    }
    let theta = cond.v.theta();
    let (n, m) = (cond.sys.n, cond.sys.m);
    let r = space.history_amplitude;
    let a = if cond.kind == ConditionKind::LocalDecay { 0.0 } else { space.input_amplitude };
    let mut evals = 0usize;
    let eval = |c: &Candidate, evals: &mut usize| -> Result<(f64, Evaluation)> {
        *evals += 1;
        let e = cond.evaluate(&c.phi(theta), &c.u)?;
        let score = if e.gated { e.margin() } else { f64::NEG_INFINITY };
        Ok((score, e))
    };
    let witness = |c: &Candidate, e: &Evaluation, evals: usize| Witness {
        phi_csv: c.phi(theta).to_csv(),
        u: c.u.clone(),
        lhs: e.lhs,
        rhs: e.rhs,
        margin: e.margin(),
        evaluations: evals,
    };
    let random_phase = budget / 2;
    let mut best: Option<(f64, Candidate)> = None;
    for i in 0..random_phase {
        let mut rng = space.rng(i);
        let c = Candidate {
            knots: (0..SPLINE_KNOTS)
                .map(|_| (0..n).map(|_| r * rng.gen_range(-1.0..=1.0)).collect())
                .collect(),
            u: (0..m).map(|_| a * rng.gen_range(-1.0..=1.0)).collect(),
        };
        let (score, e) = eval(&c, &mut evals)?;
        if e.violated() {
            return Ok(Some(witness(&c, &e, evals)));
        }
        if best.as_ref().map_or(true, |b| score > b.0) {
            best = Some((score, c));
        }
    }
    let Some((mut score, mut cur)) = best else {
        return Ok(None);
    };
    if score == f64::NEG_INFINITY {
        return Ok(None);
    }
    let mut step = 0.25 * r.max(a);
    for _ in 0..DESCENT_ITERS {
        let mut improved = false;
        let coords = SPLINE_KNOTS * n + m;
        for k in 0..coords {
            for dir in [1.0, -1.0] {
                if evals >= budget {
                    return Ok(None);
                }
                let mut c = cur.clone();
                if k < SPLINE_KNOTS * n {
                    let v = &mut c.knots[k / n][k % n];
                    *v = (*v + dir * step).clamp(-r, r);
                } else {
                    let v = &mut c.u[k - SPLINE_KNOTS * n];
                    *v = (*v + dir * step).clamp(-a, a);
                }
                let (s, e) = eval(&c, &mut evals)?;
                if e.violated() {
                    return Ok(Some(witness(&c, &e, evals)));
                }
                if s > score {
                    score = s;
                    cur = c;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(None)
}
