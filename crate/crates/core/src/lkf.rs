//! Lyapunov-Krasovskii functional candidates and their derivatives.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{compose, ComparisonFn, FnClass};
use crate::dynamics::{integrate, DelaySystem, InputSignal};
use crate::history::HistoryFunction;
use crate::quadrature::{integrate as quad, DEFAULT_TOL};
use crate::report::{CheckReport, Outcome};
use crate::sampling::SampleSpace;
use crate::{Error, Result};

/// Default step sequence for derivative quotients.
pub const DEFAULT_H: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// A pointwise weight `w: ℝⁿ → ℝ₊` with bounds
/// `lower(|x|) ≤ w(x) ≤ upper(|x|)`.
#[derive(Clone)]
pub struct Weight {
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub lower: ComparisonFn,
    pub upper: ComparisonFn,
    label: String,
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Weight({})", self.label)
    }
}

impl Weight {
    pub fn new<F>(label: impl Into<String>, lower: ComparisonFn, upper: ComparisonFn, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            lower,
            upper,
            label: label.into(),
        }
    }

    /// `|x|²`.
    pub fn squared_norm() -> Self {
        let sq = ComparisonFn::power(1.0, 2.0).expect("valid power");
        Self::new("|x|^2", sq.clone(), sq, |x| x.iter().map(|v| v * v).sum())
    }

    pub fn zero() -> Self {
        Self::new("0", ComparisonFn::zero(), ComparisonFn::zero(), |_| 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Structural tag of a candidate.
#[derive(Debug, Clone)]
pub enum Family {
    /// `κ|φ(0)|² + ∫_{-θ}^0 e^{cs} |φ(s)|² ds`.
    QuadExp { c: f64, kappa: f64 },
    /// `κ w₁(φ(0)) + ∫_{-θ}^0 e^{cs} w₂(φ(s)) ds`.
    WeightedIntegral { w1: Weight, w2: Weight, c: f64, kappa: f64 },
    Opaque,
}

type Functional = Arc<dyn Fn(&HistoryFunction) -> f64 + Send + Sync>;

/// A functional `V` with sandwich pair `ψ₁(|φ(0)|) ≤ V(φ) ≤ ψ₂(‖φ‖)`.
#[derive(Clone)]
pub struct LkfCandidate {
    theta: f64,
    evaluator: Functional,
    pub psi1: ComparisonFn,
    pub psi2: ComparisonFn,
    pub family: Family,
    label: String,
}

impl fmt::Debug for LkfCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LkfCandidate")
            .field("label", &self.label)
            .field("theta", &self.theta)
            .field("family", &self.family)
            .finish()
    }
}

pub(crate) fn weighted_integral(phi: &HistoryFunction, c: f64, w: &(dyn Fn(&[f64]) -> f64 + Send + Sync)) -> f64 {
    let n = phi.dim();
    let x = std::cell::RefCell::new(vec![0.0; n]);
    phi.segments()
        .iter()
        .map(|s| {
            quad(
                |t| {
                    let mut x = x.borrow_mut();
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi = s.eval_coord(t, i);
                    }
                    (c * t).exp() * w(&x)
                },
                s.t0,
                s.t1,
                DEFAULT_TOL,
            )
        })
        .sum()
}

impl LkfCandidate {
    pub fn opaque<F>(theta: f64, label: impl Into<String>, psi1: ComparisonFn, psi2: ComparisonFn, f: F) -> Self
    where
        F: Fn(&HistoryFunction) -> f64 + Send + Sync + 'static,
    {
        Self {
            theta,
            evaluator: Arc::new(f),
            psi1,
            psi2,
            family: Family::Opaque,
            label: label.into(),
        }
    }

    /// The quadratic-exponential family, `c ≥ 0`, `κ > 0`, with
    /// `ψ₁(s) = κs²` and `ψ₂(s) = (κ + θ)s²`.
    pub fn quad_exp(theta: f64, c: f64, kappa: f64) -> Result<Self> {
        if !(c >= 0.0 && kappa > 0.0 && c.is_finite() && kappa.is_finite()) {
            return Err(Error::Config(format!("quad-exp needs c ≥ 0 and κ > 0, got c={c}, κ={kappa}")));
        }
        let sq = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        Ok(Self {
            theta,
            evaluator: Arc::new(move |phi: &HistoryFunction| kappa * sq(phi.head()) + weighted_integral(phi, c, &sq)),
            psi1: ComparisonFn::power(kappa, 2.0)?,
            psi2: ComparisonFn::power(kappa + theta, 2.0)?,
            family: Family::QuadExp { c, kappa },
            label: format!("quad-exp(c={c},kappa={kappa})"),
        })
    }

    /// `V(φ) = ‖φ‖`.
    pub fn sup_norm(theta: f64) -> Self {
        let mut v = Self::opaque(theta, "sup-norm", ComparisonFn::identity(), ComparisonFn::identity(), |phi| {
            phi.sup_norm()
        });
        v.label = "sup-norm".into();
        v
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `(c, κ)` for the quadratic-exponential family.
    pub fn quad_exp_params(&self) -> Option<(f64, f64)> {
        match self.family {
            Family::QuadExp { c, kappa } => Some((c, kappa)),
            _ => None,
        }
    }

    pub fn eval(&self, phi: &HistoryFunction) -> Result<f64> {
        if (phi.theta() - self.theta).abs() > 1e-12 * self.theta {
            return Err(Error::DelayMismatch {
                expected: self.theta,
                found: phi.theta(),
            });
        }
        Ok((self.evaluator)(phi))
    }

    /// Evaluation without the delay check, for hot loops.
    pub(crate) fn eval_unchecked(&self, phi: &HistoryFunction) -> f64 {
        (self.evaluator)(phi)
    }
}

/// Checks `ψ₁(|φ(0)|) ≤ V(φ) ≤ ψ₂(‖φ‖)` on samples; with `coercive` the
/// lower bound uses `ψ₁(‖φ‖)` instead.
pub fn sandwich_check(v: &LkfCandidate, space: &SampleSpace, n: usize, coercive: bool) -> CheckReport {
    let outcomes: Vec<Outcome> = space
        .samples(v.theta, n, 0)
        .into_par_iter()
        .map(|s| {
            let val = v.eval_unchecked(&s.phi);
            let norm = s.phi.sup_norm();
            let head = s.phi.head().iter().map(|x| x * x).sum::<f64>().sqrt();
            let low = v.psi1.eval(if coercive { norm } else { head });
            let high = v.psi2.eval(norm);
            let (lhs, rhs) = if low - val >= val - high { (low, val) } else { (val, high) };
            Outcome {
                index: s.index,
                phi: s.phi,
                u: vec![],
                lhs,
                rhs,
                gated: true,
                tol: 1e-9 * (1.0 + val.abs()),
                note: None,
            }
        })
        .collect();
    let id = if coercive { "sandwich-coercive" } else { "sandwich" };
    CheckReport::collect(id, 1e-9, &outcomes)
}

/// Finite-difference quotients and their extrapolated limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeEstimate {
    pub h: Vec<f64>,
    pub quotients: Vec<f64>,
    /// First-order Richardson values from consecutive pairs.
    pub extrapolated: Vec<f64>,
    pub estimate: f64,
    pub tolerance: f64,
    pub converged: bool,
}

impl DerivativeEstimate {
    pub fn from_quotients(h: Vec<f64>, quotients: Vec<f64>) -> Self {
        let k = quotients.len();
        let extrapolated: Vec<f64> = (1..k)
            .map(|i| {
                let r = h[i - 1] / h[i];
                (r * quotients[i] - quotients[i - 1]) / (r - 1.0)
            })
            .collect();
        let (estimate, tolerance) = match extrapolated.len() {
            0 => (quotients[k - 1], f64::INFINITY),
            1 => (extrapolated[0], (quotients[1] - quotients[0]).abs() + 1e-9),
            m => (extrapolated[m - 1], (extrapolated[m - 1] - extrapolated[m - 2]).abs() + 1e-9),
        };
        let diffs: Vec<f64> = quotients.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let scale = quotients.iter().fold(1.0f64, |a, q| a.max(q.abs()));
        let converged = estimate.is_finite() && diffs.windows(2).all(|d| d[1] <= d[0] + 1e-9 * scale);
        Self {
            h,
            quotients,
            extrapolated,
            estimate,
            tolerance,
            converged,
        }
    }
}

fn check_h_seq(h_seq: &[f64], theta: f64) -> Result<()> {
    if h_seq.is_empty() {
        return Err(Error::BadStep { h: f64::NAN, theta });
    }
    for (i, &h) in h_seq.iter().enumerate() {
        if !(h > 0.0 && h < theta) || (i > 0 && !(h < h_seq[i - 1])) {
            return Err(Error::BadStep { h, theta });
        }
    }
    Ok(())
}

/// Default `h` sequence restricted to `(0, θ)`.
pub fn default_h_seq(theta: f64) -> Vec<f64> {
    let v: Vec<f64> = DEFAULT_H.iter().copied().filter(|&h| h < theta).collect();
    if v.len() >= 3 {
        v
    } else {
        (0..5).map(|k| theta * 1e-2 * 10f64.powi(-k)).collect()
    }
}

/// Driver derivative along the pseudotrajectory with the given drift.
pub fn driver_derivative(v: &LkfCandidate, phi: &HistoryFunction, drift: &[f64], h_seq: Option<&[f64]>) -> Result<DerivativeEstimate> {
    let default;
    let hs = match h_seq {
        Some(h) => h,
        None => {
            default = default_h_seq(v.theta);
            &default
        }
    };
    check_h_seq(hs, v.theta)?;
    let v0 = v.eval(phi)?;
    let q = hs
        .iter()
        .map(|&h| Ok((v.eval_unchecked(&phi.pseudotrajectory(drift, h)?) - v0) / h))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DerivativeEstimate::from_quotients(hs.to_vec(), q))
}

/// Upper right Dini derivative along the true solution from `φ`.
pub fn dini_derivative(
    sys: &DelaySystem,
    v: &LkfCandidate,
    phi: &HistoryFunction,
    u: &InputSignal,
    h_seq: Option<&[f64]>,
) -> Result<DerivativeEstimate> {
    let default;
    let hs = match h_seq {
        Some(h) => h,
        None => {
            default = default_h_seq(v.theta);
            &default
        }
    };
    check_h_seq(hs, v.theta)?;
    let v0 = v.eval(phi)?;
    let q = hs
        .iter()
        .map(|&h| {
            let tr = integrate(sys, phi, u, h, h / 4.0)?;
            if let Some(t) = tr.escape {
                return Err(Error::Escape(t));
            }
            Ok((v.eval_unchecked(&tr.window(h)?) - v0) / h)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DerivativeEstimate::from_quotients(hs.to_vec(), q))
}

/// Upper end of the cached antiderivative grid in [`build_scaling`].
pub const SCALING_GRID_MAX: f64 = 100.0;
const SCALING_KNOTS: usize = 2000;

/// `ξ(r) = ∫₀ʳ ds / σ(ψ₁⁻¹(s))`.
///
/// The antiderivative is tabulated on a uniform grid over
/// `[0, SCALING_GRID_MAX]`; values in between add one adaptive quadrature
/// over the partial cell, values beyond integrate from the last knot.
pub fn build_scaling(sigma: &ComparisonFn, psi1: &ComparisonFn) -> Result<ComparisonFn> {
    let (s1, p1) = (sigma.clone(), psi1.clone());
    let g = Arc::new(move |s: f64| -> f64 {
        let x = p1.invert(s.max(0.0)).unwrap_or(f64::NAN);
        1.0 / s1.eval(x)
    });
    let dx = SCALING_GRID_MAX / SCALING_KNOTS as f64;
    let mut cum = vec![0.0; SCALING_KNOTS + 1];
    for k in 0..SCALING_KNOTS {
        let (a, b) = (k as f64 * dx, (k + 1) as f64 * dx);
        for x in [a, 0.5 * (a + b)] {
            let gx = g(x);
            if !(gx.is_finite() && gx > 0.0) {
                return Err(Error::DivergentIntegrand { at: x });
            }
        }
        let piece = quad(|s| g(s), a, b, 1e-13);
        if !piece.is_finite() {
            return Err(Error::DivergentIntegrand { at: a });
        }
        cum[k + 1] = cum[k] + piece;
    }
    if cum.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NotCertified {
            class: "Kinf",
            at: 0.0,
            reason: "scaling not strictly increasing".into(),
        });
    }
    let cum = Arc::new(cum);
    let label = format!("scaling[{} / {}]", sigma.label(), psi1.label());
    Ok(ComparisonFn::uncertified(FnClass::Kinf, label, SCALING_GRID_MAX, move |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        let k = ((r / dx).floor() as usize).min(SCALING_KNOTS);
        let a = k as f64 * dx;
        if r == a {
            return cum[k];
        }
        cum[k] + quad(|s| g(s), a, r, 1e-13)
    }))
}

/// `W = ξ∘V` with sandwich pair `(ξ∘ψ₁, ξ∘ψ₂)`.
pub fn scale_lkf(v: &LkfCandidate, xi: &ComparisonFn) -> Result<LkfCandidate> {
    let (inner, x) = (v.evaluator.clone(), xi.clone());
    Ok(LkfCandidate {
        theta: v.theta,
        evaluator: Arc::new(move |phi| x.eval(inner(phi))),
        psi1: compose(xi, &v.psi1)?,
        psi2: compose(xi, &v.psi2)?,
        family: Family::Opaque,
        label: format!("{}∘{}", xi.label(), v.label),
    })
}

/// From `D⁺V ≤ -α(|φ(0)|) + χ(|𝔲|)` to implication form:
/// returns `(χ', α') = (α⁻¹∘2χ, α/2)`.
pub fn dissipative_to_implication(alpha: &ComparisonFn, chi: &ComparisonFn) -> Result<(ComparisonFn, ComparisonFn)> {
    let half = alpha.scale(0.5)?;
    if chi.is_zero() {
        return Ok((ComparisonFn::zero(), half));
    }
    let chi2 = compose(&alpha.inverse()?, &chi.scale(2.0)?)?;
    Ok((chi2, half))
}

/// `W_{c,κ}(φ) = κ w₁(φ(0)) + ∫_{-θ}^0 e^{cs} w₂(φ(s)) ds` with
/// `ψ₁ = κ·w₁.lower` and `ψ₂ = κ·w₁.upper + θ·w₂.upper`.
pub fn exponential_trick(w1: &Weight, w2: &Weight, c: f64, kappa: f64, theta: f64) -> Result<LkfCandidate> {
    if !(c >= 0.0 && kappa > 0.0) {
        return Err(Error::Config(format!("exponential trick needs c ≥ 0 and κ > 0, got c={c}, κ={kappa}")));
    }
    let psi1 = w1.lower.scale(kappa)?;
    let psi2 = if w2.upper.is_zero() {
        w1.upper.scale(kappa)?
    } else {
        w1.upper.scale(kappa)?.add(&w2.upper.scale(theta)?)?
    };
    let (a, b) = (w1.clone(), w2.clone());
    let skip_integral = w2.upper.is_zero();
    Ok(LkfCandidate {
        theta,
        evaluator: Arc::new(move |phi| {
            let head = kappa * a.eval(phi.head());
            if skip_integral {
                head
            } else {
                head + weighted_integral(phi, c, &*b.f)
            }
        }),
        psi1,
        psi2,
        family: Family::WeightedIntegral {
            w1: w1.clone(),
            w2: w2.clone(),
            c,
            kappa,
        },
        label: format!("weighted(c={c},kappa={kappa},w1={},w2={})", w1.label, w2.label),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{spike, HistoryGenerator};

    fn exp_hist() -> HistoryFunction {
        HistoryFunction::sample_with_derivative(1.0, 1, 64, |t| vec![t.exp()], |t| vec![t.exp()]).unwrap()
    }

    #[test]
    fn quad_exp_examples() {
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        assert_eq!(v.eval(&HistoryFunction::zero(1.0, 1)).unwrap(), 0.0);
        let one = HistoryFunction::constant(1.0, &[1.0]).unwrap();
        assert!((v.eval(&one).unwrap() - 2.0).abs() < 1e-14);
        let v = LkfCandidate::quad_exp(1.0, 1.0, 2.0).unwrap();
        let want = 2.0 + (1.0 - (-3f64).exp()) / 3.0;
        assert!((v.eval(&exp_hist()).unwrap() - want).abs() < 1e-9);
        assert!(matches!(v.eval(&HistoryFunction::zero(2.0, 1)), Err(Error::DelayMismatch { .. })));
    }

    #[test]
    fn quad_exp_matches_trapezoid() {
        let phi = HistoryFunction::sample(1.0, 2, 16, |t| vec![(5.0 * t).sin(), t * t - 0.3]).unwrap();
        let (c, kappa) = (0.7, 1.3);
        let v = LkfCandidate::quad_exp(1.0, c, kappa).unwrap().eval(&phi).unwrap();
        let n = 100_000;
        let f = |t: f64| {
            let x = phi.eval(t).unwrap();
            (c * t).exp() * (x[0] * x[0] + x[1] * x[1])
        };
        let mut trap = 0.5 * (f(-1.0) + f(0.0));
        for k in 1..n {
            trap += f(-1.0 + k as f64 / n as f64);
        }
        trap /= n as f64;
        let x0 = phi.head();
        let want = kappa * (x0[0] * x0[0] + x0[1] * x0[1]) + trap;
        assert!((v - want).abs() < 1e-8);
    }

    #[test]
    fn sandwich_examples() {
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(5, HistoryGenerator::RandomCubicSpline, 3.0, 0.0, 200);
        assert!(sandwich_check(&v, &space, 1, false).pass);
        let spikes = SampleSpace::new(5, HistoryGenerator::Spikes, 3.0, 0.0, 50);
        let rep = sandwich_check(&v, &spikes, 1, true);
        assert!(!rep.pass);
        let norm = LkfCandidate::sup_norm(1.0);
        assert!(sandwich_check(&norm, &space, 1, false).pass);
        assert!(sandwich_check(&norm, &spikes, 1, true).pass);
    }

    #[test]
    fn driver_examples() {
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let one = HistoryFunction::constant(1.0, &[1.0]).unwrap();
        let d = driver_derivative(&v, &one, &[0.0], None).unwrap();
        assert!(d.estimate.abs() < 1e-8, "{d:?}");
        let z = HistoryFunction::zero(1.0, 1);
        assert_eq!(driver_derivative(&v, &z, &[0.0], None).unwrap().estimate, 0.0);
        // V = x(0)² + ∫φ²: drift d at φ ≡ 1 gives 2d + 1 - 1
        let d = driver_derivative(&v, &one, &[-0.7], None).unwrap();
        assert!((d.estimate + 1.4).abs() < 1e-7, "{d:?}");
        assert!(d.converged);
    }

    #[test]
    fn driver_rejects_bad_steps() {
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let one = HistoryFunction::constant(1.0, &[1.0]).unwrap();
        assert!(driver_derivative(&v, &one, &[0.0], Some(&[1e-3, 1e-2])).is_err());
        assert!(driver_derivative(&v, &one, &[0.0], Some(&[2.0, 1e-2])).is_err());
    }

    #[test]
    fn dini_examples() {
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let one = HistoryFunction::constant(1.0, &[1.0]).unwrap();
        let zero = DelaySystem::zero(1, 1, 1.0);
        let u = InputSignal::zero(1, 1.0);
        assert!(dini_derivative(&zero, &v, &one, &u, None).unwrap().estimate.abs() < 1e-8);
        let lin = DelaySystem::linear_delay(0.0, -1.0, 0.0, 1.0).unwrap();
        let d = dini_derivative(&lin, &v, &one, &u, None).unwrap();
        assert!((d.estimate + 2.0).abs() < 1e-6, "{d:?}");
    }

    #[test]
    fn dini_matches_driver_on_linear_system() {
        let sys = DelaySystem::linear_delay(-1.0, 0.5, 1.0, 1.0).unwrap();
        let v = LkfCandidate::quad_exp(1.0, 0.5, 2.0).unwrap();
        let space = SampleSpace::new(9, HistoryGenerator::RandomCubicSpline, 2.0, 1.0, 10);
        for s in space.samples(1.0, 1, 1) {
            let drift = sys.eval(&s.phi, &s.u);
            let a = driver_derivative(&v, &s.phi, &drift, None).unwrap();
            let b = dini_derivative(&sys, &v, &s.phi, &InputSignal::constant(&s.u, 1.0), None).unwrap();
            let tol = (1e-3f64).max(a.tolerance + b.tolerance);
            assert!((a.estimate - b.estimate).abs() <= tol, "{} vs {}", a.estimate, b.estimate);
        }
    }

    #[test]
    fn build_scaling_examples() {
        let id = ComparisonFn::identity();
        let xi = build_scaling(&ComparisonFn::exp_decay(1.0).unwrap(), &id).unwrap();
        assert!((xi.eval(1.0) - (1f64.exp() - 1.0)).abs() < 1e-8);
        assert_eq!(xi.eval(0.0), 0.0);
        let one = ComparisonFn::uncertified(FnClass::L, "one", 1e6, |_| 1.0);
        let xi = build_scaling(&one, &id).unwrap();
        for r in [0.3, 2.0, 57.1] {
            assert!((xi.eval(r) - r).abs() < 1e-10);
        }
        let recip = ComparisonFn::new(FnClass::L, "1/(1+s)", 1e6, |s| 1.0 / (1.0 + s)).unwrap();
        let xi = build_scaling(&recip, &id).unwrap();
        assert!((xi.eval(2.0) - 4.0).abs() < 1e-10);
        let dead = ComparisonFn::uncertified(FnClass::L, "dead", 1e6, |s| if s > 3.0 { 0.0 } else { 1.0 });
        assert!(matches!(build_scaling(&dead, &id), Err(Error::DivergentIntegrand { .. })));
    }

    #[test]
    fn scale_lkf_examples() {
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let one = HistoryFunction::constant(1.0, &[1.0]).unwrap();
        let w = scale_lkf(&v, &ComparisonFn::identity()).unwrap();
        assert_eq!(w.eval(&one).unwrap(), v.eval(&one).unwrap());
        let w = scale_lkf(&v, &ComparisonFn::power(1.0, 2.0).unwrap()).unwrap();
        assert!((w.eval(&one).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn scale_lkf_chain_rule() {
        let sys = DelaySystem::linear_delay(-1.0, 0.5, 1.0, 1.0).unwrap();
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let xi = ComparisonFn::power(1.0, 1.5).unwrap();
        let w = scale_lkf(&v, &xi).unwrap();
        let space = SampleSpace::new(4, HistoryGenerator::RandomCubicSpline, 2.0, 1.0, 10);
        for s in space.samples(1.0, 1, 1) {
            let drift = sys.eval(&s.phi, &s.u);
            let dv = driver_derivative(&v, &s.phi, &drift, None).unwrap();
            let dw = driver_derivative(&w, &s.phi, &drift, None).unwrap();
            let chain = xi.derivative(v.eval(&s.phi).unwrap()) * dv.estimate;
            assert!((dw.estimate - chain).abs() <= 1e-4 * (1.0 + chain.abs()), "{} vs {chain}", dw.estimate);
            if dv.estimate.abs() > 1e-6 {
                assert_eq!(dw.estimate.signum(), dv.estimate.signum());
            }
        }
    }

    #[test]
    fn implication_transform_examples() {
        let id = ComparisonFn::identity();
        let (chi, alpha) = dissipative_to_implication(&id, &id).unwrap();
        assert!((chi.eval(3.0) - 6.0).abs() < 1e-9);
        assert_eq!(alpha.eval(3.0), 1.5);
        let (chi, _) = dissipative_to_implication(&ComparisonFn::power(1.0, 2.0).unwrap(), &id).unwrap();
        for s in [0.5, 2.0, 8.0] {
            assert!((chi.eval(s) - (2.0 * s).sqrt()).abs() < 1e-9);
        }
        let (chi, _) = dissipative_to_implication(&id, &ComparisonFn::zero()).unwrap();
        assert!(chi.is_zero());
        assert_eq!(chi.eval(5.0), 0.0);
    }

    #[test]
    fn exponential_trick_examples() {
        let sq = Weight::squared_norm();
        let w = exponential_trick(&sq, &sq, 0.0, 1.0, 1.0).unwrap();
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(2, HistoryGenerator::RandomFourier, 2.0, 0.0, 20);
        for s in space.samples(1.0, 1, 0) {
            assert!((w.eval(&s.phi).unwrap() - v.eval(&s.phi).unwrap()).abs() < 1e-10);
        }
        let head_only = exponential_trick(&sq, &Weight::zero(), 3.0, 2.5, 1.0).unwrap();
        let phi = spike(1.0, -0.5, 0.1, &[4.0]).scale(1.0);
        assert_eq!(head_only.eval(&phi).unwrap(), 0.0);
        let one = HistoryFunction::constant(1.0, &[1.0]).unwrap();
        assert_eq!(head_only.eval(&one).unwrap(), 2.5);
        let w = exponential_trick(&sq, &sq, 1.0, 2.0, 1.0).unwrap();
        assert!((w.eval(&exp_hist()).unwrap() - 2.316738).abs() < 1e-6);
    }
}
