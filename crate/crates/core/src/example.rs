//! The scalar benchmark
//!
//! ```text
//! x'(t) = -x(t) + x(t-1) - ψ(x(t)² - u(t)²) x(t)
//! ```
//!
//! with a flat bump `ψ`, the functionals
//! `V_{c,κ}(φ) = κφ(0)² + ∫_{-1}^0 e^{cs} φ(s)² ds`, and checks of which
//! dissipation conditions they can and cannot satisfy.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::certify::{check_condition, check_growth_method, falsify, Condition, ConditionKind, GrowthSpec};
use crate::comparison::{ComparisonFn, FnClass};
use crate::dynamics::DelaySystem;
use crate::estimate::{estimate_ugs, fit_iss_kl, IssOptions, RunOptions};
use crate::history::{HistoryAccess, HistoryFunction};
use crate::lkf::{driver_derivative, weighted_integral, LkfCandidate};
use crate::report::{CheckReport, SCHEMA_VERSION};
use crate::sampling::{HistoryGenerator, SampleSpace};
use crate::{Error, Result};

/// Delay of the benchmark.
pub const THETA: f64 = 1.0;

/// `ψ(s) = e^{-1/s}/(1+s)²` for `s > 0`, `0` otherwise.
///
/// Smooth, flat at 0, positive on `(0, ∞)`, with `ψ(s)s → 0`. The maximum is
/// `ψ(1) = e⁻¹/4`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BumpPsi;

impl BumpPsi {
    pub fn eval(&self, s: f64) -> f64 {
        if s > 0.0 {
            (-1.0 / s).exp() / ((1.0 + s) * (1.0 + s))
        } else {
            0.0
        }
    }

    /// `sup ψ = ψ(1)`.
    pub fn max_value(&self) -> f64 {
        self.eval(1.0)
    }
}

/// The benchmark system, `n = m = 1`, `θ = 1`.
pub fn example_system(psi: BumpPsi) -> DelaySystem {
    DelaySystem::new(1, 1, THETA, "bump-example", move |phi: &dyn HistoryAccess, u: &[f64]| {
        let x0 = phi.at1(0.0);
        let x1 = phi.at1(-THETA);
        vec![-x0 + x1 - psi.eval(x0 * x0 - u[0] * u[0]) * x0]
    })
    .expect("the benchmark vanishes at the origin")
}

/// `K = e^c κ² + 1 − 2κ`.
pub fn k_constant(c: f64, kappa: f64) -> f64 {
    c.exp() * kappa * kappa + 1.0 - 2.0 * kappa
}

/// Closed form of the Driver derivative of `V_{c,κ}`:
///
/// ```text
/// −(2κψ(φ(0)² − 𝔲²) − K)φ(0)² − (e^{c/2}κφ(0) − e^{−c/2}φ(−1))² − c∫e^{cs}φ(s)² ds
/// ```
pub fn driver_closed_form(phi: &HistoryFunction, u: f64, c: f64, kappa: f64, psi: BumpPsi) -> f64 {
    let p0 = phi.at1(0.0);
    let p1 = phi.at1(-THETA);
    let integral = weighted_integral(phi, c, &|x: &[f64]| x[0] * x[0]);
    let k = k_constant(c, kappa);
    let cross = (0.5 * c).exp() * kappa * p0 - (-0.5 * c).exp() * p1;
    -(2.0 * kappa * psi.eval(p0 * p0 - u * u) - k) * p0 * p0 - cross * cross - c * integral
}

const TILDE_GRID: usize = 64;

/// `ψ̃(s) = min ψ` over `[¾s², s²]`: dense grid, then golden-section
/// refinement around the best grid point.
pub fn psi_tilde(s: f64, psi: BumpPsi) -> f64 {
    if !(s > 0.0) {
        return 0.0;
    }
    let (a, b) = (0.75 * s * s, s * s);
    let h = (b - a) / TILDE_GRID as f64;
    let (mut k_best, mut best) = (0, f64::INFINITY);
    for k in 0..=TILDE_GRID {
        let v = psi.eval(a + k as f64 * h);
        if v < best {
            best = v;
            k_best = k;
        }
    }
    let (mut lo, mut hi) = (a + k_best.saturating_sub(1) as f64 * h, (a + (k_best + 1) as f64 * h).min(b));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if psi.eval(x1) <= psi.eval(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    best.min(psi.eval(0.5 * (lo + hi)))
}

/// `α(s) = 2ψ̃(s)s²`, positive definite but not of class K (it tends to 0).
///
/// Left uncertified: it underflows to 0 for `s` below about 0.04.
pub fn alpha_example(psi: BumpPsi) -> ComparisonFn {
    ComparisonFn::uncertified(FnClass::PD, "2*psi_tilde(s)*s^2", 1e3, move |s| 2.0 * psi_tilde(s, psi) * s * s)
}

/// Constants `(M, C)` with `ψ(s) ≤ C s²` for `0 ≤ s ≤ M`, from a scan.
pub fn quad_domination(psi: BumpPsi) -> (f64, f64) {
    let grid: Vec<f64> = (0..=600).map(|k| 10f64.powf(-4.0 + k as f64 / 120.0)).collect();
    let c = 1.01 * grid.iter().map(|&s| psi.eval(s) / (s * s)).fold(0.0, f64::max);
    let m = grid
        .iter()
        .take_while(|&&s| psi.eval(s) <= c * s * s)
        .last()
        .copied()
        .unwrap_or(grid[0]);
    (m, c)
}

const DELTAS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

/// A history with `D⁺V_{c,κ}(δφ, 0) > 0` for `δ ∈ {1, ½, ¼, ⅛}`.
///
/// `φ(0)` is small enough for `φ(0)² ≤ M` and `6κCφ(0)⁴ ≤ K`, and
/// `φ(−1) = e^c κ φ(0)`. The interior is a monotone cubic bridge when that
/// keeps `3c∫e^{cs}φ² ≤ Kφ(0)²`; otherwise the history dips to zero in the
/// interior, with the dip widened until the integral condition holds.
pub fn counterexample_phi(c: f64, kappa: f64, psi: BumpPsi) -> Result<HistoryFunction> {
    if !(kappa > 0.0 && c >= 0.0) {
        return Err(Error::ConstructionFailed(format!("need c ≥ 0 and κ > 0, got c={c}, κ={kappa}")));
    }
    let k = k_constant(c, kappa);
    if !(k > 0.0) {
        return Err(Error::ConstructionFailed(format!("K = {k} is not positive; (c, κ) = (0, 1) admits no witness")));
    }
    let (m, cc) = quad_domination(psi);
    let p0 = 0.5 * m.min((k / (6.0 * kappa * cc)).sqrt()).sqrt();
    let p1 = c.exp() * kappa * p0;
    let integral_ok = |phi: &HistoryFunction| 3.0 * c * weighted_integral(phi, c, &|x: &[f64]| x[0] * x[0]) <= k * p0 * p0;
    let mut phi = HistoryFunction::scalar_from_knots(THETA, &[(-THETA, p1, 0.0), (0.0, p0, 0.0)])?;
    let mut w = 0.25;
    while !integral_ok(&phi) {
        if w < 1e-9 {
            return Err(Error::ConstructionFailed(format!("integral condition unmet for (c, κ) = ({c}, {kappa})")));
        }
        phi = HistoryFunction::scalar_from_knots(
            THETA,
            &[(-THETA, p1, 0.0), (-THETA + w, 0.0, 0.0), (-w, 0.0, 0.0), (0.0, p0, 0.0)],
        )?;
        w *= 0.5;
    }
    for d in DELTAS {
        let v = driver_closed_form(&phi.scale(d), 0.0, c, kappa, psi);
        if !(v > 0.0) {
            return Err(Error::ConstructionFailed(format!(
                "D⁺V = {v} at δ = {d} for (c, κ) = ({c}, {kappa})"
            )));
        }
    }
    Ok(phi)
}

/// The six claims about the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimItem {
    I,
    Ii,
    Iii,
    Iv,
    V,
    Vi,
}

impl ClaimItem {
    pub const ALL: [ClaimItem; 6] = [Self::I, Self::Ii, Self::Iii, Self::Iv, Self::V, Self::Vi];

    pub fn id(self) -> &'static str {
        match self {
            Self::I => "i",
            Self::Ii => "ii",
            Self::Iii => "iii",
            Self::Iv => "iv",
            Self::V => "v",
            Self::Vi => "vi",
        }
    }

    /// Items i and ii are positive claims; iii to vi claim impossibility.
    pub fn expects_pass(self) -> bool {
        matches!(self, Self::I | Self::Ii)
    }

    pub fn claim(self) -> &'static str {
        match self {
            Self::I => "V_{0,1} is a UGS LKF with zero gain and an ISS LKF in implication form",
            Self::Ii => "the system is ISS",
            Self::Iii => "for (c, κ) ≠ (0, 1), V_{c,κ} increases near 0 along some direction with zero input",
            Self::Iv => "no V_{c,κ} has LKF-wise dissipation",
            Self::V => "no V_{c,κ} satisfies the mixed implication condition with pointwise decay",
            Self::Vi => "no V_{c,κ} satisfies the growth-restriction dissipation inequality",
        }
    }
}

impl fmt::Display for ClaimItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for ClaimItem {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|i| i.id() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown item '{s}', expected one of i, ii, iii, iv, v, vi"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClaimConfig {
    pub seed: u64,
    pub samples: usize,
    pub history_amplitude: f64,
    pub input_amplitude: f64,
    pub c_grid: Vec<f64>,
    pub kappa_grid: Vec<f64>,
    /// Horizon of the ISS fit in item ii.
    pub horizon: f64,
    pub fit_samples: usize,
    pub heldout_seeds: usize,
    pub falsify_budget: usize,
}

impl Default for ClaimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 200,
            history_amplitude: 3.0,
            input_amplitude: 2.0,
            c_grid: vec![0.0, 0.5, 1.0],
            kappa_grid: vec![0.5, 1.0, 2.0],
            horizon: 20.0,
            fit_samples: 40,
            heldout_seeds: 2,
            falsify_budget: 2000,
        }
    }
}

/// One verdict-bearing check inside an item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCheck {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub expected_violation: bool,
    pub observed_violation: bool,
    pub detail: String,
}

impl SubCheck {
    pub fn matches(&self) -> bool {
        self.expected_violation == self.observed_violation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub schema_version: u32,
    pub item: ClaimItem,
    pub claim: String,
    /// `pass`, `expected-fail-confirmed` or `mismatch`.
    pub verdict: String,
    pub mismatches: usize,
    pub checks: Vec<SubCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<CheckReport>,
    pub evidence: String,
}

impl ClaimReport {
    pub fn ok(&self) -> bool {
        self.mismatches == 0
    }
}

fn sub(name: impl Into<String>, ck: Option<(f64, f64)>, expected_violation: bool, observed_violation: bool, detail: String) -> SubCheck {
    SubCheck {
        name: name.into(),
        c: ck.map(|p| p.0),
        kappa: ck.map(|p| p.1),
        expected_violation,
        observed_violation,
        detail,
    }
}

/// `(α, χ)` pairs of class K∞ tried against each impossibility witness.
fn comparison_pairs() -> Vec<(ComparisonFn, ComparisonFn)> {
    let id = ComparisonFn::identity();
    let small = ComparisonFn::linear(1e-3).expect("positive slope");
    let sq = ComparisonFn::power(1.0, 2.0).expect("valid power");
    let big = ComparisonFn::linear(10.0).expect("positive slope");
    vec![(id.clone(), id.clone()), (small, big), (sq.clone(), sq)]
}

fn grid(cfg: &ClaimConfig, include_01: bool) -> Vec<(f64, f64)> {
    let mut g = Vec::new();
    for &c in &cfg.c_grid {
        for &k in &cfg.kappa_grid {
            if include_01 || !(c == 0.0 && k == 1.0) {
                g.push((c, k));
            }
        }
    }
    g
}

/// Bump on `(-1, 0)` of the given height with prescribed end values.
fn bump(ends: f64, height: f64) -> Result<HistoryFunction> {
    HistoryFunction::scalar_from_knots(THETA, &[(-THETA, ends, 0.0), (-0.5 * THETA, height, 0.0), (0.0, ends, 0.0)])
}

/// Evaluates `kind` at a fixed witness for each comparison pair.
fn witness_checks(
    out: &mut Vec<SubCheck>,
    kind: ConditionKind,
    sys: &DelaySystem,
    v: &LkfCandidate,
    ck: (f64, f64),
    phi_for_chi: &dyn Fn(&ComparisonFn) -> Result<(HistoryFunction, f64)>,
) -> Result<()> {
    for (alpha, chi) in comparison_pairs() {
        let (phi, u) = phi_for_chi(&chi)?;
        let e = Condition::new(kind, sys, v, &alpha, &chi).evaluate(&phi, &[u])?;
        let closed = driver_closed_form(&phi, u, ck.0, ck.1, BumpPsi);
        out.push(sub(
            format!("{}[alpha={}, chi={}]", kind.id(), alpha.label(), chi.label()),
            Some(ck),
            true,
            e.violated(),
            format!(
                "gated={} D+V numeric={:.6e} closed-form={:.6e} bound={:.6e} tol={:.1e}",
                e.gated, e.lhs, closed, e.rhs, e.tol
            ),
        ));
    }
    Ok(())
}

fn zero_input_witness(c: f64, kappa: f64) -> impl Fn(&ComparisonFn) -> Result<(HistoryFunction, f64)> {
    move |_| Ok((counterexample_phi(c, kappa, BumpPsi)?, 0.0))
}

/// Runs the checks behind one claim and compares each with its expected
/// verdict.
pub fn run_claim(item: ClaimItem, cfg: &ClaimConfig) -> Result<ClaimReport> {
    let psi = BumpPsi;
    let sys = example_system(psi);
    let v01 = LkfCandidate::quad_exp(THETA, 0.0, 1.0)?;
    let space = SampleSpace::new(
        cfg.seed,
        HistoryGenerator::RandomCubicSpline,
        cfg.history_amplitude,
        cfg.input_amplitude,
        cfg.samples,
    );
    let mut checks = Vec::new();
    let mut reports = Vec::new();
    match item {
        ClaimItem::I => {
            let id = ComparisonFn::identity();
            let zero = ComparisonFn::zero();
            let ugs = check_condition(&Condition::new(ConditionKind::Ugs, &sys, &v01, &id, &zero), &space)?;
            checks.push(sub(
                "ugs-zero-gain",
                Some((0.0, 1.0)),
                false,
                !ugs.pass,
                format!("{} of {} gated samples violate D+V <= 0", ugs.violation_count, ugs.gated),
            ));
            reports.push(ugs);
            let alpha = alpha_example(psi);
            let chi = ComparisonFn::linear(2.0)?;
            let imp = check_condition(&Condition::new(ConditionKind::ImplicationPointwise, &sys, &v01, &alpha, &chi), &space)?;
            checks.push(sub(
                "implication-pointwise[chi=2s, alpha=2*psi_tilde(s)*s^2]",
                Some((0.0, 1.0)),
                false,
                !imp.pass,
                format!("{} of {} gated samples violate", imp.violation_count, imp.gated),
            ));
            reports.push(imp);
            let zspace = SampleSpace {
                input_amplitude: 0.0,
                sample_count: cfg.fit_samples,
                ..space.clone()
            };
            let fit = estimate_ugs(
                &sys,
                &v01,
                &zspace,
                &RunOptions {
                    horizon: cfg.horizon,
                    step: None,
                    heldout_seeds: cfg.heldout_seeds,
                },
            )?;
            let sigma_ok = fit
                .sigma
                .as_ref()
                .map_or(true, |e| (1..=30).all(|k| e.eval(0.1 * k as f64) <= 0.1 * k as f64 * (1.0 + 1e-6)));
            let held = fit.heldout.as_ref().map_or(0, |h| h.violations);
            checks.push(sub(
                "ugs-fit[u=0]",
                Some((0.0, 1.0)),
                false,
                fit.gamma.is_some() || fit.training_violations > 0 || held > 0 || !sigma_ok,
                format!(
                    "gain fitted: {}, sigma-hat <= identity: {sigma_ok}, held-out violations: {held}",
                    fit.gamma.is_some()
                ),
            ));
        }
        ClaimItem::Ii => {
            let fspace = SampleSpace {
                sample_count: cfg.fit_samples,
                input_amplitude: cfg.input_amplitude.min(1.0),
                history_amplitude: cfg.history_amplitude.min(2.0),
                ..space.clone()
            };
            let v = LkfCandidate::sup_norm(THETA);
            let opts = IssOptions {
                run: RunOptions {
                    horizon: cfg.horizon,
                    step: None,
                    heldout_seeds: cfg.heldout_seeds,
                },
                ..IssOptions::default()
            };
            let fit = fit_iss_kl(&sys, &v, &fspace, &opts)?;
            let held = fit.report.heldout.as_ref().map_or(0, |h| h.violations);
            checks.push(sub(
                "iss-fit[V=sup-norm]",
                None,
                false,
                fit.report.training_violations > 0 || held > 0,
                format!(
                    "training violations {}, held-out violations {held}, levels reached {}",
                    fit.report.training_violations, fit.report.levels_reached
                ),
            ));
        }
        ClaimItem::Iii => {
            for (c, k) in grid(cfg, false) {
                let res = counterexample_phi(c, k, psi);
                let (observed, detail) = match &res {
                    Ok(phi) => {
                        let v = LkfCandidate::quad_exp(THETA, c, k)?;
                        let z = ComparisonFn::zero();
                        let cond = Condition::new(ConditionKind::LocalDecay, &sys, &v, &z, &z);
                        let mut all = true;
                        let mut parts = Vec::new();
                        for d in DELTAS {
                            let e = cond.evaluate(&phi.scale(d), &[0.0])?;
                            let cf = driver_closed_form(&phi.scale(d), 0.0, c, k, psi);
                            all &= e.violated() && cf > 0.0;
                            parts.push(format!("delta={d}: numeric={:.4e} closed={cf:.4e}", e.lhs));
                        }
                        (all, parts.join("; "))
                    }
                    Err(e) => (false, e.to_string()),
                };
                checks.push(sub("local-decay[u=0, delta grid]", Some((c, k)), true, observed, detail));
            }
            if cfg.c_grid.contains(&0.0) && cfg.kappa_grid.contains(&2.0) {
                let v = LkfCandidate::quad_exp(THETA, 0.0, 2.0)?;
                let z = ComparisonFn::zero();
                let fspace = SampleSpace::new(cfg.seed, HistoryGenerator::RandomCubicSpline, 1.0, 0.0, 0);
                let w = falsify(&Condition::new(ConditionKind::LocalDecay, &sys, &v, &z, &z), &fspace, cfg.falsify_budget)?;
                checks.push(sub(
                    "falsify-local-decay",
                    Some((0.0, 2.0)),
                    true,
                    w.is_some(),
                    w.map_or("no witness within budget".into(), |w| format!("D+V={:.4e} after {} evaluations", w.lhs, w.evaluations)),
                ));
            }
        }
        ClaimItem::Iv => {
            for (c, k) in grid(cfg, true) {
                let v = LkfCandidate::quad_exp(THETA, c, k)?;
                for kind in [ConditionKind::ImplicationLkfWise, ConditionKind::DissipativeLkfWise] {
                    if (c, k) == (0.0, 1.0) {
                        witness_checks(&mut checks, kind, &sys, &v, (c, k), &|_| Ok((bump(0.0, 1.0)?, 0.0)))?;
                    } else {
                        witness_checks(&mut checks, kind, &sys, &v, (c, k), &zero_input_witness(c, k))?;
                    }
                }
            }
            if grid(cfg, true).contains(&(0.0, 1.0)) {
                let id = ComparisonFn::identity();
                let fspace = SampleSpace::new(cfg.seed, HistoryGenerator::RandomCubicSpline, 1.0, 1.0, 0);
                let w = falsify(&Condition::new(ConditionKind::ImplicationLkfWise, &sys, &v01, &id, &id), &fspace, cfg.falsify_budget)?;
                checks.push(sub(
                    "falsify-implication-lkf-wise",
                    Some((0.0, 1.0)),
                    true,
                    w.is_some(),
                    w.map_or("no witness within budget".into(), |w| format!("margin={:.4e} after {} evaluations", w.margin, w.evaluations)),
                ));
            }
        }
        ClaimItem::V => {
            for (c, k) in grid(cfg, true) {
                let v = LkfCandidate::quad_exp(THETA, c, k)?;
                if (c, k) == (0.0, 1.0) {
                    let v_ref = v.clone();
                    let make = move |chi: &ComparisonFn| -> Result<(HistoryFunction, f64)> {
                        let a = 0.5;
                        let mut h = a;
                        let mut phi = bump(a, h)?;
                        let mut guard = 0;
                        while v_ref.eval(&phi)? < chi.eval(a) {
                            h *= 2.0;
                            phi = bump(a, h)?;
                            guard += 1;
                            if guard > 200 {
                                return Err(Error::ConstructionFailed("cannot inflate V above χ(a)".into()));
                            }
                        }
                        Ok((phi, a))
                    };
                    witness_checks(&mut checks, ConditionKind::Klw, &sys, &v, (c, k), &make)?;
                } else {
                    witness_checks(&mut checks, ConditionKind::Klw, &sys, &v, (c, k), &zero_input_witness(c, k))?;
                }
            }
        }
        ClaimItem::Vi => {
            let radii = [1.0, 10.0, 100.0, 1000.0];
            let vals: Vec<f64> = radii
                .iter()
                .map(|&r| driver_closed_form(&HistoryFunction::constant(THETA, &[r]).expect("constant"), 0.0, 0.0, 1.0, psi))
                .collect();
            let mut numeric = Vec::new();
            for &r in &radii {
                let phi = HistoryFunction::constant(THETA, &[r])?;
                let drift = sys.eval(&phi, &[0.0]);
                numeric.push(driver_derivative(&v01, &phi, &drift, None)?.estimate);
            }
            let trend = vals.windows(2).all(|w| w[1].abs() < w[0].abs()) && vals.last().unwrap().abs() < 1e-4 * vals[0].abs();
            checks.push(sub(
                "scaled-constants-derivative-vanishes",
                Some((0.0, 1.0)),
                true,
                trend,
                format!(
                    "r={radii:?} closed-form={:?} numeric={:?}",
                    vals.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>(),
                    numeric.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>()
                ),
            ));
            let gs = GrowthSpec::squared_norm(ComparisonFn::identity(), ComparisonFn::zero(), ComparisonFn::identity(), THETA);
            let cspace = SampleSpace::new(cfg.seed, HistoryGenerator::Constants, 1000.0, 0.0, 50);
            let g = check_growth_method(&sys, &v01, &gs, &cspace, 1e-6)?;
            checks.push(sub(
                "growth-dissipation[Q=x^2, alpha=id, gamma=0]",
                Some((0.0, 1.0)),
                true,
                !g.dissipation.pass,
                format!("{} of {} constant histories violate", g.dissipation.violation_count, g.dissipation.gated),
            ));
            reports.push(g.dissipation);
            for (c, k) in grid(cfg, false) {
                let v = LkfCandidate::quad_exp(THETA, c, k)?;
                let phi = counterexample_phi(c, k, psi)?;
                let drift = sys.eval(&phi, &[0.0]);
                let d = driver_derivative(&v, &phi, &drift, None)?;
                // any admissible α, Q and γ(0) = 0 need D⁺V < 0 at u = 0
                checks.push(sub(
                    "growth-dissipation[zero-input witness]",
                    Some((c, k)),
                    true,
                    d.estimate > 10.0 * d.tolerance,
                    format!("D+V={:.4e} tol={:.1e}", d.estimate, d.tolerance),
                ));
            }
        }
    }
    let mismatches = checks.iter().filter(|c| !c.matches()).count();
    let verdict = if mismatches > 0 {
        "mismatch"
    } else if item.expects_pass() {
        "pass"
    } else {
        "expected-fail-confirmed"
    };
    Ok(ClaimReport {
        schema_version: SCHEMA_VERSION,
        item,
        claim: item.claim().into(),
        verdict: verdict.into(),
        mismatches,
        checks,
        reports,
        evidence: crate::estimate::EVIDENCE.into(),
    })
}
