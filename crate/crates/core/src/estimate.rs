//! Empirical V-stability estimates and the constructive bounds built from
//! them.
//!
//! Everything here is sampled evidence: envelopes majorize the training
//! trajectories by construction and are then checked on held-out seeds.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{compose, kl_from_decay_times, ComparisonFn, DecayTimes, FnClass, KLFn};
use crate::dynamics::{default_step, integrate, DelaySystem, InputSignal, Trajectory};
use crate::envelope::{fit_gain, BrsEnvelope, MonotoneEnvelope};
use crate::history::HistoryFunction;
use crate::lkf::{Family, LkfCandidate};
use crate::quadrature::gauss_legendre_10;
use crate::report::{CheckReport, Outcome};
use crate::sampling::SampleSpace;
use crate::{Error, Result};

/// Label attached to every fit.
pub const EVIDENCE: &str = "sampled evidence";

/// Seed stride between the training seed and held-out seeds.
pub const HELD_OUT_STRIDE: u64 = 1_000_003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    VUgs,
    VUgb,
    VUls,
    VUlim,
    VUag,
    VGuag,
    VIss,
    VBrs,
    VCep,
    MixedVUlim,
}

/// Simulation settings shared by the estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub horizon: f64,
    /// Solver step; `None` means `θ/100`.
    pub step: Option<f64>,
    /// Number of held-out seeds used for residual reports.
    pub heldout_seeds: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            horizon: 20.0,
            step: None,
            heldout_seeds: 2,
        }
    }
}

impl RunOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            ..Self::default()
        }
    }

    fn step(&self, theta: f64) -> f64 {
        self.step.unwrap_or_else(|| default_step(theta))
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `V(x_t)` at every solver step time `t ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl VTrace {
    pub fn compute(v: &LkfCandidate, traj: &Trajectory) -> Result<Self> {
        let times = traj.step_times();
        let values = match v.family {
            Family::QuadExp { c, kappa } => quad_exp_trace(traj, &times, c, kappa),
            _ => times
                .iter()
                .map(|&t| Ok(v.eval_unchecked(&traj.window(t)?)))
                .collect::<Result<Vec<f64>>>()?,
        };
        Ok(Self { times, values })
    }

    /// Maximum over the step grid.
    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// Maximum over step times `t ≥ from`.
    pub fn sup_from(&self, from: f64) -> f64 {
        let k = self.times.partition_point(|&t| t < from);
        self.values[k..].iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// First step time with `V ≤ level`.
    pub fn first_hit(&self, level: f64) -> Option<f64> {
        self.values.iter().position(|&x| x <= level).map(|k| self.times[k])
    }

    /// First step time after which `V ≤ level` on the rest of the grid.
    /// `None` if the last value still exceeds `level`.
    pub fn settle(&self, level: f64) -> Option<f64> {
        match self.values.iter().rposition(|&x| x > level) {
            None => Some(0.0),
            Some(k) if k + 1 < self.values.len() => Some(self.times[k + 1]),
            Some(_) => None,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,V\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            s.push_str(&format!("{t:.16e},{v:.16e}\n"));
        }
        s
    }
}

/// `κ|x(t)|² + ∫_{t-θ}^t e^{c(s-t)}|x(s)|² ds` from per-segment integrals.
fn quad_exp_trace(traj: &Trajectory, times: &[f64], c: f64, kappa: f64) -> Vec<f64> {
    let segs = traj.segments();
    let theta = traj.theta;
    let n = traj.n;
    let sq_at = |s: &crate::history::Segment, t: f64| -> f64 { (0..n).map(|i| s.eval_coord(t, i).powi(2)).sum() };
    let part = |s: &crate::history::Segment, a: f64, b: f64, end: f64| -> f64 {
        gauss_legendre_10(&|t: f64| (c * (t - end)).exp() * sq_at(s, t), a, b)
    };
    // full-segment integrals weighted relative to the segment end
    let full: Vec<f64> = segs.iter().map(|s| part(s, s.t0, s.t1, s.t1)).collect();
    let eps = 1e-9 * theta;
    times
        .iter()
        .map(|&t| {
            let lo = t - theta;
            let last = segs.partition_point(|s| s.t1 < t - eps).min(segs.len() - 1);
            let mut acc = 0.0;
            let mut k = last as isize;
            while k >= 0 {
                let s = &segs[k as usize];
                if s.t1 <= lo + eps {
                    break;
                }
                if s.t0 >= lo - eps {
                    acc += full[k as usize] * (c * (s.t1 - t)).exp();
                } else {
                    acc += part(s, lo, s.t1, t);
                }
                k -= 1;
            }
            let xt = &segs[last].y1;
            kappa * norm(xt).powi(2) + acc
        })
        .collect()
}

/// Scales `φ` by a factor `λ ≥ 0` so that `V(λφ) ≈ target` from below.
pub fn scale_to_level(v: &LkfCandidate, phi: &HistoryFunction, target: f64) -> HistoryFunction {
    let v0 = v.eval_unchecked(phi);
    if !(v0 > 0.0) || target <= 0.0 {
        return phi.scale(if target <= 0.0 { 0.0 } else { 1.0 });
    }
    if let Family::QuadExp { .. } = v.family {
        return phi.scale((target / v0).sqrt());
    }
    let f = |l: f64| v.eval_unchecked(&phi.scale(l));
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut guard = 0;
    while f(hi) < target && guard < 200 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    phi.scale(lo)
}

/// Initial condition and constant input of one run.
#[derive(Debug, Clone)]
pub struct Start {
    pub index: usize,
    pub phi: HistoryFunction,
    pub u: Vec<f64>,
}

/// A simulated start with its `V` trace.
#[derive(Debug, Clone)]
pub struct Run {
    pub index: usize,
    pub v0: f64,
    pub u_norm: f64,
    pub trace: VTrace,
}

/// Plain starts from the sample space.
pub fn starts(sys: &DelaySystem, space: &SampleSpace) -> Vec<Start> {
    space
        .samples(sys.theta, sys.n, sys.m)
        .into_iter()
        .map(|s| Start {
            index: s.index,
            phi: s.phi,
            u: s.u,
        })
        .collect()
}

/// Simulates every start and applies `f`; escaped runs are dropped and
/// counted.
fn simulate_with<R, F>(sys: &DelaySystem, starts: &[Start], horizon: f64, step: f64, f: F) -> Result<(Vec<R>, usize)>
where
    R: Send,
    F: Fn(&Start, &Trajectory) -> Result<R> + Sync,
{
    let out = starts
        .par_iter()
        .map(|s| {
            let u = InputSignal::constant(&s.u, horizon);
            let tr = integrate(sys, &s.phi, &u, horizon, step)?;
            if tr.escape.is_some() {
                return Ok(None);
            }
            f(s, &tr).map(Some)
        })
        .collect::<Result<Vec<Option<R>>>>()?;
    let escaped = out.iter().filter(|r| r.is_none()).count();
    Ok((out.into_iter().flatten().collect(), escaped))
}

/// Simulates every start and records its `V` trace.
pub fn simulate_runs(sys: &DelaySystem, v: &LkfCandidate, starts: &[Start], horizon: f64, step: f64) -> Result<(Vec<Run>, usize)> {
    simulate_with(sys, starts, horizon, step, |s, tr| {
        let trace = VTrace::compute(v, tr)?;
        Ok(Run {
            index: s.index,
            v0: trace.values[0],
            u_norm: norm(&s.u),
            trace,
        })
    })
}

/// Worst violation of a fitted estimate on held-out trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub seeds: Vec<u64>,
    pub samples: usize,
    pub violations: usize,
    /// Largest `observed − bound`; `≤ 0` means the bound held everywhere.
    pub worst: f64,
}

impl Residuals {
    fn from_margins(seeds: Vec<u64>, margins: &[f64], tol_rel: f64, scale: &[f64]) -> Self {
        let violations = margins
            .iter()
            .zip(scale)
            .filter(|(m, s)| **m > tol_rel * (1.0 + s.abs()))
            .count();
        Self {
            seeds,
            samples: margins.len(),
            violations,
            worst: margins.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Hitting or settling times per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTable {
    /// `(sample index, time)`; `None` means not reached by the time cap.
    pub times: Vec<(usize, Option<f64>)>,
    pub t_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityFit {
    pub property: Property,
    pub evidence: String,
    pub sigma: Option<MonotoneEnvelope>,
    pub gamma: Option<MonotoneEnvelope>,
    /// Additive constant of the boundedness variant.
    pub offset: f64,
    /// Maximal sampled time; `None` when some sample did not reach the target.
    pub tau: Option<f64>,
    pub not_reached: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<TimeTable>,
    pub training_samples: usize,
    pub escaped: usize,
    pub training_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout: Option<Residuals>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl StabilityFit {
    fn empty(property: Property) -> Self {
        Self {
            property,
            evidence: EVIDENCE.into(),
            sigma: None,
            gamma: None,
            offset: 0.0,
            tau: None,
            not_reached: 0,
            table: None,
            training_samples: 0,
            escaped: 0,
            training_violations: 0,
            heldout: None,
            notes: vec![],
        }
    }

    /// `σ̂` (zero when nothing was fitted).
    pub fn sigma_fn(&self) -> Result<ComparisonFn> {
        match &self.sigma {
            Some(e) => e.to_comparison("sigma-hat"),
            None => Ok(ComparisonFn::zero()),
        }
    }

    /// `γ̂` (zero when nothing was fitted).
    pub fn gamma_fn(&self) -> Result<ComparisonFn> {
        match &self.gamma {
            Some(e) => e.to_comparison("gamma-hat"),
            None => Ok(ComparisonFn::zero()),
        }
    }

    fn eval_bound(&self, a: f64, b: f64) -> f64 {
        self.sigma.as_ref().map_or(0.0, |e| e.eval(a)) + self.gamma.as_ref().map_or(0.0, |e| e.eval(b)) + self.offset
    }

    /// The same envelope read as a boundedness estimate with `ĉ = 0`.
    pub fn as_ugb(&self) -> Self {
        Self {
            property: Property::VUgb,
            offset: 0.0,
            ..self.clone()
        }
    }
}

fn heldout_spaces(space: &SampleSpace, k: usize) -> Vec<SampleSpace> {
    (1..=k as u64)
        .map(|j| SampleSpace {
            seed: space.seed.wrapping_add(HELD_OUT_STRIDE.wrapping_mul(j)),
            ..space.clone()
        })
        .collect()
}

/// Isotonic fit of `sup_t V(x_t) ≤ σ̂(V(x₀)) + γ̂(‖u‖)`.
///
/// `σ̂` majorizes zero-input suprema and the diagonal `(V(x₀), V(x₀))`;
/// `γ̂` majorizes what is left over.
pub fn fit_ugs_runs(runs: &[Run]) -> StabilityFit {
    let mut fit = StabilityFit::empty(Property::VUgs);
    fit.training_samples = runs.len();
    let mut pts: Vec<(f64, f64)> = runs.iter().map(|r| (r.v0, r.v0)).collect();
    pts.extend(runs.iter().filter(|r| r.u_norm == 0.0).map(|r| (r.v0, r.trace.sup())));
    fit.sigma = MonotoneEnvelope::fit(&pts);
    let resid: Vec<(f64, f64)> = runs
        .iter()
        .filter(|r| r.u_norm > 0.0)
        .map(|r| (r.u_norm, (r.trace.sup() - fit.sigma.as_ref().map_or(0.0, |e| e.eval(r.v0))).max(0.0)))
        .collect();
    fit.gamma = MonotoneEnvelope::fit(&resid);
    fit.training_violations = runs
        .iter()
        .filter(|r| r.trace.sup() > fit.eval_bound(r.v0, r.u_norm) * (1.0 + 1e-12) + 1e-300)
        .count();
    fit
}

/// V-UGS envelopes with held-out residuals.
pub fn estimate_ugs(sys: &DelaySystem, v: &LkfCandidate, space: &SampleSpace, opts: &RunOptions) -> Result<StabilityFit> {
    if opts.horizon < sys.theta {
        return Err(Error::Config(format!("horizon {} is shorter than the delay {}", opts.horizon, sys.theta)));
    }
    let step = opts.step(sys.theta);
    let (runs, escaped) = simulate_runs(sys, v, &starts(sys, space), opts.horizon, step)?;
    let mut fit = fit_ugs_runs(&runs);
    fit.escaped = escaped;
    if escaped > 0 {
        fit.notes.push(format!("{escaped} escaping trajectories excluded"));
    }
    let mut margins = Vec::new();
    let mut scale = Vec::new();
    let spaces = heldout_spaces(space, opts.heldout_seeds);
    for hs in &spaces {
        let (hr, _) = simulate_runs(sys, v, &starts(sys, hs), opts.horizon, step)?;
        for r in hr {
            let s = r.trace.sup();
            margins.push(s - fit.eval_bound(r.v0, r.u_norm));
            scale.push(s);
        }
    }
    if !spaces.is_empty() {
        fit.heldout = Some(Residuals::from_margins(spaces.iter().map(|s| s.seed).collect(), &margins, 1e-9, &scale));
    }
    Ok(fit)
}

/// V-ULS envelopes: the UGS fit restricted to starts with `V(x₀) ≤ r` and
/// `‖u‖ ≤ r`.
pub fn estimate_uls(sys: &DelaySystem, v: &LkfCandidate, space: &SampleSpace, r: f64, opts: &RunOptions) -> Result<StabilityFit> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    let step = opts.step(sys.theta);
    let (runs, escaped) = simulate_runs(sys, v, &gated_starts(sys, v, space, Gate::Lkf, r, r), opts.horizon, step)?;
    let mut fit = fit_ugs_runs(&runs);
    fit.property = Property::VUls;
    fit.escaped = escaped;
    let mut margins = Vec::new();
    let mut scale = Vec::new();
    let spaces = heldout_spaces(space, opts.heldout_seeds);
    for hs in &spaces {
        let (hr, _) = simulate_runs(sys, v, &gated_starts(sys, v, hs, Gate::Lkf, r, r), opts.horizon, step)?;
        for run in hr {
            let s = run.trace.sup();
            margins.push(s - fit.eval_bound(run.v0, run.u_norm));
            scale.push(s);
        }
    }
    if !spaces.is_empty() {
        fit.heldout = Some(Residuals::from_margins(spaces.iter().map(|s| s.seed).collect(), &margins, 1e-9, &scale));
    }
    fit.notes.push(format!("starts restricted to V(x0) <= {r}, |u| <= {r}"));
    Ok(fit)
}

/// Which initial conditions a limit estimate admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    /// `V(x₀) ≤ r`.
    Lkf,
    /// `‖x₀‖ ≤ r` (the mixed variant).
    Norm,
}

/// Starts scaled into the gate of radius `r`, with `‖u‖ ≤ input_radius`.
///
/// Each history is rescaled so that its gate quantity equals `r` times the
/// sample's amplitude fraction `‖φ‖/R`.
pub fn gated_starts(sys: &DelaySystem, v: &LkfCandidate, space: &SampleSpace, gate: Gate, r: f64, input_radius: f64) -> Vec<Start> {
    let big_r = space.history_amplitude.max(1e-300);
    let a = space.input_amplitude;
    starts(sys, space)
        .into_iter()
        .map(|s| {
            let level = (s.phi.sup_norm() / big_r).min(1.0);
            let phi = match gate {
                Gate::Lkf => scale_to_level(v, &s.phi, level * r),
                Gate::Norm => {
                    let nrm = s.phi.sup_norm();
                    if nrm > 0.0 {
                        s.phi.scale(level * r / nrm)
                    } else {
                        s.phi
                    }
                }
            };
            let u: Vec<f64> = if a > 0.0 {
                let u: Vec<f64> = s.u.iter().map(|x| x * input_radius / a).collect();
                let un = norm(&u);
                if un > input_radius {
                    u.iter().map(|x| x * input_radius / un).collect()
                } else {
                    u
                }
            } else {
                vec![0.0; s.u.len()]
            };
            Start { index: s.index, phi, u }
        })
        .collect()
}

fn time_fit(
    property: Property,
    sys: &DelaySystem,
    v: &LkfCandidate,
    gamma: &ComparisonFn,
    eps: f64,
    starts: &[Start],
    t_cap: f64,
    settle: bool,
    step: Option<f64>,
) -> Result<StabilityFit> {
    if !(t_cap.is_finite() && t_cap > 0.0) {
        return Err(Error::Config(format!("time cap must be finite and positive, got {t_cap}")));
    }
    let step = step.unwrap_or_else(|| default_step(sys.theta));
    let (runs, escaped) = simulate_runs(sys, v, starts, t_cap, step)?;
    let times: Vec<(usize, Option<f64>)> = runs
        .iter()
        .map(|r| {
            let target = eps + gamma.eval(r.u_norm);
            let t = if settle { r.trace.settle(target) } else { r.trace.first_hit(target) };
            (r.index, t)
        })
        .collect();
    let mut fit = StabilityFit::empty(property);
    fit.training_samples = runs.len();
    fit.escaped = escaped;
    fit.not_reached = times.iter().filter(|t| t.1.is_none()).count();
    fit.tau = if fit.not_reached == 0 {
        Some(times.iter().filter_map(|t| t.1).fold(0.0, f64::max))
    } else {
        fit.notes.push(format!("{} samples did not reach the target by t = {t_cap}", fit.not_reached));
        None
    };
    fit.table = Some(TimeTable { times, t_cap });
    Ok(fit)
}

/// First hitting times of `V ≤ ε + γ(‖u‖)` from `V(x₀) ≤ r`, `‖u‖ ≤ r`.
pub fn estimate_ulim(
    sys: &DelaySystem,
    v: &LkfCandidate,
    gamma: &ComparisonFn,
    eps: f64,
    r: f64,
    space: &SampleSpace,
    t_cap: f64,
) -> Result<StabilityFit> {
    let st = gated_starts(sys, v, space, Gate::Lkf, r, r);
    time_fit(Property::VUlim, sys, v, gamma, eps, &st, t_cap, false, None)
}

/// As [`estimate_ulim`] but gated on `‖x₀‖ ≤ r`.
pub fn estimate_ulim_mixed(
    sys: &DelaySystem,
    v: &LkfCandidate,
    gamma: &ComparisonFn,
    eps: f64,
    r: f64,
    space: &SampleSpace,
    t_cap: f64,
) -> Result<StabilityFit> {
    let st = gated_starts(sys, v, space, Gate::Norm, r, r);
    time_fit(Property::MixedVUlim, sys, v, gamma, eps, &st, t_cap, false, None)
}

/// First hitting times over explicitly given starts.
pub fn ulim_from_starts(
    sys: &DelaySystem,
    v: &LkfCandidate,
    gamma: &ComparisonFn,
    eps: f64,
    starts: &[Start],
    t_cap: f64,
) -> Result<StabilityFit> {
    time_fit(Property::VUlim, sys, v, gamma, eps, starts, t_cap, false, None)
}

/// GUAG input inflation: inputs up to this multiple of `r`.
pub const GUAG_INPUT_FACTOR: f64 = 10.0;

/// Settle times (last exit from `V ≤ ε + γ(‖u‖)`); with `global_inputs`
/// the input gate is widened to `‖u‖ ≤ 10 r`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_uag(
    sys: &DelaySystem,
    v: &LkfCandidate,
    gamma: &ComparisonFn,
    eps: f64,
    r: f64,
    space: &SampleSpace,
    t_cap: f64,
    global_inputs: bool,
) -> Result<StabilityFit> {
    let (prop, ur) = if global_inputs {
        (Property::VGuag, GUAG_INPUT_FACTOR * r)
    } else {
        (Property::VUag, r)
    };
    let st = gated_starts(sys, v, space, Gate::Lkf, r, ur);
    let mut fit = time_fit(prop, sys, v, gamma, eps, &st, t_cap, true, None)?;
    if global_inputs {
        fit.notes.push(format!("inputs sampled up to {GUAG_INPUT_FACTOR}·r as a proxy for all inputs"));
    }
    Ok(fit)
}

/// Settings of [`fit_iss_kl`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssOptions {
    pub run: RunOptions,
    /// Number of halving levels `εₙ = 2⁻ⁿ σ̂(r)`.
    pub levels: usize,
    /// Constant-history starts added to training, with `V` on the ladder
    /// `V_max·2^{-k/2}`, `k < constant_probes`, and zero input.
    #[serde(default = "default_probes")]
    pub constant_probes: usize,
}

fn default_probes() -> usize {
    48
}

impl Default for IssOptions {
    fn default() -> Self {
        Self {
            run: RunOptions::default(),
            levels: 40,
            constant_probes: default_probes(),
        }
    }
}

/// Training data for decay times: each constant-input run is also read as
/// a family of runs started at later times.
struct DecayData {
    runs: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, f64)>, // times, prefix min, suffix max, γ̂(‖u‖)
    sigma: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    levels: usize,
    horizon: f64,
    delta: f64,
}

impl DecayData {
    fn new(runs: &[Run], sigma: Arc<dyn Fn(f64) -> f64 + Send + Sync>, gamma: &ComparisonFn, levels: usize, horizon: f64, theta: f64) -> Self {
        let runs = runs
            .iter()
            .map(|r| {
                let v = &r.trace.values;
                let mut pmin = v.clone();
                for k in 1..v.len() {
                    pmin[k] = pmin[k].min(pmin[k - 1]);
                }
                let mut smax = v.clone();
                for k in (0..v.len().saturating_sub(1)).rev() {
                    smax[k] = smax[k].max(smax[k + 1]);
                }
                (r.trace.times.clone(), pmin, smax, gamma.eval(r.u_norm))
            })
            .collect();
        Self {
            runs,
            sigma,
            levels,
            horizon,
            delta: 1e-6 * theta,
        }
    }

    /// Raw decay time of level `n` at radius `r`; `None` if some admissible
    /// run never settles within the horizon or no run is admissible.
    fn raw(&self, n: usize, r: f64) -> Option<f64> {
        let level = (self.sigma)(r) * 0.5f64.powi(n as i32);
        let mut worst = None::<f64>;
        for (times, pmin, smax, g) in &self.runs {
            // earliest time from which the run is an admissible start
            let k0 = pmin.partition_point(|&x| x > r);
            if k0 >= times.len() {
                continue;
            }
            let k1 = smax.partition_point(|&x| x > level + g);
            if k1 >= times.len() {
                return None;
            }
            worst = Some(worst.unwrap_or(0.0).max(times[k1] - times[k0]));
        }
        // no admissible run means no evidence of decay at this radius
        worst
    }

    fn all_times(&self, r: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.levels);
        let mut prev = 0.0f64;
        let mut reached = true;
        let mut extra = 0.0;
        for n in 1..=self.levels {
            let t = if reached {
                match self.raw(n, r) {
                    Some(t) => t,
                    None => {
                        reached = false;
                        self.horizon
                    }
                }
            } else {
                extra += self.horizon;
                self.horizon + extra
            };
            let t = t.max(prev + self.delta);
            out.push(t);
            prev = t;
        }
        out
    }
}

impl DecayTimes for DecayData {
    fn levels(&self) -> usize {
        self.levels
    }
    fn time(&self, level: usize, r: f64) -> f64 {
        self.all_times(r)[level - 1]
    }
}

fn constant_probes(sys: &DelaySystem, v: &LkfCandidate, top: f64, count: usize, first_index: usize) -> Vec<Start> {
    if !(top > 0.0) || count == 0 {
        return Vec::new();
    }
    let dir = vec![1.0 / (sys.n as f64).sqrt(); sys.n];
    let unit = HistoryFunction::constant(sys.theta, &dir).expect("finite constant history");
    (0..count)
        .map(|k| Start {
            index: first_index + k,
            phi: scale_to_level(v, &unit, top * 0.5f64.powf(0.5 * k as f64)),
            u: vec![0.0; sys.m],
        })
        .collect()
}

/// Result of [`fit_iss_kl`].
#[derive(Debug, Clone)]
pub struct IssFit {
    pub beta: KLFn,
    pub gamma: ComparisonFn,
    pub sigma: ComparisonFn,
    pub report: IssReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssReport {
    pub property: Property,
    pub evidence: String,
    pub sigma: Option<MonotoneEnvelope>,
    pub gamma: Option<MonotoneEnvelope>,
    pub training_samples: usize,
    pub escaped: usize,
    pub training_violations: usize,
    /// Decay times at the largest training `V(x₀)`: `(level, τₙ)`.
    pub decay_table: Vec<(usize, f64)>,
    /// Levels reached within the horizon at that radius.
    pub levels_reached: usize,
    pub heldout: Option<Residuals>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn iss_margins(beta: &KLFn, gamma: &ComparisonFn, runs: &[Run]) -> (Vec<f64>, Vec<f64>) {
    let per: Vec<(f64, f64)> = runs
        .par_iter()
        .map(|r| {
            let sec = beta.section(r.v0);
            let g = gamma.eval(r.u_norm);
            let mut worst = f64::NEG_INFINITY;
            let mut at = 0.0;
            for (t, x) in r.trace.times.iter().zip(&r.trace.values) {
                let m = x - sec(*t) - g;
                if m > worst {
                    worst = m;
                    at = *x;
                }
            }
            (worst, at)
        })
        .collect();
    per.into_iter().unzip()
}

/// ISS-type fit `V(x_t) ≤ β̂(V(x₀), t) + γ̂(‖u‖)`.
///
/// `σ̂` comes from the UGS fit on the same runs. `γ̂` majorizes the UGS
/// input residuals and the late-time values `sup_{t ≥ T/2} V` of runs with
/// nonzero input. `β̂` is built from level-settling times `τₙ(r)`: the
/// worst time, over runs admissible at radius `r`, to settle below
/// `2⁻ⁿσ̂(r) + γ̂(‖u‖)`. Levels not reached inside the horizon `T` get the
/// knots `T, 2T, 3T, …`, so the estimate is only tested on `[0, T]`.
///
/// Random histories rarely sit near an equilibrium, which is where decay is
/// slowest, so constant histories on a geometric ladder of `V` levels are
/// simulated alongside the sampled starts.
pub fn fit_iss_kl(sys: &DelaySystem, v: &LkfCandidate, space: &SampleSpace, opts: &IssOptions) -> Result<IssFit> {
    let ro = &opts.run;
    let step = ro.step(sys.theta);
    let (mut runs, escaped) = simulate_runs(sys, v, &starts(sys, space), ro.horizon, step)?;
    if runs.is_empty() {
        return Err(Error::FitFailure("no non-escaping training trajectories".into()));
    }
    let sampled = runs.len();
    let top = runs.iter().map(|r| r.v0).fold(0.0, f64::max);
    let probes = constant_probes(sys, v, top, opts.constant_probes, space.sample_count);
    let (probe_runs, probe_escaped) = simulate_runs(sys, v, &probes, ro.horizon, step)?;
    runs.extend(probe_runs);
    let ugs = fit_ugs_runs(&runs);
    let mut gpts: Vec<(f64, f64)> = runs
        .iter()
        .filter(|r| r.u_norm > 0.0)
        .map(|r| (r.u_norm, r.trace.sup_from(0.5 * ro.horizon)))
        .collect();
    gpts.extend(
        runs.iter()
            .filter(|r| r.u_norm > 0.0)
            .map(|r| (r.u_norm, ugs.gamma.as_ref().map_or(0.0, |e| e.eval(r.u_norm)))),
    );
    let (gamma, gamma_env) = fit_gain(&gpts, "gamma-hat")?;
    let sigma_env = ugs
        .sigma
        .clone()
        .ok_or_else(|| Error::FitFailure("all training values of V are zero".into()))?;
    let sigma = sigma_env.to_comparison("sigma-hat")?;
    let s_env = sigma_env.clone();
    let data = Arc::new(DecayData::new(
        &runs,
        Arc::new(move |r| s_env.eval(r)),
        &gamma,
        opts.levels,
        ro.horizon,
        sys.theta,
    ));
    let decays = |r: &Run| r.v0 > 0.0 && r.trace.settle(0.5 * sigma_env.eval(r.v0) + gamma.eval(r.u_norm)).is_some();
    if !runs.iter().any(decays) {
        return Err(Error::FitFailure(format!(
            "no training trajectory settles below half of its level within t = {}; V shows no decay",
            ro.horizon
        )));
    }
    let a_max = runs.iter().map(|r| r.v0).fold(0.0, f64::max);
    let table_times = data.all_times(a_max);
    let levels_reached = (1..=opts.levels).take_while(|&n| data.raw(n, a_max).is_some()).count();
    let beta = kl_from_decay_times(&sigma, data.clone(), None)?;
    let (train_m, _) = iss_margins(&beta, &gamma, &runs);
    let training_violations = train_m.iter().filter(|&&m| m > 1e-9).count();
    let spaces = heldout_spaces(space, ro.heldout_seeds);
    let mut margins = Vec::new();
    let mut scale = Vec::new();
    for hs in &spaces {
        let (hr, _) = simulate_runs(sys, v, &starts(sys, hs), ro.horizon, step)?;
        let (m, s) = iss_margins(&beta, &gamma, &hr);
        margins.extend(m);
        scale.extend(s);
    }
    let heldout = (!spaces.is_empty()).then(|| Residuals::from_margins(spaces.iter().map(|s| s.seed).collect(), &margins, 1e-9, &scale));
    let mut notes = vec![format!("decay levels beyond the horizon t = {} are extrapolated", ro.horizon)];
    if runs.len() > sampled {
        notes.push(format!("{} constant-history probes added to training", runs.len() - sampled));
    }
    if escaped + probe_escaped > 0 {
        notes.push(format!("{} escaping trajectories excluded", escaped + probe_escaped));
    }
    let report = IssReport {
        property: Property::VIss,
        evidence: EVIDENCE.into(),
        sigma: Some(sigma_env),
        gamma: gamma_env,
        training_samples: runs.len(),
        escaped: escaped + probe_escaped,
        training_violations,
        decay_table: table_times.into_iter().enumerate().map(|(i, t)| (i + 1, t)).collect(),
        levels_reached,
        heldout,
        notes,
    };
    Ok(IssFit {
        beta,
        gamma,
        sigma,
        report,
    })
}

/// Time bound of the limit-property construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingTimeBound {
    /// `4rθμ(r) / (p·α(p/2))` with `p = ψ₂'⁻¹(ε)`, `ψ₂' = max(ψ₂, id)`;
    /// `None` when `α(p/2)` underflows to zero.
    pub tau: Option<f64>,
    /// `p / (2μ(r))`.
    pub half_width: f64,
    /// Whether `p/μ(r) ≤ θ`.
    pub overlap_ok: bool,
    /// `τ` recomputed with `p` lowered to `θμ(r)` (a larger `ψ₂`) when the
    /// overlap condition fails; equal to `tau` otherwise.
    pub tau_repaired: Option<f64>,
}

pub fn hitting_time_bound(r: f64, eps: f64, theta: f64, mu: &ComparisonFn, psi2: &ComparisonFn, alpha: &ComparisonFn) -> Result<HittingTimeBound> {
    if !(r > 0.0 && eps > 0.0) {
        return Err(Error::Domain(format!("r and ε must be positive, got r={r}, ε={eps}")));
    }
    let psi2p = psi2.max(&ComparisonFn::identity())?;
    let p = psi2p.invert(eps)?;
    let m = mu.eval(r);
    if !(m > 0.0) {
        return Err(Error::Domain(format!("μ(r) must be positive, got {m}")));
    }
    let tau_of = |p: f64| {
        let a = alpha.eval(0.5 * p);
        let t = 4.0 * r * theta * m / (p * a);
        (a > 0.0 && t.is_finite()).then_some(t)
    };
    let overlap_ok = p / m <= theta;
    let tau = tau_of(p);
    let tau_repaired = if overlap_ok { tau } else { tau_of(theta * m) };
    Ok(HittingTimeBound {
        tau,
        half_width: p / (2.0 * m),
        overlap_ok,
        tau_repaired,
    })
}

/// `β̃(r,t) = (θ−t)r + β(r,0)` on `[0,θ]` and `β(r,t−θ)` after.
pub fn viss_to_iss(beta: &KLFn, theta: f64) -> KLFn {
    let b = beta.clone();
    KLFn::new(format!("shifted[{}]", beta.label()), move |r, t| {
        if t <= theta {
            (theta - t) * r + b.eval(r, 0.0)
        } else {
            b.eval(r, t - theta)
        }
    })
}

fn half_inverse_of(psi1: &ComparisonFn, g: &ComparisonFn) -> Result<ComparisonFn> {
    if g.is_zero() {
        return Ok(ComparisonFn::zero());
    }
    compose(&psi1.inverse()?, &g.scale(2.0)?)
}

/// `σ = ψ₁⁻¹∘2σ̃`, `γ = ψ₁⁻¹∘2γ̃`.
pub fn history_bound(ugs_sigma: &ComparisonFn, ugs_gamma: &ComparisonFn, psi1: &ComparisonFn) -> Result<(ComparisonFn, ComparisonFn)> {
    if psi1.class() != FnClass::Kinf {
        return Err(Error::KindMismatch(format!("ψ₁ must be K∞, got {}", psi1.class())));
    }
    Ok((half_inverse_of(psi1, ugs_sigma)?, half_inverse_of(psi1, ugs_gamma)?))
}

/// `μ₁ = ξ₁∘2σ₁`, `μ₂ = ξ₁∘2σ₂ + ξ₂`.
pub fn derivative_bound(
    xi1: &ComparisonFn,
    xi2: &ComparisonFn,
    sigma1: &ComparisonFn,
    sigma2: &ComparisonFn,
) -> Result<(ComparisonFn, ComparisonFn)> {
    let mu1 = compose(xi1, &sigma1.scale(2.0)?)?;
    let a = if sigma2.is_zero() {
        ComparisonFn::zero()
    } else {
        compose(xi1, &sigma2.scale(2.0)?)?
    };
    let mu2 = a.add(xi2)?;
    Ok((mu1, mu2))
}

fn bound_outcome(s: &Start, lhs: f64, rhs: f64) -> Outcome {
    Outcome {
        index: s.index,
        phi: s.phi.clone(),
        u: s.u.clone(),
        lhs,
        rhs,
        gated: true,
        tol: 1e-9 * (1.0 + rhs.abs()),
        note: None,
    }
}

/// Checks `|x(s)| ≤ σ(V(x₀)) + γ(‖u‖)` for `s ≥ 0`, which is the norm
/// estimate `‖x_t‖ ≤ …` for all `t ≥ θ`.
pub fn check_history_bound(
    sys: &DelaySystem,
    v: &LkfCandidate,
    sigma: &ComparisonFn,
    gamma: &ComparisonFn,
    space: &SampleSpace,
    opts: &RunOptions,
) -> Result<CheckReport> {
    let st = starts(sys, space);
    let (outs, _) = simulate_with(sys, &st, opts.horizon, opts.step(sys.theta), |s, tr| {
        let lhs = tr.sup_norm_on(0.0, tr.t_end());
        let rhs = sigma.eval(v.eval_unchecked(&s.phi)) + gamma.eval(norm(&s.u));
        Ok(bound_outcome(s, lhs, rhs))
    })?;
    Ok(CheckReport::collect("history-norm-bound", 1e-9, &outs))
}

/// Checks finite-difference slopes on `[θ, T]` against
/// `μ₁(V(x₀)) + μ₂(‖u‖)`.
pub fn check_derivative_bound(
    sys: &DelaySystem,
    v: &LkfCandidate,
    mu1: &ComparisonFn,
    mu2: &ComparisonFn,
    space: &SampleSpace,
    opts: &RunOptions,
) -> Result<CheckReport> {
    let st = starts(sys, space);
    let theta = sys.theta;
    let (outs, _) = simulate_with(sys, &st, opts.horizon, opts.step(theta), |s, tr| {
        let lhs = tr
            .segments()
            .iter()
            .filter(|g| g.t0 >= theta * (1.0 - 1e-12))
            .map(|g| {
                let d: Vec<f64> = g.y1.iter().zip(&g.y0).map(|(a, b)| (a - b) / g.width()).collect();
                norm(&d)
            })
            .fold(0.0, f64::max);
        let rhs = mu1.eval(v.eval_unchecked(&s.phi)) + mu2.eval(norm(&s.u));
        Ok(bound_outcome(s, lhs, rhs))
    })?;
    Ok(CheckReport::collect("derivative-bound", 1e-9, &outs))
}

/// `(V(x₀), ‖u‖, t, V(x_t))` tuples from simulated runs, every `stride`
/// steps.
pub fn brs_samples(sys: &DelaySystem, v: &LkfCandidate, space: &SampleSpace, opts: &RunOptions, stride: usize) -> Result<Vec<(f64, f64, f64, f64)>> {
    let (runs, _) = simulate_runs(sys, v, &starts(sys, space), opts.horizon, opts.step(sys.theta))?;
    let stride = stride.max(1);
    Ok(runs
        .iter()
        .flat_map(|r| {
            r.trace
                .times
                .iter()
                .zip(&r.trace.values)
                .step_by(stride)
                .map(move |(t, x)| (r.v0, r.u_norm, *t, *x))
        })
        .collect())
}

/// Continuous increasing majorant of reachable values.
pub fn brs_envelope(samples: &[(f64, f64, f64, f64)]) -> Result<BrsEnvelope> {
    BrsEnvelope::fit(samples).ok_or_else(|| Error::Config("reachability envelope needs at least one sample".into()))
}

/// Result of [`cep_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepResult {
    pub property: Property,
    pub evidence: String,
    /// Largest sampled `δ ≤ ε` that kept `sup_{t ≤ h} V(x_t) ≤ ε`.
    pub delta: f64,
    /// The check at `δ̂`.
    pub report: CheckReport,
}

/// Bisection for the continuity radius at the equilibrium: starts with
/// `V(x₀) ≤ δ`, `‖u‖ ≤ δ` must keep `V(x_t) ≤ ε` for `t ≤ h`.
pub fn cep_check(sys: &DelaySystem, v: &LkfCandidate, eps: f64, h: f64, space: &SampleSpace) -> Result<CepResult> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("horizon h must be positive, got {h}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("ε must be positive, got {eps}")));
    }
    let step = default_step(sys.theta).min(h / 4.0);
    let run = |delta: f64| -> Result<Vec<Outcome>> {
        let st = gated_starts(sys, v, space, Gate::Lkf, delta, delta);
        let (outs, _) = simulate_with(sys, &st, h, step, |s, tr| {
            let lhs = VTrace::compute(v, tr)?.sup();
            Ok(Outcome {
                tol: eps * 1e-9,
                ..bound_outcome(s, lhs, eps)
            })
        })?;
        Ok(outs)
    };
    let passes = |o: &[Outcome]| o.iter().all(|x| !x.violated());
    let top = run(eps)?;
    let (delta, outs, failed_at) = if passes(&top) {
        (eps, top, None)
    } else {
        let (mut lo, mut hi) = (0.0, eps);
        let mut lo_out = run(0.0)?;
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let o = run(mid)?;
            if passes(&o) {
                lo = mid;
                lo_out = o;
            } else {
                hi = mid;
            }
        }
        (lo, lo_out, Some(hi))
    };
    let mut report = CheckReport::collect("cep", eps * 1e-9, &outs);
    if let Some(hi) = failed_at {
        report = report.with_note(format!("violations at δ = {hi:.6e}"));
    }
    Ok(CepResult {
        property: Property::VCep,
        evidence: EVIDENCE.into(),
        delta,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::HistoryGenerator;

    #[test]
    fn quad_exp_trace_matches_window_evaluation() {
        let sys = DelaySystem::linear_delay(-1.0, 0.5, 1.0, 1.0).unwrap();
        let space = SampleSpace::new(1, HistoryGenerator::RandomCubicSpline, 1.0, 1.0, 3);
        for c in [0.0, 0.7] {
            let v = LkfCandidate::quad_exp(1.0, c, 1.3).unwrap();
            for s in starts(&sys, &space) {
                let tr = integrate(&sys, &s.phi, &InputSignal::constant(&s.u, 3.0), 3.0, 0.01).unwrap();
                let fast = VTrace::compute(&v, &tr).unwrap();
                for (k, t) in fast.times.iter().enumerate().step_by(37) {
                    let slow = v.eval(&tr.window(*t).unwrap()).unwrap();
                    assert!((slow - fast.values[k]).abs() < 1e-9 * (1.0 + slow), "{t}: {slow} vs {}", fast.values[k]);
                }
            }
        }
    }

    #[test]
    fn trace_settle_and_hit() {
        let tr = VTrace {
            times: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            values: vec![5.0, 1.0, 3.0, 0.5, 0.2],
        };
        assert_eq!(tr.first_hit(1.0), Some(1.0));
        assert_eq!(tr.settle(1.0), Some(3.0));
        assert_eq!(tr.settle(0.1), None);
        assert_eq!(tr.settle(10.0), Some(0.0));
    }

    #[test]
    fn ugs_on_frozen_constants_is_identity() {
        let sys = DelaySystem::zero(1, 1, 1.0);
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(2, HistoryGenerator::Constants, 2.0, 0.0, 30);
        let fit = estimate_ugs(&sys, &v, &space, &RunOptions::new(3.0)).unwrap();
        assert!(fit.gamma.is_none());
        assert_eq!(fit.training_violations, 0);
        let s = fit.sigma.as_ref().unwrap();
        for k in 1..20 {
            let a = k as f64 * 0.3;
            assert!((s.eval(a) - a).abs() < 1e-6 * a, "{a}: {}", s.eval(a));
        }
    }

    #[test]
    fn ugs_on_linear_delay_has_no_heldout_violations() {
        // x' = -x(t-1) is exponentially stable
        let sys = DelaySystem::linear_delay(0.0, -1.0, 0.0, 1.0).unwrap();
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(3, HistoryGenerator::RandomCubicSpline, 1.0, 0.0, 60);
        let fit = estimate_ugs(&sys, &v, &space, &RunOptions::new(10.0)).unwrap();
        assert_eq!(fit.training_violations, 0);
        let h = fit.heldout.as_ref().unwrap();
        assert!(h.samples > 0);
        assert_eq!(fit.as_ugb().offset, 0.0);
    }

    #[test]
    fn ulim_trivial_when_target_contains_start() {
        let sys = DelaySystem::linear_delay(0.0, -1.0, 0.0, 1.0).unwrap();
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(4, HistoryGenerator::RandomCubicSpline, 1.0, 0.0, 20);
        let fit = estimate_ulim(&sys, &v, &ComparisonFn::zero(), 1.0, 1.0, &space, 5.0).unwrap();
        assert_eq!(fit.tau, Some(0.0));
    }

    #[test]
    fn settle_never_precedes_first_hit() {
        let sys = DelaySystem::linear_delay(-1.0, 0.9, 0.0, 1.0).unwrap();
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(5, HistoryGenerator::RandomCubicSpline, 1.0, 0.0, 30);
        let z = ComparisonFn::zero();
        let a = estimate_ulim(&sys, &v, &z, 0.01, 1.0, &space, 60.0).unwrap();
        let b = estimate_uag(&sys, &v, &z, 0.01, 1.0, &space, 60.0, false).unwrap();
        assert!(a.tau.is_some() && b.tau.is_some());
        assert!(b.tau.unwrap() >= a.tau.unwrap());
    }

    #[test]
    fn uag_frozen_constants_settle_at_zero() {
        let sys = DelaySystem::zero(1, 1, 1.0);
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(6, HistoryGenerator::Constants, 1.0, 0.0, 20);
        let fit = estimate_uag(&sys, &v, &ComparisonFn::identity(), 0.5, 0.5, &space, 2.0, false).unwrap();
        assert_eq!(fit.tau, Some(0.0));
    }

    #[test]
    fn iss_fit_on_frozen_constants_fails() {
        let sys = DelaySystem::zero(1, 1, 1.0);
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(7, HistoryGenerator::Constants, 1.0, 0.0, 20);
        let opts = IssOptions {
            run: RunOptions::new(5.0),
            ..IssOptions::default()
        };
        assert!(matches!(fit_iss_kl(&sys, &v, &space, &opts), Err(Error::FitFailure(_))));
    }

    #[test]
    fn iss_fit_on_stable_linear_system() {
        let sys = DelaySystem::linear_delay(-2.0, 0.5, 1.0, 1.0).unwrap();
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(8, HistoryGenerator::RandomCubicSpline, 1.0, 0.5, 40);
        let opts = IssOptions {
            run: RunOptions::new(10.0),
            ..IssOptions::default()
        };
        let fit = fit_iss_kl(&sys, &v, &space, &opts).unwrap();
        assert_eq!(fit.report.training_violations, 0);
        assert!(!fit.gamma.is_zero());
        assert!(fit.report.levels_reached >= 3);
        for r in [0.1, 0.5, 1.0] {
            assert!(fit.beta.eval(r, 0.0) <= 2.0 * fit.sigma.eval(r) * (1.0 + 1e-12) || r > 1.0);
        }
    }

    #[test]
    fn tau_identity_instances() {
        let id = ComparisonFn::identity();
        let a = hitting_time_bound(2.0, 1.0, 1.0, &id, &id, &id).unwrap();
        assert!((a.tau.unwrap() - 32.0).abs() < 1e-9);
        assert!(a.overlap_ok);
        let b = hitting_time_bound(1.0, 2.0, 1.0, &id, &id, &id).unwrap();
        assert!((b.tau.unwrap() - 2.0).abs() < 1e-9);
        assert!(!b.overlap_ok);
        // p lowered to θμ(r) = 1: 4·1·1·1/(1·0.5)
        assert!((b.tau_repaired.unwrap() - 8.0).abs() < 1e-9);
        assert!(matches!(hitting_time_bound(0.0, 1.0, 1.0, &id, &id, &id), Err(Error::Domain(_))));
        assert!(matches!(hitting_time_bound(1.0, 0.0, 1.0, &id, &id, &id), Err(Error::Domain(_))));
    }

    #[test]
    fn shifted_kl_values() {
        let b = KLFn::new("re^-t", |r, t| r * (-t).exp());
        let s = viss_to_iss(&b, 1.0);
        let r = 1.7;
        assert!((s.eval(r, 0.5) - 1.5 * r).abs() < 1e-12);
        assert!((s.eval(r, 2.0) - r * (-1.0f64).exp()).abs() < 1e-12);
        assert!((s.eval(r, 1.0) - b.eval(r, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn history_bound_closed_forms() {
        let id = ComparisonFn::identity();
        let (s, g) = history_bound(&id, &id, &id).unwrap();
        assert!((s.eval(3.0) - 6.0).abs() < 1e-9 && (g.eval(3.0) - 6.0).abs() < 1e-9);
        let sq = ComparisonFn::power(1.0, 2.0).unwrap();
        let (s, g) = history_bound(&id, &ComparisonFn::zero(), &sq).unwrap();
        assert!((s.eval(8.0) - 4.0).abs() < 1e-9);
        assert!(g.is_zero());
    }

    #[test]
    fn derivative_bound_closed_forms() {
        let id = ComparisonFn::identity();
        let (m1, m2) = derivative_bound(&id, &id, &id, &id).unwrap();
        assert!((m1.eval(2.0) - 4.0).abs() < 1e-12);
        assert!((m2.eval(2.0) - 6.0).abs() < 1e-12);
        let (_, m2) = derivative_bound(&id, &ComparisonFn::zero(), &id, &id).unwrap();
        assert!((m2.eval(2.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cep_frozen_and_unstable() {
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(9, HistoryGenerator::Constants, 1.0, 0.0, 20);
        let frozen = DelaySystem::zero(1, 1, 1.0);
        let r = cep_check(&frozen, &v, 0.3, 2.0, &space).unwrap();
        assert_eq!(r.delta, 0.3);
        assert!(r.report.pass);
        let unstable = DelaySystem::linear_delay(1.0, 0.0, 0.0, 1.0).unwrap();
        let r = cep_check(&unstable, &v, 0.3, 3.0, &space).unwrap();
        assert!(r.delta < 0.3 && r.report.pass);
    }

    #[test]
    fn brs_from_frozen_runs() {
        let sys = DelaySystem::zero(1, 1, 1.0);
        let v = LkfCandidate::quad_exp(1.0, 0.0, 1.0).unwrap();
        let space = SampleSpace::new(10, HistoryGenerator::Constants, 1.0, 0.0, 20);
        let data = brs_samples(&sys, &v, &space, &RunOptions::new(2.0), 10).unwrap();
        let b = brs_envelope(&data).unwrap();
        for &(a, _, t, x) in data.iter().step_by(7) {
            if a > 0.0 && t > 0.0 {
                assert!(b.eval(a, 0.0, t) >= x);
            }
        }
        assert!(brs_envelope(&[]).is_err());
    }
}
