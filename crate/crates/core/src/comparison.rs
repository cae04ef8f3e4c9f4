//! Comparison functions.
//!
//! A [`ComparisonFn`] wraps an opaque evaluator `ℝ₊ → ℝ₊` together with the
//! class it claims to belong to. Class membership is *certified by sampling*
//! on a dense grid over `[0, domain_cap]` when the function is built through
//! [`ComparisonFn::new`]; nothing symbolic is attempted.
//!
//! Classes:
//!
//! | class  | requirements checked on the grid                          |
//! |--------|-----------------------------------------------------------|
//! | `K`    | `f(0) = 0`, strictly increasing                           |
//! | `Kinf` | as `K`; unboundedness is assumed past `domain_cap`        |
//! | `L`    | strictly decreasing, `f(cap) < 1e-3·f(0)`                 |
//! | `PD`   | `f(0) = 0`, `f(s) > 0` for `s > 0`                        |
//! | `Zero` | identically zero (the `{0}` in "`K ∪ {0}`")               |
//!
//! Values that underflow to exactly `0.0` on both ends of a grid cell are
//! treated as unresolved rather than as a violation: functions such as
//! `exp(-1/s)` are positive but not representable near the origin.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default right end of the certified domain.
pub const DEFAULT_DOMAIN_CAP: f64 = 1e6;
/// Default number of certification samples.
pub const DEFAULT_CERT_SAMPLES: usize = 10_000;

const ZERO_AT_ZERO_TOL: f64 = 1e-12;
const INVERT_RTOL: f64 = 1e-10;

/// Class of a comparison function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FnClass {
    K,
    Kinf,
    L,
    PD,
    Zero,
}

impl FnClass {
    pub fn name(self) -> &'static str {
        match self {
            FnClass::K => "K",
            FnClass::Kinf => "Kinf",
            FnClass::L => "L",
            FnClass::PD => "PD",
            FnClass::Zero => "Zero",
        }
    }

    fn is_k(self) -> bool {
        matches!(self, FnClass::K | FnClass::Kinf)
    }
}

impl fmt::Display for FnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

type Eval1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type Eval2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Options controlling sampled certification.
#[derive(Debug, Clone, Copy)]
pub struct CertOptions {
    pub samples: usize,
    /// Smallest positive argument on the geometric half of the grid.
    /// `None` means `1e-12 · domain_cap`.
    pub floor: Option<f64>,
}

impl Default for CertOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_CERT_SAMPLES,
            floor: None,
        }
    }
}

/// Certification grid: `0`, a uniform half and a geometric half over
/// `[floor, cap]`, sorted and deduplicated.
pub fn certification_grid(cap: f64, opts: CertOptions) -> Vec<f64> {
    let half = (opts.samples / 2).max(2);
    let floor = opts.floor.unwrap_or(cap * 1e-12).min(cap);
    let mut grid = Vec::with_capacity(2 * half + 1);
    grid.push(0.0);
    for i in 1..=half {
        grid.push(cap * i as f64 / half as f64);
    }
    let ratio = (cap / floor).ln();
    for i in 0..half {
        grid.push(floor * (ratio * i as f64 / (half - 1) as f64).exp());
    }
    grid.retain(|s| *s >= 0.0 && *s <= cap);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * a.abs().max(*b));
    grid
}

/// A class K / K∞ / L / PD function (or the zero function).
#[derive(Clone)]
pub struct ComparisonFn {
    class: FnClass,
    eval: Eval1,
    domain_cap: f64,
    label: String,
}

impl fmt::Debug for ComparisonFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComparisonFn")
            .field("class", &self.class)
            .field("label", &self.label)
            .field("domain_cap", &self.domain_cap)
            .finish()
    }
}

impl ComparisonFn {
    /// Builds and certifies with default options.
    pub fn new<F>(class: FnClass, label: impl Into<String>, domain_cap: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::with_options(class, label, domain_cap, CertOptions::default(), f)
    }

    pub fn with_options<F>(
        class: FnClass,
        label: impl Into<String>,
        domain_cap: f64,
        opts: CertOptions,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let g = Self::uncertified(class, label, domain_cap, f);
        g.certify(opts)?;
        Ok(g)
    }

    /// Builds without sampling. The caller vouches for class membership.
    pub fn uncertified<F>(class: FnClass, label: impl Into<String>, domain_cap: f64, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            class,
            eval: Arc::new(f),
            domain_cap,
            label: label.into(),
        }
    }

    pub fn identity() -> Self {
        Self::uncertified(FnClass::Kinf, "identity", DEFAULT_DOMAIN_CAP, |s| s)
    }

    /// `s ↦ k·s`, `k > 0`.
    pub fn linear(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("linear slope must be positive, got {k}")));
        }
        Ok(Self::uncertified(FnClass::Kinf, format!("linear({k})"), DEFAULT_DOMAIN_CAP, move |s| k * s))
    }

    /// `s ↦ k·sᵖ`, `k, p > 0`.
    pub fn power(k: f64, p: f64) -> Result<Self> {
        if !(k > 0.0 && p > 0.0 && k.is_finite() && p.is_finite()) {
            return Err(Error::Domain(format!("power needs k, p > 0, got k={k}, p={p}")));
        }
        Ok(Self::uncertified(
            FnClass::Kinf,
            format!("power({k},{p})"),
            DEFAULT_DOMAIN_CAP,
            move |s| k * s.powf(p),
        ))
    }

    /// `s ↦ exp(-rate·s)`, class L.
    pub fn exp_decay(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!("decay rate must be positive, got {rate}")));
        }
        Ok(Self::uncertified(
            FnClass::L,
            format!("exp-decay({rate})"),
            DEFAULT_DOMAIN_CAP,
            move |s| (-rate * s).exp(),
        ))
    }

    pub fn zero() -> Self {
        Self::uncertified(FnClass::Zero, "zero", DEFAULT_DOMAIN_CAP, |_| 0.0)
    }

    /// Piecewise-linear interpolation of `(s, f(s))` pairs, then certified.
    ///
    /// Past the last point the final slope is continued (for `Kinf`) or the
    /// last value is held (other classes).
    pub fn tabulated(class: FnClass, label: impl Into<String>, points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("tabulated function needs at least two points".into()));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if pts[0].0 != 0.0 {
            return Err(Error::Domain("tabulated function must start at s = 0".into()));
        }
        if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Domain("tabulated abscissae must be distinct".into()));
        }
        let cap = pts.last().unwrap().0;
        let extend = class == FnClass::Kinf;
        let f = move |s: f64| interpolate_linear(&pts, s, extend);
        // certification on the tabulated range only
        let g = Self::uncertified(class, label, cap, f);
        g.certify(CertOptions {
            samples: DEFAULT_CERT_SAMPLES,
            floor: Some(cap * 1e-9),
        })?;
        Ok(g)
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        (self.eval)(s)
    }

    pub fn class(&self) -> FnClass {
        self.class
    }

    pub fn domain_cap(&self) -> f64 {
        self.domain_cap
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_zero(&self) -> bool {
        self.class == FnClass::Zero
    }

    /// Replaces the certified domain cap (does not re-certify).
    pub fn with_domain_cap(mut self, cap: f64) -> Self {
        self.domain_cap = cap;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Checks the class invariants on the certification grid.
    pub fn certify(&self, opts: CertOptions) -> Result<()> {
        let grid = certification_grid(self.domain_cap, opts);
        let vals: Vec<f64> = grid.iter().map(|&s| self.eval(s)).collect();
        let fail = |at: f64, reason: String| Error::NotCertified {
            class: self.class.name(),
            at,
            reason,
        };
        for (s, v) in grid.iter().zip(&vals) {
            if !v.is_finite() || *v < 0.0 {
                return Err(fail(*s, format!("value {v} is not a finite nonnegative number")));
            }
        }
        let f0 = vals[0];
        match self.class {
            FnClass::K | FnClass::Kinf | FnClass::PD | FnClass::Zero => {
                if f0.abs() > ZERO_AT_ZERO_TOL {
                    return Err(fail(0.0, format!("f(0) = {f0} ≠ 0")));
                }
            }
            FnClass::L => {
                if f0 <= 0.0 {
                    return Err(fail(0.0, format!("f(0) = {f0} must be positive")));
                }
            }
        }
        match self.class {
            FnClass::K | FnClass::Kinf => {
                for i in 1..grid.len() {
                    let (a, b) = (vals[i - 1], vals[i]);
                    if b <= a && !(a == 0.0 && b == 0.0) {
                        return Err(fail(grid[i], format!("not strictly increasing: {a} then {b}")));
                    }
                }
                if *vals.last().unwrap() <= 0.0 {
                    return Err(fail(self.domain_cap, "identically zero".into()));
                }
            }
            FnClass::L => {
                for i in 1..grid.len() {
                    let (a, b) = (vals[i - 1], vals[i]);
                    if b >= a && !(a == 0.0 && b == 0.0) {
                        return Err(fail(grid[i], format!("not strictly decreasing: {a} then {b}")));
                    }
                }
                let last = *vals.last().unwrap();
                if last >= f0 * 1e-3 {
                    return Err(fail(self.domain_cap, format!("f(cap) = {last} does not decay")));
                }
            }
            FnClass::PD => {
                for (s, v) in grid.iter().zip(&vals).skip(1) {
                    if *v <= 0.0 {
                        return Err(fail(*s, "not positive".into()));
                    }
                }
            }
            FnClass::Zero => {
                if let Some((s, v)) = grid.iter().zip(&vals).find(|(_, v)| **v != 0.0) {
                    return Err(fail(*s, format!("value {v} ≠ 0")));
                }
            }
        }
        Ok(())
    }

    /// Solves `f(x) = y` by bracketing and bisection.
    ///
    /// For `Kinf` the bracket grows geometrically without bound; for `K` it is
    /// limited to the certified domain.
    pub fn invert(&self, y: f64) -> Result<f64> {
        if !self.class.is_k() {
            return Err(Error::KindMismatch(format!(
                "cannot invert a function of class {}",
                self.class
            )));
        }
        let f0 = self.eval(0.0);
        if !(y >= f0) {
            return Err(Error::Domain(format!("invert: y = {y} below f(0) = {f0}")));
        }
        if y == f0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = match self.class {
            FnClass::K => {
                let reach = self.eval(self.domain_cap);
                if y > reach {
                    return Err(Error::NoBracket {
                        target: y,
                        reachable: reach,
                    });
                }
                (0.0, self.domain_cap)
            }
            _ => {
                let mut hi = 1.0f64;
                let mut lo = 0.0;
                while self.eval(hi) < y {
                    lo = hi;
                    hi *= 2.0;
                    if !hi.is_finite() || hi > 1e300 {
                        return Err(Error::NoBracket {
                            target: y,
                            reachable: self.eval(lo),
                        });
                    }
                }
                (lo, hi)
            }
        };
        // bisect down to adjacent floats so that the inverse is as smooth as
        // the function allows (it is integrated downstream)
        for _ in 0..2200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (flo, fhi) = (self.eval(lo), self.eval(hi));
        let x = if (flo - y).abs() <= (fhi - y).abs() { lo } else { hi };
        let err = (self.eval(x) - y).abs();
        if err > INVERT_RTOL * y.max(1.0) {
            return Err(Error::Domain(format!(
                "invert: residual {err} at y = {y} (function too steep or discontinuous)"
            )));
        }
        Ok(x)
    }

    /// The inverse function, for `K` (on its range) and `Kinf`.
    pub fn inverse(&self) -> Result<ComparisonFn> {
        if !self.class.is_k() {
            return Err(Error::KindMismatch(format!("class {} has no inverse", self.class)));
        }
        let inner = self.clone();
        let cap = self.eval(self.domain_cap);
        let label = format!("({})⁻¹", self.label);
        let class = self.class;
        Ok(Self::uncertified(class, label, cap, move |y| {
            // clamp on failure so that the evaluator stays total
            inner.invert(y.max(0.0)).unwrap_or(inner.domain_cap)
        }))
    }

    /// `s ↦ k·f(s)`.
    pub fn scale(&self, k: f64) -> Result<ComparisonFn> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("scale factor must be positive, got {k}")));
        }
        let g = self.eval.clone();
        Ok(Self {
            class: self.class,
            eval: Arc::new(move |s| k * g(s)),
            domain_cap: self.domain_cap,
            label: format!("{k}·{}", self.label),
        })
    }

    /// Pointwise sum. `K + K∞ = K∞`, `PD + K = PD`, `Zero` is neutral.
    pub fn add(&self, other: &ComparisonFn) -> Result<ComparisonFn> {
        use FnClass::*;
        let class = match (self.class, other.class) {
            (Zero, c) | (c, Zero) => c,
            (Kinf, K) | (K, Kinf) | (Kinf, Kinf) => Kinf,
            (K, K) => K,
            (PD, K) | (K, PD) | (PD, Kinf) | (Kinf, PD) | (PD, PD) => PD,
            (L, L) => L,
            (a, b) => return Err(Error::KindMismatch(format!("{a} + {b} has no class"))),
        };
        let (f, g) = (self.eval.clone(), other.eval.clone());
        Ok(Self {
            class,
            eval: Arc::new(move |s| f(s) + g(s)),
            domain_cap: self.domain_cap.min(other.domain_cap),
            label: format!("{} + {}", self.label, other.label),
        })
    }

    /// Pointwise maximum of two functions of the same increasing family.
    pub fn max(&self, other: &ComparisonFn) -> Result<ComparisonFn> {
        use FnClass::*;
        let class = match (self.class, other.class) {
            (Zero, c) | (c, Zero) => c,
            (Kinf, _) | (_, Kinf) if self.class != L && other.class != L => Kinf,
            (K, K) => K,
            (PD, K) | (K, PD) | (PD, PD) => PD,
            (L, L) => L,
            (a, b) => return Err(Error::KindMismatch(format!("max({a}, {b}) has no class"))),
        };
        let (f, g) = (self.eval.clone(), other.eval.clone());
        Ok(Self {
            class,
            eval: Arc::new(move |s| f(s).max(g(s))),
            domain_cap: self.domain_cap.min(other.domain_cap),
            label: format!("max({}, {})", self.label, other.label),
        })
    }

    /// Central-difference derivative, one-sided at 0.
    pub fn derivative(&self, s: f64) -> f64 {
        let h = 1e-6 * s.abs().max(1e-3);
        if s - h < 0.0 {
            (self.eval(s + h) - self.eval(s)) / h
        } else {
            (self.eval(s + h) - self.eval(s - h)) / (2.0 * h)
        }
    }
}

/// `outer ∘ inner`.
///
/// Defined classes: `K∞∘K∞ = K∞`, any other `K`-family pair gives `K`;
/// `PD∘K = K∘PD = PD`; `L∘K∞ = L`; anything composed with `Zero` is `Zero`
/// (provided the outer function vanishes at 0).
pub fn compose(outer: &ComparisonFn, inner: &ComparisonFn) -> Result<ComparisonFn> {
    use FnClass::*;
    let class = match (outer.class, inner.class) {
        (Kinf, Kinf) => Kinf,
        (K, K) | (K, Kinf) | (Kinf, K) => K,
        (PD, K) | (PD, Kinf) | (K, PD) | (Kinf, PD) => PD,
        (L, Kinf) => L,
        (Zero, _) => Zero,
        (o, Zero) if o != L => Zero,
        (o, i) => return Err(Error::KindMismatch(format!("{o} ∘ {i} has no defined class"))),
    };
    let (f, g) = (outer.eval.clone(), inner.eval.clone());
    let reach = inner.eval(inner.domain_cap);
    let domain_cap = if inner.class.is_k() && reach > outer.domain_cap {
        inner.invert(outer.domain_cap).unwrap_or(inner.domain_cap)
    } else {
        inner.domain_cap
    };
    Ok(ComparisonFn {
        class,
        eval: Arc::new(move |s| f(g(s))),
        domain_cap,
        label: format!("{}∘{}", outer.label, inner.label),
    })
}

fn interpolate_linear(pts: &[(f64, f64)], s: f64, extend: bool) -> f64 {
    let n = pts.len();
    if s <= pts[0].0 {
        return pts[0].1;
    }
    if s >= pts[n - 1].0 {
        if extend {
            let (a, b) = (pts[n - 2], pts[n - 1]);
            return b.1 + (s - b.0) * (b.1 - a.1) / (b.0 - a.0);
        }
        return pts[n - 1].1;
    }
    let k = pts.partition_point(|p| p.0 <= s);
    let (a, b) = (pts[k - 1], pts[k]);
    a.1 + (s - a.0) * (b.1 - a.1) / (b.0 - a.0)
}

/// A class KL function `β(r, t)`.
#[derive(Clone)]
pub struct KLFn {
    section: Arc<dyn Fn(f64) -> Eval1 + Send + Sync>,
    label: String,
}

impl fmt::Debug for KLFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KLFn").field("label", &self.label).finish()
    }
}

impl KLFn {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        let f: Eval2 = Arc::new(f);
        Self {
            section: Arc::new(move |r| {
                let f = f.clone();
                Arc::new(move |t| f(r, t))
            }),
            label: label.into(),
        }
    }

    /// Builds from a map `r ↦ β(r, ·)`; useful when per-magnitude setup is
    /// expensive and the section is evaluated at many times.
    pub fn from_sections<S>(label: impl Into<String>, section: S) -> Self
    where
        S: Fn(f64) -> Eval1 + Send + Sync + 'static,
    {
        Self {
            section: Arc::new(section),
            label: label.into(),
        }
    }

    pub fn eval(&self, r: f64, t: f64) -> f64 {
        (self.section)(r)(t)
    }

    /// `t ↦ β(r, t)`.
    pub fn section(&self, r: f64) -> impl Fn(f64) -> f64 {
        let s = (self.section)(r);
        move |t| s(t)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Sampled KL invariants on the grids: increasing in `r` with
    /// `β(0, t) = 0`, non-increasing in `t`, and `β(r, t_far) < 1e-3·β(r, 0)`
    /// for `r > 0` when `t_far` is given.
    pub fn check_invariants(&self, r_grid: &[f64], t_grid: &[f64], t_far: Option<f64>) -> Result<()> {
        let fail = |at: f64, reason: String| Error::NotCertified {
            class: "KL",
            at,
            reason,
        };
        for &t in t_grid {
            let mut prev: Option<f64> = None;
            for &r in r_grid {
                let v = self.eval(r, t);
                if !v.is_finite() || v < 0.0 {
                    return Err(fail(r, format!("β({r},{t}) = {v}")));
                }
                if r == 0.0 && v.abs() > ZERO_AT_ZERO_TOL {
                    return Err(fail(r, format!("β(0,{t}) = {v} ≠ 0")));
                }
                if let Some(p) = prev {
                    if v < p {
                        return Err(fail(r, format!("β(·,{t}) decreases: {p} then {v}")));
                    }
                }
                prev = Some(v);
            }
        }
        for &r in r_grid.iter().filter(|r| **r > 0.0) {
            let sec = self.section(r);
            let mut prev = f64::INFINITY;
            for &t in t_grid {
                let v = sec(t);
                if v > prev {
                    return Err(fail(r, format!("β({r},·) increases at t = {t}: {prev} then {v}")));
                }
                prev = v;
            }
            if let Some(tf) = t_far {
                let (v0, vf) = (sec(0.0), sec(tf));
                if v0 > 0.0 && vf >= 1e-3 * v0 {
                    return Err(fail(r, format!("β({r},{tf}) = {vf} does not decay from {v0}")));
                }
            }
        }
        Ok(())
    }
}

/// Decay times `τₙ(r)`, `n = 1..=levels`; `τ₀ = 0` is implicit.
pub trait DecayTimes: Send + Sync {
    fn levels(&self) -> usize;
    fn time(&self, level: usize, r: f64) -> f64;
}

/// Decay times given by a closure.
pub struct DecayTable<F> {
    levels: usize,
    f: F,
}

impl<F: Fn(usize, f64) -> f64 + Send + Sync> DecayTable<F> {
    pub fn new(levels: usize, f: F) -> Self {
        Self { levels, f }
    }
}

impl<F: Fn(usize, f64) -> f64 + Send + Sync> DecayTimes for DecayTable<F> {
    fn levels(&self) -> usize {
        self.levels
    }
    fn time(&self, level: usize, r: f64) -> f64 {
        (self.f)(level, r)
    }
}

/// Magnitude grid on which `sup_{s ≤ r} ω(s, t)` is evaluated.
pub fn default_kl_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    // 20 points per decade over [1e-6, 1e6]
    for i in 0..=240 {
        g.push(10f64.powf(-6.0 + i as f64 / 20.0));
    }
    g
}

/// Knots of `ω(r, ·)`: `(0, 2σ(r))`, `(τₙ, 2^{1-n} σ(r))`.
#[derive(Debug, Clone)]
struct OmegaSection {
    times: Vec<f64>,
    values: Vec<f64>,
    tail_rate: f64,
}

impl OmegaSection {
    fn build(sigma_r: f64, times: &dyn DecayTimes, r: f64) -> OmegaSection {
        let levels = times.levels();
        let mut ts = Vec::with_capacity(levels + 1);
        let mut vs = Vec::with_capacity(levels + 1);
        ts.push(0.0);
        vs.push(2.0 * sigma_r);
        let mut scale = 1.0;
        for n in 1..=levels {
            let mut tn = times.time(n, r);
            let prev = *ts.last().unwrap();
            // silently repair non-monotone queries off the validated grid
            if !(tn > prev) {
                tn = prev + 1e-9 * (1.0 + prev);
            }
            ts.push(tn);
            vs.push(scale * sigma_r);
            scale *= 0.5;
        }
        let last = *ts.last().unwrap();
        let tail_rate = if levels == 0 {
            std::f64::consts::LN_2
        } else {
            std::f64::consts::LN_2 * levels as f64 / last
        };
        OmegaSection {
            times: ts,
            values: vs,
            tail_rate,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        if self.values[0] == 0.0 {
            return 0.0;
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        if self.times[k] == t {
            return self.values[k];
        }
        if k + 1 < self.times.len() {
            let (t0, t1) = (self.times[k], self.times[k + 1]);
            let (l0, l1) = (self.values[k].ln(), self.values[k + 1].ln());
            (l0 + (t - t0) / (t1 - t0) * (l1 - l0)).exp()
        } else {
            let last = self.values[k];
            last * (-(t - self.times[k]) * self.tail_rate).exp()
        }
    }
}

/// KL construction from level-crossing times.
///
/// With `εₙ = 2⁻ⁿ σ(r)` the function `ω(r, ·)` takes the value `εₙ₋₁` at
/// `τₙ(r)` and `2σ(r)` at `t = 0`, is log-linear between knots and decays
/// exponentially past the last knot. The result approximates
/// `β̂(r, t) = sup_{0 ≤ s ≤ r} ω(s, t)`: on `r_grid` it is the supremum over
/// grid points up to `r`; between neighbouring grid points it interpolates
/// linearly in `r`, capped at `2σ(r)`, which keeps it continuous and
/// non-decreasing in `r`. Beyond the last grid point `ω(r, ·)` itself joins
/// the supremum.
pub fn kl_from_decay_times(
    sigma: &ComparisonFn,
    times: Arc<dyn DecayTimes>,
    r_grid: Option<Vec<f64>>,
) -> Result<KLFn> {
    if !sigma.class.is_k() {
        return Err(Error::KindMismatch(format!(
            "σ must be of class K or Kinf, got {}",
            sigma.class
        )));
    }
    let mut grid = r_grid.unwrap_or_else(default_kl_grid);
    grid.retain(|r| r.is_finite() && *r >= 0.0);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    for &r in &grid {
        let mut prev = 0.0;
        for n in 1..=times.levels() {
            let tn = times.time(n, r);
            if !(tn > prev) {
                return Err(Error::NonMonotoneTimes { level: n, r });
            }
            prev = tn;
        }
    }
    let cached: Arc<Vec<(f64, OmegaSection)>> = Arc::new(
        grid.iter()
            .map(|&r| (r, OmegaSection::build(sigma.eval(r), times.as_ref(), r)))
            .collect(),
    );
    let sigma = sigma.clone();
    let label = format!("kl-from-decay-times[{}]", sigma.label());
    Ok(KLFn::from_sections(label, move |r: f64| -> Eval1 {
        let r = r.max(0.0);
        let cap = 2.0 * sigma.eval(r);
        let upto = cached.partition_point(|(s, _)| *s <= r);
        let cached = cached.clone();
        // past the grid: the grid sup together with ω(r, ·)
        if upto == cached.len() || upto == 0 {
            let own = OmegaSection::build(sigma.eval(r), times.as_ref(), r);
            return Arc::new(move |t| {
                let best = cached[..upto].iter().map(|(_, sec)| sec.eval(t)).fold(own.eval(t), f64::max);
                best.min(cap)
            });
        }
        let (lo, hi) = (cached[upto - 1].0, cached[upto].0);
        let w = (r - lo) / (hi - lo);
        Arc::new(move |t| {
            let below = cached[..upto].iter().map(|(_, sec)| sec.eval(t)).fold(0.0, f64::max);
            let above = below.max(cached[upto].1.eval(t));
            (below + w * (above - below)).min(cap)
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq() -> ComparisonFn {
        ComparisonFn::new(FnClass::Kinf, "s^2", 1e3, |s| s * s).unwrap()
    }

    #[test]
    fn invert_square() {
        let x = sq().invert(4.0).unwrap();
        assert!((x - 2.0).abs() < 1e-10);
    }

    #[test]
    fn invert_identity() {
        let x = ComparisonFn::identity().invert(7.3).unwrap();
        assert!((x - 7.3).abs() < 1e-10);
    }

    #[test]
    fn invert_cubic_plus_linear() {
        let f = ComparisonFn::new(FnClass::Kinf, "s+s^3", 1e3, |s| s + s * s * s).unwrap();
        // bisection oracle: 2 + 8 = 10
        let x = f.invert(10.0).unwrap();
        assert!((x - 2.0).abs() < 1e-10);
        assert!((f.eval(x) - 10.0).abs() <= 1e-10 * 10.0);
    }

    #[test]
    fn invert_bounded_k_beyond_reach() {
        let f = ComparisonFn::new(FnClass::K, "s/(1+s)", 1e3, |s| s / (1.0 + s)).unwrap();
        assert!(matches!(f.invert(0.9999), Err(Error::NoBracket { .. })));
        let x = f.invert(0.5).unwrap();
        assert!((x - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invert_rejects_non_k() {
        let l = ComparisonFn::exp_decay(1.0).unwrap();
        assert!(matches!(l.invert(0.5), Err(Error::KindMismatch(_))));
    }

    #[test]
    fn compose_examples() {
        let outer = ComparisonFn::linear(2.0).unwrap();
        let c = compose(&outer, &sq()).unwrap();
        assert_eq!(c.eval(3.0), 18.0);
        assert_eq!(c.class(), FnClass::Kinf);

        let g = ComparisonFn::power(3.0, 1.5).unwrap();
        let c = compose(&ComparisonFn::identity(), &g).unwrap();
        for s in [0.0, 0.5, 2.0, 9.0] {
            assert_eq!(c.eval(s), g.eval(s));
        }

        let sqrt = ComparisonFn::power(1.0, 0.5).unwrap();
        let quart = ComparisonFn::power(1.0, 4.0).unwrap();
        let c = compose(&sqrt, &quart).unwrap();
        assert!((c.eval(2.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn compose_kind_rules() {
        let l = ComparisonFn::exp_decay(1.0).unwrap();
        let k = ComparisonFn::identity();
        assert_eq!(compose(&l, &k).unwrap().class(), FnClass::L);
        assert!(matches!(compose(&k, &l), Err(Error::KindMismatch(_))));
        let z = ComparisonFn::zero();
        assert_eq!(compose(&k, &z).unwrap().class(), FnClass::Zero);
    }

    #[test]
    fn certification_catches_bad_functions() {
        assert!(ComparisonFn::new(FnClass::K, "bump", 10.0, |s| s * (5.0 - s).abs()).is_err());
        assert!(ComparisonFn::new(FnClass::K, "offset", 10.0, |s| 1.0 + s).is_err());
        assert!(ComparisonFn::new(FnClass::L, "slow", 10.0, |s| 1.0 / (1.0 + s)).is_err());
        assert!(ComparisonFn::new(FnClass::PD, "hole", 10.0, |s| (s - 1.0).powi(2) * s).is_err());
        assert!(ComparisonFn::new(FnClass::L, "exp", 1e6, |s| (-s).exp()).is_ok());
        assert!(ComparisonFn::new(FnClass::PD, "bump", 1e6, |s| s / (1.0 + s * s)).is_ok());
    }

    #[test]
    fn catalog_functions_certify() {
        for f in [
            ComparisonFn::identity(),
            ComparisonFn::linear(3.0).unwrap(),
            ComparisonFn::power(2.0, 2.0).unwrap(),
            ComparisonFn::power(1.0, 0.5).unwrap(),
            ComparisonFn::exp_decay(0.5).unwrap(),
            ComparisonFn::zero(),
        ] {
            f.certify(CertOptions::default()).unwrap_or_else(|e| panic!("{}: {e}", f.label()));
        }
    }

    #[test]
    fn tabulated_interpolates_monotonically() {
        let f = ComparisonFn::tabulated(FnClass::Kinf, "tab", &[(0.0, 0.0), (1.0, 2.0), (2.0, 3.0)]).unwrap();
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(1.5), 2.5);
        assert_eq!(f.eval(3.0), 4.0);
        assert!(ComparisonFn::tabulated(FnClass::K, "bad", &[(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn kl_from_unit_decay_times() {
        let sigma = ComparisonFn::identity();
        let beta = kl_from_decay_times(&sigma, Arc::new(DecayTable::new(12, |n, _| n as f64)), None).unwrap();
        assert_eq!(beta.eval(1.0, 0.0), 2.0);
        for n in 1..=12 {
            let v = beta.eval(1.0, n as f64);
            assert!(v <= 2f64.powi(1 - n as i32), "n={n}: {v}");
        }
        for t in [0.0, 0.3, 1.0, 5.5, 40.0] {
            assert_eq!(beta.eval(0.0, t), 0.0);
        }
    }

    #[test]
    fn kl_rejects_non_monotone_times() {
        let sigma = ComparisonFn::identity();
        let r = kl_from_decay_times(&sigma, Arc::new(DecayTable::new(3, |n, _| if n == 2 { 0.5 } else { n as f64 })), None);
        assert!(matches!(r, Err(Error::NonMonotoneTimes { level: 2, .. })));
    }

    #[test]
    fn kl_output_passes_invariants() {
        let sigma = sq();
        let beta = kl_from_decay_times(
            &sigma,
            Arc::new(DecayTable::new(10, |n, r: f64| n as f64 * (1.0 + r.sqrt()))),
            None,
        )
        .unwrap();
        let r_grid: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let t_grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.2).collect();
        beta.check_invariants(&r_grid, &t_grid, Some(500.0)).unwrap();
        for &r in &r_grid {
            assert!(beta.eval(r, 0.0) <= 2.0 * sigma.eval(r) * (1.0 + 1e-15));
        }
    }
}
