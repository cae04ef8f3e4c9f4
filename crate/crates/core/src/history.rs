//! Piecewise-cubic histories `φ ∈ C([-θ,0], ℝⁿ)`.
//!
//! Each segment stores Hermite data (endpoint values and one-sided
//! derivatives), so evaluation at breakpoints is exact and derivative kinks
//! are representable.

use std::fmt::Write as _;

use crate::{Error, Result};

/// Number of segments used when sampling an analytic history.
pub const DEFAULT_SEGMENTS: usize = 64;

const CONTINUITY_TOL: f64 = 1e-10;

/// Read access to a history by time offset. Implemented by
/// [`HistoryFunction`] and by the solver's in-step views.
pub trait HistoryAccess {
    fn theta(&self) -> f64;
    fn dim(&self) -> usize;
    /// Writes `φ(τ)` into `out`; `τ` is clamped to `[-θ, 0]`.
    fn at_into(&self, tau: f64, out: &mut [f64]);

    fn at(&self, tau: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.at_into(tau, &mut v);
        v
    }

    /// First coordinate, for scalar systems.
    fn at1(&self, tau: f64) -> f64 {
        let mut v = vec![0.0; self.dim()];
        self.at_into(tau, &mut v);
        v[0]
    }
}

/// One cubic piece on `[t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub d0: Vec<f64>,
    pub d1: Vec<f64>,
}

impl Segment {
    pub fn width(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Power-basis coefficients of coordinate `i` in the local variable
    /// `s = τ - t0`: `a0 + a1 s + a2 s² + a3 s³`.
    pub fn coefficients(&self, i: usize) -> [f64; 4] {
        let w = self.width();
        let dy = (self.y1[i] - self.y0[i]) / w;
        let (d0, d1) = (self.d0[i], self.d1[i]);
        [
            self.y0[i],
            d0,
            (3.0 * dy - 2.0 * d0 - d1) / w,
            (d0 + d1 - 2.0 * dy) / (w * w),
        ]
    }

    #[inline]
    pub fn eval_coord(&self, tau: f64, i: usize) -> f64 {
        let w = self.width();
        let u = (tau - self.t0) / w;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * self.y0[i] + h10 * w * self.d0[i] + h01 * self.y1[i] + h11 * w * self.d1[i]
    }

    #[inline]
    pub fn deriv_coord(&self, tau: f64, i: usize) -> f64 {
        let w = self.width();
        let u = (tau - self.t0) / w;
        let u2 = u * u;
        let g00 = (6.0 * u2 - 6.0 * u) / w;
        let g10 = 3.0 * u2 - 4.0 * u + 1.0;
        let g01 = (-6.0 * u2 + 6.0 * u) / w;
        let g11 = 3.0 * u2 - 2.0 * u;
        g00 * self.y0[i] + g10 * self.d0[i] + g01 * self.y1[i] + g11 * self.d1[i]
    }

    /// The same cubic restricted to `[a, b] ⊂ [t0, t1]` and translated by `shift`.
    pub fn restrict(&self, a: f64, b: f64, shift: f64) -> Segment {
        let n = self.y0.len();
        let pick = |t: f64, edge_t: f64, edge: &Vec<f64>, f: &dyn Fn(f64, usize) -> f64| -> Vec<f64> {
            if t == edge_t {
                edge.clone()
            } else {
                (0..n).map(|i| f(t, i)).collect()
            }
        };
        let ev = |t, i| self.eval_coord(t, i);
        let dv = |t, i| self.deriv_coord(t, i);
        Segment {
            t0: a + shift,
            t1: b + shift,
            y0: if a == self.t1 { self.y1.clone() } else { pick(a, self.t0, &self.y0, &ev) },
            y1: if b == self.t0 { self.y0.clone() } else { pick(b, self.t1, &self.y1, &ev) },
            d0: pick(a, self.t0, &self.d0, &dv),
            d1: pick(b, self.t1, &self.d1, &dv),
        }
    }
}

/// Hermite data at one breakpoint. `d_left`/`d_right` differ at kinks.
#[derive(Debug, Clone, PartialEq)]
pub struct Knot {
    pub tau: f64,
    pub y: Vec<f64>,
    pub d_left: Vec<f64>,
    pub d_right: Vec<f64>,
}

/// A continuous piecewise-cubic history on `[-θ, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFunction {
    theta: f64,
    dim: usize,
    segments: Vec<Segment>,
}

impl HistoryFunction {
    /// Validates tiling of `[-θ, 0]` and continuity at breakpoints.
    pub fn from_segments(theta: f64, dim: usize, segments: Vec<Segment>) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidHistory(format!("delay must be positive, got {theta}")));
        }
        if dim == 0 || segments.is_empty() {
            return Err(Error::InvalidHistory("empty history".into()));
        }
        let eps = 1e-12 * theta;
        if (segments[0].t0 + theta).abs() > eps || segments.last().unwrap().t1.abs() > eps {
            return Err(Error::InvalidHistory(format!(
                "segments span [{}, {}] instead of [{}, 0]",
                segments[0].t0,
                segments.last().unwrap().t1,
                -theta
            )));
        }
        for (k, s) in segments.iter().enumerate() {
            if !(s.t1 > s.t0) {
                return Err(Error::InvalidHistory(format!("segment {k} has non-positive width")));
            }
            if [&s.y0, &s.y1, &s.d0, &s.d1].iter().any(|v| v.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.y0.len(),
                });
            }
            if [&s.y0, &s.y1, &s.d0, &s.d1].iter().any(|v| v.iter().any(|x| !x.is_finite())) {
                return Err(Error::InvalidHistory(format!("segment {k} has non-finite data")));
            }
        }
        for (k, w) in segments.windows(2).enumerate() {
            if (w[0].t1 - w[1].t0).abs() > eps {
                return Err(Error::InvalidHistory(format!("gap or overlap after segment {k}")));
            }
            for i in 0..dim {
                let (a, b) = (w[0].y1[i], w[1].y0[i]);
                if (a - b).abs() > CONTINUITY_TOL * (1.0 + a.abs()) {
                    return Err(Error::InvalidHistory(format!(
                        "discontinuity at τ = {}: {a} vs {b}",
                        w[0].t1
                    )));
                }
            }
        }
        let mut segments = segments;
        segments[0].t0 = -theta;
        segments.last_mut().unwrap().t1 = 0.0;
        for k in 1..segments.len() {
            segments[k].t0 = segments[k - 1].t1;
        }
        Ok(Self { theta, dim, segments })
    }

    pub fn constant(theta: f64, value: &[f64]) -> Result<Self> {
        let z = vec![0.0; value.len()];
        Self::from_segments(
            theta,
            value.len(),
            vec![Segment {
                t0: -theta,
                t1: 0.0,
                y0: value.to_vec(),
                y1: value.to_vec(),
                d0: z.clone(),
                d1: z,
            }],
        )
    }

    pub fn zero(theta: f64, dim: usize) -> Self {
        Self::constant(theta, &vec![0.0; dim]).expect("zero history is valid")
    }

    /// Hermite fit of an analytic function on `segments` equal pieces, with
    /// derivatives by central differences.
    pub fn sample<F>(theta: f64, dim: usize, segments: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let hd = 1e-6 * theta / segments.max(1) as f64;
        let df = |t: f64| -> Vec<f64> {
            let (a, b) = ((t - hd).max(-theta), (t + hd).min(0.0));
            let (fa, fb) = (f(a), f(b));
            fa.iter().zip(&fb).map(|(x, y)| (y - x) / (b - a)).collect()
        };
        Self::sample_with_derivative(theta, dim, segments, &f, df)
    }

    pub fn sample_with_derivative<F, D>(theta: f64, dim: usize, segments: usize, f: F, df: D) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
        D: Fn(f64) -> Vec<f64>,
    {
        let segments = segments.max(1);
        let taus: Vec<f64> = (0..=segments)
            .map(|k| if k == segments { 0.0 } else { -theta + theta * k as f64 / segments as f64 })
            .collect();
        let knots: Vec<Knot> = taus
            .iter()
            .map(|&t| {
                let d = df(t);
                Knot {
                    tau: t,
                    y: f(t),
                    d_left: d.clone(),
                    d_right: d,
                }
            })
            .collect();
        if knots.iter().any(|k| k.y.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: knots[0].y.len(),
            });
        }
        Self::from_knots(theta, &knots)
    }

    /// Builds from breakpoint data ordered from `-θ` to `0`.
    pub fn from_knots(theta: f64, knots: &[Knot]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidHistory("need at least two knots".into()));
        }
        let dim = knots[0].y.len();
        let segments = knots
            .windows(2)
            .map(|w| Segment {
                t0: w[0].tau,
                t1: w[1].tau,
                y0: w[0].y.clone(),
                y1: w[1].y.clone(),
                d0: w[0].d_right.clone(),
                d1: w[1].d_left.clone(),
            })
            .collect();
        Self::from_segments(theta, dim, segments)
    }

    /// Scalar convenience: knots `(τ, value, derivative)`.
    pub fn scalar_from_knots(theta: f64, knots: &[(f64, f64, f64)]) -> Result<Self> {
        let ks: Vec<Knot> = knots
            .iter()
            .map(|&(t, y, d)| Knot {
                tau: t,
                y: vec![y],
                d_left: vec![d],
                d_right: vec![d],
            })
            .collect();
        Self::from_knots(theta, &ks)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Breakpoint data; `d_left` of the first knot and `d_right` of the last
    /// one are the one-sided derivatives from inside the domain.
    pub fn knots(&self) -> Vec<Knot> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let first = &self.segments[0];
        out.push(Knot {
            tau: first.t0,
            y: first.y0.clone(),
            d_left: first.d0.clone(),
            d_right: first.d0.clone(),
        });
        for (k, s) in self.segments.iter().enumerate() {
            let d_right = self.segments.get(k + 1).map(|n| n.d0.clone()).unwrap_or_else(|| s.d1.clone());
            out.push(Knot {
                tau: s.t1,
                y: s.y1.clone(),
                d_left: s.d1.clone(),
                d_right,
            });
        }
        out
    }

    fn locate(&self, tau: f64) -> usize {
        let k = self.segments.partition_point(|s| s.t1 < tau);
        k.min(self.segments.len() - 1)
    }

    /// `φ(τ)`; errors outside `[-θ, 0]`.
    pub fn eval(&self, tau: f64) -> Result<Vec<f64>> {
        if !(tau >= -self.theta && tau <= 0.0) {
            return Err(Error::OutOfDomain { tau, theta: self.theta });
        }
        Ok(self.at(tau))
    }

    /// `φ(0)`.
    pub fn head(&self) -> &[f64] {
        &self.segments.last().unwrap().y1
    }

    /// One-sided derivative at `τ` (from the segment containing `τ`).
    pub fn derivative(&self, tau: f64) -> Vec<f64> {
        let tau = tau.clamp(-self.theta, 0.0);
        let s = &self.segments[self.locate(tau)];
        (0..self.dim).map(|i| s.deriv_coord(tau, i)).collect()
    }

    /// Exact max over `[-θ, 0]` of the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        self.segments.iter().map(|s| segment_sup(s)).fold(0.0, f64::max)
    }

    /// Continuous Driver pseudotrajectory: `φ(τ + h)` on `[-θ, -h]`, and
    /// `φ(0) + (τ + h)·drift` on `[-h, 0]`.
    pub fn pseudotrajectory(&self, drift: &[f64], h: f64) -> Result<Self> {
        if !(h > 0.0 && h < self.theta) {
            return Err(Error::BadStep { h, theta: self.theta });
        }
        if drift.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: drift.len(),
            });
        }
        let mut segs = restrict_segments(&self.segments, -self.theta + h, 0.0, -h);
        let y0 = self.head().to_vec();
        let y1: Vec<f64> = y0.iter().zip(drift).map(|(y, d)| y + h * d).collect();
        segs.push(Segment {
            t0: -h,
            t1: 0.0,
            y0,
            y1,
            d0: drift.to_vec(),
            d1: drift.to_vec(),
        });
        Self::from_segments(self.theta, self.dim, segs)
    }

    /// `τ ↦ k·φ(τ)`.
    pub fn scale(&self, k: f64) -> Self {
        let mul = |v: &Vec<f64>| v.iter().map(|x| k * x).collect::<Vec<f64>>();
        Self {
            theta: self.theta,
            dim: self.dim,
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    t0: s.t0,
                    t1: s.t1,
                    y0: mul(&s.y0),
                    y1: mul(&s.y1),
                    d0: mul(&s.d0),
                    d1: mul(&s.d1),
                })
                .collect(),
        }
    }

    /// CSV with columns `tau, x_1..x_n, dx_1..dx_n`. A kink is written as two
    /// rows with the same `tau`: left derivative first, then right.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau");
        for i in 1..=self.dim {
            let _ = write!(out, ",x_{i}");
        }
        for i in 1..=self.dim {
            let _ = write!(out, ",dx_{i}");
        }
        out.push('\n');
        let row = |out: &mut String, t: f64, y: &[f64], d: &[f64]| {
            let _ = write!(out, "{t:.16e}");
            for v in y.iter().chain(d) {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        };
        let knots = self.knots();
        let last = knots.len() - 1;
        for (k, kn) in knots.iter().enumerate() {
            if k == 0 {
                row(&mut out, kn.tau, &kn.y, &kn.d_right);
            } else if k == last || kn.d_left == kn.d_right {
                row(&mut out, kn.tau, &kn.y, &kn.d_left);
            } else {
                row(&mut out, kn.tau, &kn.y, &kn.d_left);
                row(&mut out, kn.tau, &kn.y, &kn.d_right);
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::InvalidHistory("empty CSV".into()))?;
        let cols = header.split(',').count();
        if cols < 3 || (cols - 1) % 2 != 0 {
            return Err(Error::InvalidHistory(format!("bad CSV header: {header}")));
        }
        let dim = (cols - 1) / 2;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (ln, line) in lines.enumerate() {
            let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|x| x.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::InvalidHistory(format!("CSV row {}: {e}", ln + 2)))?;
            if vals.len() != cols {
                return Err(Error::InvalidHistory(format!("CSV row {} has {} columns", ln + 2, vals.len())));
            }
            rows.push(vals);
        }
        let mut knots: Vec<Knot> = Vec::new();
        for r in rows {
            let (t, y, d) = (r[0], r[1..=dim].to_vec(), r[dim + 1..].to_vec());
            match knots.last_mut() {
                Some(k) if k.tau == t => k.d_right = d,
                _ => knots.push(Knot {
                    tau: t,
                    y,
                    d_left: d.clone(),
                    d_right: d,
                }),
            }
        }
        let theta = knots.first().map(|k| -k.tau).unwrap_or(0.0);
        Self::from_knots(theta, &knots)
    }
}

impl HistoryAccess for HistoryFunction {
    fn theta(&self) -> f64 {
        self.theta
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn at_into(&self, tau: f64, out: &mut [f64]) {
        let tau = tau.clamp(-self.theta, 0.0);
        let s = &self.segments[self.locate(tau)];
        if tau == s.t1 {
            out.copy_from_slice(&s.y1);
        } else if tau == s.t0 {
            out.copy_from_slice(&s.y0);
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = s.eval_coord(tau, i);
            }
        }
    }
}

/// Pieces of `segs` covering `[a, b]`, translated by `shift`. Breakpoints
/// closer than `1e-12` (relative) to `a` or `b` are dropped so that no
/// degenerate piece is produced.
pub(crate) fn restrict_segments(segs: &[Segment], a: f64, b: f64, shift: f64) -> Vec<Segment> {
    let eps = 1e-12 * (b - a).abs().max(a.abs()).max(b.abs()).max(1e-300);
    let mut cuts = vec![a];
    for s in segs {
        if s.t1 > a + eps && s.t1 < b - eps {
            cuts.push(s.t1);
        }
    }
    cuts.push(b);
    let mut out = Vec::with_capacity(cuts.len() - 1);
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let k = segs.partition_point(|s| s.t1 < mid).min(segs.len() - 1);
        out.push(segs[k].restrict(w[0], w[1], shift));
    }
    out
}

fn segment_sup(s: &Segment) -> f64 {
    let n = s.y0.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut best = norm(&s.y0).max(norm(&s.y1));
    let w = s.width();
    if n == 1 {
        let [_, a1, a2, a3] = s.coefficients(0);
        for r in quadratic_roots(3.0 * a3, 2.0 * a2, a1) {
            if r > 0.0 && r < w {
                best = best.max(s.eval_coord(s.t0 + r, 0).abs());
            }
        }
        return best;
    }
    // d/ds |φ|² = 2 Σ φ_i φ_i'; locate sign changes on a fine scan, then bisect
    let g = |t: f64| (0..n).map(|i| s.eval_coord(t, i) * s.deriv_coord(t, i)).sum::<f64>();
    let val = |t: f64| (0..n).map(|i| s.eval_coord(t, i).powi(2)).sum::<f64>().sqrt();
    const SCAN: usize = 24;
    let mut prev_t = s.t0;
    let mut prev_g = g(prev_t);
    for k in 1..=SCAN {
        let t = s.t0 + w * k as f64 / SCAN as f64;
        let gt = g(t);
        best = best.max(val(t));
        if prev_g > 0.0 && gt <= 0.0 {
            let (mut lo, mut hi) = (prev_t, t);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            best = best.max(val(lo)).max(val(hi));
        }
        prev_t = t;
        prev_g = gt;
    }
    best
}

/// Real roots of `a x² + b x + c`.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return vec![];
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let q = if q == 0.0 { -0.5 * sq } else { q };
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp() -> HistoryFunction {
        HistoryFunction::scalar_from_knots(1.0, &[(-1.0, -1.0, 1.0), (0.0, 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn eval_basic() {
        let one = HistoryFunction::constant(1.0, &[1.0]).unwrap();
        assert_eq!(one.eval(-0.5).unwrap(), vec![1.0]);
        assert_eq!(ramp().eval(-0.25).unwrap(), vec![-0.25]);
        let two = HistoryFunction::scalar_from_knots(1.0, &[(-1.0, 0.0, 4.0), (-0.5, 2.0, 4.0), (0.0, 0.0, -4.0)]).unwrap();
        assert_eq!(two.eval(-0.5).unwrap(), vec![2.0]);
        assert!(matches!(ramp().eval(0.1), Err(Error::OutOfDomain { .. })));
        assert!(matches!(ramp().eval(-1.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(HistoryFunction::zero(1.0, 2).sup_norm(), 0.0);
        assert_eq!(ramp().sup_norm(), 1.0);
        // s(s+1): value 0 at both ends, slope -1 at -1 and 1 at 0
        let q = HistoryFunction::scalar_from_knots(1.0, &[(-1.0, 0.0, -1.0), (0.0, 0.0, 1.0)]).unwrap();
        assert!((q.sup_norm() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sup_norm_vector_circle() {
        // (cos, sin) has unit norm everywhere; a fit of it peaks near 1
        let h = HistoryFunction::sample(1.0, 2, 64, |t| vec![(3.0 * t).cos(), (3.0 * t).sin()]).unwrap();
        assert!((h.sup_norm() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn pseudotrajectory_examples() {
        let one = HistoryFunction::constant(1.0, &[1.0]).unwrap();
        let p = one.pseudotrajectory(&[0.5], 0.25).unwrap();
        assert_eq!(p.eval(0.0).unwrap()[0], 1.125);
        assert_eq!(p.eval(-0.25).unwrap()[0], 1.0);

        let p = ramp().pseudotrajectory(&[1.0], 0.5).unwrap();
        assert!((p.eval(-0.75).unwrap()[0] + 0.25).abs() < 1e-15);
        assert_eq!(p.eval(0.0).unwrap()[0], 0.5);

        let p = ramp().pseudotrajectory(&[0.0], 0.3).unwrap();
        for t in [-1.0, -0.8, -0.31, -0.3, -0.1, 0.0] {
            let want = (t + 0.3f64).min(0.0);
            assert!((p.eval(t).unwrap()[0] - want).abs() < 1e-15);
        }
        assert!(matches!(ramp().pseudotrajectory(&[0.0], 1.0), Err(Error::BadStep { .. })));
        assert!(matches!(ramp().pseudotrajectory(&[0.0], 0.0), Err(Error::BadStep { .. })));
    }

    #[test]
    fn csv_round_trip_with_kink() {
        let h = HistoryFunction::scalar_from_knots(1.0, &[(-1.0, 1.0, 0.0), (-0.5, 1.0, 0.0), (0.0, 0.0, -2.0)]).unwrap();
        let p = h.pseudotrajectory(&[3.0], 0.2).unwrap();
        let back = HistoryFunction::from_csv(&p.to_csv()).unwrap();
        assert_eq!(back, p);
    }

    fn arb_history() -> impl Strategy<Value = HistoryFunction> {
        (1usize..6, prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 8)).prop_map(|(segs, data)| {
            let knots: Vec<(f64, f64, f64)> = (0..=segs)
                .map(|k| {
                    let t = if k == segs { 0.0 } else { -1.0 + k as f64 / segs as f64 };
                    (t, data[k].0, data[k].1)
                })
                .collect();
            HistoryFunction::scalar_from_knots(1.0, &knots).unwrap()
        })
    }

    proptest! {
        #[test]
        fn pseudotrajectory_is_continuous_and_bounded(phi in arb_history(), drift in -10.0f64..10.0, h in 0.001f64..0.999) {
            let p = phi.pseudotrajectory(&[drift], h).unwrap();
            let rebuilt = HistoryFunction::from_segments(1.0, 1, p.segments().to_vec());
            prop_assert!(rebuilt.is_ok());
            prop_assert!(p.sup_norm() <= phi.sup_norm() + h * drift.abs() + 1e-12);
        }

        #[test]
        fn knots_reconstruct_eval(phi in arb_history(), taus in prop::collection::vec(-1.0f64..0.0, 10)) {
            let back = HistoryFunction::from_knots(1.0, &phi.knots()).unwrap();
            for t in taus {
                prop_assert!((back.eval(t).unwrap()[0] - phi.eval(t).unwrap()[0]).abs() <= 1e-12);
            }
        }

        #[test]
        fn sup_norm_dominates_samples(phi in arb_history()) {
            let s = phi.sup_norm();
            for k in 0..=1000 {
                let t = -1.0 + k as f64 / 1000.0;
                prop_assert!(phi.eval(t).unwrap()[0].abs() <= s + 1e-12);
            }
        }
    }
}
