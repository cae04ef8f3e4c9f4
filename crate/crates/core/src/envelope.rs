//! Monotone envelopes fitted to sampled data.
//!
//! All fits here are *majorants*: on the training data they never fall
//! below an observation.

use serde::{Deserialize, Serialize};

use crate::comparison::{CertOptions, ComparisonFn, FnClass};
use crate::Result;

/// Increasing piecewise-linear function through `(0, 0)` and a staircase of
/// running maxima, extended linearly past the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneEnvelope {
    pub knots: Vec<(f64, f64)>,
    pub tail_slope: f64,
    /// Added `strict_slope · x`, so the envelope is strictly increasing.
    pub strict_slope: f64,
}

impl MonotoneEnvelope {
    /// Smallest increasing staircase majorant of the points (evaluated at the
    /// data abscissae) joined linearly, with a proportional tail.
    ///
    /// Returns `None` when every `y` is zero.
    pub fn fit(points: &[(f64, f64)]) -> Option<Self> {
        let mut pts: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| (x.max(0.0), y.max(0.0)))
            .collect();
        if pts.iter().all(|p| p.1 == 0.0) {
            return None;
        }
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
        let mut knots: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        let mut run = 0.0f64;
        for (x, y) in pts {
            run = run.max(y);
            let last = knots.last_mut().unwrap();
            if x == last.0 {
                last.1 = last.1.max(run);
            } else if run > last.1 {
                knots.push((x, run));
            }
        }
        // a positive value at x = 0 cannot be represented by a function
        // vanishing at 0; move it to the smallest positive abscissa
        if knots[0].1 > 0.0 {
            let y0 = knots[0].1;
            knots[0].1 = 0.0;
            let x1 = points
                .iter()
                .map(|p| p.0)
                .filter(|x| *x > 0.0)
                .fold(f64::INFINITY, f64::min);
            let x1 = if x1.is_finite() { x1 * 0.5 } else { 1e-12 };
            knots.insert(1, (x1, y0));
            let mut i = 2;
            while i < knots.len() {
                if knots[i].0 <= x1 {
                    knots.remove(i);
                } else {
                    knots[i].1 = knots[i].1.max(y0);
                    i += 1;
                }
            }
        }
        let (lx, ly) = *knots.last().unwrap();
        let tail_slope = if lx > 0.0 { ly / lx } else { 1.0 };
        let strict_slope = 1e-9 * tail_slope.max(1e-300);
        Some(Self {
            knots,
            tail_slope,
            strict_slope,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let k = &self.knots;
        let base = if x >= k[k.len() - 1].0 {
            let (lx, ly) = k[k.len() - 1];
            ly + self.tail_slope * (x - lx)
        } else {
            let j = k.partition_point(|p| p.0 <= x);
            let (a, b) = (k[j - 1], k[j]);
            a.1 + (x - a.0) * (b.1 - a.1) / (b.0 - a.0)
        };
        base + self.strict_slope * x
    }

    /// The envelope as a certified `K∞` function.
    pub fn to_comparison(&self, label: impl Into<String>) -> Result<ComparisonFn> {
        let e = self.clone();
        let cap = (self.knots.last().unwrap().0 * 10.0).max(1.0);
        ComparisonFn::with_options(
            FnClass::Kinf,
            label,
            cap,
            CertOptions {
                samples: 4000,
                floor: Some(cap * 1e-9),
            },
            move |s| e.eval(s),
        )
    }
}

/// `K∞` majorant of the points, or the zero function when all `y` vanish.
pub fn fit_gain(points: &[(f64, f64)], label: &str) -> Result<(ComparisonFn, Option<MonotoneEnvelope>)> {
    match MonotoneEnvelope::fit(points) {
        None => Ok((ComparisonFn::zero(), None)),
        Some(e) => Ok((e.to_comparison(label)?, Some(e))),
    }
}

const BRS_AXIS_POINTS: usize = 48;
const BRS_ZERO_ARG: f64 = 1e-12;

/// Increasing continuous majorant `μ(C₁, C₂, τ)` of reachable values:
/// `V(x_t) ≤ μ(V(x₀), ‖u‖, t)` on the data.
///
/// Built from the staircase supremum on a coarse grid (data coordinates are
/// rounded *down* to the grid, which can only raise the staircase) followed
/// by the box average over `[C₁,2C₁]×[C₂,2C₂]×[τ,2τ]` and the additive term
/// `C₁C₂τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrsEnvelope {
    pub axes: [Vec<f64>; 3],
    /// Prefix maxima, indexed `[i][j][k]` flattened.
    pub table: Vec<f64>,
}

impl BrsEnvelope {
    /// `samples` are `(V(x₀), ‖u‖, t, V(x_t))`.
    pub fn fit(samples: &[(f64, f64, f64, f64)]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let axis = |f: &dyn Fn(&(f64, f64, f64, f64)) -> f64| -> Vec<f64> {
            let mut v: Vec<f64> = samples.iter().map(|s| f(s).max(0.0)).collect();
            v.push(0.0);
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
            if v.len() <= BRS_AXIS_POINTS {
                return v;
            }
            let mut g: Vec<f64> = (0..BRS_AXIS_POINTS)
                .map(|i| v[i * (v.len() - 1) / (BRS_AXIS_POINTS - 1)])
                .collect();
            g.dedup();
            g
        };
        let axes = [axis(&|s| s.0), axis(&|s| s.1), axis(&|s| s.2)];
        let (n0, n1, n2) = (axes[0].len(), axes[1].len(), axes[2].len());
        let mut table = vec![0.0f64; n0 * n1 * n2];
        let idx = |i: usize, j: usize, k: usize| (i * n1 + j) * n2 + k;
        let down = |g: &[f64], x: f64| g.partition_point(|&p| p <= x).saturating_sub(1);
        for s in samples {
            let (i, j, k) = (down(&axes[0], s.0), down(&axes[1], s.1), down(&axes[2], s.2));
            let c = &mut table[idx(i, j, k)];
            *c = c.max(s.3);
        }
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let mut m = table[idx(i, j, k)];
                    if i > 0 {
                        m = m.max(table[idx(i - 1, j, k)]);
                    }
                    if j > 0 {
                        m = m.max(table[idx(i, j - 1, k)]);
                    }
                    if k > 0 {
                        m = m.max(table[idx(i, j, k - 1)]);
                    }
                    table[idx(i, j, k)] = m;
                }
            }
        }
        Some(Self { axes, table })
    }

    /// Staircase supremum (right-continuous, increasing).
    pub fn staircase(&self, c1: f64, c2: f64, tau: f64) -> f64 {
        let down = |g: &[f64], x: f64| g.partition_point(|&p| p <= x).saturating_sub(1);
        let (n1, n2) = (self.axes[1].len(), self.axes[2].len());
        let (i, j, k) = (down(&self.axes[0], c1), down(&self.axes[1], c2), down(&self.axes[2], tau));
        self.table[(i * n1 + j) * n2 + k]
    }

    /// Cell overlaps of `[x, 2x]` with the grid: `(cell index, length)`.
    fn overlaps(g: &[f64], x: f64) -> Vec<(usize, f64)> {
        let (a, b) = (x, 2.0 * x);
        let mut out = Vec::new();
        let first = g.partition_point(|&p| p <= a).saturating_sub(1);
        for c in first..g.len() {
            let lo = g[c].max(a);
            let hi = if c + 1 < g.len() { g[c + 1].min(b) } else { b };
            if hi > lo {
                out.push((c, hi - lo));
            }
            if c + 1 < g.len() && g[c + 1] >= b {
                break;
            }
        }
        out
    }

    /// Smoothed envelope; zero arguments are replaced by a tiny positive value.
    pub fn eval(&self, c1: f64, c2: f64, tau: f64) -> f64 {
        let (c1, c2, tau) = (c1.max(BRS_ZERO_ARG), c2.max(BRS_ZERO_ARG), tau.max(BRS_ZERO_ARG));
        let (n1, n2) = (self.axes[1].len(), self.axes[2].len());
        let (o0, o1, o2) = (
            Self::overlaps(&self.axes[0], c1),
            Self::overlaps(&self.axes[1], c2),
            Self::overlaps(&self.axes[2], tau),
        );
        let mut acc = 0.0;
        for &(i, li) in &o0 {
            for &(j, lj) in &o1 {
                for &(k, lk) in &o2 {
                    acc += self.table[(i * n1 + j) * n2 + k] * li * lj * lk;
                }
            }
        }
        acc / (c1 * c2 * tau) + c1 * c2 * tau
    }
}
