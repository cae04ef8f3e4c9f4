//! Seeded sample spaces of histories and constant inputs.
//!
//! Sample `i` is drawn from a ChaCha8 stream keyed by `(seed, i)`, so the
//! result does not depend on how many samples are drawn or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::history::{HistoryFunction, Knot, DEFAULT_SEGMENTS};

/// Number of spline knots for the random-cubic-spline generator.
pub const SPLINE_KNOTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryGenerator {
    RandomCubicSpline,
    RandomFourier,
    Constants,
    Spikes,
}

impl std::str::FromStr for HistoryGenerator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random-cubic-spline" => Ok(Self::RandomCubicSpline),
            "random-fourier" => Ok(Self::RandomFourier),
            "constants" => Ok(Self::Constants),
            "spikes" => Ok(Self::Spikes),
            _ => Err(format!("unknown history generator '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpace {
    pub seed: u64,
    pub history_amplitude: f64,
    pub generator: HistoryGenerator,
    pub input_amplitude: f64,
    pub sample_count: usize,
}

impl Default for SampleSpace {
    fn default() -> Self {
        Self {
            seed: 0,
            history_amplitude: 1.0,
            generator: HistoryGenerator::RandomCubicSpline,
            input_amplitude: 1.0,
            sample_count: 100,
        }
    }
}

/// One draw: a history and a constant input value.
#[derive(Debug, Clone)]
pub struct Sample {
    pub index: usize,
    pub phi: HistoryFunction,
    pub u: Vec<f64>,
}

impl SampleSpace {
    pub fn new(seed: u64, generator: HistoryGenerator, history_amplitude: f64, input_amplitude: f64, sample_count: usize) -> Self {
        Self {
            seed,
            history_amplitude,
            generator,
            input_amplitude,
            sample_count,
        }
    }

    /// Random stream for sample `index`.
    pub fn rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    pub fn sample(&self, index: usize, theta: f64, n: usize, m: usize) -> Sample {
        let mut rng = self.rng(index);
        let phi = self.draw_history(&mut rng, theta, n);
        let u = (0..m)
            .map(|_| self.input_amplitude * rng.gen_range(-1.0..=1.0))
            .collect();
        Sample { index, phi, u }
    }

    /// All `sample_count` draws, generated in parallel, ordered by index.
    pub fn samples(&self, theta: f64, n: usize, m: usize) -> Vec<Sample> {
        (0..self.sample_count)
            .into_par_iter()
            .map(|i| self.sample(i, theta, n, m))
            .collect()
    }

    fn draw_history(&self, rng: &mut ChaCha8Rng, theta: f64, n: usize) -> HistoryFunction {
        let r = self.history_amplitude;
        let level: f64 = rng.gen_range(0.0..=1.0);
        match self.generator {
            HistoryGenerator::RandomCubicSpline => {
                let values: Vec<Vec<f64>> = (0..SPLINE_KNOTS)
                    .map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                    .collect();
                rescale(catmull_rom(theta, &values), level * r)
            }
            HistoryGenerator::RandomFourier => {
                const MODES: usize = 5;
                let coef: Vec<Vec<(f64, f64)>> = (0..n)
                    .map(|_| {
                        (0..MODES)
                            .map(|k| {
                                let damp = 1.0 / (1.0 + k as f64);
                                (damp * rng.gen_range(-1.0..=1.0), damp * rng.gen_range(-1.0..=1.0))
                            })
                            .collect()
                    })
                    .collect();
                let w = std::f64::consts::PI / theta;
                let c1 = coef.clone();
                let f = move |t: f64| -> Vec<f64> {
                    c1.iter()
                        .map(|cs| {
                            cs.iter()
                                .enumerate()
                                .map(|(k, (a, b))| a * (k as f64 * w * t).cos() + b * (k as f64 * w * t).sin())
                                .sum()
                        })
                        .collect()
                };
                let df = move |t: f64| -> Vec<f64> {
                    coef.iter()
                        .map(|cs| {
                            cs.iter()
                                .enumerate()
                                .map(|(k, (a, b))| {
                                    let kw = k as f64 * w;
                                    -a * kw * (kw * t).sin() + b * kw * (kw * t).cos()
                                })
                                .sum()
                        })
                        .collect()
                };
                let h = HistoryFunction::sample_with_derivative(theta, n, DEFAULT_SEGMENTS, f, df)
                    .expect("fourier history is valid");
                rescale(h, level * r)
            }
            HistoryGenerator::Constants => {
                let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                let v: Vec<f64> = dir.iter().map(|x| level * r * x / norm).collect();
                HistoryFunction::constant(theta, &v).expect("constant history is valid")
            }
            HistoryGenerator::Spikes => {
                let width = theta * rng.gen_range(0.01..=0.1);
                let centre = rng.gen_range((-theta + width)..=(-width));
                let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                let peak: Vec<f64> = dir.iter().map(|x| level * r * x / norm).collect();
                spike(theta, centre, width, &peak)
            }
        }
    }
}

fn rescale(h: HistoryFunction, target: f64) -> HistoryFunction {
    let s = h.sup_norm();
    if s > 0.0 {
        h.scale(target / s)
    } else {
        h
    }
}

/// C¹ cubic through `values` at equally spaced knots on `[-θ, 0]`, with
/// Catmull-Rom tangents (one-sided at the ends).
pub fn catmull_rom(theta: f64, values: &[Vec<f64>]) -> HistoryFunction {
    let k = values.len();
    assert!(k >= 2, "need at least two spline values");
    let n = values[0].len();
    let dt = theta / (k - 1) as f64;
    let knots: Vec<Knot> = (0..k)
        .map(|j| {
            let (a, b) = (j.saturating_sub(1), (j + 1).min(k - 1));
            let d: Vec<f64> = (0..n)
                .map(|i| (values[b][i] - values[a][i]) / ((b - a) as f64 * dt))
                .collect();
            Knot {
                tau: if j == k - 1 { 0.0 } else { -theta + j as f64 * dt },
                y: values[j].clone(),
                d_left: d.clone(),
                d_right: d,
            }
        })
        .collect();
    HistoryFunction::from_knots(theta, &knots).expect("spline history is valid")
}

/// A smooth bump of the given peak on `[centre - width, centre + width]`,
/// zero elsewhere. `centre ± width` must lie inside `(-θ, 0)`.
pub fn spike(theta: f64, centre: f64, width: f64, peak: &[f64]) -> HistoryFunction {
    let z = vec![0.0; peak.len()];
    let kn = |tau: f64, y: &[f64]| Knot {
        tau,
        y: y.to_vec(),
        d_left: z.clone(),
        d_right: z.clone(),
    };
    HistoryFunction::from_knots(
        theta,
        &[
            kn(-theta, &z),
            kn(centre - width, &z),
            kn(centre, peak),
            kn(centre + width, &z),
            kn(0.0, &z),
        ],
    )
    .expect("spike history is valid")
}
