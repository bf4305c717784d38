//! Synthetic ground-truth choice processes.
//!
//! Each product of a universe of `P` carries `x = (x₁, x₂, δ)` with `δ` the
//! one-hot indicator of its universe index, so `d_x = 2 + P`. Every event
//! offers `κ` distinct products drawn uniformly and the customer picks the
//! argmax of utility plus i.i.d. standard Gumbel noise. There are no
//! customer features.
//!
//! - Setting 1: `βᵀx`, `β ~ U[-1, 1]^{2+P}`.
//! - Setting 2: `β₁x₁ + β₂x₂ + β₃x₁² + β₄x₁x₂ + β₅x₂² + γᵀδ`, with
//!   `β, γ ~ U[-1, 1]` and `x₁, x₂ ~ U[0, 10]`.
//! - Setting 3: `b·βᵀx + (1 − b)·γᵀx` with `b ~ Bernoulli(0.3)` drawn per
//!   event and `β, γ ~ U[-100, 100]^{2+P}`.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::models::{average_softmax, gumbel_argmax, ChoiceEvent};
use crate::netcore::{parse_row, write_row};
use crate::training::loss;

/// Probability of the `β` class in Setting 3.
pub const SETTING3_CLASS_PROBABILITY: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Setting1 {
        beta: Vec<f64>,
    },
    Setting2 {
        beta: [f64; 5],
        gamma: Vec<f64>,
    },
    Setting3 {
        beta: Vec<f64>,
        gamma: Vec<f64>,
        p_class: f64,
    },
}

fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// Draws the parameters of setting 1, 2 or 3 over a universe of `universe` products.
pub fn draw_ground_truth<R: Rng + ?Sized>(setting: u8, universe: usize, rng: &mut R) -> Result<GroundTruth> {
    if universe == 0 {
        return Err(Error::InvalidArgument("universe must contain at least one product".into()));
    }
    let d = 2 + universe;
    match setting {
        1 => Ok(GroundTruth::Setting1 {
            beta: uniform_vec(rng, d, 1.0),
        }),
        2 => {
            let b = uniform_vec(rng, 5, 1.0);
            Ok(GroundTruth::Setting2 {
                beta: [b[0], b[1], b[2], b[3], b[4]],
                gamma: uniform_vec(rng, universe, 1.0),
            })
        }
        3 => Ok(GroundTruth::Setting3 {
            beta: uniform_vec(rng, d, 100.0),
            gamma: uniform_vec(rng, d, 100.0),
            p_class: SETTING3_CLASS_PROBABILITY,
        }),
        other => Err(Error::InvalidArgument(format!("unknown setting {other}; expected 1, 2 or 3"))),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GroundTruth {
    pub fn setting(&self) -> u8 {
        match self {
            GroundTruth::Setting1 { .. } => 1,
            GroundTruth::Setting2 { .. } => 2,
            GroundTruth::Setting3 { .. } => 3,
        }
    }

    /// Number of products `P` in the universe.
    pub fn universe(&self) -> usize {
        match self {
            GroundTruth::Setting1 { beta } | GroundTruth::Setting3 { beta, .. } => beta.len() - 2,
            GroundTruth::Setting2 { gamma, .. } => gamma.len(),
        }
    }

    pub fn d_x(&self) -> usize {
        2 + self.universe()
    }

    fn feature_bound(&self) -> f64 {
        match self {
            GroundTruth::Setting2 { .. } => 10.0,
            _ => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            GroundTruth::Setting3 { beta, gamma, p_class } => {
                if beta.len() != gamma.len() || beta.len() < 3 {
                    return Err(Error::dim("setting 3 gamma", beta.len(), gamma.len()));
                }
                if !(*p_class > 0.0 && *p_class < 1.0) {
                    return Err(Error::InvalidArgument(format!("class probability {p_class} outside (0, 1)")));
                }
            }
            GroundTruth::Setting1 { beta } if beta.len() < 3 => {
                return Err(Error::InvalidArgument("setting 1 needs at least one product".into()));
            }
            GroundTruth::Setting2 { gamma, .. } if gamma.is_empty() => {
                return Err(Error::InvalidArgument("setting 2 needs at least one product".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Deterministic utility of one product; Setting 3 takes the class `b`.
    fn utility(&self, x: &[f64], class_b: bool) -> f64 {
        match self {
            GroundTruth::Setting1 { beta } => dot(beta, x),
            GroundTruth::Setting2 { beta, gamma } => {
                let (x1, x2) = (x[0], x[1]);
                beta[0] * x1
                    + beta[1] * x2
                    + beta[2] * x1 * x1
                    + beta[3] * x1 * x2
                    + beta[4] * x2 * x2
                    + dot(gamma, &x[2..])
            }
            GroundTruth::Setting3 { beta, gamma, .. } => {
                if class_b {
                    dot(beta, x)
                } else {
                    dot(gamma, x)
                }
            }
        }
    }

    /// Closed-form choice probabilities of the generating process.
    pub fn probabilities(&self, event: &ChoiceEvent) -> Result<Vec<f64>> {
        if event.d_x() != self.d_x() {
            return Err(Error::dim("product features", self.d_x(), event.d_x()));
        }
        let utilities = |b: bool| -> Vec<f64> { event.products.iter().map(|x| self.utility(x, b)).collect() };
        match self {
            GroundTruth::Setting3 { p_class, .. } => {
                let pb = average_softmax(&[utilities(true)], &event.available)?;
                let pg = average_softmax(&[utilities(false)], &event.available)?;
                Ok(pb.iter().zip(&pg).map(|(a, c)| p_class * a + (1.0 - p_class) * c).collect())
            }
            _ => average_softmax(&[utilities(true)], &event.available),
        }
    }

    /// Draws one event. Also returns the latent class for Setting 3
    /// (`Some(true)` for the `β` class).
    pub fn generate_event<R: Rng + ?Sized>(&self, kappa: usize, rng: &mut R) -> Result<(ChoiceEvent, Option<bool>)> {
        let universe = self.universe();
        if kappa == 0 || kappa > universe {
            return Err(Error::InvalidArgument(format!(
                "assortment size {kappa} must be in 1..={universe}"
            )));
        }
        let hi = self.feature_bound();
        let offered = sample(rng, universe, kappa);
        let products: Vec<Vec<f64>> = offered
            .iter()
            .map(|idx| {
                let mut x = vec![0.0; 2 + universe];
                x[0] = rng.gen_range(0.0..=hi);
                x[1] = rng.gen_range(0.0..=hi);
                x[2 + idx] = 1.0;
                x
            })
            .collect();
        let class = match self {
            GroundTruth::Setting3 { p_class, .. } => Some(rng.gen_bool(*p_class)),
            _ => None,
        };
        let utilities: Vec<f64> = products
            .iter()
            .map(|x| self.utility(x, class.unwrap_or(true)))
            .collect();
        let available = vec![true; kappa];
        let chosen = gumbel_argmax(&utilities, &available, rng)?;
        Ok((ChoiceEvent::new(Vec::new(), products, available, chosen)?, class))
    }
}

/// Per-event generator: stream `t` of the ChaCha stream seeded by `seed`.
pub fn event_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// Generates `events` choice events with assortments of size `kappa`.
/// Event `t` uses its own derived generator, so output does not depend on
/// generation order.
pub fn generate(gt: &GroundTruth, events: usize, kappa: usize, seed: u64) -> Result<Dataset> {
    gt.validate()?;
    let out = (0..events)
        .map(|t| gt.generate_event(kappa, &mut event_rng(seed, t)).map(|(e, _)| e))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(gt.d_x(), 0, out)
}

/// Mean tolerance-renormalised log-loss of the generator's own probabilities.
pub fn ground_truth_loss(gt: &GroundTruth, data: &Dataset, tolerance: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut total = 0.0;
    for e in data.events() {
        let p = gt.probabilities(e)?;
        total += loss(&p, e.chosen, &e.available, tolerance)?;
    }
    Ok(total / data.len() as f64)
}

/// Loss of the uniform predictor over `kappa` alternatives: `ln κ`.
pub fn random_guess_loss(kappa: usize) -> Result<f64> {
    if kappa < 1 {
        return Err(Error::InvalidArgument("kappa must be at least 1".into()));
    }
    Ok((kappa as f64).ln())
}

/// Everything needed to regenerate a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub ground_truth: GroundTruth,
    pub events: usize,
    pub kappa: usize,
    pub seed: u64,
}

impl SynthRecord {
    pub fn to_text(&self) -> String {
        let gt = &self.ground_truth;
        let mut out = String::new();
        writeln!(out, "ground_truth").unwrap();
        writeln!(out, "setting {}", gt.setting()).unwrap();
        writeln!(out, "universe {}", gt.universe()).unwrap();
        writeln!(out, "events {}", self.events).unwrap();
        writeln!(out, "kappa {}", self.kappa).unwrap();
        writeln!(out, "seed {}", self.seed).unwrap();
        match gt {
            GroundTruth::Setting1 { beta } => {
                out.push_str("beta ");
                write_row(&mut out, beta);
            }
            GroundTruth::Setting2 { beta, gamma } => {
                out.push_str("beta ");
                write_row(&mut out, beta);
                out.push_str("gamma ");
                write_row(&mut out, gamma);
            }
            GroundTruth::Setting3 { beta, gamma, p_class } => {
                out.push_str("beta ");
                write_row(&mut out, beta);
                out.push_str("gamma ");
                write_row(&mut out, gamma);
                writeln!(out, "p_class {p_class:?}").unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |m: String| Error::Format {
            what: "ground-truth sidecar",
            message: m,
        };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("ground_truth") {
            return Err(err("missing `ground_truth` header".into()));
        }
        let mut fields = std::collections::HashMap::new();
        for line in lines {
            if let Some((k, v)) = line.split_once(' ') {
                fields.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| err(format!("missing `{k}`")));
        let int = |k: &str| -> Result<u64> { get(k)?.trim().parse().map_err(|_| err(format!("bad `{k}`"))) };
        let setting = int("setting")?;
        let universe = int("universe")? as usize;
        let d = universe + 2;
        let ground_truth = match setting {
            1 => GroundTruth::Setting1 {
                beta: parse_row(get("beta")?, d)?,
            },
            2 => {
                let b = parse_row(get("beta")?, 5)?;
                GroundTruth::Setting2 {
                    beta: [b[0], b[1], b[2], b[3], b[4]],
                    gamma: parse_row(get("gamma")?, universe)?,
                }
            }
            3 => GroundTruth::Setting3 {
                beta: parse_row(get("beta")?, d)?,
                gamma: parse_row(get("gamma")?, d)?,
                p_class: get("p_class")?
                    .trim()
                    .parse()
                    .map_err(|_| err("bad `p_class`".into()))?,
            },
            other => return Err(err(format!("unknown setting {other}"))),
        };
        ground_truth.validate()?;
        Ok(SynthRecord {
            ground_truth,
            events: int("events")? as usize,
            kappa: int("kappa")? as usize,
            seed: int("seed")?,
        })
    }
}
