//! Weighted distance between summary vectors and pilot-based weight
//! calibration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::Prior;
use crate::error::{Error, Result};
use crate::model::ParamVector;
use crate::rng::{stream, Domain};
use crate::stats;
use crate::summaries::{Slope, SummaryVector};
use crate::synthetic::SyntheticSummarizer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w5: Option<f64>,
}

impl Weights {
    pub fn unit(with_slope: bool) -> Self {
        Weights {
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            w4: 1.0,
            w5: with_slope.then_some(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w1, self.w2, self.w3, self.w4, self.w5.unwrap_or(1.0)];
        if all.iter().all(|w| w.is_finite() && *w > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "weights must be finite and positive: {self:?}"
            )))
        }
    }
}

/// Unweighted distance terms between two summary vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub density: f64,
    pub spectrum: f64,
    pub quad_var: f64,
    pub jumps: f64,
    /// `None` when either side lacks a slope value.
    pub slope: Option<f64>,
}

impl Components {
    pub fn weighted(&self, w: &Weights) -> Result<f64> {
        let mut d = w.w1 * self.density + w.w2 * self.spectrum + w.w3 * self.quad_var + w.w4 * self.jumps;
        if let Some(s) = self.slope {
            let w5 =
                w.w5.ok_or_else(|| Error::InvalidArgument("slope term present but no slope weight".into()))?;
            d += w5 * s;
        }
        Ok(d)
    }
}

/// `Σ |a_i - b_i|` over two functions tabulated on the same grid.
pub fn d_fun(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "grid lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300))
}

pub fn components(obs: &SummaryVector, syn: &SummaryVector) -> Result<Components> {
    if !same_grid(&obs.density.grid, &syn.density.grid) {
        return Err(Error::InvalidArgument(
            "density grids differ; evaluate on the observed grid".into(),
        ));
    }
    if !same_grid(&obs.spectrum.frequencies, &syn.spectrum.frequencies) {
        return Err(Error::InvalidArgument(
            "spectral frequencies differ; use equal horizons and steps".into(),
        ));
    }
    let slope = match (obs.slope, syn.slope) {
        (Slope::NotObserved, Slope::NotObserved) => None,
        (Slope::NotObserved, _) | (_, Slope::NotObserved) => {
            return Err(Error::InvalidArgument("slope summary present on only one side".into()));
        }
        (Slope::Value(a), Slope::Value(b)) => Some((a - b).abs()),
        _ => None,
    };
    Ok(Components {
        density: d_fun(&obs.density.values, &syn.density.values)?,
        spectrum: d_fun(&obs.spectrum.values, &syn.spectrum.values)?,
        quad_var: (obs.quad_var - syn.quad_var).abs(),
        jumps: (obs.n_jumps as f64 - syn.n_jumps as f64).abs(),
        slope,
    })
}

pub fn composite_distance(obs: &SummaryVector, syn: &SummaryVector, w: &Weights) -> Result<f64> {
    components(obs, syn)?.weighted(w)
}

/// How pilot medians become weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// `w_k = m_1 / m_k`: every weighted term has median `m_1`.
    #[default]
    MedianRatio,
    /// `w_1 = 1`, `w_k = 1 / m_k`.
    Reciprocal,
}

pub const DEFAULT_N_PILOT: usize = 100;

/// Per-term pilot medians; the slope median is `None` when no pilot had one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medians {
    pub density: f64,
    pub spectrum: f64,
    pub quad_var: f64,
    pub jumps: f64,
    pub slope: Option<f64>,
}

pub fn pilot_medians(pilot: &[Components]) -> Medians {
    let col = |f: fn(&Components) -> f64| stats::median(&mut pilot.iter().map(f).collect::<Vec<_>>());
    let mut slopes: Vec<f64> = pilot.iter().filter_map(|c| c.slope).collect();
    Medians {
        density: col(|c| c.density),
        spectrum: col(|c| c.spectrum),
        quad_var: col(|c| c.quad_var),
        jumps: col(|c| c.jumps),
        slope: (!slopes.is_empty()).then(|| stats::median(&mut slopes)),
    }
}

pub fn weights_from_medians(m: &Medians, rule: WeightRule, with_slope: bool) -> Weights {
    let num = match rule {
        WeightRule::MedianRatio => m.density,
        WeightRule::Reciprocal => 1.0,
    };
    let ratio = |mk: f64| if mk > 0.0 && num > 0.0 { num / mk } else { 1.0 };
    Weights {
        w1: 1.0,
        w2: ratio(m.spectrum),
        w3: ratio(m.quad_var),
        w4: ratio(m.jumps),
        w5: with_slope.then(|| m.slope.map_or(1.0, ratio)),
    }
}

/// Pilot cache and the weights derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub weights: Weights,
    pub medians: Medians,
    pub rule: WeightRule,
    pub pilot_params: Vec<ParamVector>,
    pub pilot_components: Vec<Components>,
    /// Number of `simulate` calls spent on pilots (kept apart from the ABC budget).
    pub simulations: u64,
}

const PILOT_RETRIES: u64 = 100;

/// Draws `n_pilot` prior parameters, simulates and compares each against
/// `obs`, and turns the per-term medians into weights.
pub fn calibrate_weights(
    obs: &SummaryVector,
    summarizer: &SyntheticSummarizer,
    prior: &Prior,
    n_pilot: usize,
    seed: u64,
    rule: WeightRule,
) -> Result<Calibration> {
    if n_pilot < 20 {
        return Err(Error::InvalidArgument(format!(
            "n_pilot must be at least 20, got {n_pilot}"
        )));
    }
    let runs: Vec<(ParamVector, Components, u64)> = (0..n_pilot as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, Domain::Pilot, &[i]);
            let mut sims = 0;
            loop {
                let theta = prior.sample(&summarizer.model, &mut rng)?;
                sims += 1;
                match summarizer.summary(&theta, &mut rng) {
                    Ok(s) => return Ok((theta, components(obs, &s)?, sims)),
                    Err(Error::DegenerateData(_)) if sims < PILOT_RETRIES => continue,
                    Err(e) => return Err(e),
                }
            }
        })
        .collect::<Result<_>>()?;
    let simulations = runs.iter().map(|r| r.2).sum();
    let (pilot_params, pilot_components): (Vec<_>, Vec<_>) = runs.into_iter().map(|(p, c, _)| (p, c)).unzip();
    let medians = pilot_medians(&pilot_components);
    let weights = weights_from_medians(&medians, rule, obs.slope.is_observed());
    Ok(Calibration {
        weights,
        medians,
        rule,
        pilot_params,
        pilot_components,
        simulations,
    })
}
