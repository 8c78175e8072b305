//! Rejection and sequential Monte Carlo ABC.
//!
//! Proposal attempts are keyed by `(generation, slot, attempt)`. Each
//! generation runs in rounds: every unfilled slot tries a fixed number of
//! attempts and keeps its first acceptance. Round sizes depend only on
//! counts, so the populations do not depend on the number of worker threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{composite_distance, Weights};
use crate::error::{Error, Result};
use crate::model::{ModelId, ModelSpec, ParamVector};
use crate::rng::{stream, Domain, StreamRng};
use crate::stats;
use crate::summaries::SummaryVector;
use crate::synthetic::SyntheticSummarizer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

/// Independent uniform priors on `(σ, b, λ[, η])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub sigma: Bounds,
    pub b: Bounds,
    pub lambda: Bounds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Bounds>,
}

const PRIOR_DRAW_LIMIT: usize = 100_000;

impl Prior {
    pub fn default_for(model: ModelId) -> Self {
        let b = match model {
            ModelId::Tp2Wdsho => Bounds {
                lower: 2.0,
                upper: 100.0,
            },
            ModelId::Tp4SwitchedSho => Bounds { lower: 0.0, upper: 1.0 },
            _ => Bounds {
                lower: 0.0,
                upper: 10.0,
            },
        };
        Prior {
            sigma: Bounds {
                lower: 0.0,
                upper: 10.0,
            },
            b,
            lambda: Bounds { lower: 0.0, upper: 1.0 },
            eta: None,
        }
    }

    /// Prior including `η`, using the per-problem default range when one exists.
    pub fn with_eta_for(model: ModelId) -> Result<Self> {
        let eta = match model {
            ModelId::Tp1Ou => Bounds {
                lower: 0.0,
                upper: 10.0,
            },
            ModelId::Tp4SwitchedSho => Bounds {
                lower: 2.0,
                upper: 100.0,
            },
            other => {
                return Err(Error::InvalidArgument(format!("no default eta prior for {other:?}")));
            }
        };
        Ok(Prior {
            eta: Some(eta),
            ..Prior::default_for(model)
        })
    }

    pub fn bounds(&self) -> Vec<Bounds> {
        let mut v = vec![self.sigma, self.b, self.lambda];
        v.extend(self.eta);
        v
    }

    pub fn dim(&self) -> usize {
        3 + self.eta.is_some() as usize
    }

    pub fn validate(&self) -> Result<()> {
        for b in self.bounds() {
            if !(b.lower.is_finite() && b.upper.is_finite() && b.lower < b.upper) {
                return Err(Error::InvalidArgument(format!(
                    "prior bounds need lower < upper, got {b:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn in_box(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && self
                .bounds()
                .iter()
                .zip(theta)
                .all(|(b, &v)| v >= b.lower && v <= b.upper)
    }

    /// Unnormalized density: the box indicator.
    pub fn density(&self, theta: &[f64]) -> f64 {
        if self.in_box(theta) {
            self.bounds().iter().map(|b| 1.0 / (b.upper - b.lower)).product()
        } else {
            0.0
        }
    }

    /// `theta` as a parameter vector if it lies in the box and `model` accepts it.
    pub fn admit(&self, model: &ModelSpec, theta: &[f64]) -> Option<ParamVector> {
        if !self.in_box(theta) {
            return None;
        }
        let p = ParamVector::from_slice(theta).ok()?;
        p.validate_for(model).ok().map(|_| p)
    }

    /// Uniform draw restricted to parameters `model` accepts.
    pub fn sample<R: Rng + ?Sized>(&self, model: &ModelSpec, rng: &mut R) -> Result<ParamVector> {
        let bounds = self.bounds();
        for _ in 0..PRIOR_DRAW_LIMIT {
            let theta: Vec<f64> = bounds
                .iter()
                .map(|b| b.lower + (b.upper - b.lower) * rng.random::<f64>())
                .collect();
            if let Some(p) = self.admit(model, &theta) {
                return Ok(p);
            }
        }
        Err(Error::InvalidParams(format!(
            "prior {self:?} has (almost) no support admissible for {:?}",
            model.model
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub theta: ParamVector,
    pub weight: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub generation: usize,
    pub particles: Vec<Particle>,
    /// Acceptance threshold; infinite for the prior generation.
    pub threshold: f64,
    /// Synthetic datasets simulated up to and including this generation.
    pub budget_used: u64,
    pub acceptance_rate: f64,
}

impl Population {
    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.particles.iter().map(|p| p.theta.to_vec()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    pub fn effective_sample_size(&self) -> f64 {
        let s2: f64 = self.particles.iter().map(|p| p.weight * p.weight).sum();
        1.0 / s2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub generation: usize,
    pub budget_used: u64,
    pub threshold: f64,
    /// Per parameter: weighted 5th, 50th and 95th percentiles.
    pub percentiles: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CITrace {
    pub names: Vec<String>,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    /// Stop once this many datasets have been simulated.
    pub max_budget: u64,
    /// Stop once a generation's acceptance rate falls below this.
    pub min_acceptance_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_generations: Option<usize>,
}

pub const DEFAULT_N_POP: usize = 500;
pub const DEFAULT_QUANTILE: f64 = 0.5;
pub const DEFAULT_MIN_ACCEPTANCE_RATE: f64 = 0.015;

/// Covariance used by the Gaussian perturbation kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Twice the weighted covariance of the whole previous population.
    #[default]
    Global,
    /// Optimal local covariance matrix kernel: for centre `θ_j`,
    /// `Σ_k ω̃_k (θ_k - θ_j)(θ_k - θ_j)ᵀ` over the previous particles already
    /// below the new threshold, with their weights renormalized.
    Olcm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub n_pop: usize,
    pub quantile: f64,
    pub stop: StoppingRule,
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    AcceptanceRate,
    MaxGenerations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcOutcome {
    pub population: Population,
    pub trace: CITrace,
    pub history: Vec<Population>,
    pub stop_reason: StopReason,
    /// All simulations, including those of an abandoned final generation.
    pub total_simulations: u64,
}

/// Anything that can score a candidate parameter by simulating from it.
pub trait Discrepancy: Sync {
    /// Distance of one synthetic dataset from the observation. Must make
    /// exactly one simulation.
    fn distance(&self, theta: &ParamVector, rng: &mut StreamRng) -> Result<f64>;
}

/// Composite summary distance to a fixed observation.
pub struct SummaryDiscrepancy<'a> {
    pub observed: &'a SummaryVector,
    pub summarizer: &'a SyntheticSummarizer,
    pub weights: Weights,
}

impl Discrepancy for SummaryDiscrepancy<'_> {
    fn distance(&self, theta: &ParamVector, rng: &mut StreamRng) -> Result<f64> {
        match self.summarizer.summary(theta, rng) {
            Ok(s) => composite_distance(self.observed, &s, &self.weights),
            Err(Error::DegenerateData(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }
}

const ROUND_ATTEMPTS: u64 = 8;

enum Fill {
    Complete {
        particles: Vec<(ParamVector, f64)>,
        attempts: u64,
    },
    Capped {
        accepted: usize,
        attempts: u64,
    },
}

/// Runs attempts for `n` slots until each has one candidate with distance
/// below `delta`, or until `cap` attempts have been spent.
fn fill_generation<P>(
    n: usize,
    generation: u64,
    seed: u64,
    delta: f64,
    cap: Option<u64>,
    propose: &P,
    target: &dyn Discrepancy,
) -> Result<Fill>
where
    P: Fn(&mut StreamRng) -> Result<ParamVector> + Sync,
{
    let mut found: Vec<Option<(ParamVector, f64)>> = vec![None; n];
    let mut next_attempt = vec![0u64; n];
    let mut attempts = 0u64;
    loop {
        let open: Vec<usize> = (0..n).filter(|&i| found[i].is_none()).collect();
        if open.is_empty() {
            let particles = found.into_iter().map(Option::unwrap).collect();
            return Ok(Fill::Complete { particles, attempts });
        }
        let chunk = match cap {
            Some(c) if attempts >= c => {
                return Ok(Fill::Capped {
                    accepted: n - open.len(),
                    attempts,
                })
            }
            Some(c) => ((c - attempts) / open.len() as u64).clamp(1, ROUND_ATTEMPTS),
            None => ROUND_ATTEMPTS,
        };
        let results: Vec<(usize, Option<(ParamVector, f64)>, u64)> = open
            .par_iter()
            .map(|&slot| {
                let start = next_attempt[slot];
                for a in start..start + chunk {
                    let mut rng = stream(seed, Domain::Proposal, &[generation, slot as u64, a]);
                    let theta = propose(&mut rng)?;
                    let d = target.distance(&theta, &mut rng)?;
                    if d < delta {
                        return Ok((slot, Some((theta, d)), a - start + 1));
                    }
                }
                Ok((slot, None, chunk))
            })
            .collect::<Result<_>>()?;
        for (slot, hit, used) in results {
            attempts += used;
            next_attempt[slot] += used;
            found[slot] = hit;
        }
    }
}

fn check_threshold(delta: f64) -> Result<()> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold must be non-negative or infinite, got {delta}"
        )));
    }
    Ok(())
}

/// Prior-proposal rejection sampler over a generic discrepancy.
pub fn rejection_abc_with(
    target: &dyn Discrepancy,
    model: &ModelSpec,
    prior: &Prior,
    delta: f64,
    n_accept: usize,
    budget_cap: Option<u64>,
    seed: u64,
) -> Result<Population> {
    check_threshold(delta)?;
    prior.validate()?;
    if n_accept == 0 {
        return Err(Error::InvalidArgument("n_accept must be at least 1".into()));
    }
    let propose = |rng: &mut StreamRng| prior.sample(model, rng);
    match fill_generation(n_accept, 0, seed, delta, budget_cap, &propose, target)? {
        Fill::Capped { accepted, attempts } => Err(Error::BudgetExhausted {
            budget: attempts,
            accepted,
        }),
        Fill::Complete { particles, attempts } => {
            let w = 1.0 / n_accept as f64;
            Ok(Population {
                generation: 0,
                particles: particles
                    .into_iter()
                    .map(|(theta, distance)| Particle {
                        theta,
                        weight: w,
                        distance,
                    })
                    .collect(),
                threshold: delta,
                budget_used: attempts,
                acceptance_rate: n_accept as f64 / attempts as f64,
            })
        }
    }
}

/// Rejection ABC against an observed summary vector.
#[allow(clippy::too_many_arguments)]
pub fn rejection_abc(
    observed: &SummaryVector,
    summarizer: &SyntheticSummarizer,
    prior: &Prior,
    weights: &Weights,
    delta: f64,
    n_accept: usize,
    budget_cap: Option<u64>,
    seed: u64,
) -> Result<Population> {
    let target = SummaryDiscrepancy {
        observed,
        summarizer,
        weights: *weights,
    };
    rejection_abc_with(&target, &summarizer.model, prior, delta, n_accept, budget_cap, seed)
}

/// Gaussian perturbation kernel `N(0, Σ)` given by its lower Cholesky factor.
#[derive(Debug, Clone)]
struct Kernel {
    chol: Vec<Vec<f64>>,
}

impl Kernel {
    fn from_population(thetas: &[Vec<f64>], weights: &[f64]) -> Self {
        let cov = stats::weighted_covariance(thetas, weights);
        let doubled: Vec<Vec<f64>> = cov.iter().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect();
        if let Some(chol) = stats::cholesky(&doubled) {
            return Kernel { chol };
        }
        let d = cov.len();
        let mut diag = vec![vec![0.0; d]; d];
        for k in 0..d {
            diag[k][k] = (cov[k][k].max(0.0) + 1e-10).sqrt();
        }
        Kernel { chol: diag }
    }

    fn perturb<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R) -> Vec<f64> {
        let d = center.len();
        let xi: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| center[i] + (0..=i).map(|k| self.chol[i][k] * xi[k]).sum::<f64>())
            .collect()
    }

    /// Local kernel centred at `center`; `None` when its covariance is singular.
    fn local(center: &[f64], sub_mean: &[f64], sub_cov: &[Vec<f64>]) -> Option<Self> {
        let d = center.len();
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                (0..d)
                    .map(|b| sub_cov[a][b] + (sub_mean[a] - center[a]) * (sub_mean[b] - center[b]))
                    .collect()
            })
            .collect();
        stats::cholesky(&cov).map(|chol| Kernel { chol })
    }

    /// Log density up to the `(2π)^{-d/2}` constant.
    fn log_density(&self, x: &[f64], c: &[f64]) -> f64 {
        let d = x.len();
        let mut y = vec![0.0; d];
        let mut log_det = 0.0;
        for i in 0..d {
            let s: f64 = (0..i).map(|k| self.chol[i][k] * y[k]).sum();
            y[i] = (x[i] - c[i] - s) / self.chol[i][i];
            log_det += self.chol[i][i].ln();
        }
        -0.5 * y.iter().map(|v| v * v).sum::<f64>() - log_det
    }
}

/// One kernel per previous particle, shared when global.
enum Kernels {
    Shared(Kernel),
    PerParticle(Vec<Kernel>),
}

impl Kernels {
    fn build(kind: KernelKind, thetas: &[Vec<f64>], weights: &[f64], distances: &[f64], delta: f64) -> Self {
        let global = Kernel::from_population(thetas, weights);
        if kind == KernelKind::Global {
            return Kernels::Shared(global);
        }
        let below: Vec<usize> = (0..thetas.len()).filter(|&k| distances[k] < delta).collect();
        if below.len() < 2 {
            return Kernels::Shared(global);
        }
        let sub: Vec<Vec<f64>> = below.iter().map(|&k| thetas[k].clone()).collect();
        let sub_w: Vec<f64> = below.iter().map(|&k| weights[k]).collect();
        let mean = stats::weighted_mean(&sub, &sub_w);
        let cov = stats::weighted_covariance(&sub, &sub_w);
        Kernels::PerParticle(
            thetas
                .iter()
                .map(|t| Kernel::local(t, &mean, &cov).unwrap_or_else(|| global.clone()))
                .collect(),
        )
    }

    fn get(&self, j: usize) -> &Kernel {
        match self {
            Kernels::Shared(k) => k,
            Kernels::PerParticle(ks) => &ks[j],
        }
    }
}

const SUPPORT_REDRAW_LIMIT: usize = 1_000_000;

fn trace_checkpoint(pop: &Population) -> Checkpoint {
    let thetas = pop.thetas();
    let weights = pop.weights();
    let d = thetas[0].len();
    let percentiles = (0..d)
        .map(|k| {
            let col: Vec<f64> = thetas.iter().map(|t| t[k]).collect();
            [0.05, 0.5, 0.95].map(|p| stats::weighted_percentile(&col, &weights, p))
        })
        .collect();
    Checkpoint {
        generation: pop.generation,
        budget_used: pop.budget_used,
        threshold: pop.threshold,
        percentiles,
    }
}

fn validate_config(config: &SmcConfig) -> Result<()> {
    if config.n_pop < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_pop must be at least 2, got {}",
            config.n_pop
        )));
    }
    if !(config.quantile > 0.0 && config.quantile < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile must lie in (0, 1), got {}",
            config.quantile
        )));
    }
    let r = config.stop.min_acceptance_rate;
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "min_acceptance_rate must lie in (0, 1], got {r}"
        )));
    }
    Ok(())
}

/// SMC-ABC over a generic discrepancy.
pub fn smc_abc_with(
    target: &dyn Discrepancy,
    model: &ModelSpec,
    prior: &Prior,
    config: &SmcConfig,
) -> Result<SmcOutcome> {
    validate_config(config)?;
    prior.validate()?;
    let n = config.n_pop;
    if config.stop.max_budget < n as u64 {
        return Err(Error::BudgetExhausted {
            budget: config.stop.max_budget,
            accepted: 0,
        });
    }
    let names: Vec<String> = ParamVector::from_slice(&vec![1.0; prior.dim()])?
        .names()
        .iter()
        .map(|s| s.to_string())
        .collect();

    let mut pop = rejection_abc_with(target, model, prior, f64::INFINITY, n, None, config.seed)?;
    let mut total = pop.budget_used;
    let mut trace = CITrace {
        names,
        checkpoints: vec![trace_checkpoint(&pop)],
    };
    let mut history = vec![pop.clone()];
    let attempt_cap = (n as f64 / config.stop.min_acceptance_rate).ceil() as u64;

    let stop_reason = loop {
        if pop.budget_used >= config.stop.max_budget {
            break StopReason::Budget;
        }
        if pop.acceptance_rate < config.stop.min_acceptance_rate {
            break StopReason::AcceptanceRate;
        }
        if config.stop.max_generations.is_some_and(|g| pop.generation >= g) {
            break StopReason::MaxGenerations;
        }

        let generation = pop.generation + 1;
        let thetas = pop.thetas();
        let weights = pop.weights();
        let distances: Vec<f64> = pop.particles.iter().map(|p| p.distance).collect();
        let delta = stats::quantile(&distances, config.quantile);
        let kernels = Kernels::build(config.kernel, &thetas, &weights, &distances, delta);
        let picker = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("population weights unusable: {e}")))?;
        let propose = |rng: &mut StreamRng| -> Result<ParamVector> {
            for _ in 0..SUPPORT_REDRAW_LIMIT {
                let j = picker.sample(rng);
                let cand = kernels.get(j).perturb(&thetas[j], rng);
                if let Some(p) = prior.admit(model, &cand) {
                    return Ok(p);
                }
            }
            Err(Error::InvalidParams(
                "perturbation kernel keeps leaving the prior support".into(),
            ))
        };

        let (accepted, attempts) = match fill_generation(
            n,
            generation as u64,
            config.seed,
            delta,
            Some(attempt_cap),
            &propose,
            target,
        )? {
            Fill::Complete { particles, attempts } => (particles, attempts),
            Fill::Capped { attempts, .. } => {
                total += attempts;
                break StopReason::AcceptanceRate;
            }
        };
        total += attempts;

        let log_w: Vec<f64> = accepted
            .par_iter()
            .map(|(theta, _)| {
                let x = theta.to_vec();
                let terms: Vec<f64> = thetas
                    .iter()
                    .zip(&weights)
                    .enumerate()
                    .map(|(j, (c, w))| w.ln() + kernels.get(j).log_density(&x, c))
                    .collect();
                let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
                prior.density(&x).ln() - lse
            })
            .collect();
        let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
        let sum: f64 = raw.iter().sum();

        pop = Population {
            generation,
            particles: accepted
                .into_iter()
                .zip(raw)
                .map(|((theta, distance), w)| Particle {
                    theta,
                    weight: w / sum,
                    distance,
                })
                .collect(),
            threshold: delta,
            budget_used: pop.budget_used + attempts,
            acceptance_rate: n as f64 / attempts as f64,
        };
        trace.checkpoints.push(trace_checkpoint(&pop));
        history.push(pop.clone());
    };

    Ok(SmcOutcome {
        population: pop,
        trace,
        history,
        stop_reason,
        total_simulations: total,
    })
}

/// SMC-ABC against an observed summary vector.
pub fn smc_abc(
    observed: &SummaryVector,
    summarizer: &SyntheticSummarizer,
    prior: &Prior,
    weights: &Weights,
    config: &SmcConfig,
) -> Result<SmcOutcome> {
    let target = SummaryDiscrepancy {
        observed,
        summarizer,
        weights: *weights,
    };
    smc_abc_with(&target, &summarizer.model, prior, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `(value, weight)` pairs.
    pub samples: Vec<(f64, f64)>,
}

/// Weighted median and central 90% interval per coordinate.
pub fn posterior_report(pop: &Population) -> Vec<ParamSummary> {
    let thetas = pop.thetas();
    let weights = pop.weights();
    let names = pop.particles[0].theta.names();
    (0..thetas[0].len())
        .map(|k| {
            let col: Vec<f64> = thetas.iter().map(|t| t[k]).collect();
            ParamSummary {
                name: names[k].to_string(),
                median: stats::weighted_percentile(&col, &weights, 0.5),
                ci_low: stats::weighted_percentile(&col, &weights, 0.05),
                ci_high: stats::weighted_percentile(&col, &weights, 0.95),
                samples: col.into_iter().zip(weights.iter().copied()).collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Distance `|σ - 3| + noise`; one "simulation" per call.
    struct Toy;

    impl Discrepancy for Toy {
        fn distance(&self, theta: &ParamVector, rng: &mut StreamRng) -> Result<f64> {
            let noise: f64 = rng.sample(StandardNormal);
            Ok((theta.sigma - 3.0 + 0.1 * noise).abs() + 0.1 * (theta.b - 5.0).abs())
        }
    }

    fn tp1() -> ModelSpec {
        ModelSpec::preset(ModelId::Tp1Ou)
    }

    fn config(seed: u64) -> SmcConfig {
        SmcConfig {
            n_pop: 200,
            quantile: 0.5,
            stop: StoppingRule {
                max_budget: 5_000,
                min_acceptance_rate: 0.015,
                max_generations: None,
            },
            seed,
            kernel: KernelKind::Global,
        }
    }

    #[test]
    fn prior_defaults_and_overrides() {
        let p = Prior::default_for(ModelId::Tp1Ou);
        assert_eq!(p.bounds().len(), 3);
        assert_eq!(
            Prior::default_for(ModelId::Tp2Wdsho).b,
            Bounds {
                lower: 2.0,
                upper: 100.0
            }
        );
        assert_eq!(
            Prior::default_for(ModelId::Tp4SwitchedSho).b,
            Bounds { lower: 0.0, upper: 1.0 }
        );
        assert_eq!(
            Prior::with_eta_for(ModelId::Tp4SwitchedSho).unwrap().eta,
            Some(Bounds {
                lower: 2.0,
                upper: 100.0
            })
        );
        assert!(Prior::with_eta_for(ModelId::Tp3Wpwd).is_err());
        assert!(p.in_box(&[1.0, 1.0, 0.5]) && !p.in_box(&[11.0, 1.0, 0.5]) && !p.in_box(&[1.0, 1.0]));
        assert_eq!(p.density(&[1.0, 1.0, 2.0]), 0.0);
    }

    #[test]
    fn prior_sampling_respects_model_constraints() {
        let mut model = ModelSpec::preset(ModelId::Tp4SwitchedSho);
        model.eta = 0.5;
        let prior = Prior::default_for(ModelId::Tp4SwitchedSho);
        let mut rng = stream(1, Domain::Misc, &[]);
        for _ in 0..200 {
            assert!(prior.sample(&model, &mut rng).unwrap().b < 0.5);
        }
        let impossible = Prior {
            b: Bounds { lower: 0.6, upper: 1.0 },
            ..prior
        };
        assert!(impossible.sample(&model, &mut rng).is_err());
    }

    #[test]
    fn infinite_threshold_accepts_first_draws() {
        let pop = rejection_abc_with(
            &Toy,
            &tp1(),
            &Prior::default_for(ModelId::Tp1Ou),
            f64::INFINITY,
            50,
            None,
            3,
        )
        .unwrap();
        assert_eq!(pop.budget_used, 50);
        assert_eq!(pop.acceptance_rate, 1.0);
        assert!((pop.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_threshold_hits_budget_cap() {
        let err = rejection_abc_with(&Toy, &tp1(), &Prior::default_for(ModelId::Tp1Ou), 0.0, 10, Some(200), 3);
        assert!(matches!(err, Err(Error::BudgetExhausted { accepted: 0, .. })));
        assert!(rejection_abc_with(&Toy, &tp1(), &Prior::default_for(ModelId::Tp1Ou), -1.0, 10, None, 3).is_err());
    }

    #[test]
    fn smc_invariants() {
        let prior = Prior::default_for(ModelId::Tp1Ou);
        let out = smc_abc_with(&Toy, &tp1(), &prior, &config(11)).unwrap();
        assert!(out.history.len() >= 3);
        let mut prev_delta = f64::INFINITY;
        let mut prev_budget = 0;
        for pop in &out.history {
            assert_eq!(pop.particles.len(), 200);
            assert!((pop.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(pop.effective_sample_size() >= 1.0);
            for p in &pop.particles {
                assert!(p.distance < pop.threshold);
                assert!(prior.in_box(&p.theta.to_vec()));
            }
            assert!(pop.threshold < prev_delta || pop.generation == 0);
            assert!(pop.budget_used > prev_budget);
            prev_delta = pop.threshold;
            prev_budget = pop.budget_used;
        }
        let budgets: Vec<u64> = out.trace.checkpoints.iter().map(|c| c.budget_used).collect();
        assert!(budgets.windows(2).all(|w| w[1] > w[0]));
        let report = posterior_report(&out.population);
        assert!((report[0].median - 3.0).abs() < 0.3, "{:?}", report[0].median);
        assert!(report[0].ci_low < 3.0 && report[0].ci_high > 3.0);
        assert!(out.total_simulations >= out.population.budget_used);
    }

    #[test]
    fn smc_is_independent_of_thread_count() {
        let prior = Prior::default_for(ModelId::Tp1Ou);
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| smc_abc_with(&Toy, &tp1(), &prior, &config(5)).unwrap())
        };
        assert_eq!(run(1), run(8));
    }

    #[test]
    fn budget_below_population_is_reported() {
        let mut c = config(1);
        c.stop.max_budget = 10;
        let err = smc_abc_with(&Toy, &tp1(), &Prior::default_for(ModelId::Tp1Ou), &c);
        assert!(matches!(
            err,
            Err(Error::BudgetExhausted {
                budget: 10,
                accepted: 0
            })
        ));
    }

    #[test]
    fn degenerate_population_uses_diagonal_kernel() {
        let thetas = vec![vec![1.0, 2.0, 0.5]; 10];
        let k = Kernel::from_population(&thetas, &[0.1; 10]);
        assert!((k.chol[0][0] - 1e-5).abs() < 1e-12);
        assert_eq!(k.chol[1][0], 0.0);
        let ok = Kernel::from_population(&[vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 1.0]], &[1.0; 3]);
        assert!(ok.chol[1][0] != 0.0);
    }

    #[test]
    fn posterior_report_on_point_mass_and_uniform_grid() {
        let particle = |s: f64, w: f64| Particle {
            theta: ParamVector::new(s, 1.0, 0.5),
            weight: w,
            distance: 0.0,
        };
        let pop = |particles| Population {
            generation: 0,
            particles,
            threshold: 1.0,
            budget_used: 1,
            acceptance_rate: 1.0,
        };
        let r = posterior_report(&pop(vec![particle(2.0, 0.5), particle(2.0, 0.5)]));
        assert_eq!((r[0].median, r[0].ci_low, r[0].ci_high), (2.0, 2.0, 2.0));
        let r = posterior_report(&pop((1..=100).map(|i| particle(i as f64, 0.01)).collect()));
        assert!((r[0].median - 50.5).abs() < 1e-9);
        assert_eq!(r[0].samples.len(), 100);
        assert_eq!(r[2].name, "lambda");
    }
}
