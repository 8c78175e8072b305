//! Time-average versus ensemble density of the observed coordinate.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, ParamVector};
use crate::rng::{stream, Domain};
use crate::simulate::simulate;
use crate::stats;
use crate::summaries::{
    gaussian_kde_values, kde, linspace, silverman_bandwidth, DensityEstimate, DENSITY_CUT, DENSITY_POINTS,
};

pub const DEFAULT_T_LONG: f64 = 5000.0;
pub const DEFAULT_T_STAR: f64 = 100.0;
pub const DEFAULT_N_REP: usize = 1000;
/// Leading fraction of the long path discarded before averaging.
pub const BURN_IN_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub time_avg_density: DensityEstimate,
    pub ensemble_density: DensityEstimate,
    pub l1_gap: f64,
    pub t_long: f64,
    pub t_star: f64,
    pub n_replicates: usize,
}

/// Observed coordinate of one path on `[BURN_IN_FRACTION·T_long, T_long]`.
pub fn long_path_series<R: Rng + ?Sized>(
    model: &ModelSpec,
    params: &ParamVector,
    t_long: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let spec = model.clone().with_horizon(t_long);
    let path = simulate(&spec, params, rng)?;
    let cut = BURN_IN_FRACTION * t_long;
    Ok((0..path.len())
        .filter(|&i| path.times[i] >= cut)
        .map(|i| path.state(i)[0])
        .collect())
}

pub fn time_average_density<R: Rng + ?Sized>(
    model: &ModelSpec,
    params: &ParamVector,
    t_long: f64,
    rng: &mut R,
) -> Result<DensityEstimate> {
    kde(&long_path_series(model, params, t_long, rng)?, None)
}

/// `X_{t*}` (first coordinate) of `n_rep` independent paths.
pub fn ensemble_endpoints(
    model: &ModelSpec,
    params: &ParamVector,
    t_star: f64,
    n_rep: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_rep < 100 {
        return Err(Error::InvalidArgument(format!(
            "n_rep must be at least 100, got {n_rep}"
        )));
    }
    let spec = model.clone().with_horizon(t_star);
    (0..n_rep as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Domain::Replicate, &[r]);
            Ok(simulate(&spec, params, &mut rng)?.last_state()[0])
        })
        .collect()
}

pub fn ensemble_density(
    model: &ModelSpec,
    params: &ParamVector,
    t_star: f64,
    n_rep: usize,
    seed: u64,
) -> Result<DensityEstimate> {
    kde(&ensemble_endpoints(model, params, t_star, n_rep, seed)?, None)
}

/// `Σ |a_i - b_i|·Δx` on a shared uniform grid.
pub fn l1_gap(a: &DensityEstimate, b: &DensityEstimate) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::InvalidArgument("densities are not on the same grid".into()));
    }
    let dx = (a.grid[a.grid.len() - 1] - a.grid[0]) / (a.grid.len() - 1) as f64;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>() * dx)
}

/// Both estimators on one grid covering both samples.
pub fn compare_samples(path_series: &[f64], endpoints: &[f64]) -> Result<(DensityEstimate, DensityEstimate, f64)> {
    let bw_a = silverman_bandwidth(path_series)?;
    let bw_b = silverman_bandwidth(endpoints)?;
    let (lo_a, hi_a) = stats::min_max(path_series);
    let (lo_b, hi_b) = stats::min_max(endpoints);
    let lo = (lo_a - DENSITY_CUT * bw_a).min(lo_b - DENSITY_CUT * bw_b);
    let hi = (hi_a + DENSITY_CUT * bw_a).max(hi_b + DENSITY_CUT * bw_b);
    let grid = linspace(lo, hi, DENSITY_POINTS);
    let a = DensityEstimate {
        values: gaussian_kde_values(path_series, bw_a, &grid),
        grid: grid.clone(),
        bandwidth: bw_a,
    };
    let b = DensityEstimate {
        values: gaussian_kde_values(endpoints, bw_b, &grid),
        grid,
        bandwidth: bw_b,
    };
    let gap = l1_gap(&a, &b)?;
    Ok((a, b, gap))
}

pub fn ergodic_check(
    model: &ModelSpec,
    params: &ParamVector,
    t_long: f64,
    t_star: f64,
    n_rep: usize,
    seed: u64,
) -> Result<ErgodicReport> {
    model.validate()?;
    params.validate_for(model)?;
    let mut rng = stream(seed, Domain::Observation, &[u64::MAX]);
    let series = long_path_series(model, params, t_long, &mut rng)?;
    let endpoints = ensemble_endpoints(model, params, t_star, n_rep, seed)?;
    let (time_avg_density, ensemble_density, l1_gap) = compare_samples(&series, &endpoints)?;
    Ok(ErgodicReport {
        time_avg_density,
        ensemble_density,
        l1_gap,
        t_long,
        t_star,
        n_replicates: n_rep,
    })
}
