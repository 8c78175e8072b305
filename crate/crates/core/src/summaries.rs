//! Summary statistics of an observed dataset: invariant density, spectral
//! density, mean quadratic variation, jump count and, when jump times are
//! observed, the median inter-jump slope.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObservedDataset;
use crate::stats;

/// Number of density evaluation points.
pub const DENSITY_POINTS: usize = 512;
/// Grid extends this many bandwidths beyond the data range.
pub const DENSITY_CUT: f64 = 3.0;
/// Fraction of the series tapered at each end.
pub const TAPER: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        stats::trapezoid(&self.grid, &self.values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    /// Fourier frequencies in cycles per time unit.
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
}

/// Slope statistic state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "value")]
pub enum Slope {
    /// Jump times are not part of the dataset.
    NotObserved,
    /// Jump times observed but no usable inter-jump interval.
    Unavailable,
    Value(f64),
}

impl Slope {
    pub fn value(&self) -> Option<f64> {
        match self {
            Slope::Value(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_observed(&self) -> bool {
        !matches!(self, Slope::NotObserved)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub density: DensityEstimate,
    pub spectrum: SpectralEstimate,
    pub quad_var: f64,
    pub n_jumps: usize,
    pub slope: Slope,
}

/// Normal-reference bandwidth `0.9·min(sd, IQR/1.34)·n^{-1/5}`.
pub fn silverman_bandwidth(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 2 {
        return Err(Error::DegenerateData(format!(
            "density needs at least 2 points, got {n}"
        )));
    }
    let sd = stats::std_dev(series);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::DegenerateData("series is constant".into()));
    }
    let mut scratch = series.to_vec();
    let iqr = stats::quantile_select(&mut scratch, 0.75) - stats::quantile_select(&mut scratch, 0.25);
    let mut spread = sd.min(iqr / 1.34);
    if !(spread > 0.0) {
        spread = sd;
    }
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Default 512-point grid for `series` with bandwidth `bw`.
pub fn density_grid(series: &[f64], bw: f64) -> Vec<f64> {
    let (lo, hi) = stats::min_max(series);
    linspace(lo - DENSITY_CUT * bw, hi + DENSITY_CUT * bw, DENSITY_POINTS)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
        .collect()
}

/// Gaussian kernel density estimate, on `eval_grid` when given.
pub fn kde(series: &[f64], eval_grid: Option<&[f64]>) -> Result<DensityEstimate> {
    let bw = silverman_bandwidth(series)?;
    let grid = match eval_grid {
        Some(g) => g.to_vec(),
        None => density_grid(series, bw),
    };
    let values = gaussian_kde_values(series, bw, &grid);
    Ok(DensityEstimate {
        grid,
        values,
        bandwidth: bw,
    })
}

/// Above this many points the data are linearly binned before smoothing.
const DIRECT_KDE_LIMIT: usize = 4096;
const BINS_PER_BANDWIDTH: f64 = 16.0;
const KERNEL_RADIUS: f64 = 7.0;
const MAX_BINS: usize = 1 << 21;

pub fn gaussian_kde_values(series: &[f64], bw: f64, grid: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (series.len() as f64 * bw * (2.0 * PI).sqrt());
    if series.len() <= DIRECT_KDE_LIMIT {
        return grid
            .iter()
            .map(|&g| {
                series
                    .iter()
                    .map(|&x| {
                        let u = (g - x) / bw;
                        (-0.5 * u * u).exp()
                    })
                    .sum::<f64>()
                    * norm
            })
            .collect();
    }

    let (lo, hi) = stats::min_max(series);
    let nbins = (((hi - lo) / bw * BINS_PER_BANDWIDTH).ceil() as usize + 1).clamp(2, MAX_BINS);
    let delta = (hi - lo) / (nbins - 1) as f64;
    let mut mass = vec![0.0; nbins];
    for &x in series {
        let pos = (x - lo) / delta;
        let i = (pos.floor() as usize).min(nbins - 2);
        let frac = pos - i as f64;
        mass[i] += 1.0 - frac;
        mass[i + 1] += frac;
    }

    // Kernel weights along the bin lattice follow e_{i+1} = e_i·r_i with
    // r_{i+1} = r_i·exp(-d²), d = delta/bw, so each point costs two exps.
    let d = delta / bw;
    let r_step = (-d * d).exp();
    grid.iter()
        .map(|&g| {
            let first = (((g - KERNEL_RADIUS * bw - lo) / delta).ceil().max(0.0)) as usize;
            let last_f = ((g + KERNEL_RADIUS * bw - lo) / delta).floor();
            if last_f < 0.0 || first >= nbins {
                return 0.0;
            }
            let last = (last_f as usize).min(nbins - 1);
            if first > last {
                return 0.0;
            }
            let u0 = (lo + first as f64 * delta - g) / bw;
            let mut e = (-0.5 * u0 * u0).exp();
            let mut r = (-(u0 * d + 0.5 * d * d)).exp();
            let mut acc = 0.0;
            for m in &mass[first..=last] {
                acc += m * e;
                e *= r;
                r *= r_step;
            }
            acc * norm
        })
        .collect()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

/// Linear interpolation of `(times, values)` onto `0, h, 2h, …, T`.
pub fn resample_uniform(times: &[f64], values: &[f64], h: f64) -> Vec<f64> {
    let horizon = *times.last().unwrap();
    let m = (horizon / h).round() as usize + 1;
    let mut out = Vec::with_capacity(m);
    let mut k = 0;
    for i in 0..m {
        let t = (i as f64 * h).min(horizon);
        while k + 2 < times.len() && times[k + 1] < t {
            k += 1;
        }
        let (t0, t1) = (times[k], times[k + 1]);
        let w = if t1 > t0 {
            ((t - t0) / (t1 - t0)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(values[k] + w * (values[k + 1] - values[k]));
    }
    out
}

/// Removes the least-squares line fitted against the sample index.
pub fn detrend(x: &mut [f64]) {
    let n = x.len() as f64;
    let tbar = (n - 1.0) / 2.0;
    let xbar = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - tbar;
        sxy += dt * (v - xbar);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    for (i, v) in x.iter_mut().enumerate() {
        *v -= xbar + slope * (i as f64 - tbar);
    }
}

/// Split cosine bell over the first and last `⌊p·n⌋` samples.
pub fn split_cosine_taper(x: &mut [f64], p: f64) {
    let n = x.len();
    let m = (n as f64 * p).floor() as usize;
    if m == 0 {
        return;
    }
    for k in 0..m {
        let w = 0.5 * (1.0 - (PI * (2 * k + 1) as f64 / (2 * m) as f64).cos());
        x[k] *= w;
        x[n - 1 - k] *= w;
    }
}

/// Raw periodogram of the series resampled to step `h`: linear detrend,
/// 10% split-cosine taper, ordinates `h·|X_k|²/(M·u2)` at `k/(M·h)` for
/// `k = 1..⌊M/2⌋`, where `u2` corrects for the taper's power loss.
pub fn periodogram(times: &[f64], series: &[f64], h: f64) -> Result<SpectralEstimate> {
    if series.len() < 8 || times.len() != series.len() {
        return Err(Error::InvalidArgument(format!(
            "periodogram needs at least 8 aligned points, got {} values and {} times",
            series.len(),
            times.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut x = resample_uniform(times, series, h);
    if x.len() < 8 {
        return Err(Error::InvalidArgument("resampled series shorter than 8 points".into()));
    }
    Ok(periodogram_uniform(&mut x, h))
}

/// Periodogram of an already uniformly sampled series (consumed as scratch).
pub fn periodogram_uniform(x: &mut [f64], h: f64) -> SpectralEstimate {
    detrend(x);
    split_cosine_taper(x, TAPER);
    let m = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    plan(m).process(&mut buf);
    let u2 = 1.0 - 5.0 / 8.0 * TAPER * 2.0;
    let scale = h / (m as f64 * u2);
    let nspec = m / 2;
    let frequencies = (1..=nspec).map(|k| k as f64 / (m as f64 * h)).collect();
    let values = buf[1..=nspec].iter().map(|c| c.norm_sqr() * scale).collect();
    SpectralEstimate { frequencies, values }
}

/// `(1/N)·Σ (x_{i-1} - x_i)²` with `N` the number of points.
pub fn quad_variation(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InvalidArgument(
            "quadratic variation needs at least 2 points".into(),
        ));
    }
    let s: f64 = series.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum();
    Ok(s / series.len() as f64)
}

/// Value of the series at time `t`, interpolating between grid points.
fn value_at(times: &[f64], series: &[f64], t: f64) -> f64 {
    let i = times.partition_point(|&s| s < t);
    if i < times.len() && times[i] == t {
        return series[i];
    }
    if i == 0 {
        return series[0];
    }
    if i >= times.len() {
        return series[series.len() - 1];
    }
    let (t0, t1) = (times[i - 1], times[i]);
    series[i - 1] + (t - t0) / (t1 - t0) * (series[i] - series[i - 1])
}

/// Median absolute slope between consecutive jump times, over intervals
/// where the direction of travel changed relative to the previous interval
/// (the first interval is always kept).
pub fn slope_summary(times: &[f64], series: &[f64], jump_times: &[f64]) -> Option<f64> {
    if jump_times.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = jump_times.iter().map(|&t| value_at(times, series, t)).collect();
    let mut slopes = Vec::new();
    let mut prev_dir: Option<std::cmp::Ordering> = None;
    for k in 0..jump_times.len() - 1 {
        let dt = jump_times[k + 1] - jump_times[k];
        if !(dt > 0.0) {
            continue;
        }
        let dx = xs[k + 1] - xs[k];
        let dir = dx.partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal);
        if prev_dir.is_none_or(|p| p != dir) {
            slopes.push((dx / dt).abs());
        }
        prev_dir = Some(dir);
    }
    if slopes.is_empty() {
        None
    } else {
        Some(stats::median(&mut slopes))
    }
}

/// Shared evaluation grid so synthetic densities are comparable to the
/// observed one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGrid {
    pub density_grid: Vec<f64>,
}

impl ReferenceGrid {
    pub fn of(summary: &SummaryVector) -> Self {
        ReferenceGrid {
            density_grid: summary.density.grid.clone(),
        }
    }
}

/// Assembles `{f, S, V, N^j[, slope]}` for `dataset` sampled with step `h`.
pub fn summarize(dataset: &ObservedDataset, h: f64, reference: Option<&ReferenceGrid>) -> Result<SummaryVector> {
    let density = kde(&dataset.series, reference.map(|r| r.density_grid.as_slice()))?;
    let spectrum = periodogram(&dataset.times, &dataset.series, h)?;
    let quad_var = quad_variation(&dataset.series)?;
    let slope = match &dataset.jump_times {
        None => Slope::NotObserved,
        Some(j) => match slope_summary(&dataset.times, &dataset.series, j) {
            Some(v) => Slope::Value(v),
            None => Slope::Unavailable,
        },
    };
    Ok(SummaryVector {
        density,
        spectrum,
        quad_var,
        n_jumps: dataset.n_jumps,
        slope,
    })
}
