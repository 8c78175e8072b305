//! Small descriptive-statistics helpers.

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (divisor `n - 1`).
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() as f64 - 1.0)).sqrt()
}

pub fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    let frac = pos - i as f64;
    sorted[i] + frac * (sorted[i + 1] - sorted[i])
}

/// Type 7 quantile by selection; reorders `x`.
pub fn quantile_select(x: &mut [f64], p: f64) -> f64 {
    let n = x.len();
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    let (_, lo, rest) = x.select_nth_unstable_by(i, f64::total_cmp);
    let lo = *lo;
    if rest.is_empty() {
        return lo;
    }
    let hi = rest.iter().copied().fold(f64::INFINITY, f64::min);
    lo + (pos - i as f64) * (hi - lo)
}

pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

/// Median; reorders `x`.
pub fn median(x: &mut [f64]) -> f64 {
    x.sort_by(f64::total_cmp);
    quantile_sorted(x, 0.5)
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Weighted percentile with plotting positions at the midpoints of each
/// point's cumulative weight, linearly interpolated between them.
pub fn weighted_percentile(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let mut cum = 0.0;
    let mut pos = Vec::with_capacity(idx.len());
    for &i in &idx {
        let w = weights[i] / total;
        pos.push(cum + 0.5 * w);
        cum += w;
    }
    if p <= pos[0] {
        return values[idx[0]];
    }
    let last = idx.len() - 1;
    if p >= pos[last] {
        return values[idx[last]];
    }
    let k = pos.partition_point(|&q| q <= p);
    let (p0, p1) = (pos[k - 1], pos[k]);
    let (v0, v1) = (values[idx[k - 1]], values[idx[k]]);
    if p1 > p0 {
        v0 + (p - p0) / (p1 - p0) * (v1 - v0)
    } else {
        v1
    }
}

/// Weighted mean vector of `rows` (each of length `d`).
pub fn weighted_mean(rows: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let d = rows[0].len();
    let total: f64 = weights.iter().sum();
    let mut m = vec![0.0; d];
    for (r, w) in rows.iter().zip(weights) {
        for k in 0..d {
            m[k] += w * r[k];
        }
    }
    m.iter_mut().for_each(|v| *v /= total);
    m
}

/// Weighted covariance `Σ w_i (θ_i - m)(θ_i - m)ᵀ / Σ w_i`.
pub fn weighted_covariance(rows: &[Vec<f64>], weights: &[f64]) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let total: f64 = weights.iter().sum();
    let m = weighted_mean(rows, weights);
    let mut c = vec![vec![0.0; d]; d];
    for (r, w) in rows.iter().zip(weights) {
        for a in 0..d {
            for b in 0..=a {
                c[a][b] += w * (r[a] - m[a]) * (r[b] - m[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            c[a][b] /= total;
            c[b][a] = c[a][b];
        }
    }
    c
}

/// Lower Cholesky factor, or `None` when `m` is not positive definite.
pub fn cholesky(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = m.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = m[i][i] - s;
                if !(v > 0.0) || !v.is_finite() {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}
