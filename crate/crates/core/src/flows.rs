//! Exact Gaussian transition laws of the four inter-jump SDEs.
//!
//! All four SDEs are linear with additive noise, so the flow over a step
//! `dt` is an affine map of the start state plus Gaussian noise:
//! `x' = Φ(dt)·x + c(dt) + N(0, C(dt))`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ModelId;

pub type Mat2 = [[f64; 2]; 2];

const ZERO2: Mat2 = [[0.0; 2]; 2];
const IDENTITY2: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Damping below this routes the oscillator covariance to the undamped form.
pub const MIN_DAMPING: f64 = 1e-8;
/// Eigenvalues down to `-PSD_TOLERANCE·max(1, λ_max)` are clamped to zero.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// Mean and covariance of one exact step. Only the leading `dim` entries are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianStep {
    pub dim: usize,
    pub mean: [f64; 2],
    pub cov: Mat2,
}

impl GaussianStep {
    pub fn scalar(mean: f64, var: f64) -> Self {
        GaussianStep {
            dim: 1,
            mean: [mean, 0.0],
            cov: [[var, 0.0], [0.0, 0.0]],
        }
    }

    pub fn planar(mean: [f64; 2], cov: Mat2) -> Self {
        GaussianStep { dim: 2, mean, cov }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean[..self.dim]
    }

    pub fn var(&self) -> f64 {
        self.cov[0][0]
    }
}

/// Coefficients of the (weakly damped or undamped) stochastic oscillator
/// `dX1 = X2 dt`, `dX2 = (-γ1² X1 - 2γ2 X2) dt + σ dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub sigma: f64,
}

impl OscillatorParams {
    pub fn new(gamma1: f64, gamma2: f64, sigma: f64) -> Result<Self> {
        if !(gamma1.is_finite() && gamma1 > 0.0) {
            return Err(Error::InvalidParams(format!("gamma1 must be positive, got {gamma1}")));
        }
        if !(gamma2.is_finite() && gamma2 >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "gamma2 must be non-negative, got {gamma2}"
            )));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParams(format!("sigma must be non-negative, got {sigma}")));
        }
        if gamma1 * gamma1 - gamma2 * gamma2 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "oscillator is not underdamped: gamma1 = {gamma1}, gamma2 = {gamma2}"
            )));
        }
        Ok(OscillatorParams { gamma1, gamma2, sigma })
    }

    pub fn kappa(&self) -> f64 {
        ((self.gamma1 - self.gamma2) * (self.gamma1 + self.gamma2)).sqrt()
    }

    /// Drift matrix `A(γ1, γ2)`.
    pub fn drift_matrix(&self) -> Mat2 {
        [[0.0, 1.0], [-self.gamma1 * self.gamma1, -2.0 * self.gamma2]]
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_nan() || dt < 0.0 {
        Err(Error::InvalidArgument(format!(
            "step length must be non-negative, got {dt}"
        )))
    } else {
        Ok(())
    }
}

/// Wiener process with drift `z`: `N(x + z·dt, σ²·dt)`.
pub fn wpwd_step(x: f64, z: f64, sigma: f64, dt: f64) -> Result<GaussianStep> {
    check_dt(dt)?;
    Ok(GaussianStep::scalar(x + z * dt, sigma * sigma * dt))
}

/// Ornstein-Uhlenbeck with level `z` and reversion rate `eta`.
pub fn ou_step(x: f64, z: f64, eta: f64, sigma: f64, dt: f64) -> Result<GaussianStep> {
    check_dt(dt)?;
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidParams(format!("eta must be positive, got {eta}")));
    }
    let (decay, offset, var) = ou_coefficients(z, eta, sigma, dt);
    Ok(GaussianStep::scalar(x * decay + offset, var))
}

fn ou_coefficients(z: f64, eta: f64, sigma: f64, dt: f64) -> (f64, f64, f64) {
    let decay = (-eta * dt).exp();
    let offset = -z * (-eta * dt).exp_m1();
    let var = -sigma * sigma / (2.0 * eta) * (-2.0 * eta * dt).exp_m1();
    (decay, offset, var)
}

/// Matrix exponential `e^{A(γ1,γ2)·dt}`; `γ2 = 0` gives the undamped rotation.
pub fn wdsho_exp(params: &OscillatorParams, dt: f64) -> Result<Mat2> {
    check_dt(dt)?;
    let kappa = params.kappa();
    if !(kappa > 0.0) {
        return Err(Error::InvalidParams("kappa must be positive".into()));
    }
    let (g1, g2) = (params.gamma1, params.gamma2);
    let (s, c) = (kappa * dt).sin_cos();
    let damp = (-g2 * dt).exp();
    Ok([
        [damp * (c + g2 / kappa * s), damp * s / kappa],
        [-damp * g1 * g1 / kappa * s, damp * (c - g2 / kappa * s)],
    ])
}

/// Covariance of the weakly damped oscillator after `dt`.
///
/// Short steps use the Lyapunov power series; damping below [`MIN_DAMPING`]
/// falls back to [`simplesho_cov`].
pub fn wdsho_cov(params: &OscillatorParams, dt: f64) -> Result<Mat2> {
    check_dt(dt)?;
    if params.gamma2 < MIN_DAMPING {
        return simplesho_cov(params.gamma1, params.sigma, dt);
    }
    if series_applies(params, dt) {
        return Ok(lyapunov_series(params, dt));
    }
    Ok(wdsho_cov_closed_form(params, dt))
}

/// The printed closed form of the weakly damped covariance, without any
/// short-step or low-damping handling.
pub fn wdsho_cov_closed_form(params: &OscillatorParams, t: f64) -> Mat2 {
    let (g1, g2, sigma) = (params.gamma1, params.gamma2, params.sigma);
    let kappa = params.kappa();
    let s2 = sigma * sigma;
    let k2 = kappa * kappa;
    let damp = (-2.0 * g2 * t).exp();
    let (sin2k, cos2k) = (2.0 * kappa * t).sin_cos();
    let sink = (kappa * t).sin();

    let c11 = s2 / (4.0 * g2 * g1 * g1)
        - s2 * damp / (4.0 * g2 * g1 * g1 * k2) * (g1 * g1 - g2 * g2 * cos2k + g2 * kappa * sin2k);
    let c12 = s2 / (2.0 * k2) * damp * sink * sink;
    let c22 = s2 / (4.0 * g2) - s2 * damp / (4.0 * g2 * k2) * (g1 * g1 - g2 * g2 * cos2k - g2 * kappa * sin2k);
    [[c11, c12], [c12, c22]]
}

/// Matrix exponential of the undamped oscillator.
pub fn simplesho_exp(gamma1: f64, dt: f64) -> Result<Mat2> {
    wdsho_exp(&OscillatorParams::new(gamma1, 0.0, 0.0)?, dt)
}

/// Covariance of the undamped oscillator after `dt`; grows without bound.
pub fn simplesho_cov(gamma1: f64, sigma: f64, dt: f64) -> Result<Mat2> {
    check_dt(dt)?;
    let params = OscillatorParams::new(gamma1, 0.0, sigma)?;
    if series_applies(&params, dt) {
        return Ok(lyapunov_series(&params, dt));
    }
    Ok(simplesho_cov_closed_form(gamma1, sigma, dt))
}

pub fn simplesho_cov_closed_form(gamma1: f64, sigma: f64, t: f64) -> Mat2 {
    let half = sigma * sigma / 2.0;
    let (sin2, _) = (2.0 * gamma1 * t).sin_cos();
    let sin1 = (gamma1 * t).sin();
    let c11 = half * (2.0 * gamma1 * t - sin2) / (2.0 * gamma1.powi(3));
    let c12 = half * sin1 * sin1 / (gamma1 * gamma1);
    let c22 = half * (2.0 * gamma1 * t + sin2) / (2.0 * gamma1);
    [[c11, c12], [c12, c22]]
}

/// `dt·‖A‖∞` below which the closed forms lose digits to cancellation.
const SERIES_RADIUS: f64 = 1.0;

fn series_applies(params: &OscillatorParams, dt: f64) -> bool {
    let norm = f64::max(1.0, params.gamma1 * params.gamma1 + 2.0 * params.gamma2);
    dt * norm < SERIES_RADIUS
}

/// `C(t) = Σ_n t^{n+1}/(n+1)! · M_n` with `M_0 = ΣΣᵀ` and
/// `M_{n+1} = A·M_n + M_n·Aᵀ`, the Taylor series of the Lyapunov ODE
/// `C' = AC + CAᵀ + ΣΣᵀ`, `C(0) = 0`.
fn lyapunov_series(params: &OscillatorParams, t: f64) -> Mat2 {
    let a = params.drift_matrix();
    let mut m: Mat2 = [[0.0, 0.0], [0.0, params.sigma * params.sigma]];
    let mut coef = t;
    let mut acc = ZERO2;
    for n in 0..60 {
        let term = scale(&m, coef);
        acc = add(&acc, &term);
        let size = max_abs(&term);
        if size == 0.0 || size <= 1e-18 * max_abs(&acc) {
            break;
        }
        let am = matmul(&a, &m);
        m = add(&am, &transpose(&am));
        coef *= t / (n as f64 + 2.0);
    }
    acc
}

pub(crate) fn matmul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = ZERO2;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub(crate) fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn add(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

fn scale(a: &Mat2, s: f64) -> Mat2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

fn max_abs(a: &Mat2) -> f64 {
    a.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

/// Square-root factor `L` with `L·Lᵀ = cov` (after clamping tiny negative
/// eigenvalues).
pub fn psd_factor(dim: usize, cov: &Mat2) -> Result<Mat2> {
    if dim == 1 {
        let v = cov[0][0];
        if v < -PSD_TOLERANCE * v.abs().max(1.0) || v.is_nan() {
            return Err(Error::IndefiniteCovariance { min_eigenvalue: v });
        }
        return Ok([[v.max(0.0).sqrt(), 0.0], [0.0, 0.0]]);
    }
    let (a, b, c) = (cov[0][0], 0.5 * (cov[0][1] + cov[1][0]), cov[1][1]);
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::IndefiniteCovariance {
            min_eigenvalue: f64::NAN,
        });
    }
    let mid = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    let l_max = mid + rad;
    // Vieta avoids cancellation in the small eigenvalue.
    let l_min = if l_max > 0.0 {
        (a * c - b * b) / l_max
    } else {
        mid - rad
    };
    if l_min < -PSD_TOLERANCE * l_max.abs().max(1.0) {
        return Err(Error::IndefiniteCovariance { min_eigenvalue: l_min });
    }
    // Unit eigenvector of l_max, picked from the better-conditioned row.
    let (vx, vy) = if b == 0.0 {
        if a >= c {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        }
    } else if (l_max - c).abs() >= (l_max - a).abs() {
        let n = (l_max - c).hypot(b);
        ((l_max - c) / n, b / n)
    } else {
        let n = b.hypot(l_max - a);
        (b / n, (l_max - a) / n)
    };
    let s_max = l_max.max(0.0).sqrt();
    let s_min = l_min.max(0.0).sqrt();
    Ok([[vx * s_max, -vy * s_min], [vy * s_max, vx * s_min]])
}

/// Draws `mean + L·ξ` from a step law.
pub fn sample_step<R: Rng + ?Sized>(step: &GaussianStep, rng: &mut R) -> Result<Vec<f64>> {
    let l = psd_factor(step.dim, &step.cov)?;
    let mut out = step.mean().to_vec();
    let xi: Vec<f64> = (0..step.dim).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..step.dim {
        for (j, &e) in xi.iter().enumerate() {
            out[i] += l[i][j] * e;
        }
    }
    Ok(out)
}

/// Exact transition for a fixed regime and step length, ready to apply
/// repeatedly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    dim: usize,
    phi: Mat2,
    offset: [f64; 2],
    cov: Mat2,
    factor: Mat2,
}

impl Transition {
    /// Transition of `model` in regime `z` over `dt`.
    pub fn new(model: ModelId, eta: f64, sigma: f64, z: f64, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let (dim, phi, offset, cov) = match model {
            ModelId::Tp1Ou => {
                if !(eta > 0.0) {
                    return Err(Error::InvalidParams(format!("eta must be positive, got {eta}")));
                }
                let (decay, offset, var) = ou_coefficients(z, eta, sigma, dt);
                (1, [[decay, 0.0], [0.0, 0.0]], [offset, 0.0], [[var, 0.0], [0.0, 0.0]])
            }
            ModelId::Tp3Wpwd => (1, IDENTITY2, [z * dt, 0.0], [[sigma * sigma * dt, 0.0], [0.0, 0.0]]),
            ModelId::Tp2Wdsho => {
                let p = OscillatorParams::new(z, eta, sigma)?;
                (2, wdsho_exp(&p, dt)?, [0.0; 2], wdsho_cov(&p, dt)?)
            }
            ModelId::Tp4SwitchedSho => {
                let p = OscillatorParams::new(eta, z, sigma)?;
                (2, wdsho_exp(&p, dt)?, [0.0; 2], wdsho_cov(&p, dt)?)
            }
        };
        let factor = psd_factor(dim, &cov)?;
        Ok(Transition {
            dim,
            phi,
            offset,
            cov,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn phi(&self) -> &Mat2 {
        &self.phi
    }

    /// Law of the next state given the current one.
    pub fn law(&self, x: &[f64]) -> GaussianStep {
        let mut mean = self.offset;
        for i in 0..self.dim {
            for j in 0..self.dim {
                mean[i] += self.phi[i][j] * x[j];
            }
        }
        GaussianStep {
            dim: self.dim,
            mean,
            cov: self.cov,
        }
    }

    /// Advances `x` in place by one exact step.
    pub fn apply<R: Rng + ?Sized>(&self, x: &mut [f64], rng: &mut R) {
        if self.dim == 1 {
            let xi: f64 = rng.sample(StandardNormal);
            x[0] = self.phi[0][0] * x[0] + self.offset[0] + self.factor[0][0] * xi;
        } else {
            let xi0: f64 = rng.sample(StandardNormal);
            let xi1: f64 = rng.sample(StandardNormal);
            let (a, b) = (x[0], x[1]);
            x[0] = self.phi[0][0] * a
                + self.phi[0][1] * b
                + self.offset[0]
                + self.factor[0][0] * xi0
                + self.factor[0][1] * xi1;
            x[1] = self.phi[1][0] * a
                + self.phi[1][1] * b
                + self.offset[1]
                + self.factor[1][0] * xi0
                + self.factor[1][1] * xi1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{LN_2, PI};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    /// Composite Simpson on the integrand `e^{As} G e^{Aᵀs}`, independent
    /// of both the closed form and the series.
    fn cov_quadrature(p: &OscillatorParams, t: f64, n: usize) -> Mat2 {
        let g: Mat2 = [[0.0, 0.0], [0.0, p.sigma * p.sigma]];
        let h = t / n as f64;
        let mut acc = ZERO2;
        for i in 0..=n {
            let s = i as f64 * h;
            let e = wdsho_exp(p, s).unwrap();
            let f = matmul(&matmul(&e, &g), &transpose(&e));
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc = add(&acc, &scale(&f, w));
        }
        scale(&acc, h / 3.0)
    }

    #[test]
    fn wpwd_moments() {
        let s = wpwd_step(0.0, 2.0, 1.5, 3.0).unwrap();
        assert_eq!(s.mean(), &[6.0]);
        assert_eq!(s.var(), 1.5 * 1.5 * 3.0);
        let s = wpwd_step(5.0, 2.0, 1.0, 0.0).unwrap();
        assert_eq!((s.mean()[0], s.var()), (5.0, 0.0));
        let s = wpwd_step(0.0, 2.0, 0.0, 3.0).unwrap();
        assert_eq!((s.mean()[0], s.var()), (6.0, 0.0));
        assert!(wpwd_step(0.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn ou_moments() {
        let s = ou_step(0.0, 2.0, 1.0, 1.0, LN_2).unwrap();
        assert!(close(s.mean()[0], 1.0, 1e-14));
        assert!(close(s.var(), 0.375, 1e-14));
        let s = ou_step(3.0, 2.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!((s.mean()[0], s.var()), (3.0, 0.0));
        let s = ou_step(3.0, 2.0, 0.5, 1.0, 1e3).unwrap();
        assert!(close(s.mean()[0], 2.0, 1e-14));
        assert!(close(s.var(), 1.0, 1e-14));
    }

    #[test]
    fn oscillator_exp_special_cases() {
        let p = OscillatorParams::new(2.0, 1.0, 1.0).unwrap();
        assert_eq!(wdsho_exp(&p, 0.0).unwrap(), IDENTITY2);
        let t = PI / 3f64.sqrt();
        let e = wdsho_exp(&p, t).unwrap();
        let d = -(-t).exp();
        assert!(close(e[0][0], d, 1e-12) && close(e[1][1], d, 1e-12));
        assert!(e[0][1].abs() < 1e-15 && e[1][0].abs() < 1e-14);

        let g1 = 1.7;
        let t = 0.9;
        let e = simplesho_exp(g1, t).unwrap();
        let (s, c) = (g1 * t).sin_cos();
        let want = [[c, s / g1], [-g1 * s, c]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(e[i][j], want[i][j], 1e-14));
            }
        }
    }

    #[test]
    fn exp_matches_series_of_drift_matrix() {
        let p = OscillatorParams::new(1.3, 0.4, 1.0).unwrap();
        let a = p.drift_matrix();
        let t = 0.7;
        let mut term = IDENTITY2;
        let mut acc = IDENTITY2;
        for n in 1..40 {
            term = scale(&matmul(&term, &a), t / n as f64);
            acc = add(&acc, &term);
        }
        let e = wdsho_exp(&p, t).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((e[i][j] - acc[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn kappa_must_be_positive() {
        assert!(OscillatorParams::new(1.0, 1.0, 1.0).is_err());
        assert!(OscillatorParams::new(1.0, 2.0, 1.0).is_err());
        assert!(OscillatorParams::new(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn wdsho_cov_matches_quadrature_on_grid() {
        for &g1 in &[0.5, 1.0, 2.0, 20.0] {
            for g2 in [0.1, 0.5, 0.9 * g1] {
                if g2 >= g1 {
                    continue;
                }
                let p = OscillatorParams::new(g1, g2, 1.3).unwrap();
                for &t in &[0.01, 0.3, 1.0, 4.0] {
                    let q = cov_quadrature(&p, t, 20_000);
                    let c = wdsho_cov(&p, t).unwrap();
                    let scale = max_abs(&q);
                    for i in 0..2 {
                        for j in 0..2 {
                            let err = (c[i][j] - q[i][j]).abs();
                            assert!(
                                err <= (1e-8 * q[i][j].abs()).max(1e-9 * scale),
                                "g1={g1} g2={g2} t={t} [{i}{j}] {} vs {}",
                                c[i][j],
                                q[i][j]
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn closed_form_and_series_agree_where_both_are_accurate() {
        let p = OscillatorParams::new(1.0, 0.3, 1.0).unwrap();
        let t = 0.8;
        let a = wdsho_cov_closed_form(&p, t);
        let b = lyapunov_series(&p, t);
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(a[i][j], b[i][j], 1e-11), "{:?} vs {:?}", a, b);
            }
        }
        let a = simplesho_cov_closed_form(1.0, 1.0, t);
        let p0 = OscillatorParams::new(1.0, 0.0, 1.0).unwrap();
        let b = lyapunov_series(&p0, t);
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(a[i][j], b[i][j], 1e-11));
            }
        }
    }

    #[test]
    fn wdsho_stationary_limit() {
        let (g1, g2, sigma) = (2.0, 0.5, 1.5);
        let p = OscillatorParams::new(g1, g2, sigma).unwrap();
        let c = wdsho_cov(&p, 200.0 / g2).unwrap();
        assert!((c[0][0] - sigma * sigma / (4.0 * g2 * g1 * g1)).abs() < 1e-6);
        assert!((c[1][1] - sigma * sigma / (4.0 * g2)).abs() < 1e-6);
        assert!(c[0][1].abs() < 1e-6);
    }

    #[test]
    fn zero_step_gives_zero_covariance() {
        let p = OscillatorParams::new(2.0, 0.5, 1.5).unwrap();
        assert_eq!(wdsho_cov(&p, 0.0).unwrap(), ZERO2);
        assert_eq!(simplesho_cov(2.0, 1.0, 0.0).unwrap(), ZERO2);
        let c = wdsho_cov_closed_form(&p, 0.0);
        assert!(max_abs(&c) < 1e-15);
    }

    #[test]
    fn simplesho_cov_at_half_period() {
        let c = simplesho_cov(1.0, 2f64.sqrt(), PI).unwrap();
        assert!(close(c[0][0], PI, 1e-13));
        assert!(close(c[1][1], PI, 1e-13));
        assert!(c[0][1].abs() < 1e-15);
        let late = simplesho_cov(1.0, 1.0, 1e4).unwrap();
        assert!(late[1][1] > 4e3);
    }

    #[test]
    fn undamped_limit_is_removable() {
        let (g1, sigma) = (1.5, 1.0);
        let damped = OscillatorParams::new(g1, 1e-4, sigma).unwrap();
        for &t in &[0.5, 2.0, 7.0] {
            let a = wdsho_cov_closed_form(&damped, t);
            let b = simplesho_cov(g1, sigma, t).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let err = (a[i][j] - b[i][j]).abs();
                    assert!(err <= 1e-3 * max_abs(&b), "t={t} [{i}{j}] {} vs {}", a[i][j], b[i][j]);
                }
            }
        }
        let tiny = OscillatorParams::new(g1, 1e-9, sigma).unwrap();
        assert_eq!(wdsho_cov(&tiny, 2.0).unwrap(), simplesho_cov(g1, sigma, 2.0).unwrap());
    }

    #[test]
    fn tiny_steps_stay_positive_semidefinite() {
        let p = OscillatorParams::new(20.0, 1.0, 1.0).unwrap();
        for &t in &[1e-16, 1e-12, 1e-9, 1e-6, 1e-4] {
            let c = wdsho_cov(&p, t).unwrap();
            assert!(c[0][0] > 0.0 && c[1][1] > 0.0);
            assert!(c[0][0] * c[1][1] - c[0][1] * c[0][1] >= -1e-30);
            assert!(close(c[1][1], t, 1e-2 + 40.0 * t));
            psd_factor(2, &c).unwrap();
        }
    }

    fn compose(tr_s: &Transition, tr_t: &Transition, x: &[f64]) -> GaussianStep {
        let first = tr_s.law(x);
        let mean = tr_t.law(first.mean()).mean;
        let cov = add(
            &matmul(&matmul(&tr_t.phi, &first.cov), &transpose(&tr_t.phi)),
            &tr_t.cov,
        );
        GaussianStep {
            dim: first.dim,
            mean,
            cov,
        }
    }

    #[test]
    fn chapman_kolmogorov_composition() {
        let cases = [
            (ModelId::Tp1Ou, 0.5, 2.0, vec![0.3]),
            (ModelId::Tp3Wpwd, 1.0, -2.0, vec![0.3]),
            (ModelId::Tp2Wdsho, 1.0, 10.0, vec![1.0, 1.0]),
            (ModelId::Tp2Wdsho, 1.0, 2.0, vec![1.0, -0.5]),
            (ModelId::Tp4SwitchedSho, 2.0, 0.1, vec![1.0, 1.0]),
            (ModelId::Tp4SwitchedSho, 2.0, 0.0, vec![1.0, 1.0]),
        ];
        for (model, eta, z, x) in cases {
            for &(s, t) in &[(0.3, 0.7), (1.1, 2.5), (0.01, 0.02)] {
                let direct = Transition::new(model, eta, 1.2, z, s + t).unwrap().law(&x);
                let tr_s = Transition::new(model, eta, 1.2, z, s).unwrap();
                let tr_t = Transition::new(model, eta, 1.2, z, t).unwrap();
                let composed = compose(&tr_s, &tr_t, &x);
                for i in 0..direct.dim {
                    assert!(
                        (direct.mean[i] - composed.mean[i]).abs() <= 1e-10 * direct.mean[i].abs().max(1.0),
                        "{model:?} mean"
                    );
                    for j in 0..direct.dim {
                        let tol = 1e-10 * max_abs(&direct.cov).max(1e-300);
                        assert!((direct.cov[i][j] - composed.cov[i][j]).abs() <= tol, "{model:?} cov");
                    }
                }
            }
        }
    }

    #[test]
    fn psd_factor_reconstructs_and_clamps() {
        let cov = [[2.0, 0.6], [0.6, 0.5]];
        let l = psd_factor(2, &cov).unwrap();
        let back = matmul(&l, &transpose(&l));
        for i in 0..2 {
            for j in 0..2 {
                assert!((back[i][j] - cov[i][j]).abs() < 1e-14);
            }
        }
        let singular = [[1.0, 1.0], [1.0, 1.0 - 1e-15]];
        psd_factor(2, &singular).unwrap();
        assert!(matches!(
            psd_factor(2, &[[1.0, 2.0], [2.0, 1.0]]),
            Err(Error::IndefiniteCovariance { .. })
        ));
        assert!(psd_factor(1, &[[-1.0, 0.0], [0.0, 0.0]]).is_err());
        assert_eq!(psd_factor(2, &ZERO2).unwrap(), ZERO2);
    }

    #[test]
    fn degenerate_step_returns_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let step = GaussianStep::planar([1.5, -2.0], ZERO2);
        assert_eq!(sample_step(&step, &mut rng).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn scalar_sampling_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let step = GaussianStep::scalar(1.0, 2.5);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_step(&step, &mut rng).unwrap()[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 3.0 * (2.5f64 / n as f64).sqrt());
        // Var of the sample variance of a normal: 2σ⁴/(n-1).
        assert!((var - 2.5).abs() < 3.0 * (2.0 * 2.5 * 2.5 / (n - 1) as f64).sqrt());
    }

    #[test]
    fn planar_sampling_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cov = [[1.0, 0.8], [0.8, 2.0]];
        let step = GaussianStep::planar([0.0, 0.0], cov);
        let n = 100_000;
        let mut s = ZERO2;
        for _ in 0..n {
            let d = sample_step(&step, &mut rng).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += d[i] * d[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let est = s[i][j] / n as f64;
                // Var(X_i X_j) = Σ_ii Σ_jj + Σ_ij² for zero-mean Gaussians.
                let se = ((cov[i][i] * cov[j][j] + cov[i][j] * cov[i][j]) / n as f64).sqrt();
                assert!((est - cov[i][j]).abs() < 3.0 * se, "[{i}{j}] {est}");
            }
        }
    }
}
