//! Path construction for the hybrid test problems.
//!
//! Between jumps the continuous component is advanced with the exact flow
//! on the grid `j_k + n·h`, closed by one shorter step that lands exactly
//! on the next jump time. Jump times are exponential for a constant rate
//! and come from thinning a dominating Poisson stream otherwise.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::flows::Transition;
use crate::model::{HybridPath, ModelSpec, ParamVector, RateKind};

/// State-dependent jump rate `Λ(x; λ)` together with its thinning bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFunction {
    pub kind: RateKind,
    pub lambda: f64,
}

impl RateFunction {
    pub fn new(kind: RateKind, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParams(format!("lambda must be positive, got {lambda}")));
        }
        Ok(RateFunction { kind, lambda })
    }

    /// Upper bound of `Λ` over the whole state space.
    pub fn bound(&self) -> f64 {
        match self.kind {
            RateKind::Cos => 2.0 * self.lambda,
            _ => self.lambda,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_rate(self, x)
    }
}

/// `Λ(x; λ)`; two-dimensional models pass their first coordinate.
pub fn eval_rate(rf: &RateFunction, x: f64) -> f64 {
    let l = rf.lambda;
    match rf.kind {
        RateKind::Constant => l,
        RateKind::Sigmoid => l / (1.0 + (-x).exp()),
        RateKind::ReducedCenter => {
            if x.abs() <= 2.0 {
                l / 2.0
            } else {
                l
            }
        }
        RateKind::Cos => l * x.cos() + l,
    }
}

/// Sub-grid of one inter-jump interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGrid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
    pub n_full_steps: usize,
    pub last_step: f64,
}

impl SegmentGrid {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(end > start) || !(step > 0.0) || !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "segment needs start < end and a positive step (start = {start}, end = {end}, h = {step})"
            )));
        }
        let tau = end - start;
        let n_full_steps = (tau / step).floor() as usize;
        let mut last_step = (tau - n_full_steps as f64 * step).max(0.0);
        if last_step <= 1e-9 * step {
            last_step = 0.0;
        }
        Ok(SegmentGrid {
            start,
            end,
            step,
            n_full_steps,
            last_step,
        })
    }

    /// Grid point `n` for `n = 1..=N`, clamped so rounding never overshoots.
    pub fn point(&self, n: usize) -> f64 {
        if n == self.n_full_steps && self.last_step == 0.0 {
            return self.end;
        }
        (self.start + n as f64 * self.step).min(self.end)
    }
}

/// Transition cache for one simulation: full steps depend only on the regime.
struct Flow<'a> {
    model: &'a ModelSpec,
    eta: f64,
    sigma: f64,
    full: Vec<(f64, Transition)>,
}

impl<'a> Flow<'a> {
    fn new(model: &'a ModelSpec, params: &ParamVector) -> Self {
        Flow {
            model,
            eta: model.effective_eta(params),
            sigma: params.sigma,
            full: Vec::with_capacity(2),
        }
    }

    fn transition(&self, z: f64, dt: f64) -> Result<Transition> {
        Transition::new(self.model.model, self.eta, self.sigma, z, dt)
    }

    fn full_step(&mut self, z: f64) -> Result<Transition> {
        if let Some((_, t)) = self.full.iter().find(|(zz, _)| *zz == z) {
            return Ok(*t);
        }
        let t = self.transition(z, self.model.step)?;
        self.full.push((z, t));
        Ok(t)
    }
}

/// Growing path buffer; drops points that would repeat the previous time.
struct PathBuffer {
    dim: usize,
    times: Vec<f64>,
    x: Vec<f64>,
}

impl PathBuffer {
    fn new(x0: &[f64], capacity: usize) -> Self {
        let mut x = Vec::with_capacity(capacity * x0.len());
        x.extend_from_slice(x0);
        let mut times = Vec::with_capacity(capacity);
        times.push(0.0);
        PathBuffer {
            dim: x0.len(),
            times,
            x,
        }
    }

    fn push(&mut self, t: f64, state: &[f64]) {
        if t > *self.times.last().unwrap() {
            self.times.push(t);
            self.x.extend_from_slice(state);
        }
    }

    fn last_state(&self) -> [f64; 2] {
        let n = self.times.len() - 1;
        let mut s = [0.0; 2];
        s[..self.dim].copy_from_slice(&self.x[n * self.dim..(n + 1) * self.dim]);
        s
    }

    fn last_index(&self) -> usize {
        self.times.len() - 1
    }
}

fn run_segment<R: Rng + ?Sized>(
    flow: &mut Flow<'_>,
    grid: &SegmentGrid,
    z: f64,
    state: &mut [f64],
    rng: &mut R,
    mut emit: impl FnMut(f64, &[f64]),
) -> Result<()> {
    let full = flow.full_step(z)?;
    if grid.step != flow.model.step {
        return Err(Error::InvalidArgument("segment step differs from model step".into()));
    }
    for n in 1..=grid.n_full_steps {
        full.apply(state, rng);
        emit(grid.point(n), state);
    }
    flow.transition(z, grid.last_step)?.apply(state, rng);
    emit(grid.end, state);
    Ok(())
}

/// Exact path of the inter-jump SDE on `[j_k, j_k1]` in regime `z_k`.
///
/// Returns the points after the start, ending with the state at `j_k1`.
/// A zero-length closing step is still executed (it is the identity) and
/// reported, so its time repeats the previous grid point.
#[allow(clippy::too_many_arguments)]
pub fn simulate_segment<R: Rng + ?Sized>(
    model: &ModelSpec,
    params: &ParamVector,
    j_k: f64,
    j_k1: f64,
    h: f64,
    x_start: &[f64],
    z_k: f64,
    rng: &mut R,
) -> Result<Vec<(f64, Vec<f64>)>> {
    if x_start.len() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "start state has {} entries, model needs {}",
            x_start.len(),
            model.dim()
        )));
    }
    let spec = ModelSpec {
        step: h,
        ..model.clone()
    };
    let grid = SegmentGrid::new(j_k, j_k1, h)?;
    let mut flow = Flow::new(&spec, params);
    let mut state = [0.0; 2];
    state[..x_start.len()].copy_from_slice(x_start);
    let dim = x_start.len();
    let mut out = Vec::with_capacity(grid.n_full_steps + 1);
    run_segment(&mut flow, &grid, z_k, &mut state[..dim], rng, |t, s| {
        out.push((t, s.to_vec()))
    })?;
    Ok(out)
}

/// Rounds a candidate jump time to the quantum `q`, shifting it one quantum
/// past `prev` when rounding would not move forward.
pub fn round_jump_time(t: f64, q: f64, prev: f64) -> f64 {
    let r = (t / q).round() * q;
    if r <= prev {
        ((prev / q).round() + 1.0) * q
    } else {
        r
    }
}

fn check_inputs(model: &ModelSpec, params: &ParamVector) -> Result<()> {
    model.validate()?;
    params.validate_for(model)
}

struct JumpClock<'a> {
    model: &'a ModelSpec,
    rate: f64,
}

impl JumpClock<'_> {
    fn next<R: Rng + ?Sized>(&self, from: f64, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(Exp1);
        let t = from + e / self.rate;
        match self.model.jump_time_rounding {
            Some(q) => round_jump_time(t, q, from),
            None => t,
        }
    }
}

fn expected_points(model: &ModelSpec, rate: f64) -> usize {
    let n = model.horizon / model.step + 2.0 * rate * model.horizon + 8.0;
    n.min(5e7) as usize
}

/// Constant jump rate: exponential waiting times, every event is a jump.
pub fn simulate_constant_rate<R: Rng + ?Sized>(
    model: &ModelSpec,
    params: &ParamVector,
    rng: &mut R,
) -> Result<HybridPath> {
    check_inputs(model, params)?;
    let b = params.b;
    let horizon = model.horizon;
    let clock = JumpClock {
        model,
        rate: params.lambda,
    };
    let mut flow = Flow::new(model, params);
    let mut buf = PathBuffer::new(&model.x0, expected_points(model, params.lambda));
    let dim = model.dim();
    let mut state = buf.last_state();

    let mut z = model.z0(params);
    let mut z_values = vec![z];
    let mut jump_times = Vec::new();
    let mut jump_indices = Vec::new();
    let mut j_k = 0.0;
    let mut j_next = clock.next(j_k, rng);
    while j_next < horizon {
        let grid = SegmentGrid::new(j_k, j_next, model.step)?;
        run_segment(&mut flow, &grid, z, &mut state[..dim], rng, |t, s| buf.push(t, s))?;
        z = model.next_regime(&state[..dim], z, b)?;
        z_values.push(z);
        jump_times.push(j_next);
        jump_indices.push(buf.last_index());
        j_k = j_next;
        j_next = clock.next(j_k, rng);
    }
    let grid = SegmentGrid::new(j_k, horizon, model.step)?;
    run_segment(&mut flow, &grid, z, &mut state[..dim], rng, |t, s| buf.push(t, s))?;
    let post_horizon_regime = model.next_regime(&state[..dim], z, b)?;

    Ok(HybridPath {
        dim,
        times: buf.times,
        x: buf.x,
        jump_times,
        jump_indices,
        z_values,
        post_horizon_regime,
    })
}

/// State-dependent rate via thinning with the rate function's own bound.
pub fn simulate_thinning<R: Rng + ?Sized>(model: &ModelSpec, params: &ParamVector, rng: &mut R) -> Result<HybridPath> {
    let rf = RateFunction::new(model.rate, params.lambda)?;
    simulate_thinning_with(model, params, rf.bound(), |x| rf.eval(x), rng)
}

/// Thinning with an arbitrary rate `rate(x1)` dominated by `bound`.
///
/// Candidates arrive at rate `bound`; each is accepted with probability
/// `rate(x)/bound` evaluated at the state reached at the candidate time.
/// Rejected candidates keep the regime but still cut the grid.
pub fn simulate_thinning_with<R: Rng + ?Sized>(
    model: &ModelSpec,
    params: &ParamVector,
    bound: f64,
    rate: impl Fn(f64) -> f64,
    rng: &mut R,
) -> Result<HybridPath> {
    check_inputs(model, params)?;
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "thinning bound must be positive, got {bound}"
        )));
    }
    let b = params.b;
    let horizon = model.horizon;
    let clock = JumpClock { model, rate: bound };
    let mut flow = Flow::new(model, params);
    let mut buf = PathBuffer::new(&model.x0, expected_points(model, bound));
    let dim = model.dim();
    let mut state = buf.last_state();

    let mut z = model.z0(params);
    let mut z_values = vec![z];
    let mut jump_times = Vec::new();
    let mut jump_indices = Vec::new();
    let mut j_old = 0.0;
    let mut j_new = clock.next(j_old, rng);
    while j_new < horizon {
        let grid = SegmentGrid::new(j_old, j_new, model.step)?;
        run_segment(&mut flow, &grid, z, &mut state[..dim], rng, |t, s| buf.push(t, s))?;
        let x1 = state[0];
        let lam = rate(x1);
        if !(lam >= 0.0 && lam <= bound) {
            return Err(Error::RateBoundViolated {
                rate: lam,
                bound,
                x: x1,
            });
        }
        let u: f64 = rng.random();
        if u < lam / bound {
            z = model.next_regime(&state[..dim], z, b)?;
            z_values.push(z);
            jump_times.push(j_new);
            jump_indices.push(buf.last_index());
        }
        j_old = j_new;
        j_new = clock.next(j_old, rng);
    }
    let grid = SegmentGrid::new(j_old, horizon, model.step)?;
    run_segment(&mut flow, &grid, z, &mut state[..dim], rng, |t, s| buf.push(t, s))?;
    let post_horizon_regime = model.next_regime(&state[..dim], z, b)?;

    Ok(HybridPath {
        dim,
        times: buf.times,
        x: buf.x,
        jump_times,
        jump_indices,
        z_values,
        post_horizon_regime,
    })
}

/// Simulates a path with the algorithm matching the model's rate kind.
pub fn simulate<R: Rng + ?Sized>(model: &ModelSpec, params: &ParamVector, rng: &mut R) -> Result<HybridPath> {
    match model.rate {
        RateKind::Constant => simulate_constant_rate(model, params, rng),
        _ => simulate_thinning(model, params, rng),
    }
}
