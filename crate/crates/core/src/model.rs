//! Domain types for piecewise diffusion Markov processes: the four test
//! problems, their parameter vectors, simulated paths and the observed
//! datasets that inference works from.
//!
//! Every model here has a binary regime space and a deterministic
//! post-jump map, so the transition kernel reduces to a function of the
//! pre-jump state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four hybrid test problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    /// Ornstein-Uhlenbeck with a switching mean level `z ∈ {-b, b}`.
    Tp1Ou,
    /// Weakly damped oscillator with a switching frequency `z ∈ {2, b}`.
    Tp2Wdsho,
    /// Wiener process with a switching drift `z ∈ {-b, b}`.
    Tp3Wpwd,
    /// Oscillator switching between damping `b` and no damping.
    Tp4SwitchedSho,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [
        ModelId::Tp1Ou,
        ModelId::Tp2Wdsho,
        ModelId::Tp3Wpwd,
        ModelId::Tp4SwitchedSho,
    ];

    /// Dimension of the continuous component.
    pub fn dim(self) -> usize {
        match self {
            ModelId::Tp1Ou | ModelId::Tp3Wpwd => 1,
            ModelId::Tp2Wdsho | ModelId::Tp4SwitchedSho => 2,
        }
    }

    /// Fixed drift parameter used when it is not inferred.
    pub fn default_eta(self) -> f64 {
        match self {
            ModelId::Tp1Ou => 0.5,
            ModelId::Tp2Wdsho => 1.0,
            ModelId::Tp3Wpwd => 1.0,
            ModelId::Tp4SwitchedSho => 2.0,
        }
    }

    pub fn uses_eta(self) -> bool {
        !matches!(self, ModelId::Tp3Wpwd)
    }

    /// The two regime values `[upper, alternate]` once `b` is bound.
    pub fn regime_values(self, b: f64) -> [f64; 2] {
        match self {
            ModelId::Tp1Ou | ModelId::Tp3Wpwd => [b, -b],
            ModelId::Tp2Wdsho => [b, 2.0],
            ModelId::Tp4SwitchedSho => [b, 0.0],
        }
    }
}

/// Jump rate function family. `lambda` is always the inferred rate parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Constant,
    Sigmoid,
    ReducedCenter,
    Cos,
}

/// Which of the two regime values the path starts in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialRegime {
    /// `z0 = b`, the default for every test problem.
    #[default]
    Upper,
    /// `z0 = -b` (TP1/TP3), `2` (TP2) or `0` (TP4).
    Alternate,
}

/// What the observer sees of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// The series and the number of jumps.
    #[default]
    Default,
    /// The series and the exact jump times.
    JumpTimes,
}

/// Configurable characteristic triple of one test problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: ModelId,
    /// Fixed drift parameter; ignored for TP3 and overridden by an inferred `eta`.
    pub eta: f64,
    pub rate: RateKind,
    pub horizon: f64,
    pub step: f64,
    pub x0: Vec<f64>,
    pub initial_regime: InitialRegime,
    pub observe_first_coordinate_only: bool,
    /// Quantum that jump times are rounded to, if any.
    pub jump_time_rounding: Option<f64>,
}

pub const DEFAULT_STEP: f64 = 1e-2;
pub const DEFAULT_JUMP_TIME_ROUNDING: f64 = 1e-3;

impl ModelSpec {
    /// Default configuration of a test problem with a constant jump rate.
    pub fn preset(model: ModelId) -> Self {
        let (x0, horizon, rounding) = match model {
            ModelId::Tp1Ou => (vec![0.0], 500.0, None),
            ModelId::Tp2Wdsho => (vec![1.0, 1.0], 1000.0, Some(DEFAULT_JUMP_TIME_ROUNDING)),
            ModelId::Tp3Wpwd => (vec![0.0], 1000.0, None),
            ModelId::Tp4SwitchedSho => (vec![1.0, 1.0], 5000.0, Some(DEFAULT_JUMP_TIME_ROUNDING)),
        };
        ModelSpec {
            model,
            eta: model.default_eta(),
            rate: RateKind::Constant,
            horizon,
            step: DEFAULT_STEP,
            x0,
            initial_regime: InitialRegime::Upper,
            observe_first_coordinate_only: true,
            jump_time_rounding: rounding,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_rate(mut self, rate: RateKind) -> Self {
        self.rate = rate;
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if self.model.uses_eta() && !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.x0.len() != self.dim() {
            return bad(format!(
                "x0 has {} entries but {:?} has dimension {}",
                self.x0.len(),
                self.model,
                self.dim()
            ));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("x0 must be finite".into());
        }
        if self.dim() == 2 && !self.observe_first_coordinate_only {
            return bad("summaries need a scalar series; two-dimensional models observe X1 only".into());
        }
        match (self.model, self.jump_time_rounding) {
            (ModelId::Tp2Wdsho | ModelId::Tp4SwitchedSho, None) => {
                return bad(format!("{:?} requires jump_time_rounding", self.model));
            }
            (_, Some(q)) if !(q.is_finite() && q > 0.0) => {
                return bad(format!("jump_time_rounding must be positive, got {q}"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Drift parameter in effect for `params`.
    pub fn effective_eta(&self, params: &ParamVector) -> f64 {
        params.eta.unwrap_or(self.eta)
    }

    pub fn z0(&self, params: &ParamVector) -> f64 {
        let [upper, alternate] = self.model.regime_values(params.b);
        match self.initial_regime {
            InitialRegime::Upper => upper,
            InitialRegime::Alternate => alternate,
        }
    }

    /// Post-jump regime given the state at the jump and the current regime.
    pub fn next_regime(&self, x_at_jump: &[f64], z_prev: f64, b: f64) -> Result<f64> {
        match self.model {
            ModelId::Tp1Ou | ModelId::Tp3Wpwd => Ok(transition_tp1_tp3(x_at_jump[0], b)),
            ModelId::Tp2Wdsho => transition_tp2(z_prev, b),
            ModelId::Tp4SwitchedSho => transition_tp4(z_prev, b),
        }
    }
}

/// Inferred parameter vector `(σ, b, λ[, η])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub sigma: f64,
    pub b: f64,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl ParamVector {
    pub fn new(sigma: f64, b: f64, lambda: f64) -> Self {
        ParamVector {
            sigma,
            b,
            lambda,
            eta: None,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    /// Number of coordinates (3, or 4 when `eta` is inferred).
    pub fn len(&self) -> usize {
        if self.eta.is_some() {
            4
        } else {
            3
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.sigma, self.b, self.lambda];
        if let Some(eta) = self.eta {
            v.push(eta);
        }
        v
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        match *values {
            [sigma, b, lambda] => Ok(ParamVector::new(sigma, b, lambda)),
            [sigma, b, lambda, eta] => Ok(ParamVector::new(sigma, b, lambda).with_eta(eta)),
            _ => Err(Error::InvalidArgument(format!(
                "parameter vector needs 3 or 4 entries, got {}",
                values.len()
            ))),
        }
    }

    pub fn names(&self) -> &'static [&'static str] {
        if self.eta.is_some() {
            &["sigma", "b", "lambda", "eta"]
        } else {
            &["sigma", "b", "lambda"]
        }
    }

    /// Checks positivity and the well-posedness constraints of `model`.
    ///
    /// `sigma = 0` is accepted as the deterministic limit of the flows.
    pub fn validate_for(&self, model: &ModelSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return bad(format!("b must be positive, got {}", self.b));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if let Some(eta) = self.eta {
            if !(eta.is_finite() && eta > 0.0) {
                return bad(format!("eta must be positive, got {eta}"));
            }
        }
        let eta = model.effective_eta(self);
        match model.model {
            ModelId::Tp2Wdsho => {
                if self.b <= eta {
                    return bad(format!("TP2 requires b > eta (b = {}, eta = {eta})", self.b));
                }
                if 2.0 <= eta {
                    return bad(format!("TP2 requires eta < 2 for the fixed regime (eta = {eta})"));
                }
            }
            ModelId::Tp4SwitchedSho => {
                if self.b >= eta {
                    return bad(format!("TP4 requires 0 < b < eta (b = {}, eta = {eta})", self.b));
                }
            }
            ModelId::Tp1Ou | ModelId::Tp3Wpwd => {}
        }
        Ok(())
    }
}

/// Mean-level / drift switch of TP1 and TP3.
pub fn transition_tp1_tp3(x_at_jump: f64, b: f64) -> f64 {
    if x_at_jump <= 0.0 {
        b
    } else {
        -b
    }
}

/// Frequency switch of TP2: `b -> 2`, `2 -> b`.
pub fn transition_tp2(z_prev: f64, b: f64) -> Result<f64> {
    if z_prev == b {
        Ok(2.0)
    } else if z_prev == 2.0 {
        Ok(b)
    } else {
        Err(Error::InvalidState {
            z: z_prev,
            expected: [2.0, b],
        })
    }
}

/// Damping switch of TP4: `b -> 0`, `0 -> b`.
pub fn transition_tp4(z_prev: f64, b: f64) -> Result<f64> {
    if z_prev == b {
        Ok(0.0)
    } else if z_prev == 0.0 {
        Ok(b)
    } else {
        Err(Error::InvalidState {
            z: z_prev,
            expected: [0.0, b],
        })
    }
}

/// A simulated trajectory on its adaptive time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPath {
    pub dim: usize,
    /// Strictly increasing, from 0 to the horizon.
    pub times: Vec<f64>,
    /// Row-major states, `times.len() * dim` values.
    pub x: Vec<f64>,
    /// Jump events strictly inside `(0, T)`, no-move jumps included.
    pub jump_times: Vec<f64>,
    /// Index into `times` of each jump time.
    pub jump_indices: Vec<usize>,
    /// Regime on each inter-jump interval, starting with `z0`.
    pub z_values: Vec<f64>,
    /// Regime drawn after the horizon truncation; never observed.
    pub post_horizon_regime: f64,
}

impl HybridPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.x.iter().skip(c).step_by(self.dim).copied().collect()
    }

    /// Regime in effect at grid point `i` (right-continuous at jumps).
    pub fn regime_at(&self, i: usize) -> f64 {
        let k = self.jump_indices.partition_point(|&j| j <= i);
        self.z_values[k]
    }

    pub fn regimes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut k = 0;
        for i in 0..self.len() {
            while k < self.jump_indices.len() && self.jump_indices[k] <= i {
                k += 1;
            }
            out.push(self.z_values[k]);
        }
        out
    }
}

/// The data inference conditions on.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDataset {
    pub times: Vec<f64>,
    /// Observed scalar series (X1 for two-dimensional models).
    pub series: Vec<f64>,
    pub n_jumps: usize,
    pub jump_times: Option<Vec<f64>>,
}

impl ObservedDataset {
    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Extracts what an observer sees of `path`.
pub fn project_observation(path: &HybridPath, mode: ObservationMode) -> ObservedDataset {
    ObservedDataset {
        times: path.times.clone(),
        series: path.column(0),
        n_jumps: path.n_jumps(),
        jump_times: match mode {
            ObservationMode::Default => None,
            ObservationMode::JumpTimes => Some(path.jump_times.clone()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tp1_tp3_switch_uses_closed_boundary() {
        assert_eq!(transition_tp1_tp3(0.0, 2.0), 2.0);
        assert_eq!(transition_tp1_tp3(1.5, 2.0), -2.0);
        assert_eq!(transition_tp1_tp3(-0.01, 3.0), 3.0);
    }

    #[test]
    fn tp2_alternates_and_rejects_foreign_states() {
        assert_eq!(transition_tp2(20.0, 20.0).unwrap(), 2.0);
        assert_eq!(transition_tp2(2.0, 20.0).unwrap(), 20.0);
        assert_eq!(transition_tp2(2.0, 2.0).unwrap(), 2.0);
        assert!(matches!(transition_tp2(5.0, 20.0), Err(Error::InvalidState { .. })));
    }

    #[test]
    fn tp4_alternates_and_rejects_foreign_states() {
        assert_eq!(transition_tp4(0.1, 0.1).unwrap(), 0.0);
        assert_eq!(transition_tp4(0.0, 0.1).unwrap(), 0.1);
        assert!(transition_tp4(0.5, 0.1).is_err());
    }

    #[test]
    fn tp4_precondition_rejects_b_outside_unit_interval_of_eta() {
        let spec = ModelSpec::preset(ModelId::Tp4SwitchedSho);
        assert!(ParamVector::new(1.0, 0.1, 0.1).validate_for(&spec).is_ok());
        assert!(ParamVector::new(1.0, 2.0, 0.1).validate_for(&spec).is_err());
        assert!(ParamVector::new(1.0, 0.0, 0.1).validate_for(&spec).is_err());
    }

    #[test]
    fn tp2_constraint_is_strict_at_the_boundary() {
        let spec = ModelSpec::preset(ModelId::Tp2Wdsho);
        assert!(ParamVector::new(1.0, 1.0, 0.1).validate_for(&spec).is_err());
        assert!(ParamVector::new(1.0, 1.0 + 1e-12, 0.1).validate_for(&spec).is_ok());
        assert!(ParamVector::new(1.0, 10.0, 0.1)
            .with_eta(2.0)
            .validate_for(&spec)
            .is_err());
    }

    #[test]
    fn presets_are_valid_and_match_defaults() {
        for id in ModelId::ALL {
            let spec = ModelSpec::preset(id);
            spec.validate().unwrap();
            assert_eq!(spec.x0.len(), id.dim());
        }
        let tp2 = ModelSpec::preset(ModelId::Tp2Wdsho);
        assert_eq!(tp2.x0, vec![1.0, 1.0]);
        assert_eq!(tp2.z0(&ParamVector::new(1.0, 10.0, 0.1)), 10.0);
        let tp1 = ModelSpec::preset(ModelId::Tp1Ou);
        assert_eq!(tp1.z0(&ParamVector::new(1.0, 2.0, 0.1)), 2.0);
    }

    #[test]
    fn missing_rounding_is_rejected_for_oscillators() {
        let mut spec = ModelSpec::preset(ModelId::Tp4SwitchedSho);
        spec.jump_time_rounding = None;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn inferred_eta_overrides_fixed_value() {
        let spec = ModelSpec::preset(ModelId::Tp1Ou);
        let p = ParamVector::new(1.0, 2.0, 0.1);
        assert_eq!(spec.effective_eta(&p), 0.5);
        assert_eq!(spec.effective_eta(&p.with_eta(1.0)), 1.0);
        assert_eq!(ParamVector::from_slice(&[1.0, 2.0, 0.1, 1.0]).unwrap(), p.with_eta(1.0));
    }

    fn two_dim_path() -> HybridPath {
        HybridPath {
            dim: 2,
            times: vec![0.0, 0.5, 1.0],
            x: vec![1.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            jump_times: vec![0.5],
            jump_indices: vec![1],
            z_values: vec![10.0, 2.0],
            post_horizon_regime: 10.0,
        }
    }

    #[test]
    fn projection_keeps_first_coordinate_only() {
        let obs = project_observation(&two_dim_path(), ObservationMode::Default);
        assert_eq!(obs.series, vec![1.0, 2.0, 4.0]);
        assert_eq!(obs.n_jumps, 1);
        assert!(obs.jump_times.is_none());
    }

    #[test]
    fn projection_in_jump_time_mode_carries_jumps() {
        let path = HybridPath {
            dim: 1,
            times: vec![0.0, 1.0],
            x: vec![0.0, 1.0],
            jump_times: vec![],
            jump_indices: vec![],
            z_values: vec![2.0],
            post_horizon_regime: -2.0,
        };
        let obs = project_observation(&path, ObservationMode::JumpTimes);
        assert_eq!(obs.series, path.x);
        assert_eq!(obs.jump_times, Some(vec![]));
        assert_eq!(obs.n_jumps, 0);
    }

    #[test]
    fn regimes_switch_at_jump_index() {
        let path = two_dim_path();
        assert_eq!(path.regimes(), vec![10.0, 2.0, 2.0]);
        assert_eq!(path.regime_at(0), 10.0);
        assert_eq!(path.regime_at(1), 2.0);
    }
}
