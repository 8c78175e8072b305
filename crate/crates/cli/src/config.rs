//! Run configuration (TOML) and built-in experiment presets.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pdifmp::abc::{
    Bounds, KernelKind, Prior, SmcConfig, StoppingRule, DEFAULT_MIN_ACCEPTANCE_RATE, DEFAULT_N_POP, DEFAULT_QUANTILE,
};
use pdifmp::distance::{WeightRule, DEFAULT_N_PILOT};
use pdifmp::ergodicity::{DEFAULT_N_REP, DEFAULT_T_LONG, DEFAULT_T_STAR};
use pdifmp::{InitialRegime, ModelId, ModelSpec, ObservationMode, ParamVector, RateKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub observation: ObservationMode,
    pub model: ModelBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorBlock>,
    #[serde(default)]
    pub abc: AbcBlock,
    #[serde(default)]
    pub ergodic: ErgodicBlock,
    /// Observed data on disk; otherwise the observation is simulated from `truth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataBlock>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Overrides of the test problem's default configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub model: ModelId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_regime: Option<InitialRegime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_time_rounding: Option<f64>,
}

impl ModelBlock {
    pub fn of(model: ModelId) -> Self {
        ModelBlock {
            model,
            eta: None,
            rate: None,
            horizon: None,
            step: None,
            x0: None,
            initial_regime: None,
            jump_time_rounding: None,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        let mut s = ModelSpec::preset(self.model);
        if let Some(v) = self.eta {
            s.eta = v;
        }
        if let Some(v) = self.rate {
            s.rate = v;
        }
        if let Some(v) = self.horizon {
            s.horizon = v;
        }
        if let Some(v) = self.step {
            s.step = v;
        }
        if let Some(v) = &self.x0 {
            s.x0 = v.clone();
        }
        if let Some(v) = self.initial_regime {
            s.initial_regime = v;
        }
        if let Some(v) = self.jump_time_rounding {
            s.jump_time_rounding = Some(v);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthBlock {
    pub sigma: f64,
    pub b: f64,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

impl TruthBlock {
    pub fn params(&self) -> ParamVector {
        ParamVector {
            sigma: self.sigma,
            b: self.b,
            lambda: self.lambda,
            eta: self.eta,
        }
    }
}

/// `[lower, upper]` per parameter; omitted entries take the model defaults.
/// Giving `eta` makes it an inferred parameter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbcBlock {
    pub n_pop: usize,
    pub quantile: f64,
    pub max_budget: u64,
    pub min_acceptance_rate: f64,
    pub n_pilot: usize,
    pub weight_rule: WeightRule,
    pub kernel: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_generations: Option<usize>,
}

impl Default for AbcBlock {
    fn default() -> Self {
        AbcBlock {
            n_pop: DEFAULT_N_POP,
            quantile: DEFAULT_QUANTILE,
            max_budget: 10_000,
            min_acceptance_rate: DEFAULT_MIN_ACCEPTANCE_RATE,
            n_pilot: DEFAULT_N_PILOT,
            weight_rule: WeightRule::MedianRatio,
            kernel: KernelKind::Olcm,
            max_generations: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicBlock {
    pub t_long: f64,
    pub t_star: f64,
    pub n_rep: usize,
}

impl Default for ErgodicBlock {
    fn default() -> Self {
        ErgodicBlock {
            t_long: DEFAULT_T_LONG,
            t_star: DEFAULT_T_STAR,
            n_rep: DEFAULT_N_REP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<PathBuf>,
    /// Jump count when no jump-time file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_jumps: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a TOML config, or the `config` echoed in a `manifest.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let cfg = v.get("config").cloned().unwrap_or(v);
            return serde_json::from_value(cfg).with_context(|| format!("parsing {}", path.display()));
        }
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = self.model.spec();
        spec.validate()?;
        Ok(spec)
    }

    pub fn truth_params(&self) -> Result<ParamVector> {
        let Some(t) = self.truth else {
            bail!("this command needs a [truth] block with the parameters to simulate from");
        };
        let p = t.params();
        p.validate_for(&self.model_spec()?)?;
        Ok(p)
    }

    pub fn prior(&self) -> Result<Prior> {
        let mut prior = Prior::default_for(self.model.model);
        let block = self.prior.unwrap_or_default();
        let pick = |b: Option<[f64; 2]>, d: Bounds| b.map_or(d, |[lower, upper]| Bounds { lower, upper });
        prior.sigma = pick(block.sigma, prior.sigma);
        prior.b = pick(block.b, prior.b);
        prior.lambda = pick(block.lambda, prior.lambda);
        prior.eta = block.eta.map(|[lower, upper]| Bounds { lower, upper });
        prior.validate()?;
        if prior.eta.is_some() && !self.model.model.uses_eta() {
            bail!("{:?} has no eta parameter to infer", self.model.model);
        }
        Ok(prior)
    }

    pub fn smc_config(&self) -> Result<SmcConfig> {
        let a = &self.abc;
        if a.n_pop < 2 {
            bail!("abc.n_pop must be at least 2, got {}", a.n_pop);
        }
        if !(a.quantile > 0.0 && a.quantile < 1.0) {
            bail!("abc.quantile must lie in (0, 1), got {}", a.quantile);
        }
        if !(a.min_acceptance_rate > 0.0 && a.min_acceptance_rate <= 1.0) {
            bail!(
                "abc.min_acceptance_rate must lie in (0, 1], got {}",
                a.min_acceptance_rate
            );
        }
        if a.n_pilot < 20 {
            bail!("abc.n_pilot must be at least 20, got {}", a.n_pilot);
        }
        Ok(SmcConfig {
            n_pop: a.n_pop,
            quantile: a.quantile,
            stop: StoppingRule {
                max_budget: a.max_budget,
                min_acceptance_rate: a.min_acceptance_rate,
                max_generations: a.max_generations,
            },
            seed: self.seed,
            kernel: a.kernel,
        })
    }

    /// Checks everything `infer` needs before any simulation starts.
    pub fn validate_for_infer(&self) -> Result<()> {
        self.model_spec()?;
        let prior = self.prior()?;
        self.smc_config()?;
        match (&self.data, self.truth) {
            (Some(_), _) => {}
            (None, Some(t)) => {
                self.truth_params()?;
                if t.eta.is_some() != prior.eta.is_some() {
                    bail!(
                        "truth.eta and prior.eta must be given together (eta is either inferred or fixed by model.eta)"
                    );
                }
            }
            (None, None) => bail!("infer needs either a [data] block or a [truth] block"),
        }
        if let (Some(d), ObservationMode::JumpTimes) = (&self.data, self.observation) {
            if d.jumps.is_none() {
                bail!("observation = \"jump_times\" needs data.jumps");
            }
        }
        Ok(())
    }

    pub fn validate_for_ergodic(&self) -> Result<()> {
        self.truth_params()?;
        let e = &self.ergodic;
        if !(e.t_long > 0.0 && e.t_star > 0.0) {
            bail!("ergodic.t_long and ergodic.t_star must be positive");
        }
        if e.n_rep < 100 {
            bail!("ergodic.n_rep must be at least 100, got {}", e.n_rep);
        }
        Ok(())
    }
}

fn truth(sigma: f64, b: f64, lambda: f64) -> TruthBlock {
    TruthBlock {
        sigma,
        b,
        lambda,
        eta: None,
    }
}

fn base(model: ModelId, t: TruthBlock, max_budget: u64) -> RunConfig {
    RunConfig {
        seed: 1,
        output: default_output(),
        observation: ObservationMode::Default,
        model: ModelBlock::of(model),
        truth: Some(t),
        prior: None,
        abc: AbcBlock {
            max_budget,
            ..AbcBlock::default()
        },
        ergodic: ErgodicBlock::default(),
        data: None,
    }
}

/// Named configurations reproducing each published experiment.
pub const PRESETS: &[&str] = &[
    "tp1-setting1",
    "tp1-setting2",
    "tp1-setting3",
    "tp1-horizon-100",
    "tp1-horizon-500",
    "tp1-horizon-1000",
    "tp2",
    "tp3",
    "tp4",
    "tp1-sigmoid",
    "tp1-reduced-center",
    "tp1-cos",
    "tp1-eta",
    "tp4-eta",
    "tp3-jump-times",
    "tp3-sigma8",
    "tp3-sigmoid",
    "tp3-reduced-center",
    "tp3-cos",
];

pub fn preset(name: &str) -> Result<RunConfig> {
    let tp1 = |t, budget| base(ModelId::Tp1Ou, t, budget);
    let tp3_slope = |sigma: f64, rate: RateKind| {
        let mut c = base(ModelId::Tp3Wpwd, truth(sigma, 2.0, 0.1), 50_000);
        c.observation = ObservationMode::JumpTimes;
        c.model.rate = Some(rate);
        c
    };
    let with_rate = |mut c: RunConfig, rate| {
        c.model.rate = Some(rate);
        c
    };
    let with_horizon = |mut c: RunConfig, horizon| {
        c.model.horizon = Some(horizon);
        c
    };
    let cfg = match name {
        "tp1-setting1" | "tp1-horizon-500" => tp1(truth(1.0, 2.0, 0.1), 10_000),
        "tp1-setting2" => tp1(truth(1.0, 2.0, 0.2), 10_000),
        "tp1-setting3" => tp1(truth(2.0, 4.0, 0.2), 10_000),
        "tp1-horizon-100" => with_horizon(tp1(truth(1.0, 2.0, 0.1), 10_000), 100.0),
        "tp1-horizon-1000" => with_horizon(tp1(truth(1.0, 2.0, 0.1), 10_000), 1000.0),
        "tp2" => base(ModelId::Tp2Wdsho, truth(1.0, 10.0, 0.1), 13_000),
        "tp3" => base(ModelId::Tp3Wpwd, truth(1.0, 2.0, 0.1), 50_000),
        "tp4" => base(ModelId::Tp4SwitchedSho, truth(1.0, 0.1, 0.1), 13_000),
        "tp1-sigmoid" => with_rate(tp1(truth(1.0, 2.0, 0.1), 40_000), RateKind::Sigmoid),
        "tp1-reduced-center" => with_rate(tp1(truth(1.0, 2.0, 0.1), 10_000), RateKind::ReducedCenter),
        "tp1-cos" => with_rate(tp1(truth(1.0, 2.0, 0.1), 15_000), RateKind::Cos),
        "tp1-eta" => {
            let mut c = tp1(
                TruthBlock {
                    eta: Some(1.0),
                    ..truth(1.0, 2.0, 0.1)
                },
                150_000,
            );
            c.prior = Some(PriorBlock {
                eta: Some([0.0, 10.0]),
                ..PriorBlock::default()
            });
            c
        }
        "tp4-eta" => {
            let mut c = base(
                ModelId::Tp4SwitchedSho,
                TruthBlock {
                    eta: Some(20.0),
                    ..truth(1.0, 0.1, 0.1)
                },
                50_000,
            );
            c.prior = Some(PriorBlock {
                eta: Some([2.0, 100.0]),
                ..PriorBlock::default()
            });
            c
        }
        "tp3-jump-times" => tp3_slope(1.0, RateKind::Constant),
        "tp3-sigma8" => tp3_slope(8.0, RateKind::Constant),
        "tp3-sigmoid" => tp3_slope(1.0, RateKind::Sigmoid),
        "tp3-reduced-center" => tp3_slope(1.0, RateKind::ReducedCenter),
        "tp3-cos" => tp3_slope(1.0, RateKind::Cos),
        other => bail!("unknown preset {other:?}; available: {}", PRESETS.join(", ")),
    };
    Ok(cfg)
}
