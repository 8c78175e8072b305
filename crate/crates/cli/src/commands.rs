use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pdifmp::abc::{posterior_report, smc_abc, Population, SmcOutcome};
use pdifmp::distance::{calibrate_weights, Calibration};
use pdifmp::ergodicity::{ergodic_check, ErgodicReport};
use pdifmp::model::project_observation;
use pdifmp::rng::{stream, Domain};
use pdifmp::simulate::simulate;
use pdifmp::summaries::{summarize, Slope, SummaryVector};
use pdifmp::synthetic::SyntheticSummarizer;
use pdifmp::{Error, HybridPath, ModelSpec, ObservationMode, ObservedDataset, ParamVector};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::io::{fmt_num, header, read_table, write_json, write_jumps, write_path, CsvOut};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn manifest(cfg: &RunConfig, command: &str, status: &str, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "tool": "pdifmp",
        "version": VERSION,
        "command": command,
        "seed": cfg.seed,
        "status": status,
        "config": cfg,
        "details": extra,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// The observation path for `cfg`, drawn from its own stream.
pub fn simulate_truth(cfg: &RunConfig) -> Result<(ModelSpec, ParamVector, HybridPath)> {
    let model = cfg.model_spec()?;
    let truth = cfg.truth_params()?;
    let mut rng = stream(cfg.seed, Domain::Observation, &[]);
    let path = simulate(&model, &truth, &mut rng)?;
    Ok((model, truth, path))
}

pub struct SimulateOutput {
    pub n_points: usize,
    pub n_jumps: usize,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    let (_, _, path) = simulate_truth(cfg)?;
    ensure_dir(&cfg.output)?;
    write_path(&cfg.output.join("path.csv"), &path)?;
    write_jumps(&cfg.output.join("jumps.csv"), &path)?;
    let out = SimulateOutput {
        n_points: path.len(),
        n_jumps: path.n_jumps(),
    };
    let extra = json!({ "n_points": out.n_points, "n_jumps": out.n_jumps });
    write_json(
        &cfg.output.join("manifest.json"),
        &manifest(cfg, "simulate", "complete", extra),
    )?;
    Ok(out)
}

/// Dataset from a `path.csv` and, optionally, a `jumps.csv`.
///
/// The jump count comes from the jump file when given, else from `n_jumps`,
/// else from the number of regime changes in the path file.
pub fn dataset_from_files(
    path_csv: &Path,
    jumps_csv: Option<&Path>,
    n_jumps: Option<usize>,
    mode: ObservationMode,
) -> Result<ObservedDataset> {
    let table = read_table(path_csv)?;
    let (Some(times), Some(series)) = (table.column("t"), table.column("x1")) else {
        bail!(
            "{}: needs columns t and x1, found {:?}",
            path_csv.display(),
            table.names
        );
    };
    if table.rows() < 2 {
        bail!(
            "{}: needs at least two data rows, found {}",
            path_csv.display(),
            table.rows()
        );
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        bail!("{}: times must be strictly increasing", path_csv.display());
    }
    let jump_times = match jumps_csv {
        Some(p) => {
            let jt = read_table(p)?;
            let Some(t) = jt.column("t") else {
                bail!("{}: needs a column t", p.display());
            };
            Some(t.to_vec())
        }
        None => None,
    };
    let n = match (&jump_times, n_jumps) {
        (Some(j), _) => j.len(),
        (None, Some(n)) => n,
        (None, None) => match table.column("regime") {
            Some(z) => z.windows(2).filter(|w| w[0] != w[1]).count(),
            None => bail!(
                "{}: no jump information (give a jump file, a jump count or a regime column)",
                path_csv.display()
            ),
        },
    };
    if mode == ObservationMode::JumpTimes && jump_times.is_none() {
        bail!("jump-time observation needs a jump file");
    }
    Ok(ObservedDataset {
        times: times.to_vec(),
        series: series.to_vec(),
        n_jumps: n,
        jump_times: if mode == ObservationMode::JumpTimes {
            jump_times
        } else {
            None
        },
    })
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    n_jumps: usize,
    quad_var: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope: Option<Option<f64>>,
    density: &'a pdifmp::summaries::DensityEstimate,
    spectrum: &'a pdifmp::summaries::SpectralEstimate,
}

pub fn summary_json(s: &SummaryVector) -> serde_json::Value {
    let slope = match s.slope {
        Slope::NotObserved => None,
        Slope::Unavailable => Some(None),
        Slope::Value(v) => Some(Some(v)),
    };
    serde_json::to_value(SummaryJson {
        n_jumps: s.n_jumps,
        quad_var: s.quad_var,
        slope,
        density: &s.density,
        spectrum: &s.spectrum,
    })
    .expect("summary serializes")
}

pub fn cmd_summarize(
    path_csv: &Path,
    jumps_csv: Option<&Path>,
    n_jumps: Option<usize>,
    step: f64,
    out: &Path,
) -> Result<SummaryVector> {
    let mode = if jumps_csv.is_some() {
        ObservationMode::JumpTimes
    } else {
        ObservationMode::Default
    };
    let ds = dataset_from_files(path_csv, jumps_csv, n_jumps, mode)?;
    let s = summarize(&ds, step, None)?;
    ensure_dir(out)?;
    write_json(&out.join("summary.json"), &summary_json(&s))?;
    Ok(s)
}

fn observed_dataset(cfg: &RunConfig) -> Result<ObservedDataset> {
    match &cfg.data {
        Some(d) => dataset_from_files(&d.path, d.jumps.as_deref(), d.n_jumps, cfg.observation),
        None => {
            let (_, _, path) = simulate_truth(cfg)?;
            Ok(project_observation(&path, cfg.observation))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InferStatus {
    Complete,
    BudgetExhausted,
}

pub struct InferOutput {
    pub status: InferStatus,
    pub calibration: Calibration,
    pub outcome: Option<SmcOutcome>,
}

fn write_population_rows(out: &mut CsvOut, pop: &Population, prefix: &[String]) -> Result<()> {
    for p in &pop.particles {
        let mut row = prefix.to_vec();
        row.extend(p.theta.to_vec().into_iter().map(fmt_num));
        row.push(fmt_num(p.weight));
        row.push(fmt_num(p.distance));
        out.row(&row)?;
    }
    Ok(())
}

fn write_infer_outputs(dir: &Path, outcome: &SmcOutcome) -> Result<()> {
    let names = &outcome.trace.names;
    let mut cols: Vec<String> = names.clone();
    cols.extend(header(&["weight", "distance"]));
    let mut post = CsvOut::create(&dir.join("posterior.csv"), &cols)?;
    write_population_rows(&mut post, &outcome.population, &[])?;
    post.finish()?;

    let mut cols = header(&["generation", "threshold"]);
    cols.extend(names.iter().cloned());
    cols.extend(header(&["weight", "distance"]));
    let mut pops = CsvOut::create(&dir.join("populations.csv"), &cols)?;
    for pop in &outcome.history {
        write_population_rows(&mut pops, pop, &[pop.generation.to_string(), fmt_num(pop.threshold)])?;
    }
    pops.finish()?;

    let mut cols = header(&["generation", "budget", "threshold"]);
    for n in names {
        cols.extend(["q05", "q50", "q95"].map(|q| format!("{n}_{q}")));
    }
    let mut trace = CsvOut::create(&dir.join("ci_trace.csv"), &cols)?;
    for c in &outcome.trace.checkpoints {
        let mut row = vec![
            c.generation.to_string(),
            c.budget_used.to_string(),
            fmt_num(c.threshold),
        ];
        row.extend(c.percentiles.iter().flat_map(|p| p.map(fmt_num)));
        trace.row(&row)?;
    }
    trace.finish()
}

pub fn cmd_infer(cfg: &RunConfig) -> Result<InferOutput> {
    cfg.validate_for_infer()?;
    let model = cfg.model_spec()?;
    let prior = cfg.prior()?;
    let smc = cfg.smc_config()?;

    let observed = observed_dataset(cfg)?;
    let obs = summarize(&observed, model.step, None).context("summarizing the observed dataset")?;
    let summarizer = SyntheticSummarizer::new(model, cfg.observation, &obs)?;
    let calibration = calibrate_weights(
        &obs,
        &summarizer,
        &prior,
        cfg.abc.n_pilot,
        cfg.seed,
        cfg.abc.weight_rule,
    )?;

    ensure_dir(&cfg.output)?;
    write_json(
        &cfg.output.join("weights.json"),
        &json!({
            "weights": calibration.weights,
            "rule": calibration.rule,
            "pilot_medians": calibration.medians,
            "n_pilot": cfg.abc.n_pilot,
            "pilot_simulations": calibration.simulations,
        }),
    )?;

    let base = json!({
        "observed_n_jumps": observed.n_jumps,
        "observed_points": observed.series.len(),
        "pilot_simulations": calibration.simulations,
    });
    match smc_abc(&obs, &summarizer, &prior, &calibration.weights, &smc) {
        Ok(outcome) => {
            write_infer_outputs(&cfg.output, &outcome)?;
            let report = posterior_report(&outcome.population);
            let summary: Vec<_> = report
                .iter()
                .map(|r| json!({ "name": r.name, "median": r.median, "ci90": [r.ci_low, r.ci_high] }))
                .collect();
            let mut extra = base;
            extra["stop_reason"] = json!(outcome.stop_reason);
            extra["generations"] = json!(outcome.history.len());
            extra["budget_used"] = json!(outcome.population.budget_used);
            extra["total_simulations"] = json!(outcome.total_simulations);
            extra["final_threshold"] = json!(outcome.population.threshold);
            extra["posterior"] = json!(summary);
            write_json(
                &cfg.output.join("manifest.json"),
                &manifest(cfg, "infer", "complete", extra),
            )?;
            Ok(InferOutput {
                status: InferStatus::Complete,
                calibration,
                outcome: Some(outcome),
            })
        }
        Err(Error::BudgetExhausted { budget, accepted }) => {
            let mut extra = base;
            extra["budget"] = json!(budget);
            extra["accepted"] = json!(accepted);
            write_json(
                &cfg.output.join("manifest.json"),
                &manifest(cfg, "infer", "budget_exhausted", extra),
            )?;
            Ok(InferOutput {
                status: InferStatus::BudgetExhausted,
                calibration,
                outcome: None,
            })
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_ergodic(cfg: &RunConfig) -> Result<ErgodicReport> {
    cfg.validate_for_ergodic()?;
    let model = cfg.model_spec()?;
    let truth = cfg.truth_params()?;
    let e = cfg.ergodic;
    let report = ergodic_check(&model, &truth, e.t_long, e.t_star, e.n_rep, cfg.seed)?;
    ensure_dir(&cfg.output)?;
    let mut out = CsvOut::create(
        &cfg.output.join("densities.csv"),
        &header(&["x", "time_average", "ensemble"]),
    )?;
    for i in 0..report.time_avg_density.grid.len() {
        out.nums(&[
            report.time_avg_density.grid[i],
            report.time_avg_density.values[i],
            report.ensemble_density.values[i],
        ])?;
    }
    out.finish()?;
    let body = json!({
        "l1_gap": report.l1_gap,
        "t_long": report.t_long,
        "t_star": report.t_star,
        "n_replicates": report.n_replicates,
        "bandwidth_time_average": report.time_avg_density.bandwidth,
        "bandwidth_ensemble": report.ensemble_density.bandwidth,
    });
    write_json(&cfg.output.join("report.json"), &body)?;
    write_json(
        &cfg.output.join("manifest.json"),
        &manifest(cfg, "ergodic", "complete", body),
    )?;
    Ok(report)
}

/// Config from a file or preset, with command-line overrides applied.
pub fn resolve_config(
    config: Option<&Path>,
    preset: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<RunConfig> {
    let mut cfg = match (config, preset) {
        (Some(_), Some(_)) => bail!("give either --config or --preset, not both"),
        (Some(p), None) => RunConfig::load(p)?,
        (None, Some(name)) => crate::config::preset(name)?,
        (None, None) => bail!("give --config PATH or --preset NAME"),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output = o;
    }
    Ok(cfg)
}
