//! Scenario execution: cell expansion over sweep values and seeds,
//! deterministic parallel runs, artifact writing, and bit-exact replay of
//! any recorded cell.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{cinf_truncated_mc, TruncationConfig};
use crate::error::{Error, Result};
use crate::estimators::{lasso, slope, true_mle, truncated_mle, DriftEstimate};
use crate::linalg::{eig_extremes_sym, spectral_norm};
use crate::metrics::{l1_l2_errors, support_report, DEFAULT_ZERO_TOL};
use crate::ou::{
    generate_sparse_stable_drift, simulate_euler, stationary_covariance, stationary_start,
    subsample, DriftMatrix, ObservationSet,
};
use crate::report::{
    estimator_color, read_runs_csv, status_token, summarize, write_runs_csv, write_summary_csv,
    PlotSeries, RunRecord, SummaryRow,
};
use crate::rng::stream_rng;
use crate::scenario::{EstimatorKind, ScenarioConfig, SweepParam, TruncationSpec, TuningSpec};
use crate::tuning::{
    cross_validate, pick_truncation, theoretical_eta, theoretical_lambda, GammaInputs,
    ModelBounds, PenaltyFamily, TheoryInputs,
};
use crate::util::sha256_hex;

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Worker-pool size; 0 uses one worker per available core.
    pub workers: usize,
    /// Added to every configured seed, for disjoint replications.
    pub seed_offset: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 0,
            seed_offset: 0,
        }
    }
}

/// Echo of the run written next to the tables, tying outputs to their
/// exact configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub scenario_hash: String,
    pub seed_offset: u64,
    pub workers: usize,
    pub total_seconds: f64,
    pub runs_csv_sha256: String,
    pub summary_csv_sha256: String,
    pub scenario: ScenarioConfig,
}

#[derive(Clone, Debug)]
pub struct RunOutputs {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub runs_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub manifest_path: PathBuf,
    pub plot_paths: Vec<PathBuf>,
}

/// One (sweep value, seed) unit of work.
#[derive(Clone, Debug)]
struct Cell {
    applied: ScenarioConfig,
    sweep_param: Option<SweepParam>,
    sweep_value: Option<f64>,
    seed: u64,
}

/// Everything the estimators consume, fixed once per cell.
struct CellData {
    drift: DriftMatrix,
    obs: ObservationSet,
    trunc: TruncationConfig,
    /// Present exactly when the tuning mode is theoretical.
    gamma_inputs: Option<GammaInputs>,
}

fn lambda_max(m: &ndarray::Array2<f64>) -> Result<f64> {
    Ok(eig_extremes_sym(m)?.1)
}

fn resolve_truncation(
    cfg: &ScenarioConfig,
    drift: &DriftMatrix,
    obs: &ObservationSet,
) -> Result<TruncationConfig> {
    match &cfg.truncation {
        TruncationSpec::Auto { target_fraction } => pick_truncation(obs, *target_fraction),
        TruncationSpec::Fixed { b, eta } => TruncationConfig::new(*b, *eta),
        TruncationSpec::Theoretical {
            b,
            tail_class,
            delta_exponent,
        } => {
            let model = cfg.model.build(cfg.d)?;
            let c_nu2 = model.cov_brownian() + model.nu2_matrix();
            let bounds = ModelBounds {
                a0_norm: spectral_norm(drift.matrix())?,
                lambda_max_c_nu2: lambda_max(&c_nu2)?,
            };
            // c_star only enters the penalty levels, not the truncation.
            let inputs = TheoryInputs::new(tail_class.to_tail_class(), *delta_exponent, 1.0)?;
            let eta = theoretical_eta(&inputs, cfg.big_t, obs.delta_n(), cfg.d, &bounds)?;
            TruncationConfig::new(*b, eta)
        }
    }
}

fn resolve_gamma_inputs(
    cfg: &ScenarioConfig,
    drift: &DriftMatrix,
    trunc: &TruncationConfig,
    mc_draws: usize,
    rng: &mut crate::rng::SimRng,
) -> Result<GammaInputs> {
    let model = cfg.model.build(cfg.d)?;
    let cinf = stationary_covariance(drift, &model)?;
    let lambda_max_cinf_b = if trunc.b_radius().is_finite() {
        let truncated = cinf_truncated_mc(&cinf, trunc.b_radius(), mc_draws, rng)?;
        lambda_max(&truncated)?
    } else {
        lambda_max(&cinf)?
    };
    let c_nu2 = model.cov_brownian() + model.nu2_matrix();
    Ok(GammaInputs {
        lambda_max_c_nu2: lambda_max(&c_nu2)?,
        lambda_max_cinf_b,
        a0_norm: spectral_norm(drift.matrix())?,
    })
}

/// Draws the cell's randomness in a fixed phase order (drift, start,
/// path, then the tuning oracle's Monte-Carlo draws), so a replayed cell
/// consumes the stream identically no matter which estimator it targets.
fn prepare_cell(cfg: &ScenarioConfig, seed: u64, seed_offset: u64) -> Result<CellData> {
    let mut rng = stream_rng(seed.wrapping_add(seed_offset), 0);
    let drift = generate_sparse_stable_drift(cfg.d, cfg.s, cfg.value_range, &mut rng)?;
    let model = cfg.model.build(cfg.d)?;
    let x0 = stationary_start(&drift, &model, cfg.dt_fine, &mut rng)?;
    let traj = simulate_euler(&drift, &model, &x0, cfg.big_t, cfg.dt_fine, &mut rng)?;
    let obs = subsample(&traj, cfg.n_obs)?;
    let trunc = resolve_truncation(cfg, &drift, &obs)?;
    let gamma_inputs = match &cfg.tuning {
        TuningSpec::Theoretical { mc_draws, .. } => {
            Some(resolve_gamma_inputs(cfg, &drift, &trunc, *mc_draws, &mut rng)?)
        }
        _ => None,
    };
    Ok(CellData {
        drift,
        obs,
        trunc,
        gamma_inputs,
    })
}

fn resolve_lambda(cfg: &ScenarioConfig, data: &CellData, family: PenaltyFamily) -> Result<f64> {
    match &cfg.tuning {
        TuningSpec::Cv { .. } => {
            let cv_cfg = cfg.tuning.cv_config()?.expect("cv mode yields a config");
            let solver = cfg.solver.to_config()?;
            let (best, _) = cross_validate(&data.obs, &data.trunc, family, &cv_cfg, &solver)?;
            Ok(best)
        }
        TuningSpec::Fixed { lambda } => Ok(*lambda),
        TuningSpec::Theoretical { c_star, .. } => {
            let gi = data
                .gamma_inputs
                .as_ref()
                .expect("theoretical tuning prepares gamma inputs");
            theoretical_lambda(
                family,
                data.obs.big_t(),
                data.obs.delta_n(),
                cfg.d,
                cfg.s,
                gi,
                *c_star,
            )
        }
    }
}

fn fit_estimator(
    cfg: &ScenarioConfig,
    data: &CellData,
    kind: EstimatorKind,
) -> Result<(DriftEstimate, Option<f64>)> {
    let solver = cfg.solver.to_config()?;
    match kind {
        EstimatorKind::Lasso => {
            let lambda = resolve_lambda(cfg, data, PenaltyFamily::Lasso)?;
            Ok((lasso(&data.obs, &data.trunc, lambda, &solver)?, Some(lambda)))
        }
        EstimatorKind::Slope => {
            let lambda = resolve_lambda(cfg, data, PenaltyFamily::Slope)?;
            Ok((slope(&data.obs, &data.trunc, lambda, &solver)?, Some(lambda)))
        }
        EstimatorKind::TruncatedMle => Ok((truncated_mle(&data.obs, &data.trunc)?, None)),
        EstimatorKind::TrueMle => Ok((true_mle(&data.obs)?, None)),
    }
}

fn blank_record(hash: &str, cell: &Cell, kind: EstimatorKind, status: String) -> RunRecord {
    RunRecord {
        scenario_hash: hash.to_string(),
        sweep_param: cell
            .sweep_param
            .map(|p| p.as_str().to_string())
            .unwrap_or_else(|| "none".to_string()),
        sweep_value: cell.sweep_value,
        seed: cell.seed,
        estimator: kind,
        lambda: None,
        kept_fraction: None,
        l1_error: None,
        l2_error: None,
        correct: None,
        missed: None,
        spurious: None,
        iters: None,
        status,
        wall_time: 0.0,
    }
}

/// Runs every requested estimator on one cell. Failures become recorded
/// rows, never panics, so sweeps always complete.
fn run_cell(hash: &str, cell: &Cell, seed_offset: u64) -> Vec<RunRecord> {
    let prep_start = Instant::now();
    let data = match prepare_cell(&cell.applied, cell.seed, seed_offset) {
        Ok(data) => data,
        Err(err) => {
            let elapsed = prep_start.elapsed().as_secs_f64();
            let token = status_token(&err);
            return cell
                .applied
                .estimators
                .iter()
                .map(|&kind| {
                    let mut r = blank_record(hash, cell, kind, token.clone());
                    r.wall_time = elapsed;
                    r
                })
                .collect();
        }
    };
    cell.applied
        .estimators
        .iter()
        .map(|&kind| {
            let fit_start = Instant::now();
            let outcome = fit_estimator(&cell.applied, &data, kind).and_then(|(est, lambda)| {
                let (l1, l2) = l1_l2_errors(&est.a_hat, data.drift.matrix())?;
                let support = support_report(&est.a_hat, data.drift.matrix(), DEFAULT_ZERO_TOL)?;
                Ok((est, lambda, l1, l2, support))
            });
            let mut record = match outcome {
                Ok((est, lambda, l1, l2, support)) => {
                    let mut r = blank_record(hash, cell, kind, "ok".to_string());
                    r.lambda = lambda;
                    r.kept_fraction = Some(est.kept_fraction);
                    r.l1_error = Some(l1);
                    r.l2_error = Some(l2);
                    r.correct = Some(support.correct);
                    r.missed = Some(support.missed);
                    r.spurious = Some(support.spurious);
                    r.iters = Some(est.iters_used);
                    r
                }
                Err(err) => blank_record(hash, cell, kind, status_token(&err)),
            };
            record.wall_time = fit_start.elapsed().as_secs_f64();
            record
        })
        .collect()
}

/// Expands the scenario into its cells in canonical order: sweep values
/// in configured order, then seeds in configured order.
fn expand_cells(cfg: &ScenarioConfig) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    match &cfg.sweep {
        Some(sweep) => {
            for &value in &sweep.values {
                let applied = cfg.apply_sweep(sweep.param, value)?;
                for &seed in &cfg.seeds {
                    cells.push(Cell {
                        applied: applied.clone(),
                        sweep_param: Some(sweep.param),
                        sweep_value: Some(value),
                        seed,
                    });
                }
            }
        }
        None => {
            for &seed in &cfg.seeds {
                cells.push(Cell {
                    applied: cfg.clone(),
                    sweep_param: None,
                    sweep_value: None,
                    seed,
                });
            }
        }
    }
    Ok(cells)
}

fn plot_metric(
    cfg: &ScenarioConfig,
    summary: &[SummaryRow],
    mean_of: &dyn Fn(&SummaryRow) -> Option<f64>,
    std_of: &dyn Fn(&SummaryRow) -> Option<f64>,
    title: &str,
    y_label: &str,
) -> String {
    let x_label = cfg
        .sweep
        .as_ref()
        .map(|s| s.param.as_str().to_string())
        .unwrap_or_else(|| "scenario".to_string());
    let series: Vec<PlotSeries> = cfg
        .estimators
        .iter()
        .map(|&kind| {
            let points: Vec<(f64, f64, f64)> = summary
                .iter()
                .filter(|row| row.estimator == kind)
                .filter_map(|row| {
                    let mean = mean_of(row)?;
                    let std = std_of(row).unwrap_or(0.0);
                    Some((row.sweep_value.unwrap_or(0.0), mean, std))
                })
                .collect();
            PlotSeries {
                name: kind.as_str().to_string(),
                color: estimator_color(kind).to_string(),
                points,
            }
        })
        .collect();
    crate::report::render_line_chart(title, &x_label, y_label, &series)
}

/// Runs a validated scenario and writes runs.csv, summary.csv, the SVG
/// charts, and manifest.json under `out_dir`. Output tables are
/// byte-identical across worker counts.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path, opts: &RunOptions) -> Result<RunOutputs> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let cells = expand_cells(cfg)?;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Config(format!("could not build the worker pool: {e}")))?;
    let nested: Vec<Vec<RunRecord>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| run_cell(&hash, cell, opts.seed_offset))
            .collect()
    });
    let records: Vec<RunRecord> = nested.into_iter().flatten().collect();
    let total_seconds = started.elapsed().as_secs_f64();

    let plots_dir = out_dir.join("plots");
    fs::create_dir_all(&plots_dir)?;

    let runs_text = write_runs_csv(&records);
    let runs_csv = out_dir.join("runs.csv");
    fs::write(&runs_csv, runs_text.as_bytes())?;

    let summary = summarize(&records);
    let summary_text = write_summary_csv(&summary);
    let summary_csv = out_dir.join("summary.csv");
    fs::write(&summary_csv, summary_text.as_bytes())?;

    let charts: [(&str, &dyn Fn(&SummaryRow) -> Option<f64>, &dyn Fn(&SummaryRow) -> Option<f64>, &str); 3] = [
        ("l1_error", &|r| r.l1_mean, &|r| r.l1_std, "entrywise L1 error"),
        ("l2_error", &|r| r.l2_mean, &|r| r.l2_std, "entrywise L2 error"),
        (
            "kept_fraction",
            &|r| r.kept_mean,
            &|r| r.kept_std,
            "fraction of windows kept",
        ),
    ];
    let mut plot_paths = Vec::new();
    for (stem, mean_of, std_of, y_label) in charts {
        let title = format!("{} ({})", y_label, cfg.name);
        let svg = plot_metric(cfg, &summary, mean_of, std_of, &title, y_label);
        let path = plots_dir.join(format!("{stem}.svg"));
        fs::write(&path, svg.as_bytes())?;
        plot_paths.push(path);
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario_hash: hash,
        seed_offset: opts.seed_offset,
        workers: opts.workers,
        total_seconds,
        runs_csv_sha256: sha256_hex(runs_text.as_bytes()),
        summary_csv_sha256: sha256_hex(summary_text.as_bytes()),
        scenario: cfg.clone(),
    };
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;

    Ok(RunOutputs {
        records,
        summary,
        runs_csv,
        summary_csv,
        manifest_path,
        plot_paths,
    })
}

/// A replayed cell alongside the recorded numbers it reproduced.
#[derive(Clone, Debug)]
pub struct ReplayOutcome {
    pub estimate: DriftEstimate,
    pub lambda: Option<f64>,
    pub l1_error: f64,
    pub l2_error: f64,
    pub recorded_l1: f64,
    pub recorded_l2: f64,
}

/// Re-executes one recorded (seed, estimator) cell from a run directory
/// and verifies the reproduced errors against the recorded row.
pub fn replay(
    out_dir: &Path,
    seed: u64,
    estimator: EstimatorKind,
    sweep_value: Option<f64>,
) -> Result<ReplayOutcome> {
    let manifest_text = fs::read_to_string(out_dir.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)?;
    let recomputed = manifest.scenario.hash()?;
    if recomputed != manifest.scenario_hash {
        return Err(Error::Integrity(format!(
            "scenario hash mismatch: manifest claims {}, the echoed scenario hashes to {}",
            manifest.scenario_hash, recomputed
        )));
    }

    let cfg = &manifest.scenario;
    let (applied, target_value) = match (&cfg.sweep, sweep_value) {
        (Some(sweep), Some(value)) => {
            if !sweep.values.contains(&value) {
                return Err(Error::Lookup(format!(
                    "sweep value {value} is not in the scenario's grid {:?}",
                    sweep.values
                )));
            }
            (cfg.apply_sweep(sweep.param, value)?, Some(value))
        }
        (Some(sweep), None) => {
            return Err(Error::Lookup(format!(
                "this scenario sweeps {}; pass the sweep value of the cell (one of {:?})",
                sweep.param, sweep.values
            )))
        }
        (None, Some(_)) => {
            return Err(Error::Lookup(
                "this scenario has no sweep; omit the sweep value".into(),
            ))
        }
        (None, None) => (cfg.clone(), None),
    };

    let runs_text = fs::read_to_string(out_dir.join("runs.csv"))?;
    let records = read_runs_csv(&runs_text)?;
    let row = records
        .iter()
        .find(|r| r.seed == seed && r.estimator == estimator && r.sweep_value == target_value)
        .ok_or_else(|| {
            Error::Lookup(format!(
                "no recorded run for seed {seed} and estimator {estimator}"
            ))
        })?;
    if !row.is_ok() {
        return Err(Error::Lookup(format!(
            "the recorded run failed with status {}; nothing to replay",
            row.status
        )));
    }
    let (recorded_l1, recorded_l2) = (
        row.l1_error
            .ok_or_else(|| Error::Integrity("ok row without an l1 value".into()))?,
        row.l2_error
            .ok_or_else(|| Error::Integrity("ok row without an l2 value".into()))?,
    );

    let data = prepare_cell(&applied, seed, manifest.seed_offset)?;
    let (estimate, lambda) = fit_estimator(&applied, &data, estimator)?;
    let (l1, l2) = l1_l2_errors(&estimate.a_hat, data.drift.matrix())?;
    if (l1 - recorded_l1).abs() > 1e-12 || (l2 - recorded_l2).abs() > 1e-12 {
        return Err(Error::Integrity(format!(
            "replay drifted from the record: got (l1 {l1}, l2 {l2}), recorded (l1 {recorded_l1}, l2 {recorded_l2})"
        )));
    }
    Ok(ReplayOutcome {
        estimate,
        lambda,
        l1_error: l1,
        l2_error: l2,
        recorded_l1,
        recorded_l2,
    })
}
