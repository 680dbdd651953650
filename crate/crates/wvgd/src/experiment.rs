//! The experiment harness behind the `wvgd` binary: protocol execution,
//! deterministic result rendering, and the validation suite.

use crate::config::{ExperimentConfig, ExperimentKind, OptimizerConfig};
use crate::cost::SquaredEuclidean;
use crate::dynamics::{self, TrajectoryRow, WvgdState};
use crate::ensemble::ParticleEnsemble;
use crate::error::{Result, WvgdError};
use crate::metrics::{fit_kde_bandwidth, kde_density, l2_error, wvgd_density, Grid};
use crate::model::TargetModel;
use crate::oracle::{self, Quadrature1D};
use crate::rng::RngStream;
use crate::svgd::{self, SvgdState};
use crate::targets::{
    dataset_from_rows, make_synthetic_quasiperiodic, sample_random_mixture, synthetic_rows,
    DatasetName, GaussianMixtureTarget, GpHyperTarget,
};
use crate::tessellation::{Tessellation, WeightEstimate};
use crate::varfit::pelbo;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::path::Path;
use std::time::Instant;

/// A fitted run: final state plus the high-sample weight estimate used for
/// scoring.
pub struct FittedWvgd {
    pub state: WvgdState,
    pub weights: WeightEstimate,
    pub trajectory: Vec<TrajectoryRow>,
}

/// Runs the full WVGD schedule: the coupled loop, a component-only polish
/// phase at fixed particles, and a final high-sample weight estimate.
pub fn fit_wvgd(
    target: &dyn TargetModel,
    init_positions: Vec<Vec<f64>>,
    opt: &OptimizerConfig,
    rng: &RngStream,
) -> Result<FittedWvgd> {
    let cost = SquaredEuclidean;
    let ensemble = ParticleEnsemble::uniform(init_positions)?;
    let mut state = WvgdState::new(
        ensemble,
        opt.lambda,
        Some(opt.effective_tau()),
        opt.inner_lr,
        opt.samples_per_step,
    );
    state.weight_refresh_every = opt.weight_refresh_every;
    state.weight_samples = opt.weight_samples;
    let (mut state, trajectory) =
        dynamics::run(state, target, &cost, opt.n_steps, &rng.substream(0), None)?;

    // Components keep fitting against the settled cells, continuing the
    // learning-rate schedule.
    let polish_rng = rng.substream(1);
    let tessellation = Tessellation::new(&state.ensemble, &cost);
    let tau = opt.effective_tau();
    let mut components = state.components.clone();
    for k in 0..opt.polish_steps {
        let lr = opt.inner_lr / (1.0 + (opt.n_steps + k) as f64 / tau);
        let step_rng = polish_rng.substream(k as u64);
        for component in components.iter_mut() {
            let mut rng_j = step_rng.substream(component.cell_index as u64);
            let batch = component.sample(&tessellation, opt.samples_per_step, &mut rng_j)?;
            let grad = component.kl_gradient_from_batch(&batch, target);
            *component = component
                .step(&grad, lr)?
                .with_log_z(batch.log_z_estimate());
        }
    }
    state.components = components;

    let weights = {
        let tessellation = Tessellation::new(&state.ensemble, &cost);
        tessellation.estimate_weights(
            target,
            &state.components,
            opt.final_weight_samples,
            &rng.substream(2),
        )?
    };
    state.ensemble = state.ensemble.with_weights(weights.weights.clone())?;
    state.weights = weights.clone();
    Ok(FittedWvgd {
        state,
        weights,
        trajectory,
    })
}

// ---------------------------------------------------------------------
// Mixture comparison
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MixtureTrialRow {
    pub config_hash: String,
    pub seed: u64,
    pub rep: usize,
    pub n_particles: usize,
    pub method: String,
    pub status: String,
    pub l2_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Timing {
    pub key: String,
    pub runtime_ms: u128,
}

pub struct MixtureCompareOutput {
    pub rows: Vec<MixtureTrialRow>,
    pub timings: Vec<Timing>,
    pub trajectories: Vec<(String, Vec<TrajectoryRow>, usize)>,
}

/// One repetition of the comparison on a fresh random mixture: WVGD with n
/// particles against SVGD with `multiplier * n`, both scored in squared
/// error against the true density.
fn mixture_trial(
    config: &ExperimentConfig,
    hash: &str,
    seed: u64,
    rep: usize,
    n: usize,
) -> (Vec<MixtureTrialRow>, Vec<Timing>, Vec<(String, Vec<TrajectoryRow>, usize)>) {
    let trial_rng = RngStream::new(seed).substream(rep as u64).substream(n as u64);
    let target = sample_random_mixture(&mut trial_rng.substream(0), config.mixture.location_std);
    let (lo, hi) = target.window();
    let grid = Grid::scoring(lo, hi);
    let density = |z: f64| target.density(z);
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut trajectories = Vec::new();

    let started = Instant::now();
    let wvgd_result = (|| -> Result<(f64, Vec<TrajectoryRow>)> {
        let quad = Quadrature1D::new(lo, hi, 4097);
        let init: Vec<Vec<f64>> = oracle::quantile_init(&density, n, &quad)
            .into_iter()
            .map(|z| vec![z])
            .collect();
        let fit = fit_wvgd(&target, init, &config.optimizer, &trial_rng.substream(1))?;
        let err = l2_error(&|z| wvgd_density(&fit.state, &fit.weights, z), &density, &grid);
        Ok((err, fit.trajectory))
    })();
    timings.push(Timing {
        key: format!("{seed},{rep},{n},wvgd"),
        runtime_ms: started.elapsed().as_millis(),
    });
    match wvgd_result {
        Ok((err, trajectory)) => {
            rows.push(MixtureTrialRow {
                config_hash: hash.into(),
                seed,
                rep,
                n_particles: n,
                method: "wvgd".into(),
                status: "ok".into(),
                l2_error: Some(err),
            });
            if config.save_trajectories {
                trajectories.push((format!("trajectory_wvgd_{seed}_{rep}_{n}.csv"), trajectory, 1));
            }
        }
        Err(e) => rows.push(MixtureTrialRow {
            config_hash: hash.into(),
            seed,
            rep,
            n_particles: n,
            method: "wvgd".into(),
            status: e.to_string(),
            l2_error: None,
        }),
    }

    let started = Instant::now();
    let svgd_result = (|| -> Result<f64> {
        let m = config.svgd_particle_multiplier * n;
        let mut init_rng = trial_rng.substream(2);
        let particles: Vec<Vec<f64>> = (0..m)
            .map(|_| vec![2.0 * init_rng.standard_normal()])
            .collect();
        let mut state = SvgdState::new(particles, config.optimizer.svgd_lr);
        state.tau = Some(config.optimizer.effective_tau());
        let state = svgd::run(state, &target, config.optimizer.n_steps)?;
        let flat: Vec<f64> = state.particles.iter().map(|p| p[0]).collect();
        let bw = fit_kde_bandwidth(&flat, &density, &grid);
        Ok(l2_error(&|z| kde_density(&flat, bw, z), &density, &grid))
    })();
    timings.push(Timing {
        key: format!("{seed},{rep},{n},svgd"),
        runtime_ms: started.elapsed().as_millis(),
    });
    match svgd_result {
        Ok(err) => rows.push(MixtureTrialRow {
            config_hash: hash.into(),
            seed,
            rep,
            n_particles: n,
            method: "svgd".into(),
            status: "ok".into(),
            l2_error: Some(err),
        }),
        Err(e) => rows.push(MixtureTrialRow {
            config_hash: hash.into(),
            seed,
            rep,
            n_particles: n,
            method: "svgd".into(),
            status: e.to_string(),
            l2_error: None,
        }),
    }
    (rows, timings, trajectories)
}

pub fn run_mixture_compare(config: &ExperimentConfig) -> Result<MixtureCompareOutput> {
    let hash = config.hash();
    let mut specs = Vec::new();
    for &seed in &config.seeds {
        for rep in 0..config.n_repetitions {
            for &n in &config.particle_counts {
                specs.push((seed, rep, n));
            }
        }
    }
    let outputs: Vec<_> = specs
        .par_iter()
        .map(|&(seed, rep, n)| mixture_trial(config, &hash, seed, rep, n))
        .collect();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut trajectories = Vec::new();
    for (r, t, tr) in outputs {
        rows.extend(r);
        timings.extend(t);
        trajectories.extend(tr);
    }
    rows.sort_by(|a, b| {
        (a.seed, a.rep, a.n_particles, &a.method).cmp(&(b.seed, b.rep, b.n_particles, &b.method))
    });
    timings.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(MixtureCompareOutput {
        rows,
        timings,
        trajectories,
    })
}

/// Median and interquartile range of each (n_particles, method) cell.
pub fn mixture_summary(rows: &[MixtureTrialRow]) -> serde_json::Value {
    let mut cells = Vec::new();
    let mut keys: Vec<(usize, String)> = rows
        .iter()
        .map(|r| (r.n_particles, r.method.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    for (n, method) in keys {
        let mut errors: Vec<f64> = rows
            .iter()
            .filter(|r| r.n_particles == n && r.method == method && r.l2_error.is_some())
            .map(|r| r.l2_error.unwrap())
            .collect();
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if errors.is_empty() {
            continue;
        }
        cells.push(json!({
            "n_particles": n,
            "method": method,
            "n_ok": errors.len(),
            "median_l2": percentile(&errors, 0.5),
            "q25_l2": percentile(&errors, 0.25),
            "q75_l2": percentile(&errors, 0.75),
        }));
    }
    json!({ "cells": cells })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

// ---------------------------------------------------------------------
// Logistic-regression PELBO
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct PelboTrialRow {
    pub config_hash: String,
    pub seed: u64,
    pub dataset: String,
    pub data_source: String,
    pub rep: usize,
    pub n_particles: usize,
    pub status: String,
    pub pelbo: Option<f64>,
    pub pelbo_se: Option<f64>,
}

pub struct LogregPelboOutput {
    pub rows: Vec<PelboTrialRow>,
    pub timings: Vec<Timing>,
}

/// Loads the named dataset's raw rows from the configured directory when a
/// CSV exists there, otherwise generates the seeded synthetic stand-in.
fn resolve_dataset_rows(
    name: DatasetName,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, String)> {
    if let Some(dir) = config.data_dir() {
        let path = dir.join(format!("{name}.csv"));
        if path.exists() {
            // Route through load_dataset for validation, but keep raw rows
            // so each repetition can subsample independently.
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(&path)?;
            let mut rows = Vec::new();
            for (i, record) in reader.records().enumerate() {
                let record = record?;
                let mut row = Vec::with_capacity(record.len());
                for (c, field) in record.iter().enumerate() {
                    row.push(field.trim().parse().map_err(|_| {
                        WvgdError::Dataset(format!(
                            "non-numeric cell at row {i}, column {c} of {}",
                            path.display()
                        ))
                    })?);
                }
                rows.push(row);
            }
            return Ok((rows, format!("file:{}", path.display())));
        }
    }
    let mut rng = RngStream::new(seed).substream(dataset_stream_id(name));
    Ok((synthetic_rows(name, &mut rng), "synthetic".into()))
}

fn dataset_stream_id(name: DatasetName) -> u64 {
    match name {
        DatasetName::Iris => 0xDA7A_0000,
        DatasetName::Boston => 0xDA7A_0001,
        DatasetName::Cancer => 0xDA7A_0002,
        DatasetName::Diabetes => 0xDA7A_0003,
    }
}

pub fn run_logreg_pelbo(config: &ExperimentConfig) -> Result<LogregPelboOutput> {
    let hash = config.hash();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for &seed in &config.seeds {
        for &name in &config.dataset.names {
            let (data, source) = resolve_dataset_rows(name, config, seed)?;
            let root = RngStream::new(seed).substream(dataset_stream_id(name) ^ 0x5EED);
            // Each repetition fixes one subsample shared by all particle
            // counts, so the counts are compared on identical data.
            let specs: Vec<(usize, usize)> = (0..config.n_repetitions)
                .flat_map(|rep| config.particle_counts.iter().map(move |&n| (rep, n)))
                .collect();
            let outputs: Vec<_> = specs
                .par_iter()
                .map(|&(rep, n)| {
                    let started = Instant::now();
                    let row = pelbo_trial(
                        config, &hash, seed, name, &source, &data, &root, rep, n,
                    );
                    let timing = Timing {
                        key: format!("{seed},{name},{rep},{n}"),
                        runtime_ms: started.elapsed().as_millis(),
                    };
                    (row, timing)
                })
                .collect();
            for (row, timing) in outputs {
                rows.push(row);
                timings.push(timing);
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.seed, &a.dataset, a.rep, a.n_particles).cmp(&(b.seed, &b.dataset, b.rep, b.n_particles))
    });
    timings.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(LogregPelboOutput { rows, timings })
}

#[allow(clippy::too_many_arguments)]
fn pelbo_trial(
    config: &ExperimentConfig,
    hash: &str,
    seed: u64,
    name: DatasetName,
    source: &str,
    data: &[Vec<f64>],
    root: &RngStream,
    rep: usize,
    n: usize,
) -> PelboTrialRow {
    let make_row = |status: String, value: Option<(f64, f64)>| PelboTrialRow {
        config_hash: hash.into(),
        seed,
        dataset: name.to_string(),
        data_source: source.into(),
        rep,
        n_particles: n,
        status,
        pelbo: value.map(|v| v.0),
        pelbo_se: value.map(|v| v.1),
    };
    let result = (|| -> Result<(f64, f64)> {
        let mut subsample_rng = root.substream(rep as u64);
        let target = dataset_from_rows(name, data.to_vec(), config.dataset.subset_n, &mut subsample_rng)?;
        let trial_rng = root.substream(rep as u64).substream(n as u64 + 1);
        let mut init_rng = trial_rng.substream(0);
        let init: Vec<Vec<f64>> = (0..n)
            .map(|_| init_rng.standard_normal_vec(target.dim()))
            .collect();
        let fit = fit_wvgd(&target, init, &config.optimizer, &trial_rng.substream(1))?;
        let cost = SquaredEuclidean;
        let tessellation = Tessellation::new(&fit.state.ensemble, &cost);
        pelbo(
            &fit.state.components,
            &tessellation,
            &target,
            &fit.weights,
            config.optimizer.pelbo_samples,
            &trial_rng.substream(2),
        )
    })();
    match result {
        Ok((value, se)) => make_row("ok".into(), Some((value, se))),
        Err(e) => make_row(e.to_string(), None),
    }
}

/// Mean +- standard error of the mean for each (dataset, n_particles) cell.
pub fn pelbo_summary(rows: &[PelboTrialRow]) -> serde_json::Value {
    let mut keys: Vec<(String, usize)> = rows
        .iter()
        .map(|r| (r.dataset.clone(), r.n_particles))
        .collect();
    keys.sort();
    keys.dedup();
    let mut cells = Vec::new();
    for (dataset, n) in keys {
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| r.dataset == dataset && r.n_particles == n && r.pelbo.is_some())
            .map(|r| r.pelbo.unwrap())
            .collect();
        if values.is_empty() {
            continue;
        }
        let (mean, sem) = mean_and_sem(&values);
        cells.push(json!({
            "dataset": dataset,
            "n_particles": n,
            "n_ok": values.len(),
            "mean_pelbo": mean,
            "sem": sem,
        }));
    }
    json!({ "cells": cells })
}

pub fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------
// GP partition
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GpGridRow {
    pub config_hash: String,
    pub seed: u64,
    pub grid_i: usize,
    pub grid_j: usize,
    pub log_f: f64,
    pub log_b: f64,
    pub cell: usize,
}

pub struct GpPartitionOutput {
    pub rows: Vec<GpGridRow>,
    pub particles: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub timings: Vec<Timing>,
}

fn resolve_gp_target(config: &ExperimentConfig, seed: u64) -> Result<(GpHyperTarget, String)> {
    if let Some(dir) = config.data_dir() {
        let path = dir.join("gp.csv");
        if path.exists() {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(&path)?;
            let mut times = Vec::new();
            let mut obs = Vec::new();
            for record in reader.records() {
                let record = record?;
                if record.len() < 2 {
                    return Err(WvgdError::Dataset("gp.csv needs two columns".into()));
                }
                times.push(record[0].trim().parse().map_err(|_| {
                    WvgdError::Dataset("non-numeric time in gp.csv".into())
                })?);
                obs.push(record[1].trim().parse().map_err(|_| {
                    WvgdError::Dataset("non-numeric observation in gp.csv".into())
                })?);
            }
            let mut target = GpHyperTarget::new(times, obs, config.gp.exponent)?;
            target.exponent = config.gp.exponent;
            return Ok((target, format!("file:{}", path.display())));
        }
    }
    let mut rng = RngStream::new(seed).substream(0x69_70);
    let mut target = make_synthetic_quasiperiodic(config.gp.n_points, &mut rng);
    target.exponent = config.gp.exponent;
    Ok((target, "synthetic".into()))
}

pub fn run_gp_partition(config: &ExperimentConfig) -> Result<GpPartitionOutput> {
    let hash = config.hash();
    let seed = config.seeds[0];
    let started = Instant::now();
    let (target, _source) = resolve_gp_target(config, seed)?;
    let root = RngStream::new(seed).substream(0x6F_70);
    let mut init_rng = root.substream(0);
    let init: Vec<Vec<f64>> = (0..config.gp.n_particles)
        .map(|_| init_rng.standard_normal_vec(4))
        .collect();
    let fit = fit_wvgd(&target, init, &config.optimizer, &root.substream(1))?;
    let cost = SquaredEuclidean;
    let tessellation = Tessellation::new(&fit.state.ensemble, &cost);

    // Slice over (log f, log B) at the particle-averaged values of the
    // remaining coordinates.
    let n_particles = fit.state.ensemble.len();
    let mean_coord = |k: usize| -> f64 {
        (0..n_particles)
            .map(|j| fit.state.ensemble.position(j)[k])
            .sum::<f64>()
            / n_particles as f64
    };
    let (log_a, log_s) = (mean_coord(0), mean_coord(2));
    let axis = |k: usize| -> (f64, f64) {
        let lo = (0..n_particles)
            .map(|j| fit.state.ensemble.position(j)[k])
            .fold(f64::INFINITY, f64::min);
        let hi = (0..n_particles)
            .map(|j| fit.state.ensemble.position(j)[k])
            .fold(f64::NEG_INFINITY, f64::max);
        (lo - 2.5, hi + 2.5)
    };
    let (f_lo, f_hi) = axis(1);
    let (b_lo, b_hi) = axis(3);
    let g = config.gp.grid_size;
    let mut rows = Vec::with_capacity(g * g);
    for i in 0..g {
        let log_f = f_lo + (f_hi - f_lo) * i as f64 / (g - 1) as f64;
        for j in 0..g {
            let log_b = b_lo + (b_hi - b_lo) * j as f64 / (g - 1) as f64;
            let cell = tessellation.assign_cell(&[log_a, log_f, log_s, log_b]);
            rows.push(GpGridRow {
                config_hash: hash.clone(),
                seed,
                grid_i: i,
                grid_j: j,
                log_f,
                log_b,
                cell,
            });
        }
    }
    let timings = vec![Timing {
        key: format!("{seed},gp_partition"),
        runtime_ms: started.elapsed().as_millis(),
    }];
    Ok(GpPartitionOutput {
        rows,
        particles: fit.state.ensemble.positions().to_vec(),
        weights: fit.weights.weights.clone(),
        timings,
    })
}

// ---------------------------------------------------------------------
// Rendering and persistence
// ---------------------------------------------------------------------

fn render_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| WvgdError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 csv"))
}

fn render_timings(timings: &[Timing]) -> String {
    let mut out = String::from("key,runtime_ms\n");
    for t in timings {
        out.push_str(&format!("\"{}\",{}\n", t.key, t.runtime_ms));
    }
    out
}

/// Deterministic file payloads for one experiment run. `timings.csv` is the
/// only file whose bytes vary between runs.
pub struct RenderedOutput {
    pub files: Vec<(String, String)>,
    pub timings: String,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RenderedOutput> {
    let hash = config.hash();
    let metadata = json!({
        "config_hash": hash,
        "seeds": config.seeds,
        "config": config,
        "notes": {
            "bandwidth_log_base": "natural",
            "iris_binarization": "first class vs rest",
            "gp_kernel_exponent": format!("{:?}", config.gp.exponent),
            "runtimes": "timings.csv is excluded from the determinism contract",
        },
    });
    let mut files = Vec::new();
    let timings;
    match config.experiment {
        ExperimentKind::MixtureCompare => {
            let out = run_mixture_compare(config)?;
            files.push(("results.csv".into(), render_csv(&out.rows)?));
            files.push((
                "summary.json".into(),
                serde_json::to_string_pretty(&json!({
                    "config_hash": hash,
                    "summary": mixture_summary(&out.rows),
                }))? + "\n",
            ));
            for (name, trajectory, dim) in &out.trajectories {
                let mut buf = Vec::new();
                dynamics::write_trajectory_csv(&mut buf, trajectory, *dim)?;
                files.push((name.clone(), String::from_utf8(buf).expect("utf-8 csv")));
            }
            timings = render_timings(&out.timings);
        }
        ExperimentKind::LogregPelbo => {
            let out = run_logreg_pelbo(config)?;
            files.push(("results.csv".into(), render_csv(&out.rows)?));
            files.push((
                "summary.json".into(),
                serde_json::to_string_pretty(&json!({
                    "config_hash": hash,
                    "summary": pelbo_summary(&out.rows),
                }))? + "\n",
            ));
            timings = render_timings(&out.timings);
        }
        ExperimentKind::GpPartition => {
            let out = run_gp_partition(config)?;
            files.push(("results.csv".into(), render_csv(&out.rows)?));
            files.push((
                "summary.json".into(),
                serde_json::to_string_pretty(&json!({
                    "config_hash": hash,
                    "particles": out.particles,
                    "weights": out.weights,
                }))? + "\n",
            ));
            timings = render_timings(&out.timings);
        }
    }
    files.push((
        "metadata.json".into(),
        serde_json::to_string_pretty(&metadata)? + "\n",
    ));
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(RenderedOutput { files, timings })
}

/// Writes the rendered output into a directory.
pub fn write_output(output: &RenderedOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, payload) in &output.files {
        std::fs::write(dir.join(name), payload)?;
    }
    std::fs::write(dir.join("timings.csv"), &output.timings)?;
    Ok(())
}

// ---------------------------------------------------------------------
// Validation suite (`wvgd validate`)
// ---------------------------------------------------------------------

pub struct ValidationCheck {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

fn check(name: &'static str, run: impl FnOnce() -> std::result::Result<(), String>) -> ValidationCheck {
    ValidationCheck {
        name,
        outcome: run(),
    }
}

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Runs the oracle and property checks; every entry prints one line from the
/// CLI.
pub fn run_validation() -> Vec<ValidationCheck> {
    use crate::model::finite_difference_gradient;
    let mut checks = Vec::new();

    checks.push(check("quadrature converges under node doubling", || {
        let quad = Quadrature1D::new(-8.0, 8.0, 2049);
        ensure(
            quad.converged(&oracle::std_normal_pdf),
            "standard normal mass unstable",
        )
    }));

    checks.push(check("lloyd fixed points on the standard normal", || {
        let quad = Quadrature1D::new(-8.0, 8.0, 4097);
        let r1 = oracle::lloyd_1d(&oracle::std_normal_pdf, 1, 200, &quad);
        ensure(r1.positions[0].abs() < 1e-8, format!("n=1 at {}", r1.positions[0]))?;
        let r2 = oracle::lloyd_1d(&oracle::std_normal_pdf, 2, 500, &quad);
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        ensure(
            (r2.positions[1] - expected).abs() < 1e-4,
            format!("n=2 at {:?}", r2.positions),
        )
    }));

    checks.push(check("cost gradient matches finite differences", || {
        let cost = SquaredEuclidean;
        let mut rng = RngStream::new(1);
        for _ in 0..100 {
            let a = rng.standard_normal_vec(3);
            let b = rng.standard_normal_vec(3);
            let analytic = crate::cost::CostFunction::grad_first(&cost, &a, &b);
            let fd = finite_difference_gradient(|z| crate::cost::CostFunction::evaluate(&cost, z, &b), &a, 1e-5)
                .map_err(|e| e.to_string())?;
            for (g, f) in analytic.iter().zip(&fd) {
                ensure((g - f).abs() / f.abs().max(1.0) < 1e-4, format!("{g} vs {f}"))?;
            }
        }
        Ok(())
    }));

    checks.push(check("mixture target gradient matches finite differences", || {
        for seed in 0..3u64 {
            let mut rng = RngStream::new(seed);
            let target = sample_random_mixture(&mut rng, 1.5);
            for _ in 0..30 {
                let z = vec![rng.uniform_in(-4.0, 4.0)];
                let analytic = target.grad_log_joint(&z)[0];
                let fd = finite_difference_gradient(|p| target.log_joint(p), &z, 1e-5)
                    .map_err(|e| e.to_string())?[0];
                ensure(
                    (analytic - fd).abs() / fd.abs().max(1.0) < 1e-4,
                    format!("{analytic} vs {fd}"),
                )?;
            }
        }
        Ok(())
    }));

    checks.push(check("logistic target gradient matches finite differences", || {
        let mut rng = RngStream::new(7);
        let rows = synthetic_rows(DatasetName::Diabetes, &mut rng);
        let target = dataset_from_rows(DatasetName::Diabetes, rows, 50, &mut rng)
            .map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let w = rng.standard_normal_vec(target.dim());
            let analytic = target.grad_log_joint(&w);
            let fd = finite_difference_gradient(|p| target.log_joint(p), &w, 1e-5)
                .map_err(|e| e.to_string())?;
            for (g, f) in analytic.iter().zip(&fd) {
                ensure((g - f).abs() / f.abs().max(1.0) < 1e-4, format!("{g} vs {f}"))?;
            }
        }
        Ok(())
    }));

    checks.push(check("gp finite-difference gradient is step-consistent", || {
        let mut rng = RngStream::new(3);
        let target = make_synthetic_quasiperiodic(24, &mut rng);
        let theta = vec![0.1, -0.4, 0.3, -1.0];
        let g5 = finite_difference_gradient(|t| target.log_joint(t), &theta, 1e-5)
            .map_err(|e| e.to_string())?;
        let g4 = finite_difference_gradient(|t| target.log_joint(t), &theta, 1e-4)
            .map_err(|e| e.to_string())?;
        for (a, b) in g5.iter().zip(&g4) {
            ensure((a - b).abs() / b.abs().max(1.0) < 1e-3, format!("{a} vs {b}"))?;
        }
        Ok(())
    }));

    checks.push(check("tessellation is a partition of unity", || {
        let ensemble = ParticleEnsemble::uniform(vec![vec![-2.0], vec![0.3], vec![1.8]])
            .map_err(|e| e.to_string())?;
        let cost = SquaredEuclidean;
        let tessellation = Tessellation::new(&ensemble, &cost);
        let mut rng = RngStream::new(11);
        for _ in 0..10_000 {
            let z = vec![rng.uniform_in(-10.0, 10.0)];
            let cell = tessellation.assign_cell(&z);
            ensure(cell < 3, "cell out of range")?;
        }
        Ok(())
    }));

    checks.push(check("estimated weights match quadrature masses", || {
        let ensemble = ParticleEnsemble::uniform(vec![vec![0.0], vec![2.0]])
            .map_err(|e| e.to_string())?;
        let cost = SquaredEuclidean;
        let tessellation = Tessellation::new(&ensemble, &cost);
        let target = GaussianMixtureTarget::standard_normal();
        let proposals = vec![
            crate::varfit::VariationalComponent::centered(&[0.0], 0),
            crate::varfit::VariationalComponent::centered(&[2.0], 1),
        ];
        let estimate = tessellation
            .estimate_weights(&target, &proposals, 4000, &RngStream::new(13))
            .map_err(|e| e.to_string())?;
        let quad = Quadrature1D::new(-8.0, 8.0, 4097);
        let masses = oracle::quadrature_cell_masses(&[0.0, 2.0], &oracle::std_normal_pdf, &quad)
            .map_err(|e| e.to_string())?;
        ensure(
            (estimate.weights[0] - masses[0]).abs() < 0.03,
            format!("{} vs {}", estimate.weights[0], masses[0]),
        )
    }));

    checks.push(check("truncated-normal oracle matches closed forms", || {
        let (z, mean, _, entropy) =
            oracle::truncated_moments_entropy(0.0, 1.0, 0.0, f64::INFINITY)
                .map_err(|e| e.to_string())?;
        ensure((z - 0.5).abs() < 1e-8, format!("Z {z}"))?;
        let expected_mean = (2.0 / std::f64::consts::PI).sqrt();
        ensure((mean - expected_mean).abs() < 1e-7, format!("mean {mean}"))?;
        ensure((entropy - 0.72579).abs() < 1e-5, format!("entropy {entropy}"))
    }));

    checks.push(check("conjugate evidence matches quadrature", || {
        let quad = Quadrature1D::new(-10.0, 10.0, 8193);
        let joint = |z: f64| oracle::std_normal_pdf(z) * oracle::std_normal_pdf(0.4 - z);
        let by_quadrature = quad.integrate(&joint).ln();
        let closed = oracle::conjugate_evidence(1.0, 1.0, 0.4);
        ensure(
            (by_quadrature - closed).abs() < 1e-8,
            format!("{closed} vs {by_quadrature}"),
        )
    }));

    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn tiny_mixture_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.experiment = ExperimentKind::MixtureCompare;
        c.seeds = vec![7];
        c.n_repetitions = 1;
        c.particle_counts = vec![3];
        c.optimizer.n_steps = 120;
        c.optimizer.samples_per_step = 64;
        c.optimizer.weight_samples = 128;
        c.optimizer.final_weight_samples = 256;
        c.optimizer.pelbo_samples = 256;
        c.optimizer.polish_steps = 20;
        c
    }

    #[test]
    fn mixture_compare_emits_expected_row_count() {
        let config = tiny_mixture_config();
        let out = run_mixture_compare(&config).unwrap();
        assert_eq!(out.rows.len(), 2); // one wvgd + one svgd row
        assert!(out.rows.iter().all(|r| r.status == "ok"));
        assert_eq!(out.rows[0].method, "svgd");
        assert_eq!(out.rows[1].method, "wvgd");
    }

    #[test]
    fn rendered_output_is_deterministic() {
        let config = tiny_mixture_config();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.files, b.files);
    }

    #[test]
    fn failed_trials_keep_their_rows() {
        let mut config = tiny_mixture_config();
        // Degenerate learning rate drives positions out of float range and
        // the trial must survive as an error row.
        config.optimizer.lambda = 1e300;
        let out = run_mixture_compare(&config).unwrap();
        assert_eq!(out.rows.len(), 2);
        let wvgd_row = out.rows.iter().find(|r| r.method == "wvgd").unwrap();
        assert_ne!(wvgd_row.status, "ok");
        assert!(wvgd_row.l2_error.is_none());
    }

    #[test]
    fn validation_suite_passes() {
        for check in run_validation() {
            assert!(check.outcome.is_ok(), "{}: {:?}", check.name, check.outcome);
        }
    }

    #[test]
    fn gp_partition_grid_covers_all_cells() {
        let mut config = ExperimentConfig::default();
        config.experiment = ExperimentKind::GpPartition;
        config.seeds = vec![3];
        config.gp.grid_size = 24;
        config.optimizer.n_steps = 150;
        config.optimizer.samples_per_step = 64;
        config.optimizer.weight_samples = 128;
        config.optimizer.final_weight_samples = 256;
        config.optimizer.polish_steps = 10;
        let out = run_gp_partition(&config).unwrap();
        assert_eq!(out.rows.len(), 24 * 24);
        assert!(out.rows.iter().all(|r| r.cell < config.gp.n_particles));
        let total: f64 = out.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
