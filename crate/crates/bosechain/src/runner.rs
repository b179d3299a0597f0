//! Experiment orchestration: single points, resumable grids, gate sweeps
//! and spectra, with trajectories and grid points spread over a worker pool.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::mpsc;
use std::time::Instant;

use bosechain_core::born_markov::analytic_current;
use bosechain_core::born_markov::{
    born_stationary, markov_stationary, propagate_born_with, propagate_markov, reduced_current, BornOptions, ReducedState,
};
use bosechain_core::exact::stationary_report;
use bosechain_core::langevin::{EnsembleAccumulator, GateSweep, LangevinModel, NoiseModel, SweepAccumulator, SweepPoint};
use bosechain_core::linalg::CMatrix;
use bosechain_core::model::{chain_eigenmodes, current_from_spdm, SystemSpec};
use bosechain_core::Error;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::analysis::{average_spectra, site_spectra, spectral_density, SpectrumRecord};
use crate::config::{set_system_value, Config, ExperimentPlan, Method};
use crate::error::AppError;
use crate::output::{grid_header, grid_row, param_values};

/// Trajectories per work item. Fixed so that merged statistics do not
/// depend on the worker count.
const CHUNK: u64 = 8;

/// Outcome of one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub current: f64,
    /// Statistical error; `None` for deterministic methods.
    pub stderr: Option<f64>,
    pub n_realizations: Option<u64>,
    /// Relative stationary residual of the exact solve.
    pub residual: Option<f64>,
    pub chain_occupations: Vec<f64>,
}

/// One current curve of a gate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub g: f64,
    pub points: Vec<SweepPoint>,
}

/// Builds a dedicated pool of `workers` threads (`0` = rayon default).
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool, AppError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| AppError::Usage(format!("worker pool: {e}")))
}

fn noise(plan: &ExperimentPlan) -> NoiseModel {
    NoiseModel {
        seed: plan.seed,
        vacuum_half: plan.langevin.vacuum_half,
        dt: plan.langevin.dt,
    }
}

fn chunks(n: u64) -> Vec<(u64, u64)> {
    (0..n.div_ceil(CHUNK)).map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n))).collect()
}

fn occupations(rho: &CMatrix) -> Vec<f64> {
    rho.diagonal().iter().map(|z| z.re).collect()
}

/// Langevin ensemble estimate with trajectories spread over the current pool.
pub fn langevin_point(s: &SystemSpec, plan: &ExperimentPlan) -> Result<PointResult, Error> {
    let lp = &plan.langevin;
    if !(lp.t_average > 0.0) || !(lp.t_transient >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "averaging window [{}, +{}] is empty",
            lp.t_transient, lp.t_average
        )));
    }
    let model = LangevinModel::new(s, noise(plan))?;
    let parts: Vec<Result<EnsembleAccumulator, Error>> = chunks(lp.trajectories)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = EnsembleAccumulator::for_model(&model);
            for index in lo..hi {
                acc.push(&model.run_trajectory(index, lp.t_transient, lp.t_average)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = EnsembleAccumulator::for_model(&model);
    for p in parts {
        total.merge(&p?);
    }
    let r = total.finish()?;
    Ok(PointResult {
        current: r.mean_current,
        stderr: Some(r.std_error),
        n_realizations: Some(r.n_realizations),
        residual: None,
        chain_occupations: r.occupations,
    })
}

/// Solves one parameter point with the plan's method.
pub fn run_point(s: &SystemSpec, plan: &ExperimentPlan) -> Result<PointResult, Error> {
    let deterministic = |rho: CMatrix, current: f64, residual: Option<f64>| PointResult {
        current,
        stderr: None,
        n_realizations: None,
        residual,
        chain_occupations: occupations(&rho),
    };
    match plan.method {
        Method::Exact => {
            let r = stationary_report(s)?;
            if !(r.residual <= plan.residual_tolerance) {
                return Err(Error::NoConvergence("exact stationary solve: residual above tolerance.residual"));
            }
            Ok(deterministic(r.chain_rho, r.current, Some(r.residual)))
        }
        Method::Langevin => langevin_point(s, plan),
        Method::Born => match plan.born.t_final {
            None => {
                let st = born_stationary(s)?;
                Ok(deterministic(st.rho_s, st.current, None))
            }
            Some(t) => {
                let opts = BornOptions {
                    dt: plan.born.dt,
                    memory_cutoff: plan.born.memory_cutoff,
                };
                let dt = opts.step_for(s);
                let start = ReducedState::initial(CMatrix::zeros(s.chain.sites, s.chain.sites), dt);
                let out = propagate_born_with(s, &start, &[t], &opts)?;
                let last = out.last().expect("one output per requested time");
                let j = reduced_current(s, last)?;
                Ok(deterministic(last.rho_s.clone(), j, None))
            }
        },
        Method::Markov => {
            let rho = match plan.markov_t_final {
                None => markov_stationary(s)?,
                Some(t) => {
                    let start = CMatrix::zeros(s.chain.sites, s.chain.sites);
                    propagate_markov(s, &start, &[t])?.pop().expect("one output per requested time")
                }
            };
            let j = current_from_spdm(&rho, &s.chain)?;
            Ok(deterministic(rho, j, None))
        }
        Method::Analytic => Ok(PointResult {
            current: analytic_current(s)?,
            stderr: None,
            n_realizations: None,
            residual: None,
            chain_occupations: Vec::new(),
        }),
    }
}

/// Cartesian product of the sweep axes (first axis outermost). A plan
/// without axes yields the base system alone.
pub fn grid_points(cfg: &Config) -> Result<Vec<SystemSpec>, AppError> {
    let mut points = vec![cfg.system.clone()];
    for axis in &cfg.plan.axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for p in &points {
            for &v in &axis.values {
                let mut q = p.clone();
                set_system_value(&mut q, &axis.key, v).map_err(|e| AppError::Config(crate::config::ConfigError::Validation(e)))?;
                next.push(q);
            }
        }
        points = next;
    }
    for p in &points {
        let mut c = cfg.clone();
        c.system = p.clone();
        c.plan.axes.clear();
        crate::config::validate(&c)?;
    }
    Ok(points)
}

/// Stable identifier of a grid point: every system parameter plus the
/// method settings that change its result.
pub fn point_hash(s: &SystemSpec, plan: &ExperimentPlan) -> String {
    let mut text = format!("method={}", plan.method);
    for v in param_values(s) {
        text.push_str(&format!(";{v}"));
    }
    match plan.method {
        Method::Langevin => {
            let l = &plan.langevin;
            text.push_str(&format!(
                ";seed={};n={};tt={};ta={};dt={};vh={}",
                plan.seed, l.trajectories, l.t_transient, l.t_average, l.dt, l.vacuum_half
            ));
        }
        Method::Born => text.push_str(&format!(
            ";dt={:?};cut={};tf={:?}",
            plan.born.dt, plan.born.memory_cutoff, plan.born.t_final
        )),
        Method::Markov => text.push_str(&format!(";tf={:?}", plan.markov_t_final)),
        Method::Exact => text.push_str(&format!(";tol={}", plan.residual_tolerance)),
        Method::Analytic => {}
    }
    Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Summary of a grid run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSummary {
    pub total: usize,
    pub computed: usize,
    pub reused: usize,
    pub failed: usize,
}

fn read_existing(path: &Path, header: &[String]) -> Result<HashMap<String, Vec<String>>, AppError> {
    let mut reader = match csv::Reader::from_path(path) {
        Ok(r) => r,
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound) => return Ok(HashMap::new()),
        Err(e) => return Err(AppError::io(path.display(), e)),
    };
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| AppError::io(path.display(), e))?
        .iter()
        .map(String::from)
        .collect();
    if found.is_empty() {
        return Ok(HashMap::new());
    }
    if found != header {
        return Err(AppError::io(
            path.display(),
            "existing table has different columns; remove it or pass --fresh",
        ));
    }
    let status = header.len() - 1;
    let mut rows = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| AppError::io(path.display(), e))?;
        if rec.get(status) == Some("ok") {
            rows.insert(rec[0].to_string(), rec.iter().map(String::from).collect());
        }
    }
    Ok(rows)
}

fn write_table(path: &Path, header: &[String], rows: &[&Vec<String>]) -> Result<(), AppError> {
    let tmp = path.with_extension("partial");
    {
        let mut w = csv::Writer::from_path(&tmp).map_err(|e| AppError::io(tmp.display(), e))?;
        w.write_record(header).map_err(|e| AppError::io(tmp.display(), e))?;
        for r in rows {
            w.write_record(*r).map_err(|e| AppError::io(tmp.display(), e))?;
        }
        w.flush().map_err(|e| AppError::io(tmp.display(), e))?;
    }
    fs::rename(&tmp, path).map_err(|e| AppError::io(path.display(), e))
}

/// Runs every grid point and writes one row per point to `path`, in grid
/// order. Rows of an existing table whose hash finished with status `ok`
/// are reused; failed points are recorded and the grid continues.
pub fn run_grid(cfg: &Config, path: &Path, workers: usize, fresh: bool) -> Result<GridSummary, AppError> {
    let points = grid_points(cfg)?;
    let plan = &cfg.plan;
    let header = grid_header(plan.timing);
    let hashes: Vec<String> = points.iter().map(|p| point_hash(p, plan)).collect();
    let existing = if fresh { HashMap::new() } else { read_existing(path, &header)? };

    let cached: Vec<&Vec<String>> = hashes.iter().filter_map(|h| existing.get(h)).collect();
    write_table(path, &header, &cached)?;
    let todo: Vec<usize> = (0..points.len()).filter(|i| !existing.contains_key(&hashes[*i])).collect();

    let pool = worker_pool(workers)?;
    let mut computed: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut failed = 0;
    let mut file = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| AppError::io(path.display(), e))?;
    let (tx, rx) = mpsc::channel::<(usize, Vec<String>, bool)>();
    std::thread::scope(|scope| -> Result<(), AppError> {
        let jobs = &todo;
        let points = &points;
        let hashes = &hashes;
        scope.spawn(move || {
            pool.install(|| {
                jobs.par_iter().enumerate().for_each_with(tx, |tx, (slot, &i)| {
                    let start = Instant::now();
                    let result = run_point(&points[i], plan).map_err(|e| e.to_string());
                    let wall = plan.timing.then(|| start.elapsed().as_secs_f64());
                    let ok = result.is_ok();
                    let row = grid_row(&hashes[i], plan.method, &points[i], &result, wall);
                    let _ = tx.send((slot, row, ok));
                });
            });
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (slot, row, ok) in rx {
            if !ok {
                failed += 1;
            }
            pending.insert(slot, row);
            while let Some(row) = pending.remove(&next) {
                let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
                w.write_record(&row).map_err(|e| AppError::io(path.display(), e))?;
                let bytes = w.into_inner().map_err(|e| AppError::io(path.display(), e))?;
                file.write_all(&bytes).map_err(|e| AppError::io(path.display(), e))?;
                file.flush().map_err(|e| AppError::io(path.display(), e))?;
                computed.insert(todo[next], row);
                next += 1;
            }
        }
        Ok(())
    })?;

    if !cached.is_empty() && !computed.is_empty() {
        let ordered: Vec<&Vec<String>> = (0..points.len())
            .map(|i| {
                computed
                    .get(&i)
                    .or_else(|| existing.get(&hashes[i]))
                    .expect("every point has a row")
            })
            .collect();
        write_table(path, &header, &ordered)?;
    }
    Ok(GridSummary {
        total: points.len(),
        computed: computed.len(),
        reused: points.len() - todo.len(),
        failed,
    })
}

/// Resonance positions `-(omega_i + J_r)` of the chain at zero gate.
pub fn expected_peaks(s: &SystemSpec) -> Result<Vec<f64>, Error> {
    let mut chain = s.chain.clone();
    chain.gate = 0.0;
    let modes = chain_eigenmodes(&chain)?;
    let mut peaks: Vec<f64> = modes.omegas.iter().map(|w| -(w + s.left.hopping)).collect();
    peaks.sort_by(f64::total_cmp);
    Ok(peaks)
}

/// Gate ramp for a resonance plan.
pub fn resonance_ramp(cfg: &Config) -> GateSweep {
    let r = &cfg.plan.resonance;
    GateSweep {
        delta_min: r.delta_min,
        delta_max: r.delta_max,
        duration: r.periods * 2.0 * std::f64::consts::PI / cfg.system.chain.hopping,
        t_transient: r.t_transient,
        bins: r.bins,
    }
}

/// Langevin gate ramp with trajectories spread over the current pool.
pub fn parallel_gate_sweep(s: &SystemSpec, sweep: &GateSweep, n_traj: u64, noise: NoiseModel) -> Result<Vec<SweepPoint>, Error> {
    sweep.validate()?;
    let model = LangevinModel::new(s, noise)?;
    let parts: Vec<Result<SweepAccumulator, Error>> = chunks(n_traj)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut acc = SweepAccumulator::new(sweep.bins);
            for index in lo..hi {
                acc.push(&model.run_sweep_trajectory(index, sweep)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = SweepAccumulator::new(sweep.bins);
    for p in parts {
        total.merge(&p?);
    }
    Ok(total.finish(sweep))
}

/// Current versus gate voltage: per-point stationary solves for `exact`
/// and `born`, one slow ramp per `g` value for `langevin`.
pub fn run_resonance_sweep(cfg: &Config) -> Result<Vec<Curve>, AppError> {
    let r = &cfg.plan.resonance;
    match cfg.plan.method {
        Method::Exact | Method::Born => {
            let n = r.points;
            let deltas: Vec<f64> = (0..n)
                .map(|i| r.delta_min + (r.delta_max - r.delta_min) * i as f64 / (n - 1) as f64)
                .collect();
            let points: Result<Vec<SweepPoint>, Error> = deltas
                .par_iter()
                .map(|&d| {
                    let mut s = cfg.system.clone();
                    s.chain.gate = d;
                    let res = run_point(&s, &cfg.plan)?;
                    Ok(SweepPoint {
                        delta: d,
                        j_mean: res.current,
                        j_stderr: 0.0,
                    })
                })
                .collect();
            Ok(vec![Curve { g: 0.0, points: points? }])
        }
        Method::Langevin => {
            let sweep = resonance_ramp(cfg);
            let mut curves = Vec::new();
            for &g in &r.g_values {
                let mut s = cfg.system.clone();
                s.set_macroscopic_interaction(g);
                let points = parallel_gate_sweep(&s, &sweep, cfg.plan.langevin.trajectories, noise(&cfg.plan))?;
                curves.push(Curve { g, points });
            }
            Ok(curves)
        }
        m => Err(AppError::Config(crate::config::ConfigError::Validation(format!(
            "resonance sweeps support exact, born and langevin, not {m}"
        )))),
    }
}

/// Ensemble-averaged spectra of the reservoir forces and of the chosen
/// chain sites. Labels are `chi_left`, `chi_right` and `site_<n>`.
pub fn run_spectrum(cfg: &Config) -> Result<(Vec<String>, Vec<SpectrumRecord>), AppError> {
    let sp = &cfg.plan.spectrum;
    let model = LangevinModel::new(&cfg.system, noise(&cfg.plan))?;
    let per_traj: Result<Vec<Vec<SpectrumRecord>>, Error> = (0..sp.trajectories)
        .into_par_iter()
        .map(|index| {
            let rec = model.record(index, sp.t_transient, sp.samples, sp.stride)?;
            let mut out = vec![
                spectral_density(&rec.chi_left, rec.dt, sp.segments)?,
                spectral_density(&rec.chi_right, rec.dt, sp.segments)?,
            ];
            out.extend(site_spectra(&rec, &sp.sites, sp.segments)?);
            Ok(out)
        })
        .collect();
    let per_traj = per_traj?;
    let columns = per_traj[0].len();
    let averaged: Result<Vec<SpectrumRecord>, Error> = (0..columns)
        .map(|c| average_spectra(&per_traj.iter().map(|t| t[c].clone()).collect::<Vec<_>>()))
        .collect();
    let mut labels = vec!["chi_left".to_string(), "chi_right".to_string()];
    labels.extend(sp.sites.iter().map(|s| format!("site_{s}")));
    Ok((labels, averaged?))
}
