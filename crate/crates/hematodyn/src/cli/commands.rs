//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::Serialize;

use crate::analysis::{classify, SimulationSummary};
use crate::chareq::{build_chart_with, tau_star, z_k, StabilityChart, DEFAULT_SCAN_GRID, DEFAULT_ROOT_TOL};
use crate::dde::integrate;
use crate::model::{History, ModelParams, SteadyState};
use crate::{Error, Result};

use super::config::{AnalysisFlags, FileConfig, RunConfig, SolverFlags};
use super::{emit, Command};

pub(super) fn dispatch(command: Command, file: Option<&FileConfig>) -> Result<i32> {
    match command {
        Command::Steady { model, out } => {
            let cfg = RunConfig::resolve(
                file,
                &model,
                &SolverFlags::default(),
                &AnalysisFlags::default(),
                out.as_ref(),
                None,
            )?;
            cmd_steady(&cfg)
        }
        Command::Chart { model, tau_max, grid, k_max, zk_csv, out } => {
            let cfg = RunConfig::resolve(
                file,
                &model,
                &SolverFlags::default(),
                &AnalysisFlags::default(),
                out.as_ref(),
                None,
            )?;
            cmd_chart(&cfg, tau_max, grid.unwrap_or(DEFAULT_SCAN_GRID), k_max, zk_csv.as_deref())
        }
        Command::Zk { model, k_max, grid, out } => {
            let cfg = RunConfig::resolve(
                file,
                &model,
                &SolverFlags::default(),
                &AnalysisFlags::default(),
                None,
                None,
            )?;
            cmd_zk(&cfg, k_max, grid.unwrap_or(500), &out)
        }
        Command::Simulate { model, solver, analysis, history, stride, out } => {
            let cfg = RunConfig::resolve(file, &model, &solver, &analysis, out.as_ref(), stride)?;
            cmd_simulate(&cfg, history)
        }
        Command::Sweep { model, solver, analysis, tau_list, history, out } => {
            let cfg = RunConfig::resolve(file, &model, &solver, &analysis, out.as_ref(), None)?;
            cmd_sweep(&cfg, &tau_list, history)
        }
    }
}

#[derive(Debug, Serialize)]
struct SteadyReport {
    delta: f64,
    beta0: f64,
    theta: f64,
    n: f64,
    tau: f64,
    tau_bar: Option<f64>,
    /// `(2*exp(-delta*tau) - 1) * beta(0) - delta`; the positive steady state
    /// exists exactly when this is positive.
    existence_margin: f64,
    positive_exists: bool,
    trivial: (f64, f64),
    positive: Option<(f64, f64)>,
    reason: Option<String>,
}

fn cmd_steady(cfg: &RunConfig) -> Result<i32> {
    let tau = cfg.tau.unwrap_or(0.0);
    let params = cfg.params(tau)?;
    let tau_bar = params.existence_threshold_tau_bar();
    let margin = params.net_renewal_factor() * params.beta().at_zero() - params.delta();
    let positive = params.steady_positive();
    let reason = if positive.is_some() {
        None
    } else if tau_bar.is_none() {
        Some("delta >= beta(0)".to_string())
    } else {
        Some("tau >= tau_bar".to_string())
    };

    let super::BetaSpec::Hill { beta0, theta, n } = cfg.beta;
    let report = SteadyReport {
        delta: cfg.delta,
        beta0,
        theta,
        n,
        tau,
        tau_bar,
        existence_margin: margin,
        positive_exists: positive.is_some(),
        trivial: (0.0, 0.0),
        positive: positive.map(|e| (e.s(), e.n())),
        reason,
    };
    emit::emit_json(cfg.out.as_deref(), &report)?;
    Ok(0)
}

fn cmd_chart(
    cfg: &RunConfig,
    tau_max: Option<f64>,
    grid: usize,
    k_max: u32,
    zk_prefix: Option<&str>,
) -> Result<i32> {
    let params = cfg.params(cfg.tau.unwrap_or(0.0))?;
    let tau_max = match tau_max {
        Some(v) => v,
        None => params.existence_threshold_tau_bar().map_or(10.0, |tb| 1.05 * tb),
    };
    let chart: StabilityChart = build_chart_with(&params, tau_max, grid, DEFAULT_ROOT_TOL)?;

    for c in chart.crossings.iter().filter(|c| c.trans_sign == 0) {
        eprintln!(
            "warning: crossing at tau = {} is tangential/degenerate and does not flip stability",
            c.tau_c
        );
    }
    if let Some(prefix) = zk_prefix {
        write_branch_profiles(&params, k_max, grid, prefix)?;
    }
    emit::emit_json(cfg.out.as_deref(), &chart)?;
    if chart.tau_bar.is_none() {
        eprintln!("warning: no positive steady state for any delay; chart is degenerate");
        return Ok(3);
    }
    Ok(0)
}

fn cmd_zk(cfg: &RunConfig, k_max: u32, grid: usize, prefix: &str) -> Result<i32> {
    let params = cfg.params(cfg.tau.unwrap_or(0.0))?;
    if tau_star(&params).is_none() {
        eprintln!("warning: no admissible crossing region; profiles are empty");
    }
    write_branch_profiles(&params, k_max, grid, prefix)?;
    Ok(0)
}

fn write_branch_profiles(params: &ModelParams, k_max: u32, grid: usize, prefix: &str) -> Result<()> {
    for k in 0..=k_max {
        let rows = branch_rows(params, k, grid);
        let path = PathBuf::from(format!("{prefix}k{k}.csv"));
        emit::write_branch_csv(&path, &rows)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn branch_rows(params: &ModelParams, k: u32, grid: usize) -> Vec<(f64, f64)> {
    let Some(ts) = tau_star(params) else {
        return Vec::new();
    };
    let grid = grid.max(2);
    let hi = ts * (1.0 - 1e-6);
    (0..=grid)
        .filter_map(|i| {
            let tau = hi * i as f64 / grid as f64;
            z_k(params, k, tau).ok().map(|z| (tau, z))
        })
        .collect()
}

fn steady_candidates(params: &ModelParams) -> Vec<SteadyState> {
    let mut candidates = vec![SteadyState::Trivial];
    if let Some(e) = params.steady_positive() {
        candidates.push(e);
    }
    candidates
}

fn run_one(cfg: &RunConfig, tau: f64, history: (f64, f64)) -> Result<SimulationSummary> {
    let params = cfg.params(tau)?;
    let hist = History::constant(history.0, history.1)?;
    let traj = integrate(&params, &hist, &cfg.solver_config())?;
    Ok(classify(&traj, &steady_candidates(&params), cfg.effective_window(), cfg.tol))
}

fn cmd_simulate(cfg: &RunConfig, history: (f64, f64)) -> Result<i32> {
    let tau = cfg
        .tau
        .ok_or_else(|| Error::Config("simulate needs a delay: pass --tau or set model.tau".into()))?;
    let params = cfg.params(tau)?;
    let hist = History::constant(history.0, history.1)?;
    let traj = integrate(&params, &hist, &cfg.solver_config())?;
    let summary = classify(&traj, &steady_candidates(&params), cfg.effective_window(), cfg.tol);

    if let Some(base) = &cfg.out {
        let base = base.as_os_str().to_string_lossy().into_owned();
        emit::write_trajectory_csv(Path::new(&format!("{base}.csv")), &traj, cfg.stride)?;
        emit::emit_json(Some(Path::new(&format!("{base}.json"))), &summary)?;
    }
    println!("{}", emit::to_json(&summary));
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SweepEntry {
    tau: f64,
    summary: SimulationSummary,
}

fn cmd_sweep(cfg: &RunConfig, taus: &[f64], history: (f64, f64)) -> Result<i32> {
    if taus.is_empty() {
        return Err(Error::Config("sweep needs at least one delay in --tau-list".into()));
    }
    let threads = sweep_threads(taus.len());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<SimulationSummary>)>();

    std::thread::scope(|scope| {
        for _ in 0..threads {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= taus.len() {
                    break;
                }
                let result = run_one(cfg, taus[i], history);
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
    });

    let mut slots: Vec<Option<Result<SimulationSummary>>> = (0..taus.len()).map(|_| None).collect();
    for (i, result) in rx {
        slots[i] = Some(result);
    }

    // Single collector emits in input order.
    let mut entries = Vec::with_capacity(taus.len());
    for (i, slot) in slots.into_iter().enumerate() {
        let summary = slot.expect("every sweep slot is filled")?;
        entries.push(SweepEntry { tau: taus[i], summary });
    }
    emit::emit_json(cfg.out.as_deref(), &entries)?;
    Ok(0)
}

/// Worker count for sweeps: `HEMATODYN_THREADS` when set, otherwise the
/// available parallelism, capped by the job count.
fn sweep_threads(jobs: usize) -> usize {
    let env_cap = std::env::var("HEMATODYN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1);
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    env_cap.unwrap_or(hw).clamp(1, jobs.max(1))
}
