use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use symplan::evaluation::{
    episode_csv, evaluate_baseline, run_baseline_episodes, run_rollout_episodes, tradeoff_csv, tradeoff_sweep,
    EpisodeRecord,
};
use symplan::geometry::{moving_frame_angle, CostParams};
use symplan::oracle::run_oracle_suite;
use symplan::table_io::{fmt_f64, read_table, table_to_json, to_json_string, write_table};
use symplan::value_solver::{solve, PartitionGrid, SolverConfig, ValueTable};

use crate::config::RunConfig;

/// How a command finished; maps onto the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Output was written but value iteration hit its iteration cap.
    NotConverged,
    ChecksFailed,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::NotConverged => 2,
            Status::ChecksFailed => 1,
        }
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    table_sha256: Option<String>,
}

fn provenance_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".provenance.json");
    out.with_file_name(name)
}

/// Writes `<out>.provenance.json` next to an output file.
fn write_provenance(out: &Path, command: &str, cfg: &RunConfig, table_sha256: Option<String>) -> Result<()> {
    let p = Provenance {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        table_sha256,
    };
    let mut text = to_json_string(&p)?;
    text.push('\n');
    let path = provenance_path(out);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_hex(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

#[derive(Serialize)]
struct TableKey<'a> {
    grid: &'a PartitionGrid,
    cost: &'a CostParams,
    n1: usize,
    disturbance: &'a symplan::action_models::DisturbanceModel,
    solver: &'a SolverConfig,
}

/// Content hash of everything that determines a solved table.
pub fn table_cache_key(cfg: &RunConfig, lambda: f64) -> Result<String> {
    let key = TableKey {
        grid: &cfg.grid(),
        cost: &cfg.cost_with_lambda(lambda),
        n1: cfg.n1,
        disturbance: &cfg.solver_disturbance(),
        solver: &cfg.solver_config(),
    };
    Ok(sha256_hex(&to_json_string(&key)?))
}

fn solve_table(cfg: &RunConfig, cost: &CostParams) -> Result<(ValueTable, Vec<f64>, bool)> {
    let out = solve(
        &cfg.grid(),
        cost,
        &cfg.actions(),
        &cfg.solver_disturbance(),
        &cfg.solver_config(),
    )?;
    Ok((out.table, out.deltas, out.converged))
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path, log: &mut dyn Write) -> Result<Status> {
    let (table, deltas, converged) = solve_table(cfg, &cfg.cost)?;
    for (k, d) in deltas.iter().enumerate() {
        writeln!(log, "iteration {:>3}  delta {}", k + 1, fmt_f64(*d))?;
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_table(out, &table)?;
    write_provenance(out, "solve", cfg, None)?;
    writeln!(
        log,
        "{} after {} iterations; {} coefficients written to {}",
        if converged { "converged" } else { "not converged" },
        deltas.len(),
        table.coefficients.len(),
        out.display()
    )?;
    Ok(if converged {
        Status::Success
    } else {
        Status::NotConverged
    })
}

fn check_table_matches(cfg: &RunConfig, table: &ValueTable) -> Result<()> {
    if table.cost_params != cfg.cost {
        bail!(
            "table was solved with cost {:?} but the config asks for {:?}",
            table.cost_params,
            cfg.cost
        );
    }
    if table.n1 != cfg.n1 {
        bail!("table was solved with n1 = {} but the config asks for {}", table.n1, cfg.n1);
    }
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig, table_path: Option<&Path>, out: &Path, log: &mut dyn Write) -> Result<Status> {
    let actions = cfg.actions();
    let w_eval = cfg.eval_disturbance();
    let instances = cfg.instances()?;
    let protocol = cfg.protocol();

    let (episodes, table_sha): (Vec<EpisodeRecord>, Option<String>) = match cfg.planner.baseline() {
        Some(kind) => (
            run_baseline_episodes(&kind, &actions, &w_eval, &instances, &w_eval, &protocol)?,
            None,
        ),
        None => {
            let Some(path) = table_path else {
                bail!("the rollout planner needs a value table (--table)");
            };
            let table = read_table(path).with_context(|| format!("reading table {}", path.display()))?;
            check_table_matches(cfg, &table)?;
            let sha = sha256_hex(&table_to_json(&table)?);
            let eps = run_rollout_episodes(
                &table,
                &actions,
                &w_eval,
                &cfg.rollout_config(),
                &instances,
                &w_eval,
                &protocol,
            );
            (eps, Some(sha))
        }
    };

    for (id, e) in episodes.iter().enumerate() {
        let r = &e.result;
        writeln!(
            log,
            "episode {id} (instance {}, realization {}): time {}{}, min distance {:.4}{}{}",
            e.instance,
            e.realization,
            r.time_to_target,
            if r.timed_out { " (timeout)" } else { "" },
            r.min_distance,
            if r.collided { ", collided" } else { "" },
            if r.fallbacks > 0 {
                format!(", {} fallbacks", r.fallbacks)
            } else {
                String::new()
            },
        )?;
    }
    write_output(out, &episode_csv(&episodes))?;
    write_provenance(out, "simulate", cfg, table_sha)?;
    Ok(Status::Success)
}

/// Solved table for one λ, loaded from or stored into the cache directory.
fn table_for_lambda(cfg: &RunConfig, lambda: f64, log: &mut dyn Write, converged: &mut bool) -> Result<ValueTable> {
    let cost = cfg.cost_with_lambda(lambda);
    let cached = match &cfg.sweep.cache_dir {
        Some(dir) => Some(dir.join(format!("{}.json", table_cache_key(cfg, lambda)?))),
        None => None,
    };
    if let Some(path) = cached.as_ref().filter(|p| p.exists()) {
        let table = read_table(path).with_context(|| format!("reading cached table {}", path.display()))?;
        if table.cost_params != cost || table.n1 != cfg.n1 {
            bail!("cached table {} does not match lambda {lambda}", path.display());
        }
        writeln!(log, "lambda {}: cached table {}", fmt_f64(lambda), path.display())?;
        return Ok(table);
    }
    if let Some(path) = cached.as_ref().filter(|_| !cfg.sweep.solve_missing) {
        bail!(
            "no cached table for lambda {lambda} at {} and sweep.solve_missing is false",
            path.display()
        );
    }
    let (table, deltas, ok) = solve_table(cfg, &cost)?;
    *converged &= ok;
    writeln!(
        log,
        "lambda {}: solved in {} iterations{}",
        fmt_f64(lambda),
        deltas.len(),
        if ok { "" } else { " (not converged)" }
    )?;
    if let Some(path) = cached {
        fs::create_dir_all(path.parent().expect("cache file has a parent"))?;
        write_table(&path, &table)?;
    }
    Ok(table)
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path, log: &mut dyn Write) -> Result<Status> {
    let actions = cfg.actions();
    let w_eval = cfg.eval_disturbance();
    let instances = cfg.instances()?;
    let protocol = cfg.protocol();

    let mut converged = true;
    let mut tables: BTreeMap<u64, ValueTable> = BTreeMap::new();
    for &lambda in &cfg.sweep.lambdas {
        if let std::collections::btree_map::Entry::Vacant(slot) = tables.entry(lambda.to_bits()) {
            slot.insert(table_for_lambda(cfg, lambda, log, &mut converged)?);
        }
    }
    let mut points = tradeoff_sweep(
        &cfg.sweep.lambdas,
        &cfg.sweep.horizons,
        &cfg.sweep.modes,
        |l| Ok(tables[&l.to_bits()].clone()),
        &actions,
        &w_eval,
        &cfg.rollout_config(),
        &instances,
        &w_eval,
        &protocol,
    )?;
    for kind in &cfg.sweep.baselines {
        points.push(evaluate_baseline(kind, &actions, &w_eval, &instances, &w_eval, &protocol)?);
    }
    for p in &points {
        writeln!(
            log,
            "{:<8} {:<12} lambda {:<10} N {:<3} mean time {:>9.3}  mean min distance {:>8.4}  collisions {}  timeouts {}",
            p.planner,
            p.mode,
            p.lambda.map(|l| format!("{l:e}")).unwrap_or_else(|| "-".into()),
            p.horizon.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
            p.mean_time,
            p.mean_min_distance,
            p.collision_count,
            p.timeout_count,
        )?;
    }
    write_output(out, &tradeoff_csv(&points))?;
    write_provenance(out, "sweep", cfg, None)?;
    Ok(if converged {
        Status::Success
    } else {
        Status::NotConverged
    })
}

pub fn cmd_oracle(seed: u64, log: &mut dyn Write) -> Result<Status> {
    let checks = run_oracle_suite(moving_frame_angle, seed)?;
    let mut all = true;
    for c in &checks {
        all &= c.passed;
        writeln!(
            log,
            "{:<4} {:<26} max residual {:.3e}  (threshold {:.0e})",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.residual,
            c.threshold
        )?;
    }
    Ok(if all { Status::Success } else { Status::ChecksFailed })
}
