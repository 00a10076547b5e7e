//! Mode dispatch: run, verify, check, compare.

use std::path::Path;

use serde_json::json;
use surplus_opt::analysis::{estimate_decay, Tolerances};
use surplus_opt::linalg::{vec_norm, vec_sub};
use surplus_opt::objective::OptimalityOracle;
use surplus_opt::protocol::{self, ProtocolParams, RunSpec, Trajectory};

use crate::artifacts::{
    ensure_dir, write_config_echo, write_decay_csv, write_report_json, write_trajectory_csv,
    ReportContext,
};
use crate::config::{resolve, CliError, Mode, Resolved, SimConfig};

const DECAY_HORIZON: usize = 200;

fn run_one(
    cfg: &SimConfig,
    res: &Resolved,
    params: ProtocolParams<f64>,
    zero_surplus_init: bool,
    oracle: Option<&OptimalityOracle<f64>>,
    verify: bool,
) -> Result<Trajectory<f64>, CliError> {
    let mut initial = res.initial.clone();
    if zero_surplus_init {
        for agent in &mut initial.agents {
            agent.y = vec![0.0; agent.dim()];
        }
    }
    let mut spec = RunSpec::new(&res.graph, &res.surplus, &res.family, params, initial, cfg.k_max);
    spec.record_stride = cfg.record_stride;
    spec.oracle = oracle;
    spec.tolerances = Tolerances {
        consensus: cfg.tolerances.tol_c,
        surplus: cfg.tolerances.tol_y,
        velocity: cfg.tolerances.tol_q,
    };
    spec.guard = cfg.tolerances.guard;
    spec.verify = verify;
    Ok(protocol::run(&spec)?)
}

fn emit_run_artifacts(
    dir: &Path,
    cfg: &SimConfig,
    res: &Resolved,
    traj: &Trajectory<f64>,
    with_decay: bool,
) -> Result<(), CliError> {
    ensure_dir(dir)?;
    write_trajectory_csv(&dir.join("trajectory.csv"), traj)?;
    let decay = if with_decay {
        let sm = res.system.as_ref().expect("system matrix exists in surplus mode");
        Some(estimate_decay(sm, DECAY_HORIZON)?)
    } else {
        None
    };
    let ctx = ReportContext {
        diagnostics: &traj.diagnostics,
        decay: decay.as_ref(),
        epsilon: res.params.epsilon,
        epsilon_max: res.epsilon_max,
        column_sum_residual: res.system.as_ref().map(|sm| sm.column_sum_residual()),
    };
    write_report_json(&dir.join("report.json"), traj, &ctx)?;
    if let Some(est) = &decay {
        write_decay_csv(&dir.join("decay.csv"), est)?;
    }
    write_config_echo(&dir.join("config-echo.json"), cfg)?;
    Ok(())
}

fn oracle_for(res: &Resolved) -> Result<OptimalityOracle<f64>, CliError> {
    Ok(res.family.centralized_optimum()?)
}

fn summarize(traj: &Trajectory<f64>) {
    let last = traj.points.last().expect("recorded points");
    println!(
        "k = {}: consensus_error = {}, surplus_norm = {}, velocity_norm = {}",
        last.k, last.metrics.consensus_error, last.metrics.surplus_norm, last.metrics.velocity_norm
    );
    println!("converged = {}", traj.report.converged);
    if let Some(gap) = traj.report.final_gap {
        println!("final optimality gap = {gap}");
    }
}

pub fn execute(cfg: &SimConfig, out_dir: &Path) -> Result<(), CliError> {
    let res = resolve(cfg)?;
    match cfg.mode {
        Mode::Check => check(&res),
        Mode::Run => {
            let oracle = oracle_for(&res)?;
            let traj = run_one(cfg, &res, res.params, false, Some(&oracle), false)?;
            emit_run_artifacts(out_dir, cfg, &res, &traj, true)?;
            summarize(&traj);
            println!("artifacts written to {}", out_dir.display());
            Ok(())
        }
        Mode::Verify => {
            let oracle = oracle_for(&res)?;
            let traj = run_one(cfg, &res, res.params, false, Some(&oracle), true)?;
            emit_run_artifacts(out_dir, cfg, &res, &traj, true)?;
            summarize(&traj);
            let dev =
                traj.diagnostics.verify_max_deviation.expect("verify mode records the deviation");
            println!("max engine deviation = {dev}");
            println!("artifacts written to {}", out_dir.display());
            Ok(())
        }
        Mode::Compare => compare(cfg, &res, out_dir),
    }
}

/// Prints the configuration's spectral quantities without stepping.
fn check(res: &Resolved) -> Result<(), CliError> {
    let sm = res.system.as_ref().expect("system matrix exists in surplus mode");
    let est = estimate_decay(sm, DECAY_HORIZON)?;
    println!("epsilon_max = {}", res.epsilon_max);
    println!("epsilon = {}", res.params.epsilon);
    println!("column_sum_residual = {}", sm.column_sum_residual());
    println!("gamma_hat = {}", est.gamma_hat);
    println!("big_gamma_hat = {}", est.big_gamma_hat);
    println!("decays = {}", est.gamma_hat < 1.0);
    Ok(())
}

fn leg_summary(
    traj: &Trajectory<f64>,
    oracle: Option<&OptimalityOracle<f64>>,
) -> (serde_json::Value, Option<f64>) {
    let last = traj.points.last().expect("recorded points");
    let zbar = &last.metrics.zbar;
    let dist = oracle.map(|o| vec_norm(&vec_sub(zbar, &o.x_star)));
    let value = json!({
        "zbar_final": zbar,
        "optimality_gap": last.metrics.optimality_gap,
        "dist_to_optimum": dist,
        "converged": traj.report.converged,
    });
    (value, dist)
}

/// Runs the protocol twice from the same initial state, with and without the
/// surplus channel, and writes a side-by-side summary.
fn compare(cfg: &SimConfig, res: &Resolved, out_dir: &Path) -> Result<(), CliError> {
    let oracle = oracle_for(res)?;
    let schedule = res.params.schedule;
    let on = run_one(cfg, res, res.params, false, Some(&oracle), false)?;
    let off_params = ProtocolParams::baseline(cfg.t, schedule)?;
    let off = run_one(cfg, res, off_params, true, Some(&oracle), false)?;

    ensure_dir(out_dir)?;
    emit_run_artifacts(&out_dir.join("on"), cfg, res, &on, true)?;
    emit_run_artifacts(&out_dir.join("off"), cfg, res, &off, false)?;

    let (on_value, on_dist) = leg_summary(&on, Some(&oracle));
    let (off_value, off_dist) = leg_summary(&off, Some(&oracle));
    let ratio = match (on_dist, off_dist) {
        (Some(a), Some(b)) if a > 0.0 => Some(b / a),
        _ => None,
    };
    println!("surplus on:  {on_value}");
    println!("surplus off: {off_value}");
    if let Some(r) = ratio {
        println!("off/on distance ratio = {r}");
    }

    let doc = json!({
        "x_star": oracle.x_star,
        "f_star": oracle.f_star,
        "surplus_on": on_value,
        "surplus_off": off_value,
        "off_over_on_distance_ratio": ratio,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("comparison serialization");
    text.push('\n');
    std::fs::write(out_dir.join("comparison.json"), text)?;
    println!("artifacts written to {}", out_dir.display());
    Ok(())
}
