//! CSV and JSON emission.
//!
//! Numbers are written with Rust's shortest round-trip float formatting and
//! JSON maps keep sorted keys, so artifacts are byte-stable for a fixed
//! config and seed. Missing optional values become empty CSV fields or JSON
//! null.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;
use surplus_opt::analysis::DecayEstimate;
use surplus_opt::protocol::{RunDiagnostics, Trajectory};

use crate::config::{CliError, SimConfig};

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn trajectory_csv(traj: &Trajectory<f64>) -> String {
    let state0 = &traj.points[0].state;
    let (n, s) = (state0.n(), state0.dim());
    let mut out = String::new();
    out.push_str("k,alpha_k");
    for i in 1..=n {
        for part in ["r", "q", "y"] {
            for d in 0..s {
                let _ = write!(out, ",{part}{i}_{d}");
            }
        }
    }
    out.push_str(
        ",consensus_error,surplus_norm,velocity_norm,optimality_gap,conservation_residual\n",
    );
    for p in &traj.points {
        let _ = write!(out, "{},{}", p.k, p.alpha);
        for agent in &p.state.agents {
            for block in [&agent.r, &agent.q, &agent.y] {
                for v in block {
                    let _ = write!(out, ",{v}");
                }
            }
        }
        let m = &p.metrics;
        let _ = writeln!(
            out,
            ",{},{},{},{},{}",
            m.consensus_error,
            m.surplus_norm,
            m.velocity_norm,
            opt_field(m.optimality_gap),
            opt_field(m.conservation_residual),
        );
    }
    out
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory<f64>) -> Result<(), CliError> {
    std::fs::write(path, trajectory_csv(traj))?;
    Ok(())
}

pub fn decay_csv(est: &DecayEstimate<f64>) -> String {
    let mut out = String::from("k,e_k,bound\n");
    for (idx, e) in est.errors.iter().enumerate() {
        let k = idx + 1;
        let _ = writeln!(out, "{k},{e},{}", est.bound(k));
    }
    out
}

pub fn write_decay_csv(path: &Path, est: &DecayEstimate<f64>) -> Result<(), CliError> {
    std::fs::write(path, decay_csv(est))?;
    Ok(())
}

/// Context the report carries beyond the trajectory itself.
pub struct ReportContext<'a> {
    pub diagnostics: &'a RunDiagnostics<f64>,
    pub decay: Option<&'a DecayEstimate<f64>>,
    pub epsilon: f64,
    pub epsilon_max: f64,
    pub column_sum_residual: Option<f64>,
}

pub fn report_json(traj: &Trajectory<f64>, ctx: &ReportContext<'_>) -> String {
    let r = &traj.report;
    let d = ctx.diagnostics;
    let last = traj.points.last().expect("a run records at least one point");
    let doc = json!({
        "converged": r.converged,
        "k_consensus": r.k_consensus,
        "k_surplus": r.k_surplus,
        "k_velocity": r.k_velocity,
        "final_gap": r.final_gap,
        "x_star_hat": r.x_star_hat,
        "final": {
            "k": last.k,
            "consensus_error": last.metrics.consensus_error,
            "surplus_norm": last.metrics.surplus_norm,
            "velocity_norm": last.metrics.velocity_norm,
            "zbar": last.metrics.zbar,
        },
        "diagnostics": {
            "max_mass_residual": d.max_mass_residual,
            "max_theta_residual": d.max_theta_residual,
            "max_clip_overshoot": d.max_clip_overshoot,
            "clip_events": d.clip_events,
            "first_clip": d.first_clip,
            "last_clip": d.last_clip,
            "max_state_norm": d.max_state_norm,
            "max_applied_grad_norm": d.max_applied_grad_norm,
            "verify_max_deviation": d.verify_max_deviation,
        },
        "decay": ctx.decay.map(|est| json!({
            "gamma_hat": est.gamma_hat,
            "big_gamma_hat": est.big_gamma_hat,
            "norm": est.norm,
        })),
        "epsilon": ctx.epsilon,
        "epsilon_max": ctx.epsilon_max,
        "column_sum_residual": ctx.column_sum_residual,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("report serialization");
    text.push('\n');
    text
}

pub fn write_report_json(
    path: &Path,
    traj: &Trajectory<f64>,
    ctx: &ReportContext<'_>,
) -> Result<(), CliError> {
    std::fs::write(path, report_json(traj, ctx))?;
    Ok(())
}

pub fn write_config_echo(path: &Path, cfg: &SimConfig) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(cfg)
        .map_err(|e| CliError::Parse(format!("config echo serialization: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
