//! Diagnostics over trajectories and the stacked matrix: consensus and
//! optimality metrics, geometric-decay estimation for M^k − M_∞, and
//! convergence reporting with sustained-crossing detection.

use crate::error::{Error, Result};
use crate::linalg::{vec_dot, vec_norm, vec_sub};
use crate::objective::{ObjectiveFamily, OptimalityOracle};
use crate::protocol::{SwarmState, SystemMatrix};
use crate::scalar::{as_f64, fl, Scalar};

/// Per-metric thresholds for convergence detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<S> {
    pub consensus: S,
    pub surplus: S,
    pub velocity: S,
}

impl<S: Scalar> Default for Tolerances<S> {
    fn default() -> Self {
        Tolerances { consensus: fl(1e-3), surplus: fl(1e-3), velocity: fl(1e-3) }
    }
}

/// Snapshot metrics at one recorded iteration. The gap fields are `None`
/// when no optimality oracle is available, and `conservation_residual` is
/// `None` at k = 0 and in baseline mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord<S> {
    pub k: u64,
    /// max_{i,j} ‖x_i − x_j‖.
    pub consensus_error: S,
    /// max_i ‖y_i‖.
    pub surplus_norm: S,
    /// max_i ‖q_i‖.
    pub velocity_norm: S,
    /// z̄ = (1/n) Σ_{i=1}^{2n} z_i, the running average the theory tracks.
    pub zbar: Vec<S>,
    /// f(z̄) − f*.
    pub optimality_gap: Option<S>,
    /// ‖z̄ − P_X(z̄)‖².
    pub dist_sq_opt: Option<S>,
    pub conservation_residual: Option<S>,
}

pub fn compute_metrics<S: Scalar>(
    state: &SwarmState<S>,
    family: &ObjectiveFamily<S>,
    oracle: Option<&OptimalityOracle<S>>,
) -> Result<MetricsRecord<S>> {
    let n = state.n();
    let s = state.dim();
    if family.n() != n || family.dim() != s {
        return Err(Error::DimensionMismatch {
            context: "metrics objective family".into(),
            expected: n * s,
            got: family.n() * family.dim(),
        });
    }
    let xs: Vec<Vec<S>> = (0..n).map(|i| state.x(i)).collect();
    let mut consensus_error = S::zero();
    for i in 0..n {
        for j in i + 1..n {
            consensus_error = consensus_error.max(vec_norm(&vec_sub(&xs[i], &xs[j])));
        }
    }
    let mut surplus_norm = S::zero();
    let mut velocity_norm = S::zero();
    for a in &state.agents {
        surplus_norm = surplus_norm.max(vec_norm(&a.y));
        velocity_norm = velocity_norm.max(vec_norm(&a.q));
    }
    let inv_n = S::one() / fl::<S>(n as f64);
    let mut zbar = vec![S::zero(); s];
    for (i, x) in xs.iter().enumerate() {
        for dd in 0..s {
            zbar[dd] = zbar[dd] + (x[dd] + state.agents[i].y[dd]) * inv_n;
        }
    }
    let optimality_gap = match oracle {
        Some(o) => Some(family.team_eval(&zbar)? - o.f_star),
        None => None,
    };
    let dist_sq_opt = match oracle {
        Some(o) if family.unique_optimum() => {
            let d = vec_sub(&zbar, &o.x_star);
            Some(vec_dot(&d, &d))
        }
        _ => None,
    };
    Ok(MetricsRecord {
        k: state.k,
        consensus_error,
        surplus_norm,
        velocity_norm,
        zbar,
        optimality_gap,
        dist_sq_opt,
        conservation_residual: None,
    })
}

/// Fitted geometric envelope ‖M^k − M_∞‖ ≤ Γ̂·γ̂^k over the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayEstimate<S> {
    pub gamma_hat: S,
    pub big_gamma_hat: S,
    /// Log-space fit residuals at the points the fit used.
    pub residuals: Vec<S>,
    /// e_k in the primary norm, k = 1..k_max.
    pub errors: Vec<S>,
    /// The same errors in the Frobenius norm, kept for auditability.
    pub errors_frobenius: Vec<S>,
    /// Which norm `errors` uses.
    pub norm: &'static str,
    /// True when every e_k is exactly zero and there is nothing to fit.
    pub exact: bool,
}

impl<S: Scalar> DecayEstimate<S> {
    /// Γ̂·γ̂^k, the fitted envelope at iteration k.
    pub fn bound(&self, k: usize) -> S {
        if self.exact {
            return S::zero();
        }
        fl(as_f64(self.big_gamma_hat) * as_f64(self.gamma_hat).powi(k as i32))
    }

    /// Checks e_k ≤ bound(k)·1.1 at every sampled k.
    pub fn envelope_holds(&self) -> bool {
        self.errors
            .iter()
            .enumerate()
            .all(|(idx, &e)| as_f64(e) <= as_f64(self.bound(idx + 1)) * 1.1)
    }
}

/// Estimates (Γ̂, γ̂) for e_k = ‖M^k − M_∞‖ by repeated multiplication and a
/// log-linear fit over the tail half of the usable points. Points below the
/// floating-point noise floor ε_S^{3/4} are excluded from the fit (they
/// measure roundoff, not decay); the prefactor is then maximized over every
/// sampled point so the returned envelope holds on all of them.
pub fn estimate_decay<S: Scalar>(m: &SystemMatrix<S>, k_max: usize) -> Result<DecayEstimate<S>> {
    if k_max < 20 {
        return Err(Error::InvalidArgument(format!(
            "k_max = {k_max} must be at least 20 for a usable tail fit"
        )));
    }
    let minf = m.limit();
    let mut power = m.matrix().clone();
    let mut errors = Vec::with_capacity(k_max);
    let mut errors_frobenius = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let diff = power.sub(&minf);
        errors.push(diff.spectral_norm());
        errors_frobenius.push(diff.frobenius_norm());
        if k < k_max {
            power = power.matmul(m.matrix());
        }
    }
    if errors.iter().all(|&e| e == S::zero()) {
        return Ok(DecayEstimate {
            gamma_hat: S::zero(),
            big_gamma_hat: S::zero(),
            residuals: Vec::new(),
            errors,
            errors_frobenius,
            norm: "spectral",
            exact: true,
        });
    }

    let floor = as_f64(S::epsilon()).powf(0.75);
    let collect_pts = |threshold: f64| -> Vec<(f64, f64)> {
        errors
            .iter()
            .enumerate()
            .filter(|(_, &e)| as_f64(e) > threshold)
            .map(|(idx, &e)| ((idx + 1) as f64, as_f64(e).ln()))
            .collect()
    };
    let mut pts = collect_pts(floor);
    if pts.len() < 2 {
        pts = collect_pts(0.0);
    }
    let (slope, intercept) = if pts.len() < 2 {
        // A single usable point cannot pin down a rate; any γ < 1 is
        // consistent, so report one and let the prefactor carry the data.
        (0.5f64.ln(), pts[0].1 - pts[0].0 * 0.5f64.ln())
    } else {
        let start = if pts.len() >= 4 { pts.len() / 2 } else { 0 };
        least_squares(&pts[start..])
    };
    let gamma = slope.exp();
    if !(gamma < 1.0) {
        return Err(Error::SpectralGuard { rho: gamma, limit: 1.0 });
    }
    let ln_gamma = gamma.ln();
    let mut ln_big = f64::NEG_INFINITY;
    for (idx, &e) in errors.iter().enumerate() {
        let ef = as_f64(e);
        if ef > 0.0 {
            ln_big = ln_big.max(ef.ln() - (idx + 1) as f64 * ln_gamma);
        }
    }
    let residuals = pts.iter().map(|&(k, ln_e)| fl(ln_e - (intercept + slope * k))).collect();
    Ok(DecayEstimate {
        gamma_hat: fl(gamma),
        big_gamma_hat: fl(ln_big.exp()),
        residuals,
        errors,
        errors_frobenius,
        norm: "spectral",
        exact: false,
    })
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Verdict of a finished run against the tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport<S> {
    pub converged: bool,
    pub k_consensus: Option<u64>,
    pub k_surplus: Option<u64>,
    pub k_velocity: Option<u64>,
    pub final_gap: Option<S>,
    pub x_star_hat: Vec<S>,
}

/// Sustained-crossing detection: a metric counts as converged at the first
/// recorded iteration after its last violation, and only if it then stays
/// below tolerance through the final tenth of the records. Diminishing-step
/// methods drift through thresholds, so first-touch detection would lie.
pub fn convergence_report<S: Scalar>(
    records: &[MetricsRecord<S>],
    tols: &Tolerances<S>,
) -> Result<ConvergenceReport<S>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("convergence report needs at least one record".into()));
    }
    for (name, tol) in
        [("consensus", tols.consensus), ("surplus", tols.surplus), ("velocity", tols.velocity)]
    {
        if !(tol > S::zero()) {
            return Err(Error::InvalidArgument(format!("{name} tolerance must be positive")));
        }
    }
    let k_consensus = sustained_crossing(records, tols.consensus, |r| r.consensus_error);
    let k_surplus = sustained_crossing(records, tols.surplus, |r| r.surplus_norm);
    let k_velocity = sustained_crossing(records, tols.velocity, |r| r.velocity_norm);
    let last = records.last().expect("nonempty");
    Ok(ConvergenceReport {
        converged: k_consensus.is_some() && k_surplus.is_some() && k_velocity.is_some(),
        k_consensus,
        k_surplus,
        k_velocity,
        final_gap: last.optimality_gap,
        x_star_hat: last.zbar.clone(),
    })
}

fn sustained_crossing<S: Scalar>(
    records: &[MetricsRecord<S>],
    tol: S,
    metric: impl Fn(&MetricsRecord<S>) -> S,
) -> Option<u64> {
    let len = records.len();
    let crossing = records.iter().rposition(|r| metric(r) > tol).map_or(0, |i| i + 1);
    if crossing >= len {
        return None;
    }
    let tail_len = (len / 10).max(1);
    let block_start = len - tail_len;
    (crossing <= block_start).then(|| records[crossing].k)
}
