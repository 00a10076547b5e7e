//! The distributed protocol: per-agent surplus-consensus updates with
//! clipped diminishing-step gradients, plus the equivalent stacked linear
//! iteration used as a cross-checking engine.
//!
//! Each agent i carries a position r_i, a velocity q_i and a surplus y_i.
//! The control law steers x_i = r_i + q_i toward consensus while the surplus
//! channel re-injects the mass a directed, unbalanced weight matrix would
//! otherwise leak, so the stacked average keeps following the gradient flow.
//! Gradients are evaluated at w_i = x_i + Σ_j b_ij y_j and clipped to zero
//! whenever the current step α_k cannot yet absorb them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    compute_metrics, convergence_report, ConvergenceReport, MetricsRecord, Tolerances,
};
use crate::error::{Error, Result};
use crate::graph::{
    laplacian, max_epsilon, validate_strong_connectivity, SurplusMatrix, WeightedDigraph,
};
use crate::linalg::{vec_dot, vec_norm, Mat};
use crate::objective::{ObjectiveFamily, OptimalityOracle};
use crate::scalar::{as_f64, fl, Scalar};

/// ρ(M − M_∞) must stay below 1 minus this margin or the configuration is
/// rejected before any stepping happens.
pub const SPECTRAL_GUARD_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Harmonic,
    Power,
}

/// Diminishing step sizes α_k = α₀ / (k+1)^p with p ∈ (0.5, 1], so the steps
/// sum to infinity while their squares remain summable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule<S> {
    kind: ScheduleKind,
    alpha0: S,
    exponent: S,
}

impl<S: Scalar> StepSchedule<S> {
    pub fn harmonic(alpha0: S) -> Result<Self> {
        if !(alpha0 > S::zero()) || !alpha0.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "α₀ = {alpha0} must be positive and finite"
            )));
        }
        Ok(StepSchedule { kind: ScheduleKind::Harmonic, alpha0, exponent: S::one() })
    }

    pub fn power(alpha0: S, p: S) -> Result<Self> {
        if !(alpha0 > S::zero()) || !alpha0.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "α₀ = {alpha0} must be positive and finite"
            )));
        }
        if !p.is_finite() || !(p > fl::<S>(0.5)) || p > S::one() {
            return Err(Error::InvalidSchedule(format!(
                "exponent p = {p} outside (0.5, 1]: the steps must sum to infinity while their squares converge"
            )));
        }
        Ok(StepSchedule { kind: ScheduleKind::Power, alpha0, exponent: p })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn alpha0(&self) -> S {
        self.alpha0
    }

    pub fn exponent(&self) -> S {
        self.exponent
    }

    /// α_k.
    pub fn alpha(&self, k: u64) -> S {
        let kk = fl::<S>((k + 1) as f64);
        match self.kind {
            ScheduleKind::Harmonic => self.alpha0 / kk,
            ScheduleKind::Power => self.alpha0 / kk.powf(self.exponent),
        }
    }

    /// Confirms numerically that the schedule is admissible over a horizon:
    /// steps never increase and the square-sum tail term is negligible
    /// against the partial sum. The constructors already guarantee this
    /// analytically; the check exists so the claim is testable.
    pub fn check_admissibility(&self, horizon: u64) -> Result<()> {
        let mut prev = as_f64(self.alpha(0));
        let mut sum_sq = prev * prev;
        for k in 1..=horizon {
            let a = as_f64(self.alpha(k));
            if !(a > 0.0) {
                return Err(Error::InvalidSchedule(format!("α_{k} = {a} is not positive")));
            }
            if a > prev * (1.0 + 1e-15) {
                return Err(Error::InvalidSchedule(format!("steps increase at k = {k}")));
            }
            sum_sq += a * a;
            prev = a;
        }
        let tail = prev * prev;
        if tail >= 1e-4 * sum_sq {
            return Err(Error::InvalidSchedule(format!(
                "square-sum tail {tail:e} is not negligible against the partial sum {sum_sq:e} at k = {horizon}"
            )));
        }
        Ok(())
    }
}

/// Sampling time, surplus gain and step schedule, plus the switch that turns
/// the surplus channel off for baseline comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams<S> {
    pub t: S,
    pub epsilon: S,
    pub schedule: StepSchedule<S>,
    pub surplus_enabled: bool,
}

impl<S: Scalar> ProtocolParams<S> {
    pub fn new(t: S, epsilon: S, schedule: StepSchedule<S>) -> Result<Self> {
        if !(t > S::zero()) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sampling time T = {t} must be positive and finite"
            )));
        }
        if !(epsilon > S::zero()) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "surplus gain ε = {epsilon} must be positive and finite"
            )));
        }
        Ok(ProtocolParams { t, epsilon, schedule, surplus_enabled: true })
    }

    /// Baseline comparison mode: no surplus channel, gradients taken at x_i.
    pub fn baseline(t: S, schedule: StepSchedule<S>) -> Result<Self> {
        if !(t > S::zero()) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sampling time T = {t} must be positive and finite"
            )));
        }
        Ok(ProtocolParams { t, epsilon: S::zero(), schedule, surplus_enabled: false })
    }

    /// Checks the per-node sampling-time condition 1/T − Σ_j a_ij > 0 and,
    /// when the surplus channel is on, ε < min_i (1/T − Σ_j a_ij).
    pub fn validate_for(&self, g: &WeightedDigraph<S>) -> Result<()> {
        let eps_max = max_epsilon(g, self.t)?;
        if self.surplus_enabled && !(self.epsilon < eps_max) {
            let mut node = 0;
            let mut bound = S::infinity();
            for i in 0..g.n() {
                let margin = S::one() / self.t - g.in_weight_sum(i);
                if margin < bound {
                    bound = margin;
                    node = i;
                }
            }
            return Err(Error::EpsilonTooLarge {
                node: node + 1,
                epsilon: as_f64(self.epsilon),
                bound: as_f64(bound),
            });
        }
        Ok(())
    }
}

/// One agent's stored state. x_i = r_i + q_i, w_i and θ_i = x_i + y_i are
/// derived on demand, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<S> {
    pub r: Vec<S>,
    pub q: Vec<S>,
    pub y: Vec<S>,
}

impl<S: Scalar> AgentState<S> {
    pub fn new(r: Vec<S>, q: Vec<S>, y: Vec<S>) -> Result<Self> {
        if q.len() != r.len() || y.len() != r.len() {
            return Err(Error::DimensionMismatch {
                context: "agent state".into(),
                expected: r.len(),
                got: q.len().max(y.len()),
            });
        }
        let state = AgentState { r, q, y };
        if !state.is_finite() {
            return Err(Error::InvalidArgument("agent state has non-finite entries".into()));
        }
        Ok(state)
    }

    pub fn origin(dim: usize) -> Self {
        AgentState { r: vec![S::zero(); dim], q: vec![S::zero(); dim], y: vec![S::zero(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn x(&self) -> Vec<S> {
        self.r.iter().zip(&self.q).map(|(&r, &q)| r + q).collect()
    }

    fn is_finite(&self) -> bool {
        self.r.iter().chain(&self.q).chain(&self.y).all(|v| v.is_finite())
    }
}

/// All n agents at iteration k.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState<S> {
    pub agents: Vec<AgentState<S>>,
    pub k: u64,
}

impl<S: Scalar> SwarmState<S> {
    pub fn new(agents: Vec<AgentState<S>>, k: u64) -> Result<Self> {
        let dim = match agents.first() {
            Some(a) => a.dim(),
            None => return Err(Error::InvalidArgument("swarm needs at least one agent".into())),
        };
        for a in &agents {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "swarm state".into(),
                    expected: dim,
                    got: a.dim(),
                });
            }
        }
        Ok(SwarmState { agents, k })
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.agents[0].dim()
    }

    pub fn x(&self, i: usize) -> Vec<S> {
        self.agents[i].x()
    }

    /// w_i = x_i + Σ_j b_ij y_j, the point gradients are evaluated at.
    pub fn w(&self, i: usize, b: &SurplusMatrix<S>) -> Vec<S> {
        let mut w = self.x(i);
        for j in 0..self.n() {
            let bij = b.entry(i, j);
            if bij != S::zero() {
                for (wd, &yd) in w.iter_mut().zip(&self.agents[j].y) {
                    *wd = *wd + bij * yd;
                }
            }
        }
        w
    }

    /// θ_i = x_i + y_i.
    pub fn theta(&self, i: usize) -> Vec<S> {
        self.x(i).iter().zip(&self.agents[i].y).map(|(&x, &y)| x + y).collect()
    }

    pub fn stacked(&self) -> StackedState<S> {
        StackedState::from_swarm(self)
    }
}

/// The 2n·s stacked vector Z with blocks z_i = x_i and z_{n+i} = y_i.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedState<S> {
    z: Vec<S>,
    n: usize,
    dim: usize,
}

impl<S: Scalar> StackedState<S> {
    pub fn new(z: Vec<S>, n: usize, dim: usize) -> Result<Self> {
        if z.len() != 2 * n * dim {
            return Err(Error::DimensionMismatch {
                context: "stacked state".into(),
                expected: 2 * n * dim,
                got: z.len(),
            });
        }
        Ok(StackedState { z, n, dim })
    }

    pub fn from_swarm(state: &SwarmState<S>) -> Self {
        let (n, dim) = (state.n(), state.dim());
        let mut z = Vec::with_capacity(2 * n * dim);
        for i in 0..n {
            z.extend(state.x(i));
        }
        for a in &state.agents {
            z.extend_from_slice(&a.y);
        }
        StackedState { z, n, dim }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Block b ∈ 0..2n as a slice of length dim.
    pub fn block(&self, b: usize) -> &[S] {
        &self.z[b * self.dim..(b + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.z
    }

    /// 1ᵀZ per coordinate: the conserved quantity of the surplus dynamics
    /// up to the gradient drift.
    pub fn coordinate_sums(&self) -> Vec<S> {
        let mut sums = vec![S::zero(); self.dim];
        for b in 0..2 * self.n {
            for (s, &v) in sums.iter_mut().zip(self.block(b)) {
                *s = *s + v;
            }
        }
        sums
    }
}

/// M = [[I − LT, εT·I], [LT, B − εT·I]], column sums 1 by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix<S> {
    m: Mat<S>,
    n: usize,
    t: S,
}

impl<S: Scalar> SystemMatrix<S> {
    /// Wraps an externally assembled 2n×2n matrix. Shape and column
    /// stochasticity are enforced; the per-node parameter conditions are
    /// not, so prefer [`build_system_matrix`] outside of analysis code.
    pub fn from_parts(m: Mat<S>, t: S) -> Result<Self> {
        if m.rows() != m.cols() || !m.rows().is_multiple_of(2) || m.rows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "system matrix must be square with even dimension, got {}×{}",
                m.rows(),
                m.cols()
            )));
        }
        if !(t > S::zero()) {
            return Err(Error::InvalidArgument(format!("sampling time T = {t} must be positive")));
        }
        let sm = SystemMatrix { n: m.rows() / 2, m, t };
        let res = sm.column_sum_residual();
        if res > fl(1e-12) {
            return Err(Error::InvalidArgument(format!(
                "system matrix columns must sum to 1, worst residual {res}"
            )));
        }
        Ok(sm)
    }

    pub fn matrix(&self) -> &Mat<S> {
        &self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sampling_time(&self) -> S {
        self.t
    }

    /// M_∞ = [[(1/n)11ᵀ, (1/n)11ᵀ], [0, 0]], the limit of M^k.
    pub fn limit(&self) -> Mat<S> {
        let inv = S::one() / fl::<S>(self.n as f64);
        let mut m = Mat::zeros(2 * self.n, 2 * self.n);
        for i in 0..self.n {
            for j in 0..2 * self.n {
                m[(i, j)] = inv;
            }
        }
        m
    }

    pub fn column_sum_residual(&self) -> S {
        self.m.column_sums().iter().fold(S::zero(), |worst, &s| worst.max((s - S::one()).abs()))
    }

    /// Estimates ρ(M − M_∞) and rejects configurations where it is not
    /// safely below 1. The theory guarantees a geometric rate exists for
    /// small enough ε but gives no usable bound, so this check replaces an
    /// unverifiable premise with a loud failure.
    pub fn check_spectral_guard(&self) -> Result<S> {
        let rho = self.m.sub(&self.limit()).spectral_radius_estimate();
        let limit = 1.0 - SPECTRAL_GUARD_MARGIN;
        if as_f64(rho) >= limit {
            return Err(Error::SpectralGuard { rho: as_f64(rho), limit });
        }
        Ok(rho)
    }
}

/// Assembles the stacked iteration matrix for a validated parameter set.
pub fn build_system_matrix<S: Scalar>(
    g: &WeightedDigraph<S>,
    b: &SurplusMatrix<S>,
    params: &ProtocolParams<S>,
) -> Result<SystemMatrix<S>> {
    if !params.surplus_enabled {
        return Err(Error::InvalidArgument(
            "the stacked system matrix is defined for the surplus-enabled protocol".into(),
        ));
    }
    params.validate_for(g)?;
    let n = g.n();
    if b.matrix().rows() != n {
        return Err(Error::DimensionMismatch {
            context: "surplus matrix".into(),
            expected: n,
            got: b.matrix().rows(),
        });
    }
    let t = params.t;
    let eps_t = params.epsilon * t;
    let mut m = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        let row_sum = g.in_weight_sum(i);
        m[(i, i)] = S::one() - t * row_sum;
        m[(n + i, i)] = t * row_sum;
        for j in g.in_neighbors(i) {
            let ta = t * g.weight(i, j);
            m[(i, j)] = ta;
            m[(n + i, j)] = -ta;
        }
        m[(i, n + i)] = eps_t;
        for j in 0..n {
            let bij = b.entry(i, j);
            if bij != S::zero() {
                m[(n + i, n + j)] = bij;
            }
        }
        m[(n + i, n + i)] = m[(n + i, n + i)] - eps_t;
    }
    Ok(SystemMatrix { m, n, t })
}

/// d_i: the gradient of f_i at w, or zero when 1/√α_k < ‖∇f_i(w)‖²
/// (strictly; ties keep the gradient). The zero branch guarantees
/// ‖α_k d_i‖ ≤ α_k^{3/4}.
pub fn clipped_gradient<S: Scalar>(
    family: &ObjectiveFamily<S>,
    i: usize,
    w: &[S],
    alpha_k: S,
) -> Result<Vec<S>> {
    Ok(clipped_gradient_detail(family, i, w, alpha_k)?.0)
}

fn clipped_gradient_detail<S: Scalar>(
    family: &ObjectiveFamily<S>,
    i: usize,
    w: &[S],
    alpha_k: S,
) -> Result<(Vec<S>, bool)> {
    if !(alpha_k > S::zero()) {
        return Err(Error::InvalidArgument(format!("step size α = {alpha_k} must be positive")));
    }
    let g = family.grad(i, w)?;
    let sq = vec_dot(&g, &g);
    let threshold = S::one() / alpha_k.sqrt();
    if threshold < sq {
        Ok((vec![S::zero(); g.len()], true))
    } else {
        Ok((g, false))
    }
}

struct StepDetail<S> {
    alpha: S,
    w: Vec<Vec<S>>,
    d: Vec<Vec<S>>,
    clip_active: Vec<bool>,
}

/// Advances every agent one synchronous round using only in-neighbor data.
pub fn local_step<S: Scalar>(
    state: &SwarmState<S>,
    g: &WeightedDigraph<S>,
    b: &SurplusMatrix<S>,
    family: &ObjectiveFamily<S>,
    params: &ProtocolParams<S>,
) -> Result<SwarmState<S>> {
    Ok(local_step_detail(state, g, b, family, params)?.0)
}

fn local_step_detail<S: Scalar>(
    state: &SwarmState<S>,
    g: &WeightedDigraph<S>,
    b: &SurplusMatrix<S>,
    family: &ObjectiveFamily<S>,
    params: &ProtocolParams<S>,
) -> Result<(SwarmState<S>, StepDetail<S>)> {
    let n = g.n();
    let s = state.dim();
    if state.n() != n {
        return Err(Error::DimensionMismatch {
            context: "swarm size".into(),
            expected: n,
            got: state.n(),
        });
    }
    if family.n() != n || family.dim() != s {
        return Err(Error::DimensionMismatch {
            context: "objective family".into(),
            expected: n * s,
            got: family.n() * family.dim(),
        });
    }
    if params.surplus_enabled && b.matrix().rows() != n {
        return Err(Error::DimensionMismatch {
            context: "surplus matrix".into(),
            expected: n,
            got: b.matrix().rows(),
        });
    }
    let t = params.t;
    let alpha = params.schedule.alpha(state.k);
    let xs: Vec<Vec<S>> = (0..n).map(|i| state.x(i)).collect();

    let mut agents = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    let mut ds = Vec::with_capacity(n);
    let mut clips = Vec::with_capacity(n);
    for i in 0..n {
        let mut cons = vec![S::zero(); s];
        for j in g.in_neighbors(i) {
            let a = g.weight(i, j);
            for d in 0..s {
                cons[d] = cons[d] + a * (xs[j][d] - xs[i][d]);
            }
        }
        let w_i = if params.surplus_enabled { state.w(i, b) } else { xs[i].clone() };
        let (d_i, clipped) = clipped_gradient_detail(family, i, &w_i, alpha)?;

        let me = &state.agents[i];
        let mut r = Vec::with_capacity(s);
        let mut q = Vec::with_capacity(s);
        let mut y = Vec::with_capacity(s);
        for dd in 0..s {
            let u = if params.surplus_enabled {
                -me.q[dd] + cons[dd] + params.epsilon * me.y[dd]
            } else {
                -me.q[dd] + cons[dd] - alpha * d_i[dd]
            };
            r.push(me.r[dd] + t * me.q[dd]);
            q.push(me.q[dd] + t * u);
            if params.surplus_enabled {
                let mut by = S::zero();
                for j in 0..n {
                    let bij = b.entry(i, j);
                    if bij != S::zero() {
                        by = by + bij * state.agents[j].y[dd];
                    }
                }
                y.push(-(t * cons[dd]) + by - params.epsilon * t * me.y[dd] - alpha * t * d_i[dd]);
            } else {
                y.push(S::zero());
            }
        }
        let next = AgentState { r, q, y };
        if !next.is_finite() {
            return Err(Error::Divergence {
                k: state.k,
                what: format!("agent {} state became non-finite", i + 1),
            });
        }
        agents.push(next);
        ws.push(w_i);
        ds.push(d_i);
        clips.push(clipped);
    }
    let next = SwarmState { agents, k: state.k + 1 };
    Ok((next, StepDetail { alpha, w: ws, d: ds, clip_active: clips }))
}

/// Z(k+1) = (M ⊗ I_s) Z(k) − α_k·T·∇F(k), applied blockwise. `grads` holds
/// the n clipped gradients d_i; the zero blocks of ∇F are implicit.
pub fn stacked_step<S: Scalar>(
    z: &StackedState<S>,
    m: &SystemMatrix<S>,
    alpha_k: S,
    grads: &[Vec<S>],
) -> Result<StackedState<S>> {
    let n = m.n();
    let s = z.dim();
    if z.n() != n {
        return Err(Error::DimensionMismatch {
            context: "stacked state".into(),
            expected: n,
            got: z.n(),
        });
    }
    if grads.len() != n {
        return Err(Error::DimensionMismatch {
            context: "gradient blocks".into(),
            expected: n,
            got: grads.len(),
        });
    }
    for (i, g) in grads.iter().enumerate() {
        if g.len() != s {
            return Err(Error::DimensionMismatch {
                context: format!("gradient block {}", i + 1),
                expected: s,
                got: g.len(),
            });
        }
    }
    let mat = m.matrix();
    let mut out = vec![S::zero(); 2 * n * s];
    for bi in 0..2 * n {
        for bj in 0..2 * n {
            let mij = mat[(bi, bj)];
            if mij == S::zero() {
                continue;
            }
            let src = z.block(bj);
            for dd in 0..s {
                out[bi * s + dd] = out[bi * s + dd] + mij * src[dd];
            }
        }
    }
    let at = alpha_k * m.sampling_time();
    for (i, g) in grads.iter().enumerate() {
        for dd in 0..s {
            out[(n + i) * s + dd] = out[(n + i) * s + dd] - at * g[dd];
        }
    }
    StackedState::new(out, n, s)
}

/// Default initial condition: r_i ~ uniform[−5, 5]^dim from a seeded
/// generator, q_i = y_i = 0. Draws happen in f64 so the stream is identical
/// across scalar types.
pub fn default_initial_state<S: Scalar>(n: usize, dim: usize, seed: u64) -> SwarmState<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = (0..n)
        .map(|_| {
            let r = (0..dim).map(|_| fl(rng.random_range(-5.0..5.0))).collect();
            AgentState { r, q: vec![S::zero(); dim], y: vec![S::zero(); dim] }
        })
        .collect();
    SwarmState { agents, k: 0 }
}

/// Everything one simulation needs. Graph, surplus weights, objectives and
/// the optimality oracle are borrowed so a comparison harness can share them
/// across runs.
#[derive(Clone)]
pub struct RunSpec<'a, S: Scalar> {
    pub graph: &'a WeightedDigraph<S>,
    pub surplus: &'a SurplusMatrix<S>,
    pub family: &'a ObjectiveFamily<S>,
    pub params: ProtocolParams<S>,
    pub initial: SwarmState<S>,
    pub k_max: u64,
    pub record_stride: u64,
    pub oracle: Option<&'a OptimalityOracle<S>>,
    pub tolerances: Tolerances<S>,
    /// Boundedness guard on max(‖x_i‖, ‖θ_i‖); exceeding it is a divergence.
    pub guard: S,
    /// Run the independent second engine in lockstep and compare states.
    pub verify: bool,
    pub verify_tol: S,
}

impl<'a, S: Scalar> RunSpec<'a, S> {
    pub fn new(
        graph: &'a WeightedDigraph<S>,
        surplus: &'a SurplusMatrix<S>,
        family: &'a ObjectiveFamily<S>,
        params: ProtocolParams<S>,
        initial: SwarmState<S>,
        k_max: u64,
    ) -> Self {
        RunSpec {
            graph,
            surplus,
            family,
            params,
            initial,
            k_max,
            record_stride: 1,
            oracle: None,
            tolerances: Tolerances::default(),
            guard: fl(1e6),
            verify: false,
            verify_tol: fl(1e-10),
        }
    }
}

/// Step-level health counters accumulated over a whole run. The mass and θ
/// fields are `None` in baseline mode, where neither identity holds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDiagnostics<S> {
    /// Worst per-coordinate |1ᵀZ(k+1) − 1ᵀZ(k) + α_k·T·Σ_i d_i(k)|.
    pub max_mass_residual: Option<S>,
    /// Worst per-coordinate |θ_i(k+1) − (w_i(k) − α_k·T·d_i(k))|.
    pub max_theta_residual: Option<S>,
    /// Worst ‖α_k d_i‖ − α_k^{3/4}, floored at zero.
    pub max_clip_overshoot: S,
    /// Agent-steps on which the clip rule zeroed the gradient.
    pub clip_events: u64,
    pub first_clip: Option<u64>,
    pub last_clip: Option<u64>,
    /// Largest max(‖x_i‖, ‖θ_i‖) seen over the whole run.
    pub max_state_norm: S,
    pub max_applied_grad_norm: S,
    pub verify_max_deviation: Option<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint<S> {
    pub k: u64,
    pub alpha: S,
    pub state: SwarmState<S>,
    pub metrics: MetricsRecord<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub points: Vec<TrajectoryPoint<S>>,
    pub diagnostics: RunDiagnostics<S>,
    pub report: ConvergenceReport<S>,
}

impl<S: Scalar> Trajectory<S> {
    /// The state at K_max; the final iteration is always recorded.
    pub fn final_state(&self) -> &SwarmState<S> {
        &self.points.last().expect("a run records at least k = 0").state
    }
}

/// Runs the protocol for `k_max` steps, recording metrics every
/// `record_stride` iterations (the initial and final states are always
/// recorded). With `verify` set, an independently coded engine (the stacked
/// iteration when the surplus channel is on, a dense reference recursion in
/// baseline mode) advances in lockstep and any per-coordinate disagreement
/// beyond `verify_tol` aborts the run.
pub fn run<S: Scalar>(spec: &RunSpec<'_, S>) -> Result<Trajectory<S>> {
    let g = spec.graph;
    let n = g.n();
    let s = spec.initial.dim();
    if spec.k_max == 0 {
        return Err(Error::InvalidArgument("K_max must be at least 1".into()));
    }
    if spec.record_stride == 0 {
        return Err(Error::InvalidArgument("record_stride must be at least 1".into()));
    }
    if !(spec.guard > S::zero()) {
        return Err(Error::InvalidArgument("boundedness guard must be positive".into()));
    }
    if spec.initial.n() != n {
        return Err(Error::DimensionMismatch {
            context: "initial state".into(),
            expected: n,
            got: spec.initial.n(),
        });
    }
    if spec.family.n() != n {
        return Err(Error::DimensionMismatch {
            context: "objective members".into(),
            expected: n,
            got: spec.family.n(),
        });
    }
    if spec.family.dim() != s {
        return Err(Error::DimensionMismatch {
            context: "objective dimension".into(),
            expected: s,
            got: spec.family.dim(),
        });
    }
    if !validate_strong_connectivity(g) {
        return Err(Error::NotStronglyConnected(
            "the communication digraph must form one strongly connected component".into(),
        ));
    }
    spec.params.validate_for(g)?;
    let surplus_on = spec.params.surplus_enabled;
    let system = if surplus_on {
        let sm = build_system_matrix(g, spec.surplus, &spec.params)?;
        sm.check_spectral_guard()?;
        Some(sm)
    } else {
        None
    };

    let mut stacked = if spec.verify && surplus_on { Some(spec.initial.stacked()) } else { None };
    let w_ref: Option<Mat<S>> = if spec.verify && !surplus_on {
        Some(Mat::identity(n).sub(&laplacian(g).matrix().scale(spec.params.t)))
    } else {
        None
    };
    let mut x_ref: Option<Vec<Vec<S>>> =
        w_ref.as_ref().map(|_| (0..n).map(|i| spec.initial.x(i)).collect());

    let mut state = spec.initial.clone();
    let start_k = state.k;
    let k_end = start_k + spec.k_max;
    let mut points: Vec<TrajectoryPoint<S>> = Vec::new();
    let mut diag = RunDiagnostics {
        max_mass_residual: surplus_on.then(S::zero),
        max_theta_residual: surplus_on.then(S::zero),
        max_clip_overshoot: S::zero(),
        clip_events: 0,
        first_clip: None,
        last_clip: None,
        max_state_norm: S::zero(),
        max_applied_grad_norm: S::zero(),
        verify_max_deviation: spec.verify.then(S::zero),
    };
    fold_state_norm(&mut diag, &state);
    let mut last_residual: Option<S> = None;

    loop {
        let k = state.k;
        if (k - start_k).is_multiple_of(spec.record_stride) || k == k_end {
            let mut rec = compute_metrics(&state, spec.family, spec.oracle)?;
            rec.conservation_residual = last_residual;
            points.push(TrajectoryPoint {
                k,
                alpha: spec.params.schedule.alpha(k),
                state: state.clone(),
                metrics: rec,
            });
        }
        if k == k_end {
            break;
        }

        let prev_sums = surplus_on.then(|| coordinate_sums(&state));
        let (next, det) = local_step_detail(&state, g, spec.surplus, spec.family, &spec.params)?;
        let alpha = det.alpha;

        let clipped_now = det.clip_active.iter().filter(|&&c| c).count() as u64;
        if clipped_now > 0 {
            diag.clip_events += clipped_now;
            diag.first_clip.get_or_insert(k);
            diag.last_clip = Some(k);
        }
        let cap = alpha.powf(fl(0.75));
        for d_i in &det.d {
            let norm = vec_norm(d_i);
            diag.max_applied_grad_norm = diag.max_applied_grad_norm.max(norm);
            diag.max_clip_overshoot = diag.max_clip_overshoot.max(alpha * norm - cap);
        }

        if surplus_on {
            let at = alpha * spec.params.t;
            let mut worst_theta = diag.max_theta_residual.unwrap_or_else(S::zero);
            for i in 0..n {
                let theta = next.theta(i);
                for (dd, &th) in theta.iter().enumerate() {
                    let expect = det.w[i][dd] - at * det.d[i][dd];
                    worst_theta = worst_theta.max((th - expect).abs());
                }
            }
            diag.max_theta_residual = Some(worst_theta);

            let next_sums = coordinate_sums(&next);
            let prev_sums = prev_sums.expect("computed before the step");
            let mut step_res = S::zero();
            for dd in 0..s {
                let mut dsum = S::zero();
                for d_i in &det.d {
                    dsum = dsum + d_i[dd];
                }
                step_res = step_res.max((next_sums[dd] - prev_sums[dd] + at * dsum).abs());
            }
            diag.max_mass_residual =
                Some(diag.max_mass_residual.unwrap_or_else(S::zero).max(step_res));
            last_residual = Some(step_res);
        }

        fold_state_norm(&mut diag, &next);
        if diag.max_state_norm > spec.guard {
            return Err(Error::Divergence {
                k: next.k,
                what: format!(
                    "max state norm {} exceeded the boundedness guard {}",
                    diag.max_state_norm, spec.guard
                ),
            });
        }

        if let Some(zs) = stacked.as_mut() {
            let m = system.as_ref().expect("surplus mode builds the system matrix");
            let mut grads = Vec::with_capacity(n);
            for i in 0..n {
                let mut w = zs.block(i).to_vec();
                for j in 0..n {
                    let bij = spec.surplus.entry(i, j);
                    if bij != S::zero() {
                        let yj = zs.block(n + j);
                        for dd in 0..s {
                            w[dd] = w[dd] + bij * yj[dd];
                        }
                    }
                }
                grads.push(clipped_gradient(spec.family, i, &w, alpha)?);
            }
            let znext = stacked_step(zs, m, alpha, &grads)?;
            let mut dev = S::zero();
            for i in 0..n {
                let x = next.x(i);
                let zx = znext.block(i);
                let zy = znext.block(n + i);
                for dd in 0..s {
                    dev = dev.max((x[dd] - zx[dd]).abs());
                    dev = dev.max((next.agents[i].y[dd] - zy[dd]).abs());
                }
            }
            diag.verify_max_deviation =
                Some(diag.verify_max_deviation.unwrap_or_else(S::zero).max(dev));
            if dev > spec.verify_tol {
                return Err(Error::VerificationMismatch {
                    k: next.k,
                    deviation: as_f64(dev),
                    limit: as_f64(spec.verify_tol),
                });
            }
            *zs = znext;
        }
        if let (Some(w), Some(xr)) = (w_ref.as_ref(), x_ref.as_mut()) {
            let at = alpha * spec.params.t;
            let mut xnext = vec![vec![S::zero(); s]; n];
            for i in 0..n {
                let d_i = clipped_gradient(spec.family, i, &xr[i], alpha)?;
                for dd in 0..s {
                    let mut acc = S::zero();
                    for (j, xj) in xr.iter().enumerate() {
                        acc = acc + w[(i, j)] * xj[dd];
                    }
                    xnext[i][dd] = acc - at * d_i[dd];
                }
            }
            let mut dev = S::zero();
            for (i, xn) in xnext.iter().enumerate() {
                let x = next.x(i);
                for dd in 0..s {
                    dev = dev.max((x[dd] - xn[dd]).abs());
                }
            }
            diag.verify_max_deviation =
                Some(diag.verify_max_deviation.unwrap_or_else(S::zero).max(dev));
            if dev > spec.verify_tol {
                return Err(Error::VerificationMismatch {
                    k: next.k,
                    deviation: as_f64(dev),
                    limit: as_f64(spec.verify_tol),
                });
            }
            *xr = xnext;
        }

        state = next;
    }

    let records: Vec<MetricsRecord<S>> = points.iter().map(|p| p.metrics.clone()).collect();
    let report = convergence_report(&records, &spec.tolerances)?;
    Ok(Trajectory { points, diagnostics: diag, report })
}

fn coordinate_sums<S: Scalar>(state: &SwarmState<S>) -> Vec<S> {
    let mut sums = vec![S::zero(); state.dim()];
    for i in 0..state.n() {
        let x = state.x(i);
        for dd in 0..state.dim() {
            sums[dd] = sums[dd] + x[dd] + state.agents[i].y[dd];
        }
    }
    sums
}

fn fold_state_norm<S: Scalar>(diag: &mut RunDiagnostics<S>, state: &SwarmState<S>) {
    for i in 0..state.n() {
        let xn = vec_norm(&state.x(i));
        let tn = vec_norm(&state.theta(i));
        diag.max_state_norm = diag.max_state_norm.max(xn.max(tn));
    }
}
