//! Private agent objectives and the centralized optimality oracle.
//!
//! Two built-in families cover the regimes the solver cares about:
//! quadratics (bounded curvature, closed-form team optimum) and coordinate
//! quartics (convex with unbounded gradient, the stress case for gradient
//! clipping). Custom differentiable convex members can be registered and are
//! spot-checked numerically at registration time, since convexity and
//! gradient correctness cannot be verified symbolically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{vec_norm, vec_sub, Mat};
use crate::scalar::{as_f64, fl, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Quadratic,
    Quartic,
    Custom,
}

pub type ValueFn<S> = Box<dyn Fn(&[S]) -> S + Send + Sync>;
pub type GradientFn<S> = Box<dyn Fn(&[S]) -> Vec<S> + Send + Sync>;

/// User-supplied objective: value and gradient closures.
pub struct CustomMember<S> {
    pub value: ValueFn<S>,
    pub gradient: GradientFn<S>,
}

enum Member<S> {
    Quadratic { q: Mat<S>, c: Vec<S> },
    Quartic { c: Vec<S> },
    Custom(CustomMember<S>),
}

/// The n private objectives f_i: R^s → R making up the team objective Σ f_i.
pub struct ObjectiveFamily<S> {
    dim: usize,
    members: Vec<Member<S>>,
    kind: FamilyKind,
    unique_optimum: bool,
}

impl<S> std::fmt::Debug for ObjectiveFamily<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveFamily")
            .field("kind", &self.kind)
            .field("n", &self.members.len())
            .field("dim", &self.dim)
            .finish()
    }
}

impl<S: Scalar> ObjectiveFamily<S> {
    /// Quadratic members f_i(x) = ½ (x − c_i)ᵀ Q_i (x − c_i) with symmetric
    /// positive-definite Q_i.
    pub fn quadratic(members: Vec<(Mat<S>, Vec<S>)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidObjective("family needs at least one member".into()));
        }
        let dim = members[0].1.len();
        let sym_tol = fl::<S>(1e-12);
        for (idx, (q, c)) in members.iter().enumerate() {
            if c.len() != dim || q.rows() != dim || q.cols() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("quadratic member {}", idx + 1),
                    expected: dim,
                    got: c.len().max(q.rows()).max(q.cols()),
                });
            }
            for i in 0..dim {
                for j in 0..i {
                    if (q[(i, j)] - q[(j, i)]).abs() > sym_tol {
                        return Err(Error::InvalidObjective(format!(
                            "member {}: Q is not symmetric at ({i}, {j})",
                            idx + 1
                        )));
                    }
                }
            }
            if q.cholesky().is_none() {
                return Err(Error::InvalidObjective(format!(
                    "member {}: Q is not positive definite",
                    idx + 1
                )));
            }
        }
        let members = members.into_iter().map(|(q, c)| Member::Quadratic { q, c }).collect();
        Ok(ObjectiveFamily { dim, members, kind: FamilyKind::Quadratic, unique_optimum: true })
    }

    /// Quartic members f_i(x) = Σ_d (x_d − c_{i,d})⁴, convex with unbounded
    /// gradient and the singleton minimizer c_i.
    pub fn quartic(centers: Vec<Vec<S>>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidObjective("family needs at least one member".into()));
        }
        let dim = centers[0].len();
        for (idx, c) in centers.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("quartic member {}", idx + 1),
                    expected: dim,
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidObjective(format!(
                    "member {}: center must be finite",
                    idx + 1
                )));
            }
        }
        let members = centers.into_iter().map(|c| Member::Quartic { c }).collect();
        Ok(ObjectiveFamily { dim, members, kind: FamilyKind::Quartic, unique_optimum: true })
    }

    /// Registers custom members after numerical spot checks: the supplied
    /// gradient must agree with central differences, and random midpoints
    /// must satisfy the convexity inequality. `unique_optimum` is the
    /// caller's declaration that the team optimum is a single point; it
    /// gates projection support.
    pub fn custom(dim: usize, members: Vec<CustomMember<S>>, unique_optimum: bool) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidObjective("family needs at least one member".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidObjective("dimension must be positive".into()));
        }
        for (idx, m) in members.iter().enumerate() {
            registration_checks(m, dim, idx)?;
        }
        let members = members.into_iter().map(Member::Custom).collect();
        Ok(ObjectiveFamily { dim, members, kind: FamilyKind::Custom, unique_optimum })
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn unique_optimum(&self) -> bool {
        self.unique_optimum
    }

    fn check_args(&self, i: usize, x: &[S]) -> Result<()> {
        if i >= self.members.len() {
            return Err(Error::InvalidArgument(format!(
                "agent index {i} out of range for n = {}",
                self.members.len()
            )));
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "objective argument".into(),
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// f_i(x).
    pub fn eval(&self, i: usize, x: &[S]) -> Result<S> {
        self.check_args(i, x)?;
        Ok(match &self.members[i] {
            Member::Quadratic { q, c } => {
                let d = vec_sub(x, c);
                fl::<S>(0.5) * crate::linalg::vec_dot(&d, &q.matvec(&d))
            }
            Member::Quartic { c } => x.iter().zip(c).map(|(&xd, &cd)| (xd - cd).powi(4)).sum(),
            Member::Custom(m) => (m.value)(x),
        })
    }

    /// ∇f_i(x).
    pub fn grad(&self, i: usize, x: &[S]) -> Result<Vec<S>> {
        self.check_args(i, x)?;
        Ok(match &self.members[i] {
            Member::Quadratic { q, c } => q.matvec(&vec_sub(x, c)),
            Member::Quartic { c } => {
                x.iter().zip(c).map(|(&xd, &cd)| fl::<S>(4.0) * (xd - cd).powi(3)).collect()
            }
            Member::Custom(m) => {
                let g = (m.gradient)(x);
                if g.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        context: "custom gradient output".into(),
                        expected: self.dim,
                        got: g.len(),
                    });
                }
                g
            }
        })
    }

    /// Team objective f(x) = Σ_i f_i(x).
    pub fn team_eval(&self, x: &[S]) -> Result<S> {
        let mut acc = S::zero();
        for i in 0..self.n() {
            acc = acc + self.eval(i, x)?;
        }
        Ok(acc)
    }

    /// Team gradient ∇f(x) = Σ_i ∇f_i(x).
    pub fn team_grad(&self, x: &[S]) -> Result<Vec<S>> {
        let mut acc = vec![S::zero(); self.dim];
        for i in 0..self.n() {
            for (a, g) in acc.iter_mut().zip(self.grad(i, x)?) {
                *a = *a + g;
            }
        }
        Ok(acc)
    }

    /// Max-over-coordinates deviation between the analytic gradient of
    /// member `i` at `x` and a central finite difference with step `h`.
    pub fn finite_diff_check(&self, i: usize, x: &[S], h: S) -> Result<S> {
        self.check_args(i, x)?;
        if !(h > S::zero()) {
            return Err(Error::InvalidArgument(format!(
                "finite-difference step {h} must be positive"
            )));
        }
        let g = self.grad(i, x)?;
        let mut worst = S::zero();
        let mut xp = x.to_vec();
        for d in 0..self.dim {
            let orig = xp[d];
            xp[d] = orig + h;
            let fp = self.eval(i, &xp)?;
            xp[d] = orig - h;
            let fm = self.eval(i, &xp)?;
            xp[d] = orig;
            let fd = (fp - fm) / (fl::<S>(2.0) * h);
            worst = worst.max((fd - g[d]).abs());
        }
        Ok(worst)
    }

    /// Computes x*, f* for the team objective. Quadratic families solve
    /// (Σ Q_i) x* = Σ Q_i c_i directly; everything else runs gradient
    /// descent with Armijo backtracking to the default tolerance 1e−10.
    pub fn centralized_optimum(&self) -> Result<OptimalityOracle<S>> {
        self.centralized_optimum_with(fl(1e-10), 200_000)
    }

    pub fn centralized_optimum_with(&self, tol: S, max_iters: u64) -> Result<OptimalityOracle<S>> {
        match self.kind {
            FamilyKind::Quadratic => self.quadratic_optimum(tol),
            _ => self.iterative_optimum(tol, max_iters),
        }
    }

    fn quadratic_optimum(&self, tol: S) -> Result<OptimalityOracle<S>> {
        let mut a = Mat::zeros(self.dim, self.dim);
        let mut b = vec![S::zero(); self.dim];
        for m in &self.members {
            let Member::Quadratic { q, c } = m else { unreachable!("quadratic family") };
            a = a.add(q);
            for (bd, qc) in b.iter_mut().zip(q.matvec(c)) {
                *bd = *bd + qc;
            }
        }
        let x_star = a.solve(&b)?;
        let grad_norm = vec_norm(&self.team_grad(&x_star)?);
        if grad_norm > tol {
            return Err(Error::OptimumNotReached {
                tol: as_f64(tol),
                iters: 0,
                grad_norm: as_f64(grad_norm),
            });
        }
        let f_star = self.team_eval(&x_star)?;
        Ok(OptimalityOracle {
            x_star,
            f_star,
            method: OracleMethod::ClosedForm,
            grad_norm,
            tolerance: tol,
        })
    }

    fn iterative_optimum(&self, tol: S, max_iters: u64) -> Result<OptimalityOracle<S>> {
        // Mean of centers is the natural start for quartics (exact for a
        // symmetric family); custom members start at the origin.
        let mut x = vec![S::zero(); self.dim];
        if self.kind == FamilyKind::Quartic {
            let inv_n = S::one() / fl::<S>(self.n() as f64);
            for m in &self.members {
                let Member::Quartic { c } = m else { unreachable!("quartic family") };
                for (xd, &cd) in x.iter_mut().zip(c) {
                    *xd = *xd + cd * inv_n;
                }
            }
        }
        let armijo = fl::<S>(1e-4);
        let mut iters = 0u64;
        loop {
            let g = self.team_grad(&x)?;
            let gn = vec_norm(&g);
            if gn <= tol {
                let f_star = self.team_eval(&x)?;
                return Ok(OptimalityOracle {
                    x_star: x,
                    f_star,
                    method: OracleMethod::Iterative { iterations: iters },
                    grad_norm: gn,
                    tolerance: tol,
                });
            }
            if iters >= max_iters {
                return Err(Error::OptimumNotReached {
                    tol: as_f64(tol),
                    iters,
                    grad_norm: as_f64(gn),
                });
            }
            let fx = self.team_eval(&x)?;
            let mut t = S::one();
            loop {
                let trial: Vec<S> = x.iter().zip(&g).map(|(&xd, &gd)| xd - t * gd).collect();
                let f_trial = self.team_eval(&trial)?;
                // The sufficient-decrease test is only meaningful while the
                // demanded decrease is representable in f; otherwise it
                // degenerates to f_trial <= fx and happily accepts
                // overshooting steps.
                let armijo_rhs = fx - armijo * t * gn * gn;
                if armijo_rhs < fx && f_trial <= armijo_rhs {
                    x = trial;
                    break;
                }
                // Close to the optimum the Armijo decrease falls below the
                // resolution of f itself; a step that does not measurably
                // raise f (up to evaluation roundoff) and strictly contracts
                // the gradient norm is still progress toward the certificate
                // this oracle actually issues.
                let f_slack = fl::<S>(64.0) * S::epsilon() * (S::one() + fx.abs());
                if f_trial <= fx + f_slack
                    && vec_norm(&self.team_grad(&trial)?) <= fl::<S>(0.999) * gn
                {
                    x = trial;
                    break;
                }
                t = t * fl::<S>(0.5);
                if t < fl::<S>(1e-20) {
                    return Err(Error::OptimumNotReached {
                        tol: as_f64(tol),
                        iters,
                        grad_norm: as_f64(gn),
                    });
                }
            }
            iters += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleMethod {
    ClosedForm,
    Iterative { iterations: u64 },
}

/// Centralized solution of the team problem: the benchmark every distributed
/// run is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityOracle<S> {
    pub x_star: Vec<S>,
    pub f_star: S,
    pub method: OracleMethod,
    /// ‖∇f(x*)‖ actually achieved.
    pub grad_norm: S,
    /// Tolerance that was requested.
    pub tolerance: S,
}

impl<S: Scalar> OptimalityOracle<S> {
    /// Projection of `x` onto the optimal set. Supported only for families
    /// with a unique optimum, where it is constantly x*.
    pub fn project(&self, family: &ObjectiveFamily<S>, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.x_star.len() {
            return Err(Error::DimensionMismatch {
                context: "projection argument".into(),
                expected: self.x_star.len(),
                got: x.len(),
            });
        }
        if !family.unique_optimum() {
            return Err(Error::UnsupportedProjection(
                "family registered as possibly-non-unique; projection onto a general optimal set is out of scope".into(),
            ));
        }
        Ok(self.x_star.clone())
    }
}

/// Registration-time spot checks for custom members: central-difference
/// gradient agreement and midpoint convexity at seeded sample points in
/// [−3, 3]^dim. Tolerances widen with the scalar's epsilon so the same
/// checks stay meaningful in f32.
fn registration_checks<S: Scalar>(m: &CustomMember<S>, dim: usize, idx: usize) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(member_seed(idx));
    let h = fl::<S>(1e-5).max(S::epsilon().sqrt());
    let grad_tol = fl::<S>(1e-5).max(S::epsilon().sqrt() * fl(10.0));
    let convex_tol = fl::<S>(1e-12).max(S::epsilon() * fl(100.0));
    let sample = |rng: &mut ChaCha8Rng| -> Vec<S> {
        (0..dim).map(|_| fl(rng.random_range(-3.0..3.0))).collect()
    };
    for _ in 0..100 {
        let x = sample(&mut rng);
        let g = (m.gradient)(&x);
        if g.len() != dim {
            return Err(Error::InvalidObjective(format!(
                "member {}: gradient returns {} components, expected {dim}",
                idx + 1,
                g.len()
            )));
        }
        let mut xp = x.clone();
        for d in 0..dim {
            let orig = xp[d];
            xp[d] = orig + h;
            let fp = (m.value)(&xp);
            xp[d] = orig - h;
            let fm = (m.value)(&xp);
            xp[d] = orig;
            let fd = (fp - fm) / (fl::<S>(2.0) * h);
            if (fd - g[d]).abs() > grad_tol {
                return Err(Error::InvalidObjective(format!(
                    "member {}: gradient check failed at coordinate {d} \
                     (finite difference {fd}, gradient {})",
                    idx + 1,
                    g[d]
                )));
            }
        }
    }
    for _ in 0..100 {
        let x = sample(&mut rng);
        let y = sample(&mut rng);
        let mid: Vec<S> = x.iter().zip(&y).map(|(&a, &b)| (a + b) * fl::<S>(0.5)).collect();
        let lhs = (m.value)(&mid);
        let rhs = ((m.value)(&x) + (m.value)(&y)) * fl::<S>(0.5);
        if lhs > rhs + convex_tol {
            return Err(Error::InvalidObjective(format!(
                "member {}: midpoint convexity violated (f(mid) = {lhs} > {rhs})",
                idx + 1
            )));
        }
    }
    Ok(())
}

/// Distinct deterministic seed per member for the registration sampler.
fn member_seed(idx: usize) -> u64 {
    0xB1A5_ED00 + idx as u64
}
