//! Weighted directed communication topology.
//!
//! Convention used everywhere in this crate: `a[(i, j)] > 0` means there is
//! an edge from j to i, i.e. agent j transmits to agent i. Consequently the
//! in-neighbors of i are the positive entries of row i, and the out-neighbors
//! of j are the positive entries of column j. The Laplacian has zero row
//! sums; the surplus matrix B is column-stochastic with strictly positive
//! diagonal, supported exactly on the transposed adjacency pattern plus the
//! diagonal, so that node j can scale its own outgoing surplus shares by
//! 1/(out-degree + 1) without any global knowledge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::{as_f64, fl, Scalar};

/// Additive tolerance for "sums to exactly one/zero" structural checks.
/// Desk-scale sums of O(1) entries accumulate rounding well below this.
pub const STOCHASTICITY_TOL: f64 = 1e-12;

/// Directed graph with nonnegative edge weights and no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph<S> {
    n: usize,
    weights: Mat<S>,
}

impl<S: Scalar> WeightedDigraph<S> {
    /// Validates and wraps a weight matrix. `weights[(i, j)]` is the weight
    /// of the edge j → i; the diagonal must be zero and all entries finite
    /// and nonnegative.
    pub fn from_weights(weights: Mat<S>) -> Result<Self> {
        let n = weights.rows();
        if weights.cols() != n {
            return Err(Error::DimensionMismatch {
                context: "adjacency matrix".into(),
                expected: n,
                got: weights.cols(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidGraph("agent count must be positive".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < S::zero() {
                    return Err(Error::InvalidGraph(format!(
                        "weight a[{}][{}] = {w} must be finite and nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
                if i == j && w != S::zero() {
                    return Err(Error::InvalidGraph(format!(
                        "self-loop weight at node {} must be zero",
                        i + 1
                    )));
                }
            }
        }
        Ok(WeightedDigraph { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> S {
        self.weights[(i, j)]
    }

    pub fn weights(&self) -> &Mat<S> {
        &self.weights
    }

    /// Nodes that transmit to `i`.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.weights[(i, j)] > S::zero()).collect()
    }

    /// Nodes that `j` transmits to.
    pub fn out_neighbors(&self, j: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.weights[(i, j)] > S::zero()).collect()
    }

    /// Σ_j a_ij, the total in-weight of node `i`.
    pub fn in_weight_sum(&self, i: usize) -> S {
        self.weights.row(i).iter().copied().sum()
    }
}

/// Graph Laplacian: off-diagonal −a_ij, diagonal Σ_j a_ij; rows sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian<S> {
    matrix: Mat<S>,
}

impl<S: Scalar> Laplacian<S> {
    pub fn matrix(&self) -> &Mat<S> {
        &self.matrix
    }
}

pub fn laplacian<S: Scalar>(g: &WeightedDigraph<S>) -> Laplacian<S> {
    let n = g.n();
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                m[(i, i)] = g.in_weight_sum(i);
            } else {
                m[(i, j)] = -g.weight(i, j);
            }
        }
    }
    Laplacian { matrix: m }
}

/// Column-stochastic surplus mixing matrix B.
#[derive(Debug, Clone, PartialEq)]
pub struct SurplusMatrix<S> {
    matrix: Mat<S>,
}

impl<S: Scalar> SurplusMatrix<S> {
    pub fn matrix(&self) -> &Mat<S> {
        &self.matrix
    }

    /// b_ij, the share of node j's surplus delivered to node i.
    pub fn entry(&self, i: usize, j: usize) -> S {
        self.matrix[(i, j)]
    }
}

/// How to choose the b_ij shares.
pub enum SurplusScheme<'a, S> {
    /// b_ij = 1/(|out-neighbors of j| + 1) for every receiver and for j
    /// itself; the simplest choice keeping b_jj strictly positive.
    Uniform,
    /// Caller-provided full matrix, validated for support, positivity, and
    /// column stochasticity.
    Explicit(&'a Mat<S>),
}

pub fn build_surplus_matrix<S: Scalar>(
    g: &WeightedDigraph<S>,
    scheme: SurplusScheme<'_, S>,
) -> Result<SurplusMatrix<S>> {
    let n = g.n();
    match scheme {
        SurplusScheme::Uniform => {
            let mut b = Mat::zeros(n, n);
            for j in 0..n {
                let out = g.out_neighbors(j);
                let share = S::one() / fl::<S>((out.len() + 1) as f64);
                b[(j, j)] = share;
                for i in out {
                    b[(i, j)] = share;
                }
            }
            Ok(SurplusMatrix { matrix: b })
        }
        SurplusScheme::Explicit(b) => {
            if b.rows() != n || b.cols() != n {
                return Err(Error::DimensionMismatch {
                    context: "explicit surplus matrix".into(),
                    expected: n,
                    got: b.rows().max(b.cols()),
                });
            }
            let tol = fl::<S>(STOCHASTICITY_TOL);
            for j in 0..n {
                for i in 0..n {
                    let v = b[(i, j)];
                    let on_support = i == j || g.weight(i, j) > S::zero();
                    if on_support && v <= S::zero() {
                        return Err(Error::InvalidSurplusWeights(format!(
                            "b[{}][{}] must be strictly positive (node {} {})",
                            i + 1,
                            j + 1,
                            j + 1,
                            if i == j {
                                "keeps no share of its own surplus"
                            } else {
                                "sends to this out-neighbor"
                            },
                        )));
                    }
                    if !on_support && v != S::zero() {
                        return Err(Error::InvalidSurplusWeights(format!(
                            "b[{}][{}] must be zero: node {} has no edge to node {}",
                            i + 1,
                            j + 1,
                            j + 1,
                            i + 1
                        )));
                    }
                }
                let col_sum: S = (0..n).map(|i| b[(i, j)]).sum();
                if (col_sum - S::one()).abs() > tol {
                    return Err(Error::InvalidSurplusWeights(format!(
                        "column {} sums to {col_sum}, expected 1",
                        j + 1
                    )));
                }
            }
            Ok(SurplusMatrix { matrix: b.clone() })
        }
    }
}

/// Largest admissible surplus coupling gain: ε_max = min_i (1/T − Σ_j a_ij).
/// The caller must pick 0 < ε < ε_max. Errors when the sampling time T is
/// already too large for the graph.
pub fn max_epsilon<S: Scalar>(g: &WeightedDigraph<S>, t: S) -> Result<S> {
    if !(t > S::zero()) {
        return Err(Error::InvalidArgument(format!("sampling time T = {t} must be positive")));
    }
    let mut eps_max = S::infinity();
    let mut argmin = 0;
    for i in 0..g.n() {
        let margin = S::one() / t - g.in_weight_sum(i);
        if margin < eps_max {
            eps_max = margin;
            argmin = i;
        }
    }
    if eps_max <= S::zero() {
        return Err(Error::SamplingTimeTooLarge { node: argmin + 1, margin: as_f64(eps_max) });
    }
    Ok(eps_max)
}

/// True iff the graph is a single strongly connected component.
pub fn validate_strong_connectivity<S: Scalar>(g: &WeightedDigraph<S>) -> bool {
    TarjanScc::new(g).component_count() == 1
}

/// Tarjan's strongly-connected-components algorithm over the positive-weight
/// edges. Only the component count is needed here.
struct TarjanScc {
    succ: Vec<Vec<usize>>,
    index: Vec<Option<usize>>,
    lowlink: Vec<usize>,
    on_stack: Vec<bool>,
    stack: Vec<usize>,
    next_index: usize,
    components: usize,
}

impl TarjanScc {
    fn new<S: Scalar>(g: &WeightedDigraph<S>) -> Self {
        let n = g.n();
        // succ[v] holds targets of edges leaving v, i.e. v's out-neighbors.
        let succ = (0..n).map(|v| g.out_neighbors(v)).collect();
        TarjanScc {
            succ,
            index: vec![None; n],
            lowlink: vec![0; n],
            on_stack: vec![false; n],
            stack: Vec::new(),
            next_index: 0,
            components: 0,
        }
    }

    fn component_count(mut self) -> usize {
        for v in 0..self.index.len() {
            if self.index[v].is_none() {
                self.strong_connect(v);
            }
        }
        self.components
    }

    fn strong_connect(&mut self, v: usize) {
        self.index[v] = Some(self.next_index);
        self.lowlink[v] = self.next_index;
        self.next_index += 1;
        self.stack.push(v);
        self.on_stack[v] = true;
        for idx in 0..self.succ[v].len() {
            let w = self.succ[v][idx];
            match self.index[w] {
                None => {
                    self.strong_connect(w);
                    self.lowlink[v] = self.lowlink[v].min(self.lowlink[w]);
                }
                Some(w_index) if self.on_stack[w] => {
                    self.lowlink[v] = self.lowlink[v].min(w_index);
                }
                Some(_) => {}
            }
        }
        if Some(self.lowlink[v]) == self.index[v] {
            self.components += 1;
            while let Some(w) = self.stack.pop() {
                self.on_stack[w] = false;
                if w == v {
                    break;
                }
            }
        }
    }
}

/// Graph generators and parsers.
pub mod generate {
    use super::*;

    /// Directed n-cycle 1 → 2 → … → n → 1. `weights[i]` is the weight of the
    /// edge from node i+1 to its successor. Every node has exactly one
    /// in-edge and one out-edge, the maximally unbalanced configuration.
    pub fn ring<S: Scalar>(n: usize, weights: &[S]) -> Result<WeightedDigraph<S>> {
        if n < 2 {
            return Err(Error::InvalidGraph("ring needs at least 2 nodes".into()));
        }
        if weights.len() != n {
            return Err(Error::DimensionMismatch {
                context: "ring weights".into(),
                expected: n,
                got: weights.len(),
            });
        }
        let mut a = Mat::zeros(n, n);
        for (i, &w) in weights.iter().enumerate() {
            if !(w > S::zero()) || !w.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "ring weight {w} at position {} must be positive and finite",
                    i + 1
                )));
            }
            a[((i + 1) % n, i)] = w;
        }
        WeightedDigraph::from_weights(a)
    }

    /// Ring with one shared weight on every edge.
    pub fn ring_uniform<S: Scalar>(n: usize, weight: S) -> Result<WeightedDigraph<S>> {
        ring(n, &vec![weight; n])
    }

    /// Random digraph: every ordered pair (j → i) gets an edge with
    /// probability `p` and a weight drawn uniformly from `weight_range`,
    /// then a directed Hamiltonian cycle over a shuffled node order is added
    /// so the result is strongly connected by construction. Deterministic
    /// for a fixed seed; weights are drawn in f64 before conversion so the
    /// draw sequence does not depend on `S`.
    pub fn random_unbalanced<S: Scalar>(
        n: usize,
        p: f64,
        weight_range: (f64, f64),
        seed: u64,
    ) -> Result<WeightedDigraph<S>> {
        if n < 2 {
            return Err(Error::InvalidGraph("random graph needs at least 2 nodes".into()));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!("edge probability {p} not in (0, 1]")));
        }
        let (lo, hi) = weight_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < p {
                    a[(i, j)] = fl(draw(&mut rng));
                }
            }
        }
        // Hamiltonian cycle over a random permutation guarantees strong
        // connectivity without rejection sampling.
        let mut order: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            let swap_with = rng.random_range(0..=k);
            order.swap(k, swap_with);
        }
        for idx in 0..n {
            let j = order[idx];
            let i = order[(idx + 1) % n];
            if a[(i, j)] == S::zero() {
                a[(i, j)] = fl(draw(&mut rng));
            }
        }
        WeightedDigraph::from_weights(a)
    }

    /// Parses an edge-list document: one `j i a_ij` triple per line meaning
    /// j transmits to i, 1-based indices, `#` starts a comment, blank lines
    /// ignored. The node count is the largest index mentioned.
    pub fn from_edge_list<S: Scalar>(text: &str) -> Result<WeightedDigraph<S>> {
        let mut triples: Vec<(usize, usize, S)> = Vec::new();
        let mut n = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = body.split_whitespace().collect();
            if tokens.len() != 3 {
                return Err(Error::EdgeListParse {
                    line,
                    msg: format!("expected `j i a_ij`, got {} tokens", tokens.len()),
                });
            }
            let parse_idx = |tok: &str, what: &str| -> Result<usize> {
                let v: usize = tok.parse().map_err(|_| Error::EdgeListParse {
                    line,
                    msg: format!("{what} index `{tok}` is not a positive integer"),
                })?;
                if v == 0 {
                    return Err(Error::EdgeListParse {
                        line,
                        msg: format!("{what} index must be 1-based"),
                    });
                }
                Ok(v)
            };
            let j = parse_idx(tokens[0], "source")?;
            let i = parse_idx(tokens[1], "target")?;
            let w: f64 = tokens[2].parse().map_err(|_| Error::EdgeListParse {
                line,
                msg: format!("weight `{}` is not a number", tokens[2]),
            })?;
            if j == i {
                return Err(Error::EdgeListParse { line, msg: format!("self-loop at node {i}") });
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::EdgeListParse {
                    line,
                    msg: format!("weight {w} must be positive and finite"),
                });
            }
            if triples.iter().any(|&(jj, ii, _)| jj == j && ii == i) {
                return Err(Error::EdgeListParse {
                    line,
                    msg: format!("duplicate edge {j} -> {i}"),
                });
            }
            n = n.max(i).max(j);
            triples.push((j, i, fl(w)));
        }
        if triples.is_empty() {
            return Err(Error::InvalidGraph("edge list contains no edges".into()));
        }
        let mut a = Mat::zeros(n, n);
        for (j, i, w) in triples {
            a[(i - 1, j - 1)] = w;
        }
        WeightedDigraph::from_weights(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cycle_laplacian() {
        let g = generate::ring_uniform(2, 0.4).unwrap();
        let l = laplacian(&g);
        assert_eq!(l.matrix().row(0), &[0.4, -0.4]);
        assert_eq!(l.matrix().row(1), &[-0.4, 0.4]);
    }

    #[test]
    fn edgeless_graph_has_zero_laplacian() {
        let g = WeightedDigraph::from_weights(Mat::<f64>::zeros(3, 3)).unwrap();
        assert_eq!(laplacian(&g).matrix().max_abs(), 0.0);
    }

    #[test]
    fn unit_ring_laplacian_structure() {
        let g = generate::ring_uniform(3, 1.0).unwrap();
        let l = laplacian(&g);
        for i in 0..3 {
            assert_eq!(l.matrix()[(i, i)], 1.0);
            let negs = (0..3).filter(|&j| l.matrix()[(i, j)] == -1.0).count();
            assert_eq!(negs, 1);
            assert_eq!(l.matrix().row(i).iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn uniform_surplus_two_cycle() {
        let g = generate::ring_uniform(2, 0.4).unwrap();
        let b = build_surplus_matrix(&g, SurplusScheme::Uniform).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(b.entry(i, j), 0.5);
            }
        }
    }

    #[test]
    fn uniform_surplus_three_ring_columns() {
        let g = generate::ring_uniform(3, 1.0).unwrap();
        let b = build_surplus_matrix(&g, SurplusScheme::Uniform).unwrap();
        for j in 0..3 {
            assert_eq!(b.entry(j, j), 0.5);
            assert_eq!(b.entry((j + 1) % 3, j), 0.5);
            assert_eq!(b.entry((j + 2) % 3, j), 0.0);
        }
    }

    #[test]
    fn explicit_surplus_rejects_zero_diagonal() {
        let g = generate::ring_uniform(2, 0.4).unwrap();
        // Each node hands its entire surplus to its out-neighbor: b_ii = 0.
        let b = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let err = build_surplus_matrix(&g, SurplusScheme::Explicit(&b)).unwrap_err();
        assert!(matches!(err, Error::InvalidSurplusWeights(_)));
    }

    #[test]
    fn explicit_surplus_rejects_off_support() {
        let g = generate::ring_uniform(3, 1.0).unwrap();
        let mut b = build_surplus_matrix(&g, SurplusScheme::Uniform).unwrap().matrix().clone();
        // Shift weight onto a pair with no edge.
        b[(1, 0)] = 0.25;
        b[(2, 0)] = 0.25;
        let err = build_surplus_matrix(&g, SurplusScheme::Explicit(&b)).unwrap_err();
        assert!(matches!(err, Error::InvalidSurplusWeights(_)));
    }

    #[test]
    fn explicit_surplus_accepts_valid() {
        let g = generate::ring_uniform(2, 0.4).unwrap();
        let b = Mat::from_rows(&[vec![0.3, 0.6], vec![0.7, 0.4]]).unwrap();
        let got = build_surplus_matrix(&g, SurplusScheme::Explicit(&b)).unwrap();
        assert_eq!(got.entry(1, 0), 0.7);
    }

    #[test]
    fn max_epsilon_examples() {
        let g2: WeightedDigraph<f64> = generate::ring_uniform(2, 0.4).unwrap();
        assert!((max_epsilon(&g2, 0.5).unwrap() - 1.6).abs() < 1e-15);
        let g3: WeightedDigraph<f64> = generate::ring_uniform(3, 1.0).unwrap();
        assert!((max_epsilon(&g3, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(max_epsilon(&g3, 1.0), Err(Error::SamplingTimeTooLarge { .. })));
    }

    #[test]
    fn strong_connectivity_examples() {
        let ring = generate::ring_uniform(3, 1.0).unwrap();
        assert!(validate_strong_connectivity(&ring));

        // Path 1 -> 2 -> 3 with no way back.
        let mut a = Mat::zeros(3, 3);
        a[(1, 0)] = 1.0;
        a[(2, 1)] = 1.0;
        let path = WeightedDigraph::from_weights(a).unwrap();
        assert!(!validate_strong_connectivity(&path));

        let single = WeightedDigraph::from_weights(Mat::<f64>::zeros(1, 1)).unwrap();
        assert!(validate_strong_connectivity(&single));
    }

    #[test]
    fn ring_matches_declared_edges() {
        let g = generate::ring(4, &[0.3, 0.6, 0.9, 0.45]).unwrap();
        assert_eq!(g.weight(1, 0), 0.3);
        assert_eq!(g.weight(2, 1), 0.6);
        assert_eq!(g.weight(3, 2), 0.9);
        assert_eq!(g.weight(0, 3), 0.45);
        assert_eq!(g.in_neighbors(0), vec![3]);
        assert_eq!(g.out_neighbors(0), vec![1]);
    }

    #[test]
    fn random_unbalanced_is_deterministic() {
        let a: WeightedDigraph<f64> = generate::random_unbalanced(5, 0.3, (0.5, 1.0), 7).unwrap();
        let b: WeightedDigraph<f64> = generate::random_unbalanced(5, 0.3, (0.5, 1.0), 7).unwrap();
        assert_eq!(a, b);
        assert!(validate_strong_connectivity(&a));
        let c: WeightedDigraph<f64> = generate::random_unbalanced(5, 0.3, (0.5, 1.0), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "# 2-cycle\n1 2 0.4\n2 1 0.4  # return edge\n";
        let g: WeightedDigraph<f64> = generate::from_edge_list(text).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.weight(1, 0), 0.4);
        assert_eq!(g.weight(0, 1), 0.4);
    }

    #[test]
    fn edge_list_rejections() {
        let self_loop = generate::from_edge_list::<f64>("1 1 0.5");
        assert!(matches!(self_loop, Err(Error::EdgeListParse { line: 1, .. })));

        let dup = generate::from_edge_list::<f64>("1 2 0.5\n1 2 0.7");
        assert!(matches!(dup, Err(Error::EdgeListParse { line: 2, .. })));

        let nonpos = generate::from_edge_list::<f64>("1 2 0.0");
        assert!(matches!(nonpos, Err(Error::EdgeListParse { line: 1, .. })));

        let malformed = generate::from_edge_list::<f64>("1 2");
        assert!(matches!(malformed, Err(Error::EdgeListParse { line: 1, .. })));

        let zero_based = generate::from_edge_list::<f64>("0 2 0.5");
        assert!(matches!(zero_based, Err(Error::EdgeListParse { line: 1, .. })));
    }
}
