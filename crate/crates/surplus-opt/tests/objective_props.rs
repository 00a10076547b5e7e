use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surplus_opt::linalg::{vec_norm, vec_sub, Mat};
use surplus_opt::objective::{CustomMember, ObjectiveFamily, OracleMethod};

fn random_point(rng: &mut ChaCha8Rng, s: usize, half_width: f64) -> Vec<f64> {
    (0..s).map(|_| rng.random_range(-half_width..half_width)).collect()
}

/// Q = AᵀA + ½I with random A keeps the conditioning mild and the matrix
/// exactly symmetric, so the constructor's checks never get in the way.
fn random_quadratic_members(seed: u64, n: usize, s: usize) -> Vec<(Mat<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let rows: Vec<Vec<f64>> =
                (0..s).map(|_| (0..s).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let a = Mat::from_rows(&rows).unwrap();
            let mut q = a.transpose().matmul(&a);
            for d in 0..s {
                q[(d, d)] += 0.5;
            }
            let c = random_point(&mut rng, s, 2.0);
            (q, c)
        })
        .collect()
}

fn random_quartic_centers(seed: u64, n: usize, s: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_point(&mut rng, s, 2.0)).collect()
}

#[test]
fn gradients_match_finite_differences_at_random_points() {
    let cases: Vec<(ObjectiveFamily<f64>, u64)> = vec![
        (ObjectiveFamily::quadratic(random_quadratic_members(11, 1, 1)).unwrap(), 111),
        (ObjectiveFamily::quadratic(random_quadratic_members(12, 3, 2)).unwrap(), 112),
        (ObjectiveFamily::quadratic(random_quadratic_members(13, 5, 3)).unwrap(), 113),
        (ObjectiveFamily::quartic(random_quartic_centers(21, 2, 1)).unwrap(), 121),
        (ObjectiveFamily::quartic(random_quartic_centers(22, 4, 3)).unwrap(), 122),
    ];
    for (family, point_seed) in &cases {
        let mut rng = ChaCha8Rng::seed_from_u64(*point_seed);
        for _ in 0..100 {
            let x = random_point(&mut rng, family.dim(), 3.0);
            for i in 0..family.n() {
                let dev = family.finite_diff_check(i, &x, 1e-5).unwrap();
                assert!(dev <= 1e-5, "finite-difference deviation {dev} for member {i}");
            }
        }
    }
}

#[test]
fn midpoint_convexity_holds_at_random_pairs() {
    let families: Vec<(ObjectiveFamily<f64>, u64)> = vec![
        (ObjectiveFamily::quadratic(random_quadratic_members(31, 4, 2)).unwrap(), 131),
        (ObjectiveFamily::quartic(random_quartic_centers(32, 3, 3)).unwrap(), 132),
    ];
    for (family, point_seed) in &families {
        let mut rng = ChaCha8Rng::seed_from_u64(*point_seed);
        for _ in 0..100 {
            let x = random_point(&mut rng, family.dim(), 3.0);
            let y = random_point(&mut rng, family.dim(), 3.0);
            let mid: Vec<f64> = x.iter().zip(&y).map(|(&a, &b)| 0.5 * (a + b)).collect();
            for i in 0..family.n() {
                let lhs = family.eval(i, &mid).unwrap();
                let rhs = 0.5 * (family.eval(i, &x).unwrap() + family.eval(i, &y).unwrap());
                assert!(lhs <= rhs + 1e-12, "member {i}: f(mid) = {lhs} > {rhs}");
            }
        }
    }
}

/// Rebuilds the same quadratic team as closures so the generic descent path
/// and the linear-solve path can be compared through the public API.
fn custom_clone_of_quadratics(members: &[(Mat<f64>, Vec<f64>)], s: usize) -> ObjectiveFamily<f64> {
    let customs = members
        .iter()
        .map(|(q, c)| {
            let (qv, cv) = (q.clone(), c.clone());
            let (qg, cg) = (q.clone(), c.clone());
            CustomMember {
                value: Box::new(move |x: &[f64]| {
                    let d = vec_sub(x, &cv);
                    0.5 * surplus_opt::linalg::vec_dot(&d, &qv.matvec(&d))
                }),
                gradient: Box::new(move |x: &[f64]| {
                    let d = vec_sub(x, &cg);
                    qg.matvec(&d)
                }),
            }
        })
        .collect();
    ObjectiveFamily::custom(s, customs, true).unwrap()
}

#[test]
fn closed_form_and_iterative_optima_agree() {
    for (seed, n, s) in [(41u64, 2usize, 1usize), (42, 3, 2), (43, 5, 3)] {
        let members = random_quadratic_members(seed, n, s);
        let closed_family = ObjectiveFamily::quadratic(members.clone()).unwrap();
        let closed = closed_family.centralized_optimum().unwrap();
        assert!(matches!(closed.method, OracleMethod::ClosedForm));

        let iter_family = custom_clone_of_quadratics(&members, s);
        let iterative = iter_family.centralized_optimum_with(1e-10, 2_000_000).unwrap();
        assert!(matches!(iterative.method, OracleMethod::Iterative { .. }));

        let gap = vec_norm(&vec_sub(&closed.x_star, &iterative.x_star));
        assert!(gap <= 1e-8, "optima disagree by {gap} (n = {n}, s = {s})");
        assert!((closed.f_star - iterative.f_star).abs() <= 1e-10);
    }
}

#[test]
fn oracle_points_are_stationary() {
    let quad = ObjectiveFamily::quadratic(random_quadratic_members(51, 4, 3)).unwrap();
    let quad_opt = quad.centralized_optimum().unwrap();
    assert!(vec_norm(&quad.team_grad(&quad_opt.x_star).unwrap()) <= 1e-9);

    let quartic = ObjectiveFamily::quartic(random_quartic_centers(52, 3, 2)).unwrap();
    let quartic_opt = quartic.centralized_optimum().unwrap();
    assert!(vec_norm(&quartic.team_grad(&quartic_opt.x_star).unwrap()) <= 1e-10);
    assert!(quartic_opt.grad_norm <= 1e-10);

    let projected = quartic.dim();
    let probe = vec![0.7; projected];
    let image = quartic_opt.project(&quartic, &probe).unwrap();
    assert_eq!(image, quartic_opt.x_star);
}
