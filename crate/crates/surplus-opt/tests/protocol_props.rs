use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surplus_opt::graph::{build_surplus_matrix, generate, max_epsilon, SurplusScheme};
use surplus_opt::linalg::Mat;
use surplus_opt::objective::ObjectiveFamily;
use surplus_opt::protocol::{self, AgentState, ProtocolParams, RunSpec, StepSchedule, SwarmState};
use surplus_opt::Error;

fn random_quadratics(seed: u64, n: usize, s: usize) -> ObjectiveFamily<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = (0..n)
        .map(|_| {
            let rows: Vec<Vec<f64>> =
                (0..s).map(|_| (0..s).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let a = Mat::from_rows(&rows).unwrap();
            let mut q = a.transpose().matmul(&a);
            for d in 0..s {
                q[(d, d)] += 0.5;
            }
            let c = (0..s).map(|_| rng.random_range(-2.0..2.0)).collect();
            (q, c)
        })
        .collect();
    ObjectiveFamily::quadratic(members).unwrap()
}

fn random_quartics(seed: u64, n: usize, s: usize) -> ObjectiveFamily<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = (0..n).map(|_| (0..s).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    ObjectiveFamily::quartic(centers).unwrap()
}

fn random_state(seed: u64, n: usize, s: usize) -> SwarmState<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| (0..len).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>();
    let agents = (0..n).map(|_| AgentState::new(draw(s), draw(s), draw(s)).unwrap()).collect();
    SwarmState::new(agents, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Two independently coded engines advance in lockstep for 200 steps on
    /// random strongly connected digraphs and random starting states; any
    /// per-coordinate disagreement beyond 1e-10 aborts the run, so an `Ok`
    /// here is the equivalence claim itself. The diagnostics then pin down
    /// the conservation, θ, and clipping identities along the same runs.
    #[test]
    fn engines_agree_and_step_identities_hold(
        seed in any::<u64>(),
        n in 2usize..=6,
        s in 1usize..=3,
        p in 0.15..0.9f64,
        t_frac in 0.3..0.85f64,
        e_frac in 0.15..0.8f64,
        quadratic in any::<bool>(),
        power_schedule in any::<bool>(),
        exponent in 0.55..1.0f64,
    ) {
        let g = generate::random_unbalanced::<f64>(n, p, (0.5, 1.0), seed).unwrap();
        let b = build_surplus_matrix(&g, SurplusScheme::Uniform).unwrap();
        let max_row = (0..n).map(|i| g.in_weight_sum(i)).fold(0.0f64, f64::max);
        let t = t_frac / max_row;
        let eps = e_frac * max_epsilon(&g, t).unwrap();
        let schedule = if power_schedule {
            StepSchedule::power(1.0, exponent).unwrap()
        } else {
            StepSchedule::harmonic(1.0).unwrap()
        };
        let params = ProtocolParams::new(t, eps, schedule).unwrap();
        let family = if quadratic {
            random_quadratics(seed ^ 0x51, n, s)
        } else {
            random_quartics(seed ^ 0x52, n, s)
        };
        let initial = random_state(seed ^ 0x53, n, s);

        let mut run_spec = RunSpec::new(&g, &b, &family, params, initial, 200);
        run_spec.verify = true;
        run_spec.record_stride = 50;
        let traj = match protocol::run(&run_spec) {
            // A coupling gain qualitatively too large for this topology is a
            // rejected configuration, not a protocol defect.
            Err(Error::SpectralGuard { .. }) => return Ok(()),
            other => other.unwrap(),
        };

        let d = &traj.diagnostics;
        prop_assert!(d.verify_max_deviation.unwrap() <= 1e-10);
        prop_assert!(d.max_mass_residual.unwrap() <= 1e-10);
        prop_assert!(d.max_theta_residual.unwrap() <= 1e-12);
        prop_assert!(d.max_clip_overshoot <= 1e-12);
        prop_assert!(d.max_state_norm.is_finite() && d.max_state_norm <= 1e6);
    }

    /// With the surplus channel off the recursion collapses to a dense
    /// reference iteration on x alone; the verify engine replays it and the
    /// y trajectory must stay identically zero.
    #[test]
    fn baseline_mode_matches_dense_reference(
        seed in any::<u64>(),
        n in 2usize..=6,
        s in 1usize..=3,
        p in 0.15..0.9f64,
        t_frac in 0.3..0.85f64,
    ) {
        let g = generate::random_unbalanced::<f64>(n, p, (0.5, 1.0), seed).unwrap();
        let b = build_surplus_matrix(&g, SurplusScheme::Uniform).unwrap();
        let max_row = (0..n).map(|i| g.in_weight_sum(i)).fold(0.0f64, f64::max);
        let t = t_frac / max_row;
        let params =
            ProtocolParams::baseline(t, StepSchedule::harmonic(1.0).unwrap()).unwrap();
        let family = random_quadratics(seed ^ 0x61, n, s);
        let mut initial = random_state(seed ^ 0x62, n, s);
        for agent in &mut initial.agents {
            agent.y = vec![0.0; s];
        }

        let mut run_spec = RunSpec::new(&g, &b, &family, params, initial, 200);
        run_spec.verify = true;
        run_spec.record_stride = 50;
        let traj = protocol::run(&run_spec).unwrap();

        let d = &traj.diagnostics;
        prop_assert!(d.verify_max_deviation.unwrap() <= 1e-10);
        prop_assert!(d.max_mass_residual.is_none());
        prop_assert!(d.max_theta_residual.is_none());
        for agent in &traj.final_state().agents {
            for &y in &agent.y {
                prop_assert_eq!(y, 0.0);
            }
        }
    }
}

#[test]
fn builtin_schedules_stay_admissible_to_a_million_steps() {
    let horizon = 1_000_000;
    StepSchedule::harmonic(1.0).unwrap().check_admissibility(horizon).unwrap();
    StepSchedule::harmonic(2.5).unwrap().check_admissibility(horizon).unwrap();
    StepSchedule::power(2.0, 0.75).unwrap().check_admissibility(horizon).unwrap();
    StepSchedule::power(1.0, 0.51).unwrap().check_admissibility(horizon).unwrap();
    StepSchedule::power(0.05, 0.6).unwrap().check_admissibility(horizon).unwrap();
    assert!(matches!(StepSchedule::power(1.0, 0.5), Err(Error::InvalidSchedule(_))));
    assert!(matches!(StepSchedule::power(1.0, 1.01), Err(Error::InvalidSchedule(_))));
}

#[test]
fn two_agent_quadratic_long_run_settles_on_the_mean_optimum() {
    let g = generate::ring_uniform::<f64>(2, 0.4).unwrap();
    let b = build_surplus_matrix(&g, SurplusScheme::Uniform).unwrap();
    let family: ObjectiveFamily<f64> = ObjectiveFamily::quadratic(vec![
        (Mat::from_rows(&[vec![1.0]]).unwrap(), vec![0.0]),
        (Mat::from_rows(&[vec![1.0]]).unwrap(), vec![2.0]),
    ])
    .unwrap();
    let oracle = family.centralized_optimum().unwrap();
    assert!((oracle.x_star[0] - 1.0).abs() <= 1e-12);

    let params = ProtocolParams::new(0.5, 0.1, StepSchedule::harmonic(1.0).unwrap()).unwrap();
    let initial = SwarmState::new(
        vec![
            AgentState::new(vec![0.0], vec![0.0], vec![0.0]).unwrap(),
            AgentState::new(vec![2.0], vec![0.0], vec![0.0]).unwrap(),
        ],
        0,
    )
    .unwrap();

    let mut run_spec = RunSpec::new(&g, &b, &family, params, initial, 200_000);
    run_spec.record_stride = 20_000;
    run_spec.oracle = Some(&oracle);
    let traj = protocol::run(&run_spec).unwrap();

    let end = traj.final_state();
    let x_bar = 0.5 * (end.x(0)[0] + end.x(1)[0]);
    assert!((x_bar - 1.0).abs() <= 1e-2, "final mean {x_bar}");

    assert!(traj.report.converged, "report: {:?}", traj.report);
    assert!(traj.report.final_gap.unwrap() <= 1e-3);

    let d = &traj.diagnostics;
    assert!(d.max_mass_residual.unwrap() <= 1e-10);
    assert!(d.max_theta_residual.unwrap() <= 1e-12);
    assert!(d.max_clip_overshoot <= 1e-12);
}

#[test]
fn stride_equal_to_horizon_records_exactly_first_and_last() {
    let g = generate::ring_uniform::<f64>(2, 0.4).unwrap();
    let b = build_surplus_matrix(&g, SurplusScheme::Uniform).unwrap();
    let family = random_quadratics(7, 2, 1);
    let params = ProtocolParams::new(0.5, 0.1, StepSchedule::harmonic(1.0).unwrap()).unwrap();

    for stride in [10u64, 25] {
        let mut run_spec = RunSpec::new(&g, &b, &family, params, random_state(8, 2, 1), 10);
        run_spec.record_stride = stride;
        let traj = protocol::run(&run_spec).unwrap();
        let ks: Vec<u64> = traj.points.iter().map(|p| p.k).collect();
        assert_eq!(ks, vec![0, 10], "stride {stride}");
    }
}
