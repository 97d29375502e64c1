use dncs_core::riccati::{
    finite_horizon_solve, steady_solve, DncsSpec, SteadyOptions, SteadySolution,
};
use dncs_core::simulator::{
    run_monte_carlo, step, verify_step_identity, NoiseKind, SimConfig, SimState, Strategy,
};
use dncs_core::testing::{random_feasible_spec, random_pd, uniform_matrix, SpecShape};
use nalgebra::{dmatrix, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn solve(spec: &DncsSpec<f64>) -> SteadySolution<f64> {
    let sol = steady_solve(spec, &SteadyOptions::default()).unwrap();
    assert!(sol.converged);
    sol
}

fn sensor(p: f64) -> DncsSpec<f64> {
    DncsSpec::two_controller(
        dmatrix![2.0],
        dmatrix![1.0],
        dmatrix![0.0],
        dmatrix![1.0],
        DMatrix::identity(2, 2),
        p,
    )
    .unwrap()
}

/// Subsystem 0 has two states and a local input, subsystem 1 one state
/// and none that reaches it.
fn mixed_spec(p: [f64; 2]) -> DncsSpec<f64> {
    DncsSpec::new(
        vec![dmatrix![1.1, 0.4; 0.0, 0.9], dmatrix![1.3]],
        vec![dmatrix![0.3; 1.0], dmatrix![0.0]],
        vec![dmatrix![1.0; 0.5], dmatrix![1.0]],
        dmatrix![1.0, 0.2, 0.0; 0.2, 1.5, 0.1; 0.0, 0.1, 1.0],
        DMatrix::identity(3, 3),
        p.to_vec(),
    )
    .unwrap()
}

#[test]
fn step_identity_holds_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..10 {
        let spec = random_feasible_spec(&mut rng, SpecShape::default()).unwrap();
        let sol = solve(&spec);
        for _ in 0..100 {
            let x_hat = DVector::from_column_slice(
                uniform_matrix(&mut rng, spec.state_dim(), 1, 3.0).as_slice(),
            );
            let sigma: Vec<DMatrix<f64>> = spec
                .state_partition()
                .dims()
                .iter()
                .map(|&d| random_pd(&mut rng, d, 0.0))
                .collect();
            let chk = verify_step_identity(&spec, &sol, &x_hat, &sigma, 1e-8).unwrap();
            assert!(
                chk.pass,
                "case {case}: residual {} rhs {}",
                chk.residual, chk.rhs
            );
        }
    }
}

#[test]
fn covariance_of_one_subsystem_ignores_other_links() {
    let spec = mixed_spec([0.3, 0.5]);
    let sol = solve(&spec);
    let strat = Strategy::steady(&sol);
    let mut state = SimState::initial(&spec);
    state.x = DVector::from_vec(vec![0.5, -1.0, 2.0]);
    state.sigma = vec![dmatrix![1.0, 0.2; 0.2, 0.5], dmatrix![3.0]];
    let noise = DVector::from_vec(vec![0.1, 0.2, -0.3]);
    let outcomes = [[true, true], [true, false], [false, true], [false, false]];
    let runs: Vec<_> = outcomes
        .iter()
        .map(|g| step(&spec, &state, g, &noise, &strat).unwrap().next)
        .collect();
    for n in 0..2 {
        for (i, gi) in outcomes.iter().enumerate() {
            for (j, gj) in outcomes.iter().enumerate() {
                if gi[n] == gj[n] {
                    assert_eq!(runs[i].sigma[n], runs[j].sigma[n], "subsystem {n}");
                }
            }
        }
    }
}

#[test]
fn error_covariance_matches_drop_streak_iterates() {
    let spec = mixed_spec([0.4, 0.35]);
    let sol = solve(&spec);
    let cfg = SimConfig {
        horizon: 60,
        runs: 4000,
        seed: 5,
        noise: NoiseKind::Gaussian,
        record_every: 1,
    };
    let rep = run_monte_carlo(&spec, &sol, &cfg).unwrap();
    assert!(rep.aborted.is_empty());
    let part = spec.state_partition();
    for n in 0..2 {
        let (off, d) = (part.offset(n), part.size(n));
        let cl = spec.a_nn(n) + spec.b_nn(n) * &sol.kn_star[n];
        let mut expected = vec![DMatrix::<f64>::zeros(d, d)];
        for k in 1..=3 {
            let prev = &expected[k - 1];
            expected.push(DMatrix::identity(d, d) + &cl * prev * cl.transpose());
        }
        let mut sums = vec![DMatrix::<f64>::zeros(d, d); 4];
        let mut counts = [0usize; 4];
        let mut streak = 0usize;
        for row in &rep.traces {
            if row.t == 0 {
                streak = 0;
            }
            streak = if row.gamma[n] { 0 } else { streak + 1 };
            if streak <= 3 {
                let e = (&row.x - &row.x_hat).rows(off, d).clone_owned();
                sums[streak] += &e * e.transpose();
                counts[streak] += 1;
            }
        }
        assert!(sums[0].amax() < 1e-20, "delivered states are known exactly");
        for k in 1..=3 {
            let cov = &sums[k] / counts[k] as f64;
            let want = &expected[k];
            for i in 0..d {
                for j in 0..d {
                    let se = ((want[(i, i)] * want[(j, j)] + want[(i, j)].powi(2))
                        / counts[k] as f64)
                        .sqrt();
                    let z = (cov[(i, j)] - want[(i, j)]) / se;
                    assert!(
                        z.abs() < 5.0,
                        "subsystem {n} streak {k} entry ({i},{j}): {} vs {} (z {z})",
                        cov[(i, j)],
                        want[(i, j)]
                    );
                }
            }
        }
    }
}

#[test]
fn mean_square_state_stays_bounded_below_threshold() {
    let spec = sensor(0.1);
    let sol = solve(&spec);
    let cfg = SimConfig {
        horizon: 5000,
        runs: 200,
        seed: 17,
        noise: NoiseKind::Gaussian,
        record_every: 0,
    };
    let rep = run_monte_carlo(&spec, &sol, &cfg).unwrap();
    assert!(rep.aborted.is_empty());
    let window = &rep.mean_sq_state[100..=5000];
    let mut sorted = window.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let worst = sorted[sorted.len() - 1];
    assert!(worst <= 50.0 * median, "max {worst} median {median}");
}

#[test]
fn average_cost_grows_without_bound_above_threshold() {
    let spec = sensor(0.4);
    assert!(
        !steady_solve(&spec, &SteadyOptions::default())
            .unwrap()
            .converged
    );
    let per_step = |t: usize| finite_horizon_solve(&spec, t).unwrap().cost / (t + 1) as f64;
    let costs: Vec<f64> = [10, 20, 40, 80].iter().map(|&t| per_step(t)).collect();
    assert!(costs.windows(2).all(|w| w[1] > 10.0 * w[0]), "{costs:?}");
}
