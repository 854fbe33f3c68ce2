use fedsa_core::engine::{server_pseudo_gradient, AlgorithmVariant, FederatedState};
use fedsa_core::experiment::build_regression;
use fedsa_core::rng::{stream, Domain};
use fedsa_core::tasks::{generate_regression_data, regression_minibatch_grad, LocalObjective, RegressionClient, RegressionTask};
use fedsa_core::{vector, ExperimentConfig, Result, StepSizeSchedule};
use rand::Rng;

fn default_state(algorithm: AlgorithmVariant, seed: u64) -> (FederatedState, Vec<RegressionClient>) {
    let cfg = ExperimentConfig::regression(seed);
    let setup = build_regression(&cfg).unwrap();
    let mut s = FederatedState::new(setup.inits, setup.schedules, cfg.period, algorithm, seed).unwrap();
    s.aggregate().unwrap();
    (s, setup.clients)
}

#[test]
fn fednova_matches_fedavg_with_equal_local_steps() {
    let (mut avg, clients) = default_state(AlgorithmVariant::Fedavg, 5);
    let (mut nova, _) = default_state(AlgorithmVariant::Fednova, 5);
    for _ in 0..200 {
        avg.run_round(&clients, 50, None).unwrap();
        nova.run_round(&clients, 50, None).unwrap();
        for (a, b) in avg.w_bar.iter().zip(&nova.w_bar) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
        // keep the trajectories on a common path so differences do not compound
        nova.w_bar.clone_from(&avg.w_bar);
        for c in &mut nova.clients {
            c.w.clone_from(&avg.w_bar);
        }
    }
}

#[test]
fn aggregate_is_previous_aggregate_plus_pseudo_gradient() {
    for algorithm in [AlgorithmVariant::Proposed, AlgorithmVariant::Fedavg] {
        let (mut s, clients) = default_state(algorithm, 9);
        for _ in 0..100 {
            let prev = s.w_bar.clone();
            // stop just before the aggregation to capture the client iterates
            for _ in 1..s.period {
                let step = s.global_step;
                for (c, o) in s.clients.iter_mut().zip(&clients) {
                    c.local_step(step, o, 50, None).unwrap();
                }
                s.global_step += 1;
            }
            let ws: Vec<&[f64]> = s.clients.iter().map(|c| c.w.as_slice()).collect();
            let delta = server_pseudo_gradient(&prev, &ws).unwrap();
            s.aggregate().unwrap();
            for ((p, d), w) in prev.iter().zip(&delta).zip(&s.w_bar) {
                assert!((p + d - w).abs() <= 1e-12 * w.abs().max(1.0));
            }
        }
    }
}

/// Mini-batch SGD on one client with the clock skipping every `N`-th index.
fn plain_sgd(client: &RegressionClient, w0: &[f64], a: &StepSizeSchedule, n: usize, m: usize, rounds: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream(seed, Domain::Batch, 0);
    let mut w = w0.to_vec();
    let mut out = vec![w.clone()];
    for round in 0..rounds {
        for k in 1..n {
            let step = (round * n + k) as u64;
            let batch: Vec<usize> = (0..m).map(|_| rng.random_range(0..client.n_samples())).collect();
            let g = regression_minibatch_grad(&w, &client.data, &batch)?;
            let a = a.step_size(step);
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= a * gi;
            }
        }
        out.push(w.clone());
    }
    Ok(out)
}

#[test]
fn single_client_federation_is_plain_sgd() {
    let task = RegressionTask::new(vec![1.0, 2.0, -1.0], 3.0, 1.0, 400).unwrap();
    let client = RegressionClient {
        data: generate_regression_data(&task, &mut stream(2, Domain::Data, 0)),
        task,
    };
    let sched = StepSizeSchedule::tapering(0.02, 0.8).unwrap();
    let w0 = vec![4.0, -3.0, 0.5];
    let reference = plain_sgd(&client, &w0, &sched, 4, 8, 300, 21).unwrap();
    let mut s = FederatedState::new(vec![w0], vec![sched], 4, AlgorithmVariant::Proposed, 21).unwrap();
    s.aggregate().unwrap();
    assert_eq!(s.w_bar, reference[0]);
    for expected in &reference[1..] {
        s.run_round(std::slice::from_ref(&client), 8, None).unwrap();
        assert_eq!(&s.w_bar, expected);
    }
}

#[test]
fn clients_restart_from_the_aggregate() {
    let (mut s, clients) = default_state(AlgorithmVariant::Fedprox { mu: 0.1 }, 3);
    for _ in 0..20 {
        s.run_round(&clients, 50, None).unwrap();
        let spread = s.clients.iter().map(|c| vector::dist(&c.w, &s.w_bar)).fold(0.0, f64::max);
        assert_eq!(spread, 0.0);
        // the aggregation consumed index kN
        assert_eq!(s.global_step % s.period as u64, 1);
        assert!(s.clients.iter().all(|c| c.local_steps == 0));
    }
}

#[test]
fn step_bookkeeping() {
    let (mut s, clients) = default_state(AlgorithmVariant::Proposed, 4);
    s.period = 2;
    assert_eq!(s.global_step, 1);
    let before = s.clients[0].w.clone();
    let summary = s.run_round(&clients, 10, None).unwrap();
    // one local step at index 1, aggregation at index 2
    assert_eq!(summary.global_step, 2);
    assert_eq!(s.global_step, 3);
    assert_ne!(s.w_bar, before);
    assert!(s.aggregate().is_err());
}

#[test]
fn identical_seeds_give_identical_states() {
    let (mut a, clients) = default_state(AlgorithmVariant::Proposed, 17);
    let (mut b, _) = default_state(AlgorithmVariant::Proposed, 17);
    for _ in 0..100 {
        a.run_round(&clients, 50, None).unwrap();
        b.run_round(&clients, 50, None).unwrap();
    }
    assert_eq!(a.w_bar, b.w_bar);
    let (mut c, _) = default_state(AlgorithmVariant::Proposed, 18);
    c.run_round(&clients, 50, None).unwrap();
    assert_ne!(c.w_bar, a.w_bar);
}
