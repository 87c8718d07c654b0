mod common;

use common::{central_difference, obs, random_dag, rng};
use crlogit::estimation::{estimate, loglik, loglik_gradient, EstimationConfig, GradientMode, Model};
use crlogit::network::{Network, NetworkBuilder};
use crlogit::Error;
use rand::Rng;

/// Two routes from 0 to 3: 0-1-3 with length 2 and 0-2-3 with length 3.
fn two_routes() -> Network {
    NetworkBuilder::new(4, 3)
        .attributes(["length"])
        .constraints(1, 1.0)
        .edge(0, 1, vec![1.0], vec![1])
        .edge(1, 3, vec![1.0], vec![1])
        .edge(0, 2, vec![1.5], vec![1])
        .edge(2, 3, vec![1.5], vec![1])
        .build()
        .unwrap()
}

fn sample(short: usize, long: usize) -> Vec<crlogit::network::Observation> {
    let mut v = vec![obs(&[0, 1, 3]); short];
    v.extend(vec![obs(&[0, 2, 3]); long]);
    v
}

#[test]
fn two_route_mle_matches_grid_search() {
    let net = two_routes();
    let data = sample(70, 30);
    let ll = |b: f64| loglik(&net, &Model::Rl, 1.0, &[b], &data).unwrap().0;
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if ll(m1) < ll(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let grid = 0.5 * (lo + hi);
    let fit = estimate(&net, &data, &Model::Rl, &EstimationConfig::default()).unwrap();
    assert!(fit.converged);
    assert!((fit.beta[0] - grid).abs() < 1e-4, "{} vs {grid}", fit.beta[0]);
    // Share of the short route is 1 / (1 + e^b).
    assert!((grid + (70.0f64 / 30.0).ln()).abs() < 1e-6);
}

#[test]
fn single_route_has_zero_gradient() {
    let net = NetworkBuilder::new(3, 2)
        .attributes(["a", "b"])
        .constraints(1, 1.0)
        .edge(0, 1, vec![1.0, 2.0], vec![1])
        .edge(1, 2, vec![0.5, -1.0], vec![1])
        .build()
        .unwrap();
    let data = vec![obs(&[0, 1, 2]); 5];
    for model in [Model::Rl, Model::Crl { alpha: vec![2] }] {
        let g = loglik_gradient(&net, &model, 1.0, &[-0.7, 0.4], &data, GradientMode::Analytic).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12), "{g:?}");
    }
}

#[test]
fn absent_attribute_has_zero_gradient() {
    let net = NetworkBuilder::new(4, 3)
        .attributes(["length", "unused"])
        .constraints(1, 1.0)
        .edge(0, 1, vec![1.0, 0.0], vec![1])
        .edge(1, 3, vec![1.0, 0.0], vec![1])
        .edge(0, 2, vec![1.5, 0.0], vec![1])
        .edge(2, 3, vec![1.5, 0.0], vec![1])
        .build()
        .unwrap();
    let data = vec![obs(&[0, 1, 3]), obs(&[0, 2, 3])];
    let g = loglik_gradient(&net, &Model::Rl, 1.0, &[-1.0, 3.0], &data, GradientMode::Analytic).unwrap();
    assert_eq!(g[1], 0.0);
    assert!(g[0] != 0.0);
}

#[test]
fn analytic_gradient_matches_central_difference() {
    let mut r = rng(404);
    for i in 0..20 {
        let net = random_dag(&mut r, 10, 0.4, 1, (1, 3), 0.2);
        let beta = vec![-r.gen_range(0.2..1.5), r.gen_range(-1.0..1.0)];
        let routes = common::brute_force_routes(&net, &beta, 0, &[i64::MAX]);
        let peak = routes.iter().map(|r| r.edges.iter().map(|&e| net.edge(e).costs[0]).sum::<i64>()).max().unwrap();
        let alpha = vec![(peak * 3) / 4];
        let data: Vec<_> = common::brute_force_routes(&net, &beta, 0, &alpha)
            .into_iter()
            .filter(|r| r.feasible)
            .map(|r| obs(&r.states))
            .collect();
        if data.is_empty() {
            continue;
        }
        let model = if i % 2 == 0 { Model::Rl } else { Model::Crl { alpha } };
        let analytic = loglik_gradient(&net, &model, 1.0, &beta, &data, GradientMode::Analytic).unwrap();
        let fd = central_difference(|b| loglik(&net, &model, 1.0, b, &data).unwrap().0, &beta, 1e-5);
        for (a, f) in analytic.iter().zip(&fd) {
            assert!((a - f).abs() <= 1e-6 * f.abs().max(1.0), "{analytic:?} vs {fd:?}");
        }
    }
}

#[test]
fn scale_and_coefficients_are_confounded() {
    let mut r = rng(505);
    let net = random_dag(&mut r, 9, 0.5, 1, (1, 2), 0.0);
    let beta = [-0.8, 0.5];
    let routes = common::brute_force_routes(&net, &beta, 0, &[i64::MAX]);
    let data: Vec<_> = routes.iter().map(|r| obs(&r.states)).collect();
    let (a, _) = loglik(&net, &Model::Rl, 1.0, &beta, &data).unwrap();
    let (b, _) = loglik(&net, &Model::Rl, 2.5, &[beta[0] * 2.5, beta[1] * 2.5], &data).unwrap();
    assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
}

#[test]
fn repeated_evaluation_is_bit_identical() {
    let mut r = rng(606);
    let net = random_dag(&mut r, 10, 0.4, 1, (1, 3), 0.3);
    let routes = common::brute_force_routes(&net, &[-1.0, 0.2], 0, &[i64::MAX]);
    let data: Vec<_> = routes.iter().map(|r| obs(&r.states)).collect();
    let model = Model::Crl { alpha: vec![i64::from(u16::MAX)] };
    let runs: Vec<u64> = (0..5)
        .map(|_| loglik(&net, &model, 1.0, &[-1.0, 0.2], &data).unwrap().0.to_bits())
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn infeasible_observation_is_reported_by_index() {
    let net = two_routes();
    let data = vec![obs(&[0, 1, 3]), obs(&[0, 2, 3]), obs(&[0, 1, 3])];
    // Both routes have two unit-cost links, so a bound of 1 rules everything out.
    match loglik(&net, &Model::Crl { alpha: vec![1] }, 1.0, &[-1.0], &data) {
        Err(Error::InfeasibleObservations { indices }) => assert_eq!(indices, vec![0, 1, 2]),
        other => panic!("unexpected {other:?}"),
    }
}
