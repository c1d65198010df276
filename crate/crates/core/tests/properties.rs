mod common;

use neural_casimir::bench::config::{ExperimentConfig, LossSpec};
use neural_casimir::bench::experiment::Controller;
use neural_casimir::bench::systems::pendulum_system;
use neural_casimir::casimir::casimir_residual;
use neural_casimir::linalg;
use proptest::prelude::*;

fn perturbed(c: &Controller, scale: f64, noise: &[f64]) -> Vec<f64> {
    c.params.values().iter().enumerate().map(|(i, v)| v + scale * noise[i % noise.len()]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn kernel_casimir_is_exact_for_any_parameters(
        seed in 0u64..50,
        scale in 0.0f64..3.0,
        noise in prop::collection::vec(-1.0f64..1.0, 1..40),
        z in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let mut cfg = common::small_pendulum_config(1);
        cfg.networks.seed = seed;
        let c = Controller::build(&cfg, 0.5).unwrap();
        let p = perturbed(&c, scale, &noise);
        let l = c.lyapunov();
        let g = l.casimir_grad(&p, &z).unwrap();
        let r = casimir_residual(&g, &l.closed_loop, &z).unwrap();
        prop_assert!(r <= 1e-10 * (1.0 + linalg::norm(&g)));

        // adding the Casimir leaves the drift unchanged
        let (j, rr) = l.closed_loop.structure_at(&z).unwrap();
        let jr = j.sub(&rr).unwrap();
        let with = jr.matvec(&l.grad(&p, &z).unwrap()).unwrap();
        let without = l.closed_loop.drift(&p, &z).unwrap();
        prop_assert!(linalg::norm(&linalg::sub(&with, &without)) <= 1e-9);
    }

    #[test]
    fn lossless_pendulum_is_passive(q in -5.0f64..5.0, p in -5.0f64..5.0, u in -5.0f64..5.0) {
        let sys = pendulum_system();
        prop_assert!(sys.passivity_residual(&[], &[q, p], &[u]).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn config_round_trips(
        margin in 0.01f64..2.0,
        seed in 0u64..1000,
        epochs in 1usize..10000,
        step in 1e-6f64..1e-1,
        dt in 1e-4f64..0.1,
        grid in prop::option::of(2usize..12),
        sweep in prop::collection::vec(0.01f64..2.0, 1..6),
    ) {
        let mut cfg = ExperimentConfig::pendulum_default();
        cfg.margin = margin;
        cfg.networks.seed = seed;
        cfg.optimizer.epochs = epochs;
        cfg.optimizer.step_size = step;
        cfg.simulation.dt = dt;
        cfg.sweep = sweep;
        if let Some(n) = grid {
            cfg.loss = LossSpec::Grid { per_axis: n, margin: 0.1, reduction: Default::default() };
        }
        let text = cfg.to_json();
        let back = ExperimentConfig::from_json(&text, None).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), text);
    }
}
