mod common;

use neural_casimir::bench::config::ExperimentConfig;
use neural_casimir::bench::experiment::Controller;
use neural_casimir::bench::systems::pendulum_system;
use neural_casimir::linalg;
use neural_casimir::phs::PhsError;
use neural_casimir::sim::{controlled_field, rk4_integrate, simulate, verify_lyapunov_decrease};

fn pendulum_run(z0: &[f64], dt: f64, horizon: f64) -> Vec<Vec<f64>> {
    let p = pendulum_system();
    rk4_integrate(|x| p.vector_field(&[], x, &[0.0]), z0, dt, horizon).unwrap().1
}

/// Relative energy drift of the free pendulum over 10 s at dt = 0.01.
fn pendulum_energy_drift() -> f64 {
    let p = pendulum_system();
    let states = pendulum_run(&[1.0, 0.5], 0.01, 10.0);
    let h0 = p.hamiltonian_value(&[], &states[0]).unwrap();
    states.iter().map(|x| (p.hamiltonian_value(&[], x).unwrap() - h0).abs() / h0).fold(0.0, f64::max)
}

#[test]
fn free_pendulum_conserves_energy() {
    assert!(pendulum_energy_drift() <= 1e-6);
}

#[test]
fn rotation_matches_closed_form() {
    let (times, states) =
        rk4_integrate(|z: &[f64]| Ok::<_, PhsError>(vec![z[1], -z[0]]), &[1.0, 0.0], 0.01, 10.0).unwrap();
    let err = times
        .iter()
        .zip(&states)
        .map(|(t, z)| ((z[0] - t.cos()).powi(2) + (z[1] + t.sin()).powi(2)).sqrt())
        .fold(0.0, f64::max);
    assert!(err <= 1e-7, "{err:e}");
}

#[test]
fn step_halving_shows_fourth_order() {
    let end = |dt: f64| pendulum_run(&[2.0, 1.0], dt, 5.0).pop().unwrap();
    let (a, b, c) = (end(0.1), end(0.05), end(0.025));
    let order = (linalg::norm(&linalg::sub(&a, &b)) / linalg::norm(&linalg::sub(&b, &c))).log2();
    assert!((order - 4.0).abs() <= 0.5, "observed order {order}");
}

#[test]
fn undamped_closed_loop_conserves_total_energy() {
    let c = Controller::build(&common::small_pendulum_config(1), 0.5).unwrap();
    let tr = simulate(c.lyapunov(), None, c.params.values(), &[1.0, -0.5, 0.3], 0.01, 10.0).unwrap();
    let h0 = tr.hamiltonian[0];
    assert!(tr.hamiltonian.iter().all(|h| (h - h0).abs() <= 1e-7 * (1.0 + h0.abs())));
    assert!(verify_lyapunov_decrease(&tr).pass);
}

#[test]
fn trained_minimum_is_an_equilibrium() {
    let mut c = Controller::build(&ExperimentConfig::pendulum_default(), 0.5).unwrap();
    c.train().unwrap();
    let z_bar = c.find_minimum().unwrap().z;
    let f = controlled_field(c.lyapunov(), &c.gains, c.params.values(), &z_bar).unwrap();
    assert!(linalg::norm(&f.zdot) <= 1e-6);
}
