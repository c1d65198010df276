//! Browser bindings for the pendulum controller: train, evaluate the
//! Lyapunov surface and simulate the damped closed loop.
//!
//! [`Session`] holds the logic and is usable natively; [`PendulumDemo`]
//! wraps it for JavaScript.

use neural_casimir::bench::config::ExperimentConfig;
use neural_casimir::bench::experiment::{lyapunov_surface, Controller};
use neural_casimir::linalg;
use neural_casimir::sim::simulate;
use neural_casimir::train::TrainReport;
use wasm_bindgen::prelude::*;

/// Columns per trajectory sample: `t, q, p, ξ, V`.
pub const TRAJECTORY_STRIDE: usize = 5;

pub struct Session {
    controller: Controller,
    report: TrainReport,
    z_bar: Option<Vec<f64>>,
}

impl Session {
    /// Trains the default pendulum controller with the given seed, epoch
    /// count and margin.
    pub fn train(seed: u64, epochs: usize, margin: f64) -> Result<Self, String> {
        let mut cfg = ExperimentConfig::pendulum_default();
        cfg.networks.seed = seed;
        cfg.optimizer.epochs = epochs;
        cfg.margin = margin;
        cfg.validate().map_err(|e| e.to_string())?;
        let mut controller = Controller::build(&cfg, margin).map_err(|e| e.to_string())?;
        let report = controller.train().map_err(|e| e.to_string())?;
        let z_bar = controller.find_minimum().ok().map(|m| m.z);
        Ok(Self { controller, report, z_bar })
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    pub fn z_bar(&self) -> Option<&[f64]> {
        self.z_bar.as_deref()
    }

    /// `‖z̄ − z*‖`, if the minimum search converged.
    pub fn distance(&self) -> Option<f64> {
        self.z_bar.as_ref().map(|z| linalg::norm(&linalg::sub(z, &self.report.z_star)))
    }

    /// `V` on a `width x height` grid over `[−2, 2]²` at `ξ = ξ*`, with `q`
    /// varying slowest.
    pub fn surface(&self, width: usize, height: usize) -> Result<Vec<f64>, String> {
        let pts = lyapunov_surface(&self.controller, width, height).map_err(|e| e.to_string())?;
        Ok(pts.into_iter().map(|p| p.v).collect())
    }

    /// Damped run from `(q, p, ξ)`, every `every`-th sample flattened as
    /// `t, q, p, ξ, V`.
    pub fn simulate(&self, z0: [f64; 3], horizon: f64, every: usize) -> Result<Vec<f64>, String> {
        let c = &self.controller;
        let tr = simulate(c.lyapunov(), Some(&c.gains), c.params.values(), &z0, 0.01, horizon)
            .map_err(|e| e.to_string())?;
        let mut out = Vec::with_capacity(tr.len() / every.max(1) * TRAJECTORY_STRIDE + TRAJECTORY_STRIDE);
        for k in (0..tr.len()).step_by(every.max(1)) {
            out.push(tr.times[k]);
            out.extend_from_slice(&tr.states[k]);
            out.push(tr.lyapunov[k]);
        }
        Ok(out)
    }
}

#[wasm_bindgen]
pub struct PendulumDemo(Session);

#[wasm_bindgen]
impl PendulumDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, epochs: u32, margin: f64) -> Result<PendulumDemo, JsError> {
        Session::train(seed as u64, epochs as usize, margin).map(PendulumDemo).map_err(|e| JsError::new(&e))
    }

    pub fn epsilon(&self) -> f64 {
        self.0.report().epsilon
    }

    /// `ε/(a − ε)`, NaN when `a ≤ ε`.
    pub fn bound(&self) -> f64 {
        self.0.report().bound.unwrap_or(f64::NAN)
    }

    /// NaN when no minimum was found near `z*`.
    pub fn distance(&self) -> f64 {
        self.0.distance().unwrap_or(f64::NAN)
    }

    pub fn xi_star(&self) -> f64 {
        self.0.report().xi_star[0]
    }

    pub fn loss_history(&self) -> Vec<f64> {
        self.0.report().history.iter().map(|r| r.total).collect()
    }

    pub fn surface(&self, width: u32, height: u32) -> Result<Vec<f64>, JsError> {
        self.0.surface(width as usize, height as usize).map_err(|e| JsError::new(&e))
    }

    pub fn simulate(&self, q: f64, p: f64, xi: f64, horizon: f64) -> Result<Vec<f64>, JsError> {
        self.0.simulate([q, p, xi], horizon, 5).map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_round_trip() {
        let s = Session::train(0, 2000, 0.5).unwrap();
        assert!(s.report().epsilon < 0.02);
        assert!(s.distance().unwrap() < 0.01);
        let v = s.surface(11, 11).unwrap();
        assert_eq!(v.len(), 121);
        let (argmin, _) = v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        // grid step 0.4; q* = π/4 falls nearest to 0.8
        assert_eq!((argmin / 11, argmin % 11), (7, 5));
        let tr = s.simulate([-1.0, 1.0, 0.0], 30.0, 5).unwrap();
        assert_eq!(tr.len() % TRAJECTORY_STRIDE, 0);
        let last = &tr[tr.len() - TRAJECTORY_STRIDE..];
        let z_bar = s.z_bar().unwrap();
        assert!((1..4).all(|i| (last[i] - z_bar[i - 1]).abs() < 0.05));
    }

    #[test]
    fn bad_margin_is_an_error() {
        assert!(Session::train(0, 10, -1.0).is_err());
    }
}
