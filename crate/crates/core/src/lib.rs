#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Neural energy-Casimir controller synthesis for port-Hamiltonian systems.
//!
//! A plant and a port-Hamiltonian controller are interconnected, a Casimir
//! of the closed loop is parameterized by neural networks, and the shaped
//! Lyapunov function `V = H + H_c + C` is trained so that its minimum sits
//! at a chosen equilibrium. Damping injection then stabilizes it.

pub mod autodiff;
pub mod bench;
pub mod casimir;
pub mod expr;
pub mod linalg;
pub mod neural;
pub mod phs;
pub mod sim;
pub mod train;
