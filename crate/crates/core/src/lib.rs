//! Finite-time and prescribed-time stabilization of nonlinear strict-feedback
//! systems whose control directions are unknown, via switching barrier
//! Lyapunov functions.

pub mod baselines;
pub mod config;
pub mod ft_controller;
pub mod hybrid_sim;
pub mod numerics;
pub mod pft_controller;
pub mod plant;
pub mod suite;
pub mod supervisor;
pub mod verification;
