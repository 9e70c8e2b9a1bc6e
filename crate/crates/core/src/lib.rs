//! Few-step diffusion ODE sampling toolkit.
//!
//! The crate covers the full pipeline needed to study few-step probability-flow
//! sampling at desk scale, with analytic oracle models standing in for trained
//! networks:
//!
//! - [`vp`] — variance-preserving diffusion coefficients and noise-level algebra
//! - [`grid`] — time discretization schedules (uniform-σ, Karras, improved,
//!   custom stop)
//! - [`models`] — denoiser oracles with exact scores (Gaussian mixtures,
//!   stationary Gaussian fields) plus the probability-flow ODE reference solver
//! - [`solvers`] — DPM++ first-order and second-order-multistep steps, an Euler
//!   baseline, and the sampling driver with CFG and staged FreeU activation
//! - [`freeu`] — training-free backbone/skip feature decoration
//! - [`metrics`] — Fréchet distance, PRD curves, sliced Wasserstein-2,
//!   truncation-error and convergence-order studies
//! - [`cli`] — the `fewstep` experiment harness
//!
//! All randomness is driven by seeded ChaCha8 streams; identical inputs produce
//! bit-identical outputs regardless of thread count.

pub mod cli;
pub mod error;
pub mod fft2;
pub mod freeu;
pub mod grid;
pub mod metrics;
pub mod models;
pub mod solvers;
pub mod vp;

pub use error::{Error, Result};
