//! Simulation laboratory for level-set percolation of stationary Gaussian
//! fields on R^d built as white-noise convolutions.
//!
//! The field is `f = q ⋆ W` for a positive radial kernel `q` and white noise
//! `W`, discretized as `f(x) = h^{d/2} Σ_y q(x−y) ξ_y` on a lattice of
//! spacing `h`. The lab samples the coupled family
//!
//! * `f` — the full-kernel field,
//! * `f_N` — the same noise convolved with the cutoff kernel `q·χ_N`
//!   (finite range of dependence `N`),
//! * `f_N^ε` — its piecewise-constant restriction to `εZ^d`,
//! * `T_δ` — per-cell ternary resampling noise,
//!
//! thresholds them into site-percolation configurations on `εZ^d`, and runs
//! Monte Carlo estimators for connection events: crossing probabilities,
//! critical-level bisection, decay-rate fits, coupled model-comparison
//! checks, the box-by-box interpolation between scales `N` and `2N`, and a
//! finite-dimensional Gaussian reweighting verifier.
//!
//! Modules mirror the pipeline: [`kernel`] (kernels, cutoffs, parameter
//! schedules), [`field`] (noise sampling and convolution), [`perc`]
//! (thresholding, clusters, events), [`interp`] (sprinkling and hybrid
//! configurations), [`stats`] (estimators and verdicts), [`cli`]
//! (experiment orchestration).

pub mod cli;
pub mod fft;
pub mod field;
pub mod grid;
pub mod interp;
pub mod kernel;
pub mod perc;
pub mod rng;
pub mod stats;
