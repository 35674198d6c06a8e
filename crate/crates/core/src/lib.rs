//! Feedback particle filter (FPF) on the rotation group.
//!
//! The crate is organised bottom-up:
//!
//! * [`lie`]: SO(3)/so(3)/quaternion arithmetic, distances, sampling and
//!   ensemble statistics.
//! * [`gain`]: approximations of the gain function (Galerkin, kernel
//!   fixed-point and constant gain).
//! * [`filters`]: the quaternion FPF step, the mean/covariance moment filter
//!   and the exact SO(2) Bayes posterior.
//! * [`sim`]: ground-truth trajectories and observation increments.
//! * [`experiment`]: Monte Carlo runner, sweeps, timing and the bimodal study.
//!
//! Data-parallel loops (particle propagation, kernel assembly, Monte Carlo
//! runs) go through rayon when the `parallel` feature is enabled and fall back
//! to plain iterators otherwise. Every reduction is performed in a fixed order
//! so results do not depend on the number of worker threads.

pub mod error;
pub mod experiment;
pub mod filters;
pub mod gain;
pub mod lie;
pub mod par;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use lie::{Quat, Tangent};
