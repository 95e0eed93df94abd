//! Nonlinear acoustic propagation solvers, an adaptive multi-microphone
//! front end, synthetic scene generation and an RL layer that tunes the
//! front end against scene-level reward.
//!
//! The crate is split along those lines:
//!
//! - [`wavefield`]: plane-wave Westervelt and axisymmetric KZK solvers with
//!   their analytic oracles (Fubini series, Gaussian beam, thermoviscous decay).
//! - [`frontend`]: oversampled DFT filter bank, subband NLMS echo canceller,
//!   delay-and-sum beamformer, SRP localization, masks, gains and mixing.
//! - [`scene`]: image-source rooms, shaped noise, SNR mixing and metrics.
//! - [`rl`]: PPO with a clipped surrogate, GAE, tabular Q-learning and the
//!   front-end tuning environment.
//! - [`io`]: WAV and CSV helpers shared by the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dsp;
pub mod error;
pub mod frontend;
pub mod io;
pub mod rl;
pub mod scene;
pub mod wavefield;

pub use error::{Category, Error, Result};
