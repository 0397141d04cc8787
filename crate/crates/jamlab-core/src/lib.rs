//! Desk-scale radar electronic-warfare laboratory: jamming synthesis,
//! time-frequency analysis, a cross-modal recognition network, and
//! reinforcement-learning agents that pick anti-jamming waveforms.
//!
//! The crate is `no_std`-compatible (with `alloc`); everything here is pure
//! computation driven by explicit seeds. File formats, dataset I/O and the
//! command-line driver live in the companion `jamctl` crate.
//!
//! Pipeline overview:
//!
//! 1. [`signal`] synthesizes LFM radar pulses, the three jamming types
//!    (AJ, RFTJ, RDFTJ), receiver noise, and composite echo scenes.
//! 2. [`tf`] turns echoes into STFT and smoothed pseudo Wigner-Ville
//!    images for the recognizer.
//! 3. [`nn`] + [`recognizer`] implement a dense-tensor reverse-mode
//!    autodiff engine and the fused time/time-frequency classifier.
//! 4. [`env`] is the jammer-radar game: jammer scheduling strategies,
//!    SINR, per-jamming-type rewards, and the fused active/passive
//!    observation model.
//! 5. [`agent`] trains DQN (replay + target network) and tabular SARSA
//!    policies against the game.
//! 6. [`metrics`] scores both halves: confusion-matrix metrics and
//!    reward-curve convergence/stability statistics.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod agent;
pub mod env;
mod error;
pub mod fft;
pub mod metrics;
pub mod nn;
pub mod recognizer;
pub mod seeds;
pub mod signal;
pub mod tf;

pub use error::{Error, Result};
