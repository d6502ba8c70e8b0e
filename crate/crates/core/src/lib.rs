//! Quiet quadruped locomotion on a desk-scale planar simulator.
//!
//! The crate trains and evaluates walking controllers for a sagittal-plane
//! quadruped whose footfalls are scored by an impact-noise model. A
//! "quiet factor" command in `[0, 1]` trades velocity-tracking reward
//! against a foot-phase shaping term, so a single trained policy can be
//! driven anywhere between "fast and loud" and "slow and quiet" at run
//! time.
//!
//! Layout:
//! - [`sim`]: planar rigid-body simulator with spring-damper ground contact
//!   and touchdown/liftoff event extraction;
//! - [`acoustics`]: impact sound pressure, decibel arithmetic, and noise
//!   traces sampled at a fixed microphone rate;
//! - [`phase`]: contact-phase labelling and the recurrent gait-phase
//!   estimator (sequence encoder, variational forward model, output heads);
//! - [`nn`]: a small tape-based reverse-mode differentiation engine the
//!   estimator and policy losses are built on;
//! - [`rewards`]: per-step reward terms and the quiet-factor blend;
//! - [`policy`]: actor/critic networks over estimated and privileged state;
//! - [`trainer`]: clipped-surrogate policy optimization with generalized
//!   advantage estimation and a terrain curriculum;
//! - [`eval`]: surface trials, speed and quiet-factor sweeps, a long
//!   mixed-surface walk, noise-gain calibration, and report generation;
//! - [`checkpoint`], [`records`], [`config`]: serialization of weights,
//!   run artifacts, and run configuration;
//! - [`check`]: self-contained runtime verification of gradients and
//!   reward/acoustics arithmetic.

pub mod acoustics;
pub mod check;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod nn;
pub mod phase;
pub mod policy;
pub mod records;
pub mod rewards;
pub mod sim;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
