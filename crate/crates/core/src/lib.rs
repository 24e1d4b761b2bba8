//! Simulation of a modulator-free, injection-locked time-bin QKD transmitter
//! and secret-key-rate analysis for the three-state protocol it implements.
//!
//! The crate is organized along the signal chain:
//!
//! * [`laser`] — coupled master/slave semiconductor-laser rate equations with
//!   optical injection, integrated with fixed-step RK4.
//! * [`encoder`] — symbol sequences to pump waveforms, complex-field assembly,
//!   spectral (WDM-emulating) filtering, and unbalanced-interferometer decoding.
//! * [`scenario`] — the full transmitter pipeline wired end to end.
//! * [`security`] — analytic channel model, decoy and decoy-free secrecy
//!   bounds, and secret key rates over distance.
//! * [`montecarlo`] — bit-level protocol simulation with Poissonian sources
//!   and threshold detectors.
//!
//! With the default `parallel` feature, distance scans and Monte Carlo runs
//! use rayon data parallelism; disabling it falls back to equivalent
//! sequential code. Results are bit-identical either way.

// validation sites use `!(x > 0.0)` so NaN parameters are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod encoder;
pub mod laser;
pub mod montecarlo;
pub mod rng;
pub mod scenario;
pub mod security;

pub use encoder::StateSymbol;
pub use laser::{InjectionParams, LaserParams, LaserState, PumpWaveform};
pub use security::{ChannelParams, ProtocolConfig, SourceIntensities};
