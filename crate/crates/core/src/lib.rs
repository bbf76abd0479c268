//! Simulator for BB84 over time-bin qubits.
//!
//! Alice encodes with an asymmetric Mach-Zehnder interferometer driven by a
//! phase modulator; Bob decodes with a matching passive interferometer and a
//! gated two-detector receiver. A detection in the first or last time slot
//! is a Z-basis result, the central slot an X-basis result, so basis choice
//! needs no active switching at the receiver.
//!
//! Module order follows the signal path:
//! [`optics`] → [`channel`] (and [`eve`]) → [`detection`] → [`protocol`],
//! tied together by [`session`]. [`config`], [`report`] and [`commands`] back
//! the `timebin-qkd` binary.

pub mod channel;
pub mod commands;
pub mod config;
pub mod detection;
pub mod eve;
pub mod optics;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod session;
