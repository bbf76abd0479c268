//! Single-mode fiber between Alice and Bob.
//!
//! The fiber is a scalar power transmittance. Polarization scrambling has no
//! effect on the time-bin distributions, so it is not represented at all.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::TimeBinState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    pub length_km: f64,
    /// Standard telecom fiber at 1550 nm (an assumption, not a measured value).
    pub atten_db_per_km: f64,
    pub fixed_insertion_db: f64,
    /// Set from the eavesdropper configuration; not a channel-file key.
    #[serde(skip)]
    pub eve_enabled: bool,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            length_km: 0.0,
            atten_db_per_km: 0.2,
            fixed_insertion_db: 0.0,
            eve_enabled: false,
        }
    }
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (field, value) in [
            ("length_km", self.length_km),
            ("atten_db_per_km", self.atten_db_per_km),
            ("fixed_insertion_db", self.fixed_insertion_db),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ChannelError::Invalid {
                    field,
                    reason: format!("{value} must be a finite value >= 0"),
                });
            }
        }
        if self.transmittance() <= 0.0 {
            return Err(ChannelError::Invalid {
                field: "length_km",
                reason: "total loss underflows to zero transmittance".into(),
            });
        }
        Ok(())
    }

    pub fn loss_db(&self) -> f64 {
        self.length_km * self.atten_db_per_km + self.fixed_insertion_db
    }

    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.loss_db() / 10.0)
    }
}

/// Hook for anything that acts on a pulse before the fiber loss.
pub trait Interceptor {
    fn intercept(&mut self, pulse_idx: u64, state: TimeBinState) -> TimeBinState;
}

/// Passes every pulse through untouched.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoTap;

impl Interceptor for NoTap {
    fn intercept(&mut self, _pulse_idx: u64, state: TimeBinState) -> TimeBinState {
        state
    }
}

/// Fiber loss only.
pub fn propagate(state: &TimeBinState, spec: &ChannelSpec) -> TimeBinState {
    state.scaled(spec.transmittance().sqrt())
}

/// Full link: the interceptor (when `eve_enabled`) acts at Alice's end, then
/// the fiber attenuates.
pub fn propagate_pulse(
    pulse_idx: u64,
    state: TimeBinState,
    spec: &ChannelSpec,
    tap: &mut dyn Interceptor,
) -> TimeBinState {
    let state = if spec.eve_enabled {
        tap.intercept(pulse_idx, state)
    } else {
        state
    };
    propagate(&state, spec)
}
