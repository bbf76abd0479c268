//! BB84 public discussion between Alice and Bob.
//!
//! Bob's basis is passive: the slot a photon lands in decides it. He
//! therefore announces his measured basis for every registered pulse first,
//! and Alice answers with the indices where her preparation basis matches.
//! A random fraction of the sifted key is then disclosed to estimate the
//! error rate.

mod messages;
pub(crate) mod parties;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::DetectionEvent;
use crate::optics::{Basis, Bit, CanonicalState, Port, Slot};
use crate::rng::{Purpose, RngHandle};

pub use messages::{
    queue_pair, ClassicalMessage, Direction, QueueEndpoint, Recorded, StreamTransport, Transport,
    TransportError,
};
pub use parties::{estimate_qber, estimate_qber_with, sift, sift_with, Alice, Bob};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("transport failure: {0}")]
    Transport(#[from] TransportError),
    #[error("protocol order violation: expected {expected}, received {received}")]
    OutOfOrder {
        expected: &'static str,
        received: &'static str,
    },
    #[error("pulse index {index} is outside the session range [{first}, {end})")]
    IndexOutOfRange { index: u64, first: u64, end: u64 },
    #[error("indices in {message} are not strictly increasing at {index}")]
    NotMonotone { message: &'static str, index: u64 },
    #[error("index {index} in {message} does not refer to a retained pulse")]
    UnknownIndex { message: &'static str, index: u64 },
    #[error("expected {expected} sample bits, received {received}")]
    SampleLength { expected: usize, received: usize },
    #[error("reported QBER {0} is outside [0, 1]")]
    BadQber(f64),
    #[error(
        "insufficient key: {length} sifted bits cannot support a sample fraction of {fraction}"
    )]
    InsufficientKey { length: usize, fraction: f64 },
    #[error("sample fraction {0} must lie in (0, 1]")]
    SampleFraction(f64),
    #[error("at least one pulse is required")]
    NoPulses,
    #[error("pulse records must be indexed densely from 0 (found {found} at position {position})")]
    SparseRecords { position: usize, found: u64 },
    #[error("{party} is in the wrong phase for {operation}")]
    Phase {
        party: &'static str,
        operation: &'static str,
    },
    #[error("peer thread panicked")]
    PeerPanicked,
}

/// Alice's preparation choice for one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseRecord {
    pub pulse_idx: u64,
    pub bit: Bit,
    pub basis: Basis,
}

impl PulseRecord {
    pub fn state(&self) -> CanonicalState {
        CanonicalState::new(self.basis, self.bit)
    }
}

/// Bob's reading of a registered detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub pulse_idx: u64,
    pub measured_basis: Basis,
    pub bit: Bit,
}

/// Uniform independent basis and bit per pulse, one substream per pulse.
pub fn alice_generate(n: u64, rng: &RngHandle) -> Result<Vec<PulseRecord>, ProtocolError> {
    if n == 0 {
        return Err(ProtocolError::NoPulses);
    }
    let family = rng.streams(Purpose::AliceChoice);
    Ok((0..n)
        .map(|pulse_idx| {
            let bits: u32 = family.for_pulse(pulse_idx).random();
            PulseRecord {
                pulse_idx,
                basis: if bits & 1 == 0 { Basis::Z } else { Basis::X },
                bit: Bit::from(bits & 2 != 0),
            }
        })
        .collect())
}

/// Edge slots give the arrival-time bit whatever the port; the central slot
/// gives the phase bit from the port (`D1` for `|s⟩+|l⟩`).
pub fn classify(event: &DetectionEvent) -> Classification {
    let (measured_basis, bit) = match (event.slot, event.port) {
        (Slot::S1, _) => (Basis::Z, Bit::Zero),
        (Slot::S3, _) => (Basis::Z, Bit::One),
        (Slot::S2, Port::D1) => (Basis::X, Bit::Zero),
        (Slot::S2, Port::D0) => (Basis::X, Bit::One),
    };
    Classification {
        pulse_idx: event.pulse_idx,
        measured_basis,
        bit,
    }
}

/// A system that only uses one edge slot ignores late-slot detections.
pub fn conventional_filter(event: &DetectionEvent) -> bool {
    event.slot != Slot::S3
}

/// One side's key after sifting (and, later, error estimation).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiftedKey {
    pub bits: Vec<Bit>,
    /// Publicly agreed basis of each bit.
    pub bases: Vec<Basis>,
    pub source_indices: Vec<u64>,
    pub qber_estimate: Option<f64>,
    pub disclosed_count: usize,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Bits packed MSB-first; the last byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.bits
            .chunks(8)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, b)| acc | (b.as_u8() << (7 - i)))
            })
            .collect()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    fn remove_positions(&mut self, sorted_positions: &[usize]) {
        let mut drop = sorted_positions.iter().peekable();
        let mut keep = Vec::with_capacity(self.len());
        for pos in 0..self.len() {
            if drop.peek() == Some(&&pos) {
                drop.next();
            } else {
                keep.push(pos);
            }
        }
        self.bits = keep.iter().map(|&p| self.bits[p]).collect();
        self.bases = keep.iter().map(|&p| self.bases[p]).collect();
        self.source_indices = keep.iter().map(|&p| self.source_indices[p]).collect();
        self.disclosed_count += sorted_positions.len();
    }
}

/// Headline numbers of a session.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionSummary {
    pub pulses_sent: u64,
    pub events_registered: u64,
    /// Registered events kept at sifting (basis-compatible).
    pub conclusive_count: u64,
    /// Key bits left after the error-estimation sample is removed.
    pub sifted_length: u64,
    pub qber: f64,
    /// `conclusive_count / pulses_sent`.
    pub sifted_rate_per_pulse: f64,
    /// Expected share of registered events caused by dark counts alone.
    pub dark_fraction_estimate: f64,
}

/// Builds the summary from session counts.
///
/// `dark_event_probability` is the per-pulse registration probability with
/// the source blocked.
pub fn summarize(
    pulses_sent: u64,
    events_registered: u64,
    conclusive_count: u64,
    final_key: &SiftedKey,
    dark_event_probability: f64,
) -> SessionSummary {
    let per_pulse = |x: u64| {
        if pulses_sent == 0 {
            0.0
        } else {
            x as f64 / pulses_sent as f64
        }
    };
    let dark_fraction_estimate = if events_registered == 0 {
        0.0
    } else {
        (pulses_sent as f64 * dark_event_probability / events_registered as f64).min(1.0)
    };
    SessionSummary {
        pulses_sent,
        events_registered,
        conclusive_count,
        sifted_length: final_key.len() as u64,
        qber: final_key.qber_estimate.unwrap_or(0.0),
        sifted_rate_per_pulse: per_pulse(conclusive_count),
        dark_fraction_estimate,
    }
}
