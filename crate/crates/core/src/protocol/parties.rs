//! Alice and Bob as sequential state machines.
//!
//! Message order per session:
//! `BasisRequest` (A→B), `BobBasisAnnounce` (B→A), `AliceMatchReply` (A→B),
//! then `SampleIndices` (A→B), `SampleBits` (B→A), `QberReport` (A→B).
//! Anything else, or anything malformed, aborts the session. A party that
//! aborts drops its endpoint, which the peer sees as a closed channel.

use std::thread;

use rand::seq::index;
use rand::Rng;

use super::{
    queue_pair, ClassicalMessage, Classification, ProtocolError, PulseRecord, SiftedKey, Transport,
};

fn out_of_order(expected: &'static str, got: &ClassicalMessage) -> ProtocolError {
    ProtocolError::OutOfOrder {
        expected,
        received: got.kind(),
    }
}

fn check_increasing(
    message: &'static str,
    indices: impl Iterator<Item = u64>,
) -> Result<(), ProtocolError> {
    let mut prev: Option<u64> = None;
    for index in indices {
        if prev.is_some_and(|p| index <= p) {
            return Err(ProtocolError::NotMonotone { message, index });
        }
        prev = Some(index);
    }
    Ok(())
}

/// Positions of `wanted` inside the sorted `haystack`; both strictly increasing.
fn positions_of(
    message: &'static str,
    haystack: &[u64],
    wanted: &[u64],
) -> Result<Vec<usize>, ProtocolError> {
    let mut out = Vec::with_capacity(wanted.len());
    let mut pos = 0;
    for &w in wanted {
        while pos < haystack.len() && haystack[pos] < w {
            pos += 1;
        }
        if pos == haystack.len() || haystack[pos] != w {
            return Err(ProtocolError::UnknownIndex { message, index: w });
        }
        out.push(pos);
        pos += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Start,
    Sifted,
    Done,
    Aborted,
}

/// Sender side: knows every prepared (basis, bit).
#[derive(Debug)]
pub struct Alice {
    records: Vec<PulseRecord>,
    phase: Phase,
}

impl Alice {
    pub fn new(records: Vec<PulseRecord>) -> Result<Self, ProtocolError> {
        if records.is_empty() {
            return Err(ProtocolError::NoPulses);
        }
        if let Some((position, r)) = records
            .iter()
            .enumerate()
            .find(|(i, r)| r.pulse_idx != *i as u64)
        {
            return Err(ProtocolError::SparseRecords {
                position,
                found: r.pulse_idx,
            });
        }
        Ok(Alice {
            records,
            phase: Phase::Start,
        })
    }

    fn guard(&mut self, want: Phase, operation: &'static str) -> Result<(), ProtocolError> {
        if self.phase != want {
            return Err(ProtocolError::Phase {
                party: "Alice",
                operation,
            });
        }
        Ok(())
    }

    pub fn sift(&mut self, link: &mut dyn Transport) -> Result<SiftedKey, ProtocolError> {
        self.guard(Phase::Start, "sifting")?;
        let result = self.sift_inner(link);
        self.phase = if result.is_ok() {
            Phase::Sifted
        } else {
            Phase::Aborted
        };
        result
    }

    fn sift_inner(&self, link: &mut dyn Transport) -> Result<SiftedKey, ProtocolError> {
        let count = self.records.len() as u64;
        link.send(ClassicalMessage::BasisRequest { first: 0, count })?;
        let entries = match link.recv()? {
            ClassicalMessage::BobBasisAnnounce { entries } => entries,
            other => return Err(out_of_order("BobBasisAnnounce", &other)),
        };
        check_increasing("BobBasisAnnounce", entries.iter().map(|e| e.0))?;
        let mut key = SiftedKey::default();
        for &(index, basis) in &entries {
            let rec = self
                .records
                .get(index as usize)
                .filter(|_| index < count)
                .ok_or(ProtocolError::IndexOutOfRange {
                    index,
                    first: 0,
                    end: count,
                })?;
            if rec.basis == basis {
                key.bits.push(rec.bit);
                key.bases.push(basis);
                key.source_indices.push(index);
            }
        }
        link.send(ClassicalMessage::AliceMatchReply {
            kept: key.source_indices.clone(),
        })?;
        Ok(key)
    }

    /// Alice picks the sample, Bob reveals his sampled bits, Alice reports.
    pub fn estimate_qber<R: Rng + ?Sized>(
        &mut self,
        key: SiftedKey,
        fraction: f64,
        rng: &mut R,
        link: &mut dyn Transport,
    ) -> Result<SiftedKey, ProtocolError> {
        self.guard(Phase::Sifted, "error estimation")?;
        let result = Self::estimate_inner(key, fraction, rng, link);
        self.phase = if result.is_ok() {
            Phase::Done
        } else {
            Phase::Aborted
        };
        result
    }

    fn estimate_inner<R: Rng + ?Sized>(
        mut key: SiftedKey,
        fraction: f64,
        rng: &mut R,
        link: &mut dyn Transport,
    ) -> Result<SiftedKey, ProtocolError> {
        let sample_size = sample_size(key.len(), fraction)?;
        let mut positions = index::sample(rng, key.len(), sample_size).into_vec();
        positions.sort_unstable();
        let indices: Vec<u64> = positions.iter().map(|&p| key.source_indices[p]).collect();
        link.send(ClassicalMessage::SampleIndices { indices })?;
        let bits = match link.recv()? {
            ClassicalMessage::SampleBits { bits } => bits,
            other => return Err(out_of_order("SampleBits", &other)),
        };
        if bits.len() != positions.len() {
            return Err(ProtocolError::SampleLength {
                expected: positions.len(),
                received: bits.len(),
            });
        }
        let errors = positions
            .iter()
            .zip(&bits)
            .filter(|(&p, &b)| key.bits[p].as_u8() != b)
            .count();
        let qber = errors as f64 / positions.len() as f64;
        link.send(ClassicalMessage::QberReport { qber })?;
        key.remove_positions(&positions);
        key.qber_estimate = Some(qber);
        Ok(key)
    }
}

/// Number of bits to disclose; at least one.
fn sample_size(len: usize, fraction: f64) -> Result<usize, ProtocolError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ProtocolError::SampleFraction(fraction));
    }
    if len == 0 || (len as f64) * fraction < 1.0 {
        return Err(ProtocolError::InsufficientKey {
            length: len,
            fraction,
        });
    }
    Ok((((len as f64) * fraction).round() as usize).clamp(1, len))
}

/// Receiver side: knows only his own classifications.
#[derive(Debug)]
pub struct Bob {
    classifications: Vec<Classification>,
    phase: Phase,
}

impl Bob {
    /// `classifications` must be in increasing pulse order.
    pub fn new(classifications: Vec<Classification>) -> Result<Self, ProtocolError> {
        check_increasing(
            "classifications",
            classifications.iter().map(|c| c.pulse_idx),
        )?;
        Ok(Bob {
            classifications,
            phase: Phase::Start,
        })
    }

    fn guard(&mut self, want: Phase, operation: &'static str) -> Result<(), ProtocolError> {
        if self.phase != want {
            return Err(ProtocolError::Phase {
                party: "Bob",
                operation,
            });
        }
        Ok(())
    }

    pub fn sift(&mut self, link: &mut dyn Transport) -> Result<SiftedKey, ProtocolError> {
        self.guard(Phase::Start, "sifting")?;
        let result = self.sift_inner(link);
        self.phase = if result.is_ok() {
            Phase::Sifted
        } else {
            Phase::Aborted
        };
        result
    }

    fn sift_inner(&self, link: &mut dyn Transport) -> Result<SiftedKey, ProtocolError> {
        let (first, count) = match link.recv()? {
            ClassicalMessage::BasisRequest { first, count } => (first, count),
            other => return Err(out_of_order("BasisRequest", &other)),
        };
        let end = first.saturating_add(count);
        if let Some(c) = self
            .classifications
            .iter()
            .find(|c| c.pulse_idx < first || c.pulse_idx >= end)
        {
            return Err(ProtocolError::IndexOutOfRange {
                index: c.pulse_idx,
                first,
                end,
            });
        }
        let entries = self
            .classifications
            .iter()
            .map(|c| (c.pulse_idx, c.measured_basis))
            .collect();
        link.send(ClassicalMessage::BobBasisAnnounce { entries })?;
        let kept = match link.recv()? {
            ClassicalMessage::AliceMatchReply { kept } => kept,
            other => return Err(out_of_order("AliceMatchReply", &other)),
        };
        check_increasing("AliceMatchReply", kept.iter().copied())?;
        let announced: Vec<u64> = self.classifications.iter().map(|c| c.pulse_idx).collect();
        let positions = positions_of("AliceMatchReply", &announced, &kept)?;
        let mut key = SiftedKey::default();
        for p in positions {
            let c = &self.classifications[p];
            key.bits.push(c.bit);
            key.bases.push(c.measured_basis);
            key.source_indices.push(c.pulse_idx);
        }
        Ok(key)
    }

    pub fn estimate_qber(
        &mut self,
        key: SiftedKey,
        link: &mut dyn Transport,
    ) -> Result<SiftedKey, ProtocolError> {
        self.guard(Phase::Sifted, "error estimation")?;
        let result = Self::estimate_inner(key, link);
        self.phase = if result.is_ok() {
            Phase::Done
        } else {
            Phase::Aborted
        };
        result
    }

    fn estimate_inner(
        mut key: SiftedKey,
        link: &mut dyn Transport,
    ) -> Result<SiftedKey, ProtocolError> {
        let indices = match link.recv()? {
            ClassicalMessage::SampleIndices { indices } => indices,
            other => return Err(out_of_order("SampleIndices", &other)),
        };
        check_increasing("SampleIndices", indices.iter().copied())?;
        let positions = positions_of("SampleIndices", &key.source_indices, &indices)?;
        let bits = positions.iter().map(|&p| key.bits[p].as_u8()).collect();
        link.send(ClassicalMessage::SampleBits { bits })?;
        let qber = match link.recv()? {
            ClassicalMessage::QberReport { qber } => qber,
            other => return Err(out_of_order("QberReport", &other)),
        };
        if !(0.0..=1.0).contains(&qber) {
            return Err(ProtocolError::BadQber(qber));
        }
        key.remove_positions(&positions);
        key.qber_estimate = Some(qber);
        Ok(key)
    }
}

/// Runs both parties on their own threads; Alice's error wins when both fail.
fn run_pair<RA, RB>(
    alice: impl FnOnce() -> Result<RA, ProtocolError> + Send,
    bob: impl FnOnce() -> Result<RB, ProtocolError> + Send,
) -> Result<(RA, RB), ProtocolError>
where
    RA: Send,
    RB: Send,
{
    thread::scope(|s| {
        let a = s.spawn(alice);
        let b = s.spawn(bob);
        let a = a.join().map_err(|_| ProtocolError::PeerPanicked)?;
        let b = b.join().map_err(|_| ProtocolError::PeerPanicked)?;
        join_results(a, b)
    })
}

/// Combines both parties' results. When one side aborts, the other usually
/// sees only a closed link, so a transport error yields to the peer's error.
pub(crate) fn join_results<RA, RB>(
    a: Result<RA, ProtocolError>,
    b: Result<RB, ProtocolError>,
) -> Result<(RA, RB), ProtocolError> {
    match (a, b) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        (Err(ProtocolError::Transport(_)), Err(e)) if !matches!(e, ProtocolError::Transport(_)) => {
            Err(e)
        }
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

/// Sifting over caller-supplied transports.
pub fn sift_with<TA, TB>(
    alice: &mut Alice,
    bob: &mut Bob,
    mut alice_link: TA,
    mut bob_link: TB,
) -> Result<(SiftedKey, SiftedKey), ProtocolError>
where
    TA: Transport + Send,
    TB: Transport + Send,
{
    run_pair(
        move || alice.sift(&mut alice_link),
        move || bob.sift(&mut bob_link),
    )
}

/// Sifting over the in-process queue.
pub fn sift(
    alice_records: &[PulseRecord],
    bob_classifications: &[Classification],
) -> Result<(SiftedKey, SiftedKey), ProtocolError> {
    let mut alice = Alice::new(alice_records.to_vec())?;
    let mut bob = Bob::new(bob_classifications.to_vec())?;
    let (a, b) = queue_pair();
    sift_with(&mut alice, &mut bob, a, b)
}

/// Error estimation over caller-supplied transports.
pub fn estimate_qber_with<R, TA, TB>(
    alice: &mut Alice,
    bob: &mut Bob,
    keys: (SiftedKey, SiftedKey),
    fraction: f64,
    rng: &mut R,
    mut alice_link: TA,
    mut bob_link: TB,
) -> Result<(SiftedKey, SiftedKey), ProtocolError>
where
    R: Rng + Send + ?Sized,
    TA: Transport + Send,
    TB: Transport + Send,
{
    let (ka, kb) = keys;
    run_pair(
        move || alice.estimate_qber(ka, fraction, rng, &mut alice_link),
        move || bob.estimate_qber(kb, &mut bob_link),
    )
}

/// Error estimation on already-sifted keys over the in-process queue.
pub fn estimate_qber<R: Rng + Send + ?Sized>(
    keys: (SiftedKey, SiftedKey),
    fraction: f64,
    rng: &mut R,
) -> Result<(SiftedKey, SiftedKey), ProtocolError> {
    // Skip straight to the estimation phase; sifting happened elsewhere.
    let mut alice = Alice {
        records: Vec::new(),
        phase: Phase::Sifted,
    };
    let mut bob = Bob {
        classifications: Vec::new(),
        phase: Phase::Sifted,
    };
    let (a, b) = queue_pair();
    estimate_qber_with(&mut alice, &mut bob, keys, fraction, rng, a, b)
}
