//! End-to-end session: source, Alice, fiber (and Eve), Bob, detectors,
//! then the public discussion.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::channel::{propagate_pulse, Interceptor, NoTap};
use crate::config::{ConfigError, SessionConfig};
use crate::detection::{detect, expected_event_rates, DetectionEvent};
use crate::eve::{Eavesdropper, EveError};
use crate::optics::{
    alice_prepare, bob_transform_unchecked, AmzSpec, Basis, CanonicalState, OpticsError,
    SlotPortDistribution, TimeBinState,
};
use crate::protocol::parties::join_results;
use crate::protocol::{
    alice_generate, classify, conventional_filter, queue_pair, summarize, Alice, Bob,
    Classification, ProtocolError, SessionSummary, SiftedKey,
};
use crate::rng::{Purpose, RngHandle};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Eve(#[from] EveError),
    #[error("protocol aborted: {0}")]
    Protocol(#[from] ProtocolError),
}

/// Ground-truth tallies that only a simulator can see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionStats {
    /// Registered events per (slot, port), before any conventional-mode filter.
    pub registered_by_cell: [[u64; 2]; 3],
    /// Announced events counted by `[alice basis][bob measured basis]`.
    pub basis_table: [[u64; 2]; 2],
    /// Sifted bits per basis before the error-estimation sample is removed.
    pub sifted_by_basis: [u64; 2],
    /// Alice/Bob disagreements among those bits.
    pub errors_by_basis: [u64; 2],
}

impl SessionStats {
    pub fn qber(&self, basis: Basis) -> f64 {
        let i = basis.index();
        self.errors_by_basis[i] as f64 / self.sifted_by_basis[i] as f64
    }

    pub fn true_qber(&self) -> f64 {
        let e: u64 = self.errors_by_basis.iter().sum();
        let s: u64 = self.sifted_by_basis.iter().sum();
        e as f64 / s as f64
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub summary: SessionSummary,
    pub alice_key: SiftedKey,
    pub bob_key: SiftedKey,
    pub stats: SessionStats,
}

/// Bob's effective interferometer: Alice's visibility loss compounds with his.
pub fn effective_bob_amz(cfg: &SessionConfig) -> AmzSpec {
    AmzSpec {
        visibility: cfg.alice.amz.visibility * cfg.bob.amz.visibility,
        ..cfg.bob.amz
    }
}

struct Jitter {
    alice: Option<Normal<f64>>,
    bob: Option<Normal<f64>>,
}

impl Jitter {
    fn new(cfg: &SessionConfig) -> Self {
        let normal = |s: f64| (s > 0.0).then(|| Normal::new(0.0, s).expect("validated sigma"));
        Jitter {
            alice: normal(cfg.alice.amz.phase_jitter_rad),
            bob: normal(cfg.bob.amz.phase_jitter_rad),
        }
    }

    fn active(&self) -> bool {
        self.alice.is_some() || self.bob.is_some()
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let a = self.alice.map_or(0.0, |n| n.sample(rng));
        let b = self.bob.map_or(0.0, |n| n.sample(rng));
        (a, b)
    }
}

/// Simulates the optical layer and returns every registered detection.
pub fn simulate_detections(
    cfg: &SessionConfig,
    records: &[crate::protocol::PulseRecord],
) -> Result<Vec<DetectionEvent>, SessionError> {
    let rng = RngHandle::new(cfg.seed);
    let channel = cfg.channel;
    let bob_amz = effective_bob_amz(cfg);
    let bob_streams = rng.streams(Purpose::BobDetection);
    let jitter_streams = rng.streams(Purpose::PhaseJitter);
    let jitter = Jitter::new(cfg);
    let link_states: Vec<TimeBinState> = CanonicalState::ALL
        .iter()
        .map(|&s| alice_prepare(s, &cfg.alice.amz).0)
        .collect();

    let mut eve;
    let mut no_tap = NoTap;
    let tap: &mut dyn Interceptor = if channel.eve_enabled {
        eve = Eavesdropper::new(
            cfg.eve,
            cfg.source,
            cfg.alice.amz.delay_bins,
            rng.streams(Purpose::Eavesdropper),
        )?;
        &mut eve
    } else {
        &mut no_tap
    };

    // Without Eve or jitter, the arrival distribution depends only on the state.
    let cached: Option<Vec<SlotPortDistribution>> = if channel.eve_enabled || jitter.active() {
        None
    } else {
        let mut v = Vec::with_capacity(4);
        for st in &link_states {
            let arrived = propagate_pulse(0, st.clone(), &channel, tap);
            v.push(bob_transform_unchecked(&arrived, &bob_amz)?);
        }
        Some(v)
    };

    let mut events = Vec::new();
    for rec in records {
        let i = rec.pulse_idx;
        let k = rec.state().index();
        let dist = match &cached {
            Some(table) => table[k],
            None => {
                let (da, db) = if jitter.active() {
                    jitter.sample(&mut jitter_streams.for_pulse(i))
                } else {
                    (0.0, 0.0)
                };
                let mut link = link_states[k].clone();
                if da != 0.0 {
                    link = link.with_late_phase(da);
                }
                let arrived = propagate_pulse(i, link, &channel, tap);
                let spec = AmzSpec {
                    phase_offset_rad: bob_amz.phase_offset_rad + db,
                    ..bob_amz
                };
                bob_transform_unchecked(&arrived, &spec)?
            }
        };
        let mut bob_rng = bob_streams.for_pulse(i);
        if let Some(ev) = detect(i, &dist, &cfg.source, &cfg.bob.detector, &mut bob_rng) {
            events.push(ev);
        }
    }
    Ok(events)
}

/// Per-pulse registration probability with the source blocked.
pub fn dark_event_probability(cfg: &SessionConfig) -> f64 {
    expected_event_rates(&SlotPortDistribution::empty(), 0.0, &cfg.bob.detector)
        .iter()
        .flatten()
        .sum()
}

pub fn run_session(cfg: &SessionConfig) -> Result<SessionOutcome, SessionError> {
    cfg.validate()?;
    let cfg = cfg.normalized();
    let rng = RngHandle::new(cfg.seed);
    let records = alice_generate(cfg.n_pulses, &rng)?;
    let events = simulate_detections(&cfg, &records)?;

    let mut stats = SessionStats::default();
    for e in &events {
        stats.registered_by_cell[e.slot.index()][e.port.index()] += 1;
    }
    let announced: Vec<Classification> = events
        .iter()
        .filter(|e| !cfg.conventional_mode || conventional_filter(e))
        .map(classify)
        .collect();
    for c in &announced {
        let alice_basis = records[c.pulse_idx as usize].basis;
        stats.basis_table[alice_basis.index()][c.measured_basis.index()] += 1;
    }

    let mut alice = Alice::new(records)?;
    let mut bob = Bob::new(announced)?;
    let (alice_link, bob_link) = queue_pair();
    let mut sample_rng = rng.session_stream(Purpose::QberSample);
    let fraction = cfg.sample_fraction;
    let (alice_side, bob_side) = std::thread::scope(|s| {
        let a = s.spawn(move || {
            let mut link = alice_link;
            let sifted = alice.sift(&mut link)?;
            let fin = alice.estimate_qber(sifted.clone(), fraction, &mut sample_rng, &mut link)?;
            Ok::<_, ProtocolError>((sifted, fin))
        });
        let b = s.spawn(move || {
            let mut link = bob_link;
            let sifted = bob.sift(&mut link)?;
            let fin = bob.estimate_qber(sifted.clone(), &mut link)?;
            Ok::<_, ProtocolError>((sifted, fin))
        });
        let a = a.join().map_err(|_| ProtocolError::PeerPanicked)?;
        let b = b.join().map_err(|_| ProtocolError::PeerPanicked)?;
        join_results(a, b)
    })?;
    let (alice_sifted, alice_key) = alice_side;
    let (bob_sifted, bob_key) = bob_side;

    for ((a, b), basis) in alice_sifted
        .bits
        .iter()
        .zip(&bob_sifted.bits)
        .zip(&alice_sifted.bases)
    {
        stats.sifted_by_basis[basis.index()] += 1;
        if a != b {
            stats.errors_by_basis[basis.index()] += 1;
        }
    }

    let summary = summarize(
        cfg.n_pulses,
        events.len() as u64,
        alice_sifted.len() as u64,
        &alice_key,
        dark_event_probability(&cfg),
    );
    Ok(SessionOutcome {
        summary,
        alice_key,
        bob_key,
        stats,
    })
}
