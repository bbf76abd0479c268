//! Intercept-resend adversary.
//!
//! Eve owns a copy of Bob's passive receiver. She measures every pulse at
//! Alice's output, reads a (basis, bit) from the slot and port of her first
//! registered click exactly as Bob would, and forwards a fresh canonical
//! state for that reading at full amplitude. Pulses she fails to register
//! are suppressed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Interceptor;
use crate::detection::{detect, expected_event_rates_single_photon, ApdSpec, SourceSpec};
use crate::optics::{
    bob_transform, AmzSpec, Basis, CanonicalState, OpticsError, Port, Slot, TimeBinState,
};
use crate::protocol::classify;
use crate::rng::StreamFamily;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EveError {
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("eavesdropper delay of {eve} bin(s) does not match the link delay of {link}")]
    DelayMismatch { eve: usize, link: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoClickPolicy {
    /// Forward nothing.
    Vacuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EveSpec {
    pub enabled: bool,
    pub apparatus: AmzSpec,
    pub detector: ApdSpec,
    pub resend_on_no_click: NoClickPolicy,
}

impl Default for EveSpec {
    fn default() -> Self {
        EveSpec {
            enabled: false,
            apparatus: AmzSpec::ideal(),
            detector: ApdSpec::ideal(),
            resend_on_no_click: NoClickPolicy::Vacuum,
        }
    }
}

impl EveSpec {
    pub fn enabled() -> Self {
        EveSpec {
            enabled: true,
            ..EveSpec::default()
        }
    }
}

/// Measure `state` with Eve's receiver and return what she forwards.
pub fn attack<R: rand::Rng + ?Sized>(
    state: &TimeBinState,
    spec: &EveSpec,
    source: &SourceSpec,
    rng: &mut R,
) -> Result<TimeBinState, OpticsError> {
    let delay = spec.apparatus.delay_bins;
    let dist = bob_transform(state, &spec.apparatus)?;
    Ok(match detect(0, &dist, source, &spec.detector, rng) {
        Some(event) => {
            let c = classify(&event);
            TimeBinState::canonical(CanonicalState::new(c.measured_basis, c.bit), delay)
        }
        None => match spec.resend_on_no_click {
            NoClickPolicy::Vacuum => TimeBinState::vacuum(delay),
        },
    })
}

/// Per-pulse attacker plugged into the channel.
#[derive(Debug, Clone)]
pub struct Eavesdropper {
    spec: EveSpec,
    source: SourceSpec,
    streams: StreamFamily,
}

impl Eavesdropper {
    pub fn new(
        spec: EveSpec,
        source: SourceSpec,
        link_delay_bins: usize,
        streams: StreamFamily,
    ) -> Result<Self, EveError> {
        spec.apparatus.validate()?;
        if spec.apparatus.delay_bins != link_delay_bins {
            return Err(EveError::DelayMismatch {
                eve: spec.apparatus.delay_bins,
                link: link_delay_bins,
            });
        }
        Ok(Eavesdropper {
            spec,
            source,
            streams,
        })
    }
}

impl Interceptor for Eavesdropper {
    fn intercept(&mut self, pulse_idx: u64, state: TimeBinState) -> TimeBinState {
        let mut rng = self.streams.for_pulse(pulse_idx);
        attack(&state, &self.spec, &self.source, &mut rng)
            .expect("apparatus delay checked against the link at construction")
    }
}

/// Sifted error rate split by basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisQber {
    pub z: f64,
    pub x: f64,
    pub overall: f64,
}

/// Exact QBER per basis by walking the probability tree
/// (Alice state → Eve registration → resent state → Bob registration) for a
/// single-photon source.
///
/// Registration probabilities include each side's efficiency, dark counts,
/// gating and the first-fire rule. With Eve disabled Bob measures Alice's
/// state directly.
pub fn enumerate_attack_qber(
    eve: &EveSpec,
    bob_amz: &AmzSpec,
    bob_apd: &ApdSpec,
) -> Result<BasisQber, OpticsError> {
    let delay = bob_amz.delay_bins;
    // [basis] -> (sifted mass, error mass)
    let mut acc = [[0.0f64; 2]; 2];
    let mut bob_branch = |sent: &TimeBinState, alice: CanonicalState, weight: f64| {
        let rates = expected_event_rates_single_photon(&bob_transform(sent, bob_amz)?, bob_apd);
        for slot in Slot::ALL {
            for port in Port::ALL {
                let p = weight * rates[slot.index()][port.index()];
                let c = classify(&crate::detection::DetectionEvent {
                    pulse_idx: 0,
                    slot,
                    port,
                });
                if c.measured_basis == alice.basis {
                    acc[alice.basis.index()][0] += p;
                    if c.bit != alice.bit {
                        acc[alice.basis.index()][1] += p;
                    }
                }
            }
        }
        Ok::<_, OpticsError>(())
    };
    for alice in CanonicalState::ALL {
        let sent = TimeBinState::canonical(alice, delay);
        if !eve.enabled {
            bob_branch(&sent, alice, 0.25)?;
            continue;
        }
        let eve_rates = expected_event_rates_single_photon(
            &bob_transform(&sent, &eve.apparatus)?,
            &eve.detector,
        );
        for slot in Slot::ALL {
            for port in Port::ALL {
                let w = 0.25 * eve_rates[slot.index()][port.index()];
                if w == 0.0 {
                    continue;
                }
                let c = classify(&crate::detection::DetectionEvent {
                    pulse_idx: 0,
                    slot,
                    port,
                });
                let resent =
                    TimeBinState::canonical(CanonicalState::new(c.measured_basis, c.bit), delay);
                bob_branch(&resent, alice, w)?;
            }
        }
        // Pulses Eve misses are suppressed; dark counts at Bob still register.
        let missed = 0.25 * (1.0 - eve_rates.iter().flatten().sum::<f64>());
        if missed > 0.0 {
            bob_branch(&TimeBinState::vacuum(delay), alice, missed)?;
        }
    }
    let ratio = |a: [f64; 2]| a[1] / a[0];
    Ok(BasisQber {
        z: ratio(acc[Basis::Z.index()]),
        x: ratio(acc[Basis::X.index()]),
        overall: ratio([acc[0][0] + acc[1][0], acc[0][1] + acc[1][1]]),
    })
}
