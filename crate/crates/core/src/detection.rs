//! Photon statistics, gated avalanche photodiodes and the first-fire rule.
//!
//! Each gated (slot, port) cell is an independent Bernoulli trial for a
//! coherent pulse: the photon numbers reaching different cells are
//! independent Poisson variables, and dark counts are independent per gate.
//! Only the earliest slot with a click is registered; a click on both ports
//! of that slot is discarded.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{Port, Slot, SlotPortDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("invalid detector parameter `{field}`: {reason}")]
    Detector { field: &'static str, reason: String },
    #[error("invalid source parameter `{field}`: {reason}")]
    Source { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhotonStatistics {
    /// Attenuated laser pulse.
    Poisson,
    /// Exactly one photon per pulse.
    SinglePhoton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSpec {
    /// Mean photon number per pulse at Alice's output. Ignored for a
    /// single-photon source.
    pub mu: f64,
    pub rep_rate_hz: f64,
    /// Informational.
    pub wavelength_nm: f64,
    /// Informational.
    pub pulse_width_ns: f64,
    pub statistics: PhotonStatistics,
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec {
            mu: 0.1,
            rep_rate_hz: 1e6,
            wavelength_nm: 1550.0,
            pulse_width_ns: 1.0,
            statistics: PhotonStatistics::Poisson,
        }
    }
}

impl SourceSpec {
    pub fn validate(&self) -> Result<(), DetectionError> {
        let bad = |field, reason: &str| {
            Err(DetectionError::Source {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad("mu", "must be a finite value >= 0");
        }
        if !(self.rep_rate_hz > 0.0 && self.rep_rate_hz.is_finite()) {
            return bad("rep_rate_hz", "must be positive");
        }
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            return bad("wavelength_nm", "must be positive");
        }
        if !(self.pulse_width_ns > 0.0 && self.pulse_width_ns.is_finite()) {
            return bad("pulse_width_ns", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoubleClickPolicy {
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApdSpec {
    pub efficiency: f64,
    pub dark_per_gate: f64,
    /// 3 gates every slot; 1 gates only the central slot.
    pub gates_per_pulse: u8,
    pub double_click_policy: DoubleClickPolicy,
}

impl Default for ApdSpec {
    /// Typical InGaAs APD figures at 1550 nm (assumed values).
    fn default() -> Self {
        ApdSpec {
            efficiency: 0.1,
            dark_per_gate: 1e-5,
            gates_per_pulse: 3,
            double_click_policy: DoubleClickPolicy::Discard,
        }
    }
}

impl ApdSpec {
    /// Unit efficiency, no dark counts, all three slots gated.
    pub fn ideal() -> Self {
        ApdSpec {
            efficiency: 1.0,
            dark_per_gate: 0.0,
            ..ApdSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        let bad = |field, reason: &str| {
            Err(DetectionError::Detector {
                field,
                reason: reason.to_string(),
            })
        };
        if !(0.0..=1.0).contains(&self.efficiency) {
            return bad("efficiency", "must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.dark_per_gate) {
            return bad("dark_per_gate", "must lie in [0, 1)");
        }
        if !matches!(self.gates_per_pulse, 1 | 3) {
            return bad("gates_per_pulse", "must be 1 or 3");
        }
        Ok(())
    }

    /// Slots that are gated, earliest first.
    pub fn gated_slots(&self) -> &'static [Slot] {
        if self.gates_per_pulse == 1 {
            &[Slot::S2]
        } else {
            &Slot::ALL
        }
    }

    pub fn is_gated(&self, slot: Slot) -> bool {
        self.gates_per_pulse != 1 || slot == Slot::S2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub pulse_idx: u64,
    pub slot: Slot,
    pub port: Port,
}

/// Probability that one gated cell clicks: `1 − (1 − d)·exp(−η·μ·p)`.
pub fn click_probability(p_slot_port: f64, mu: f64, apd: &ApdSpec) -> f64 {
    let d = apd.dark_per_gate;
    // Rearranged so small d and small flux keep full relative precision.
    d - (1.0 - d) * (-apd.efficiency * mu * p_slot_port).exp_m1()
}

/// Probability that at least one gate of either port fires on a pulse.
pub fn any_click_probability(dist: &SlotPortDistribution, mu: f64, apd: &ApdSpec) -> f64 {
    let log_silent: f64 = apd
        .gated_slots()
        .iter()
        .flat_map(|&s| Port::ALL.map(|p| (-click_probability(dist.get(s, p), mu, apd)).ln_1p()))
        .sum();
    -log_silent.exp_m1()
}

/// The registration rule applied to a click pattern.
pub fn first_fire(clicks: &[[bool; 2]; 3]) -> Option<(Slot, Port)> {
    Slot::ALL
        .into_iter()
        .find(|s| clicks[s.index()].iter().any(|&c| c))
        .and_then(|s| match clicks[s.index()] {
            [true, false] => Some((s, Port::D0)),
            [false, true] => Some((s, Port::D1)),
            _ => None,
        })
}

/// First-fire registration probabilities for independent cells that click
/// with probability `q`; ungated slots never click.
fn first_fire_rates(q: &[[f64; 2]; 3], apd: &ApdSpec) -> [[f64; 2]; 3] {
    let mut rates = [[0.0; 2]; 3];
    let mut silent_before = 1.0;
    for &slot in apd.gated_slots() {
        let [q0, q1] = q[slot.index()];
        rates[slot.index()] = [
            silent_before * q0 * (1.0 - q1),
            silent_before * q1 * (1.0 - q0),
        ];
        silent_before *= (1.0 - q0) * (1.0 - q1);
    }
    rates
}

/// Exact per-cell registration probabilities for a coherent pulse.
pub fn expected_event_rates(dist: &SlotPortDistribution, mu: f64, apd: &ApdSpec) -> [[f64; 2]; 3] {
    let mut q = [[0.0; 2]; 3];
    for (s, p, prob) in dist.cells() {
        q[s.index()][p.index()] = click_probability(prob, mu, apd);
    }
    first_fire_rates(&q, apd)
}

/// Exact per-cell registration probabilities for a single-photon pulse.
pub fn expected_event_rates_single_photon(
    dist: &SlotPortDistribution,
    apd: &ApdSpec,
) -> [[f64; 2]; 3] {
    let dark = [[apd.dark_per_gate; 2]; 3];
    let mut rates = [[0.0; 2]; 3];
    let mut photon_detected = 0.0;
    for &slot in apd.gated_slots() {
        for port in Port::ALL {
            let w = apd.efficiency * dist.get(slot, port);
            if w == 0.0 {
                continue;
            }
            photon_detected += w;
            let mut q = dark;
            q[slot.index()][port.index()] = 1.0;
            accumulate(&mut rates, &first_fire_rates(&q, apd), w);
        }
    }
    accumulate(
        &mut rates,
        &first_fire_rates(&dark, apd),
        1.0 - photon_detected,
    );
    rates
}

fn accumulate(into: &mut [[f64; 2]; 3], from: &[[f64; 2]; 3], w: f64) {
    for (a, b) in into.iter_mut().flatten().zip(from.iter().flatten()) {
        *a += w * b;
    }
}

fn event(pulse_idx: u64, hit: Option<(Slot, Port)>) -> Option<DetectionEvent> {
    hit.map(|(slot, port)| DetectionEvent {
        pulse_idx,
        slot,
        port,
    })
}

/// Samples a coherent pulse through the gated detectors.
///
/// `mu` multiplies `dist`, so the distribution may already carry the fiber
/// and interferometer losses.
pub fn detect_pulse<R: Rng + ?Sized>(
    pulse_idx: u64,
    dist: &SlotPortDistribution,
    mu: f64,
    apd: &ApdSpec,
    rng: &mut R,
) -> Option<DetectionEvent> {
    let mut clicks = [[false; 2]; 3];
    for &slot in apd.gated_slots() {
        for port in Port::ALL {
            let q = click_probability(dist.get(slot, port), mu, apd);
            clicks[slot.index()][port.index()] = q > 0.0 && rng.random::<f64>() < q;
        }
        if clicks[slot.index()].iter().any(|&c| c) {
            break;
        }
    }
    event(pulse_idx, first_fire(&clicks))
}

/// Samples a single-photon pulse: at most one photon click plus dark counts.
pub fn detect_single_photon<R: Rng + ?Sized>(
    pulse_idx: u64,
    dist: &SlotPortDistribution,
    apd: &ApdSpec,
    rng: &mut R,
) -> Option<DetectionEvent> {
    let mut clicks = [[false; 2]; 3];
    let u: f64 = rng.random();
    let mut acc = 0.0;
    'cells: for &slot in apd.gated_slots() {
        for port in Port::ALL {
            acc += apd.efficiency * dist.get(slot, port);
            if u < acc {
                clicks[slot.index()][port.index()] = true;
                break 'cells;
            }
        }
    }
    if apd.dark_per_gate > 0.0 {
        for &slot in apd.gated_slots() {
            for port in Port::ALL {
                if rng.random::<f64>() < apd.dark_per_gate {
                    clicks[slot.index()][port.index()] = true;
                }
            }
        }
    }
    event(pulse_idx, first_fire(&clicks))
}

/// Dispatches on the source's photon statistics.
pub fn detect<R: Rng + ?Sized>(
    pulse_idx: u64,
    dist: &SlotPortDistribution,
    source: &SourceSpec,
    apd: &ApdSpec,
    rng: &mut R,
) -> Option<DetectionEvent> {
    match source.statistics {
        PhotonStatistics::Poisson => detect_pulse(pulse_idx, dist, source.mu, apd, rng),
        PhotonStatistics::SinglePhoton => detect_single_photon(pulse_idx, dist, apd, rng),
    }
}

/// Exact registration matrix for whichever statistics `source` uses.
pub fn expected_rates_for(
    dist: &SlotPortDistribution,
    source: &SourceSpec,
    apd: &ApdSpec,
) -> [[f64; 2]; 3] {
    match source.statistics {
        PhotonStatistics::Poisson => expected_event_rates(dist, source.mu, apd),
        PhotonStatistics::SinglePhoton => expected_event_rates_single_photon(dist, apd),
    }
}
