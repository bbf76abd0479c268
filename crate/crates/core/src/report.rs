//! Tables written by the command-line tool and their readers.
//!
//! All CSV files have a header row and a fixed column order:
//!
//! * `profile.csv`: `state,slot,port,probability`
//! * `summary.csv`: `pulses_sent,events_registered,conclusive_count,sifted_length,qber,sifted_rate_per_pulse,dark_fraction_estimate`
//! * `sweep.csv`: `axis,value,registered_rate,sifted_rate,qber`

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Poisson};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::optics::{alice_prepare, bob_transform, CanonicalState, OpticsError};
use crate::rng::{Purpose, RngHandle};
use crate::session::effective_bob_amz;

/// One line of `profile.csv`.
///
/// Alice rows use `slot` = `early`/`late` and `port` = `link`; Bob rows use
/// `S1`..`S3` and `D0`/`D1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub state: String,
    pub slot: String,
    pub port: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub registered_rate: f64,
    pub sifted_rate: f64,
    pub qber: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileMode {
    /// Analytic distributions.
    Exact,
    /// Photon-counting histogram of bright pulses, normalized by the number
    /// of photons sent.
    Sampled { pulses: u64, mu: f64 },
}

/// Alice's two-bin output and Bob's slot/port distribution for each of the
/// four states: `4 × (2 + 6)` rows.
pub fn profile_table(
    cfg: &SessionConfig,
    mode: ProfileMode,
) -> Result<Vec<ProfileRow>, OpticsError> {
    let bob = effective_bob_amz(cfg);
    let streams = RngHandle::new(cfg.seed).streams(Purpose::Profile);
    let mut rows = Vec::with_capacity(32);
    for state in CanonicalState::ALL {
        let (link, _) = alice_prepare(state, &cfg.alice.amz);
        let mut rng = streams.for_pulse(state.index() as u64);
        let mut value = |p: f64| match mode {
            ProfileMode::Exact => p,
            ProfileMode::Sampled { pulses, mu } => {
                let sent = pulses as f64 * mu;
                let mean = sent * p;
                if mean <= 0.0 || sent <= 0.0 {
                    0.0
                } else {
                    Poisson::new(mean).expect("positive mean").sample(&mut rng) / sent
                }
            }
        };
        let bins = link.bin_intensities();
        for (label, p) in [("early", bins[0]), ("late", bins[bins.len() - 1])] {
            rows.push(ProfileRow {
                state: state.label().into(),
                slot: label.into(),
                port: "link".into(),
                probability: value(p),
            });
        }
        let dist = bob_transform(&link, &bob)?;
        for (slot, port, p) in dist.cells() {
            rows.push(ProfileRow {
                state: state.label().into(),
                slot: slot.to_string(),
                port: port.to_string(),
                probability: value(p),
            });
        }
    }
    Ok(rows)
}

/// Text rendering with bars proportional to probability.
pub fn render_bars(rows: &[ProfileRow]) -> String {
    const WIDTH: f64 = 40.0;
    let mut out = String::new();
    let mut current = "";
    for r in rows {
        if r.state != current {
            current = &r.state;
            let _ = writeln!(out, "state |{}>", r.state);
        }
        let n = (r.probability.clamp(0.0, 1.0) * WIDTH).round() as usize;
        let _ = writeln!(
            out,
            "  {:>5} {:>4}  {:.6}  {}",
            r.slot,
            r.port,
            r.probability,
            "#".repeat(n)
        );
    }
    out
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

/// In-memory variant of [`write_csv`].
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect()
}
