//! `profile`, `run` and `sweep`, independent of argument parsing.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::config::{ConfigError, SessionConfig};
use crate::optics::OpticsError;
use crate::report::{profile_table, write_csv, ProfileMode, ProfileRow, SweepRow};
use crate::rng::sub_seed;
use crate::session::{run_session, SessionError, SessionOutcome};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CommandError {
    /// 1 for usage or configuration problems, 2 for runtime aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Usage(_) => 1,
            CommandError::Session(SessionError::Config(_)) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CommandError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn cmd_profile(
    cfg: &SessionConfig,
    mode: ProfileMode,
    out_dir: Option<&Path>,
) -> Result<Vec<ProfileRow>, CommandError> {
    cfg.validate()?;
    let rows = profile_table(cfg, mode)?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        write_csv(&dir.join("profile.csv"), &rows)?;
    }
    Ok(rows)
}

/// Runs one session; with `out_dir`, writes `summary.csv`, `alice.key`,
/// `bob.key` (hex) and `key_indices.txt` (one pulse index per key bit).
pub fn cmd_run(
    cfg: &SessionConfig,
    out_dir: Option<&Path>,
) -> Result<SessionOutcome, CommandError> {
    let outcome = run_session(cfg)?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        write_csv(&dir.join("summary.csv"), &[outcome.summary])?;
        for (name, key) in [
            ("alice.key", &outcome.alice_key),
            ("bob.key", &outcome.bob_key),
        ] {
            let path = dir.join(name);
            fs::write(&path, format!("{}\n", key.to_hex())).map_err(io_err(&path))?;
        }
        let path = dir.join("key_indices.txt");
        let mut text = String::with_capacity(outcome.alice_key.len() * 8);
        for i in &outcome.alice_key.source_indices {
            text.push_str(&i.to_string());
            text.push('\n');
        }
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    LengthKm,
    Mu,
    Dark,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::LengthKm => "length_km",
            SweepAxis::Mu => "mu",
            SweepAxis::Dark => "dark",
        }
    }

    /// Sets the swept parameter (`dark` applies to Bob's detectors).
    pub fn apply(self, cfg: &mut SessionConfig, value: f64) {
        match self {
            SweepAxis::LengthKm => cfg.channel.length_km = value,
            SweepAxis::Mu => cfg.source.mu = value,
            SweepAxis::Dark => cfg.bob.detector.dark_per_gate = value,
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "length_km" | "length" => Ok(SweepAxis::LengthKm),
            "mu" => Ok(SweepAxis::Mu),
            "dark" => Ok(SweepAxis::Dark),
            other => Err(format!(
                "unknown sweep axis `{other}` (expected length_km, mu or dark)"
            )),
        }
    }
}

/// One session per value; run `i` uses seed `seed + i`, so a one-value sweep
/// reproduces `run` exactly.
pub fn cmd_sweep(
    cfg: &SessionConfig,
    axis: SweepAxis,
    values: &[f64],
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>, CommandError> {
    if values.is_empty() {
        return Err(CommandError::Usage("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let mut run_cfg = *cfg;
        axis.apply(&mut run_cfg, value);
        run_cfg.seed = sub_seed(cfg.seed, i as u64);
        let out = run_session(&run_cfg)?;
        let n = out.summary.pulses_sent as f64;
        rows.push(SweepRow {
            axis: axis.name().into(),
            value,
            registered_rate: out.summary.events_registered as f64 / n,
            sifted_rate: out.summary.sifted_rate_per_pulse,
            qber: out.summary.qber,
        });
    }
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        write_csv(&dir.join("sweep.csv"), &rows)?;
    }
    Ok(rows)
}
