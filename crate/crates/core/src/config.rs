//! Session configuration file (TOML).
//!
//! Every key is optional; an empty file yields the defaults below. Unknown
//! keys are rejected. Validation errors name the offending field by its
//! dotted path, e.g. `bob.amz.delay_bins`.
//!
//! | key | default | origin |
//! |-----|---------|--------|
//! | `alice.amz.delay_bins`, `bob.amz.delay_bins` | 1 (one 5 ns slot) | device |
//! | `*.amz.excess_loss_db` | 2.0 | device |
//! | `source.rep_rate_hz` | 1e6 | device |
//! | `source.pulse_width_ns` | 1.0 | device |
//! | `source.wavelength_nm` | 1550 | device |
//! | `source.mu` | 0.1 | assumption |
//! | `bob.detector.efficiency` | 0.1 | assumption |
//! | `bob.detector.dark_per_gate` | 1e-5 | assumption |
//! | `channel.atten_db_per_km` | 0.2 | assumption |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelSpec};
use crate::detection::{ApdSpec, DetectionError, PhotonStatistics, SourceSpec};
use crate::eve::EveSpec;
use crate::optics::{AmzSpec, OpticsError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{path}`: {reason}")]
    Invalid { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AliceSpec {
    pub amz: AmzSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BobSpec {
    pub amz: AmzSpec,
    pub detector: ApdSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub n_pulses: u64,
    pub seed: u64,
    /// Share of the sifted key disclosed for error estimation.
    pub sample_fraction: f64,
    /// Discard late-slot detections, as a single-edge-slot receiver would.
    pub conventional_mode: bool,
    pub source: SourceSpec,
    pub alice: AliceSpec,
    pub bob: BobSpec,
    pub channel: ChannelSpec,
    pub eve: EveSpec,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            n_pulses: 1_000_000,
            seed: 1,
            sample_fraction: 0.1,
            conventional_mode: false,
            source: SourceSpec::default(),
            alice: AliceSpec::default(),
            bob: BobSpec::default(),
            channel: ChannelSpec::default(),
            eve: EveSpec::default(),
        }
    }
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

fn amz_error(section: &str, e: OpticsError) -> ConfigError {
    match e {
        OpticsError::InvalidSpec { field, reason } => invalid(format!("{section}.{field}"), reason),
        other => invalid(section, other.to_string()),
    }
}

fn detection_error(section: &str, e: DetectionError) -> ConfigError {
    match e {
        DetectionError::Detector { field, reason } | DetectionError::Source { field, reason } => {
            invalid(format!("{section}.{field}"), reason)
        }
    }
}

fn channel_error(e: ChannelError) -> ConfigError {
    match e {
        ChannelError::Invalid { field, reason } => invalid(format!("channel.{field}"), reason),
    }
}

impl SessionConfig {
    /// Lossless optics, single-photon source, perfect detectors.
    pub fn ideal() -> Self {
        SessionConfig {
            source: SourceSpec {
                statistics: PhotonStatistics::SinglePhoton,
                ..SourceSpec::default()
            },
            alice: AliceSpec {
                amz: AmzSpec::ideal(),
            },
            bob: BobSpec {
                amz: AmzSpec::ideal(),
                detector: ApdSpec::ideal(),
            },
            ..SessionConfig::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SessionConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|span| line_col(text, span.start))
                .unwrap_or((0, 0));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg.normalized())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copies derived flags into place (the channel learns whether Eve is on).
    pub fn normalized(mut self) -> Self {
        self.channel.eve_enabled = self.eve.enabled;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_pulses == 0 {
            return Err(invalid("n_pulses", "must be at least 1"));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(invalid("sample_fraction", "must lie in (0, 1]"));
        }
        self.source
            .validate()
            .map_err(|e| detection_error("source", e))?;
        self.alice
            .amz
            .validate()
            .map_err(|e| amz_error("alice.amz", e))?;
        self.bob
            .amz
            .validate()
            .map_err(|e| amz_error("bob.amz", e))?;
        self.bob
            .detector
            .validate()
            .map_err(|e| detection_error("bob.detector", e))?;
        self.channel.validate().map_err(channel_error)?;
        self.eve
            .apparatus
            .validate()
            .map_err(|e| amz_error("eve.apparatus", e))?;
        self.eve
            .detector
            .validate()
            .map_err(|e| detection_error("eve.detector", e))?;

        let link = self.alice.amz.delay_bins;
        if self.bob.amz.delay_bins != link {
            return Err(invalid(
                "bob.amz.delay_bins",
                format!(
                    "{} differs from alice.amz.delay_bins = {link}; both interferometers need the same delay",
                    self.bob.amz.delay_bins
                ),
            ));
        }
        if self.eve.enabled && self.eve.apparatus.delay_bins != link {
            return Err(invalid(
                "eve.apparatus.delay_bins",
                format!("must equal the link delay of {link}"),
            ));
        }
        Ok(())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

pub fn parse_config(path: &Path) -> Result<SessionConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SessionConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invalid_path(text: &str) -> String {
        match SessionConfig::from_toml_str(text) {
            Err(ConfigError::Invalid { path, .. }) => path,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = SessionConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, SessionConfig::default());
        assert_eq!(cfg.alice.amz.delay_bins, 1);
        assert_eq!(cfg.bob.amz.excess_loss_db, 2.0);
        assert_eq!(cfg.source.rep_rate_hz, 1e6);
    }

    #[test]
    fn delay_mismatch_is_rejected() {
        assert_eq!(
            invalid_path("[bob.amz]\ndelay_bins = 2\n"),
            "bob.amz.delay_bins"
        );
    }

    #[test]
    fn negative_mu_is_rejected() {
        assert_eq!(invalid_path("[source]\nmu = -0.5\n"), "source.mu");
    }

    #[test]
    fn nested_field_paths() {
        assert_eq!(
            invalid_path("[bob.detector]\nefficiency = 2.0\n"),
            "bob.detector.efficiency"
        );
        assert_eq!(
            invalid_path("[eve.apparatus]\nvisibility = -1.0\n"),
            "eve.apparatus.visibility"
        );
        assert_eq!(
            invalid_path("[channel]\nlength_km = -3.0\n"),
            "channel.length_km"
        );
        assert_eq!(invalid_path("sample_fraction = 0.0\n"), "sample_fraction");
    }

    #[test]
    fn unknown_keys_fail_with_line_number() {
        let text = "seed = 3\n\n[source]\nmu = 0.2\ncolour = \"red\"\n";
        match SessionConfig::from_toml_str(text) {
            Err(ConfigError::Parse { line, message, .. }) => {
                assert_eq!(line, 5, "{message}");
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_report_their_line() {
        match SessionConfig::from_toml_str("seed = 3\nn_pulses = = 4\n") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn eve_flag_reaches_the_channel() {
        let cfg = SessionConfig::from_toml_str("[eve]\nenabled = true\n").unwrap();
        assert!(cfg.channel.eve_enabled);
    }

    #[test]
    fn serialized_config_parses_back() {
        let mut cfg = SessionConfig::ideal();
        cfg.channel.length_km = 12.5;
        cfg.eve.enabled = true;
        let back = SessionConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg.normalized());
    }
}
