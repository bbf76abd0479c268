use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use timebin_qkd::commands::{cmd_profile, cmd_run, cmd_sweep, CommandError, SweepAxis};
use timebin_qkd::config::{parse_config, SessionConfig};
use timebin_qkd::optics::Basis;
use timebin_qkd::report::{render_bars, ProfileMode};

#[derive(Parser)]
#[command(name = "timebin-qkd", version, about = "Time-bin BB84 simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pulses: Option<u64>,
    /// Enable the intercept-resend attacker.
    #[arg(long)]
    eve: bool,
    /// Keep only first-slot and central-slot detections.
    #[arg(long)]
    conventional_mode: bool,
    /// Directory for CSV and key files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the per-state output distribution.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Histogram simulated photon counts with this mean photon number.
        #[arg(long, value_name = "MU")]
        sampled: Option<f64>,
    },
    /// Run one key-distribution session.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat the session over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// length_km, mu or dark
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn load(common: &Common) -> Result<SessionConfig, CommandError> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(path)?,
        None => SessionConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.pulses {
        cfg.n_pulses = n;
    }
    if common.eve {
        cfg.eve.enabled = true;
    }
    if common.conventional_mode {
        cfg.conventional_mode = true;
    }
    cfg.validate()?;
    Ok(cfg.normalized())
}

fn execute(command: Command) -> Result<(), CommandError> {
    match command {
        Command::Profile { common, sampled } => {
            let cfg = load(&common)?;
            let mode = match sampled {
                Some(mu) => ProfileMode::Sampled {
                    pulses: cfg.n_pulses,
                    mu,
                },
                None => ProfileMode::Exact,
            };
            let rows = cmd_profile(&cfg, mode, common.out.as_deref())?;
            print!("{}", render_bars(&rows));
        }
        Command::Run { common } => {
            let cfg = load(&common)?;
            let out = cmd_run(&cfg, common.out.as_deref())?;
            let s = out.summary;
            println!("pulses sent          {}", s.pulses_sent);
            println!("events registered    {}", s.events_registered);
            println!("conclusive events    {}", s.conclusive_count);
            println!("final key bits       {}", s.sifted_length);
            println!("estimated QBER       {:.6}", s.qber);
            println!("sifted rate / pulse  {:.6e}", s.sifted_rate_per_pulse);
            println!("dark fraction        {:.6e}", s.dark_fraction_estimate);
            println!(
                "true QBER (Z, X)     {:.6}, {:.6}",
                out.stats.qber(Basis::Z),
                out.stats.qber(Basis::X)
            );
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let cfg = load(&common)?;
            let rows = cmd_sweep(&cfg, axis, &values, common.out.as_deref())?;
            println!(
                "{:>12} {:>14} {:>14} {:>10}",
                axis.name(),
                "registered",
                "sifted",
                "qber"
            );
            for r in rows {
                println!(
                    "{:>12} {:>14.6e} {:>14.6e} {:>10.6}",
                    r.value, r.registered_rate, r.sifted_rate, r.qber
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
