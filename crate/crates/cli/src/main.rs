//! Command-line surface of the spin amplification toolkit.
//!
//! Every subcommand is deterministic: identical inputs produce byte-identical
//! output files, whatever the `--jobs` setting. Exit codes: 0 success,
//! 2 configuration error, 3 numerical or i/o failure.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::{CliError, Ctx, ProtocolOverrides, PulseArgs};
use spinamp_core::constants::{DEFAULT_HERMITE_BETA, DEFAULT_HERMITE_TAU_WINDOW};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "spinamp",
    about = "Spin amplification toolkit: exact cluster dynamics, pool-mixing gain model, shaped pulses, field cycling",
    version
)]
struct Cli {
    /// Directory generated files are written to
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Concurrent sweep jobs (default: all cores)
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Significant digits for floats in CSV and summary output
    #[arg(long, global = true, default_value_t = 9)]
    precision: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct PulseShapeArgs {
    /// Pulse family: hermite or constant
    #[arg(long, default_value = "hermite")]
    family: String,

    /// Peak rf amplitude in kHz
    #[arg(long)]
    peak_khz: f64,

    /// Envelope samples
    #[arg(long, default_value_t = 128)]
    n_samples: usize,

    /// Hermite shape parameter
    #[arg(long, default_value_t = DEFAULT_HERMITE_BETA)]
    beta: f64,

    /// Hermite tau window half-width
    #[arg(long, default_value_t = DEFAULT_HERMITE_TAU_WINDOW)]
    tau_window: f64,

    /// Pulse duration in seconds; calibrated to invert on resonance if absent
    #[arg(long)]
    duration_s: Option<f64>,
}

impl PulseShapeArgs {
    fn to_args(&self) -> PulseArgs {
        PulseArgs {
            family: self.family.clone(),
            peak_khz: self.peak_khz,
            n_samples: self.n_samples,
            beta: self.beta,
            tau_window: self.tau_window,
            duration_s: self.duration_s,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Amplification gain curve: closed form or iterated pool model
    Gain {
        /// Abundant pool size
        #[arg(long)]
        m: u32,
        /// Largest step count emitted
        #[arg(long)]
        n_max: u32,
        /// closed (N,G) or iterate (N,delta_P,relative_gain)
        #[arg(long, default_value = "closed")]
        mode: String,
        /// Per-cycle survival factor (iterate mode)
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Initial polarization (iterate mode)
        #[arg(long, default_value_t = 1.0)]
        eps0: f64,
    },

    /// Amplified frequency-response spectrum of a pulse
    Spectrum {
        #[command(flatten)]
        pulse: PulseShapeArgs,
        /// Offset grid in kHz: list (a,b,c) or range (start:stop:step)
        #[arg(long, allow_hyphen_values = true)]
        offsets: String,
        /// Abundant pool size
        #[arg(long)]
        m: u32,
        /// Amplification steps
        #[arg(long)]
        steps: u32,
        /// Initial polarization
        #[arg(long)]
        eps0: f64,
        /// Per-cycle survival factor
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
    },

    /// Pulse envelope and excitation-profile CSVs
    PulseProfile {
        #[command(flatten)]
        pulse: PulseShapeArgs,
        /// Offset grid in kHz: list (a,b,c) or range (start:stop:step)
        #[arg(long, allow_hyphen_values = true)]
        offsets: String,
    },

    /// Exact trajectory of a configured cluster
    Exact {
        /// Sectioned key-value config file
        config: PathBuf,
    },

    /// Amplification protocol on the mixing or exact backend
    Protocol {
        /// Sectioned key-value config file
        config: PathBuf,
        #[arg(long)]
        steps: Option<u32>,
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        eps0: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        /// Explicit response factor, overriding any pulse
        #[arg(long, allow_hyphen_values = true)]
        f: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        offset_khz: Option<f64>,
    },

    /// Run a protocol config over one or two parameter grids
    Sweep {
        /// Sectioned key-value config file
        config: PathBuf,
        /// Sweep axis like protocol.steps=40,200 or system.m=99:799:100
        #[arg(long = "param", required = true)]
        params: Vec<String>,
    },

    /// Per-cycle survival factor of a shuttle timeline
    Eta {
        #[arg(long, default_value_t = 0.67)]
        shuttle_up_s: f64,
        #[arg(long, default_value_t = 0.01)]
        low_dwell_s: f64,
        #[arg(long, default_value_t = 0.67)]
        shuttle_down_s: f64,
        #[arg(long, default_value_t = 3.0)]
        high_dwell_s: f64,
        #[arg(long, default_value_t = 100.0)]
        low_field_g: f64,
        #[arg(long, default_value_t = 4000.0)]
        high_field_g: f64,
        #[arg(long, default_value_t = 2040.0)]
        t1_low_s: f64,
        #[arg(long, default_value_t = 12720.0)]
        t1_high_s: f64,
        /// Interpolate T1 linearly in log T1 instead of nearest-field lookup
        #[arg(long, default_value_t = false)]
        t1_log_interp: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx { out_dir: cli.out, digits: cli.precision.clamp(1, 17), jobs: cli.jobs };
    match cli.command {
        Command::Gain { m, n_max, mode, eta, eps0 } => {
            commands::cmd_gain(&ctx, m, n_max, &mode, eta, eps0)
        }
        Command::Spectrum { pulse, offsets, m, steps, eps0, eta } => {
            commands::cmd_spectrum(&ctx, &pulse.to_args(), &offsets, m, steps, eps0, eta)
        }
        Command::PulseProfile { pulse, offsets } => {
            commands::cmd_pulse_profile(&ctx, &pulse.to_args(), &offsets)
        }
        Command::Exact { config } => commands::cmd_exact(&ctx, &config),
        Command::Protocol { config, steps, m, eps0, eta, q, f, offset_khz } => {
            let overrides = ProtocolOverrides { steps, m, eps0, eta, q, f, offset_khz };
            commands::cmd_protocol(&ctx, &config, &overrides)
        }
        Command::Sweep { config, params } => commands::cmd_sweep(&ctx, &config, &params),
        Command::Eta {
            shuttle_up_s,
            low_dwell_s,
            shuttle_down_s,
            high_dwell_s,
            low_field_g,
            high_field_g,
            t1_low_s,
            t1_high_s,
            t1_log_interp,
        } => commands::cmd_eta(
            &ctx,
            shuttle_up_s,
            low_dwell_s,
            shuttle_down_s,
            high_dwell_s,
            low_field_g,
            high_field_g,
            t1_low_s,
            t1_high_s,
            t1_log_interp,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e @ CliError::Failure(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
