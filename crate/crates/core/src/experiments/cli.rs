//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 when a
//! run fails at runtime.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use super::config::{linear_to_db, ExperimentConfig, SweepParam};
use super::output::{emit_results, render, OutputFormat};
use super::run::{run_sweep, ResultRow};
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "otfs-isac", version, about = "Target detection and power allocation for OTFS cell-free ISAC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured experiment (and its sweep, if the config has one).
    Run(RunArgs),
    /// Sweep one parameter over a list of values.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        /// Parameter to sweep: rcs_variance, num_ues or num_rx_aps.
        #[arg(long)]
        param: String,
        /// Comma-separated values, units allowed (e.g. "-26 dBsm,-20 dBsm").
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Parse and check a config file without running anything.
    ValidateConfig {
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file of `key = value` lines; defaults are used when omitted.
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Defaults table shown at the end of `--help`.
pub fn defaults_help() -> String {
    let c = ExperimentConfig::default();
    let lines = [
        format!("area_side          = {} m", c.area_side),
        format!("num_tx_aps         = {}", c.num_tx_aps),
        format!("num_rx_aps         = {}", c.num_rx_aps),
        format!("num_ues            = {}", c.num_ues),
        format!("antennas           = {}", c.antennas),
        format!("p_max              = {} W", c.p_max),
        format!("gamma_thresh       = {:.0} dB", linear_to_db(c.gamma_thresh)),
        format!("carrier_freq       = {} GHz", c.carrier_freq / 1e9),
        format!("noise_variance     = {:.0} dBm", linear_to_db(c.noise_variance) + 30.0),
        format!("rcs_variance       = {:.0} dBsm", linear_to_db(c.rcs_variance)),
        format!("delay_bins (M)     = {}", c.delay_bins),
        format!("doppler_bins (N)   = {}", c.doppler_bins),
        format!("sample_interval    = {} us", c.sample_interval * 1e6),
        format!("paths (P)          = {}", c.paths),
        format!("delay_spread       = {} .. {} us", c.delay_spread_min * 1e6, c.delay_spread_max * 1e6),
        format!("doppler_spread     = {} .. {} kHz", c.doppler_spread_min / 1e3, c.doppler_spread_max / 1e3),
        format!("reflection_gain    = {:.0} dB", linear_to_db(c.reflection_gain)),
        format!("target_doppler     = {} Hz", c.target_doppler),
        "psi_reg            = auto (noise_variance * num_ues)".to_string(),
        "schemes            = sensing-centric-with-x0, sensing-centric-without-x0, comm-centric".to_string(),
        format!("drops              = {}", c.drops),
        format!("trials_per_drop    = {}", c.trials_per_drop),
        format!("calibration_trials = {}", c.calibration_trials),
        format!("p_fa               = {}", c.p_fa),
        format!("ccp_epsilon        = {}", c.ccp_epsilon),
        format!("ccp_max_iters      = {}", c.ccp_max_iters),
        format!("seed               = {}", c.seed),
    ];
    let mut text = String::from("Defaults (config keys):\n");
    for line in lines {
        text.push_str("  ");
        text.push_str(&line);
        text.push('\n');
    }
    text
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, OutputFormat), Error> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for kv in &args.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{kv}' is not KEY=VALUE")))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok((config, args.format.parse()?))
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Calibration { .. } | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn report(rows: &[ResultRow], err: &mut dyn Write) {
    for r in rows {
        if r.drops_infeasible > 0 || r.pd.is_none() {
            let pd = r.pd.map_or("absent".to_string(), |p| format!("{p:.3}"));
            let _ = writeln!(
                err,
                "{} @ {}: {} drop(s) infeasible, {} used, Pd {pd}",
                r.scheme, r.sweep_value, r.drops_infeasible, r.drops_used
            );
        }
    }
}

fn execute(config: &ExperimentConfig, format: OutputFormat, out: &Option<PathBuf>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let rows = match run_sweep(config) {
        Ok(rows) => rows,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code(&e);
        }
    };
    report(&rows, stderr);
    let written = match out {
        Some(path) => emit_results(&rows, format, path),
        None => stdout.write_all(render(&rows, format).as_bytes()).map_err(|source| Error::Io { path: "<stdout>".into(), source }),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn cli_main<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let command = Cli::command().after_long_help(defaults_help()).after_help(defaults_help());
    let cli = match command.try_get_matches_from(argv).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    EXIT_CONFIG
                }
            };
        }
    };

    let loaded = match &cli.command {
        Command::Run(args) => load(args).map(|(c, f)| (c, f, args.out.clone())),
        Command::Sweep { common, param, values } => load(common).and_then(|(mut c, f)| {
            let param: SweepParam = param.parse()?;
            c.set_sweep(param, values)?;
            c.validate()?;
            Ok((c, f, common.out.clone()))
        }),
        Command::ValidateConfig { config } => {
            return match ExperimentConfig::load(config) {
                Ok(_) => {
                    let _ = writeln!(stdout, "{}: ok", config.display());
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    exit_code(&e)
                }
            };
        }
    };
    match loaded {
        Ok((config, format, out)) => execute(&config, format, &out, stdout, stderr),
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cli_main(std::iter::once("otfs-isac").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_lists_defaults() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, EXIT_OK);
        for needle in ["num_tx_aps         = 8", "p_max              = 1 W", "gamma_thresh       = 2 dB", "-94 dBm", "1.9 GHz", "delay_bins (M)     = 16"] {
            assert!(out.contains(needle), "missing {needle}");
        }
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(&["run", "--bogus"]).0, EXIT_CONFIG);
        assert_eq!(run(&["frobnicate"]).0, EXIT_CONFIG);
        let (code, _, err) = run(&["validate-config", "/nonexistent/x.conf"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("/nonexistent/x.conf"));
        assert_eq!(run(&["run", "--set", "drops"]).0, EXIT_CONFIG);
        assert_eq!(run(&["run", "--format", "xml"]).0, EXIT_CONFIG);
        assert_eq!(run(&["sweep", "--param", "nope", "--values", "1"]).0, EXIT_CONFIG);
    }
}
