use clap::{Args, Parser, Subcommand};
use dipolar_stab::config::{parse_config, Command};
use dipolar_stab::output::write_results;
use dipolar_stab::run::{run_command, EXIT_CONFIG, EXIT_FAILURE};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

/// Stability analysis of quasi-two-dimensional dipolar condensates.
#[derive(Parser)]
#[command(name = "dipolar-stab", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Optimal constant C(a,b) of the generalized Gagliardo–Nirenberg inequality.
    GnConstant(Common),
    /// Classify (beta, lambda, n3) as stable, unstable or borderline.
    Stability(Common),
    /// Minimize the trapped energy at unit mass.
    GroundState(Common),
    /// Energy of concentrating trial states and the scaling fit.
    CollapseScan(Common),
    /// Tabulate a Fourier symbol on a small lattice.
    SymbolDump(Common),
}

#[derive(Args)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Record the wall-clock time in result.json (breaks byte-identity of reruns).
    #[arg(long)]
    stamp: bool,
    /// Overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("DIPOLAR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("DIPOLAR_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// `--config` and `--stamp` may also appear after the first override, where
/// clap has already switched to collecting raw values.
fn split_own_flags(c: Common) -> (Option<PathBuf>, bool, Vec<String>) {
    let (mut config, mut stamp) = (c.config, c.stamp);
    let mut rest = Vec::new();
    let mut it = c.overrides.into_iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--stamp" => stamp = true,
            "--config" => match it.next() {
                Some(p) => config = Some(PathBuf::from(p)),
                None => rest.push(a),
            },
            _ => match a.strip_prefix("--config=") {
                Some(p) => config = Some(PathBuf::from(p)),
                None => rest.push(a),
            },
        }
    }
    (config, stamp, rest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::GnConstant(c) => (Command::GnConstant, c),
        Sub::Stability(c) => (Command::Stability, c),
        Sub::GroundState(c) => (Command::GroundState, c),
        Sub::CollapseScan(c) => (Command::CollapseScan, c),
        Sub::SymbolDump(c) => (Command::SymbolDump, c),
    };
    let (config, stamp, overrides) = split_own_flags(common);
    let cfg = match parse_config(command, config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }

    let mut out = run_command(&cfg);
    if stamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        out.record.timestamp = Some(format!("unix:{secs}"));
    }
    let status = &out.record.status;
    match &status.message {
        Some(m) => println!("{}: {} ({m})", cfg.command.name(), status.outcome),
        None => println!("{}: {}", cfg.command.name(), status.outcome),
    }
    match write_results(&out.record, &out.tables, &cfg.out) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE as u8);
        }
    }
    ExitCode::from(out.exit_code() as u8)
}
