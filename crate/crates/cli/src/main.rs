use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pam_cli::{
    cmd_beamform, cmd_bench, cmd_evaluate, cmd_replay, cmd_simulate, load_config, resolve_out_dir, CliError,
    CliResult,
};

#[derive(Parser)]
#[command(name = "pam", version, about = "Passive acoustic mapping with a convolutional forward model")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set solver.mu=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: $PAM_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario: datacube, RF record, ground truth.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Reconstruct per-window power maps from an RF record.
    Beamform {
        #[arg(long)]
        rf: PathBuf,
        /// spred-conv | spred-fft | spred-matrixfree | td-das
        #[arg(long)]
        method: String,
        /// Pick μ by grid search on the validation scenario first.
        #[arg(long)]
        tune: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score map directories against ground-truth masks.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        maps: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Time the forward operators against record length.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [512usize, 1024, 2048, 4096])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long, value_delimiter = ',')]
        operators: Vec<String>,
        #[arg(long, default_value_t = 8192)]
        memory_budget_mb: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Re-run a recorded command and compare its outputs.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate { cfg } => {
            let config = load_config(cfg.config.as_deref(), &cfg.overrides)?;
            let out = resolve_out_dir(cfg.out)?;
            let m = cmd_simulate(&config, &out)?;
            println!("wrote {} files to {}", m.outputs.len() + 1, out.display());
        }
        Command::Beamform { rf, method, tune, cfg } => {
            let config = load_config(cfg.config.as_deref(), &cfg.overrides)?;
            let out = resolve_out_dir(cfg.out)?;
            let m = cmd_beamform(&rf, &method, &config, tune, &out)?;
            for n in &m.notes {
                println!("{n}");
            }
            println!("wrote {} files to {}", m.outputs.len() + 1, out.display());
        }
        Command::Evaluate { maps, truth, cfg } => {
            let config = load_config(cfg.config.as_deref(), &cfg.overrides)?;
            let out = resolve_out_dir(cfg.out)?;
            let e = cmd_evaluate(&maps, &truth, &config, &out)?;
            println!("{:<18} {:>22} {:>18}", "method", "CNR [dB] mean (std)", "Dice mean (std)");
            for s in &e.summary {
                println!(
                    "{:<18} {:>22} {:>18}",
                    s.method,
                    format!("{:.2} ({:.2})", s.cnr_mean, s.cnr_std),
                    format!("{:.2} ({:.2})", s.dice_mean, s.dice_std)
                );
            }
        }
        Command::Bench {
            sizes,
            repetitions,
            operators,
            memory_budget_mb,
            cfg,
        } => {
            let config = load_config(cfg.config.as_deref(), &cfg.overrides)?;
            let out = resolve_out_dir(cfg.out)?;
            let (report, _) = cmd_bench(&config, &sizes, repetitions, &operators, memory_budget_mb, &out)?;
            for r in &report.rows {
                match (r.median_seconds, &r.skipped) {
                    (Some(t), _) => println!("{:<12} N_t={:<6} {:.4} s", r.operator.name(), r.nt, t),
                    (None, Some(why)) => println!("{:<12} N_t={:<6} skipped: {why}", r.operator.name(), r.nt),
                    _ => {}
                }
            }
            for f in &report.fits {
                println!("{:<12} exponent {:.3} ({} sizes)", f.operator.name(), f.exponent, f.points);
            }
        }
        Command::Replay { manifest, out } => {
            let out = resolve_out_dir(out)?;
            let r = cmd_replay(&manifest, &out)?;
            println!(
                "{} identical, {} within 1e-12, {} mismatched",
                r.identical.len(),
                r.within_tolerance.len(),
                r.mismatched.len()
            );
            for (p, why) in &r.mismatched {
                println!("  {}: {why}", p.display());
            }
            if !r.is_reproduced() {
                return Err(CliError::Numerical("replay did not reproduce the recorded outputs".into()));
            }
        }
        Command::Config { config, overrides } => {
            let c = load_config(config.as_deref(), &overrides)?;
            print!("{}", c.to_toml_string()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
