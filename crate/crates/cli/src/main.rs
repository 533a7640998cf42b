use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use shelab::smallball::Method;
use shelab_cli::{run, write_outputs, CliError, Command, ExperimentConfig};

/// Stochastic heat equation experiments.
#[derive(Debug, Parser)]
#[command(name = "shelab", version)]
struct Args {
    command: Command,
    /// JSON experiment config; when given, the field flags below are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "SHELAB_THREADS", default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print the effective config and exit.
    #[arg(long)]
    dump_config: bool,

    #[arg(long)]
    n_x: Option<usize>,
    #[arg(long)]
    n_t: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Comma-separated ε values.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "plain" => Ok(Method::Plain),
        "splitting" => Ok(Method::Splitting),
        "importance" => Ok(Method::Importance),
        _ => Err(format!("unknown method {s:?}; expected plain, splitting or importance")),
    }
}

fn effective_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let mut cfg = ExperimentConfig::load(path)?;
            cfg.command = args.command;
            cfg
        }
        None => {
            let mut cfg = ExperimentConfig::for_command(args.command);
            if let Some(v) = args.n_x {
                cfg.grid.n_x = v;
            }
            if let Some(v) = args.n_t {
                cfg.grid.n_t = v;
            }
            if let Some(v) = args.horizon {
                cfg.grid.horizon = v;
            }
            if let Some(v) = args.theta {
                cfg.event.theta = v;
            }
            if let Some(v) = &args.epsilons {
                cfg.event.epsilons = v.clone();
            }
            if let Some(v) = args.method {
                cfg.method = v;
            }
            if let Some(v) = args.n {
                cfg.n = v;
            }
            if let Some(v) = args.m {
                cfg.m = v;
            }
            if let Some(v) = args.replications {
                cfg.replications = v;
            }
            cfg
        }
    };
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn main_inner(args: &Args) -> Result<(), CliError> {
    let cfg = effective_config(args)?;
    if args.dump_config {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global().ok();
    }
    log::info!("running {} with seed {}", cfg.command.name(), cfg.base_seed);
    let record = run(&cfg)?;
    let written = write_outputs(&record, &args.out)?;
    let summary = serde_json::json!({
        "command": cfg.command.name(),
        "config_digest": record.config_digest,
        "rows": record.table.rows.len(),
        "files": written.files,
    });
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match main_inner(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
