use std::collections::HashSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use hdpstructure::data::{
    load_dataset, load_distances, load_genotypes, save_distances, save_genotypes, Severity,
};
use hdpstructure::params::{BetaPrior, MuPrior};
use hdpstructure::sampler::{run, InitPolicy, RunConfig, RunOptions};
use hdpstructure::simulate::{preset, simulate, write_truth};
use hdpstructure::summary::{
    summarize, write_summary, Granularity, PointEstimate, SummaryOptions, SUMMARY_FILE,
};
use hdpstructure::{GammaPrior, Priors};

/// Population structure and admixture inference with an HDP linkage model.
#[derive(Debug, Parser)]
#[command(name = "hdpstructure", version, args_override_self = true)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a reference scenario.
    Simulate(SimulateArgs),
    /// Run the sampler on a dataset.
    Run(RunArgs),
    /// Summarise a finished run.
    Summarize(SummarizeArgs),
    /// Check input files without running anything.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Reference scenario: 1, 2 or 3 populations.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    preset: u8,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the preset's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// `key = value` file mirroring these flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    /// One start with `--k-init` atoms.
    Single,
    /// Best of several pilot chains.
    BestOf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Genotype CSV, one row per sequence
    #[arg(long)]
    genotypes: PathBuf,
    /// Inter-locus distances, one per line
    #[arg(long)]
    distances: PathBuf,
    /// Output directory for the trace and checkpoints
    #[arg(long, default_value = "hdpstructure-run")]
    out: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    sweeps: u64,
    #[arg(long, default_value_t = 20_000)]
    burn_in: u64,
    #[arg(long, default_value_t = 30)]
    thin: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Sweeps between checkpoints; 0 writes only the final one.
    #[arg(long, default_value_t = 1_000)]
    checkpoint_every: u64,
    /// Continue from the checkpoint in `--out`.
    #[arg(long)]
    resume: bool,
    /// Checkpoint and stop after this sweep.
    #[arg(long)]
    stop_after: Option<u64>,
    /// Skip assignment and profile snapshots.
    #[arg(long)]
    no_snapshots: bool,
    #[arg(long, value_enum, default_value = "best-of")]
    init: InitArg,
    /// Starting atom count for `--init single`.
    #[arg(long, default_value_t = 5)]
    k_init: usize,
    /// Starting atom counts of the pilot chains.
    #[arg(long, value_delimiter = ',', default_value = "1,5,5,5")]
    pilots: Vec<usize>,
    /// Length of each pilot chain [default: min(1000, burn-in / 2)].
    #[arg(long)]
    pilot_sweeps: Option<u64>,
    /// Start from the phased-SNP application priors instead of the defaults.
    #[arg(long)]
    application_priors: bool,
    /// Gamma prior on alpha as `shape,rate`.
    #[arg(long, value_parser = parse_pair)]
    alpha_prior: Option<(f64, f64)>,
    /// Gamma prior on alpha0 as `shape,rate`.
    #[arg(long, value_parser = parse_pair)]
    alpha0_prior: Option<(f64, f64)>,
    /// Bounds of the uniform prior on ln r as `lower,upper`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    log_r_bounds: Option<(f64, f64)>,
    /// Base-mean prior: `a,b` for Beta(a, b) or `centered:k`.
    #[arg(long, value_parser = parse_mu)]
    mu_prior: Option<MuPrior>,
    /// Base-measure concentration.
    #[arg(long)]
    c: Option<f64>,
    /// `key = value` file mirroring these flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GranularityArg {
    Item,
    Individual,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimateArg {
    Binder,
    Map,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    /// Output directory of a run.
    #[arg(long)]
    trace: PathBuf,
    /// Where to write the summary [default: the run directory].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "item")]
    granularity: GranularityArg,
    #[arg(long, value_enum, default_value = "binder")]
    estimate: EstimateArg,
    /// Visited partitions tried as Binder candidates; 0 keeps all.
    #[arg(long, default_value_t = 500)]
    max_visited: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// `key = value` file mirroring these flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Genotype CSV, one row per sequence
    #[arg(long)]
    genotypes: PathBuf,
    /// Inter-locus distances, one per line
    #[arg(long)]
    distances: Option<PathBuf>,
    /// `key = value` file mirroring these flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated numbers, got `{s}`"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((num(a)?, num(b)?))
}

fn parse_mu(s: &str) -> std::result::Result<MuPrior, String> {
    if let Some(k) = s.strip_prefix("centered:") {
        let strength = k.trim().parse::<f64>().map_err(|e| format!("`{k}`: {e}"))?;
        return Ok(MuPrior::Centered { strength });
    }
    let (a, b) = parse_pair(s)?;
    Ok(MuPrior::Fixed(BetaPrior { a, b }))
}

/// Reads `key = value` lines into flags placed before the command-line ones,
/// so explicit flags win.
fn config_args(path: &Path, cmd: &clap::Command) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let known: HashSet<&str> = cmd.get_arguments().filter_map(|a| a.get_long()).collect();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", path.display(), n + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if !known.contains(key.as_str()) || key == "config" {
            bail!("{}:{}: unknown key `{key}`", path.display(), n + 1);
        }
        let arg = cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .expect("known key");
        if matches!(arg.get_action(), clap::ArgAction::SetTrue) {
            match value {
                "true" => out.push(format!("--{key}").into()),
                "false" => {}
                _ => bail!("{}:{}: `{key}` takes true or false", path.display(), n + 1),
            }
        } else {
            out.push(format!("--{key}={value}").into());
        }
    }
    Ok(out)
}

/// Splices the subcommand's config file (if any) into the argument list.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (j, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(j + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let root = Cli::command();
    let Some((pos, sub)) = args
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(j, a)| root.find_subcommand(a).map(|s| (j, s.clone())))
    else {
        return Ok(args);
    };
    let mut out = args[..=pos].to_vec();
    out.extend(config_args(&path, &sub)?);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn priors(args: &RunArgs) -> Priors {
    let mut p = if args.application_priors {
        Priors::application()
    } else {
        Priors::default()
    };
    if let Some((a, b)) = args.alpha_prior {
        p.alpha = GammaPrior::new(a, b);
    }
    if let Some((a, b)) = args.alpha0_prior {
        p.alpha0 = GammaPrior::new(a, b);
    }
    if let Some(bounds) = args.log_r_bounds {
        p.log_r = bounds;
    }
    if let Some(mu) = args.mu_prior {
        p.mu = mu;
    }
    if let Some(c) = args.c {
        p.c = c;
    }
    p
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = preset(args.preset as usize)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (data, truth) = simulate(&cfg)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    save_genotypes(&data, args.out.join("genotypes.csv"))?;
    save_distances(data.distances(), args.out.join("distances.txt"))?;
    write_truth(&truth, args.out.join("truth.csv"))?;
    println!(
        "wrote {} sequences x {} loci from {} population(s) to {}",
        data.n_individuals(),
        data.n_loci(),
        cfg.k_true(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let data = load_dataset(&args.genotypes, &args.distances)?;
    for f in data.validate() {
        if f.severity == Severity::Warning {
            log::warn!("{}", f.message);
        }
    }
    let mut config = RunConfig::new(&args.out);
    config.sweeps = args.sweeps;
    config.burn_in = args.burn_in;
    config.thin = args.thin;
    config.workers = args.workers;
    config.checkpoint_every = args.checkpoint_every;
    config.snapshots = !args.no_snapshots;
    config.sampler.seed = args.seed;
    config.sampler.k_init = args.k_init;
    config.sampler.priors = priors(&args);
    config.init = match args.init {
        InitArg::Single => InitPolicy::Single,
        InitArg::BestOf => InitPolicy::BestOf {
            k_inits: args.pilots.clone(),
            pilot_sweeps: args.pilot_sweeps.unwrap_or((args.burn_in / 2).min(1_000)),
        },
    };
    let report = run(
        &config,
        &data,
        RunOptions {
            resume: args.resume,
            stop_after: args.stop_after,
        },
    )?;
    let state = if report.completed {
        "finished"
    } else {
        "stopped"
    };
    println!(
        "{state} at sweep {} with {} retained records in {:.1?}; output in {}",
        report.final_sweep,
        report.records,
        report.elapsed,
        args.out.display()
    );
    Ok(())
}

fn cmd_summarize(args: SummarizeArgs) -> Result<()> {
    let options = SummaryOptions {
        granularity: match args.granularity {
            GranularityArg::Item => Granularity::Item,
            GranularityArg::Individual => Granularity::Individual,
        },
        estimate: match args.estimate {
            EstimateArg::Binder => PointEstimate::Binder,
            EstimateArg::Map => PointEstimate::Map,
        },
        max_visited: args.max_visited,
        workers: args.workers,
    };
    let summary = summarize(&args.trace, &options)?;
    let out = args.out.unwrap_or_else(|| args.trace.clone());
    write_summary(&summary, &out)?;
    println!(
        "k_cover_95 mode {} over {} records; point partition has {} cluster(s); wrote {}",
        summary.posterior_k.k_cover_95.mode,
        summary.posterior_k.samples,
        summary.point.n_clusters,
        out.join(SUMMARY_FILE).display()
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let data = match &args.distances {
        Some(d) => load_dataset(&args.genotypes, d)?,
        None => load_genotypes(&args.genotypes)?,
    };
    if let Some(d) = &args.distances {
        load_distances(d, data.n_loci())?;
    }
    let mut errors = 0;
    for f in data.validate() {
        // Without a distance file the dataset carries none; skip that finding.
        if args.distances.is_none() && f.message.contains("inter-locus distances") {
            continue;
        }
        let tag = match f.severity {
            Severity::Error => {
                errors += 1;
                "invalid"
            }
            Severity::Warning => "warning",
        };
        println!("{tag}: {}", f.message);
    }
    if errors > 0 {
        bail!("{errors} problem(s) found in {}", args.genotypes.display());
    }
    println!(
        "ok: {} sequences x {} loci",
        data.n_individuals(),
        data.n_loci()
    );
    Ok(())
}

fn dispatch(args: Vec<OsString>) -> Result<()> {
    let cli = Cli::from_arg_matches(&Cli::command().try_get_matches_from(expand_config(args)?)?)?;
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Run(a) => cmd_run(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn main() -> ExitCode {
    match dispatch(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(clap_err) = e.downcast_ref::<clap::Error>() {
                use clap::error::ErrorKind;
                if matches!(
                    clap_err.kind(),
                    ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
                ) {
                    let _ = clap_err.print();
                    return ExitCode::SUCCESS;
                }
                let text = clap_err.render().to_string();
                let first = text.lines().next().unwrap_or("invalid arguments");
                let first = first.strip_prefix("error: ").unwrap_or(first);
                eprintln!("error: {first}");
                return ExitCode::from(2);
            }
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
