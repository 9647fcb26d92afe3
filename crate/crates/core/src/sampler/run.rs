//! Burn-in/thinning schedule, trace emission and checkpoint/resume.
//!
//! `checkpoint.json` holds the format version, the dataset fingerprint, the
//! run configuration, the full chain state and the byte lengths of the trace
//! files at the moment it was written. Random streams are derived from
//! `(seed, sweep)`, so no generator state needs saving: resuming replays the
//! remaining sweeps exactly.
//!
//! With [`InitPolicy::BestOf`] the run first advances several short pilot
//! chains, each from its own seed and starting atom count, and continues the
//! one with the highest [`Sampler::complete_log_score`]. Pilot sweeps count
//! towards burn-in, so the retained chain has exactly `sweeps` sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::rng::pilot_seed;

use super::trace::{coverage_count, SweepRecord, TraceFiles, TraceLengths};
use super::{ChainState, Sampler, SamplerConfig, SweepStats};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RUN_FILE: &str = "run.json";

/// How the chain is started.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// One start from [`Sampler::initialize`] with the configured `k_init`.
    Single,
    /// One pilot per entry of `k_inits`, each run for `pilot_sweeps`.
    BestOf {
        k_inits: Vec<usize>,
        pilot_sweeps: u64,
    },
}

impl Default for InitPolicy {
    fn default() -> Self {
        InitPolicy::BestOf {
            k_inits: vec![1, 5, 5, 5],
            pilot_sweeps: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub workers: usize,
    /// Sweeps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub out_dir: PathBuf,
    /// Write assignment and profile snapshots for retained sweeps.
    pub snapshots: bool,
    pub init: InitPolicy,
    pub sampler: SamplerConfig,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            sweeps: 50_000,
            burn_in: 20_000,
            thin: 30,
            workers: 1,
            checkpoint_every: 1_000,
            out_dir: out_dir.into(),
            snapshots: true,
            init: InitPolicy::default(),
            sampler: SamplerConfig::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.burn_in >= self.sweeps {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be smaller than the number of sweeps ({})",
                self.burn_in, self.sweeps
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig(
                "worker count must be at least 1".into(),
            ));
        }
        if let InitPolicy::BestOf {
            k_inits,
            pilot_sweeps,
        } = &self.init
        {
            if k_inits.is_empty() || k_inits.contains(&0) {
                return Err(Error::InvalidConfig(
                    "pilot starting atom counts must be at least 1".into(),
                ));
            }
            if *pilot_sweeps > self.burn_in {
                return Err(Error::InvalidConfig(format!(
                    "pilot sweeps ({pilot_sweeps}) must not exceed burn-in ({})",
                    self.burn_in
                )));
            }
        }
        self.sampler.priors.check()
    }

    pub fn retains(&self, sweep: u64) -> bool {
        sweep > self.burn_in && (sweep - self.burn_in) % self.thin == 0
    }

    /// Number of records a complete run emits.
    pub fn expected_records(&self) -> u64 {
        (self.sweeps - self.burn_in) / self.thin
    }

    /// Settings that must match between a checkpoint and a resumed run.
    fn same_chain(&self, other: &RunConfig) -> bool {
        self.sampler == other.sampler
            && self.burn_in == other.burn_in
            && self.thin == other.thin
            && self.snapshots == other.snapshots
            && self.init == other.init
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue from `checkpoint.json` in the output directory.
    pub resume: bool,
    /// Stop (after checkpointing) once this sweep completes.
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub fingerprint: u64,
    pub config: RunConfig,
    pub chain: ChainState,
    pub lengths: TraceLengths,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub final_sweep: u64,
    pub records: u64,
    pub elapsed: Duration,
    pub completed: bool,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let cp: Checkpoint = serde_json::from_str(&text)?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version {} is not supported (expected {CHECKPOINT_VERSION})",
            cp.version
        )));
    }
    Ok(cp)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn record(sampler: &Sampler<'_>, chain: &ChainState, stats: &SweepStats) -> SweepRecord {
    let mut counts = vec![0usize; chain.hdp.n_atoms()];
    for &k in chain.paths.z.iter().flatten() {
        counts[k] += 1;
    }
    SweepRecord {
        sweep: chain.sweep,
        k_star: counts.iter().filter(|&&c| c > 0).count(),
        k_cover_95: coverage_count(&counts, 95),
        k_cover_99: coverage_count(&counts, 99),
        alpha: chain.hyper.alpha,
        alpha0: chain.hyper.alpha0,
        r: chain.hyper.r,
        loglik: sampler.log_likelihood(chain),
        accept_ffbs: stats.accept_ffbs,
        accept_r: if stats.accept_r { 1.0 } else { 0.0 },
    }
}

/// Starting state under `config.init`.
pub fn start_chain(
    config: &RunConfig,
    data: &Dataset,
    sampler: &Sampler<'_>,
) -> Result<ChainState> {
    let InitPolicy::BestOf {
        k_inits,
        pilot_sweeps,
    } = &config.init
    else {
        return sampler.initialize();
    };
    let mut best: Option<(f64, ChainState)> = None;
    for (j, &k_init) in k_inits.iter().enumerate() {
        let pilot_config = SamplerConfig {
            k_init,
            seed: pilot_seed(config.sampler.seed, j as u64),
            ..config.sampler.clone()
        };
        let pilot = Sampler::new(data, pilot_config, sampler.executor().clone())?;
        let mut chain = pilot.initialize()?;
        while chain.sweep < *pilot_sweeps {
            pilot.sweep(&mut chain, true)?;
        }
        let score = sampler.complete_log_score(&chain);
        log::info!(
            "pilot {j} (k_init {k_init}): score {score:.1}, {} atoms",
            chain.hdp.n_atoms()
        );
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, chain));
        }
    }
    Ok(best.expect("at least one pilot").1)
}

/// Runs (or resumes) a chain, writing the trace into `config.out_dir`.
pub fn run(config: &RunConfig, data: &Dataset, options: RunOptions) -> Result<RunReport> {
    config.check()?;
    let start = Instant::now();
    let dir = config.out_dir.as_path();
    fs::create_dir_all(dir)?;
    let sampler = Sampler::new(data, config.sampler.clone(), Executor::new(config.workers)?)?;
    let checkpoint_path = dir.join(CHECKPOINT_FILE);

    let (mut chain, mut files, mut records) = if options.resume {
        let cp = read_checkpoint(&checkpoint_path)?;
        if cp.fingerprint != data.fingerprint() {
            return Err(Error::Checkpoint(
                "dataset differs from the one the checkpoint was taken on".into(),
            ));
        }
        if !cp.config.same_chain(config) {
            return Err(Error::Checkpoint(
                "run configuration differs from the checkpointed one".into(),
            ));
        }
        sampler.check_state(&cp.chain)?;
        if cp.chain.sweep > config.sweeps {
            return Err(Error::Checkpoint(format!(
                "checkpoint is at sweep {} beyond the requested {}",
                cp.chain.sweep, config.sweeps
            )));
        }
        let files = TraceFiles::reopen(dir, config.snapshots, cp.lengths)?;
        let done = (1..=cp.chain.sweep).filter(|&t| config.retains(t)).count() as u64;
        log::info!("resuming from sweep {}", cp.chain.sweep);
        (cp.chain, files, done)
    } else {
        let files = TraceFiles::create(dir, config.snapshots)?;
        (start_chain(config, data, &sampler)?, files, 0)
    };
    write_atomic(
        &dir.join(RUN_FILE),
        serde_json::to_string_pretty(config)?.as_bytes(),
    )?;

    let save = |chain: &ChainState, files: &mut TraceFiles| -> Result<()> {
        let lengths = files.flush()?;
        let cp = Checkpoint {
            version: CHECKPOINT_VERSION,
            fingerprint: data.fingerprint(),
            config: config.clone(),
            chain: chain.clone(),
            lengths,
        };
        write_atomic(&checkpoint_path, serde_json::to_string(&cp)?.as_bytes())
    };

    if options.stop_after.is_some_and(|t| t <= chain.sweep) && chain.sweep < config.sweeps {
        save(&chain, &mut files)?;
        return Ok(RunReport {
            final_sweep: chain.sweep,
            records,
            elapsed: start.elapsed(),
            completed: false,
        });
    }
    while chain.sweep < config.sweeps {
        let adapt = chain.sweep < config.burn_in;
        let stats = sampler.sweep(&mut chain, adapt)?;
        let t = chain.sweep;
        if config.retains(t) {
            files.write(&record(&sampler, &chain, &stats), &chain, data)?;
            records += 1;
        }
        if t % 500 == 0 {
            log::info!(
                "sweep {t}: {} atoms, alpha {:.3}, r {:.3e}",
                chain.hdp.n_atoms(),
                chain.hyper.alpha,
                chain.hyper.r
            );
        }
        let stopping = options.stop_after == Some(t);
        if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0) || stopping {
            save(&chain, &mut files)?;
        }
        if stopping && t < config.sweeps {
            return Ok(RunReport {
                final_sweep: t,
                records,
                elapsed: start.elapsed(),
                completed: false,
            });
        }
    }
    save(&chain, &mut files)?;
    Ok(RunReport {
        final_sweep: chain.sweep,
        records,
        elapsed: start.elapsed(),
        completed: true,
    })
}
