//! Gibbs sweeps over the full model, run scheduling, traces and checkpoints.
//!
//! One sweep, in order:
//! 1. segment counts `n` and pruning of unused atoms;
//! 2. table counts `m`, then the concentrations `alpha0` and `alpha` given
//!    the counts (weights integrated out);
//! 3. global then per-sequence weights;
//! 4. slice variables;
//! 5. stick extension until every sequence's leftover mass is below its slice;
//! 6. slice-restricted FFBS proposal and MH correction per sequence, fanned out
//!    over workers;
//! 7. allele-frequency profiles;
//! 8. split rate and base-measure means.

mod run;
mod trace;

pub use run::{
    read_checkpoint, run, start_chain, Checkpoint, InitPolicy, RunConfig, RunOptions, RunReport,
    CHECKPOINT_FILE, CHECKPOINT_VERSION, RUN_FILE,
};
pub use trace::{
    coverage_count, read_assignments, read_theta, read_trace, AssignmentSnapshot, SweepRecord,
    ThetaSnapshot, TraceFiles, TraceLengths, ASSIGNMENTS_FILE, THETA_FILE, TRACE_FILE,
};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dist;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::hdp::{self, BaseMeasure, CountTables, HdpState};
use crate::hmm::{self, LatentPaths};
use crate::params::{self, BetaPrior, Hyperparams, Priors, RwTuner};
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub priors: Priors,
    pub seed: u64,
    /// Number of atoms drawn from the base measure at initialization.
    pub k_init: usize,
    pub r_proposal_scale: f64,
    pub mu_proposal_scale: f64,
    pub extension_cap: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            priors: Priors::default(),
            seed: 1,
            k_init: 5,
            r_proposal_scale: 0.5,
            mu_proposal_scale: 0.3,
            extension_cap: hdp::EXTENSION_CAP,
        }
    }
}

/// Everything that evolves across sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub hdp: HdpState,
    pub paths: LatentPaths,
    pub hyper: Hyperparams,
    pub r_tuner: RwTuner,
    pub mu_tuner: RwTuner,
    /// Number of completed sweeps.
    pub sweep: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepStats {
    pub accept_ffbs: f64,
    pub accept_r: bool,
    pub accept_mu: f64,
    pub atoms_added: usize,
}

/// Read-only view of a dataset prepared for sweeping.
#[derive(Debug)]
pub struct Sampler<'a> {
    data: &'a Dataset,
    config: SamplerConfig,
    obs: Vec<Vec<usize>>,
    mu_priors: Vec<BetaPrior>,
    executor: Executor,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a Dataset, config: SamplerConfig, executor: Executor) -> Result<Self> {
        config.priors.check()?;
        if let Some(f) = data.validate().into_iter().find(|f| f.is_error()) {
            return Err(Error::InvalidDataset(f.message));
        }
        if config.k_init == 0 {
            return Err(Error::InvalidConfig("k_init must be at least 1".into()));
        }
        let obs = (0..data.n_individuals())
            .map(|i| data.observation_indices(i))
            .collect();
        let mu_priors = config.priors.mu.resolve(&data.allele_one_frequency());
        Ok(Sampler {
            data,
            config,
            obs,
            mu_priors,
            executor,
        })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    fn base<'m>(&'m self, hyper: &'m Hyperparams) -> BaseMeasure<'m> {
        BaseMeasure {
            c: hyper.c,
            mu: &hyper.mu,
            alleles: self.data.alleles(),
        }
    }

    /// Default starting point: `k_init` atoms, uniform labels per segment,
    /// segments drawn from the prior at `r` equal to the geometric mean of
    /// `1/d`, and profiles drawn given those labels.
    pub fn initialize(&self) -> Result<ChainState> {
        let data = self.data;
        let priors = &self.config.priors;
        let mut rng = substream(self.config.seed, 0, Stream::Init, 0);
        let positive: Vec<f64> = data
            .distances()
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .collect();
        let mut log_r = if positive.is_empty() {
            0.0
        } else {
            -positive.iter().map(|d| d.ln()).sum::<f64>() / positive.len() as f64
        };
        if !(log_r > priors.log_r.0 && log_r < priors.log_r.1) {
            log_r = 0.5 * (priors.log_r.0 + priors.log_r.1);
        }
        let hyper = Hyperparams {
            alpha: priors.alpha.mean(),
            alpha0: priors.alpha0.mean(),
            r: log_r.exp(),
            c: priors.c,
            mu: data
                .allele_one_frequency()
                .iter()
                .map(|f| f.clamp(0.05, 0.95))
                .collect(),
        };
        let k = self.config.k_init;
        let n = data.n_individuals();
        let mut hdp = HdpState {
            atoms: Vec::with_capacity(k),
            q0: vec![1.0 / (k + 1) as f64; k],
            w0: 1.0 / (k + 1) as f64,
            q: vec![vec![1.0 / (k + 1) as f64; k]; n],
            w: vec![1.0 / (k + 1) as f64; n],
            slice: vec![0.0; n],
            n_occupied: k,
            next_id: 0,
        };
        let base = self.base(&hyper);
        for _ in 0..k {
            let theta = base.draw(&mut rng);
            hdp.push_atom(theta);
        }
        let link = hmm::link_probs(hyper.r, data.distances());
        let uniform = vec![1.0; k];
        let mut paths = LatentPaths {
            z: Vec::with_capacity(n),
            s: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let mut z = Vec::with_capacity(data.n_loci());
            let mut s = Vec::with_capacity(data.n_loci());
            for l in 0..data.n_loci() {
                let linked = l > 0 && dist::bernoulli(link[l - 1], &mut rng);
                z.push(if linked {
                    z[l - 1]
                } else {
                    dist::categorical(&uniform, &mut rng)
                });
                s.push(linked);
            }
            paths.z.push(z);
            paths.s.push(s);
        }
        for i in 0..n {
            hdp.slice[i] = hdp::sample_slice(&hdp.q[i], &paths.z[i], &mut rng)?;
        }
        let mut chain = ChainState {
            hdp,
            paths,
            hyper,
            r_tuner: RwTuner::new(self.config.r_proposal_scale),
            mu_tuner: RwTuner::new(self.config.mu_proposal_scale),
            sweep: 0,
        };
        self.update_profiles(&mut chain, 0);
        Ok(chain)
    }

    /// One full sweep. `adapt` enables proposal-scale adaptation.
    pub fn sweep(&self, chain: &mut ChainState, adapt: bool) -> Result<SweepStats> {
        let t = chain.sweep + 1;
        let seed = self.config.seed;
        let priors = &self.config.priors;
        let mut rng = substream(seed, t, Stream::Coordinator, 0);
        let n_ind = self.data.n_individuals();

        // 1. counts and pruning
        let mut n = hdp::count_segments(&chain.paths, chain.hdp.n_atoms())?;
        hdp::prune_unoccupied(&mut chain.hdp, &mut chain.paths, &mut n);

        // 2. tables and concentrations
        let tables = CountTables::sample(n, chain.hyper.alpha, &chain.hdp.q0, &mut rng);
        let m_total = tables.total_tables();
        chain.hyper.alpha0 = params::update_alpha0(
            chain.hdp.k_star(),
            m_total,
            priors.alpha0,
            chain.hyper.alpha0,
            &mut rng,
        );
        chain.hyper.alpha = params::update_alpha(
            &tables.segments(),
            m_total,
            priors.alpha,
            chain.hyper.alpha,
            &mut rng,
        );

        // 3. weights
        let (q0, w0) = hdp::resample_global_weights(&tables.n0, chain.hyper.alpha0, &mut rng)?;
        chain.hdp.q0 = q0;
        chain.hdp.w0 = w0;
        for i in 0..n_ind {
            let (q, w) = hdp::resample_individual_weights(
                &chain.hdp.q0,
                chain.hdp.w0,
                &tables.n[i],
                chain.hyper.alpha,
                &mut rng,
            );
            chain.hdp.q[i] = q;
            chain.hdp.w[i] = w;
        }

        // 4. slices
        for i in 0..n_ind {
            chain.hdp.slice[i] = hdp::sample_slice(&chain.hdp.q[i], &chain.paths.z[i], &mut rng)
                .map_err(|e| match e {
                    Error::ZeroMassAtom { atom, .. } => Error::ZeroMassAtom {
                        individual: i,
                        atom,
                    },
                    other => other,
                })?;
        }

        // 5. retrospective extension
        let atoms_added = {
            let hyper = chain.hyper.clone();
            let base = self.base(&hyper);
            hdp::extend_sticks(
                &mut chain.hdp,
                hyper.alpha,
                hyper.alpha0,
                &base,
                self.config.extension_cap,
                &mut rng,
            )?
        };

        // 6. latent paths
        let link = hmm::link_probs(chain.hyper.r, self.data.distances());
        let updates = {
            let hdp = &chain.hdp;
            let paths = &chain.paths;
            let profiles = hdp.profiles();
            let obs = &self.obs;
            let link = &link;
            self.executor.map(n_ind, |i| {
                let mut r = substream(seed, t, Stream::Individual, i as u64);
                hmm::update_path(
                    &obs[i],
                    &hdp.q[i],
                    &profiles,
                    link,
                    hdp.slice[i],
                    &paths.z[i],
                    &paths.s[i],
                    &mut r,
                )
                .map_err(|e| match e {
                    Error::EmptyActiveSet(_) => Error::EmptyActiveSet(i),
                    other => other,
                })
            })
        };
        let mut accepted = 0usize;
        for (i, up) in updates.into_iter().enumerate() {
            let up = up?;
            if up.accepted {
                accepted += 1;
                chain.paths.z[i] = up.z;
                chain.paths.s[i] = up.s;
            }
        }

        // 7. profiles
        self.update_profiles(chain, t);

        // 8. split rate and base means
        let tallies = params::link_tallies(&chain.paths.s, self.data.n_loci());
        let (r, accept_r) = params::update_r(
            chain.hyper.r,
            &tallies,
            self.data.distances(),
            priors.log_r,
            chain.r_tuner.scale,
            &mut rng,
        );
        chain.hyper.r = r;
        chain.r_tuner.record(accept_r, adapt);
        let offsets = self.data.allele_offsets();
        let mut mu_accepted = 0usize;
        for l in 0..self.data.n_loci() {
            let locus: Vec<&[f64]> = chain
                .hdp
                .atoms
                .iter()
                .map(|a| &a.theta[offsets[l]..offsets[l + 1]])
                .collect();
            let (mu, ok) = params::update_mu(
                chain.hyper.mu[l],
                &locus,
                chain.hyper.c,
                self.mu_priors[l],
                chain.mu_tuner.scale,
                &mut rng,
            );
            chain.hyper.mu[l] = mu;
            chain.mu_tuner.record(ok, adapt);
            mu_accepted += ok as usize;
        }

        chain.sweep = t;
        Ok(SweepStats {
            accept_ffbs: accepted as f64 / n_ind as f64,
            accept_r,
            accept_mu: mu_accepted as f64 / self.data.n_loci() as f64,
            atoms_added,
        })
    }

    /// Conjugate redraw of every instantiated atom's profile.
    fn update_profiles(&self, chain: &mut ChainState, t: u64) {
        let data = self.data;
        let len = data.profile_len();
        let k = chain.hdp.n_atoms();
        let mut counts = vec![0u32; k * len];
        for (i, z) in chain.paths.z.iter().enumerate() {
            for (l, &atom) in z.iter().enumerate() {
                counts[atom * len + self.obs[i][l]] += 1;
            }
        }
        let base = self.base(&chain.hyper);
        let offsets = data.allele_offsets();
        let seed = self.config.seed;
        let atoms = &chain.hdp.atoms;
        let counts = &counts;
        let fresh = self.executor.map(k, |j| {
            let mut r = substream(seed, t, Stream::Theta, atoms[j].id);
            let mut theta = Vec::with_capacity(len);
            for l in 0..data.n_loci() {
                let c = &counts[j * len + offsets[l]..j * len + offsets[l + 1]];
                theta.extend(params::update_theta(&base.locus_params(l), c, &mut r));
            }
            theta
        });
        for (atom, theta) in chain.hdp.atoms.iter_mut().zip(fresh) {
            atom.theta = theta;
        }
    }

    /// Checks every structural invariant of a chain state.
    pub fn check_state(&self, chain: &ChainState) -> Result<()> {
        chain.paths.check()?;
        chain.hdp.check_invariants(self.data.allele_offsets())?;
        chain.hyper.check(&self.config.priors)?;
        let k = chain.hdp.n_atoms();
        if chain.paths.z.iter().flatten().any(|&v| v >= k) {
            return Err(Error::InvalidPaths(
                "label outside the instantiated atoms".into(),
            ));
        }
        Ok(())
    }

    /// Complete-data log density of the observations, the segment labels
    /// and the link indicators given profiles, weights and `r`. Used to rank
    /// pilot chains.
    pub fn complete_log_score(&self, chain: &ChainState) -> f64 {
        let mut labels = 0.0;
        for (i, (z, s)) in chain.paths.z.iter().zip(&chain.paths.s).enumerate() {
            for l in 0..z.len() {
                if !s[l] {
                    labels += chain.hdp.q[i][z[l]].ln();
                }
            }
        }
        let tallies = params::link_tallies(&chain.paths.s, self.data.n_loci());
        self.log_likelihood(chain)
            + labels
            + params::ln_r_likelihood(chain.hyper.r, &tallies, self.data.distances())
    }

    /// Complete-data log-likelihood `sum log theta_{z_il, l, x_il}`.
    pub fn log_likelihood(&self, chain: &ChainState) -> f64 {
        let mut acc = 0.0;
        for (i, z) in chain.paths.z.iter().enumerate() {
            for (l, &k) in z.iter().enumerate() {
                acc += chain.hdp.atoms[k].theta[self.obs[i][l]].ln();
            }
        }
        acc
    }
}
