//! Forward simulation of sequences from the linkage admixture model, with the
//! latent ancestry kept as ground truth.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dist;
use crate::error::{Error, Result};
use crate::hmm::transition_prob;
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_individuals: usize,
    pub alleles: Vec<usize>,
    pub distances: Vec<f64>,
    /// Population proportions shared by every sequence (or the Dirichlet mean
    /// when `individual_alpha` is set).
    pub admixture_weights: Vec<f64>,
    /// One flattened allele-frequency profile per population.
    pub theta_true: Vec<Vec<f64>>,
    /// Split rate; `f64::INFINITY` makes every locus its own segment.
    pub r_true: f64,
    /// When set, sequence weights are drawn from `Dirichlet(alpha * weights)`.
    pub individual_alpha: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub z: Vec<Vec<usize>>,
    pub s: Vec<Vec<bool>>,
    /// Population proportions each sequence was generated with.
    pub weights: Vec<Vec<f64>>,
}

impl GroundTruth {
    /// Fraction of loci of each sequence carried by each population.
    pub fn locus_fractions(&self, k_true: usize) -> Vec<Vec<f64>> {
        self.z
            .iter()
            .map(|z| {
                let mut f = vec![0.0; k_true];
                for &k in z {
                    f[k] += 1.0;
                }
                f.iter_mut().for_each(|v| *v /= z.len() as f64);
                f
            })
            .collect()
    }
}

impl ScenarioConfig {
    pub fn k_true(&self) -> usize {
        self.admixture_weights.len()
    }

    pub fn n_loci(&self) -> usize {
        self.alleles.len()
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_individuals == 0 || self.alleles.is_empty() {
            return bad("scenario needs at least one sequence and one locus");
        }
        if self.alleles.iter().any(|&a| a < 2) {
            return bad("every locus needs at least two alleles");
        }
        if self.distances.len() != self.alleles.len() - 1
            || self.distances.iter().any(|&d| !(d >= 0.0))
        {
            return bad("need L-1 non-negative distances");
        }
        let k = self.k_true();
        if k == 0 || self.theta_true.len() != k {
            return bad("one profile per population required");
        }
        let wsum: f64 = self.admixture_weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-12 || self.admixture_weights.iter().any(|&w| !(w >= 0.0)) {
            return bad("admixture weights must be a probability vector");
        }
        let len: usize = self.alleles.iter().sum();
        for theta in &self.theta_true {
            if theta.len() != len {
                return bad("profile length does not match the alleles");
            }
            let mut off = 0;
            for &a in &self.alleles {
                let t: f64 = theta[off..off + a].iter().sum();
                if (t - 1.0).abs() > 1e-12 || theta[off..off + a].iter().any(|&p| !(p >= 0.0)) {
                    return bad("each locus profile must sum to one");
                }
                off += a;
            }
        }
        if !(self.r_true >= 0.0) {
            return bad("split rate must be non-negative");
        }
        if let Some(a) = self.individual_alpha {
            if !(a > 0.0) {
                return bad("individual concentration must be positive");
            }
        }
        Ok(())
    }
}

/// Generates a dataset and its latent ancestry. Deterministic in
/// `config.seed`; each sequence uses its own random substream.
pub fn simulate(config: &ScenarioConfig) -> Result<(Dataset, GroundTruth)> {
    config.check()?;
    let n_loci = config.n_loci();
    let link: Vec<f64> = config
        .distances
        .iter()
        .map(|&d| transition_prob(config.r_true, d))
        .collect();
    let mut offsets = Vec::with_capacity(n_loci);
    let mut acc = 0;
    for &a in &config.alleles {
        offsets.push(acc);
        acc += a;
    }
    let mut genotypes = Vec::with_capacity(config.n_individuals * n_loci);
    let mut truth = GroundTruth {
        z: Vec::new(),
        s: Vec::new(),
        weights: Vec::new(),
    };
    for i in 0..config.n_individuals {
        let mut rng = substream(config.seed, 0, Stream::Simulate, i as u64);
        let q: Vec<f64> = match config.individual_alpha {
            Some(a) => {
                let params: Vec<f64> = config
                    .admixture_weights
                    .iter()
                    .map(|&w| (a * w).max(f64::MIN_POSITIVE))
                    .collect();
                dist::dirichlet(&params, &mut rng)
            }
            None => config.admixture_weights.clone(),
        };
        let mut z = Vec::with_capacity(n_loci);
        let mut s = Vec::with_capacity(n_loci);
        for l in 0..n_loci {
            let linked = l > 0 && dist::bernoulli(link[l - 1], &mut rng);
            let k = if linked {
                z[l - 1]
            } else {
                dist::categorical(&q, &mut rng)
            };
            z.push(k);
            s.push(linked);
            let a = config.alleles[l];
            let p = &config.theta_true[k][offsets[l]..offsets[l] + a];
            genotypes.push(dist::categorical(p, &mut rng) as u16);
        }
        truth.z.push(z);
        truth.s.push(s);
        truth.weights.push(q);
    }
    let ds = Dataset::new(
        config.n_individuals,
        config.alleles.clone(),
        genotypes,
        config.distances.clone(),
    )?;
    Ok((ds, truth))
}

const PRESET_SEED: u64 = 20_150_601;
pub const PRESET_SEQUENCES: usize = 200;
pub const PRESET_MARKERS: usize = 60;
/// Markers are spread evenly over a 100 kbp region; distances are in bp.
pub const PRESET_REGION_BP: f64 = 100_000.0;
/// Split rate per bp for the presets: roughly one split every ten intervals.
pub const PRESET_SPLIT_RATE: f64 = 6e-5;

/// The three reference scenarios: one population; two populations mixed
/// 0.6/0.4; three populations mixed 0.5/0.4/0.1. Profiles are independent
/// `Beta(0.5, 0.5)` draws per locus and population from a fixed seed.
pub fn scenario_presets() -> [ScenarioConfig; 3] {
    [
        preset_with(vec![1.0], 1),
        preset_with(vec![0.6, 0.4], 2),
        preset_with(vec![0.5, 0.4, 0.1], 3),
    ]
}

/// Preset by its 1-based number.
pub fn preset(number: usize) -> Result<ScenarioConfig> {
    match number {
        1..=3 => Ok(scenario_presets()[number - 1].clone()),
        _ => Err(Error::InvalidConfig(format!(
            "unknown preset {number}; expected 1, 2 or 3"
        ))),
    }
}

fn preset_with(weights: Vec<f64>, number: u64) -> ScenarioConfig {
    let k = weights.len();
    let mut rng = substream(PRESET_SEED, 0, Stream::SimulateSetup, number);
    let theta_true = (0..k)
        .map(|_| {
            (0..PRESET_MARKERS)
                .flat_map(|_| {
                    let (p, rest) = dist::beta_pair(0.5, 0.5, &mut rng);
                    [rest, p]
                })
                .collect()
        })
        .collect();
    let spacing = PRESET_REGION_BP / (PRESET_MARKERS - 1) as f64;
    ScenarioConfig {
        n_individuals: PRESET_SEQUENCES,
        alleles: vec![2; PRESET_MARKERS],
        distances: vec![spacing; PRESET_MARKERS - 1],
        admixture_weights: weights,
        theta_true,
        r_true: PRESET_SPLIT_RATE,
        individual_alpha: None,
        seed: PRESET_SEED + number,
    }
}

/// Ground-truth CSV: `individual,locus,z_true,s_true` with zero-based indices.
pub fn write_truth(truth: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("individual,locus,z_true,s_true\n");
    for (i, (z, s)) in truth.z.iter().zip(&truth.s).enumerate() {
        for (l, (&k, &linked)) in z.iter().zip(s).enumerate() {
            out.push_str(&format!("{i},{l},{k},{}\n", linked as u8));
        }
    }
    fs::write(path.as_ref(), out).map_err(Error::file(path.as_ref()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pop(r: f64, n: usize, l: usize) -> ScenarioConfig {
        ScenarioConfig {
            n_individuals: n,
            alleles: vec![2; l],
            distances: vec![1.0; l - 1],
            admixture_weights: vec![0.6, 0.4],
            theta_true: vec![[0.9, 0.1].repeat(l), [0.2, 0.8].repeat(l)],
            r_true: r,
            individual_alpha: None,
            seed: 99,
        }
    }

    #[test]
    fn zero_rate_keeps_one_segment() {
        let (ds, t) = simulate(&two_pop(0.0, 50, 8)).unwrap();
        assert!(ds.validate().iter().all(|f| !f.is_error()));
        for (z, s) in t.z.iter().zip(&t.s) {
            assert!(z.iter().all(|&k| k == z[0]));
            assert!(!s[0] && s[1..].iter().all(|&v| v));
        }
    }

    #[test]
    fn infinite_rate_splits_everywhere() {
        let (_, t) = simulate(&two_pop(f64::INFINITY, 50, 8)).unwrap();
        assert!(t.s.iter().flatten().all(|&v| !v));
    }

    #[test]
    fn first_locus_label_frequency() {
        let (_, t) = simulate(&two_pop(1.0, 10_000, 1)).unwrap();
        let frac = t.z.iter().filter(|z| z[0] == 0).count() as f64 / 1e4;
        assert!((frac - 0.6).abs() < 3.0 * (0.24f64 / 1e4).sqrt(), "{frac}");
    }

    #[test]
    fn split_frequency_follows_rate() {
        let mut cfg = two_pop(0.7, 20_000, 3);
        cfg.distances = vec![0.5, 2.0];
        let (_, t) = simulate(&cfg).unwrap();
        for (l, &d) in cfg.distances.iter().enumerate() {
            let p = 1.0 - (-0.7 * d).exp();
            let f = t.s.iter().filter(|s| !s[l + 1]).count() as f64 / 20_000.0;
            assert!(
                (f - p).abs() < 4.0 * (p * (1.0 - p) / 2e4).sqrt(),
                "interval {l}: {f} vs {p}"
            );
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = simulate(&two_pop(0.3, 20, 10)).unwrap();
        let b = simulate(&two_pop(0.3, 20, 10)).unwrap();
        assert_eq!(a, b);
        let mut other = two_pop(0.3, 20, 10);
        other.seed = 100;
        assert_ne!(simulate(&other).unwrap().0, a.0);
    }

    #[test]
    fn presets_match_scenarios() {
        let p = scenario_presets();
        assert_eq!(p[0].k_true(), 1);
        assert_eq!(p[1].admixture_weights, vec![0.6, 0.4]);
        assert!((p[2].admixture_weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for cfg in &p {
            assert_eq!(cfg.n_individuals, 200);
            assert_eq!(cfg.n_loci(), 60);
            cfg.check().unwrap();
            let (ds, t) = simulate(cfg).unwrap();
            assert!(ds.validate().iter().all(|f| !f.is_error()));
            for (z, s) in t.z.iter().zip(&t.s) {
                crate::hmm::check_path(z, s).unwrap();
            }
        }
        assert!(preset(4).is_err());
    }

    #[test]
    fn individual_dirichlet_weights() {
        let mut cfg = two_pop(0.5, 30, 5);
        cfg.individual_alpha = Some(2.0);
        let (_, t) = simulate(&cfg).unwrap();
        assert!(t
            .weights
            .iter()
            .all(|w| (w.iter().sum::<f64>() - 1.0).abs() < 1e-12));
        assert!(t.weights.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = two_pop(0.5, 3, 4);
        cfg.admixture_weights = vec![0.6, 0.5];
        assert!(simulate(&cfg).is_err());
        let mut cfg = two_pop(0.5, 3, 4);
        cfg.r_true = -1.0;
        assert!(simulate(&cfg).is_err());
        let mut cfg = two_pop(0.5, 3, 4);
        cfg.theta_true[0][0] = 0.5;
        assert!(simulate(&cfg).is_err());
    }
}
