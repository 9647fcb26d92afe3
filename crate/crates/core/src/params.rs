//! Conditional updates for allele frequencies and scalar hyperparameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};

/// Gamma prior in (shape, rate) form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Self {
        GammaPrior { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - statrs::function::gamma::ln_gamma(self.shape)
            + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

/// Prior for the base-measure means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MuPrior {
    /// The same `Beta(a, b)` at every locus.
    Fixed(BetaPrior),
    /// `Beta(k p_l, k (1 - p_l))` centred on the observed frequency `p_l` of
    /// allele 1 (clamped away from 0 and 1).
    Centered { strength: f64 },
}

impl MuPrior {
    pub fn resolve(&self, observed: &[f64]) -> Vec<BetaPrior> {
        match *self {
            MuPrior::Fixed(p) => vec![p; observed.len()],
            MuPrior::Centered { strength } => observed
                .iter()
                .map(|&f| {
                    let f = f.clamp(0.01, 0.99);
                    BetaPrior {
                        a: strength * f,
                        b: strength * (1.0 - f),
                    }
                })
                .collect(),
        }
    }
}

/// Fixed prior constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub alpha: GammaPrior,
    pub alpha0: GammaPrior,
    /// Bounds of the uniform prior on `ln r`.
    pub log_r: (f64, f64),
    pub mu: MuPrior,
    /// Base-measure concentration (not sampled).
    pub c: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            alpha: GammaPrior::new(1.0, 1.0),
            alpha0: GammaPrior::new(5.0, 1.0),
            log_r: (-500.0, 5.0),
            mu: MuPrior::Fixed(BetaPrior { a: 1.0, b: 1.0 }),
            c: 1.0,
        }
    }
}

impl Priors {
    /// Settings used for the phased SNP application: `alpha0 ~ Gamma(1, 1)`,
    /// `alpha ~ Gamma(10, 20)`, `ln r ~ U[-500, 5]`, `c = 0.01` and base means
    /// centred on observed frequencies.
    pub fn application() -> Self {
        Priors {
            alpha: GammaPrior::new(10.0, 20.0),
            alpha0: GammaPrior::new(1.0, 1.0),
            log_r: (-500.0, 5.0),
            mu: MuPrior::Centered { strength: 2.0 },
            c: 0.01,
        }
    }

    pub fn check(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.alpha.shape)
            && pos(self.alpha.rate)
            && pos(self.alpha0.shape)
            && pos(self.alpha0.rate))
        {
            return Err(Error::InvalidConfig(
                "gamma prior parameters must be positive".into(),
            ));
        }
        if !(self.log_r.0 < self.log_r.1) {
            return Err(Error::InvalidConfig(
                "log r bounds must satisfy lower < upper".into(),
            ));
        }
        if !pos(self.c) {
            return Err(Error::InvalidConfig(
                "base-measure concentration must be positive".into(),
            ));
        }
        match self.mu {
            MuPrior::Fixed(p) if !(pos(p.a) && pos(p.b)) => Err(Error::InvalidConfig(
                "mu prior parameters must be positive".into(),
            )),
            MuPrior::Centered { strength } if !pos(strength) => Err(Error::InvalidConfig(
                "mu prior strength must be positive".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Current values of the model's scalar parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub alpha0: f64,
    pub r: f64,
    pub c: f64,
    pub mu: Vec<f64>,
}

impl Hyperparams {
    pub fn check(&self, priors: &Priors) -> Result<()> {
        let lr = self.r.ln();
        let ok = self.alpha > 0.0
            && self.alpha0 > 0.0
            && self.c > 0.0
            && lr > priors.log_r.0
            && lr < priors.log_r.1
            && self.mu.iter().all(|&m| m > 0.0 && m < 1.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "hyperparameters out of support: {self:?}"
            )))
        }
    }
}

/// Random-walk proposal scale, adapted toward a target acceptance window
/// while adaptation is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwTuner {
    pub scale: f64,
    window_accepted: u32,
    window_proposed: u32,
}

const ADAPT_WINDOW: u32 = 50;

impl RwTuner {
    pub fn new(scale: f64) -> Self {
        RwTuner {
            scale,
            window_accepted: 0,
            window_proposed: 0,
        }
    }

    pub fn record(&mut self, accepted: bool, adapt: bool) {
        if !adapt {
            return;
        }
        self.window_proposed += 1;
        self.window_accepted += accepted as u32;
        if self.window_proposed >= ADAPT_WINDOW {
            let rate = self.window_accepted as f64 / self.window_proposed as f64;
            if !(0.3..=0.4).contains(&rate) {
                self.scale *= (rate - 0.35).exp();
            }
            self.scale = self.scale.clamp(1e-4, 1e3);
            self.window_accepted = 0;
            self.window_proposed = 0;
        }
    }
}

/// Conjugate Dirichlet draw of one locus profile given allele counts among
/// the loci assigned to the population.
pub fn update_theta<R: Rng + ?Sized>(prior: &[f64], counts: &[u32], rng: &mut R) -> Vec<f64> {
    let params: Vec<f64> = prior
        .iter()
        .zip(counts)
        .map(|(&p, &c)| p + c as f64)
        .collect();
    dist::dirichlet(&params, rng)
}

fn ln_beta_variate<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let la = dist::ln_gamma_variate(a, rng);
    let lb = dist::ln_gamma_variate(b, rng);
    let m = la.max(lb);
    la - (m + ((la - m).exp() + (lb - m).exp()).ln())
}

/// Auxiliary-variable Gibbs update of the sequence-level concentration given
/// segments per sequence and the total number of tables.
pub fn update_alpha<R: Rng + ?Sized>(
    segments: &[u32],
    m_total: u64,
    prior: GammaPrior,
    alpha: f64,
    rng: &mut R,
) -> f64 {
    let mut sum_ln_w = 0.0;
    let mut sum_t = 0u64;
    for &n in segments {
        if n == 0 {
            continue;
        }
        let n = n as f64;
        sum_ln_w += ln_beta_variate(alpha + 1.0, n, rng);
        if dist::bernoulli(n / (alpha + n), rng) {
            sum_t += 1;
        }
    }
    let shape = prior.shape + m_total as f64 - sum_t as f64;
    let rate = prior.rate - sum_ln_w;
    dist::gamma(shape, rate, rng)
}

/// Auxiliary-variable update of the global concentration given the number of
/// populations and the total number of tables.
pub fn update_alpha0<R: Rng + ?Sized>(
    k: usize,
    m_total: u64,
    prior: GammaPrior,
    alpha0: f64,
    rng: &mut R,
) -> f64 {
    let m = m_total as f64;
    let ln_gamma_aux = ln_beta_variate(alpha0 + 1.0, m, rng);
    let rate = prior.rate - ln_gamma_aux;
    let k = k as f64;
    let odds = (prior.shape + k - 1.0) / (m * rate);
    let pi = odds / (1.0 + odds);
    let shape = if dist::bernoulli(pi, rng) {
        prior.shape + k
    } else {
        prior.shape + k - 1.0
    };
    dist::gamma(shape, rate, rng)
}

/// Linked/split tallies for one inter-locus interval, pooled over sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkTally {
    pub linked: u64,
    pub split: u64,
}

pub fn link_tallies(s: &[Vec<bool>], n_loci: usize) -> Vec<LinkTally> {
    let mut t = vec![LinkTally::default(); n_loci.saturating_sub(1)];
    for row in s {
        for l in 1..n_loci {
            if row[l] {
                t[l - 1].linked += 1;
            } else {
                t[l - 1].split += 1;
            }
        }
    }
    t
}

/// log p(s | r) up to a constant.
pub fn ln_r_likelihood(r: f64, tallies: &[LinkTally], distances: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (t, &d) in tallies.iter().zip(distances) {
        let x = r * d;
        if t.linked > 0 {
            acc -= t.linked as f64 * x;
        }
        if t.split > 0 {
            acc += t.split as f64 * dist::ln_one_minus_exp_neg(x);
        }
    }
    acc
}

/// Random-walk Metropolis step on `ln r` under a uniform prior on `ln r`.
pub fn update_r<R: Rng + ?Sized>(
    r: f64,
    tallies: &[LinkTally],
    distances: &[f64],
    bounds: (f64, f64),
    scale: f64,
    rng: &mut R,
) -> (f64, bool) {
    let lr = r.ln();
    let proposal = lr + scale * normal(rng);
    if !(proposal > bounds.0 && proposal < bounds.1) {
        return (r, false);
    }
    let r_new = proposal.exp();
    let log_ratio =
        ln_r_likelihood(r_new, tallies, distances) - ln_r_likelihood(r, tallies, distances);
    if log_ratio >= 0.0 || dist::open_unit(rng).ln() < log_ratio {
        (r_new, true)
    } else {
        (r, false)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}

/// log target for `mu_l` given the allele-frequency profiles of every
/// instantiated population at locus `l`.
pub fn ln_mu_target(mu: f64, locus_profiles: &[&[f64]], c: f64, prior: BetaPrior) -> f64 {
    if !(mu > 0.0 && mu < 1.0) {
        return f64::NEG_INFINITY;
    }
    let mut acc = dist::ln_beta_pdf(mu, prior.a, prior.b);
    for theta in locus_profiles {
        let a = theta.len();
        let rest = c * (1.0 - mu) / (a - 1) as f64;
        let mut params = vec![rest; a];
        params[1] = c * mu;
        acc += dist::ln_dirichlet_pdf(theta, &params);
    }
    acc
}

/// Random-walk Metropolis step on `logit(mu_l)`.
pub fn update_mu<R: Rng + ?Sized>(
    mu: f64,
    locus_profiles: &[&[f64]],
    c: f64,
    prior: BetaPrior,
    scale: f64,
    rng: &mut R,
) -> (f64, bool) {
    let u = (mu / (1.0 - mu)).ln();
    let u_new = u + scale * normal(rng);
    let mu_new = 1.0 / (1.0 + (-u_new).exp());
    if !(mu_new > 0.0 && mu_new < 1.0) {
        return (mu, false);
    }
    // Jacobian of the logit transform: dmu/du = mu (1 - mu)
    let log_ratio = ln_mu_target(mu_new, locus_profiles, c, prior) + (mu_new * (1.0 - mu_new)).ln()
        - ln_mu_target(mu, locus_profiles, c, prior)
        - (mu * (1.0 - mu)).ln();
    if log_ratio >= 0.0 || dist::open_unit(rng).ln() < log_ratio {
        (mu_new, true)
    } else {
        (mu, false)
    }
}
