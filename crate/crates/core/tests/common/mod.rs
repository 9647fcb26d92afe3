//! Oracles shared by the integration suites. Everything here is written
//! independently of the library's samplers: it uses its own formulas and
//! only borrows the random-variate helpers.

#![allow(dead_code)]

use hdpstructure::data::Dataset;
use hdpstructure::dist;
use hdpstructure::hdp::BaseMeasure;
use hdpstructure::params::{BetaPrior, GammaPrior, MuPrior, Priors};
use hdpstructure::rng::ChainRng;
use hdpstructure::sampler::{ChainState, Sampler, SamplerConfig};
use hdpstructure::Executor;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Standard error of the mean of an autocorrelated series by batch means.
pub fn batch_means_se(v: &[f64], batches: usize) -> f64 {
    let size = v.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&v[b * size..(b + 1) * size]))
        .collect();
    (variance(&means) / batches as f64).sqrt()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Kolmogorov-Smirnov distance between a sample and a CDF tabulated on an
/// increasing grid (linear interpolation between grid points).
pub fn ks_against_grid(sample: &mut [f64], grid: &[f64], cdf: &[f64]) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let interp = |x: f64| -> f64 {
        if x <= grid[0] {
            return 0.0;
        }
        if x >= grid[grid.len() - 1] {
            return 1.0;
        }
        let j = grid.partition_point(|&g| g < x);
        let t = (x - grid[j - 1]) / (grid[j] - grid[j - 1]);
        cdf[j - 1] + t * (cdf[j] - cdf[j - 1])
    };
    let mut d: f64 = 0.0;
    for (k, &x) in sample.iter().enumerate() {
        let f = interp(x);
        d = d
            .max((f - k as f64 / n).abs())
            .max(((k + 1) as f64 / n - f).abs());
    }
    d
}

/// CDF of an unnormalized log density on `[lo, hi]` by the trapezoid rule.
pub fn quadrature_cdf(
    ln_density: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    points: usize,
) -> (Vec<f64>, Vec<f64>) {
    let grid: Vec<f64> = (0..points)
        .map(|j| lo + (hi - lo) * j as f64 / (points - 1) as f64)
        .collect();
    let ln: Vec<f64> = grid.iter().map(|&x| ln_density(x)).collect();
    let top = ln.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = ln.iter().map(|&v| (v - top).exp()).collect();
    let mut cdf = vec![0.0; points];
    for j in 1..points {
        cdf[j] = cdf[j - 1] + 0.5 * (dens[j] + dens[j - 1]) * (grid[j] - grid[j - 1]);
    }
    let total = cdf[points - 1];
    for c in cdf.iter_mut() {
        *c /= total;
    }
    (grid, cdf)
}

/// Unsigned Stirling numbers of the first kind `|s(n, m)|` for `n <= max`.
pub fn stirling_first(max: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; max + 1]; max + 1];
    s[0][0] = 1.0;
    for n in 1..=max {
        for m in 1..=n {
            s[n][m] = s[n - 1][m - 1] + (n - 1) as f64 * s[n - 1][m];
        }
    }
    s
}

/// Exact law of the number of occupied tables when `n` customers are seated
/// by a Chinese restaurant process with concentration `a`.
pub fn table_count_law(n: usize, a: f64) -> Vec<f64> {
    let s = stirling_first(n);
    (0..=n)
        .map(|m| {
            if m == 0 {
                return if n == 0 { 1.0 } else { 0.0 };
            }
            (s[n][m].ln() + m as f64 * a.ln() + ln_gamma(a) - ln_gamma(a + n as f64)).exp()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Joint-distribution test on a micro model.

pub const GEWEKE_N: usize = 3;
pub const GEWEKE_L: usize = 4;
pub const GEWEKE_STATS: [&str; 10] = [
    "alpha",
    "alpha0",
    "log_r",
    "mu_1",
    "k_used",
    "segments",
    "linked_frac",
    "mean_x",
    "theta_11",
    "z11_eq_z31",
];

pub fn geweke_priors() -> Priors {
    Priors {
        alpha: GammaPrior::new(2.0, 1.0),
        alpha0: GammaPrior::new(2.0, 1.0),
        log_r: (-2.0, 1.0),
        mu: MuPrior::Fixed(BetaPrior { a: 2.0, b: 2.0 }),
        c: 2.0,
    }
}

/// One draw of everything observable from the prior.
pub struct JointDraw {
    pub alpha: f64,
    pub alpha0: f64,
    pub r: f64,
    pub mu: Vec<f64>,
    pub z: Vec<Vec<usize>>,
    pub s: Vec<Vec<bool>>,
    pub theta: Vec<Vec<f64>>,
    pub x: Vec<u16>,
}

/// Forward simulation of the generative model, with the random measures
/// integrated out by seating segments in a Chinese restaurant franchise.
pub fn forward_draw(priors: &Priors, rng: &mut ChainRng) -> JointDraw {
    let (n, l_count) = (GEWEKE_N, GEWEKE_L);
    let alpha = dist::gamma(priors.alpha.shape, priors.alpha.rate, rng);
    let alpha0 = dist::gamma(priors.alpha0.shape, priors.alpha0.rate, rng);
    let r = rng.random_range(priors.log_r.0..priors.log_r.1).exp();
    let mu_prior = match priors.mu {
        MuPrior::Fixed(p) => p,
        MuPrior::Centered { .. } => unreachable!(),
    };
    let mu: Vec<f64> = (0..l_count)
        .map(|_| dist::beta(mu_prior.a, mu_prior.b, rng))
        .collect();
    let alleles = vec![2; l_count];
    let base = BaseMeasure {
        c: priors.c,
        mu: &mu,
        alleles: &alleles,
    };
    let link = (-r).exp(); // unit distances

    let mut dish_tables: Vec<f64> = Vec::new();
    let mut theta: Vec<Vec<f64>> = Vec::new();
    let mut z = vec![vec![0; l_count]; n];
    let mut s = vec![vec![false; l_count]; n];
    for i in 0..n {
        let mut tables: Vec<(usize, f64)> = Vec::new();
        for l in 0..l_count {
            if l > 0 && dist::bernoulli(link, rng) {
                s[i][l] = true;
                z[i][l] = z[i][l - 1];
                continue;
            }
            let mut w: Vec<f64> = tables.iter().map(|t| t.1).collect();
            w.push(alpha);
            let t = dist::categorical(&w, rng);
            if t < tables.len() {
                tables[t].1 += 1.0;
                z[i][l] = tables[t].0;
            } else {
                let mut dw = dish_tables.clone();
                dw.push(alpha0);
                let k = dist::categorical(&dw, rng);
                if k == dish_tables.len() {
                    dish_tables.push(0.0);
                    theta.push(base.draw(rng));
                }
                dish_tables[k] += 1.0;
                tables.push((k, 1.0));
                z[i][l] = k;
            }
        }
    }
    let mut x = Vec::with_capacity(n * l_count);
    for zi in &z {
        for (l, &k) in zi.iter().enumerate() {
            x.push(dist::bernoulli(theta[k][2 * l + 1], rng) as u16);
        }
    }
    JointDraw {
        alpha,
        alpha0,
        r,
        mu,
        z,
        s,
        theta,
        x,
    }
}

fn path_stats(z: &[Vec<usize>], s: &[Vec<bool>], x: &[u16], theta_11: f64) -> [f64; 6] {
    let mut used: Vec<usize> = z.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let linked = s.iter().flat_map(|row| &row[1..]).filter(|&&b| b).count();
    let links = s.len() * (s[0].len() - 1);
    let segments = s.iter().flatten().filter(|&&b| !b).count();
    [
        used.len() as f64,
        segments as f64,
        linked as f64 / links as f64,
        x.iter().map(|&v| v as f64).sum::<f64>() / x.len() as f64,
        theta_11,
        if z[0][0] == z[2][0] { 1.0 } else { 0.0 },
    ]
}

pub fn forward_stats(d: &JointDraw) -> [f64; 10] {
    let p = path_stats(&d.z, &d.s, &d.x, d.theta[d.z[0][0]][1]);
    [
        d.alpha,
        d.alpha0,
        d.r.ln(),
        d.mu[0],
        p[0],
        p[1],
        p[2],
        p[3],
        p[4],
        p[5],
    ]
}

pub fn chain_stats(c: &ChainState, x: &[u16]) -> [f64; 10] {
    let p = path_stats(
        &c.paths.z,
        &c.paths.s,
        x,
        c.hdp.atoms[c.paths.z[0][0]].theta[1],
    );
    [
        c.hyper.alpha,
        c.hyper.alpha0,
        c.hyper.r.ln(),
        c.hyper.mu[0],
        p[0],
        p[1],
        p[2],
        p[3],
        p[4],
        p[5],
    ]
}

pub fn micro_dataset(x: Vec<u16>) -> Dataset {
    Dataset::new(GEWEKE_N, vec![2; GEWEKE_L], x, vec![1.0; GEWEKE_L - 1]).unwrap()
}

pub struct GewekeOutcome {
    pub z_scores: [f64; 10],
    pub forward_means: [f64; 10],
    pub chain_means: [f64; 10],
}

/// Marginal-conditional draws against a successive-conditional chain that
/// alternates a full sweep with re-simulation of the data.
pub fn geweke(samples: usize, seed: u64) -> GewekeOutcome {
    use hdpstructure::rng::{substream, Stream};
    let priors = geweke_priors();
    let mut rng = substream(seed, 0, Stream::Simulate, 999);
    let forward: Vec<[f64; 10]> = (0..samples)
        .map(|_| forward_stats(&forward_draw(&priors, &mut rng)))
        .collect();

    let config = SamplerConfig {
        priors: priors.clone(),
        seed,
        k_init: 1,
        ..Default::default()
    };
    let start = forward_draw(&priors, &mut rng);
    let mut x = start.x.clone();
    let data = micro_dataset(x.clone());
    let mut chain = Sampler::new(&data, config.clone(), Executor::sequential())
        .unwrap()
        .initialize()
        .unwrap();
    let burn = samples / 20;
    let mut successive = Vec::with_capacity(samples);
    for t in 0..burn + samples {
        let data = micro_dataset(x.clone());
        let sampler = Sampler::new(&data, config.clone(), Executor::sequential()).unwrap();
        sampler.sweep(&mut chain, false).unwrap();
        for (i, z) in chain.paths.z.iter().enumerate() {
            for (l, &k) in z.iter().enumerate() {
                x[i * GEWEKE_L + l] =
                    dist::bernoulli(chain.hdp.atoms[k].theta[2 * l + 1], &mut rng) as u16;
            }
        }
        if t >= burn {
            successive.push(chain_stats(&chain, &x));
        }
    }

    let mut out = GewekeOutcome {
        z_scores: [0.0; 10],
        forward_means: [0.0; 10],
        chain_means: [0.0; 10],
    };
    for j in 0..10 {
        let f: Vec<f64> = forward.iter().map(|v| v[j]).collect();
        let c: Vec<f64> = successive.iter().map(|v| v[j]).collect();
        let se_f = (variance(&f) / f.len() as f64).sqrt();
        let se_c = batch_means_se(&c, 100);
        out.forward_means[j] = mean(&f);
        out.chain_means[j] = mean(&c);
        out.z_scores[j] = (mean(&f) - mean(&c)) / (se_f * se_f + se_c * se_c).sqrt();
    }
    out
}
