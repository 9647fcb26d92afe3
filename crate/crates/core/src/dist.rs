//! Sampling and density helpers that stay accurate for very small shape
//! parameters.
//!
//! Stick-breaking and Dirichlet draws in the sampler routinely see shapes like
//! `alpha * q0_k` far below one, where naive Gamma ratios underflow to zero or
//! produce NaN. Gamma variates are therefore handled on the log scale.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

/// Uniform draw on the half-open interval (0, 1].
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Logarithm of a Gamma(shape, 1) variate.
pub fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0, "gamma shape must be positive, got {shape}");
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.ln()
    } else {
        // G(a) = G(a + 1) * U^(1/a)
        let g: f64 = Gamma::new(shape + 1.0, 1.0)
            .expect("positive shape")
            .sample(rng);
        g.ln() + open_unit(rng).ln() / shape
    }
}

/// Gamma variate with shape/rate parameterization.
pub fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    ln_gamma_variate(shape, rng).exp() / rate
}

/// Beta(a, b) variate returned together with its complement, each computed
/// without cancellation.
pub fn beta_pair<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> (f64, f64) {
    let la = ln_gamma_variate(a, rng);
    let lb = ln_gamma_variate(b, rng);
    logistic_pair(la - lb)
}

pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    beta_pair(a, b, rng).0
}

fn logistic_pair(t: f64) -> (f64, f64) {
    if t.is_nan() {
        return (0.5, 0.5);
    }
    if t >= 0.0 {
        let e = (-t).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = t.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

/// Dirichlet variate. Coordinates sum to one up to rounding.
pub fn dirichlet<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = params.iter().map(|&a| ln_gamma_variate(a, rng)).collect();
    normalize_logs(&logs, params)
}

fn normalize_logs(logs: &[f64], params: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        // every coordinate underflowed; all mass goes to the largest shape
        let best = params
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut out = vec![0.0; params.len()];
        out[best] = 1.0;
        return out;
    }
    let mut out: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Categorical draw from unnormalized non-negative weights.
pub fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    // rounding fell past the end: last positive weight
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

pub fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

pub fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta_fn(a, b)
}

pub fn ln_dirichlet_pdf(x: &[f64], params: &[f64]) -> f64 {
    let mut acc = ln_gamma(params.iter().sum());
    for (&xi, &a) in x.iter().zip(params) {
        if xi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += (a - 1.0) * xi.ln() - ln_gamma(a);
    }
    acc
}

/// ln(1 - e^{-x}) for x >= 0.
pub fn ln_one_minus_exp_neg(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else if x < std::f64::consts::LN_2 {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}
