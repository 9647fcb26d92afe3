//! Linkage hidden Markov model over one haploid sequence.
//!
//! Ancestry labels `z` run along the loci; `s[l] = true` means locus `l` is in
//! the same segment as locus `l - 1` (so `s[0]` is always `false`). A new
//! segment draws its population from the individual's weights, which makes
//! the forward pass linear in both the number of loci and the number of
//! populations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};

/// Ancestry labels and linkage indicators for every sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentPaths {
    pub z: Vec<Vec<usize>>,
    pub s: Vec<Vec<bool>>,
}

impl LatentPaths {
    pub fn n_individuals(&self) -> usize {
        self.z.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.z.len() != self.s.len() {
            return Err(Error::InvalidPaths(
                "z and s have different row counts".into(),
            ));
        }
        for (i, (z, s)) in self.z.iter().zip(&self.s).enumerate() {
            check_path(z, s).map_err(|m| Error::InvalidPaths(format!("individual {i}: {m}")))?;
        }
        Ok(())
    }

    /// Number of segments per individual.
    pub fn segment_counts(&self) -> Vec<usize> {
        self.s
            .iter()
            .map(|s| s.iter().filter(|&&linked| !linked).count())
            .collect()
    }
}

pub(crate) fn check_path(z: &[usize], s: &[bool]) -> std::result::Result<(), String> {
    if z.len() != s.len() {
        return Err("z and s lengths differ".into());
    }
    if s.first() == Some(&true) {
        return Err("first locus must start a segment".into());
    }
    for l in 1..z.len() {
        if s[l] && z[l] != z[l - 1] {
            return Err(format!(
                "locus {l} is linked to its predecessor but has a different label"
            ));
        }
    }
    Ok(())
}

/// Probability that loci `d` apart stay in one segment at split rate `r`.
pub fn transition_prob(r: f64, d: f64) -> f64 {
    if d == 0.0 || r == 0.0 {
        1.0
    } else {
        (-r * d).exp()
    }
}

pub fn link_probs(r: f64, distances: &[f64]) -> Vec<f64> {
    distances.iter().map(|&d| transition_prob(r, d)).collect()
}

/// Scaled forward messages. At every locus the messages are divided by the
/// joint probability of the data so far, whose logarithm is kept in
/// `log_scale`.
#[derive(Debug, Clone, Default)]
pub struct ForwardMessages {
    k: usize,
    /// `M_{0k}`: segment starts at this locus.
    split: Vec<f64>,
    /// `M_{1k}`: segment continues from the previous locus.
    linked: Vec<f64>,
    /// `M_{.k} = M_{0k} + M_{1k}`.
    dot: Vec<f64>,
    log_scale: Vec<f64>,
}

impl ForwardMessages {
    pub fn n_states(&self) -> usize {
        self.k
    }

    pub fn n_loci(&self) -> usize {
        self.log_scale.len()
    }

    pub fn split(&self, l: usize) -> &[f64] {
        &self.split[l * self.k..(l + 1) * self.k]
    }

    pub fn linked(&self, l: usize) -> &[f64] {
        &self.linked[l * self.k..(l + 1) * self.k]
    }

    pub fn dot(&self, l: usize) -> &[f64] {
        &self.dot[l * self.k..(l + 1) * self.k]
    }

    pub fn log_scale(&self) -> &[f64] {
        &self.log_scale
    }

    /// log P(x_1..x_L) under the proposal restricted to the active states.
    pub fn log_marginal(&self) -> f64 {
        self.log_scale.iter().sum()
    }
}

/// Forward pass. `obs[l]` indexes the flattened allele profile of each state,
/// `weights` are the (unnormalized) per-state segment probabilities and
/// `link[l]` the probability that locus `l + 1` stays linked to locus `l`.
pub fn forward_filter(
    obs: &[usize],
    weights: &[f64],
    profiles: &[&[f64]],
    link: &[f64],
) -> Result<ForwardMessages> {
    let mut msgs = ForwardMessages::default();
    forward_filter_into(&mut msgs, obs, weights, profiles, link)?;
    Ok(msgs)
}

/// [`forward_filter`] writing into existing messages, reusing their buffers.
pub fn forward_filter_into(
    msgs: &mut ForwardMessages,
    obs: &[usize],
    weights: &[f64],
    profiles: &[&[f64]],
    link: &[f64],
) -> Result<()> {
    let k = weights.len();
    let n_loci = obs.len();
    assert_eq!(profiles.len(), k, "one profile per state");
    assert_eq!(
        link.len() + 1,
        n_loci.max(1),
        "one link probability per adjacent pair"
    );
    msgs.k = k;
    for buf in [&mut msgs.split, &mut msgs.linked, &mut msgs.dot] {
        buf.clear();
        buf.resize(n_loci * k, 0.0);
    }
    msgs.log_scale.clear();
    msgs.log_scale.resize(n_loci, 0.0);
    if k == 0 {
        return Err(Error::FilterDegenerate { locus: 0 });
    }
    for l in 0..n_loci {
        let x = obs[l];
        let row = l * k..(l + 1) * k;
        let mut total = 0.0;
        if l == 0 {
            for j in 0..k {
                let m = profiles[j][x] * weights[j];
                msgs.split[j] = m;
                msgs.dot[j] = m;
                total += m;
            }
        } else {
            let stay = link[l - 1];
            let leave = 1.0 - stay;
            // previous total is 1 after scaling
            let (prev, cur) = msgs.dot.split_at_mut(l * k);
            let prev = &prev[(l - 1) * k..];
            let cur = &mut cur[..k];
            let split = &mut msgs.split[row.clone()];
            let linked = &mut msgs.linked[row.clone()];
            for j in 0..k {
                let e = profiles[j][x];
                let m1 = e * stay * prev[j];
                let m0 = e * leave * weights[j];
                linked[j] = m1;
                split[j] = m0;
                cur[j] = m0 + m1;
                total += m0 + m1;
            }
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::FilterDegenerate { locus: l });
        }
        let inv = 1.0 / total;
        for v in &mut msgs.split[row.clone()] {
            *v *= inv;
        }
        for v in &mut msgs.linked[row.clone()] {
            *v *= inv;
        }
        for v in &mut msgs.dot[row] {
            *v *= inv;
        }
        msgs.log_scale[l] = total.ln();
    }
    Ok(())
}

/// Draws `(z, s)` exactly from the proposal defined by the forward messages.
/// Labels are indices into the states passed to [`forward_filter`].
pub fn backward_sample<R: Rng + ?Sized>(
    msgs: &ForwardMessages,
    rng: &mut R,
) -> (Vec<usize>, Vec<bool>) {
    let n_loci = msgs.n_loci();
    let mut z = vec![0usize; n_loci];
    let mut s = vec![false; n_loci];
    if n_loci == 0 {
        return (z, s);
    }
    let last = n_loci - 1;
    z[last] = dist::categorical(msgs.dot(last), rng);
    for l in (0..n_loci).rev() {
        if l < last {
            z[l] = if s[l + 1] {
                z[l + 1]
            } else {
                dist::categorical(msgs.dot(l), rng)
            };
        }
        if l > 0 {
            let j = z[l];
            let m1 = msgs.linked(l)[j];
            let m0 = msgs.split(l)[j];
            s[l] = dist::bernoulli(m1 / (m0 + m1), rng);
        }
    }
    (z, s)
}

/// Metropolis-Hastings correction for conditioning on the slice variable.
pub fn mh_accept<R: Rng + ?Sized>(q_min_current: f64, q_min_proposed: f64, rng: &mut R) -> bool {
    if q_min_proposed <= q_min_current {
        return true;
    }
    rng.random::<f64>() < q_min_current / q_min_proposed
}

/// Smallest weight among the populations a path visits.
pub fn q_min(weights: &[f64], z: &[usize]) -> f64 {
    z.iter().map(|&k| weights[k]).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathUpdate {
    pub z: Vec<usize>,
    pub s: Vec<bool>,
    pub accepted: bool,
}

/// One slice-restricted FFBS proposal plus MH correction for one sequence.
///
/// `weights` and `profiles` cover every instantiated population; only those
/// with weight strictly above `slice` take part in the proposal. Labels in
/// `current_z` and in the result index the full population list.
pub fn update_path<R: Rng + ?Sized>(
    obs: &[usize],
    weights: &[f64],
    profiles: &[&[f64]],
    link: &[f64],
    slice: f64,
    current_z: &[usize],
    current_s: &[bool],
    rng: &mut R,
) -> Result<PathUpdate> {
    let active: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] > slice).collect();
    if active.is_empty() {
        return Err(Error::EmptyActiveSet(0));
    }
    let active_w: Vec<f64> = active.iter().map(|&k| weights[k]).collect();
    let active_p: Vec<&[f64]> = active.iter().map(|&k| profiles[k]).collect();
    let msgs = forward_filter(obs, &active_w, &active_p, link)?;
    let (zs, s) = backward_sample(&msgs, rng);
    let z: Vec<usize> = zs.into_iter().map(|j| active[j]).collect();
    let cur = q_min(weights, current_z);
    let prop = q_min(weights, &z);
    if mh_accept(cur, prop, rng) {
        Ok(PathUpdate {
            z,
            s,
            accepted: true,
        })
    } else {
        Ok(PathUpdate {
            z: current_z.to_vec(),
            s: current_s.to_vec(),
            accepted: false,
        })
    }
}

/// One configuration of a sequence's latent path with its joint probability
/// `P(z, s, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEntry {
    pub z: Vec<usize>,
    pub s: Vec<bool>,
    pub prob: f64,
}

pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Exhaustive table of `P(z, s, x)` over every path, built directly from the
/// generative factors. Only for tiny instances; used to check the forward
/// filter and the backward sampler.
pub fn brute_force_joint(
    obs: &[usize],
    weights: &[f64],
    profiles: &[&[f64]],
    link: &[f64],
) -> Result<Vec<JointEntry>> {
    let k = weights.len();
    let n_loci = obs.len();
    let size = (k as u128)
        .saturating_pow(n_loci as u32)
        .saturating_mul(1u128 << n_loci.saturating_sub(1).min(100));
    if size > ENUMERATION_LIMIT {
        return Err(Error::InstanceTooLarge(size));
    }
    let mut out = Vec::new();
    let mut z = vec![0usize; n_loci];
    let n_s = 1usize << n_loci.saturating_sub(1);
    loop {
        for mask in 0..n_s {
            let s: Vec<bool> = (0..n_loci)
                .map(|l| l > 0 && (mask >> (l - 1)) & 1 == 1)
                .collect();
            if (1..n_loci).any(|l| s[l] && z[l] != z[l - 1]) {
                continue;
            }
            let mut p = 1.0;
            for l in 0..n_loci {
                let emit = profiles[z[l]][obs[l]];
                let trans = if l == 0 {
                    weights[z[0]]
                } else if s[l] {
                    link[l - 1]
                } else {
                    (1.0 - link[l - 1]) * weights[z[l]]
                };
                p *= trans * emit;
            }
            out.push(JointEntry {
                z: z.clone(),
                s,
                prob: p,
            });
        }
        // odometer over z
        let mut pos = 0;
        loop {
            if pos == n_loci {
                return Ok(out);
            }
            z[pos] += 1;
            if z[pos] < k {
                break;
            }
            z[pos] = 0;
            pos += 1;
        }
    }
}
