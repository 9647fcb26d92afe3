//! Instantiated part of the hierarchical Dirichlet process.
//!
//! The global measure keeps explicit weights `q0` for instantiated atoms and a
//! leftover mass `w0`; each sequence keeps its own weights `q[i]` over the same
//! atoms and leftover `w[i]`. Atoms below every slice are never materialized.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::hmm::{self, LatentPaths};

/// A population: stable identifier plus a flattened allele-frequency profile
/// (loci laid out by [`crate::data::Dataset::allele_offsets`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub id: u64,
    pub theta: Vec<f64>,
}

/// Base measure over allele-frequency profiles: independent Dirichlet per
/// locus with concentration `c`, probability `mu[l]` on allele 1 and the rest
/// spread evenly over the other codes. For two alleles this is
/// `theta_l1 ~ Beta(c mu_l, c (1 - mu_l))`.
#[derive(Debug, Clone, Copy)]
pub struct BaseMeasure<'a> {
    pub c: f64,
    pub mu: &'a [f64],
    pub alleles: &'a [usize],
}

impl BaseMeasure<'_> {
    pub fn locus_params(&self, l: usize) -> Vec<f64> {
        let a = self.alleles[l];
        let rest = self.c * (1.0 - self.mu[l]) / (a - 1) as f64;
        let mut p = vec![rest; a];
        p[1] = self.c * self.mu[l];
        p
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.alleles.iter().sum());
        for l in 0..self.alleles.len() {
            theta.extend(dist::dirichlet(&self.locus_params(l), rng));
        }
        theta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdpState {
    pub atoms: Vec<Atom>,
    pub q0: Vec<f64>,
    pub w0: f64,
    /// `q[i][k]`: weight of atom `k` for sequence `i`.
    pub q: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub slice: Vec<f64>,
    /// Atoms `[0, n_occupied)` were occupied at the last weight update; later
    /// ones were added by stick extension.
    pub n_occupied: usize,
    pub next_id: u64,
}

pub const NORMALIZATION_TOL: f64 = 1e-12;

impl HdpState {
    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn k_star(&self) -> usize {
        self.n_occupied
    }

    pub fn profiles(&self) -> Vec<&[f64]> {
        self.atoms.iter().map(|a| a.theta.as_slice()).collect()
    }

    pub fn push_atom(&mut self, theta: Vec<f64>) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        self.atoms.push(Atom { id, theta });
        self.atoms.len() - 1
    }

    /// Checks weight normalization, ranges and profile normalization.
    pub fn check_invariants(&self, allele_offsets: &[usize]) -> Result<()> {
        let k = self.atoms.len();
        let bad = |m: String| Err(Error::InvalidPaths(m));
        if self.q0.len() != k || self.q.iter().any(|row| row.len() != k) {
            return bad("weight vectors do not match the atom count".into());
        }
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let total0: f64 = self.q0.iter().sum::<f64>() + self.w0;
        if (total0 - 1.0).abs() > NORMALIZATION_TOL
            || !self.q0.iter().all(|&v| in_unit(v))
            || !in_unit(self.w0)
        {
            return bad(format!("global weights sum to {total0}"));
        }
        for (i, row) in self.q.iter().enumerate() {
            let t: f64 = row.iter().sum::<f64>() + self.w[i];
            if (t - 1.0).abs() > NORMALIZATION_TOL
                || !row.iter().all(|&v| in_unit(v))
                || !in_unit(self.w[i])
            {
                return bad(format!("weights of sequence {i} sum to {t}"));
            }
        }
        for atom in &self.atoms {
            for win in allele_offsets.windows(2) {
                let p = &atom.theta[win[0]..win[1]];
                let t: f64 = p.iter().sum();
                if (t - 1.0).abs() > NORMALIZATION_TOL
                    || p.iter().any(|&v| !(0.0..=1.0).contains(&v))
                {
                    return bad(format!("profile of atom {} sums to {t}", atom.id));
                }
            }
        }
        Ok(())
    }

    /// Checks `0 < C_i <= q_i^min` for every sequence.
    pub fn check_slices(&self, paths: &LatentPaths) -> Result<()> {
        for (i, z) in paths.z.iter().enumerate() {
            let qmin = hmm::q_min(&self.q[i], z);
            let c = self.slice[i];
            if !(c > 0.0 && c <= qmin) {
                return Err(Error::InvalidPaths(format!(
                    "slice {c} of sequence {i} outside (0, {qmin}]"
                )));
            }
        }
        Ok(())
    }
}

/// `n[i][k]`: number of segments of sequence `i` assigned to atom `k`.
pub fn count_segments(paths: &LatentPaths, n_atoms: usize) -> Result<Vec<Vec<u32>>> {
    let mut n = vec![vec![0u32; n_atoms]; paths.n_individuals()];
    for (i, (z, s)) in paths.z.iter().zip(&paths.s).enumerate() {
        if s.first() == Some(&true) {
            return Err(Error::InvalidPaths(format!(
                "sequence {i} does not start a segment at locus 1"
            )));
        }
        for (&k, &linked) in z.iter().zip(s) {
            if k >= n_atoms {
                return Err(Error::InvalidPaths(format!(
                    "sequence {i} references atom {k} of {n_atoms}"
                )));
            }
            if !linked {
                n[i][k] += 1;
            }
        }
    }
    Ok(n)
}

/// Number of occupied tables when `n` customers enter a Chinese restaurant
/// with mass `alpha * q0k`.
pub fn sample_table_counts<R: Rng + ?Sized>(n: u32, alpha: f64, q0k: f64, rng: &mut R) -> u32 {
    let mass = alpha * q0k;
    let mut m = 0;
    for j in 0..n {
        // j == 0 always opens a table
        if j == 0 || dist::bernoulli(mass / (mass + j as f64), rng) {
            m += 1;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTables {
    pub n: Vec<Vec<u32>>,
    pub m: Vec<Vec<u32>>,
    pub n0: Vec<u32>,
}

impl CountTables {
    pub fn sample<R: Rng + ?Sized>(n: Vec<Vec<u32>>, alpha: f64, q0: &[f64], rng: &mut R) -> Self {
        let m: Vec<Vec<u32>> = n
            .iter()
            .map(|row| {
                row.iter()
                    .zip(q0)
                    .map(|(&c, &w)| sample_table_counts(c, alpha, w, rng))
                    .collect()
            })
            .collect();
        let mut n0 = vec![0u32; q0.len()];
        for row in &m {
            for (acc, &v) in n0.iter_mut().zip(row) {
                *acc += v;
            }
        }
        CountTables { n, m, n0 }
    }

    pub fn total_tables(&self) -> u64 {
        self.n0.iter().map(|&v| v as u64).sum()
    }

    /// Segments per sequence.
    pub fn segments(&self) -> Vec<u32> {
        self.n.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Drops atoms that no segment uses, returning their masses to the leftover
/// sticks and relabeling paths. Returns the retained column indices.
pub fn prune_unoccupied(
    state: &mut HdpState,
    paths: &mut LatentPaths,
    n: &mut Vec<Vec<u32>>,
) -> Vec<usize> {
    let k = state.atoms.len();
    let keep: Vec<usize> = (0..k).filter(|&j| n.iter().any(|row| row[j] > 0)).collect();
    if keep.len() == k {
        state.n_occupied = k;
        return keep;
    }
    let mut remap = vec![usize::MAX; k];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }
    for j in (0..k).filter(|&j| remap[j] == usize::MAX) {
        state.w0 += state.q0[j];
        for (row, w) in state.q.iter_mut().zip(state.w.iter_mut()) {
            *w += row[j];
        }
    }
    state.atoms = keep.iter().map(|&j| state.atoms[j].clone()).collect();
    state.q0 = keep.iter().map(|&j| state.q0[j]).collect();
    for row in state.q.iter_mut() {
        *row = keep.iter().map(|&j| row[j]).collect();
    }
    for row in n.iter_mut() {
        *row = keep.iter().map(|&j| row[j]).collect();
    }
    for z in paths.z.iter_mut() {
        for v in z.iter_mut() {
            *v = remap[*v];
        }
    }
    state.n_occupied = keep.len();
    keep
}

/// `(q0_1, ..., q0_K, w0) ~ Dirichlet(n0_1, ..., n0_K, alpha0)`.
pub fn resample_global_weights<R: Rng + ?Sized>(
    n0: &[u32],
    alpha0: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    if let Some(k) = n0.iter().position(|&c| c == 0) {
        return Err(Error::UnoccupiedPopulation(k));
    }
    let mut params: Vec<f64> = n0.iter().map(|&c| c as f64).collect();
    params.push(alpha0);
    let mut draw = dist::dirichlet(&params, rng);
    let w0 = draw.pop().expect("nonempty");
    Ok((draw, w0))
}

/// `(q_i1, ..., q_iK, w_i) ~ Dirichlet(alpha q0_1 + n_i1, ..., alpha q0_K + n_iK, alpha w0)`.
pub fn resample_individual_weights<R: Rng + ?Sized>(
    q0: &[f64],
    w0: f64,
    n_i: &[u32],
    alpha: f64,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let mut params: Vec<f64> = q0
        .iter()
        .zip(n_i)
        .map(|(&q, &c)| alpha * q + c as f64)
        .collect();
    params.push(alpha * w0);
    let mut draw = dist::dirichlet(&params, rng);
    let w = draw.pop().expect("nonempty");
    (draw, w)
}

/// `C_i ~ Uniform(0, q_i^min]`.
pub fn sample_slice<R: Rng + ?Sized>(q_i: &[f64], z_i: &[usize], rng: &mut R) -> Result<f64> {
    let qmin = hmm::q_min(q_i, z_i);
    if !(qmin > 0.0) {
        let l = z_i.iter().position(|&k| !(q_i[k] > 0.0)).unwrap_or(0);
        return Err(Error::ZeroMassAtom {
            individual: 0,
            atom: z_i.get(l).copied().unwrap_or(0),
        });
    }
    Ok(qmin * dist::open_unit(rng))
}

pub const EXTENSION_CAP: usize = 1_000_000;

/// Instantiates new atoms by stick-breaking until every sequence's leftover
/// mass is below its slice. New global sticks are `Beta(1, alpha0)` fractions
/// of `w0`; sequence `i` takes a `Beta(alpha q0_new, alpha w0_after)` fraction
/// of `w_i`. Returns the number of atoms added.
pub fn extend_sticks<R: Rng + ?Sized>(
    state: &mut HdpState,
    alpha: f64,
    alpha0: f64,
    base: &BaseMeasure<'_>,
    cap: usize,
    rng: &mut R,
) -> Result<usize> {
    let mut added = 0;
    let needs_more = |s: &HdpState| s.w.iter().zip(&s.slice).any(|(&w, &c)| w >= c);
    while needs_more(state) {
        if added >= cap {
            let min_slice = state.slice.iter().copied().fold(f64::INFINITY, f64::min);
            return Err(Error::ExtensionCap { cap, min_slice });
        }
        let (v0, rest0) = dist::beta_pair(1.0, alpha0, rng);
        let new_q0 = state.w0 * v0;
        let w0_after = state.w0 * rest0;
        for (row, w) in state.q.iter_mut().zip(state.w.iter_mut()) {
            let mass = if *w <= 0.0 {
                0.0
            } else if w0_after <= 0.0 {
                std::mem::take(w)
            } else if new_q0 <= 0.0 {
                0.0
            } else {
                let (v, rest) = dist::beta_pair(alpha * new_q0, alpha * w0_after, rng);
                let mass = *w * v;
                *w *= rest;
                mass
            };
            row.push(mass);
        }
        state.q0.push(new_q0);
        state.w0 = w0_after;
        let theta = base.draw(rng);
        state.push_atom(theta);
        added += 1;
    }
    Ok(added)
}
