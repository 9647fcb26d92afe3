//! Post-processing of a finished run: posterior of the number of
//! populations, a Binder-loss point partition, admixture proportions and
//! posterior mean allele frequencies.
//!
//! Clusters are identified across sweeps by the sampler's stable atom ids.
//! The Binder loss is label-invariant, so the point partition needs no
//! relabelling; admixture proportions and allele frequencies are reported per
//! cluster of that partition, with each atom id mapped to the partition
//! cluster its items fall in most often.
//!
//! With item granularity the similarity matrix has `(N L)^2` entries, so
//! losses are evaluated from contingency tables between the candidate and
//! each retained sample instead. The matrix is built only when the number of
//! items is at most [`MATRIX_LIMIT`]; only then are average-linkage cuts added
//! to the candidate set.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::sampler::{
    read_assignments, read_theta, read_trace, AssignmentSnapshot, SweepRecord, ThetaSnapshot,
};

pub const MATRIX_LIMIT: usize = 1_000;
pub const SUMMARY_FILE: &str = "summary.json";

/// What a clustered item is.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One item per (individual, locus).
    #[default]
    Item,
    /// One item per individual, labelled by its most frequent atom in the
    /// sweep (ties to the smaller id).
    Individual,
}

/// Point estimate of the partition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointEstimate {
    #[default]
    Binder,
    /// Retained sweep with the highest log-likelihood.
    Map,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KHistogram {
    pub counts: BTreeMap<usize, u64>,
    pub probabilities: BTreeMap<usize, f64>,
    /// Most frequent value; ties go to the smaller one.
    pub mode: usize,
}

impl KHistogram {
    fn from_values(values: impl Iterator<Item = usize>) -> Self {
        let mut counts = BTreeMap::new();
        for v in values {
            *counts.entry(v).or_insert(0u64) += 1;
        }
        let total: u64 = counts.values().sum();
        let probabilities = counts
            .iter()
            .map(|(&k, &c)| (k, c as f64 / total as f64))
            .collect();
        let mut mode = 0;
        let mut best = 0;
        for (&k, &c) in &counts {
            if c > best {
                best = c;
                mode = k;
            }
        }
        KHistogram {
            counts,
            probabilities,
            mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorK {
    pub samples: usize,
    pub k_star: KHistogram,
    pub k_cover_95: KHistogram,
    pub k_cover_99: KHistogram,
}

pub fn posterior_k(trace: &[SweepRecord]) -> Result<PosteriorK> {
    if trace.is_empty() {
        return Err(Error::Summary("trace has no records".into()));
    }
    Ok(PosteriorK {
        samples: trace.len(),
        k_star: KHistogram::from_values(trace.iter().map(|r| r.k_star)),
        k_cover_95: KHistogram::from_values(trace.iter().map(|r| r.k_cover_95)),
        k_cover_99: KHistogram::from_values(trace.iter().map(|r| r.k_cover_99)),
    })
}

/// Relabels by order of first appearance, so equal partitions compare equal.
pub fn canonical<T: Copy + Eq + std::hash::Hash>(labels: &[T]) -> Vec<usize> {
    let mut seen = HashMap::new();
    labels
        .iter()
        .map(|&x| {
            let next = seen.len();
            *seen.entry(x).or_insert(next)
        })
        .collect()
}

fn n_clusters(partition: &[usize]) -> usize {
    partition.iter().max().map_or(0, |&m| m + 1)
}

/// Item labels of one snapshot (atom ids).
pub fn item_labels(snapshot: &AssignmentSnapshot, granularity: Granularity) -> Vec<u64> {
    match granularity {
        Granularity::Item => snapshot.z.iter().flatten().copied().collect(),
        Granularity::Individual => snapshot
            .z
            .iter()
            .map(|row| {
                let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
                for &k in row {
                    *counts.entry(k).or_insert(0) += 1;
                }
                let mut best = (0, u64::MAX);
                for (&k, &c) in &counts {
                    if c > best.0 {
                        best = (c, k);
                    }
                }
                best.1
            })
            .collect(),
    }
}

/// Pairwise co-assignment frequencies, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSimilarity {
    n: usize,
    samples: usize,
    values: Vec<f64>,
}

impl PosteriorSimilarity {
    /// From an explicit matrix; it must be symmetric with unit diagonal and
    /// entries in [0, 1].
    pub fn from_matrix(rows: &[Vec<f64>], samples: usize) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for (u, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Summary("similarity matrix is not square".into()));
            }
            for (v, &x) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) || x != rows[v][u] || (u == v && x != 1.0) {
                    return Err(Error::Summary(format!(
                        "invalid similarity entry ({u}, {v}) = {x}"
                    )));
                }
            }
            values.extend_from_slice(row);
        }
        Ok(PosteriorSimilarity { n, samples, values })
    }

    pub fn n_items(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.n + v]
    }
}

fn check_samples<T>(samples: &[Vec<T>]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Summary("no snapshots".into()))?;
    if samples.iter().any(|s| s.len() != first.len()) {
        return Err(Error::Summary(
            "snapshots have different numbers of items".into(),
        ));
    }
    Ok(first.len())
}

pub fn coclustering(samples: &[Vec<u64>]) -> Result<PosteriorSimilarity> {
    let n = check_samples(samples)?;
    let mut hits = vec![0u64; n * n];
    for labels in samples {
        for u in 0..n {
            for v in u..n {
                if labels[u] == labels[v] {
                    hits[u * n + v] += 1;
                }
            }
        }
    }
    let t = samples.len() as f64;
    let mut values = vec![0.0; n * n];
    for u in 0..n {
        for v in u..n {
            let x = hits[u * n + v] as f64 / t;
            values[u * n + v] = x;
            values[v * n + u] = x;
        }
    }
    Ok(PosteriorSimilarity {
        n,
        samples: samples.len(),
        values,
    })
}

/// `sum_{u<v} |1(u ~ v) - S_uv|` from the matrix.
pub fn binder_loss(similarity: &PosteriorSimilarity, partition: &[usize]) -> f64 {
    let n = similarity.n;
    let mut acc = 0.0;
    for u in 0..n {
        for v in u + 1..n {
            let s = similarity.get(u, v);
            acc += if partition[u] == partition[v] {
                1.0 - s
            } else {
                s
            };
        }
    }
    acc
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Samples with labels densified to `0..k`, so contingency tables are flat
/// arrays.
#[derive(Debug, Clone)]
pub struct DenseSamples {
    labels: Vec<Vec<u32>>,
    sizes: Vec<usize>,
    /// `sum_t sum_b C(n_tb, 2)`.
    same_pairs: u64,
}

impl DenseSamples {
    pub fn new(samples: &[Vec<u64>]) -> Result<Self> {
        check_samples(samples)?;
        let mut labels = Vec::with_capacity(samples.len());
        let mut sizes = Vec::with_capacity(samples.len());
        let mut same_pairs = 0;
        for s in samples {
            let c = canonical(s);
            let k = n_clusters(&c);
            let mut counts = vec![0u64; k];
            for &x in &c {
                counts[x] += 1;
            }
            same_pairs += counts.iter().map(|&m| pairs(m)).sum::<u64>();
            labels.push(c.into_iter().map(|x| x as u32).collect());
            sizes.push(k);
        }
        Ok(DenseSamples {
            labels,
            sizes,
            same_pairs,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Binder loss times the number of samples, exactly.
    pub fn scaled_loss(&self, partition: &[usize]) -> u64 {
        let k = n_clusters(partition);
        let mut sizes = vec![0u64; k];
        for &a in partition {
            sizes[a] += 1;
        }
        let own: u64 = sizes.iter().map(|&m| pairs(m)).sum();
        let mut shared = 0u64;
        let mut table = Vec::new();
        for (labels, &kb) in self.labels.iter().zip(&self.sizes) {
            table.clear();
            table.resize(k * kb, 0u64);
            for (&a, &b) in partition.iter().zip(labels) {
                table[a * kb + b as usize] += 1;
            }
            shared += table.iter().map(|&m| pairs(m)).sum::<u64>();
        }
        self.same_pairs + own * self.labels.len() as u64 - 2 * shared
    }

    /// Binder loss from contingency tables.
    pub fn loss(&self, partition: &[usize]) -> f64 {
        self.scaled_loss(partition) as f64 / self.labels.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionChoice {
    /// Cluster label per item, numbered by first appearance.
    pub partition: Vec<usize>,
    pub loss: f64,
    pub n_clusters: usize,
    pub candidates: usize,
}

/// Picks the candidate with the smallest key, breaking ties by fewer
/// clusters and then lexicographically.
fn pick<K: Copy>(
    candidates: Vec<Vec<usize>>,
    keys: Vec<K>,
    less: impl Fn(K, K) -> bool,
) -> Result<(Vec<usize>, K, usize)> {
    let total = candidates.len();
    let mut best: Option<(Vec<usize>, K)> = None;
    for (c, key) in candidates.into_iter().zip(keys) {
        let better = match &best {
            None => true,
            Some((b, bk)) => {
                less(key, *bk) || (!less(*bk, key) && (n_clusters(&c), &c) < (n_clusters(b), b))
            }
        };
        if better {
            best = Some((c, key));
        }
    }
    let (p, k) = best.ok_or_else(|| Error::Summary("no candidate partitions".into()))?;
    Ok((p, k, total))
}

/// Float losses closer than this (relative) count as ties.
const LOSS_TOLERANCE: f64 = 1e-12;

fn clearly_less(a: f64, b: f64) -> bool {
    a < b - LOSS_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

fn dedupe(candidates: &[Vec<usize>], n: usize) -> Result<Vec<Vec<usize>>> {
    let mut out: Vec<Vec<usize>> = candidates.iter().map(|c| canonical(c)).collect();
    if out.iter().any(|c| c.len() != n) {
        return Err(Error::Summary(
            "candidate partition has the wrong number of items".into(),
        ));
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Binder minimiser over `candidates` using the similarity matrix.
pub fn binder_partition(
    similarity: &PosteriorSimilarity,
    candidates: &[Vec<usize>],
) -> Result<PartitionChoice> {
    let cands = dedupe(candidates, similarity.n)?;
    let keys: Vec<f64> = cands.iter().map(|c| binder_loss(similarity, c)).collect();
    let (partition, loss, candidates) = pick(cands, keys, clearly_less)?;
    Ok(PartitionChoice {
        n_clusters: n_clusters(&partition),
        partition,
        loss,
        candidates,
    })
}

/// Binder minimiser over `candidates` using contingency tables against the
/// samples; ties are resolved on exact integer losses.
pub fn binder_partition_sampled(
    samples: &DenseSamples,
    candidates: &[Vec<usize>],
    executor: &Executor,
) -> Result<PartitionChoice> {
    let n = samples.labels.first().map_or(0, |l| l.len());
    let cands = dedupe(candidates, n)?;
    let keys = executor.map(cands.len(), |j| samples.scaled_loss(&cands[j]));
    let (partition, scaled, candidates) = pick(cands, keys, |a, b| a < b)?;
    Ok(PartitionChoice {
        n_clusters: n_clusters(&partition),
        loss: scaled as f64 / samples.len() as f64,
        partition,
        candidates,
    })
}

/// Every cut of the average-linkage tree on distance `1 - S`, from one
/// cluster to singletons.
pub fn average_linkage_cuts(similarity: &PosteriorSimilarity) -> Vec<Vec<usize>> {
    let n = similarity.n;
    if n == 0 {
        return Vec::new();
    }
    let mut dist: Vec<f64> = similarity.values.iter().map(|s| 1.0 - s).collect();
    let mut size = vec![1usize; n];
    let mut alive = vec![true; n];
    // Union-find style membership: root of each item.
    let mut member: Vec<usize> = (0..n).collect();
    let mut cuts = vec![(0..n).collect::<Vec<_>>()];
    for _ in 1..n {
        let mut best = (f64::INFINITY, 0, 0);
        for a in (0..n).filter(|&a| alive[a]) {
            for b in (a + 1..n).filter(|&b| alive[b]) {
                if dist[a * n + b] < best.0 {
                    best = (dist[a * n + b], a, b);
                }
            }
        }
        let (_, a, b) = best;
        for c in (0..n).filter(|&c| alive[c] && c != a && c != b) {
            let d = (dist[a * n + c] * size[a] as f64 + dist[b * n + c] * size[b] as f64)
                / (size[a] + size[b]) as f64;
            dist[a * n + c] = d;
            dist[c * n + a] = d;
        }
        size[a] += size[b];
        alive[b] = false;
        for m in member.iter_mut() {
            if *m == b {
                *m = a;
            }
        }
        cuts.push(canonical(&member));
    }
    cuts
}

/// Cluster of the point partition each atom id's items fall in most often.
pub fn atom_mapping(labels: &[Vec<u64>], partition: &[usize]) -> BTreeMap<u64, usize> {
    let mut tally: BTreeMap<u64, BTreeMap<usize, u64>> = BTreeMap::new();
    for sample in labels {
        for (&atom, &cluster) in sample.iter().zip(partition) {
            *tally.entry(atom).or_default().entry(cluster).or_insert(0) += 1;
        }
    }
    tally
        .into_iter()
        .map(|(atom, counts)| {
            let mut best = (0, 0);
            for (&c, &m) in &counts {
                if m > best.0 {
                    best = (m, c);
                }
            }
            (atom, best.1)
        })
        .collect()
}

/// Item labels aligned with the point partition: per-locus atoms for item
/// granularity, per-individual labels otherwise.
fn mapping_labels(snapshots: &[AssignmentSnapshot], granularity: Granularity) -> Vec<Vec<u64>> {
    snapshots
        .iter()
        .map(|s| item_labels(s, granularity))
        .collect()
}

/// Entry `(i, k)`: fraction of `(sweep, locus)` assignments of individual `i`
/// whose atom maps to cluster `k`.
pub fn admixture_proportions(
    snapshots: &[AssignmentSnapshot],
    mapping: &BTreeMap<u64, usize>,
    n_clusters: usize,
) -> Result<Vec<Vec<f64>>> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::Summary("no snapshots".into()))?;
    let n = first.z.len();
    let mut counts = vec![vec![0u64; n_clusters]; n];
    for snap in snapshots {
        if snap.z.len() != n {
            return Err(Error::Summary(
                "snapshots have different numbers of individuals".into(),
            ));
        }
        for (i, row) in snap.z.iter().enumerate() {
            for k in row {
                let c = *mapping
                    .get(k)
                    .ok_or_else(|| Error::Summary(format!("atom {k} is not mapped")))?;
                counts[i][c] += 1;
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.into_iter().map(|c| c as f64 / total as f64).collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFrequencies {
    pub cluster: usize,
    /// Sweeps in which some atom mapped to this cluster was occupied.
    pub occupancy: usize,
    /// `[locus][allele]` posterior means; empty when never occupied.
    pub means: Vec<Vec<f64>>,
}

/// Per-cluster posterior mean profiles. Within a sweep, atoms mapped to the
/// same cluster are averaged with weights equal to their occupancy; sweeps
/// without the cluster are skipped.
pub fn allele_freq_posterior(
    snapshots: &[AssignmentSnapshot],
    thetas: &[ThetaSnapshot],
    mapping: &BTreeMap<u64, usize>,
    n_clusters: usize,
) -> Result<Vec<ClusterFrequencies>> {
    let by_sweep: HashMap<u64, &ThetaSnapshot> = thetas.iter().map(|t| (t.sweep, t)).collect();
    let mut sums: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_clusters];
    let mut occupancy = vec![0usize; n_clusters];
    for snap in snapshots {
        let theta = by_sweep.get(&snap.sweep).ok_or_else(|| {
            Error::Summary(format!("no profiles recorded for sweep {}", snap.sweep))
        })?;
        let mut sizes: BTreeMap<u64, u64> = BTreeMap::new();
        for &k in snap.z.iter().flatten() {
            *sizes.entry(k).or_insert(0) += 1;
        }
        let mut acc: Vec<Option<(Vec<Vec<f64>>, f64)>> = vec![None; n_clusters];
        for (&atom, &m) in &sizes {
            let c = *mapping
                .get(&atom)
                .ok_or_else(|| Error::Summary(format!("atom {atom} is not mapped")))?;
            let profile = theta.profiles.get(&atom).ok_or_else(|| {
                Error::Summary(format!(
                    "sweep {} has no profile for atom {atom}",
                    snap.sweep
                ))
            })?;
            let w = m as f64;
            let slot = acc[c]
                .get_or_insert_with(|| (profile.iter().map(|p| vec![0.0; p.len()]).collect(), 0.0));
            for (dst, src) in slot.0.iter_mut().zip(profile) {
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
            slot.1 += w;
        }
        for (c, slot) in acc.into_iter().enumerate() {
            if let Some((profile, w)) = slot {
                occupancy[c] += 1;
                if sums[c].is_empty() {
                    sums[c] = profile.iter().map(|p| vec![0.0; p.len()]).collect();
                }
                for (dst, src) in sums[c].iter_mut().zip(&profile) {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s / w;
                    }
                }
            }
        }
    }
    Ok((0..n_clusters)
        .map(|c| ClusterFrequencies {
            cluster: c,
            occupancy: occupancy[c],
            means: sums[c]
                .iter()
                .map(|row| row.iter().map(|v| v / occupancy[c] as f64).collect())
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryOptions {
    pub granularity: Granularity,
    pub estimate: PointEstimate,
    /// Visited partitions used as Binder candidates, spread evenly over the
    /// retained sweeps; 0 keeps all.
    pub max_visited: usize,
    pub workers: usize,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions {
            granularity: Granularity::Item,
            estimate: PointEstimate::Binder,
            max_visited: 500,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub posterior_k: PosteriorK,
    pub granularity: Granularity,
    pub estimate: PointEstimate,
    pub snapshots: usize,
    pub n_individuals: usize,
    pub n_loci: usize,
    pub point: PartitionChoice,
    pub atom_mapping: BTreeMap<u64, usize>,
    /// `[individual][cluster]`.
    pub admixture: Vec<Vec<f64>>,
    pub allele_frequencies: Vec<ClusterFrequencies>,
}

fn spread<T: Clone>(items: &[T], max: usize) -> Vec<T> {
    if max == 0 || items.len() <= max {
        return items.to_vec();
    }
    (0..max)
        .map(|j| items[j * items.len() / max].clone())
        .collect()
}

/// Summarises the run written to `dir`.
pub fn summarize(dir: &Path, options: &SummaryOptions) -> Result<Summary> {
    let trace = read_trace(dir)?;
    let posterior_k = posterior_k(&trace)?;
    let snapshots = read_assignments(dir)?;
    if snapshots.is_empty() {
        return Err(Error::Summary("run has no assignment snapshots".into()));
    }
    let thetas = read_theta(dir)?;
    let executor = Executor::new(options.workers)?;
    let labels = mapping_labels(&snapshots, options.granularity);
    let dense = DenseSamples::new(&labels)?;
    let n_items = labels[0].len();

    let point = match options.estimate {
        PointEstimate::Binder => {
            let mut candidates: Vec<Vec<usize>> = spread(&labels, options.max_visited)
                .iter()
                .map(|l| canonical(l))
                .collect();
            if n_items <= MATRIX_LIMIT {
                candidates.extend(average_linkage_cuts(&coclustering(&labels)?));
            }
            binder_partition_sampled(&dense, &candidates, &executor)?
        }
        PointEstimate::Map => {
            let loglik: HashMap<u64, f64> = trace.iter().map(|r| (r.sweep, r.loglik)).collect();
            let mut best: Option<(f64, usize)> = None;
            for (j, snap) in snapshots.iter().enumerate() {
                let ll = *loglik.get(&snap.sweep).ok_or_else(|| {
                    Error::Summary(format!("sweep {} missing from the trace", snap.sweep))
                })?;
                if best.is_none_or(|(b, _)| ll > b) {
                    best = Some((ll, j));
                }
            }
            let partition = canonical(&labels[best.expect("non-empty").1]);
            PartitionChoice {
                n_clusters: n_clusters(&partition),
                loss: dense.loss(&partition),
                partition,
                candidates: snapshots.len(),
            }
        }
    };
    // Per-locus labels carry the atom ids; with individual granularity each
    // locus inherits its individual's cluster.
    let n_loci = snapshots[0].z.first().map_or(0, |r| r.len());
    let (item_atoms, item_clusters): (Vec<Vec<u64>>, Vec<usize>) = match options.granularity {
        Granularity::Item => (labels.clone(), point.partition.clone()),
        Granularity::Individual => (
            mapping_labels(&snapshots, Granularity::Item),
            point
                .partition
                .iter()
                .flat_map(|&c| std::iter::repeat_n(c, n_loci))
                .collect(),
        ),
    };
    let atom_mapping = atom_mapping(&item_atoms, &item_clusters);
    let admixture = admixture_proportions(&snapshots, &atom_mapping, point.n_clusters)?;
    let allele_frequencies =
        allele_freq_posterior(&snapshots, &thetas, &atom_mapping, point.n_clusters)?;
    Ok(Summary {
        posterior_k,
        granularity: options.granularity,
        estimate: options.estimate,
        snapshots: snapshots.len(),
        n_individuals: snapshots[0].z.len(),
        n_loci,
        point,
        atom_mapping,
        admixture,
        allele_frequencies,
    })
}

/// Writes `summary.json` and the CSV tables into `out`.
pub fn write_summary(summary: &Summary, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(
        out.join(SUMMARY_FILE),
        serde_json::to_string_pretty(summary)?,
    )?;

    let mut f = BufWriter::new(fs::File::create(out.join("k_posterior.csv"))?);
    writeln!(f, "statistic,k,count,probability")?;
    let pk = &summary.posterior_k;
    for (name, h) in [
        ("k_star", &pk.k_star),
        ("k_cover_95", &pk.k_cover_95),
        ("k_cover_99", &pk.k_cover_99),
    ] {
        for (k, c) in &h.counts {
            writeln!(f, "{name},{k},{c},{}", h.probabilities[k])?;
        }
    }
    f.flush()?;

    let mut f = BufWriter::new(fs::File::create(out.join("partition.csv"))?);
    match summary.granularity {
        Granularity::Item => {
            writeln!(f, "individual,locus,cluster")?;
            for (j, c) in summary.point.partition.iter().enumerate() {
                writeln!(f, "{},{},{c}", j / summary.n_loci, j % summary.n_loci)?;
            }
        }
        Granularity::Individual => {
            writeln!(f, "individual,cluster")?;
            for (i, c) in summary.point.partition.iter().enumerate() {
                writeln!(f, "{i},{c}")?;
            }
        }
    }
    f.flush()?;

    let mut f = BufWriter::new(fs::File::create(out.join("admixture.csv"))?);
    let header: Vec<String> = (0..summary.point.n_clusters)
        .map(|k| format!("cluster_{k}"))
        .collect();
    writeln!(f, "individual,{}", header.join(","))?;
    for (i, row) in summary.admixture.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{i},{}", cells.join(","))?;
    }
    f.flush()?;

    let mut f = BufWriter::new(fs::File::create(out.join("allele_frequencies.csv"))?);
    writeln!(f, "cluster,occupancy,locus,allele,mean")?;
    for c in &summary.allele_frequencies {
        for (l, row) in c.means.iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                writeln!(f, "{},{},{l},{a},{v}", c.cluster, c.occupancy)?;
            }
        }
    }
    f.flush()?;
    Ok(())
}
