//! On-disk trace: one scalar CSV plus optional assignment and profile
//! snapshots, all keyed by sweep.
//!
//! ```text
//! trace.csv        sweep,k_star,k_cover_95,k_cover_99,alpha,alpha0,r,loglik,accept_ffbs,accept_r
//! assignments.csv  sweep,individual,locus,atom_id,linked
//! theta.csv        sweep,atom_id,locus,allele,value
//! ```
//!
//! Floats are written in shortest round-trip form, so identical chains give
//! identical bytes.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

use super::ChainState;

pub const TRACE_FILE: &str = "trace.csv";
pub const ASSIGNMENTS_FILE: &str = "assignments.csv";
pub const THETA_FILE: &str = "theta.csv";

const TRACE_HEADER: &str =
    "sweep,k_star,k_cover_95,k_cover_99,alpha,alpha0,r,loglik,accept_ffbs,accept_r";
const ASSIGNMENTS_HEADER: &str = "sweep,individual,locus,atom_id,linked";
const THETA_HEADER: &str = "sweep,atom_id,locus,allele,value";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: u64,
    pub k_star: usize,
    pub k_cover_95: usize,
    pub k_cover_99: usize,
    pub alpha: f64,
    pub alpha0: f64,
    pub r: f64,
    pub loglik: f64,
    /// Fraction of sequences whose path proposal was accepted this sweep.
    pub accept_ffbs: f64,
    /// Whether this sweep's split-rate proposal was accepted (0 or 1).
    pub accept_r: f64,
}

impl SweepRecord {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.sweep,
            self.k_star,
            self.k_cover_95,
            self.k_cover_99,
            self.alpha,
            self.alpha0,
            self.r,
            self.loglik,
            self.accept_ffbs,
            self.accept_r
        )
    }
}

/// Smallest number of clusters whose assignment counts reach
/// `percent`% of the total.
pub fn coverage_count(counts: &[usize], percent: usize) -> usize {
    let mut sorted: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let total: usize = sorted.iter().sum();
    let mut acc = 0;
    for (k, c) in sorted.iter().enumerate() {
        acc += c;
        if acc * 100 >= percent * total {
            return k + 1;
        }
    }
    sorted.len()
}

/// Byte lengths of the trace files, stored in checkpoints so a resumed run
/// can drop anything written after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceLengths {
    pub trace: u64,
    pub assignments: u64,
    pub theta: u64,
}

pub struct TraceFiles {
    dir: PathBuf,
    trace: BufWriter<File>,
    snapshots: Option<(BufWriter<File>, BufWriter<File>)>,
}

impl TraceFiles {
    /// Fresh files with headers.
    pub fn create(dir: &Path, snapshots: bool) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let open = |name: &str, header: &str| -> Result<BufWriter<File>> {
            let mut w = BufWriter::new(File::create(dir.join(name))?);
            writeln!(w, "{header}")?;
            Ok(w)
        };
        let trace = open(TRACE_FILE, TRACE_HEADER)?;
        let snapshots = if snapshots {
            Some((
                open(ASSIGNMENTS_FILE, ASSIGNMENTS_HEADER)?,
                open(THETA_FILE, THETA_HEADER)?,
            ))
        } else {
            None
        };
        Ok(TraceFiles {
            dir: dir.to_path_buf(),
            trace,
            snapshots,
        })
    }

    /// Existing files cut back to `lengths` and opened for appending.
    pub fn reopen(dir: &Path, snapshots: bool, lengths: TraceLengths) -> Result<Self> {
        let open = |name: &str, len: u64| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            let file = OpenOptions::new().write(true).open(&path)?;
            let actual = file.metadata()?.len();
            if actual < len {
                return Err(Error::Checkpoint(format!(
                    "{} is shorter ({actual} bytes) than recorded in the checkpoint ({len} bytes)",
                    path.display()
                )));
            }
            file.set_len(len)?;
            let file = OpenOptions::new().append(true).open(&path)?;
            Ok(BufWriter::new(file))
        };
        let trace = open(TRACE_FILE, lengths.trace)?;
        let snapshots = if snapshots {
            Some((
                open(ASSIGNMENTS_FILE, lengths.assignments)?,
                open(THETA_FILE, lengths.theta)?,
            ))
        } else {
            None
        };
        Ok(TraceFiles {
            dir: dir.to_path_buf(),
            trace,
            snapshots,
        })
    }

    pub fn write(
        &mut self,
        record: &SweepRecord,
        chain: &ChainState,
        data: &Dataset,
    ) -> Result<()> {
        writeln!(self.trace, "{}", record.csv_line())?;
        if let Some((assign, theta)) = self.snapshots.as_mut() {
            let t = record.sweep;
            let atoms = &chain.hdp.atoms;
            let mut used = vec![false; atoms.len()];
            for (i, (z, s)) in chain.paths.z.iter().zip(&chain.paths.s).enumerate() {
                for (l, (&k, &linked)) in z.iter().zip(s).enumerate() {
                    used[k] = true;
                    writeln!(assign, "{t},{i},{l},{},{}", atoms[k].id, linked as u8)?;
                }
            }
            let offsets = data.allele_offsets();
            for (atom, _) in atoms.iter().zip(&used).filter(|(_, &u)| u) {
                for l in 0..data.n_loci() {
                    for (a, v) in atom.theta[offsets[l]..offsets[l + 1]].iter().enumerate() {
                        writeln!(theta, "{t},{},{l},{a},{v}", atom.id)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Flushes and returns the current file lengths.
    pub fn flush(&mut self) -> Result<TraceLengths> {
        self.trace.flush()?;
        let mut lengths = TraceLengths {
            trace: fs::metadata(self.dir.join(TRACE_FILE))?.len(),
            ..Default::default()
        };
        if let Some((assign, theta)) = self.snapshots.as_mut() {
            assign.flush()?;
            theta.flush()?;
            lengths.assignments = fs::metadata(self.dir.join(ASSIGNMENTS_FILE))?.len();
            lengths.theta = fs::metadata(self.dir.join(THETA_FILE))?.len();
        }
        Ok(lengths)
    }
}

fn lines(
    path: &Path,
    header: &str,
) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::Trace(format!("{}: {e}", path.display())))?;
    let mut it = BufReader::new(file).lines().enumerate();
    match it.next() {
        Some((_, Ok(h))) if h.trim() == header => Ok(it.map(|(n, l)| (n + 1, l))),
        _ => Err(Error::Trace(format!(
            "{}: missing or unexpected header",
            path.display()
        ))),
    }
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, raw: Option<&str>) -> Result<T> {
    raw.and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Trace(format!("{}:{}: malformed field", path.display(), line + 1)))
}

pub fn read_trace(dir: &Path) -> Result<Vec<SweepRecord>> {
    let path = dir.join(TRACE_FILE);
    let mut out = Vec::new();
    for (n, line) in lines(&path, TRACE_HEADER)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let p = path.as_path();
        out.push(SweepRecord {
            sweep: field(p, n, f.next())?,
            k_star: field(p, n, f.next())?,
            k_cover_95: field(p, n, f.next())?,
            k_cover_99: field(p, n, f.next())?,
            alpha: field(p, n, f.next())?,
            alpha0: field(p, n, f.next())?,
            r: field(p, n, f.next())?,
            loglik: field(p, n, f.next())?,
            accept_ffbs: field(p, n, f.next())?,
            accept_r: field(p, n, f.next())?,
        });
    }
    Ok(out)
}

/// Atom ids (and link indicators) of one retained sweep, indexed
/// `[individual][locus]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentSnapshot {
    pub sweep: u64,
    pub z: Vec<Vec<u64>>,
    pub s: Vec<Vec<bool>>,
}

pub fn read_assignments(dir: &Path) -> Result<Vec<AssignmentSnapshot>> {
    let path = dir.join(ASSIGNMENTS_FILE);
    let mut raw: BTreeMap<u64, Vec<(usize, usize, u64, bool)>> = BTreeMap::new();
    for (n, line) in lines(&path, ASSIGNMENTS_HEADER)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let p = path.as_path();
        let t: u64 = field(p, n, f.next())?;
        let i: usize = field(p, n, f.next())?;
        let l: usize = field(p, n, f.next())?;
        let k: u64 = field(p, n, f.next())?;
        let s: u8 = field(p, n, f.next())?;
        raw.entry(t).or_default().push((i, l, k, s == 1));
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut shape: Option<(usize, usize)> = None;
    for (sweep, rows) in raw {
        let n = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
        let l = rows.iter().map(|r| r.1).max().map_or(0, |m| m + 1);
        if rows.len() != n * l || shape.is_some_and(|s| s != (n, l)) {
            return Err(Error::Trace(format!(
                "{}: sweep {sweep} has an incomplete snapshot",
                path.display()
            )));
        }
        shape = Some((n, l));
        let mut z = vec![vec![u64::MAX; l]; n];
        let mut s = vec![vec![false; l]; n];
        for (i, j, k, linked) in rows {
            z[i][j] = k;
            s[i][j] = linked;
        }
        if z.iter().flatten().any(|&k| k == u64::MAX) {
            return Err(Error::Trace(format!(
                "{}: sweep {sweep} repeats an entry",
                path.display()
            )));
        }
        out.push(AssignmentSnapshot { sweep, z, s });
    }
    Ok(out)
}

/// Profiles of the occupied atoms of one retained sweep, as
/// `atom id -> [locus][allele]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSnapshot {
    pub sweep: u64,
    pub profiles: BTreeMap<u64, Vec<Vec<f64>>>,
}

pub fn read_theta(dir: &Path) -> Result<Vec<ThetaSnapshot>> {
    let path = dir.join(THETA_FILE);
    let mut raw: BTreeMap<u64, BTreeMap<u64, Vec<Vec<f64>>>> = BTreeMap::new();
    for (n, line) in lines(&path, THETA_HEADER)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let p = path.as_path();
        let t: u64 = field(p, n, f.next())?;
        let k: u64 = field(p, n, f.next())?;
        let l: usize = field(p, n, f.next())?;
        let a: usize = field(p, n, f.next())?;
        let v: f64 = field(p, n, f.next())?;
        let prof = raw.entry(t).or_default().entry(k).or_default();
        if prof.len() <= l {
            prof.resize(l + 1, Vec::new());
        }
        if prof[l].len() <= a {
            prof[l].resize(a + 1, f64::NAN);
        }
        prof[l][a] = v;
    }
    Ok(raw
        .into_iter()
        .map(|(sweep, profiles)| ThetaSnapshot { sweep, profiles })
        .collect())
}
