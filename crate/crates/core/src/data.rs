//! Haploid genotype matrices, inter-locus distances, and their file formats.
//!
//! Genotype file: UTF-8 CSV, one row per sequence, comma-separated
//! non-negative allele codes, optionally preceded by a `#alphabet:A_1,...,A_L`
//! header. Distance file: one non-negative decimal per line, `L - 1` lines.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Reserved code for a missing genotype. Accepted by the file parser (token
/// `.`) so the format can grow into it, but refused by [`Dataset::validate`].
pub const MISSING: u16 = u16::MAX;

const ALPHABET_HEADER: &str = "#alphabet:";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_individuals: usize,
    n_loci: usize,
    alleles: Vec<usize>,
    genotypes: Vec<u16>,
    distances: Vec<f64>,
    offsets: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

impl Finding {
    fn error(message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

impl Dataset {
    /// Builds a dataset from a row-major `N x L` genotype matrix. No validation
    /// beyond shape is performed; call [`Dataset::validate`].
    pub fn new(
        n_individuals: usize,
        alleles: Vec<usize>,
        genotypes: Vec<u16>,
        distances: Vec<f64>,
    ) -> Result<Self> {
        let n_loci = alleles.len();
        if n_individuals == 0 || n_loci == 0 {
            return Err(Error::InvalidDataset(
                "dataset must have at least one sequence and one locus".into(),
            ));
        }
        if genotypes.len() != n_individuals * n_loci {
            return Err(Error::InvalidDataset(format!(
                "genotype matrix has {} entries, expected {} x {}",
                genotypes.len(),
                n_individuals,
                n_loci
            )));
        }
        let mut offsets = Vec::with_capacity(n_loci + 1);
        let mut acc = 0;
        for &a in &alleles {
            offsets.push(acc);
            acc += a;
        }
        offsets.push(acc);
        Ok(Dataset {
            n_individuals,
            n_loci,
            alleles,
            genotypes,
            distances,
            offsets,
        })
    }

    pub fn n_individuals(&self) -> usize {
        self.n_individuals
    }

    pub fn n_loci(&self) -> usize {
        self.n_loci
    }

    pub fn alleles(&self) -> &[usize] {
        &self.alleles
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn genotypes(&self) -> &[u16] {
        &self.genotypes
    }

    pub fn get(&self, individual: usize, locus: usize) -> u16 {
        self.genotypes[individual * self.n_loci + locus]
    }

    pub fn row(&self, individual: usize) -> &[u16] {
        &self.genotypes[individual * self.n_loci..(individual + 1) * self.n_loci]
    }

    /// Start of each locus inside a flattened allele-frequency profile; the
    /// final entry is the profile length.
    pub fn allele_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn profile_len(&self) -> usize {
        self.offsets[self.n_loci]
    }

    /// Flattened profile index of every observation of one individual.
    pub fn observation_indices(&self, individual: usize) -> Vec<usize> {
        self.row(individual)
            .iter()
            .enumerate()
            .map(|(l, &x)| self.offsets[l] + x as usize)
            .collect()
    }

    pub fn with_distances(mut self, distances: Vec<f64>) -> Self {
        self.distances = distances;
        self
    }

    /// Frequency of allele code 1 at each locus.
    pub fn allele_one_frequency(&self) -> Vec<f64> {
        (0..self.n_loci)
            .map(|l| {
                let ones = (0..self.n_individuals)
                    .filter(|&i| self.get(i, l) == 1)
                    .count();
                ones as f64 / self.n_individuals as f64
            })
            .collect()
    }

    /// FNV-1a digest of the full content, used to tie checkpoints to data.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(&(self.n_individuals as u64).to_le_bytes());
        for &a in &self.alleles {
            eat(&(a as u64).to_le_bytes());
        }
        for &g in &self.genotypes {
            eat(&g.to_le_bytes());
        }
        for &d in &self.distances {
            eat(&d.to_bits().to_le_bytes());
        }
        h
    }

    pub fn validate(&self) -> Vec<Finding> {
        let mut findings = Vec::new();
        for (l, &a) in self.alleles.iter().enumerate() {
            if a < 2 {
                findings.push(Finding::error(format!(
                    "locus {} declares {} allele(s); at least 2 required",
                    l + 1,
                    a
                )));
            }
        }
        for i in 0..self.n_individuals {
            for l in 0..self.n_loci {
                let x = self.get(i, l);
                if x == MISSING {
                    findings.push(Finding::error(format!(
                        "missing genotype at row {}, locus {} (missing data is not supported)",
                        i + 1,
                        l + 1
                    )));
                } else if x as usize >= self.alleles[l] {
                    findings.push(Finding::error(format!(
                        "allele code {} at row {}, locus {} outside alphabet of size {}",
                        x,
                        i + 1,
                        l + 1,
                        self.alleles[l]
                    )));
                }
            }
        }
        let expected = self.n_loci - 1;
        if self.distances.len() != expected {
            findings.push(Finding::error(format!(
                "expected {} inter-locus distances, found {}",
                expected,
                self.distances.len()
            )));
        }
        for (l, &d) in self.distances.iter().enumerate() {
            if !(d >= 0.0) || !d.is_finite() {
                findings.push(Finding::error(format!(
                    "distance {} between loci {} and {} is {}",
                    l + 1,
                    l + 1,
                    l + 2,
                    d
                )));
            }
        }
        for l in 0..self.n_loci {
            let first = self.get(0, l);
            if (1..self.n_individuals).all(|i| self.get(i, l) == first) {
                findings.push(Finding::warning(format!("locus {} is monomorphic", l + 1)));
            }
        }
        findings
    }
}

/// Reads a genotype CSV. Alphabet sizes come from the header when present,
/// otherwise from the largest observed code; loci with fewer than two
/// observed codes are widened to two with a warning.
pub fn load_genotypes(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::file(path))?;
    parse_genotypes(&text, path)
}

pub fn parse_genotypes(text: &str, path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let mut declared: Option<Vec<usize>> = None;
    let mut rows: Vec<Vec<u16>> = Vec::new();
    let mut row_lines: Vec<usize> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(ALPHABET_HEADER) {
            if !rows.is_empty() || declared.is_some() {
                return Err(parse_err(
                    line_no,
                    1,
                    "alphabet header must be the first line".into(),
                ));
            }
            let sizes = rest
                .split(',')
                .enumerate()
                .map(|(c, tok)| {
                    tok.trim().parse::<usize>().map_err(|_| {
                        parse_err(
                            line_no,
                            c + 1,
                            format!("invalid alphabet size {:?}", tok.trim()),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            declared = Some(sizes);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (c, tok) in line.split(',').enumerate() {
            let tok = tok.trim();
            if tok == "." {
                row.push(MISSING);
                continue;
            }
            let value: i64 = tok
                .parse()
                .map_err(|_| parse_err(line_no, c + 1, format!("invalid allele code {tok:?}")))?;
            if value < 0 {
                return Err(parse_err(
                    line_no,
                    c + 1,
                    format!("negative allele code {value}"),
                ));
            }
            if value >= MISSING as i64 {
                return Err(parse_err(
                    line_no,
                    c + 1,
                    format!("allele code {value} too large"),
                ));
            }
            row.push(value as u16);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::RaggedRow {
                    path: path.to_path_buf(),
                    row: rows.len() + 1,
                    found: row.len(),
                    expected: first.len(),
                });
            }
        }
        rows.push(row);
        row_lines.push(line_no);
    }
    if rows.is_empty() {
        return Err(parse_err(1, 1, "no genotype rows".into()));
    }
    let n_loci = rows[0].len();
    let alleles = match declared {
        Some(sizes) => {
            if sizes.len() != n_loci {
                return Err(parse_err(
                    1,
                    1,
                    format!(
                        "alphabet header lists {} loci, rows have {}",
                        sizes.len(),
                        n_loci
                    ),
                ));
            }
            if let Some(l) = sizes.iter().position(|&a| a < 2) {
                return Err(parse_err(
                    1,
                    l + 1,
                    format!("alphabet size {} below 2", sizes[l]),
                ));
            }
            sizes
        }
        None => (0..n_loci)
            .map(|l| {
                let max = rows
                    .iter()
                    .map(|r| r[l])
                    .filter(|&x| x != MISSING)
                    .max()
                    .unwrap_or(0) as usize;
                if max < 1 {
                    log::warn!(
                        "locus {}: single observed allele code; alphabet widened to 2",
                        l + 1
                    );
                    2
                } else {
                    max + 1
                }
            })
            .collect(),
    };
    for (row, &line_no) in rows.iter().zip(&row_lines) {
        for (l, &x) in row.iter().enumerate() {
            if x == MISSING {
                return Err(parse_err(
                    line_no,
                    l + 1,
                    "missing genotype '.' is not supported".into(),
                ));
            }
            if x as usize >= alleles[l] {
                return Err(parse_err(
                    line_no,
                    l + 1,
                    format!("allele code {x} outside declared alphabet {}", alleles[l]),
                ));
            }
        }
    }
    let n = rows.len();
    let genotypes = rows.into_iter().flatten().collect();
    Dataset::new(n, alleles, genotypes, Vec::new())
}

/// Reads `expected - 1` distances for a dataset with `expected` loci.
pub fn load_distances(path: impl AsRef<Path>, n_loci: usize) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::file(path))?;
    parse_distances(&text, path, n_loci)
}

pub fn parse_distances(text: &str, path: &Path, n_loci: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            column: 1,
            message: format!("invalid distance {line:?}"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                column: 1,
                message: format!("non-finite distance {line:?}"),
            });
        }
        if value < 0.0 {
            return Err(Error::NegativeDistance {
                path: path.to_path_buf(),
                line: idx + 1,
                value,
            });
        }
        out.push(value);
    }
    let expected = n_loci.saturating_sub(1);
    if out.len() != expected {
        return Err(Error::DistanceCount {
            path: path.to_path_buf(),
            expected,
            found: out.len(),
        });
    }
    Ok(out)
}

/// Loads genotypes and distances together and rejects datasets with
/// validation errors. Warnings are logged.
pub fn load_dataset(genotypes: impl AsRef<Path>, distances: impl AsRef<Path>) -> Result<Dataset> {
    let ds = load_genotypes(genotypes)?;
    let d = load_distances(distances, ds.n_loci())?;
    let ds = ds.with_distances(d);
    let findings = ds.validate();
    for f in findings.iter().filter(|f| !f.is_error()) {
        log::warn!("{}", f.message);
    }
    if let Some(err) = findings.iter().find(|f| f.is_error()) {
        return Err(Error::InvalidDataset(err.message.clone()));
    }
    Ok(ds)
}

pub fn write_genotypes<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    let header: Vec<String> = ds.alleles.iter().map(|a| a.to_string()).collect();
    writeln!(out, "{ALPHABET_HEADER}{}", header.join(","))?;
    for i in 0..ds.n_individuals {
        let row: Vec<String> = ds.row(i).iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn save_genotypes(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_genotypes(ds, &mut buf)?;
    fs::write(path.as_ref(), buf).map_err(Error::file(path.as_ref()))?;
    Ok(())
}

pub fn save_distances(distances: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    for d in distances {
        text.push_str(&format!("{d}\n"));
    }
    fs::write(path.as_ref(), text).map_err(Error::file(path.as_ref()))?;
    Ok(())
}
