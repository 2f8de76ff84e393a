//! Pairwise dissimilarities between articles: extended-co-authorship
//! distance, Labbé's inter-textual distance over word frequencies, and the
//! weighted blend of the two that feeds the clustering stage.
//!
//! Labbé's distance as written is asymmetric (it projects one text's
//! frequencies into the other's length). We always orient the pair so the
//! shorter text plays role A, which makes the operation symmetric by
//! construction and the proximity matrix well-defined.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::Vocabulary;

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("text{} has no in-vocabulary tokens", match .0 { Some(id) => format!(" {id:?}"), None => String::new() })]
    EmptyText(Option<String>),
    #[error("topic class has {0} member(s); at least 2 are required for clustering")]
    ClassTooSmall(usize),
    #[error("proximity entry ({i},{j}) = {value} is outside [0,1]")]
    EntryOutOfRange { i: usize, j: usize, value: f64 },
    #[error("{path}: {message}")]
    BadMatrixFile { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DistanceError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DistanceError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn bad_file(path: &Path, message: impl Into<String>) -> Self {
        DistanceError::BadMatrixFile {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

/// Word-frequency map of one text over vocabulary ids, plus the total token
/// count. Only constructible from a non-empty in-vocabulary token stream, so
/// the total is always at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyProfile {
    freqs: BTreeMap<usize, u64>,
    total: u64,
}

impl FrequencyProfile {
    pub fn freqs(&self) -> &BTreeMap<usize, u64> {
        &self.freqs
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Counts in-vocabulary tokens. Errors when nothing survives the vocabulary
/// filter.
pub fn frequency_profile(
    tokens: &[String],
    vocab: &Vocabulary,
) -> Result<FrequencyProfile, DistanceError> {
    let mut freqs: BTreeMap<usize, u64> = BTreeMap::new();
    let mut total = 0u64;
    for token in tokens {
        if let Some(id) = vocab.id(token) {
            *freqs.entry(id).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(DistanceError::EmptyText(None));
    }
    Ok(FrequencyProfile { freqs, total })
}

/// Labbé's inter-textual distance in the unit interval.
///
/// With A the shorter text, every frequency of B is rescaled by N_A/N_B;
/// rescaled terms below 1 are excluded from both the numerator's B-side and
/// the denominator's N_A(B), so the two always use the same retained set.
/// A-only terms contribute their full frequency to the numerator.
pub fn intertextual_distance(a: &FrequencyProfile, b: &FrequencyProfile) -> f64 {
    // Orient so the shorter text plays role A; ties keep argument order
    // (the two orientations coincide when totals are equal).
    let (a, b) = if a.total > b.total { (b, a) } else { (a, b) };
    let n_a = a.total as f64;
    let scale = n_a / b.total as f64;

    let mut numerator = 0.0;
    let mut n_ab = 0.0;

    let mut a_iter = a.freqs.iter().peekable();
    let mut b_iter = b.freqs.iter().peekable();
    loop {
        match (a_iter.peek(), b_iter.peek()) {
            (Some((&ta, &fa)), Some((&tb, _))) if ta < tb => {
                numerator += fa as f64;
                a_iter.next();
            }
            (Some((&ta, _)), Some((&tb, &fb))) if tb < ta => {
                let expected = fb as f64 * scale;
                if expected >= 1.0 {
                    numerator += expected;
                    n_ab += expected;
                }
                b_iter.next();
            }
            (Some((_, &fa)), Some((_, &fb))) => {
                let expected = fb as f64 * scale;
                if expected >= 1.0 {
                    numerator += (fa as f64 - expected).abs();
                    n_ab += expected;
                } else {
                    numerator += fa as f64;
                }
                a_iter.next();
                b_iter.next();
            }
            (Some((_, &fa)), None) => {
                numerator += fa as f64;
                a_iter.next();
            }
            (None, Some((_, &fb))) => {
                let expected = fb as f64 * scale;
                if expected >= 1.0 {
                    numerator += expected;
                    n_ab += expected;
                }
                b_iter.next();
            }
            (None, None) => break,
        }
    }

    // The numerator never exceeds the denominator mathematically, but the
    // two accumulate in different orders; keep rounding inside [0,1].
    (numerator / (n_a + n_ab)).min(1.0)
}

/// Extended-co-authorship dissimilarity: one minus the Jaccard coefficient
/// of the two name sets. Two empty sets share no authors and get the
/// maximal distance 1.0.
pub fn coauth_dissimilarity(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    let intersection = a.intersection(b).count();
    1.0 - intersection as f64 / union as f64
}

/// Which dissimilarity a matrix holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixKind {
    Coauth,
    Content,
    Combined { weight: f64 },
}

impl std::fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatrixKind::Coauth => write!(f, "coauth"),
            MatrixKind::Content => write!(f, "content"),
            MatrixKind::Combined { weight } => write!(f, "combined(weight={weight})"),
        }
    }
}

/// Symmetric zero-diagonal dissimilarity matrix over one topic class,
/// stored as the condensed upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix {
    n: usize,
    entries: Vec<f64>,
    labels: Vec<String>,
    kind: MatrixKind,
}

impl ProximityMatrix {
    /// Builds a matrix by evaluating `f` on every pair i < j, rows in
    /// parallel. Every entry is checked against the unit-interval range.
    pub fn from_fn<F>(labels: Vec<String>, kind: MatrixKind, f: F) -> Result<Self, DistanceError>
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let n = labels.len();
        let entries: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self::from_condensed(labels, kind, entries)
    }

    /// Wraps a condensed upper triangle (row-major, i < j) as a matrix.
    pub fn from_condensed(
        labels: Vec<String>,
        kind: MatrixKind,
        entries: Vec<f64>,
    ) -> Result<Self, DistanceError> {
        let n = labels.len();
        assert_eq!(
            entries.len(),
            n * (n - 1) / 2,
            "condensed entry count does not match label count"
        );
        for (idx, &value) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                let (i, j) = pair_from_condensed(n, idx);
                return Err(DistanceError::EntryOutOfRange { i, j, value });
            }
        }
        Ok(ProximityMatrix {
            n,
            entries,
            labels,
            kind,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn condensed(&self) -> &[f64] {
        &self.entries
    }

    /// Dissimilarity between rows i and j. The diagonal is pinned to 0.0.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.n && j < self.n, "index out of range");
        if i == j {
            return 0.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.entries[condensed_index(self.n, i, j)]
    }

    /// Writes the binary dump: magic, n, kind, labels, then the condensed
    /// triangle as little-endian f64. Round-trips bit-exactly.
    pub fn write_binary(&self, path: &Path) -> Result<(), DistanceError> {
        let file = File::create(path).map_err(|e| DistanceError::io(path, e))?;
        let mut out = BufWriter::new(file);
        let err = |e| DistanceError::io(path, e);
        out.write_all(MAGIC).map_err(err)?;
        out.write_all(&(self.n as u64).to_le_bytes()).map_err(err)?;
        match self.kind {
            MatrixKind::Coauth => out.write_all(&[0u8]).map_err(err)?,
            MatrixKind::Content => out.write_all(&[1u8]).map_err(err)?,
            MatrixKind::Combined { weight } => {
                out.write_all(&[2u8]).map_err(err)?;
                out.write_all(&weight.to_le_bytes()).map_err(err)?;
            }
        }
        for label in &self.labels {
            let bytes = label.as_bytes();
            out.write_all(&(bytes.len() as u32).to_le_bytes())
                .map_err(err)?;
            out.write_all(bytes).map_err(err)?;
        }
        for value in &self.entries {
            out.write_all(&value.to_le_bytes()).map_err(err)?;
        }
        out.flush().map_err(err)
    }

    /// Reads a binary dump written by [`ProximityMatrix::write_binary`].
    pub fn read_binary(path: &Path) -> Result<Self, DistanceError> {
        let file = File::open(path).map_err(|e| DistanceError::io(path, e))?;
        let mut input = BufReader::new(file);

        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic, path)?;
        if &magic != MAGIC {
            return Err(DistanceError::bad_file(path, "bad magic"));
        }
        let n = read_u64(&mut input, path)? as usize;
        let kind = match read_u8(&mut input, path)? {
            0 => MatrixKind::Coauth,
            1 => MatrixKind::Content,
            2 => MatrixKind::Combined {
                weight: read_f64(&mut input, path)?,
            },
            tag => return Err(DistanceError::bad_file(path, format!("bad kind tag {tag}"))),
        };
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let len = read_u32(&mut input, path)? as usize;
            let mut buf = vec![0u8; len];
            read_exact(&mut input, &mut buf, path)?;
            labels.push(
                String::from_utf8(buf)
                    .map_err(|e| DistanceError::bad_file(path, e.to_string()))?,
            );
        }
        let mut entries = Vec::with_capacity(n * (n - 1) / 2);
        for _ in 0..n * (n - 1) / 2 {
            entries.push(read_f64(&mut input, path)?);
        }
        Self::from_condensed(labels, kind, entries)
    }

    /// Human-readable dump: a header plus one `i j value` line per pair.
    pub fn write_text(&self, path: &Path) -> Result<(), DistanceError> {
        let file = File::create(path).map_err(|e| DistanceError::io(path, e))?;
        let mut out = BufWriter::new(file);
        let err = |e| DistanceError::io(path, e);
        writeln!(out, "# proximity matrix kind={} n={}", self.kind, self.n).map_err(err)?;
        for (i, label) in self.labels.iter().enumerate() {
            writeln!(out, "# label {i} {label}").map_err(err)?;
        }
        for i in 0..self.n {
            for j in i + 1..self.n {
                writeln!(out, "{i} {j} {}", self.get(i, j)).map_err(err)?;
            }
        }
        out.flush().map_err(err)
    }
}

const MAGIC: &[u8; 4] = b"PMX1";

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<(), DistanceError> {
    r.read_exact(buf).map_err(|e| DistanceError::io(path, e))
}

fn read_u8(r: &mut impl Read, path: &Path) -> Result<u8, DistanceError> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b, path)?;
    Ok(b[0])
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32, DistanceError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64, DistanceError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, path: &Path) -> Result<f64, DistanceError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(f64::from_le_bytes(b))
}

/// Index of (i, j), i < j, in the row-major condensed upper triangle.
pub(crate) fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

pub(crate) fn pair_from_condensed(n: usize, idx: usize) -> (usize, usize) {
    let mut i = 0;
    let mut row_start = 0;
    loop {
        let row_len = n - i - 1;
        if idx < row_start + row_len {
            return (i, i + 1 + (idx - row_start));
        }
        row_start += row_len;
        i += 1;
    }
}

/// Co-authorship dissimilarity matrix over one class.
pub fn coauth_matrix(
    labels: Vec<String>,
    coauthors: &[BTreeSet<String>],
) -> Result<ProximityMatrix, DistanceError> {
    assert_eq!(labels.len(), coauthors.len());
    ProximityMatrix::from_fn(labels, MatrixKind::Coauth, |i, j| {
        coauth_dissimilarity(&coauthors[i], &coauthors[j])
    })
}

/// Inter-textual distance matrix over one class.
pub fn content_matrix(
    labels: Vec<String>,
    profiles: &[FrequencyProfile],
) -> Result<ProximityMatrix, DistanceError> {
    assert_eq!(labels.len(), profiles.len());
    ProximityMatrix::from_fn(labels, MatrixKind::Content, |i, j| {
        intertextual_distance(&profiles[i], &profiles[j])
    })
}

/// Entrywise blend `weight * coauth + (1 - weight) * content`. At weight 0
/// or 1 the result equals the corresponding input matrix exactly.
pub fn combine_matrices(
    coauth: &ProximityMatrix,
    content: &ProximityMatrix,
    weight: f64,
) -> Result<ProximityMatrix, DistanceError> {
    assert_eq!(coauth.n(), content.n(), "matrix sizes differ");
    assert!((0.0..=1.0).contains(&weight), "weight outside [0,1]");
    let entries = coauth
        .condensed()
        .iter()
        .zip(content.condensed())
        .map(|(&c, &t)| weight * c + (1.0 - weight) * t)
        .collect();
    ProximityMatrix::from_condensed(
        coauth.labels().to_vec(),
        MatrixKind::Combined { weight },
        entries,
    )
}

/// Builds the blended proximity matrix for one topic class from per-member
/// frequency profiles and extended co-author sets.
pub fn build_proximity(
    labels: Vec<String>,
    profiles: &[FrequencyProfile],
    coauthors: &[BTreeSet<String>],
    weight: f64,
) -> Result<ProximityMatrix, DistanceError> {
    if labels.len() < 2 {
        return Err(DistanceError::ClassTooSmall(labels.len()));
    }
    assert!((0.0..=1.0).contains(&weight), "weight outside [0,1]");
    let coauth = coauth_matrix(labels.clone(), coauthors)?;
    let content = content_matrix(labels, profiles)?;
    combine_matrices(&coauth, &content, weight)
}
