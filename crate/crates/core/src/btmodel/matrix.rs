use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{BtError, PreferencePair};
use crate::schema::FactorProfile;

/// Square matrix of non-negative win weights, row-major. Entry (x, y) is the
/// weight of item x beating item y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ComparisonMatrix {
    size: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for ComparisonMatrix {
    type Error = BtError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        ComparisonMatrix::from_rows(rows)
    }
}

impl From<ComparisonMatrix> for Vec<Vec<f64>> {
    fn from(m: ComparisonMatrix) -> Self {
        m.rows()
    }
}

impl ComparisonMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; size * size],
        }
    }

    /// Builds a matrix from rows. Entries must be finite and non-negative.
    /// The diagonal is accepted as given, since the literal accumulation mode
    /// writes there; fitting ignores it.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, BtError> {
        let size = rows.len();
        let mut data = Vec::with_capacity(size * size);
        for (x, row) in rows.into_iter().enumerate() {
            if row.len() != size {
                return Err(BtError::InvalidMatrix(format!("row {x} has {} entries, expected {size}", row.len())));
            }
            data.extend(row);
        }
        if let Some(bad) = data.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(BtError::InvalidMatrix(format!("entry {bad} is not a finite non-negative weight")));
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.size + y]
    }

    pub fn add_to(&mut self, x: usize, y: usize, w: f64) {
        self.data[x * self.size + y] += w;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.size.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Total wins of item x, excluding the diagonal.
    pub fn wins(&self, x: usize) -> f64 {
        (0..self.size).filter(|&y| y != x).map(|y| self.get(x, y)).sum()
    }

    pub fn off_diagonal_sum(&self) -> f64 {
        (0..self.size).map(|x| self.wins(x)).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size).map(|x| self.get(x, x)).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            size: self.size,
            data: self.data.iter().map(|w| w * c).collect(),
        }
    }

    /// Relabels items so that new item `perm[x]` carries old item x.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.size, "permutation length must equal matrix size");
        let mut out = Self::zeros(self.size);
        for x in 0..self.size {
            for y in 0..self.size {
                out.data[perm[x] * self.size + perm[y]] = self.get(x, y);
            }
        }
        out
    }

    /// Element-wise sum.
    pub fn merge(&mut self, other: &ComparisonMatrix) {
        assert_eq!(self.size, other.size, "matrix sizes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// How a preferred pair contributes expected occurrences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccumulateMode {
    /// w_xy += P(x | winner) · P(y | loser) for every x ≠ y.
    #[default]
    CrossItem,
    /// w_xx += P(x | winner) · P(x | loser). Fills only the diagonal, so it
    /// carries no ranking signal; kept for inspection.
    LiteralDiagonal,
}

// Fixed so the summation order, and hence the result, does not depend on
// the host's core count.
const ACCUMULATE_CHUNKS: usize = 8;
const PARALLEL_THRESHOLD: usize = 2048;

/// Sums expected-occurrence weights over all preferred pairs.
pub fn accumulate(
    pairs: &[PreferencePair],
    profiles: &HashMap<&str, &FactorProfile>,
    mode: AccumulateMode,
) -> Result<ComparisonMatrix, BtError> {
    let mut resolved = Vec::with_capacity(pairs.len());
    let mut schema = None;
    for pair in pairs {
        let lookup = |id: &str| {
            profiles
                .get(id)
                .copied()
                .ok_or_else(|| BtError::MissingProfile(id.to_string()))
        };
        let (a, b) = (lookup(&pair.winner)?, lookup(&pair.loser)?);
        let reference = *schema.get_or_insert(a);
        if !a.same_schema(reference) || !b.same_schema(reference) {
            return Err(BtError::SchemaMismatch);
        }
        resolved.push((a.flatten(), b.flatten()));
    }
    let size = match schema {
        Some(p) => p.schema().item_count(),
        None => profiles
            .values()
            .next()
            .map(|p| p.schema().item_count())
            .unwrap_or(0),
    };

    if resolved.len() < PARALLEL_THRESHOLD {
        return Ok(accumulate_chunk(&resolved, size, mode));
    }
    let chunk_len = resolved.len().div_ceil(ACCUMULATE_CHUNKS);
    let partials: Vec<ComparisonMatrix> = std::thread::scope(|s| {
        let handles: Vec<_> = resolved
            .chunks(chunk_len)
            .map(|chunk| s.spawn(move || accumulate_chunk(chunk, size, mode)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("accumulate worker panicked"))
            .collect()
    });
    let mut total = ComparisonMatrix::zeros(size);
    for partial in &partials {
        total.merge(partial);
    }
    Ok(total)
}

fn accumulate_chunk(pairs: &[(&[f64], &[f64])], size: usize, mode: AccumulateMode) -> ComparisonMatrix {
    let mut m = ComparisonMatrix::zeros(size);
    for (a, b) in pairs {
        match mode {
            AccumulateMode::CrossItem => {
                for x in 0..size {
                    let row = &mut m.data[x * size..(x + 1) * size];
                    for y in 0..size {
                        if x != y {
                            row[y] += a[x] * b[y];
                        }
                    }
                }
            }
            AccumulateMode::LiteralDiagonal => {
                for x in 0..size {
                    m.data[x * size + x] += a[x] * b[x];
                }
            }
        }
    }
    m
}
