//! Sparse store of the observed entries of a partially known matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        Self { row, col, value }
    }
}

/// Compressed per-line index: for line `i`, `idx[ptr[i]..ptr[i+1]]` holds the
/// sorted observed positions and `val` the matching values.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLines {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseLines {
    fn build(n_lines: usize, mut items: Vec<(usize, usize, f64)>) -> Self {
        items.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut ptr = vec![0usize; n_lines + 1];
        for &(line, _, _) in &items {
            ptr[line + 1] += 1;
        }
        for i in 0..n_lines {
            ptr[i + 1] += ptr[i];
        }
        let idx = items.iter().map(|t| t.1).collect();
        let val = items.iter().map(|t| t.2).collect();
        Self { ptr, idx, val }
    }

    #[inline]
    pub fn n_lines(&self) -> usize {
        self.ptr.len() - 1
    }

    /// Observed positions and values of line `i`.
    #[inline]
    pub fn line(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.ptr[i], self.ptr[i + 1]);
        (&self.idx[a..b], &self.val[a..b])
    }

    #[inline]
    pub fn len_of(&self, i: usize) -> usize {
        self.ptr[i + 1] - self.ptr[i]
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }
}

/// Known entries `Psi_Omega(M)` of an `n_rows x n_cols` matrix with both row
/// (`Omega_i`) and column (`R_t`) indexes. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedMatrix {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<Entry>,
    rows: SparseLines,
    cols: SparseLines,
}

impl ObservedMatrix {
    /// Builds the store from triplets. Repeated `(row, col)` pairs keep the
    /// last value; the number of dropped duplicates is returned alongside.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<(Self, usize)>
    where
        I: IntoIterator<Item = Entry>,
    {
        let mut tagged: Vec<(usize, Entry)> = Vec::new();
        for (pos, e) in triplets.into_iter().enumerate() {
            if e.row >= n_rows || e.col >= n_cols {
                return Err(Error::Data(format!(
                    "entry ({}, {}) outside a {n_rows}x{n_cols} matrix",
                    e.row, e.col
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::Data(format!(
                    "entry ({}, {}) has non-finite value",
                    e.row, e.col
                )));
            }
            tagged.push((pos, e));
        }
        // Stable on input position so the last duplicate ends each run.
        tagged.sort_by(|a, b| (a.1.row, a.1.col, a.0).cmp(&(b.1.row, b.1.col, b.0)));
        let total = tagged.len();
        let mut entries: Vec<Entry> = Vec::with_capacity(total);
        for (_, e) in tagged {
            match entries.last_mut() {
                Some(last) if last.row == e.row && last.col == e.col => *last = e,
                _ => entries.push(e),
            }
        }
        let duplicates = total - entries.len();
        Ok((Self::from_sorted_unique(n_rows, n_cols, entries), duplicates))
    }

    /// Like [`from_triplets`](Self::from_triplets) but rejects duplicates.
    pub fn new(n_rows: usize, n_cols: usize, entries: Vec<Entry>) -> Result<Self> {
        let (m, dups) = Self::from_triplets(n_rows, n_cols, entries)?;
        if dups > 0 {
            return Err(Error::Data(format!("{dups} duplicate entries")));
        }
        Ok(m)
    }

    fn from_sorted_unique(n_rows: usize, n_cols: usize, entries: Vec<Entry>) -> Self {
        let rows = SparseLines::build(n_rows, entries.iter().map(|e| (e.row, e.col, e.value)).collect());
        let cols = SparseLines::build(n_cols, entries.iter().map(|e| (e.col, e.row, e.value)).collect());
        Self {
            n_rows,
            n_cols,
            entries,
            rows,
            cols,
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Entries sorted by `(row, col)`.
    #[inline]
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `nnz / (n_rows * n_cols)`.
    pub fn density(&self) -> f64 {
        if self.n_rows == 0 || self.n_cols == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.n_rows as f64 * self.n_cols as f64)
    }

    /// Row-wise index: `row(i)` yields `(Omega_i, values)`.
    #[inline]
    pub fn rows(&self) -> &SparseLines {
        &self.rows
    }

    /// Column-wise index: `cols().line(t)` yields `(R_t, values)`.
    #[inline]
    pub fn cols(&self) -> &SparseLines {
        &self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        self.rows.line(i)
    }

    #[inline]
    pub fn col(&self, t: usize) -> (&[usize], &[f64]) {
        self.cols.line(t)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    /// Mean of the observed values in every column; `None` for empty columns.
    pub fn column_means(&self) -> Vec<Option<f64>> {
        (0..self.n_cols)
            .map(|t| {
                let (_, vals) = self.col(t);
                if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            })
            .collect()
    }

    /// The observed entries of `M^T`.
    pub fn transpose(&self) -> ObservedMatrix {
        let mut entries = Vec::with_capacity(self.nnz());
        for t in 0..self.n_cols {
            let (rows, vals) = self.col(t);
            entries.extend(rows.iter().zip(vals).map(|(&r, &v)| Entry::new(t, r, v)));
        }
        ObservedMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            entries,
            rows: self.cols.clone(),
            cols: self.rows.clone(),
        }
    }

    /// `||Psi_Omega(M)||_F`.
    pub fn frobenius_norm(&self) -> f64 {
        crate::linalg::sqrt(self.entries.iter().map(|e| e.value * e.value).sum())
    }

    /// Random disjoint partition into training and test entries. The test set
    /// holds `round(test_fraction * nnz)` entries; both parts keep the full
    /// matrix shape.
    pub fn split_train_test(&self, test_fraction: f64, seed: u64) -> Result<(ObservedMatrix, ObservedMatrix)> {
        if self.is_empty() {
            return Err(Error::Data("cannot split a matrix with no entries".into()));
        }
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "test fraction {test_fraction} must lie in (0, 1)"
            )));
        }
        let total = self.nnz();
        let n_test = libm::round(test_fraction * total as f64) as usize;
        if n_test == 0 || n_test >= total {
            return Err(Error::Argument(format!(
                "test fraction {test_fraction} of {total} entries leaves an empty part"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_test = vec![false; total];
        for k in index::sample(&mut rng, total, n_test) {
            in_test[k] = true;
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (e, &t) in self.entries.iter().zip(&in_test) {
            if t {
                test.push(*e);
            } else {
                train.push(*e);
            }
        }
        Ok((
            Self::from_sorted_unique(self.n_rows, self.n_cols, train),
            Self::from_sorted_unique(self.n_rows, self.n_cols, test),
        ))
    }
}
