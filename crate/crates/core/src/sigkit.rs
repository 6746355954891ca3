//! Signal windowing, Hankel and block-Toeplitz assembly, numerical rank.
//!
//! Indexing follows the usual fault-detection convention: a sequence with
//! start index `k0` holds samples `phi(k0+1), ..., phi(k0+N)`, and the
//! stacked window anchored at `k` is `[phi(k+1); ...; phi(k+s)]`. Storage is
//! 0-based; the anchor is kept explicitly so formulas map one to one.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative tolerance for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// An ordered list of equally sized real vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSequence {
    /// One column per sample (q x N).
    data: DMatrix<f64>,
    start: i64,
}

impl SignalSequence {
    /// Samples are the columns of `data`; the first column is `phi(start+1)`.
    pub fn new(data: DMatrix<f64>, start: i64) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::Size("signal dimension must be at least 1".into()));
        }
        if data.ncols() == 0 {
            return Err(Error::Size("signal must contain at least one sample".into()));
        }
        Ok(Self { data, start })
    }

    pub fn from_samples(samples: &[DVector<f64>], start: i64) -> Result<Self> {
        let q = samples.first().map_or(0, |s| s.len());
        if samples.iter().any(|s| s.len() != q) {
            return Err(Error::Shape("samples differ in dimension".into()));
        }
        let mut data = DMatrix::zeros(q, samples.len());
        for (j, s) in samples.iter().enumerate() {
            data.set_column(j, s);
        }
        Self::new(data, start)
    }

    /// Scalar sequence starting at `start`.
    pub fn from_scalars(values: &[f64], start: i64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, values.len(), values), start)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    /// The start index `k0`; the first sample is `phi(k0 + 1)`.
    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn first_index(&self) -> i64 {
        self.start + 1
    }

    pub fn last_index(&self) -> i64 {
        self.start + self.len() as i64
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Sample `phi(index)` using the sequence's own index convention.
    pub fn at(&self, index: i64) -> Result<DVector<f64>> {
        if index < self.first_index() || index > self.last_index() {
            return Err(Error::Range {
                index,
                first: self.first_index(),
                last: self.last_index(),
            });
        }
        Ok(self.data.column((index - self.first_index()) as usize).into_owned())
    }

    /// Sample by 0-based position.
    pub fn sample(&self, pos: usize) -> DVector<f64> {
        self.data.column(pos).into_owned()
    }

    /// Sub-sequence of `count` samples beginning at 0-based position `from`,
    /// keeping the original index labels.
    pub fn slice(&self, from: usize, count: usize) -> Result<Self> {
        if count == 0 || from + count > self.len() {
            return Err(Error::Size(format!(
                "slice [{from}, {}) outside sequence of length {}",
                from + count,
                self.len()
            )));
        }
        Self::new(self.data.columns(from, count).into_owned(), self.start + from as i64)
    }
}

/// `phi_s(k)`: `s` consecutive samples stacked top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedWindow {
    pub entries: DVector<f64>,
    pub depth: usize,
    pub anchor: i64,
}

/// Block Hankel matrix `H_s(phi)`; column `j` (0-based) is the window
/// anchored at `anchor + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    pub data: DMatrix<f64>,
    pub depth: usize,
    pub block_rows: usize,
    pub anchor: i64,
}

impl HankelMatrix {
    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }
}

pub fn stack_window(seq: &SignalSequence, s: usize, k: i64) -> Result<StackedWindow> {
    if s == 0 {
        return Err(Error::Size("window depth must be at least 1".into()));
    }
    let first = k + 1;
    let last = k + s as i64;
    for index in [first, last] {
        if index < seq.first_index() || index > seq.last_index() {
            return Err(Error::Range {
                index,
                first: seq.first_index(),
                last: seq.last_index(),
            });
        }
    }
    let q = seq.dim();
    let pos = (first - seq.first_index()) as usize;
    let mut entries = DVector::zeros(s * q);
    for i in 0..s {
        entries.rows_mut(i * q, q).copy_from(&seq.data.column(pos + i));
    }
    Ok(StackedWindow { entries, depth: s, anchor: k })
}

pub fn build_hankel(seq: &SignalSequence, s: usize) -> Result<HankelMatrix> {
    let n = seq.len();
    if s == 0 || n < s {
        return Err(Error::Size(format!(
            "Hankel depth {s} needs 1 <= s <= N = {n}"
        )));
    }
    let q = seq.dim();
    let cols = n - s + 1;
    let mut data = DMatrix::zeros(s * q, cols);
    for j in 0..cols {
        for i in 0..s {
            data.view_mut((i * q, j), (q, 1))
                .copy_from(&seq.data.column(i + j));
        }
    }
    Ok(HankelMatrix { data, depth: s, block_rows: q, anchor: seq.start })
}

/// Block-Toeplitz layout: block `(i, j)` (0-based) is `G_{l+i-j}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockToeplitzSpec {
    pub rows_blocks: usize,
    pub cols_blocks: usize,
    pub offset_base: i64,
}

impl BlockToeplitzSpec {
    pub fn new(rows_blocks: usize, cols_blocks: usize, offset_base: i64) -> Self {
        Self { rows_blocks, cols_blocks, offset_base }
    }

    /// Realize the matrix; `block_fn` is called once per distinct offset.
    pub fn realize<F>(&self, mut block_fn: F) -> Result<DMatrix<f64>>
    where
        F: FnMut(i64) -> DMatrix<f64>,
    {
        let (q, t, l) = (self.rows_blocks, self.cols_blocks, self.offset_base);
        if q == 0 || t == 0 {
            return Err(Error::Size("Toeplitz needs at least one block row and column".into()));
        }
        let lo = l - (t as i64 - 1);
        let hi = l + q as i64 - 1;
        let blocks: Vec<DMatrix<f64>> = (lo..=hi).map(&mut block_fn).collect();
        let (br, bc) = blocks[0].shape();
        if let Some(bad) = blocks.iter().position(|b| b.shape() != (br, bc)) {
            return Err(Error::Shape(format!(
                "block at offset {} is {:?}, expected {:?}",
                lo + bad as i64,
                blocks[bad].shape(),
                (br, bc)
            )));
        }
        let mut out = DMatrix::zeros(q * br, t * bc);
        for i in 0..q {
            for j in 0..t {
                let off = l + i as i64 - j as i64;
                let b = &blocks[(off - lo) as usize];
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(b);
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper around [`BlockToeplitzSpec::realize`].
pub fn realize_toeplitz<F>(spec: &BlockToeplitzSpec, block_fn: F) -> Result<DMatrix<f64>>
where
    F: FnMut(i64) -> DMatrix<f64>,
{
    spec.realize(block_fn)
}

/// Number of singular values above `rel_tol * sigma_max * max(rows, cols)`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Size("rank of an empty matrix".into()));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::Parameter(format!("rel_tol must be positive, got {rel_tol}")));
    }
    let sigma = linalg::singular_values(m);
    Ok(linalg::rank_from_singular_values(&sigma, rel_tol, m.nrows(), m.ncols()))
}

/// Persistent excitation of the given order: `H_order(u)` has full row rank.
pub fn persistence_order(u: &SignalSequence, order: usize, rel_tol: f64) -> Result<bool> {
    if order == 0 || u.len() < order {
        return Err(Error::Size(format!(
            "excitation order {order} needs 1 <= order <= N = {}",
            u.len()
        )));
    }
    let h = build_hankel(u, order)?;
    Ok(numerical_rank(&h.data, rel_tol)? == order * u.dim())
}
