//! Block-partitioned dense matrices.
//!
//! Block indices are 1-based throughout this module: `block(1, 1)` is the
//! top-left block and `submatrix(2..=3, 1..=3)` selects block rows two and
//! three over all three block columns.

use alloc::vec::Vec;
use core::ops::RangeInclusive;

use nalgebra::DMatrix;

use crate::error::BlockError;

/// Sizes of consecutive blocks along one matrix dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    sizes: Vec<usize>,
}

impl Partition {
    pub fn new(sizes: Vec<usize>) -> Result<Self, BlockError> {
        if sizes.is_empty() {
            return Err(BlockError::EmptyPartition);
        }
        if let Some(pos) = sizes.iter().position(|&s| s == 0) {
            return Err(BlockError::ZeroBlock { index: pos + 1 });
        }
        Ok(Self { sizes })
    }

    /// `count` blocks of size one.
    pub fn scalar(count: usize) -> Result<Self, BlockError> {
        Self::new(alloc::vec![1; count])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Size of block `i` (1-based).
    pub fn size(&self, i: usize) -> Result<usize, BlockError> {
        self.check(i)?;
        Ok(self.sizes[i - 1])
    }

    /// Zero-based offset of the first scalar index of block `i` (1-based).
    pub fn offset(&self, i: usize) -> Result<usize, BlockError> {
        self.check(i)?;
        Ok(self.sizes[..i - 1].iter().sum())
    }

    /// Scalar index range covered by blocks `range` (1-based, inclusive).
    pub fn span(&self, range: RangeInclusive<usize>) -> Result<core::ops::Range<usize>, BlockError> {
        let (lo, hi) = (*range.start(), *range.end());
        if lo > hi {
            return Err(BlockError::InvertedRange { start: lo, end: hi });
        }
        self.check(lo)?;
        self.check(hi)?;
        let start = self.offset(lo)?;
        let end = self.offset(hi)? + self.sizes[hi - 1];
        Ok(start..end)
    }

    /// The partition restricted to blocks `range` (1-based, inclusive).
    pub fn restrict(&self, range: RangeInclusive<usize>) -> Result<Self, BlockError> {
        let (lo, hi) = (*range.start(), *range.end());
        if lo > hi {
            return Err(BlockError::InvertedRange { start: lo, end: hi });
        }
        self.check(lo)?;
        self.check(hi)?;
        Ok(Self {
            sizes: self.sizes[lo - 1..hi].to_vec(),
        })
    }

    fn check(&self, i: usize) -> Result<(), BlockError> {
        if i == 0 || i > self.sizes.len() {
            Err(BlockError::IndexOutOfRange {
                index: i,
                count: self.sizes.len(),
            })
        } else {
            Ok(())
        }
    }
}

/// A dense matrix together with row and column block partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedMatrix {
    data: DMatrix<f64>,
    rows: Partition,
    cols: Partition,
}

impl PartitionedMatrix {
    pub fn new(data: DMatrix<f64>, rows: Partition, cols: Partition) -> Result<Self, BlockError> {
        if data.nrows() != rows.total() || data.ncols() != cols.total() {
            return Err(BlockError::ShapeMismatch {
                rows: data.nrows(),
                cols: data.ncols(),
                expected_rows: rows.total(),
                expected_cols: cols.total(),
            });
        }
        Ok(Self { data, rows, cols })
    }

    /// Square matrix with identical row and column partitions.
    pub fn square(data: DMatrix<f64>, partition: Partition) -> Result<Self, BlockError> {
        Self::new(data, partition.clone(), partition)
    }

    pub fn zeros(rows: Partition, cols: Partition) -> Self {
        let data = DMatrix::zeros(rows.total(), cols.total());
        Self { data, rows, cols }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn row_partition(&self) -> &Partition {
        &self.rows
    }

    pub fn col_partition(&self) -> &Partition {
        &self.cols
    }

    /// Copy of block `(i, j)`.
    pub fn block(&self, i: usize, j: usize) -> Result<DMatrix<f64>, BlockError> {
        let r0 = self.rows.offset(i)?;
        let c0 = self.cols.offset(j)?;
        let (nr, nc) = (self.rows.size(i)?, self.cols.size(j)?);
        Ok(self.data.view((r0, c0), (nr, nc)).into_owned())
    }

    /// Overwrites block `(i, j)`.
    pub fn set_block(&mut self, i: usize, j: usize, value: &DMatrix<f64>) -> Result<(), BlockError> {
        let r0 = self.rows.offset(i)?;
        let c0 = self.cols.offset(j)?;
        let (nr, nc) = (self.rows.size(i)?, self.cols.size(j)?);
        if value.shape() != (nr, nc) {
            return Err(BlockError::ShapeMismatch {
                rows: value.nrows(),
                cols: value.ncols(),
                expected_rows: nr,
                expected_cols: nc,
            });
        }
        self.data.view_mut((r0, c0), (nr, nc)).copy_from(value);
        Ok(())
    }

    /// `A[i:j, k:l]`: block rows `rows` over block columns `cols`, keeping
    /// the restricted partitions.
    pub fn submatrix(
        &self,
        rows: RangeInclusive<usize>,
        cols: RangeInclusive<usize>,
    ) -> Result<PartitionedMatrix, BlockError> {
        let rspan = self.rows.span(rows.clone())?;
        let cspan = self.cols.span(cols.clone())?;
        let data = self
            .data
            .view((rspan.start, cspan.start), (rspan.len(), cspan.len()))
            .into_owned();
        Ok(PartitionedMatrix {
            data,
            rows: self.rows.restrict(rows)?,
            cols: self.cols.restrict(cols)?,
        })
    }

    /// True when every block outside `keep(i, j)` is exactly zero.
    pub fn has_block_pattern(&self, keep: impl Fn(usize, usize) -> bool) -> bool {
        for i in 1..=self.rows.len() {
            for j in 1..=self.cols.len() {
                if keep(i, j) {
                    continue;
                }
                // Indices come from the partitions themselves.
                let b = self.block(i, j).expect("valid block index");
                if b.iter().any(|&v| v != 0.0) {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_block_diagonal(&self) -> bool {
        self.has_block_pattern(|i, j| i == j)
    }

    /// Only the diagonal and first sub-diagonal blocks may be nonzero.
    pub fn is_block_lower_bidiagonal(&self) -> bool {
        self.has_block_pattern(|i, j| i == j || i == j + 1)
    }
}
