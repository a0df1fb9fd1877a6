//! Patch correspondence in feature space.
//!
//! The correspondence matrix holds the Euclidean distance between every
//! reference patch feature (rows) and every target patch feature (columns);
//! smaller means more similar. Forward matching takes the row argmin for
//! each reference patch, backward matching checks that the column argmin of
//! the chosen target patch carries the same label. All argmin ties resolve
//! to the lowest index.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::TensorFile;
use crate::patching::{PatchGrid, PatchLabel};
use crate::scalar::Scalar;

/// Per-patch feature vectors laid out row-major over a [`PatchGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T: Scalar = f32> {
    grid: PatchGrid,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(grid: PatchGrid, dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidValue(
                "feature dimension must be at least 1".into(),
            ));
        }
        if data.len() != grid.len() * dim {
            return Err(Error::dims(
                "feature map size",
                format!("{} patches x {dim}", grid.len()),
                format!("{} values", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { patch: pos / dim });
        }
        Ok(Self { grid, dim, data })
    }

    /// Builds a map from a rank-2 or rank-3 tensor.
    ///
    /// A rank-3 tensor must agree with the grid's rows and columns.
    pub fn from_tensor(tensor: &TensorFile, grid: PatchGrid) -> Result<Self> {
        let shape = tensor.shape();
        if shape.len() == 3 && (shape[0] != grid.rows() || shape[1] != grid.cols()) {
            return Err(Error::dims(
                "feature grid",
                format!("{}x{}", grid.rows(), grid.cols()),
                format!("{}x{}", shape[0], shape[1]),
            ));
        }
        if tensor.num_vectors() != grid.len() {
            return Err(Error::dims(
                "feature rows",
                grid.len(),
                tensor.num_vectors(),
            ));
        }
        let data = tensor
            .data()
            .iter()
            .map(|&v| T::from_f64_lossy(v as f64))
            .collect();
        Self::new(grid, tensor.vector_dim(), data)
    }

    /// Rank-2 `f32` tensor of shape `[num_patches, dim]`.
    pub fn to_tensor(&self) -> TensorFile {
        let data = self.data.iter().map(|v| v.to_f64_lossy() as f32).collect();
        TensorFile::new(vec![self.grid.len(), self.dim], data).expect("shape matches data")
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_patches(&self) -> usize {
        self.grid.len()
    }

    pub fn feature(&self, patch: usize) -> &[T] {
        &self.data[patch * self.dim..(patch + 1) * self.dim]
    }

    pub fn features(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }
}

/// Euclidean distance: element differences and squares in `T`, the sum in `f64`.
pub fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            (d * d).to_f64_lossy()
        })
        .sum();
    T::from_f64_lossy(sum.sqrt())
}

/// Dense `num_ref x num_target` distance matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceMatrix<T: Scalar = f32> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> CorrespondenceMatrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return Err(Error::EmptyFeatureMap);
        }
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidValue("ragged correspondence rows".into()));
        }
        if rows
            .iter()
            .flatten()
            .any(|v| !(v.is_finite() && *v >= T::zero()))
        {
            return Err(Error::InvalidValue(
                "correspondence entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row_argmin(&self, row: usize) -> (usize, T) {
        argmin(self.row(row).iter().copied())
    }

    pub fn col_argmin(&self, col: usize) -> (usize, T) {
        argmin((0..self.rows).map(|r| self.get(r, col)))
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.cols {
            values.extend((0..self.rows).map(|r| self.get(r, c)));
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }
}

/// First index of the minimum.
fn argmin<T: Scalar>(values: impl Iterator<Item = T>) -> (usize, T) {
    let mut best = (usize::MAX, T::infinity());
    for (i, v) in values.enumerate() {
        if best.0 == usize::MAX || v < best.1 {
            best = (i, v);
        }
    }
    best
}

fn check_pair<T: Scalar>(reference: &FeatureMap<T>, target: &FeatureMap<T>) -> Result<()> {
    if reference.num_patches() == 0 || target.num_patches() == 0 {
        return Err(Error::EmptyFeatureMap);
    }
    if reference.dim() != target.dim() {
        return Err(Error::FeatureDimMismatch {
            reference: reference.dim(),
            target: target.dim(),
        });
    }
    Ok(())
}

/// Distances between every reference and every target patch feature.
pub fn correspondence_matrix<T: Scalar>(
    reference: &FeatureMap<T>,
    target: &FeatureMap<T>,
) -> Result<CorrespondenceMatrix<T>> {
    check_pair(reference, target)?;
    let cols = target.num_patches();
    let mut values = vec![T::zero(); reference.num_patches() * cols];
    values
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, row)| {
            let f = reference.feature(i);
            for (out, g) in row.iter_mut().zip(target.features()) {
                *out = euclidean(f, g);
            }
        });
    Ok(CorrespondenceMatrix {
        rows: reference.num_patches(),
        cols,
        values,
    })
}

/// Row and column minima of the correspondence matrix, computed without
/// materializing it. Memory is `O(num_ref + num_target)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchExtrema<T: Scalar = f32> {
    /// `(target_patch, distance)` per reference patch.
    pub row_min: Vec<(usize, T)>,
    /// `(ref_patch, distance)` per target patch.
    pub col_min: Vec<(usize, T)>,
}

pub fn streaming_extrema<T: Scalar>(
    reference: &FeatureMap<T>,
    target: &FeatureMap<T>,
) -> Result<MatchExtrema<T>> {
    check_pair(reference, target)?;
    let cols = target.num_patches();
    let empty_cols = || vec![(usize::MAX, T::infinity()); cols];
    // Rows are folded in index order within each chunk and chunks are merged
    // preferring the lower row index, so ties match the dense path.
    let merge = |mut a: Vec<(usize, T)>, b: Vec<(usize, T)>| {
        for (x, y) in a.iter_mut().zip(b) {
            if y.0 != usize::MAX && (x.0 == usize::MAX || y.1 < x.1 || (y.1 == x.1 && y.0 < x.0)) {
                *x = y;
            }
        }
        a
    };
    let (row_min, col_min) = (0..reference.num_patches())
        .into_par_iter()
        .fold(
            || (Vec::new(), empty_cols()),
            |(mut rows, mut col_min), i| {
                let f = reference.feature(i);
                let mut best = (usize::MAX, T::infinity());
                for (j, g) in target.features().enumerate() {
                    let d = euclidean(f, g);
                    if best.0 == usize::MAX || d < best.1 {
                        best = (j, d);
                    }
                    let c = &mut col_min[j];
                    if c.0 == usize::MAX || d < c.1 || (d == c.1 && i < c.0) {
                        *c = (i, d);
                    }
                }
                rows.push((i, best));
                (rows, col_min)
            },
        )
        .reduce(
            || (Vec::new(), empty_cols()),
            |(mut ra, ca), (rb, cb)| {
                ra.extend(rb);
                (ra, merge(ca, cb))
            },
        );
    let mut row_min = row_min;
    row_min.sort_by_key(|&(i, _)| i);
    Ok(MatchExtrema {
        row_min: row_min.into_iter().map(|(_, best)| best).collect(),
        col_min,
    })
}

/// A prompt proposal: a target patch tied to the reference patch it matched.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidatePrompt<T: Scalar = f32> {
    pub target_patch: usize,
    pub label: PatchLabel,
    pub source_ref_patch: usize,
    pub distance: T,
}

fn check_labels<T: Scalar>(m: &CorrespondenceMatrix<T>, labels: &[PatchLabel]) -> Result<()> {
    if labels.len() != m.num_rows() {
        return Err(Error::dims(
            "reference label count",
            m.num_rows(),
            labels.len(),
        ));
    }
    Ok(())
}

/// One candidate per reference patch: the nearest target patch, carrying
/// the reference patch's label.
pub fn forward_match<T: Scalar>(
    m: &CorrespondenceMatrix<T>,
    ref_labels: &[PatchLabel],
) -> Result<Vec<CandidatePrompt<T>>> {
    check_labels(m, ref_labels)?;
    Ok(ref_labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let (j, d) = m.row_argmin(i);
            CandidatePrompt {
                target_patch: j,
                label,
                source_ref_patch: i,
                distance: d,
            }
        })
        .collect())
}

/// Retained and excluded candidates, in input order.
pub type BackwardSplit<T> = (Vec<CandidatePrompt<T>>, Vec<CandidatePrompt<T>>);

/// Splits candidates into those whose target patch matches back to a
/// reference patch of the same label, and those that do not.
///
/// Excluded candidates are re-pointed at the column argmin reference patch,
/// so their `distance` is the column minimum. Order is preserved in both
/// lists.
pub fn backward_match<T: Scalar>(
    m: &CorrespondenceMatrix<T>,
    candidates: &[CandidatePrompt<T>],
    ref_labels: &[PatchLabel],
) -> Result<BackwardSplit<T>> {
    check_labels(m, ref_labels)?;
    let mut col_cache: Vec<Option<(usize, T)>> = vec![None; m.num_cols()];
    split_by_backward(candidates, ref_labels, m.num_cols(), |j| {
        *col_cache[j].get_or_insert_with(|| m.col_argmin(j))
    })
}

fn split_by_backward<T: Scalar>(
    candidates: &[CandidatePrompt<T>],
    ref_labels: &[PatchLabel],
    num_cols: usize,
    mut col_argmin: impl FnMut(usize) -> (usize, T),
) -> Result<BackwardSplit<T>> {
    let mut retained = Vec::new();
    let mut excluded = Vec::new();
    for c in candidates {
        if c.target_patch >= num_cols {
            return Err(Error::PatchIndexOutOfRange {
                index: c.target_patch,
                len: num_cols,
            });
        }
        let (back, d) = col_argmin(c.target_patch);
        if ref_labels[back] == c.label {
            retained.push(*c);
        } else {
            excluded.push(CandidatePrompt {
                source_ref_patch: back,
                distance: d,
                ..*c
            });
        }
    }
    Ok((retained, excluded))
}

impl<T: Scalar> MatchExtrema<T> {
    /// Same result as [`forward_match`] on the dense matrix.
    pub fn forward(&self, ref_labels: &[PatchLabel]) -> Result<Vec<CandidatePrompt<T>>> {
        if ref_labels.len() != self.row_min.len() {
            return Err(Error::dims(
                "reference label count",
                self.row_min.len(),
                ref_labels.len(),
            ));
        }
        Ok(ref_labels
            .iter()
            .zip(&self.row_min)
            .enumerate()
            .map(|(i, (&label, &(j, d)))| CandidatePrompt {
                target_patch: j,
                label,
                source_ref_patch: i,
                distance: d,
            })
            .collect())
    }

    /// Same result as [`backward_match`] on the dense matrix.
    pub fn backward(
        &self,
        candidates: &[CandidatePrompt<T>],
        ref_labels: &[PatchLabel],
    ) -> Result<BackwardSplit<T>> {
        if ref_labels.len() != self.row_min.len() {
            return Err(Error::dims(
                "reference label count",
                self.row_min.len(),
                ref_labels.len(),
            ));
        }
        split_by_backward(candidates, ref_labels, self.col_min.len(), |j| {
            self.col_min[j]
        })
    }
}

/// Which excluded candidates define the mean distance threshold for hard
/// negatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HardMeanScope {
    #[default]
    PositiveExcludedOnly,
    AllExcluded,
}

/// Hard-negative candidates: excluded candidates whose forward label was
/// positive and whose distance is strictly below the mean distance.
///
/// The returned candidates are to be placed as hard negatives.
pub fn select_hard_negatives<T: Scalar>(
    excluded: &[CandidatePrompt<T>],
    scope: HardMeanScope,
) -> Vec<CandidatePrompt<T>> {
    let positive = |c: &&CandidatePrompt<T>| c.label == PatchLabel::Positive;
    let pool: Vec<f64> = match scope {
        HardMeanScope::PositiveExcludedOnly => excluded
            .iter()
            .filter(positive)
            .map(|c| c.distance.to_f64_lossy())
            .collect(),
        HardMeanScope::AllExcluded => excluded.iter().map(|c| c.distance.to_f64_lossy()).collect(),
    };
    if pool.is_empty() {
        return Vec::new();
    }
    let mean = pool.iter().sum::<f64>() / pool.len() as f64;
    excluded
        .iter()
        .filter(positive)
        .filter(|c| c.distance.to_f64_lossy() < mean)
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patching::build_patch_grid;
    use PatchLabel::{Negative as Neg, Positive as Pos};

    fn map(rows: &[&[f32]]) -> FeatureMap<f32> {
        let grid = PatchGrid::from_shape(1, rows.len(), 1, 1).unwrap();
        FeatureMap::new(
            grid,
            rows[0].len(),
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    fn matrix(rows: &[&[f64]]) -> CorrespondenceMatrix<f64> {
        CorrespondenceMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn identical_vectors() {
        let m = correspondence_matrix(&map(&[&[1.0, 0.0]]), &map(&[&[1.0, 0.0]])).unwrap();
        assert_eq!(m.values(), &[0.0]);
    }

    #[test]
    fn three_four_five() {
        let m = correspondence_matrix(&map(&[&[0.0, 0.0]]), &map(&[&[3.0, 4.0]])).unwrap();
        assert_eq!(m.values(), &[5.0]);
    }

    #[test]
    fn dimension_errors() {
        let a = map(&[&[0.0, 0.0]]);
        let b = map(&[&[0.0, 0.0, 0.0]]);
        assert!(matches!(
            correspondence_matrix(&a, &b),
            Err(Error::FeatureDimMismatch {
                reference: 2,
                target: 3
            })
        ));
        let grid = build_patch_grid(4, 4, 4, 4).unwrap();
        assert!(FeatureMap::<f32>::new(grid, 2, vec![0.0; 3]).is_err());
        assert!(matches!(
            FeatureMap::<f32>::new(grid, 2, vec![0.0, f32::NAN]),
            Err(Error::NonFiniteFeature { patch: 0 })
        ));
    }

    #[test]
    fn forward_row_argmin() {
        let m = matrix(&[&[0.1, 0.9], &[0.8, 0.2]]);
        let c = forward_match(&m, &[Pos, Neg]).unwrap();
        assert_eq!(
            c.iter()
                .map(|c| (c.target_patch, c.label, c.source_ref_patch))
                .collect::<Vec<_>>(),
            vec![(0, Pos, 0), (1, Neg, 1)]
        );
        assert!(forward_match(&m, &[Pos]).is_err());
    }

    #[test]
    fn forward_ties_take_lowest_index() {
        let m = matrix(&[&[0.5, 0.4, 0.1, 0.3, 0.2, 0.1, 0.9]]);
        let c = forward_match(&m, &[Pos]).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].target_patch, 2);
    }

    #[test]
    fn backward_retains_consistent() {
        let m = matrix(&[&[0.1, 0.2], &[0.3, 0.05]]);
        let labels = [Pos, Neg];
        let fwd = forward_match(&m, &labels).unwrap();
        let (kept, excl) = backward_match(&m, &fwd, &labels).unwrap();
        assert_eq!(kept.len(), 2);
        assert!(excl.is_empty());

        let m = matrix(&[&[0.5, 0.1], &[0.2, 0.3]]);
        let fwd = forward_match(&m, &labels).unwrap();
        assert_eq!((fwd[0].target_patch, fwd[1].target_patch), (1, 0));
        let (kept, excl) = backward_match(&m, &fwd, &labels).unwrap();
        assert_eq!(kept, fwd);
        assert!(excl.is_empty());
    }

    #[test]
    fn backward_excludes_label_flip() {
        // ref 0 (Pos) -> target 0, but target 0 is closest to ref 1 (Neg)
        let m = matrix(&[&[0.3, 0.9], &[0.1, 0.2]]);
        let labels = [Pos, Neg];
        let fwd = forward_match(&m, &labels).unwrap();
        let (kept, excl) = backward_match(&m, &fwd, &labels).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].label, Neg);
        assert_eq!(excl.len(), 1);
        assert_eq!(excl[0].label, Pos);
        assert_eq!(excl[0].source_ref_patch, 1);
        assert_eq!(excl[0].distance, 0.1);
        assert_eq!(
            excl[0].distance,
            m.get(excl[0].source_ref_patch, excl[0].target_patch)
        );
    }

    fn excluded(distances: &[(f64, PatchLabel)]) -> Vec<CandidatePrompt<f64>> {
        distances
            .iter()
            .enumerate()
            .map(|(i, &(d, label))| CandidatePrompt {
                target_patch: i,
                label,
                source_ref_patch: 0,
                distance: d,
            })
            .collect()
    }

    #[test]
    fn hard_negatives_below_mean() {
        let ex = excluded(&[(0.2, Pos), (0.4, Pos), (0.9, Pos)]);
        let hard = select_hard_negatives(&ex, HardMeanScope::PositiveExcludedOnly);
        assert_eq!(
            hard.iter().map(|c| c.distance).collect::<Vec<_>>(),
            vec![0.2, 0.4]
        );
    }

    #[test]
    fn hard_negatives_degenerate() {
        let one = excluded(&[(0.3, Pos)]);
        assert!(select_hard_negatives(&one, HardMeanScope::PositiveExcludedOnly).is_empty());
        assert!(select_hard_negatives::<f64>(&[], HardMeanScope::AllExcluded).is_empty());
    }

    #[test]
    fn hard_negative_scope() {
        // Positive-only mean is 0.5; including the negative raises it to 1.0.
        let ex = excluded(&[(0.4, Pos), (0.6, Pos), (2.0, Neg)]);
        let only = select_hard_negatives(&ex, HardMeanScope::PositiveExcludedOnly);
        assert_eq!(only.len(), 1);
        let all = select_hard_negatives(&ex, HardMeanScope::AllExcluded);
        assert_eq!(all.len(), 2);
        assert!(all.iter().all(|c| c.label == Pos));
    }

    #[test]
    fn streaming_matches_dense() {
        let a = map(&[&[0.0, 1.0], &[2.0, 2.0], &[1.0, 1.0], &[0.0, 1.0]]);
        let b = map(&[&[1.0, 1.0], &[0.0, 1.0], &[0.0, 1.0]]);
        let m = correspondence_matrix(&a, &b).unwrap();
        let s = streaming_extrema(&a, &b).unwrap();
        for i in 0..m.num_rows() {
            assert_eq!(s.row_min[i], m.row_argmin(i));
        }
        for j in 0..m.num_cols() {
            assert_eq!(s.col_min[j], m.col_argmin(j));
        }
    }
}
