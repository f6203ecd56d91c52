//! Sparse complex operators over a declared basis.
//!
//! Compressed sparse row storage. Operators are immutable after
//! construction; all combinators return new values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::statespace::BasisRef;
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    basis: BasisRef,
    hermitian: bool,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl OperatorMatrix {
    /// Assemble from (row, col, value) triplets. Duplicates are summed,
    /// exact zeros dropped. The hermitian flag is the caller's promise and
    /// can be audited with [`OperatorMatrix::hermiticity_defect`].
    pub fn from_triplets(
        basis: BasisRef,
        triplets: Vec<(usize, usize, C64)>,
        hermitian: bool,
    ) -> Self {
        let dim = basis.dim();
        let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); dim];
        for (r, c, v) in triplets {
            debug_assert!(r < dim && c < dim);
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|(c, _)| *c);
            let mut i = 0;
            while i < row.len() {
                let col = row[i].0;
                let mut acc = C64::new(0.0, 0.0);
                while i < row.len() && row[i].0 == col {
                    acc += row[i].1;
                    i += 1;
                }
                if acc.re != 0.0 || acc.im != 0.0 {
                    indices.push(col);
                    values.push(acc);
                }
            }
            indptr.push(indices.len());
        }
        OperatorMatrix {
            basis,
            hermitian,
            indptr,
            indices,
            values,
        }
    }

    pub fn zero(basis: BasisRef) -> Self {
        OperatorMatrix::from_triplets(basis, Vec::new(), true)
    }

    pub fn basis(&self) -> &BasisRef {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        debug_assert_eq!(v.len(), self.dim());
        let mut out = DVector::zeros(self.dim());
        for r in 0..self.dim() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * v[self.indices[k]];
            }
            out[r] = acc;
        }
        out
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        let range = self.indptr[row]..self.indptr[row + 1];
        match self.indices[range.clone()].binary_search(&col) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.dim() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                triplets.push((self.indices[k], r, self.values[k].conj()));
            }
        }
        OperatorMatrix::from_triplets(self.basis.clone(), triplets, self.hermitian)
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out.hermitian = self.hermitian && factor.im == 0.0;
        out
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &OperatorMatrix, factor: C64) -> Result<Self> {
        self.check_same_basis(other)?;
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.dim() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                triplets.push((r, self.indices[k], self.values[k]));
            }
            for k in other.indptr[r]..other.indptr[r + 1] {
                triplets.push((r, other.indices[k], factor * other.values[k]));
            }
        }
        let hermitian = self.hermitian && other.hermitian && factor.im == 0.0;
        Ok(OperatorMatrix::from_triplets(
            self.basis.clone(),
            triplets,
            hermitian,
        ))
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &OperatorMatrix) -> Result<Self> {
        self.check_same_basis(other)?;
        let dim = self.dim();
        let mut triplets = Vec::new();
        let mut acc: Vec<C64> = vec![C64::new(0.0, 0.0); dim];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..dim {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let mid = self.indices[k];
                let w = self.values[k];
                for k2 in other.indptr[mid]..other.indptr[mid + 1] {
                    let c = other.indices[k2];
                    if acc[c].re == 0.0 && acc[c].im == 0.0 {
                        touched.push(c);
                    }
                    acc[c] += w * other.values[k2];
                }
            }
            for &c in &touched {
                triplets.push((r, c, acc[c]));
                acc[c] = C64::new(0.0, 0.0);
            }
            touched.clear();
        }
        Ok(OperatorMatrix::from_triplets(
            self.basis.clone(),
            triplets,
            false,
        ))
    }

    /// Largest entry magnitude.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Max-norm of `A - A^dagger`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for r in 0..self.dim() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                defect = defect.max((self.values[k] - self.entry(c, r).conj()).norm());
            }
        }
        defect
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for r in 0..self.dim() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                m[(r, self.indices[k])] = self.values[k];
            }
        }
        m
    }

    fn check_same_basis(&self, other: &OperatorMatrix) -> Result<()> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch {
                context: "operators act on different bases".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::FullBasis;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn tiny_basis() -> BasisRef {
        BasisRef::Full(FullBasis::spin_only(2))
    }

    #[test]
    fn triplets_merge_and_drop_zeros() {
        let m = OperatorMatrix::from_triplets(
            tiny_basis(),
            vec![
                (0, 1, c(1.0, 0.0)),
                (0, 1, c(-1.0, 0.0)),
                (2, 3, c(0.5, 0.5)),
            ],
            false,
        );
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.entry(2, 3), c(0.5, 0.5));
        assert_eq!(m.entry(0, 1), c(0.0, 0.0));
    }

    #[test]
    fn apply_and_adjoint() {
        let m = OperatorMatrix::from_triplets(
            tiny_basis(),
            vec![(0, 1, c(2.0, 0.0)), (1, 2, c(0.0, 1.0))],
            false,
        );
        let mut v = DVector::zeros(4);
        v[1] = c(1.0, 0.0);
        v[2] = c(1.0, 0.0);
        let out = m.apply(&v);
        assert_eq!(out[0], c(2.0, 0.0));
        assert_eq!(out[1], c(0.0, 1.0));

        let adj = m.adjoint();
        assert_eq!(adj.entry(1, 0), c(2.0, 0.0));
        assert_eq!(adj.entry(2, 1), c(0.0, -1.0));
    }

    #[test]
    fn matmul_matches_dense() {
        let a = OperatorMatrix::from_triplets(
            tiny_basis(),
            vec![(0, 1, c(1.0, 2.0)), (1, 3, c(-1.0, 0.0)), (2, 2, c(0.5, 0.0))],
            false,
        );
        let b = OperatorMatrix::from_triplets(
            tiny_basis(),
            vec![(1, 0, c(3.0, 0.0)), (3, 2, c(0.0, 1.0)), (2, 1, c(1.0, 1.0))],
            false,
        );
        let ab = a.matmul(&b).unwrap();
        let dense = a.to_dense() * b.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert!((ab.entry(i, j) - dense[(i, j)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn hermiticity_defect_detects_asymmetry() {
        let sym = OperatorMatrix::from_triplets(
            tiny_basis(),
            vec![(0, 1, c(1.0, 1.0)), (1, 0, c(1.0, -1.0))],
            true,
        );
        assert!(sym.hermiticity_defect() < 1e-15);

        let bad = OperatorMatrix::from_triplets(tiny_basis(), vec![(0, 1, c(1.0, 0.0))], false);
        assert!(bad.hermiticity_defect() > 0.9);
    }
}
