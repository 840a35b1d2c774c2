//! Minimal sparse kernels for the master-equation right-hand side.
//!
//! The jump operators and the Hamiltonian are very sparse in the local
//! exciton-product basis, so the vectorised Lindblad generator is assembled
//! once as a CSR matrix and applied per integrator stage. Only what the
//! propagator needs lives here; the dense superoperator used for spectral
//! analysis is built in [`crate::liouville`].

use ndarray::Array2;
use num_complex::Complex;
use num_traits::Zero;
use rayon::prelude::*;

use crate::scalar::Scalar;

/// Triplet accumulator.
pub(crate) struct Coo<R: Scalar> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub triplets: Vec<(u32, u32, Complex<R>)>,
}

impl<R: Scalar> Coo<R> {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, triplets: Vec::new() }
    }

    pub fn from_dense(a: &Array2<Complex<R>>) -> Self {
        let (m, n) = a.dim();
        let mut out = Self::new(m, n);
        for ((i, j), v) in a.indexed_iter() {
            if !v.is_zero() {
                out.triplets.push((i as u32, j as u32, *v));
            }
        }
        out
    }

    #[cfg(test)]
    pub fn push(&mut self, i: usize, j: usize, v: Complex<R>) {
        if !v.is_zero() {
            self.triplets.push((i as u32, j as u32, v));
        }
    }

    /// Kronecker product, row-major block convention: entry
    /// `(i_a * nb + i_b, j_a * nb + j_b) = a_ij * b_ij`.
    pub fn kron(&self, b: &Coo<R>) -> Coo<R> {
        let mut out = Coo::new(self.n_rows * b.n_rows, self.n_cols * b.n_cols);
        out.triplets.reserve(self.triplets.len() * b.triplets.len());
        let (brows, bcols) = (b.n_rows as u32, b.n_cols as u32);
        for &(ia, ja, va) in &self.triplets {
            for &(ib, jb, vb) in &b.triplets {
                out.triplets.push((ia * brows + ib, ja * bcols + jb, va * vb));
            }
        }
        out
    }

    pub fn scaled(mut self, s: Complex<R>) -> Coo<R> {
        for t in &mut self.triplets {
            t.2 *= s;
        }
        self
    }

    pub fn extend_from(&mut self, other: Coo<R>) {
        debug_assert_eq!(self.n_rows, other.n_rows);
        debug_assert_eq!(self.n_cols, other.n_cols);
        self.triplets.extend(other.triplets);
    }

    pub fn transpose(&self) -> Coo<R> {
        let mut out = Coo::new(self.n_cols, self.n_rows);
        out.triplets = self.triplets.iter().map(|&(i, j, v)| (j, i, v)).collect();
        out
    }

    pub fn conj(&self) -> Coo<R> {
        let mut out = Coo::new(self.n_rows, self.n_cols);
        out.triplets = self.triplets.iter().map(|&(i, j, v)| (i, j, v.conj())).collect();
        out
    }

    pub fn dagger(&self) -> Coo<R> {
        self.transpose().conj()
    }

    /// Sparse-sparse product (used only during generator assembly).
    pub fn matmul(&self, b: &Coo<R>) -> Coo<R> {
        debug_assert_eq!(self.n_cols, b.n_rows);
        // index b by row
        let mut by_row: Vec<Vec<(u32, Complex<R>)>> = vec![Vec::new(); b.n_rows];
        for &(i, j, v) in &b.triplets {
            by_row[i as usize].push((j, v));
        }
        let mut out = Coo::new(self.n_rows, b.n_cols);
        for &(i, k, va) in &self.triplets {
            for &(j, vb) in &by_row[k as usize] {
                out.triplets.push((i, j, va * vb));
            }
        }
        out
    }

    pub fn identity(n: usize) -> Coo<R> {
        let one = Complex::new(R::one(), R::zero());
        let mut out = Coo::new(n, n);
        out.triplets = (0..n as u32).map(|i| (i, i, one)).collect();
        out
    }
}

/// Compressed sparse rows with merged duplicates.
pub(crate) struct Csr<R: Scalar> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<Complex<R>>,
}

impl<R: Scalar> Csr<R> {
    pub fn from_coo(coo: &Coo<R>) -> Self {
        let mut trip = coo.triplets.clone();
        trip.sort_unstable_by_key(|&(i, j, _)| (i, j));

        let mut indptr = Vec::with_capacity(coo.n_rows + 1);
        indptr.push(0usize);
        let mut indices: Vec<u32> = Vec::with_capacity(trip.len());
        let mut data: Vec<Complex<R>> = Vec::with_capacity(trip.len());
        let mut row = 0usize;
        for (i, j, v) in trip {
            let i = i as usize;
            while row < i {
                indptr.push(indices.len());
                row += 1;
            }
            if indices.len() > indptr[row] && *indices.last().unwrap() == j {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
            }
        }
        while row < coo.n_rows {
            indptr.push(indices.len());
            row += 1;
        }

        let mut out = Self { n_rows: coo.n_rows, n_cols: coo.n_cols, indptr, indices, data };
        out.prune();
        out
    }

    fn prune(&mut self) {
        let mut indptr = vec![0usize; self.n_rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if !self.data[k].is_zero() {
                    indices.push(self.indices[k]);
                    data.push(self.data[k]);
                }
            }
            indptr[i + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.data = data;
    }

    #[cfg(test)]
    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// `y = A x`. Row-parallel; bitwise deterministic for a fixed thread pool.
    pub fn matvec(&self, x: &[Complex<R>], y: &mut [Complex<R>]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        let indptr = &self.indptr;
        let indices = &self.indices;
        let data = &self.data;
        y.par_iter_mut().enumerate().with_min_len(512).for_each(|(i, yi)| {
            let mut acc = Complex::new(R::zero(), R::zero());
            for k in indptr[i]..indptr[i + 1] {
                acc += data[k] * x[indices[k] as usize];
            }
            *yi = acc;
        });
    }
}
