//! Sparse and banded complex linear algebra used by the superoperator code.

use std::os::raw::{c_char, c_int};

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Eigh, Inverse, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Compressed-sparse-row complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = CsrMatrix { nrows, ncols, indptr, indices, data };
        m.prune();
        m
    }

    fn prune(&mut self) {
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.data[k] != C64::new(0.0, 0.0) {
                    indices.push(self.indices[k]);
                    data.push(self.data[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.data = data;
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            y[r] = acc;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                t.push((self.indices[k], r, self.data[k].conj()));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut a = Array2::zeros((self.nrows, self.ncols));
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                a[(r, self.indices[k])] += self.data[k];
            }
        }
        a
    }

    /// `(kl, ku)`: number of sub- and super-diagonals holding nonzeros.
    pub fn bandwidth(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                if r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    /// Matrix 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let mut col = vec![0.0; self.ncols];
        for (k, &c) in self.indices.iter().enumerate() {
            col[c] += self.data[k].norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }
}

/// Replacement rows applied before factorization.
#[derive(Debug, Clone, Default)]
pub struct RowOverride {
    pub rows: Vec<(usize, Vec<(usize, C64)>)>,
}

/// LU factorization of a square banded matrix `A − σI` (LAPACK `zgbtrf`).
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
    ipiv: Vec<c_int>,
    rcond: f64,
}

impl std::fmt::Debug for BandedLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BandedLu")
            .field("n", &self.n)
            .field("kl", &self.kl)
            .field("ku", &self.ku)
            .field("rcond", &self.rcond)
            .finish()
    }
}

fn lapack_int(x: usize) -> Result<c_int> {
    c_int::try_from(x).map_err(|_| Error::ResourceCap(format!("dimension {x} exceeds LAPACK integer range")))
}

fn as_lapack(p: *const C64) -> *const lapack_sys::__BindgenComplex<f64> {
    p.cast()
}

fn as_lapack_mut(p: *mut C64) -> *mut lapack_sys::__BindgenComplex<f64> {
    p.cast()
}

/// Cap on the banded storage, in complex entries (about 3 GiB).
pub const MAX_BAND_ENTRIES: usize = 200_000_000;

impl BandedLu {
    /// Factorizes `a − shift·I`, with selected rows optionally replaced.
    pub fn factor(a: &CsrMatrix, shift: C64, overrides: &RowOverride) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::InvalidParameter("banded LU needs a square matrix".into()));
        }
        let n = a.nrows;
        let (mut kl, mut ku) = a.bandwidth();
        for (r, entries) in &overrides.rows {
            for &(c, _) in entries {
                if *r > c {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        let ldab = 2 * kl + ku + 1;
        let total = ldab
            .checked_mul(n)
            .filter(|&t| t <= MAX_BAND_ENTRIES)
            .ok_or_else(|| Error::ResourceCap(format!("banded storage {ldab}×{n} exceeds cap")))?;
        let mut ab = vec![C64::new(0.0, 0.0); total];
        let mut overridden = vec![false; n];
        for (r, _) in &overrides.rows {
            overridden[*r] = true;
        }
        let at = |i: usize, j: usize| kl + ku + i - j + j * ldab;
        for r in 0..n {
            if overridden[r] {
                continue;
            }
            for k in a.indptr[r]..a.indptr[r + 1] {
                ab[at(r, a.indices[k])] += a.data[k];
            }
            ab[at(r, r)] -= shift;
        }
        for (r, entries) in &overrides.rows {
            for &(c, v) in entries {
                ab[at(*r, c)] += v;
            }
        }
        let mut anorm_cols = vec![0.0f64; n];
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl + 1).min(n);
            for i in lo..hi {
                anorm_cols[j] += ab[at(i, j)].norm();
            }
        }
        let anorm = anorm_cols.into_iter().fold(0.0, f64::max);

        let (ni, kli, kui, ldi) = (lapack_int(n)?, lapack_int(kl)?, lapack_int(ku)?, lapack_int(ldab)?);
        let mut ipiv = vec![0 as c_int; n];
        let mut info: c_int = 0;
        unsafe {
            lapack_sys::zgbtrf_(&ni, &ni, &kli, &kui, as_lapack_mut(ab.as_mut_ptr()), &ldi, ipiv.as_mut_ptr(), &mut info);
        }
        if info < 0 {
            return Err(Error::Numerical(format!("zgbtrf: illegal argument {}", -info)));
        }
        let rcond = if info > 0 {
            0.0
        } else {
            let mut rcond = 0.0;
            let mut work = vec![C64::new(0.0, 0.0); 2 * n];
            let mut rwork = vec![0.0f64; n];
            let norm = b'1' as c_char;
            unsafe {
                lapack_sys::zgbcon_(
                    &norm,
                    &ni,
                    &kli,
                    &kui,
                    as_lapack(ab.as_ptr()),
                    &ldi,
                    ipiv.as_ptr(),
                    &anorm,
                    &mut rcond,
                    as_lapack_mut(work.as_mut_ptr()),
                    rwork.as_mut_ptr(),
                    &mut info,
                );
            }
            rcond
        };
        Ok(BandedLu { n, kl, ku, ldab, ab, ipiv, rcond })
    }

    /// Reciprocal 1-norm condition estimate; zero for an exactly singular factor.
    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn solve_impl(&self, b: &mut [C64], trans: u8) -> Result<()> {
        if self.rcond == 0.0 {
            return Err(Error::Numerical("banded solve with a singular factor".into()));
        }
        assert_eq!(b.len(), self.n);
        let (ni, kli, kui, ldi) =
            (lapack_int(self.n)?, lapack_int(self.kl)?, lapack_int(self.ku)?, lapack_int(self.ldab)?);
        let nrhs: c_int = 1;
        let mut info: c_int = 0;
        let t = trans as c_char;
        unsafe {
            lapack_sys::zgbtrs_(
                &t,
                &ni,
                &kli,
                &kui,
                &nrhs,
                as_lapack(self.ab.as_ptr()),
                &ldi,
                self.ipiv.as_ptr(),
                as_lapack_mut(b.as_mut_ptr()),
                &ni,
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Numerical(format!("zgbtrs failed with info {info}")));
        }
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [C64]) -> Result<()> {
        self.solve_impl(b, b'N')
    }

    /// Solves `A† x = b` in place.
    pub fn solve_adjoint(&self, b: &mut [C64]) -> Result<()> {
        self.solve_impl(b, b'C')
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors as columns with `A v = λ v`.
///
/// The complex `eigh` of ndarray-linalg hands back conjugated eigenvectors
/// for row-major input; the orientation is checked against the residual
/// and fixed here.
pub fn hermitian_eig(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let (w, v) = a.eigh(UPLO::Lower)?;
    let n = a.nrows();
    if n == 0 {
        return Ok((w, v));
    }
    let k = (0..n).max_by(|&i, &j| w[i].abs().total_cmp(&w[j].abs())).unwrap();
    let col = v.column(k).to_owned();
    let conj = col.mapv(|z| z.conj());
    let res = |x: &Array1<C64>| (a.dot(x) - x.mapv(|z| z * w[k])).iter().map(|z| z.norm_sqr()).sum::<f64>();
    if res(&conj) < res(&col) {
        Ok((w, v.mapv(|z| z.conj())))
    } else {
        Ok((w, v))
    }
}

/// Full eigendecomposition `A = R Λ R⁻¹`. Rows of `R⁻¹`, conjugated, are the
/// left eigenvectors, normalized so that `ℓ_j† r_k = δ_jk`.
#[derive(Debug, Clone)]
pub struct DenseEig {
    pub values: Array1<C64>,
    /// Right eigenvectors as columns.
    pub right: Array2<C64>,
    /// Left eigenvectors as columns (`ℓ_k = conj(row k of R⁻¹)`).
    pub left: Array2<C64>,
}

pub fn dense_eig(a: &Array2<C64>) -> Result<DenseEig> {
    let (values, right) = a.eig()?;
    let rinv = right.inv()?;
    let left = rinv.t().mapv(|z| z.conj());
    Ok(DenseEig { values, right, left })
}
