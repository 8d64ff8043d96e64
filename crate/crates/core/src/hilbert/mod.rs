//! Truncated Fock space: operators, the Lindblad generator, steady states,
//! Liouvillian eigenmodes and Wigner functions.
//!
//! Superoperators act on density matrices flattened in column-stacking order,
//! `vec(ρ)[i + N·j] = ρ_ij`, so that `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)` and
//! `Tr[A†B] = vec(A)† vec(B)`.

mod liouvillian;
mod operators;
mod spectrum;
mod truncation;
mod wigner;

pub use liouvillian::{liouvillian, propagate, steady_state, steady_state_with, Liouvillian, SteadyStateSettings};
pub use operators::{annihilation, hamiltonian, number, x_quadrature, y_quadrature};
pub use spectrum::{liouvillian_spectrum, liouvillian_spectrum_with, LiouvillianSpectrum, SpectrumSettings};
pub use truncation::{choose_truncation, steady_state_auto, TruncationRule, DEFAULT_DIM_CAP};
pub use wigner::{wigner, wigner_at, WignerGrid};

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance on the population of the top 10% of Fock levels.
pub const TAIL_TOL: f64 = 1e-8;
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Fock basis `|0⟩ … |N−1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockSpace {
    dim: usize,
}

impl FockSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("Fock dimension must be ≥ 2, got {dim}")));
        }
        Ok(FockSpace { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// First level of the top 10% of the basis, at least one level.
    pub fn tail_start(&self) -> usize {
        let k = (self.dim as f64 * 0.1).ceil().max(1.0) as usize;
        self.dim - k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub space: FockSpace,
    pub elements: Array2<C64>,
}

impl OperatorMatrix {
    pub fn new(space: FockSpace, elements: Array2<C64>) -> Result<Self> {
        if elements.dim() != (space.dim(), space.dim()) {
            return Err(Error::InvalidParameter(format!(
                "operator shape {:?} does not match dimension {}",
                elements.dim(),
                space.dim()
            )));
        }
        if elements.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("operator has non-finite entries".into()));
        }
        Ok(OperatorMatrix { space, elements })
    }

    pub fn dagger(&self) -> OperatorMatrix {
        OperatorMatrix { space: self.space, elements: self.elements.t().mapv(|z| z.conj()) }
    }

    pub fn dot(&self, other: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { space: self.space, elements: self.elements.dot(&other.elements) }
    }

    /// Frobenius norm of `A − A†`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = &self.elements - &self.elements.t().mapv(|z| z.conj());
        d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn apply(&self, psi: &StateVector) -> Array1<C64> {
        self.elements.dot(&psi.amps)
    }
}

/// Pure state in the Fock basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub space: FockSpace,
    pub amps: Array1<C64>,
}

impl StateVector {
    pub fn new(space: FockSpace, amps: Array1<C64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::InvalidParameter("state length does not match dimension".into()));
        }
        Ok(StateVector { space, amps })
    }

    pub fn fock(space: FockSpace, n: usize) -> Result<Self> {
        if n >= space.dim() {
            return Err(Error::InvalidParameter(format!("level {n} outside dimension {}", space.dim())));
        }
        let mut amps = Array1::zeros(space.dim());
        amps[n] = C64::new(1.0, 0.0);
        Ok(StateVector { space, amps })
    }

    pub fn vacuum(space: FockSpace) -> Self {
        Self::fock(space, 0).unwrap()
    }

    /// Truncated coherent state, renormalized. Errors when the discarded
    /// weight exceeds [`TAIL_TOL`].
    pub fn coherent(space: FockSpace, beta: C64) -> Result<Self> {
        let n = space.dim();
        let mut amps = Array1::zeros(n);
        let mut c = C64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
        for k in 0..n {
            amps[k] = c;
            c = c * beta / ((k + 1) as f64).sqrt();
        }
        let norm2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if 1.0 - norm2 > TAIL_TOL {
            return Err(Error::Truncation { dim: n, tail: 1.0 - norm2, tol: TAIL_TOL });
        }
        amps.mapv_inplace(|z| z / norm2.sqrt());
        Ok(StateVector { space, amps })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn expect(&self, op: &OperatorMatrix) -> C64 {
        let v = op.apply(self);
        self.amps.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum::<C64>() / self.norm_sqr()
    }

    pub fn to_density(&self) -> DensityMatrix {
        let n = self.space.dim();
        let s = self.norm_sqr();
        let rho = Array2::from_shape_fn((n, n), |(i, j)| self.amps[i] * self.amps[j].conj() / s);
        DensityMatrix { space: self.space, rho }
    }
}

/// Density matrix satisfying the checked invariants (Hermitian, unit trace,
/// positive to [`POSITIVITY_TOL`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub space: FockSpace,
    pub rho: Array2<C64>,
}

/// Outcome of the invariant checks on a density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityDiagnostics {
    pub hermiticity: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    pub tail_population: f64,
}

impl DensityMatrix {
    /// Validates the invariants; the tail check uses `tail_tol`.
    pub fn new(space: FockSpace, rho: Array2<C64>, tail_tol: f64) -> Result<Self> {
        if rho.dim() != (space.dim(), space.dim()) {
            return Err(Error::InvalidParameter("density matrix shape mismatch".into()));
        }
        let dm = DensityMatrix { space, rho };
        dm.check(tail_tol)?;
        Ok(dm)
    }

    pub fn diagnostics(&self) -> Result<DensityDiagnostics> {
        let n = self.space.dim();
        let mut herm = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                herm = herm.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        let (w, _) = crate::linalg::hermitian_eig(&self.rho)?;
        Ok(DensityDiagnostics {
            hermiticity: herm,
            trace_error: (self.trace() - C64::new(1.0, 0.0)).norm(),
            min_eigenvalue: w.iter().cloned().fold(f64::INFINITY, f64::min),
            tail_population: self.tail_population(),
        })
    }

    pub fn check(&self, tail_tol: f64) -> Result<DensityDiagnostics> {
        let d = self.diagnostics()?;
        if !(d.hermiticity <= HERMITICITY_TOL) {
            return Err(Error::Numerical(format!("density matrix not Hermitian: {:e}", d.hermiticity)));
        }
        if !(d.trace_error <= TRACE_TOL) {
            return Err(Error::Numerical(format!("density matrix trace off by {:e}", d.trace_error)));
        }
        if !(d.min_eigenvalue >= -POSITIVITY_TOL) {
            return Err(Error::Numerical(format!("density matrix eigenvalue {:e} below tolerance", d.min_eigenvalue)));
        }
        if !(d.tail_population < tail_tol) {
            return Err(Error::Truncation { dim: self.space.dim(), tail: d.tail_population, tol: tail_tol });
        }
        Ok(d)
    }

    pub fn trace(&self) -> C64 {
        self.rho.diag().sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.rho.diag().iter().map(|z| z.re).collect()
    }

    /// Population of the top 10% of Fock levels.
    pub fn tail_population(&self) -> f64 {
        self.rho.diag().iter().skip(self.space.tail_start()).map(|z| z.re).sum()
    }

    pub fn expect(&self, op: &OperatorMatrix) -> C64 {
        let n = self.space.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += op.elements[(i, k)] * self.rho[(k, i)];
            }
        }
        acc
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized pure state.
    pub fn fidelity_pure(&self, psi: &StateVector) -> f64 {
        let v = self.rho.dot(&psi.amps);
        psi.amps.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().re / psi.norm_sqr()
    }

    /// Column-stacked vector.
    pub fn to_vec(&self) -> Vec<C64> {
        vec_of(&self.rho)
    }
}

pub(crate) fn vec_of(a: &Array2<C64>) -> Vec<C64> {
    let n = a.nrows();
    let mut v = vec![C64::new(0.0, 0.0); n * a.ncols()];
    for j in 0..a.ncols() {
        for i in 0..n {
            v[i + n * j] = a[(i, j)];
        }
    }
    v
}

pub(crate) fn unvec(v: &[C64], n: usize) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |(i, j)| v[i + n * j])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fock_space_rejects_small_dimension() {
        assert!(FockSpace::new(1).is_err());
        assert_eq!(FockSpace::new(20).unwrap().tail_start(), 18);
        assert_eq!(FockSpace::new(5).unwrap().tail_start(), 4);
    }

    #[test]
    fn coherent_state_moments() {
        let s = FockSpace::new(40).unwrap();
        let beta = C64::new(1.2, -0.7);
        let psi = StateVector::coherent(s, beta).unwrap();
        let b = OperatorMatrix::new(s, annihilation(s).elements).unwrap();
        assert!((psi.expect(&b) - beta).norm() < 1e-10);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-14);
        assert!(StateVector::coherent(FockSpace::new(5).unwrap(), C64::new(3.0, 0.0)).is_err());
    }

    #[test]
    fn density_invariants() {
        let s = FockSpace::new(10).unwrap();
        let psi = StateVector::coherent(s, C64::new(0.3, 0.2)).unwrap();
        let rho = psi.to_density();
        let d = rho.check(TAIL_TOL).unwrap();
        assert!(d.min_eigenvalue > -1e-12);
        assert!((rho.fidelity_pure(&psi) - 1.0).abs() < 1e-12);
        let mut bad = rho.rho.clone();
        bad[(0, 0)] += C64::new(0.1, 0.0);
        assert!(DensityMatrix::new(s, bad, TAIL_TOL).is_err());
        let mut top = Array2::zeros((10, 10));
        top[(9, 9)] = C64::new(1.0, 0.0);
        assert!(matches!(DensityMatrix::new(s, top, TAIL_TOL), Err(Error::Truncation { .. })));
    }

    #[test]
    fn vec_roundtrip_is_column_stacking() {
        let a = Array2::from_shape_fn((3, 3), |(i, j)| C64::new(i as f64, j as f64));
        let v = vec_of(&a);
        assert_eq!(v[1 + 3 * 2], C64::new(1.0, 2.0));
        assert_eq!(unvec(&v, 3), a);
    }
}
