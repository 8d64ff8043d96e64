//! Real polynomials in ascending-coefficient form and their roots via the
//! companion matrix.

use ndarray::Array2;
use ndarray_linalg::EigVals;
use num_complex::Complex64 as C64;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    /// `c0 + c1·x`
    pub fn linear(c0: f64, c1: f64) -> Self {
        Poly(vec![c0, c1])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly((0..n)
            .map(|i| self.0.get(i).copied().unwrap_or(0.0) + other.0.get(i).copied().unwrap_or(0.0))
            .collect())
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::constant(0.0);
        }
        Poly(self.0.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect())
    }

    /// All complex roots, from the eigenvalues of the companion matrix.
    pub fn roots(&self) -> Result<Vec<C64>> {
        let d = self.degree();
        if d == 0 {
            return Ok(Vec::new());
        }
        let lead = self.0[d];
        let mut comp = Array2::<f64>::zeros((d, d));
        for i in 1..d {
            comp[[i, i - 1]] = 1.0;
        }
        for i in 0..d {
            comp[[i, d - 1]] = -self.0[i] / lead;
        }
        Ok(comp.eigvals()?.to_vec())
    }

    /// Newton polishing of an approximate real root.
    pub fn polish(&self, mut x: f64, iters: usize) -> f64 {
        let dp = self.derivative();
        for _ in 0..iters {
            let d = dp.eval(x);
            if d == 0.0 {
                break;
            }
            let step = self.eval(x) / d;
            if !step.is_finite() {
                break;
            }
            x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_known_quintic() {
        // (x-1)(x-2)(x+3)(x^2+1)
        let p = Poly::linear(-1.0, 1.0)
            .mul(&Poly::linear(-2.0, 1.0))
            .mul(&Poly::linear(3.0, 1.0))
            .mul(&Poly(vec![1.0, 0.0, 1.0]));
        assert_eq!(p.degree(), 5);
        let mut real: Vec<f64> =
            p.roots().unwrap().iter().filter(|z| z.im.abs() < 1e-9).map(|z| z.re).collect();
        real.sort_by(f64::total_cmp);
        assert_eq!(real.len(), 3);
        for (r, e) in real.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((r - e).abs() < 1e-10);
        }
    }

    #[test]
    fn degree_skips_trailing_zeros() {
        let p = Poly(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), 1);
        let r = p.roots().unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].re + 0.5).abs() < 1e-14);
        assert!(Poly::constant(3.0).roots().unwrap().is_empty());
    }

    #[test]
    fn polish_improves_root() {
        let p = Poly(vec![-2.0, 0.0, 1.0]);
        let r = p.polish(1.4, 20);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }
}
