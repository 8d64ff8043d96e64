use ndarray::Array2;
use num_complex::Complex64 as C64;

use super::{FockSpace, OperatorMatrix};
use crate::model::ModelParams;

/// Ladder operator with `⟨n−1|b|n⟩ = √n`.
pub fn annihilation(space: FockSpace) -> OperatorMatrix {
    let n = space.dim();
    let mut a = Array2::zeros((n, n));
    for k in 1..n {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    OperatorMatrix { space, elements: a }
}

pub fn number(space: FockSpace) -> OperatorMatrix {
    let n = space.dim();
    let mut a = Array2::zeros((n, n));
    for k in 0..n {
        a[(k, k)] = C64::new(k as f64, 0.0);
    }
    OperatorMatrix { space, elements: a }
}

/// `X = (b + b†)/2`.
pub fn x_quadrature(space: FockSpace) -> OperatorMatrix {
    let b = annihilation(space);
    let bd = b.dagger();
    OperatorMatrix { space, elements: (&b.elements + &bd.elements).mapv(|z| z * 0.5) }
}

/// `Y = (b − b†)/(2i)`.
pub fn y_quadrature(space: FockSpace) -> OperatorMatrix {
    let b = annihilation(space);
    let bd = b.dagger();
    OperatorMatrix { space, elements: (&b.elements - &bd.elements).mapv(|z| z * C64::new(0.0, -0.5)) }
}

/// `H = (−Δ+U) b†b + (U/2) b†²b² + (G/2)(b†² + b²) + F(b† e^{−iφ} + b e^{iφ})`,
/// assembled directly from its matrix elements.
pub fn hamiltonian(p: &ModelParams, space: FockSpace) -> OperatorMatrix {
    let n = space.dim();
    let mut h = Array2::zeros((n, n));
    let f = p.drive();
    for k in 0..n {
        let kf = k as f64;
        h[(k, k)] = C64::new((-p.delta + p.u) * kf + 0.5 * p.u * kf * (kf - 1.0), 0.0);
        if k + 1 < n {
            let s = (kf + 1.0).sqrt();
            h[(k + 1, k)] = f * s;
            h[(k, k + 1)] = f.conj() * s;
        }
        if k + 2 < n {
            let s = 0.5 * p.g * ((kf + 1.0) * (kf + 2.0)).sqrt();
            h[(k + 2, k)] = C64::new(s, 0.0);
            h[(k, k + 2)] = C64::new(s, 0.0);
        }
    }
    OperatorMatrix { space, elements: h }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn ladder_small_cases() {
        let b = annihilation(FockSpace::new(2).unwrap());
        assert_eq!(b.elements, ndarray::arr2(&[[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]));
        let b = annihilation(FockSpace::new(3).unwrap());
        assert_eq!(b.elements[(0, 1)], c(1.0, 0.0));
        assert_eq!(b.elements[(1, 2)], c(2f64.sqrt(), 0.0));
        assert_eq!(b.elements.iter().filter(|z| z.norm() > 0.0).count(), 2);
    }

    #[test]
    fn commutator_is_identity_below_edge() {
        let s = FockSpace::new(8).unwrap();
        let b = annihilation(s);
        let bd = b.dagger();
        let comm = &b.dot(&bd).elements - &bd.dot(&b).elements;
        for k in 0..7 {
            assert!((comm[(k, k)] - c(1.0, 0.0)).norm() < 1e-14);
        }
        assert!((comm[(7, 7)] - c(-7.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn two_level_hamiltonian() {
        let p = ModelParams::new(0.7, 0.3, 0.9, 0.4, 0.6, 0.1).unwrap();
        let h = hamiltonian(&p, FockSpace::new(2).unwrap()).elements;
        let fe = C64::from_polar(0.4, 0.6);
        assert!((h[(0, 0)]).norm() < 1e-15);
        assert!((h[(0, 1)] - fe).norm() < 1e-15);
        assert!((h[(1, 0)] - fe.conj()).norm() < 1e-15);
        assert!((h[(1, 1)] - c(-0.7 + 0.3, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn undriven_hamiltonian_is_diagonal() {
        let p = ModelParams::new(1.3, 0.7, 0.0, 0.0, 0.0, 0.1).unwrap();
        let h = hamiltonian(&p, FockSpace::new(12).unwrap()).elements;
        for i in 0..12 {
            for j in 0..12 {
                let nf = i as f64;
                let expect = if i == j { (-1.3 + 0.7) * nf + 0.35 * nf * (nf - 1.0) } else { 0.0 };
                assert!((h[(i, j)] - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_operator_expression() {
        let p = ModelParams::new(0.4, 0.8, 0.5, 1.1, 0.3, 0.1).unwrap();
        let s = FockSpace::new(9).unwrap();
        let b = annihilation(s).elements;
        let bd = b.t().mapv(|z| z.conj());
        let n = bd.dot(&b);
        let bd2 = bd.dot(&bd);
        let b2 = b.dot(&b);
        let f = p.drive();
        let expr = n.mapv(|z| z * (-p.delta + p.u))
            + bd2.dot(&b2).mapv(|z| z * 0.5 * p.u)
            + (&bd2 + &b2).mapv(|z| z * 0.5 * p.g)
            + bd.mapv(|z| z * f)
            + b.mapv(|z| z * f.conj());
        let h = hamiltonian(&p, s).elements;
        assert!((&h - &expr).iter().all(|z| z.norm() < 1e-12));
    }
}
