//! Symmetric collective-spin ⊗ truncated-Fock product basis.
//!
//! States are labelled |s_k, n⟩ with k ∈ [0, N] excited emitters in the fully
//! symmetric (j = N/2) ladder and n ∈ [0, n_max] photons. The flat index is
//! `k * (n_max + 1) + n`, so every operator is `spin ⊗ photon` in nalgebra's
//! Kronecker ordering.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisState {
    pub k_excitations: usize,
    pub n_photons: usize,
}

impl BasisState {
    pub fn new(k_excitations: usize, n_photons: usize) -> Self {
        Self { k_excitations, n_photons }
    }

    /// Eigenvalue of J_z + a†a shifted so that |s_0, 0⟩ carries 0.
    pub fn excitation_number(&self) -> usize {
        self.k_excitations + self.n_photons
    }
}

#[derive(Debug, Clone)]
pub struct ProductBasis {
    n_tls: usize,
    photon_cutoff: usize,
    states: Vec<BasisState>,
}

impl ProductBasis {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let states = (0..=params.n_tls)
            .flat_map(|k| (0..=params.photon_cutoff).map(move |n| BasisState::new(k, n)))
            .collect();
        Ok(Self {
            n_tls: params.n_tls,
            photon_cutoff: params.photon_cutoff,
            states,
        })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> Option<BasisState> {
        self.states.get(index).copied()
    }

    pub fn index_of(&self, state: BasisState) -> Option<usize> {
        (state.k_excitations <= self.n_tls && state.n_photons <= self.photon_cutoff)
            .then(|| state.k_excitations * (self.photon_cutoff + 1) + state.n_photons)
    }

    pub fn require_index(&self, state: BasisState) -> Result<usize> {
        self.index_of(state).ok_or_else(|| {
            Error::InvalidParams(format!(
                "state |s_{}, {}⟩ outside basis (N = {}, n_max = {})",
                state.k_excitations, state.n_photons, self.n_tls, self.photon_cutoff
            ))
        })
    }
}

/// Enumerates |s_k, n⟩ in flat-index order.
pub fn build_basis(params: &ModelParams) -> Result<Vec<BasisState>> {
    Ok(ProductBasis::new(params)?.states)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectiveOp {
    Jz,
    Jplus,
    Jminus,
    Jx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhotonOp {
    Annihilate,
    Create,
    Number,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Operator on the (N+1)-dimensional symmetric ladder alone.
pub fn spin_matrix(op: CollectiveOp, n_tls: usize) -> CMatrix {
    let d = n_tls + 1;
    let raise = |k: usize| (((n_tls - k) * (k + 1)) as f64).sqrt();
    let mut m = CMatrix::zeros(d, d);
    match op {
        CollectiveOp::Jz => {
            for k in 0..d {
                m[(k, k)] = c(k as f64 - n_tls as f64 / 2.0);
            }
        }
        CollectiveOp::Jplus => {
            for k in 0..n_tls {
                m[(k + 1, k)] = c(raise(k));
            }
        }
        CollectiveOp::Jminus => {
            for k in 0..n_tls {
                m[(k, k + 1)] = c(raise(k));
            }
        }
        CollectiveOp::Jx => {
            for k in 0..n_tls {
                m[(k + 1, k)] = c(raise(k));
                m[(k, k + 1)] = c(raise(k));
            }
        }
    }
    m
}

/// Operator on the truncated Fock space alone.
pub fn fock_matrix(op: PhotonOp, photon_cutoff: usize) -> CMatrix {
    let d = photon_cutoff + 1;
    let mut m = CMatrix::zeros(d, d);
    match op {
        PhotonOp::Annihilate => {
            for n in 1..d {
                m[(n - 1, n)] = c((n as f64).sqrt());
            }
        }
        PhotonOp::Create => {
            for n in 1..d {
                m[(n, n - 1)] = c((n as f64).sqrt());
            }
        }
        PhotonOp::Number => {
            for n in 0..d {
                m[(n, n)] = c(n as f64);
            }
        }
    }
    m
}

/// Collective operator tensored with the Fock identity.
pub fn collective_operator(op: CollectiveOp, params: &ModelParams) -> Result<CMatrix> {
    params.validate()?;
    let id = CMatrix::identity(params.photon_cutoff + 1, params.photon_cutoff + 1);
    Ok(spin_matrix(op, params.n_tls).kronecker(&id))
}

/// Photon operator tensored with the spin identity.
pub fn photon_operator(op: PhotonOp, params: &ModelParams) -> Result<CMatrix> {
    params.validate()?;
    let id = CMatrix::identity(params.n_tls + 1, params.n_tls + 1);
    Ok(id.kronecker(&fock_matrix(op, params.photon_cutoff)))
}

/// Dense Hermitian matrix on the product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    /// Accepts `matrix` if it equals its conjugate transpose to 1e-12 relative
    /// to its largest entry.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_parts_unchecked(matrix: CMatrix) -> Self {
        debug_assert!(hermitian_deviation(&matrix) <= HERMITIAN_TOL);
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// True when every entry is real, which lets the eigensolver take the
    /// real symmetric path.
    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|z| z.im == 0.0)
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|i| i == j || self.matrix[(i, j)] == Complex64::new(0.0, 0.0)))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { matrix: &self.matrix * c(s) }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self { matrix: &self.matrix + &other.matrix })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self { matrix: &self.matrix - &other.matrix })
    }

    /// `self * self`, Hermitian whenever `self` is.
    pub fn squared(&self) -> Self {
        let m = &self.matrix * &self.matrix;
        Self { matrix: symmetrize(m) }
    }

    /// Largest Gershgorin radius bound on |E|.
    pub fn gershgorin_bound(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// ⟨ψ|H|ψ⟩ for a column vector.
    pub fn expectation(&self, psi: &CVector) -> Result<f64> {
        check_dims(self.dim(), psi.len())?;
        Ok(psi.dotc(&(&self.matrix * psi)).re)
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// max |M - M†| / max |M|, zero for the zero matrix.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

/// (M + M†)/2; removes rounding asymmetry from products of Hermitian factors.
pub(crate) fn symmetrize(m: CMatrix) -> CMatrix {
    let adj = m.adjoint();
    (m + adj) * c(0.5)
}

/// Matrix commutator [A, B].
pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Largest entry modulus; the norm used for "exact" matrix comparisons.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(n: usize, cutoff: usize) -> ModelParams {
        ModelParams::resonant(1.0, 0.07, n).unwrap().with_cutoff(cutoff)
    }

    #[test]
    fn basis_counting_and_order() {
        let b = build_basis(&params(2, 4)).unwrap();
        assert_eq!(b.len(), 15);
        assert_eq!(b[0], BasisState::new(0, 0));
        assert_eq!(b[14], BasisState::new(2, 4));
        assert_eq!(build_basis(&params(1, 0)).unwrap().len(), 2);
        let pb = ProductBasis::new(&params(3, 5)).unwrap();
        assert_eq!(pb.index_of(BasisState::new(2, 3)), Some(15));
        assert_eq!(pb.index_of(BasisState::new(4, 0)), None);
        assert_eq!(pb.index_of(BasisState::new(0, 6)), None);
    }

    #[test]
    fn jz_spectrum_n2() {
        let jz = spin_matrix(CollectiveOp::Jz, 2);
        let diag: Vec<f64> = (0..3).map(|k| jz[(k, k)].re).collect();
        assert_eq!(diag, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn jplus_matches_angular_momentum_ladder() {
        // ⟨j, m+1|J_+|j, m⟩ = √(j(j+1) − m(m+1)) with j = N/2, m = k − N/2
        for n in 1..=8usize {
            let jp = spin_matrix(CollectiveOp::Jplus, n);
            let j = n as f64 / 2.0;
            for k in 0..n {
                let m = k as f64 - j;
                let expected = (j * (j + 1.0) - m * (m + 1.0)).sqrt();
                assert!((jp[(k + 1, k)].re - expected).abs() < 1e-12);
            }
            // top of the ladder is annihilated
            assert!(jp.column(n).iter().all(|z| z.norm() == 0.0));
        }
        let jp = spin_matrix(CollectiveOp::Jplus, 2);
        assert!((jp[(1, 0)].re - 2f64.sqrt()).abs() < 1e-15);
        assert!((jp[(2, 1)].re - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn photon_ladder() {
        let p = params(1, 4);
        let num = fock_matrix(PhotonOp::Number, 4);
        assert_eq!((0..5).map(|n| num[(n, n)].re).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let a = fock_matrix(PhotonOp::Annihilate, 4);
        assert!((a[(2, 3)].re - 3f64.sqrt()).abs() < 1e-15);
        let adag = fock_matrix(PhotonOp::Create, 4);
        assert!(adag.column(4).iter().all(|z| z.norm() == 0.0));
        // [a, a†] = 1 except the truncated last level
        let comm = commutator(&a, &adag);
        for n in 0..4 {
            assert!((comm[(n, n)].re - 1.0).abs() < 1e-14);
        }
        assert!((comm[(4, 4)].re + 4.0).abs() < 1e-14);
        let full = photon_operator(PhotonOp::Number, &p).unwrap();
        assert_eq!(full.nrows(), 10);
    }

    #[test]
    fn non_hermitian_rejected() {
        let jp = collective_operator(CollectiveOp::Jplus, &params(2, 3)).unwrap();
        assert!(matches!(HermitianOperator::new(jp), Err(Error::NotHermitian { .. })));
    }

    proptest! {
        #[test]
        fn ladder_algebra(n in 1usize..12, cutoff in 0usize..10) {
            let p = params(n, cutoff);
            let jp = collective_operator(CollectiveOp::Jplus, &p).unwrap();
            let jm = collective_operator(CollectiveOp::Jminus, &p).unwrap();
            let jz = collective_operator(CollectiveOp::Jz, &p).unwrap();
            let jx = collective_operator(CollectiveOp::Jx, &p).unwrap();
            prop_assert_eq!(&jm, &jp.adjoint());
            prop_assert_eq!(&jx, &(&jp + &jm));
            prop_assert!(hermitian_deviation(&jx) == 0.0);
            let two_jz = &jz * c(2.0);
            prop_assert!(max_abs(&(commutator(&jp, &jm) - two_jz)) < 1e-12);
        }

        #[test]
        fn flat_index_bijection(n in 1usize..10, cutoff in 0usize..12) {
            let pb = ProductBasis::new(&params(n, cutoff)).unwrap();
            prop_assert_eq!(pb.dim(), (n + 1) * (cutoff + 1));
            for (i, s) in pb.states().iter().enumerate() {
                prop_assert_eq!(pb.index_of(*s), Some(i));
            }
        }

        #[test]
        fn operators_respect_indexing(n in 1usize..6, cutoff in 1usize..6, k in 0usize..6, m in 0usize..6) {
            // acting on a basis vector then indexing equals applying the ladder rule
            let p = params(n, cutoff);
            let pb = ProductBasis::new(&p).unwrap();
            let (k, m) = (k.min(n), m.min(cutoff));
            let src = pb.index_of(BasisState::new(k, m)).unwrap();
            let op = collective_operator(CollectiveOp::Jplus, &p).unwrap()
                * photon_operator(PhotonOp::Annihilate, &p).unwrap();
            let col = op.column(src);
            let expected = if k < n && m > 0 {
                Some((pb.index_of(BasisState::new(k + 1, m - 1)).unwrap(),
                      (((n - k) * (k + 1)) as f64).sqrt() * (m as f64).sqrt()))
            } else {
                None
            };
            for (i, z) in col.iter().enumerate() {
                match expected {
                    Some((j, v)) if i == j => prop_assert!((z.re - v).abs() < 1e-12),
                    _ => prop_assert!(z.norm() == 0.0),
                }
            }
        }
    }
}
