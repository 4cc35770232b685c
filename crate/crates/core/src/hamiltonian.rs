//! TC, Dicke and Pauli-Fierz Hamiltonians on the collective product basis.
//!
//! All three are built exactly as written, so the uncoupled ground state
//! |s_0, 0⟩ sits at −N ω_m / 2. Manifold-level quantities shift it to zero.

use num_complex::Complex64;

use crate::basis::{fock_matrix, spin_matrix, CMatrix, CollectiveOp, HermitianOperator, PhotonOp};
use crate::error::Result;
use crate::params::{ModelKind, ModelParams};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Kronecker factors shared by every model term.
struct Factors {
    jz: CMatrix,
    jp: CMatrix,
    jm: CMatrix,
    jx: CMatrix,
    a: CMatrix,
    adag: CMatrix,
    num: CMatrix,
    spin_id: CMatrix,
    fock_id: CMatrix,
}

impl Factors {
    fn new(p: &ModelParams) -> Self {
        let ds = p.n_tls + 1;
        let df = p.photon_cutoff + 1;
        Self {
            jz: spin_matrix(CollectiveOp::Jz, p.n_tls),
            jp: spin_matrix(CollectiveOp::Jplus, p.n_tls),
            jm: spin_matrix(CollectiveOp::Jminus, p.n_tls),
            jx: spin_matrix(CollectiveOp::Jx, p.n_tls),
            a: fock_matrix(PhotonOp::Annihilate, p.photon_cutoff),
            adag: fock_matrix(PhotonOp::Create, p.photon_cutoff),
            num: fock_matrix(PhotonOp::Number, p.photon_cutoff),
            spin_id: CMatrix::identity(ds, ds),
            fock_id: CMatrix::identity(df, df),
        }
    }

    fn bare(&self, p: &ModelParams) -> CMatrix {
        self.jz.kronecker(&self.fock_id) * c(p.omega_m) + self.spin_id.kronecker(&self.num) * c(p.omega_c)
    }

    fn coupling(p: &ModelParams) -> f64 {
        p.g / (p.n_tls as f64).sqrt()
    }

    fn rotating(&self, p: &ModelParams) -> CMatrix {
        (self.jp.kronecker(&self.a) + self.jm.kronecker(&self.adag)) * c(Self::coupling(p))
    }

    fn counter_rotating(&self, p: &ModelParams) -> CMatrix {
        (self.jp.kronecker(&self.adag) + self.jm.kronecker(&self.a)) * c(Self::coupling(p))
    }

    fn dipole_self_energy(&self, p: &ModelParams) -> CMatrix {
        let jx2 = &self.jx * &self.jx;
        jx2.kronecker(&self.fock_id) * c(p.g * p.g / (p.omega_c * p.n_tls as f64))
    }
}

/// H_TC = ω_m J_z + ω_c a†a + (g/√N)(J_+ a + J_− a†)
/// H_DM = H_TC + H_CRW
/// H_PF = H_DM + (g²/(ω_c N)) J_x²
pub fn build_hamiltonian(kind: ModelKind, params: &ModelParams) -> Result<HermitianOperator> {
    params.validate()?;
    params.warn_if_strong();
    let f = Factors::new(params);
    let mut h = f.bare(params) + f.rotating(params);
    if matches!(kind, ModelKind::Dm | ModelKind::Pf) {
        h += f.counter_rotating(params);
    }
    if kind == ModelKind::Pf {
        h += f.dipole_self_energy(params);
    }
    Ok(HermitianOperator::from_parts_unchecked(h))
}

/// Counter-rotating term (g/√N)(J_+ a† + J_− a); changes J_z + a†a by ±2.
pub fn crw_term(params: &ModelParams) -> Result<HermitianOperator> {
    params.validate()?;
    let f = Factors::new(params);
    Ok(HermitianOperator::from_parts_unchecked(f.counter_rotating(params)))
}

/// Raising half (g/√N) J_+ a† of the counter-rotating term, as a general matrix.
pub fn crw_raising(params: &ModelParams) -> Result<CMatrix> {
    params.validate()?;
    let f = Factors::new(params);
    Ok(f.jp.kronecker(&f.adag) * c(Factors::coupling(params)))
}

/// Dipole self-energy (g²/(ω_c N)) J_x²; positive semidefinite.
pub fn dse_term(params: &ModelParams) -> Result<HermitianOperator> {
    params.validate()?;
    let f = Factors::new(params);
    Ok(HermitianOperator::from_parts_unchecked(f.dipole_self_energy(params)))
}

/// J_z + a†a, conserved by the TC model.
pub fn excitation_number(params: &ModelParams) -> Result<HermitianOperator> {
    params.validate()?;
    let f = Factors::new(params);
    Ok(HermitianOperator::from_parts_unchecked(
        f.jz.kronecker(&f.fock_id) + f.spin_id.kronecker(&f.num),
    ))
}

/// a†a on the product basis.
pub fn photon_number(params: &ModelParams) -> Result<HermitianOperator> {
    params.validate()?;
    let f = Factors::new(params);
    Ok(HermitianOperator::from_parts_unchecked(f.spin_id.kronecker(&f.num)))
}

/// (a†a)², used for the photon-number variance.
pub fn photon_number_squared(params: &ModelParams) -> Result<HermitianOperator> {
    Ok(photon_number(params)?.squared())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{commutator, hermitian_deviation, max_abs, BasisState, ProductBasis};
    use nalgebra::SymmetricEigen;

    fn p(n: usize, g: f64) -> ModelParams {
        ModelParams::resonant(1.0, g, n).unwrap()
    }

    #[test]
    fn decoupled_models_coincide() {
        let params = ModelParams::new(0.9, 1.1, 0.0, 3).unwrap();
        let tc = build_hamiltonian(ModelKind::Tc, &params).unwrap();
        let dm = build_hamiltonian(ModelKind::Dm, &params).unwrap();
        let pf = build_hamiltonian(ModelKind::Pf, &params).unwrap();
        assert_eq!(tc, dm);
        assert_eq!(dm, pf);
        assert!(tc.is_diagonal());
        let basis = ProductBasis::new(&params).unwrap();
        for (i, s) in basis.states().iter().enumerate() {
            let expected = 0.9 * (s.k_excitations as f64 - 1.5) + 1.1 * s.n_photons as f64;
            assert!((tc.matrix()[(i, i)].re - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn excitation_conservation() {
        for n in [1, 2, 5] {
            let params = ModelParams::new(1.0, 1.03, 0.09, n).unwrap();
            let ex = excitation_number(&params).unwrap();
            for kind in ModelKind::ALL {
                let h = build_hamiltonian(kind, &params).unwrap();
                assert!(hermitian_deviation(h.matrix()) < 1e-12);
                let comm = max_abs(&commutator(h.matrix(), ex.matrix()));
                match kind {
                    ModelKind::Tc => assert!(comm < 1e-12, "TC commutator {comm}"),
                    _ => assert!(comm > 1e-3, "{kind} should break conservation"),
                }
            }
        }
    }

    #[test]
    fn term_decomposition_is_exact() {
        let params = p(3, 0.07);
        let tc = build_hamiltonian(ModelKind::Tc, &params).unwrap();
        let dm = build_hamiltonian(ModelKind::Dm, &params).unwrap();
        let pf = build_hamiltonian(ModelKind::Pf, &params).unwrap();
        let crw = crw_term(&params).unwrap();
        let dse = dse_term(&params).unwrap();
        assert!(max_abs(&(dm.matrix() - tc.matrix() - crw.matrix())) < 1e-15);
        assert!(max_abs(&(pf.matrix() - dm.matrix() - dse.matrix())) < 1e-15);
    }

    #[test]
    fn crw_matrix_elements() {
        for n in 1..=6 {
            let params = p(n, 0.07);
            let basis = ProductBasis::new(&params).unwrap();
            let crw = crw_term(&params).unwrap();
            let i = basis.index_of(BasisState::new(1, 1)).unwrap();
            let j = basis.index_of(BasisState::new(0, 0)).unwrap();
            assert!((crw.matrix()[(i, j)].re - 0.07).abs() < 1e-15);
            // only couples states whose excitation numbers differ by 2
            for (a, sa) in basis.states().iter().enumerate() {
                for (b, sb) in basis.states().iter().enumerate() {
                    let z = crw.matrix()[(a, b)];
                    if z.norm() != 0.0 {
                        assert_eq!(sa.excitation_number().abs_diff(sb.excitation_number()), 2);
                    }
                }
            }
        }
        let zero = crw_term(&p(3, 0.0)).unwrap();
        assert_eq!(max_abs(zero.matrix()), 0.0);
    }

    #[test]
    fn dse_scaling_and_positivity() {
        let a = dse_term(&p(2, 0.07)).unwrap();
        let b = dse_term(&p(2, 0.14)).unwrap();
        assert!((b.frobenius_norm() / a.frobenius_norm() - 4.0).abs() < 1e-12);
        let real = a.matrix().map(|z| z.re);
        let eig = SymmetricEigen::new(real);
        assert!(eig.eigenvalues.iter().all(|&e| e > -1e-15));
    }

    #[test]
    fn dse_is_an_order_below_crw() {
        let params = p(2, 0.07);
        let spectral_norm = |h: &HermitianOperator| {
            SymmetricEigen::new(h.matrix().map(|z| z.re))
                .eigenvalues
                .iter()
                .fold(0.0f64, |m, e| m.max(e.abs()))
        };
        // compare on the SEM/FEM-relevant part of the space: photon numbers ≤ 4
        let small = params.with_cutoff(4);
        let dse = spectral_norm(&dse_term(&small).unwrap());
        let crw = spectral_norm(&crw_term(&small).unwrap());
        assert!(crw / dse > 5.0, "dse {dse} crw {crw}");
    }
}
