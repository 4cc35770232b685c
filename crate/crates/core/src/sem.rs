//! Second-excitation manifold: bright basis {|s_0,2⟩, |s_1,1⟩, |s_2,0⟩},
//! its 3×3 Hamiltonian and the polariton triplet.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisState, CVector, ProductBasis};
use crate::error::{Error, Result};
use crate::hamiltonian::build_hamiltonian;
use crate::params::{ModelKind, ModelParams};
use crate::spectral::{diagonalize, MATCH_AMBIGUITY_TOL};

pub const SEM_BASIS: [BasisState; 3] = [
    BasisState { k_excitations: 0, n_photons: 2 },
    BasisState { k_excitations: 1, n_photons: 1 },
    BasisState { k_excitations: 2, n_photons: 0 },
];

pub(crate) fn require_sem(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if params.n_tls < 2 {
        return Err(Error::ManifoldDomain(params.n_tls));
    }
    Ok(())
}

/// Ω_M = g √(2M / N)
pub fn rabi_component(params: &ModelParams, m: usize) -> f64 {
    params.g * (2.0 * m as f64 / params.n_tls as f64).sqrt()
}

/// Ω = Ω_{2N−1}, the SEM Rabi frequency at resonance.
pub fn sem_rabi_frequency(params: &ModelParams) -> f64 {
    rabi_component(params, 2 * params.n_tls - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemHamiltonian {
    pub matrix: Matrix3<f64>,
    pub params: ModelParams,
}

/// Ground-shifted TC Hamiltonian on the SEM bright basis.
pub fn sem_hamiltonian(params: &ModelParams) -> Result<SemHamiltonian> {
    require_sem(params)?;
    let (wc, wm) = (params.omega_c, params.omega_m);
    let on = rabi_component(params, params.n_tls);
    let on1 = rabi_component(params, params.n_tls - 1);
    #[rustfmt::skip]
    let matrix = Matrix3::new(
        2.0 * wc, on,       0.0,
        on,       wc + wm,  on1,
        0.0,      on1,      2.0 * wm,
    );
    Ok(SemHamiltonian { matrix, params: *params })
}

impl SemHamiltonian {
    /// Numerical eigendecomposition, any detuning.
    pub fn triplet(&self) -> PolaritonTriplet {
        let eig = SymmetricEigen::new(self.matrix);
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vec = |i: usize| {
            let v: Vector3<f64> = eig.eigenvectors.column(i).into_owned();
            canonical_sign(v)
        };
        PolaritonTriplet::new(
            [eig.eigenvalues[idx[0]], eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]],
            [vec(idx[0]), vec(idx[1]), vec(idx[2])],
        )
    }
}

/// Flip so the first component with |v_i| > 1e-12 is positive.
fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    match v.iter().find(|x| x.abs() > 1e-12) {
        Some(&x) if x < 0.0 => -v,
        _ => v,
    }
}

/// SEM polaritons (E₋, E₀, E₊) with their asymmetry α = (E₊ + E₋)/2 − E₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolaritonTriplet {
    pub e_plus: f64,
    pub e_zero: f64,
    pub e_minus: f64,
    pub v_plus: [f64; 3],
    pub v_zero: [f64; 3],
    pub v_minus: [f64; 3],
    pub alpha: f64,
}

impl PolaritonTriplet {
    /// `energies` and `vectors` ordered (minus, zero, plus).
    pub fn new(energies: [f64; 3], vectors: [Vector3<f64>; 3]) -> Self {
        let arr = |v: &Vector3<f64>| [v[0], v[1], v[2]];
        Self {
            e_minus: energies[0],
            e_zero: energies[1],
            e_plus: energies[2],
            v_minus: arr(&vectors[0]),
            v_zero: arr(&vectors[1]),
            v_plus: arr(&vectors[2]),
            alpha: asymmetry(energies[2], energies[1], energies[0]),
        }
    }

    /// (E₊ − E₋)/2
    pub fn half_splitting(&self) -> f64 {
        0.5 * (self.e_plus - self.e_minus)
    }

    pub fn vectors(&self) -> [Vector3<f64>; 3] {
        [
            Vector3::from(self.v_minus),
            Vector3::from(self.v_zero),
            Vector3::from(self.v_plus),
        ]
    }
}

/// α = (E₊ + E₋)/2 − E₀
pub fn asymmetry(e_plus: f64, e_zero: f64, e_minus: f64) -> f64 {
    0.5 * (e_plus + e_minus) - e_zero
}

/// Closed-form resonant polaritons: E₀ = 2ω, E± = 2ω ± Ω with
/// P₀ ∝ (Ω_{N−1}, 0, −Ω_N) and P± ∝ (Ω_N, ±Ω, Ω_{N−1}).
pub fn resonant_triplet(params: &ModelParams) -> Result<PolaritonTriplet> {
    require_sem(params)?;
    let omega = params.require_resonance()?;
    if params.g == 0.0 {
        return Ok(sem_hamiltonian(params)?.triplet());
    }
    let on = rabi_component(params, params.n_tls);
    let on1 = rabi_component(params, params.n_tls - 1);
    let big = sem_rabi_frequency(params);
    let s = std::f64::consts::FRAC_1_SQRT_2 / big;
    let v_plus = Vector3::new(on * s, big * s, on1 * s);
    let v_minus = Vector3::new(on * s, -big * s, on1 * s);
    let v_zero = Vector3::new(on1 / big, 0.0, -on / big);
    Ok(PolaritonTriplet::new(
        [2.0 * omega - big, 2.0 * omega, 2.0 * omega + big],
        [v_minus, v_zero, v_plus],
    ))
}

/// Embeds an SEM 3-vector into the full product basis.
pub fn embed_sem_vector(params: &ModelParams, v: &Vector3<f64>) -> Result<CVector> {
    let basis = ProductBasis::new(params)?;
    let mut out = CVector::zeros(basis.dim());
    for (state, x) in SEM_BASIS.iter().zip(v.iter()) {
        out[basis.require_index(*state)?] = num_complex::Complex64::new(*x, 0.0);
    }
    Ok(out)
}

/// Triplet of the full `kind` model: the three eigenstates overlapping most
/// with the TC SEM polaritons, energies measured from the model's ground
/// state (−Nω_m/2 exactly for TC).
pub fn numeric_triplet(kind: ModelKind, params: &ModelParams) -> Result<PolaritonTriplet> {
    require_sem(params)?;
    let reference = if params.is_resonant() && params.g > 0.0 {
        resonant_triplet(params)?
    } else {
        sem_hamiltonian(params)?.triplet()
    };
    let h = build_hamiltonian(kind, params)?;
    let eig = diagonalize(&h)?;
    let ground = match kind {
        ModelKind::Tc => -(params.n_tls as f64) * params.omega_m / 2.0,
        _ => eig.energies()[0],
    };
    let basis = ProductBasis::new(params)?;
    let sem_idx: Vec<usize> = SEM_BASIS
        .iter()
        .map(|s| basis.require_index(*s))
        .collect::<Result<_>>()?;

    let mut energies = [0.0; 3];
    let mut vectors = [Vector3::zeros(); 3];
    let mut chosen: Vec<usize> = Vec::with_capacity(3);
    for (slot, rv) in reference.vectors().iter().enumerate() {
        let target = embed_sem_vector(params, rv)?;
        let overlaps: Vec<f64> = (0..eig.dim())
            .map(|j| eig.vectors().column(j).dotc(&target).norm())
            .collect();
        let mut order: Vec<usize> = (0..overlaps.len()).collect();
        order.sort_by(|&a, &b| overlaps[b].total_cmp(&overlaps[a]));
        let (best, second) = (order[0], order[1]);
        if overlaps[best] - overlaps[second] < MATCH_AMBIGUITY_TOL || chosen.contains(&best) {
            return Err(Error::AmbiguousMatch {
                row: slot,
                first: overlaps[best],
                second: overlaps[second],
            });
        }
        chosen.push(best);
        energies[slot] = eig.energies()[best] - ground;
        let col = eig.vectors().column(best);
        let mut proj = Vector3::new(col[sem_idx[0]].re, col[sem_idx[1]].re, col[sem_idx[2]].re);
        let norm = proj.norm();
        if norm > 0.0 {
            proj /= norm;
        }
        if proj.dot(rv) < 0.0 {
            proj = -proj;
        }
        vectors[slot] = proj;
    }
    Ok(PolaritonTriplet::new(energies, vectors))
}

/// Exact resonant TC photon number for ψ(0) = |s_2, 0⟩:
/// −2(N−1)(1 − 4N + cos Ωt)/(2N−1)² · sin²(Ωt/2).
pub fn tc_photon_count(params: &ModelParams, t: f64) -> Result<f64> {
    require_sem(params)?;
    params.require_resonance()?;
    let n = params.n_tls as f64;
    let big = sem_rabi_frequency(params);
    let denom = (2.0 * n - 1.0).powi(2);
    Ok(-2.0 * (n - 1.0) * (1.0 - 4.0 * n + (big * t).cos()) / denom * (0.5 * big * t).sin().powi(2))
}

/// Peak of `tc_photon_count`, reached at Ωt = π.
pub fn tc_photon_count_peak(n_tls: usize) -> f64 {
    let n = n_tls as f64;
    8.0 * n * (n - 1.0) / (2.0 * n - 1.0).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ProductBasis;

    fn p(n: usize, g: f64) -> ModelParams {
        ModelParams::resonant(1.0, g, n).unwrap()
    }

    #[test]
    fn sem_matrix_entries() {
        let h = sem_hamiltonian(&p(2, 0.07)).unwrap();
        assert!((h.matrix[(0, 1)] - 0.07 * 2f64.sqrt()).abs() < 1e-15);
        assert!((h.matrix[(0, 1)] - 0.0989949).abs() < 1e-7);
        assert!((h.matrix[(1, 2)] - 0.07).abs() < 1e-15);
        assert_eq!(h.matrix[(0, 2)], 0.0);
        assert_eq!(h.matrix.diagonal(), Vector3::new(2.0, 2.0, 2.0));
        let free = sem_hamiltonian(&p(3, 0.0)).unwrap();
        assert!((0..3).all(|i| (0..3).all(|j| i == j || free.matrix[(i, j)] == 0.0)));
    }

    #[test]
    fn sem_matrix_is_projection_of_full_tc() {
        for params in [p(3, 0.07), ModelParams::new(0.95, 1.02, 0.11, 4).unwrap()] {
            let sem = sem_hamiltonian(&params).unwrap();
            let full = build_hamiltonian(ModelKind::Tc, &params).unwrap();
            let basis = ProductBasis::new(&params).unwrap();
            let shift = params.n_tls as f64 * params.omega_m / 2.0;
            for (i, si) in SEM_BASIS.iter().enumerate() {
                for (j, sj) in SEM_BASIS.iter().enumerate() {
                    let a = basis.index_of(*si).unwrap();
                    let b = basis.index_of(*sj).unwrap();
                    let mut v = full.matrix()[(a, b)].re;
                    if i == j {
                        v += shift;
                    }
                    assert!((v - sem.matrix[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn manifold_domain() {
        assert!(matches!(sem_hamiltonian(&p(1, 0.07)), Err(Error::ManifoldDomain(1))));
        assert!(matches!(tc_photon_count(&p(1, 0.07), 1.0), Err(Error::ManifoldDomain(1))));
    }

    #[test]
    fn resonant_triplet_values() {
        let t = resonant_triplet(&p(2, 0.07)).unwrap();
        let big = 0.07 * 3f64.sqrt();
        assert!((big - 0.1212436).abs() < 1e-7);
        assert!((t.e_minus - 1.8787564).abs() < 1e-7);
        assert_eq!(t.e_zero, 2.0);
        assert!((t.e_plus - 2.1212436).abs() < 1e-7);
        assert!(t.alpha.abs() < 1e-15);
        assert_eq!(t.v_zero[1], 0.0);
    }

    #[test]
    fn resonant_triplet_matches_numeric_sem_diagonalization() {
        for n in 2..=15 {
            let params = p(n, 0.07);
            let closed = resonant_triplet(&params).unwrap();
            let numeric = sem_hamiltonian(&params).unwrap().triplet();
            for (a, b) in [(closed.e_minus, numeric.e_minus), (closed.e_zero, numeric.e_zero), (closed.e_plus, numeric.e_plus)] {
                assert!((a - b).abs() < 1e-13);
            }
            for (a, b) in closed.vectors().iter().zip(numeric.vectors().iter()) {
                assert!((a.dot(b).abs() - 1.0).abs() < 1e-12);
            }
            // Ω_N² + Ω_{N−1}² = Ω_{2N−1}²
            let lhs = rabi_component(&params, n).powi(2) + rabi_component(&params, n - 1).powi(2);
            assert!((lhs - sem_rabi_frequency(&params).powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn triplet_vectors_orthonormal() {
        let t = resonant_triplet(&p(6, 0.1)).unwrap();
        let vs = t.vectors();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((vs[i].dot(&vs[j]) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn off_resonant_closed_form_refused() {
        let params = ModelParams::new(1.0, 1.01, 0.07, 2).unwrap();
        assert!(matches!(resonant_triplet(&params), Err(Error::OffResonance { .. })));
        assert!(matches!(tc_photon_count(&params, 1.0), Err(Error::OffResonance { .. })));
        assert!(numeric_triplet(ModelKind::Dm, &params).is_ok());
    }

    #[test]
    fn numeric_tc_reproduces_closed_form() {
        let params = p(2, 0.07);
        let num = numeric_triplet(ModelKind::Tc, &params).unwrap();
        let closed = resonant_triplet(&params).unwrap();
        assert!((num.e_plus - closed.e_plus).abs() < 1e-12);
        assert!((num.e_zero - closed.e_zero).abs() < 1e-12);
        assert!((num.e_minus - closed.e_minus).abs() < 1e-12);
        assert!(num.alpha.abs() < 1e-12);
    }

    #[test]
    fn numeric_dm_asymmetry() {
        let num = numeric_triplet(ModelKind::Dm, &p(2, 0.07)).unwrap();
        let scale = 0.07f64.powi(2) / 4.0;
        assert!(num.alpha < 0.0);
        assert!((num.alpha.abs() - scale).abs() < 0.3 * scale, "alpha {}", num.alpha);
        let tiny = numeric_triplet(ModelKind::Dm, &p(2, 1e-4)).unwrap();
        assert!(tiny.alpha.abs() < 1e-8);
    }

    #[test]
    fn alpha_is_symmetric_in_outer_pair() {
        assert_eq!(asymmetry(2.3, 1.9, 1.4), asymmetry(1.4, 1.9, 2.3));
    }

    #[test]
    fn tc_photon_count_values() {
        let params = p(2, 0.07);
        assert_eq!(tc_photon_count(&params, 0.0).unwrap(), 0.0);
        let big = sem_rabi_frequency(&params);
        let peak = tc_photon_count(&params, std::f64::consts::PI / big).unwrap();
        assert!((peak - 16.0 / 9.0).abs() < 1e-12);
        assert!((tc_photon_count_peak(2) - 16.0 / 9.0).abs() < 1e-15);
        for i in 0..2000 {
            let v = tc_photon_count(&params, i as f64 * 0.731).unwrap();
            assert!((-1e-15..=tc_photon_count_peak(2) + 1e-12).contains(&v));
        }
    }
}
