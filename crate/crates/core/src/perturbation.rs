//! Second-order counter-rotating-wave corrections to the resonant SEM
//! polaritons and the beating predictions that follow from them.
//!
//! Conventions: the CRW operator carries its g/√N prefactor, energies are
//! measured from |s_0, 0⟩, and every FEM denominator E_i − 4ω is replaced by
//! −2ω.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisState, ProductBasis};
use crate::error::{Error, Result};
use crate::hamiltonian::crw_raising;
use crate::params::ModelParams;
use crate::sem::{embed_sem_vector, require_sem, resonant_triplet, sem_rabi_frequency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polariton {
    Plus,
    Zero,
    Minus,
}

fn resonant_sem(params: &ModelParams) -> Result<f64> {
    require_sem(params)?;
    params.warn_if_strong();
    params.require_resonance()
}

/// Shifts from coupling to |s_0, 0⟩ through J_− a.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundShift {
    pub plus: f64,
    pub minus: f64,
    /// P₀ has no |s_1,1⟩ component and is untouched.
    pub zero: f64,
}

/// ΔE±⁽⁰⁾ = g² / (2(2ω ± Ω))
pub fn ground_shift(params: &ModelParams) -> Result<GroundShift> {
    let omega = resonant_sem(params)?;
    let big = sem_rabi_frequency(params);
    if (2.0 * omega - big).abs() <= 1e-12 * omega {
        return Err(Error::Singular(format!("2ω = Ω = {big} (deep-strong coupling)")));
    }
    let g2 = params.g * params.g;
    Ok(GroundShift {
        plus: g2 / (2.0 * (2.0 * omega + big)),
        minus: g2 / (2.0 * (2.0 * omega - big)),
        zero: 0.0,
    })
}

/// Σ_{n=1..3} |⟨s_n, 4−n|(g/√N) J_+ a†|P_i⟩|² / (−2ω), from explicit matrix
/// elements of the collective operators.
pub fn fem_shift_sum(params: &ModelParams, which: Polariton) -> Result<f64> {
    let omega = resonant_sem(params)?;
    let params = params.with_cutoff(params.photon_cutoff.max(3));
    let triplet = resonant_triplet(&params)?;
    let v = match which {
        Polariton::Plus => triplet.v_plus,
        Polariton::Zero => triplet.v_zero,
        Polariton::Minus => triplet.v_minus,
    };
    let psi = embed_sem_vector(&params, &Vector3::from(v))?;
    let raised = crw_raising(&params)? * psi;
    let basis = ProductBasis::new(&params)?;
    let weight: f64 = (1..=3usize)
        .filter_map(|n| basis.index_of(BasisState::new(n, 4 - n)))
        .map(|i| raised[i].norm_sqr())
        .sum();
    Ok(weight / (-2.0 * omega))
}

/// ΔE₀⁽⁴⁾ = 3g²(3 − 2N) / (2ω(2N − 1)),
/// ΔE±⁽⁴⁾ = g²(10 + 7N(2N − 3)) / (2N(2N − 1)(−2ω)).
pub fn fem_shift_closed_form(params: &ModelParams, which: Polariton) -> Result<f64> {
    let omega = resonant_sem(params)?;
    let n = params.n_tls as f64;
    let g2 = params.g * params.g;
    Ok(match which {
        Polariton::Zero => 3.0 * g2 * (3.0 - 2.0 * n) / (2.0 * omega * (2.0 * n - 1.0)),
        Polariton::Plus | Polariton::Minus => {
            g2 * (10.0 + 7.0 * n * (2.0 * n - 3.0)) / (2.0 * n * (2.0 * n - 1.0) * (-2.0 * omega))
        }
    })
}

/// α ≈ (g²/2ω)(N − 5)/(N(2N − 1))
pub fn alpha_pred(params: &ModelParams) -> Result<f64> {
    let omega = resonant_sem(params)?;
    let n = params.n_tls as f64;
    Ok(params.g * params.g / (2.0 * omega) * (n - 5.0) / (n * (2.0 * n - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedEnergies {
    pub de0_ground: f64,
    pub de_plus_ground: f64,
    pub de_minus_ground: f64,
    pub de0_fem: f64,
    pub de_pm_fem: f64,
    pub e0: f64,
    pub e_plus: f64,
    pub e_minus: f64,
    /// Closed-form beating frequency.
    pub alpha_pred: f64,
    /// (E₊ + E₋)/2 − E₀ from the totals above; differs from `alpha_pred`
    /// only through the unequal ground shifts, at O(g⁴).
    pub alpha_assembled: f64,
}

/// E₀ = 2ω + ΔE₀, E± = 2ω ± Ω + ΔE± with ΔE_i = ΔE_i⁽⁰⁾ + ΔE_i⁽⁴⁾.
pub fn perturbed_energies(params: &ModelParams) -> Result<PerturbedEnergies> {
    let omega = resonant_sem(params)?;
    let big = sem_rabi_frequency(params);
    let ground = ground_shift(params)?;
    let de0_fem = fem_shift_closed_form(params, Polariton::Zero)?;
    let de_pm_fem = fem_shift_closed_form(params, Polariton::Plus)?;
    let e0 = 2.0 * omega + ground.zero + de0_fem;
    let e_plus = 2.0 * omega + big + ground.plus + de_pm_fem;
    let e_minus = 2.0 * omega - big + ground.minus + de_pm_fem;
    Ok(PerturbedEnergies {
        de0_ground: ground.zero,
        de_plus_ground: ground.plus,
        de_minus_ground: ground.minus,
        de0_fem,
        de_pm_fem,
        e0,
        e_plus,
        e_minus,
        alpha_pred: alpha_pred(params)?,
        alpha_assembled: 0.5 * (e_plus + e_minus) - e0,
    })
}

/// (N−1)/(2(2N−1)²) · [cos 2Ωt + 8N − 1 − 8N cos(αt) cos(Ωt)] with α from
/// `alpha_pred`.
pub fn dm_photon_count_approx(params: &ModelParams, t: f64) -> Result<f64> {
    let alpha = alpha_pred(params)?;
    dm_photon_count_with_alpha(params, alpha, t)
}

/// The same template with an explicit beating frequency.
pub fn dm_photon_count_with_alpha(params: &ModelParams, alpha: f64, t: f64) -> Result<f64> {
    require_sem(params)?;
    let n = params.n_tls as f64;
    let big = sem_rabi_frequency(params);
    let pref = (n - 1.0) / (2.0 * (2.0 * n - 1.0).powi(2));
    Ok(pref * ((2.0 * big * t).cos() + 8.0 * n - 1.0 - 8.0 * n * (alpha * t).cos() * (big * t).cos()))
}

/// Beating period, infinite where α vanishes (N = 5).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeatPeriod {
    Finite(f64),
    Infinite,
}

impl BeatPeriod {
    pub fn as_f64(self) -> f64 {
        match self {
            BeatPeriod::Finite(t) => t,
            BeatPeriod::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, BeatPeriod::Infinite)
    }
}

impl Serialize for BeatPeriod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BeatPeriod::Finite(t) => s.serialize_f64(*t),
            BeatPeriod::Infinite => s.serialize_str("inf"),
        }
    }
}

/// T_beat = (4πω/g²) |N(2N − 1)/(N − 5)|
pub fn beating_period(params: &ModelParams) -> Result<BeatPeriod> {
    let omega = resonant_sem(params)?;
    if params.n_tls == 5 || params.g == 0.0 {
        return Ok(BeatPeriod::Infinite);
    }
    let n = params.n_tls as f64;
    Ok(BeatPeriod::Finite(
        4.0 * PI * omega / (params.g * params.g) * (n * (2.0 * n - 1.0) / (n - 5.0)).abs(),
    ))
}

/// Physical-unit view of the resonant predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitReport {
    pub omega_c_ghz: f64,
    pub g_mhz: f64,
    pub n_tls: usize,
    pub g_over_omega: f64,
    /// Ω_{2N−1} in units of ω_c.
    pub rabi_frequency: f64,
    pub t_rabi_ns: f64,
    pub t_beat_ns: BeatPeriod,
    pub conventions: Vec<String>,
}

/// Converts ω_c/2π [GHz] and g/2π [MHz] to the dimensionless model and back
/// to nanoseconds.
pub fn unit_conversion(omega_c_ghz: f64, g_mhz: f64, n_tls: usize) -> Result<UnitReport> {
    if !(omega_c_ghz.is_finite() && omega_c_ghz > 0.0 && g_mhz.is_finite() && g_mhz > 0.0) {
        return Err(Error::InvalidParams(format!(
            "unit conversion needs positive frequencies, got {omega_c_ghz} GHz, {g_mhz} MHz"
        )));
    }
    let g_over_omega = g_mhz / (1000.0 * omega_c_ghz);
    let params = ModelParams::resonant(1.0, g_over_omega, n_tls)?;
    require_sem(&params)?;
    let rabi = sem_rabi_frequency(&params);
    // ω_c = 2π · omega_c_ghz rad/ns
    let t_rabi_ns = 1.0 / (rabi * omega_c_ghz);
    let t_beat_ns = match beating_period(&params)? {
        BeatPeriod::Finite(t) => BeatPeriod::Finite(t / (2.0 * PI * omega_c_ghz)),
        BeatPeriod::Infinite => BeatPeriod::Infinite,
    };
    Ok(UnitReport {
        omega_c_ghz,
        g_mhz,
        n_tls,
        g_over_omega,
        rabi_frequency: rabi,
        t_rabi_ns,
        t_beat_ns,
        conventions: vec![
            "dimensionless time unit is 1/omega_c with omega_c = 2*pi*omega_c_ghz rad/ns".into(),
            "g_over_omega = g_mhz / (1000 * omega_c_ghz)".into(),
            "T_rabi = 2*pi / Omega with Omega = g*sqrt(2(2N-1)/N) (SEM Rabi frequency)".into(),
            "T_beat = (4*pi*omega/g^2) * |N(2N-1)/(N-5)|".into(),
        ],
    })
}
