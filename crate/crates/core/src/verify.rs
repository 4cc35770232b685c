//! The acceptance suite. Each criterion runs its own simulations and returns
//! a pass/fail verdict with the measured numbers.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::basis::BasisState;
use crate::beat::{extract_beat, BeatFit, BEAT_FREE_DEPTH};
use crate::error::{Error, Result};
use crate::experiment::single_manifold_check;
use crate::hamiltonian::{build_hamiltonian, photon_number};
use crate::params::{ModelKind, ModelParams};
use crate::perturbation::{
    alpha_pred, beating_period, fem_shift_closed_form, fem_shift_sum, perturbed_energies, unit_conversion,
    dm_photon_count_with_alpha, Polariton,
};
use crate::sem::{numeric_triplet, sem_rabi_frequency, tc_photon_count, tc_photon_count_peak};
use crate::spectral::{
    diagonalize, hybrid_propagate, observable_trace, photon_traces, propagate_ode_default, propagate_spectral,
    HybridSpec, ObservableTrace, SpectralPropagator, StateVector, TimeGrid,
};

pub const CRITERIA: [(u8, &str); 13] = [
    (1, "closed-form TC exactness"),
    (2, "resonant triplet"),
    (3, "perturbation self-consistency"),
    (4, "beating prediction vs simulation"),
    (5, "N=5 null"),
    (6, "T_beat(N) shape"),
    (7, "hybrid reconstruction dichotomy"),
    (8, "model agreement"),
    (9, "identity check"),
    (10, "propagator cross-validation"),
    (11, "single-excitation null"),
    (12, "scaling law"),
    (13, "unit conversion"),
];

const G: f64 = 0.07;
const T_MAX: f64 = 3000.0;
const DT: f64 = 0.5;
/// Long enough for one full beat at the weakest scaling coupling.
const SCALING_T_MAX: f64 = 16000.0;
const SCALING_COUPLINGS: [f64; 3] = [0.04, 0.06, 0.08];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] criterion {:>2} ({}): {}", self.id, self.name, self.detail)
    }
}

fn resonant(n: usize, g: f64) -> ModelParams {
    ModelParams::resonant(1.0, g, n).expect("fixed acceptance parameters are valid")
}

fn grid() -> TimeGrid {
    TimeGrid::span(T_MAX, DT).expect("fixed acceptance grid is valid")
}

fn doubly_excited() -> BasisState {
    BasisState::new(2, 0)
}

fn dm_fit(n: usize) -> Result<(ObservableTrace, BeatFit)> {
    let trace = photon_traces(ModelKind::Dm, &resonant(n, G), doubly_excited(), &grid())?.mean;
    let fit = extract_beat(&trace)?;
    Ok((trace, fit))
}

/// One propagation used by the acceptance criteria, rerun by criterion 10.
#[derive(Debug, Clone)]
pub struct AcceptanceRun {
    pub label: String,
    pub kind: ModelKind,
    pub params: ModelParams,
    pub init: BasisState,
    pub grid: TimeGrid,
}

pub fn acceptance_runs() -> Vec<AcceptanceRun> {
    let mut runs = Vec::new();
    let mut push = |label: &str, kind, params, init, grid| {
        runs.push(AcceptanceRun { label: label.to_string(), kind, params, init, grid });
    };
    push("c1 TC N=2", ModelKind::Tc, resonant(2, G), doubly_excited(), grid());
    push("c4 DM N=2", ModelKind::Dm, resonant(2, G), doubly_excited(), grid());
    push("c5 DM N=5", ModelKind::Dm, resonant(5, G), doubly_excited(), grid());
    push("c8 PF N=2", ModelKind::Pf, resonant(2, G), doubly_excited(), grid());
    for n in [2, 5] {
        push(&format!("c11 DM N={n} |s1,0>"), ModelKind::Dm, resonant(n, G), BasisState::new(1, 0), grid());
    }
    let long = TimeGrid::span(SCALING_T_MAX, DT).expect("valid grid");
    for g in SCALING_COUPLINGS {
        push(&format!("c12 DM g={g}"), ModelKind::Dm, resonant(2, g), doubly_excited(), long);
    }
    runs
}

fn criterion_1() -> Result<(bool, String)> {
    let p = resonant(2, G);
    let g = grid();
    let trace = photon_traces(ModelKind::Tc, &p, doubly_excited(), &g)?.mean;
    let mut err = 0.0f64;
    for (i, t) in g.times().enumerate() {
        err = err.max((trace.values[i] - tc_photon_count(&p, t)?).abs());
    }
    // full simulation evaluated exactly at Ωt = π
    let h = build_hamiltonian(ModelKind::Tc, &p)?;
    let eig = diagonalize(&h)?;
    let psi0 = StateVector::basis_state(&p, doubly_excited())?;
    let t_peak = PI / sem_rabi_frequency(&p);
    let psi = SpectralPropagator::new(&eig, &psi0)?.state_at(t_peak);
    let peak = photon_number(&p)?.expectation(&psi.0)?;
    let peak_err = (peak - 16.0 / 9.0).abs().max((tc_photon_count_peak(2) - 16.0 / 9.0).abs());
    Ok((
        err < 1e-10 && peak_err < 1e-9,
        format!("sup error vs closed form {err:.2e} (< 1e-10); peak {peak:.12} vs 16/9, error {peak_err:.2e} (< 1e-9)"),
    ))
}

fn criterion_2() -> Result<(bool, String)> {
    let mut worst_e = 0.0f64;
    let mut worst_alpha = 0.0f64;
    for n in 2..=15 {
        let p = resonant(n, G);
        let tri = numeric_triplet(ModelKind::Tc, &p)?;
        let big = G * (2.0 * (2.0 * n as f64 - 1.0) / n as f64).sqrt();
        worst_e = worst_e
            .max((tri.e_zero - 2.0).abs())
            .max((tri.e_plus - 2.0 - big).abs())
            .max((tri.e_minus - 2.0 + big).abs());
        worst_alpha = worst_alpha.max(tri.alpha.abs());
    }
    Ok((
        worst_e < 1e-12 && worst_alpha < 1e-12,
        format!("N=2..15: max energy error {worst_e:.2e}, max |alpha_TC| {worst_alpha:.2e} (both < 1e-12)"),
    ))
}

fn criterion_3() -> Result<(bool, String)> {
    let mut worst_sum = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let scale = G * G;
    for n in 2..=15 {
        let p = resonant(n, G);
        for which in [Polariton::Plus, Polariton::Zero, Polariton::Minus] {
            worst_sum = worst_sum.max((fem_shift_sum(&p, which)? - fem_shift_closed_form(&p, which)?).abs());
        }
        let e = perturbed_energies(&p)?;
        worst_ratio = worst_ratio.max((e.alpha_assembled - e.alpha_pred).abs() / scale);
    }
    let bound = 5.0 * G * G;
    Ok((
        worst_sum < 1e-12 && worst_ratio < bound,
        format!(
            "N=2..15: max |sum - closed form| {worst_sum:.2e} (< 1e-12); max |alpha_assembled - alpha_pred| / (g^2/omega) \
             {worst_ratio:.3e} (< 5 g^2 = {bound:.3e})"
        ),
    ))
}

fn criterion_4() -> Result<(bool, String)> {
    let (_, fit) = dm_fit(2)?;
    let pred = alpha_pred(&resonant(2, G))?.abs();
    let rel = (fit.alpha_fit - pred).abs() / pred;
    let t = fit.envelope_min_time;
    Ok((
        rel < 0.3 && (1150.0..=1450.0).contains(&t),
        format!(
            "alpha_fit {:.4e} vs alpha_pred {pred:.4e} (deviation {:.1}%, < 30%); envelope minimum at t = {t} (in [1150, 1450])",
            fit.alpha_fit,
            100.0 * rel
        ),
    ))
}

fn criterion_5() -> Result<(bool, String)> {
    let (_, f2) = dm_fit(2)?;
    let (_, f5) = dm_fit(5)?;
    let period = beating_period(&resonant(5, G))?;
    let ratio = f5.modulation_depth / f2.modulation_depth;
    Ok((
        ratio < 0.15 && period.is_infinite(),
        format!(
            "depth N=5 {:.3e} / depth N=2 {:.3} = {ratio:.3e} (< 0.15); T_beat(N=5) infinite: {}",
            f5.modulation_depth,
            f2.modulation_depth,
            period.is_infinite()
        ),
    ))
}

fn criterion_6() -> Result<(bool, String)> {
    let mut periods = Vec::new();
    for n in 2..=15 {
        periods.push((n, beating_period(&resonant(n, G))?));
    }
    let diverges = periods.iter().any(|&(n, t)| n == 5 && t.is_infinite())
        && periods.iter().all(|&(n, t)| n == 5 || !t.is_infinite());
    let argmin = periods
        .iter()
        .filter(|(n, _)| *n > 5)
        .min_by(|a, b| a.1.as_f64().total_cmp(&b.1.as_f64()))
        .map(|(n, _)| *n)
        .unwrap_or(0);
    Ok((
        diverges && argmin == 10,
        format!("divergence only at N=5: {diverges}; argmin over N=6..15 is N={argmin} (expected 10)"),
    ))
}

fn criterion_7() -> Result<(bool, String)> {
    let p = resonant(2, G);
    let g = grid();
    let psi0 = StateVector::basis_state(&p, doubly_excited())?;
    let (_, full) = dm_fit(2)?;
    let mixed = |vectors: ModelKind, values: ModelKind| -> Result<f64> {
        let spec = HybridSpec {
            coefficient_source: vectors,
            eigenvector_source: vectors,
            eigenvalue_source: values,
        };
        Ok(extract_beat(&hybrid_propagate(spec, &p, &psi0, &g)?.trace)?.modulation_depth)
    };
    let tc_vec_dm_val = mixed(ModelKind::Tc, ModelKind::Dm)?;
    let dm_vec_tc_val = mixed(ModelKind::Dm, ModelKind::Tc)?;
    let d = full.modulation_depth;
    let rel = (tc_vec_dm_val - d).abs() / d;
    Ok((
        rel < 0.3 && dm_vec_tc_val < 0.1 * d,
        format!(
            "full DM depth {d:.3}; TC vectors + DM energies {tc_vec_dm_val:.3} (deviation {:.1}%, < 30%); \
             DM vectors + TC energies {dm_vec_tc_val:.3e} (< {:.3e})",
            100.0 * rel,
            0.1 * d
        ),
    ))
}

fn criterion_8() -> Result<(bool, String)> {
    let p = resonant(2, G);
    let g = grid();
    let (dm, _) = dm_fit(2)?;
    let pf = photon_traces(ModelKind::Pf, &p, doubly_excited(), &g)?.mean;
    let tc = photon_traces(ModelKind::Tc, &p, doubly_excited(), &g)?.mean;
    let diff = pf.sup_distance(&dm);
    let tc_depth = extract_beat(&tc)?.modulation_depth;
    Ok((
        diff < 0.05 && tc_depth < BEAT_FREE_DEPTH,
        format!("sup |PF - DM| = {diff:.4} (< 0.05); TC depth {tc_depth:.2e} (< {BEAT_FREE_DEPTH})"),
    ))
}

fn criterion_9() -> Result<(bool, String)> {
    let g = TimeGrid::new(0.0, T_MAX / 9999.0, 10_000)?;
    let mut worst = 0.0f64;
    for n in 2..=15 {
        let p = resonant(n, G);
        for t in g.times() {
            worst = worst.max((dm_photon_count_with_alpha(&p, 0.0, t)? - tc_photon_count(&p, t)?).abs());
        }
    }
    Ok((worst < 1e-12, format!("N=2..15 on 10^4 points: max difference {worst:.2e} (< 1e-12)")))
}

/// Agreement measures for one run.
#[derive(Debug, Clone, Serialize)]
pub struct PropagatorComparison {
    pub label: String,
    pub trace_difference: f64,
    pub state_difference: f64,
    pub spectral_norm_deviation: f64,
    pub rk4_norm_deviation: f64,
    pub energy_drift: f64,
}

pub fn compare_propagators(run: &AcceptanceRun) -> Result<PropagatorComparison> {
    let h = build_hamiltonian(run.kind, &run.params)?;
    let eig = diagonalize(&h)?;
    let psi0 = StateVector::basis_state(&run.params, run.init)?;
    let spectral = propagate_spectral(&eig, &psi0, &run.grid)?;
    let rk4 = propagate_ode_default(&h, &psi0, &run.grid)?;
    let n = photon_number(&run.params)?;
    let a = observable_trace(&spectral, &run.grid, &n)?;
    let b = observable_trace(&rk4, &run.grid, &n)?;
    let e0 = h.expectation(&psi0.0)?;
    let mut cmp = PropagatorComparison {
        label: run.label.clone(),
        trace_difference: a.sup_distance(&b),
        state_difference: 0.0,
        spectral_norm_deviation: 0.0,
        rk4_norm_deviation: 0.0,
        energy_drift: 0.0,
    };
    for (s, r) in spectral.iter().zip(&rk4) {
        cmp.state_difference = cmp.state_difference.max(s.sup_distance(r));
        cmp.spectral_norm_deviation = cmp.spectral_norm_deviation.max((s.norm() - 1.0).abs());
        cmp.rk4_norm_deviation = cmp.rk4_norm_deviation.max((r.norm() - 1.0).abs());
        for psi in [s, r] {
            cmp.energy_drift = cmp.energy_drift.max((h.expectation(&psi.0)? - e0).abs());
        }
    }
    Ok(cmp)
}

fn criterion_10() -> Result<(bool, String)> {
    let comparisons = acceptance_runs()
        .par_iter()
        .map(compare_propagators)
        .collect::<Result<Vec<_>>>()?;
    let max = |f: fn(&PropagatorComparison) -> f64| comparisons.iter().map(f).fold(0.0, f64::max);
    let trace = max(|c| c.trace_difference);
    let state = max(|c| c.state_difference);
    let spec_norm = max(|c| c.spectral_norm_deviation);
    let rk_norm = max(|c| c.rk4_norm_deviation);
    let energy = max(|c| c.energy_drift);
    Ok((
        trace < 1e-6 && spec_norm < 1e-10 && rk_norm < 1e-8 && energy < 1e-8,
        format!(
            "{} runs: max <a^dagger a> difference {trace:.2e} (< 1e-6); max state difference {state:.2e}; \
             norm deviation spectral {spec_norm:.2e} (< 1e-10), RK4 {rk_norm:.2e} (< 1e-8); energy drift {energy:.2e} (< 1e-8)",
            comparisons.len()
        ),
    ))
}

fn criterion_11() -> Result<(bool, String)> {
    let mut passed = true;
    let mut parts = Vec::new();
    for n in [2, 5] {
        let r = single_manifold_check(ModelKind::Dm, &resonant(n, G), &grid())?;
        passed &= r.passed;
        parts.push(format!("N={n} depth {:.2e}", r.fit.modulation_depth));
    }
    Ok((passed, format!("{} (< {BEAT_FREE_DEPTH})", parts.join(", "))))
}

fn criterion_12() -> Result<(bool, String)> {
    let long = TimeGrid::span(SCALING_T_MAX, DT)?;
    let fits = SCALING_COUPLINGS
        .par_iter()
        .map(|&g| {
            let trace = photon_traces(ModelKind::Dm, &resonant(2, g), doubly_excited(), &long)?.mean;
            Ok((g, extract_beat(&trace)?.alpha_fit))
        })
        .collect::<Result<Vec<_>>>()?;
    if fits.iter().any(|&(_, a)| a <= 0.0) {
        return Ok((false, format!("no beating resolved in {fits:?}")));
    }
    let xs: Vec<f64> = fits.iter().map(|f| f.0.ln()).collect();
    let ys: Vec<f64> = fits.iter().map(|f| f.1.ln()).collect();
    let slope = regression_slope(&xs, &ys);
    let listed: Vec<String> = fits.iter().map(|(g, a)| format!("g={g}: {a:.4e}")).collect();
    Ok((
        (slope - 2.0).abs() <= 0.15,
        format!("{}; log-log exponent {slope:.4} (2.0 +/- 0.15)", listed.join(", ")),
    ))
}

/// Least-squares slope of y on x.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn criterion_13() -> Result<(bool, String)> {
    let r = unit_conversion(6.0, 450.0, 2)?;
    Ok((
        r.g_over_omega == 0.075,
        format!(
            "g/omega_c = {} (expected 0.075); T_rabi = {:.4} ns, T_beat = {:.2} ns under the documented conventions",
            r.g_over_omega,
            r.t_rabi_ns,
            r.t_beat_ns.as_f64()
        ),
    ))
}

/// Runs one criterion; simulation errors count as failures.
pub fn run_criterion(id: u8) -> Result<CriterionReport> {
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.1)
        .ok_or_else(|| Error::InvalidParams(format!("no acceptance criterion {id}")))?;
    let outcome = match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        9 => criterion_9(),
        10 => criterion_10(),
        11 => criterion_11(),
        12 => criterion_12(),
        _ => criterion_13(),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(CriterionReport { id, name, passed, detail })
}

/// All criteria, in order.
pub fn run_all() -> Vec<CriterionReport> {
    CRITERIA
        .par_iter()
        .map(|&(id, _)| run_criterion(id).expect("listed criterion"))
        .collect()
}
