//! Beat extraction from a photon-number trace.
//!
//! The model is
//!
//! ```text
//! x(t) = c + a₂ cos(2Ωτ + φ) + [P cos ατ + Q sin ατ] cos Ωτ + [R cos ατ + S sin ατ] sin Ωτ
//! ```
//!
//! with τ = t − t₀. It contains the three-level beat template
//! A[cos 2Ωt + C − B cos αt cos Ωt] and also any unequal pair of tones at Ω ± α.
//! Ω and α enter nonlinearly; the seven amplitudes are eliminated by linear
//! least squares (variable projection). Ω is seeded from a zero-padded Hann
//! spectrum with quadratic peak interpolation, α from resolved sidebands or a
//! scan, and both are then refined by Levenberg-Marquardt.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Matrix2, SMatrix, SVector, SymmetricEigen, Vector2};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::ObservableTrace;

/// Envelope variation below this counts as "no resolvable beat".
pub const DEPTH_FLOOR: f64 = 1e-3;
/// Modulation depth under which a trace is called beat-free.
pub const BEAT_FREE_DEPTH: f64 = 0.02;

const N_COLS: usize = 7;
const MIN_CARRIER_PERIODS: f64 = 4.0;
const MIN_SAMPLES_PER_PERIOD: f64 = 8.0;
const ZERO_PAD: usize = 8;
const ALPHA_SCAN_POINTS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatFit {
    /// Carrier (Rabi) angular frequency.
    pub omega_fit: f64,
    /// Envelope angular frequency; 0 when no beat is resolved.
    pub alpha_fit: f64,
    /// 1 − min/max of the fitted carrier envelope over the trace window.
    pub modulation_depth: f64,
    /// RMS misfit.
    pub residual: f64,
    /// Time at which the fitted envelope is smallest.
    pub envelope_min_time: f64,
}

/// Fitted amplitudes for one (Ω, α).
struct Projection {
    coeffs: SVector<f64, N_COLS>,
    residuals: DVector<f64>,
}

struct Problem<'a> {
    tau: Vec<f64>,
    y: &'a [f64],
}

impl<'a> Problem<'a> {
    /// Calls `f(i, row)` for every sample. Rotating phasors replace per-sample
    /// trigonometry and are resynchronised every `RESYNC` samples.
    fn for_each_row(&self, omega: f64, alpha: f64, mut f: impl FnMut(usize, &[f64; N_COLS])) {
        const RESYNC: usize = 128;
        let dt = if self.tau.len() > 1 { self.tau[1] - self.tau[0] } else { 0.0 };
        let step_o = Complex64::from_polar(1.0, omega * dt);
        let step_a = Complex64::from_polar(1.0, alpha * dt);
        let mut po = Complex64::new(1.0, 0.0);
        let mut pa = Complex64::new(1.0, 0.0);
        for (i, &tau) in self.tau.iter().enumerate() {
            if i % RESYNC == 0 {
                po = Complex64::from_polar(1.0, omega * tau);
                pa = Complex64::from_polar(1.0, alpha * tau);
            }
            let p2 = po * po;
            let (co, so, ca, sa) = (po.re, po.im, pa.re, pa.im);
            f(i, &[1.0, p2.re, p2.im, co * ca, so * ca, co * sa, so * sa]);
            po *= step_o;
            pa *= step_a;
        }
    }

    fn project(&self, omega: f64, alpha: f64) -> Projection {
        let mut gram = SMatrix::<f64, N_COLS, N_COLS>::zeros();
        let mut rhs = SVector::<f64, N_COLS>::zeros();
        self.for_each_row(omega, alpha, |i, row| {
            let y = self.y[i];
            for a in 0..N_COLS {
                rhs[a] += row[a] * y;
                for b in a..N_COLS {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        });
        for a in 0..N_COLS {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        let coeffs = solve_scaled_pinv(&gram, &rhs);
        let mut residuals = DVector::zeros(self.y.len());
        self.for_each_row(omega, alpha, |i, row| {
            residuals[i] = self.y[i] - row.iter().zip(coeffs.iter()).map(|(a, b)| a * b).sum::<f64>();
        });
        Projection { coeffs, residuals }
    }

    fn rss(&self, omega: f64, alpha: f64) -> f64 {
        self.project(omega, alpha).residuals.norm_squared()
    }
}

/// Column-scaled pseudo-inverse solve; columns that vanish (α = 0 makes the
/// sin ατ columns identically zero) are dropped.
fn solve_scaled_pinv(
    gram: &SMatrix<f64, N_COLS, N_COLS>,
    rhs: &SVector<f64, N_COLS>,
) -> SVector<f64, N_COLS> {
    let scale = SVector::<f64, N_COLS>::from_fn(|i, _| {
        let d = gram[(i, i)];
        if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }
    });
    let scaled = SMatrix::<f64, N_COLS, N_COLS>::from_fn(|i, j| gram[(i, j)] * scale[i] * scale[j]);
    let b = rhs.component_mul(&scale);
    let eig = SymmetricEigen::new(scaled);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut x = SVector::<f64, N_COLS>::zeros();
    for k in 0..N_COLS {
        let lambda = eig.eigenvalues[k];
        if lambda > 1e-12 * top {
            let v = eig.eigenvectors.column(k);
            x += v * (v.dot(&b) / lambda);
        }
    }
    x.component_mul(&scale)
}

/// Carrier estimate and optional sideband from the padded spectrum.
struct SpectralSeed {
    omega: f64,
    alpha: Option<f64>,
}

fn spectral_seed(y: &[f64], dt: f64) -> Result<SpectralSeed> {
    let n = y.len();
    let len = (ZERO_PAD * n).next_power_of_two();
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); len];
    for (i, (&v, slot)) in y.iter().zip(buf.iter_mut()).enumerate() {
        let w = 0.5 - 0.5 * (TAU * i as f64 / (n - 1) as f64).cos();
        *slot = Complex64::new(v * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag: Vec<f64> = buf[..len / 2].iter().map(|z| z.norm()).collect();
    let bin = TAU / (len as f64 * dt);
    let resolution = TAU / (n as f64 * dt);
    let k_lo = ((2.0 * resolution / bin).ceil() as usize).max(1);
    if k_lo + 2 >= mag.len() {
        return Err(Error::Fit("trace too short for spectral analysis".into()));
    }
    let peak_k = (k_lo..mag.len() - 1)
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .expect("non-empty search range");
    let interp = |k: usize| -> f64 {
        if k == 0 || k + 1 >= mag.len() {
            return k as f64 * bin;
        }
        let (l, c, r) = (mag[k - 1], mag[k], mag[k + 1]);
        let denom = l - 2.0 * c + r;
        let shift = if denom.abs() > 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
        (k as f64 + shift.clamp(-0.5, 0.5)) * bin
    };
    let omega = interp(peak_k);

    // a second resolved tone close to the carrier marks Ω ± α
    let window = omega / 3.0;
    let min_sep = 1.5 * resolution;
    let mut side: Option<(usize, f64)> = None;
    for k in k_lo.max(1)..mag.len() - 1 {
        let w = k as f64 * bin;
        let sep = (w - omega).abs();
        if sep < min_sep || sep > window {
            continue;
        }
        let local_max = mag[k] >= mag[k - 1] && mag[k] >= mag[k + 1];
        if local_max && mag[k] >= 0.25 * mag[peak_k] && side.is_none_or(|(_, m)| mag[k] > m) {
            side = Some((k, mag[k]));
        }
    }
    Ok(match side {
        Some((k, _)) => {
            let other = interp(k);
            SpectralSeed {
                omega: 0.5 * (omega + other),
                alpha: Some(0.5 * (omega - other).abs()),
            }
        }
        None => SpectralSeed { omega, alpha: None },
    })
}

/// Grid search for a starting (Ω, α). With resolved sidebands Ω is already
/// centred and only α is scanned; otherwise the merged peak may sit anywhere
/// between the two tones, so Ω is scanned across one resolution width too.
fn coarse_search(problem: &Problem<'_>, seed: &SpectralSeed, resolution: f64) -> Vector2<f64> {
    let alpha_hi = (4.0 * resolution).max(3.0 * seed.alpha.unwrap_or(0.0));
    let alpha_steps = ((alpha_hi / (0.1 * resolution)).ceil() as usize).clamp(40, ALPHA_SCAN_POINTS);
    let mut alphas: Vec<f64> = (0..=alpha_steps)
        .map(|i| alpha_hi * i as f64 / alpha_steps as f64)
        .collect();
    alphas.extend(seed.alpha);
    let omegas: Vec<f64> = if seed.alpha.is_some() {
        vec![seed.omega]
    } else {
        (-8..=8).map(|i| seed.omega + i as f64 * resolution / 8.0).collect()
    };
    let mut best = (f64::INFINITY, Vector2::new(seed.omega, 0.0));
    for &w in &omegas {
        for &a in &alphas {
            let rss = problem.rss(w, a);
            if rss < best.0 {
                best = (rss, Vector2::new(w, a));
            }
        }
    }
    best.1
}

fn levenberg_marquardt(problem: &Problem<'_>, start: Vector2<f64>, step: f64) -> Result<Vector2<f64>> {
    let mut theta = start;
    let mut current = problem.project(theta[0], theta[1]).residuals;
    let mut cost = current.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..60 {
        let mut jac = DMatrix::<f64>::zeros(current.len(), 2);
        for p in 0..2 {
            let mut hi = theta;
            let mut lo = theta;
            hi[p] += step;
            lo[p] -= step;
            let d = (problem.project(hi[0], hi[1]).residuals - problem.project(lo[0], lo[1]).residuals) / (2.0 * step);
            jac.set_column(p, &d);
        }
        let jtj: Matrix2<f64> = (jac.transpose() * &jac).fixed_view::<2, 2>(0, 0).into_owned();
        let jtr: Vector2<f64> = (jac.transpose() * &current).fixed_rows::<2>(0).into_owned();
        let mut improved = false;
        for _ in 0..12 {
            let damped = jtj + Matrix2::from_diagonal(&jtj.diagonal()) * lambda + Matrix2::identity() * 1e-30;
            let Some(delta) = damped.try_inverse().map(|inv| -(inv * jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = theta + delta;
            let res = problem.project(trial[0], trial[1]).residuals;
            let trial_cost = res.norm_squared();
            if trial_cost.is_finite() && trial_cost < cost {
                let gain = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                theta = trial;
                current = res;
                cost = trial_cost;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if gain < 1e-13 {
                    return Ok(theta);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if !(theta[0].is_finite() && theta[1].is_finite()) {
        return Err(Error::Fit("refinement diverged".into()));
    }
    Ok(theta)
}

/// Fits carrier, beat frequency and envelope depth to a uniformly sampled trace.
pub fn extract_beat(trace: &ObservableTrace) -> Result<BeatFit> {
    let grid = trace.grid;
    let n = trace.values.len();
    if n < 16 || n != grid.count {
        return Err(Error::Fit(format!("need at least 16 uniform samples, got {n}")));
    }
    if trace.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("trace contains non-finite values".into()));
    }
    let mean = trace.values.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = trace.values.iter().map(|v| v - mean).collect();
    let spread = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if spread <= 1e-12 * mean.abs().max(1.0) {
        return Ok(BeatFit {
            omega_fit: 0.0,
            alpha_fit: 0.0,
            modulation_depth: 0.0,
            residual: (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt(),
            envelope_min_time: grid.t0,
        });
    }

    let duration = grid.duration();
    let seed = spectral_seed(&y, grid.dt)?;
    let periods = seed.omega * duration / TAU;
    if periods < MIN_CARRIER_PERIODS {
        return Err(Error::Fit(format!(
            "trace covers {periods:.2} carrier periods, need at least {MIN_CARRIER_PERIODS}"
        )));
    }
    let per_period = TAU / (seed.omega * grid.dt);
    if per_period < MIN_SAMPLES_PER_PERIOD {
        return Err(Error::Fit(format!(
            "{per_period:.1} samples per carrier period, need at least {MIN_SAMPLES_PER_PERIOD}"
        )));
    }

    let problem = Problem {
        tau: (0..n).map(|i| i as f64 * grid.dt).collect(),
        y: &y,
    };
    let resolution = TAU / duration;
    let start = coarse_search(&problem, &seed, resolution);
    // the misfit is even in α, so α = 0 is always stationary: also start
    // from small positive α to catch envelopes slower than the window
    let mut starts = vec![start];
    if start[1] < 0.1 * resolution {
        starts.extend([0.03, 0.1].map(|f| Vector2::new(start[0], f * resolution)));
    }
    let mut theta = start;
    let mut best_rss = f64::INFINITY;
    for s in starts {
        let candidate = levenberg_marquardt(&problem, s, 1e-5 * resolution)?;
        let rss = problem.rss(candidate[0], candidate[1]);
        if rss < best_rss {
            best_rss = rss;
            theta = candidate;
        }
    }
    let (omega, alpha) = (theta[0].abs(), theta[1].abs());
    let fit = problem.project(omega, alpha);
    let residual = (fit.residuals.norm_squared() / n as f64).sqrt();
    if !residual.is_finite() {
        return Err(Error::Fit("ill-conditioned fit".into()));
    }

    let c = &fit.coeffs;
    let (p, r, q, s) = (c[3], c[4], c[5], c[6]);
    let mut e_max = 0.0f64;
    let mut e_min = f64::INFINITY;
    let mut t_min = grid.t0;
    for (i, &tau) in problem.tau.iter().enumerate() {
        let (sa, ca) = (alpha * tau).sin_cos();
        let e = ((p * ca + q * sa).powi(2) + (r * ca + s * sa).powi(2)).sqrt();
        e_max = e_max.max(e);
        if e < e_min {
            e_min = e;
            t_min = grid.time(i);
        }
    }
    let depth = if e_max > 0.0 { (1.0 - e_min / e_max).clamp(0.0, 1.0) } else { 0.0 };
    let resolved = depth >= DEPTH_FLOOR;
    Ok(BeatFit {
        omega_fit: omega,
        alpha_fit: if resolved { alpha } else { 0.0 },
        modulation_depth: depth,
        residual,
        envelope_min_time: t_min,
    })
}
