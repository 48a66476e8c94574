//! Linear stability of periodic minimizers: transfer matrices, monodromy,
//! Lyapunov exponent, phonon spectrum and the Peierls-Nabarro barrier.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::GeneratingModel;
use crate::variational::{
    chain_action, minimize_periodic, periodic_hessian, solve_chain, PeriodicConfiguration, SolverOptions,
};

/// `|trace| - 2` below this is treated as parabolic.
pub const PARABOLIC_TOLERANCE: f64 = 1e-10;

/// Phonon gaps above this count as a non-degenerate second variation.
pub const GAP_TOLERANCE: f64 = 1e-6;

/// Eigenvalues of a real 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Eigenpair {
    Real { mu1: f64, mu2: f64 },
    Complex { re: f64, im: f64 },
}

impl Eigenpair {
    pub fn max_modulus(&self) -> f64 {
        match *self {
            Eigenpair::Real { mu1, mu2 } => mu1.abs().max(mu2.abs()),
            Eigenpair::Complex { re, im } => re.hypot(im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperbolicityReport {
    pub p: i64,
    pub q: i64,
    pub trace: f64,
    pub determinant: f64,
    pub eigenvalues: Eigenpair,
    /// Per-step exponent `max(0, ln|mu_max|) / q`.
    pub lyapunov: f64,
    pub c0_estimate: Option<f64>,
    pub phonon_gap: f64,
    pub pn_barrier: Option<f64>,
}

fn bonds_and_diagonals(model: &GeneratingModel, c: &PeriodicConfiguration) -> (Vec<f64>, Vec<f64>) {
    let q = c.q;
    let b: Vec<f64> = (0..q).map(|i| model.partials(c.lift(i), c.lift(i + 1)).d12).collect();
    let d: Vec<f64> = (0..q)
        .map(|i| model.partials(c.lift(i), c.lift(i + 1)).d11 + model.partials(c.lift(i - 1), c.lift(i)).d22)
        .collect();
    (b, d)
}

/// `M_i` maps `(xi_i, xi_{i-1})` to `(xi_{i+1}, xi_i)` along the linearized recursion.
pub fn transfer_matrices(model: &GeneratingModel, config: &PeriodicConfiguration) -> Result<Vec<Matrix2<f64>>> {
    let (b, d) = bonds_and_diagonals(model, config);
    let q = config.q as usize;
    (0..q)
        .map(|i| {
            let bi = b[i];
            let bprev = b[(i + q - 1) % q];
            if bi == 0.0 || !bi.is_finite() {
                return Err(Error::DegenerateTwist { site: i });
            }
            Ok(Matrix2::new(-d[i] / bi, -bprev / bi, 1.0, 0.0))
        })
        .collect()
}

/// Monodromy data for one periodic orbit.
///
/// The product is renormalized at each step so long orbits do not overflow;
/// `trace` is returned unscaled and may be infinite in that case.
pub fn monodromy(model: &GeneratingModel, config: &PeriodicConfiguration) -> Result<HyperbolicityReport> {
    let mats = transfer_matrices(model, config)?;
    let mut acc = Matrix2::identity();
    let mut log_scale = 0.0f64;
    let mut det = 1.0f64;
    for m in &mats {
        acc = m * acc;
        det *= m.determinant();
        let s = acc.amax();
        if s > 1e50 {
            acc /= s;
            log_scale += s.ln();
        }
    }
    let scale = log_scale.exp();
    let tr_n = acc.trace();
    let trace = tr_n * scale;
    let det_n = acc.determinant();
    let disc = tr_n * tr_n - 4.0 * det_n;
    let eig_n = if disc >= 0.0 {
        let r = disc.sqrt();
        // stable quadratic roots
        let mu1 = 0.5 * (tr_n + tr_n.signum() * r);
        let mu2 = if mu1 != 0.0 { det_n / mu1 } else { 0.5 * (tr_n - r) };
        Eigenpair::Real { mu1, mu2 }
    } else {
        Eigenpair::Complex { re: 0.5 * tr_n, im: 0.5 * (-disc).sqrt() }
    };
    let eigenvalues = match eig_n {
        Eigenpair::Real { mu1, mu2 } => Eigenpair::Real { mu1: mu1 * scale, mu2: mu2 * scale },
        Eigenpair::Complex { re, im } => Eigenpair::Complex { re: re * scale, im: im * scale },
    };
    let parabolic_or_elliptic = log_scale == 0.0 && trace.abs() <= 2.0 + PARABOLIC_TOLERANCE;
    let lyapunov = if parabolic_or_elliptic {
        0.0
    } else {
        (eig_n.max_modulus().ln() + log_scale).max(0.0) / config.q as f64
    };
    Ok(HyperbolicityReport {
        p: config.p,
        q: config.q,
        trace,
        determinant: det,
        eigenvalues,
        lyapunov,
        c0_estimate: None,
        phonon_gap: phonon_gap(model, config),
        pn_barrier: None,
    })
}

/// Spectrum of the periodic second variation, ascending.
pub fn second_variation_spectrum(model: &GeneratingModel, config: &PeriodicConfiguration) -> Vec<f64> {
    periodic_hessian(model, config.p, &config.positions).eigenvalues()
}

/// Smallest eigenvalue of the second variation.
pub fn phonon_gap(model: &GeneratingModel, config: &PeriodicConfiguration) -> f64 {
    let h = periodic_hessian(model, config.p, &config.positions);
    if h.len() <= 512 {
        h.eigenvalues()[0]
    } else {
        h.min_eigenvalue_bisect(1e-14)
    }
}

/// Constrained energies `E(s_j)` on the grid `s_j = j / n`.
///
/// Each worker stripe continues from its left end; stripes are fixed by `n`
/// alone so the result does not depend on the thread count.
pub fn pn_profile(
    model: &GeneratingModel,
    p: i64,
    q: i64,
    n: usize,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    if n < 16 {
        return Err(Error::InvalidInput(format!("PN sweep needs n >= 16, got {n}")));
    }
    let ground = minimize_periodic(model, p, q, opts)?;
    let qu = q as usize;
    let rho = p as f64 / q as f64;
    let stripe = 8usize;
    let stripes: Vec<usize> = (0..n).step_by(stripe).collect();
    let results: Vec<Result<Vec<f64>>> = stripes
        .par_iter()
        .map(|&j0| {
            let mut out = Vec::new();
            let mut prev: Option<(f64, Vec<f64>)> = None;
            for j in j0..(j0 + stripe).min(n) {
                let s = j as f64 / n as f64;
                let mut seeds: Vec<Vec<f64>> = Vec::new();
                if let Some((s0, x)) = &prev {
                    seeds.push(x.iter().map(|v| v + (s - s0)).collect());
                }
                seeds.push((1..qu).map(|i| s + i as f64 * rho).collect());
                // ground state moved rigidly so that each of its sites in turn sits at s
                for shift in 0..q {
                    let x0 = ground.lift(shift);
                    seeds.push((1..q).map(|i| ground.lift(shift + i) - x0 + s).collect());
                }
                let mut best: Option<(f64, Vec<f64>)> = None;
                for sd in &seeds {
                    let sol = solve_chain(model, s, s + p as f64, sd, opts);
                    if !sol.converged {
                        continue;
                    }
                    if best.as_ref().map_or(true, |(a, _)| sol.action < *a) {
                        best = Some((sol.action, sol.interior));
                    }
                }
                let (e, x) = best.ok_or(Error::NoConvergence { p, q })?;
                out.push(e);
                prev = Some((s, x));
            }
            Ok(out)
        })
        .collect();
    let mut energies = Vec::with_capacity(n);
    for r in results {
        energies.extend(r?);
    }
    Ok(energies)
}

/// `max_s E(s) - min_s E(s)` over the sweep grid.
pub fn pn_barrier(model: &GeneratingModel, p: i64, q: i64, n: usize, opts: &SolverOptions) -> Result<f64> {
    let e = pn_profile(model, p, q, n, opts)?;
    let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((hi - lo).max(0.0))
}

/// Energy of a single constrained configuration; exposed for oracles.
pub fn constrained_energy(model: &GeneratingModel, s: f64, p: i64, interior: &[f64]) -> f64 {
    chain_action(model, s, s + p as f64, interior)
}

/// Least-squares fit `dev(t) ~ C exp(-lambda t)` on positive deviations.
///
/// Returns `(C, lambda)`; `None` with fewer than two usable points.
pub fn fit_tail_decay(samples: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = samples.iter().filter(|(_, d)| *d > 0.0 && d.is_finite()).map(|&(t, d)| (t, d.ln())).collect();
    let (slope, intercept) = linear_fit(&pts)?;
    Some((intercept.exp(), -slope))
}

/// Ordinary least squares `y = a x + b`; returns `(a, b)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a = sxy / sxx;
    Some((a, my - a * mx))
}
