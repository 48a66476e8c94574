//! Periodic and fixed-end minimal configurations, `beta(p/q)`, and the
//! Aubry order structure.
//!
//! Periodic problems are solved in offset coordinates `w_i = x_i - n_i` with
//! `n_i = floor(i p / q)`, so all unknowns stay in `O(1)` even when the lift
//! advances by hundreds of units over a period.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CyclicTridiagonal;
use crate::model::GeneratingModel;

/// Euclid's algorithm on absolute values.
pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub(crate) fn check_pq(p: i64, q: i64) -> Result<()> {
    if q <= 0 || gcd(p, q) != 1 {
        return Err(Error::InvalidInput(format!("{p}/{q} is not a reduced fraction with q > 0")));
    }
    Ok(())
}

/// A `(p, q)`-periodic configuration, stored as one period of its lift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicConfiguration {
    pub p: i64,
    pub q: i64,
    pub positions: Vec<f64>,
    pub action_total: f64,
    pub residual_sup: f64,
    pub model_hash: String,
    pub is_certified_minimal: bool,
}

impl PeriodicConfiguration {
    /// `beta` candidate, `action_total / q`.
    pub fn beta(&self) -> f64 {
        self.action_total / self.q as f64
    }

    pub fn rho(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    /// `x_i` for any integer `i`, using `x_{i+q} = x_i + p`.
    pub fn lift(&self, i: i64) -> f64 {
        let q = self.q;
        self.positions[i.rem_euclid(q) as usize] + (self.p * i.div_euclid(q)) as f64
    }

    /// `x_start .. x_{start+len-1}`.
    pub fn window(&self, start: i64, len: usize) -> Vec<f64> {
        (0..len as i64).map(|i| self.lift(start + i)).collect()
    }

    /// The configuration `i -> x_{i+j} + m`.
    pub fn translate(&self, j: i64, m: i64) -> Vec<f64> {
        (0..self.q).map(|i| self.lift(i + j) + m as f64).collect()
    }
}

/// Solver controls shared by periodic and fixed-end problems.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Sup-norm of the gradient at which Newton stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of initial configurations tried per rotation number.
    pub starts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-12, max_iterations: 400, starts: 6, seed: 0x5eed }
    }
}

// ---------------------------------------------------------------------------
// Newton core

pub(crate) struct Eval {
    pub f: f64,
    pub g: Vec<f64>,
    pub h: Option<CyclicTridiagonal>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Outcome {
    pub converged: bool,
    pub residual: f64,
    pub action: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Levenberg-damped Newton with Armijo backtracking on the action.
///
/// Once the gradient is small the action is too flat to resolve in floating
/// point, so a step is also accepted when it shrinks the gradient.
pub(crate) fn newton<E>(x: &mut [f64], eval: E, tol: f64, max_iter: usize) -> Outcome
where
    E: Fn(&[f64], bool) -> Eval,
{
    let n = x.len();
    let mut cur = eval(x, true);
    let mut mu = 0.0f64;
    let mut stalls = 0;
    for _ in 0..max_iter {
        let r = sup(&cur.g);
        if r < tol || n == 0 {
            return Outcome { converged: true, residual: r, action: cur.f };
        }
        let h = cur.h.take().expect("hessian requested");
        let scale = 1.0 + sup(&h.diag);
        let mut shift = mu;
        let chol = loop {
            if let Some(c) = h.cholesky(shift) {
                break c;
            }
            shift = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
            if shift > 1e12 * scale {
                return Outcome { converged: false, residual: r, action: cur.f };
            }
        };
        let mut s: Vec<f64> = chol.solve(&cur.g).into_iter().map(|v| -v).collect();
        let smax = sup(&s);
        if smax > 0.5 {
            s.iter_mut().for_each(|v| *v *= 0.5 / smax);
        }
        let slope: f64 = s.iter().zip(&cur.g).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut trial = x.to_vec();
        let mut accepted: Option<Eval> = None;
        for _ in 0..50 {
            for i in 0..n {
                trial[i] = x[i] + t * s[i];
            }
            let e = eval(&trial, false);
            if e.f <= cur.f + 1e-4 * t * slope {
                accepted = Some(e);
                break;
            }
            if r < 1e-6 {
                let e = eval(&trial, true);
                if sup(&e.g) < r {
                    accepted = Some(e);
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some(_) => {
                x.copy_from_slice(&trial);
                cur = eval(x, true);
                mu = if t == 1.0 { if shift < 1e-14 * scale { 0.0 } else { shift / 10.0 } } else { shift.max(1e-10 * scale) };
                stalls = 0;
            }
            None => {
                stalls += 1;
                if stalls > 3 {
                    let r = sup(&cur.g);
                    return Outcome { converged: r < tol, residual: r, action: cur.f };
                }
                mu = shift.max(1e-6 * scale) * 100.0;
                cur = eval(x, true);
            }
        }
    }
    let r = sup(&cur.g);
    Outcome { converged: r < tol, residual: r, action: cur.f }
}

// ---------------------------------------------------------------------------
// Periodic problem in offset coordinates

struct PeriodicProblem<'a> {
    model: &'a GeneratingModel,
    q: usize,
    /// `n_{i+1} - n_i` for bond `i`.
    jumps: Vec<f64>,
    base: Vec<i64>,
}

impl<'a> PeriodicProblem<'a> {
    fn new(model: &'a GeneratingModel, p: i64, q: i64) -> Self {
        let base: Vec<i64> = (0..=q).map(|i| (i * p).div_euclid(q)).collect();
        let jumps = (0..q as usize).map(|i| (base[i + 1] - base[i]) as f64).collect();
        PeriodicProblem { model, q: q as usize, jumps, base }
    }

    fn to_offsets(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.base).map(|(v, n)| v - *n as f64).collect()
    }

    fn to_lifts(&self, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.base).map(|(v, n)| v + *n as f64).collect()
    }

    fn action(&self, w: &[f64]) -> f64 {
        let q = self.q;
        (0..q).map(|i| self.model.eval_h(w[i], w[(i + 1) % q] + self.jumps[i])).sum()
    }

    fn eval(&self, w: &[f64], with_h: bool) -> Eval {
        let q = self.q;
        if !with_h {
            return Eval { f: self.action(w), g: Vec::new(), h: None };
        }
        let mut f = 0.0;
        let mut g = vec![0.0; q];
        let mut diag = vec![0.0; q];
        let mut bonds = vec![0.0; q];
        for i in 0..q {
            let j = (i + 1) % q;
            let xn = w[j] + self.jumps[i];
            f += self.model.eval_h(w[i], xn);
            let pd = self.model.partials(w[i], xn);
            g[i] += pd.d1;
            g[j] += pd.d2;
            diag[i] += pd.d11;
            diag[j] += pd.d22;
            bonds[i] = pd.d12;
        }
        Eval { f, g, h: Some(CyclicTridiagonal::periodic(diag, &bonds)) }
    }

    fn hessian(&self, w: &[f64]) -> CyclicTridiagonal {
        self.eval(w, true).h.unwrap()
    }
}

/// Action `sum_{i<q} h(x_i, x_{i+1})` of one period.
pub fn periodic_action(model: &GeneratingModel, p: i64, positions: &[f64]) -> f64 {
    let pr = PeriodicProblem::new(model, p, positions.len() as i64);
    pr.action(&pr.to_offsets(positions))
}

/// Second variation of the periodic action at `positions`.
pub fn periodic_hessian(model: &GeneratingModel, p: i64, positions: &[f64]) -> CyclicTridiagonal {
    let pr = PeriodicProblem::new(model, p, positions.len() as i64);
    pr.hessian(&pr.to_offsets(positions))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub(crate) fn rng_for(seed: u64, a: i64, b: i64) -> ChaCha8Rng {
    let s = splitmix(seed ^ splitmix(a as u64 ^ splitmix(b as u64)));
    ChaCha8Rng::seed_from_u64(s)
}

/// Global minima of the on-site potential on `[0, 1)`.
pub fn potential_minima(model: &GeneratingModel) -> Vec<f64> {
    // the on-site part of h(x, x) is V(x) + const
    let v = |x: f64| model.eval_h(x, x);
    let n = 512;
    let vals: Vec<f64> = (0..n).map(|i| v(i as f64 / n as f64)).collect();
    let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - best;
    if spread < 1e-14 {
        return vec![0.0];
    }
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b, c) = (vals[(i + n - 1) % n], vals[i], vals[(i + 1) % n]);
        if b <= a && b <= c && b - best < 1e-9 + 0.02 * spread {
            // golden-section polish
            let (mut lo, mut hi) = ((i as f64 - 1.0) / n as f64, (i as f64 + 1.0) / n as f64);
            let gr = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let m1 = hi - gr * (hi - lo);
                let m2 = lo + gr * (hi - lo);
                if v(m1) < v(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let x = (0.5 * (lo + hi)).rem_euclid(1.0);
            if out.iter().all(|y: &f64| ((x - y + 0.5).rem_euclid(1.0) - 0.5).abs() > 1e-6) {
                out.push(x);
            }
        }
    }
    let vmin = out.iter().map(|&x| v(x)).fold(f64::INFINITY, f64::min);
    out.retain(|&x| v(x) - vmin < 1e-12);
    out
}

fn seeds(model: &GeneratingModel, p: i64, q: i64, opts: &SolverOptions) -> Vec<Vec<f64>> {
    let qf = q as f64;
    let rho = p as f64 / qf;
    let starts = opts.starts.max(3);
    let n_int = (starts + 2) / 3;
    let n_anti = (starts + 1) / 3;
    let n_jit = starts - n_int - n_anti;
    let mut out = Vec::with_capacity(starts);
    for j in 0..n_int {
        let phi = j as f64 / (n_int as f64 * qf);
        out.push((0..q).map(|i| phi + i as f64 * rho).collect());
    }
    let minima = potential_minima(model);
    for j in 0..n_anti {
        let phi = (j as f64 + 0.5) / n_anti as f64;
        let m = minima[j % minima.len()];
        out.push((0..q).map(|i| m + (i as f64 * rho + phi).floor()).collect());
    }
    let mut rng = rng_for(opts.seed, p, q);
    for j in 0..n_jit {
        let amp = 0.35 / (1.0 + j as f64 * 0.5);
        let phi: f64 = rng.gen::<f64>();
        let mut x: Vec<f64> = (0..q).map(|i| phi + i as f64 * rho + amp * (rng.gen::<f64>() - 0.5)).collect();
        x.sort_by(f64::total_cmp);
        if x.len() > 1 && x[q as usize - 1] >= x[0] + p as f64 {
            // keep the seed inside one period of the lift
            x = (0..q).map(|i| phi + i as f64 * rho).collect();
        }
        out.push(x);
    }
    out
}

/// Newton from one seed; `None` if it does not converge.
fn solve_from(
    model: &GeneratingModel,
    p: i64,
    q: i64,
    seed: &[f64],
    opts: &SolverOptions,
) -> Option<PeriodicConfiguration> {
    let pr = PeriodicProblem::new(model, p, q);
    let mut w = pr.to_offsets(seed);
    let out = newton(&mut w, |v, h| pr.eval(v, h), opts.tolerance, opts.max_iterations);
    if !out.converged {
        return None;
    }
    let certified = pr.hessian(&w).cholesky(1e-8).is_some();
    let x = canonical_lift(&pr.to_lifts(&w), p);
    Some(PeriodicConfiguration {
        p,
        q,
        positions: x,
        action_total: out.action,
        residual_sup: out.residual,
        model_hash: model.hash().to_string(),
        is_certified_minimal: certified,
    })
}

/// Representative of the shift class with the smallest `x_0` in `[0, 1)`.
fn canonical_lift(x: &[f64], p: i64) -> Vec<f64> {
    let q = x.len() as i64;
    let at = |i: i64| x[i.rem_euclid(q) as usize] + (p * i.div_euclid(q)) as f64;
    let frac = |v: f64| v - v.floor();
    let mut best = 0i64;
    for j in 1..q {
        if frac(at(j)) < frac(at(best)) {
            best = j;
        }
    }
    let m = at(best).floor();
    (0..q).map(|i| at(i + best) - m).collect()
}

fn same_class(a: &PeriodicConfiguration, b: &PeriodicConfiguration, tol: f64) -> bool {
    if a.p != b.p || a.q != b.q {
        return false;
    }
    (0..a.q).any(|j| {
        let m = (b.lift(j) - a.lift(0)).round();
        (0..a.q).all(|i| (b.lift(i + j) - m - a.lift(i)).abs() < tol)
    })
}

fn pick_minimizer(cands: Vec<PeriodicConfiguration>, p: i64, q: i64) -> Result<PeriodicConfiguration> {
    if cands.is_empty() {
        return Err(Error::NoConvergence { p, q });
    }
    let mut certified: Vec<_> = cands.into_iter().filter(|c| c.is_certified_minimal).collect();
    if certified.is_empty() {
        return Err(Error::SaddleOnly { p, q });
    }
    let best = certified.iter().map(|c| c.action_total).fold(f64::INFINITY, f64::min);
    let tie = 1e-9 * q as f64;
    certified.retain(|c| c.action_total <= best + tie);
    certified.sort_by(|a, b| a.positions[0].total_cmp(&b.positions[0]));
    Ok(certified.swap_remove(0))
}

/// Global minimizer over all multistart basins.
pub fn minimize_periodic(
    model: &GeneratingModel,
    p: i64,
    q: i64,
    opts: &SolverOptions,
) -> Result<PeriodicConfiguration> {
    check_pq(p, q)?;
    let cands: Vec<_> = seeds(model, p, q, opts)
        .iter()
        .filter_map(|s| solve_from(model, p, q, s, opts))
        .collect();
    pick_minimizer(cands, p, q)
}

/// Newton refinement of a given periodic configuration (no multistart).
pub fn refine_periodic(
    model: &GeneratingModel,
    p: i64,
    positions: &[f64],
    opts: &SolverOptions,
) -> Result<PeriodicConfiguration> {
    let q = positions.len() as i64;
    check_pq(p, q)?;
    solve_from(model, p, q, positions, opts).ok_or(Error::NoConvergence { p, q })
}

/// All certified minimizer classes found from `starts` initial configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerSet {
    pub p: i64,
    pub q: i64,
    /// Distinct local-minimum classes, ascending in action.
    pub members: Vec<PeriodicConfiguration>,
    /// Classes attaining the smallest action within `1e-9 q`.
    pub multiplicity: usize,
    /// The second variation has a (numerically) zero mode: minimizers form a continuum.
    pub continuous_family: bool,
    pub uniqueness_flag: bool,
}

impl MinimizerSet {
    pub fn ground(&self) -> &PeriodicConfiguration {
        &self.members[0]
    }

    /// The minimizing classes only.
    pub fn minimizers(&self) -> &[PeriodicConfiguration] {
        &self.members[..self.multiplicity]
    }
}

/// Zero-mode threshold on the smallest Hessian eigenvalue.
pub const FAMILY_TOLERANCE: f64 = 1e-10;

pub fn enumerate_minimizers(
    model: &GeneratingModel,
    p: i64,
    q: i64,
    starts: usize,
    opts: &SolverOptions,
) -> Result<MinimizerSet> {
    check_pq(p, q)?;
    let o = SolverOptions { starts: starts.max(q as usize).max(3), ..opts.clone() };
    let found: Vec<_> = seeds(model, p, q, &o)
        .par_iter()
        .map(|s| solve_from(model, p, q, s, &o))
        .collect();
    let any_converged = found.iter().any(|c| c.is_some());
    if !any_converged {
        return Err(Error::NoConvergence { p, q });
    }
    let mut members: Vec<PeriodicConfiguration> = Vec::new();
    for c in found.into_iter().flatten().filter(|c| c.is_certified_minimal) {
        if !members.iter().any(|m| same_class(m, &c, 1e-6)) {
            members.push(c);
        }
    }
    if members.is_empty() {
        return Err(Error::SaddleOnly { p, q });
    }
    members.sort_by(|a, b| a.action_total.total_cmp(&b.action_total).then(a.positions[0].total_cmp(&b.positions[0])));
    let tie = 1e-9 * q as f64;
    let best = members[0].action_total;
    let multiplicity = members.iter().filter(|m| m.action_total <= best + tie).count();
    let h = periodic_hessian(model, p, &members[0].positions);
    let gap = if q <= 512 { h.eigenvalues()[0] } else { h.min_eigenvalue_bisect(1e-14) };
    let continuous_family = gap.abs() < FAMILY_TOLERANCE;
    Ok(MinimizerSet {
        p,
        q,
        members,
        multiplicity,
        continuous_family,
        uniqueness_flag: multiplicity == 1 && !continuous_family,
    })
}

/// Largest circular gap of all minimizer orbit points projected to `[0, 1)`.
///
/// A continuous family of minimizers fills the circle and gives 0.
pub fn mather_gaps(set: &MinimizerSet) -> f64 {
    if set.continuous_family {
        return 0.0;
    }
    let mut pts: Vec<f64> = set
        .minimizers()
        .iter()
        .flat_map(|c| c.positions.iter().map(|x| x - x.floor()))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut gap = pts[0] + 1.0 - pts[pts.len() - 1];
    for w in pts.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap
}

// ---------------------------------------------------------------------------
// Fixed-end chains

/// Minimizer of `sum h` over interior sites with both boundary sites held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSolution {
    pub interior: Vec<f64>,
    /// `h(left, x_0) + ... + h(x_{n-1}, right)`.
    pub action: f64,
    pub residual_sup: f64,
    pub converged: bool,
}

fn chain_eval(model: &GeneratingModel, left: f64, right: f64, x: &[f64], with_h: bool) -> Eval {
    let n = x.len();
    let at = |i: isize| -> f64 {
        if i < 0 {
            left
        } else if i as usize >= n {
            right
        } else {
            x[i as usize]
        }
    };
    if !with_h {
        let f = (-1..n as isize).map(|i| model.eval_h(at(i), at(i + 1))).sum();
        return Eval { f, g: Vec::new(), h: None };
    }
    let mut f = 0.0;
    let mut g = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for i in -1..n as isize {
        let (a, b) = (at(i), at(i + 1));
        f += model.eval_h(a, b);
        let pd = model.partials(a, b);
        if i >= 0 {
            g[i as usize] += pd.d1;
            diag[i as usize] += pd.d11;
        }
        if ((i + 1) as usize) < n {
            g[(i + 1) as usize] += pd.d2;
            diag[(i + 1) as usize] += pd.d22;
        }
        if i >= 0 && ((i + 1) as usize) < n {
            off[i as usize] = pd.d12;
        }
    }
    let h = if n == 0 { CyclicTridiagonal::open(Vec::new(), Vec::new()) } else { CyclicTridiagonal::open(diag, off) };
    Eval { f, g, h: Some(h) }
}

/// Second variation of a fixed-end chain (open tridiagonal).
pub fn chain_hessian(model: &GeneratingModel, left: f64, right: f64, interior: &[f64]) -> CyclicTridiagonal {
    chain_eval(model, left, right, interior, true).h.unwrap()
}

/// Action of the fixed-end chain `left, interior.., right`.
pub fn chain_action(model: &GeneratingModel, left: f64, right: f64, interior: &[f64]) -> f64 {
    chain_eval(model, left, right, interior, false).f
}

/// Newton from `seed` for the interior sites of a chain with fixed ends.
pub fn solve_chain(
    model: &GeneratingModel,
    left: f64,
    right: f64,
    seed: &[f64],
    opts: &SolverOptions,
) -> ChainSolution {
    let mut x = seed.to_vec();
    let out = newton(&mut x, |v, h| chain_eval(model, left, right, v, h), opts.tolerance, opts.max_iterations);
    ChainSolution { interior: x, action: out.action, residual_sup: out.residual, converged: out.converged }
}

/// Result of [`verify_minimality`].
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityCheck {
    pub passed: bool,
    /// First failing window as `(start, length)`.
    pub window: Option<(i64, usize)>,
    /// Largest action decrease found.
    pub improvement: f64,
}

/// Re-minimizes every window of `w` bonds with fixed endpoints.
///
/// Windows of fewer bonds are sub-windows of these and need no separate test.
pub fn verify_minimality(
    model: &GeneratingModel,
    config: &PeriodicConfiguration,
    w: usize,
    opts: &SolverOptions,
) -> MinimalityCheck {
    let w = w.max(2);
    let mut worst = 0.0f64;
    let mut failing = None;
    let mut rng = rng_for(opts.seed ^ 0xa11ce, config.p, config.q);
    for start in 0..config.q {
        let seg = config.window(start, w + 1);
        let (left, right) = (seg[0], seg[w]);
        let inner = &seg[1..w];
        let base = chain_action(model, left, right, inner);
        let mut seeds: Vec<Vec<f64>> = vec![
            inner.to_vec(),
            (1..w).map(|i| left + (right - left) * i as f64 / w as f64).collect(),
        ];
        for _ in 0..3 {
            seeds.push(inner.iter().map(|v| v + 0.3 * (rng.gen::<f64>() - 0.5)).collect());
        }
        for s in &seeds {
            let sol = solve_chain(model, left, right, s, opts);
            let gain = base - sol.action;
            if gain > worst {
                worst = gain;
            }
            if gain > 1e-9 && failing.is_none() {
                failing = Some((start, w));
            }
        }
    }
    MinimalityCheck { passed: failing.is_none(), window: failing, improvement: worst }
}

// ---------------------------------------------------------------------------
// Order structure

/// `(x_{N-1} - x_0) / (N - 1)`.
pub fn rotation_number(positions: &[f64]) -> Result<f64> {
    let n = positions.len();
    if n < 2 {
        return Err(Error::InvalidInput("rotation number needs at least two sites".into()));
    }
    Ok((positions[n - 1] - positions[0]) / (n - 1) as f64)
}

/// Outcome of [`order_check`]: the first crossing pair, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderCheck {
    pub ordered: bool,
    /// `(first sequence, second sequence, site index)`.
    pub witness: Option<(usize, usize, usize)>,
}

/// True iff every pair keeps one weak side over the common window.
///
/// Differences below `tol` count as touching, not crossing.
pub fn order_check(configs: &[Vec<f64>], tol: f64) -> OrderCheck {
    for a in 0..configs.len() {
        for b in a + 1..configs.len() {
            let (x, y) = (&configs[a], &configs[b]);
            let n = x.len().min(y.len());
            let mut sign = 0i8;
            for i in 0..n {
                let d = x[i] - y[i];
                let s = if d > tol {
                    1
                } else if d < -tol {
                    -1
                } else {
                    0
                };
                if s != 0 {
                    if sign != 0 && s != sign {
                        return OrderCheck { ordered: false, witness: Some((a, b, i)) };
                    }
                    sign = s;
                }
            }
        }
    }
    OrderCheck { ordered: true, witness: None }
}

/// All translates `x_{i+j} + m` of a periodic orbit that meet `[lo, hi]` on site 0.
pub fn orbit_translates(config: &PeriodicConfiguration, start: i64, len: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for j in 0..config.q {
        let x0 = config.lift(start + j);
        let m_lo = (lo - x0).floor() as i64;
        let m_hi = (hi - x0).ceil() as i64;
        for m in m_lo..=m_hi {
            out.push((0..len as i64).map(|i| config.lift(start + i + j) + m as f64).collect());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// beta engine

/// `beta(p/q)` with the configuration that realizes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSample {
    pub p: i64,
    pub q: i64,
    pub value: f64,
    pub config: PeriodicConfiguration,
}

/// Persistent store for computed minimizers, keyed by `(model_hash, p, q)`.
pub trait ConfigStore: Send + Sync {
    fn load(&self, model_hash: &str, p: i64, q: i64) -> Option<PeriodicConfiguration>;
    fn store(&self, config: &PeriodicConfiguration) -> Result<()>;
}

/// Memoizing `beta` evaluator for one model.
pub struct BetaEngine {
    model: GeneratingModel,
    options: SolverOptions,
    memo: Mutex<HashMap<(i64, i64), BetaSample>>,
    store: Option<Arc<dyn ConfigStore>>,
}

impl BetaEngine {
    pub fn new(model: GeneratingModel, options: SolverOptions) -> Self {
        BetaEngine { model, options, memo: Mutex::new(HashMap::new()), store: None }
    }

    pub fn with_store(mut self, store: Arc<dyn ConfigStore>) -> Self {
        self.store = Some(store);
        self
    }

    pub fn model(&self) -> &GeneratingModel {
        &self.model
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Certified `beta(p/q)`, computed on first use.
    pub fn sample(&self, p: i64, q: i64) -> Result<BetaSample> {
        check_pq(p, q)?;
        if let Some(s) = self.memo.lock().unwrap().get(&(p, q)) {
            return Ok(s.clone());
        }
        let cached = self.store.as_ref().and_then(|s| s.load(self.model.hash(), p, q));
        let config = match cached {
            Some(c) => c,
            None => {
                let c = minimize_periodic(&self.model, p, q, &self.options)?;
                if let Some(s) = &self.store {
                    s.store(&c)?;
                }
                c
            }
        };
        let sample = BetaSample { p, q, value: config.beta(), config };
        self.memo.lock().unwrap().insert((p, q), sample.clone());
        Ok(sample)
    }

    pub fn beta(&self, p: i64, q: i64) -> Result<f64> {
        self.sample(p, q).map(|s| s.value)
    }

    /// Evaluates many keys in parallel; results keep the input order.
    pub fn prefetch(&self, keys: &[(i64, i64)]) -> Vec<Result<f64>> {
        keys.par_iter().map(|&(p, q)| self.beta(p, q)).collect()
    }

    /// Number of memoized entries.
    pub fn len(&self) -> usize {
        self.memo.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `beta(p/q)` via a throwaway engine.
pub fn beta_at(model: &GeneratingModel, p: i64, q: i64, opts: &SolverOptions) -> Result<BetaSample> {
    BetaEngine::new(model.clone(), opts.clone()).sample(p, q)
}
