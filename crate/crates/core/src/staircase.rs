//! Convex analysis on sampled `beta`: Farey grids, one-sided derivatives,
//! the Legendre dual `alpha`, locking intervals, the locked fraction `L(Q)`,
//! the variation and Hausdorff estimators and the KAM-regime probes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::variational::{gcd, BetaEngine};

// ---------------------------------------------------------------------------
// Rationals

/// `a/b < c/d` for positive denominators.
fn less(a: (i64, i64), b: (i64, i64)) -> bool {
    (a.0 as i128) * (b.1 as i128) < (b.0 as i128) * (a.1 as i128)
}

fn ratio(r: (i64, i64)) -> f64 {
    r.0 as f64 / r.1 as f64
}

/// Reduced fractions `p/q` with `q <= max_q` and `h_lo <= p/q <= h_hi`, ascending.
pub fn farey_enumerate(max_q: i64, h_lo: f64, h_hi: f64) -> Vec<(i64, i64)> {
    if max_q < 1 || !(h_lo < h_hi) {
        return Vec::new();
    }
    let mut out = Vec::new();
    for q in 1..=max_q {
        let lo = (h_lo * q as f64 - 1e-9).ceil() as i64;
        let hi = (h_hi * q as f64 + 1e-9).floor() as i64;
        for p in lo..=hi {
            let r = p as f64 / q as f64;
            if gcd(p, q) == 1 && r >= h_lo - 1e-15 && r <= h_hi + 1e-15 {
                out.push((p, q));
            }
        }
    }
    out.sort_by(|a, b| ((a.0 as i128) * (b.1 as i128)).cmp(&((b.0 as i128) * (a.1 as i128))));
    out
}

fn mod_inverse(a: i64, m: i64) -> i64 {
    // extended Euclid; m >= 1, gcd(a, m) = 1
    let (mut r0, mut r1) = (a.rem_euclid(m), m);
    let (mut s0, mut s1) = (1i64, 0i64);
    while r1 != 0 {
        let t = r0 / r1;
        (r0, r1) = (r1, r0 - t * r1);
        (s0, s1) = (s1, s0 - t * s1);
    }
    s0.rem_euclid(m)
}

/// Neighbours of `p/q` in the Farey sequence of order `q` on the real line.
///
/// Returns `(left, right)` with `p b - a q = 1` on the left and `a q - p b = 1` on the right.
pub fn farey_neighbors(p: i64, q: i64) -> ((i64, i64), (i64, i64)) {
    if q == 1 {
        return ((p - 1, 1), (p + 1, 1));
    }
    let bl = mod_inverse(p, q);
    let bl = if bl == 0 { q } else { bl };
    let al = (p * bl - 1).div_euclid(q);
    let br = q - bl;
    let br = if br == 0 { q } else { br };
    let ar = (p * br + 1).div_euclid(q);
    ((al, bl), (ar, br))
}

/// Neighbours of `p/q` among the members of `F_order` (requires `q <= order`).
pub fn farey_neighbors_in(p: i64, q: i64, order: i64) -> ((i64, i64), (i64, i64)) {
    let ((mut al, mut bl), (mut ar, mut br)) = farey_neighbors(p, q);
    // descend the mediant chains while the denominator fits
    while bl + q <= order {
        al += p;
        bl += q;
    }
    while br + q <= order {
        ar += p;
        br += q;
    }
    ((al, bl), (ar, br))
}

/// Convergents of a continued fraction `[a0; a1, a2, ...]` with denominator at most `cap`.
pub fn cf_convergents(cf: &[u64], cap: i64) -> Vec<(i64, i64)> {
    let (mut h0, mut h1) = (1i64, cf.first().copied().unwrap_or(0) as i64);
    let (mut k0, mut k1) = (0i64, 1i64);
    let mut out = vec![(h1, k1)];
    for &a in cf.iter().skip(1) {
        let a = a as i64;
        let (h2, k2) = (a * h1 + h0, a * k1 + k0);
        if k2 > cap {
            break;
        }
        out.push((h2, k2));
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
    }
    out
}

/// Value of a finite continued fraction.
pub fn cf_value(cf: &[u64]) -> f64 {
    let mut v = 0.0f64;
    for (i, &a) in cf.iter().enumerate().rev() {
        if i == cf.len() - 1 {
            v = a as f64;
        } else {
            v = a as f64 + 1.0 / v;
        }
    }
    v
}

/// `[0; 1, 1, 1, ...]`, the fractional part of the golden mean.
pub fn golden_cf() -> Vec<u64> {
    let mut cf = vec![0u64];
    cf.extend(std::iter::repeat(1).take(60));
    cf
}

// ---------------------------------------------------------------------------
// beta sources

/// Anything that yields `beta(p/q)`.
pub trait BetaSource: Sync {
    fn beta(&self, p: i64, q: i64) -> Result<f64>;

    /// Bulk evaluation; implementations may parallelize. Order is preserved.
    fn prefetch(&self, keys: &[(i64, i64)]) -> Vec<Result<f64>> {
        keys.iter().map(|&(p, q)| self.beta(p, q)).collect()
    }

    fn model_hash(&self) -> String {
        String::new()
    }
}

impl BetaSource for BetaEngine {
    fn beta(&self, p: i64, q: i64) -> Result<f64> {
        BetaEngine::beta(self, p, q)
    }

    fn prefetch(&self, keys: &[(i64, i64)]) -> Vec<Result<f64>> {
        BetaEngine::prefetch(self, keys)
    }

    fn model_hash(&self) -> String {
        self.model().hash().to_string()
    }
}

/// A `beta` given by a closure of the rotation number.
pub struct FnSource<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> BetaSource for FnSource<F> {
    fn beta(&self, p: i64, q: i64) -> Result<f64> {
        Ok((self.0)(p as f64 / q as f64))
    }
}

/// Convexity bracket of `beta` at a real argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealBeta {
    /// Chord value between the bracketing rationals: an upper bound.
    pub upper: f64,
    /// Larger of the two outer chord extensions: a lower bound.
    pub lower: f64,
    pub lo: (i64, i64),
    pub hi: (i64, i64),
}

/// Tightest rationals `lo <= x <= hi` with denominators at most `cap`, with the
/// bracket one Stern-Brocot step earlier.
fn stern_brocot_bracket(x: f64, cap: i64) -> ((i64, i64), (i64, i64), (i64, i64), (i64, i64)) {
    let f = x.floor() as i64;
    let (mut lo, mut hi) = ((f, 1i64), (f + 1, 1i64));
    let (mut plo, mut phi) = ((f - 1, 1i64), (f + 2, 1i64));
    loop {
        let m = (lo.0 + hi.0, lo.1 + hi.1);
        if m.1 > cap {
            break;
        }
        let mv = ratio(m);
        if mv == x {
            return (m, m, lo, hi);
        }
        // step as far as possible in one direction at once
        if mv < x {
            // lo advances: lo + j hi
            let mut j = 1;
            while lo.1 + (j + 1) * hi.1 <= cap && ratio((lo.0 + (j + 1) * hi.0, lo.1 + (j + 1) * hi.1)) < x {
                j += 1;
            }
            plo = if j == 1 { lo } else { (lo.0 + (j - 1) * hi.0, lo.1 + (j - 1) * hi.1) };
            lo = (lo.0 + j * hi.0, lo.1 + j * hi.1);
        } else {
            let mut j = 1;
            while hi.1 + (j + 1) * lo.1 <= cap && ratio((hi.0 + (j + 1) * lo.0, hi.1 + (j + 1) * lo.1)) > x {
                j += 1;
            }
            phi = if j == 1 { hi } else { (hi.0 + (j - 1) * lo.0, hi.1 + (j - 1) * lo.1) };
            hi = (hi.0 + j * lo.0, hi.1 + j * lo.1);
        }
    }
    (lo, hi, plo, phi)
}

/// Upper chord value of `beta(x)` from the best rational bracket with denominators `<= cap`.
pub fn beta_real(src: &dyn BetaSource, x: f64, cap: i64) -> Result<f64> {
    let (lo, hi, _, _) = stern_brocot_bracket(x, cap);
    if lo == hi {
        return src.beta(lo.0, lo.1);
    }
    let (bl, bh) = (src.beta(lo.0, lo.1)?, src.beta(hi.0, hi.1)?);
    let t = (x - ratio(lo)) / (ratio(hi) - ratio(lo));
    Ok(bl + t * (bh - bl))
}

/// Upper and lower convexity bounds on `beta(x)`.
pub fn beta_real_bracket(src: &dyn BetaSource, x: f64, cap: i64) -> Result<RealBeta> {
    let (lo, hi, plo, phi) = stern_brocot_bracket(x, cap);
    if lo == hi {
        let b = src.beta(lo.0, lo.1)?;
        return Ok(RealBeta { upper: b, lower: b, lo, hi });
    }
    let upper = beta_real(src, x, cap)?;
    let (bl, bh) = (src.beta(lo.0, lo.1)?, src.beta(hi.0, hi.1)?);
    let (bpl, bph) = (src.beta(plo.0, plo.1)?, src.beta(phi.0, phi.1)?);
    let ext = |a: (i64, i64), ba: f64, b: (i64, i64), bb: f64| ba + (x - ratio(a)) * (bb - ba) / (ratio(b) - ratio(a));
    let lower = ext(plo, bpl, lo, bl).max(ext(phi, bph, hi, bh));
    Ok(RealBeta { upper, lower: lower.min(upper), lo, hi })
}

// ---------------------------------------------------------------------------
// One-sided derivatives

/// Which extrapolation the secant sequence supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SecantRegime {
    /// Secants differ at round-off level; the deepest one is used.
    Converged,
    /// Differences shrink faster than the quadratic model allows; geometric tail removed.
    Geometric,
    /// Differences consistent with a smooth `beta`; linear extrapolation in the offset.
    Polynomial,
}

/// One side of [`Derivatives`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideSecants {
    /// Offsets `|r_j - p/q|`, `j = 1..=depth`.
    pub offsets: Vec<f64>,
    pub secants: Vec<f64>,
    pub estimate: f64,
    /// Change of the estimate between depth `d-1` and `d`.
    pub bracket_width: f64,
    pub regime: SecantRegime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derivatives {
    pub p: i64,
    pub q: i64,
    pub c_minus: f64,
    pub c_plus: f64,
    pub bracket_width: f64,
    pub depth: usize,
    pub left: SideSecants,
    pub right: SideSecants,
}

/// Mediant chain `(a + j p)/(b + j q)`, `j = 1..=depth`.
pub fn mediant_chain(p: i64, q: i64, neighbor: (i64, i64), depth: usize) -> Vec<(i64, i64)> {
    (1..=depth as i64).map(|j| (neighbor.0 + j * p, neighbor.1 + j * q)).collect()
}

/// Rationals whose `beta` is needed by [`one_sided_derivatives`].
pub fn derivative_keys(p: i64, q: i64, depth: usize) -> Vec<(i64, i64)> {
    let (l, r) = farey_neighbors(p, q);
    let mut keys = vec![(p, q)];
    keys.extend(mediant_chain(p, q, l, depth));
    keys.extend(mediant_chain(p, q, r, depth));
    keys
}

fn richardson(offsets: &[f64], secants: &[f64], upto: usize) -> f64 {
    let (s1, s0) = (secants[upto - 1], secants[upto - 2]);
    let (e1, e0) = (offsets[upto - 1], offsets[upto - 2]);
    s1 - e1 * (s0 - s1) / (e0 - e1)
}

fn aitken(secants: &[f64], upto: usize) -> Option<f64> {
    let d1 = secants[upto - 2] - secants[upto - 1];
    let d2 = secants[upto - 3] - secants[upto - 2];
    let r = d1 / d2;
    (d2 != 0.0 && r > 0.0 && r < 1.0).then(|| secants[upto - 1] - d1 * r / (1.0 - r))
}

/// Extrapolated limit of `secants[..upto]`.
///
/// Two tail models compete: linear in the offset (smooth `beta`) and
/// geometric (exponentially flat `beta`). Each predicts the last secant from
/// the earlier ones; the better predictor supplies the estimate.
fn extrapolate(offsets: &[f64], secants: &[f64], upto: usize) -> (f64, SecantRegime) {
    let d = upto;
    if d == 1 {
        return (secants[0], SecantRegime::Polynomial);
    }
    let s1 = secants[d - 1];
    if (secants[d - 2] - s1).abs() <= 1e-13 * (1.0 + s1.abs()) {
        return (s1, SecantRegime::Converged);
    }
    let poly = richardson(offsets, secants, d);
    if d < 4 {
        if d == 3 {
            if let Some(g) = aitken(secants, d) {
                let quad = (offsets[1] - offsets[2]) / (offsets[0] - offsets[1]);
                let r = (secants[1] - secants[2]) / (secants[0] - secants[1]);
                if r < 0.5 * quad {
                    return (g, SecantRegime::Geometric);
                }
            }
        }
        return (poly, SecantRegime::Polynomial);
    }
    let Some(geom) = aitken(secants, d) else {
        return (poly, SecantRegime::Polynomial);
    };
    // backtest both models one level shallower
    let c_poly = richardson(offsets, secants, d - 1);
    let pred_poly = c_poly + (secants[d - 2] - c_poly) * offsets[d - 1] / offsets[d - 2];
    let err_poly = (pred_poly - s1).abs();
    let d2 = secants[d - 3] - secants[d - 2];
    let d3 = secants[d - 4] - secants[d - 3];
    let err_geom = if d3 != 0.0 { (secants[d - 2] - d2 * d2 / d3 - s1).abs() } else { f64::INFINITY };
    if err_geom < err_poly {
        (geom, SecantRegime::Geometric)
    } else {
        (poly, SecantRegime::Polynomial)
    }
}

fn side(src_vals: &[f64], beta0: f64, offsets: Vec<f64>, sign: f64) -> SideSecants {
    let secants: Vec<f64> = src_vals.iter().zip(&offsets).map(|(b, e)| sign * (b - beta0) / e).collect();
    let d = secants.len();
    let (estimate, regime) = extrapolate(&offsets, &secants, d);
    let bracket_width = if d >= 2 {
        match regime {
            SecantRegime::Polynomial => {
                let (prev, _) = extrapolate(&offsets, &secants, d - 1);
                (estimate - prev).abs()
            }
            _ => (secants[d - 1] - secants[d - 2]).abs(),
        }
    } else {
        f64::INFINITY
    };
    SideSecants { offsets, secants, estimate, bracket_width, regime }
}

/// `(c_minus, c_plus)` at `p/q` from mediant secants at refinement depth `depth`.
///
/// Convexity makes every right secant an upper bound for `c_plus` and every
/// left secant a lower bound for `c_minus`; the extrapolated estimates are
/// clamped to those bounds.
pub fn one_sided_derivatives(src: &dyn BetaSource, p: i64, q: i64, depth: usize) -> Result<Derivatives> {
    if depth == 0 {
        return Err(Error::InvalidInput("refinement depth must be positive".into()));
    }
    let keys = derivative_keys(p, q, depth);
    let vals: Vec<f64> = src.prefetch(&keys).into_iter().collect::<Result<_>>()?;
    let beta0 = vals[0];
    let (l, r) = farey_neighbors(p, q);
    // offsets as differences of the rounded rotation numbers, so that exactly
    // linear pieces of beta give exactly representable secants
    let rho = ratio((p, q));
    let lo: Vec<f64> = mediant_chain(p, q, l, depth).into_iter().map(|m| rho - ratio(m)).collect();
    let ro: Vec<f64> = mediant_chain(p, q, r, depth).into_iter().map(|m| ratio(m) - rho).collect();
    let left = side(&vals[1..=depth], beta0, lo, -1.0);
    let right = side(&vals[depth + 1..], beta0, ro, 1.0);
    let mut c_plus = right.estimate.min(right.secants[depth - 1]);
    let mut c_minus = left.estimate.max(left.secants[depth - 1]);
    if c_minus > c_plus {
        let mid = 0.5 * (c_minus + c_plus);
        c_minus = mid;
        c_plus = mid;
    }
    Ok(Derivatives {
        p,
        q,
        c_minus,
        c_plus,
        bracket_width: left.bracket_width.max(right.bracket_width),
        depth,
        left,
        right,
    })
}

/// Refinement policy for one-sided derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthPolicy {
    pub depth: usize,
    /// Depth is doubled up to this value while the bracket exceeds `target`.
    pub max_depth: usize,
    pub target: f64,
}

impl DepthPolicy {
    pub fn fixed(depth: usize) -> Self {
        DepthPolicy { depth, max_depth: depth, target: f64::INFINITY }
    }
}

impl Default for DepthPolicy {
    fn default() -> Self {
        DepthPolicy { depth: 4, max_depth: 32, target: 1e-9 }
    }
}

/// [`one_sided_derivatives`] with the depth doubled until the bracket meets the target.
pub fn refined_derivatives(src: &dyn BetaSource, p: i64, q: i64, policy: DepthPolicy) -> Result<Derivatives> {
    let mut depth = policy.depth.max(1);
    loop {
        let d = one_sided_derivatives(src, p, q, depth)?;
        if d.bracket_width <= policy.target || depth >= policy.max_depth {
            return Ok(d);
        }
        depth = (2 * depth).min(policy.max_depth);
    }
}

// ---------------------------------------------------------------------------
// beta table

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaEntry {
    pub p: i64,
    pub q: i64,
    pub rho: f64,
    pub beta: f64,
    pub c_minus: Option<f64>,
    pub c_plus: Option<f64>,
    pub bracket_width: Option<f64>,
    /// Mediant depth used for the derivatives.
    pub secant_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaTable {
    pub model_hash: String,
    /// Sorted by rotation number.
    pub entries: Vec<BetaEntry>,
    pub convexity_verified: bool,
}

/// A `(p, q)` that could not be evaluated, with its error.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub p: i64,
    pub q: i64,
    pub error: Error,
}

impl BetaTable {
    /// Evaluates `beta` on `keys` and, when `depth` is given, the one-sided derivatives.
    ///
    /// Keys that fail are left out of the table and reported separately.
    pub fn build(src: &dyn BetaSource, keys: &[(i64, i64)], depth: Option<DepthPolicy>) -> (BetaTable, Vec<Failure>) {
        let mut all: Vec<(i64, i64)> = keys.to_vec();
        if let Some(d) = depth {
            for &(p, q) in keys {
                all.extend(derivative_keys(p, q, d.depth).into_iter().skip(1));
            }
        }
        let mut seen = std::collections::HashSet::new();
        all.retain(|k| seen.insert(*k));
        let _ = src.prefetch(&all);
        let mut entries = Vec::new();
        let mut failures = Vec::new();
        let derivs: Vec<Option<Result<Derivatives>>> = keys
            .par_iter()
            .map(|&(p, q)| depth.map(|d| refined_derivatives(src, p, q, d)))
            .collect();
        for (&(p, q), dv) in keys.iter().zip(derivs) {
            let beta = match src.beta(p, q) {
                Ok(b) => b,
                Err(error) => {
                    failures.push(Failure { p, q, error });
                    continue;
                }
            };
            let mut e = BetaEntry {
                p,
                q,
                rho: p as f64 / q as f64,
                beta,
                c_minus: None,
                c_plus: None,
                bracket_width: None,
                secant_window: None,
            };
            if let Some(dv) = dv {
                match dv {
                    Ok(dv) => {
                        e.c_minus = Some(dv.c_minus);
                        e.c_plus = Some(dv.c_plus);
                        e.bracket_width = Some(dv.bracket_width);
                        e.secant_window = Some(dv.depth);
                    }
                    Err(error) => {
                        failures.push(Failure { p, q, error });
                        continue;
                    }
                }
            }
            entries.push(e);
        }
        entries.sort_by(|a, b| {
            if less((a.p, a.q), (b.p, b.q)) {
                std::cmp::Ordering::Less
            } else if less((b.p, b.q), (a.p, a.q)) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        let mut t = BetaTable { model_hash: src.model_hash(), entries, convexity_verified: false };
        t.convexity_verified = t.convexity_violation(1e-8).is_none();
        (t, failures)
    }

    /// Table from explicit `(p, q, beta)` values, no derivatives.
    pub fn from_values(model_hash: &str, values: &[(i64, i64, f64)]) -> BetaTable {
        let src_vals: BTreeMap<(i64, i64), f64> = values.iter().map(|&(p, q, b)| ((p, q), b)).collect();
        struct Lookup(BTreeMap<(i64, i64), f64>);
        impl BetaSource for Lookup {
            fn beta(&self, p: i64, q: i64) -> Result<f64> {
                self.0.get(&(p, q)).copied().ok_or(Error::EmptyTable)
            }
        }
        let keys: Vec<(i64, i64)> = src_vals.keys().copied().collect();
        let (mut t, _) = BetaTable::build(&Lookup(src_vals), &keys, None);
        t.model_hash = model_hash.to_string();
        t
    }

    pub fn get(&self, p: i64, q: i64) -> Option<&BetaEntry> {
        self.entries.iter().find(|e| e.p == p && e.q == q)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Consecutive secant slopes `(rho_i, rho_{i+1})`.
    pub fn secant_slopes(&self) -> Vec<f64> {
        self.entries.windows(2).map(|w| (w[1].beta - w[0].beta) / (w[1].rho - w[0].rho)).collect()
    }

    /// Middle `(p, q)` of the first triple whose secant slopes decrease by more than `tol`.
    pub fn convexity_violation(&self, tol: f64) -> Option<(i64, i64)> {
        let s = self.secant_slopes();
        for i in 1..s.len() {
            if s[i] < s[i - 1] - tol {
                let e = &self.entries[i];
                return Some((e.p, e.q));
            }
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Legendre transform

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaSample {
    pub c: f64,
    pub alpha: f64,
    /// `D alpha(c)`: the maximizing rotation number.
    pub rho: f64,
    pub p: i64,
    pub q: i64,
    /// `c` lies in the locking interval of the maximizer.
    pub locked: bool,
    pub fenchel_residual: f64,
}

/// `alpha(c) = max_rho (c rho - beta(rho))` over the table on each grid point.
pub fn legendre(table: &BetaTable, c_grid: &[f64]) -> Result<Vec<AlphaSample>> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(c_grid
        .iter()
        .map(|&c| {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, e) in table.entries.iter().enumerate() {
                let v = c * e.rho - e.beta;
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            let e = &table.entries[arg];
            let locked = match (e.c_minus, e.c_plus) {
                (Some(a), Some(b)) => a <= c && c <= b,
                _ => false,
            };
            AlphaSample {
                c,
                alpha: best,
                rho: e.rho,
                p: e.p,
                q: e.q,
                locked,
                fenchel_residual: (best + e.beta - c * e.rho).abs(),
            }
        })
        .collect())
}

/// `beta**` at every table point, with the conjugate taken over the breakpoints of `alpha`.
///
/// For convex data the breakpoint set is exactly the consecutive secant slopes,
/// so the biconjugate is exact rather than grid-limited.
pub fn biconjugate(table: &BetaTable) -> Result<Vec<f64>> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    if table.len() == 1 {
        return Ok(vec![table.entries[0].beta]);
    }
    let cs = table.secant_slopes();
    let alpha = legendre(table, &cs)?;
    Ok(table
        .entries
        .iter()
        .map(|e| alpha.iter().map(|a| a.c * e.rho - a.alpha).fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

// ---------------------------------------------------------------------------
// Locking intervals

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LockingInterval {
    pub p: i64,
    pub q: i64,
    pub c_minus: f64,
    pub c_plus: f64,
}

impl LockingInterval {
    pub fn width(&self) -> f64 {
        self.c_plus - self.c_minus
    }
}

/// Overlaps up to this size are treated as round-off and merged.
pub const OVERLAP_SLOP: f64 = 1e-10;

/// Subdifferentials of all entries with `q <= max_q`, clipped to `[c1, c2]`.
pub fn locking_intervals(table: &BetaTable, max_q: i64, c1: f64, c2: f64) -> Result<Vec<LockingInterval>> {
    let mut out: Vec<LockingInterval> = Vec::new();
    // right end of everything kept so far
    let mut reach = f64::NEG_INFINITY;
    for e in table.entries.iter().filter(|e| e.q <= max_q) {
        let (Some(cm), Some(cp)) = (e.c_minus, e.c_plus) else {
            continue;
        };
        if cp < c1 || cm > c2 {
            continue;
        }
        let iv = LockingInterval { p: e.p, q: e.q, c_minus: cm.max(c1), c_plus: cp.min(c2) };
        let overlap = reach - iv.c_minus;
        if overlap > OVERLAP_SLOP {
            return Err(Error::OverlapDetected { p: e.p, q: e.q, overlap });
        }
        reach = reach.max(iv.c_plus);
        out.push(iv);
    }
    Ok(out)
}

/// Locked fraction: the measure of the union of the intervals over `c2 - c1`.
///
/// For disjoint intervals this is `sum |c_plus - c_minus| / (c2 - c1)`; slop
/// overlaps are merged rather than counted twice.
pub fn completeness_measure(intervals: &[LockingInterval], c1: f64, c2: f64) -> f64 {
    let mut iv: Vec<(f64, f64)> = intervals.iter().map(|i| (i.c_minus, i.c_plus)).collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut pieces = Vec::new();
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in iv {
        cur = match cur {
            Some((lo, hi)) if a <= hi => Some((lo, hi.max(b))),
            Some((lo, hi)) => {
                pieces.push(hi - lo);
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((lo, hi)) = cur {
        pieces.push(hi - lo);
    }
    (pairwise_sum(&pieces) / (c2 - c1)).clamp(0.0, 1.0)
}

/// `{4, 8, 16, ..., max_q}`, always ending at `max_q`.
pub fn dyadic_ladder(max_q: i64) -> Vec<i64> {
    let mut v = Vec::new();
    let mut q = 4;
    while q < max_q {
        v.push(q);
        q *= 2;
    }
    v.push(max_q);
    v
}

// ---------------------------------------------------------------------------
// Estimators

/// Fixed-association pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// One summand of the truncated estimator sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlatnessTerm {
    pub p: i64,
    pub q: i64,
    pub delta: f64,
    pub c_plus: f64,
    /// `q^{1+nu} (beta(p/q + delta) - beta(p/q) - c_plus delta)`.
    pub value: f64,
}

/// Estimator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOptions {
    pub nu: f64,
    /// Largest denominator in the sums; `None` means `2 Q`.
    pub q_max: Option<i64>,
    pub depth: DepthPolicy,
    /// Denominator cap for `beta` at real arguments.
    pub real_cap: i64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { nu: 0.5, q_max: None, depth: DepthPolicy::default(), real_cap: 1000 }
    }
}

/// All terms for `Q < q <= Q_max`, `p/q` in `(0, 1]`, ordered by `(q, p)`.
pub fn flatness_terms(src: &dyn BetaSource, q_lo: i64, opts: &EstimatorOptions) -> Result<Vec<FlatnessTerm>> {
    if !(opts.nu > 0.0 && opts.nu < 1.0) {
        return Err(Error::InvalidInput(format!("nu must lie in (0, 1), got {}", opts.nu)));
    }
    let q_hi = opts.q_max.unwrap_or(2 * q_lo);
    let keys: Vec<(i64, i64)> =
        (q_lo + 1..=q_hi).flat_map(|q| (1..=q).filter(move |&p| gcd(p, q) == 1).map(move |p| (p, q))).collect();
    let terms: Vec<Result<FlatnessTerm>> = keys
        .par_iter()
        .map(|&(p, q)| {
            let qf = q as f64;
            let delta = qf.powf(-(1.0 + opts.nu));
            let d = refined_derivatives(src, p, q, opts.depth)?;
            let b0 = src.beta(p, q)?;
            let bx = beta_real(src, p as f64 / qf + delta, opts.real_cap)?;
            let value = qf.powf(1.0 + opts.nu) * (bx - b0 - d.c_plus * delta);
            if value < -1e-9 {
                return Err(Error::NonconvexTerm { p, q, value });
            }
            Ok(FlatnessTerm { p, q, delta, c_plus: d.c_plus, value })
        })
        .collect();
    terms.into_iter().collect()
}

/// `V = sum` of the terms.
pub fn variation_from_terms(terms: &[FlatnessTerm]) -> f64 {
    hausdorff_from_terms(terms, 1.0)
}

/// `H = sum term^theta`; `theta = 1` reproduces `V` bit for bit.
pub fn hausdorff_from_terms(terms: &[FlatnessTerm], theta: f64) -> f64 {
    let v: Vec<f64> = terms
        .iter()
        .map(|t| if theta == 1.0 { t.value } else { t.value.max(0.0).powf(theta) })
        .collect();
    pairwise_sum(&v)
}

pub fn variation_estimator(src: &dyn BetaSource, q_lo: i64, opts: &EstimatorOptions) -> Result<f64> {
    Ok(variation_from_terms(&flatness_terms(src, q_lo, opts)?))
}

pub fn hausdorff_estimator(src: &dyn BetaSource, theta: f64, q_lo: i64, opts: &EstimatorOptions) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidInput(format!("theta must lie in (0, 1], got {theta}")));
    }
    Ok(hausdorff_from_terms(&flatness_terms(src, q_lo, opts)?, theta))
}

// ---------------------------------------------------------------------------
// KAM-regime probes

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityProbe {
    pub h: f64,
    pub c_low: f64,
    pub c_high: f64,
    pub samples: Vec<(i64, i64)>,
}

/// Quadratic envelope of `beta - l` around the continued-fraction target `h`.
///
/// Samples are the convergents of `cf` with denominator `<= cap` inside
/// `(h - window, h + window)`; `l` is the chord through the two deepest
/// convergents. Samples closer to `h` than 100 chord lengths are dropped
/// because `l` is not resolved there.
pub fn convexity_probe(src: &dyn BetaSource, cf: &[u64], window: f64, cap: i64) -> Result<ConvexityProbe> {
    let h = cf_value(cf);
    let conv = cf_convergents(cf, cap);
    if conv.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 5, found: conv.len() });
    }
    let a = conv[conv.len() - 2];
    let b = conv[conv.len() - 1];
    let (ba, bb) = (src.beta(a.0, a.1)?, src.beta(b.0, b.1)?);
    let slope = (bb - ba) / (ratio(b) - ratio(a));
    let chord = (ratio(b) - ratio(a)).abs();
    let keep: Vec<(i64, i64)> = conv
        .iter()
        .copied()
        .filter(|&r| (ratio(r) - h).abs() < window && (ratio(r) - h).abs() >= 100.0 * chord)
        .collect();
    if keep.len() < 5 {
        return Err(Error::InsufficientSamples { needed: 5, found: keep.len() });
    }
    let vals: Vec<f64> = src.prefetch(&keep).into_iter().collect::<Result<_>>()?;
    let mut c_low = f64::INFINITY;
    let mut c_high = f64::NEG_INFINITY;
    for (r, v) in keep.iter().zip(&vals) {
        let x = ratio(*r);
        let l = ba + (x - ratio(a)) * slope;
        let k = (v - l) / (x - h).powi(2);
        c_low = c_low.min(k);
        c_high = c_high.max(k);
    }
    Ok(ConvexityProbe { h, c_low, c_high, samples: keep })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcProbe {
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub c_lo: f64,
    pub c_hi: f64,
    /// Length-weighted median slope of the unlocked segments.
    pub median_slope: f64,
    /// Segments with slope at most this count as Lipschitz.
    pub lipschitz: f64,
    /// Total `c`-length of Lipschitz unlocked segments inside the window.
    pub measure: f64,
}

/// Piecewise-linear `D alpha` through the interval endpoints (or the samples if unlocked).
fn staircase_nodes(intervals: &[LockingInterval], samples: &[AlphaSample]) -> Vec<(f64, f64)> {
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    if intervals.iter().any(|i| i.width() > 0.0) {
        let mut iv = intervals.to_vec();
        iv.sort_by(|a, b| (a.p * b.q).cmp(&(b.p * a.q)));
        // slop overlaps would fold D alpha back on itself; clamp c to be non-decreasing in rho
        let mut reach = f64::NEG_INFINITY;
        for i in iv {
            let rho = i.p as f64 / i.q as f64;
            let lo = i.c_minus.max(reach);
            reach = i.c_plus.max(lo);
            nodes.push((lo, rho));
            nodes.push((reach, rho));
        }
    } else {
        nodes.extend(samples.iter().map(|s| (s.c, s.rho)));
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    nodes
}

fn lerp_c(w: &[(f64, f64)], rho: f64) -> f64 {
    let ((c0, r0), (c1, r1)) = (w[0], w[1]);
    c0 + (rho - r0) / (r1 - r0) * (c1 - c0)
}

/// Smallest `c` with `D alpha(c) >= rho`.
fn first_reach(nodes: &[(f64, f64)], rho: f64) -> Option<f64> {
    if nodes.first()?.1 >= rho {
        return Some(nodes[0].0);
    }
    nodes.windows(2).find(|w| w[0].1 < rho && w[1].1 >= rho).map(|w| lerp_c(w, rho))
}

/// Largest `c` with `D alpha(c) <= rho`.
fn last_below(nodes: &[(f64, f64)], rho: f64) -> Option<f64> {
    let last = nodes.last()?;
    if last.1 <= rho {
        return Some(last.0);
    }
    nodes.windows(2).rev().find(|w| w[0].1 <= rho && w[1].1 > rho).map(|w| lerp_c(w, rho))
}

/// Lower bound on the measure of `c` where `D alpha` grows at a bounded rate.
pub fn ac_part_probe(
    intervals: &[LockingInterval],
    samples: &[AlphaSample],
    rho_lo: f64,
    rho_hi: f64,
) -> AcProbe {
    let nodes = staircase_nodes(intervals, samples);
    let mut gaps: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in nodes.windows(2) {
        let (c0, r0) = w[0];
        let (c1, r1) = w[1];
        if c1 > c0 && r1 > r0 {
            gaps.push((c0, c1, r0, r1));
        }
    }
    let mut slopes: Vec<(f64, f64)> = gaps.iter().map(|g| ((g.3 - g.2) / (g.1 - g.0), g.1 - g.0)).collect();
    slopes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = slopes.iter().map(|s| s.1).sum();
    let mut acc = 0.0;
    let mut median = 0.0;
    for s in &slopes {
        acc += s.1;
        if acc >= 0.5 * total {
            median = s.0;
            break;
        }
    }
    let lipschitz = 2.0 * median;
    let (c_lo, c_hi) = match (first_reach(&nodes, rho_lo), last_below(&nodes, rho_hi)) {
        (Some(a), Some(b)) if b > a => (a, b),
        _ => {
            return AcProbe { rho_lo, rho_hi, c_lo: f64::NAN, c_hi: f64::NAN, median_slope: median, lipschitz, measure: 0.0 }
        }
    };
    let measure = gaps
        .iter()
        .filter(|g| {
            let s = (g.3 - g.2) / (g.1 - g.0);
            s > 0.0 && s <= lipschitz
        })
        .map(|g| (g.1.min(c_hi) - g.0.max(c_lo)).max(0.0))
        .sum();
    AcProbe { rho_lo, rho_hi, c_lo, c_hi, median_slope: median, lipschitz, measure }
}

/// Uniform grid of `n >= 2` points on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}
