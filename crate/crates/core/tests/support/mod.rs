//! Brute-force oracles that share no code with the library.

#![allow(dead_code)]

use std::f64::consts::PI;

pub fn fk_h(k: f64, x: f64, y: f64) -> f64 {
    0.5 * (x - y) * (x - y) - k * (2.0 * PI * x).cos()
}

/// Golden-section minimum of `f` on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Cyclic coordinate descent with golden-section line searches of shrinking radius.
pub fn coordinate_descent(f: impl Fn(&[f64]) -> f64, x: &mut [f64], mut radius: f64) -> f64 {
    let mut best = f(x);
    while radius > 1e-10 {
        for _ in 0..50 {
            let before = best;
            for i in 0..x.len() {
                let xi = x[i];
                let (v, fv) = golden_min(
                    |t| {
                        let mut y = x.to_vec();
                        y[i] = t;
                        f(&y)
                    },
                    xi - radius,
                    xi + radius,
                    1e-13,
                );
                if fv < best {
                    best = fv;
                    x[i] = v;
                }
            }
            if before - best < 1e-15 {
                break;
            }
        }
        radius *= 0.25;
    }
    best
}

/// Periodic action of `x_0..x_{q-1}` with `x_q = x_0 + p`.
pub fn periodic_action(k: f64, p: i64, x: &[f64]) -> f64 {
    let q = x.len();
    (0..q).map(|i| fk_h(k, x[i], if i + 1 < q { x[i + 1] } else { x[0] + p as f64 })).sum()
}

/// `beta(p/q)` from an `n^q` grid (`x_0` in `[0,1)`, `x_i - i p/q` in `[-1/2, 1/2)`), then polished.
pub fn grid_beta(k: f64, p: i64, q: usize, n: usize) -> f64 {
    let rho = p as f64 / q as f64;
    let coord = |i: usize, g: usize| -> f64 {
        if i == 0 {
            g as f64 / n as f64
        } else {
            i as f64 * rho - 0.5 + g as f64 / n as f64
        }
    };
    let mut idx = vec![0usize; q];
    let mut cands: Vec<(f64, Vec<f64>)> = Vec::new();
    loop {
        let x: Vec<f64> = (0..q).map(|i| coord(i, idx[i])).collect();
        let v = periodic_action(k, p, &x);
        if cands.len() < 8 || v < cands[cands.len() - 1].0 {
            cands.push((v, x));
            cands.sort_by(|a, b| a.0.total_cmp(&b.0));
            cands.truncate(8);
        }
        let mut i = 0;
        loop {
            if i == q {
                return cands
                    .into_iter()
                    .map(|(_, mut x)| coordinate_descent(|y| periodic_action(k, p, y), &mut x, 1.0 / n as f64) / q as f64)
                    .fold(f64::INFINITY, f64::min);
            }
            idx[i] += 1;
            if idx[i] < n {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}
