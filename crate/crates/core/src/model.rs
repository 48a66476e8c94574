//! Generating functions `h(x, x')` of exact area-preserving twist maps.
//!
//! Every model has the closed form
//!
//! ```text
//! h(x, x') = a (x - x')^2 - k * sum_n [ c_n cos(2 pi n x) + s_n sin(2 pi n x) ]
//!                         + sum_m [ u_m cos(2 pi m (x - x')) + v_m sin(2 pi m (x - x')) ]
//! ```
//!
//! The Frenkel-Kontorova chain is `a = 1/2` with the single harmonic
//! `(1, 1, 0)`, i.e. `h = (x - x')^2 / 2 - k cos(2 pi x)`. Its Euler-Lagrange
//! map is the Chirikov standard map with `K = 4 pi^2 k`.
//!
//! The interaction harmonics `(u_m, v_m)` are not part of the model file
//! format; they exist so that twist-violating generating functions can be
//! built programmatically.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const TAU: f64 = 2.0 * PI;

/// Standard-map stochasticity parameter `K` equivalent to FK coupling `k`.
pub fn standard_map_parameter(k: f64) -> f64 {
    4.0 * PI * PI * k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    FrenkelKontorova,
    FourierPotential,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::FrenkelKontorova => "frenkel-kontorova",
            Family::FourierPotential => "fourier-potential",
        }
    }
}

/// One Fourier mode `cos_amp cos(2 pi order x) + sin_amp sin(2 pi order x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    pub cos_amp: f64,
    pub sin_amp: f64,
}

/// The five second-order partials of `h` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub d1: f64,
    pub d2: f64,
    pub d11: f64,
    pub d12: f64,
    pub d22: f64,
}

/// Immutable twist-map generating function.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingModel {
    family: Family,
    coupling: f64,
    elastic: f64,
    harmonics: Vec<Harmonic>,
    interaction: Vec<Harmonic>,
    hash: String,
}

impl GeneratingModel {
    /// `h(x, x') = (x - x')^2 / 2 - k cos(2 pi x)`.
    pub fn frenkel_kontorova(k: f64) -> Self {
        Self::assemble(
            Family::FrenkelKontorova,
            k,
            0.5,
            vec![Harmonic { order: 1, cos_amp: 1.0, sin_amp: 0.0 }],
            Vec::new(),
        )
    }

    /// `h(x, x') = a (x - x')^2 - k V(x)` with `V` the given trigonometric polynomial.
    pub fn fourier_potential(k: f64, a: f64, harmonics: Vec<Harmonic>) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::InvalidInput(format!("coupling k must be finite and >= 0, got {k}")));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidInput(format!("elastic coefficient a must be > 0, got {a}")));
        }
        for h in &harmonics {
            if h.order == 0 || !h.cos_amp.is_finite() || !h.sin_amp.is_finite() {
                return Err(Error::InvalidInput(format!("bad harmonic {h:?}")));
            }
        }
        Ok(Self::assemble(Family::FourierPotential, k, a, harmonics, Vec::new()))
    }

    /// Adds a periodic nearest-neighbour interaction `W(x - x')`.
    ///
    /// Such terms make `d12h` non-constant and can break the twist condition;
    /// `check_twist` is the gate for using the result.
    pub fn with_interaction(mut self, interaction: Vec<Harmonic>) -> Self {
        self.interaction = interaction;
        self.hash = self.compute_hash();
        self
    }

    fn assemble(
        family: Family,
        coupling: f64,
        elastic: f64,
        harmonics: Vec<Harmonic>,
        interaction: Vec<Harmonic>,
    ) -> Self {
        let mut m = GeneratingModel {
            family,
            coupling,
            elastic,
            harmonics,
            interaction,
            hash: String::new(),
        };
        m.hash = m.compute_hash();
        m
    }

    /// Canonical rendering of every field at 17 significant digits.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "family={};k={:.16e};a={:.16e}",
            self.family.as_str(),
            self.coupling,
            self.elastic
        );
        for h in &self.harmonics {
            let _ = write!(s, ";harmonic={},{:.16e},{:.16e}", h.order, h.cos_amp, h.sin_amp);
        }
        for h in &self.interaction {
            let _ = write!(s, ";interaction={},{:.16e},{:.16e}", h.order, h.cos_amp, h.sin_amp);
        }
        s
    }

    fn compute_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_string().as_bytes()))
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn elastic(&self) -> f64 {
        self.elastic
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    pub fn interaction(&self) -> &[Harmonic] {
        &self.interaction
    }

    /// Hex SHA-256 digest of [`canonical_string`](Self::canonical_string).
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// True when the potential vanishes identically (integrable chain).
    pub fn is_integrable(&self) -> bool {
        self.interaction.is_empty()
            && (self.coupling == 0.0
                || self.harmonics.iter().all(|h| h.cos_amp == 0.0 && h.sin_amp == 0.0))
    }

    // potential V(x) = -k sum(...) and its first two derivatives
    fn potential(&self, x: f64) -> (f64, f64, f64) {
        if self.coupling == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let f = x - x.floor();
        let (mut v, mut dv, mut ddv) = (0.0, 0.0, 0.0);
        for h in &self.harmonics {
            let w = TAU * h.order as f64;
            let (s, c) = (w * f).sin_cos();
            v += h.cos_amp * c + h.sin_amp * s;
            dv += w * (-h.cos_amp * s + h.sin_amp * c);
            ddv += -w * w * (h.cos_amp * c + h.sin_amp * s);
        }
        (-self.coupling * v, -self.coupling * dv, -self.coupling * ddv)
    }

    // interaction W(d) and derivatives
    fn pair(&self, d: f64) -> (f64, f64, f64) {
        let (mut v, mut dv, mut ddv) = (0.0, 0.0, 0.0);
        if self.interaction.is_empty() {
            return (v, dv, ddv);
        }
        let f = d - d.floor();
        for h in &self.interaction {
            let w = TAU * h.order as f64;
            let (s, c) = (w * f).sin_cos();
            v += h.cos_amp * c + h.sin_amp * s;
            dv += w * (-h.cos_amp * s + h.sin_amp * c);
            ddv += -w * w * (h.cos_amp * c + h.sin_amp * s);
        }
        (v, dv, ddv)
    }

    /// `h(x, x')`.
    pub fn eval_h(&self, x: f64, x_next: f64) -> f64 {
        let d = x - x_next;
        self.elastic * d * d + self.potential(x).0 + self.pair(d).0
    }

    /// Analytic partial derivatives of `h` at `(x, x')`.
    pub fn partials(&self, x: f64, x_next: f64) -> Partials {
        let d = x - x_next;
        let a2 = 2.0 * self.elastic;
        let (_, dv, ddv) = self.potential(x);
        let (_, dw, ddw) = self.pair(d);
        Partials {
            d1: a2 * d + dv + dw,
            d2: -a2 * d - dw,
            d11: a2 + ddv + ddw,
            d12: -a2 - ddw,
            d22: a2 + ddw,
        }
    }

    /// Mixed partial only; the twist condition is a statement about it.
    pub fn d12(&self, x: f64, x_next: f64) -> f64 {
        -2.0 * self.elastic - self.pair(x - x_next).2
    }

    /// Tightest `b` with `d12h <= -1/b` over the `n x n` grid on `[0,1)^2`.
    pub fn check_twist(&self, n: usize) -> Result<f64> {
        if n < 2 {
            return Err(Error::InvalidInput("twist grid needs n >= 2".into()));
        }
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            let x = i as f64 / n as f64;
            for j in 0..n {
                let y = j as f64 / n as f64;
                let v = self.d12(x, y);
                if v >= 0.0 {
                    return Err(Error::TwistViolated { x, x_next: y, value: v });
                }
                worst = worst.max(v);
            }
        }
        Ok(-1.0 / worst)
    }

    /// One step of the twist map generated by `h`: `y = -d1h(x, x')`, `y' = d2h(x, x')`.
    pub fn twist_map_step(&self, x: f64, y: f64) -> (f64, f64) {
        // solve -d1h(x, x') = y for x'; d1h is increasing-free in x' by the twist condition
        let mut xn = x + y;
        for _ in 0..100 {
            let pd = self.partials(x, xn);
            let f = -pd.d1 - y;
            let step = f / pd.d12;
            xn += step;
            if step.abs() <= 1e-15 * (1.0 + xn.abs()) {
                break;
            }
        }
        (xn, self.partials(x, xn).d2)
    }
}

/// Euler-Lagrange residual of a `(p, q)`-periodic lift `x_0..x_{q-1}` (with `x_{i+q} = x_i + p`).
///
/// Component `i` is `d2h(x_{i-1}, x_i) + d1h(x_i, x_{i+1})`.
pub fn el_residual(model: &GeneratingModel, p: i64, positions: &[f64]) -> Vec<f64> {
    let q = positions.len();
    let at = |i: isize| -> f64 {
        let qi = q as isize;
        let r = i.rem_euclid(qi);
        positions[r as usize] + p as f64 * (i.div_euclid(qi)) as f64
    };
    (0..q as isize)
        .map(|i| model.partials(at(i - 1), at(i)).d2 + model.partials(at(i), at(i + 1)).d1)
        .collect()
}

/// Result of one Chirikov standard-map step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardMapState {
    /// Angle as a lift (not reduced).
    pub x_lift: f64,
    /// Angle reduced to `[0, 2 pi)`.
    pub x_mod: f64,
    pub y: f64,
}

/// `(x, y) -> (x + y + K sin x, y + K sin x)`.
pub fn standard_map_step(x: f64, y: f64, k: f64) -> StandardMapState {
    let y_next = y + k * x.sin();
    let x_next = x + y_next;
    StandardMapState { x_lift: x_next, x_mod: x_next.rem_euclid(TAU), y: y_next }
}
