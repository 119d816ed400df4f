//! Sharpness example on an outward power cusp.
//!
//! The domain is `{0 < x1, x2 < 1, 0 < x3 < x2^gamma}` with `gamma > 1`,
//! pinched along the edge `x2 = 0`. The family `v = (0, -(s+1) x3 x2^s,
//! x2^(s+1))` has a trace-free strain supported entirely on the divergence:
//! the (2,3) strain entry cancels identically, so `|l(v)|^2 = (2/3)(div v)^2`
//! while the full gradient keeps the non-cancelling `x2^(2s)` shear terms.
//! Inside the admissible exponent window the gradient energy diverges as the
//! truncation `x2 > eps` is released while the strain energy and the mass on
//! a fixed box in the fat part stay finite, so no inequality of the form
//! `||Dv|| <= C (||v||_Q + ||l(v)||)` can hold on the cusp.
//!
//! All norms reduce to one-dimensional power integrals and are returned in
//! closed form together with their decisive exponents.

use serde::Serialize;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CuspParams {
    pub gamma: f64,
    pub s: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CuspError {
    #[error("cusp exponent gamma must exceed 1, got {0}")]
    BadGamma(f64),
    #[error("truncation must be positive, got {0}")]
    BadTruncation(f64),
}

/// Open interval of exponents `s` for which the gradient energy diverges
/// while the strain energy and the box mass converge.
pub fn admissible_window(gamma: f64) -> (f64, f64) {
    let upper = -(gamma + 1.0) / 2.0;
    let lower = (upper - (gamma - 1.0)).max(upper - 1.0);
    (lower, upper)
}

impl CuspParams {
    pub fn new(gamma: f64, s: f64) -> Result<CuspParams, CuspError> {
        if !(gamma > 1.0) {
            return Err(CuspError::BadGamma(gamma));
        }
        Ok(CuspParams { gamma, s })
    }

    pub fn admissible(&self) -> bool {
        let (lo, hi) = admissible_window(self.gamma);
        lo < self.s && self.s < hi
    }

    /// Box `(1/4,3/4)^2 x (0, T)` sitting inside the fat part of the cusp.
    pub fn fat_box_height(&self) -> f64 {
        0.75 * 0.25f64.powf(self.gamma)
    }
}

/// The closed-form field and its exact pointwise derivatives.
#[derive(Clone, Copy, Debug)]
pub struct CuspField {
    pub s: f64,
}

impl CuspField {
    /// `x2^a` with the `0 * infinity` products at `s = -1` resolved to 0.
    fn pow(x2: f64, a: f64, coef: f64) -> f64 {
        if coef == 0.0 {
            0.0
        } else {
            coef * x2.powf(a)
        }
    }

    pub fn eval(&self, x: &[f64; 3]) -> [f64; 3] {
        let s = self.s;
        [
            0.0,
            Self::pow(x[1], s, -(s + 1.0)) * x[2],
            x[1].powf(s + 1.0),
        ]
    }

    pub fn jacobian(&self, x: &[f64; 3]) -> [[f64; 3]; 3] {
        let s = self.s;
        let mut d = [[0.0; 3]; 3];
        d[1][1] = Self::pow(x[1], s - 1.0, -s * (s + 1.0)) * x[2];
        d[1][2] = Self::pow(x[1], s, -(s + 1.0));
        d[2][1] = Self::pow(x[1], s, s + 1.0);
        d
    }

    pub fn div(&self, x: &[f64; 3]) -> f64 {
        let s = self.s;
        Self::pow(x[1], s - 1.0, -s * (s + 1.0)) * x[2]
    }

    pub fn strain(&self, x: &[f64; 3]) -> [[f64; 3]; 3] {
        let d = self.jacobian(x);
        let mut e = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                e[a][b] = 0.5 * (d[a][b] + d[b][a]);
            }
        }
        e
    }

    pub fn trace_free_strain(&self, x: &[f64; 3]) -> [[f64; 3]; 3] {
        let mut e = self.strain(x);
        let t = (e[0][0] + e[1][1] + e[2][2]) / 3.0;
        for (a, row) in e.iter_mut().enumerate() {
            row[a] -= t;
        }
        e
    }
}

/// Truncated energies and the exponents that decide their limits.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CuspNorms {
    /// `int_{x2 > eps} |Dv|^2`
    pub dv_sq: f64,
    /// `int_{x2 > eps} |l(v)|^2`
    pub l_sq: f64,
    /// `int_Q |v|^2` over the fixed fat box, independent of `eps`.
    pub v_sq_box: f64,
    /// Power of `x2` in the leading gradient term; divergence iff `<= -1`.
    pub grad_exponent: f64,
    /// Power of `x2` in the strain term.
    pub strain_exponent: f64,
}

/// `int_eps^1 x^a dx`
fn power_integral(a: f64, eps: f64) -> f64 {
    if (a + 1.0).abs() < 1e-14 {
        -eps.ln()
    } else {
        (1.0 - eps.powf(a + 1.0)) / (a + 1.0)
    }
}

/// `int_{1/4}^{3/4} x^a dx`
fn box_integral(a: f64) -> f64 {
    if (a + 1.0).abs() < 1e-14 {
        3.0f64.ln()
    } else {
        (0.75f64.powf(a + 1.0) - 0.25f64.powf(a + 1.0)) / (a + 1.0)
    }
}

pub fn cusp_truncated_norms(p: &CuspParams, eps: f64) -> Result<CuspNorms, CuspError> {
    if !(eps > 0.0) {
        return Err(CuspError::BadTruncation(eps));
    }
    let (g, s) = (p.gamma, p.s);
    let c_div = s * s * (s + 1.0) * (s + 1.0);
    let strain_exponent = 2.0 * s - 2.0 + 3.0 * g;
    let grad_exponent = 2.0 * s + g;
    // int div^2 integrates x3^2 up to x2^gamma, giving x2^(3 gamma) / 3.
    let div_sq = c_div / 3.0 * power_integral(strain_exponent, eps);
    let shear_sq = 2.0 * (s + 1.0) * (s + 1.0) * power_integral(grad_exponent, eps);
    let t = p.fat_box_height();
    let v_sq_box = 0.5
        * ((s + 1.0) * (s + 1.0) * t.powi(3) / 3.0 * box_integral(2.0 * s)
            + t * box_integral(2.0 * s + 2.0));
    Ok(CuspNorms {
        dv_sq: div_sq + shear_sq,
        l_sq: 2.0 / 3.0 * div_sq,
        v_sq_box,
        grad_exponent,
        strain_exponent,
    })
}
