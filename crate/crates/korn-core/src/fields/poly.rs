//! Sparse multivariate polynomials with exact box integration.
//!
//! Coefficient arithmetic is plain f64; exponents stay tiny (the algebraic
//! kernels use total degree at most four), so products and binomial shifts
//! remain exact for dyadic data.

use crate::geometry::dyadic::MAX_DIM;
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    pub dim: usize,
    terms: BTreeMap<[u8; MAX_DIM], f64>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Poly::zero(dim);
        if c != 0.0 {
            p.terms.insert([0; MAX_DIM], c);
        }
        p
    }

    pub fn var(dim: usize, axis: usize) -> Self {
        assert!(axis < dim);
        let mut e = [0u8; MAX_DIM];
        e[axis] = 1;
        let mut p = Poly::zero(dim);
        p.terms.insert(e, 1.0);
        p
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u8; MAX_DIM], &f64)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, exps: [u8; MAX_DIM], c: f64) {
        let v = self.terms.entry(exps).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            self.terms.remove(&exps);
        }
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            r.add_term(*e, *c);
        }
        r
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        if s == 0.0 {
            return Poly::zero(self.dim);
        }
        let mut r = self.clone();
        for c in r.terms.values_mut() {
            *c *= s;
        }
        r
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut r = Poly::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                let mut e = *ea;
                for a in 0..MAX_DIM {
                    e[a] += eb[a];
                }
                r.add_term(e, ca * cb);
            }
        }
        r
    }

    pub fn diff(&self, axis: usize) -> Poly {
        let mut r = Poly::zero(self.dim);
        for (e, c) in &self.terms {
            if e[axis] > 0 {
                let mut e2 = *e;
                e2[axis] -= 1;
                r.add_term(e2, c * f64::from(e[axis]));
            }
        }
        r
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (e, c) in &self.terms {
            let mut t = *c;
            for a in 0..self.dim {
                for _ in 0..e[a] {
                    t *= x[a];
                }
            }
            s += t;
        }
        s
    }

    /// Exact integral over the closed box `[lo, hi]`.
    pub fn integrate_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut s = 0.0;
        for (e, c) in &self.terms {
            let mut t = *c;
            for a in 0..self.dim {
                let k = i32::from(e[a]) + 1;
                t *= (hi[a].powi(k) - lo[a].powi(k)) / f64::from(k);
            }
            s += t;
        }
        s
    }

    /// Polynomial `q` with `q(x) = p(x - y)`.
    pub fn translate(&self, y: &[f64]) -> Poly {
        let mut r = Poly::zero(self.dim);
        for (e, c) in &self.terms {
            // Expand the product of the per-axis binomials.
            let mut acc: Vec<([u8; MAX_DIM], f64)> = vec![([0; MAX_DIM], *c)];
            for a in 0..self.dim {
                if e[a] == 0 {
                    continue;
                }
                let k = e[a] as usize;
                let mut next = Vec::with_capacity(acc.len() * (k + 1));
                for (base, coeff) in &acc {
                    let mut binom = 1.0f64;
                    for j in 0..=k {
                        if j > 0 {
                            binom = binom * ((k - j + 1) as f64) / (j as f64);
                        }
                        let mut e2 = *base;
                        e2[a] += j as u8;
                        let sign_pow = (-y[a]).powi((k - j) as i32);
                        next.push((e2, coeff * binom * sign_pow));
                    }
                }
                acc = next;
            }
            for (e2, c2) in acc {
                r.add_term(e2, c2);
            }
        }
        r
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&k| u32::from(k)).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn is_zero_within(&self, eps: f64) -> bool {
        self.max_abs_coeff() <= eps
    }
}

/// Vector field with polynomial components.
#[derive(Clone, Debug, PartialEq)]
pub struct VecPoly {
    pub dim: usize,
    pub comps: Vec<Poly>,
}

impl VecPoly {
    pub fn zero(dim: usize) -> Self {
        VecPoly {
            dim,
            comps: vec![Poly::zero(dim); dim],
        }
    }

    pub fn add(&self, o: &VecPoly) -> VecPoly {
        VecPoly {
            dim: self.dim,
            comps: self
                .comps
                .iter()
                .zip(&o.comps)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> VecPoly {
        VecPoly {
            dim: self.dim,
            comps: self.comps.iter().map(|p| p.scale(s)).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let mut v = [0.0; MAX_DIM];
        for (a, p) in self.comps.iter().enumerate() {
            v[a] = p.eval(x);
        }
        v
    }

    /// Jacobian matrix, entry (j, k) = d v_j / d x_k.
    pub fn jacobian(&self) -> MatPoly {
        let n = self.dim;
        let mut entries = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                entries.push(self.comps[j].diff(k));
            }
        }
        MatPoly { dim: n, entries }
    }

    pub fn translate(&self, y: &[f64]) -> VecPoly {
        VecPoly {
            dim: self.dim,
            comps: self.comps.iter().map(|p| p.translate(y)).collect(),
        }
    }
}

/// Square matrix field with polynomial entries (row major).
#[derive(Clone, Debug, PartialEq)]
pub struct MatPoly {
    pub dim: usize,
    pub entries: Vec<Poly>,
}

impl MatPoly {
    pub fn zero(dim: usize) -> Self {
        MatPoly {
            dim,
            entries: vec![Poly::zero(dim); dim * dim],
        }
    }

    pub fn identity_scaled(dim: usize, p: &Poly) -> Self {
        let mut m = MatPoly::zero(dim);
        for j in 0..dim {
            m.entries[j * dim + j] = p.clone();
        }
        m
    }

    pub fn at(&self, j: usize, k: usize) -> &Poly {
        &self.entries[j * self.dim + k]
    }

    pub fn set(&mut self, j: usize, k: usize, p: Poly) {
        self.entries[j * self.dim + k] = p;
    }

    pub fn add(&self, o: &MatPoly) -> MatPoly {
        MatPoly {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&o.entries)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, o: &MatPoly) -> MatPoly {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> MatPoly {
        MatPoly {
            dim: self.dim,
            entries: self.entries.iter().map(|p| p.scale(s)).collect(),
        }
    }

    pub fn sym(&self) -> MatPoly {
        let n = self.dim;
        let mut m = MatPoly::zero(n);
        for j in 0..n {
            for k in 0..n {
                m.entries[j * n + k] = self.at(j, k).add(self.at(k, j)).scale(0.5);
            }
        }
        m
    }

    pub fn trace(&self) -> Poly {
        let mut t = Poly::zero(self.dim);
        for j in 0..self.dim {
            t = t.add(self.at(j, j));
        }
        t
    }

    /// Entrywise product summed: `sum_jk A_jk B_jk` as a polynomial.
    pub fn frobenius(&self, o: &MatPoly) -> Poly {
        let mut s = Poly::zero(self.dim);
        for (a, b) in self.entries.iter().zip(&o.entries) {
            s = s.add(&a.mul(b));
        }
        s
    }

    pub fn eval(&self, x: &[f64]) -> [[f64; MAX_DIM]; MAX_DIM] {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for j in 0..self.dim {
            for k in 0..self.dim {
                m[j][k] = self.at(j, k).eval(x);
            }
        }
        m
    }

    pub fn translate(&self, y: &[f64]) -> MatPoly {
        MatPoly {
            dim: self.dim,
            entries: self.entries.iter().map(|p| p.translate(y)).collect(),
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.entries
            .iter()
            .fold(0.0f64, |m, p| m.max(p.max_abs_coeff()))
    }
}

/// Symmetric gradient of a vector field.
pub fn strain(v: &VecPoly) -> MatPoly {
    v.jacobian().sym()
}

/// Strain minus its trace part: `eps(v) - (div v / n) Id`.
pub fn trace_free_strain(v: &VecPoly) -> MatPoly {
    let n = v.dim;
    let eps = strain(v);
    let mean_div = eps.trace().scale(1.0 / n as f64);
    let mut out = eps;
    for j in 0..n {
        let q = out.at(j, j).sub(&mean_div);
        out.set(j, j, q);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrate_square_of_sum() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = x.add(&y);
        let p2 = p.mul(&p);
        let got = p2.integrate_box(&[0.0, 0.0], &[1.0, 1.0]);
        assert!((got - 7.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn translate_matches_pointwise_shift() {
        let x = Poly::var(3, 0);
        let z = Poly::var(3, 2);
        let p = x.mul(&x).mul(&z).add(&z.scale(2.0)); // x^2 z + 2 z
        let y = [0.3, -0.7, 1.25];
        let q = p.translate(&y);
        for pt in [[0.1, 0.2, 0.3], [1.0, -1.0, 2.0], [0.0, 0.0, 0.0]] {
            let shifted = [pt[0] - y[0], pt[1] - y[1], pt[2] - y[2]];
            assert!((q.eval(&pt) - p.eval(&shifted)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_product() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = x.mul(&y).mul(&y); // x y^2
        let dx = p.diff(0);
        let dy = p.diff(1);
        assert!((dx.eval(&[2.0, 3.0]) - 9.0).abs() < 1e-15);
        assert!((dy.eval(&[2.0, 3.0]) - 12.0).abs() < 1e-15);
    }

    #[test]
    fn strain_of_rotation_vanishes() {
        // v = (-y, x): skew field, zero strain.
        let mut v = VecPoly::zero(2);
        v.comps[0] = Poly::var(2, 1).scale(-1.0);
        v.comps[1] = Poly::var(2, 0);
        let e = strain(&v);
        assert!(e.max_abs_coeff() == 0.0);
    }

    #[test]
    fn trace_free_strain_of_dilation_vanishes() {
        // v = x: strain = Id, removed entirely by the trace correction.
        let mut v = VecPoly::zero(3);
        for a in 0..3 {
            v.comps[a] = Poly::var(3, a);
        }
        let d = trace_free_strain(&v);
        assert!(d.max_abs_coeff() == 0.0);
        // Plain strain does not vanish.
        assert!(strain(&v).max_abs_coeff() == 1.0);
    }

    #[test]
    fn frobenius_and_trace() {
        let mut a = MatPoly::zero(2);
        a.set(0, 0, Poly::var(2, 0));
        a.set(1, 1, Poly::constant(2, 2.0));
        let t = a.trace();
        assert!((t.eval(&[3.0, 0.0]) - 5.0).abs() < 1e-15);
        let f = a.frobenius(&a);
        assert!((f.eval(&[3.0, 0.0]) - 13.0).abs() < 1e-15);
    }
}
