//! Exact-rational mirror of the truncated series operations, used as an
//! oracle for the floating-point implementation.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use toeplitz_wkb::PowerSeries;

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RPoly {
    pub nvars: usize,
    pub deg: usize,
    pub terms: BTreeMap<Vec<u32>, Q>,
}

fn total(e: &[u32]) -> usize {
    e.iter().map(|&x| x as usize).sum()
}

impl RPoly {
    pub fn zero(nvars: usize, deg: usize) -> Self {
        RPoly { nvars, deg, terms: BTreeMap::new() }
    }

    pub fn var(nvars: usize, deg: usize, i: usize) -> Self {
        let mut p = Self::zero(nvars, deg);
        let mut e = vec![0; nvars];
        e[i] = 1;
        p.push(e, Q::one());
        p
    }

    pub fn push(&mut self, e: Vec<u32>, c: Q) {
        if total(&e) > self.deg || c.is_zero() {
            return;
        }
        let slot = self.terms.entry(e).or_insert_with(Q::zero);
        *slot += c;
        self.terms.retain(|_, v| !v.is_zero());
    }

    pub fn coeff(&self, e: &[u32]) -> Q {
        self.terms.get(e).cloned().unwrap_or_else(Q::zero)
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = Self::zero(self.nvars, self.deg.min(o.deg));
        for (e, c) in self.terms.iter().chain(o.terms.iter()) {
            r.push(e.clone(), c.clone());
        }
        r
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut r = Self::zero(self.nvars, self.deg.min(o.deg));
        for (a, ca) in &self.terms {
            for (b, cb) in &o.terms {
                let e: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                r.push(e, ca * cb);
            }
        }
        r
    }

    pub fn scale(&self, c: &Q) -> Self {
        let mut r = Self::zero(self.nvars, self.deg);
        for (e, v) in &self.terms {
            r.push(e.clone(), v * c);
        }
        r
    }

    pub fn diff(&self, i: usize) -> Self {
        let mut r = Self::zero(self.nvars, self.deg.saturating_sub(1));
        for (e, v) in &self.terms {
            if e[i] > 0 {
                let mut f = e.clone();
                f[i] -= 1;
                r.push(f, v * Q::from_integer(BigInt::from(e[i])));
            }
        }
        r
    }

    /// self∘g, truncated at the smallest degree among g.
    pub fn compose(&self, g: &[RPoly]) -> Self {
        let deg = g.iter().map(|p| p.deg).min().unwrap();
        let m = g[0].nvars;
        let mut out = Self::zero(m, deg);
        for (e, c) in &self.terms {
            let mut t = Self::zero(m, deg);
            t.push(vec![0; m], c.clone());
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    t = t.mul(&g[i]);
                }
            }
            out = out.add(&t);
        }
        out
    }

    pub fn to_series(&self) -> PowerSeries {
        let terms: Vec<(Vec<u32>, Complex64)> =
            self.terms.iter().map(|(e, c)| (e.clone(), Complex64::new(c.to_f64().unwrap(), 0.0))).collect();
        PowerSeries::from_terms(self.nvars, self.deg, terms).unwrap()
    }

    /// Largest |float − exact| over all coefficients up to `deg`.
    pub fn max_diff(&self, s: &PowerSeries) -> f64 {
        let mut worst = 0.0f64;
        for (e, c) in s.terms() {
            if total(&e) <= self.deg {
                let want = self.coeff(&e).to_f64().unwrap();
                worst = worst.max((c - Complex64::new(want, 0.0)).norm());
            }
        }
        for (e, c) in &self.terms {
            worst = worst.max((s.coeff(e) - Complex64::new(c.to_f64().unwrap(), 0.0)).norm());
        }
        worst
    }
}

pub fn monomials(nvars: usize, deg: usize) -> Vec<Vec<u32>> {
    fn rec(nvars: usize, left: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == nvars {
            out.push(prefix.clone());
            return;
        }
        for k in 0..=left {
            prefix.push(k as u32);
            rec(nvars, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(nvars, deg, &mut Vec::new(), &mut out);
    out.sort_by_key(|e| total(e));
    out
}

pub fn random_rational<R: Rng>(rng: &mut R) -> Q {
    q(rng.gen_range(-9..=9), rng.gen_range(1..=8))
}

/// Random polynomial with coefficients in degrees [lo, deg].
pub fn random_poly<R: Rng>(rng: &mut R, nvars: usize, deg: usize, lo: usize, density: f64) -> RPoly {
    let mut p = RPoly::zero(nvars, deg);
    for e in monomials(nvars, deg) {
        if total(&e) >= lo && rng.gen_bool(density) {
            p.push(e, random_rational(rng));
        }
    }
    p
}

/// Exact solution of X·u = h·u + g with u(0) = 0, where X_i = λ_i x_i + field_i.
pub fn transport_exact(lambda: &[Q], field: &[RPoly], h: &RPoly, g: &RPoly, deg: usize) -> RPoly {
    let d = lambda.len();
    let mut u = RPoly::zero(d, deg);
    for e in monomials(d, deg) {
        let j = total(&e);
        if j == 0 {
            continue;
        }
        let hu = h.mul(&u);
        let mut drift = RPoly::zero(d, deg);
        for i in 0..d {
            let mut du = u.diff(i);
            du.deg = deg;
            drift = drift.add(&field[i].mul(&du));
        }
        let div: Q = e.iter().zip(lambda).map(|(&m, l)| l * Q::from_integer(BigInt::from(m))).fold(Q::zero(), |a, b| a + b);
        let rhs = g.coeff(&e) + hu.coeff(&e) - drift.coeff(&e);
        u.push(e, rhs / div);
    }
    u
}

/// X·u − h·u − g through the degree of u.
pub fn transport_residual(lambda: &[Q], field: &[RPoly], h: &RPoly, g: &RPoly, u: &RPoly) -> RPoly {
    let d = lambda.len();
    let mut xu = RPoly::zero(d, u.deg);
    for i in 0..d {
        let mut du = u.diff(i);
        // X_i vanishes at 0, so X_i·∂_i u is exact through deg u
        du.deg = u.deg;
        let xi = RPoly::var(d, u.deg, i).scale(&lambda[i]).add(&field[i]);
        xu = xu.add(&xi.mul(&du));
    }
    xu.add(&h.mul(u).scale(&q(-1, 1))).add(&g.scale(&q(-1, 1)))
}
