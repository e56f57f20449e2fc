//! Truncated multivariate power series with complex coefficients.
//!
//! Coefficients are stored densely in graded-lexicographic order: all monomials
//! of degree 0, then degree 1, and so on; within a degree the exponent tuples
//! are listed in decreasing lexicographic order (`x^2, xy, y^2`). Because the
//! order of a degree block does not depend on the truncation degree, lowering
//! the degree of a series is a prefix copy.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Exponent vector of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// μ! = Π μ_i!
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&e| factorial(e as usize)).product()
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub(crate) struct Layout {
    nvars: usize,
    max_degree: usize,
    exps: Vec<u16>,
    degree: Vec<u16>,
    offsets: Vec<usize>,
    keys: Vec<u32>,
    lookup: Vec<u32>,
    radix: usize,
}

const LOOKUP_LIMIT: usize = 1 << 26;

impl Layout {
    fn build(nvars: usize, max_degree: usize) -> Layout {
        assert!(nvars >= 1, "power series need at least one variable");
        let radix = max_degree + 1;
        let table = radix
            .checked_pow(nvars as u32)
            .filter(|&t| t <= LOOKUP_LIMIT)
            .unwrap_or_else(|| {
                panic!("series layout too large: {nvars} variables at degree {max_degree}")
            });
        let mut exps = Vec::new();
        let mut degree = Vec::new();
        let mut offsets = Vec::with_capacity(max_degree + 2);
        let mut cur = vec![0u16; nvars];
        for d in 0..=max_degree {
            offsets.push(degree.len());
            push_block(&mut cur, 0, d, &mut exps, &mut degree);
        }
        offsets.push(degree.len());
        let len = degree.len();
        let mut keys = Vec::with_capacity(len);
        let mut lookup = vec![u32::MAX; table];
        for i in 0..len {
            let mut key = 0usize;
            let mut scale = 1usize;
            for v in 0..nvars {
                key += exps[i * nvars + v] as usize * scale;
                scale *= radix;
            }
            keys.push(key as u32);
            lookup[key] = i as u32;
        }
        Layout { nvars, max_degree, exps, degree, offsets, keys, lookup, radix }
    }

    fn len(&self) -> usize {
        self.degree.len()
    }

    fn exps(&self, i: usize) -> &[u16] {
        &self.exps[i * self.nvars..(i + 1) * self.nvars]
    }

    fn index(&self, e: &[u32]) -> Option<usize> {
        if e.len() != self.nvars {
            return None;
        }
        let total: u32 = e.iter().sum();
        if total as usize > self.max_degree {
            return None;
        }
        let mut key = 0usize;
        let mut scale = 1usize;
        for &x in e {
            key += x as usize * scale;
            scale *= self.radix;
        }
        Some(self.lookup[key] as usize)
    }

}

struct ComposeCtx<'a> {
    g: &'a [PowerSeries],
    pure: &'a [Option<usize>],
    order: &'a [usize],
    outer: usize,
    maxexp: &'a [usize],
    target: usize,
    m: usize,
}

fn push_block(cur: &mut [u16], v: usize, remaining: usize, exps: &mut Vec<u16>, degree: &mut Vec<u16>) {
    let n = cur.len();
    if v == n - 1 {
        cur[v] = remaining as u16;
        exps.extend_from_slice(cur);
        degree.push(cur.iter().sum());
        return;
    }
    for a in (0..=remaining).rev() {
        cur[v] = a as u16;
        push_block(cur, v + 1, remaining - a, exps, degree);
    }
    cur[v] = 0;
}

fn layout(nvars: usize, max_degree: usize) -> Arc<Layout> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|p| p.into_inner());
    map.entry((nvars, max_degree))
        .or_insert_with(|| Arc::new(Layout::build(nvars, max_degree)))
        .clone()
}

/// Truncated Taylor series Σ c_μ x^μ, |μ| ≤ D.
#[derive(Clone)]
pub struct PowerSeries {
    layout: Arc<Layout>,
    coeffs: Vec<Complex64>,
}

impl PowerSeries {
    pub fn zeros(nvars: usize, max_degree: usize) -> Self {
        let layout = layout(nvars, max_degree);
        let coeffs = vec![ZERO; layout.len()];
        PowerSeries { layout, coeffs }
    }

    pub fn constant(nvars: usize, max_degree: usize, c: Complex64) -> Self {
        let mut s = Self::zeros(nvars, max_degree);
        s.coeffs[0] = c;
        s
    }

    pub fn one(nvars: usize, max_degree: usize) -> Self {
        Self::constant(nvars, max_degree, ONE)
    }

    /// The coordinate function x_var.
    pub fn variable(nvars: usize, max_degree: usize, var: usize) -> Self {
        let mut e = vec![0u32; nvars];
        e[var] = 1;
        Self::monomial(nvars, max_degree, &e, ONE)
    }

    pub fn monomial(nvars: usize, max_degree: usize, exps: &[u32], c: Complex64) -> Self {
        let mut s = Self::zeros(nvars, max_degree);
        if let Some(i) = s.layout.index(exps) {
            s.coeffs[i] = c;
        }
        s
    }

    /// Builds a series from (exponents, coefficient) pairs; terms beyond the
    /// truncation degree are dropped, repeated exponents accumulate.
    pub fn from_terms<I, E>(nvars: usize, max_degree: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (E, Complex64)>,
        E: AsRef<[u32]>,
    {
        let mut s = Self::zeros(nvars, max_degree);
        for (e, c) in terms {
            let e = e.as_ref();
            if e.len() != nvars {
                return Err(Error::Dimension(format!(
                    "exponent of length {} in a {nvars}-variable series",
                    e.len()
                )));
            }
            if let Some(i) = s.layout.index(e) {
                s.coeffs[i] += c;
            }
        }
        Ok(s)
    }

    /// Univariate series from its coefficient list (index = power).
    pub fn from_univariate(coeffs: &[Complex64], max_degree: usize) -> Self {
        let mut s = Self::zeros(1, max_degree);
        for (k, &c) in coeffs.iter().enumerate().take(max_degree + 1) {
            s.coeffs[k] = c;
        }
        s
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    pub fn max_degree(&self) -> usize {
        self.layout.max_degree
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Raw coefficients in graded-lex order.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Exponents of the i-th stored monomial.
    pub fn exponents(&self, i: usize) -> Vec<u32> {
        self.layout.exps(i).iter().map(|&e| e as u32).collect()
    }

    pub fn degree_of(&self, i: usize) -> usize {
        self.layout.degree[i] as usize
    }

    pub fn index_of(&self, exps: &[u32]) -> Option<usize> {
        self.layout.index(exps)
    }

    pub fn coeff(&self, exps: &[u32]) -> Complex64 {
        self.layout.index(exps).map_or(ZERO, |i| self.coeffs[i])
    }

    pub fn set_coeff(&mut self, exps: &[u32], c: Complex64) {
        if let Some(i) = self.layout.index(exps) {
            self.coeffs[i] = c;
        }
    }

    pub fn constant_term(&self) -> Complex64 {
        self.coeffs[0]
    }

    /// Iterates over (exponents, coefficient), including zeros.
    pub fn terms(&self) -> impl Iterator<Item = (Vec<u32>, Complex64)> + '_ {
        (0..self.len()).map(move |i| (self.exponents(i), self.coeffs[i]))
    }

    /// Range of storage indices holding monomials of exactly degree d.
    pub fn degree_range(&self, d: usize) -> std::ops::Range<usize> {
        if d > self.max_degree() {
            return self.len()..self.len();
        }
        self.layout.offsets[d]..self.layout.offsets[d + 1]
    }

    /// Same series at another truncation degree (prefix copy or zero padding).
    pub fn with_degree(&self, d: usize) -> Self {
        if d == self.max_degree() {
            return self.clone();
        }
        let mut out = Self::zeros(self.nvars(), d);
        let n = out.len().min(self.len());
        out.coeffs[..n].copy_from_slice(&self.coeffs[..n]);
        out
    }

    /// Truncates to degree min(d, D).
    pub fn truncate(&self, d: usize) -> Self {
        self.with_degree(d.min(self.max_degree()))
    }

    fn check_same_vars(&self, other: &Self, op: &str) -> Result<()> {
        if self.nvars() != other.nvars() {
            return Err(Error::Dimension(format!(
                "{op} of series in {} and {} variables",
                self.nvars(),
                other.nvars()
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_vars(other, "add")?;
        let d = self.max_degree().min(other.max_degree());
        let mut out = Self::zeros(self.nvars(), d);
        for i in 0..out.len() {
            out.coeffs[i] = self.coeffs[i] + other.coeffs[i];
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same_vars(other, "sub")?;
        let d = self.max_degree().min(other.max_degree());
        let mut out = Self::zeros(self.nvars(), d);
        for i in 0..out.len() {
            out.coeffs[i] = self.coeffs[i] - other.coeffs[i];
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_same_vars(other, "mul")?;
        let d = self.max_degree().min(other.max_degree());
        Ok(mul_to_degree(self, other, d))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|x| *x *= c);
        out
    }

    pub fn scale_real(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|x| *x *= c);
        out
    }

    pub fn add_constant(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    pub fn conj_coeffs(&self) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|x| *x = x.conj());
        out
    }

    /// Formal partial derivative; the truncation degree drops by one.
    pub fn differentiate(&self, var: usize) -> Self {
        assert!(var < self.nvars(), "variable index out of range");
        let d = self.max_degree().saturating_sub(1);
        let mut out = Self::zeros(self.nvars(), d);
        if self.max_degree() == 0 {
            return out;
        }
        let mut e = vec![0u32; self.nvars()];
        for i in 1..self.len() {
            let ex = self.layout.exps(i);
            if ex[var] == 0 || self.coeffs[i] == ZERO {
                continue;
            }
            for (v, slot) in e.iter_mut().enumerate() {
                *slot = ex[v] as u32;
            }
            e[var] -= 1;
            let j = out.layout.index(&e).expect("derivative index in range");
            out.coeffs[j] = self.coeffs[i] * ex[var] as f64;
        }
        out
    }

    /// Antiderivative in `var` vanishing on {x_var = 0}; the degree grows by one.
    pub fn integrate(&self, var: usize) -> Self {
        assert!(var < self.nvars(), "variable index out of range");
        let mut out = Self::zeros(self.nvars(), self.max_degree() + 1);
        let mut e = vec![0u32; self.nvars()];
        for i in 0..self.len() {
            if self.coeffs[i] == ZERO {
                continue;
            }
            let ex = self.layout.exps(i);
            for (v, slot) in e.iter_mut().enumerate() {
                *slot = ex[v] as u32;
            }
            e[var] += 1;
            let j = out.layout.index(&e).expect("integral index in range");
            out.coeffs[j] = self.coeffs[i] / e[var] as f64;
        }
        out
    }


    /// If the series is exactly the coordinate x_j, returns j.
    fn as_coordinate(&self) -> Option<usize> {
        let n = self.nvars();
        if self.max_degree() == 0 {
            return None;
        }
        let mut found = None;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            if i == 0 || i > n || c != ONE || found.is_some() {
                return None;
            }
            found = Some(i - 1);
        }
        // degree-1 block is x_0, x_1, ... in that order
        found
    }

    /// f∘g for germs g_i with g_i(0) = 0; the result lives in the variables of g.
    pub fn compose(&self, g: &[PowerSeries]) -> Result<Self> {
        if g.len() != self.nvars() {
            return Err(Error::Dimension(format!(
                "composing a {}-variable series with {} components",
                self.nvars(),
                g.len()
            )));
        }
        let m = g[0].nvars();
        for (i, gi) in g.iter().enumerate() {
            if gi.nvars() != m {
                return Err(Error::Dimension("components of g differ in variable count".into()));
            }
            let c0 = gi.coeffs[0].norm();
            if c0 != 0.0 {
                return Err(Error::NonZeroConstant { component: i, value: c0 });
            }
        }
        let target = g.iter().map(|s| s.max_degree()).fold(self.max_degree(), usize::min);
        let pure: Vec<Option<usize>> = g.iter().map(|s| s.as_coordinate()).collect();
        // Horner over the non-coordinate components first; the coordinate ones
        // are then a relabelling of the remaining coefficient slice.
        let n = self.nvars();
        let mut order: Vec<usize> = (0..n).filter(|&v| pure[v].is_none()).collect();
        let outer = order.len();
        order.extend((0..n).filter(|&v| pure[v].is_some()));
        let mut maxexp = vec![0usize; n];
        for (i, c) in self.coeffs.iter().enumerate() {
            if *c != ZERO {
                for (v, &e) in self.layout.exps(i).iter().enumerate() {
                    maxexp[v] = maxexp[v].max(e as usize);
                }
            }
        }
        let ctx = ComposeCtx { g, pure: &pure, order: &order, outer, maxexp: &maxexp, target, m };
        let mut prefix = vec![0u32; n];
        Ok(self.compose_rec(&ctx, 0, &mut prefix, 0))
    }

    fn compose_rec(&self, ctx: &ComposeCtx<'_>, pos: usize, prefix: &mut [u32], used: usize) -> PowerSeries {
        let budget = ctx.target - used;
        if pos == ctx.outer {
            return self.relabel_slice(ctx, prefix, budget);
        }
        let v = ctx.order[pos];
        let top = budget.min(self.max_degree() - used).min(ctx.maxexp[v]);
        let mut acc: Option<PowerSeries> = None;
        for e in (0..=top).rev() {
            prefix[v] = e as u32;
            let inner = self.compose_rec(ctx, pos + 1, prefix, used + e);
            prefix[v] = 0;
            let deg = budget - e;
            acc = Some(match acc {
                None => inner,
                Some(a) => add_into(mul_to_degree(&a, &ctx.g[v], deg), &inner),
            });
        }
        acc.unwrap_or_else(|| PowerSeries::zeros(ctx.m, budget))
    }

    fn relabel_slice(&self, ctx: &ComposeCtx<'_>, prefix: &[u32], budget: usize) -> PowerSeries {
        let mut out = PowerSeries::zeros(ctx.m, budget);
        let mut e = vec![0u32; ctx.m];
        'mono: for (i, c) in self.coeffs.iter().enumerate() {
            if *c == ZERO {
                continue;
            }
            let ex = self.layout.exps(i);
            for &v in &ctx.order[..ctx.outer] {
                if ex[v] as u32 != prefix[v] {
                    continue 'mono;
                }
            }
            e.iter_mut().for_each(|x| *x = 0);
            let mut deg = 0usize;
            for &v in &ctx.order[ctx.outer..] {
                e[ctx.pure[v].unwrap()] += ex[v] as u32;
                deg += ex[v] as usize;
            }
            if deg > budget {
                continue;
            }
            if let Some(idx) = out.layout.index(&e) {
                out.coeffs[idx] += *c;
            }
        }
        out
    }

    /// Evaluates the truncated polynomial at a point.
    pub fn evaluate(&self, point: &[Complex64]) -> Complex64 {
        assert_eq!(point.len(), self.nvars(), "evaluation point has wrong dimension");
        let d = self.max_degree();
        let powers: Vec<Vec<Complex64>> = point
            .iter()
            .map(|&p| {
                let mut v = Vec::with_capacity(d + 1);
                let mut acc = ONE;
                for _ in 0..=d {
                    v.push(acc);
                    acc *= p;
                }
                v
            })
            .collect();
        let mut sum = ZERO;
        for i in 0..self.len() {
            let c = self.coeffs[i];
            if c == ZERO {
                continue;
            }
            let mut term = c;
            for (v, &e) in self.layout.exps(i).iter().enumerate() {
                term *= powers[v][e as usize];
            }
            sum += term;
        }
        sum
    }

    /// Reinterprets a germ in (x, x̄) as a holomorphic series in (x, w̄).
    /// Storage is shared: the pairing is positional (first half holomorphic).
    pub fn polarize(&self) -> Result<Self> {
        if self.nvars() % 2 != 0 {
            return Err(Error::Dimension("polarization needs paired (x, x̄) variables".into()));
        }
        Ok(self.clone())
    }

    /// Value of a polarized series on the diagonal w̄ = conj(x).
    pub fn restrict_diagonal(&self, x: &[Complex64]) -> Complex64 {
        let d = self.nvars() / 2;
        assert_eq!(x.len(), d, "diagonal point has wrong dimension");
        let mut p: Vec<Complex64> = x.to_vec();
        p.extend(x.iter().map(|z| z.conj()));
        self.evaluate(&p)
    }

    /// Largest violation of c_{νμ} = conj(c_{μν}) over paired indices.
    pub fn reality_defect(&self) -> f64 {
        let d = self.nvars() / 2;
        let mut worst: f64 = 0.0;
        let mut sw = vec![0u32; self.nvars()];
        for i in 0..self.len() {
            let e = self.layout.exps(i);
            for k in 0..d {
                sw[k] = e[d + k] as u32;
                sw[d + k] = e[k] as u32;
            }
            let j = self.layout.index(&sw).expect("swapped index exists");
            worst = worst.max((self.coeffs[i] - self.coeffs[j].conj()).norm());
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// Max coefficient difference over the common truncation degree.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let n = self.len().min(other.len());
        (0..n).fold(0.0, |m, i| m.max((self.coeffs[i] - other.coeffs[i]).norm()))
    }

    /// Σ_{|μ|=j} |∂^μ f(0)| = Σ_{|μ|=j} μ!|c_μ|.
    pub fn derivative_norm_at_zero(&self, j: usize) -> f64 {
        self.degree_range(j)
            .map(|i| {
                let fact: f64 = self.layout.exps(i).iter().map(|&e| factorial(e as usize)).product();
                fact * self.coeffs[i].norm()
            })
            .sum()
    }

    /// Part of exact degree d.
    pub fn homogeneous_part(&self, d: usize) -> Self {
        let mut out = Self::zeros(self.nvars(), self.max_degree());
        for i in self.degree_range(d) {
            out.coeffs[i] = self.coeffs[i];
        }
        out
    }

    /// Lifts into `nvars` variables, sending variable i to `map[i]`.
    pub fn embed(&self, nvars: usize, map: &[usize]) -> Self {
        assert_eq!(map.len(), self.nvars(), "embedding map has wrong length");
        let mut out = Self::zeros(nvars, self.max_degree());
        let mut e = vec![0u32; nvars];
        for i in 0..self.len() {
            if self.coeffs[i] == ZERO {
                continue;
            }
            e.iter_mut().for_each(|x| *x = 0);
            for (v, &x) in self.layout.exps(i).iter().enumerate() {
                e[map[v]] += x as u32;
            }
            let j = out.layout.index(&e).expect("embedded index in range");
            out.coeffs[j] += self.coeffs[i];
        }
        out
    }

    /// Coefficient of Π x_{vars[i]}^{exps[i]}, as a series in the remaining
    /// variables (in their original order), of degree D − Σ exps.
    pub fn coefficient_of(&self, vars: &[usize], exps: &[u32]) -> Self {
        let fixed: u32 = exps.iter().sum();
        let rest: Vec<usize> = (0..self.nvars()).filter(|v| !vars.contains(v)).collect();
        assert!(!rest.is_empty(), "at least one free variable must remain");
        let d = self.max_degree().saturating_sub(fixed as usize);
        let mut out = Self::zeros(rest.len(), d);
        if fixed as usize > self.max_degree() {
            return out;
        }
        let mut e = vec![0u32; rest.len()];
        'outer: for i in 0..self.len() {
            let ex = self.layout.exps(i);
            for (k, &v) in vars.iter().enumerate() {
                if ex[v] as u32 != exps[k] {
                    continue 'outer;
                }
            }
            for (k, &v) in rest.iter().enumerate() {
                e[k] = ex[v] as u32;
            }
            if let Some(j) = out.layout.index(&e) {
                out.coeffs[j] = self.coeffs[i];
            }
        }
        out
    }

    /// exp(f) for f(0) = 0.
    pub fn exp(&self) -> Result<Self> {
        if self.coeffs[0] != ZERO {
            return Err(Error::Parameter("exp expects a series without constant term".into()));
        }
        let d = self.max_degree();
        let mut acc = Self::one(self.nvars(), d);
        for j in (1..=d).rev() {
            acc = mul_to_degree(&acc, self, d).scale_real(1.0 / j as f64).add_constant(ONE);
        }
        Ok(acc)
    }

    /// log(1 + f) for f(0) = 0.
    pub fn log1p(&self) -> Result<Self> {
        if self.coeffs[0] != ZERO {
            return Err(Error::Parameter("log1p expects a series without constant term".into()));
        }
        let d = self.max_degree();
        if d == 0 {
            return Ok(Self::zeros(self.nvars(), 0));
        }
        let sign = |j: usize| if j % 2 == 1 { 1.0 } else { -1.0 };
        let mut acc = Self::constant(self.nvars(), d, Complex64::new(sign(d) / d as f64, 0.0));
        for j in (1..d).rev() {
            acc = mul_to_degree(&acc, self, d).add_constant(Complex64::new(sign(j) / j as f64, 0.0));
        }
        Ok(mul_to_degree(&acc, self, d))
    }

    /// Multiplicative inverse, for a nonzero constant term.
    pub fn recip(&self) -> Result<Self> {
        let a0 = self.coeffs[0];
        if a0.norm() == 0.0 {
            return Err(Error::NonInvertible("reciprocal of a series vanishing at 0".into()));
        }
        let d = self.max_degree();
        let mut b = Self::constant(self.nvars(), d, ONE / a0);
        let mut prec = 1usize;
        while prec <= d {
            prec *= 2;
            let ab = mul_to_degree(self, &b, d);
            let corr = ab.scale_real(-1.0).add_constant(Complex64::new(2.0, 0.0));
            b = mul_to_degree(&b, &corr, d);
        }
        Ok(b)
    }

    pub fn powi(&self, n: u32) -> Self {
        let d = self.max_degree();
        let mut result = Self::one(self.nvars(), d);
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                result = mul_to_degree(&result, &base, d);
            }
            k >>= 1;
            if k > 0 {
                base = mul_to_degree(&base, &base, d);
            }
        }
        result
    }

    /// Exact-degree-one coefficients: row i is the gradient of self at 0.
    pub fn linear_part(&self) -> Vec<Complex64> {
        let n = self.nvars();
        (0..n)
            .map(|v| {
                let mut e = vec![0u32; n];
                e[v] = 1;
                self.coeff(&e)
            })
            .collect()
    }
}

/// Product truncated at `target`; operands are zero-padded if their own
/// degree is lower, so the caller vouches for the validity of the result.
pub(crate) fn mul_to_degree(a: &PowerSeries, b: &PowerSeries, target: usize) -> PowerSeries {
    let n = a.nvars();
    let mut out = PowerSeries::zeros(n, target);
    let l = out.layout.clone();
    let len = l.len();
    let fit = |s: &PowerSeries| -> Vec<Complex64> {
        let mut v = vec![ZERO; len];
        let k = len.min(s.len());
        v[..k].copy_from_slice(&s.coeffs[..k]);
        v
    };
    let av = fit(a);
    let bv = fit(b);
    let o = &mut out.coeffs;
    for i in 0..len {
        let (ai, bi) = (av[i], bv[i]);
        if ai == ZERO && bi == ZERO {
            continue;
        }
        let di = l.degree[i] as usize;
        if 2 * di > target {
            // j ≥ i forces deg_j ≥ deg_i
            break;
        }
        let jend = l.offsets[target - di + 1];
        let ki = l.keys[i] as usize;
        o[l.lookup[2 * ki] as usize] += ai * bi;
        if ai == ZERO {
            for j in i + 1..jend {
                o[l.lookup[ki + l.keys[j] as usize] as usize] += av[j] * bi;
            }
        } else if bi == ZERO {
            for j in i + 1..jend {
                o[l.lookup[ki + l.keys[j] as usize] as usize] += ai * bv[j];
            }
        } else {
            for j in i + 1..jend {
                o[l.lookup[ki + l.keys[j] as usize] as usize] += ai * bv[j] + av[j] * bi;
            }
        }
    }
    out
}

fn add_into(mut a: PowerSeries, b: &PowerSeries) -> PowerSeries {
    let n = a.len().min(b.len());
    for i in 0..n {
        a.coeffs[i] += b.coeffs[i];
    }
    a
}

/// Inverse germ h of g (g∘h = id), for g_i(0) = 0 with invertible linear part.
pub fn invert_map(g: &[PowerSeries]) -> Result<Vec<PowerSeries>> {
    let n = g.len();
    if n == 0 {
        return Err(Error::Dimension("empty map".into()));
    }
    for (i, gi) in g.iter().enumerate() {
        if gi.nvars() != n {
            return Err(Error::Dimension(format!(
                "map component {i} has {} variables, expected {n}",
                gi.nvars()
            )));
        }
        if gi.coeffs[0] != ZERO {
            return Err(Error::NonZeroConstant { component: i, value: gi.coeffs[0].norm() });
        }
    }
    let d = g.iter().map(|s| s.max_degree()).min().unwrap_or(0);
    if d == 0 {
        return Err(Error::NonInvertible("degree-0 map has no linear part".into()));
    }
    let lin = DMatrix::from_fn(n, n, |i, j| g[i].linear_part()[j]);
    let scale = lin.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let inv = lin
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NonInvertible("singular linear part".into()))?;
    let cond = scale * inv.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::NonInvertible(format!("linear part condition ≈ {cond:e}")));
    }
    let ids: Vec<PowerSeries> = (0..n).map(|i| PowerSeries::variable(n, d, i)).collect();
    let mut h: Vec<PowerSeries> = (0..n)
        .map(|i| {
            let mut s = PowerSeries::zeros(n, d);
            for j in 0..n {
                s.coeffs[1 + j] = inv[(i, j)];
            }
            s
        })
        .collect();
    for k in 2..=d {
        let hk: Vec<PowerSeries> = h.iter().map(|s| s.truncate(k)).collect();
        let resid: Vec<PowerSeries> = g
            .iter()
            .zip(&ids)
            .map(|(gi, id)| {
                let c = gi.truncate(k).compose(&hk).expect("validated composition");
                id.truncate(k).try_sub(&c).expect("same variables")
            })
            .collect();
        for (i, hi) in h.iter_mut().enumerate() {
            for (j, rj) in resid.iter().enumerate() {
                let w = inv[(i, j)];
                if w == ZERO {
                    continue;
                }
                for idx in rj.degree_range(k) {
                    hi.coeffs[idx] += w * rj.coeffs[idx];
                }
            }
        }
    }
    Ok(h)
}

impl fmt::Debug for PowerSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PowerSeries(nvars={}, D={}; ", self.nvars(), self.max_degree())?;
        let mut first = true;
        for i in 0..self.len() {
            let c = self.coeffs[i];
            if c == ZERO {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.6e}{:+.6e}i){:?}", c.re, c.im, self.layout.exps(i))?;
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, ")")
    }
}

impl PartialEq for PowerSeries {
    fn eq(&self, other: &Self) -> bool {
        self.nvars() == other.nvars() && self.max_degree() == other.max_degree() && self.coeffs == other.coeffs
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $call:ident) => {
        impl $tr<&PowerSeries> for &PowerSeries {
            type Output = PowerSeries;
            fn $m(self, rhs: &PowerSeries) -> PowerSeries {
                self.$call(rhs).expect("series operands must share the variable count")
            }
        }
        impl $tr<PowerSeries> for PowerSeries {
            type Output = PowerSeries;
            fn $m(self, rhs: PowerSeries) -> PowerSeries {
                (&self).$call(&rhs).expect("series operands must share the variable count")
            }
        }
        impl $tr<&PowerSeries> for PowerSeries {
            type Output = PowerSeries;
            fn $m(self, rhs: &PowerSeries) -> PowerSeries {
                (&self).$call(rhs).expect("series operands must share the variable count")
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

impl Neg for &PowerSeries {
    type Output = PowerSeries;
    fn neg(self) -> PowerSeries {
        self.scale_real(-1.0)
    }
}

impl Neg for PowerSeries {
    type Output = PowerSeries;
    fn neg(self) -> PowerSeries {
        self.scale_real(-1.0)
    }
}

#[derive(Serialize, Deserialize)]
struct SeriesJson {
    nvars: usize,
    max_degree: usize,
    coeffs: Vec<(Vec<u32>, f64, f64)>,
}

impl Serialize for PowerSeries {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let coeffs = (0..self.len())
            .filter(|&i| self.coeffs[i] != ZERO)
            .map(|i| (self.exponents(i), self.coeffs[i].re, self.coeffs[i].im))
            .collect();
        SeriesJson { nvars: self.nvars(), max_degree: self.max_degree(), coeffs }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PowerSeries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = SeriesJson::deserialize(d)?;
        if j.nvars == 0 {
            return Err(D::Error::custom("nvars must be at least 1"));
        }
        let mut s = PowerSeries::zeros(j.nvars, j.max_degree);
        for (e, re, im) in j.coeffs {
            if e.len() != j.nvars {
                return Err(D::Error::custom("index length differs from nvars"));
            }
            match s.layout.index(&e) {
                Some(i) => s.coeffs[i] = Complex64::new(re, im),
                None => return Err(D::Error::custom("index order exceeds max_degree")),
            }
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn uni(cs: &[f64], d: usize) -> PowerSeries {
        let v: Vec<Complex64> = cs.iter().map(|&x| c(x)).collect();
        PowerSeries::from_univariate(&v, d)
    }

    #[test]
    fn graded_lex_order_within_degree() {
        let s = PowerSeries::zeros(2, 2);
        let all: Vec<Vec<u32>> = (0..s.len()).map(|i| s.exponents(i)).collect();
        assert_eq!(all, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn add_cancels_and_truncates() {
        let a = uni(&[1.0, 1.0], 3);
        let b = uni(&[1.0, -1.0], 3);
        assert_eq!((&a + &b).coeffs()[..2], [c(2.0), c(0.0)]);
        let x2 = uni(&[0.0, 0.0, 1.0], 2);
        let x3 = uni(&[0.0, 0.0, 0.0, 1.0], 3);
        let s = &x2 + &x3;
        assert_eq!(s.max_degree(), 2);
        assert_eq!(s.coeffs(), &[c(0.0), c(0.0), c(1.0)]);
    }

    #[test]
    fn mul_small_cases() {
        let p = uni(&[1.0, 1.0], 4) * uni(&[1.0, -1.0], 4);
        assert_eq!(p.coeffs(), &[c(1.0), c(0.0), c(-1.0), c(0.0), c(0.0)]);
        let x = PowerSeries::variable(1, 1, 0);
        assert_eq!((&x * &x).max_abs(), 0.0);
    }

    #[test]
    fn mismatched_variables_error() {
        let a = PowerSeries::zeros(1, 2);
        let b = PowerSeries::zeros(2, 2);
        assert!(matches!(a.try_add(&b), Err(Error::Dimension(_))));
        assert!(matches!(a.try_mul(&b), Err(Error::Dimension(_))));
    }

    #[test]
    fn compose_hand_expansion() {
        let f = uni(&[0.0, 0.0, 1.0], 4);
        let g = uni(&[0.0, 1.0, 1.0], 4);
        let h = f.compose(&[g]).unwrap();
        assert_eq!(h.coeffs(), &[c(0.0), c(0.0), c(1.0), c(2.0), c(1.0)]);
    }

    #[test]
    fn compose_rejects_constant_term() {
        let f = uni(&[0.0, 1.0], 3);
        let g = uni(&[0.5, 1.0], 3);
        assert!(matches!(f.compose(&[g]), Err(Error::NonZeroConstant { component: 0, .. })));
    }

    #[test]
    fn derivative_examples() {
        let x3 = uni(&[0.0, 0.0, 0.0, 1.0], 3);
        assert_eq!(x3.differentiate(0).coeffs(), &[c(0.0), c(0.0), c(3.0)]);
        let k = PowerSeries::constant(1, 3, c(5.0));
        assert_eq!(k.differentiate(0).max_abs(), 0.0);
        let xw2 = PowerSeries::monomial(2, 3, &[1, 2], c(1.0));
        let d = xw2.differentiate(1);
        assert_eq!(d.coeff(&[1, 1]), c(2.0));
        assert_eq!(d.max_degree(), 2);
    }

    #[test]
    fn invert_examples() {
        let g = uni(&[0.0, 2.0], 5);
        let h = invert_map(&[g]).unwrap();
        assert!((h[0].coeffs()[1] - c(0.5)).norm() < 1e-15);
        let g = uni(&[0.0, 1.0, 1.0], 4);
        let h = invert_map(&[g]).unwrap();
        let want = [0.0, 1.0, -1.0, 2.0, -5.0];
        for (k, w) in want.iter().enumerate() {
            assert!((h[0].coeffs()[k] - c(*w)).norm() < 1e-13, "k={k}");
        }
        let sing = uni(&[0.0, 0.0, 1.0], 4);
        assert!(matches!(invert_map(&[sing]), Err(Error::NonInvertible(_))));
    }

    #[test]
    fn exp_log_recip_roundtrip() {
        let x = PowerSeries::variable(2, 8, 0) + PowerSeries::variable(2, 8, 1).scale_real(0.5);
        let e = x.exp().unwrap();
        let back = (&e - &PowerSeries::one(2, 8)).log1p().unwrap();
        assert!(back.max_abs_diff(&x) < 1e-14);
        let r = e.recip().unwrap();
        let one = &e * &r;
        assert!(one.max_abs_diff(&PowerSeries::one(2, 8)) < 1e-14);
    }

    #[test]
    fn json_roundtrip() {
        let s = PowerSeries::from_terms(2, 3, [([1u32, 0], c(1.5)), ([0, 2], Complex64::new(0.0, -2.0))]).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"nvars\":2"));
        let back: PowerSeries = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn coefficient_extraction() {
        // x + 3 x v1 v2^2 + v2
        let s = PowerSeries::from_terms(3, 5, [([1u32, 0, 0], c(1.0)), ([1, 1, 2], c(3.0)), ([0, 0, 1], c(1.0))]).unwrap();
        let k = s.coefficient_of(&[1, 2], &[1, 2]);
        assert_eq!(k.nvars(), 1);
        assert_eq!(k.max_degree(), 2);
        assert_eq!(k.coeffs(), &[c(0.0), c(3.0), c(0.0)]);
    }
}
