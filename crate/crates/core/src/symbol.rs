//! Analytic symbols: finite sequences (a_k) of germs, their Cauchy product,
//! inverse, truncated summation and empirical class-parameter fits.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::PowerSeries;

/// (C, r, R, m) in ‖a_k‖_{C^j} ≤ C r^j R^k (j+k)!/(j+k+1)^m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolClassParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub m: f64,
}

impl SymbolClassParams {
    /// Right-hand side of the class inequality.
    pub fn bound(&self, j: usize, k: usize) -> f64 {
        (self.c.ln() + j as f64 * self.r.ln() + k as f64 * self.big_r.ln() + log_factorial_weight(j + k, self.m)).exp()
    }
}

/// log((n)!/(n+1)^m)
pub fn log_factorial_weight(n: usize, m: f64) -> f64 {
    ln_factorial(n) - m * ((n + 1) as f64).ln()
}

pub fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// Least-squares class fit with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFit {
    pub params: SymbolClassParams,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub points: usize,
    /// False when the data carry no information on the spatial rate r.
    pub r_constrained: bool,
    /// False when the data carry no information on the order rate R.
    pub order_constrained: bool,
    /// Coefficient of (j+k)² in an augmented fit; ≤ 0 up to noise means the
    /// normalized sequence grows at most geometrically.
    pub curvature: f64,
    pub geometric: bool,
}

/// Finite sequence (a_0, …, a_K) of germs sharing variables and degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSymbol {
    pub terms: Vec<PowerSeries>,
    pub params: Option<SymbolClassParams>,
}

impl AnalyticSymbol {
    pub fn new(terms: Vec<PowerSeries>) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::Dimension("symbol without terms".into()))?;
        let (n, d) = (first.nvars(), first.max_degree());
        if terms.iter().any(|t| t.nvars() != n) {
            return Err(Error::Dimension("symbol terms differ in variable count".into()));
        }
        let terms = terms.into_iter().map(|t| if t.max_degree() == d { t } else { t.truncate(d) }).collect();
        Ok(AnalyticSymbol { terms, params: None })
    }

    /// (1, 0, 0, …)
    pub fn unit(nvars: usize, degree: usize, order: usize) -> Self {
        let mut terms = vec![PowerSeries::zeros(nvars, degree); order + 1];
        terms[0] = PowerSeries::one(nvars, degree);
        AnalyticSymbol { terms, params: None }
    }

    /// Symbol with constant terms a_k = c_k.
    pub fn constants(nvars: usize, degree: usize, cs: &[Complex64]) -> Self {
        let terms = cs.iter().map(|&c| PowerSeries::constant(nvars, degree, c)).collect();
        AnalyticSymbol { terms, params: None }
    }

    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn nvars(&self) -> usize {
        self.terms[0].nvars()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.max_degree()).min().unwrap_or(0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.terms.iter().zip(&other.terms).fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }
}

/// (a*b)_k = Σ_{i≤k} a_i b_{k−i}
pub fn cauchy_product(a: &AnalyticSymbol, b: &AnalyticSymbol) -> Result<AnalyticSymbol> {
    if a.nvars() != b.nvars() {
        return Err(Error::Dimension("Cauchy product of symbols in different variables".into()));
    }
    let k = a.order().min(b.order());
    let d = a.degree().min(b.degree());
    let terms: Vec<PowerSeries> = (0..=k)
        .into_par_iter()
        .map(|n| {
            let mut acc = PowerSeries::zeros(a.nvars(), d);
            for i in 0..=n {
                acc = &acc + &(&a.terms[i] * &b.terms[n - i]);
            }
            acc
        })
        .collect();
    Ok(AnalyticSymbol { terms, params: None })
}

/// Inverse for the Cauchy product; a_0 must not vanish on the polydisk of
/// the given radius (checked on a sample grid).
pub fn symbol_inverse(a: &AnalyticSymbol, radius: f64) -> Result<AnalyticSymbol> {
    let a0 = &a.terms[0];
    let scale = a0.max_abs().max(1e-300);
    if a0.constant_term().norm() <= 1e-14 * scale {
        return Err(Error::NonInvertible("a_0 vanishes at the center".into()));
    }
    let min_grid = sample_min_abs(a0, radius);
    if min_grid <= 1e-12 * scale {
        return Err(Error::NonInvertible(format!("|a_0| reaches {min_grid:e} on the sample grid")));
    }
    let b0 = a0.recip()?;
    let d = a.degree();
    let mut terms = vec![b0.truncate(d)];
    for k in 1..=a.order() {
        let mut acc = PowerSeries::zeros(a.nvars(), d);
        for i in 1..=k {
            acc = &acc + &(&a.terms[i] * &terms[k - i]);
        }
        terms.push(-(&terms[0] * &acc));
    }
    Ok(AnalyticSymbol { terms, params: None })
}

fn sample_min_abs(s: &PowerSeries, radius: f64) -> f64 {
    let n = s.nvars();
    let ring: Vec<Complex64> = (0..4)
        .flat_map(|ri| {
            let r = radius * ri as f64 / 3.0;
            (0..8).map(move |t| Complex64::from_polar(r, t as f64 * std::f64::consts::PI / 4.0))
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; n];
    loop {
        let p: Vec<Complex64> = idx.iter().map(|&i| ring[i]).collect();
        best = best.min(s.evaluate(&p).norm());
        let mut v = 0;
        loop {
            if v == n {
                return best;
            }
            idx[v] += 1;
            if idx[v] < ring.len() {
                break;
            }
            idx[v] = 0;
            v += 1;
        }
    }
}

/// Default truncation rate c_R = e/(3R).
pub fn truncation_rate(big_r: f64) -> f64 {
    std::f64::consts::E / (3.0 * big_r)
}

/// Effective truncation index min(K, ⌊cN⌋).
pub fn truncation_index(order: usize, n: usize, c: f64) -> usize {
    order.min((c * n as f64).floor() as usize)
}

/// Σ_{k ≤ min(K, ⌊cN⌋)} N^{−k} a_k
pub fn summate(a: &AnalyticSymbol, n: usize, c: f64) -> Result<PowerSeries> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Parameter(format!("truncation rate must be positive, got {c}")));
    }
    if n == 0 {
        return Err(Error::Parameter("level N must be at least 1".into()));
    }
    let kmax = truncation_index(a.order(), n, c);
    let inv = 1.0 / n as f64;
    let mut acc = a.terms[kmax].clone();
    for k in (0..kmax).rev() {
        acc = &a.terms[k] + &acc.scale_real(inv);
    }
    Ok(acc)
}

/// Fit of log ‖a_k‖_{C^j} − log((j+k)!/(j+k+1)^m) against log C + j log r + k log R
/// over all stored (j, k) with nonzero norm.
pub fn fit_class_params(a: &AnalyticSymbol, m: f64) -> Result<ClassFit> {
    if a.order() < 2 {
        return Err(Error::InsufficientData("class fit needs K ≥ 2".into()));
    }
    let mut pts = Vec::new();
    for (k, t) in a.terms.iter().enumerate() {
        for j in 0..=t.max_degree() {
            pts.push((j, k, t.derivative_norm_at_zero(j)));
        }
    }
    fit_growth(&pts, m)
}

/// Growth fit on arbitrary (j, k, value) triples; zero values are skipped.
pub fn fit_growth(points: &[(usize, usize, f64)], m: f64) -> Result<ClassFit> {
    let scale = points.iter().fold(0.0f64, |acc, p| acc.max(p.2));
    let usable: Vec<(usize, usize, f64)> =
        points.iter().copied().filter(|p| p.2 > 1e-300 && p.2 > 1e-15 * scale && p.2.is_finite()).collect();
    if usable.len() < 2 {
        return Err(Error::InsufficientData(format!("{} usable points", usable.len())));
    }
    let distinct = |f: &dyn Fn(&(usize, usize, f64)) -> usize| {
        let mut v: Vec<usize> = usable.iter().map(f).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    let r_constrained = distinct(&|p| p.0) >= 2;
    let order_constrained = distinct(&|p| p.1) >= 2;
    let y: Vec<f64> = usable.iter().map(|&(j, k, v)| v.ln() - log_factorial_weight(j + k, m)).collect();
    let mut cols: Vec<Box<dyn Fn(usize, usize) -> f64>> = vec![Box::new(|_, _| 1.0)];
    if r_constrained {
        cols.push(Box::new(|j, _| j as f64));
    }
    if order_constrained {
        cols.push(Box::new(|_, k| k as f64));
    }
    let (beta, rms) = lstsq(&usable, &y, &cols);
    let mut it = beta.iter();
    let log_c = *it.next().unwrap_or(&0.0);
    let log_r = if r_constrained { *it.next().unwrap_or(&0.0) } else { 0.0 };
    let log_big_r = if order_constrained { *it.next().unwrap_or(&0.0) } else { 0.0 };

    let mut curvature = 0.0;
    let n_params = cols.len();
    if usable.len() >= n_params + 2 {
        cols.push(Box::new(|j, k| ((j + k) as f64).powi(2)));
        let (b2, _) = lstsq(&usable, &y, &cols);
        curvature = b2[b2.len() - 1];
    }
    let geometric = curvature <= 0.02;
    Ok(ClassFit {
        params: SymbolClassParams { c: log_c.exp(), r: log_r.exp(), big_r: log_big_r.exp(), m },
        residual: rms,
        points: usable.len(),
        r_constrained,
        order_constrained,
        curvature,
        geometric,
    })
}

/// Raises C of a fitted class so that every point is covered.
pub fn envelope(fit: &ClassFit, points: &[(usize, usize, f64)]) -> SymbolClassParams {
    let p = fit.params;
    let mut log_c: f64 = p.c.ln();
    for &(j, k, v) in points {
        if v <= 0.0 {
            continue;
        }
        let need = v.ln() - j as f64 * p.r.ln() - k as f64 * p.big_r.ln() - log_factorial_weight(j + k, p.m);
        log_c = log_c.max(need);
    }
    SymbolClassParams { c: log_c.exp() * (1.0 + 1e-12), ..p }
}

#[allow(clippy::type_complexity)]
fn lstsq(pts: &[(usize, usize, f64)], y: &[f64], cols: &[Box<dyn Fn(usize, usize) -> f64>]) -> (Vec<f64>, f64) {
    let a = DMatrix::from_fn(pts.len(), cols.len(), |i, c| cols[c](pts[i].0, pts[i].1));
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-12).unwrap_or_else(|_| DVector::zeros(cols.len()));
    let r = &a * &x - &b;
    let rms = (r.norm_squared() / pts.len() as f64).sqrt();
    (x.iter().copied().collect(), rms)
}

/// Coefficient list of a univariate germ as derivative values ∂^j u(0).
pub fn derivative_values(u: &PowerSeries) -> Vec<f64> {
    (0..=u.max_degree()).map(|j| u.derivative_norm_at_zero(j)).collect()
}
