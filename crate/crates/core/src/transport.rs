//! Transport equations X·u = h·u + g for a holomorphic vector field X with
//! X(0) = 0 and diagonal linear part diag(λ_i), solved coefficient by
//! coefficient in increasing total degree.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::PowerSeries;
use crate::symbol::{fit_growth, ClassFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportProblem {
    /// Diagonal of the linearization of X.
    pub lambda: Vec<Complex64>,
    /// Components of X of degree ≥ 2.
    pub field: Vec<PowerSeries>,
    pub h: PowerSeries,
    pub g: PowerSeries,
    pub k_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSolution {
    pub u: PowerSeries,
    pub residual: f64,
    pub growth_fit: Option<GrowthReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// Fit against (j+k)!/(j+k+1)^m; `None` when fewer than two nonzero orders exist.
    pub fit: Option<ClassFit>,
    /// Fitted spatial rate of the factorial-normalized derivative norms.
    pub r: f64,
    /// Fitted rate of the raw derivative norms Σ_{|μ|=j}|∂^μ u(0)|.
    pub r_geometric: f64,
    pub geometric: bool,
}

impl TransportProblem {
    /// Splits a full vector field X (components vanishing at 0) into its
    /// diagonal linear part and higher-order remainder.
    pub fn from_vector_field(x: &[PowerSeries], h: PowerSeries, g: PowerSeries, k_offset: usize) -> Result<Self> {
        let d = x.len();
        if d == 0 || x.iter().any(|c| c.nvars() != d) || h.nvars() != d || g.nvars() != d {
            return Err(Error::Dimension("vector field, h and g must share the dimension".into()));
        }
        let mut lambda = Vec::with_capacity(d);
        let mut field = Vec::with_capacity(d);
        for (i, xi) in x.iter().enumerate() {
            let scale = xi.max_abs().max(1e-300);
            if xi.constant_term().norm() > 1e-13 * scale {
                return Err(Error::Parameter(format!("X_{i} does not vanish at 0")));
            }
            let lin = xi.linear_part();
            for (j, c) in lin.iter().enumerate() {
                if j != i && c.norm() > 1e-12 * scale {
                    return Err(Error::Parameter("linear part of X must be diagonal".into()));
                }
            }
            lambda.push(lin[i]);
            let mut hi = xi.clone();
            for idx in 0..=d.min(hi.len() - 1) {
                hi.coeffs_mut()[idx] = Complex64::new(0.0, 0.0);
            }
            field.push(hi);
        }
        let p = TransportProblem { lambda, field, h, g, k_offset };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.field.len() != d || self.h.nvars() != d || self.g.nvars() != d {
            return Err(Error::Dimension("transport data must share the dimension".into()));
        }
        if self.lambda.iter().any(|l| !(l.re > 0.0)) {
            return Err(Error::Parameter("linearized frequencies must have positive real part".into()));
        }
        let sc = self.h.max_abs().max(1e-300);
        if self.h.constant_term().norm() > 1e-12 * sc {
            return Err(Error::Parameter("h(0) must vanish".into()));
        }
        let sc = self.g.max_abs().max(1e-300);
        if self.g.constant_term().norm() > 1e-12 * sc {
            return Err(Error::Parameter("g(0) must vanish".into()));
        }
        Ok(())
    }

    /// X·u = Σ X_i ∂_i u, truncated at degree D−1.
    pub fn apply_field(&self, u: &PowerSeries) -> PowerSeries {
        let d = self.dim();
        let mut out = PowerSeries::zeros(d, u.max_degree().saturating_sub(1));
        for i in 0..d {
            let du = u.differentiate(i);
            let lin = PowerSeries::variable(d, du.max_degree(), i).scale(self.lambda[i]);
            let xi = &lin + &self.field[i];
            out = &out + &(&xi * &du);
        }
        out
    }

    pub fn residual_series(&self, u: &PowerSeries) -> PowerSeries {
        let xu = self.apply_field(u);
        &(&xu - &(&self.h * u)) - &self.g
    }
}

/// Solves X·u = h·u + g with u(0) = 0 up to degree D.
pub fn solve_transport(p: &TransportProblem, degree: usize) -> Result<TransportSolution> {
    p.validate()?;
    let d = p.dim();
    let top = p.field.iter().map(|f| f.max_degree()).fold(degree.min(p.h.max_degree()).min(p.g.max_degree()), usize::min);
    let mut u = PowerSeries::zeros(d, top);
    let scale = p.lambda.iter().fold(0.0f64, |m, l| m.max(l.norm()));
    for j in 1..=top {
        let hu = &p.h.truncate(j) * &u.truncate(j);
        let mut drift = PowerSeries::zeros(d, j);
        if j >= 2 {
            for i in 0..d {
                let du = u.truncate(j).differentiate(i).with_degree(j);
                drift = &drift + &(&p.field[i].truncate(j) * &du);
            }
        }
        for idx in u.degree_range(j) {
            let e = u.exponents(idx);
            let div: Complex64 = e.iter().zip(&p.lambda).map(|(&m, &l)| l * m as f64).sum();
            if div.norm() <= 1e-14 * scale * j as f64 {
                return Err(Error::Resonance { degree: j, divisor: div.norm() });
            }
            let rhs = p.g.coeffs()[idx] + hu.coeffs()[idx] - drift.coeffs()[idx];
            u.coeffs_mut()[idx] = rhs / div;
        }
    }
    let residual = p.residual_series(&u).max_abs();
    Ok(TransportSolution { u, residual, growth_fit: None })
}

/// Fitted growth of Σ_{|μ|=j}|∂^μ u(0)| against C r^j (j+k)!/(j+k+1)^m.
pub fn growth_check(sol: &TransportSolution, k_offset: usize, m: f64) -> Result<GrowthReport> {
    let u = &sol.u;
    if u.max_degree() < 6 {
        return Err(Error::InsufficientData("growth check needs D ≥ 6".into()));
    }
    let pts: Vec<(usize, usize, f64)> =
        (1..=u.max_degree()).map(|j| (j, k_offset, u.derivative_norm_at_zero(j))).collect();
    let fit = fit_growth(&pts, m).ok();
    let r = fit.as_ref().map_or(0.0, |f| f.params.r);
    let geometric = fit.as_ref().is_none_or(|f| f.geometric);
    let r_geometric = geometric_rate(&pts);
    Ok(GrowthReport { fit, r, r_geometric, geometric })
}

fn geometric_rate(pts: &[(usize, usize, f64)]) -> f64 {
    let scale = pts.iter().fold(0.0f64, |m, p| m.max(p.2));
    let use_: Vec<(f64, f64)> =
        pts.iter().filter(|p| p.2 > 1e-15 * scale && p.2 > 0.0).map(|p| (p.0 as f64, p.2.ln())).collect();
    if use_.len() < 2 {
        return 0.0;
    }
    let n = use_.len() as f64;
    let mx = use_.iter().map(|p| p.0).sum::<f64>() / n;
    let my = use_.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = use_.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = use_.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx).exp()
}
