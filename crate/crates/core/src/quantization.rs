//! Toeplitz matrices T_N(f) in the orthonormal monomial basis, spectra,
//! and embedding of WKB quasimodes.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::models::{KahlerModel, ModelKind};
use crate::quadrature::CompositeRule;
use crate::wkb::Quasimode;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A real symbol on a model, evaluated in the chart coordinate.
pub trait Evaluable: Sync {
    fn eval(&self, z: Complex64) -> f64;

    /// Σ c z^p z̄^q when the symbol is a polynomial in the chart.
    fn polynomial_terms(&self) -> Option<Vec<(u32, u32, Complex64)>> {
        None
    }
}

/// Wraps a closure as a symbol.
pub struct FnSymbol<F>(pub F);

impl<F: Fn(Complex64) -> f64 + Sync> Evaluable for FnSymbol<F> {
    fn eval(&self, z: Complex64) -> f64 {
        (self.0)(z)
    }
}

/// A chart polynomial Σ c z^p z̄^q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSymbol {
    pub terms: Vec<(u32, u32, Complex64)>,
}

impl Evaluable for PolynomialSymbol {
    fn eval(&self, z: Complex64) -> f64 {
        self.terms.iter().map(|&(p, q, c)| c * z.powu(p) * z.conj().powu(q)).sum::<Complex64>().re
    }

    fn polynomial_terms(&self) -> Option<Vec<(u32, u32, Complex64)>> {
        Some(self.terms.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToeplitzMatrix {
    pub n: usize,
    pub dim: usize,
    pub entries: DMatrix<Complex64>,
    /// Largest |j − k| carrying nonzero entries.
    pub bandwidth: usize,
    /// Radial panels (0 for the exact polynomial path).
    pub panels: usize,
    pub angular_nodes: usize,
    pub hermitian_defect: f64,
}

/// T_N(f) over the model's orthonormal monomials.
pub fn build_toeplitz_matrix(model: &KahlerModel, f: &dyn Evaluable, n: usize) -> Result<ToeplitzMatrix> {
    if n == 0 {
        return Err(Error::Parameter("level N must be at least 1".into()));
    }
    if model.kind == ModelKind::Bargmann {
        if let Some(terms) = f.polynomial_terms() {
            return Ok(anti_wick_bargmann(model, &terms, n));
        }
    }
    quadrature_matrix(model, f, n)
}

/// Exact action z^p z̄^q: e_k ↦ N^{−q}(k+p)!/(k+p−q)!·n_{k+p−q}/n_k·e_{k+p−q}.
fn anti_wick_bargmann(model: &KahlerModel, terms: &[(u32, u32, Complex64)], n: usize) -> ToeplitzMatrix {
    let dim = model.dim(n);
    let ln_n = (n as f64).ln();
    let mut m = DMatrix::from_element(dim, dim, ZERO);
    let mut bandwidth = 0usize;
    for &(p, q, c) in terms {
        if c == ZERO {
            continue;
        }
        bandwidth = bandwidth.max(p.abs_diff(q) as usize);
        for k in 0..dim {
            let j = k as i64 + p as i64 - q as i64;
            if j < 0 || j as usize >= dim {
                continue;
            }
            let j = j as usize;
            // n_j²/n_k² = (j!/k!)·N^{k−j}
            let ln = ln_factorial_ratio(k + p as usize, j) - q as f64 * ln_n
                + 0.5 * (ln_factorial_ratio(j, k) - (j as f64 - k as f64) * ln_n);
            m[(j, k)] += c * ln.exp();
        }
    }
    let hermitian_defect = hermitian_defect(&m);
    let entries = symmetrize(m);
    ToeplitzMatrix { n, dim, entries, bandwidth, panels: 0, angular_nodes: 0, hermitian_defect }
}

/// ln(a!/b!) as a short sum, exact to rounding for nearby a, b.
fn ln_factorial_ratio(a: usize, b: usize) -> f64 {
    if a >= b {
        (b + 1..=a).map(|i| (i as f64).ln()).sum()
    } else {
        -ln_factorial_ratio(b, a)
    }
}

fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let scale = m.iter().fold(0.0f64, |a, c| a.max(c.norm())).max(1e-300);
    let mut worst = 0.0f64;
    for j in 0..m.nrows() {
        for k in 0..=j {
            worst = worst.max((m[(j, k)] - m[(k, j)].conj()).norm());
        }
    }
    worst / scale
}

fn symmetrize(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = m.clone();
    for j in 0..m.nrows() {
        for k in 0..j {
            let v = 0.5 * (m[(j, k)] + m[(k, j)].conj());
            out[(j, k)] = v;
            out[(k, j)] = v.conj();
        }
        out[(j, j)] = Complex64::new(m[(j, j)].re, 0.0);
    }
    out
}

/// Angular Fourier modes F_m(s) = ⟨f(r(s)e^{iθ}) e^{−imθ}⟩_θ, m = 0..=top.
fn angular_modes(model: &KahlerModel, f: &dyn Evaluable, n: usize, s: f64, fft: &Arc<dyn Fft<f64>>, top: usize) -> Vec<Complex64> {
    let n_theta = fft.len();
    let r = model.radius_at(n, s);
    let mut buf: Vec<Complex64> = (0..n_theta)
        .map(|l| {
            let z = Complex64::from_polar(r, 2.0 * PI * l as f64 / n_theta as f64);
            Complex64::new(f.eval(z), 0.0)
        })
        .collect();
    fft.process(&mut buf);
    let inv = 1.0 / n_theta as f64;
    buf.iter().take(top + 1).map(|c| c * inv).collect()
}

/// Angular resolution and bandwidth from probe radii: doubles n_θ until the
/// upper half of the modes is negligible.
fn angular_resolution(model: &KahlerModel, f: &dyn Evaluable, n: usize, a: f64, b: f64) -> (usize, usize) {
    let dim = model.dim(n);
    let cap = model.quadrature.angular_nodes.unwrap_or(2 * (n + dim) + 1);
    let probes: Vec<f64> = (1..32).map(|i| a + (b - a) * i as f64 / 32.0).collect();
    let mut n_theta = 32usize.min(cap);
    loop {
        let fft = FftPlanner::new().plan_fft_forward(n_theta);
        let modes: Vec<Vec<Complex64>> =
            probes.iter().map(|&s| angular_modes(model, f, n, s, &fft, n_theta / 2)).collect();
        let scale = modes.iter().flatten().fold(0.0f64, |m, c| m.max(c.norm())).max(1e-300);
        let tail = modes.iter().flat_map(|v| v[n_theta / 4..].iter()).fold(0.0f64, |m, c| m.max(c.norm()));
        if tail <= 1e-14 * scale || n_theta >= cap {
            let mut band = 0;
            for v in &modes {
                for (m, c) in v.iter().enumerate() {
                    if c.norm() > 1e-15 * scale {
                        band = band.max(m);
                    }
                }
            }
            if n_theta >= cap && tail > 1e-14 * scale {
                warn!("angular resolution capped at {n_theta} nodes (tail {:e})", tail / scale);
            }
            return (n_theta, band.min(dim - 1));
        }
        n_theta = (2 * n_theta).min(cap);
    }
}

fn banded_entries(model: &KahlerModel, f: &dyn Evaluable, n: usize, panels: usize, n_theta: usize, band: usize) -> Vec<Vec<Complex64>> {
    let dim = model.dim(n);
    let (a, b) = model.radial_domain(n);
    let rule = CompositeRule::new(a, b, panels, model.quadrature.panel_order);
    let c = model.measure_constant(n);
    let fft = FftPlanner::new().plan_fft_forward(n_theta);
    let nodes: Vec<(Vec<Complex64>, Vec<f64>)> = rule
        .nodes
        .par_iter()
        .zip(rule.weights.par_iter())
        .map(|(&s, &w)| {
            let modes: Vec<Complex64> = angular_modes(model, f, n, s, &fft, band).into_iter().map(|m| m * (c * w)).collect();
            let q: Vec<f64> = (0..dim).map(|k| (0.5 * model.ln_basis_density(n, k, s)).exp()).collect();
            (modes, q)
        })
        .collect();
    // rows[j][m] = M_{j, j−m}
    (0..dim)
        .into_par_iter()
        .map(|j| {
            (0..=band.min(j))
                .map(|m| {
                    let k = j - m;
                    nodes.iter().fold(ZERO, |acc, (modes, q)| acc + modes[m] * (q[j] * q[k]))
                })
                .collect()
        })
        .collect()
}

fn quadrature_matrix(model: &KahlerModel, f: &dyn Evaluable, n: usize) -> Result<ToeplitzMatrix> {
    let spec = &model.quadrature;
    let dim = model.dim(n);
    let (a, b) = model.radial_domain(n);
    let (n_theta, band) = angular_resolution(model, f, n, a, b);
    let mut panels = spec.radial_nodes.max(1);
    let mut prev = banded_entries(model, f, n, panels, n_theta, band);
    loop {
        if panels * 2 > spec.max_panels {
            return Err(Error::Quadrature(format!(
                "Toeplitz matrix at N={n} did not converge within {} panels",
                spec.max_panels
            )));
        }
        panels *= 2;
        let cur = banded_entries(model, f, n, panels, n_theta, band);
        let scale = cur.iter().flatten().fold(0.0f64, |m, c| m.max(c.norm())).max(1e-300);
        let diff = cur.iter().flatten().zip(prev.iter().flatten()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
        if diff <= spec.tolerance * scale {
            let mut m = DMatrix::from_element(dim, dim, ZERO);
            for (j, row) in cur.iter().enumerate() {
                for (d, &v) in row.iter().enumerate() {
                    let k = j - d;
                    if d == 0 {
                        m[(j, j)] = Complex64::new(v.re, 0.0);
                    } else {
                        m[(j, k)] = v;
                        m[(k, j)] = v.conj();
                    }
                }
            }
            return Ok(ToeplitzMatrix { n, dim, entries: m, bandwidth: band, panels, angular_nodes: n_theta, hermitian_defect: 0.0 });
        }
        prev = cur;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
    pub gap: Option<f64>,
    /// ‖Tv − λv‖ per returned pair.
    pub residuals: Vec<f64>,
}

impl SpectralResult {
    pub fn ground(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// The k smallest eigenpairs.
pub fn diagonalize(t: &ToeplitzMatrix, k: usize) -> Result<SpectralResult> {
    let dim = t.dim;
    if k == 0 || k > dim {
        return Err(Error::Parameter(format!("requested {k} eigenpairs of a {dim}-dimensional matrix")));
    }
    let m = &t.entries;
    // eigenproblems of the decoupled index classes are solved separately
    let blocks = coupled_blocks(m);
    // per block: eigenvalues and eigenvectors in block coordinates
    let solved: Vec<(Vec<f64>, DMatrix<Complex64>)> = blocks
        .par_iter()
        .map(|b| {
            if b.len() == 1 {
                return (vec![m[(b[0], b[0])].re], DMatrix::identity(1, 1));
            }
            let eig = SymmetricEigen::new(DMatrix::from_fn(b.len(), b.len(), |i, j| m[(b[i], b[j])]));
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        })
        .collect();
    let mut order: Vec<(f64, usize, usize)> =
        solved.iter().enumerate().flat_map(|(bi, (ev, _))| ev.iter().enumerate().map(move |(c, &l)| (l, bi, c))).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (vals, vecs): (Vec<f64>, Vec<Vec<Complex64>>) = order
        .into_iter()
        .take(k)
        .map(|(l, bi, c)| {
            let mut v = vec![ZERO; dim];
            for (r, &i) in blocks[bi].iter().enumerate() {
                v[i] = solved[bi].1[(r, c)];
            }
            (l, v)
        })
        .unzip();
    let residuals = vals.iter().zip(&vecs).map(|(&l, v)| residual_norm(t, v, l)).collect::<Result<Vec<_>>>()?;
    let gap = if vals.len() >= 2 { Some(vals[1] - vals[0]) } else { None };
    Ok(SpectralResult { eigenvalues: vals, vectors: vecs, gap, residuals })
}

/// Connected components of the nonzero pattern, each sorted ascending.
fn coupled_blocks(m: &DMatrix<Complex64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for j in 0..n {
        for i in 0..j {
            if m[(i, j)] != ZERO || m[(j, i)] != ZERO {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..n {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Full spectrum by cyclic complex Jacobi rotations; independent of LAPACK-style
/// tridiagonalization and used as a cross-check.
pub fn jacobi_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension("square matrix required".into()));
    }
    let mut a = m.clone();
    let norm = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].norm_sqr()).sum();
        if off.sqrt() <= 1e-15 * norm {
            let mut v: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
            v.sort_by(f64::total_cmp);
            return Ok(v);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let g = apq.norm();
                if g <= 1e-300 {
                    continue;
                }
                let e = apq / g;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * g);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let (vpp, vpq, vqp, vqq) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0), -s * e.conj(), c * e.conj());
                for r in 0..n {
                    let (x, y) = (a[(r, p)], a[(r, q)]);
                    a[(r, p)] = x * vpp + y * vqp;
                    a[(r, q)] = x * vpq + y * vqq;
                }
                for col in 0..n {
                    let (x, y) = (a[(p, col)], a[(q, col)]);
                    a[(p, col)] = vpp.conj() * x + vqp.conj() * y;
                    a[(q, col)] = vpq.conj() * x + vqq.conj() * y;
                }
            }
        }
    }
    Err(Error::Solver("Jacobi sweeps did not converge".into()))
}

/// ‖Tv − λv‖ / ‖v‖
pub fn residual_norm(t: &ToeplitzMatrix, v: &[Complex64], lambda: f64) -> Result<f64> {
    if v.len() != t.dim {
        return Err(Error::Dimension(format!("vector of length {} for a {}-dimensional matrix", v.len(), t.dim)));
    }
    let x = DVector::from_column_slice(v);
    let nv = x.norm();
    if nv == 0.0 {
        return Err(Error::Parameter("residual of the zero vector".into()));
    }
    Ok((&t.entries * &x - x.scale(lambda)).norm() / nv)
}

pub fn rayleigh_quotient(t: &ToeplitzMatrix, v: &[Complex64]) -> f64 {
    let x = DVector::from_column_slice(v);
    (x.adjoint() * &t.entries * &x)[(0, 0)].re / x.norm_squared()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddedQuasimode {
    pub n: usize,
    pub coeffs: Vec<Complex64>,
    pub lambda_n: f64,
    pub radius: f64,
    /// Share of the truncated L² mass lying in the shell 0.8r < |x| < r.
    /// Small values mean the cut-off sits where the quasimode has already decayed.
    pub tail_mass: f64,
}

/// Taylor coefficients of exp(g) for a polynomial g with g(0) = 0, via k E_k = Σ j g_j E_{k−j}.
fn exp_poly(g: &[Complex64], len: usize) -> Vec<Complex64> {
    let mut e = vec![ZERO; len];
    e[0] = Complex64::new(1.0, 0.0);
    for k in 1..len {
        let mut acc = ZERO;
        for j in 1..g.len().min(k + 1) {
            acc += g[j] * j as f64 * e[k - j];
        }
        e[k] = acc / k as f64;
    }
    e
}

/// v_k = ⟨e_k, 1_disk·U⟩ for U = e^{Nφ}Σ N^{−k}u_k, using that on a centered
/// disk only the k-th Taylor coefficient c_k of U pairs with e_k:
/// v_k = c_k n_k P_k, with P_k the share of ‖z^k‖² inside the disk.
pub fn embed_quasimode(model: &KahlerModel, q: &Quasimode) -> Result<EmbeddedQuasimode> {
    let n = q.n;
    let dim = model.dim(n);
    let sq = (n as f64).sqrt();
    // work in t = √N x so that coefficients stay O(1)
    let phi: Vec<Complex64> = q.phi.coeffs().iter().enumerate().map(|(j, &c)| c * (n as f64) * sq.powi(-(j as i32))).collect();
    if phi.first().is_some_and(|c| c.norm() > 1e-12) {
        return Err(Error::Parameter("quasimode phase must vanish at the origin".into()));
    }
    let mut g = phi;
    g[0] = ZERO;
    let e = exp_poly(&g, dim);
    let amp: Vec<Complex64> = q.amplitude.coeffs().iter().enumerate().map(|(j, &c)| c * sq.powi(-(j as i32))).collect();
    let mut c = vec![ZERO; dim];
    for (k, ck) in c.iter_mut().enumerate() {
        for (j, a) in amp.iter().enumerate().take(k + 1) {
            *ck += a * e[k - j];
        }
    }
    let r2 = q.radius * q.radius;
    let share_at = |k: usize, r2: f64| match model.kind {
        ModelKind::Bargmann => gamma_lr(k as f64 + 1.0, n as f64 * r2),
        ModelKind::Cp1 => beta_reg(k as f64 + 1.0, (n - k) as f64 + 1.0, r2 / (1.0 + r2)),
    };
    let mut inside = 0.0;
    let mut shell = 0.0;
    let coeffs: Vec<Complex64> = c
        .iter()
        .enumerate()
        .map(|(k, &ck)| {
            if ck == ZERO {
                return ZERO;
            }
            let scale = (0.5 * (k as f64 * (n as f64).ln() + model.ln_basis_norm_sq(n, k)) + ck.norm().ln()).exp();
            let share = share_at(k, r2);
            inside += scale * scale * share;
            shell += scale * scale * (share - share_at(k, 0.64 * r2)).max(0.0);
            Complex64::from_polar(scale * share, ck.arg())
        })
        .collect();
    let tail_mass = shell / inside.max(1e-300);
    if tail_mass > 1e-10 {
        warn!("quasimode at N={n}: {tail_mass:e} of the mass sits near the edge of the disk of radius {}", q.radius);
    }
    Ok(EmbeddedQuasimode { n, coeffs, lambda_n: q.lambda_n, radius: q.radius, tail_mass })
}
