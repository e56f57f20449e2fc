//! Model Kähler geometries with exactly known Bergman data: the Bargmann
//! plane and CP¹ in the stereographic chart at the north pole.
//!
//! Sections at level N are functions of the chart coordinate; the weight
//! e^{−2Nφ} lives in the inner product. Measures are normalized so that the
//! orthonormal basis is e_k = z^k/n_k with
//!   Bargmann: dμ = (N/π) dA, φ = |z|²/2,           n_k² = k!/N^k,
//!   CP¹:      dμ = (N+1)/π dA/(1+|z|²)², φ = ½log(1+|z|²), n_k² = 1/binom(N,k).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_refined, CompositeRule};
use crate::series::PowerSeries;
use crate::symbol::{ln_factorial, AnalyticSymbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bargmann,
    Cp1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Initial number of radial Gauss–Legendre panels (doubled on refinement).
    pub radial_nodes: usize,
    /// Angular trapezoid nodes; `None` picks 2(N + max basis degree) + 1.
    pub angular_nodes: Option<usize>,
    pub panel_order: usize,
    pub tolerance: f64,
    pub max_panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { radial_nodes: 16, angular_nodes: None, panel_order: 16, tolerance: 1e-11, max_panels: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KahlerModel {
    pub kind: ModelKind,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    /// Bargmann basis size override; default 8N + 64.
    #[serde(default)]
    pub bargmann_basis_cap: Option<usize>,
}

/// Basis coefficients of y ↦ S_N(y, x₀) (raw kernel, not unit-normalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherentStateVector {
    pub n: usize,
    pub center: Complex64,
    pub coeffs: Vec<Complex64>,
}

impl CoherentStateVector {
    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

impl KahlerModel {
    pub fn new(kind: ModelKind) -> Self {
        KahlerModel { kind, quadrature: QuadratureSpec::default(), bargmann_basis_cap: None }
    }

    pub fn bargmann() -> Self {
        Self::new(ModelKind::Bargmann)
    }

    pub fn cp1() -> Self {
        Self::new(ModelKind::Cp1)
    }

    /// Basis size at level N (for Bargmann the truncation cap).
    pub fn dim(&self, n: usize) -> usize {
        match self.kind {
            ModelKind::Cp1 => n + 1,
            ModelKind::Bargmann => self.bargmann_basis_cap.unwrap_or(8 * n + 64),
        }
    }

    /// Kähler potential φ as a series in (x, x̄).
    pub fn potential(&self, degree: usize) -> PowerSeries {
        let u = PowerSeries::monomial(2, degree, &[1, 1], Complex64::new(1.0, 0.0));
        match self.kind {
            ModelKind::Bargmann => u.scale_real(0.5),
            ModelKind::Cp1 => u.log1p().expect("no constant term").scale_real(0.5),
        }
    }

    /// φ̃(x, w̄); same coefficients as the potential, read in (x, w̄).
    pub fn polarization(&self, degree: usize) -> PowerSeries {
        self.potential(degree).polarize().expect("paired variables")
    }

    /// Polarized density ρ̃(y, w̄) of dμ relative to (N/π) dA.
    pub fn density(&self, degree: usize) -> PowerSeries {
        match self.kind {
            ModelKind::Bargmann => PowerSeries::one(2, degree),
            ModelKind::Cp1 => {
                let one_plus = PowerSeries::monomial(2, degree, &[1, 1], Complex64::new(1.0, 0.0)).add_constant(1.0.into());
                (&one_plus * &one_plus).recip().expect("unit constant term")
            }
        }
    }

    /// Bergman symbol a(x, w̄) with the finite-N prefactor folded in:
    /// Bargmann (1, 0, …), CP¹ (1, 1, 0, …) since (N+1)/N = 1 + 1/N.
    pub fn bergman_symbol(&self, degree: usize, order: usize) -> AnalyticSymbol {
        let mut a = AnalyticSymbol::unit(2, degree, order.max(1));
        if self.kind == ModelKind::Cp1 {
            a.terms[1] = PowerSeries::one(2, degree);
        }
        a
    }

    pub fn phi_value(&self, x: Complex64) -> f64 {
        match self.kind {
            ModelKind::Bargmann => 0.5 * x.norm_sqr(),
            ModelKind::Cp1 => 0.5 * x.norm_sqr().ln_1p(),
        }
    }

    /// φ̃(x, w̄) at a point (w̄ is the antiholomorphic slot value).
    pub fn phi_tilde_value(&self, x: Complex64, wbar: Complex64) -> Complex64 {
        match self.kind {
            ModelKind::Bargmann => 0.5 * x * wbar,
            ModelKind::Cp1 => 0.5 * (Complex64::new(1.0, 0.0) + x * wbar).ln(),
        }
    }

    /// Φ₁(x, y, w̄, z̄) = 2φ̃(x,w̄) − 2φ̃(y,w̄) + 2φ̃(y,z̄) − 2φ̃(x,z̄).
    pub fn phase_phi1_value(&self, x: Complex64, y: Complex64, wbar: Complex64, zbar: Complex64) -> Complex64 {
        2.0 * (self.phi_tilde_value(x, wbar) - self.phi_tilde_value(y, wbar) + self.phi_tilde_value(y, zbar)
            - self.phi_tilde_value(x, zbar))
    }

    /// Φ₁ as a series in (x, y, w̄, z̄).
    pub fn phase_phi1(&self, degree: usize) -> PowerSeries {
        let pt = self.polarization(degree);
        let emb = |a: usize, b: usize| pt.embed(4, &[a, b]);
        (emb(0, 2) - emb(1, 2) + emb(1, 3) - emb(0, 3)).scale_real(2.0)
    }

    /// Bergman kernel S_N(x, y) = Σ e_k(x) conj(e_k(y)) (untruncated closed form).
    pub fn kernel(&self, n: usize, x: Complex64, y: Complex64) -> Complex64 {
        let p = x * y.conj();
        match self.kind {
            ModelKind::Bargmann => (n as f64 * p).exp(),
            ModelKind::Cp1 => (Complex64::new(1.0, 0.0) + p).powu(n as u32),
        }
    }

    /// Kernel section Ψ^N(x, y) = exp(2Nφ̃(x, ȳ)) in the model trivialization.
    pub fn psi(&self, n: usize, x: Complex64, y: Complex64) -> Complex64 {
        (2.0 * n as f64 * self.phi_tilde_value(x, y.conj())).exp()
    }

    /// Fiber pairing of Ψ^N(x,y) with Ψ^N(y,z) over the point y.
    pub fn psi_pairing(&self, n: usize, x: Complex64, y: Complex64, z: Complex64) -> Complex64 {
        self.psi(n, x, y) * self.psi(n, y, z) * (-2.0 * n as f64 * self.phi_value(y)).exp()
    }

    pub fn basis_norm_sq(&self, n: usize, k: usize) -> f64 {
        self.ln_basis_norm_sq(n, k).exp()
    }

    pub fn ln_basis_norm_sq(&self, n: usize, k: usize) -> f64 {
        match self.kind {
            ModelKind::Bargmann => ln_factorial(k) - k as f64 * (n as f64).ln(),
            ModelKind::Cp1 => -ln_binomial(n, k),
        }
    }

    /// ‖z^k‖ for 0 ≤ k < dim by radial quadrature with panel doubling.
    pub fn basis_norms(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Parameter("level N must be at least 1".into()));
        }
        let q = &self.quadrature;
        (0..self.dim(n))
            .map(|k| {
                let (a, b) = self.radial_domain_for(n, k);
                let c = self.measure_constant(n);
                let f = |s: f64| c * (self.ln_monomial_weight(n, k, s)).exp();
                integrate_refined(a, b, f, q.radial_nodes, q.max_panels, 1e-11)
                    .map(|(v, _)| v.sqrt())
                    .ok_or_else(|| Error::Quadrature(format!("norm of z^{k} at N={n}")))
            })
            .collect()
    }

    /// log of |z|^{2k} e^{−2Nφ} in the radial variable.
    fn ln_monomial_weight(&self, n: usize, k: usize, s: f64) -> f64 {
        match self.kind {
            ModelKind::Bargmann => k as f64 * (s / n as f64).ln() - s,
            ModelKind::Cp1 => k as f64 * s.ln() + (n - k) as f64 * (-s).ln_1p(),
        }
    }

    fn radial_domain_for(&self, n: usize, k: usize) -> (f64, f64) {
        match self.kind {
            ModelKind::Cp1 => (0.0, 1.0),
            ModelKind::Bargmann => {
                let _ = n;
                (0.0, k as f64 + 12.0 * ((k + 1) as f64).sqrt() + 60.0)
            }
        }
    }

    /// Radial integration domain covering every basis function at level N.
    pub fn radial_domain(&self, n: usize) -> (f64, f64) {
        self.radial_domain_for(n, self.dim(n) - 1)
    }

    /// Normalizing constant C in ∫ G e^{−2Nφ} dμ = C ∫ ds ω(s) ⟨G⟩_θ.
    pub fn measure_constant(&self, n: usize) -> f64 {
        match self.kind {
            ModelKind::Bargmann => 1.0,
            ModelKind::Cp1 => (n + 1) as f64,
        }
    }

    /// Chart modulus |z| at radial variable s.
    pub fn radius_at(&self, n: usize, s: f64) -> f64 {
        match self.kind {
            ModelKind::Bargmann => (s / n as f64).sqrt(),
            ModelKind::Cp1 => (s / (1.0 - s)).sqrt(),
        }
    }

    /// log of |e_k|² e^{−2Nφ} in the radial variable, times the measure constant
    /// folded per basis pair: the matrix weight is C·exp((ℓ_j + ℓ_k)/2).
    pub fn ln_basis_density(&self, n: usize, k: usize, s: f64) -> f64 {
        match self.kind {
            ModelKind::Bargmann => k as f64 * s.ln() - s - ln_factorial(k),
            ModelKind::Cp1 => ln_binomial(n, k) + k as f64 * s.ln() + (n - k) as f64 * (-s).ln_1p(),
        }
    }

    pub fn coherent_state(&self, n: usize, x0: Complex64) -> CoherentStateVector {
        let dim = self.dim(n);
        let xb = x0.conj();
        let coeffs = (0..dim)
            .map(|k| {
                if xb == Complex64::new(0.0, 0.0) {
                    return if k == 0 { 1.0.into() } else { 0.0.into() };
                }
                let ln_mag = k as f64 * xb.norm().ln() - 0.5 * self.ln_basis_norm_sq(n, k);
                Complex64::from_polar(ln_mag.exp(), k as f64 * xb.arg())
            })
            .collect();
        CoherentStateVector { n, center: x0, coeffs }
    }

    /// Σ c_k e_k(x).
    pub fn eval_section(&self, n: usize, coeffs: &[Complex64], x: Complex64) -> Complex64 {
        if x == Complex64::new(0.0, 0.0) {
            return coeffs.first().copied().unwrap_or_default();
        }
        coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let ln_mag = k as f64 * x.norm().ln() - 0.5 * self.ln_basis_norm_sq(n, k);
                c * Complex64::from_polar(ln_mag.exp(), k as f64 * x.arg())
            })
            .sum()
    }

    /// Grid quadrature of the orthonormal basis: returns the Gram matrix
    /// G = VᴴV with V_{a,k} = e_k(z_a)·sqrt(w_a e^{−2Nφ(z_a)}).
    pub fn gram_matrix(&self, n: usize, panels: usize, angular: usize) -> nalgebra::DMatrix<Complex64> {
        let v = self.sample_matrix(n, panels, angular);
        v.adjoint() * &v
    }

    /// The matrix V above; P = VVᴴ is the discretized Bergman projector.
    pub fn sample_matrix(&self, n: usize, panels: usize, angular: usize) -> nalgebra::DMatrix<Complex64> {
        let dim = self.dim(n);
        let (a, b) = self.radial_domain(n);
        let rule = CompositeRule::new(a, b, panels, self.quadrature.panel_order);
        let c = self.measure_constant(n);
        let rows = rule.len() * angular;
        nalgebra::DMatrix::from_fn(rows, dim, |row, k| {
            let (i, l) = (row / angular, row % angular);
            let s = rule.nodes[i];
            let theta = 2.0 * PI * l as f64 / angular as f64;
            let w = c * rule.weights[i] / angular as f64;
            let ln = 0.5 * self.ln_basis_density(n, k, s);
            Complex64::from_polar(w.sqrt() * ln.exp(), k as f64 * theta)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potentials_are_normalized() {
        for m in [KahlerModel::bargmann(), KahlerModel::cp1()] {
            let p = m.potential(6);
            assert_eq!(p.coeff(&[1, 1]), Complex64::new(0.5, 0.0));
            assert_eq!(p.coeff(&[0, 0]), Complex64::new(0.0, 0.0));
            assert!(p.reality_defect() == 0.0);
        }
        let p = KahlerModel::cp1().potential(8);
        assert!((p.coeff(&[2, 2]) - Complex64::new(-0.25, 0.0)).norm() < 1e-16);
        assert!((p.coeff(&[3, 3]) - Complex64::new(1.0 / 6.0, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn bargmann_norm_ratios() {
        let m = KahlerModel::bargmann();
        let n = 7;
        let norms = m.basis_norms(n).unwrap();
        assert!((norms[0] - 1.0).abs() < 1e-10);
        for k in 1..40 {
            let ratio = norms[k] * norms[k] / (norms[k - 1] * norms[k - 1]);
            assert!((ratio - k as f64 / n as f64).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn cp1_norms_match_beta() {
        let m = KahlerModel::cp1();
        let norms = m.basis_norms(4).unwrap();
        let binom = [1.0, 4.0, 6.0, 4.0, 1.0];
        for k in 0..5 {
            assert!((norms[k] * norms[k] * binom[k] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn coherent_state_at_origin() {
        for m in [KahlerModel::bargmann(), KahlerModel::cp1()] {
            let c = m.coherent_state(12, Complex64::new(0.0, 0.0));
            assert_eq!(c.coeffs[0], Complex64::new(1.0, 0.0));
            assert!(c.coeffs[1..].iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn phi1_vanishes_on_diagonal() {
        let m = KahlerModel::cp1();
        let s = m.phase_phi1(6);
        let x = PowerSeries::variable(3, 6, 0);
        let w = PowerSeries::variable(3, 6, 1);
        let z = PowerSeries::variable(3, 6, 2);
        let diag = s.compose(&[x.clone(), x, w, z]).unwrap();
        assert!(diag.max_abs() < 1e-15);
    }
}
