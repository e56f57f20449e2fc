//! Hamilton–Jacobi phase at a non-degenerate minimum.
//!
//! Real coordinates are (Re x, Im x) with symplectic form dRe x ∧ dIm x, and
//! the Hessian convention is f ≈ ξᵀQξ (so f = |x|² has Q = I). The complex
//! phase φ is obtained from the stable branch z = ∂F(x) of {f̃₁ = 0}, where
//! f̃₁(x, z) = f̃(x, γ_x(z)) and γ_x inverts w̄ ↦ 2∂ₓφ̃(x, w̄).

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::KahlerModel;
use crate::series::{invert_map, PowerSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymplecticDiagonalization {
    pub q: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    /// (μ_1, μ_1^{-1}, …)
    pub d_factor: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Diagonal of the stable-subspace slope matrix A.
    pub a: Vec<f64>,
    /// Rotation angle of U₁ for d = 1 (first column (cos θ, sin θ)).
    pub theta: f64,
}

impl SymplecticDiagonalization {
    /// Complex slope σ of the stable subspace {z = σx} in the (x, z) chart.
    pub fn stable_slope(&self) -> Complex64 {
        -self.a[0] * Complex64::from_polar(1.0, -2.0 * self.theta)
    }

    /// ‖Q − Sᵀ diag(λ,λ) S‖_max
    pub fn reconstruction_error(&self) -> f64 {
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            self.lambda.iter().flat_map(|&l| [l, l]).collect(),
        ));
        let r = self.s.transpose() * lam * &self.s - &self.q;
        r.amax()
    }

    /// ‖S − U₁ D U₂‖_max
    pub fn factorization_error(&self) -> f64 {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.d_factor.clone()));
        (&self.u1 * d * &self.u2 - &self.s).amax()
    }
}

/// Symplectic diagonalization Q = Sᵀ diag(λ, λ) S, S = U₁ D U₂ (d = 1).
pub fn symplectic_diagonalize(q: &DMatrix<f64>) -> Result<SymplecticDiagonalization> {
    if q.nrows() != q.ncols() || q.nrows() % 2 != 0 {
        return Err(Error::Dimension("Hessian must be 2d×2d".into()));
    }
    if q.nrows() != 2 {
        return Err(Error::Dimension("only d = 1 is implemented".into()));
    }
    let asym = (q[(0, 1)] - q[(1, 0)]).abs();
    if asym > 1e-12 * q.amax().max(1.0) {
        return Err(Error::Parameter("Hessian is not symmetric".into()));
    }
    let (q00, q11, q01) = (q[(0, 0)], q[(1, 1)], 0.5 * (q[(0, 1)] + q[(1, 0)]));
    let theta = 0.5 * (2.0 * q01).atan2(q00 - q11);
    let (c, s) = (theta.cos(), theta.sin());
    let q1 = c * c * q00 + 2.0 * c * s * q01 + s * s * q11;
    let q2 = s * s * q00 - 2.0 * c * s * q01 + c * c * q11;
    let scale = q1.abs().max(q2.abs()).max(1e-300);
    if !(q1 > 1e-13 * scale && q2 > 1e-13 * scale) {
        return Err(Error::DegenerateWell(format!("Hessian eigenvalues {q1:e}, {q2:e}")));
    }
    let lambda = (q1 * q2).sqrt();
    let mu = (q1 / q2).powf(0.25);
    let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let d_factor = vec![mu, 1.0 / mu];
    let dm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d_factor.clone()));
    let smat = &rot * &dm * rot.transpose();
    let a = (mu - 1.0 / mu) / (mu + 1.0 / mu);
    Ok(SymplecticDiagonalization {
        q: q.clone(),
        s: smat,
        u1: rot.clone(),
        u2: rot.transpose(),
        d_factor,
        lambda: vec![lambda],
        a: vec![a],
        theta,
    })
}

/// Real Hessian Q (f ≈ ξᵀQξ) from the quadratic part of a germ in (x, x̄).
pub fn real_hessian(f: &PowerSeries) -> DMatrix<f64> {
    let alpha = f.coeff(&[2, 0]);
    let beta = f.coeff(&[1, 1]).re;
    DMatrix::from_row_slice(
        2,
        2,
        &[beta + 2.0 * alpha.re, -2.0 * alpha.im, -2.0 * alpha.im, beta - 2.0 * alpha.re],
    )
}

/// γ_x: the inverse of w̄ ↦ 2∂ₓφ̃(x, w̄), as a series in (x, z).
pub fn gamma_map(phi_tilde: &PowerSeries) -> Result<PowerSeries> {
    let g = phi_tilde.differentiate(0).scale_real(2.0);
    let d = g.max_degree();
    let x = PowerSeries::variable(2, d, 0);
    let inv = invert_map(&[x, g])?;
    Ok(inv[1].clone())
}

/// f̃₁(x, z) = f̃(x, γ_x(z)).
pub fn modified_hamiltonian(f_tilde: &PowerSeries, phi_tilde: &PowerSeries) -> Result<PowerSeries> {
    check_critical(f_tilde)?;
    let gamma = gamma_map(phi_tilde)?;
    let x = PowerSeries::variable(2, gamma.max_degree(), 0);
    f_tilde.compose(&[x, gamma])
}

fn check_critical(f: &PowerSeries) -> Result<()> {
    let scale = f.max_abs().max(1e-300);
    let worst = [f.coeff(&[0, 0]), f.coeff(&[1, 0]), f.coeff(&[0, 1])].iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if worst > 1e-12 * scale {
        return Err(Error::DegenerateWell(format!("f does not vanish to second order (|c| = {worst:e})")));
    }
    Ok(())
}

/// Generating function F of the stable branch z = F′(x) of {f̃₁ = 0}, with
/// quadratic part ½σx² where σ is the seed's stable slope.
pub fn stable_manifold_series(f1: &PowerSeries, seed: &SymplecticDiagonalization, degree: usize) -> Result<PowerSeries> {
    if seed.lambda.iter().any(|&l| l <= 0.0) {
        return Err(Error::DegenerateWell("non-positive frequency".into()));
    }
    let sigma = seed.stable_slope();
    let (c20, c11, c02) = (f1.coeff(&[2, 0]), f1.coeff(&[1, 1]), f1.coeff(&[0, 2]));
    let scale = c20.norm().max(c11.norm()).max(c02.norm());
    let quad = c20 + c11 * sigma + c02 * sigma * sigma;
    if quad.norm() > 1e-9 * scale {
        return Err(Error::Parameter(format!(
            "seed slope does not annihilate the quadratic part (|residual| = {:e})",
            quad.norm()
        )));
    }
    let delta = c11 + 2.0 * c02 * sigma;
    if delta.norm() < 1e-12 * scale {
        return Err(Error::Resonance { degree: 2, divisor: delta.norm() });
    }
    let cond = scale / delta.norm();
    if cond > 1e8 {
        warn!("stable-manifold recursion is ill-conditioned (≈{cond:e})");
    }
    let ds = degree.saturating_sub(1).min(f1.max_degree().saturating_sub(1));
    let mut slope = PowerSeries::zeros(1, ds);
    if ds >= 1 {
        slope.coeffs_mut()[1] = sigma;
    }
    for n in 2..=ds {
        let x = PowerSeries::variable(1, n + 1, 0);
        let e = f1.truncate(n + 1).compose(&[x, slope.with_degree(n + 1)])?;
        let en = e.coeffs()[n + 1];
        slope.coeffs_mut()[n] = -en / delta;
    }
    Ok(slope.integrate(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HjOptions {
    pub degree: usize,
    /// Working disk radius; `None` picks half the estimated convergence radius
    /// of φ and shrinks until admissible.
    pub radius: Option<f64>,
}

impl Default for HjOptions {
    fn default() -> Self {
        HjOptions { degree: 24, radius: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjSolution {
    pub phi: PowerSeries,
    pub z_c: PowerSeries,
    pub ybar_c: PowerSeries,
    pub f1: PowerSeries,
    pub f_tilde: PowerSeries,
    pub diag: SymplecticDiagonalization,
    pub sigma: Complex64,
    /// Admissibility margin max 2|φ(x)|/|x|² on the working disk.
    pub t: f64,
    pub radius: f64,
    /// (radius, margin) on successive halvings of the working disk.
    pub t_ladder: Vec<(f64, f64)>,
    pub convergence_radius: f64,
    pub hj_residual: f64,
    pub gradient_residual: f64,
    pub degree: usize,
    pub provenance: HjProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjProvenance {
    pub germ_sha256: String,
    pub model: crate::models::ModelKind,
}

/// Hex SHA-256 of the JSON rendering of a value.
pub fn json_hash<T: Serialize>(v: &T) -> String {
    let text = serde_json::to_vec(v).unwrap_or_default();
    Sha256::digest(&text).iter().map(|b| format!("{b:02x}")).collect()
}

/// Estimated convergence radius of a univariate series from the decay of its
/// upper-half coefficients; infinity for (numerically) polynomial data.
pub fn convergence_radius(s: &PowerSeries) -> f64 {
    let d = s.max_degree();
    let scale = s.max_abs().max(1e-300);
    let pts: Vec<(f64, f64)> = (d / 2..=d)
        .filter(|&j| j >= 2)
        .map(|j| (j as f64, s.coeffs()[j].norm()))
        .filter(|p| p.1 > 1e-14 * scale)
        .map(|(j, c)| (j, c.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if slope >= 0.0 {
        // no visible decay; fall back to a root test on the last coefficient
        let (j, lc) = pts[pts.len() - 1];
        return (-lc / j).exp().max(1e-3);
    }
    (-slope).exp()
}

/// max 2|φ(x)|/|x|² over a polar grid of the disk of the given radius.
pub fn admissibility_margin(phi: &PowerSeries, radius: f64) -> f64 {
    let mut t: f64 = 0.0;
    for ri in 1..=8 {
        let r = radius * ri as f64 / 8.0;
        for a in 0..32 {
            let x = Complex64::from_polar(r, a as f64 * std::f64::consts::PI / 16.0);
            t = t.max(2.0 * phi.evaluate(&[x]).norm() / (r * r));
        }
    }
    t
}

/// Full Hamilton–Jacobi solve for the germ f (in (x, x̄)) on a model.
pub fn assemble_hj_solution(model: &KahlerModel, f: &PowerSeries, opts: HjOptions) -> Result<HjSolution> {
    if f.nvars() != 2 {
        return Err(Error::Dimension("the germ must be a series in (x, x̄)".into()));
    }
    let d = opts.degree.min(f.max_degree());
    if d < 2 {
        return Err(Error::InsufficientDegree { order: 0, detail: "degree must be at least 2".into() });
    }
    let f_tilde = f.truncate(d).polarize()?;
    check_critical(&f_tilde)?;
    let diag = symplectic_diagonalize(&real_hessian(f))?;
    let phi_tilde = model.polarization(d + 1);
    let f1 = modified_hamiltonian(&f_tilde, &phi_tilde)?;
    let big_f = stable_manifold_series(&f1, &diag, d)?;
    let z_c = big_f.differentiate(0);
    let phi_tilde_x0 = phi_tilde.coefficient_of(&[1], &[0]).truncate(d);
    let phi = &big_f - &phi_tilde_x0.scale_real(2.0);
    let gamma = gamma_map(&phi_tilde)?;
    let x1 = PowerSeries::variable(1, z_c.max_degree(), 0);
    let ybar_c = gamma.compose(&[x1.clone(), z_c.clone()])?;

    let hj = f_tilde.compose(&[x1.clone(), ybar_c.clone()])?;
    let hj_residual = hj.max_abs();
    let dphit = phi_tilde.differentiate(0).scale_real(2.0);
    let at_c = dphit.compose(&[x1.clone(), ybar_c.clone()])?;
    let at_0 = dphit.coefficient_of(&[1], &[0]);
    let grad = &(&at_0 - &at_c) + &phi.differentiate(0);
    let gradient_residual = grad.max_abs();

    let rc = convergence_radius(&phi);
    let mut radius = opts.radius.unwrap_or_else(|| (0.5 * rc).min(1.0));
    let mut t = admissibility_margin(&phi, radius);
    if t >= 1.0 {
        if opts.radius.is_some() {
            let mut r = radius;
            while r > 1e-6 && admissibility_margin(&phi, r) >= 1.0 {
                r *= 0.5;
            }
            return Err(Error::ShrinkDomain { radius: r });
        }
        while t >= 1.0 && radius > 1e-6 {
            radius *= 0.5;
            t = admissibility_margin(&phi, radius);
        }
        if t >= 1.0 {
            return Err(Error::ShrinkDomain { radius: 0.0 });
        }
    }
    let t_ladder = (0..4)
        .map(|h| {
            let r = radius / 2f64.powi(h);
            (r, admissibility_margin(&phi, r))
        })
        .collect();
    Ok(HjSolution {
        sigma: diag.stable_slope(),
        provenance: HjProvenance { germ_sha256: json_hash(f), model: model.kind },
        phi,
        z_c,
        ybar_c,
        f1,
        f_tilde,
        diag,
        t,
        radius,
        t_ladder,
        convergence_radius: rc,
        hj_residual,
        gradient_residual,
        degree: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn identity_hessian() {
        let s = symplectic_diagonalize(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(s.lambda, vec![1.0]);
        assert!(s.a[0].abs() < 1e-15);
        assert!((&s.s - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn diagonal_hessian() {
        let (a, b) = (3.0, 0.5);
        let s = symplectic_diagonalize(&DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])).unwrap();
        assert!((s.lambda[0] - (a * b as f64).sqrt()).abs() < 1e-14);
        assert!((s.d_factor[0] - (a / b as f64).powf(0.25)).abs() < 1e-14);
        let want = (a.sqrt() - b.sqrt()) / (a.sqrt() + b.sqrt());
        assert!((s.a[0] - want).abs() < 1e-14);
        assert!(s.reconstruction_error() < 1e-12);
        assert!(s.factorization_error() < 1e-12);
    }

    #[test]
    fn indefinite_is_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(symplectic_diagonalize(&q), Err(Error::DegenerateWell(_))));
    }

    #[test]
    fn bargmann_gamma_is_identity() {
        let m = KahlerModel::bargmann();
        let g = gamma_map(&m.polarization(8)).unwrap();
        assert_eq!(g.coeff(&[0, 1]), c(1.0));
        assert!((&g - &PowerSeries::variable(2, g.max_degree(), 1)).max_abs() < 1e-15);
    }

    #[test]
    fn cp1_gamma_closed_form() {
        // 2∂ₓ ½log(1+xw̄) = w̄/(1+xw̄), inverse z/(1−xz) = Σ x^k z^{k+1}
        let g = gamma_map(&KahlerModel::cp1().polarization(10)).unwrap();
        for k in 0..4u32 {
            assert!((g.coeff(&[k, k + 1]) - c(1.0)).norm() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn isotropic_bargmann_phase_vanishes() {
        let f = PowerSeries::monomial(2, 12, &[1, 1], c(1.0));
        let hj = assemble_hj_solution(&KahlerModel::bargmann(), &f, HjOptions { degree: 12, radius: None }).unwrap();
        assert!(hj.phi.max_abs() < 1e-15);
        assert!(hj.ybar_c.max_abs() < 1e-15);
    }
}
