//! WKB expansion of the ground state of a Toeplitz operator with a
//! nondegenerate minimum at the chart origin.
//!
//! Stationary phase is carried out in a Morse frame: for fixed x the phase
//! Φ(x; y, w̄) vanishes on y = x, so Φ = −v₁·G(x, v₁, w̄) with v₁ = y − x,
//! and setting v₂ = G turns it into −v₁v₂ exactly. The formal integral
//! ∫ e^{−N v₁v₂} A J (N/π) then has order-n term n!·[v₁ⁿv₂ⁿ](A J).

use log::{debug, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamilton_jacobi::{assemble_hj_solution, HjOptions, HjSolution};
use crate::models::KahlerModel;
use crate::series::{factorial, invert_map, PowerSeries};
use crate::symbol::{
    cauchy_product, envelope, fit_growth, symbol_inverse, truncation_index, truncation_rate, AnalyticSymbol, ClassFit,
    SymbolClassParams,
};
use crate::transport::{solve_transport, TransportProblem};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryPhaseContext {
    /// Φ(x; x + v₁, w̄) in (x, v₁, w̄).
    pub phase: PowerSeries,
    /// ȳ_c(x), the w̄-coordinate of the critical point.
    pub critical: PowerSeries,
    /// (Φ_yy, Φ_yw̄, Φ_w̄w̄) at the critical point, as series in x.
    pub hessian: [PowerSeries; 3],
    /// w̄ = W(x, v₁, v₂) in the Morse frame.
    pub frame: PowerSeries,
    /// J = ∂W/∂v₂.
    pub jacobian: PowerSeries,
    /// Highest order n whose coefficient is still supported by the degree.
    pub n_max: usize,
    /// max |Φ(x; x, w̄)|; zero up to rounding.
    pub diagonal_defect: f64,
}

impl StationaryPhaseContext {
    /// Builds the frame for the holomorphic phase φ(x) (one variable) at
    /// internal degree `degree`; frame quantities end up at `degree − 2`.
    pub fn new(model: &KahlerModel, phi: &PowerSeries, degree: usize) -> Result<Self> {
        if phi.nvars() != 1 {
            return Err(Error::Dimension("the phase φ must be a series in x".into()));
        }
        if degree < 4 {
            return Err(Error::InsufficientDegree { order: 0, detail: "stationary phase needs degree ≥ 4".into() });
        }
        let e = degree.min(phi.max_degree());
        let pt = model.polarization(e);
        let x = PowerSeries::variable(3, e, 0);
        let v1 = PowerSeries::variable(3, e, 1);
        let wb = PowerSeries::variable(3, e, 2);
        let y = &x + &v1;
        let phi = phi.truncate(e);
        let pt0 = pt.coefficient_of(&[1], &[0]).truncate(e);
        let shifted = |s: &PowerSeries| s.compose(std::slice::from_ref(&y));
        let big_phi = &(&(&pt.embed(3, &[0, 2]) - &pt.compose(&[y.clone(), wb.clone()])?).scale_real(2.0)
            + &(&shifted(&phi)? - &phi.embed(3, &[0])))
            + &(&shifted(&pt0)? - &pt0.embed(3, &[0])).scale_real(2.0);

        let mut diagonal_defect = 0.0f64;
        let mut g = PowerSeries::zeros(3, e - 1);
        for (ex, c) in big_phi.terms() {
            if ex[1] == 0 {
                diagonal_defect = diagonal_defect.max(c.norm());
            } else if c != ZERO {
                g.set_coeff(&[ex[0], ex[1] - 1, ex[2]], -c);
            }
        }
        if g.coeff(&[0, 0, 1]).norm() < 1e-12 {
            return Err(Error::CriticalPoint("phase Hessian is degenerate in w̄".into()));
        }
        if g.constant_term().norm() > 1e-12 {
            return Err(Error::CriticalPoint(format!(
                "phase has a nonzero gradient at the origin (|∂Φ| = {:e})",
                g.constant_term().norm()
            )));
        }
        let ids: Vec<PowerSeries> = (0..2).map(|i| PowerSeries::variable(3, e - 1, i)).collect();
        let inv = invert_map(&[ids[0].clone(), ids[1].clone(), g])?;
        let frame = inv[2].clone();
        let jacobian = frame.differentiate(2);

        let x1 = PowerSeries::variable(1, e - 1, 0);
        let zero1 = PowerSeries::zeros(1, e - 1);
        let critical = frame.compose(&[x1.clone(), zero1.clone(), zero1.clone()])?;
        let at_crit = |s: &PowerSeries| s.compose(&[x1.clone(), zero1.clone(), critical.clone()]);
        let hessian = [
            at_crit(&big_phi.differentiate(1).differentiate(1))?,
            at_crit(&big_phi.differentiate(1).differentiate(2))?,
            at_crit(&big_phi.differentiate(2).differentiate(2))?,
        ];
        let n_max = (e - 2) / 2;
        Ok(StationaryPhaseContext { phase: big_phi, critical, hessian, frame, jacobian, n_max, diagonal_defect })
    }

    pub fn degree(&self) -> usize {
        self.jacobian.max_degree()
    }

    /// A(x, x + v₁, W(x, v₁, v₂)) for A given in (x, y, w̄).
    pub fn pull_back(&self, amp: &PowerSeries) -> Result<PowerSeries> {
        if amp.nvars() != 3 {
            return Err(Error::Dimension("amplitudes are series in (x, y, w̄)".into()));
        }
        let d = amp.max_degree().min(self.frame.max_degree());
        let x = PowerSeries::variable(3, d, 0);
        let v = PowerSeries::variable(3, d, 1);
        let w = PowerSeries::variable(3, d, 2);
        let in_v = amp.truncate(d).compose(&[x.clone(), &x + &v, w])?;
        in_v.compose(&[x, v, self.frame.truncate(d)])
    }

    /// Pulled-back amplitude times the Jacobian, in (x, v₁, v₂).
    pub fn density(&self, amp: &PowerSeries) -> Result<PowerSeries> {
        Ok(&self.pull_back(amp)? * &self.jacobian)
    }
}

/// Order-n term n!·[v₁ⁿv₂ⁿ](A∘frame · J) of the formal expansion of
/// ∫ e^{NΦ} A (N/π) dA(y) in powers of N⁻¹, as a series in x.
pub fn stationary_phase_expand(ctx: &StationaryPhaseContext, amplitude: &PowerSeries, n: usize) -> Result<PowerSeries> {
    if n > ctx.n_max {
        return Err(Error::InsufficientDegree { order: n, detail: format!("context supports n ≤ {}", ctx.n_max) });
    }
    let dens = ctx.density(amplitude)?;
    Ok(dens.coefficient_of(&[1, 2], &[n as u32, n as u32]).scale_real(factorial(n)))
}

/// The Bergman-corrected amplitude b_l(x, y, w̄) = f̃(y,w̄)ρ̃(y,w̄)·(a(x,w̄) * a⁻¹(x,0) * a(y,0))_l,
/// without the frame Jacobian (which the context supplies).
pub fn build_b_symbol(model: &KahlerModel, f_tilde: &PowerSeries, order: usize, radius: f64) -> Result<AnalyticSymbol> {
    if f_tilde.nvars() != 2 {
        return Err(Error::Dimension("f̃ must be a series in (y, w̄)".into()));
    }
    let d = f_tilde.max_degree();
    let a = model.bergman_symbol(d, order);
    let lift = |s: &AnalyticSymbol, map: &dyn Fn(&PowerSeries) -> PowerSeries| -> Result<AnalyticSymbol> {
        AnalyticSymbol::new(s.terms.iter().map(map).collect())
    };
    let a_xw = lift(&a, &|t| t.embed(3, &[0, 2]))?;
    let a_x0 = lift(&a, &|t| t.coefficient_of(&[1], &[0]).truncate(d).embed(3, &[0]))?;
    let a_y0 = lift(&a, &|t| t.coefficient_of(&[1], &[0]).truncate(d).embed(3, &[1]))?;
    let inv = symbol_inverse(&a_x0, radius)?;
    let prod = cauchy_product(&cauchy_product(&a_xw, &inv)?, &a_y0)?;
    let base = &f_tilde.embed(3, &[1, 2]) * &model.density(d).embed(3, &[1, 2]);
    AnalyticSymbol::new(prod.terms.iter().map(|t| &base * t).collect())
}

/// max |b_0(x, x, ȳ_c(x))| over the stored coefficients.
pub fn b_symbol_critical_defect(b: &AnalyticSymbol, ybar_c: &PowerSeries) -> Result<f64> {
    let x1 = PowerSeries::variable(1, ybar_c.max_degree(), 0);
    Ok(b.terms[0].compose(&[x1.clone(), x1, ybar_c.clone()])?.max_abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WkbOptions {
    /// Highest order K.
    pub order: usize,
    /// Output degree D of u_0; defaults to 2K + 4.
    pub degree: Option<usize>,
    /// Exponent m of the growth fits.
    pub m: f64,
    pub radius: Option<f64>,
}

impl Default for WkbOptions {
    fn default() -> Self {
        WkbOptions { order: 12, degree: None, m: 0.0, radius: None }
    }
}

impl WkbOptions {
    pub fn output_degree(&self) -> usize {
        self.degree.unwrap_or(2 * self.order + 4)
    }

    /// Degree of the germ and of the Hamilton–Jacobi solve.
    pub fn internal_degree(&self) -> usize {
        self.output_degree() + 4
    }
}

/// Coefficients c_{n,i}(x) of P = Σ_i c_{n,i} ∂ⁱ, per symbol order l.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorExpansion {
    /// coeffs[l][n][i]
    pub coeffs: Vec<Vec<Vec<PowerSeries>>>,
}

impl OperatorExpansion {
    pub fn from_symbol(ctx: &StationaryPhaseContext, b: &AnalyticSymbol, top: usize) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(b.terms.len());
        for (l, bl) in b.terms.iter().enumerate() {
            if l > top {
                break;
            }
            let dens = ctx.density(bl)?;
            let nmax = (top - l).min(ctx.n_max);
            let per_n = (0..=nmax)
                .map(|n| {
                    (0..=n)
                        .map(|i| {
                            dens.coefficient_of(&[1, 2], &[(n - i) as u32, n as u32])
                                .scale_real(factorial(n) / factorial(i))
                        })
                        .collect()
                })
                .collect();
            coeffs.push(per_n);
        }
        Ok(OperatorExpansion { coeffs })
    }

    /// P_k u = Σ_{n+l=k} Σ_i c_{l,n,i} ∂ⁱu, or None if order k is out of range.
    pub fn apply(&self, k: usize, u: &PowerSeries) -> Option<PowerSeries> {
        let mut acc: Option<PowerSeries> = None;
        for (l, per_n) in self.coeffs.iter().enumerate().take(k + 1) {
            let cs = per_n.get(k - l)?;
            let mut du = u.clone();
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    du = du.differentiate(0);
                }
                let term = c * &du;
                acc = Some(match acc {
                    None => term,
                    Some(a) => &a + &term,
                });
            }
        }
        acc
    }

    /// Multiplicative part of P_1 (the ∂⁰ terms) and its vector field (∂¹ coefficient).
    fn first_order(&self) -> Result<(PowerSeries, PowerSeries)> {
        let c0 = self.coeffs[0].get(1).ok_or_else(|| Error::InsufficientDegree {
            order: 1,
            detail: "stationary phase does not reach order 1".into(),
        })?;
        let mut m = c0[0].clone();
        if let Some(b1) = self.coeffs.get(1) {
            m = &m + &b1[0][0];
        }
        Ok((m, c0[1].clone()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WkbFits {
    pub lambda: Option<ClassFit>,
    pub u: Option<ClassFit>,
    /// Single (C, r, R) dominating every computed point.
    pub envelope: Option<SymbolClassParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WkbExpansion {
    pub hj: HjSolution,
    pub u: AnalyticSymbol,
    pub lambda: Vec<f64>,
    /// Discarded imaginary parts of λ_k.
    pub lambda_imag: Vec<f64>,
    pub fits: WkbFits,
    pub order: usize,
    pub degree: usize,
    /// Truncation rate c_R used by the summation (before the K/N cap).
    pub c: f64,
    /// Coefficientwise residual of the order-(k+1) eigenvalue identity.
    pub eigen_residuals: Vec<f64>,
    pub transport_residuals: Vec<f64>,
    /// max |P_0| (vanishes by the eikonal equation).
    pub eikonal_defect: f64,
    pub b_defect: f64,
    pub diagonal_defect: f64,
}

struct Recursion {
    ops: OperatorExpansion,
    field: PowerSeries,
    h: PowerSeries,
    lambda: Vec<Complex64>,
    u: Vec<PowerSeries>,
    transport_residuals: Vec<f64>,
    eigen_residuals: Vec<f64>,
}

impl Recursion {
    fn new(ops: OperatorExpansion, out_degree: usize) -> Result<Self> {
        let (m, field) = ops.first_order()?;
        let lambda0 = m.constant_term();
        let h = m.scale_real(-1.0).add_constant(lambda0).truncate(out_degree);
        let problem = TransportProblem::from_vector_field(&[field.clone()], h.clone(), h.clone(), 0)?;
        let sol = solve_transport(&problem, out_degree)?;
        let u0 = sol.u.add_constant(Complex64::new(1.0, 0.0));
        let mut rec = Recursion {
            ops,
            field,
            h,
            lambda: vec![lambda0],
            u: vec![u0],
            transport_residuals: vec![sol.residual],
            eigen_residuals: Vec::new(),
        };
        let r0 = rec.identity_residual(0)?;
        rec.eigen_residuals.push(r0);
        Ok(rec)
    }

    fn p(&self, k: usize, u: &PowerSeries) -> Result<PowerSeries> {
        self.ops.apply(k, u).ok_or_else(|| Error::InsufficientDegree {
            order: k,
            detail: "operator expansion is too short; raise D".into(),
        })
    }

    /// Σ_{m<k} P_{k+1−m} u_m
    fn source(&self, k: usize) -> Result<PowerSeries> {
        let mut acc: Option<PowerSeries> = None;
        for m in 0..k {
            let t = self.p(k + 1 - m, &self.u[m])?;
            acc = Some(match acc {
                None => t,
                Some(a) => &a + &t,
            });
        }
        acc.ok_or_else(|| Error::Parameter("order must be at least 1".into()))
    }

    fn step(&mut self, k: usize) -> Result<()> {
        let s = self.source(k)?;
        let lk = s.constant_term();
        let mut g = &self.u[0].truncate(s.max_degree()).scale(lk) - &s;
        for j in 1..k {
            g = &g + &self.u[k - j].scale(self.lambda[j]);
        }
        let deg = g.max_degree();
        if deg < 2 {
            return Err(Error::InsufficientDegree { order: k, detail: format!("degree budget {deg} < 2; raise D") });
        }
        g.coeffs_mut()[0] = ZERO;
        let problem = TransportProblem::from_vector_field(&[self.field.clone()], self.h.clone(), g, k)?;
        let sol = solve_transport(&problem, deg)?;
        self.lambda.push(lk);
        self.u.push(sol.u);
        self.transport_residuals.push(sol.residual);
        let r = self.identity_residual(k)?;
        self.eigen_residuals.push(r);
        Ok(())
    }

    /// Σ_{m≤k} P_{k+1−m}u_m − Σ_{j+m=k} λ_j u_m, truncated to deg u_k.
    fn identity_residual(&self, k: usize) -> Result<f64> {
        let mut acc = self.u[k].scale(-self.lambda[0]);
        for m in 0..=k {
            acc = &acc + &self.p(k + 1 - m, &self.u[m])?;
            if m < k {
                acc = &acc - &self.u[m].scale(self.lambda[k - m]);
            }
        }
        let scale = self.u.iter().take(k + 1).fold(1.0f64, |s, u| s.max(u.max_abs()));
        Ok(acc.max_abs() / scale)
    }
}

/// λ₀ alone (leading order of the ground energy, in units of N⁻¹).
pub fn compute_lambda0(model: &KahlerModel, f: &PowerSeries, hj: &HjSolution) -> Result<f64> {
    let d = hj.degree;
    let ctx = StationaryPhaseContext::new(model, &hj.phi, d)?;
    let b = build_b_symbol(model, &f.truncate(d).polarize()?, 1, hj.radius)?;
    let ops = OperatorExpansion::from_symbol(&ctx, &b, 1)?;
    let (m, _) = ops.first_order()?;
    Ok(m.constant_term().re)
}

/// The full expansion up to order K for a germ f in (x, x̄).
pub fn wkb_expand(model: &KahlerModel, f: &PowerSeries, opts: WkbOptions) -> Result<WkbExpansion> {
    let out = opts.output_degree();
    let e = opts.internal_degree();
    if f.max_degree() < e {
        return Err(Error::InsufficientDegree {
            order: opts.order,
            detail: format!("germ has degree {} but {e} is needed", f.max_degree()),
        });
    }
    if out < 2 * opts.order + 2 {
        return Err(Error::InsufficientDegree {
            order: opts.order,
            detail: format!("D = {out} leaves no window at order {}; need D ≥ 2K + 2", opts.order),
        });
    }
    let hj = assemble_hj_solution(model, f, HjOptions { degree: e, radius: opts.radius })?;
    let ctx = StationaryPhaseContext::new(model, &hj.phi, e)?;
    let f_tilde = f.truncate(e).polarize()?;
    let b = build_b_symbol(model, &f_tilde, opts.order + 1, hj.radius)?;
    let b_defect = b_symbol_critical_defect(&b, &hj.ybar_c)?;
    let ops = OperatorExpansion::from_symbol(&ctx, &b, opts.order + 1)?;
    let eikonal_defect = ops.coeffs[0][0][0].max_abs();
    debug!("frame degree {}, eikonal defect {eikonal_defect:e}", ctx.degree());

    let mut rec = Recursion::new(ops, out)?;
    for k in 1..=opts.order {
        rec.step(k)?;
    }
    let mut lambda = Vec::with_capacity(rec.lambda.len());
    let mut lambda_imag = Vec::with_capacity(rec.lambda.len());
    for (k, l) in rec.lambda.iter().enumerate() {
        if l.im.abs() > 1e-9 * l.re.abs().max(1.0) {
            warn!("λ_{k} has imaginary part {:e}", l.im);
        }
        lambda.push(l.re);
        lambda_imag.push(l.im);
    }
    let u = AnalyticSymbol::new(rec.u.clone())?;
    let fits = fit_expansion(&lambda, &rec.u, opts.m);
    let c = fits.lambda.as_ref().map_or(f64::INFINITY, |f| truncation_rate(f.params.big_r.max(1e-300)));
    Ok(WkbExpansion {
        hj,
        u,
        lambda,
        lambda_imag,
        fits,
        order: opts.order,
        degree: out,
        c,
        eigen_residuals: rec.eigen_residuals,
        transport_residuals: rec.transport_residuals,
        eikonal_defect,
        b_defect,
        diagonal_defect: ctx.diagonal_defect,
    })
}

/// Fits |λ_k| ≤ C R^k k! and ‖u_k‖_{C^j} ≤ C r^j R^k (j+k)!.
pub fn fit_expansion(lambda: &[f64], u: &[PowerSeries], m: f64) -> WkbFits {
    let lpts: Vec<(usize, usize, f64)> = lambda.iter().enumerate().skip(1).map(|(k, l)| (0, k, l.abs())).collect();
    let lambda_fit = fit_growth(&lpts, m).ok();
    let mut upts = Vec::new();
    for (k, uk) in u.iter().enumerate() {
        for j in 1..=uk.max_degree() {
            upts.push((j, k, uk.derivative_norm_at_zero(j)));
        }
    }
    let u_fit = fit_growth(&upts, m).ok();
    let envelope = u_fit.as_ref().map(|fit| {
        let mut all = upts.clone();
        all.extend(lpts.iter().copied());
        envelope(fit, &all)
    });
    WkbFits { lambda: lambda_fit, u: u_fit, envelope }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Quasimode {
    pub n: usize,
    /// Effective truncation index.
    pub kmax: usize,
    pub lambda_n: f64,
    /// Holomorphic phase φ(x).
    pub phi: PowerSeries,
    /// Σ_{k≤kmax} N^{−k} u_k.
    pub amplitude: PowerSeries,
    /// Radius of the disk the germ is trusted on.
    pub radius: f64,
}

impl Quasimode {
    /// e^{Nφ(x)}·Σ N^{−k}u_k(x) in the chart trivialization.
    pub fn eval(&self, x: Complex64) -> Complex64 {
        (self.n as f64 * self.phi.evaluate(&[x])).exp() * self.amplitude.evaluate(&[x])
    }
}

impl WkbExpansion {
    /// Truncation index min(K, ⌊cN⌋) with c = min(c_R, K/N).
    pub fn kmax(&self, n: usize) -> usize {
        let c = self.c.min(self.order as f64 / n as f64);
        truncation_index(self.order, n, c)
    }

    /// λ(N) = N⁻¹ Σ_{k≤kmax} N^{−k} λ_k.
    pub fn lambda_at(&self, n: usize) -> f64 {
        self.lambda_truncated(n, self.kmax(n))
    }

    pub fn lambda_truncated(&self, n: usize, kmax: usize) -> f64 {
        let inv = 1.0 / n as f64;
        let mut acc = 0.0;
        for k in (0..=kmax.min(self.order)).rev() {
            acc = self.lambda[k] + inv * acc;
        }
        acc * inv
    }
}

pub fn assemble_quasimode(w: &WkbExpansion, n: usize) -> Result<Quasimode> {
    if n == 0 {
        return Err(Error::Parameter("level N must be at least 1".into()));
    }
    let kmax = w.kmax(n);
    let inv = 1.0 / n as f64;
    let d = w.u.terms[0].max_degree();
    let mut amp = w.u.terms[kmax].with_degree(d);
    for k in (0..kmax).rev() {
        amp = &w.u.terms[k] + &amp.scale_real(inv);
    }
    let radius = w.hj.radius.min(0.5 * w.hj.convergence_radius);
    Ok(Quasimode { n, kmax, lambda_n: w.lambda_at(n), phi: w.hj.phi.clone(), amplitude: amp, radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn iso(d: usize) -> PowerSeries {
        PowerSeries::monomial(2, d, &[1, 1], c(1.0))
    }

    #[test]
    fn isotropic_bargmann_is_exact() {
        let opts = WkbOptions { order: 4, ..Default::default() };
        let w = wkb_expand(&KahlerModel::bargmann(), &iso(opts.internal_degree()), opts).unwrap();
        assert!((w.lambda[0] - 1.0).abs() < 1e-14);
        for k in 1..=4 {
            assert!(w.lambda[k].abs() < 1e-14, "λ_{k} = {}", w.lambda[k]);
            assert!(w.u.terms[k].max_abs() < 1e-14);
        }
        assert!((&w.u.terms[0] - &PowerSeries::one(1, w.u.terms[0].max_degree())).max_abs() < 1e-14);
        assert!((w.lambda_at(50) - 1.0 / 50.0).abs() < 1e-16);
    }

    #[test]
    fn anisotropic_bargmann_ground_energy() {
        // f = a q² + b p², x = q + ip: ground energy of the quadratic operator
        let (a, b) = (2.0, 0.5);
        let d = 16;
        let f = PowerSeries::from_terms(
            2,
            d,
            [
                (vec![2, 0], c((a - b) / 4.0)),
                (vec![0, 2], c((a - b) / 4.0)),
                (vec![1, 1], c((a + b) / 2.0)),
            ],
        )
        .unwrap();
        let opts = WkbOptions { order: 3, degree: Some(12), ..Default::default() };
        let w = wkb_expand(&KahlerModel::bargmann(), &f, opts).unwrap();
        let want = (a.sqrt() + b.sqrt()).powi(2) / 4.0;
        assert!((w.lambda[0] - want).abs() < 1e-12, "{} vs {want}", w.lambda[0]);
        for k in 1..=3 {
            assert!(w.lambda[k].abs() < 1e-10, "λ_{k} = {}", w.lambda[k]);
        }
    }

    #[test]
    fn cp1_height_closed_form() {
        // f = 1 − Z = 2|x|²/(1+|x|²) acts on e_k by 2(k+1)/(N+2)
        let opts = WkbOptions { order: 6, ..Default::default() };
        let d = opts.internal_degree();
        let u = PowerSeries::monomial(2, d, &[1, 1], c(1.0));
        let f = (&u * &u.add_constant(c(1.0)).recip().unwrap()).scale_real(2.0);
        let w = wkb_expand(&KahlerModel::new(ModelKind::Cp1), &f, opts).unwrap();
        for k in 0..=6 {
            let want = 2.0 * (-2.0f64).powi(k as i32);
            assert!((w.lambda[k] - want).abs() < 1e-9 * want.abs(), "λ_{k} = {} vs {want}", w.lambda[k]);
        }
        assert!(w.eigen_residuals.iter().all(|&r| r < 1e-9), "{:?}", w.eigen_residuals);
    }

    #[test]
    fn unit_symbol_is_identity_operator() {
        for model in [KahlerModel::bargmann(), KahlerModel::cp1()] {
            let d = 14;
            let ctx = StationaryPhaseContext::new(&model, &PowerSeries::zeros(1, d), d).unwrap();
            let b = build_b_symbol(&model, &PowerSeries::one(2, d), 3, 0.5).unwrap();
            let ops = OperatorExpansion::from_symbol(&ctx, &b, 3).unwrap();
            let u = PowerSeries::from_univariate(&[c(0.3), c(-1.0), c(0.5), c(2.0)], 6);
            let p0 = ops.apply(0, &u).unwrap();
            assert!((&p0 - &u.with_degree(p0.max_degree())).max_abs() < 1e-13, "{:?}", model.kind);
            for k in 1..=3 {
                assert!(ops.apply(k, &u).unwrap().max_abs() < 1e-12, "P_{k} on {:?}", model.kind);
            }
        }
    }

    #[test]
    fn gaussian_moment() {
        let m = KahlerModel::bargmann();
        let d = 8;
        let ctx = StationaryPhaseContext::new(&m, &PowerSeries::zeros(1, d), d).unwrap();
        let amp = PowerSeries::monomial(3, d, &[0, 1, 1], c(1.0));
        assert!(stationary_phase_expand(&ctx, &amp, 0).unwrap().max_abs() < 1e-15);
        let e1 = stationary_phase_expand(&ctx, &amp, 1).unwrap();
        assert!((e1.constant_term() - c(1.0)).norm() < 1e-15);
        let flat = PowerSeries::monomial(3, d, &[2, 0, 0], c(1.0));
        let e0 = stationary_phase_expand(&ctx, &flat, 0).unwrap();
        assert!((e0.coeff(&[2]) - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn scaling_is_linear() {
        let d = 16;
        let f = PowerSeries::from_terms(2, d, [(vec![1, 1], c(1.0)), (vec![2, 2], c(0.3)), (vec![2, 0], c(0.2)), (vec![0, 2], c(0.2))]).unwrap();
        let opts = WkbOptions { order: 3, degree: Some(12), ..Default::default() };
        let m = KahlerModel::bargmann();
        let w1 = wkb_expand(&m, &f, opts).unwrap();
        let w3 = wkb_expand(&m, &f.scale_real(3.0), opts).unwrap();
        for k in 0..=3 {
            assert!((w3.lambda[k] - 3.0 * w1.lambda[k]).abs() < 1e-10 * w1.lambda[k].abs().max(1.0));
            assert!(w3.u.terms[k].max_abs_diff(&w1.u.terms[k]) < 1e-11);
        }
    }
}
