//! Desk-scale spectral experiments: residual decay, tunnelling gaps,
//! low-lying counts and decay profiles.

use log::{info, warn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{SymbolSpec, Well};
use crate::hamilton_jacobi::{assemble_hj_solution, HjOptions};
use crate::models::{KahlerModel, ModelKind};
use crate::quantization::{build_toeplitz_matrix, diagonalize, embed_quasimode, residual_norm, ToeplitzMatrix};
use crate::wkb::{assemble_quasimode, compute_lambda0, wkb_expand, WkbExpansion, WkbOptions};

/// Values below this are treated as floating-point floor in fits.
pub const DEFAULT_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub symbol: SymbolSpec,
    /// Levels N, strictly increasing.
    pub n_values: Vec<usize>,
    /// WKB order K.
    #[serde(default)]
    pub order: Option<usize>,
    /// Output degree D.
    #[serde(default)]
    pub degree: Option<usize>,
    /// Truncation rate override.
    #[serde(default)]
    pub c: Option<f64>,
    /// Inclusive [N_lo, N_hi] for rate fits.
    #[serde(default)]
    pub fit_window: Option<[usize; 2]>,
    #[serde(default)]
    pub well: Option<Well>,
    /// Half-width of the counting window above min λ₀, in units of N⁻¹.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Number of rays for decay profiles.
    #[serde(default)]
    pub rays: Option<usize>,
    #[serde(default)]
    pub floor: Option<f64>,
    /// Number of low eigenvalues reported by spectrum runs.
    #[serde(default)]
    pub eigenvalues: Option<usize>,
    /// Output directory; a command-line value takes precedence.
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn new(symbol: SymbolSpec, n_values: Vec<usize>) -> Self {
        ExperimentConfig {
            model: symbol.model_kind(),
            symbol,
            n_values,
            order: None,
            degree: None,
            c: None,
            fit_window: None,
            well: None,
            epsilon: None,
            rays: None,
            floor: None,
            eigenvalues: None,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, message: String| Err(Error::Config { field: name.into(), message });
        if self.n_values.is_empty() {
            return field("n_values", "must not be empty".into());
        }
        if self.n_values[0] == 0 || self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return field("n_values", "must be positive and strictly increasing".into());
        }
        if let Some([lo, hi]) = self.fit_window {
            if lo >= hi || !self.n_values.contains(&lo) || !self.n_values.contains(&hi) {
                return field("fit_window", format!("[{lo}, {hi}] must be an increasing pair taken from n_values"));
            }
        }
        if self.model != self.symbol.model_kind() {
            return field(
                "model",
                format!("{} lives on {:?}, not {:?}", self.symbol.name(), self.symbol.model_kind(), self.model),
            );
        }
        if self.eigenvalues == Some(0) {
            return field("eigenvalues", "must be at least 1".into());
        }
        if let Some(f) = self.floor {
            if !(f > 0.0) {
                return field("floor", format!("must be positive, got {f}"));
            }
        }
        if let Some(c) = self.c {
            if !(c > 0.0) {
                return field("c", format!("must be positive, got {c}"));
            }
        }
        self.symbol.validate().map_err(|e| Error::Config { field: "symbol".into(), message: e.to_string() })
    }

    pub fn wkb_options(&self) -> WkbOptions {
        WkbOptions { order: self.order.unwrap_or(WkbOptions::default().order), degree: self.degree, ..Default::default() }
    }

    pub fn floor(&self) -> f64 {
        self.floor.unwrap_or(DEFAULT_FLOOR)
    }

    pub fn kahler_model(&self) -> KahlerModel {
        KahlerModel::new(self.model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Decay rate: −d log y / dN.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub stderr: f64,
    pub window: [usize; 2],
    pub points: usize,
    /// Levels left out as floor-limited.
    pub excluded: Vec<usize>,
    pub rule: String,
}

/// Least-squares fit of log y against N.
///
/// Without an explicit window the smallest N is dropped when at least three
/// points remain; values below `floor` are always excluded.
pub fn fit_rate(ns: &[usize], ys: &[f64], window: Option<[usize; 2]>, floor: f64) -> Result<RateFit> {
    let (lo, hi, rule) = match window {
        Some([lo, hi]) => (lo, hi, format!("window [{lo}, {hi}], values < {floor:e} excluded")),
        None => {
            let lo = if ns.len() >= 4 { ns[1] } else { ns[0] };
            (lo, *ns.last().unwrap_or(&0), format!("smallest N dropped when ≥ 3 points remain; values < {floor:e} excluded"))
        }
    };
    let mut pts = Vec::new();
    let mut excluded = Vec::new();
    for (&n, &y) in ns.iter().zip(ys) {
        if n < lo || n > hi {
            continue;
        }
        if !(y >= floor) || !y.is_finite() {
            excluded.push(n);
        } else {
            pts.push((n as f64, y.ln()));
        }
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("{} usable points in [{lo}, {hi}]", pts.len())));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let stderr = if pts.len() > 2 { (sse / (m - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(RateFit { slope: -b, intercept: a, r_squared, stderr, window: [lo, hi], points: pts.len(), excluded, rule })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub n: usize,
    pub residual: f64,
    pub min_sp: f64,
    pub lambda_n: f64,
    /// |minSp − λ(N)|
    pub gap_to_spec: f64,
    pub kmax: usize,
    pub tail_mass: f64,
    /// |minSp − λ(N)| ≤ residual
    pub bound_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualSweep {
    pub rows: Vec<ResidualRow>,
    pub fit: Option<RateFit>,
    pub gap_fit: Option<RateFit>,
    /// Every residual sits at the floor.
    pub exact: bool,
    pub lambda: Vec<f64>,
    pub wkb_radius: f64,
}

impl ResidualSweep {
    /// Turns a non-decaying residual or a violated Hermitian bound into an error.
    pub fn check(&self) -> Result<()> {
        if let Some(r) = self.rows.iter().find(|r| !r.bound_ok) {
            return Err(Error::Experiment(format!(
                "N={}: |minSp − λ(N)| = {:e} exceeds the residual {:e}",
                r.n, r.gap_to_spec, r.residual
            )));
        }
        if self.exact {
            return Ok(());
        }
        match &self.fit {
            Some(f) if f.slope > 0.0 => Ok(()),
            Some(f) => Err(Error::Experiment(format!("residual does not decay (fitted rate {:e})", f.slope))),
            None => Err(Error::Experiment("too few usable residuals to fit a rate".into())),
        }
    }
}

/// WKB expansion of the configured symbol at a well, honouring K, D and c overrides.
pub fn expansion(cfg: &ExperimentConfig, well: Well) -> Result<WkbExpansion> {
    cfg.validate()?;
    let opts = cfg.wkb_options();
    let germ = cfg.symbol.germ(well, opts.internal_degree())?;
    let mut w = wkb_expand(&cfg.kahler_model(), &germ, opts)?;
    if let Some(c) = cfg.c {
        w.c = c;
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub n: usize,
    pub index: usize,
    pub eigenvalue: f64,
    /// N times the eigenvalue, the scale on which λ₀ appears.
    pub scaled: f64,
}

/// Lowest eigenvalues of T_N(f) for every configured N, in N-order.
pub fn low_spectrum(cfg: &ExperimentConfig) -> Result<Vec<SpectrumRow>> {
    cfg.validate()?;
    let k = cfg.eigenvalues.unwrap_or(6);
    let per_n = cfg
        .n_values
        .par_iter()
        .map(|&n| -> Result<Vec<SpectrumRow>> {
            let t = matrix_at(cfg, cfg.well.unwrap_or(Well::North), n)?;
            let s = diagonalize(&t, k.min(t.dim))?;
            Ok(s.eigenvalues
                .iter()
                .enumerate()
                .map(|(index, &eigenvalue)| SpectrumRow { n, index, eigenvalue, scaled: n as f64 * eigenvalue })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_n.into_iter().flatten().collect())
}

/// Matrix of the symbol in the chart centred at the given well.
fn matrix_at(cfg: &ExperimentConfig, well: Well, n: usize) -> Result<ToeplitzMatrix> {
    let model = cfg.kahler_model();
    match well {
        Well::North => build_toeplitz_matrix(&model, &cfg.symbol, n),
        Well::South => build_toeplitz_matrix(&model, &SouthChart(&cfg.symbol), n),
    }
}

struct SouthChart<'a>(&'a SymbolSpec);

impl crate::quantization::Evaluable for SouthChart<'_> {
    fn eval(&self, z: Complex64) -> f64 {
        self.0.eval_at(Well::South, z)
    }
}

/// Residual ‖(T_N − λ(N))u(N)‖ of the WKB quasimode across the N list.
pub fn residual_sweep(cfg: &ExperimentConfig) -> Result<ResidualSweep> {
    cfg.validate()?;
    let well = cfg.well.unwrap_or(Well::North);
    let w = expansion(cfg, well)?;
    let model = cfg.kahler_model();
    let rows: Vec<ResidualRow> = cfg
        .n_values
        .par_iter()
        .map(|&n| -> Result<ResidualRow> {
            let t = matrix_at(cfg, well, n)?;
            let q = assemble_quasimode(&w, n)?;
            let v = embed_quasimode(&model, &q)?;
            let residual = residual_norm(&t, &v.coeffs, q.lambda_n)?;
            let min_sp = diagonalize(&t, 1)?.ground();
            let gap_to_spec = (min_sp - q.lambda_n).abs();
            // the bound is exact; allow for the rounding in forming T v
            let bound_ok = gap_to_spec <= residual + 4.0 * f64::EPSILON * min_sp.abs().max(q.lambda_n.abs());
            info!("N={n}: residual {residual:e}, |minSp − λ(N)| {gap_to_spec:e}");
            Ok(ResidualRow { n, residual, min_sp, lambda_n: q.lambda_n, gap_to_spec, kmax: q.kmax, tail_mass: v.tail_mass, bound_ok })
        })
        .collect::<Result<Vec<_>>>()?;
    let floor = cfg.floor();
    let exact = rows.iter().all(|r| r.residual < floor);
    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap_to_spec).collect();
    let fit = fit_rate(&ns, &res, cfg.fit_window, floor).ok();
    let gap_fit = fit_rate(&ns, &gaps, cfg.fit_window, floor).ok();
    let wkb_radius = w.hj.radius.min(0.5 * w.hj.convergence_radius);
    Ok(ResidualSweep { rows, fit, gap_fit, exact, lambda: w.lambda.clone(), wkb_radius })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub gap: f64,
    pub floor_limited: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapSweep {
    pub rows: Vec<GapRow>,
    /// Fitted σ = −d log gap / dN.
    pub fit: Option<RateFit>,
    pub max_gap: f64,
    /// Every gap is at the floor.
    pub degenerate: bool,
}

/// Gap λ₁ − λ₀ between the two lowest eigenvalues.
pub fn tunnelling_gap_sweep(cfg: &ExperimentConfig) -> Result<GapSweep> {
    cfg.validate()?;
    if cfg.symbol.wells().len() < 2 {
        return Err(Error::Experiment(format!("{} has a single well", cfg.symbol.name())));
    }
    let floor = cfg.floor();
    let rows: Vec<GapRow> = cfg
        .n_values
        .par_iter()
        .map(|&n| -> Result<GapRow> {
            let t = matrix_at(cfg, Well::North, n)?;
            let s = diagonalize(&t, 2)?;
            let gap = s.eigenvalues[1] - s.eigenvalues[0];
            Ok(GapRow { n, lambda0: s.eigenvalues[0], lambda1: s.eigenvalues[1], gap, floor_limited: gap < floor })
        })
        .collect::<Result<Vec<_>>>()?;
    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let degenerate = rows.iter().all(|r| r.floor_limited);
    let fit = if degenerate { None } else { fit_rate(&ns, &gaps, cfg.fit_window, floor).ok() };
    let max_gap = gaps.iter().fold(0.0f64, |m, &g| m.max(g));
    Ok(GapSweep { rows, fit, max_gap, degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub n: usize,
    pub count: usize,
    pub expected: usize,
    pub equal: bool,
    /// An eigenvalue sits within 10% of the window width of its edge.
    pub ambiguous: bool,
    pub window_top: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountReport {
    /// λ₀ at each well.
    pub wells: Vec<(Well, f64)>,
    pub expected: usize,
    pub epsilon: f64,
    pub rows: Vec<CountRow>,
}

/// Eigenvalues in [0, (min λ₀ + ε)/N] against the number of wells attaining min λ₀.
pub fn low_lying_count(cfg: &ExperimentConfig) -> Result<CountReport> {
    cfg.validate()?;
    let model = cfg.kahler_model();
    let wells = cfg
        .symbol
        .wells()
        .into_iter()
        .map(|w| -> Result<(Well, f64)> {
            let germ = cfg.symbol.germ(w, 12)?;
            let hj = assemble_hj_solution(&model, &germ, HjOptions { degree: 12, radius: None })?;
            Ok((w, compute_lambda0(&model, &germ, &hj)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let min = wells.iter().map(|w| w.1).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * min.abs().max(1.0);
    let expected = wells.iter().filter(|w| w.1 - min <= tol).count();
    let next = wells.iter().map(|w| w.1).filter(|&l| l - min > tol).fold(f64::INFINITY, f64::min);
    let epsilon = cfg.epsilon.unwrap_or(if next.is_finite() { 0.5 * (next - min) } else { 1.0 });
    let rows = cfg
        .n_values
        .par_iter()
        .map(|&n| -> Result<CountRow> {
            let t = build_toeplitz_matrix(&model, &cfg.symbol, n)?;
            let k = (expected + 4).min(t.dim);
            let s = diagonalize(&t, k)?;
            let top = (min + epsilon) / n as f64;
            let count = s.eigenvalues.iter().filter(|&&l| l <= top).count();
            let margin = 0.1 * epsilon / n as f64;
            let ambiguous = s.eigenvalues.iter().any(|&l| (l - top).abs() < margin);
            if ambiguous {
                warn!("N={n}: an eigenvalue lies within {margin:e} of the counting window edge");
            }
            Ok(CountRow { n, count, expected, equal: count == expected, ambiguous, window_top: top })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CountReport { wells, expected, epsilon, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub angle: f64,
    pub rho: f64,
    /// −(2N)⁻¹ log(|g(x)|² e^{−2Nφ_K(x)} / |g(0)|²) for the exact ground vector g.
    pub exact: f64,
    /// The same for the WKB germ e^{Nφ}Σ N^{−k}u_k.
    pub wkb: f64,
    /// φ_K(x) − Re φ(x).
    pub model: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileReport {
    pub n: usize,
    pub radius: f64,
    pub rows: Vec<ProfileRow>,
    /// Worst relative |exact − model|/model on the half disk, away from the centre.
    pub near_well_error: f64,
    /// Mean exact rate on the outermost ring sampled.
    pub far_field_level: f64,
}

/// Decay rate of the exact ground state along rays from the well, at the largest N.
pub fn decay_profile(cfg: &ExperimentConfig) -> Result<ProfileReport> {
    cfg.validate()?;
    if cfg.well == Some(Well::South) {
        return Err(Error::Experiment("decay profiles are sampled in the north chart only".into()));
    }
    let n = *cfg.n_values.last().expect("validated");
    let model = cfg.kahler_model();
    let w = expansion(cfg, Well::North)?;
    let q = assemble_quasimode(&w, n)?;
    let t = build_toeplitz_matrix(&model, &cfg.symbol, n)?;
    let g = diagonalize(&t, 1)?.vectors.remove(0);
    let g0 = model.eval_section(n, &g, Complex64::new(0.0, 0.0));
    if g0.norm() == 0.0 {
        return Err(Error::Experiment("ground vector vanishes at the well".into()));
    }
    let radius = q.radius;
    let rays = cfg.rays.unwrap_or(8).max(1);
    let samples = 24;
    let nf = n as f64;
    let rate = |val: Complex64, x: Complex64| -(val.norm_sqr().ln() - 2.0 * nf * model.phi_value(x)) / (2.0 * nf);
    let mut rows = Vec::new();
    for a in 0..rays {
        let angle = 2.0 * std::f64::consts::PI * a as f64 / rays as f64;
        for s in 1..=samples {
            let rho = 2.0 * radius * s as f64 / samples as f64;
            let x = Complex64::from_polar(rho, angle);
            let exact = rate(model.eval_section(n, &g, x) / g0, x);
            let wkb = rate(q.eval(x), x);
            let model_rate = model.phi_value(x) - q.phi.evaluate(&[x]).re;
            rows.push(ProfileRow { angle, rho, exact, wkb, model: model_rate });
        }
    }
    let near_well_error = rows
        .iter()
        .filter(|r| r.rho <= 0.5 * radius && r.rho >= 0.25 * radius)
        .map(|r| (r.exact - r.model).abs() / r.model.abs().max(1e-300))
        .fold(0.0f64, f64::max);
    let outer: Vec<f64> = rows.iter().filter(|r| r.rho >= 2.0 * radius * (samples as f64 - 0.5) / samples as f64).map(|r| r.exact).collect();
    let far_field_level = outer.iter().sum::<f64>() / outer.len().max(1) as f64;
    Ok(ProfileReport { n, radius, rows, near_well_error, far_field_level })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_fit_recovers_exponential() {
        let ns: Vec<usize> = (1..=6).map(|k| 20 * k).collect();
        let ys: Vec<f64> = ns.iter().map(|&n| 3.0 * (-0.2 * n as f64).exp()).collect();
        let f = fit_rate(&ns, &ys, Some([20, 120]), 1e-300).unwrap();
        assert!((f.slope - 0.2).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let d = fit_rate(&ns, &ys, None, 1e-300).unwrap();
        assert_eq!(d.window, [40, 120]);
    }

    #[test]
    fn config_rejects_unsorted_levels() {
        let cfg = ExperimentConfig::new(SymbolSpec::IsotropicQuadratic, vec![20, 10]);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(SymbolSpec::IsotropicQuadratic, vec![10, 20, 30]);
        cfg.fit_window = Some([10, 25]);
        assert!(cfg.validate().is_err());
        cfg.model = ModelKind::Cp1;
        cfg.fit_window = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn isotropic_sweep_is_exact() {
        let cfg = ExperimentConfig::new(SymbolSpec::IsotropicQuadratic, vec![10, 20]);
        let mut cfg = cfg;
        cfg.order = Some(2);
        let s = residual_sweep(&cfg).unwrap();
        assert!(s.exact, "{:?}", s.rows);
        s.check().unwrap();
    }
}
