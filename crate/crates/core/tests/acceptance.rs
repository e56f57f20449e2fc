//! Acceptance suite. Each test prints one line
//! `criterion <n> PASS|FAIL <name>: <detail>` with its tolerances pinned below.

mod common;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::*;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toeplitz_wkb::experiments::{
    fit_rate, low_lying_count, residual_sweep, tunnelling_gap_sweep, ExperimentConfig, ResidualSweep,
};
use toeplitz_wkb::families::{SymbolSpec, Well};
use toeplitz_wkb::hamilton_jacobi::{assemble_hj_solution, HjOptions};
use toeplitz_wkb::models::KahlerModel;
use toeplitz_wkb::quantization::{build_toeplitz_matrix, diagonalize, embed_quasimode, residual_norm, PolynomialSymbol};
use toeplitz_wkb::symbol::{cauchy_product, summate, symbol_inverse, truncation_rate, AnalyticSymbol};
use toeplitz_wkb::transport::{solve_transport, TransportProblem};
use toeplitz_wkb::wkb::{assemble_quasimode, compute_lambda0, wkb_expand, WkbOptions};
use toeplitz_wkb::PowerSeries;

const EXACT_RESIDUAL_TOL: f64 = 1e-11;
const HJ_TOL: f64 = 1e-10;
const HJ_DEGREE: usize = 16;
const LAMBDA0_TOL: f64 = 1e-6;
const DECAY_R2: f64 = 0.98;
const DECAY_DROP: f64 = 1e3;
const SLOPE_RATIO: (f64, f64) = (0.5, 2.0);
const TRANSPORT_TOL: f64 = 1e-12;
const INVERSE_TOL: f64 = 1e-10;
const DEGENERATE_GAP: f64 = 1e-10;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {id} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn within(t: Instant, budget: Duration) -> bool {
    t.elapsed() < budget
}

#[test]
fn criterion_01_isotropic_case_is_exact() {
    let t0 = Instant::now();
    let model = KahlerModel::bargmann();
    let spec = SymbolSpec::IsotropicQuadratic;
    let opts = WkbOptions::default();
    let f = spec.germ(Well::North, opts.internal_degree()).unwrap();
    let w = wkb_expand(&model, &f, opts).unwrap();
    let phi = w.hj.phi.max_abs();
    let u_defect = w
        .u
        .terms
        .iter()
        .enumerate()
        .map(|(k, t)| if k == 0 { t.add_constant(c(-1.0)).max_abs() } else { t.max_abs() })
        .fold(0.0, f64::max);
    let l_defect = w.lambda.iter().enumerate().map(|(k, l)| (l - if k == 0 { 1.0 } else { 0.0 }).abs()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for n in [10, 20, 40] {
        let q = assemble_quasimode(&w, n).unwrap();
        let v = embed_quasimode(&model, &q).unwrap();
        let t = build_toeplitz_matrix(&model, &spec, n).unwrap();
        worst = worst.max(residual_norm(&t, &v.coeffs, 1.0 / n as f64).unwrap());
    }
    let pass = phi < 1e-12 && u_defect < 1e-12 && l_defect < 1e-12 && worst < EXACT_RESIDUAL_TOL && within(t0, Duration::from_secs(10));
    report(
        1,
        "exact isotropic case",
        pass,
        format!("|φ| {phi:.1e}, |u − 1| {u_defect:.1e}, |λ_k − δ_k0| {l_defect:.1e}, max residual {worst:.1e} (tol {EXACT_RESIDUAL_TOL:.0e}), {:.2?}", t0.elapsed()),
    );
    assert!(pass);
}

#[test]
fn criterion_02_hamilton_jacobi_residuals() {
    let t0 = Instant::now();
    let cases = [
        (KahlerModel::bargmann(), SymbolSpec::AnisotropicQuadratic { a: 2.0, b: 0.5 }),
        (KahlerModel::cp1(), SymbolSpec::Cp1AnisotropicWell { alpha: 1.0 }),
    ];
    let mut worst = (0.0f64, 0.0f64);
    for (model, spec) in &cases {
        let f = spec.germ(Well::North, HJ_DEGREE).unwrap();
        let hj = assemble_hj_solution(model, &f, HjOptions { degree: HJ_DEGREE, radius: None }).unwrap();
        worst = (worst.0.max(hj.hj_residual), worst.1.max(hj.gradient_residual));
    }
    let pass = worst.0 < HJ_TOL && worst.1 < HJ_TOL && within(t0, Duration::from_secs(30));
    report(
        2,
        "Hamilton-Jacobi residual",
        pass,
        format!("eikonal {:.1e}, gradient {:.1e} through degree {HJ_DEGREE} (tol {HJ_TOL:.0e}), {:.2?}", worst.0, worst.1, t0.elapsed()),
    );
    assert!(pass);
}

/// Three-point Richardson extrapolation in 1/N over N, 2N, 4N.
fn richardson(f1: f64, f2: f64, f4: f64) -> f64 {
    (8.0 * f4 - 6.0 * f2 + f1) / 3.0
}

#[test]
fn criterion_03_lambda0_is_the_quadratic_ground_state() {
    let t0 = Instant::now();
    let bargmann = KahlerModel::bargmann();
    let cp1 = KahlerModel::cp1();
    let lambda0 = |model: &KahlerModel, spec: &SymbolSpec| {
        let f = spec.germ(Well::North, 12).unwrap();
        let hj = assemble_hj_solution(model, &f, HjOptions { degree: 12, radius: None }).unwrap();
        compute_lambda0(model, &f, &hj).unwrap()
    };
    // Hessians at the north pole, written as z^p z̄^q terms
    let hess_aniso = |alpha: f64| vec![(1, 1, c(2.0 + 2.0 * alpha)), (2, 0, c(alpha)), (0, 2, c(alpha))];
    let hess_two_well = |s: f64| vec![(1, 1, c(2.0 + 2.0 * s)), (2, 0, c(1.0 - s)), (0, 2, c(1.0 - s))];
    let aniso = SymbolSpec::AnisotropicQuadratic { a: 2.0, b: 0.5 };
    let forms = [
        ("anisotropic quadratic", aniso.bargmann_terms().unwrap(), lambda0(&bargmann, &aniso)),
        ("Hessian of the CP¹ anisotropic well", hess_aniso(1.0), lambda0(&cp1, &SymbolSpec::Cp1AnisotropicWell { alpha: 1.0 })),
        ("Hessian of the CP¹ two-well north pole", hess_two_well(1.5), lambda0(&cp1, &SymbolSpec::Cp1TwoWell { a: 1.0, b: 0.5 })),
    ];
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for (name, terms, l0) in forms {
        let q = PolynomialSymbol { terms };
        let scaled: Vec<f64> = [50usize, 100, 200]
            .iter()
            .map(|&n| {
                let t = build_toeplitz_matrix(&bargmann, &q, n).unwrap();
                n as f64 * diagonalize(&t, 1).unwrap().ground()
            })
            .collect();
        let err = (richardson(scaled[0], scaled[1], scaled[2]) - l0).abs();
        worst = worst.max(err);
        details.push(format!("{name} λ₀ {l0:.10} err {err:.1e}"));
    }
    // closed form at the two-well pole: (1 + √1.5)²
    let closed = (1.0 + 1.5f64.sqrt()).powi(2);
    let closed_err = (lambda0(&cp1, &SymbolSpec::Cp1TwoWell { a: 1.0, b: 0.5 }) - closed).abs();
    let pass = worst < LAMBDA0_TOL && closed_err < 1e-10 && within(t0, Duration::from_secs(60));
    report(3, "λ₀ identification", pass, format!("{}; closed form err {closed_err:.1e} (tol {LAMBDA0_TOL:.0e}), {:.2?}", details.join("; "), t0.elapsed()));
    assert!(pass);
}

/// Criterion 4's sweep: a fixed CP¹ analytic well at K = 10, output degree 36.
fn decay_sweep() -> &'static (ResidualSweep, Duration) {
    static SWEEP: OnceLock<(ResidualSweep, Duration)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let t0 = Instant::now();
        let mut cfg = ExperimentConfig::new(SymbolSpec::Cp1AnisotropicWell { alpha: 1.0 }, (2..=8).map(|k| 20 * k).collect());
        cfg.order = Some(10);
        cfg.degree = Some(36);
        cfg.fit_window = Some([40, 160]);
        let s = residual_sweep(&cfg).unwrap();
        (s, t0.elapsed())
    })
}

#[test]
fn criterion_04_exponential_residual_decay() {
    let (s, elapsed) = decay_sweep();
    for r in &s.rows {
        println!("  N {:4} residual {:.3e} |minSp − λ(N)| {:.3e} kmax {:2} edge mass {:.1e}", r.n, r.residual, r.gap_to_spec, r.kmax, r.tail_mass);
    }
    let first = s.rows.first().unwrap().residual;
    let last = s.rows.last().unwrap().residual;
    let drop = first / last;
    let (pass, detail) = match &s.fit {
        Some(fit) => (
            fit.slope > 0.0 && fit.r_squared >= DECAY_R2 && drop >= DECAY_DROP && *elapsed < Duration::from_secs(600),
            format!(
                "c′ {:.4} ± {:.4}, R² {:.5} (≥ {DECAY_R2}), residual drop {drop:.2e} (≥ {DECAY_DROP:.0e}), {elapsed:.2?}",
                fit.slope, fit.stderr, fit.r_squared
            ),
        ),
        None => (false, "no fit: too few residuals above the floor".into()),
    };
    report(4, "exponential residual decay", pass, detail);
    assert!(pass);
}

#[test]
fn criterion_05_eigenvalue_proximity() {
    let (s, _) = decay_sweep();
    let bound = s.rows.iter().all(|r| r.bound_ok && r.gap_to_spec <= r.residual);
    let above_floor = s.rows.iter().filter(|r| r.gap_to_spec >= 1e-13).count();
    let (ratio_ok, detail) = match (&s.fit, &s.gap_fit) {
        (Some(rf), Some(gf)) => {
            let ratio = gf.slope / rf.slope;
            (ratio >= SLOPE_RATIO.0 && ratio <= SLOPE_RATIO.1, format!("slope ratio {ratio:.3} (window {SLOPE_RATIO:?})"))
        }
        _ => (
            false,
            format!(
                "slope ratio not measurable: |minSp − λ(N)| is above 1e-13 on {above_floor} of {} rows (max {:.1e})",
                s.rows.len(),
                s.rows.iter().map(|r| r.gap_to_spec).fold(0.0, f64::max)
            ),
        ),
    };
    report(5, "eigenvalue proximity", bound && ratio_ok, format!("Hermitian bound on every row: {bound}; {detail}"));
    assert!(bound, "the Hermitian bound |minSp − λ(N)| ≤ residual failed");
    // The comparable-slope half is reported above; it is only asserted when
    // the gap is resolvable in double precision.
    if above_floor >= 3 {
        assert!(ratio_ok);
    }
}

#[test]
fn criterion_06_transport_oracle() {
    let d = 12;
    let x = PowerSeries::variable(1, d, 0);
    let p = TransportProblem::from_vector_field(std::slice::from_ref(&x), x.clone(), x.clone(), 0).unwrap();
    let u = solve_transport(&p, d).unwrap().u;
    let mut fact = 1.0;
    let mut exp_err = 0.0f64;
    for k in 1..=d {
        fact *= k as f64;
        exp_err = exp_err.max((u.coeff(&[k as u32]) - c(1.0 / fact)).norm());
    }
    exp_err = exp_err.max(u.constant_term().norm());

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mirror_err = 0.0f64;
    for i in 0..20 {
        let nv = 1 + i % 2;
        let deg = rng.gen_range(2..=6);
        let lambda: Vec<Q> = (0..nv).map(|_| q(rng.gen_range(1..=6), 2)).collect();
        let field: Vec<RPoly> = (0..nv).map(|_| random_poly(&mut rng, nv, deg, 2, 0.5)).collect();
        let h = random_poly(&mut rng, nv, deg, 1, 0.6);
        let g = random_poly(&mut rng, nv, deg, 1, 0.6);
        let exact = transport_exact(&lambda, &field, &h, &g, deg);
        assert!(transport_residual(&lambda, &field, &h, &g, &exact).terms.is_empty());
        let xs: Vec<PowerSeries> = (0..nv)
            .map(|j| &PowerSeries::variable(nv, deg, j).scale_real(lambda[j].to_f64().unwrap()) + &field[j].to_series())
            .collect();
        let prob = TransportProblem::from_vector_field(&xs, h.to_series(), g.to_series(), 0).unwrap();
        let sol = solve_transport(&prob, deg).unwrap();
        let scale = exact.terms.values().map(|v| v.to_f64().unwrap().abs()).fold(1.0, f64::max);
        mirror_err = mirror_err.max(exact.max_diff(&sol.u) / scale);
    }
    let pass = exp_err < TRANSPORT_TOL && mirror_err < TRANSPORT_TOL;
    report(
        6,
        "transport oracle",
        pass,
        format!("e^x − 1 through degree 12 err {exp_err:.1e}; 20 rational problems max rel err {mirror_err:.1e} (tol {TRANSPORT_TOL:.0e})"),
    );
    assert!(pass);
}

/// a_k(x) = Σ_j ξ_{jk} C r^j R^k (j+k)!/j! x^j with ξ uniform in the unit square.
fn class_fixture(rng: &mut ChaCha8Rng, order: usize, degree: usize, r: f64, big_r: f64) -> AnalyticSymbol {
    let mut lnf = vec![0.0f64; order + degree + 2];
    for n in 1..lnf.len() {
        lnf[n] = lnf[n - 1] + (n as f64).ln();
    }
    let terms = (0..=order)
        .map(|k| {
            let cs: Vec<Complex64> = (0..=degree)
                .map(|j| {
                    let mag = (j as f64 * r.ln() + k as f64 * big_r.ln() + lnf[j + k] - lnf[j]).exp();
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * mag
                })
                .collect();
            PowerSeries::from_univariate(&cs, degree)
        })
        .collect();
    AnalyticSymbol::new(terms).unwrap()
}

#[test]
fn criterion_07_symbol_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ns: Vec<usize> = (3..=15).map(|k| 2 * k).collect();
    let floor = 1e-13;
    let mut cauchy_slopes = Vec::new();
    let mut tail_slopes = Vec::new();
    let mut inverse_err = 0.0f64;
    for _ in 0..3 {
        let big_r = 1.0;
        let a = class_fixture(&mut rng, 60, 6, 0.5, big_r);
        let b = class_fixture(&mut rng, 60, 6, 0.5, big_r);
        let ab = cauchy_product(&a, &b).unwrap();
        let cr = truncation_rate(big_r);
        let x0 = [c(0.3)];
        let mut diffs = Vec::new();
        let mut tails = Vec::new();
        for &n in &ns {
            let lhs = summate(&ab, n, cr).unwrap().evaluate(&x0);
            let rhs = summate(&a, n, cr).unwrap().evaluate(&x0) * summate(&b, n, cr).unwrap().evaluate(&x0);
            diffs.push((lhs - rhs).norm() / rhs.norm().max(1e-300));
            let full = summate(&a, n, cr).unwrap().evaluate(&x0);
            let half = summate(&a, n, 0.5 * cr).unwrap().evaluate(&x0);
            tails.push((full - half).norm() / full.norm().max(1e-300));
        }
        cauchy_slopes.push(fit_rate(&ns, &diffs, Some([ns[0], *ns.last().unwrap()]), floor).map(|f| f.slope).unwrap_or(f64::NAN));
        tail_slopes.push(fit_rate(&ns, &tails, Some([ns[0], *ns.last().unwrap()]), floor).map(|f| f.slope).unwrap_or(f64::NAN));

        // round trip on a short symbol, relative to the size of the products involved
        let s = class_fixture(&mut rng, 12, 6, 0.5, 0.5);
        let mut s0 = s.clone();
        s0.terms[0] = s0.terms[0].add_constant(c(4.0));
        let inv = symbol_inverse(&s0, 0.5).unwrap();
        let id = cauchy_product(&s0, &inv).unwrap();
        for (k, t) in id.terms.iter().enumerate() {
            let want = if k == 0 { PowerSeries::one(1, t.max_degree()) } else { PowerSeries::zeros(1, t.max_degree()) };
            let scale: f64 = (0..=k).map(|i| s0.terms[i].max_abs() * inv.terms[k - i].max_abs()).fold(1.0, f64::max);
            inverse_err = inverse_err.max(t.max_abs_diff(&want) / scale);
        }
    }
    let pass = cauchy_slopes.iter().all(|s| *s > 0.0) && tail_slopes.iter().all(|s| *s > 0.0) && inverse_err < INVERSE_TOL;
    report(
        7,
        "symbol algebra",
        pass,
        format!("Cauchy-identity slopes {cauchy_slopes:.3?}; tail-change slopes {tail_slopes:.3?}; inverse round trip {inverse_err:.1e} (tol {INVERSE_TOL:.0e})"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_growth_envelopes() {
    let model = KahlerModel::cp1();
    let opts = WkbOptions { order: 10, ..Default::default() };
    let f = SymbolSpec::Cp1AnisotropicWell { alpha: 1.0 }.germ(Well::North, opts.internal_degree()).unwrap();
    let w = wkb_expand(&model, &f, opts).unwrap();
    let env = w.fits.envelope.expect("envelope fit");
    let flag = w.fits.u.as_ref().is_some_and(|f| f.geometric);
    let mut uncovered = 0;
    let mut points = 0;
    for (k, l) in w.lambda.iter().enumerate() {
        points += 1;
        if l.abs() > env.bound(0, k) {
            uncovered += 1;
        }
    }
    for (k, u) in w.u.terms.iter().enumerate() {
        for j in 0..=u.max_degree().min(10) {
            points += 1;
            if u.derivative_norm_at_zero(j) > env.bound(j, k) {
                uncovered += 1;
            }
        }
    }
    let pass = uncovered == 0 && flag;
    report(
        8,
        "growth bounds",
        pass,
        format!("(C, r, R) = ({:.3e}, {:.3}, {:.3}); {uncovered} of {points} points uncovered; geometric flag {flag}", env.c, env.r, env.big_r),
    );
    assert!(pass);
}

#[test]
fn criterion_09_tunnelling() {
    let t0 = Instant::now();
    let chi = vec![1.0, 0.5];
    let sym = tunnelling_gap_sweep(&ExperimentConfig::new(SymbolSpec::Cp1DoubleWell { chi: chi.clone() }, vec![25, 50, 100, 200, 400])).unwrap();
    let mut slopes = Vec::new();
    let mut fits_ok = true;
    for center in [0.5, 0.65, 0.8] {
        let spec = SymbolSpec::Cp1DoubleWellPerturbed { chi: chi.clone(), center, width: 0.1, height: 1.0 };
        let g = tunnelling_gap_sweep(&ExperimentConfig::new(spec, (2..=8).map(|k| 10 * k).collect())).unwrap();
        fits_ok &= g.rows.iter().all(|r| r.gap > 0.0);
        slopes.push(g.fit.map(|f| f.slope).unwrap_or(f64::NAN));
    }
    let decreasing = slopes.windows(2).all(|w| w[1] < w[0]);
    let pass = sym.max_gap < DEGENERATE_GAP
        && fits_ok
        && slopes.iter().all(|s| *s > 0.0)
        && decreasing
        && within(t0, Duration::from_secs(600));
    report(
        9,
        "tunnelling",
        pass,
        format!(
            "symmetric max gap {:.1e} (tol {DEGENERATE_GAP:.0e}) for N ≤ 400; bump centres 0.5, 0.65, 0.8 give slopes {slopes:.4?}; {:.2?}",
            sym.max_gap,
            t0.elapsed()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_low_lying_count() {
    let (a, b) = (1.0, 0.5);
    let r = low_lying_count(&ExperimentConfig::new(SymbolSpec::Cp1TwoWell { a, b }, vec![20, 40, 80, 160])).unwrap();
    let l0: Vec<f64> = r.wells.iter().map(|w| w.1).collect();
    let half_gap = 0.5 * (l0[0] - l0[1]).abs();
    let pass = r.rows.iter().all(|row| row.count == 1) && (r.epsilon - half_gap).abs() < 1e-12;
    let counts: Vec<(usize, usize)> = r.rows.iter().map(|row| (row.n, row.count)).collect();
    report(10, "low-lying count", pass, format!("λ₀ per well {l0:.6?}, ε {:.6}, (N, count) {counts:?}", r.epsilon));
    assert!(pass);
}
