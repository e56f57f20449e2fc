use nalgebra::DVector;
use num_complex::Complex64;
use toeplitz_wkb::families::{SymbolSpec, Well};
use toeplitz_wkb::models::KahlerModel;
use toeplitz_wkb::quantization::build_toeplitz_matrix;
use toeplitz_wkb::wkb::{build_b_symbol, OperatorExpansion, StationaryPhaseContext};
use toeplitz_wkb::PowerSeries;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn loglog_slope(ns: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

/// T_N(f) applied to a polynomial section, by the exact matrix and by the
/// operator expansion truncated at order `top`; returns the errors per N.
fn expansion_errors(top: usize, ns: &[usize]) -> Vec<f64> {
    let model = KahlerModel::cp1();
    let spec = SymbolSpec::Cp1AnisotropicWell { alpha: 1.0 };
    let d = 28;
    let f = spec.germ(Well::North, d).unwrap();
    let ctx = StationaryPhaseContext::new(&model, &PowerSeries::zeros(1, d), d).unwrap();
    let b = build_b_symbol(&model, &f.polarize().unwrap(), top, 0.5).unwrap();
    let ops = OperatorExpansion::from_symbol(&ctx, &b, top).unwrap();
    let u = PowerSeries::from_univariate(&[c(1.0), c(0.3), c(-0.2)], d);
    let pk: Vec<PowerSeries> = (0..=top).map(|k| ops.apply(k, &u).unwrap()).collect();
    let x0 = Complex64::new(0.2, 0.05);
    ns.iter()
        .map(|&n| {
            let t = build_toeplitz_matrix(&model, &spec, n).unwrap();
            let v = DVector::from_fn(t.dim, |j, _| {
                u.coeffs().get(j).copied().unwrap_or_default() * model.basis_norm_sq(n, j).sqrt()
            });
            let w = &t.entries * v;
            let exact = model.eval_section(n, w.as_slice(), x0);
            let approx: Complex64 = pk.iter().enumerate().map(|(k, p)| p.evaluate(&[x0]) * (n as f64).powi(-(k as i32))).sum();
            (exact - approx).norm()
        })
        .collect()
}

#[test]
fn expansion_error_decays_at_the_next_order() {
    let ns = [100, 150, 200, 300];
    for top in [1usize, 3] {
        let errs = expansion_errors(top, &ns);
        let slope = loglog_slope(&ns, &errs);
        println!("order {top}: errors {errs:?}, slope {slope:.3}");
        assert!((slope + (top as f64 + 1.0)).abs() < 0.3, "order {top}: slope {slope}");
    }
}
