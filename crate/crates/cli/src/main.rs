mod config;
mod plot;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use plotters::style::RGBColor;
use serde::Serialize;
use serde_json::json;
use toeplitz_wkb::experiments::{
    decay_profile, expansion, low_lying_count, low_spectrum, residual_sweep, tunnelling_gap_sweep, ExperimentConfig,
};
use toeplitz_wkb::families::Well;
use toeplitz_wkb::symbol::SymbolClassParams;
use toeplitz_wkb::wkb::WkbFits;

use config::ConfigError;
use plot::{line_chart, Series};
use report::{OutDir, Provenance};

const THREADS_ENV: &str = "TOEPLITZ_WKB_THREADS";

const BLUE: RGBColor = RGBColor(31, 119, 180);
const ORANGE: RGBColor = RGBColor(255, 127, 14);
const GREEN: RGBColor = RGBColor(44, 160, 44);
const PALETTE: [RGBColor; 6] =
    [BLUE, ORANGE, GREEN, RGBColor(214, 39, 40), RGBColor(148, 103, 189), RGBColor(140, 86, 75)];

#[derive(Parser)]
#[command(name = "toeplitz-wkb", version, about = "WKB quasimodes and spectra of Berezin-Toeplitz operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Reserved for stochastic experiments; all current runs are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip the SVG charts.
    #[arg(long, global = true)]
    no_plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// WKB expansion at one well: λ_k, growth fits, Hamilton-Jacobi diagnostics.
    Wkb(RunArgs),
    /// Lowest eigenvalues of T_N(f) for every N.
    Spectrum(RunArgs),
    /// Quasimode residuals and |minSp − λ(N)| against N, with rate fits.
    ResidualSweep(RunArgs),
    /// Gap between the two lowest eigenvalues of a double well.
    GapSweep(RunArgs),
    /// Eigenvalues below (min λ₀ + ε)/N against the number of minimizing wells.
    Count(RunArgs),
    /// Decay profile of the ground state along rays from the well.
    Profile(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (.toml or .json).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a run that still produced its artifacts.
#[derive(Debug)]
struct ExperimentFailure(String);

impl std::fmt::Display for ExperimentFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ExperimentFailure {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return fail("threads", &e.to_string(), None, 2);
    }
    match run(&cli) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                return fail("config", &c.message, Some((&c.file, &c.path)), 2);
            }
            if let Some(x) = e.downcast_ref::<ExperimentFailure>() {
                return fail("experiment", &x.0, None, 1);
            }
            fail("run", &format!("{e:#}"), None, 1)
        }
    }
}

fn fail(kind: &str, message: &str, at: Option<(&str, &str)>, code: u8) -> ExitCode {
    let mut v = json!({ "error": kind, "message": message });
    if let Some((file, path)) = at {
        v["file"] = json!(file);
        v["path"] = json!(path);
    }
    eprintln!("{v}");
    ExitCode::from(code)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let (name, args) = match &cli.command {
        Command::Wkb(a) => ("wkb", a),
        Command::Spectrum(a) => ("spectrum", a),
        Command::ResidualSweep(a) => ("residual-sweep", a),
        Command::GapSweep(a) => ("gap-sweep", a),
        Command::Count(a) => ("count", a),
        Command::Profile(a) => ("profile", a),
    };
    let cfg = config::load(&args.config)?;
    let root = args.out.clone().or_else(|| cfg.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let mut out = OutDir::create(&root)?;
    let prov = Provenance::new(name, &cfg, cli.seed);
    info!("{name}: {} on {:?}, N = {:?}", cfg.symbol.name(), cfg.model, cfg.n_values);
    let plots = !cli.no_plot;
    let outcome = match &cli.command {
        Command::Wkb(_) => wkb(&cfg, &prov, &mut out, plots),
        Command::Spectrum(_) => spectrum(&cfg, &prov, &mut out, plots),
        Command::ResidualSweep(_) => residuals(&cfg, &prov, &mut out, plots),
        Command::GapSweep(_) => gaps(&cfg, &prov, &mut out, plots),
        Command::Count(_) => count(&cfg, &prov, &mut out),
        Command::Profile(_) => profile(&cfg, &prov, &mut out, plots),
    };
    outcome.map(|()| out.written)
}

fn chart(out: &mut OutDir, name: &str, draw: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let path = out.path(name);
    draw(&path)?;
    out.mark(path);
    Ok(())
}

#[derive(Serialize)]
struct WkbReport<'a> {
    well: Well,
    order: usize,
    degree: usize,
    lambda: &'a [f64],
    lambda_imag: &'a [f64],
    truncation_rate: f64,
    fits: &'a WkbFits,
    envelope: Option<SymbolClassParams>,
    hamilton_jacobi: serde_json::Value,
    diagnostics: serde_json::Value,
    /// Taylor coefficients of φ and of each u_k in the chart variable.
    phi: Vec<[f64; 2]>,
    u: Vec<Vec<[f64; 2]>>,
}

fn wkb(cfg: &ExperimentConfig, prov: &Provenance, out: &mut OutDir, plots: bool) -> Result<()> {
    let well = cfg.well.unwrap_or(Well::North);
    let w = expansion(cfg, well)?;
    let coeffs = |s: &toeplitz_wkb::PowerSeries| s.coeffs().iter().map(|c| [c.re, c.im]).collect::<Vec<_>>();
    let hj = &w.hj;
    let report = WkbReport {
        well,
        order: w.order,
        degree: w.degree,
        lambda: &w.lambda,
        lambda_imag: &w.lambda_imag,
        truncation_rate: w.c,
        fits: &w.fits,
        envelope: w.fits.envelope,
        hamilton_jacobi: json!({
            "degree": hj.degree,
            "t": hj.t,
            "radius": hj.radius,
            "convergence_radius": hj.convergence_radius,
            "sigma": [hj.sigma.re, hj.sigma.im],
            "hj_residual": hj.hj_residual,
            "gradient_residual": hj.gradient_residual,
            "t_ladder": hj.t_ladder,
            "provenance": hj.provenance,
        }),
        diagnostics: json!({
            "eigen_residuals": w.eigen_residuals,
            "transport_residuals": w.transport_residuals,
            "eikonal_defect": w.eikonal_defect,
            "b_defect": w.b_defect,
            "diagonal_defect": w.diagonal_defect,
        }),
        phi: coeffs(&hj.phi),
        u: w.u.terms.iter().map(coeffs).collect(),
    };
    out.csv("lambda.csv", &["k", "lambda", "lambdaImag"], w.lambda.iter().zip(&w.lambda_imag).enumerate().map(|(k, (l, i))| (k, l, i)))?;
    out.json("wkb.json", prov, cfg, &report)?;
    if plots {
        let pts = w.lambda.iter().enumerate().map(|(k, l)| (k as f64, l.abs())).collect();
        chart(out, "lambda.svg", |p| line_chart(p, "WKB coefficients", "k", "|λ_k|", &[Series { label: "|λ_k|", points: pts, color: BLUE }], true))?;
    }
    Ok(())
}

fn spectrum(cfg: &ExperimentConfig, prov: &Provenance, out: &mut OutDir, plots: bool) -> Result<()> {
    let rows = low_spectrum(cfg)?;
    out.csv("spectrum.csv", &["N", "index", "eigenvalue", "scaled"], rows.iter().map(|r| (r.n, r.index, r.eigenvalue, r.scaled)))?;
    out.json("spectrum.json", prov, cfg, &json!({ "rows": rows }))?;
    if plots {
        let top = rows.iter().map(|r| r.index).max().unwrap_or(0);
        let labels: Vec<String> = (0..=top).map(|i| format!("N·μ_{i}")).collect();
        let series: Vec<Series> = (0..=top)
            .map(|i| Series {
                label: &labels[i],
                points: rows.iter().filter(|r| r.index == i).map(|r| (r.n as f64, r.scaled)).collect(),
                color: PALETTE[i % PALETTE.len()],
            })
            .collect();
        chart(out, "spectrum.svg", |p| line_chart(p, "Low-lying spectrum", "N", "N·eigenvalue", &series, false))?;
    }
    Ok(())
}

fn residuals(cfg: &ExperimentConfig, prov: &Provenance, out: &mut OutDir, plots: bool) -> Result<()> {
    let s = residual_sweep(cfg)?;
    out.csv(
        "residual.csv",
        &["N", "residual", "minSp", "lambdaN", "gapToSpec"],
        s.rows.iter().map(|r| (r.n, r.residual, r.min_sp, r.lambda_n, r.gap_to_spec)),
    )?;
    out.json("residual_fit.json", prov, cfg, &s)?;
    if plots {
        let series = [
            Series { label: "residual", points: s.rows.iter().map(|r| (r.n as f64, r.residual)).collect(), color: BLUE },
            Series { label: "|minSp − λ(N)|", points: s.rows.iter().map(|r| (r.n as f64, r.gap_to_spec)).collect(), color: ORANGE },
        ];
        chart(out, "residual.svg", |p| line_chart(p, "Quasimode residual", "N", "value", &series, true))?;
    }
    s.check().map_err(|e| ExperimentFailure(e.to_string()))?;
    Ok(())
}

fn gaps(cfg: &ExperimentConfig, prov: &Provenance, out: &mut OutDir, plots: bool) -> Result<()> {
    let g = tunnelling_gap_sweep(cfg)?;
    out.csv(
        "gap.csv",
        &["N", "lambda0", "lambda1", "gap", "floorLimited"],
        g.rows.iter().map(|r| (r.n, r.lambda0, r.lambda1, r.gap, r.floor_limited)),
    )?;
    out.json("gap_fit.json", prov, cfg, &g)?;
    if plots {
        let series = [Series { label: "λ₁ − λ₀", points: g.rows.iter().map(|r| (r.n as f64, r.gap)).collect(), color: BLUE }];
        // a fully degenerate doublet has nothing positive to draw on a log axis
        if !g.degenerate {
            chart(out, "gap.svg", |p| line_chart(p, "Tunnelling gap", "N", "gap", &series, true))?;
        }
    }
    Ok(())
}

fn count(cfg: &ExperimentConfig, prov: &Provenance, out: &mut OutDir) -> Result<()> {
    let r = low_lying_count(cfg)?;
    out.csv(
        "count.csv",
        &["N", "count", "expected", "equal", "ambiguous", "windowTop"],
        r.rows.iter().map(|c| (c.n, c.count, c.expected, c.equal, c.ambiguous, c.window_top)),
    )?;
    out.json("count.json", prov, cfg, &r)?;
    if let Some(bad) = r.rows.iter().find(|c| !c.equal) {
        return Err(ExperimentFailure(format!("N={}: counted {} eigenvalues, expected {}", bad.n, bad.count, bad.expected)).into());
    }
    Ok(())
}

fn profile(cfg: &ExperimentConfig, prov: &Provenance, out: &mut OutDir, plots: bool) -> Result<()> {
    let p = decay_profile(cfg)?;
    out.csv(
        "profile.csv",
        &["angle", "rho", "exact", "wkb", "model"],
        p.rows.iter().map(|r| (r.angle, r.rho, r.exact, r.wkb, r.model)),
    )?;
    out.json("profile.json", prov, cfg, &p)?;
    if plots {
        let ray: Vec<_> = p.rows.iter().filter(|r| r.angle == 0.0).collect();
        let series = [
            Series { label: "exact ground state", points: ray.iter().map(|r| (r.rho, r.exact)).collect(), color: BLUE },
            Series { label: "WKB quasimode", points: ray.iter().map(|r| (r.rho, r.wkb)).collect(), color: ORANGE },
            Series { label: "φ − Re φ_WKB", points: ray.iter().map(|r| (r.rho, r.model)).collect(), color: GREEN },
        ];
        chart(out, "profile.svg", |path| line_chart(path, &format!("Decay rate at N = {}", p.n), "|x|", "rate", &series, false))?;
    }
    Ok(())
}
