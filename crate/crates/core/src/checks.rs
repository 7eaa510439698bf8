//! Built-in oracle suite behind `icflow check`.
//!
//! Every row compares the library against something computed independently:
//! closed forms, refinement ratios or algebraic identities.

use std::sync::Arc;

use crate::background::{BackgroundParams, WarpProfile};
use crate::curvature::{CurvatureFunction, CurvatureKind};
use crate::diagnostics::log_linear_fit;
use crate::error::Result;
use crate::flow::{FlowConfig, InitialData, Simulation};
use crate::geometry::{identity_residuals_with, GraphState, IdentityResiduals};
use crate::sphere::{frobenius_norm, GridSpec, SphereGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Fault injection for exercising the suite itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct SuiteOptions {
    /// Feed `-lambda''` into the ambient curvature of the identity checks.
    pub flip_ddlambda: bool,
}

impl CheckRow {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((pass, detail)) => Self::new(name, pass, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

pub fn run_suite(opts: SuiteOptions) -> Vec<CheckRow> {
    let mut rows = vec![
        CheckRow::from_result("background ode residual", ode_residual()),
        CheckRow::from_result("hyperbolic sinh match", sinh_match()),
        CheckRow::from_result("tangential curvature closed form", tangential_closed_form()),
        CheckRow::from_result("tangential curvature decay slope", tangential_slope()),
    ];
    rows.extend(curvature_axioms());
    rows.push(CheckRow::from_result("grid refinement order", grid_orders()));
    rows.push(CheckRow::from_result("geodesic sphere umbilic", geodesic_sphere()));
    rows.push(CheckRow::from_result("umbilic flow exactness", umbilic_flow()));
    match identity_orders(opts) {
        Ok(res) => rows.extend(identity_rows(&res)),
        Err(e) => rows.push(CheckRow::new("identities", false, format!("error: {e}"))),
    }
    rows
}

pub fn format_table(rows: &[CheckRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in rows {
        let mark = if r.pass { "PASS" } else { "FAIL" };
        s.push_str(&format!("{:<width$}  {mark}  {}\n", r.name, r.detail));
    }
    s
}

fn ode_residual() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (m, n) in [(0.0, 2), (1.0, 2), (2.0, 2), (1.0, 3)] {
        let prof = WarpProfile::build(BackgroundParams::new(m, n)?, 12.0)?;
        worst = prof.ode_residuals()?.iter().fold(worst, |a, p| a.max(p.1));
    }
    Ok((worst <= 1e-9, format!("max relative residual {worst:.2e} (tol 1e-9)")))
}

fn sinh_match() -> Result<(bool, String)> {
    let prof = WarpProfile::build(BackgroundParams::new(0.0, 2)?, 12.0)?;
    let mut worst: f64 = 0.0;
    for k in 1..=110 {
        let r = 0.1 * k as f64;
        worst = worst.max((prof.lambda(r)? / r.sinh() - 1.0).abs());
    }
    Ok((worst <= 1e-8, format!("max relative error {worst:.2e} (tol 1e-8)")))
}

fn tangential_closed_form() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (m, n) in [(1.0, 2), (2.0, 2), (1.0, 3)] {
        let prof = WarpProfile::build(BackgroundParams::new(m, n)?, 10.0)?;
        for k in 1..=100 {
            let r = 0.1 * k as f64;
            let lam = prof.lambda(r)?;
            let (k_tan, _) = prof.ambient_sectional(r)?;
            worst = worst.max((k_tan + 1.0 - m * lam.powi(-(n as i32) - 1)).abs());
        }
    }
    Ok((worst <= 1e-10, format!("max error {worst:.2e} (tol 1e-10)")))
}

fn tangential_slope() -> Result<(bool, String)> {
    let mut detail = Vec::new();
    let mut pass = true;
    // K_tan + 1 ~ lambda^(-n-1) hits the rounding floor sooner for larger n
    for (n, r0, r1) in [(2, 5.0, 10.0), (3, 4.0, 7.0)] {
        let prof = WarpProfile::build(BackgroundParams::new(1.0, n)?, 12.0)?;
        let mut pts = Vec::new();
        for k in 0..=50 {
            let r = r0 + (r1 - r0) * k as f64 / 50.0;
            pts.push((r, (prof.ambient_sectional(r)?.0 + 1.0).abs()));
        }
        let slope = log_linear_fit(&pts).0;
        let target = -(n as f64 + 1.0);
        pass &= (slope / target - 1.0).abs() <= 0.02;
        detail.push(format!("n={n}: {slope:.4} vs {target}"));
    }
    Ok((pass, detail.join(", ")))
}

/// Low-discrepancy points in `[lo, hi]^dim`.
fn kronecker(count: usize, dim: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let alphas = [
        0.754_877_666_246_692_7,
        0.569_840_290_998_053_3,
        0.438_579_868_835_092_6,
    ];
    (1..=count)
        .map(|i| {
            (0..dim)
                .map(|d| lo + (hi - lo) * (0.5 + i as f64 * alphas[d]).fract())
                .collect()
        })
        .collect()
}

fn curvature_axioms() -> Vec<CheckRow> {
    let mut rows = Vec::new();
    for n in [2u32, 3] {
        for kind in [
            CurvatureKind::Mean,
            CurvatureKind::SigmaRoot(2),
            CurvatureKind::Quotient(2),
        ] {
            let name = format!("curvature axioms {kind:?} n={n}");
            rows.push(CheckRow::from_result(&name, axioms_for(kind, n)));
        }
    }
    rows
}

fn axioms_for(kind: CurvatureKind, n: u32) -> Result<(bool, String)> {
    let f = CurvatureFunction::new(kind, n)?;
    let dim = n as usize;
    let norm = (f.eval(&vec![1.0; dim])? - n as f64).abs();
    let (mut homog, mut euler, mut concave, mut grad): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let pts = kronecker(1000, dim, 0.05, 20.0);
    for (i, k) in pts.iter().enumerate() {
        let fk = f.eval(k)?;
        let s = 0.3 + 0.01 * (i % 500) as f64;
        let scaled: Vec<f64> = k.iter().map(|x| s * x).collect();
        homog = homog.max((f.eval(&scaled)? - s * fk).abs() / (s * fk));
        let g = f.grad(k)?;
        let e: f64 = g.iter().zip(k).map(|(a, b)| a * b).sum();
        euler = euler.max((e - fk).abs() / fk);
        let other = &pts[(i * 7 + 3) % pts.len()];
        let mid: Vec<f64> = k.iter().zip(other).map(|(a, b)| 0.5 * (a + b)).collect();
        let gap = 0.5 * (fk + f.eval(other)?) - f.eval(&mid)?;
        concave = concave.max(gap / fk);
        for j in 0..dim {
            let h = 1e-6 * k[j];
            let mut up = k.clone();
            let mut dn = k.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (f.eval(&up)? - f.eval(&dn)?) / (2.0 * h);
            grad = grad.max((fd - g[j]).abs() / g[j].abs().max(1e-3));
        }
    }
    let pass = norm <= 1e-12 && homog <= 1e-10 && euler <= 1e-10 && concave <= 1e-12 && grad <= 1e-6;
    Ok((
        pass,
        format!("norm {norm:.1e} homog {homog:.1e} euler {euler:.1e} concavity gap {concave:.1e} gradient {grad:.1e}"),
    ))
}

/// Worst error in the frame derivatives of `z = cos(theta)`.
fn harmonic_z_error(grid: &SphereGrid) -> f64 {
    let f = grid.sample(|t, _| t.cos());
    let d = grid.frame_derivatives(&f);
    (0..grid.len())
        .map(|i| {
            let (t, _) = grid.coords(i);
            let z = t.cos();
            frobenius_norm([d[i].hess[0] + z, d[i].hess[1], d[i].hess[2] + z])
                .max((d[i].grad[0] + t.sin()).abs())
                .max(d[i].grad[1].abs())
        })
        .fold(0.0, f64::max)
}

fn grid_orders() -> Result<(bool, String)> {
    let mut orders = Vec::new();
    for (a, b) in [
        (SphereGrid::axisymmetric(64)?, SphereGrid::axisymmetric(128)?),
        (SphereGrid::axisymmetric(128)?, SphereGrid::axisymmetric(256)?),
        (SphereGrid::latlong(32, 64)?, SphereGrid::latlong(64, 128)?),
    ] {
        orders.push((harmonic_z_error(&a) / harmonic_z_error(&b)).log2());
    }
    let pass = orders.iter().all(|&o| o >= 1.9);
    Ok((pass, format!("observed orders {orders:.3?} (min 1.9)")))
}

fn geodesic_sphere() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for m in [0.0, 1.0, 2.0] {
        let prof = Arc::new(WarpProfile::build(BackgroundParams::new(m, 2)?, 8.0)?);
        let grid = Arc::new(SphereGrid::latlong(16, 32)?);
        for r in [1.5, 3.0] {
            let state = GraphState::from_radius(grid.clone(), prof.clone(), &vec![r; grid.len()], 0.0)?;
            let w = prof.derivatives(r)?;
            let want = w.dlambda / w.lambda;
            for g in state.extrinsic() {
                worst = worst.max((g.kappa[0] - want).abs()).max((g.kappa[1] - want).abs());
            }
        }
    }
    Ok((worst <= 1e-12, format!("max error {worst:.2e} (tol 1e-12)")))
}

fn umbilic_flow() -> Result<(bool, String)> {
    let mut trajectories = Vec::new();
    let mut worst: f64 = 0.0;
    for name in ["mean", "sigma2root", "quotient2"] {
        let mut c = FlowConfig::new(
            BackgroundParams::new(2.0, 2)?,
            GridSpec::axisymmetric(16),
            InitialData::ConstantLambda { lambda0: 2.0 },
            CurvatureFunction::from_name(name, 2)?,
        );
        c.t_end = 3.0;
        let out = Simulation::new(c)?.run()?;
        for r in &out.series {
            let e = (r.lambda_scaled_min / 2.0 - 1.0)
                .abs()
                .max((r.lambda_scaled_max / 2.0 - 1.0).abs());
            worst = worst.max(e);
        }
        trajectories.push(out.state.phi);
    }
    let spread = trajectories[1..]
        .iter()
        .flat_map(|t| t.iter().zip(&trajectories[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok((
        worst <= 1e-5 && spread <= 1e-9,
        format!("max |lambda e^(-t/2)/2 - 1| {worst:.2e} (tol 1e-5), spread across F {spread:.1e}"),
    ))
}

fn identity_orders(opts: SuiteOptions) -> Result<Vec<IdentityResiduals>> {
    let prof = Arc::new(WarpProfile::build(BackgroundParams::new(1.0, 2)?, 6.0)?);
    let f = CurvatureFunction::new(CurvatureKind::Mean, 2)?;
    let mut out = Vec::new();
    for n in [64, 128, 256] {
        let grid = Arc::new(SphereGrid::axisymmetric(n)?);
        let r0 = grid.sample(|t, _| 2.0 + 0.3 * t.cos());
        let state = GraphState::from_radius(grid, prof.clone(), &r0, 0.0)?;
        let sign = if opts.flip_ddlambda { -1.0 } else { 1.0 };
        out.push(identity_residuals_with(&state, &f, |l| sign * prof.ddlambda_of(l))?);
    }
    Ok(out)
}

type Pick = (&'static str, fn(&IdentityResiduals) -> f64);

fn identity_rows(res: &[IdentityResiduals]) -> Vec<CheckRow> {
    let pick: [Pick; 3] = [
        ("identity ambient curvature", |r| r.curvature),
        ("identity gradient of v", |r| r.gradient_v),
        ("identity radial form of grad v", |r| r.radial_v),
    ];
    pick.iter()
        .map(|(name, get)| {
            let errs: Vec<f64> = res.iter().map(get).collect();
            let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
            let pass = ratios.iter().all(|&q| q >= 3.5);
            let errs: Vec<String> = errs.iter().map(|e| format!("{e:.2e}")).collect();
            CheckRow::new(
                name,
                pass,
                format!("errors [{}] ratios {ratios:.2?} (min 3.5)", errs.join(", ")),
            )
        })
        .collect()
}
