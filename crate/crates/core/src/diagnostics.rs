//! Per-snapshot scalars, exponential rate fits and the theorem report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureFunction;
use crate::error::{Error, Result};
use crate::geometry::{GraphState, NodeGeometry};
use crate::sphere::{inf, spectral_norm, sup};

/// Values below this are treated as floating-point noise by the rate fits.
pub const RATE_FLOOR: f64 = 1e-13;
pub const MIN_FIT_POINTS: usize = 8;

/// Quantities of the initial surface that later snapshots are compared to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub n: u32,
    pub inf_r0: f64,
    pub sup_r0: f64,
    pub lambda_inf_r0: f64,
    pub lambda_sup_r0: f64,
    pub grad_sq0: f64,
    pub f_max0: f64,
    /// `n max lambda'/lambda` over the initial surface.
    pub umbilic_bound0: f64,
}

impl Reference {
    pub fn from_initial(state: &GraphState, geo: &[NodeGeometry], f: &CurvatureFunction) -> Result<Self> {
        let (i_lo, i_hi) = argminmax(&state.r);
        let mut f_max0 = f64::NEG_INFINITY;
        for g in geo {
            f_max0 = f_max0.max(f.eval_grad2(g.kappa)?.0);
        }
        let n = f.n;
        Ok(Self {
            n,
            inf_r0: state.r[i_lo],
            sup_r0: state.r[i_hi],
            lambda_inf_r0: state.lambda[i_lo],
            lambda_sup_r0: state.lambda[i_hi],
            grad_sq0: geo
                .iter()
                .map(|g| g.grad[0] * g.grad[0] + g.grad[1] * g.grad[1])
                .fold(0.0, f64::max),
            f_max0,
            umbilic_bound0: n as f64
                * geo
                    .iter()
                    .map(|g| g.warp.dlambda / g.warp.lambda)
                    .fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn pinch_tolerance(&self) -> f64 {
        1e-6 * self.lambda_sup_r0
    }
}

fn argminmax(x: &[f64]) -> (usize, usize) {
    let mut lo = 0;
    let mut hi = 0;
    for (i, &v) in x.iter().enumerate() {
        if v < x[lo] {
            lo = i;
        }
        if v > x[hi] {
            hi = i;
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub sup_kappa_dev: f64,
    pub sup_grad_phi_sq: f64,
    pub sup_hess_phi: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub r_tilde_min: f64,
    pub r_tilde_max: f64,
    pub chi_scaled_min: f64,
    pub chi_scaled_max: f64,
    pub pinch_low_ok: bool,
    pub pinch_high_ok: bool,
    /// `min lambda e^{-t/n}`
    pub lambda_scaled_min: f64,
    /// `max lambda e^{-t/n}`
    pub lambda_scaled_max: f64,
}

pub const SERIES_COLUMNS: [&str; 12] = [
    "t",
    "sup_kappa_dev",
    "sup_grad_phi_sq",
    "sup_hess_phi",
    "F_min",
    "F_max",
    "r_tilde_min",
    "r_tilde_max",
    "chi_scaled_min",
    "chi_scaled_max",
    "pinch_low_ok",
    "pinch_high_ok",
];

/// Nodal fields retained at each snapshot for the limit-profile analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub t: f64,
    /// `r - t/n`
    pub r_tilde: Vec<f64>,
    /// `log lambda - t/n`
    pub conformal: Vec<f64>,
    /// `|D phi|^2`
    pub grad_sq: Vec<f64>,
}

pub fn snapshot(
    state: &GraphState,
    geo: &[NodeGeometry],
    f: &CurvatureFunction,
    reference: &Reference,
) -> Result<(DiagnosticsRecord, ProfileSample)> {
    let n = f.n as f64;
    let t = state.t;
    let decay = (-t / n).exp();
    let mut fv = Vec::with_capacity(geo.len());
    let mut kdev: f64 = 0.0;
    let mut grad_sq = Vec::with_capacity(geo.len());
    let mut hess: f64 = 0.0;
    let mut chi = Vec::with_capacity(geo.len());
    for (node, g) in geo.iter().enumerate() {
        let value = f.eval_grad2(g.kappa).map_err(|_| Error::InadmissibleState {
            t,
            node,
            kappa: g.kappa.to_vec(),
        })?;
        fv.push(value.0);
        kdev = kdev.max((g.kappa[0] - 1.0).abs()).max((g.kappa[1] - 1.0).abs());
        grad_sq.push(g.grad[0] * g.grad[0] + g.grad[1] * g.grad[1]);
        hess = hess.max(spectral_norm(g.hess));
        chi.push(g.chi * decay);
    }
    let r_tilde: Vec<f64> = state.r.iter().map(|r| r - t / n).collect();
    let lam_scaled: Vec<f64> = state.lambda.iter().map(|l| l * decay).collect();
    let eps = reference.pinch_tolerance();
    let rec = DiagnosticsRecord {
        t,
        sup_kappa_dev: kdev,
        sup_grad_phi_sq: sup(&grad_sq),
        sup_hess_phi: hess,
        f_min: inf(&fv),
        f_max: sup(&fv),
        r_tilde_min: inf(&r_tilde),
        r_tilde_max: sup(&r_tilde),
        chi_scaled_min: inf(&chi),
        chi_scaled_max: sup(&chi),
        pinch_low_ok: reference.lambda_inf_r0 - eps <= inf(&lam_scaled),
        pinch_high_ok: sup(&lam_scaled) <= reference.lambda_sup_r0 + eps,
        lambda_scaled_min: inf(&lam_scaled),
        lambda_scaled_max: sup(&lam_scaled),
    };
    let sample = ProfileSample {
        t,
        conformal: state.lambda.iter().map(|l| l.ln() - t / n).collect(),
        r_tilde,
        grad_sq,
    };
    Ok((rec, sample))
}

/// Writes the series table with a header row and 17 significant digits.
pub fn write_series(records: &[DiagnosticsRecord], delimiter: char) -> String {
    let mut out = String::new();
    let d = delimiter.to_string();
    out.push_str(&SERIES_COLUMNS.join(&d));
    out.push('\n');
    for r in records {
        let nums = [
            r.t,
            r.sup_kappa_dev,
            r.sup_grad_phi_sq,
            r.sup_hess_phi,
            r.f_min,
            r.f_max,
            r.r_tilde_min,
            r.r_tilde_max,
            r.chi_scaled_min,
            r.chi_scaled_max,
        ];
        let mut fields: Vec<String> = nums.iter().map(|x| format!("{x:.16e}")).collect();
        fields.push(r.pinch_low_ok.to_string());
        fields.push(r.pinch_high_ok.to_string());
        out.push_str(&fields.join(&d));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateStatus {
    Pass,
    Fail,
    /// Too few values above the floating-point floor; counted as a pass.
    AtFloor,
    /// Too few snapshots in the window; reported, not a failure.
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub name: String,
    pub window: [f64; 2],
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    #[serde(rename = "target")]
    pub target_rate: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub status: RateStatus,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    KappaDeviation,
    GradientSquared,
    Hessian,
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::KappaDeviation => "sup_kappa_dev",
            Quantity::GradientSquared => "sup_grad_phi_sq",
            Quantity::Hessian => "sup_hess_phi",
        }
    }

    pub fn get(&self, r: &DiagnosticsRecord) -> f64 {
        match self {
            Quantity::KappaDeviation => r.sup_kappa_dev,
            Quantity::GradientSquared => r.sup_grad_phi_sq,
            Quantity::Hessian => r.sup_hess_phi,
        }
    }
}

/// Least-squares slope and intercept of `log y` against `t`, with `r^2`.
pub fn log_linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(t, y)| (t, y.ln())).collect();
    let mt = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mt;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Fits `log y` over the window and judges `slope <= -target + tolerance`.
///
/// Snapshots whose value is below [`RATE_FLOOR`] are dropped. When the
/// window holds enough snapshots but too few lie above the floor, the fit
/// reports [`RateStatus::AtFloor`].
pub fn fit_rate(
    series: &[DiagnosticsRecord],
    quantity: Quantity,
    window: [f64; 2],
    target_rate: f64,
    tolerance: f64,
    min_r_squared: f64,
) -> Result<RateFit> {
    let eps = 1e-9 * window[1].abs().max(1.0);
    let in_window: Vec<&DiagnosticsRecord> = series
        .iter()
        .filter(|r| r.t >= window[0] - eps && r.t <= window[1] + eps)
        .collect();
    let points: Vec<(f64, f64)> = in_window
        .iter()
        .map(|r| (r.t, quantity.get(r)))
        .filter(|&(_, y)| y > RATE_FLOOR && y.is_finite())
        .collect();
    let mut fit = RateFit {
        name: quantity.name().to_string(),
        window,
        slope: f64::NAN,
        intercept: f64::NAN,
        r_squared: f64::NAN,
        target_rate,
        tolerance,
        pass: false,
        status: RateStatus::Fail,
        points: points.len(),
    };
    if points.len() < MIN_FIT_POINTS {
        if in_window.len() >= MIN_FIT_POINTS {
            fit.status = RateStatus::AtFloor;
            fit.pass = true;
            return Ok(fit);
        }
        return Err(Error::InsufficientData(format!(
            "{}: {} snapshots in [{}, {}], need {}",
            quantity.name(),
            in_window.len(),
            window[0],
            window[1],
            MIN_FIT_POINTS
        )));
    }
    let (slope, intercept, r2) = log_linear_fit(&points);
    fit.slope = slope;
    fit.intercept = intercept;
    fit.r_squared = r2;
    fit.pass = slope <= -target_rate + tolerance && r2 >= min_r_squared;
    fit.status = if fit.pass { RateStatus::Pass } else { RateStatus::Fail };
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitProfile {
    pub t_final: f64,
    /// `r~` at the final time.
    pub f_hat: Vec<f64>,
    /// `log lambda - t/n` at the final time.
    pub conformal: Vec<f64>,
    pub gap_time: f64,
    /// `sup |r~(t_final) - r~(gap_time)|`
    pub gap: f64,
    /// `sup |e^{-2t/n} g - e^{2 psi} sigma|` at `t_final`, with `psi` the
    /// final conformal exponent.
    pub metric_residual: f64,
    pub earlier_time: f64,
    /// The same residual at `earlier_time`, against the same `psi`.
    pub metric_residual_earlier: f64,
    /// Calibrated constant of the lower drift bound on `r~`.
    pub drift_constant: f64,
    pub drift_pass: bool,
    /// `sup |r~|` over all snapshots against `sup |r~(0)| + n C`.
    pub r_tilde_sup: f64,
    pub bounded_pass: bool,
}

fn nearest(samples: &[ProfileSample], t: f64) -> &ProfileSample {
    samples
        .iter()
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .unwrap()
}

fn metric_residual(s: &ProfileSample, target: &[f64]) -> f64 {
    s.conformal
        .iter()
        .zip(&s.grad_sq)
        .zip(target)
        .map(|((c, p2), f)| {
            let e = (2.0 * c).exp();
            let e0 = (2.0 * f).exp();
            // eigenvalues e (1 + |p|^2) - e0 and e - e0
            let a = e * (1.0 + p2) - e0;
            let b = e - e0;
            (a * a + b * b).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Limit-profile estimate from the retained snapshots.
///
/// The gap compares the final `r~` with the snapshot nearest `0.8 t_final`;
/// the earlier metric residual is taken nearest `0.6 t_final`.
pub fn limit_profile(samples: &[ProfileSample], n: u32) -> Result<LimitProfile> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "limit profile needs two snapshots, have {}",
            samples.len()
        )));
    }
    let last = samples.last().unwrap();
    let earlier = &samples[..samples.len() - 1];
    let gap_ref = nearest(earlier, 0.8 * last.t);
    let res_ref = nearest(earlier, 0.6 * last.t);
    let gap = last
        .r_tilde
        .iter()
        .zip(&gap_ref.r_tilde)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    // calibrate the lower drift bound on the first half, check the second
    let nf = n as f64;
    let half = 0.5 * last.t;
    let drift = |a: &ProfileSample, b: &ProfileSample| {
        let d = a
            .r_tilde
            .iter()
            .zip(&b.r_tilde)
            .map(|(x, y)| y - x)
            .fold(f64::INFINITY, f64::min);
        let span = nf * ((-a.t / nf).exp() - (-b.t / nf).exp());
        (d, span)
    };
    let mut c: f64 = 0.0;
    for w in samples.windows(2).filter(|w| w[1].t <= half) {
        let (d, span) = drift(&w[0], &w[1]);
        if span > 0.0 {
            c = c.max(-d / span);
        }
    }
    let drift_pass = samples.windows(2).filter(|w| w[0].t >= half).all(|w| {
        let (d, span) = drift(&w[0], &w[1]);
        d >= -1.1 * c * span - 1e-12
    });
    let abs_sup = |s: &ProfileSample| s.r_tilde.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let r_tilde_sup = samples.iter().map(abs_sup).fold(0.0, f64::max);
    let bounded_pass = r_tilde_sup <= abs_sup(&samples[0]) + nf * 1.1 * c + 1e-12;
    Ok(LimitProfile {
        t_final: last.t,
        f_hat: last.r_tilde.clone(),
        conformal: last.conformal.clone(),
        gap_time: gap_ref.t,
        gap,
        metric_residual: metric_residual(last, &last.conformal),
        earlier_time: res_ref.t,
        metric_residual_earlier: metric_residual(res_ref, &last.conformal),
        drift_constant: c,
        drift_pass,
        r_tilde_sup,
        bounded_pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub umbilicity: f64,
    pub gradient: f64,
    pub hessian: f64,
    pub r_squared: f64,
    pub limit_gap: f64,
    pub metric_residual: f64,
    pub f_max_slack: f64,
    pub f_min_slack: f64,
    pub chi_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            umbilicity: 0.15,
            gradient: 0.15,
            hessian: 0.10,
            r_squared: 0.95,
            limit_gap: 0.02,
            metric_residual: 5e-3,
            f_max_slack: 1.1,
            f_min_slack: 0.5,
            chi_ratio: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    /// Defaults to `[0.4 t_end, 0.9 t_end]`.
    pub rate_window: Option<[f64; 2]>,
    pub tolerances: Tolerances,
    pub rates: bool,
    pub limit: bool,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            rate_window: None,
            tolerances: Tolerances::default(),
            rates: true,
            limit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub t_final: f64,
    pub gap_time: f64,
    pub gap: f64,
    pub metric_residual: f64,
    pub earlier_time: f64,
    pub metric_residual_earlier: f64,
    pub drift_constant: f64,
    pub drift_pass: bool,
    pub bounded_pass: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub rates: Vec<RateFit>,
    pub pinching_pass: bool,
    pub f_bounds_pass: bool,
    pub gradient_monotone_pass: bool,
    pub chi_scaling_pass: bool,
    pub chi_ratio: f64,
    pub limit_gap: Option<f64>,
    pub limit: Option<LimitSummary>,
    pub notes: Vec<String>,
    pub overall_pass: bool,
}

pub fn theorem_report(
    series: &[DiagnosticsRecord],
    samples: &[ProfileSample],
    reference: &Reference,
    t_end: f64,
    settings: &ReportSettings,
) -> TheoremReport {
    let tol = settings.tolerances;
    let n = reference.n as f64;
    let mut notes = Vec::new();

    let pinching_pass = series.iter().all(|r| r.pinch_low_ok && r.pinch_high_ok);

    let late: Vec<&DiagnosticsRecord> = {
        let l: Vec<_> = series.iter().filter(|r| r.t >= 1.0).collect();
        if l.is_empty() {
            series.iter().collect()
        } else {
            l
        }
    };
    let f_cap = tol.f_max_slack * reference.f_max0.max(reference.umbilic_bound0);
    let f_floor = tol.f_min_slack * late.iter().map(|r| r.f_min).fold(f64::INFINITY, f64::min);
    let f_bounds_pass = series
        .iter()
        .all(|r| r.f_max <= f_cap && r.f_min >= f_floor && r.f_min > 0.0);

    let grad_cap = reference.grad_sq0 * (1.0 + 1e-6);
    let gradient_monotone_pass = series.iter().all(|r| r.sup_grad_phi_sq <= grad_cap);

    let chi_hi = late.iter().map(|r| r.chi_scaled_max).fold(f64::NEG_INFINITY, f64::max);
    let chi_lo = late.iter().map(|r| r.chi_scaled_min).fold(f64::INFINITY, f64::min);
    let chi_ratio = if series.is_empty() { 1.0 } else { chi_hi / chi_lo };
    let chi_scaling_pass = chi_ratio <= tol.chi_ratio;

    let mut rates = Vec::new();
    if settings.rates {
        let window = settings.rate_window.unwrap_or([0.4 * t_end, 0.9 * t_end]);
        let specs = [
            (Quantity::KappaDeviation, 2.0 / n, tol.umbilicity),
            (Quantity::GradientSquared, 2.0 / n, tol.gradient),
            (Quantity::Hessian, 1.0 / n, tol.hessian),
        ];
        for (q, target, tolerance) in specs {
            match fit_rate(series, q, window, target, tolerance, tol.r_squared) {
                Ok(fit) => rates.push(fit),
                Err(e) => {
                    notes.push(e.to_string());
                    rates.push(RateFit {
                        name: q.name().to_string(),
                        window,
                        slope: f64::NAN,
                        intercept: f64::NAN,
                        r_squared: f64::NAN,
                        target_rate: target,
                        tolerance,
                        pass: false,
                        status: RateStatus::InsufficientData,
                        points: 0,
                    });
                }
            }
        }
    }
    let rates_ok = rates.iter().all(|r| r.status != RateStatus::Fail);

    let mut limit = None;
    if settings.limit {
        match limit_profile(samples, reference.n) {
            Ok(lp) => {
                let decreasing = lp.metric_residual < lp.metric_residual_earlier || lp.metric_residual <= 1e-8;
                let pass = lp.gap <= tol.limit_gap
                    && lp.metric_residual <= tol.metric_residual
                    && decreasing
                    && lp.drift_pass
                    && lp.bounded_pass;
                limit = Some(LimitSummary {
                    t_final: lp.t_final,
                    gap_time: lp.gap_time,
                    gap: lp.gap,
                    metric_residual: lp.metric_residual,
                    earlier_time: lp.earlier_time,
                    metric_residual_earlier: lp.metric_residual_earlier,
                    drift_constant: lp.drift_constant,
                    drift_pass: lp.drift_pass,
                    bounded_pass: lp.bounded_pass,
                    pass,
                });
            }
            Err(e) => notes.push(e.to_string()),
        }
    }
    let limit_ok = limit.as_ref().is_none_or(|l| l.pass);

    let overall_pass =
        pinching_pass && f_bounds_pass && gradient_monotone_pass && chi_scaling_pass && rates_ok && limit_ok;
    TheoremReport {
        rates,
        pinching_pass,
        f_bounds_pass,
        gradient_monotone_pass,
        chi_scaling_pass,
        chi_ratio,
        limit_gap: limit.as_ref().map(|l| l.gap),
        limit,
        notes,
        overall_pass,
    }
}

impl TheoremReport {
    pub fn to_text(&self) -> String {
        let mark = |b: bool| if b { "PASS" } else { "FAIL" };
        let mut s = String::new();
        let _ = writeln!(s, "pinching            {}", mark(self.pinching_pass));
        let _ = writeln!(s, "F bounds            {}", mark(self.f_bounds_pass));
        let _ = writeln!(s, "gradient monotone   {}", mark(self.gradient_monotone_pass));
        let _ = writeln!(
            s,
            "chi scaling         {} (max/min {:.4})",
            mark(self.chi_scaling_pass),
            self.chi_ratio
        );
        for r in &self.rates {
            let status = match r.status {
                RateStatus::Pass => "PASS",
                RateStatus::Fail => "FAIL",
                RateStatus::AtFloor => "PASS (at floor)",
                RateStatus::InsufficientData => "insufficient data",
            };
            let _ = writeln!(
                s,
                "rate {:<15} {} slope {:.4} target -{:.4} tol {:.2} r2 {:.4} window [{}, {}]",
                r.name, status, r.slope, r.target_rate, r.tolerance, r.r_squared, r.window[0], r.window[1]
            );
        }
        if let Some(l) = &self.limit {
            let _ = writeln!(
                s,
                "limit profile       {} gap {:.3e} (t={:.3} vs {:.3}) metric residual {:.3e} (was {:.3e} at t={:.3}) drift C {:.3e} {} bounded {}",
                mark(l.pass),
                l.gap,
                l.t_final,
                l.gap_time,
                l.metric_residual,
                l.metric_residual_earlier,
                l.earlier_time,
                l.drift_constant,
                mark(l.drift_pass),
                mark(l.bounded_pass)
            );
        }
        for note in &self.notes {
            let _ = writeln!(s, "note: {note}");
        }
        let _ = writeln!(s, "overall             {}", mark(self.overall_pass));
        s
    }
}
