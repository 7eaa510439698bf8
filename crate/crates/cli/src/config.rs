//! File form of run and sweep configurations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use icflow::diagnostics::Tolerances;
use icflow::{
    BackgroundParams, CurvatureFunction, FlowConfig, GridMode, GridSpec, InitialData, Integrator, ReportSettings,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub background: BackgroundSection,
    pub grid: GridSection,
    pub initial: InitialSection,
    pub flow: FlowSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSection {
    pub m: f64,
    #[serde(default = "default_n")]
    pub n: u32,
}

fn default_n() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_mode")]
    pub mode: GridMode,
    pub n_theta: usize,
    /// Defaults to `2 n_theta` on the lat-long grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_psi: Option<usize>,
}

fn default_mode() -> GridMode {
    GridMode::Axisymmetric1d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Constant,
    CosinePerturbation,
    CustomTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    /// Alternative to `r0` for constant data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavenumber: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default = "default_f_kind")]
    pub f_kind: String,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_every: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

fn default_f_kind() -> String {
    "mean".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_window: Option<[f64; 2]>,
    pub rates: bool,
    pub limit: bool,
    pub tolerances: Tolerances,
}

impl Default for ReportSection {
    fn default() -> Self {
        let s = ReportSettings::default();
        Self {
            rate_window: s.rate_window,
            rates: s.rates,
            limit: s.limit,
            tolerances: s.tolerances,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Tsv,
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            formats: vec![Format::Csv, Format::Json, Format::Text],
        }
    }
}

/// Value lists crossed into one run per combination; an absent list keeps
/// the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_kind: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
        cfg.flow_config()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        match (g.mode, g.n_psi) {
            (GridMode::Axisymmetric1d, None | Some(1)) => Ok(GridSpec::axisymmetric(g.n_theta)),
            (GridMode::Axisymmetric1d, Some(k)) => bail!("grid.n_psi: must be 1 on the axisymmetric grid, got {k}"),
            (GridMode::LatLong2d, p) => Ok(GridSpec::latlong(g.n_theta, p.unwrap_or(2 * g.n_theta))),
        }
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        let s = &self.initial;
        let need = |v: Option<f64>, key: &str| v.with_context(|| format!("initial.{key}: required for this kind"));
        let unused = |present: bool, key: &str| -> Result<()> {
            if present {
                bail!("initial.{key}: not used by kind = {:?}", s.kind);
            }
            Ok(())
        };
        let data = match s.kind {
            InitialKind::Constant => {
                unused(s.amplitude.is_some(), "amplitude")?;
                unused(s.wavenumber.is_some(), "wavenumber")?;
                unused(s.theta.is_some() || s.r.is_some(), "theta/r")?;
                match (s.r0, s.lambda0) {
                    (Some(r0), None) => InitialData::Constant { r0 },
                    (None, Some(lambda0)) => InitialData::ConstantLambda { lambda0 },
                    _ => bail!("initial: constant data needs exactly one of r0 and lambda0"),
                }
            }
            InitialKind::CosinePerturbation => {
                unused(s.lambda0.is_some(), "lambda0")?;
                unused(s.theta.is_some() || s.r.is_some(), "theta/r")?;
                InitialData::CosinePerturbation {
                    r0: need(s.r0, "r0")?,
                    amplitude: need(s.amplitude, "amplitude")?,
                    wavenumber: s.wavenumber.unwrap_or(1),
                }
            }
            InitialKind::CustomTable => {
                unused(s.r0.is_some(), "r0")?;
                unused(s.lambda0.is_some(), "lambda0")?;
                unused(s.amplitude.is_some(), "amplitude")?;
                unused(s.wavenumber.is_some(), "wavenumber")?;
                InitialData::CustomTable {
                    theta: s.theta.clone().context("initial.theta: required for custom_table")?,
                    r: s.r.clone().context("initial.r: required for custom_table")?,
                }
            }
        };
        data.validate().context("initial")?;
        Ok(data)
    }

    /// Fully validated engine configuration.
    pub fn flow_config(&self) -> Result<FlowConfig> {
        let background = BackgroundParams::new(self.background.m, self.background.n).context("background")?;
        let f = CurvatureFunction::from_name(&self.flow.f_kind, self.background.n).context("flow.f_kind")?;
        let mut c = FlowConfig::new(background, self.grid_spec()?, self.initial_data()?, f);
        let fl = &self.flow;
        c.t_end = fl.t_end;
        if let Some(v) = fl.cfl {
            if !(v > 0.0 && v <= 0.5) {
                bail!("flow.cfl: must lie in (0, 0.5], got {v}");
            }
            c.cfl = v;
        }
        if let Some(v) = fl.integrator {
            c.integrator = v;
        }
        if let Some(v) = fl.output_every {
            c.output_every = v;
        }
        if let Some(v) = fl.dt_min {
            c.dt_min = v;
        }
        if let Some(v) = fl.dt_max {
            c.dt_max = v;
        }
        c.r_max = fl.r_max;
        if let Some(w) = self.report.rate_window {
            if !(w[0] < w[1]) {
                bail!("report.rate_window: need start < end, got {w:?}");
            }
        }
        if self.output.formats.is_empty() {
            bail!("output.formats: at least one format is required");
        }
        c.validate().context("flow")?;
        Ok(c)
    }

    pub fn report_settings(&self) -> ReportSettings {
        ReportSettings {
            rate_window: self.report.rate_window,
            tolerances: self.report.tolerances,
            rates: self.report.rates,
            limit: self.report.limit,
        }
    }

    /// One configuration per sweep combination, in `m`, `f_kind`,
    /// `amplitude` order.
    pub fn expand_sweep(&self) -> Result<Vec<RunConfig>> {
        let sweep = self.sweep.as_ref().context("sweep: missing [sweep] section")?;
        let ms = sweep.m.clone().unwrap_or_else(|| vec![self.background.m]);
        let fs = sweep.f_kind.clone().unwrap_or_else(|| vec![self.flow.f_kind.clone()]);
        let amps = match &sweep.amplitude {
            Some(a) => {
                if self.initial.kind != InitialKind::CosinePerturbation {
                    bail!("sweep.amplitude: needs initial.kind = cosine_perturbation");
                }
                a.iter().map(|&x| Some(x)).collect()
            }
            None => vec![self.initial.amplitude],
        };
        if ms.is_empty() || fs.is_empty() || amps.is_empty() {
            bail!("sweep: empty value grid");
        }
        let mut out = Vec::new();
        for &m in &ms {
            for f in &fs {
                for &a in &amps {
                    let mut c = self.clone();
                    c.sweep = None;
                    c.background.m = m;
                    c.flow.f_kind = f.clone();
                    c.initial.amplitude = a;
                    c.flow_config()
                        .with_context(|| format!("sweep combination m = {m}, f_kind = {f}, amplitude = {a:?}"))?;
                    out.push(c);
                }
            }
        }
        Ok(out)
    }
}
