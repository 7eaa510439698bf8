//! Versioned JSON checkpoints of a flow run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::background::BackgroundParams;
use crate::diagnostics::{DiagnosticsRecord, ProfileSample, Reference};
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, RunOutput};
use crate::geometry::Gauge;
use crate::sphere::GridSpec;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub t: f64,
    pub params: BackgroundParams,
    pub grid: GridSpec,
    pub f_kind: String,
    pub gauge: Gauge,
    pub reference: Reference,
    pub next_output: u64,
    pub output_every: f64,
    /// Gauge field in node order.
    pub phi: Vec<f64>,
    pub series: Vec<DiagnosticsRecord>,
    pub samples: Vec<ProfileSample>,
}

impl Checkpoint {
    pub fn from_run(config: &FlowConfig, out: &RunOutput) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            t: out.state.t,
            params: config.background,
            grid: config.grid,
            f_kind: config.f.name(),
            gauge: out.state.gauge,
            reference: out.reference,
            next_output: out.next_output,
            output_every: config.output_every,
            phi: out.state.phi.clone(),
            series: out.series.clone(),
            samples: out.samples.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if cp.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                cp.format_version
            )));
        }
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rejects resuming under a different background, grid or speed function.
    pub fn check_compatible(&self, config: &FlowConfig) -> Result<()> {
        let mismatch = |what: &str| Err(Error::Checkpoint(format!("{what} differs from the configuration")));
        if self.params.m != config.background.m || self.params.n != config.background.n {
            return mismatch("background");
        }
        if self.grid != config.grid {
            return mismatch("grid");
        }
        if self.f_kind != config.f.name() {
            return mismatch("curvature function");
        }
        if self.output_every != config.output_every {
            return mismatch("output_every");
        }
        if self.phi.len() != config.grid.n_theta * config.grid.n_psi {
            return mismatch("node count");
        }
        if self.t > config.t_end {
            return Err(Error::Checkpoint(format!(
                "checkpoint time {} is past t_end = {}",
                self.t, config.t_end
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{CurvatureFunction, CurvatureKind};
    use crate::flow::{InitialData, Simulation};

    fn cfg(t_end: f64) -> FlowConfig {
        let mut c = FlowConfig::new(
            BackgroundParams::new(1.0, 2).unwrap(),
            GridSpec::axisymmetric(32),
            InitialData::CosinePerturbation {
                r0: 2.0,
                amplitude: 0.2,
                wavenumber: 1,
            },
            CurvatureFunction::new(CurvatureKind::Mean, 2).unwrap(),
        );
        c.t_end = t_end;
        c.r_max = Some(8.0);
        c
    }

    #[test]
    fn json_round_trip_is_exact() {
        let c = cfg(0.5);
        let out = Simulation::new(c.clone()).unwrap().run().unwrap();
        let cp = Checkpoint::from_run(&c, &out);
        let back = Checkpoint::from_json(&cp.to_json().unwrap()).unwrap();
        assert_eq!(back, cp);
    }

    #[test]
    fn resume_continues_bitwise() {
        let full = Simulation::new(cfg(1.0)).unwrap().run().unwrap();
        let half_cfg = cfg(0.5);
        let half = Simulation::new(half_cfg.clone()).unwrap().run().unwrap();
        let cp = Checkpoint::from_json(&Checkpoint::from_run(&half_cfg, &half).to_json().unwrap()).unwrap();
        let resumed = Simulation::new(cfg(1.0)).unwrap().resume(&cp).unwrap();
        assert_eq!(resumed.series, full.series);
        assert_eq!(resumed.state.phi, full.state.phi);
    }

    #[test]
    fn rejects_mismatch() {
        let c = cfg(0.2);
        let out = Simulation::new(c.clone()).unwrap().run().unwrap();
        let mut cp = Checkpoint::from_run(&c, &out);
        let mut other = cfg(1.0);
        other.grid = GridSpec::axisymmetric(64);
        assert!(matches!(cp.check_compatible(&other), Err(Error::Checkpoint(_))));
        cp.format_version = 99;
        let text = cp.to_json().unwrap();
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Checkpoint(_))));
    }
}
