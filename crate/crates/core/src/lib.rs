//! Inverse curvature flow of radial graphs in the AdS-Schwarzschild manifold.

pub mod background;
pub mod checkpoint;
pub mod checks;
pub mod curvature;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod geometry;
mod quadrature;
pub mod sphere;

pub use background::{BackgroundParams, WarpProfile};
pub use checkpoint::Checkpoint;
pub use curvature::{CurvatureFunction, CurvatureKind};
pub use diagnostics::{DiagnosticsRecord, ReportSettings, TheoremReport, Tolerances};
pub use error::{Error, Result};
pub use flow::{FlowConfig, InitialData, Integrator, RunOutput, Simulation};
pub use geometry::{Gauge, GraphState, NodeGeometry};
pub use quadrature::GaussLegendre;
pub use sphere::{GridMode, GridSpec, ScalarField, SphereGrid};
