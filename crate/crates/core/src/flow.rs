//! Explicit time integration of `d phi/dt = v / F(lambda kappa)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{BackgroundParams, WarpProfile};
use crate::checkpoint::Checkpoint;
use crate::curvature::CurvatureFunction;
use crate::diagnostics::{snapshot, DiagnosticsRecord, ProfileSample, Reference};
use crate::error::{Error, Result};
use crate::geometry::{GraphState, NodeGeometry};
use crate::sphere::{GridSpec, SphereGrid};

const MAX_HALVINGS: usize = 8;
const HOMOGENEITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Rk2,
}

/// Initial radial data `r0(theta, psi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// Geodesic sphere of radius `r0`.
    Constant { r0: f64 },
    /// Geodesic sphere with warp value `lambda0`.
    ConstantLambda { lambda0: f64 },
    /// `r0 + amplitude * cos(wavenumber * theta)`.
    CosinePerturbation { r0: f64, amplitude: f64, wavenumber: u32 },
    /// Piecewise-linear `r(theta)` through the given samples.
    CustomTable { theta: Vec<f64>, r: Vec<f64> },
}

impl InitialData {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            InitialData::Constant { r0 } if !(*r0 > 0.0) => bad(format!("r0 must be positive, got {r0}")),
            InitialData::ConstantLambda { lambda0 } if !(*lambda0 > 0.0) => {
                bad(format!("lambda0 must be positive, got {lambda0}"))
            }
            InitialData::CosinePerturbation { r0, amplitude, .. } if !(r0 - amplitude.abs() > 0.0) => {
                bad(format!("r0 - |amplitude| must be positive, got {r0} and {amplitude}"))
            }
            InitialData::CustomTable { theta, r } => {
                if theta.len() != r.len() || theta.len() < 2 {
                    return bad("custom table needs matching theta and r arrays of length >= 2".into());
                }
                if theta.windows(2).any(|w| !(w[1] > w[0]))
                    || theta[0] > 0.0
                    || *theta.last().unwrap() < std::f64::consts::PI
                {
                    return bad("custom table theta must increase strictly and cover [0, pi]".into());
                }
                if r.iter().any(|x| !(*x > 0.0)) {
                    return bad("custom table radii must be positive".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Largest initial radius, needed to size the warp table.
    fn sup_radius(&self, params: &BackgroundParams) -> Result<f64> {
        Ok(match self {
            InitialData::Constant { r0 } => *r0,
            InitialData::ConstantLambda { lambda0 } => radius_for_lambda(params, *lambda0)?,
            InitialData::CosinePerturbation { r0, amplitude, .. } => r0 + amplitude.abs(),
            InitialData::CustomTable { r, .. } => r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn radii(&self, grid: &SphereGrid, profile: &WarpProfile) -> Result<Vec<f64>> {
        Ok(match self {
            InitialData::Constant { r0 } => vec![*r0; grid.len()],
            InitialData::ConstantLambda { lambda0 } => vec![profile.radius_of_lambda(*lambda0)?; grid.len()],
            InitialData::CosinePerturbation {
                r0,
                amplitude,
                wavenumber,
            } => grid.sample(|t, _| r0 + amplitude * (*wavenumber as f64 * t).cos()),
            InitialData::CustomTable { theta, r } => grid.sample(|t, _| {
                let k = theta.partition_point(|x| *x <= t).clamp(1, theta.len() - 1);
                let s = (t - theta[k - 1]) / (theta[k] - theta[k - 1]);
                r[k - 1] + s * (r[k] - r[k - 1])
            }),
        })
    }
}

fn radius_for_lambda(params: &BackgroundParams, lambda: f64) -> Result<f64> {
    // r(lambda) < asinh(lambda) for every m >= 0
    let probe = WarpProfile::build(*params, lambda.asinh() + 1.0)?;
    probe.radius_of_lambda(lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub background: BackgroundParams,
    pub grid: GridSpec,
    pub initial: InitialData,
    pub f: CurvatureFunction,
    pub t_end: f64,
    pub cfl: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub integrator: Integrator,
    pub output_every: f64,
    /// Warp-table extent; defaults to `sup r0 + t_end/n + 2`.
    pub r_max: Option<f64>,
}

impl FlowConfig {
    pub fn new(background: BackgroundParams, grid: GridSpec, initial: InitialData, f: CurvatureFunction) -> Self {
        Self {
            background,
            grid,
            initial,
            f,
            t_end: 10.0,
            cfl: 0.2,
            dt_min: 1e-10,
            dt_max: 2e-3,
            integrator: Integrator::Rk2,
            output_every: 0.1,
            r_max: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.background.validate()?;
        self.initial.validate()?;
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.f.n != self.background.n {
            return bad(format!(
                "curvature function dimension {} != n = {}",
                self.f.n, self.background.n
            ));
        }
        if self.background.n != 2 {
            return bad(format!("only n = 2 can be discretized, got n = {}", self.background.n));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return bad(format!("cfl must lie in (0, 0.5], got {}", self.cfl));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max) {
            return bad(format!(
                "need 0 < dt_min < dt_max, got {} and {}",
                self.dt_min, self.dt_max
            ));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if !(self.output_every > 0.0) {
            return bad(format!("output_every must be positive, got {}", self.output_every));
        }
        Ok(())
    }

    pub fn default_r_max(&self) -> Result<f64> {
        Ok(self.initial.sup_radius(&self.background)? + self.t_end / self.background.n as f64 + 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Snapshot,
    AdmissibilityViolation,
    TableExtent,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub kind: EventKind,
    pub t: f64,
    pub detail: String,
}

/// Right-hand side and parabolic step bound of one state.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub geometry: Vec<NodeGeometry>,
    pub rhs: Vec<f64>,
    /// `max v / (lambda^2 F^2) * max_a F_a`
    pub diffusion: f64,
}

pub fn evaluate(state: &GraphState, f: &CurvatureFunction) -> Result<Evaluation> {
    let geometry = state.extrinsic();
    let per_node: Vec<std::result::Result<(f64, f64), ()>> = geometry
        .par_iter()
        .with_min_len(64)
        .map(|g| {
            let (fv, fg) = f.eval_grad2(g.kappa).map_err(|_| ())?;
            if !(fv > 0.0) {
                return Err(());
            }
            let l = g.warp.lambda;
            let scaled = f.eval_grad2([l * g.kappa[0], l * g.kappa[1]]).map_err(|_| ())?.0;
            let a = g.v / scaled;
            let b = g.v / (l * fv);
            if (a - b).abs() > HOMOGENEITY_TOL * b.abs() {
                return Ok((f64::NAN, b));
            }
            Ok((a, g.v / (l * l * fv * fv) * fg[0].max(fg[1])))
        })
        .collect();
    let mut rhs = Vec::with_capacity(per_node.len());
    let mut diffusion: f64 = 0.0;
    let mut worst: Option<usize> = None;
    for (i, r) in per_node.iter().enumerate() {
        match r {
            Ok((a, d)) if a.is_nan() => {
                let g = &geometry[i];
                let l = g.warp.lambda;
                return Err(Error::HomogeneityMismatch {
                    node: i,
                    scaled: g.v / f.eval_grad2([l * g.kappa[0], l * g.kappa[1]])?.0,
                    unscaled: *d,
                });
            }
            Ok((a, d)) => {
                rhs.push(*a);
                diffusion = diffusion.max(*d);
            }
            Err(()) => {
                if worst.is_none_or(|w| geometry[i].kappa[0] < geometry[w].kappa[0]) {
                    worst = Some(i);
                }
            }
        }
    }
    if let Some(node) = worst {
        return Err(Error::InadmissibleState {
            t: state.t,
            node,
            kappa: geometry[node].kappa.to_vec(),
        });
    }
    Ok(Evaluation {
        geometry,
        rhs,
        diffusion,
    })
}

/// `d phi/dt` at every node.
pub fn rhs(state: &GraphState, f: &CurvatureFunction) -> Result<Vec<f64>> {
    Ok(evaluate(state, f)?.rhs)
}

fn dt_from_diffusion(grid: &SphereGrid, diffusion: f64, cfl: f64, dt_min: f64, dt_max: f64) -> Result<f64> {
    let h = grid.h_min();
    let dt = if diffusion > 0.0 {
        cfl * h * h / diffusion
    } else {
        dt_max
    };
    let dt = dt.min(dt_max);
    if dt < dt_min {
        return Err(Error::StepUnderflow { required: dt, dt_min });
    }
    Ok(dt)
}

/// Parabolic step bound `cfl h_min^2 / max(diffusion)` clamped to `[dt_min, dt_max]`.
pub fn stable_dt(state: &GraphState, f: &CurvatureFunction, cfl: f64, dt_min: f64, dt_max: f64) -> Result<f64> {
    let e = evaluate(state, f)?;
    dt_from_diffusion(state.grid(), e.diffusion, cfl, dt_min, dt_max)
}

fn advance(
    state: &GraphState,
    k1: &[f64],
    f: &CurvatureFunction,
    dt: f64,
    t_new: f64,
    integrator: Integrator,
) -> Result<(GraphState, Evaluation)> {
    let axpy =
        |s: &GraphState, k: &[f64], h: f64| -> Vec<f64> { s.phi.iter().zip(k).map(|(p, d)| p + h * d).collect() };
    match integrator {
        Integrator::Euler => {
            let next = state.with_phi(axpy(state, k1, dt), t_new)?;
            // reject states that left the cone
            let e = evaluate(&next, f)?;
            Ok((next, e))
        }
        Integrator::Rk2 => {
            let mid = state.with_phi(axpy(state, k1, 0.5 * dt), state.t + 0.5 * dt)?;
            let k2 = evaluate(&mid, f)?.rhs;
            let next = state.with_phi(axpy(state, &k2, dt), t_new)?;
            let e = evaluate(&next, f)?;
            Ok((next, e))
        }
    }
}

fn is_admissibility(e: &Error) -> bool {
    matches!(e, Error::InadmissibleState { .. } | Error::HomogeneityMismatch { .. })
}

/// One step of size `dt`, halving on admissibility failure up to 8 times.
///
/// Returns the new state and the step actually taken.
pub fn step(state: &GraphState, f: &CurvatureFunction, dt: f64, integrator: Integrator) -> Result<(GraphState, f64)> {
    let k1 = evaluate(state, f)?.rhs;
    step_with(state, &k1, f, dt, None, integrator, &mut |_| {}).map(|(s, h, _)| (s, h))
}

fn step_with(
    state: &GraphState,
    k1: &[f64],
    f: &CurvatureFunction,
    dt: f64,
    t_target: Option<f64>,
    integrator: Integrator,
    on_event: &mut (dyn FnMut(FlowEvent) + Send),
) -> Result<(GraphState, f64, Evaluation)> {
    let mut h = dt;
    let mut last_err = None;
    for attempt in 0..=MAX_HALVINGS {
        let t_new = if attempt == 0 {
            t_target.unwrap_or(state.t + h)
        } else {
            state.t + h
        };
        match advance(state, k1, f, h, t_new, integrator) {
            Ok((next, e)) => return Ok((next, h, e)),
            Err(e) if is_admissibility(&e) => {
                on_event(FlowEvent {
                    kind: EventKind::AdmissibilityViolation,
                    t: state.t,
                    detail: format!("dt = {h:e}: {e}"),
                });
                last_err = Some(e);
                h *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: GraphState,
    pub series: Vec<DiagnosticsRecord>,
    pub samples: Vec<ProfileSample>,
    pub events: Vec<FlowEvent>,
    pub reference: Reference,
    /// Index of the next output time `k * output_every`.
    pub next_output: u64,
    pub steps: usize,
}

/// A configured flow: grid, warp table and optional thread cap.
pub struct Simulation {
    config: FlowConfig,
    grid: Arc<SphereGrid>,
    profile: Arc<WarpProfile>,
    pool: Option<rayon::ThreadPool>,
}

impl Simulation {
    pub fn new(config: FlowConfig) -> Result<Self> {
        Self::with_threads(config, None)
    }

    pub fn with_threads(config: FlowConfig, threads: Option<usize>) -> Result<Self> {
        config.validate()?;
        let r_max = match config.r_max {
            Some(r) => r,
            None => config.default_r_max()?,
        };
        let grid = Arc::new(SphereGrid::build(config.grid)?);
        let profile = Arc::new(WarpProfile::build(config.background, r_max)?);
        let pool = match threads {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?,
            ),
            None => None,
        };
        Ok(Self {
            config,
            grid,
            profile,
            pool,
        })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn profile(&self) -> &Arc<WarpProfile> {
        &self.profile
    }

    fn install<T: Send>(&self, job: impl FnOnce() -> T + Send) -> T {
        match &self.pool {
            Some(p) => p.install(job),
            None => job(),
        }
    }

    pub fn initial_state(&self) -> Result<GraphState> {
        let r0 = self.config.initial.radii(&self.grid, &self.profile)?;
        GraphState::from_radius(self.grid.clone(), self.profile.clone(), &r0, 0.0)
    }

    pub fn run(&self) -> Result<RunOutput> {
        self.run_with(&mut |_| {})
    }

    pub fn run_with(&self, on_event: &mut (dyn FnMut(FlowEvent) + Send)) -> Result<RunOutput> {
        self.install(|| {
            let state = self.initial_state()?;
            let geo = state.extrinsic();
            let reference = Reference::from_initial(&state, &geo, &self.config.f)?;
            let mut out = RunOutput {
                state,
                series: Vec::new(),
                samples: Vec::new(),
                events: Vec::new(),
                reference,
                next_output: 1,
                steps: 0,
            };
            if self.config.t_end > 0.0 {
                self.record(&mut out, &geo, on_event)?;
            }
            self.integrate(out, on_event)
        })
    }

    /// Continues a checkpointed run to this configuration's `t_end`.
    pub fn resume(&self, checkpoint: &Checkpoint) -> Result<RunOutput> {
        self.resume_with(checkpoint, &mut |_| {})
    }

    pub fn resume_with(
        &self,
        checkpoint: &Checkpoint,
        on_event: &mut (dyn FnMut(FlowEvent) + Send),
    ) -> Result<RunOutput> {
        checkpoint.check_compatible(&self.config)?;
        self.install(|| {
            let state = GraphState::from_phi(
                self.grid.clone(),
                self.profile.clone(),
                checkpoint.gauge,
                checkpoint.phi.clone(),
                checkpoint.t,
            )?;
            let out = RunOutput {
                state,
                series: checkpoint.series.clone(),
                samples: checkpoint.samples.clone(),
                events: Vec::new(),
                reference: checkpoint.reference,
                next_output: checkpoint.next_output,
                steps: 0,
            };
            self.integrate(out, on_event)
        })
    }

    fn output_time(&self, k: u64) -> f64 {
        (k as f64 * self.config.output_every).min(self.config.t_end)
    }

    fn record(
        &self,
        out: &mut RunOutput,
        geo: &[NodeGeometry],
        on_event: &mut (dyn FnMut(FlowEvent) + Send),
    ) -> Result<()> {
        let (rec, sample) = snapshot(&out.state, geo, &self.config.f, &out.reference)?;
        out.series.push(rec);
        out.samples.push(sample);
        let ev = FlowEvent {
            kind: EventKind::Snapshot,
            t: out.state.t,
            detail: String::new(),
        };
        on_event(ev.clone());
        out.events.push(ev);
        Ok(())
    }

    fn integrate(&self, mut out: RunOutput, on_event: &mut (dyn FnMut(FlowEvent) + Send)) -> Result<RunOutput> {
        let c = &self.config;
        let t_end = c.t_end;
        let mut cached: Option<Evaluation> = None;
        while out.state.t < t_end {
            let t = out.state.t;
            let wrap = |e: Error| Error::StepFailed { t, source: Box::new(e) };
            let eval = match cached.take() {
                Some(e) => e,
                None => evaluate(&out.state, &c.f).map_err(wrap)?,
            };
            let mut dt = dt_from_diffusion(&self.grid, eval.diffusion, c.cfl, c.dt_min, c.dt_max).map_err(wrap)?;
            let target = self.output_time(out.next_output);
            let mut hits_output = false;
            if t + dt >= target {
                dt = target - t;
                hits_output = true;
            }
            let mut events = Vec::new();
            let result = step_with(
                &out.state,
                &eval.rhs,
                &c.f,
                dt,
                hits_output.then_some(target),
                c.integrator,
                &mut |e| events.push(e),
            );
            for e in events {
                on_event(e.clone());
                out.events.push(e);
            }
            let (next, taken, next_eval) = match result {
                Ok(x) => x,
                Err(e) => {
                    if matches!(e, Error::TableExtent { .. }) {
                        let ev = FlowEvent {
                            kind: EventKind::TableExtent,
                            t,
                            detail: e.to_string(),
                        };
                        on_event(ev.clone());
                        out.events.push(ev);
                    }
                    return Err(wrap(e));
                }
            };
            out.state = next;
            out.steps += 1;
            if hits_output && taken == dt {
                self.record(&mut out, &next_eval.geometry, on_event).map_err(wrap)?;
                out.next_output += 1;
            }
            cached = Some(next_eval);
        }
        let ev = FlowEvent {
            kind: EventKind::Completed,
            t: out.state.t,
            detail: format!("{} steps", out.steps),
        };
        on_event(ev.clone());
        out.events.push(ev);
        Ok(out)
    }
}
