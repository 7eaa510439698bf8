use icflow::flow::{EventKind, FlowEvent};
use icflow::{BackgroundParams, CurvatureFunction, Error, FlowConfig, GridSpec, InitialData, Integrator, Simulation};
use proptest::prelude::*;

fn perturbed(m: f64, grid: GridSpec, amplitude: f64, wavenumber: u32, t_end: f64) -> FlowConfig {
    let mut c = FlowConfig::new(
        BackgroundParams::new(m, 2).unwrap(),
        grid,
        InitialData::CosinePerturbation {
            r0: 2.0,
            amplitude,
            wavenumber,
        },
        CurvatureFunction::from_name("mean", 2).unwrap(),
    );
    c.t_end = t_end;
    c
}

/// Relative error of `lambda` at `t = 2` against `2 e^(t/2)`.
fn umbilic_error(integrator: Integrator, dt: f64) -> f64 {
    let mut c = FlowConfig::new(
        BackgroundParams::new(2.0, 2).unwrap(),
        GridSpec::axisymmetric(16),
        InitialData::ConstantLambda { lambda0: 2.0 },
        CurvatureFunction::from_name("mean", 2).unwrap(),
    );
    c.t_end = 2.0;
    c.output_every = 2.0;
    c.dt_max = dt;
    c.dt_min = 1e-12;
    c.integrator = integrator;
    let out = Simulation::new(c).unwrap().run().unwrap();
    (out.state.lambda[0] / (2.0 * 1f64.exp()) - 1.0).abs()
}

#[test]
fn integrator_orders_on_umbilic_data() {
    for (integ, want) in [(Integrator::Euler, 1.0), (Integrator::Rk2, 2.0)] {
        let e: Vec<f64> = [0.04, 0.02, 0.01].iter().map(|&dt| umbilic_error(integ, dt)).collect();
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - want).abs() <= 0.1, "{integ:?}: order {order} from {e:?}");
        }
    }
}

#[test]
fn euler_on_perturbed_run_stays_admissible() {
    let mut c = perturbed(1.0, GridSpec::axisymmetric(256), 0.3, 1, 10.0);
    c.integrator = Integrator::Euler;
    let mut violations = 0;
    let out = Simulation::new(c)
        .unwrap()
        .run_with(&mut |e: FlowEvent| violations += usize::from(e.kind == EventKind::AdmissibilityViolation))
        .unwrap();
    assert_eq!(violations, 0);
    assert_eq!(out.state.t, 10.0);
}

#[test]
fn axisymmetric_data_stays_axisymmetric_on_latlong_grid() {
    let c = perturbed(1.0, GridSpec::latlong(24, 48), 0.3, 2, 1.0);
    let sim = Simulation::new(c).unwrap();
    let out = sim.run().unwrap();
    assert!(sim.grid().azimuthal_variation(&out.state.phi) <= 1e-10);

    // and agrees with the one-dimensional run on the same latitudes, up to
    // the smaller 2D step and the different pole stencil
    let axi = Simulation::new(perturbed(1.0, GridSpec::axisymmetric(24), 0.3, 2, 1.0))
        .unwrap()
        .run()
        .unwrap();
    for (j, p) in axi.state.phi.iter().enumerate() {
        assert!(
            (out.state.phi[j * 48] - p).abs() <= 1e-5,
            "ring {j}: {} vs {p}",
            out.state.phi[j * 48]
        );
    }
}

#[test]
fn events_are_time_ordered_and_complete() {
    let mut events = Vec::new();
    Simulation::new(perturbed(0.0, GridSpec::axisymmetric(32), 0.2, 1, 1.0))
        .unwrap()
        .run_with(&mut |e: FlowEvent| events.push(e))
        .unwrap();
    assert!(events.windows(2).all(|w| w[0].t <= w[1].t));
    assert_eq!(events.iter().filter(|e| e.kind == EventKind::Snapshot).count(), 11);
    assert_eq!(events.last().unwrap().kind, EventKind::Completed);
}

#[test]
fn short_table_is_reported() {
    let mut c = perturbed(1.0, GridSpec::axisymmetric(32), 0.2, 1, 10.0);
    c.r_max = Some(3.5);
    let mut saw_extent = false;
    let err = Simulation::new(c)
        .unwrap()
        .run_with(&mut |e: FlowEvent| saw_extent |= e.kind == EventKind::TableExtent)
        .unwrap_err();
    assert!(saw_extent);
    let root = match &err {
        Error::StepFailed { source, .. } => source.as_ref(),
        e => e,
    };
    assert!(matches!(root, Error::TableExtent { .. }), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn pinching_and_gradient_bounds_hold(
        m in 0.0f64..2.0,
        amplitude in -0.4f64..0.4,
        wavenumber in 1u32..4,
    ) {
        let out = Simulation::new(perturbed(m, GridSpec::axisymmetric(48), amplitude, wavenumber, 1.5))
            .unwrap()
            .run()
            .unwrap();
        let g0 = out.reference.grad_sq0;
        for r in &out.series {
            prop_assert!(r.pinch_low_ok && r.pinch_high_ok, "t = {}", r.t);
            prop_assert!(r.sup_grad_phi_sq <= g0 * (1.0 + 1e-6), "t = {}", r.t);
            prop_assert!(r.f_min > 0.0 && r.r_tilde_min <= r.r_tilde_max);
        }
    }
}
