//! Extrinsic geometry of radial graphs `{(r(theta), theta)}` over the sphere.
//!
//! The evolving unknown is the gauge field `phi = Q(r) - Q(c)`, where
//! `Q' = 1/lambda` is the radial potential of the warp profile and `c` is a
//! fixed base radius. All tensors are expressed in the sigma-orthonormal
//! frame of the grid, so `sigma_ij = delta_ij` and `p = D phi` is a plain
//! 2-vector.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{sectional_from, RadialPoint, WarpDerivatives, WarpProfile};
use crate::curvature::CurvatureFunction;
use crate::error::Result;
use crate::sphere::{NodeDerivatives, ScalarField, SphereGrid};

type Mat2 = [[f64; 2]; 2];

/// Base radius `c` and its potential `Q(c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    pub base: f64,
    pub q_base: f64,
}

impl Gauge {
    pub fn new(profile: &WarpProfile, base: f64) -> Result<Self> {
        Ok(Self {
            base,
            q_base: profile.potential(base)?,
        })
    }
}

/// Inverts `phi = Q(r) - Q(c)` nodewise.
pub fn gauge_to_radius(profile: &WarpProfile, phi: &[f64], gauge: Gauge) -> Result<Vec<RadialPoint>> {
    phi.par_iter()
        .with_min_len(64)
        .map(|&p| profile.locate_potential(p + gauge.q_base))
        .collect()
}

/// Radius-to-gauge map `r -> Q(r) - Q(c)`.
pub fn radius_to_gauge(profile: &WarpProfile, r: &[f64], gauge: Gauge) -> Result<Vec<f64>> {
    r.par_iter()
        .with_min_len(64)
        .map(|&x| Ok(profile.potential(x)? - gauge.q_base))
        .collect()
}

#[derive(Debug, Clone)]
pub struct GraphState {
    pub t: f64,
    pub phi: Vec<f64>,
    pub r: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gauge: Gauge,
    grid: Arc<SphereGrid>,
    profile: Arc<WarpProfile>,
}

impl GraphState {
    /// State for a radial field `r0`, with base radius `c = inf r0`.
    pub fn from_radius(grid: Arc<SphereGrid>, profile: Arc<WarpProfile>, r0: &[f64], t: f64) -> Result<Self> {
        ScalarField::new(&grid, r0.to_vec(), t)?;
        let base = r0.iter().copied().fold(f64::INFINITY, f64::min);
        let gauge = Gauge::new(&profile, base)?;
        let phi = radius_to_gauge(&profile, r0, gauge)?;
        Self::from_phi(grid, profile, gauge, phi, t)
    }

    pub fn from_phi(
        grid: Arc<SphereGrid>,
        profile: Arc<WarpProfile>,
        gauge: Gauge,
        phi: Vec<f64>,
        t: f64,
    ) -> Result<Self> {
        ScalarField::new(&grid, phi.clone(), t)?;
        let pts = gauge_to_radius(&profile, &phi, gauge)?;
        Ok(Self {
            t,
            r: pts.iter().map(|p| p.r).collect(),
            lambda: pts.iter().map(|p| p.lambda).collect(),
            phi,
            gauge,
            grid,
            profile,
        })
    }

    /// Same geometry context, new gauge values.
    pub fn with_phi(&self, phi: Vec<f64>, t: f64) -> Result<Self> {
        Self::from_phi(self.grid.clone(), self.profile.clone(), self.gauge, phi, t)
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn profile(&self) -> &Arc<WarpProfile> {
        &self.profile
    }

    pub fn phi_field(&self) -> ScalarField {
        ScalarField {
            t: self.t,
            values: self.phi.clone(),
        }
    }

    pub fn extrinsic(&self) -> Vec<NodeGeometry> {
        (0..self.grid.len())
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let d = self.grid.node_derivatives(&self.phi, i);
                let w = self.profile.derivatives_of(self.lambda[i]);
                NodeGeometry::new(w, d)
            })
            .collect()
    }
}

/// Pointwise extrinsic data of the graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeGeometry {
    pub warp: WarpDerivatives,
    /// `D phi`
    pub grad: [f64; 2],
    /// `D^2 phi` as `[a, b, c]`
    pub hess: [f64; 3],
    pub v: f64,
    pub chi: f64,
    /// Mixed shape operator `h^i_j`, row `i`, column `j`.
    pub shape: Mat2,
    /// Principal curvatures, ascending.
    pub kappa: [f64; 2],
    /// g-orthonormal principal directions matching `kappa`.
    pub directions: [[f64; 2]; 2],
}

impl NodeGeometry {
    pub fn new(warp: WarpDerivatives, d: NodeDerivatives) -> Self {
        let WarpDerivatives { lambda, dlambda, .. } = warp;
        let p = d.grad;
        let [a, b, c] = d.hess;
        let p2 = p[0] * p[0] + p[1] * p[1];
        let v = (1.0 + p2).sqrt();
        let lv = lambda * v;

        // g~ = I - p p^T / v^2
        let gt = [
            [1.0 - p[0] * p[0] / (v * v), -p[0] * p[1] / (v * v)],
            [-p[0] * p[1] / (v * v), 1.0 - p[1] * p[1] / (v * v)],
        ];
        let hm = [[a, b], [b, c]];
        let mut shape = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let gh = gt[i][0] * hm[0][j] + gt[i][1] * hm[1][j];
                shape[i][j] = ((if i == j { dlambda } else { 0.0 }) - gh) / lv;
            }
        }

        // symmetric form B^{-1/2} H B^{-1/2}, B = I + p p^T
        let root = inv_sqrt_b(p, v);
        let m = sandwich(root, hm);
        let (mu_lo, mu_hi) = crate::sphere::sym_eigenvalues([m[0][0], m[0][1], m[1][1]]);
        let phi = 0.5 * (2.0 * m[0][1]).atan2(m[0][0] - m[1][1]);
        let (cs, sn) = (phi.cos(), phi.sin());
        let w_hi = [cs, sn];
        let w_lo = [-sn, cs];
        let kappa = [(dlambda - mu_hi) / lv, (dlambda - mu_lo) / lv];
        let e = |w: [f64; 2]| {
            let x = mat_vec(root, w);
            [x[0] / lambda, x[1] / lambda]
        };
        Self {
            warp,
            grad: p,
            hess: d.hess,
            v,
            chi: lambda / v,
            shape,
            kappa,
            directions: [e(w_hi), e(w_lo)],
        }
    }

    /// Induced metric `g_ij = lambda^2 (sigma_ij + phi_i phi_j)`.
    pub fn metric(&self) -> Mat2 {
        let l2 = self.warp.lambda * self.warp.lambda;
        let p = self.grad;
        [
            [l2 * (1.0 + p[0] * p[0]), l2 * p[0] * p[1]],
            [l2 * p[0] * p[1], l2 * (1.0 + p[1] * p[1])],
        ]
    }

    /// `F^{ij} = sum_a F_a e_a^i e_a^j` for `F_a = dF/dkappa_a`.
    pub fn f_tensor(&self, f_grad: [f64; 2]) -> Mat2 {
        let mut out = [[0.0; 2]; 2];
        for (fa, e) in f_grad.iter().zip(&self.directions) {
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] += fa * e[i] * e[j];
                }
            }
        }
        out
    }

    /// Ambient frame vectors `(X_1, X_2, nu)`; see [`ambient_riemann`].
    ///
    /// `r_grad` is the frame gradient of the radial field; on the exact
    /// graph it equals `lambda * D phi`.
    pub fn frame_vectors(&self, r_grad: [f64; 2]) -> ([[f64; 3]; 2], [f64; 3]) {
        let l = self.warp.lambda;
        let p = self.grad;
        let x1 = [r_grad[0], l, 0.0];
        let x2 = [r_grad[1], 0.0, l];
        let nu = [1.0 / self.v, -p[0] / self.v, -p[1] / self.v];
        ([x1, x2], nu)
    }
}

fn inv_sqrt_b(p: [f64; 2], v: f64) -> Mat2 {
    let p2 = p[0] * p[0] + p[1] * p[1];
    if p2 == 0.0 {
        return [[1.0, 0.0], [0.0, 1.0]];
    }
    // I - (1 - 1/v) p p^T / |p|^2, with (1 - 1/v)/|p|^2 = 1/(v (v + 1))
    let k = 1.0 / (v * (v + 1.0));
    [
        [1.0 - k * p[0] * p[0], -k * p[0] * p[1]],
        [-k * p[0] * p[1], 1.0 - k * p[1] * p[1]],
    ]
}

fn mat_vec(m: Mat2, w: [f64; 2]) -> [f64; 2] {
    [m[0][0] * w[0] + m[0][1] * w[1], m[1][0] * w[0] + m[1][1] * w[1]]
}

fn sandwich(r: Mat2, h: Mat2) -> Mat2 {
    let mut t = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            t[i][j] = (0..2).map(|k| h[i][k] * r[k][j]).sum();
        }
    }
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (0..2).map(|k| r[i][k] * t[k][j]).sum();
        }
    }
    // remove rounding asymmetry
    let off = 0.5 * (out[0][1] + out[1][0]);
    out[0][1] = off;
    out[1][0] = off;
    out
}

/// Ambient curvature `R(X, Y, Z, W)` of `dr^2 + lambda^2 sigma`.
///
/// Vectors are given in the orthonormal frame `(d_r, E_1, E_2)` with
/// `E_i = e_i / lambda`. The convention is `R(X, Y, X, Y) = K |X ^ Y|^2`.
pub fn ambient_riemann(k_tan: f64, k_rad: f64, x: [f64; 3], y: [f64; 3], z: [f64; 3], w: [f64; 3]) -> f64 {
    let t = |a: [f64; 3], b: [f64; 3]| a[1] * b[1] + a[2] * b[2];
    let tan = t(x, z) * t(y, w) - t(x, w) * t(y, z);
    let rad = t(x, z) * y[0] * w[0] + x[0] * z[0] * t(y, w) - t(x, w) * y[0] * z[0] - x[0] * w[0] * t(y, z);
    k_tan * tan + k_rad * rad
}

/// `(1/lambda)(lambda lambda'' + 1 - lambda'^2) = m (n + 1)/2 lambda^(-n)`.
pub fn radial_defect(lambda: f64, m: f64, n: u32) -> f64 {
    0.5 * m * (n + 1) as f64 * lambda.powi(-(n as i32))
}

/// The two ambient contractions along the graph at one node:
/// `R(X_i, nu, X_j, nu)` and `R(nu, X_i, (lambda d_r)^T, X_j)`.
pub fn ambient_contractions(g: &NodeGeometry) -> (Mat2, Mat2) {
    ambient_contractions_with(
        g,
        g.warp.ddlambda,
        [g.warp.lambda * g.grad[0], g.warp.lambda * g.grad[1]],
    )
}

fn ambient_contractions_with(g: &NodeGeometry, ddlambda: f64, r_grad: [f64; 2]) -> (Mat2, Mat2) {
    let (k_tan, k_rad) = sectional_from(&WarpDerivatives { ddlambda, ..g.warp });
    let (xs, nu) = g.frame_vectors(r_grad);
    let radial = [g.warp.lambda, 0.0, 0.0];
    let tangential = [
        radial[0] - g.chi * nu[0],
        radial[1] - g.chi * nu[1],
        radial[2] - g.chi * nu[2],
    ];
    let mut first = [[0.0; 2]; 2];
    let mut second = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            first[i][j] = ambient_riemann(k_tan, k_rad, xs[i], nu, xs[j], nu);
            second[i][j] = ambient_riemann(k_tan, k_rad, nu, xs[i], tangential, xs[j]);
        }
    }
    (first, second)
}

/// Sup-norm residuals of three pointwise identities on a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// `chi^-1 F^ij R(nu, X_i, lambda d_r, X_j) + (lambda''/lambda) F^ij g_ij`
    pub curvature: f64,
    /// `D_i v - v^-1 phi_ki phi^k`
    pub gradient_v: f64,
    /// `v_k - (lambda'/lambda) v r_k + v^2 h^i_k r_i`
    pub radial_v: f64,
}

/// Evaluates the identities with independent discretizations of each side:
/// tangent vectors use finite differences of the radial field, `D v` uses
/// finite differences of the nodal tilt factor.
pub fn identity_residuals(state: &GraphState, f: &CurvatureFunction) -> Result<IdentityResiduals> {
    identity_residuals_with(state, f, |l| state.profile().ddlambda_of(l))
}

/// As [`identity_residuals`] with the `lambda''` entering the ambient
/// curvature supplied by the caller.
pub fn identity_residuals_with(
    state: &GraphState,
    f: &CurvatureFunction,
    ddlambda: impl Fn(f64) -> f64,
) -> Result<IdentityResiduals> {
    let grid = state.grid();
    let geo = state.extrinsic();
    let v: Vec<f64> = geo.iter().map(|g| g.v).collect();
    let mut out = IdentityResiduals {
        curvature: 0.0,
        gradient_v: 0.0,
        radial_v: 0.0,
    };
    for (i, g) in geo.iter().enumerate() {
        let r_grad = grid.node_derivatives(&state.r, i).grad;
        let (_, fg) = f.eval_grad2(g.kappa)?;
        let ft = g.f_tensor(fg);

        let (xs, nu) = g.frame_vectors(r_grad);
        let radial = [g.warp.lambda, 0.0, 0.0];
        let (k_tan, k_rad) = sectional_from(&WarpDerivatives {
            ddlambda: ddlambda(g.warp.lambda),
            ..g.warp
        });
        let metric = g.metric();
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                lhs += ft[a][b] * ambient_riemann(k_tan, k_rad, nu, xs[a], radial, xs[b]);
                rhs += ft[a][b] * metric[a][b];
            }
        }
        lhs /= g.chi;
        rhs *= -g.warp.ddlambda / g.warp.lambda;
        out.curvature = out.curvature.max((lhs - rhs).abs());

        let dv = grid.node_derivatives(&v, i).grad;
        let h = [[g.hess[0], g.hess[1]], [g.hess[1], g.hess[2]]];
        let hp = mat_vec(h, g.grad);
        let scale = g.warp.dlambda / g.warp.lambda * g.v;
        for k in 0..2 {
            out.gradient_v = out.gradient_v.max((dv[k] - hp[k] / g.v).abs());
            let hr: f64 = (0..2).map(|j| g.shape[j][k] * r_grad[j]).sum();
            let rhs = scale * r_grad[k] - g.v * g.v * hr;
            out.radial_v = out.radial_v.max((dv[k] - rhs).abs());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::BackgroundParams;
    use crate::curvature::CurvatureKind;

    fn setup(m: f64, n_theta: usize, r_max: f64) -> (Arc<SphereGrid>, Arc<WarpProfile>) {
        (
            Arc::new(SphereGrid::axisymmetric(n_theta).unwrap()),
            Arc::new(WarpProfile::build(BackgroundParams::new(m, 2).unwrap(), r_max).unwrap()),
        )
    }

    #[test]
    fn zero_gauge_is_base_radius() {
        let (grid, prof) = setup(1.0, 32, 6.0);
        let gauge = Gauge::new(&prof, 1.7).unwrap();
        let s = GraphState::from_phi(grid, prof, gauge, vec![0.0; 32], 0.0).unwrap();
        assert!(s.r.iter().all(|r| (r - 1.7).abs() < 1e-12));
    }

    #[test]
    fn hyperbolic_gauge_round_trip() {
        let (_, prof) = setup(0.0, 32, 8.0);
        let gauge = Gauge::new(&prof, 1.0).unwrap();
        let r: Vec<f64> = (1..50).map(|k| 0.2 + 0.15 * k as f64).collect();
        let phi = radius_to_gauge(&prof, &r, gauge).unwrap();
        for (x, p) in r.iter().zip(&phi) {
            let closed = (x / 2.0).tanh().ln() - 0.5f64.tanh().ln();
            assert!((p - closed).abs() < 1e-13);
        }
        let back = gauge_to_radius(&prof, &phi, gauge).unwrap();
        for (x, b) in r.iter().zip(&back) {
            assert!((x - b.r).abs() < 1e-9);
        }
    }

    #[test]
    fn gauge_inverse_accuracy() {
        let (_, prof) = setup(2.0, 32, 8.0);
        let gauge = Gauge::new(&prof, 1.3).unwrap();
        let phi: Vec<f64> = (0..40).map(|k| -0.3 + 0.015 * k as f64).collect();
        let pts = gauge_to_radius(&prof, &phi, gauge).unwrap();
        for (p, pt) in phi.iter().zip(&pts) {
            assert!((prof.potential(pt.r).unwrap() - gauge.q_base - p).abs() <= 1e-10);
        }
    }

    #[test]
    fn geodesic_sphere_is_umbilic() {
        for m in [0.0, 1.0, 2.0] {
            let (grid, prof) = setup(m, 32, 6.0);
            let s = GraphState::from_radius(grid, prof.clone(), &[1.0; 32], 0.0).unwrap();
            let w = prof.derivatives(1.0).unwrap();
            for g in s.extrinsic() {
                assert_eq!(g.v, 1.0);
                for k in g.kappa {
                    assert!((k - w.dlambda / w.lambda).abs() <= 1e-12);
                }
                let (first, second) = ambient_contractions(&g);
                assert!((first[0][0] + w.lambda * w.ddlambda).abs() <= 1e-12 * w.lambda * w.ddlambda);
                assert!(first[0][1].abs() <= 1e-14 && second[0][0].abs() <= 1e-14);
            }
        }
        let (grid, prof) = setup(0.0, 32, 6.0);
        let s = GraphState::from_radius(grid, prof, &[1.0; 32], 0.0).unwrap();
        let coth1 = 1.0f64.cosh() / 1.0f64.sinh();
        assert!((s.extrinsic()[5].kappa[0] - coth1).abs() < 1e-12);
        assert!((coth1 - 1.313035).abs() < 1e-6);
    }

    fn perturbed(m: f64, n: usize) -> GraphState {
        let (grid, prof) = setup(m, n, 6.0);
        let r0 = grid.sample(|t, _| 2.0 + 0.3 * t.cos());
        GraphState::from_radius(grid, prof, &r0, 0.0).unwrap()
    }

    #[test]
    fn shape_operator_self_adjoint() {
        let s = perturbed(1.0, 64);
        for g in s.extrinsic() {
            let gm = g.metric();
            let mut gh = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    gh[i][j] = (0..2).map(|k| gm[i][k] * g.shape[k][j]).sum();
                }
            }
            let scale = gm[0][0].abs() * g.shape[0][0].abs().max(1.0);
            assert!((gh[0][1] - gh[1][0]).abs() <= 1e-12 * scale);
            assert!(g.v >= 1.0);
        }
    }

    #[test]
    fn eigen_data_consistent_with_raw_shape() {
        let s = perturbed(1.0, 64);
        for g in s.extrinsic() {
            let tr = g.shape[0][0] + g.shape[1][1];
            let det = g.shape[0][0] * g.shape[1][1] - g.shape[0][1] * g.shape[1][0];
            assert!((g.kappa[0] + g.kappa[1] - tr).abs() <= 1e-13);
            assert!((g.kappa[0] * g.kappa[1] - det).abs() <= 1e-13);
            assert!(g.kappa[0] <= g.kappa[1]);
            // directions are g-orthonormal eigenvectors
            let gm = g.metric();
            for (a, e) in g.directions.iter().enumerate() {
                let he = mat_vec(g.shape, *e);
                assert!((he[0] - g.kappa[a] * e[0]).abs() <= 1e-12 && (he[1] - g.kappa[a] * e[1]).abs() <= 1e-12);
                let norm: f64 = (0..2)
                    .map(|i| (0..2).map(|j| e[i] * gm[i][j] * e[j]).sum::<f64>())
                    .sum();
                assert!((norm - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn second_contraction_matches_closed_form() {
        let s = perturbed(1.5, 64);
        for g in s.extrinsic() {
            let (_, second) = ambient_contractions(&g);
            let l = g.warp.lambda;
            let p = g.grad;
            let p2 = p[0] * p[0] + p[1] * p[1];
            let pre = -l * l / g.v.powi(3) * radial_defect(l, 1.5, 2);
            let expect = [
                [pre * (p2 - p[0] * p[0]), -pre * p[0] * p[1]],
                [-pre * p[0] * p[1], pre * (p2 - p[1] * p[1])],
            ];
            for i in 0..2 {
                for j in 0..2 {
                    assert!((second[i][j] - expect[i][j]).abs() <= 1e-12 * (1.0 + pre.abs()));
                }
            }
        }
        // the defect vanishes for sinh
        let (grid, prof) = setup(0.0, 64, 6.0);
        let r0 = grid.sample(|t, _| 2.0 + 0.3 * t.cos());
        let s = GraphState::from_radius(grid, prof, &r0, 0.0).unwrap();
        for g in s.extrinsic() {
            let (_, second) = ambient_contractions(&g);
            assert!(second.iter().flatten().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn radial_defect_matches_warp_derivatives() {
        let prof = WarpProfile::build(BackgroundParams::new(1.3, 3).unwrap(), 5.0).unwrap();
        for lam in [1.0, 2.0, 10.0] {
            let w = prof.derivatives_of(lam);
            let direct = (lam * w.ddlambda + 1.0 - w.dlambda * w.dlambda) / lam;
            assert!((direct - radial_defect(lam, 1.3, 3)).abs() <= 1e-12 * direct.abs().max(1e-3));
        }
    }

    #[test]
    fn identities_converge_at_second_order() {
        let f = CurvatureFunction::new(CurvatureKind::SigmaRoot(2), 2).unwrap();
        let res: Vec<IdentityResiduals> = [64, 128, 256]
            .iter()
            .map(|&n| identity_residuals(&perturbed(1.0, n), &f).unwrap())
            .collect();
        for w in res.windows(2) {
            assert!(w[0].curvature / w[1].curvature >= 3.5, "{res:?}");
            assert!(w[0].gradient_v / w[1].gradient_v >= 3.5, "{res:?}");
            assert!(w[0].radial_v / w[1].radial_v >= 3.5, "{res:?}");
        }
    }

    #[test]
    fn flipped_second_derivative_breaks_curvature_identity() {
        let f = CurvatureFunction::new(CurvatureKind::Mean, 2).unwrap();
        let s = perturbed(1.0, 128);
        let good = identity_residuals(&s, &f).unwrap();
        let bad = identity_residuals_with(&s, &f, |l| -s.profile().ddlambda_of(l)).unwrap();
        assert!(good.curvature < 1e-3 && bad.curvature > 1.0, "{good:?} {bad:?}");
    }

    #[test]
    fn first_contraction_equals_generic_formula() {
        let s = perturbed(1.0, 64);
        for g in s.extrinsic().iter().step_by(7) {
            let (first, _) = ambient_contractions(g);
            let w = g.warp;
            let (kt, kr) = sectional_from(&w);
            let p = g.grad;
            let p2 = p[0] * p[0] + p[1] * p[1];
            let f = w.lambda * w.lambda / (g.v * g.v);
            for i in 0..2 {
                for j in 0..2 {
                    let d = if i == j { 1.0 } else { 0.0 };
                    let e = f * (kt * (p2 * d - p[i] * p[j]) + kr * (d + (p2 + 2.0) * p[i] * p[j]));
                    assert!((first[i][j] - e).abs() <= 1e-12 * e.abs().max(1.0));
                }
            }
        }
    }
}
