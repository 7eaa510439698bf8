//! Cell-centred grids on the round 2-sphere and second-order covariant calculus.
//!
//! Nodes are stored theta-major: index `j * n_psi + k`. The axisymmetric grid
//! is the special case `n_psi = 1`. Derivatives are returned in the
//! sigma-orthonormal frame `(d_theta, d_psi / sin theta)` unless stated.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridMode {
    #[serde(rename = "axisymmetric1d")]
    Axisymmetric1d,
    #[serde(rename = "latlong2d")]
    LatLong2d,
}

impl GridMode {
    pub fn name(&self) -> &'static str {
        match self {
            GridMode::Axisymmetric1d => "axisymmetric1d",
            GridMode::LatLong2d => "latlong2d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub mode: GridMode,
    pub n_theta: usize,
    pub n_psi: usize,
}

impl GridSpec {
    pub fn axisymmetric(n_theta: usize) -> Self {
        Self {
            mode: GridMode::Axisymmetric1d,
            n_theta,
            n_psi: 1,
        }
    }

    pub fn latlong(n_theta: usize, n_psi: usize) -> Self {
        Self {
            mode: GridMode::LatLong2d,
            n_theta,
            n_psi,
        }
    }
}

/// First and second covariant derivatives at one node, frame components.
///
/// `hess = [f_11, f_12, f_22]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeDerivatives {
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct SphereGrid {
    spec: GridSpec,
    theta: Vec<f64>,
    psi: Vec<f64>,
    sin: Vec<f64>,
    cot: Vec<f64>,
    weights: Vec<f64>,
    d_theta: f64,
    d_psi: f64,
}

impl SphereGrid {
    pub fn build(spec: GridSpec) -> Result<Self> {
        if spec.n_theta < 16 {
            return Err(Error::ResolutionTooSmall(format!("n_theta = {} < 16", spec.n_theta)));
        }
        match spec.mode {
            GridMode::Axisymmetric1d => {
                if spec.n_psi != 1 {
                    return Err(Error::InvalidParameter(format!(
                        "axisymmetric grid has n_psi = 1, got {}",
                        spec.n_psi
                    )));
                }
            }
            GridMode::LatLong2d => {
                if spec.n_psi < 2 * spec.n_theta || spec.n_psi % 2 != 0 {
                    return Err(Error::ResolutionTooSmall(format!(
                        "n_psi = {} must be even and at least 2 n_theta = {}",
                        spec.n_psi,
                        2 * spec.n_theta
                    )));
                }
            }
        }
        let nt = spec.n_theta;
        let d_theta = PI / nt as f64;
        let d_psi = 2.0 * PI / spec.n_psi as f64;
        let theta: Vec<f64> = (0..nt).map(|j| (j as f64 + 0.5) * d_theta).collect();
        let psi: Vec<f64> = (0..spec.n_psi).map(|k| k as f64 * d_psi).collect();
        let sin: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
        let cot: Vec<f64> = theta.iter().map(|t| t.cos() / t.sin()).collect();
        let ring: Vec<f64> = (0..nt)
            .map(|j| {
                let lo = j as f64 * d_theta;
                let hi = (j + 1) as f64 * d_theta;
                // cos(lo) - cos(hi) without cancellation
                2.0 * PI * 2.0 * (0.5 * (lo + hi)).sin() * (0.5 * (hi - lo)).sin() / spec.n_psi as f64
            })
            .collect();
        let weights = (0..nt * spec.n_psi).map(|i| ring[i / spec.n_psi]).collect();
        Ok(Self {
            spec,
            theta,
            psi,
            sin,
            cot,
            weights,
            d_theta,
            d_psi,
        })
    }

    pub fn axisymmetric(n_theta: usize) -> Result<Self> {
        Self::build(GridSpec::axisymmetric(n_theta))
    }

    pub fn latlong(n_theta: usize, n_psi: usize) -> Result<Self> {
        Self::build(GridSpec::latlong(n_theta, n_psi))
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.n_theta * self.spec.n_psi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_theta(&self) -> usize {
        self.spec.n_theta
    }

    pub fn n_psi(&self) -> usize {
        self.spec.n_psi
    }

    /// `(theta, psi)` of node `i`.
    pub fn coords(&self, i: usize) -> (f64, f64) {
        let (j, k) = self.split(i);
        (self.theta[j], self.psi[k])
    }

    pub fn thetas(&self) -> &[f64] {
        &self.theta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn d_theta(&self) -> f64 {
        self.d_theta
    }

    /// Smallest sigma-geodesic spacing between neighbouring nodes.
    pub fn h_min(&self) -> f64 {
        match self.spec.mode {
            GridMode::Axisymmetric1d => self.d_theta,
            GridMode::LatLong2d => self.d_theta.min(self.sin[0] * self.d_psi),
        }
    }

    fn split(&self, i: usize) -> (usize, usize) {
        (i / self.spec.n_psi, i % self.spec.n_psi)
    }

    /// Value at `(j, k)` with even reflection across the poles and periodic psi.
    #[inline]
    fn at(&self, f: &[f64], j: isize, k: isize) -> f64 {
        let nt = self.spec.n_theta as isize;
        let np = self.spec.n_psi as isize;
        let (j, k) = if j < 0 {
            (-j - 1, k + np / 2)
        } else if j >= nt {
            (2 * nt - 1 - j, k + np / 2)
        } else {
            (j, k)
        };
        f[(j * np + k.rem_euclid(np)) as usize]
    }

    /// Frame derivatives at a single node.
    pub fn node_derivatives(&self, f: &[f64], i: usize) -> NodeDerivatives {
        let (j, k) = self.split(i);
        let (ji, ki) = (j as isize, k as isize);
        let h = self.d_theta;
        let f0 = f[i];
        let fn_ = self.at(f, ji - 1, ki);
        let fs = self.at(f, ji + 1, ki);
        let f_t = (fs - fn_) / (2.0 * h);
        let f_tt = (fs - 2.0 * f0 + fn_) / (h * h);
        let cot = self.cot[j];
        match self.spec.mode {
            GridMode::Axisymmetric1d => {
                let pole = j == 0 || j + 1 == self.spec.n_theta;
                let c = if pole { f_tt } else { cot * f_t };
                NodeDerivatives {
                    grad: [f_t, 0.0],
                    hess: [f_tt, 0.0, c],
                }
            }
            GridMode::LatLong2d => {
                let hp = self.d_psi;
                let s = self.sin[j];
                let fe = self.at(f, ji, ki + 1);
                let fw = self.at(f, ji, ki - 1);
                let f_p = (fe - fw) / (2.0 * hp);
                let f_pp = (fe - 2.0 * f0 + fw) / (hp * hp);
                let f_tp = (self.at(f, ji + 1, ki + 1) - self.at(f, ji + 1, ki - 1) - self.at(f, ji - 1, ki + 1)
                    + self.at(f, ji - 1, ki - 1))
                    / (4.0 * h * hp);
                NodeDerivatives {
                    grad: [f_t, f_p / s],
                    hess: [f_tt, (f_tp - cot * f_p) / s, f_pp / (s * s) + cot * f_t],
                }
            }
        }
    }

    pub fn frame_derivatives(&self, f: &[f64]) -> Vec<NodeDerivatives> {
        (0..self.len()).map(|i| self.node_derivatives(f, i)).collect()
    }

    /// Coordinate components `(f_theta, f_psi)`.
    pub fn covariant_grad(&self, f: &[f64]) -> Vec<[f64; 2]> {
        (0..self.len())
            .map(|i| {
                let d = self.node_derivatives(f, i);
                let s = self.sin[self.split(i).0];
                [d.grad[0], d.grad[1] * s]
            })
            .collect()
    }

    /// Coordinate components `(f_theta_theta, f_theta_psi, f_psi_psi)`.
    pub fn covariant_hess(&self, f: &[f64]) -> Vec<[f64; 3]> {
        (0..self.len())
            .map(|i| {
                let d = self.node_derivatives(f, i);
                let s = self.sin[self.split(i).0];
                [d.hess[0], d.hess[1] * s, d.hess[2] * s * s]
            })
            .collect()
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let d = self.node_derivatives(f, i);
                d.hess[0] + d.hess[2]
            })
            .collect()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Largest spread `max - min` over any latitude ring.
    pub fn azimuthal_variation(&self, f: &[f64]) -> f64 {
        f.chunks(self.spec.n_psi)
            .map(|ring| sup(ring) - inf(ring))
            .fold(0.0, f64::max)
    }

    /// Samples `f(theta, psi)` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (t, p) = self.coords(i);
                f(t, p)
            })
            .collect()
    }
}

/// A function on the grid nodes at a time tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub t: f64,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &SphereGrid, values: Vec<f64>, t: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at node {i}")));
        }
        Ok(Self { t, values })
    }
}

pub fn sup(f: &[f64]) -> f64 {
    f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn inf(f: &[f64]) -> f64 {
    f.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn sup_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Eigenvalues `(lo, hi)` of the symmetric 2x2 matrix `[[a, b], [b, c]]`.
pub fn sym_eigenvalues(t: [f64; 3]) -> (f64, f64) {
    let [a, b, c] = t;
    let mean = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    // product form for the smaller-magnitude root avoids cancellation
    let big = if mean >= 0.0 { mean + rad } else { mean - rad };
    let small = if big != 0.0 { (a * c - b * b) / big } else { 0.0 };
    if big >= small {
        (small, big)
    } else {
        (big, small)
    }
}

/// Largest absolute eigenvalue of a frame (1,1)-tensor.
pub fn spectral_norm(t: [f64; 3]) -> f64 {
    let (lo, hi) = sym_eigenvalues(t);
    lo.abs().max(hi.abs())
}

/// `sqrt(a^2 + 2 b^2 + c^2)`, the sigma-norm of a symmetric frame tensor.
pub fn frobenius_norm(t: [f64; 3]) -> f64 {
    let [a, b, c] = t;
    (a * a + 2.0 * b * b + c * c).sqrt()
}

pub fn tensor_sup_norm(ts: &[[f64; 3]]) -> f64 {
    ts.iter().map(|t| frobenius_norm(*t)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_and_area() {
        let g = SphereGrid::axisymmetric(64).unwrap();
        assert_eq!(g.len(), 64);
        assert!((g.weights().iter().sum::<f64>() - 4.0 * PI).abs() < 1e-10);
        let g = SphereGrid::latlong(64, 128).unwrap();
        assert_eq!(g.len(), 8192);
        assert!((g.weights().iter().sum::<f64>() - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn resolution_guard() {
        assert!(matches!(SphereGrid::axisymmetric(8), Err(Error::ResolutionTooSmall(_))));
        assert!(matches!(SphereGrid::latlong(16, 30), Err(Error::ResolutionTooSmall(_))));
        assert!(matches!(SphereGrid::latlong(16, 33), Err(Error::ResolutionTooSmall(_))));
    }

    #[test]
    fn constants_have_no_derivatives() {
        for g in [
            SphereGrid::axisymmetric(32).unwrap(),
            SphereGrid::latlong(16, 32).unwrap(),
        ] {
            let f = vec![3.7; g.len()];
            for d in g.frame_derivatives(&f) {
                assert_eq!(d.grad, [0.0, 0.0]);
                assert_eq!(d.hess, [0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn first_harmonic() {
        let g = SphereGrid::axisymmetric(128).unwrap();
        let f = g.sample(|t, _| t.cos());
        let h = g.d_theta();
        let grad = g.covariant_grad(&f);
        let hess = g.frame_derivatives(&f);
        for (j, &t) in g.thetas().iter().enumerate() {
            assert!((grad[j][0] + t.sin()).abs() < h * h);
            let [a, b, c] = hess[j].hess;
            assert!((a + t.cos()).abs() < h * h && b == 0.0 && (c + t.cos()).abs() < h * h);
        }
        assert!((sup(&f) - (h / 2.0).cos()).abs() < 1e-15);
        assert!((inf(&f) + (h / 2.0).cos()).abs() < 1e-15);
    }

    fn cos2_errors(g: &SphereGrid) -> (f64, f64) {
        let f = g.sample(|t, _| (2.0 * t).cos());
        let d = g.frame_derivatives(&f);
        let mut eg: f64 = 0.0;
        let mut eh: f64 = 0.0;
        for i in 0..g.len() {
            let (t, _) = g.coords(i);
            let ft = -2.0 * (2.0 * t).sin();
            let ftt = -4.0 * (2.0 * t).cos();
            // cot(t) * f_t = -4 cos^2 t
            let c = -4.0 * t.cos() * t.cos();
            eg = eg.max((d[i].grad[0] - ft).abs()).max(d[i].grad[1].abs());
            eh = eh.max(frobenius_norm([d[i].hess[0] - ftt, d[i].hess[1], d[i].hess[2] - c]));
        }
        (eg, eh)
    }

    #[test]
    fn second_order_refinement() {
        let mut prev = cos2_errors(&SphereGrid::axisymmetric(32).unwrap());
        for n in [64, 128, 256] {
            let e = cos2_errors(&SphereGrid::axisymmetric(n).unwrap());
            assert!((prev.0 / e.0).log2() >= 1.9, "grad n={n}");
            assert!((prev.1 / e.1).log2() >= 1.9, "hess n={n}");
            prev = e;
        }
        let e1 = cos2_errors(&SphereGrid::latlong(32, 64).unwrap());
        let e2 = cos2_errors(&SphereGrid::latlong(64, 128).unwrap());
        assert!((e1.0 / e2.0).log2() >= 1.9 && (e1.1 / e2.1).log2() >= 1.9);
    }

    /// Worst error of the first harmonic `x = sin(theta) cos(psi)`, over
    /// all nodes and over the band `|theta - pi/2| <= pi/4`.
    fn harmonic_x_errors(n: usize) -> (f64, f64) {
        let g = SphereGrid::latlong(n, 2 * n).unwrap();
        let f = g.sample(|t, p| t.sin() * p.cos());
        let d = g.frame_derivatives(&f);
        let (mut all, mut band) = (0.0f64, 0.0f64);
        for i in 0..g.len() {
            let (t, p) = g.coords(i);
            let x = t.sin() * p.cos();
            let gt = t.cos() * p.cos();
            let gp = -p.sin();
            // Hess x = -x sigma
            let e = frobenius_norm([d[i].hess[0] + x, d[i].hess[1], d[i].hess[2] + x])
                .max((d[i].grad[0] - gt).abs())
                .max((d[i].grad[1] - gp).abs());
            all = all.max(e);
            if (t - PI / 2.0).abs() <= PI / 4.0 {
                band = band.max(e);
            }
        }
        (all, band)
    }

    #[test]
    fn latlong_nonaxisymmetric_orders() {
        let (a1, b1) = harmonic_x_errors(32);
        let (a2, b2) = harmonic_x_errors(64);
        assert!((b1 / b2).log2() >= 1.9, "band {b1} {b2}");
        // the pole rings carry h^2 / sin(theta) errors
        assert!((a1 / a2).log2() >= 0.9, "all {a1} {a2}");
    }

    #[test]
    fn integration_by_parts() {
        let mut prev = f64::NAN;
        for n in [32, 64, 128] {
            let g = SphereGrid::axisymmetric(n).unwrap();
            let f = g.sample(|t, _| (t.cos() * 2.0).exp());
            let h = g.sample(|t, _| (3.0 * t).cos() + t.cos().powi(2));
            let lf = g.laplacian(&f);
            let lh = g.laplacian(&h);
            let a: Vec<f64> = f.iter().zip(&lh).map(|(x, y)| x * y).collect();
            let b: Vec<f64> = h.iter().zip(&lf).map(|(x, y)| x * y).collect();
            let err = (g.integrate(&a) - g.integrate(&b)).abs();
            assert!(err < 50.0 * g.d_theta().powi(2), "n={n} err={err}");
            if prev.is_finite() {
                assert!(err < prev);
            }
            prev = err;
        }
    }

    #[test]
    fn pole_term_bounded() {
        let g = SphereGrid::axisymmetric(512).unwrap();
        let f = g.sample(|t, _| t.cos().powi(3));
        let d = g.frame_derivatives(&f);
        let worst = d.iter().map(|x| x.hess[2].abs()).fold(0.0, f64::max);
        assert!(worst < 3.1);
    }

    #[test]
    fn tensor_norms() {
        let c = -2.5;
        assert!((frobenius_norm([c, 0.0, c]) - c.abs() * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(spectral_norm([c, 0.0, c]), 2.5);
        let (lo, hi) = sym_eigenvalues([2.0, 1.0, 2.0]);
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 3.0).abs() < 1e-15);
    }

    #[test]
    fn axisymmetric_stays_axisymmetric_in_2d() {
        let g = SphereGrid::latlong(24, 48).unwrap();
        let f = g.sample(|t, _| 1.0 + 0.3 * t.cos() + 0.1 * (2.0 * t).cos());
        let d = g.frame_derivatives(&f);
        let c: Vec<f64> = d.iter().map(|x| x.hess[2]).collect();
        assert_eq!(g.azimuthal_variation(&c), 0.0);
    }

    proptest! {
        #[test]
        fn extrema_match_linear_scan(values in proptest::collection::vec(-1e6f64..1e6, 16..200)) {
            let mut lo = values[0];
            let mut hi = values[0];
            let mut abs = 0.0f64;
            for &v in &values {
                if v < lo { lo = v; }
                if v > hi { hi = v; }
                abs = abs.max(v.abs());
            }
            prop_assert_eq!(sup(&values), hi);
            prop_assert_eq!(inf(&values), lo);
            prop_assert_eq!(sup_norm(&values), abs);
        }

        #[test]
        fn eigenvalues_reconstruct_invariants(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0) {
            let (lo, hi) = sym_eigenvalues([a, b, c]);
            prop_assert!(lo <= hi);
            prop_assert!((lo + hi - (a + c)).abs() <= 1e-12 * (1.0 + a.abs() + c.abs()));
            prop_assert!((lo * hi - (a * c - b * b)).abs() <= 1e-10 * (1.0 + (a * c).abs() + b * b));
        }
    }
}
