//! AdS-Schwarzschild background geometry.
//!
//! The metric is written as `dr^2 + lambda(r)^2 g_sphere` with `r` the geodesic
//! distance from the horizon, so `lambda(0) = s0` and
//! `lambda' = sqrt(1 + lambda^2 - m lambda^(1-n))`.
//!
//! For `m > 0` the inverse map `r(lambda)` is tabulated by quadrature in the
//! variable `u = sqrt(lambda - s0)`, which removes the square-root singularity
//! of `1/lambda'` at the horizon. Off-node values are recovered by Newton
//! iteration on the same quadrature, so the table carries no interpolation
//! error. For `m = 0` the closed form `lambda = sinh r` is used throughout.

use crate::error::{Error, Result};
use crate::quadrature::{gl10, gl20};

/// Mass, dimension and solver tolerances of the background.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BackgroundParams {
    pub m: f64,
    pub n: u32,
    pub tol_root: f64,
    pub tol_ode: f64,
}

impl BackgroundParams {
    pub fn new(m: f64, n: u32) -> Result<Self> {
        let p = Self {
            m,
            n,
            tol_root: 1e-14,
            tol_ode: 1e-10,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::NonPositiveDimension(self.n));
        }
        if !(self.m >= 0.0) || !self.m.is_finite() {
            return Err(Error::NegativeMass(self.m));
        }
        Ok(())
    }

    /// `1 + s^2 - m s^(1-n)`, the right-hand side of `(lambda')^2 = ...`.
    pub fn warp_rhs(&self, s: f64) -> f64 {
        1.0 + s * s - self.m * s.powi(1 - self.n as i32)
    }

    /// Closed-form second derivative `lambda'' = lambda + m(n-1)/2 lambda^(-n)`.
    pub fn ddlambda(&self, lambda: f64) -> f64 {
        let n = self.n as i32;
        lambda + 0.5 * self.m * (n - 1) as f64 * lambda.powi(-n)
    }
}

/// Horizon radius `s0`: the positive root of `1 + s^2 - m s^(1-n)`.
///
/// The left-hand side is strictly increasing on `(0, inf)`, so bisection on a
/// doubling bracket finds the unique root.
pub fn solve_horizon(params: &BackgroundParams) -> Result<f64> {
    params.validate()?;
    if params.m == 0.0 {
        return Ok(0.0);
    }
    let g = |s: f64| params.warp_rhs(s);
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while g(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // pick whichever endpoint has the smaller residual
    let s0 = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    if g(s0).abs() > params.tol_root.max(1e-15 * (1.0 + s0 * s0)) {
        return Err(Error::InvalidParameter(format!(
            "horizon root did not converge: residual {}",
            g(s0)
        )));
    }
    Ok(s0)
}

/// `(lambda, lambda', lambda'')` at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpDerivatives {
    pub lambda: f64,
    pub dlambda: f64,
    pub ddlambda: f64,
}

/// A point on the radial axis, carried with its warp value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialPoint {
    pub r: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    r: f64,
    u: f64,
    /// `int_0^r ds / lambda(s)`
    q: f64,
}

#[derive(Debug, Clone)]
struct Table {
    nodes: Vec<Node>,
    shift: f64,
}

#[derive(Debug, Clone)]
enum Backend {
    Hyperbolic,
    Tabulated(Table),
}

/// Warp function `lambda(r)` on `[0, r_max]` for fixed `(m, n)`.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct WarpProfile {
    params: BackgroundParams,
    s0: f64,
    r_max: f64,
    backend: Backend,
}

const NEAR_HORIZON: f64 = 1.0;
const UNIFORM_STEP: f64 = 0.02;

impl WarpProfile {
    pub fn build(params: BackgroundParams, r_max: f64) -> Result<Self> {
        params.validate()?;
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::InvalidParameter(format!("r_max must be positive, got {r_max}")));
        }
        let s0 = solve_horizon(&params)?;
        if params.m == 0.0 {
            return Ok(Self {
                params,
                s0,
                r_max,
                backend: Backend::Hyperbolic,
            });
        }
        let mut profile = Self {
            params,
            s0,
            r_max,
            backend: Backend::Tabulated(Table {
                nodes: Vec::new(),
                shift: 0.0,
            }),
        };
        let table = profile.tabulate()?;
        profile.backend = Backend::Tabulated(table);
        Ok(profile)
    }

    pub fn params(&self) -> &BackgroundParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.s0
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Radii of the stored table nodes (empty for the closed-form `m = 0` case).
    pub fn node_radii(&self) -> Vec<f64> {
        match &self.backend {
            Backend::Hyperbolic => Vec::new(),
            Backend::Tabulated(t) => t.nodes.iter().map(|n| n.r).collect(),
        }
    }

    /// `g(lambda_h + u^2) / u^2`, evaluated without cancellation near the horizon.
    fn reduced_rhs(&self, u: f64) -> f64 {
        let s0 = self.s0;
        let n = self.params.n as f64;
        let m = self.params.m;
        let u2 = u * u;
        let x = u2 / s0;
        let ratio = if x < 1e-300 {
            1.0 - n
        } else {
            ((1.0 - n) * x.ln_1p()).exp_m1() / x
        };
        2.0 * s0 + u2 - m * s0.powf(-n) * ratio
    }

    fn dr_du(&self, u: f64) -> f64 {
        2.0 / self.reduced_rhs(u).sqrt()
    }

    fn dr_du_and_dq_du(&self, u: f64) -> (f64, f64) {
        let drdu = self.dr_du(u);
        (drdu, drdu / (self.s0 + u * u))
    }

    fn tabulate(&self) -> Result<Table> {
        let mut targets = vec![0.0];
        let mut r = 1e-4;
        while r < UNIFORM_STEP {
            targets.push(r);
            r *= 1.3;
        }
        let mut r = UNIFORM_STEP;
        while r < self.r_max {
            targets.push(r);
            r += UNIFORM_STEP;
        }
        if *targets.last().unwrap() < self.r_max {
            targets.push(self.r_max);
        }
        let mut nodes = Vec::with_capacity(targets.len());
        nodes.push(Node { r: 0.0, u: 0.0, q: 0.0 });
        for &target in &targets[1..] {
            let prev = *nodes.last().unwrap();
            let guess = prev.u + (target - prev.r) / self.dr_du(prev.u);
            let u = self.newton_u(
                prev.u,
                target - prev.r,
                guess,
                |w| self.dr_du(w),
                |a, b| gl10().integrate(a, b, |w| self.dr_du(w)),
            )?;
            let (dr, dq) = gl10().integrate_pair(prev.u, u, |w| self.dr_du_and_dq_du(w));
            nodes.push(Node {
                r: prev.r + dr,
                u,
                q: prev.q + dq,
            });
        }
        let last = *nodes.last().unwrap();
        let lam = self.s0 + last.u * last.u;
        let shift = lam.asinh() - last.r - self.tail_deficit(lam);
        Ok(Table { nodes, shift })
    }

    /// Newton iteration for `u` with `base + integral(base.u, u) = target`.
    fn newton_u(
        &self,
        u0: f64,
        target: f64,
        guess: f64,
        slope: impl Fn(f64) -> f64,
        integral: impl Fn(f64, f64) -> f64,
    ) -> Result<f64> {
        let mut u = guess.max(0.0);
        for _ in 0..50 {
            let f = integral(u0, u) - target;
            let du = f / slope(u);
            let next = (u - du).max(0.5 * u);
            let done = (next - u).abs() <= 1e-15 * next.max(1e-12);
            u = next;
            if done {
                return Ok(u);
            }
        }
        Ok(u)
    }

    fn table(&self) -> Option<&Table> {
        match &self.backend {
            Backend::Hyperbolic => None,
            Backend::Tabulated(t) => Some(t),
        }
    }

    fn check_extent(&self, r: f64) -> Result<()> {
        if !(r >= 0.0) || r > self.r_max * (1.0 + 1e-12) {
            return Err(Error::TableExtent {
                requested: r,
                r_max: self.r_max,
            });
        }
        Ok(())
    }

    fn u_at_radius(&self, t: &Table, r: f64) -> Result<f64> {
        let idx = t.nodes.partition_point(|n| n.r <= r).saturating_sub(1);
        let base = t.nodes[idx];
        if r == base.r {
            return Ok(base.u);
        }
        let guess = match t.nodes.get(idx + 1) {
            Some(next) => hermite(
                base.r,
                next.r,
                base.u,
                next.u,
                1.0 / self.dr_du(base.u),
                1.0 / self.dr_du(next.u),
                r,
            ),
            None => base.u + (r - base.r) / self.dr_du(base.u),
        };
        self.newton_u(
            base.u,
            r - base.r,
            guess,
            |w| self.dr_du(w),
            |a, b| gl10().integrate(a, b, |w| self.dr_du(w)),
        )
    }

    /// `lambda(r)` on `[0, r_max]`.
    pub fn lambda(&self, r: f64) -> Result<f64> {
        self.check_extent(r)?;
        match self.table() {
            None => Ok(r.sinh()),
            Some(t) => {
                let u = self.u_at_radius(t, r)?;
                Ok(self.s0 + u * u)
            }
        }
    }

    /// `lambda'` as a closed-form function of `lambda`.
    pub fn dlambda_of(&self, lambda: f64) -> f64 {
        if self.params.m > 0.0 && lambda - self.s0 < NEAR_HORIZON {
            let u = (lambda - self.s0).max(0.0).sqrt();
            return u * self.reduced_rhs(u).sqrt();
        }
        self.params.warp_rhs(lambda).max(0.0).sqrt()
    }

    pub fn ddlambda_of(&self, lambda: f64) -> f64 {
        self.params.ddlambda(lambda)
    }

    pub fn derivatives_of(&self, lambda: f64) -> WarpDerivatives {
        WarpDerivatives {
            lambda,
            dlambda: self.dlambda_of(lambda),
            ddlambda: self.ddlambda_of(lambda),
        }
    }

    /// `(lambda, lambda', lambda'')` at geodesic radius `r`.
    pub fn derivatives(&self, r: f64) -> Result<WarpDerivatives> {
        Ok(self.derivatives_of(self.lambda(r)?))
    }

    /// Inverse map `r(lambda)`.
    pub fn radius_of_lambda(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= self.s0) {
            return Err(Error::InvalidParameter(format!(
                "lambda = {lambda} is inside the horizon s0 = {}",
                self.s0
            )));
        }
        let r = match self.table() {
            None => lambda.asinh(),
            Some(t) => {
                let u = (lambda - self.s0).sqrt();
                let idx = t.nodes.partition_point(|n| n.u <= u).saturating_sub(1);
                let base = t.nodes[idx];
                base.r + gl10().integrate(base.u, u, |w| self.dr_du(w))
            }
        };
        self.check_extent(r)?;
        Ok(r)
    }

    /// Radial potential `Q(r) = int ds / lambda(s)` up to an additive constant.
    ///
    /// For `m > 0` the constant is fixed by `Q(0) = 0`; for `m = 0` by
    /// `Q(inf) = 0`, i.e. `Q(r) = log tanh(r/2)`. Only differences of `Q`
    /// carry meaning.
    pub fn potential(&self, r: f64) -> Result<f64> {
        self.check_extent(r)?;
        match self.table() {
            None => {
                if r <= 0.0 {
                    return Err(Error::TableExtent {
                        requested: r,
                        r_max: self.r_max,
                    });
                }
                Ok(-2.0 * (-r).exp().atanh())
            }
            Some(t) => {
                let idx = t.nodes.partition_point(|n| n.r <= r).saturating_sub(1);
                let base = t.nodes[idx];
                let u = self.u_at_radius(t, r)?;
                Ok(base.q + gl10().integrate(base.u, u, |w| self.dr_du_and_dq_du(w).1))
            }
        }
    }

    /// Inverse of [`Self::potential`].
    pub fn locate_potential(&self, q: f64) -> Result<RadialPoint> {
        match self.table() {
            None => {
                if !(q < 0.0) {
                    return Err(Error::TableExtent {
                        requested: f64::INFINITY,
                        r_max: self.r_max,
                    });
                }
                let r = -(-0.5 * q).tanh().ln();
                self.check_extent(r)?;
                Ok(RadialPoint { r, lambda: r.sinh() })
            }
            Some(t) => {
                if !(q >= 0.0) {
                    return Err(Error::TableExtent {
                        requested: -0.0,
                        r_max: self.r_max,
                    });
                }
                let idx = t.nodes.partition_point(|n| n.q <= q).saturating_sub(1);
                let base = t.nodes[idx];
                let dudq = |u: f64| {
                    let (_, dq) = self.dr_du_and_dq_du(u);
                    1.0 / dq
                };
                let guess = match t.nodes.get(idx + 1) {
                    Some(next) => hermite(base.q, next.q, base.u, next.u, dudq(base.u), dudq(next.u), q),
                    None => {
                        // past the last node: the flow has outrun the table
                        return Err(Error::TableExtent {
                            requested: f64::INFINITY,
                            r_max: self.r_max,
                        });
                    }
                };
                let u = self.newton_u(
                    base.u,
                    q - base.q,
                    guess,
                    |w| self.dr_du_and_dq_du(w).1,
                    |a, b| gl10().integrate(a, b, |w| self.dr_du_and_dq_du(w).1),
                )?;
                let r = base.r + gl10().integrate(base.u, u, |w| self.dr_du(w));
                self.check_extent(r)?;
                Ok(RadialPoint {
                    r,
                    lambda: self.s0 + u * u,
                })
            }
        }
    }

    /// `T(lambda) = int_lambda^inf (1/lambda' - 1/sqrt(1 + mu^2)) dmu`.
    ///
    /// Satisfies `r(lambda) + shift = asinh(lambda) - T(lambda)`, and
    /// `T ~ m/(2(n+1)) lambda^(-n-1)` for large `lambda`.
    pub fn tail_deficit(&self, lambda: f64) -> f64 {
        let m = self.params.m;
        if m == 0.0 {
            return 0.0;
        }
        let n = self.params.n as i32;
        let integrand = |mu: f64| {
            let flat = 1.0 + mu * mu;
            let g = self.params.warp_rhs(mu);
            let diff = m * mu.powi(1 - n);
            diff / (g.sqrt() * flat.sqrt() * (g.sqrt() + flat.sqrt()))
        };
        // mu = lambda / tau maps [lambda, inf) onto (0, 1]
        gl20().composite(0.0, 1.0, 16, |tau| {
            if tau <= 0.0 {
                return 0.0;
            }
            let mu = lambda / tau;
            integrand(mu) * lambda / (tau * tau)
        })
    }

    /// Asymptotic offset `lim (asinh(lambda(r)) - r)`; zero when `m = 0`.
    ///
    /// In the shifted radius `rho = r + shift` the warp function follows
    /// `sinh(rho) + m/(2(n+1)) sinh(rho)^(-n) + O(sinh(rho)^(-n-2))`.
    pub fn asymptotic_shift(&self) -> f64 {
        match self.table() {
            None => 0.0,
            Some(t) => t.shift,
        }
    }

    /// Sectional curvatures `(K_tan, K_rad)` of planes tangent to the
    /// slice spheres and of planes containing the radial direction.
    pub fn ambient_sectional(&self, r: f64) -> Result<(f64, f64)> {
        let d = self.derivatives(r)?;
        Ok(sectional_from(&d))
    }

    /// Scalar coefficients `(lambda^2 (1 - lambda'^2), -lambda lambda'')` that
    /// generate the ambient curvature tensor in the `(theta, r)` frame.
    pub fn ambient_curvature_components(&self, r: f64) -> Result<(f64, f64)> {
        let d = self.derivatives(r)?;
        Ok(curvature_components_from(&d))
    }

    /// Relative residual of `(lambda')^2 = 1 + lambda^2 - m lambda^(1-n)` at
    /// each table node, with `lambda'` taken from a fourth-order central
    /// difference of the tabulated `lambda(r)` rather than the closed form.
    pub fn ode_residuals(&self) -> Result<Vec<(f64, f64)>> {
        let radii = match self.table() {
            Some(t) => t.nodes.iter().map(|n| n.r).collect::<Vec<_>>(),
            None => (1..=1000).map(|k| self.r_max * k as f64 / 1000.0).collect(),
        };
        let mut out = Vec::with_capacity(radii.len());
        for r in radii {
            if r <= 0.0 {
                continue;
            }
            let h = (r / 2.0).min(1e-3);
            if r + 2.0 * h > self.r_max {
                let f = |k: f64| self.lambda(r - k * h);
                let d =
                    (25.0 * f(0.0)? - 48.0 * f(1.0)? + 36.0 * f(2.0)? - 16.0 * f(3.0)? + 3.0 * f(4.0)?) / (12.0 * h);
                let lam = self.lambda(r)?;
                let g = self.params.warp_rhs(lam);
                out.push((r, (d * d - g).abs() / g.max(1.0)));
                continue;
            }
            let f = |x: f64| self.lambda(x);
            let d = (-f(r + 2.0 * h)? + 8.0 * f(r + h)? - 8.0 * f(r - h)? + f(r - 2.0 * h)?) / (12.0 * h);
            let lam = self.lambda(r)?;
            let g = self.params.warp_rhs(lam);
            out.push((r, (d * d - g).abs() / g.max(1.0)));
        }
        Ok(out)
    }
}

pub(crate) fn sectional_from(d: &WarpDerivatives) -> (f64, f64) {
    let k_tan = (1.0 - d.dlambda * d.dlambda) / (d.lambda * d.lambda);
    let k_rad = -d.ddlambda / d.lambda;
    (k_tan, k_rad)
}

pub(crate) fn curvature_components_from(d: &WarpDerivatives) -> (f64, f64) {
    (
        d.lambda * d.lambda * (1.0 - d.dlambda * d.dlambda),
        -d.lambda * d.ddlambda,
    )
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    if h <= 0.0 {
        return y0;
    }
    let s = (x - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(m: f64, r_max: f64) -> WarpProfile {
        WarpProfile::build(BackgroundParams::new(m, 2).unwrap(), r_max).unwrap()
    }

    #[test]
    fn horizon_examples() {
        let s = solve_horizon(&BackgroundParams::new(2.0, 2).unwrap()).unwrap();
        assert!((s - 1.0).abs() < 1e-14);
        assert_eq!(solve_horizon(&BackgroundParams::new(0.0, 2).unwrap()).unwrap(), 0.0);
        // bisection oracle on 1 + s^2 - 1/s
        let (mut lo, mut hi) = (0.1_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 + mid * mid - 1.0 / mid > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        let s = solve_horizon(&BackgroundParams::new(1.0, 2).unwrap()).unwrap();
        assert!((s - lo).abs() < 1e-12);
        assert!((s - 0.682328).abs() < 1e-6);
    }

    #[test]
    fn horizon_errors() {
        assert_eq!(BackgroundParams::new(1.0, 1), Err(Error::NonPositiveDimension(1)));
        assert!(matches!(BackgroundParams::new(-1.0, 2), Err(Error::NegativeMass(_))));
    }

    #[test]
    fn horizon_generic_dimension() {
        for n in 2..6 {
            let p = BackgroundParams::new(0.7, n).unwrap();
            let s = solve_horizon(&p).unwrap();
            assert!(p.warp_rhs(s).abs() <= 1e-14, "n={n}");
        }
    }

    #[test]
    fn hyperbolic_closed_form() {
        let p = profile(0.0, 12.0);
        assert_eq!(p.lambda(1.0).unwrap(), 1.0_f64.sinh());
        let d = p.derivatives(1.0).unwrap();
        assert!((d.dlambda - 1.0_f64.cosh()).abs() < 1e-14);
        assert!((d.ddlambda - 1.0_f64.sinh()).abs() < 1e-15);
        let (kt, kr) = p.ambient_sectional(1.0).unwrap();
        assert!((kt + 1.0).abs() < 1e-14 && (kr + 1.0).abs() < 1e-15);
    }

    #[test]
    fn horizon_derivatives_m2() {
        let p = profile(2.0, 5.0);
        let d = p.derivatives(0.0).unwrap();
        assert!((d.lambda - 1.0).abs() < 1e-14);
        assert!(d.dlambda.abs() < 1e-7);
        assert!((d.ddlambda - 2.0).abs() < 1e-12);
        let (tan, rad) = curvature_components_from(&d);
        assert!((tan - 1.0).abs() < 1e-12 && (rad + 2.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_dlambda_m1() {
        let p = profile(1.0, 5.0);
        assert!((p.dlambda_of(2.0) - 4.5_f64.sqrt()).abs() < 1e-14);
        let (kt, _) = sectional_from(&p.derivatives_of(2.0));
        assert!((kt + 0.875).abs() < 1e-14);
    }

    #[test]
    fn round_trips() {
        let p = profile(1.0, 10.0);
        for &r in &[0.0, 1e-5, 0.013, 0.5, 2.0, 7.3, 9.99] {
            let lam = p.lambda(r).unwrap();
            let back = p.radius_of_lambda(lam).unwrap();
            assert!((back - r).abs() < 1e-12, "r={r} back={back}");
            if r > 0.0 {
                let q = p.potential(r).unwrap();
                let pt = p.locate_potential(q).unwrap();
                assert!((pt.r - r).abs() < 1e-10 * lam.max(1.0), "r={r} pt={pt:?}");
            }
        }
    }

    #[test]
    fn extent_is_enforced() {
        let p = profile(1.0, 3.0);
        assert!(matches!(p.lambda(3.5), Err(Error::TableExtent { .. })));
        assert!(matches!(p.lambda(-0.1), Err(Error::TableExtent { .. })));
        let h = profile(0.0, 3.0);
        assert!(matches!(h.lambda(3.5), Err(Error::TableExtent { .. })));
    }

    #[test]
    fn ode_residual_small() {
        for m in [0.5, 1.0, 2.0] {
            let p = profile(m, 10.0);
            let worst = p.ode_residuals().unwrap().into_iter().map(|x| x.1).fold(0.0, f64::max);
            assert!(worst <= 10.0 * p.params().tol_ode, "m={m} worst={worst}");
        }
    }

    #[test]
    fn tail_deficit_leading_order() {
        let p = profile(1.0, 4.0);
        let lam: f64 = 1e3;
        let lead = 1.0 / 6.0 * lam.powi(-3);
        assert!(((p.tail_deficit(lam) - lead) / lead).abs() < 1e-5);
    }
}
