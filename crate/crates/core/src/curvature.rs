//! Normalized symmetric curvature functions `F(kappa)` with `F(1, ..., 1) = n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEN_GUARD: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    Mean,
    /// `n (sigma_k / C(n, k))^(1/k)`
    SigmaRoot(u32),
    /// `(n k / (n - k + 1)) sigma_k / sigma_(k-1)`
    Quotient(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvatureFunction {
    pub kind: CurvatureKind,
    pub n: u32,
}

/// Elementary symmetric polynomials `sigma_0 ..= sigma_len`.
pub fn elementary_symmetric(kappa: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; kappa.len() + 1];
    s[0] = 1.0;
    for (i, &x) in kappa.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            s[k] += x * s[k - 1];
        }
    }
    s
}

/// `sigma_k` of `kappa` with entry `skip` removed; zero for `k < 0`.
fn sigma_without(kappa: &[f64], skip: usize, k: isize) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let rest: Vec<f64> = kappa
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, &x)| x)
        .collect();
    elementary_symmetric(&rest).get(k as usize).copied().unwrap_or(0.0)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl CurvatureFunction {
    pub fn new(kind: CurvatureKind, n: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::NonPositiveDimension(n));
        }
        match kind {
            CurvatureKind::Mean => {}
            CurvatureKind::SigmaRoot(k) | CurvatureKind::Quotient(k) => {
                if k < 2 || k > n {
                    return Err(Error::InvalidParameter(format!(
                        "order k = {k} must satisfy 2 <= k <= n = {n}"
                    )));
                }
            }
        }
        Ok(Self { kind, n })
    }

    /// Parses the config names `mean`, `sigma<k>root` and `quotient<k>`.
    pub fn from_name(name: &str, n: u32) -> Result<Self> {
        let kind = if name == "mean" {
            CurvatureKind::Mean
        } else if let Some(k) = name.strip_prefix("sigma").and_then(|s| s.strip_suffix("root")) {
            CurvatureKind::SigmaRoot(parse_order(name, k)?)
        } else if let Some(k) = name.strip_prefix("quotient") {
            CurvatureKind::Quotient(parse_order(name, k)?)
        } else {
            return Err(Error::InvalidParameter(format!(
                "unknown curvature function '{name}' (expected mean, sigma2root or quotient2)"
            )));
        };
        Self::new(kind, n)
    }

    pub fn name(&self) -> String {
        match self.kind {
            CurvatureKind::Mean => "mean".into(),
            CurvatureKind::SigmaRoot(k) => format!("sigma{k}root"),
            CurvatureKind::Quotient(k) => format!("quotient{k}"),
        }
    }

    fn order(&self) -> usize {
        match self.kind {
            CurvatureKind::Mean => 1,
            CurvatureKind::SigmaRoot(k) | CurvatureKind::Quotient(k) => k as usize,
        }
    }

    fn check_len(&self, kappa: &[f64]) -> Result<()> {
        if kappa.len() != self.n as usize {
            return Err(Error::InvalidParameter(format!(
                "expected {} principal curvatures, got {}",
                self.n,
                kappa.len()
            )));
        }
        Ok(())
    }

    /// Membership in the open cone `sigma_1 > 0, ..., sigma_k > 0`.
    pub fn cone_contains(&self, kappa: &[f64]) -> bool {
        if kappa.len() != self.n as usize || kappa.iter().any(|x| !x.is_finite()) {
            return false;
        }
        let s = elementary_symmetric(kappa);
        let ok = s[1..=self.order()].iter().all(|&x| x > 0.0);
        match self.kind {
            CurvatureKind::Quotient(_) => ok && s[self.order() - 1] > DEN_GUARD,
            _ => ok,
        }
    }

    pub fn eval(&self, kappa: &[f64]) -> Result<f64> {
        self.check_len(kappa)?;
        if !self.cone_contains(kappa) {
            return Err(Error::InadmissibleCurvatures { kappa: kappa.to_vec() });
        }
        Ok(self.eval_unchecked(kappa))
    }

    fn eval_unchecked(&self, kappa: &[f64]) -> f64 {
        let n = self.n as f64;
        match self.kind {
            CurvatureKind::Mean => kappa.iter().sum(),
            CurvatureKind::SigmaRoot(k) => {
                let s = elementary_symmetric(kappa)[k as usize];
                n * (s / binomial(self.n, k)).powf(1.0 / k as f64)
            }
            CurvatureKind::Quotient(k) => {
                let s = elementary_symmetric(kappa);
                let c = n * k as f64 / (n - k as f64 + 1.0);
                c * s[k as usize] / s[k as usize - 1]
            }
        }
    }

    /// `dF/dkappa_i`.
    pub fn grad(&self, kappa: &[f64]) -> Result<Vec<f64>> {
        let f = self.eval(kappa)?;
        let n = kappa.len();
        Ok(match self.kind {
            CurvatureKind::Mean => vec![1.0; n],
            CurvatureKind::SigmaRoot(k) => {
                let sk = elementary_symmetric(kappa)[k as usize];
                (0..n)
                    .map(|i| f / k as f64 * sigma_without(kappa, i, k as isize - 1) / sk)
                    .collect()
            }
            CurvatureKind::Quotient(k) => {
                let s = elementary_symmetric(kappa);
                let nf = self.n as f64;
                let c = nf * k as f64 / (nf - k as f64 + 1.0);
                let (sk, skm1) = (s[k as usize], s[k as usize - 1]);
                (0..n)
                    .map(|i| {
                        let a = sigma_without(kappa, i, k as isize - 1);
                        let b = sigma_without(kappa, i, k as isize - 2);
                        c * (a * skm1 - sk * b) / (skm1 * skm1)
                    })
                    .collect()
            }
        })
    }

    /// Value and gradient for two principal curvatures, without allocation.
    pub fn eval_grad2(&self, kappa: [f64; 2]) -> Result<(f64, [f64; 2])> {
        if self.n != 2 {
            let g = self.grad(&kappa)?;
            return Ok((self.eval_unchecked(&kappa), [g[0], g[1]]));
        }
        let [x, y] = kappa;
        let s1 = x + y;
        let s2 = x * y;
        let admissible = match self.kind {
            CurvatureKind::Mean => s1 > 0.0,
            CurvatureKind::SigmaRoot(_) => s1 > 0.0 && s2 > 0.0,
            CurvatureKind::Quotient(_) => s1 > DEN_GUARD && s2 > 0.0,
        };
        if !admissible || !s1.is_finite() || !s2.is_finite() {
            return Err(Error::InadmissibleCurvatures { kappa: kappa.to_vec() });
        }
        Ok(match self.kind {
            CurvatureKind::Mean => (s1, [1.0, 1.0]),
            CurvatureKind::SigmaRoot(_) => {
                let f = 2.0 * s2.sqrt();
                (f, [0.5 * f / x, 0.5 * f / y])
            }
            CurvatureKind::Quotient(_) => {
                let f = 4.0 * s2 / s1;
                (f, [4.0 * y * y / (s1 * s1), 4.0 * x * x / (s1 * s1)])
            }
        })
    }
}

fn parse_order(name: &str, digits: &str) -> Result<u32> {
    digits
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("cannot read order in curvature function '{name}'")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all(n: u32) -> Vec<CurvatureFunction> {
        vec![
            CurvatureFunction::new(CurvatureKind::Mean, n).unwrap(),
            CurvatureFunction::new(CurvatureKind::SigmaRoot(2), n).unwrap(),
            CurvatureFunction::new(CurvatureKind::Quotient(2), n).unwrap(),
        ]
    }

    #[test]
    fn worked_values() {
        let mean = CurvatureFunction::from_name("mean", 2).unwrap();
        assert_eq!(mean.eval(&[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(mean.eval(&[1.0, 3.0]).unwrap(), 4.0);
        assert_eq!(mean.eval(&[2.0, 6.0]).unwrap(), 8.0);
        let q = CurvatureFunction::from_name("quotient2", 2).unwrap();
        assert!((q.eval(&[1.0, 4.0]).unwrap() - 3.2).abs() < 1e-15);
        let s = CurvatureFunction::from_name("sigma2root", 2).unwrap();
        assert_eq!(s.grad(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(mean.grad(&[0.3, 7.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn names_round_trip() {
        for f in all(2) {
            assert_eq!(CurvatureFunction::from_name(&f.name(), 2).unwrap(), f);
        }
        assert!(CurvatureFunction::from_name("gauss", 2).is_err());
        assert!(CurvatureFunction::from_name("sigma3root", 2).is_err());
    }

    #[test]
    fn cones() {
        let mean = CurvatureFunction::from_name("mean", 2).unwrap();
        let s2 = CurvatureFunction::from_name("sigma2root", 2).unwrap();
        assert!(mean.cone_contains(&[-1.0, 3.0]));
        assert!(!s2.cone_contains(&[-1.0, 3.0]));
        assert!(matches!(
            s2.eval(&[-1.0, 3.0]),
            Err(Error::InadmissibleCurvatures { .. })
        ));
        assert!(matches!(
            mean.eval(&[-2.0, 1.0]),
            Err(Error::InadmissibleCurvatures { .. })
        ));
    }

    #[test]
    fn normalization() {
        for n in 2..=4 {
            for f in all(n) {
                let v = f.eval(&vec![1.0; n as usize]).unwrap();
                assert!((v - n as f64).abs() <= 1e-12, "{} n={n}", f.name());
            }
        }
    }

    #[test]
    fn esp_oracle() {
        // brute-force over subsets
        let k = [0.3, -1.2, 2.5, 0.7];
        let s = elementary_symmetric(&k);
        for order in 0..=4 {
            let mut acc = 0.0;
            for mask in 0u32..16 {
                if mask.count_ones() == order {
                    acc += (0..4).filter(|i| mask >> i & 1 == 1).map(|i| k[i]).product::<f64>();
                }
            }
            assert!((s[order as usize] - acc).abs() < 1e-14);
        }
    }

    #[test]
    fn fast_path_agrees() {
        for f in all(2) {
            for kappa in [[0.5, 2.0], [1.0, 1.0], [3.0, 0.1]] {
                let (v, g) = f.eval_grad2(kappa).unwrap();
                assert!((v - f.eval(&kappa).unwrap()).abs() <= 1e-15 * v);
                let slow = f.grad(&kappa).unwrap();
                assert!((g[0] - slow[0]).abs() <= 1e-14 && (g[1] - slow[1]).abs() <= 1e-14);
            }
        }
    }

    fn positive(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.05f64..20.0, n)
    }

    proptest! {
        #[test]
        fn homogeneous_and_euler(k2 in positive(2), k3 in positive(3), c in 0.1f64..10.0) {
            for (n, kappa) in [(2u32, &k2), (3, &k3)] {
                for f in all(n) {
                    let v = f.eval(kappa).unwrap();
                    let scaled: Vec<f64> = kappa.iter().map(|x| c * x).collect();
                    prop_assert!((f.eval(&scaled).unwrap() - c * v).abs() <= 1e-12 * c * v);
                    let g = f.grad(kappa).unwrap();
                    prop_assert!(g.iter().all(|&x| x > 0.0));
                    let euler: f64 = g.iter().zip(kappa.iter()).map(|(a, b)| a * b).sum();
                    prop_assert!((euler - v).abs() <= 1e-10 * v);
                }
            }
        }

        #[test]
        fn concave_midpoint(a in positive(3), b in positive(3)) {
            for f in all(3) {
                let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
                let lhs = f.eval(&mid).unwrap();
                let rhs = 0.5 * (f.eval(&a).unwrap() + f.eval(&b).unwrap());
                prop_assert!(lhs >= rhs - 1e-12 * rhs.max(1.0));
            }
        }

        #[test]
        fn gradient_matches_central_differences(kappa in positive(3)) {
            for f in all(3) {
                let g = f.grad(&kappa).unwrap();
                for i in 0..3 {
                    let h = 1e-5 * kappa[i];
                    let mut up = kappa.clone();
                    let mut dn = kappa.clone();
                    up[i] += h;
                    dn[i] -= h;
                    let fd = (f.eval(&up).unwrap() - f.eval(&dn).unwrap()) / (2.0 * h);
                    prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3), "{} {} {}", f.name(), fd, g[i]);
                }
            }
        }

        #[test]
        fn positive_cone_is_admissible(kappa in positive(4)) {
            for f in all(4) {
                prop_assert!(f.cone_contains(&kappa));
            }
        }
    }
}
