//! Process norms `alpha_A`, `alpha_{inf,A}`, `phi_A`, the closed-form
//! surrogate `s_A`, and Monte Carlo expected suprema of linear processes.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ChaosError, Result};
use crate::monte_carlo::{mc_mean, McConfig, McEstimate};
use crate::tails::TailDistribution;
use crate::tensor::{lq_norm, CoefficientTensor};

fn check_w(a: &CoefficientTensor, w: &DMatrix<f64>) -> Result<()> {
    let (_, n2, m) = a.shape();
    if w.nrows() != n2 || w.ncols() != m {
        return Err(ChaosError::DimensionMismatch { expected: n2 * m, got: w.nrows() * w.ncols() });
    }
    Ok(())
}

// v_i = sum_jk a_ijk w_jk
fn contract_jk(a: &CoefficientTensor, w: &DMatrix<f64>) -> Vec<f64> {
    let (n1, n2, m) = a.shape();
    (0..n1)
        .map(|i| (0..n2).map(|j| (0..m).map(|k| a.get(i, j, k) * w[(j, k)]).sum::<f64>()).sum())
        .collect()
}

/// `alpha_A(w) = sqrt(sum_i (sum_jk a_ijk w_jk)^2)` for `w` of shape `n2 x m`.
pub fn alpha_a(a: &CoefficientTensor, w: &DMatrix<f64>) -> Result<f64> {
    check_w(a, w)?;
    Ok(lq_norm(&contract_jk(a, w), 2.0))
}

/// `alpha_{inf,A}(w) = max_i |sum_jk a_ijk w_jk|`.
pub fn alpha_inf_a(a: &CoefficientTensor, w: &DMatrix<f64>) -> Result<f64> {
    check_w(a, w)?;
    Ok(lq_norm(&contract_jk(a, w), f64::INFINITY))
}

/// `phi_A(x) = (sum_k (sum_i (sum_j a_ijk x_j)^4 / sum_j a_ijk^2)^{q/2})^{1/(2q)}`.
///
/// Fibers `(i, k)` with `sum_j a_ijk^2 = 0` contribute nothing.
pub fn phi_a(a: &CoefficientTensor, x: &[f64]) -> Result<f64> {
    let (n1, n2, m) = a.shape();
    if x.len() != n2 {
        return Err(ChaosError::DimensionMismatch { expected: n2, got: x.len() });
    }
    let q = a.q();
    let mut inner = vec![0.0; m];
    for (k, slot) in inner.iter_mut().enumerate() {
        for i in 0..n1 {
            let mass: f64 = (0..n2).map(|j| a.get(i, j, k).powi(2)).sum();
            if mass == 0.0 {
                continue;
            }
            let lin: f64 = (0..n2).map(|j| a.get(i, j, k) * x[j]).sum();
            *slot += lin.powi(4) / mass;
        }
    }
    // (sum_k v_k^{q/2})^{1/(2q)} = ||(sqrt v_k)||_q^{1/2}
    let roots: Vec<f64> = inner.iter().map(|v| v.sqrt()).collect();
    Ok(lq_norm(&roots, q).sqrt())
}

/// `(sum_k (sum_ij a_ijk^2)^{q/2})^{1/q}`.
pub fn s_a_surrogate(a: &CoefficientTensor) -> f64 {
    let (n1, n2, m) = a.shape();
    let slices: Vec<f64> = (0..m)
        .map(|k| {
            let mut s = 0.0;
            for i in 0..n1 {
                for j in 0..n2 {
                    s += a.get(i, j, k).powi(2);
                }
            }
            s.sqrt()
        })
        .collect();
    lq_norm(&slices, a.q())
}

/// Law of the i.i.d. coefficients of a linear process `sum_i t_i Z_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorLaw {
    /// Symmetric exponential scaled to unit variance.
    Exponential,
    /// `g^2 - 1`.
    GaussianSquaredMinusOne,
    /// `g g'` with independent factors.
    GaussianProduct,
    Gaussian,
    Lct(TailDistribution),
}

impl GeneratorLaw {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            GeneratorLaw::Exponential => {
                let e = -(1.0 - rng.random::<f64>()).ln() * std::f64::consts::FRAC_1_SQRT_2;
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            }
            GeneratorLaw::GaussianSquaredMinusOne => {
                let g: f64 = StandardNormal.sample(rng);
                g * g - 1.0
            }
            GeneratorLaw::GaussianProduct => {
                let g: f64 = StandardNormal.sample(rng);
                let h: f64 = StandardNormal.sample(rng);
                g * h
            }
            GeneratorLaw::Gaussian => StandardNormal.sample(rng),
            GeneratorLaw::Lct(d) => d.draw(rng),
        }
    }
}

/// `E sup_{t in T} sum_i t_i Z_i` for a finite set `T`.
pub fn mc_expected_sup(t: &[Vec<f64>], law: &GeneratorLaw, cfg: &McConfig) -> Result<McEstimate> {
    let first = t.first().ok_or_else(|| ChaosError::Config("empty index set".into()))?;
    let n = first.len();
    if let Some(bad) = t.iter().find(|v| v.len() != n) {
        return Err(ChaosError::DimensionMismatch { expected: n, got: bad.len() });
    }
    mc_mean(
        cfg,
        n,
        |rng| law.draw(rng),
        |z| t.iter().map(|v| v.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max),
    )
}

/// `beta(x) = E sup_{t in B_{q'}} |sum_ijk a_ijk g_i x_j t_k| = E ||c(g)||_q`.
pub fn mc_beta(a: &CoefficientTensor, x: &[f64], cfg: &McConfig) -> Result<McEstimate> {
    let (n1, n2, m) = a.shape();
    if x.len() != n2 {
        return Err(ChaosError::DimensionMismatch { expected: n2, got: x.len() });
    }
    // b_ik = sum_j a_ijk x_j
    let b = DMatrix::from_fn(n1, m, |i, k| (0..n2).map(|j| a.get(i, j, k) * x[j]).sum::<f64>());
    let q = a.q();
    mc_mean(
        cfg,
        n1,
        |rng| StandardNormal.sample(rng),
        |g| {
            let c: Vec<f64> = (0..m).map(|k| (0..n1).map(|i| b[(i, k)] * g[i]).sum()).collect();
            lq_norm(&c, q)
        },
    )
}

/// `E phi_A(E_n)` with `E_n` a vector of unit-variance symmetric exponentials.
pub fn mc_phi_exponential(a: &CoefficientTensor, cfg: &McConfig) -> Result<McEstimate> {
    let (_, n2, _) = a.shape();
    mc_mean(cfg, n2, |rng| GeneratorLaw::Exponential.draw(rng), |e| phi_a(a, e).unwrap_or(f64::NAN))
}

/// `E alpha_A(E_n (x) t)`.
pub fn mc_alpha_exponential(a: &CoefficientTensor, t: &[f64], cfg: &McConfig) -> Result<McEstimate> {
    let (_, n2, m) = a.shape();
    if t.len() != m {
        return Err(ChaosError::DimensionMismatch { expected: m, got: t.len() });
    }
    // alpha_A(e (x) t) = ||M e||_2 with M_ij = sum_k a_ijk t_k
    let mt = a.contract_k(t);
    mc_mean(
        cfg,
        n2,
        |rng| GeneratorLaw::Exponential.draw(rng),
        |e| {
            let v: Vec<f64> = (0..mt.nrows()).map(|i| (0..n2).map(|j| mt[(i, j)] * e[j]).sum()).collect();
            lq_norm(&v, 2.0)
        },
    )
}

/// `sqrt(sum_ij (sum_k a_ijk t_k)^2)`.
pub fn alpha_tensor_scale(a: &CoefficientTensor, t: &[f64]) -> f64 {
    a.contract_k(t).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> McConfig {
        McConfig::new(160_000, 32, 11, false).unwrap()
    }

    fn single() -> CoefficientTensor {
        CoefficientTensor::new(1, 1, 1, 2.0, vec![1.0]).unwrap()
    }

    #[test]
    fn alpha_examples() {
        let w = DMatrix::from_element(1, 1, -2.5);
        assert_eq!(alpha_a(&single(), &w).unwrap(), 2.5);
        assert_eq!(alpha_inf_a(&single(), &w).unwrap(), 2.5);
        assert_eq!(alpha_a(&single(), &DMatrix::zeros(1, 1)).unwrap(), 0.0);
        let a = CoefficientTensor::new(2, 1, 1, 2.0, vec![3.0, 4.0]).unwrap();
        assert_eq!(alpha_a(&a, &DMatrix::from_element(1, 1, 1.0)).unwrap(), 5.0);
        let a = CoefficientTensor::new(2, 1, 1, 2.0, vec![3.0, -4.0]).unwrap();
        assert_eq!(alpha_inf_a(&a, &DMatrix::from_element(1, 1, 1.0)).unwrap(), 4.0);
        assert!(alpha_a(&a, &DMatrix::zeros(2, 1)).is_err());
    }

    fn phi_naive(a: &CoefficientTensor, x: &[f64]) -> f64 {
        let (n1, n2, m) = a.shape();
        let q = a.q();
        let mut total = 0.0;
        for k in 0..m {
            let mut s = 0.0;
            for i in 0..n1 {
                let mut num = 0.0;
                let mut den = 0.0;
                for j in 0..n2 {
                    num += a.get(i, j, k) * x[j];
                    den += a.get(i, j, k) * a.get(i, j, k);
                }
                if den > 0.0 {
                    s += num.powi(4) / den;
                }
            }
            total += s.powf(q / 2.0);
        }
        total.powf(1.0 / (2.0 * q))
    }

    #[test]
    fn phi_examples() {
        assert!((phi_a(&single(), &[-3.0]).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(phi_a(&single(), &[0.0]).unwrap(), 0.0);
        let a = CoefficientTensor::new(1, 2, 1, 2.0, vec![1.0, 1.0]).unwrap();
        let v = phi_a(&a, &[1.0, 1.0]).unwrap();
        assert!((v - 8f64.powf(0.25)).abs() < 1e-14);
        assert!((v - phi_naive(&a, &[1.0, 1.0])).abs() < 1e-14);
        let a = CoefficientTensor::from_fn(3, 2, 2, 3.0, |i, j, k| if i == 2 { 0.0 } else { (i + j + 2 * k) as f64 - 1.5 })
            .unwrap();
        let x = [0.7, -1.3];
        assert!((phi_a(&a, &x).unwrap() - phi_naive(&a, &x)).abs() < 1e-13);
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(s_a_surrogate(&CoefficientTensor::zeros(2, 2, 2, 2.0).unwrap()), 0.0);
        let a = CoefficientTensor::new(1, 1, 2, 2.0, vec![3.0, 4.0]).unwrap();
        assert!((s_a_surrogate(&a) - 5.0).abs() < 1e-15);
        let a = CoefficientTensor::new(2, 2, 1, 1.0, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s_a_surrogate(&a), 2.0);
    }

    #[test]
    fn expected_sup_examples() {
        let c = cfg();
        let t = vec![vec![1.0], vec![-1.0]];
        let e = mc_expected_sup(&t, &GeneratorLaw::Gaussian, &c).unwrap();
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert!((e.value - want).abs() < 3.0 * e.stderr, "{e:?}");
        let e = mc_expected_sup(&[vec![0.0, 0.0]], &GeneratorLaw::Exponential, &c).unwrap();
        assert_eq!((e.value, e.stderr), (0.0, 0.0));
        let e = mc_expected_sup(&[vec![1.0]], &GeneratorLaw::Exponential, &c).unwrap();
        assert!(e.value.abs() < 3.0 * e.stderr, "{e:?}");
        assert!(mc_expected_sup(&[], &GeneratorLaw::Gaussian, &c).is_err());
    }

    #[test]
    fn generator_laws_have_unit_variance() {
        let c = cfg();
        for law in [GeneratorLaw::Exponential, GeneratorLaw::GaussianSquaredMinusOne, GeneratorLaw::GaussianProduct] {
            let e = mc_mean(&c, 1, |r| law.draw(r), |z| z[0] * z[0]).unwrap();
            let target = if law == GeneratorLaw::GaussianSquaredMinusOne { 2.0 } else { 1.0 };
            assert!((e.value - target).abs() < 4.0 * e.stderr, "{law:?} {e:?}");
        }
    }

    #[test]
    fn beta_examples() {
        let c = cfg();
        assert_eq!(mc_beta(&CoefficientTensor::zeros(1, 1, 1, 2.0).unwrap(), &[1.0], &c).unwrap().value, 0.0);
        assert_eq!(mc_beta(&single(), &[0.0], &c).unwrap().value, 0.0);
        let e = mc_beta(&single(), &[1.0], &c).unwrap();
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert!((e.value - want).abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn beta_is_homogeneous_on_shared_draws() {
        let a = CoefficientTensor::from_fn(3, 2, 2, 1.5, |i, j, k| ((i * 7 + j * 3 + k) % 5) as f64 - 2.0).unwrap();
        let c = McConfig::new(3200, 16, 5, false).unwrap();
        let x = [0.4, -1.1];
        let base = mc_beta(&a, &x, &c).unwrap().value;
        for s in [2.0, -3.0, 0.5] {
            let sx: Vec<f64> = x.iter().map(|v| v * s).collect();
            let v = mc_beta(&a, &sx, &c).unwrap().value;
            assert!((v - s.abs() * base).abs() < 1e-12 * base);
        }
    }

    #[test]
    fn alpha_inf_below_alpha() {
        let a = CoefficientTensor::from_fn(4, 3, 2, 2.0, |i, j, k| ((i + 2 * j + 3 * k) % 7) as f64 - 3.0).unwrap();
        let w = DMatrix::from_fn(3, 2, |j, k| (j as f64 - 1.0) * (k as f64 + 0.3));
        assert!(alpha_inf_a(&a, &w).unwrap() <= alpha_a(&a, &w).unwrap());
    }
}
