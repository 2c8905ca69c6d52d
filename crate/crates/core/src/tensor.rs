//! Coefficient tensors `(a_ijk)` with values in `l_q^m`, and the `l_q`
//! duality helpers used throughout.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ChaosError, Result};

/// Triple-indexed coefficients `a_ijk`, `i < n1`, `j < n2`, `k < m`, stored
/// with `k` fastest. The exponent `q` fixes the norm of the value space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTensor {
    n1: usize,
    n2: usize,
    m: usize,
    q: f64,
    data: Vec<f64>,
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(ChaosError::Domain { what: "l_q exponent", value: q });
    }
    Ok(())
}

impl CoefficientTensor {
    pub fn new(n1: usize, n2: usize, m: usize, q: f64, data: Vec<f64>) -> Result<Self> {
        check_q(q)?;
        if n1 == 0 || n2 == 0 || m == 0 {
            return Err(ChaosError::Config(format!("tensor shape ({n1}, {n2}, {m}) must be positive")));
        }
        if data.len() != n1 * n2 * m {
            return Err(ChaosError::DimensionMismatch { expected: n1 * n2 * m, got: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ChaosError::Numeric("non-finite tensor entry".into()));
        }
        Ok(CoefficientTensor { n1, n2, m, q, data })
    }

    pub fn zeros(n1: usize, n2: usize, m: usize, q: f64) -> Result<Self> {
        Self::new(n1, n2, m, q, vec![0.0; n1 * n2 * m])
    }

    pub fn from_fn<F: FnMut(usize, usize, usize) -> f64>(
        n1: usize,
        n2: usize,
        m: usize,
        q: f64,
        mut f: F,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n1 * n2 * m);
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..m {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(n1, n2, m, q, data)
    }

    /// Lifts a matrix to the single-slice tensor `a_ij1 = a2[(i, j)]`.
    pub fn from_matrix(a2: &DMatrix<f64>, q: f64) -> Result<Self> {
        Self::from_fn(a2.nrows(), a2.ncols(), 1, q, |i, j, _| a2[(i, j)])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n2 + j) * self.m + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.n2 + j) * self.m + k] = v;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.m)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Hoelder conjugate `q'`; infinite for `q = 1`.
    pub fn q_dual(&self) -> f64 {
        dual_exponent(self.q)
    }

    pub fn with_q(&self, q: f64) -> Result<Self> {
        check_q(q)?;
        Ok(CoefficientTensor { q, ..self.clone() })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        CoefficientTensor { data: self.data.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    /// Exchanges the roles of `i` and `j`.
    pub fn transpose_ij(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                for k in 0..self.m {
                    data[(j * self.n1 + i) * self.m + k] = self.get(i, j, k);
                }
            }
        }
        CoefficientTensor { n1: self.n2, n2: self.n1, m: self.m, q: self.q, data }
    }

    /// Slice `(a_ijk)_{ij}` for fixed `k`.
    pub fn slice_k(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n1, self.n2, |i, j| self.get(i, j, k))
    }

    /// `F_ij = f(a_ij) = sum_k a_ijk f_k`.
    pub fn contract_k(&self, f: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(f.len(), self.m);
        DMatrix::from_fn(self.n1, self.n2, |i, j| {
            let base = (i * self.n2 + j) * self.m;
            self.data[base..base + self.m].iter().zip(f).map(|(a, b)| a * b).sum()
        })
    }

    /// `M_jk = sum_i a_ijk x_i`, returned as an `n2 x m` matrix.
    pub fn contract_i(&self, x: &[f64]) -> DMatrix<f64> {
        debug_assert_eq!(x.len(), self.n1);
        let mut out = DMatrix::zeros(self.n2, self.m);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for j in 0..self.n2 {
                for k in 0..self.m {
                    out[(j, k)] += self.get(i, j, k) * xi;
                }
            }
        }
        out
    }

    /// `c_k = sum_ij a_ijk x_i y_j`.
    pub fn contract_ij(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.m];
        for i in 0..self.n1 {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..self.n2 {
                let w = x[i] * y[j];
                if w == 0.0 {
                    continue;
                }
                let base = (i * self.n2 + j) * self.m;
                for (ck, a) in c.iter_mut().zip(&self.data[base..base + self.m]) {
                    *ck += a * w;
                }
            }
        }
        c
    }
}

pub fn dual_exponent(q: f64) -> f64 {
    if q == 1.0 {
        f64::INFINITY
    } else {
        q / (q - 1.0)
    }
}

/// `||v||_q`, including `q = inf`.
pub fn lq_norm(v: &[f64], q: f64) -> f64 {
    let amax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if amax == 0.0 || q.is_infinite() {
        return amax;
    }
    if q == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if q == 2.0 {
        return v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    amax * v.iter().map(|x| (x.abs() / amax).powf(q)).sum::<f64>().powf(1.0 / q)
}

/// The point `f` of the unit `l_{q'}` ball with `<f, c> = ||c||_q`.
pub fn align_dual(c: &[f64], q: f64) -> Vec<f64> {
    let amax = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if amax == 0.0 {
        let mut f = vec![0.0; c.len()];
        if let Some(first) = f.first_mut() {
            *first = 1.0;
        }
        return f;
    }
    if q == 1.0 {
        return c.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    }
    let norm = lq_norm(c, q) / amax;
    c.iter()
        .map(|&v| {
            let t = (v.abs() / amax / norm).powf(q - 1.0);
            t.copysign(v)
        })
        .collect()
}

/// Radial projection onto the unit `l_u` sphere.
pub fn normalize_lq(v: &[f64], u: f64) -> Vec<f64> {
    let n = lq_norm(v, u);
    if n == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shape_and_indexing() {
        let t = CoefficientTensor::from_fn(2, 3, 4, 2.0, |i, j, k| (100 * i + 10 * j + k) as f64).unwrap();
        assert_eq!(t.get(1, 2, 3), 123.0);
        let tt = t.transpose_ij();
        assert_eq!(tt.shape(), (3, 2, 4));
        assert_eq!(tt.get(2, 1, 3), 123.0);
        assert!(CoefficientTensor::new(1, 1, 1, 0.5, vec![1.0]).is_err());
        assert!(CoefficientTensor::new(1, 1, 2, 2.0, vec![1.0]).is_err());
        assert!(CoefficientTensor::new(0, 1, 1, 2.0, vec![]).is_err());
        assert_eq!(t.q_dual(), 2.0);
        assert!(t.with_q(1.0).unwrap().q_dual().is_infinite());
    }

    #[test]
    fn contractions_agree() {
        let t = CoefficientTensor::from_fn(2, 2, 3, 3.0, |i, j, k| (i as f64 - j as f64) * (k as f64 + 0.5)).unwrap();
        let x = [0.3, -1.2];
        let y = [2.0, 0.7];
        let f = [0.1, -0.4, 0.9];
        let c = t.contract_ij(&x, &y);
        let via_f: f64 = c.iter().zip(&f).map(|(a, b)| a * b).sum();
        let fm = t.contract_k(&f);
        let direct: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| fm[(i, j)] * x[i] * y[j]).sum();
        assert!((via_f - direct).abs() < 1e-12);
        let mi = t.contract_i(&x);
        let again: f64 = (0..2).flat_map(|j| (0..3).map(move |k| (j, k))).map(|(j, k)| mi[(j, k)] * y[j] * f[k]).sum();
        assert!((again - direct).abs() < 1e-12);
    }

    #[test]
    fn norms() {
        assert_eq!(lq_norm(&[3.0, -4.0], 2.0), 5.0);
        assert_eq!(lq_norm(&[3.0, -4.0], 1.0), 7.0);
        assert_eq!(lq_norm(&[3.0, -4.0], f64::INFINITY), 4.0);
        assert!((lq_norm(&[1.0, 1.0], 3.0) - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn alignment_attains_dual_norm(
            c in prop::collection::vec(-5.0f64..5.0, 1..6),
            q in prop_oneof![Just(1.0), 1.1f64..4.0],
        ) {
            let f = align_dual(&c, q);
            let inner: f64 = f.iter().zip(&c).map(|(a, b)| a * b).sum();
            prop_assert!((inner - lq_norm(&c, q)).abs() <= 1e-10 * lq_norm(&c, q).max(1.0));
            prop_assert!(lq_norm(&f, dual_exponent(q)) <= 1.0 + 1e-12);
        }
    }
}
