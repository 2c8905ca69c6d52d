//! Batched Monte Carlo estimation of chaos moments.
//!
//! Samples are split into `batches` chunks. Chunk `b` draws from a ChaCha8
//! stream selected by `(master_seed, b)`, its sum is accumulated in draw
//! order, and chunks are reduced in index order, so estimates are
//! bit-identical for any thread count. Standard errors are batch-means
//! errors; moment estimates `(E V^p)^{1/p}` carry a delta-method error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ChaosError, Result};
use crate::tails::{Sampler, TailDistribution};
use crate::tensor::{lq_norm, CoefficientTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub total_samples: usize,
    pub batches: usize,
    pub master_seed: u64,
    /// Rescale every draw to unit variance.
    pub unit_variance: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { total_samples: 200_000, batches: 32, master_seed: 0, unit_variance: false }
    }
}

impl McConfig {
    pub fn new(total_samples: usize, batches: usize, master_seed: u64, unit_variance: bool) -> Result<Self> {
        let cfg = McConfig { total_samples, batches, master_seed, unit_variance };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches < 8 {
            return Err(ChaosError::Config(format!("batches = {} (need >= 8)", self.batches)));
        }
        if self.total_samples == 0 || self.total_samples % self.batches != 0 {
            return Err(ChaosError::Config(format!(
                "total_samples = {} must be a positive multiple of batches = {}",
                self.total_samples, self.batches
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        McConfig { master_seed, ..self.clone() }
    }

    pub fn per_batch(&self) -> usize {
        self.total_samples / self.batches
    }

    /// Generator of chunk `batch`: stream `batch` of the master key.
    pub fn batch_rng(&self, batch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(batch as u64);
        rng
    }

    /// Largest `p` for which heavy-tailed moment estimates are considered
    /// reliable at this sample size: `ln(N) / 2`.
    pub fn reliable_p(&self) -> f64 {
        (self.total_samples as f64).ln() / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    /// False when the moment order exceeds [`McConfig::reliable_p`].
    pub reliable: bool,
}

impl McEstimate {
    fn exact_zero(cfg: &McConfig) -> Self {
        McEstimate { value: 0.0, stderr: 0.0, samples: cfg.total_samples, seed: cfg.master_seed, reliable: true }
    }
}

/// Runs every chunk and returns, per chunk, the mean of each of the `width`
/// accumulators filled by `sample`.
pub fn batch_means<S, I, F>(cfg: &McConfig, width: usize, init: I, sample: F) -> Result<Vec<Vec<f64>>>
where
    I: Fn() -> S + Sync,
    F: Fn(&mut ChaCha8Rng, &mut S, &mut [f64]) + Sync,
{
    cfg.validate()?;
    let per = cfg.per_batch();
    let run = |b: usize| -> Vec<f64> {
        let mut rng = cfg.batch_rng(b);
        let mut state = init();
        let mut acc = vec![0.0; width];
        for _ in 0..per {
            sample(&mut rng, &mut state, &mut acc);
        }
        acc.iter_mut().for_each(|v| *v /= per as f64);
        acc
    };
    #[cfg(feature = "parallel")]
    let out = {
        use rayon::prelude::*;
        (0..cfg.batches).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let out = (0..cfg.batches).map(run).collect();
    Ok(out)
}

/// Mean and batch-means standard error of column `col`.
pub fn column_mean(means: &[Vec<f64>], col: usize) -> (f64, f64) {
    let b = means.len() as f64;
    let mean = means.iter().map(|m| m[col]).sum::<f64>() / b;
    let var = means.iter().map(|m| (m[col] - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

fn mean_estimate(cfg: &McConfig, means: &[Vec<f64>], col: usize) -> McEstimate {
    let (value, stderr) = column_mean(means, col);
    McEstimate { value, stderr, samples: cfg.total_samples, seed: cfg.master_seed, reliable: true }
}

fn moment_estimate(cfg: &McConfig, means: &[Vec<f64>], col: usize, p: f64) -> McEstimate {
    let (m, se) = column_mean(means, col);
    let (value, stderr) = if m > 0.0 {
        let v = m.powf(1.0 / p);
        (v, v / (p * m) * se)
    } else {
        (0.0, 0.0)
    };
    McEstimate {
        value,
        stderr,
        samples: cfg.total_samples,
        seed: cfg.master_seed,
        reliable: p <= cfg.reliable_p(),
    }
}

fn check_levels(ps: &[f64]) -> Result<()> {
    match ps.iter().find(|&&p| !(p >= 1.0) || !p.is_finite()) {
        Some(&p) => Err(ChaosError::Domain { what: "moment level p", value: p }),
        None => Ok(()),
    }
}

#[inline]
fn pow_p(v: f64, p: f64) -> f64 {
    if p == 1.0 {
        v
    } else if p == 2.0 {
        v * v
    } else if p == 4.0 {
        let s = v * v;
        s * s
    } else {
        v.powf(p)
    }
}

struct ChaosScratch {
    x: Vec<f64>,
    y: Vec<f64>,
    c: Vec<f64>,
}

// c_k = sum_ij a_ijk x_i y_j, then ||c||_q
fn chaos_norm(a: &CoefficientTensor, s: &mut ChaosScratch) -> f64 {
    let (n1, n2, m) = a.shape();
    let data = a.data();
    s.c.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n1 {
        let xi = s.x[i];
        for j in 0..n2 {
            let w = xi * s.y[j];
            let base = (i * n2 + j) * m;
            for k in 0..m {
                s.c[k] += data[base + k] * w;
            }
        }
    }
    lq_norm(&s.c, a.q())
}

/// `||S'||_p` for every `p` in `ps`, from one shared set of draws, where
/// `S' = sum_ij a_ij X_i Y_j` is measured in `l_q`.
pub fn estimate_moments_decoupled(
    a: &CoefficientTensor,
    dist_x: &TailDistribution,
    dist_y: &TailDistribution,
    ps: &[f64],
    cfg: &McConfig,
) -> Result<Vec<McEstimate>> {
    check_levels(ps)?;
    if a.is_zero() {
        return Ok(ps.iter().map(|_| McEstimate::exact_zero(cfg)).collect());
    }
    let (n1, n2, m) = a.shape();
    let sx = dist_x.sampler(cfg.unit_variance);
    let sy = dist_y.sampler(cfg.unit_variance);
    let means = batch_means(
        cfg,
        ps.len(),
        || ChaosScratch { x: vec![0.0; n1], y: vec![0.0; n2], c: vec![0.0; m] },
        |rng, s, acc| {
            for v in s.x.iter_mut() {
                *v = sx.draw(rng);
            }
            for v in s.y.iter_mut() {
                *v = sy.draw(rng);
            }
            let norm = chaos_norm(a, s);
            for (slot, &p) in acc.iter_mut().zip(ps) {
                *slot += pow_p(norm, p);
            }
        },
    )?;
    Ok(ps.iter().enumerate().map(|(c, &p)| moment_estimate(cfg, &means, c, p)).collect())
}

pub fn estimate_moment_decoupled(
    a: &CoefficientTensor,
    dist_x: &TailDistribution,
    dist_y: &TailDistribution,
    p: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    Ok(estimate_moments_decoupled(a, dist_x, dist_y, &[p], cfg)?.remove(0))
}

/// `||S||_p` for the undecoupled chaos `S = sum_ij a_ij X_i X_j`. Every slice
/// `(a_ijk)_{ij}` must be symmetric with zero diagonal.
pub fn estimate_moments_undecoupled(
    a: &CoefficientTensor,
    dist_x: &TailDistribution,
    ps: &[f64],
    cfg: &McConfig,
) -> Result<Vec<McEstimate>> {
    check_levels(ps)?;
    let (n1, n2, m) = a.shape();
    if n1 != n2 {
        return Err(ChaosError::DimensionMismatch { expected: n1, got: n2 });
    }
    let scale = a.data().iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for k in 0..m {
        for i in 0..n1 {
            if a.get(i, i, k) != 0.0 {
                return Err(ChaosError::Config(format!("nonzero diagonal entry ({i}, {i}, {k})")));
            }
            for j in 0..i {
                if (a.get(i, j, k) - a.get(j, i, k)).abs() > 1e-12 * scale {
                    return Err(ChaosError::Config(format!("slice {k} is not symmetric at ({i}, {j})")));
                }
            }
        }
    }
    if a.is_zero() {
        return Ok(ps.iter().map(|_| McEstimate::exact_zero(cfg)).collect());
    }
    let sx = dist_x.sampler(cfg.unit_variance);
    let means = batch_means(
        cfg,
        ps.len(),
        || ChaosScratch { x: vec![0.0; n1], y: vec![0.0; n1], c: vec![0.0; m] },
        |rng, s, acc| {
            for v in s.x.iter_mut() {
                *v = sx.draw(rng);
            }
            s.y.copy_from_slice(&s.x);
            let norm = chaos_norm(a, s);
            for (slot, &p) in acc.iter_mut().zip(ps) {
                *slot += pow_p(norm, p);
            }
        },
    )?;
    Ok(ps.iter().enumerate().map(|(c, &p)| moment_estimate(cfg, &means, c, p)).collect())
}

pub fn estimate_moment_undecoupled(
    a: &CoefficientTensor,
    dist_x: &TailDistribution,
    p: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    Ok(estimate_moments_undecoupled(a, dist_x, &[p], cfg)?.remove(0))
}

/// `E ||sum_ij a_ij x_i Y_j||_{l_q}` at a fixed `x`.
pub fn estimate_e_norm_fixed_x(
    a: &CoefficientTensor,
    x: &[f64],
    dist_y: &TailDistribution,
    cfg: &McConfig,
) -> Result<McEstimate> {
    let (n1, n2, m) = a.shape();
    if x.len() != n1 {
        return Err(ChaosError::DimensionMismatch { expected: n1, got: x.len() });
    }
    let b = a.contract_i(x);
    if b.iter().all(|&v| v == 0.0) {
        return Ok(McEstimate::exact_zero(cfg));
    }
    let sy = dist_y.sampler(cfg.unit_variance);
    let q = a.q();
    let means = batch_means(
        cfg,
        1,
        || vec![0.0; m],
        |rng, c, acc| {
            c.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..n2 {
                let yj = sy.draw(rng);
                for k in 0..m {
                    c[k] += b[(j, k)] * yj;
                }
            }
            acc[0] += lq_norm(c, q);
        },
    )?;
    Ok(mean_estimate(cfg, &means, 0))
}

/// `(E |sum_i a_i X_i|^p)^{1/p}` for every `p` in `ps`, shared draws.
pub fn gk_moments(a: &[f64], dist: &TailDistribution, ps: &[f64], cfg: &McConfig) -> Result<Vec<McEstimate>> {
    check_levels(ps)?;
    if a.iter().all(|&v| v == 0.0) {
        return Ok(ps.iter().map(|_| McEstimate::exact_zero(cfg)).collect());
    }
    let s: Sampler = dist.sampler(cfg.unit_variance);
    let means = batch_means(
        cfg,
        ps.len(),
        || (),
        |rng, _, acc| {
            let v: f64 = a.iter().map(|&ai| ai * s.draw(rng)).sum::<f64>().abs();
            for (slot, &p) in acc.iter_mut().zip(ps) {
                *slot += pow_p(v, p);
            }
        },
    )?;
    Ok(ps.iter().enumerate().map(|(c, &p)| moment_estimate(cfg, &means, c, p)).collect())
}

pub fn gk_moment(a: &[f64], dist: &TailDistribution, p: f64, cfg: &McConfig) -> Result<McEstimate> {
    Ok(gk_moments(a, dist, &[p], cfg)?.remove(0))
}

/// Mean of an arbitrary functional of `dim` i.i.d. draws from `draw`.
pub fn mc_mean<D, F>(cfg: &McConfig, dim: usize, draw: D, functional: F) -> Result<McEstimate>
where
    D: Fn(&mut ChaCha8Rng) -> f64 + Sync,
    F: Fn(&[f64]) -> f64 + Sync,
{
    let means = batch_means(
        cfg,
        1,
        || vec![0.0; dim],
        |rng, z, acc| {
            for v in z.iter_mut() {
                *v = draw(rng);
            }
            acc[0] += functional(z);
        },
    )?;
    Ok(mean_estimate(cfg, &means, 0))
}
