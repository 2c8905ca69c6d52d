//! Symmetric distributions with logarithmically concave tails.
//!
//! Every distribution is normalized so that its tail function
//! `N(t) = -ln P(|X| >= t)` crosses 1 exactly at `t = 1`. The truncated tail
//! `N^(t)` replaces `N` by `t^2` on `[-1, 1]`; sums of truncated tails define
//! the dual balls in [`crate::dual_norms`].
//!
//! The Gaussian family is the standard normal law. Its tail function is the
//! canonical Gaussian-type tail `t^2`, which is what the dual-ball geometry
//! consumes; sampling, survival and moments are those of `N(0, 1)`.

use std::fmt;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ChaosError, Result};
use crate::special::{bisect, erfc, grow_until, integrate_to_inf, ln_gamma, ln_gamma_q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Survival `exp(-t^r)`.
    #[serde(rename = "weibull", alias = "weibull-tail")]
    WeibullTail,
    /// Density proportional to `exp(-|x|^r)`, rescaled to satisfy the
    /// normalization.
    #[serde(rename = "exp-power", alias = "exp-power-density")]
    ExpPowerDensity,
    /// Standard normal law with Gaussian-type tail function `t^2`.
    Gaussian,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::WeibullTail => "weibull",
            Family::ExpPowerDensity => "exp-power",
            Family::Gaussian => "gaussian",
        };
        f.write_str(s)
    }
}

/// Serialized form of a [`TailDistribution`]: the family and its shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub family: Family,
    pub r: f64,
}

impl TryFrom<TailSpec> for TailDistribution {
    type Error = ChaosError;
    fn try_from(s: TailSpec) -> Result<Self> {
        TailDistribution::new(s.family, s.r)
    }
}

impl From<TailDistribution> for TailSpec {
    fn from(d: TailDistribution) -> Self {
        TailSpec { family: d.family, r: d.r }
    }
}

/// A normalized symmetric log-concave-tail law.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "TailSpec", into = "TailSpec")]
pub struct TailDistribution {
    family: Family,
    r: f64,
    scale: f64,
    normalized: bool,
    // 1/r, ln Gamma(1/r) and the gamma sampler, used only by the exp-power family.
    shape_a: f64,
    ln_gamma_a: f64,
    gamma: Option<Gamma<f64>>,
}

impl PartialEq for TailDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family && self.r == other.r && self.scale == other.scale
    }
}

impl TailDistribution {
    /// Builds and normalizes a distribution of the given family.
    ///
    /// For [`Family::Gaussian`] the shape argument is ignored and `r = 2`.
    pub fn new(family: Family, r: f64) -> Result<Self> {
        let r = if family == Family::Gaussian { 2.0 } else { r };
        if !(r >= 1.0) || !r.is_finite() {
            return Err(ChaosError::InvalidShape(r));
        }
        let mut d = TailDistribution {
            family,
            r,
            scale: 1.0,
            normalized: false,
            shape_a: 1.0 / r,
            ln_gamma_a: ln_gamma(1.0 / r),
            gamma: None,
        };
        if family == Family::ExpPowerDensity {
            let a = d.shape_a;
            // survival of the raw variable at s is Q(1/r, s^r); solve for e^{-1}
            let hi = grow_until(|s| ln_gamma_q(a, s.powf(r)) < -1.0, 1.0)
                .ok_or_else(|| ChaosError::Numeric("normalization bracket".into()))?;
            let s = bisect(|s| ln_gamma_q(a, s.powf(r)) + 1.0, 0.0, hi, 1e-15)
                .ok_or_else(|| ChaosError::Numeric("normalization root".into()))?;
            d.scale = s;
            d.gamma = Some(
                Gamma::new(a, 1.0).map_err(|e| ChaosError::Numeric(format!("gamma sampler: {e}")))?,
            );
        }
        d.normalized = true;
        Ok(d)
    }

    pub fn weibull(r: f64) -> Result<Self> {
        Self::new(Family::WeibullTail, r)
    }

    pub fn exp_power(r: f64) -> Result<Self> {
        Self::new(Family::ExpPowerDensity, r)
    }

    pub fn gaussian() -> Self {
        Self::new(Family::Gaussian, 2.0).expect("gaussian is always valid")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Shape exponent `r`.
    pub fn shape(&self) -> f64 {
        self.r
    }

    /// Multiplicative normalization: the normalized variable is the raw one
    /// divided by this value.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// True when `N` is linear on `[1, inf)` (the `r = 1` members).
    pub fn has_linear_tail(&self) -> bool {
        self.r == 1.0 && self.family != Family::Gaussian
    }

    /// `P(|X| >= t)`.
    pub fn survival(&self, t: f64) -> f64 {
        let t = t.abs();
        match self.family {
            Family::WeibullTail => (-t.powf(self.r)).exp(),
            Family::ExpPowerDensity => ln_gamma_q(self.shape_a, (self.scale * t).powf(self.r)).exp(),
            Family::Gaussian => erfc(t / std::f64::consts::SQRT_2),
        }
    }

    /// Tail function `N(t)` for `t >= 0`; rejects negative arguments.
    pub fn tail_n(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(ChaosError::Domain { what: "tail function", value: t });
        }
        Ok(self.tail(t))
    }

    /// Tail function without the domain check (`|t|` is used).
    pub(crate) fn tail(&self, t: f64) -> f64 {
        let t = t.abs();
        match self.family {
            Family::WeibullTail => t.powf(self.r),
            Family::ExpPowerDensity => -ln_gamma_q(self.shape_a, (self.scale * t).powf(self.r)),
            Family::Gaussian => t * t,
        }
    }

    /// Right derivative `N'(t)` for `t >= 0`.
    pub fn tail_deriv(&self, t: f64) -> f64 {
        let t = t.abs();
        match self.family {
            Family::WeibullTail => {
                if self.r == 1.0 {
                    1.0
                } else {
                    self.r * t.powf(self.r - 1.0)
                }
            }
            Family::Gaussian => 2.0 * t,
            Family::ExpPowerDensity => {
                let u = (self.scale * t).powf(self.r);
                ((self.r * self.scale).ln() - u - self.ln_gamma_a - ln_gamma_q(self.shape_a, u)).exp()
            }
        }
    }

    fn tail_second(&self, t: f64) -> f64 {
        match self.family {
            Family::WeibullTail => {
                if self.r == 1.0 {
                    0.0
                } else {
                    self.r * (self.r - 1.0) * t.powf(self.r - 2.0)
                }
            }
            Family::Gaussian => 2.0,
            Family::ExpPowerDensity => {
                let d1 = self.tail_deriv(t);
                let du = self.r * self.scale * (self.scale * t).powf(self.r - 1.0);
                d1 * (d1 - du)
            }
        }
    }

    /// Truncated tail: `t^2` on `[-1, 1]`, `N(|t|)` outside.
    pub fn hat_n(&self, t: f64) -> f64 {
        let t = t.abs();
        if t <= 1.0 {
            t * t
        } else {
            self.tail(t)
        }
    }

    /// Inverse of `N` on `[0, inf)`.
    pub fn inverse_tail(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::WeibullTail => c.powf(1.0 / self.r),
            Family::Gaussian => c.sqrt(),
            Family::ExpPowerDensity => {
                let hi = grow_until(|t| self.tail(t) >= c, 1.0).unwrap_or(f64::MAX);
                bisect(|t| self.tail(t) - c, 0.0, hi, 1e-15).unwrap_or(hi)
            }
        }
    }

    /// Inverse of `N^` on `[0, inf)`: the boundary radius of a one-dimensional
    /// ball at budget `c`.
    pub fn inverse_hat(&self, c: f64) -> f64 {
        if c <= 1.0 {
            c.max(0.0).sqrt()
        } else {
            self.inverse_tail(c)
        }
    }

    /// Solves `N'(x) = y` on `[1, inf)`; returns 1 when `y <= N'(1)`.
    ///
    /// Meaningless for linear tails, where `N'` is constant.
    pub(crate) fn inverse_deriv_above_one(&self, y: f64) -> f64 {
        let knee = self.tail_deriv(1.0);
        if y <= knee {
            return 1.0;
        }
        match self.family {
            Family::WeibullTail => (y / self.r).powf(1.0 / (self.r - 1.0)),
            Family::Gaussian => y / 2.0,
            Family::ExpPowerDensity => {
                // safeguarded Newton on N'(x) - y, N' increasing
                let mut lo = 1.0;
                let mut hi = match grow_until(|t| self.tail_deriv(t) >= y, 2.0) {
                    Some(h) => h,
                    None => return f64::MAX,
                };
                let guess = (y / (self.r * self.scale.powf(self.r))).powf(1.0 / (self.r - 1.0));
                let mut x = if guess > lo && guess < hi { guess } else { 0.5 * (lo + hi) };
                for _ in 0..100 {
                    let g = self.tail_deriv(x) - y;
                    if g > 0.0 {
                        hi = x;
                    } else {
                        lo = x;
                    }
                    let step = g / self.tail_second(x);
                    let mut next = x - step;
                    if !(next > lo && next < hi) || !next.is_finite() {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - x).abs() <= 1e-15 * x || hi - lo <= 1e-15 * hi {
                        return next;
                    }
                    x = next;
                }
                x
            }
        }
    }

    /// `E X^k`. Odd moments vanish by symmetry; even ones are computed as
    /// `int_0^inf k t^{k-1} P(|X| >= t) dt`.
    pub fn raw_moment(&self, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        if k % 2 == 1 {
            return 0.0;
        }
        let kf = k as f64;
        integrate_to_inf(|t| kf * t.powi(k as i32 - 1) * self.survival(t), 0.0, 1e-12)
    }

    /// Draws one variate by inverse survival transform (Weibull tails), the
    /// gamma representation `|X|^r ~ Gamma(1/r)` (exp-power), or a standard
    /// normal draw.
    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::WeibullTail => {
                let bits = rng.next_u64();
                let u = ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
                let e = -u.ln();
                let mag = if self.r == 1.0 {
                    e
                } else if self.r == 2.0 {
                    e.sqrt()
                } else {
                    e.powf(1.0 / self.r)
                };
                if bits & 1 == 1 {
                    -mag
                } else {
                    mag
                }
            }
            Family::ExpPowerDensity => {
                let g: f64 = self.gamma.as_ref().expect("exp-power sampler").sample(rng);
                let mag = if self.r == 1.0 {
                    g
                } else if self.r == 2.0 {
                    g.sqrt()
                } else {
                    g.powf(self.shape_a)
                } / self.scale;
                if rng.random::<bool>() {
                    -mag
                } else {
                    mag
                }
            }
            Family::Gaussian => StandardNormal.sample(rng),
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }

    /// Sampler that optionally rescales draws to unit variance.
    pub fn sampler(&self, unit_variance: bool) -> Sampler {
        let factor = if unit_variance { 1.0 / self.raw_moment(2).sqrt() } else { 1.0 };
        Sampler { dist: self.clone(), factor }
    }
}

/// A distribution together with a fixed multiplier applied to every draw.
#[derive(Clone, Debug)]
pub struct Sampler {
    dist: TailDistribution,
    factor: f64,
}

impl Sampler {
    #[inline]
    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.factor * self.dist.draw(rng)
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn distribution(&self) -> &TailDistribution {
        &self.dist
    }
}
