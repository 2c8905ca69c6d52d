//! Dual-ball norms `||a||_{X,p}`, `||a||_{Y,p}` and the bilinear norm
//! `||A||_{X,Y,p}`.
//!
//! The ball `{x : sum_i N^_i(x_i) <= p}` is not convex when the tail slope
//! at the knee satisfies `N'(1+) < 2` (for instance every `r = 1` law), so the
//! plain Lagrangian dual of the support function only gives an upper bound
//! there. [`norm_xp`] splits the coordinates into a quadratic part
//! (`|x_i| <= 1`) and a tail part (`|x_i| >= 1`); on each such region the
//! problem is convex and is solved exactly by bisection on the multiplier.
//! With identical tails only the `floor(p) + 1` regions whose tail part is a
//! top-`k` set of `|a_i|` can be optimal.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ChaosError, Result};
use crate::special::{bisect, grow_until};
use crate::tails::TailDistribution;

/// Tolerances and iteration caps shared by every iterative solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Relative improvement below which alternating ascent stops.
    pub step_tol: f64,
    /// Relative tolerance of scalar root-finding.
    pub root_tol: f64,
    /// Iteration cap for alternating ascent.
    pub max_iter: usize,
    /// Default number of pseudo-random restarts.
    pub restarts: usize,
    /// Tolerance and cap for the operator-norm power iteration.
    pub power_tol: f64,
    pub power_max_iter: usize,
    /// Heterogeneous balls up to this dimension enumerate every region.
    pub exhaustive_limit: usize,
    /// Seed of the restart generator.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_tol: 1e-9,
            root_tol: 1e-12,
            max_iter: 200,
            restarts: 16,
            power_tol: 1e-15,
            power_max_iter: 20_000,
            exhaustive_limit: 12,
            seed: 0x5eed_0f_c4a0,
        }
    }
}

/// The set `{x in R^n : sum_i N^_i(x_i) <= p}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualBall {
    p: f64,
    tails: Vec<TailDistribution>,
    identical: bool,
}

impl DualBall {
    pub fn new(tails: Vec<TailDistribution>, p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(ChaosError::Domain { what: "moment level p", value: p });
        }
        if tails.iter().any(|t| !t.is_normalized()) {
            return Err(ChaosError::Config("dual ball needs normalized tails".into()));
        }
        let identical = tails.windows(2).all(|w| w[0] == w[1]);
        Ok(DualBall { p, tails, identical })
    }

    /// Ball with `n` copies of the same tail.
    pub fn uniform(dist: &TailDistribution, n: usize, p: f64) -> Result<Self> {
        Self::new(vec![dist.clone(); n], p)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.tails.len()
    }

    pub fn tails(&self) -> &[TailDistribution] {
        &self.tails
    }

    /// Same ball at another level.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.tails.clone(), p)
    }

    pub fn budget(&self, x: &[f64]) -> f64 {
        self.tails.iter().zip(x).map(|(d, &v)| d.hat_n(v)).sum()
    }

    /// Returns `(inside, slack)` with `slack = p - sum_i N^_i(x_i)`.
    pub fn membership(&self, x: &[f64]) -> Result<(bool, f64)> {
        if x.len() != self.dim() {
            return Err(ChaosError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let slack = self.p - self.budget(x);
        Ok((slack >= 0.0, slack))
    }

    /// Radius `rho` with `rho * dir` on the boundary. Zero for a zero direction.
    pub fn boundary_radius(&self, dir: &[f64]) -> f64 {
        if dir.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        let f = |rho: f64| self.budget(&dir.iter().map(|v| v * rho).collect::<Vec<_>>()) - self.p;
        let hi = grow_until(|rho| f(rho) >= 0.0, 1e-3).unwrap_or(f64::MAX);
        bisect(f, 0.0, hi, 1e-15).unwrap_or(hi)
    }

    pub fn boundary_point(&self, dir: &[f64]) -> Vec<f64> {
        let rho = self.boundary_radius(dir);
        dir.iter().map(|v| v * rho).collect()
    }
}

/// Value of `sup_x (a x - lambda N^(x))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Conjugate {
    Finite { value: f64, argmax: f64 },
    /// The supremum is `+inf` (linear tails with `lambda < |a|`).
    Unbounded,
}

/// One-dimensional conjugate of the truncated tail scaled by `lambda`.
pub fn conjugate_1d(d: &TailDistribution, a: f64, lambda: f64) -> Result<Conjugate> {
    if !(lambda > 0.0) {
        return Err(ChaosError::Domain { what: "conjugate multiplier", value: lambda });
    }
    let b = a.abs();
    if b == 0.0 {
        return Ok(Conjugate::Finite { value: 0.0, argmax: 0.0 });
    }
    let xq = (b / (2.0 * lambda)).min(1.0);
    let mut best = (b * xq - lambda * xq * xq, xq);
    if d.has_linear_tail() {
        if lambda < b {
            return Ok(Conjugate::Unbounded);
        }
    } else {
        let xt = d.inverse_deriv_above_one(b / lambda);
        let vt = b * xt - lambda * d.tail(xt);
        if vt > best.0 {
            best = (vt, xt);
        }
    }
    Ok(Conjugate::Finite { value: best.0, argmax: best.1.copysign(a) })
}

/// Result of a norm computation or of a supremum estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct NormResult {
    pub value: f64,
    /// Maximizing point (for bilinear problems `x` followed by `y`).
    pub maximizer: Vec<f64>,
    pub converged: bool,
    /// Regions solved (for [`norm_xp`]) or starting points tried.
    pub restarts_used: usize,
    /// Upper bound certified by the Lagrangian dual of the winning region
    /// (equal to `value` up to solver tolerance); `NaN` where not available.
    pub dual_value: f64,
}

impl NormResult {
    pub(crate) fn zero(n: usize) -> Self {
        NormResult { value: 0.0, maximizer: vec![0.0; n], converged: true, restarts_used: 0, dual_value: 0.0 }
    }
}

// Best response on one region: quadratic (|x| <= 1) or tail (|x| >= 1).
fn region_response(d: &TailDistribution, b: f64, lambda: f64, tail_region: bool) -> f64 {
    if !tail_region {
        if b == 0.0 {
            0.0
        } else {
            (b / (2.0 * lambda)).min(1.0)
        }
    } else if d.has_linear_tail() {
        if lambda > b {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        d.inverse_deriv_above_one(b / lambda)
    }
}

struct RegionSolution {
    value: f64,
    x: Vec<f64>,
    dual: f64,
    converged: bool,
}

// Maximizes sum b_i x_i over the region where coordinates flagged in `tail`
// lie in [1, inf) and the others in [0, 1], subject to sum N^(x_i) <= p.
fn solve_region(b: &[f64], tails: &[TailDistribution], tail: &[bool], p: f64) -> Option<RegionSolution> {
    let n = b.len();
    let k = tail.iter().filter(|&&t| t).count() as f64;
    if k > p * (1.0 + 1e-12) {
        return None;
    }
    let respond = |lambda: f64| -> Vec<f64> {
        (0..n).map(|i| region_response(&tails[i], b[i], lambda, tail[i])).collect()
    };
    let usage = |x: &[f64]| -> f64 { (0..n).map(|i| tails[i].hat_n(x[i])).sum() };
    let finish = |x: Vec<f64>, lambda: f64, converged: bool| -> RegionSolution {
        let value: f64 = b.iter().zip(&x).map(|(bi, xi)| bi * xi).sum();
        let dual = if lambda.is_finite() {
            lambda * p + (0..n).map(|i| b[i] * x[i] - lambda * tails[i].hat_n(x[i])).sum::<f64>()
        } else {
            value
        };
        RegionSolution { value, x, dual, converged }
    };

    // lambda -> inf: quadratic coordinates at 0, tail coordinates at 1
    if k >= p * (1.0 - 1e-12) {
        let x: Vec<f64> = tail.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        return Some(finish(x, f64::INFINITY, true));
    }
    // lambda -> 0 with an empty tail part: the whole cube [0,1]^n may fit
    if k == 0.0 {
        let x: Vec<f64> = b.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        if usage(&x) <= p {
            return Some(finish(x, 0.0, true));
        }
    }

    // Linear tail coordinates force lambda >= their coefficient.
    let lambda_min = (0..n)
        .filter(|&i| tail[i] && tails[i].has_linear_tail())
        .map(|i| b[i])
        .fold(0.0, f64::max);
    if lambda_min > 0.0 {
        let mut x: Vec<f64> = (0..n)
            .map(|i| {
                if tail[i] && tails[i].has_linear_tail() {
                    1.0
                } else {
                    region_response(&tails[i], b[i], lambda_min, tail[i])
                }
            })
            .collect();
        let used = usage(&x);
        if used <= p {
            // the remaining budget goes to the first linear coordinate on the flat
            let first = (0..n)
                .find(|&i| tail[i] && tails[i].has_linear_tail() && b[i] == lambda_min)
                .expect("lambda_min comes from a linear coordinate");
            x[first] += p - used;
            return Some(finish(x, lambda_min, true));
        }
    }

    let bmax = b.iter().cloned().fold(0.0, f64::max).max(lambda_min);
    let mut hi = 2.0 * bmax.max(f64::MIN_POSITIVE);
    for _ in 0..2_000 {
        if usage(&respond(hi)) <= p {
            break;
        }
        hi *= 2.0;
    }
    let mut lo = if lambda_min > 0.0 { lambda_min } else { hi };
    if lambda_min == 0.0 {
        while usage(&respond(lo)) <= p {
            lo *= 0.5;
            if lo < 1e-300 {
                break;
            }
        }
    }
    let mut converged = false;
    for _ in 0..300 {
        let mid = (lo * hi).sqrt();
        if hi / lo - 1.0 <= 1e-15 || mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        if usage(&respond(mid)) <= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x = respond(hi);
    Some(finish(x, hi, converged))
}

/// `||a||_{X,p} = sup { sum_i a_i x_i : x in ball }`.
pub fn norm_xp(a: &[f64], ball: &DualBall, cfg: &SolverConfig) -> Result<NormResult> {
    let n = ball.dim();
    if a.len() != n {
        return Err(ChaosError::DimensionMismatch { expected: n, got: a.len() });
    }
    let bmax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if n == 0 || bmax == 0.0 {
        return Ok(NormResult::zero(n));
    }
    if !bmax.is_finite() {
        return Err(ChaosError::Numeric("non-finite coefficient".into()));
    }
    let b: Vec<f64> = a.iter().map(|v| v.abs() / bmax).collect();
    let positive = b.iter().filter(|&&v| v > 0.0).count();
    let kmax = ((ball.p() * (1.0 + 1e-12)).floor() as usize).min(positive);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| b[j].total_cmp(&b[i]));

    let mut regions: Vec<Vec<bool>> = Vec::new();
    let exhaustive = !ball.identical && n <= cfg.exhaustive_limit;
    if exhaustive {
        for mask in 0u64..(1u64 << n) {
            if (mask.count_ones() as usize) <= kmax {
                regions.push((0..n).map(|i| mask >> i & 1 == 1).collect());
            }
        }
    } else {
        for k in 0..=kmax {
            let mut t = vec![false; n];
            for &i in &order[..k] {
                t[i] = true;
            }
            regions.push(t);
        }
    }

    let mut best: Option<RegionSolution> = None;
    let mut solved = 0;
    for region in &regions {
        if let Some(sol) = solve_region(&b, ball.tails(), region, ball.p()) {
            solved += 1;
            if best.as_ref().map_or(true, |cur| sol.value > cur.value) {
                best = Some(sol);
            }
        }
    }
    let best = best.ok_or_else(|| ChaosError::Numeric("no feasible region".into()))?;
    let maximizer = best.x.iter().zip(a).map(|(x, ai)| if *ai < 0.0 { -x } else { *x }).collect();
    Ok(NormResult {
        value: best.value * bmax,
        maximizer,
        converged: best.converged && (ball.identical || exhaustive),
        restarts_used: solved,
        dual_value: best.dual * bmax,
    })
}

/// `inf_{lambda > 0} (lambda p + sum_i conj_i(a_i, lambda))`: the support
/// function of the ball built from the convex envelopes of `N^_i`. It equals
/// [`norm_xp`] when every knee is convex and bounds it from above otherwise.
pub fn lagrangian_bound(a: &[f64], ball: &DualBall) -> Result<f64> {
    if a.len() != ball.dim() {
        return Err(ChaosError::DimensionMismatch { expected: ball.dim(), got: a.len() });
    }
    let bmax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if bmax == 0.0 {
        return Ok(0.0);
    }
    let b: Vec<f64> = a.iter().map(|v| v.abs() / bmax).collect();
    let tails = ball.tails();
    let p = ball.p();
    // D(lambda) and its slope p - sum N^(argmax)
    let eval = |lambda: f64| -> Option<(f64, f64)> {
        let mut value = lambda * p;
        let mut used = 0.0;
        for (d, &bi) in tails.iter().zip(&b) {
            match conjugate_1d(d, bi, lambda).ok()? {
                Conjugate::Finite { value: v, argmax } => {
                    value += v;
                    used += d.hat_n(argmax);
                }
                Conjugate::Unbounded => return None,
            }
        }
        Some((value, p - used))
    };
    let lambda_min = tails
        .iter()
        .zip(&b)
        .filter(|(d, _)| d.has_linear_tail())
        .map(|(_, &bi)| bi)
        .fold(0.0, f64::max);
    let mut hi = 2.0 * b.iter().cloned().fold(lambda_min, f64::max);
    while eval(hi).map_or(true, |(_, s)| s < 0.0) {
        hi *= 2.0;
    }
    let mut lo = if lambda_min > 0.0 { lambda_min } else { hi };
    if lambda_min == 0.0 {
        while lo > 1e-300 && eval(lo).map_or(false, |(_, s)| s > 0.0) {
            lo *= 0.5;
        }
    }
    if let Some((v, s)) = eval(lo) {
        if s >= 0.0 {
            return Ok(v * bmax);
        }
    }
    for _ in 0..300 {
        let mid = (lo * hi).sqrt();
        if hi / lo - 1.0 <= 1e-15 || mid <= lo || mid >= hi {
            break;
        }
        match eval(mid) {
            Some((_, s)) if s >= 0.0 => hi = mid,
            _ => lo = mid,
        }
    }
    let (v, _) = eval(hi).expect("hi stays in the finite region");
    Ok(v * bmax)
}

fn bilinear(a2: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a2.nrows() {
        for j in 0..a2.ncols() {
            s += a2[(i, j)] * x[i] * y[j];
        }
    }
    s
}

pub(crate) fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        if v.iter().any(|&c| c != 0.0) {
            return v;
        }
    }
}

pub(crate) fn restart_rng(cfg: &SolverConfig, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    rng
}

/// Runs independent starts (possibly in parallel) and keeps the best value,
/// breaking ties by the lowest start index.
pub(crate) fn best_of<F>(starts: usize, run: F) -> Result<NormResult>
where
    F: Fn(usize) -> Result<NormResult> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let results: Vec<Result<NormResult>> = {
        use rayon::prelude::*;
        (0..starts).into_par_iter().map(&run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<NormResult>> = (0..starts).map(&run).collect();

    let mut best: Option<NormResult> = None;
    for r in results {
        let r = r?;
        if best.as_ref().map_or(true, |b| r.value > b.value) {
            best = Some(r);
        }
    }
    let mut best = best.ok_or_else(|| ChaosError::Config("no starting points".into()))?;
    best.restarts_used = starts;
    Ok(best)
}

/// Top singular pair `(u, v, sigma)` of a matrix.
pub fn top_singular_pair(a: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>, f64) {
    let svd = a.clone().svd(true, true);
    let (idx, sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let u = svd.u.as_ref().expect("u requested").column(idx).into_owned();
    let v = svd.v_t.as_ref().expect("v_t requested").row(idx).transpose().into_owned();
    (u, v, sigma)
}

/// Alternating maximization from a starting `y`; returns `(value, x, y, converged)`.
pub(crate) fn alternate_xy(
    a2: &DMatrix<f64>,
    bx: &DualBall,
    by: &DualBall,
    y0: Vec<f64>,
    cfg: &SolverConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>, bool)> {
    let mut y = y0;
    let mut x = vec![0.0; a2.nrows()];
    let mut value = f64::NEG_INFINITY;
    for _ in 0..cfg.max_iter {
        let ay: Vec<f64> = (a2 * DVector::from_column_slice(&y)).iter().cloned().collect();
        x = norm_xp(&ay, bx, cfg)?.maximizer;
        let atx: Vec<f64> = (a2.transpose() * DVector::from_column_slice(&x)).iter().cloned().collect();
        let step = norm_xp(&atx, by, cfg)?;
        y = step.maximizer;
        let new = bilinear(a2, &x, &y);
        if new - value <= cfg.step_tol * new.abs() {
            return Ok((new.max(value), x, y, true));
        }
        value = new;
    }
    Ok((value, x, y, false))
}

/// `||A||_{X,Y,p}` by alternating maximization from the top singular pair and
/// `restarts` pseudo-random boundary points of the `y`-ball. The returned
/// value is attained at the returned witness, hence a lower bound of the
/// true norm.
pub fn norm_xyp(
    a2: &DMatrix<f64>,
    bx: &DualBall,
    by: &DualBall,
    restarts: usize,
    cfg: &SolverConfig,
) -> Result<NormResult> {
    if restarts == 0 {
        return Err(ChaosError::Config("norm_xyp needs at least one restart".into()));
    }
    let (n1, n2) = (a2.nrows(), a2.ncols());
    if bx.dim() != n1 || by.dim() != n2 {
        return Err(ChaosError::DimensionMismatch { expected: n1 * n2, got: bx.dim() * by.dim() });
    }
    if a2.iter().all(|&v| v == 0.0) {
        return Ok(NormResult::zero(n1 + n2));
    }
    let (_, v, _) = top_singular_pair(a2);
    let warm: Vec<f64> = v.iter().cloned().collect();
    best_of(restarts + 1, |s| {
        let y0 = if s == 0 {
            by.boundary_point(&warm)
        } else {
            let mut rng = restart_rng(cfg, s as u64);
            by.boundary_point(&random_direction(&mut rng, n2))
        };
        let (value, x, y, converged) = alternate_xy(a2, bx, by, y0, cfg)?;
        let mut maximizer = x;
        maximizer.extend(y);
        Ok(NormResult { value, maximizer, converged, restarts_used: 1, dual_value: f64::NAN })
    })
}

// ---------------------------------------------------------------------------
// Brute-force oracles (n <= 3)
// ---------------------------------------------------------------------------

const BRUTE_MAX_DIM: usize = 3;
const COARSE: usize = 48;
const KEEP: usize = 6;

// Maximizes eval(c) over budgets c >= 0 with sum c = p, n <= 3, by a grid
// followed by repeated local refinement around the best points.
fn simplex_max<F: FnMut(&[f64]) -> f64>(n: usize, p: f64, resolution: f64, mut eval: F) -> f64 {
    if n == 1 {
        return eval(&[p]);
    }
    let free = n - 1;
    let point = |u: &[f64]| -> Option<Vec<f64>> {
        let s: f64 = u.iter().sum();
        if u.iter().any(|&v| v < 0.0) || s > p * (1.0 + 1e-15) {
            return None;
        }
        let mut c = u.to_vec();
        c.push((p - s).max(0.0));
        Some(c)
    };
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut step = p / COARSE as f64;
    let mut visit = |u: Vec<f64>, scored: &mut Vec<(f64, Vec<f64>)>| {
        if let Some(c) = point(&u) {
            let v = eval(&c);
            scored.push((v, u));
        }
    };
    if free == 1 {
        for i in 0..=COARSE {
            visit(vec![i as f64 * step], &mut scored);
        }
    } else {
        for i in 0..=COARSE {
            for j in 0..=(COARSE - i) {
                visit(vec![i as f64 * step, j as f64 * step], &mut scored);
            }
        }
    }
    let mut best = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    while step > resolution * p {
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        scored.truncate(KEEP);
        let centers: Vec<Vec<f64>> = scored.iter().map(|s| s.1.clone()).collect();
        step /= 4.0;
        let mut next = Vec::new();
        for c in centers {
            if free == 1 {
                for di in -4i32..=4 {
                    visit(vec![c[0] + di as f64 * step], &mut next);
                }
            } else {
                for di in -4i32..=4 {
                    for dj in -4i32..=4 {
                        visit(vec![c[0] + di as f64 * step, c[1] + dj as f64 * step], &mut next);
                    }
                }
            }
        }
        best = next.iter().map(|s| s.0).fold(best, f64::max);
        scored = next;
    }
    best
}

fn check_brute(n: usize, resolution: f64) -> Result<()> {
    if n > BRUTE_MAX_DIM {
        return Err(ChaosError::Refused(format!("dimension {n} exceeds {BRUTE_MAX_DIM}")));
    }
    if !(resolution > 0.0 && resolution <= 1e-2) {
        return Err(ChaosError::Refused(format!("grid resolution {resolution} not in (0, 1e-2]")));
    }
    Ok(())
}

/// Grid oracle for `||a||_{X,p}` with `n <= 3`: searches the boundary of the
/// ball parameterized by the budget split `N^_i(x_i) = c_i`, `sum c_i = p`.
pub fn brute_norm_xp(a: &[f64], ball: &DualBall, resolution: f64) -> Result<f64> {
    let n = ball.dim();
    check_brute(n, resolution)?;
    if a.len() != n {
        return Err(ChaosError::DimensionMismatch { expected: n, got: a.len() });
    }
    if n == 0 || a.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let tails = ball.tails();
    Ok(simplex_max(n, ball.p(), resolution, |c| {
        (0..n).map(|i| a[i].abs() * tails[i].inverse_hat(c[i])).sum()
    }))
}

/// Grid oracle for `||A||_{X,Y,p}` with `n1, n2 <= 3`: every boundary point
/// of the `x`-ball on the refined grid (all sign patterns) is paired with the
/// brute-force inner supremum over the `y`-ball.
pub fn brute_norm_xyp(a2: &DMatrix<f64>, bx: &DualBall, by: &DualBall, resolution: f64) -> Result<f64> {
    let (n1, n2) = (a2.nrows(), a2.ncols());
    check_brute(n1.max(n2), resolution)?;
    if bx.dim() != n1 || by.dim() != n2 {
        return Err(ChaosError::DimensionMismatch { expected: n1 * n2, got: bx.dim() * by.dim() });
    }
    if a2.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let tx = bx.tails();
    let mut best = f64::NEG_INFINITY;
    // (x, y) -> (-x, -y) leaves the form unchanged: fix the first sign
    for signs in 0u32..(1u32 << (n1 - 1)) {
        let sign = |i: usize| if i > 0 && signs >> (i - 1) & 1 == 1 { -1.0 } else { 1.0 };
        let v = simplex_max(n1, bx.p(), resolution, |c| {
            let x: Vec<f64> = (0..n1).map(|i| sign(i) * tx[i].inverse_hat(c[i])).collect();
            let atx: Vec<f64> = (0..n2).map(|j| (0..n1).map(|i| a2[(i, j)] * x[i]).sum()).collect();
            brute_norm_xp(&atx, by, resolution).unwrap_or(f64::NEG_INFINITY)
        });
        best = best.max(v);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w1() -> TailDistribution {
        TailDistribution::weibull(1.0).unwrap()
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn conjugate_examples() {
        let g = TailDistribution::gaussian();
        assert_eq!(conjugate_1d(&g, 0.0, 3.0).unwrap(), Conjugate::Finite { value: 0.0, argmax: 0.0 });
        match conjugate_1d(&g, 2.0, 1.0).unwrap() {
            Conjugate::Finite { value, argmax } => {
                assert!((value - 1.0).abs() < 1e-12 && (argmax - 1.0).abs() < 1e-12)
            }
            _ => panic!(),
        }
        match conjugate_1d(&w1(), 1.0, 1.0).unwrap() {
            Conjugate::Finite { value, argmax } => {
                assert!((value - 0.25).abs() < 1e-12 && (argmax - 0.5).abs() < 1e-12)
            }
            _ => panic!(),
        }
        assert_eq!(conjugate_1d(&w1(), 2.0, 1.0).unwrap(), Conjugate::Unbounded);
        assert!(conjugate_1d(&w1(), 1.0, 0.0).is_err());
    }

    #[test]
    fn conjugate_matches_grid_scan() {
        // 1-D grid scan oracle at step 1e-5
        for (d, a, lambda) in [
            (w1(), 1.0, 1.0),
            (w1(), -0.7, 1.3),
            (TailDistribution::exp_power(1.5).unwrap(), 3.0, 0.8),
            (TailDistribution::weibull(3.0).unwrap(), 5.0, 0.5),
        ] {
            let mut best = (f64::NEG_INFINITY, 0.0);
            let mut x = -20.0;
            while x <= 20.0 {
                let v = a * x - lambda * d.hat_n(x);
                if v > best.0 {
                    best = (v, x);
                }
                x += 1e-5;
            }
            match conjugate_1d(&d, a, lambda).unwrap() {
                Conjugate::Finite { value, argmax } => {
                    assert!((value - best.0).abs() < 1e-8, "{value} vs {}", best.0);
                    assert!((argmax - best.1).abs() < 1e-3);
                }
                Conjugate::Unbounded => panic!("unexpected unbounded"),
            }
        }
    }

    #[test]
    fn gaussian_ball_is_euclidean() {
        let ball = DualBall::uniform(&TailDistribution::gaussian(), 2, 4.0).unwrap();
        let r = norm_xp(&[3.0, 4.0], &ball, &cfg()).unwrap();
        assert!((r.value - 10.0).abs() < 1e-10);
        assert!((r.maximizer[0] - 1.2).abs() < 1e-6 && (r.maximizer[1] - 1.6).abs() < 1e-6);
    }

    #[test]
    fn single_active_coordinate() {
        let ball = DualBall::uniform(&w1(), 2, 9.0).unwrap();
        let r = norm_xp(&[1.0, 0.0], &ball, &cfg()).unwrap();
        assert!((r.value - 9.0).abs() < 1e-12);
    }

    #[test]
    fn nonconvex_knee_example() {
        let ball = DualBall::uniform(&w1(), 2, 2.0).unwrap();
        let r = norm_xp(&[1.0, 1.0], &ball, &cfg()).unwrap();
        assert!((r.value - 2.25).abs() < 1e-12, "{}", r.value);
        let mut w = r.maximizer.clone();
        w.sort_by(f64::total_cmp);
        assert!((w[0] - 0.5).abs() < 1e-9 && (w[1] - 1.75).abs() < 1e-9);
        let (inside, slack) = ball.membership(&r.maximizer).unwrap();
        assert!(inside || slack.abs() < 1e-9);
        assert!(slack.abs() < 1e-9);
        // the convexified dual overshoots on this ball
        assert!((lagrangian_bound(&[1.0, 1.0], &ball).unwrap() - 2.5).abs() < 1e-9);
        let brute = brute_norm_xp(&[1.0, 1.0], &ball, 1e-3).unwrap();
        assert!((brute - 2.25).abs() < 1e-3 * 2.25);
    }

    #[test]
    fn membership_examples() {
        let g = DualBall::uniform(&TailDistribution::gaussian(), 2, 4.0).unwrap();
        assert_eq!(g.membership(&[0.0, 0.0]).unwrap(), (true, 4.0));
        let (inside, slack) = g.membership(&[2.0, 0.0]).unwrap();
        assert!(inside && slack == 0.0);
        assert!(matches!(g.membership(&[1.0]), Err(ChaosError::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_and_zero_vectors() {
        let ball = DualBall::uniform(&w1(), 3, 2.0).unwrap();
        assert_eq!(norm_xp(&[0.0; 3], &ball, &cfg()).unwrap().value, 0.0);
        let empty = DualBall::uniform(&w1(), 0, 2.0).unwrap();
        assert_eq!(norm_xp(&[], &empty, &cfg()).unwrap().value, 0.0);
    }

    #[test]
    fn rejects_bad_level() {
        assert!(DualBall::uniform(&w1(), 2, 0.5).is_err());
    }

    #[test]
    fn witness_consistency_and_duality_gap() {
        let cases: &[(&[f64], f64, f64)] = &[
            (&[1.0, -2.0, 0.5], 1.5, 3.0),
            (&[0.3, 0.3, 0.3, 0.1], 1.0, 2.0),
            (&[5.0, 1.0], 2.0, 8.0),
            (&[1.0, 1.0, 1.0], 3.0, 1.0),
        ];
        for &(a, r, p) in cases {
            for d in [TailDistribution::exp_power(r).unwrap(), TailDistribution::weibull(r).unwrap()] {
                let ball = DualBall::uniform(&d, a.len(), p).unwrap();
                let res = norm_xp(a, &ball, &cfg()).unwrap();
                let at: f64 = a.iter().zip(&res.maximizer).map(|(u, v)| u * v).sum();
                assert!((at - res.value).abs() <= 1e-10 * res.value.max(1.0));
                let (_, slack) = ball.membership(&res.maximizer).unwrap();
                assert!(slack > -1e-8, "slack {slack}");
                assert!((res.dual_value - res.value).abs() <= 1e-7 * res.value, "{res:?}");
                assert!(res.value <= lagrangian_bound(a, &ball).unwrap() * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn convex_knee_has_no_duality_gap() {
        let d = TailDistribution::weibull(3.0).unwrap();
        let ball = DualBall::uniform(&d, 3, 4.0).unwrap();
        let a = [1.0, 0.4, -2.0];
        let v = norm_xp(&a, &ball, &cfg()).unwrap().value;
        let l = lagrangian_bound(&a, &ball).unwrap();
        assert!((v - l).abs() < 1e-7 * v, "{v} {l}");
    }

    #[test]
    fn heterogeneous_ball_enumerates_regions() {
        let tails = vec![w1(), TailDistribution::exp_power(2.5).unwrap(), TailDistribution::gaussian()];
        let ball = DualBall::new(tails, 3.0).unwrap();
        let a = [0.8, 1.2, -0.5];
        let r = norm_xp(&a, &ball, &cfg()).unwrap();
        assert!(r.converged);
        let brute = brute_norm_xp(&a, &ball, 1e-3).unwrap();
        assert!((r.value - brute).abs() <= 1e-3 * r.value, "{} vs {brute}", r.value);
    }

    #[test]
    fn bilinear_identity_gaussian() {
        let ball = DualBall::uniform(&TailDistribution::gaussian(), 2, 3.0).unwrap();
        let r = norm_xyp(&DMatrix::identity(2, 2), &ball, &ball, 4, &cfg()).unwrap();
        assert!((r.value - 3.0).abs() < 1e-8);
    }

    #[test]
    fn bilinear_rank_one_factorizes() {
        let d = TailDistribution::exp_power(1.5).unwrap();
        let u = [1.0, -0.5, 2.0];
        let v = [0.3, 1.0];
        let bx = DualBall::uniform(&d, 3, 2.5).unwrap();
        let by = DualBall::uniform(&d, 2, 2.5).unwrap();
        let a2 = DMatrix::from_fn(3, 2, |i, j| u[i] * v[j]);
        let r = norm_xyp(&a2, &bx, &by, 4, &cfg()).unwrap();
        let want = norm_xp(&u, &bx, &cfg()).unwrap().value * norm_xp(&v, &by, &cfg()).unwrap().value;
        assert!((r.value - want).abs() < 1e-9 * want);
    }

    #[test]
    fn bilinear_matches_brute_weibull_one() {
        let ball = DualBall::uniform(&w1(), 2, 2.0).unwrap();
        let a2 = DMatrix::identity(2, 2);
        let r = norm_xyp(&a2, &ball, &ball, 16, &cfg()).unwrap();
        let b = brute_norm_xyp(&a2, &ball, &ball, 1e-3).unwrap();
        assert!((r.value - b).abs() <= 1e-3 * b, "{} vs {b}", r.value);
    }

    #[test]
    fn brute_examples() {
        let g = DualBall::uniform(&TailDistribution::gaussian(), 1, 4.0).unwrap();
        let one = DMatrix::from_element(1, 1, 1.0);
        assert!((brute_norm_xyp(&one, &g, &g, 1e-3).unwrap() - 4.0).abs() < 1e-12);
        let w = DualBall::uniform(&w1(), 1, 4.0).unwrap();
        assert!((brute_norm_xyp(&one, &w, &w, 1e-3).unwrap() - 16.0).abs() < 1e-12);
        assert_eq!(brute_norm_xyp(&DMatrix::zeros(1, 1), &w, &w, 1e-3).unwrap(), 0.0);
        let w4 = DualBall::uniform(&w1(), 4, 4.0).unwrap();
        assert!(matches!(brute_norm_xp(&[1.0; 4], &w4, 1e-3), Err(ChaosError::Refused(_))));
        assert!(matches!(brute_norm_xp(&[1.0], &w, 0.1), Err(ChaosError::Refused(_))));
    }
}
