//! Deterministic sides of the two-sided moment bounds, assembled from the
//! terms `T1`..`T6`.
//!
//! | term  | quantity |
//! |-------|----------|
//! | `T1`  | `(sum_k (sum_ij a_ijk^2)^{q/2})^{1/q}` |
//! | `T2`  | `sup_{x in B^X_p} (sum_k (sum_j (sum_i a_ijk x_i)^2)^{q/2})^{1/q}` |
//! | `T3`  | `T2` with the roles of `i` and `j` exchanged, over `B^Y_p` |
//! | `T4r` | `sup_{f in B_q'} ||(sqrt(sum_j f(a_ij)^2))_i||_{X,p}` |
//! | `T4c` | `sup_{f in B_q'} ||(sqrt(sum_i f(a_ij)^2))_j||_{Y,p}` |
//! | `T5`  | `sup_{f in B_q'} ||(f(a_ij))_ij||_{X,Y,p}` |
//! | `T6`  | `p max_i sup_{t in B_q'} sqrt(sum_j (sum_k a_ijk t_k)^2)` |
//!
//! `T2`..`T5` are nonconvex suprema. Each is computed by block-coordinate
//! ascent in which every block step is an exact maximization, from several
//! starting points; the value returned is attained at the returned witness
//! and is therefore a lower bound of the supremum.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual_norms::{best_of, norm_xp, random_direction, restart_rng, top_singular_pair, DualBall, NormResult, SolverConfig};
use crate::error::{ChaosError, Result};
use crate::process::s_a_surrogate;
use crate::special::integrate_to_inf;
use crate::tails::{Family, TailDistribution};
use crate::tensor::{align_dual, dual_exponent, lq_norm, normalize_lq, CoefficientTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TermName {
    T1,
    T2,
    T3,
    T4r,
    T4c,
    T5,
    T6,
}

impl TermName {
    pub const ALL: [TermName; 7] =
        [TermName::T1, TermName::T2, TermName::T3, TermName::T4r, TermName::T4c, TermName::T5, TermName::T6];
}

impl fmt::Display for TermName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    LowerProp21,
    UpperSubgaussian,
    UpperGeneral,
    TwoSidedExpPower,
    Hilbert,
}

impl BoundKind {
    pub fn terms(self) -> &'static [TermName] {
        use TermName::*;
        match self {
            BoundKind::LowerProp21 => &[T1, T2, T3, T4r, T4c, T5],
            BoundKind::UpperSubgaussian | BoundKind::TwoSidedExpPower | BoundKind::Hilbert => &[T1, T2, T3, T4r, T5],
            BoundKind::UpperGeneral => &[T1, T2, T3, T4r, T4c, T5, T6],
        }
    }
}

/// Per-term solver outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermDiagnostics {
    pub value: f64,
    pub converged: bool,
    pub starts: usize,
}

impl TermDiagnostics {
    fn exact(value: f64) -> Self {
        TermDiagnostics { value, converged: true, starts: 0 }
    }

    fn from_result(r: &NormResult) -> Self {
        TermDiagnostics { value: r.value, converged: r.converged, starts: r.restarts_used }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// Raw term values; `T1` is never premultiplied by `gamma`.
    pub terms: BTreeMap<TermName, f64>,
    pub diagnostics: BTreeMap<TermName, TermDiagnostics>,
    /// Sum of the kind's terms, with `T1` weighted by `gamma` for
    /// [`BoundKind::UpperSubgaussian`].
    pub total: f64,
    pub gamma: Option<f64>,
    pub p: f64,
    pub q: f64,
    pub r_x: f64,
    pub r_y: f64,
    pub shape: (usize, usize, usize),
}

impl BoundReport {
    pub fn converged(&self) -> bool {
        self.diagnostics.values().all(|d| d.converged)
    }
}

// ---------------------------------------------------------------------------
// T1 .. T6
// ---------------------------------------------------------------------------

pub fn term_t1(a: &CoefficientTensor) -> f64 {
    s_a_surrogate(a)
}

fn check_dim(expected: usize, ball: &DualBall) -> Result<()> {
    if ball.dim() != expected {
        return Err(ChaosError::DimensionMismatch { expected, got: ball.dim() });
    }
    Ok(())
}

fn improved(new: f64, old: f64, cfg: &SolverConfig) -> bool {
    new - old > cfg.step_tol * new.abs()
}

// Column l2 norms of M (n2 x m), their l_q norm, and the aligned dual point
// w with <w, M> = ||M||_{q,2}.
fn mixed_align(mat: &DMatrix<f64>, q: f64) -> (f64, DMatrix<f64>) {
    let cols: Vec<f64> = mat.column_iter().map(|c| c.norm()).collect();
    let f = align_dual(&cols, q);
    let mut w = DMatrix::zeros(mat.nrows(), mat.ncols());
    for (k, &ck) in cols.iter().enumerate() {
        if ck > 0.0 {
            let scale = f[k] / ck;
            w.column_mut(k).copy_from(&(mat.column(k) * scale));
        }
    }
    (lq_norm(&cols, q), w)
}

fn row_masses(a: &CoefficientTensor) -> Vec<f64> {
    let (n1, n2, m) = a.shape();
    (0..n1)
        .map(|i| (0..n2).flat_map(|j| (0..m).map(move |k| (j, k))).map(|(j, k)| a.get(i, j, k).powi(2)).sum::<f64>().sqrt())
        .collect()
}

/// `T2`: alternates the closed-form alignment of `w` with a [`norm_xp`] step in `x`.
pub fn term_t2(a: &CoefficientTensor, ball_x: &DualBall, restarts: usize, cfg: &SolverConfig) -> Result<NormResult> {
    let (n1, n2, m) = a.shape();
    check_dim(n1, ball_x)?;
    if a.is_zero() {
        return Ok(NormResult::zero(n1));
    }
    let q = a.q();
    let warm = row_masses(a);
    // starts: row masses, each coordinate axis, then random directions
    best_of(restarts + n1 + 1, |s| {
        let dir = match s {
            0 => warm.clone(),
            s if s <= n1 => {
                let mut e = vec![0.0; n1];
                e[s - 1] = 1.0;
                e
            }
            s => random_direction(&mut restart_rng(cfg, 0x7200 + s as u64), n1),
        };
        let mut x = ball_x.boundary_point(&dir);
        let (mut value, mut w) = mixed_align(&a.contract_i(&x), q);
        let mut converged = false;
        for _ in 0..cfg.max_iter {
            let b: Vec<f64> = (0..n1)
                .map(|i| (0..n2).flat_map(|j| (0..m).map(move |k| (j, k))).map(|(j, k)| a.get(i, j, k) * w[(j, k)]).sum())
                .collect();
            x = norm_xp(&b, ball_x, cfg)?.maximizer;
            let (new, w_new) = mixed_align(&a.contract_i(&x), q);
            w = w_new;
            if !improved(new, value, cfg) {
                value = value.max(new);
                converged = true;
                break;
            }
            value = new;
        }
        Ok(NormResult { value, maximizer: x, converged, restarts_used: 1, dual_value: f64::NAN })
    })
}

/// `T3`: [`term_t2`] on the transposed tensor.
pub fn term_t3(a: &CoefficientTensor, ball_y: &DualBall, restarts: usize, cfg: &SolverConfig) -> Result<NormResult> {
    term_t2(&a.transpose_ij(), ball_y, restarts, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Square root over `j`, dual-ball norm over `i`.
    Rows,
    /// Square root over `i`, dual-ball norm over `j`.
    Columns,
}

fn starting_functionals(m: usize, q: f64, restarts: usize, cfg: &SolverConfig, salt: u64) -> Vec<Vec<f64>> {
    let qd = dual_exponent(q);
    let mut starts: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            let mut e = vec![0.0; m];
            e[k] = 1.0;
            e
        })
        .collect();
    for s in 0..restarts {
        let v = random_direction(&mut restart_rng(cfg, salt + s as u64), m);
        starts.push(normalize_lq(&v, qd));
    }
    starts
}

/// `T4`: alternates `f` (aligned to `c_k = sum_ij x_i u_ij a_ijk`) with the
/// pair `(x, u)`, where `u_i` is the unit direction of row `i` of `f(A)` and
/// `x` the [`norm_xp`] witness for the row norms. The witness is `x`
/// followed by `f`.
pub fn term_t4(
    a: &CoefficientTensor,
    ball: &DualBall,
    side: Side,
    restarts: usize,
    cfg: &SolverConfig,
) -> Result<NormResult> {
    let a = match side {
        Side::Rows => a.clone(),
        Side::Columns => a.transpose_ij(),
    };
    let (n1, n2, m) = a.shape();
    check_dim(n1, ball)?;
    if a.is_zero() {
        return Ok(NormResult::zero(n1 + m));
    }
    let q = a.q();
    let starts = starting_functionals(m, q, restarts, cfg, 0x7400);
    best_of(starts.len(), |s| {
        let mut f = starts[s].clone();
        let mut value = f64::NEG_INFINITY;
        let mut x = vec![0.0; n1];
        let mut converged = false;
        for _ in 0..cfg.max_iter {
            let fm = a.contract_k(&f);
            let norms: Vec<f64> = fm.row_iter().map(|r| r.norm()).collect();
            let step = norm_xp(&norms, ball, cfg)?;
            let new = step.value;
            if !improved(new, value, cfg) {
                value = value.max(new);
                converged = true;
                break;
            }
            value = new;
            x = step.maximizer;
            // c_k = sum_ij x_i (F_ij / |F_i|) a_ijk
            let mut c = vec![0.0; m];
            for i in 0..n1 {
                if norms[i] == 0.0 || x[i] == 0.0 {
                    continue;
                }
                for j in 0..n2 {
                    let w = x[i] * fm[(i, j)] / norms[i];
                    for (k, ck) in c.iter_mut().enumerate() {
                        *ck += w * a.get(i, j, k);
                    }
                }
            }
            f = align_dual(&c, q);
        }
        let mut maximizer = x;
        maximizer.extend_from_slice(&f);
        Ok(NormResult { value, maximizer, converged, restarts_used: 1, dual_value: f64::NAN })
    })
}

fn mat_vec(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(v)).iter().cloned().collect()
}

/// `T5`: three-way alternation over `x`, `y` ([`norm_xp`] steps) and `f`
/// (alignment to `c = sum_ij a_ij x_i y_j`). The witness is `x`, `y`, `f`.
pub fn term_t5(
    a: &CoefficientTensor,
    ball_x: &DualBall,
    ball_y: &DualBall,
    restarts: usize,
    cfg: &SolverConfig,
) -> Result<NormResult> {
    let (n1, n2, m) = a.shape();
    check_dim(n1, ball_x)?;
    check_dim(n2, ball_y)?;
    if a.is_zero() {
        return Ok(NormResult::zero(n1 + n2 + m));
    }
    let q = a.q();
    let starts = starting_functionals(m, q, restarts, cfg, 0x7500);
    best_of(starts.len(), |s| {
        let mut f = starts[s].clone();
        let fm = a.contract_k(&f);
        let mut y = if fm.iter().all(|&v| v == 0.0) {
            ball_y.boundary_point(&random_direction(&mut restart_rng(cfg, 0x7580 + s as u64), n2))
        } else {
            let (_, v, _) = top_singular_pair(&fm);
            ball_y.boundary_point(v.as_slice())
        };
        let mut x = vec![0.0; n1];
        let mut value = f64::NEG_INFINITY;
        let mut converged = false;
        for _ in 0..cfg.max_iter {
            let fm = a.contract_k(&f);
            x = norm_xp(&mat_vec(&fm, &y), ball_x, cfg)?.maximizer;
            y = norm_xp(&mat_vec(&fm.transpose(), &x), ball_y, cfg)?.maximizer;
            let c = a.contract_ij(&x, &y);
            let new = lq_norm(&c, q);
            f = align_dual(&c, q);
            if !improved(new, value, cfg) {
                value = value.max(new);
                converged = true;
                break;
            }
            value = new;
        }
        let mut maximizer = x;
        maximizer.extend_from_slice(&y);
        maximizer.extend_from_slice(&f);
        Ok(NormResult { value, maximizer, converged, restarts_used: 1, dual_value: f64::NAN })
    })
}

/// `sup_{t in B_q'} ||B t||_2` for an `n2 x m` matrix `B`, by alternating
/// `u = B t / ||B t||` with `t` aligned to `B^T u`. Starts at every `e_k`.
pub fn operator_norm_lq_dual_to_l2(b: &DMatrix<f64>, q: f64, cfg: &SolverConfig) -> f64 {
    let m = b.ncols();
    let bt = b.transpose();
    let mut best = 0.0f64;
    for k in 0..m {
        let mut t = vec![0.0; m];
        t[k] = 1.0;
        let mut value = mat_vec(b, &t).iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..cfg.power_max_iter {
            if value == 0.0 {
                break;
            }
            let u: Vec<f64> = mat_vec(b, &t).iter().map(|v| v / value).collect();
            let v = mat_vec(&bt, &u);
            t = align_dual(&v, q);
            let new = mat_vec(b, &t).iter().map(|v| v * v).sum::<f64>().sqrt();
            let done = new - value <= cfg.power_tol * new;
            value = value.max(new);
            if done {
                break;
            }
        }
        best = best.max(value);
    }
    best
}

/// `T6 = p max_i ||(a_ijk)_{jk}||_{l_q' -> l_2}`.
pub fn term_t6(a: &CoefficientTensor, p: f64, cfg: &SolverConfig) -> f64 {
    let (n1, n2, m) = a.shape();
    let q = a.q();
    let worst = (0..n1)
        .map(|i| {
            let slice = DMatrix::from_fn(n2, m, |j, k| a.get(i, j, k));
            operator_norm_lq_dual_to_l2(&slice, q, cfg)
        })
        .fold(0.0, f64::max);
    p * worst
}

// ---------------------------------------------------------------------------
// Subgaussian constant
// ---------------------------------------------------------------------------

/// `ln E exp(tX) / t^2` with `E cosh(tX) = 1 + t int_0^inf sinh(tx) P(|X| > x) dx`.
fn log_mgf_ratio(d: &TailDistribution, t: f64) -> f64 {
    let integral = integrate_to_inf(
        |x| {
            let ln_s = -d.tail(x);
            0.5 * ((t * x + ln_s).exp() - (-t * x + ln_s).exp())
        },
        0.0,
        1e-12,
    );
    (t * integral).ln_1p() / (t * t)
}

/// `sup_t ln E exp(tX) / t^2` over `points` log-spaced `t` in `[1e-2, 20]`,
/// together with the `t -> 0` limit `E X^2 / 2`.
pub fn subgaussian_gamma_on_grid(d: &TailDistribution, points: usize) -> Result<f64> {
    if d.shape() < 2.0 {
        return Err(ChaosError::NotSubgaussian);
    }
    if d.family() == Family::Gaussian {
        return Ok(0.5);
    }
    let (lo, hi) = (1e-2f64.ln(), 20f64.ln());
    let mut gamma = d.raw_moment(2) / 2.0;
    for s in 0..points {
        let t = (lo + (hi - lo) * s as f64 / (points - 1).max(1) as f64).exp();
        let v = log_mgf_ratio(d, t);
        if !v.is_finite() {
            return Err(ChaosError::NotSubgaussian);
        }
        gamma = gamma.max(v);
    }
    Ok(gamma)
}

/// Subgaussian constant `gamma` of a normalized law, or
/// [`ChaosError::NotSubgaussian`] when the shape is below 2.
pub fn subgaussian_gamma(d: &TailDistribution) -> Result<f64> {
    subgaussian_gamma_on_grid(d, 400)
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Evaluates the requested terms for the balls of level `p` built from `dist_x`
/// and `dist_y`.
pub fn evaluate_terms(
    a: &CoefficientTensor,
    names: &[TermName],
    p: f64,
    dist_x: &TailDistribution,
    dist_y: &TailDistribution,
    restarts: usize,
    cfg: &SolverConfig,
) -> Result<BTreeMap<TermName, TermDiagnostics>> {
    let (n1, n2, _) = a.shape();
    let bx = DualBall::uniform(dist_x, n1, p)?;
    let by = DualBall::uniform(dist_y, n2, p)?;
    let mut out = BTreeMap::new();
    for &name in names {
        let d = match name {
            TermName::T1 => TermDiagnostics::exact(term_t1(a)),
            TermName::T2 => TermDiagnostics::from_result(&term_t2(a, &bx, restarts, cfg)?),
            TermName::T3 => TermDiagnostics::from_result(&term_t3(a, &by, restarts, cfg)?),
            TermName::T4r => TermDiagnostics::from_result(&term_t4(a, &bx, Side::Rows, restarts, cfg)?),
            TermName::T4c => TermDiagnostics::from_result(&term_t4(a, &by, Side::Columns, restarts, cfg)?),
            TermName::T5 => TermDiagnostics::from_result(&term_t5(a, &bx, &by, restarts, cfg)?),
            TermName::T6 => TermDiagnostics::exact(term_t6(a, p, cfg)),
        };
        out.insert(name, d);
    }
    Ok(out)
}

/// Builds a report of `kind` from already evaluated terms (which may include
/// more than the kind uses).
pub fn report_from_terms(
    a: &CoefficientTensor,
    kind: BoundKind,
    p: f64,
    dist_x: &TailDistribution,
    dist_y: &TailDistribution,
    evaluated: &BTreeMap<TermName, TermDiagnostics>,
) -> Result<BoundReport> {
    if kind == BoundKind::Hilbert && a.q() != 2.0 {
        return Err(ChaosError::Config(format!("hilbert bound needs q = 2, got q = {}", a.q())));
    }
    let gamma = match kind {
        BoundKind::UpperSubgaussian => Some(subgaussian_gamma(dist_y).map_err(|_| {
            ChaosError::Config(format!("subgaussian bound needs a subgaussian Y law, got {} r = {}", dist_y.family(), dist_y.shape()))
        })?),
        _ => None,
    };
    let mut terms = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    let mut total = 0.0;
    for &name in kind.terms() {
        let d = evaluated
            .get(&name)
            .ok_or_else(|| ChaosError::Config(format!("term {name} was not evaluated")))?;
        let weight = if name == TermName::T1 { gamma.unwrap_or(1.0) } else { 1.0 };
        total += weight * d.value;
        terms.insert(name, d.value);
        diagnostics.insert(name, d.clone());
    }
    Ok(BoundReport {
        kind,
        terms,
        diagnostics,
        total,
        gamma,
        p,
        q: a.q(),
        r_x: dist_x.shape(),
        r_y: dist_y.shape(),
        shape: a.shape(),
    })
}

pub fn assemble_bound(
    a: &CoefficientTensor,
    kind: BoundKind,
    p: f64,
    dist_x: &TailDistribution,
    dist_y: &TailDistribution,
    restarts: usize,
    cfg: &SolverConfig,
) -> Result<BoundReport> {
    if kind == BoundKind::Hilbert && a.q() != 2.0 {
        return Err(ChaosError::Config(format!("hilbert bound needs q = 2, got q = {}", a.q())));
    }
    let evaluated = evaluate_terms(a, kind.terms(), p, dist_x, dist_y, restarts, cfg)?;
    report_from_terms(a, kind, p, dist_x, dist_y, &evaluated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual_norms::{brute_norm_xp, norm_xyp};

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn w1() -> TailDistribution {
        TailDistribution::weibull(1.0).unwrap()
    }

    fn scalar(q: f64) -> CoefficientTensor {
        CoefficientTensor::new(1, 1, 1, q, vec![1.0]).unwrap()
    }

    #[test]
    fn t1_examples() {
        assert_eq!(term_t1(&CoefficientTensor::zeros(2, 2, 2, 2.0).unwrap()), 0.0);
        assert_eq!(term_t1(&scalar(2.0)), 1.0);
        let a = CoefficientTensor::new(1, 1, 2, 2.0, vec![3.0, 4.0]).unwrap();
        assert!((term_t1(&a) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn t2_t3_examples() {
        let g = TailDistribution::gaussian();
        let b = DualBall::uniform(&g, 1, 4.0).unwrap();
        assert!((term_t2(&scalar(2.0), &b, 4, &cfg()).unwrap().value - 2.0).abs() < 1e-9);
        assert!((term_t3(&scalar(2.0), &b, 4, &cfg()).unwrap().value - 2.0).abs() < 1e-9);
        let z = CoefficientTensor::zeros(2, 3, 2, 1.5).unwrap();
        assert_eq!(term_t2(&z, &DualBall::uniform(&g, 2, 2.0).unwrap(), 4, &cfg()).unwrap().value, 0.0);
        assert_eq!(term_t3(&z, &DualBall::uniform(&g, 3, 2.0).unwrap(), 4, &cfg()).unwrap().value, 0.0);

        let bx = DualBall::uniform(&w1(), 2, 2.0).unwrap();
        let oracle = brute_norm_xp(&[1.0, 1.0], &bx, 1e-3).unwrap();
        for q in [1.0, 2.0, 3.5] {
            let a = CoefficientTensor::new(2, 1, 1, q, vec![1.0, 1.0]).unwrap();
            let v = term_t2(&a, &bx, 4, &cfg()).unwrap().value;
            assert!((v - 2.25).abs() < 1e-9, "q={q} {v}");
            assert!((v - oracle).abs() < 1e-3 * oracle);
            let v = term_t3(&a.transpose_ij(), &bx, 4, &cfg()).unwrap().value;
            assert!((v - 2.25).abs() < 1e-9);
        }
    }

    #[test]
    fn t4_examples() {
        let b = DualBall::uniform(&w1(), 1, 4.0).unwrap();
        let t = term_t4(&scalar(2.0), &b, Side::Rows, 4, &cfg()).unwrap();
        assert!((t.value - 4.0).abs() < 1e-9);
        let z = CoefficientTensor::zeros(2, 2, 3, 2.0).unwrap();
        let b2 = DualBall::uniform(&w1(), 2, 4.0).unwrap();
        assert_eq!(term_t4(&z, &b2, Side::Columns, 4, &cfg()).unwrap().value, 0.0);

        // Gaussian ball: sqrt(p) times the l2 norm of the row norms
        let g = TailDistribution::gaussian();
        let a = CoefficientTensor::new(3, 3, 1, 2.0, vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, -2.0]).unwrap();
        let p: f64 = 3.0;
        let want = p.sqrt() * 3.0;
        for side in [Side::Rows, Side::Columns] {
            let v = term_t4(&a, &DualBall::uniform(&g, 3, p).unwrap(), side, 4, &cfg()).unwrap().value;
            assert!((v - want).abs() < 1e-9, "{side:?} {v}");
        }
    }

    #[test]
    fn t5_examples() {
        let b = DualBall::uniform(&w1(), 1, 4.0).unwrap();
        let t = term_t5(&scalar(1.0), &b, &b, 4, &cfg()).unwrap();
        assert!((t.value - 16.0).abs() < 1e-8);
        let z = CoefficientTensor::zeros(2, 2, 1, 2.0).unwrap();
        let b2 = DualBall::uniform(&w1(), 2, 4.0).unwrap();
        assert_eq!(term_t5(&z, &b2, &b2, 4, &cfg()).unwrap().value, 0.0);
        let g = TailDistribution::gaussian();
        let bg = DualBall::uniform(&g, 2, 3.0).unwrap();
        let id = CoefficientTensor::new(2, 2, 1, 2.0, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((term_t5(&id, &bg, &bg, 4, &cfg()).unwrap().value - 3.0).abs() < 1e-8);
    }

    #[test]
    fn t5_single_slice_matches_bilinear_norm() {
        let a2 = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 2.0, 0.3, 1.1, -0.7]);
        let a = CoefficientTensor::from_matrix(&a2, 1.7).unwrap();
        let bx = DualBall::uniform(&w1(), 2, 2.5).unwrap();
        let by = DualBall::uniform(&TailDistribution::exp_power(1.5).unwrap(), 3, 2.5).unwrap();
        let t5 = term_t5(&a, &bx, &by, 8, &cfg()).unwrap().value;
        let direct = norm_xyp(&a2, &bx, &by, 8, &cfg()).unwrap().value;
        assert!((t5 - direct).abs() < 1e-8 * direct, "{t5} vs {direct}");
    }

    #[test]
    fn t5_gaussian_single_slice_is_p_times_sigma() {
        let a2 = DMatrix::from_row_slice(3, 3, &[0.2, 1.0, -0.4, 0.9, 0.1, 0.3, -1.2, 0.5, 0.7]);
        let a = CoefficientTensor::from_matrix(&a2, 2.0).unwrap();
        let g = TailDistribution::gaussian();
        let p = 5.0;
        let b = DualBall::uniform(&g, 3, p).unwrap();
        let sigma = top_singular_pair(&a2).2;
        let t5 = term_t5(&a, &b, &b, 4, &cfg()).unwrap().value;
        assert!((t5 - p * sigma).abs() < 1e-8 * p * sigma);
        // the transposed single-row tensor has T6 = p * sigma
        let row = CoefficientTensor::from_fn(1, 3, 3, 2.0, |_, j, k| a2[(j, k)]).unwrap();
        assert!((term_t6(&row, p, &cfg()) - t5).abs() < 1e-8 * t5);
    }

    #[test]
    fn t6_examples() {
        let a = CoefficientTensor::from_fn(1, 2, 2, 2.0, |_, j, k| if j == k { (j + 1) as f64 } else { 0.0 }).unwrap();
        assert!((term_t6(&a, 3.0, &cfg()) - 6.0).abs() < 1e-12);
        assert_eq!(term_t6(&CoefficientTensor::zeros(2, 2, 2, 2.0).unwrap(), 3.0, &cfg()), 0.0);
        let s = DMatrix::from_row_slice(3, 3, &[0.3, -1.2, 0.8, 1.5, 0.2, -0.6, -0.4, 0.9, 1.1]);
        let a = CoefficientTensor::from_fn(1, 3, 3, 2.0, |_, j, k| s[(j, k)]).unwrap();
        let sigma = top_singular_pair(&s).2;
        assert!((term_t6(&a, 2.0, &cfg()) - 2.0 * sigma).abs() < 1e-8);
    }

    #[test]
    fn t6_q_one_is_max_over_cube_vertices() {
        let s = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.3, 1.0, -1.5]);
        let mut best = 0.0f64;
        for mask in 0..8u32 {
            let t: Vec<f64> = (0..3).map(|k| if mask >> k & 1 == 1 { 1.0 } else { -1.0 }).collect();
            best = best.max(mat_vec(&s, &t).iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        let v = operator_norm_lq_dual_to_l2(&s, 1.0, &cfg());
        assert!((v - best).abs() < 1e-12, "{v} {best}");
    }

    #[test]
    fn subgaussian_examples() {
        assert_eq!(subgaussian_gamma(&TailDistribution::gaussian()).unwrap(), 0.5);
        assert_eq!(subgaussian_gamma(&w1()), Err(ChaosError::NotSubgaussian));
        let w2 = TailDistribution::weibull(2.0).unwrap();
        let g = subgaussian_gamma_on_grid(&w2, 400).unwrap();
        let g2 = subgaussian_gamma_on_grid(&w2, 800).unwrap();
        assert!(g.is_finite() && g > 0.0);
        assert!((g - g2).abs() < 1e-4, "{g} {g2}");
    }

    #[test]
    fn log_mgf_of_symmetric_exponential() {
        // E e^{tX} = 1 / (1 - t^2) for |t| < 1
        for t in [0.05, 0.3, 0.7] {
            let want = -(1.0 - t * t as f64).ln() / (t * t);
            assert!((log_mgf_ratio(&w1(), t) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn assemble_examples() {
        let z = CoefficientTensor::zeros(2, 2, 2, 2.0).unwrap();
        let r = assemble_bound(&z, BoundKind::LowerProp21, 2.0, &w1(), &w1(), 4, &cfg()).unwrap();
        assert!(r.terms.values().all(|&v| v == 0.0));
        assert_eq!(r.total, 0.0);

        let r = assemble_bound(&scalar(2.0), BoundKind::TwoSidedExpPower, 4.0, &w1(), &w1(), 4, &cfg()).unwrap();
        let want = [(TermName::T1, 1.0), (TermName::T2, 4.0), (TermName::T3, 4.0), (TermName::T4r, 4.0), (TermName::T5, 16.0)];
        assert_eq!(r.terms.len(), 5);
        for (name, v) in want {
            assert!((r.terms[&name] - v).abs() < 1e-8, "{name}: {}", r.terms[&name]);
        }
        assert!((r.total - 29.0).abs() < 1e-7);

        assert!(matches!(
            assemble_bound(&scalar(3.0), BoundKind::Hilbert, 4.0, &w1(), &w1(), 4, &cfg()),
            Err(ChaosError::Config(_))
        ));
        assert!(matches!(
            assemble_bound(&scalar(2.0), BoundKind::UpperSubgaussian, 4.0, &w1(), &w1(), 4, &cfg()),
            Err(ChaosError::Config(_))
        ));
        let g = TailDistribution::gaussian();
        let r = assemble_bound(&scalar(2.0), BoundKind::UpperSubgaussian, 4.0, &w1(), &g, 4, &cfg()).unwrap();
        assert_eq!(r.gamma, Some(0.5));
        let plain: f64 = r.terms.values().sum();
        assert!((r.total - (plain - 0.5 * r.terms[&TermName::T1])).abs() < 1e-12);
    }

    #[test]
    fn upper_general_dominates_lower() {
        let a = CoefficientTensor::from_fn(3, 3, 2, 1.5, |i, j, k| ((i * 5 + j * 3 + k * 7) % 9) as f64 / 4.0 - 1.0).unwrap();
        let d = TailDistribution::exp_power(1.3).unwrap();
        let all = evaluate_terms(&a, &TermName::ALL, 3.0, &d, &d, 6, &cfg()).unwrap();
        let lo = report_from_terms(&a, BoundKind::LowerProp21, 3.0, &d, &d, &all).unwrap();
        let up = report_from_terms(&a, BoundKind::UpperGeneral, 3.0, &d, &d, &all).unwrap();
        assert!(lo.total <= up.total);
        assert!(up.terms.values().all(|&v| v >= 0.0));
    }
}
