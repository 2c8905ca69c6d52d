//! WebAssembly bindings for the static page in `www/`.
//!
//! Every export returns a flat `Float64Array`; the layouts are listed on each
//! function. The plain-Rust versions in [`ops`] carry the logic and are what
//! the native tests exercise.

use wasm_bindgen::prelude::*;

pub mod ops {
    use chaos_core::dual_norms::{lagrangian_bound, norm_xp};
    use chaos_core::monte_carlo::gk_moments;
    use chaos_core::{ChaosError, DualBall, Family, McConfig, Result, SolverConfig, TailDistribution};

    /// Largest sample count accepted from the page.
    pub const MAX_SAMPLES: usize = 2_000_000;
    const BATCHES: usize = 16;

    pub fn distribution(family: &str, r: f64) -> Result<TailDistribution> {
        let family = match family {
            "weibull" => Family::WeibullTail,
            "exp-power" => Family::ExpPowerDensity,
            "gaussian" => Family::Gaussian,
            other => return Err(ChaosError::Config(format!("unknown family '{other}'"))),
        };
        TailDistribution::new(family, r)
    }

    /// `points` boundary points of the planar dual ball, as `x0, y0, x1, y1, ...`.
    pub fn ball_outline(family: &str, r: f64, p: f64, points: usize) -> Result<Vec<f64>> {
        let ball = DualBall::uniform(&distribution(family, r)?, 2, p)?;
        let points = points.clamp(8, 4096);
        let mut out = Vec::with_capacity(2 * points);
        for k in 0..points {
            let theta = std::f64::consts::TAU * k as f64 / points as f64;
            out.extend(ball.boundary_point(&[theta.cos(), theta.sin()]));
        }
        Ok(out)
    }

    /// `[value, x0, x1, lagrangian_bound]` for the support function at `(a0, a1)`.
    pub fn dual_norm(family: &str, r: f64, p: f64, a0: f64, a1: f64) -> Result<Vec<f64>> {
        let ball = DualBall::uniform(&distribution(family, r)?, 2, p)?;
        let a = [a0, a1];
        let res = norm_xp(&a, &ball, &SolverConfig::default())?;
        Ok(vec![res.value, res.maximizer[0], res.maximizer[1], lagrangian_bound(&a, &ball)?])
    }

    /// `t, N(t), N^(t)` triples on `points` equally spaced `t` in `[0, t_max]`.
    pub fn tail_curves(family: &str, r: f64, t_max: f64, points: usize) -> Result<Vec<f64>> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(ChaosError::Config("t_max must be positive".into()));
        }
        let d = distribution(family, r)?;
        let points = points.clamp(2, 4096);
        let mut out = Vec::with_capacity(3 * points);
        for k in 0..points {
            let t = t_max * k as f64 / (points - 1) as f64;
            out.extend([t, d.tail_n(t)?, d.hat_n(t)]);
        }
        Ok(out)
    }

    /// For each level `p`: `p, ||sum a_i X_i||_p, stderr, ||a||_{X_p}`.
    pub fn moment_curve(family: &str, r: f64, coeffs: &[f64], ps: &[f64], samples: usize, seed: u64) -> Result<Vec<f64>> {
        if coeffs.is_empty() {
            return Err(ChaosError::Config("need at least one coefficient".into()));
        }
        let d = distribution(family, r)?;
        let samples = samples.clamp(BATCHES, MAX_SAMPLES) / BATCHES * BATCHES;
        let mc = gk_moments(coeffs, &d, ps, &McConfig::new(samples, BATCHES, seed, false)?)?;
        let cfg = SolverConfig::default();
        let mut out = Vec::with_capacity(4 * ps.len());
        for (&p, est) in ps.iter().zip(&mc) {
            let norm = norm_xp(coeffs, &DualBall::uniform(&d, coeffs.len(), p)?, &cfg)?.value;
            out.extend([p, est.value, est.stderr, norm]);
        }
        Ok(out)
    }
}

#[wasm_bindgen(js_name = ballOutline)]
pub fn ball_outline(family: &str, r: f64, p: f64, points: usize) -> Result<Vec<f64>, JsError> {
    Ok(ops::ball_outline(family, r, p, points)?)
}

#[wasm_bindgen(js_name = dualNorm)]
pub fn dual_norm(family: &str, r: f64, p: f64, a0: f64, a1: f64) -> Result<Vec<f64>, JsError> {
    Ok(ops::dual_norm(family, r, p, a0, a1)?)
}

#[wasm_bindgen(js_name = tailCurves)]
pub fn tail_curves(family: &str, r: f64, t_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    Ok(ops::tail_curves(family, r, t_max, points)?)
}

#[wasm_bindgen(js_name = momentCurve)]
pub fn moment_curve(
    family: &str,
    r: f64,
    coeffs: Vec<f64>,
    ps: Vec<f64>,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    Ok(ops::moment_curve(family, r, &coeffs, &ps, samples, seed)?)
}
