//! Batch experiments: configuration, ensembles, bound-versus-Monte-Carlo
//! rows and their CSV / JSON serialization.
//!
//! A configuration is a JSON object; every section and key is optional.
//!
//! ```json
//! {
//!   "ensemble": {"kind": "dense-gaussian", "density": 0.5, "instances": 1},
//!   "dims":     {"n1": 3, "n2": 3, "m": 2},
//!   "grids":    {"q": [2], "r": [1], "p": [2, 4, 8]},
//!   "dist":     {"x": "exp-power", "y": "exp-power", "r": 1.5},
//!   "bounds":   {"lower": "lower-prop21", "upper": "upper-general"},
//!   "mc":       {"samples": 200000, "batches": 32, "unit_variance": false},
//!   "seed": 0,
//!   "restarts": 16,
//!   "output":   {"path": "rows.csv", "format": "csv"},
//!   "gk":       {"n": 10, "vectors": 20}
//! }
//! ```
//!
//! `dist.r`, when present, replaces the `r` grid. Ensemble kinds are
//! `dense-gaussian`, `sparse`, `diagonal`, `rank1`, `hilbert` and `zero`;
//! `hilbert` pins the `q` grid to `[2]`.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::{evaluate_terms, report_from_terms, BoundKind, TermName};
use crate::dual_norms::{norm_xp, DualBall, SolverConfig};
use crate::error::{ChaosError, Result};
use crate::monte_carlo::{estimate_moments_decoupled, gk_moments, McConfig, McEstimate};
use crate::tails::{Family, TailDistribution};
use crate::tensor::CoefficientTensor;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    DenseGaussian,
    Sparse,
    Diagonal,
    Rank1,
    Hilbert,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub kind: EnsembleKind,
    /// Fraction of entries kept by the sparse ensemble.
    pub density: f64,
    pub instances: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { kind: EnsembleKind::DenseGaussian, density: 0.5, instances: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dims {
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { n1: 3, n2: 3, m: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grids {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids { q: vec![2.0], r: vec![1.0], p: vec![2.0, 4.0, 8.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistConfig {
    pub x: Family,
    pub y: Family,
    pub r: Option<f64>,
}

impl Default for DistConfig {
    fn default() -> Self {
        DistConfig { x: Family::ExpPowerDensity, y: Family::ExpPowerDensity, r: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsConfig {
    pub lower: BoundKind,
    pub upper: BoundKind,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig { lower: BoundKind::LowerProp21, upper: BoundKind::UpperGeneral }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub batches: usize,
    pub unit_variance: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig { samples: 200_000, batches: 32, unit_variance: false }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = ChaosError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(ChaosError::Config(format!("unknown format {other:?} (csv or json)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GkConfig {
    pub n: usize,
    pub vectors: usize,
}

impl Default for GkConfig {
    fn default() -> Self {
        GkConfig { n: 10, vectors: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleConfig,
    pub dims: Dims,
    pub grids: Grids,
    pub dist: DistConfig,
    pub bounds: BoundsConfig,
    pub mc: MonteCarloConfig,
    pub seed: u64,
    pub restarts: usize,
    pub output: OutputConfig,
    pub gk: GkConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ensemble: EnsembleConfig::default(),
            dims: Dims::default(),
            grids: Grids::default(),
            dist: DistConfig::default(),
            bounds: BoundsConfig::default(),
            mc: MonteCarloConfig::default(),
            seed: 0,
            restarts: 16,
            output: OutputConfig::default(),
            gk: GkConfig::default(),
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("ensemble", &["kind", "density", "instances"]),
    ("dims", &["n1", "n2", "m"]),
    ("grids", &["q", "r", "p"]),
    ("dist", &["x", "y", "r"]),
    ("bounds", &["lower", "upper"]),
    ("mc", &["samples", "batches", "unit_variance"]),
    ("output", &["path", "format"]),
    ("gk", &["n", "vectors"]),
];
const SCALARS: &[&str] = &["seed", "restarts"];

fn unknown_keys(v: &Value) -> Vec<String> {
    let mut out = Vec::new();
    let Some(top) = v.as_object() else { return out };
    for (key, val) in top {
        if SCALARS.contains(&key.as_str()) {
            continue;
        }
        match SECTIONS.iter().find(|(name, _)| name == key) {
            None => out.push(key.clone()),
            Some((_, fields)) => {
                if let Some(obj) = val.as_object() {
                    out.extend(obj.keys().filter(|k| !fields.contains(&k.as_str())).map(|k| format!("{key}.{k}")));
                }
            }
        }
    }
    out
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(ChaosError::Config(msg()))
    }
}

fn check_grid(name: &str, values: &[f64]) -> Result<()> {
    check(!values.is_empty(), || format!("grids.{name} is empty"))?;
    for &v in values {
        check(v.is_finite() && v >= 1.0, || format!("grids.{name} contains {v} (need >= 1)"))?;
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses and validates a JSON document; blank input gives the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = if text.trim().is_empty() {
            Value::Object(Default::default())
        } else {
            serde_json::from_str(text).map_err(|e| ChaosError::Config(format!("malformed config: {e}")))?
        };
        check(value.is_object(), || "config must be a JSON object".into())?;
        let unknown = unknown_keys(&value);
        check(unknown.is_empty(), || format!("unknown keys: {}", unknown.join(", ")))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| ChaosError::Config(format!("invalid config: {e}")))?;
        cfg.normalize()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::parse(&text)
    }

    fn normalize(&mut self) -> Result<()> {
        if let Some(r) = self.dist.r {
            check(r.is_finite() && r >= 1.0, || format!("dist.r = {r} violates r >= 1"))?;
            self.grids.r = vec![r];
        }
        if self.ensemble.kind == EnsembleKind::Hilbert {
            self.grids.q = vec![2.0];
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        check(d.n1 >= 1 && d.n2 >= 1 && d.m >= 1, || format!("dims ({}, {}, {}) must be >= 1", d.n1, d.n2, d.m))?;
        let e = &self.ensemble;
        check(e.density > 0.0 && e.density <= 1.0, || format!("ensemble.density = {} outside (0, 1]", e.density))?;
        check(e.instances >= 1, || "ensemble.instances must be >= 1".into())?;
        check_grid("q", &self.grids.q)?;
        check_grid("r", &self.grids.r)?;
        check_grid("p", &self.grids.p)?;
        self.mc_config(self.seed)?;
        check(self.gk.n >= 1 && self.gk.vectors >= 1, || "gk.n and gk.vectors must be >= 1".into())?;
        Ok(())
    }

    /// Monte Carlo settings for one instance seed.
    pub fn mc_config(&self, seed: u64) -> Result<McConfig> {
        McConfig::new(self.mc.samples, self.mc.batches, seed, self.mc.unit_variance)
    }

    pub fn distributions(&self, r: f64) -> Result<(TailDistribution, TailDistribution)> {
        Ok((TailDistribution::new(self.dist.x, r)?, TailDistribution::new(self.dist.y, r)?))
    }

    pub fn ensemble_label(&self) -> String {
        match self.ensemble.kind {
            EnsembleKind::Sparse => format!("sparse({})", self.ensemble.density),
            kind => serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of instance `index`; the tensor and its Monte Carlo draws derive from it.
pub fn instance_seed(master: u64, index: usize) -> u64 {
    splitmix(master ^ splitmix(index as u64))
}

fn unit_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

/// Tensor of the configured ensemble for an explicit instance seed.
pub fn tensor_from_seed(cfg: &ExperimentConfig, seed: u64, q: f64) -> Result<CoefficientTensor> {
    let Dims { n1, n2, m } = cfg.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // disjoint from the Monte Carlo batch streams
    rng.set_stream(u64::MAX);
    let q = if cfg.ensemble.kind == EnsembleKind::Hilbert { 2.0 } else { q };
    match cfg.ensemble.kind {
        EnsembleKind::DenseGaussian | EnsembleKind::Sparse | EnsembleKind::Hilbert => {
            let keep = if cfg.ensemble.kind == EnsembleKind::Sparse { cfg.ensemble.density } else { 1.0 };
            CoefficientTensor::from_fn(n1, n2, m, q, |_, _, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                let u: f64 = rng.random();
                if u < keep {
                    g
                } else {
                    0.0
                }
            })
        }
        EnsembleKind::Diagonal => CoefficientTensor::from_fn(n1, n2, m, q, |i, j, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            if i == j {
                g
            } else {
                0.0
            }
        }),
        EnsembleKind::Rank1 => {
            let u = unit_gaussian(&mut rng, n1);
            let v = unit_gaussian(&mut rng, n2);
            let w = unit_gaussian(&mut rng, m);
            CoefficientTensor::from_fn(n1, n2, m, q, |i, j, k| u[i] * v[j] * w[k])
        }
        EnsembleKind::Zero => CoefficientTensor::zeros(n1, n2, m, q),
    }
}

/// Tensor number `index` of the configured ensemble, with the first `q` of the grid.
pub fn generate_ensemble(cfg: &ExperimentConfig, index: usize) -> Result<CoefficientTensor> {
    let q = cfg.grids.q.first().copied().unwrap_or(2.0);
    tensor_from_seed(cfg, instance_seed(cfg.seed, index), q)
}

// ---------------------------------------------------------------------------
// Rows
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Deterministic terms only.
    Bound,
    /// Monte Carlo only.
    Simulate,
    /// Both, with ratios.
    Verify,
}

/// Flags starting with this prefix are informational and do not mark a row
/// as failed.
pub const WARNING_PREFIX: &str = "warn-";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub ensemble: String,
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub q: f64,
    pub r: f64,
    pub p: f64,
    pub seed: u64,
    pub mc_lhs: Option<f64>,
    pub mc_stderr: Option<f64>,
    #[serde(rename = "T1")]
    pub t1: Option<f64>,
    #[serde(rename = "T2")]
    pub t2: Option<f64>,
    #[serde(rename = "T3")]
    pub t3: Option<f64>,
    #[serde(rename = "T4r")]
    pub t4r: Option<f64>,
    #[serde(rename = "T4c")]
    pub t4c: Option<f64>,
    #[serde(rename = "T5")]
    pub t5: Option<f64>,
    #[serde(rename = "T6")]
    pub t6: Option<f64>,
    pub lower_total: Option<f64>,
    pub upper_total: Option<f64>,
    pub ratio_lower: Option<f64>,
    pub ratio_upper: Option<f64>,
    pub flags: Vec<String>,
}

impl ComparisonRow {
    pub fn is_flagged(&self) -> bool {
        self.flags.iter().any(|f| !f.starts_with(WARNING_PREFIX))
    }

    pub fn term(&self, name: TermName) -> Option<f64> {
        match name {
            TermName::T1 => self.t1,
            TermName::T2 => self.t2,
            TermName::T3 => self.t3,
            TermName::T4r => self.t4r,
            TermName::T4c => self.t4c,
            TermName::T5 => self.t5,
            TermName::T6 => self.t6,
        }
    }

    fn set_term(&mut self, name: TermName, v: f64) {
        let slot = match name {
            TermName::T1 => &mut self.t1,
            TermName::T2 => &mut self.t2,
            TermName::T3 => &mut self.t3,
            TermName::T4r => &mut self.t4r,
            TermName::T4c => &mut self.t4c,
            TermName::T5 => &mut self.t5,
            TermName::T6 => &mut self.t6,
        };
        *slot = Some(v);
    }
}

struct Job {
    q: f64,
    r: f64,
    index: usize,
}

fn flag_for(err: &ChaosError) -> &'static str {
    match err {
        ChaosError::Config(_) | ChaosError::NotSubgaussian => "precondition",
        _ => "solver-error",
    }
}

fn run_job(cfg: &ExperimentConfig, job: &Job, mode: RunMode) -> Result<Vec<ComparisonRow>> {
    let seed = instance_seed(cfg.seed, job.index);
    let a = tensor_from_seed(cfg, seed, job.q)?;
    let (dx, dy) = cfg.distributions(job.r)?;
    let (n1, n2, m) = a.shape();
    let ps = &cfg.grids.p;

    let mut shared_flags = Vec::new();
    let mc: Vec<Option<McEstimate>> = if mode == RunMode::Bound {
        vec![None; ps.len()]
    } else {
        match estimate_moments_decoupled(&a, &dx, &dy, ps, &cfg.mc_config(seed)?) {
            Ok(est) => est.into_iter().map(Some).collect(),
            Err(e) => {
                shared_flags.push(format!("mc-{}", flag_for(&e)));
                vec![None; ps.len()]
            }
        }
    };

    let solver = SolverConfig::default();
    let mut rows = Vec::with_capacity(ps.len());
    for (&p, est) in ps.iter().zip(mc) {
        let mut row = ComparisonRow {
            ensemble: cfg.ensemble_label(),
            n1,
            n2,
            m,
            q: a.q(),
            r: job.r,
            p,
            seed,
            mc_lhs: est.as_ref().map(|e| e.value),
            mc_stderr: est.as_ref().map(|e| e.stderr),
            t1: None,
            t2: None,
            t3: None,
            t4r: None,
            t4c: None,
            t5: None,
            t6: None,
            lower_total: None,
            upper_total: None,
            ratio_lower: None,
            ratio_upper: None,
            flags: shared_flags.clone(),
        };
        if est.as_ref().is_some_and(|e| !e.reliable) {
            row.flags.push(format!("{WARNING_PREFIX}unreliable-p"));
        }
        if mode != RunMode::Simulate {
            match evaluate_terms(&a, &TermName::ALL, p, &dx, &dy, cfg.restarts, &solver) {
                Ok(terms) => {
                    for (&name, d) in &terms {
                        row.set_term(name, d.value);
                        if !d.converged {
                            row.flags.push(format!("nonconverged-{name}"));
                        }
                    }
                    match report_from_terms(&a, cfg.bounds.lower, p, &dx, &dy, &terms) {
                        Ok(rep) => row.lower_total = Some(rep.total),
                        Err(e) => row.flags.push(format!("lower-{}", flag_for(&e))),
                    }
                    match report_from_terms(&a, cfg.bounds.upper, p, &dx, &dy, &terms) {
                        Ok(rep) => row.upper_total = Some(rep.total),
                        Err(e) => row.flags.push(format!("upper-{}", flag_for(&e))),
                    }
                }
                Err(e) => row.flags.push(format!("terms-{}", flag_for(&e))),
            }
        }
        if mode == RunMode::Verify {
            let lhs = row.mc_lhs.filter(|&v| v > 0.0);
            row.ratio_lower = lhs.zip(row.lower_total).map(|(l, lo)| lo / l);
            row.ratio_upper = lhs.zip(row.upper_total.filter(|&u| u > 0.0)).map(|(l, up)| l / up);
            if row.ratio_lower.is_none() || row.ratio_upper.is_none() {
                row.flags.push("ratio-undefined".into());
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn map_ordered<T: Sync, U: Send, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Rows in grid order `q`, `r`, instance, `p`.
pub fn run_rows(cfg: &ExperimentConfig, mode: RunMode) -> Result<Vec<ComparisonRow>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &q in &cfg.grids.q {
        for &r in &cfg.grids.r {
            for index in 0..cfg.ensemble.instances {
                jobs.push(Job { q, r, index });
            }
        }
    }
    let results = map_ordered(&jobs, |job| run_job(cfg, job, mode));
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Full bound-versus-Monte-Carlo comparison.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    run_rows(cfg, RunMode::Verify)
}

// ---------------------------------------------------------------------------
// One-index moments
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GkRow {
    pub index: usize,
    pub n: usize,
    pub family: Family,
    pub r: f64,
    pub p: f64,
    pub seed: u64,
    pub mc: f64,
    pub mc_stderr: f64,
    pub norm_xp: f64,
    pub ratio: f64,
    pub flags: Vec<String>,
}

impl GkRow {
    pub fn is_flagged(&self) -> bool {
        self.flags.iter().any(|f| !f.starts_with(WARNING_PREFIX))
    }
}

/// `(E |sum_i a_i X_i|^p)^{1/p}` against `||a||_{X,p}` for Gaussian vectors `a`.
pub fn run_gk(cfg: &ExperimentConfig) -> Result<Vec<GkRow>> {
    cfg.validate()?;
    let n = cfg.gk.n;
    let mut jobs = Vec::new();
    for &r in &cfg.grids.r {
        for index in 0..cfg.gk.vectors {
            jobs.push((r, index));
        }
    }
    let solver = SolverConfig::default();
    let results = map_ordered(&jobs, |&(r, index)| -> Result<Vec<GkRow>> {
        let seed = instance_seed(cfg.seed, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let dist = TailDistribution::new(cfg.dist.x, r)?;
        let est = gk_moments(&a, &dist, &cfg.grids.p, &cfg.mc_config(seed)?)?;
        cfg.grids
            .p
            .iter()
            .zip(est)
            .map(|(&p, e)| {
                let norm = norm_xp(&a, &DualBall::uniform(&dist, n, p)?, &solver)?.value;
                let mut flags = Vec::new();
                if !e.reliable {
                    flags.push(format!("{WARNING_PREFIX}unreliable-p"));
                }
                Ok(GkRow {
                    index,
                    n,
                    family: cfg.dist.x,
                    r: dist.shape(),
                    p,
                    seed,
                    mc: e.value,
                    mc_stderr: e.stderr,
                    norm_xp: norm,
                    ratio: e.value / norm,
                    flags,
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

pub const CSV_COLUMNS: [&str; 22] = [
    "ensemble",
    "n1",
    "n2",
    "m",
    "q",
    "r",
    "p",
    "seed",
    "mc_lhs",
    "mc_stderr",
    "T1",
    "T2",
    "T3",
    "T4r",
    "T4c",
    "T5",
    "T6",
    "lower_total",
    "upper_total",
    "ratio_lower",
    "ratio_upper",
    "flags",
];

pub const GK_COLUMNS: [&str; 11] =
    ["index", "n", "family", "r", "p", "seed", "mc", "mc_stderr", "norm_xp", "ratio", "flags"];

/// Seventeen significant digits.
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

fn io_error(path: &Path, e: impl fmt::Display) -> ChaosError {
    ChaosError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn csv_err(e: csv::Error) -> ChaosError {
    ChaosError::Io { path: "<csv>".into(), message: e.to_string() }
}

fn row_record(r: &ComparisonRow) -> Vec<String> {
    let mut rec = vec![
        r.ensemble.clone(),
        r.n1.to_string(),
        r.n2.to_string(),
        r.m.to_string(),
        format_number(r.q),
        format_number(r.r),
        format_number(r.p),
        r.seed.to_string(),
        format_opt(r.mc_lhs),
        format_opt(r.mc_stderr),
    ];
    rec.extend(TermName::ALL.iter().map(|&t| format_opt(r.term(t))));
    rec.extend([r.lower_total, r.upper_total, r.ratio_lower, r.ratio_upper].map(format_opt));
    rec.push(r.flags.join(";"));
    rec
}

pub fn write_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record(row_record(r)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| ChaosError::Io { path: "<csv>".into(), message: e.to_string() })
}

pub fn write_gk_csv<W: Write>(rows: &[GkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GK_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.index.to_string(),
            r.n.to_string(),
            r.family.to_string(),
            format_number(r.r),
            format_number(r.p),
            r.seed.to_string(),
            format_number(r.mc),
            format_number(r.mc_stderr),
            format_number(r.norm_xp),
            format_number(r.ratio),
            r.flags.join(";"),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| ChaosError::Io { path: "<csv>".into(), message: e.to_string() })
}

fn write_json<W: Write, T: Serialize>(rows: &[T], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, rows).map_err(|e| ChaosError::Io { path: "<json>".into(), message: e.to_string() })?;
    writeln!(out).map_err(|e| ChaosError::Io { path: "<json>".into(), message: e.to_string() })
}

fn with_sink<F>(path: Option<&Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let relabel = |e: ChaosError, label: &str| match e {
        ChaosError::Io { message, .. } => ChaosError::Io { path: label.to_owned(), message },
        other => other,
    };
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| io_error(p, e))?;
            let mut w = BufWriter::new(file);
            write(&mut w).map_err(|e| relabel(e, &p.display().to_string()))?;
            w.flush().map_err(|e| io_error(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).map_err(|e| relabel(e, "<stdout>"))
        }
    }
}

/// Writes rows to `path` (stdout when `None`).
pub fn write_report(rows: &[ComparisonRow], format: OutputFormat, path: Option<&Path>) -> Result<()> {
    with_sink(path, |w| match format {
        OutputFormat::Csv => write_csv(rows, w),
        OutputFormat::Json => write_json(rows, w),
    })
}

pub fn write_gk_report(rows: &[GkRow], format: OutputFormat, path: Option<&Path>) -> Result<()> {
    with_sink(path, |w| match format {
        OutputFormat::Csv => write_gk_csv(rows, w),
        OutputFormat::Json => write_json(rows, w),
    })
}

fn parse_field<T: std::str::FromStr>(s: &str, col: &str) -> Result<T> {
    s.parse().map_err(|_| ChaosError::Config(format!("bad value {s:?} in column {col}")))
}

fn parse_opt(s: &str, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(s, col).map(Some)
    }
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ComparisonRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(csv_err)?.clone();
    check(header.iter().eq(CSV_COLUMNS.iter().copied()), || "unexpected CSV header".into())?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| &rec[i];
        let o = |i: usize| parse_opt(&rec[i], CSV_COLUMNS[i]);
        rows.push(ComparisonRow {
            ensemble: f(0).to_owned(),
            n1: parse_field(f(1), "n1")?,
            n2: parse_field(f(2), "n2")?,
            m: parse_field(f(3), "m")?,
            q: parse_field(f(4), "q")?,
            r: parse_field(f(5), "r")?,
            p: parse_field(f(6), "p")?,
            seed: parse_field(f(7), "seed")?,
            mc_lhs: o(8)?,
            mc_stderr: o(9)?,
            t1: o(10)?,
            t2: o(11)?,
            t3: o(12)?,
            t4r: o(13)?,
            t4c: o(14)?,
            t5: o(15)?,
            t6: o(16)?,
            lower_total: o(17)?,
            upper_total: o(18)?,
            ratio_lower: o(19)?,
            ratio_upper: o(20)?,
            flags: if f(21).is_empty() { Vec::new() } else { f(21).split(';').map(str::to_owned).collect() },
        });
    }
    Ok(rows)
}

pub fn read_json<R: Read>(input: R) -> Result<Vec<ComparisonRow>> {
    serde_json::from_reader(input).map_err(|e| ChaosError::Config(format!("malformed rows: {e}")))
}

/// Reads stored rows, JSON if the first non-blank byte is `[`, CSV otherwise.
pub fn read_report(path: &Path) -> Result<Vec<ComparisonRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    if text.trim_start().starts_with('[') {
        read_json(text.as_bytes())
    } else {
        read_csv(text.as_bytes())
    }
}
