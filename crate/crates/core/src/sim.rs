//! Simulation harness: coverage, width, zero inclusion and timing of the
//! confidence regions on random equal-variance LSEMs.
//!
//! Replicate `r` draws everything from ChaCha stream `r` under the spec seed,
//! so results are identical for any number of worker threads.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline;
use crate::error::{Error, Result};
use crate::graphs::{random_dag_with_order, sample_lsem, total_effect, Density};
use crate::hypothesis::{Method, TestConfig};
use crate::model::{Ordering, WeightedDag};
use crate::region::{confidence_region, ConfidenceRegion};
use crate::SimRng;

pub const SCHEMA: &str = "effect-ci-sim/1";
/// Largest allowed spread of the per-node error variances.
pub const MAX_VARIANCE_SPREAD: f64 = 1.8;
const MAX_DAG_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectMode {
    /// Node 1 is an ancestor of node 2 in the generating DAG.
    TrueEffect,
    /// Node 2 precedes node 1 in the generating order, so `C(1 -> 2) = 0`.
    NoEffect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub d: usize,
    pub n: usize,
    pub beta_mean: f64,
    pub density: Density,
    pub reps: usize,
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub effect_mode: EffectMode,
    pub variance_spread: f64,
    pub seed: u64,
    pub bootstrap_reps: usize,
    pub split_ratio: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            d: 6,
            n: 500,
            beta_mean: 0.5,
            density: Density::Sparse,
            reps: 200,
            alpha: 0.05,
            methods: vec![Method::Lrt],
            effect_mode: EffectMode::TrueEffect,
            variance_spread: 0.0,
            seed: 0,
            bootstrap_reps: 500,
            split_ratio: 0.5,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.d < 2 {
            return bad(format!("d must be at least 2, got {}", self.d));
        }
        if self.n < self.d + 1 {
            return bad(format!("n must be at least d + 1, got {}", self.n));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !self.beta_mean.is_finite() {
            return bad("beta must be finite".into());
        }
        if !(0.0..=MAX_VARIANCE_SPREAD).contains(&self.variance_spread) {
            return bad(format!("variance spread must lie in [0, 1.8], got {}", self.variance_spread));
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.methods.contains(&Method::Bootstrap) && self.bootstrap_reps < 100 {
            return bad(format!("bootstrap needs at least 100 replicates, got {}", self.bootstrap_reps));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub method: Method,
    pub true_effect: f64,
    pub covered: bool,
    pub includes_zero: bool,
    pub width: f64,
    pub intervals: usize,
    pub lower: f64,
    pub upper: f64,
    pub survivors: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub completed: usize,
    pub failures: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub zero_rate: f64,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub summaries: Vec<MethodSummary>,
    pub records: Vec<ReplicateRecord>,
}

impl ExperimentResult {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

/// Generating model and data of one replicate.
pub struct Replicate {
    pub dag: WeightedDag,
    pub order: Ordering,
    pub data: crate::model::Dataset,
    pub true_effect: f64,
    pub split_seed: u64,
    pub bootstrap_seed: u64,
}

/// Draws replicate `rep` of `spec`. Nodes 1 and 2 of the experiment are
/// 0-based nodes 0 and 1.
pub fn draw_replicate(spec: &ExperimentSpec, rep: usize) -> Result<Replicate> {
    let mut rng = SimRng::seed_from_u64(spec.seed);
    rng.set_stream(rep as u64);
    let mut draws = 0;
    let (dag, order) = loop {
        draws += 1;
        if draws > MAX_DAG_DRAWS {
            return Err(Error::InvalidArgument(format!(
                "no DAG matching {:?} after {MAX_DAG_DRAWS} draws",
                spec.effect_mode
            )));
        }
        let (dag, order) = random_dag_with_order(spec.d, spec.beta_mean, spec.density, &mut rng);
        let ok = match spec.effect_mode {
            EffectMode::TrueEffect => dag.has_directed_path(0, 1),
            EffectMode::NoEffect => order.precedes(1, 0),
        };
        if ok {
            break (dag, order);
        }
    };
    let variances: Option<Vec<f64>> = (spec.variance_spread > 0.0).then(|| {
        let half = 0.5 * spec.variance_spread;
        (0..spec.d).map(|_| rng.random_range(1.0 - half..=1.0 + half)).collect()
    });
    let data = sample_lsem(&dag, spec.n, &mut rng, variances.as_deref())?;
    let true_effect = total_effect(&dag, 0, 1);
    let split_seed = rng.random();
    let bootstrap_seed = rng.random();
    Ok(Replicate {
        dag,
        order,
        data,
        true_effect,
        split_seed,
        bootstrap_seed,
    })
}

fn record_for(rep: usize, method: Method, true_effect: f64, outcome: Result<ConfidenceRegion>) -> ReplicateRecord {
    match outcome {
        Ok(region) => {
            let lower = region.intervals.first().map_or(f64::NAN, |iv| iv[0]);
            let upper = region.intervals.last().map_or(f64::NAN, |iv| iv[1]);
            ReplicateRecord {
                rep,
                method,
                true_effect,
                covered: region.contains(true_effect),
                includes_zero: region.includes_zero,
                width: region.width(),
                intervals: region.intervals.len(),
                lower,
                upper,
                survivors: region.diagnostics.survivor_count,
                wall_ms: region.diagnostics.wall_ms,
                error: None,
            }
        }
        Err(e) => ReplicateRecord {
            rep,
            method,
            true_effect,
            covered: false,
            includes_zero: false,
            width: f64::NAN,
            intervals: 0,
            lower: f64::NAN,
            upper: f64::NAN,
            survivors: 0,
            wall_ms: 0.0,
            error: Some(e.to_string()),
        },
    }
}

/// Regions of every requested method on replicate `rep`.
pub fn run_replicate(spec: &ExperimentSpec, rep: usize) -> Vec<ReplicateRecord> {
    let replicate = match draw_replicate(spec, rep) {
        Ok(r) => r,
        Err(e) => {
            return spec
                .methods
                .iter()
                .map(|&m| record_for(rep, m, f64::NAN, Err(Error::InvalidArgument(e.to_string()))))
                .collect()
        }
    };
    spec.methods
        .iter()
        .map(|&method| {
            let outcome = match method {
                Method::Lrt | Method::Slrt => {
                    let cfg = TestConfig {
                        alpha: spec.alpha,
                        method,
                        split_ratio: spec.split_ratio,
                        seed: replicate.split_seed,
                        ..TestConfig::default()
                    };
                    confidence_region(&replicate.data, 0, 1, &cfg)
                }
                Method::Bootstrap => {
                    let mut rng = SimRng::seed_from_u64(replicate.bootstrap_seed);
                    baseline::bootstrap_ci(&replicate.data, 0, 1, spec.alpha, spec.bootstrap_reps, &mut rng)
                }
            };
            record_for(rep, method, replicate.true_effect, outcome)
        })
        .collect()
}

fn summarize(method: Method, records: &[ReplicateRecord]) -> MethodSummary {
    let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method && r.error.is_none()).collect();
    let failures = records.iter().filter(|r| r.method == method && r.error.is_some()).count();
    let k = ok.len().max(1) as f64;
    MethodSummary {
        method,
        completed: ok.len(),
        failures,
        coverage: ok.iter().filter(|r| r.covered).count() as f64 / k,
        mean_width: ok.iter().map(|r| r.width).sum::<f64>() / k,
        zero_rate: ok.iter().filter(|r| r.includes_zero).count() as f64 / k,
        mean_wall_ms: ok.iter().map(|r| r.wall_ms).sum::<f64>() / k,
    }
}

/// Runs all replicates on the current rayon pool.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let per_rep: Vec<Vec<ReplicateRecord>> = (0..spec.reps).into_par_iter().map(|rep| run_replicate(spec, rep)).collect();
    let records: Vec<ReplicateRecord> = per_rep.into_iter().flatten().collect();
    let summaries: Vec<MethodSummary> = spec.methods.iter().map(|&m| summarize(m, &records)).collect();
    for s in &summaries {
        if s.failures as f64 >= 0.01 * spec.reps as f64 {
            let first = records
                .iter()
                .find_map(|r| (r.method == s.method).then_some(r.error.as_deref()).flatten())
                .unwrap_or("");
            return Err(Error::Numerical(format!(
                "{} of {} {} replicates failed (first: {first})",
                s.failures, spec.reps, s.method
            )));
        }
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        summaries,
        records,
    })
}

/// Runs on a dedicated pool with `threads` workers.
pub fn run_experiment_with_threads(spec: &ExperimentSpec, threads: usize) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(spec))
}

fn header(spec: &ExperimentSpec) -> String {
    let methods: Vec<String> = spec.methods.iter().map(Method::to_string).collect();
    format!(
        "# schema: {SCHEMA}\n# d={} n={} beta={} density={} reps={} alpha={} methods={} effect_mode={} variance_spread={} seed={} bootstrap_reps={} split_ratio={}\n",
        spec.d,
        spec.n,
        spec.beta_mean,
        spec.density,
        spec.reps,
        spec.alpha,
        methods.join(","),
        match spec.effect_mode {
            EffectMode::TrueEffect => "true_effect",
            EffectMode::NoEffect => "no_effect",
        },
        spec.variance_spread,
        spec.seed,
        spec.bootstrap_reps,
        spec.split_ratio
    )
}

/// Aggregate table. Timings are excluded so the file is reproducible.
pub fn aggregate_table(result: &ExperimentResult) -> String {
    let mut out = header(&result.spec);
    out.push_str("method,completed,failures,coverage,mean_width,zero_rate\n");
    for s in &result.summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.method, s.completed, s.failures, s.coverage, s.mean_width, s.zero_rate
        );
    }
    out
}

/// One row per (replicate, method); timings excluded.
pub fn replicate_table(result: &ExperimentResult) -> String {
    let mut out = header(&result.spec);
    out.push_str("rep,method,true_effect,covered,includes_zero,width,intervals,lower,upper,survivors,error\n");
    for r in &result.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.rep,
            r.method,
            r.true_effect,
            r.covered,
            r.includes_zero,
            r.width,
            r.intervals,
            r.lower,
            r.upper,
            r.survivors,
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
        );
    }
    out
}

/// Writes `aggregate.csv` and `replicates.csv` into `dir`.
pub fn write_tables(result: &ExperimentResult, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let aggregate = dir.join("aggregate.csv");
    let replicates = dir.join("replicates.csv");
    std::fs::write(&aggregate, aggregate_table(result))?;
    std::fs::write(&replicates, replicate_table(result))?;
    Ok((aggregate, replicates))
}

/// One summary line per method, with timings.
pub fn summary_lines(result: &ExperimentResult) -> String {
    let spec = &result.spec;
    let mut out = String::new();
    for s in &result.summaries {
        let _ = writeln!(
            out,
            "{:<9} d={} n={} beta={} {} {}: coverage={:.3} zero_rate={:.3} mean_width={:.4} mean_ms={:.1} failures={}",
            s.method.to_string().to_uppercase(),
            spec.d,
            spec.n,
            spec.beta_mean,
            spec.density,
            match spec.effect_mode {
                EffectMode::TrueEffect => "true-effect",
                EffectMode::NoEffect => "no-effect",
            },
            s.coverage,
            s.zero_rate,
            s.mean_width,
            s.mean_wall_ms,
            s.failures
        );
    }
    out
}
