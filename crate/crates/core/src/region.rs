//! Confidence regions by inverting effect tests on a grid.
//!
//! Starting from each maximum-likelihood effect of a plausible ordering, the
//! scan steps left and right by `s` until the test rejects on both sides and
//! records `(first rejected left + s/2, first rejected right - s/2)`. Zero is
//! tested separately since it can be attained by orderings with `j` before
//! `i`, which may leave an isolated zero next to the nonzero intervals.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ScanDirection};
use crate::hypothesis::{EffectTester, Method, SplitSetup, TestConfig};
use crate::model::{empirical_cov, Dataset};
use crate::ordersearch;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub survivor_count: usize,
    pub evaluations: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRegion {
    /// Disjoint closed intervals, ascending.
    pub intervals: Vec<[f64; 2]>,
    pub includes_zero: bool,
    pub alpha: f64,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl ConfidenceRegion {
    pub fn contains(&self, psi: f64) -> bool {
        (psi == 0.0 && self.includes_zero) || self.intervals.iter().any(|&[lo, hi]| lo <= psi && psi <= hi)
    }

    /// Total length of the intervals; an isolated zero has no width.
    pub fn width(&self) -> f64 {
        self.intervals.iter().map(|[lo, hi]| hi - lo).sum()
    }

    /// Whether zero is covered only as an isolated point.
    pub fn has_isolated_zero(&self) -> bool {
        self.includes_zero && !self.intervals.iter().any(|&[lo, hi]| lo <= 0.0 && 0.0 <= hi)
    }
}

/// Sorts and merges overlapping or touching intervals.
pub fn merge_intervals(mut intervals: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    intervals.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut merged: Vec<[f64; 2]> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
            _ => merged.push(iv),
        }
    }
    merged
}

/// Outcome of a grid scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub intervals: Vec<[f64; 2]>,
    pub zero_accepted: bool,
    pub evaluations: usize,
}

/// Grid scan over `start_values` with an arbitrary acceptance test.
pub fn scan_region<F>(start_values: &[f64], step: f64, max_steps: usize, mut accept: F) -> Result<Scan>
where
    F: FnMut(f64) -> bool,
{
    let mut evaluations = 0usize;
    let mut test = |psi: f64| {
        evaluations += 1;
        accept(psi)
    };
    let mut starts: Vec<f64> = start_values.to_vec();
    starts.sort_by(f64::total_cmp);
    starts.dedup();

    let mut intervals = Vec::new();
    let mut idx = 0;
    while idx < starts.len() {
        let start = starts[idx];
        idx += 1;
        // a start that fails its own test gets one probe step on each side
        let origin = if test(start) {
            Some(start)
        } else if test(start - step) {
            Some(start - step)
        } else if test(start + step) {
            Some(start + step)
        } else {
            None
        };
        let Some(origin) = origin else { continue };

        let mut k = 0usize;
        let left = loop {
            k += 1;
            if k > max_steps {
                return Err(Error::ScanOverflow {
                    direction: ScanDirection::Left,
                    start: origin,
                    max_steps,
                });
            }
            let psi = origin - k as f64 * step;
            if !test(psi) {
                break psi;
            }
        };
        let mut k = 0usize;
        let right = loop {
            k += 1;
            if k > max_steps {
                return Err(Error::ScanOverflow {
                    direction: ScanDirection::Right,
                    start: origin,
                    max_steps,
                });
            }
            let psi = origin + k as f64 * step;
            if !test(psi) {
                break psi;
            }
        };
        intervals.push([left + 0.5 * step, right - 0.5 * step]);
        while idx < starts.len() && starts[idx] < right {
            idx += 1;
        }
    }
    let zero_accepted = test(0.0);
    Ok(Scan {
        intervals: merge_intervals(intervals),
        zero_accepted,
        evaluations,
    })
}

/// Default grid step relative to the largest start effect.
pub fn default_step(start_effects: &[f64]) -> f64 {
    let largest = start_effects.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    0.01 * largest.max(1.0)
}

/// Region for a prepared tester.
pub fn region_from_tester(tester: &EffectTester, cfg: &TestConfig, method: Method) -> Result<ConfidenceRegion> {
    let started = Instant::now();
    let plaus = tester.plausible();
    let step = cfg.step.unwrap_or_else(|| default_step(&plaus.start_effects));
    let scan = scan_region(&plaus.start_effects, step, cfg.max_steps, |psi| tester.test(psi).accepted)?;
    let includes_zero = scan.zero_accepted || scan.intervals.iter().any(|&[lo, hi]| lo <= 0.0 && 0.0 <= hi);
    Ok(ConfidenceRegion {
        intervals: scan.intervals,
        includes_zero,
        alpha: cfg.alpha,
        method,
        diagnostics: Diagnostics {
            survivor_count: plaus.len(),
            evaluations: scan.evaluations,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// Confidence region for `C(i -> j)` (0-based nodes) with the LRT or split LRT.
pub fn confidence_region(data: &Dataset, i: usize, j: usize, cfg: &TestConfig) -> Result<ConfidenceRegion> {
    cfg.validate()?;
    let d = data.d();
    if d < 2 || i >= d || j >= d || i == j {
        return Err(Error::InvalidArgument(format!("invalid node pair ({i}, {j}) for d = {d}")));
    }
    let started = Instant::now();
    let tester = match cfg.method {
        Method::Lrt => {
            let sigma_hat = empirical_cov(data)?;
            let plaus = ordersearch::possible_orderings(&sigma_hat, data.n(), i, j, cfg.alpha)?;
            EffectTester::lrt(sigma_hat, data.n(), plaus, cfg.alpha, cfg.solver)
        }
        Method::Slrt => SplitSetup::new(data, i, j, cfg)?.tester,
        Method::Bootstrap => unreachable!("rejected by validate"),
    };
    let mut region = region_from_tester(&tester, cfg, cfg.method)?;
    region.diagnostics.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(region)
}
