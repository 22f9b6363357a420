//! Naive bootstrap baseline: resample rows, re-learn a sparse DAG under the
//! equal-variance likelihood, and report the percentile interval of the
//! resulting effect estimates.
//!
//! Structure learning picks the likelihood-maximizing ordering (exhaustively
//! for small `d`, greedily otherwise) and then drops edges by backward
//! elimination on a BIC-penalized score. It stands in for greedy edge-wise
//! DAG search: the estimator is a discontinuous function of the data with a
//! point mass at zero, which is what makes the percentile bootstrap fail.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypothesis::Method;
use crate::linalg::{neumann_inverse, submatrix, IncrementalCholesky};
use crate::model::{empirical_cov, CovMatrix, Dataset, Ordering};
use crate::ordersearch::variance_sort_order;
use crate::region::{ConfidenceRegion, Diagnostics};
use crate::SimRng;

/// Largest dimension searched exhaustively.
pub const EXHAUSTIVE_MAX_D: usize = 7;
const MAX_RESAMPLE_RETRIES: usize = 10;

/// Ordering with the smallest residual trace among all `d!` orderings.
/// Ties keep the lexicographically first ordering.
pub fn exhaustive_best_ordering(sigma_hat: &CovMatrix) -> Result<Ordering> {
    fn visit(
        chol: &mut IncrementalCholesky<'_>,
        used: &mut [bool],
        rss: f64,
        best: &mut (f64, Vec<usize>),
    ) -> Result<()> {
        let d = used.len();
        for v in 0..d {
            if used[v] {
                continue;
            }
            let next = rss + chol.push(v)?;
            if chol.len() == d {
                if next < best.0 {
                    *best = (next, chol.nodes().to_vec());
                }
            } else {
                used[v] = true;
                visit(chol, used, next, best)?;
                used[v] = false;
            }
            chol.pop();
        }
        Ok(())
    }
    let d = sigma_hat.d();
    let mut chol = IncrementalCholesky::new(sigma_hat.matrix());
    let mut best = (f64::INFINITY, Vec::new());
    visit(&mut chol, &mut vec![false; d], 0.0, &mut best)?;
    Ordering::new(best.1)
}

fn residual_trace(sigma_hat: &CovMatrix, nodes: &[usize]) -> Result<f64> {
    let mut chol = IncrementalCholesky::new(sigma_hat.matrix());
    let mut rss = 0.0;
    for &v in nodes {
        rss += chol.push(v)?;
    }
    Ok(rss)
}

/// Greedy insertion in variance-sort order, then hill climbing with
/// best-improvement moves (pairwise swaps and single-node reinsertions) until
/// no move lowers the residual trace.
pub fn greedy_best_ordering(sigma_hat: &CovMatrix) -> Result<Ordering> {
    let seed = variance_sort_order(sigma_hat)?;
    let mut current: Vec<usize> = Vec::with_capacity(seed.len());
    for &v in seed.as_slice() {
        let mut best: Option<(f64, usize)> = None;
        for slot in 0..=current.len() {
            let mut trial = current.clone();
            trial.insert(slot, v);
            let rss = residual_trace(sigma_hat, &trial)?;
            if best.is_none_or(|(b, _)| rss < b) {
                best = Some((rss, slot));
            }
        }
        current.insert(best.expect("at least one slot").1, v);
    }

    let d = current.len();
    let mut rss = residual_trace(sigma_hat, &current)?;
    loop {
        let mut improvement: Option<(f64, Vec<usize>)> = None;
        let mut consider = |trial: Vec<usize>| -> Result<()> {
            let value = residual_trace(sigma_hat, &trial)?;
            if value < rss && improvement.as_ref().is_none_or(|(best, _)| value < *best) {
                improvement = Some((value, trial));
            }
            Ok(())
        };
        for a in 0..d {
            for b in a + 1..d {
                let mut trial = current.clone();
                trial.swap(a, b);
                consider(trial)?;
            }
        }
        for from in 0..d {
            for to in (0..d).filter(|&t| t != from && t + 1 != from) {
                let mut trial = current.clone();
                let v = trial.remove(from);
                trial.insert(to, v);
                consider(trial)?;
            }
        }
        match improvement {
            Some((value, trial)) => {
                current = trial;
                rss = value;
            }
            None => break,
        }
    }
    Ordering::new(current)
}

/// Effect of `i` on `j` at the likelihood-maximizing ordering.
pub fn greedy_structure_effect(data: &Dataset, i: usize, j: usize) -> Result<f64> {
    let sigma_hat = empirical_cov(data)?;
    structure_effect(&sigma_hat, data.n(), i, j)
}

fn structure_effect(sigma_hat: &CovMatrix, n: usize, i: usize, j: usize) -> Result<f64> {
    let order = if sigma_hat.d() <= EXHAUSTIVE_MAX_D {
        exhaustive_best_ordering(sigma_hat)?
    } else {
        greedy_best_ordering(sigma_hat)?
    };
    let b = prune_edges(sigma_hat, &order, n)?;
    Ok(neumann_inverse(&b)[(j, i)])
}

/// Least squares of `k` on `parents`: coefficients and residual variance.
fn regress(sigma: &DMatrix<f64>, k: usize, parents: &[usize]) -> Result<(DVector<f64>, f64)> {
    if parents.is_empty() {
        return Ok((DVector::zeros(0), sigma[(k, k)]));
    }
    let s_pp = submatrix(sigma, parents, parents);
    let s_pk = DVector::from_iterator(parents.len(), parents.iter().map(|&p| sigma[(p, k)]));
    let chol = s_pp.cholesky().ok_or_else(|| Error::Conditioning {
        set: parents.to_vec(),
        pivot: 0.0,
    })?;
    let beta = chol.solve(&s_pk);
    let rss = sigma[(k, k)] - s_pk.dot(&beta);
    Ok((beta, rss))
}

/// Backward edge elimination inside `order` on the BIC-penalized
/// equal-variance likelihood `-(nd/2) log(rss) - (log(n)/2) |E|`.
/// Returns the coefficient matrix of the sparse fit.
pub fn prune_edges(sigma_hat: &CovMatrix, order: &Ordering, n: usize) -> Result<DMatrix<f64>> {
    let sigma = sigma_hat.matrix();
    let d = sigma_hat.d();
    let nd = (n * d) as f64;
    let penalty = 0.5 * (n as f64).ln();
    let mut parents: Vec<Vec<usize>> = (0..d).map(|k| order.predecessors(k).to_vec()).collect();
    let mut rss: Vec<f64> = Vec::with_capacity(d);
    for (k, p) in parents.iter().enumerate() {
        rss.push(regress(sigma, k, p)?.1);
    }
    let score = |total: f64, edges: usize| -0.5 * nd * total.ln() - penalty * edges as f64;
    loop {
        let total: f64 = rss.iter().sum();
        let edges: usize = parents.iter().map(Vec::len).sum();
        let current = score(total, edges);
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for k in 0..d {
            for drop in 0..parents[k].len() {
                let mut trial = parents[k].clone();
                trial.remove(drop);
                let r = regress(sigma, k, &trial)?.1;
                let s = score(total - rss[k] + r, edges - 1);
                if s > current && best.is_none_or(|(b, ..)| s > b) {
                    best = Some((s, k, drop, r));
                }
            }
        }
        let Some((_, k, drop, r)) = best else { break };
        parents[k].remove(drop);
        rss[k] = r;
    }
    let mut b = DMatrix::zeros(d, d);
    for (k, p) in parents.iter().enumerate() {
        let (beta, _) = regress(sigma, k, p)?;
        for (c, &q) in p.iter().enumerate() {
            b[(k, q)] = beta[c];
        }
    }
    Ok(b)
}

/// Order statistics at `ceil(B q) - 1` (0-based) for `q = alpha/2, 1 - alpha/2`.
pub fn percentile_interval(estimates: &[f64], alpha: f64) -> [f64; 2] {
    let mut sorted = estimates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let index = |q: f64| (((b as f64) * q).ceil() as usize).clamp(1, b) - 1;
    [sorted[index(alpha / 2.0)], sorted[index(1.0 - alpha / 2.0)]]
}

/// Bootstrap percentile interval for `C(i -> j)`.
///
/// Replicate `r` uses its own ChaCha stream `r` under a master seed drawn
/// from `rng`, so results do not depend on the thread count.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    data: &Dataset,
    i: usize,
    j: usize,
    alpha: f64,
    b_reps: usize,
    rng: &mut R,
) -> Result<ConfidenceRegion> {
    if b_reps < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 bootstrap replicates, got {b_reps}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let d = data.d();
    if i >= d || j >= d || i == j {
        return Err(Error::InvalidArgument(format!("invalid node pair ({i}, {j}) for d = {d}")));
    }
    let started = Instant::now();
    let master: u64 = rng.random();
    let n = data.n();
    let estimates: Vec<f64> = (0..b_reps)
        .into_par_iter()
        .map(|r| {
            let mut local = SimRng::seed_from_u64(master);
            local.set_stream(r as u64);
            let mut last_err = None;
            for _ in 0..=MAX_RESAMPLE_RETRIES {
                let rows: Vec<usize> = (0..n).map(|_| local.random_range(0..n)).collect();
                let attempt = data
                    .select_rows(&rows)
                    .and_then(|sample| empirical_cov(&sample))
                    .and_then(|sigma| structure_effect(&sigma, n, i, j));
                match attempt {
                    Ok(effect) => return Ok(effect),
                    Err(e) => last_err = Some(e),
                }
            }
            Err(last_err.expect("at least one attempt"))
        })
        .collect::<Result<_>>()?;
    let [lo, hi] = percentile_interval(&estimates, alpha);
    Ok(ConfidenceRegion {
        intervals: vec![[lo, hi]],
        includes_zero: lo <= 0.0 && 0.0 <= hi,
        alpha,
        method: Method::Bootstrap,
        diagnostics: Diagnostics {
            survivor_count: 1,
            evaluations: b_reps,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_estimates_give_degenerate_interval() {
        assert_eq!(percentile_interval(&[0.3; 200], 0.05), [0.3, 0.3]);
    }

    #[test]
    fn percentile_uses_order_statistics() {
        let est: Vec<f64> = (1..=500).map(f64::from).collect();
        assert_eq!(percentile_interval(&est, 0.05), [13.0, 488.0]);
        let mut shuffled = est.clone();
        shuffled.reverse();
        assert_eq!(percentile_interval(&shuffled, 0.05), [13.0, 488.0]);
    }

    #[test]
    fn two_node_exhaustive_picks_smaller_trace() {
        // var(X0) = 1, var(X1) = 2, cov = 0.5: order (0, 1) has trace 1 + 1.75
        // and (1, 0) has 2 + 0.875
        let s = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0])).unwrap();
        assert_eq!(exhaustive_best_ordering(&s).unwrap().as_slice(), &[0, 1]);
        assert_eq!(greedy_best_ordering(&s).unwrap().as_slice(), &[0, 1]);
    }

    #[test]
    fn rejects_too_few_replicates() {
        let x = DMatrix::from_fn(10, 2, |r, c| (r + 2 * c) as f64 * if c == 1 { (r as f64).cos() } else { 1.0 });
        let data = Dataset::new(x, None).unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        assert!(bootstrap_ci(&data, 0, 1, 0.05, 50, &mut rng).is_err());
    }
}
