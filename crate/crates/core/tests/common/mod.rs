//! Independent oracles shared by the integration tests. None of them call
//! into the crate's likelihood or effect code.
#![allow(dead_code)]

use effect_ci::graphs::sample_lsem;
use effect_ci::{Dataset, SimRng, WeightedDag};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Sum over directed paths `i -> ... -> j` of the products of edge weights.
pub fn path_sum(b: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    fn walk(b: &DMatrix<f64>, v: usize, j: usize, acc: f64) -> f64 {
        if v == j {
            return acc;
        }
        let mut total = 0.0;
        for child in 0..b.nrows() {
            let w = b[(child, v)];
            if w != 0.0 {
                total += walk(b, child, j, acc * w);
            }
        }
        total
    }
    if i == j {
        return 0.0;
    }
    walk(b, i, j, 1.0)
}

/// DAG on a random permutation, edges kept with probability `p`, weights
/// uniform in [-1, 1], error variance uniform in [0.1, 10].
pub fn random_dag(d: usize, p: f64, rng: &mut SimRng) -> WeightedDag {
    let mut perm: Vec<usize> = (0..d).collect();
    for k in (1..d).rev() {
        let r = rng.random_range(0..=k);
        perm.swap(k, r);
    }
    let mut b = DMatrix::zeros(d, d);
    for to in 1..d {
        for from in 0..to {
            if rng.random::<f64>() < p {
                b[(perm[to], perm[from])] = rng.random_range(-1.0..=1.0);
            }
        }
    }
    let sigma2 = rng.random_range(0.1..=10.0);
    WeightedDag::new(b, sigma2).unwrap()
}

pub fn permutations(d: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; d], &mut out);
    out
}

/// Residual variance of `k` regressed on `parents`.
pub fn ols_rss(sigma: &DMatrix<f64>, k: usize, parents: &[usize]) -> f64 {
    if parents.is_empty() {
        return sigma[(k, k)];
    }
    let s_pp = DMatrix::from_fn(parents.len(), parents.len(), |r, c| sigma[(parents[r], parents[c])]);
    let s_pk = DVector::from_iterator(parents.len(), parents.iter().map(|&p| sigma[(p, k)]));
    let beta = s_pp.lu().solve(&s_pk).expect("nonsingular");
    sigma[(k, k)] - s_pk.dot(&beta)
}

pub fn loglik_from_rss(rss: f64, n: usize, d: usize) -> f64 {
    let nd = (n * d) as f64;
    -0.5 * nd * (2.0 * std::f64::consts::PI * rss / d as f64).ln() - 0.5 * nd
}

/// Profile log-likelihood of the complete DAG of `perm`.
pub fn brute_loglik(sigma: &DMatrix<f64>, perm: &[usize], n: usize) -> f64 {
    let rss: f64 = (0..perm.len()).map(|r| ols_rss(sigma, perm[r], &perm[..r])).sum();
    loglik_from_rss(rss, n, perm.len())
}

/// `chi2_{df, p}` by bisection on statrs' regularized lower gamma.
pub fn chisq_oracle(df: usize, p: f64) -> f64 {
    let a = df as f64 / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while statrs::function::gamma::gamma_lr(a, hi / 2.0) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if statrs::function::gamma::gamma_lr(a, mid / 2.0) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn sample(dag: &WeightedDag, n: usize, seed: u64) -> Dataset {
    sample_lsem(dag, n, &mut rng(seed), None).unwrap()
}

/// The five-node model whose two paths from node 1 to node 2 cancel
/// (0-based: node 0 to node 1).
pub fn cancellation_dag() -> WeightedDag {
    let mut b = DMatrix::zeros(5, 5);
    b[(0, 2)] = -0.5;
    b[(1, 0)] = 0.25;
    b[(1, 3)] = 0.5;
    b[(1, 4)] = 0.25;
    b[(3, 0)] = -0.5;
    b[(4, 2)] = 0.5;
    WeightedDag::new(b, 1.0).unwrap()
}

/// `(I - B)^{-1}` by dense LU.
pub fn dense_inverse_effect(b: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let d = b.nrows();
    let inv = (DMatrix::identity(d, d) - b).try_inverse().expect("I - B invertible");
    inv[(j, i)]
}
