//! Maximum likelihood under the equal-variance model for a fixed causal order.
//!
//! For a complete DAG with order `pi` the profiled log-likelihood only depends
//! on the residual trace `rss = tr((I - B)^T (I - B) Sigma_hat)`, which
//! splits into one least-squares problem per node. Fixing the total effect
//! `C(i -> j) = psi` couples the equations of the nodes between `i` and `j`;
//! that block is solved numerically after eliminating `beta_{j,i}`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::IncrementalCholesky;
use crate::model::{CovMatrix, Ordering, PrefixOrdering};
use crate::optim::{self, BfgsConfig};
use crate::SimRng;

/// Settings for the fixed-effect constrained fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Maximum tolerated `|C(i -> j)(B_hat) - psi|`.
    pub constraint_tol: f64,
    /// Allowed excess of a constrained log-likelihood over the unrestricted one.
    pub slack: f64,
    pub bfgs: BfgsConfig,
    /// Perturbed restarts tried after a non-converged run.
    pub restarts: usize,
    pub restart_std: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            constraint_tol: 1e-7,
            slack: 1e-9,
            bfgs: BfgsConfig::default(),
            restarts: 3,
            restart_std: 0.1,
            seed: 0x5eed,
        }
    }
}

/// Maximum-likelihood fit of the complete DAG of one ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingFit {
    pub order: Ordering,
    pub loglik: f64,
    pub rss: f64,
    pub b_hat: DMatrix<f64>,
    pub sigma2_hat: f64,
    /// `C(i -> j)` implied by `b_hat`, when a target pair was requested.
    pub effect_hat: Option<f64>,
}

/// Log-likelihood maximized over the common variance:
/// `-(n d / 2) log((2 pi / d) rss) - n d / 2`.
pub fn profile_loglik(rss: f64, n: usize, d: usize) -> Result<f64> {
    if !(rss > 0.0) || !rss.is_finite() {
        return Err(Error::Numerical(format!("residual sum must be positive, got {rss}")));
    }
    let nd = (n * d) as f64;
    Ok(-0.5 * nd * ((2.0 * std::f64::consts::PI / d as f64) * rss).ln() - 0.5 * nd)
}

/// Regression coefficients of the node in row `r` on rows `0..r`, read from
/// the Cholesky factor: `beta = L_{<r}^{-T} l_r`.
fn regression_row(chol: &IncrementalCholesky<'_>, r: usize, lo: usize) -> Vec<f64> {
    let width = r - lo;
    let mut beta: Vec<f64> = (lo..r).map(|c| chol.entry(r, c)).collect();
    for a in (0..width).rev() {
        let row = lo + a;
        let mut acc = beta[a];
        for b in a + 1..width {
            acc -= chol.entry(lo + b, row) * beta[b];
        }
        beta[a] = acc / chol.entry(row, row);
    }
    beta
}

fn factor_order<'a>(sigma_hat: &'a CovMatrix, order: &Ordering) -> Result<(IncrementalCholesky<'a>, Vec<f64>)> {
    if order.len() != sigma_hat.d() {
        return Err(Error::InvalidArgument(format!(
            "ordering of length {} for dimension {}",
            order.len(),
            sigma_hat.d()
        )));
    }
    let mut chol = IncrementalCholesky::new(sigma_hat.matrix());
    let mut cond = Vec::with_capacity(order.len());
    for &v in order.as_slice() {
        cond.push(chol.push(v)?);
    }
    Ok((chol, cond))
}

/// Unrestricted fit: every node regressed on all of its predecessors.
pub fn fit_ordering(
    sigma_hat: &CovMatrix,
    order: &Ordering,
    n: usize,
    target: Option<(usize, usize)>,
) -> Result<OrderingFit> {
    let d = sigma_hat.d();
    let (chol, cond) = factor_order(sigma_hat, order)?;
    let perm = order.as_slice();
    let mut b_hat = DMatrix::zeros(d, d);
    for r in 1..d {
        let beta = regression_row(&chol, r, 0);
        for (c, w) in beta.into_iter().enumerate() {
            b_hat[(perm[r], perm[c])] = w;
        }
    }
    let rss: f64 = cond.iter().sum();
    let loglik = profile_loglik(rss, n, d)?;
    let effect_hat = target.map(|(i, j)| {
        let pos = order.positions();
        if pos[j] < pos[i] {
            0.0
        } else {
            prop_effect(&chol, pos[i], pos[j])
        }
    });
    Ok(OrderingFit {
        order: order.clone(),
        loglik,
        rss,
        b_hat,
        sigma2_hat: rss / d as f64,
        effect_hat,
    })
}

/// `Sigma_{j,i|p(i)} / Sigma_{i,i|p(i)}` from a factor where `i` sits in row
/// `ri` and `j` in a later row `rj`.
fn prop_effect(chol: &IncrementalCholesky<'_>, ri: usize, rj: usize) -> f64 {
    chol.entry(rj, ri) / chol.entry(ri, ri)
}

/// Profile log-likelihood of the conditional variances along a prefix. This
/// upper-bounds the fitted log-likelihood of every completion of the prefix.
pub fn prefix_bound(sigma_hat: &CovMatrix, prefix: &PrefixOrdering, n: usize, d: usize) -> Result<f64> {
    if prefix.is_empty() {
        return Err(Error::InvalidArgument("empty prefix".into()));
    }
    let mut chol = IncrementalCholesky::new(sigma_hat.matrix());
    let mut rss = 0.0;
    for &v in prefix.as_slice() {
        rss += chol.push(v)?;
    }
    profile_loglik(rss, n, d)
}

/// Least-squares block of the nodes from `i` to `j` (inclusive) after
/// partialling out the predecessors of `i`.
///
/// Local index 0 is `i`, `m - 1` is `j`. The objective is
/// `sum_{a >= 1} (e_a - b_a)^T C (e_a - b_a)` over the strictly lower
/// triangular `B_s`, with `beta_{j,i}` eliminated through
/// `beta_{j,i} = psi - sum_{l} beta_{j,l} T_{l,i}`, `T = (I - B_s)^{-1}`.
pub struct ReducedProblem {
    m: usize,
    c: Vec<f64>,
    psi: f64,
    free: Vec<(usize, usize)>,
}

impl ReducedProblem {
    pub fn new(c: &DMatrix<f64>, psi: f64) -> Self {
        let m = c.nrows();
        assert!(m >= 2);
        let mut free = Vec::new();
        for a in 1..m {
            for col in 0..a {
                if !(a == m - 1 && col == 0) {
                    free.push((a, col));
                }
            }
        }
        let flat = (0..m * m).map(|k| c[(k / m, k % m)]).collect();
        Self { m, c: flat, psi, free }
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn free_entries(&self) -> &[(usize, usize)] {
        &self.free
    }

    /// Full `B_s` implied by the free coefficients.
    pub fn coefficients(&self, theta: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut bs = vec![0.0; m * m];
        for (&(a, col), &v) in self.free.iter().zip(theta) {
            bs[a * m + col] = v;
        }
        let t = self.path_sums(&bs);
        let j = m - 1;
        let mut through = 0.0;
        for l in 1..j {
            through += bs[j * m + l] * t[l * m];
        }
        bs[j * m] = self.psi - through;
        bs
    }

    /// `(I - B')^{-1}` where `B'` is `B_s` with the row of `j` removed,
    /// accumulated as `I + B' + B'^2 + ...` until the power vanishes.
    fn path_sums(&self, bs: &[f64]) -> Vec<f64> {
        let m = self.m;
        let rows = m - 1;
        let mut total = vec![0.0; m * m];
        for k in 0..m {
            total[k * m + k] = 1.0;
        }
        let mut power = bs.to_vec();
        power[rows * m..].iter_mut().for_each(|v| *v = 0.0);
        let mut next = vec![0.0; m * m];
        for _ in 1..m {
            if power.iter().all(|&v| v == 0.0) {
                break;
            }
            total.iter_mut().zip(&power).for_each(|(t, p)| *t += p);
            for r in 0..rows {
                for col in 0..m {
                    let mut acc = 0.0;
                    for k in col + 1..r {
                        acc += power[r * m + k] * bs[k * m + col];
                    }
                    next[r * m + col] = acc;
                }
            }
            next[rows * m..].iter_mut().for_each(|v| *v = 0.0);
            std::mem::swap(&mut power, &mut next);
        }
        total
    }

    /// Objective value; writes the gradient with respect to the free
    /// coefficients into `grad`.
    pub fn eval(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let m = self.m;
        let j = m - 1;
        let mut bs = vec![0.0; m * m];
        for (&(a, col), &v) in self.free.iter().zip(theta) {
            bs[a * m + col] = v;
        }
        let t = self.path_sums(&bs);
        let mut through = 0.0;
        for l in 1..j {
            through += bs[j * m + l] * t[l * m];
        }
        bs[j * m] = self.psi - through;

        // g[a] = -2 C r_a with r_a = e_a - b_a
        let mut value = 0.0;
        let mut g = vec![0.0; m * m];
        let mut r = vec![0.0; m];
        for a in 1..m {
            for k in 0..m {
                r[k] = -bs[a * m + k];
            }
            r[a] += 1.0;
            for k in 0..m {
                let row = &self.c[k * m..(k + 1) * m];
                let cr: f64 = row.iter().zip(&r).map(|(p, q)| p * q).sum();
                value += r[k] * cr;
                g[a * m + k] = -2.0 * cr;
            }
        }

        let gj0 = g[j * m];
        for (slot, &(a, col)) in grad.iter_mut().zip(&self.free) {
            let t_col = t[col * m];
            *slot = if a == j {
                g[j * m + col] - gj0 * t_col
            } else {
                // w_a = sum_l beta_{j,l} T_{l,a}
                let mut w = 0.0;
                for l in a..j {
                    w += bs[j * m + l] * t[l * m + a];
                }
                g[a * m + col] - gj0 * w * t_col
            };
        }
        value
    }
}

/// Fit of the complete DAG of `order` subject to `C(i -> j) = psi`.
///
/// Requires `i` to precede `j`. Equations outside the block between `i` and
/// `j` keep their closed-form regression coefficients. Starts from the
/// unrestricted coefficients with `beta_{j,i}` overwritten by the constraint;
/// if BFGS does not converge, `cfg.restarts` perturbed restarts are tried and
/// the best objective is kept.
pub fn fit_ordering_constrained(
    sigma_hat: &CovMatrix,
    order: &Ordering,
    n: usize,
    i: usize,
    j: usize,
    psi: f64,
    cfg: &SolverConfig,
) -> Result<OrderingFit> {
    let d = sigma_hat.d();
    if !psi.is_finite() {
        return Err(Error::InvalidArgument(format!("effect value {psi} is not finite")));
    }
    let pos = order.positions();
    if i == j || pos[i] >= pos[j] {
        return Err(Error::InvalidArgument(format!(
            "constrained fit needs node {i} before node {j} in {order:?}"
        )));
    }
    let (pi, pj) = (pos[i], pos[j]);
    let m = pj - pi + 1;
    let (chol, cond) = factor_order(sigma_hat, order)?;
    let perm = order.as_slice();

    // C = Sigma_{S,S | P}
    let c = DMatrix::from_fn(m, m, |a, b| {
        let (ra, rb) = (pi + a, pi + b);
        let mut acc = sigma_hat.get(perm[ra], perm[rb]);
        for k in 0..pi {
            acc -= chol.entry(ra, k) * chol.entry(rb, k);
        }
        acc
    });
    let problem = ReducedProblem::new(&c, psi);

    // unrestricted start
    let theta0: Vec<f64> = {
        let rows: Vec<Vec<f64>> = (1..m).map(|a| regression_row(&chol, pi + a, pi)).collect();
        problem.free_entries().iter().map(|&(a, col)| rows[a - 1][col]).collect()
    };

    let objective = |x: &[f64], g: &mut [f64]| problem.eval(x, g);
    let mut best = optim::minimize(objective, &theta0, &cfg.bfgs);
    if !best.converged && problem.dim() > 0 {
        let mut rng = SimRng::seed_from_u64(cfg.seed);
        let noise = Normal::new(0.0, cfg.restart_std).expect("positive std");
        for _ in 0..cfg.restarts {
            let start: Vec<f64> = theta0.iter().map(|v| v + noise.sample(&mut rng)).collect();
            let run = optim::minimize(objective, &start, &cfg.bfgs);
            let better = run.f < best.f;
            let any_converged = run.converged || best.converged;
            if better {
                best = run;
            }
            best.converged = any_converged;
        }
    }

    let block_min = best.f;
    let unrestricted_block: f64 = cond[pi + 1..=pj].iter().sum();
    let rss_total: f64 = cond.iter().sum();
    let rss = rss_total - unrestricted_block + block_min;
    let loglik = profile_loglik(rss, n, d)?;
    if !best.converged {
        return Err(Error::Solver {
            best_loglik: loglik,
            iterations: best.iterations,
        });
    }

    let bs = problem.coefficients(&best.x);
    let mut b_hat = DMatrix::zeros(d, d);
    for r in 1..d {
        if r > pi && r <= pj {
            continue;
        }
        for (col, w) in regression_row(&chol, r, 0).into_iter().enumerate() {
            b_hat[(perm[r], perm[col])] = w;
        }
    }
    for a in 1..m {
        let r = pi + a;
        for col in 0..a {
            b_hat[(perm[r], perm[pi + col])] = bs[a * m + col];
        }
        // coefficients on P: L_P^{-T} (l_{k,P} - sum_c b_{k,c} l_{c,P})
        if pi > 0 {
            let mut z: Vec<f64> = (0..pi)
                .map(|k| {
                    let mut acc = chol.entry(r, k);
                    for col in 0..a {
                        acc -= bs[a * m + col] * chol.entry(pi + col, k);
                    }
                    acc
                })
                .collect();
            for q in (0..pi).rev() {
                let mut acc = z[q];
                for p in q + 1..pi {
                    acc -= chol.entry(p, q) * z[p];
                }
                z[q] = acc / chol.entry(q, q);
            }
            for (k, w) in z.into_iter().enumerate() {
                b_hat[(perm[r], perm[k])] = w;
            }
        }
    }

    let effect = reduced_effect(&bs, m);
    if (effect - psi).abs() > cfg.constraint_tol * (1.0 + psi.abs()) {
        return Err(Error::Numerical(format!(
            "constraint residual {:.3e} exceeds tolerance",
            (effect - psi).abs()
        )));
    }
    Ok(OrderingFit {
        order: order.clone(),
        loglik,
        rss,
        b_hat,
        sigma2_hat: rss / d as f64,
        effect_hat: Some(effect),
    })
}

/// `(I - B_s)^{-1}_{m-1, 0}` by forward substitution.
fn reduced_effect(bs: &[f64], m: usize) -> f64 {
    let mut t = vec![0.0; m];
    t[0] = 1.0;
    for a in 1..m {
        t[a] = (0..a).map(|c| bs[a * m + c] * t[c]).sum();
    }
    t[m - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{random_dag, total_effect, Density};
    use crate::model::{covariance_of, WeightedDag};
    use approx::assert_abs_diff_eq;

    fn random_cov(d: usize, seed: u64) -> CovMatrix {
        let mut rng = SimRng::seed_from_u64(seed);
        let dag = random_dag(d, 0.4, Density::Dense, &mut rng);
        let data = crate::graphs::sample_lsem(&dag, 60, &mut rng, None).unwrap();
        crate::model::empirical_cov(&data).unwrap()
    }

    #[test]
    fn profile_loglik_rejects_nonpositive_rss() {
        assert!(profile_loglik(0.0, 10, 2).is_err());
        assert!(profile_loglik(-1.0, 10, 2).is_err());
    }

    #[test]
    fn profile_loglik_d1_specialization() {
        let (n, rss) = (7usize, 1.7);
        let expected = -(n as f64 / 2.0) * ((2.0 * std::f64::consts::PI * rss).ln() + 1.0);
        assert_abs_diff_eq!(profile_loglik(rss, n, 1).unwrap(), expected, epsilon = 1e-12);
        assert!(profile_loglik(1.0, n, 3).unwrap() > profile_loglik(1.1, n, 3).unwrap());
    }

    #[test]
    fn fit_recovers_population_coefficients() {
        let mut rng = SimRng::seed_from_u64(42);
        let dag = random_dag(5, 0.5, Density::Dense, &mut rng);
        let sigma = covariance_of(&dag);
        let fit = fit_ordering(&sigma, &dag.topological_order(), 100, None).unwrap();
        for (a, b) in fit.b_hat.iter().zip(dag.b().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(fit.sigma2_hat, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn symmetric_two_node_orders_tie() {
        let s = CovMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let a = fit_ordering(&s, &Ordering::identity(2), 50, None).unwrap();
        let b = fit_ordering(&s, &Ordering::new(vec![1, 0]).unwrap(), 50, None).unwrap();
        assert_eq!(a.loglik, b.loglik);
    }

    #[test]
    fn order_fit_below_saturated_gaussian() {
        let s = random_cov(4, 1);
        let n = 60;
        let saturated = -(n as f64 / 2.0)
            * ((2.0 * std::f64::consts::PI).ln() * 4.0 + s.matrix().determinant().ln() + 4.0);
        let fit = fit_ordering(&s, &Ordering::new(vec![2, 0, 3, 1]).unwrap(), n, None).unwrap();
        assert!(fit.loglik <= saturated + 1e-9);
    }

    #[test]
    fn effect_hat_matches_total_effect_of_b_hat() {
        let s = random_cov(5, 8);
        let order = Ordering::new(vec![3, 0, 4, 1, 2]).unwrap();
        let fit = fit_ordering(&s, &order, 60, Some((0, 2))).unwrap();
        let dag = WeightedDag::new(fit.b_hat.clone(), 1.0).unwrap();
        assert_abs_diff_eq!(fit.effect_hat.unwrap(), total_effect(&dag, 0, 2), epsilon = 1e-12);
    }

    #[test]
    fn prefix_bound_edge_cases() {
        let s = random_cov(4, 2);
        let full = Ordering::new(vec![1, 3, 0, 2]).unwrap();
        let fit = fit_ordering(&s, &full, 80, None).unwrap();
        let bound = prefix_bound(&s, &full.clone().into(), 80, 4).unwrap();
        assert_eq!(bound, fit.loglik);
        let single = prefix_bound(&s, &PrefixOrdering::new(vec![3], 4).unwrap(), 80, 4).unwrap();
        assert_eq!(single, profile_loglik(s.get(3, 3), 80, 4).unwrap());
        assert!(prefix_bound(&s, &PrefixOrdering::new(vec![], 4).unwrap(), 80, 4).is_err());
    }

    #[test]
    fn constraint_at_unrestricted_effect_is_inactive() {
        let s = random_cov(5, 3);
        let order = Ordering::new(vec![4, 0, 2, 1, 3]).unwrap();
        let free = fit_ordering(&s, &order, 60, Some((0, 3))).unwrap();
        let fixed =
            fit_ordering_constrained(&s, &order, 60, 0, 3, free.effect_hat.unwrap(), &SolverConfig::default()).unwrap();
        assert_abs_diff_eq!(fixed.loglik, free.loglik, epsilon = 1e-8);
    }

    #[test]
    fn two_node_constrained_fit_is_closed_form() {
        let s = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.5])).unwrap();
        let psi = -0.4;
        let fit = fit_ordering_constrained(&s, &Ordering::identity(2), 30, 0, 1, psi, &SolverConfig::default())
            .unwrap();
        let rss = 2.0 + (1.5 - 2.0 * psi * 0.6 + psi * psi * 2.0);
        assert_abs_diff_eq!(fit.rss, rss, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.b_hat[(1, 0)], psi, epsilon = 1e-15);
    }

    #[test]
    fn constrained_fit_requires_source_first() {
        let s = random_cov(3, 4);
        let order = Ordering::new(vec![2, 1, 0]).unwrap();
        assert!(fit_ordering_constrained(&s, &order, 60, 0, 1, 0.3, &SolverConfig::default()).is_err());
    }
}
