//! Enumeration of plausible causal orderings.
//!
//! Orderings are grown from the source end. The profile log-likelihood of a
//! prefix upper-bounds that of every completion, so a prefix whose bound is
//! already rejected by the threshold is dropped together with its subtree.

use std::collections::HashMap;

use crate::chisq::chisq_quantile;
use crate::error::{Error, Result};
use crate::linalg::IncrementalCholesky;
use crate::mle::profile_loglik;
use crate::model::{CovMatrix, Ordering};

/// Log-likelihood the orderings are compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// Start from the variance-sort ordering and raise to the best ordering
    /// found, so the final reference is the maximum over the model.
    Adaptive,
    Fixed(f64),
}

/// An ordering survives when `2 (reference - loglik) <= crit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub reference: Reference,
    pub crit: f64,
}

impl Threshold {
    /// Adaptive reference with the `chi2_{d, 1 - alpha}` critical value.
    pub fn lrt(d: usize, alpha: f64) -> Self {
        Self {
            reference: Reference::Adaptive,
            crit: chisq_quantile(d, 1.0 - alpha),
        }
    }
}

/// Every ordering passing a threshold, with the final reference value.
#[derive(Debug, Clone, PartialEq)]
pub struct Survivors {
    pub orders: Vec<Ordering>,
    pub logliks: Vec<f64>,
    pub reference: f64,
    /// Prefixes whose bound was evaluated.
    pub visited: usize,
}

/// Plausible orderings for the effect of `i` on `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlausibleOrderings {
    /// Sorted by decreasing log-likelihood; one representative per arrangement
    /// of the predecessors of `i`.
    pub orders: Vec<Ordering>,
    pub logliks: Vec<f64>,
    /// `Sigma_{j,i|p(i)} / Sigma_{i,i|p(i)}` of every surviving ordering with
    /// `i` before `j`; sorted and deduplicated.
    pub start_effects: Vec<f64>,
    pub l1_hat: f64,
    /// Best surviving ordering with `j` before `i`, and its log-likelihood.
    pub zero_order: Option<(Ordering, f64)>,
    /// Number of survivors before the predecessor arrangements were collapsed.
    pub raw_count: usize,
    pub i: usize,
    pub j: usize,
}

impl PlausibleOrderings {
    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }
}

/// Greedy ordering by conditional variances: at each step append the node
/// with the smallest variance given the nodes chosen so far. Ties go to the
/// lowest index.
pub fn variance_sort_order(sigma_hat: &CovMatrix) -> Result<Ordering> {
    let d = sigma_hat.d();
    let mut chol = IncrementalCholesky::new(sigma_hat.matrix());
    let mut used = vec![false; d];
    for _ in 0..d {
        let mut best: Option<(usize, f64)> = None;
        for v in (0..d).filter(|&v| !used[v]) {
            let var = chol.push(v)?;
            chol.pop();
            if best.is_none_or(|(_, b)| var < b) {
                best = Some((v, var));
            }
        }
        let (v, _) = best.expect("a node remains");
        chol.push(v)?;
        used[v] = true;
    }
    Ordering::new(chol.nodes().to_vec())
}

struct Search<'a> {
    chol: IncrementalCholesky<'a>,
    used: Vec<bool>,
    n: usize,
    d: usize,
    reference: f64,
    adaptive: bool,
    crit: f64,
    found: Vec<(Vec<usize>, f64)>,
    visited: usize,
}

impl Search<'_> {
    fn expand(&mut self, rss: f64) -> Result<()> {
        let depth = self.chol.len();
        for v in 0..self.d {
            if self.used[v] {
                continue;
            }
            let extended = rss + self.chol.push(v)?;
            self.visited += 1;
            let bound = profile_loglik(extended, self.n, self.d)?;
            if 2.0 * (self.reference - bound) <= self.crit {
                self.used[v] = true;
                if depth + 1 == self.d {
                    if self.adaptive && bound > self.reference {
                        self.reference = bound;
                    }
                    self.found.push((self.chol.nodes().to_vec(), bound));
                } else {
                    self.expand(extended)?;
                }
                self.used[v] = false;
            }
            self.chol.pop();
        }
        Ok(())
    }
}

/// Depth-first search over orderings, children in ascending node index.
pub fn surviving_orderings(sigma_hat: &CovMatrix, n: usize, threshold: Threshold) -> Result<Survivors> {
    let d = sigma_hat.d();
    if !(threshold.crit >= 0.0) {
        return Err(Error::InvalidArgument(format!("critical value {} must be >= 0", threshold.crit)));
    }
    let (reference, adaptive) = match threshold.reference {
        Reference::Adaptive => {
            let start = variance_sort_order(sigma_hat)?;
            let fit = crate::mle::fit_ordering(sigma_hat, &start, n, None)?;
            (fit.loglik, true)
        }
        Reference::Fixed(value) => (value, false),
    };
    let mut search = Search {
        chol: IncrementalCholesky::new(sigma_hat.matrix()),
        used: vec![false; d],
        n,
        d,
        reference,
        adaptive,
        crit: threshold.crit,
        found: Vec::new(),
        visited: 0,
    };
    search.expand(0.0)?;

    let reference = search.reference;
    let crit = search.crit;
    let mut kept: Vec<(Vec<usize>, f64)> = search
        .found
        .into_iter()
        .filter(|(_, ll)| 2.0 * (reference - ll) <= crit)
        .collect();
    // stable: ties keep DFS (lexicographic) order
    kept.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (orders, logliks) = kept
        .into_iter()
        .map(|(perm, ll)| (Ordering::new(perm).expect("search yields permutations"), ll))
        .unzip();
    Ok(Survivors {
        orders,
        logliks,
        reference,
        visited: search.visited,
    })
}

/// Plausible orderings at level `alpha` against the adaptive maximum.
pub fn possible_orderings(
    sigma_hat: &CovMatrix,
    n: usize,
    i: usize,
    j: usize,
    alpha: f64,
) -> Result<PlausibleOrderings> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    possible_orderings_with(sigma_hat, n, i, j, Threshold::lrt(sigma_hat.d(), alpha))
}

/// Plausible orderings for an arbitrary threshold.
pub fn possible_orderings_with(
    sigma_hat: &CovMatrix,
    n: usize,
    i: usize,
    j: usize,
    threshold: Threshold,
) -> Result<PlausibleOrderings> {
    let d = sigma_hat.d();
    if i >= d || j >= d || i == j {
        return Err(Error::InvalidArgument(format!("invalid node pair ({i}, {j}) for d = {d}")));
    }
    let survivors = surviving_orderings(sigma_hat, n, threshold)?;
    let raw_count = survivors.orders.len();

    // collapse arrangements of the predecessors of i; input is sorted by
    // decreasing loglik, so the first representative of each key is the best
    let mut seen: HashMap<(Vec<usize>, Vec<usize>), ()> = HashMap::new();
    let mut orders = Vec::new();
    let mut logliks = Vec::new();
    for (order, ll) in survivors.orders.into_iter().zip(survivors.logliks) {
        let pos_i = order.position(i);
        let mut before: Vec<usize> = order.as_slice()[..pos_i].to_vec();
        before.sort_unstable();
        let key = (before, order.as_slice()[pos_i..].to_vec());
        if seen.insert(key, ()).is_none() {
            orders.push(order);
            logliks.push(ll);
        }
    }

    let mut start_effects = Vec::new();
    let mut zero_order = None;
    for (order, &ll) in orders.iter().zip(&logliks) {
        if order.precedes(i, j) {
            start_effects.push(crate::graphs::effect_from_cov(sigma_hat, order, i, j)?);
        } else if zero_order.is_none() {
            zero_order = Some((order.clone(), ll));
        }
    }
    start_effects.sort_by(f64::total_cmp);
    start_effects.dedup();

    Ok(PlausibleOrderings {
        orders,
        logliks,
        start_effects,
        l1_hat: survivors.reference,
        zero_order,
        raw_count,
        i,
        j,
    })
}

/// Maximum-likelihood ordering by branch and bound (exact).
pub fn max_likelihood_ordering(sigma_hat: &CovMatrix, n: usize) -> Result<(Ordering, f64)> {
    let s = surviving_orderings(
        sigma_hat,
        n,
        Threshold {
            reference: Reference::Adaptive,
            crit: 0.0,
        },
    )?;
    Ok((s.orders[0].clone(), s.logliks[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn variance_sort_on_diagonal() {
        let s = CovMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]))).unwrap();
        assert_eq!(variance_sort_order(&s).unwrap().as_slice(), &[1, 2, 0]);
    }

    #[test]
    fn variance_sort_ties_go_to_lowest_index() {
        let s = CovMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(variance_sort_order(&s).unwrap().as_slice(), &[0, 1, 2]);
    }

    #[test]
    fn two_node_identity_keeps_both_orders() {
        let s = CovMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let p = possible_orderings(&s, 100, 0, 1, 0.05).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.start_effects, vec![0.0]);
        assert!(p.zero_order.is_some());
        assert!(p.logliks.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = CovMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert!(possible_orderings(&s, 10, 0, 0, 0.05).is_err());
        assert!(possible_orderings(&s, 10, 0, 1, 0.0).is_err());
        assert!(possible_orderings(&s, 10, 0, 3, 0.05).is_err());
    }
}
