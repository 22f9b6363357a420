//! Total effects, random DAG generation and LSEM sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, IncrementalCholesky};
use crate::model::{CovMatrix, Dataset, Ordering, WeightedDag};

/// Standard deviation of edge weights around `beta_mean`. Kept small so that
/// a small `beta_mean` really means weak edges and an uncertain structure.
pub const EDGE_WEIGHT_SD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Density {
    Sparse,
    Dense,
}

impl Density {
    pub fn edge_probability(self) -> f64 {
        match self {
            Density::Sparse => 0.5,
            Density::Dense => 0.9,
        }
    }
}

impl std::str::FromStr for Density {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Density::Sparse),
            "dense" => Ok(Density::Dense),
            other => Err(Error::InvalidArgument(format!("unknown density {other:?}"))),
        }
    }
}

impl std::fmt::Display for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Density::Sparse => "sparse",
            Density::Dense => "dense",
        })
    }
}

/// Total causal effect `C(i -> j) = (I - B)^{-1}_{j,i}`: the sum over directed
/// paths from `i` to `j` of the products of edge weights.
pub fn total_effect(dag: &WeightedDag, i: usize, j: usize) -> f64 {
    let d = dag.d();
    // (I - B) x = e_i, solved along a topological order
    let order = dag.topological_order();
    let mut x = vec![0.0; d];
    for &k in order.as_slice() {
        let mut acc = if k == i { 1.0 } else { 0.0 };
        for p in 0..d {
            let w = dag.coefficient(k, p);
            if w != 0.0 {
                acc += w * x[p];
            }
        }
        x[k] = acc;
    }
    x[j]
}

/// Effect of `i` on `j` read off a covariance at a given causal order:
/// `Sigma_{j,i|p(i)} / Sigma_{i,i|p(i)}`, zero when `j` precedes `i`.
pub fn effect_from_cov(sigma: &CovMatrix, order: &Ordering, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidArgument("effect of a node on itself".into()));
    }
    let pos = order.positions();
    if pos[j] < pos[i] {
        return Ok(0.0);
    }
    let mut chol = IncrementalCholesky::new(sigma.matrix());
    for &v in &order.as_slice()[..=pos[i]] {
        chol.push(v)?;
    }
    chol.push(j)?;
    let r = chol.len() - 1;
    Ok(chol.entry(r, r - 1) / chol.entry(r - 1, r - 1))
}

/// Draws a uniform permutation with Fisher-Yates.
pub fn random_permutation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..d).collect();
    for k in (1..d).rev() {
        let u = rng.random_range(0..=k);
        perm.swap(k, u);
    }
    perm
}

/// Random DAG plus the causal order it was generated from.
///
/// The order is a uniform permutation; every forward pair gets a weight from
/// `N(beta_mean, EDGE_WEIGHT_SD^2)` and is kept with the density's edge
/// probability. Errors are standard normal.
pub fn random_dag_with_order<R: Rng + ?Sized>(
    d: usize,
    beta_mean: f64,
    density: Density,
    rng: &mut R,
) -> (WeightedDag, Ordering) {
    assert!(d >= 2, "random_dag needs d >= 2");
    let perm = random_permutation(d, rng);
    let weight = Normal::new(beta_mean, EDGE_WEIGHT_SD).expect("finite parameters");
    let keep = density.edge_probability();
    let mut b = DMatrix::zeros(d, d);
    for to_pos in 1..d {
        for from_pos in 0..to_pos {
            let w: f64 = weight.sample(rng);
            let u: f64 = rng.random();
            if u < keep {
                b[(perm[to_pos], perm[from_pos])] = w;
            }
        }
    }
    let dag = WeightedDag::new(b, 1.0).expect("forward edges are acyclic");
    (dag, Ordering::new(perm).expect("permutation"))
}

pub fn random_dag<R: Rng + ?Sized>(d: usize, beta_mean: f64, density: Density, rng: &mut R) -> WeightedDag {
    random_dag_with_order(d, beta_mean, density, rng).0
}

/// Draws `n` i.i.d. rows `X = (I - B)^{-1} eps`.
///
/// Noise is `N(0, sigma2)` per node, or `N(0, error_variances[k])` when
/// per-node variances are given. Requires `n >= d + 1` so the result is a
/// valid [`Dataset`].
pub fn sample_lsem<R: Rng + ?Sized>(
    dag: &WeightedDag,
    n: usize,
    rng: &mut R,
    error_variances: Option<&[f64]>,
) -> Result<Dataset> {
    let d = dag.d();
    let sds: Vec<f64> = match error_variances {
        Some(v) => {
            if v.len() != d || v.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::InvalidArgument(
                    "error variances must be positive, one per node".into(),
                ));
            }
            v.iter().map(|x| x.sqrt()).collect()
        }
        None => vec![dag.sigma2().sqrt(); d],
    };
    let t = linalg::neumann_inverse(dag.b());
    let mut x = DMatrix::zeros(n, d);
    let mut eps = DVector::zeros(d);
    for r in 0..n {
        for k in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            eps[k] = sds[k] * z;
        }
        let row = &t * &eps;
        for k in 0..d {
            x[(r, k)] = row[k];
        }
    }
    Dataset::new(x, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::covariance_of;
    use crate::SimRng;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    /// Five-node graph with edges 3->1, 1->2, 1->4, 4->2, 3->5, 5->2 (1-based).
    fn example_dag(b21: f64, b41: f64, b24: f64) -> WeightedDag {
        let mut b = DMatrix::zeros(5, 5);
        b[(0, 2)] = -0.5;
        b[(1, 0)] = b21;
        b[(1, 3)] = b24;
        b[(1, 4)] = 0.25;
        b[(3, 0)] = b41;
        b[(4, 2)] = 0.5;
        WeightedDag::new(b, 1.0).unwrap()
    }

    #[test]
    fn total_effect_path_formula_on_example() {
        let dag = example_dag(0.3, 0.7, -1.1);
        assert_abs_diff_eq!(total_effect(&dag, 0, 1), 0.3 + 0.7 * -1.1, epsilon = 1e-15);
        assert_eq!(total_effect(&dag, 1, 0), 0.0);
    }

    #[test]
    fn cancelling_paths_give_zero_effect() {
        let dag = example_dag(0.25, -0.5, 0.5);
        assert_abs_diff_eq!(total_effect(&dag, 0, 1), 0.0, epsilon = 1e-15);
        let sigma = covariance_of(&dag);
        let order = dag.topological_order();
        assert_abs_diff_eq!(effect_from_cov(&sigma, &order, 0, 1).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn edgeless_graph_has_no_effects() {
        let dag = WeightedDag::new(DMatrix::zeros(4, 4), 2.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(total_effect(&dag, i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn effect_from_cov_single_edge() {
        let mut b = DMatrix::zeros(2, 2);
        b[(1, 0)] = -0.8;
        let dag = WeightedDag::new(b, 1.0).unwrap();
        let s = covariance_of(&dag);
        let e = effect_from_cov(&s, &Ordering::identity(2), 0, 1).unwrap();
        assert_abs_diff_eq!(e, -0.8, epsilon = 1e-14);
        assert_eq!(effect_from_cov(&s, &Ordering::new(vec![1, 0]).unwrap(), 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn random_dag_is_reproducible() {
        let a = random_dag(2, 0.5, Density::Sparse, &mut SimRng::seed_from_u64(11));
        let b = random_dag(2, 0.5, Density::Sparse, &mut SimRng::seed_from_u64(11));
        assert_eq!(a, b);
        let (dag, order) = random_dag_with_order(6, 0.5, Density::Dense, &mut SimRng::seed_from_u64(3));
        assert!(dag.is_valid_order(&order));
    }

    #[test]
    fn sampling_is_reproducible_and_unit_variances_match() {
        let dag = random_dag(4, 0.5, Density::Dense, &mut SimRng::seed_from_u64(5));
        let a = sample_lsem(&dag, 50, &mut SimRng::seed_from_u64(9), None).unwrap();
        let b = sample_lsem(&dag, 50, &mut SimRng::seed_from_u64(9), None).unwrap();
        let c = sample_lsem(&dag, 50, &mut SimRng::seed_from_u64(9), Some(&[1.0; 4])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn sample_lsem_rejects_bad_variances() {
        let dag = WeightedDag::new(DMatrix::zeros(2, 2), 1.0).unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        assert!(sample_lsem(&dag, 10, &mut rng, Some(&[1.0, 0.0])).is_err());
        assert!(sample_lsem(&dag, 10, &mut rng, Some(&[1.0])).is_err());
    }
}
