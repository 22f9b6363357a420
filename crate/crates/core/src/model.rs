//! Data types for equal-variance linear SEMs and their covariance-level
//! characterization.
//!
//! An LSEM on `d` nodes is `X = B X + eps` with `eps ~ N(0, sigma2 I)`. Entry
//! `b[(k, p)]` is the coefficient of parent `p` in the equation for `k`.
//! Node indices are 0-based throughout the library.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, IncrementalCholesky};

const SYMMETRY_REL_TOL: f64 = 1e-12;

/// Edge-coefficient matrix with acyclic support plus a common error variance.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDag {
    b: DMatrix<f64>,
    sigma2: f64,
}

impl WeightedDag {
    pub fn new(b: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        let d = b.nrows();
        if b.ncols() != d {
            return Err(Error::InvalidArgument(format!(
                "coefficient matrix must be square, got {}x{}",
                d,
                b.ncols()
            )));
        }
        if d < 2 {
            return Err(Error::InvalidArgument("a DAG needs at least 2 nodes".into()));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidArgument(format!("error variance must be positive, got {sigma2}")));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite edge coefficient".into()));
        }
        if (0..d).any(|k| b[(k, k)] != 0.0) {
            return Err(Error::InvalidArgument("self-loops are not allowed".into()));
        }
        if topological_sort(&b).is_none() {
            return Err(Error::InvalidArgument("edge support contains a cycle".into()));
        }
        Ok(Self { b, sigma2 })
    }

    pub fn d(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Coefficient of `parent` in the structural equation of `child`.
    pub fn coefficient(&self, child: usize, parent: usize) -> f64 {
        self.b[(child, parent)]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.b[(to, from)] != 0.0
    }

    /// A topological order of the support (Kahn's algorithm, smallest index first).
    pub fn topological_order(&self) -> Ordering {
        Ordering(topological_sort(&self.b).expect("validated acyclic"))
    }

    /// True when every edge points forward in `order`.
    pub fn is_valid_order(&self, order: &Ordering) -> bool {
        let pos = order.positions();
        let d = self.d();
        (0..d).all(|to| (0..d).all(|from| !self.has_edge(from, to) || pos[from] < pos[to]))
    }

    /// Whether a directed path `from -> ... -> to` exists in the support.
    pub fn has_directed_path(&self, from: usize, to: usize) -> bool {
        let d = self.d();
        let mut seen = vec![false; d];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            for v in 0..d {
                if !seen[v] && self.has_edge(u, v) {
                    if v == to {
                        return true;
                    }
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        false
    }
}

fn topological_sort(b: &DMatrix<f64>) -> Option<Vec<usize>> {
    let d = b.nrows();
    let mut indegree: Vec<usize> = (0..d)
        .map(|to| (0..d).filter(|&from| b[(to, from)] != 0.0).count())
        .collect();
    let mut done = vec![false; d];
    let mut order = Vec::with_capacity(d);
    while order.len() < d {
        let next = (0..d).find(|&v| !done[v] && indegree[v] == 0)?;
        done[next] = true;
        order.push(next);
        for to in 0..d {
            if b[(to, next)] != 0.0 {
                indegree[to] -= 1;
            }
        }
    }
    Some(order)
}

/// Symmetric positive definite covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    sigma: DMatrix<f64>,
}

impl CovMatrix {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if sigma.ncols() != d || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "covariance must be square and nonempty, got {}x{}",
                d,
                sigma.ncols()
            )));
        }
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite covariance entry".into()));
        }
        let scale = linalg::max_diag(&sigma).max(f64::MIN_POSITIVE);
        for r in 0..d {
            for c in 0..r {
                if (sigma[(r, c)] - sigma[(c, r)]).abs() > SYMMETRY_REL_TOL * scale {
                    return Err(Error::Numerical(format!("covariance is not symmetric at ({r}, {c})")));
                }
            }
        }
        if linalg::cholesky(&sigma).is_none() {
            return Err(Error::Numerical("covariance is not positive definite".into()));
        }
        Ok(Self { sigma })
    }

    pub fn d(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.sigma[(r, c)]
    }
}

/// `n x d` sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    column_names: Option<Vec<String>>,
}

impl Dataset {
    /// Requires `n >= d + 1` and finite entries.
    pub fn new(x: DMatrix<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        let (n, d) = x.shape();
        if d == 0 {
            return Err(Error::DegenerateData("dataset has no columns".into()));
        }
        if n < d + 1 {
            return Err(Error::DegenerateData(format!(
                "need at least d + 1 = {} samples, got {n}",
                d + 1
            )));
        }
        if let Some((idx, _)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            // column-major storage
            return Err(Error::DegenerateData(format!(
                "non-finite value at row {}, column {}",
                idx % n + 1,
                idx / n + 1
            )));
        }
        if let Some(names) = &column_names {
            if names.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "{} column names for {d} columns",
                    names.len()
                )));
            }
        }
        Ok(Self { x, column_names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// New dataset made of the given rows (repetitions allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = DMatrix::from_fn(rows.len(), self.d(), |r, c| self.x[(rows[r], c)]);
        Self::new(x, self.column_names.clone())
    }
}

/// Causal order: `perm[k]` is the node in position `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ordering(Vec<usize>);

impl Ordering {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let d = perm.len();
        let mut seen = vec![false; d];
        for &v in &perm {
            if v >= d || seen[v] {
                return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation of 0..{d}")));
            }
            seen[v] = true;
        }
        Ok(Self(perm))
    }

    pub fn identity(d: usize) -> Self {
        Self((0..d).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `positions()[v]` is the position of node `v`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (k, &v) in self.0.iter().enumerate() {
            pos[v] = k;
        }
        pos
    }

    pub fn position(&self, v: usize) -> usize {
        self.0.iter().position(|&u| u == v).expect("node in ordering")
    }

    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.position(a) < self.position(b)
    }

    /// Parent set of `v` in the complete DAG of this order.
    pub fn predecessors(&self, v: usize) -> &[usize] {
        &self.0[..self.position(v)]
    }

    /// Renders with 1-based labels, e.g. `(2,3,1)`.
    pub fn one_based(&self) -> String {
        let labels: Vec<String> = self.0.iter().map(|v| (v + 1).to_string()).collect();
        format!("({})", labels.join(","))
    }
}

/// Injective partial order over `0..d`, grown from the source end.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrefixOrdering {
    prefix: Vec<usize>,
}

impl PrefixOrdering {
    pub fn new(prefix: Vec<usize>, d: usize) -> Result<Self> {
        let mut seen = vec![false; d];
        for &v in &prefix {
            if v >= d || seen[v] {
                return Err(Error::InvalidArgument(format!("{prefix:?} is not injective over 0..{d}")));
            }
            seen[v] = true;
        }
        Ok(Self { prefix })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.prefix
    }

    pub fn len(&self) -> usize {
        self.prefix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefix.is_empty()
    }
}

impl From<Ordering> for PrefixOrdering {
    fn from(o: Ordering) -> Self {
        Self { prefix: o.0 }
    }
}

/// Population covariance `sigma2 (I - B)^{-1} (I - B)^{-T}`.
pub fn covariance_of(dag: &WeightedDag) -> CovMatrix {
    let t = linalg::neumann_inverse(dag.b());
    let mut sigma = (&t * t.transpose()) * dag.sigma2();
    // exact symmetry
    let d = sigma.nrows();
    for r in 0..d {
        for c in 0..r {
            let v = 0.5 * (sigma[(r, c)] + sigma[(c, r)]);
            sigma[(r, c)] = v;
            sigma[(c, r)] = v;
        }
    }
    CovMatrix { sigma }
}

/// Mean-centred empirical covariance with denominator `n`.
pub fn empirical_cov(data: &Dataset) -> Result<CovMatrix> {
    let x = data.x();
    let n = x.nrows();
    let means = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let mut sigma = centered.tr_mul(&centered) / n as f64;
    let d = sigma.nrows();
    for r in 0..d {
        for c in 0..r {
            let v = 0.5 * (sigma[(r, c)] + sigma[(c, r)]);
            sigma[(r, c)] = v;
            sigma[(c, r)] = v;
        }
    }
    CovMatrix::new(sigma).map_err(|e| match e {
        Error::Numerical(msg) => Error::DegenerateData(format!("empirical covariance: {msg}")),
        other => other,
    })
}

/// Conditional covariance `Sigma_{j,i|S}` via a Cholesky solve on `Sigma_{S,S}`.
pub fn conditional_cov(sigma: &CovMatrix, j: usize, i: usize, s: &[usize]) -> Result<f64> {
    let d = sigma.d();
    if j >= d || i >= d || s.iter().any(|&k| k >= d) {
        return Err(Error::InvalidArgument("node index out of range".into()));
    }
    if s.contains(&i) || s.contains(&j) {
        return Err(Error::InvalidArgument(format!(
            "conditioning set {s:?} contains a target node ({j} or {i})"
        )));
    }
    let base = sigma.get(j, i);
    if s.is_empty() {
        return Ok(base);
    }
    let block = linalg::submatrix(sigma.matrix(), s, s);
    let l = linalg::cholesky(&block).ok_or_else(|| Error::Conditioning {
        set: s.to_vec(),
        pivot: 0.0,
    })?;
    let mut u: Vec<f64> = s.iter().map(|&k| sigma.get(k, i)).collect();
    let mut w: Vec<f64> = s.iter().map(|&k| sigma.get(k, j)).collect();
    linalg::forward_solve(&l, &mut u);
    linalg::forward_solve(&l, &mut w);
    let dot: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
    Ok(base - dot)
}

/// Conditional variance of each node given its predecessors in `order`,
/// listed by position. All entries are equal iff `sigma` lies in the
/// equal-variance model of the complete DAG of `order`.
pub fn equal_variance_residuals(sigma: &CovMatrix, order: &Ordering) -> Result<Vec<f64>> {
    let mut chol = IncrementalCholesky::new(sigma.matrix());
    order.as_slice().iter().map(|&v| chol.push(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chain(b: f64) -> WeightedDag {
        let mut m = DMatrix::zeros(2, 2);
        m[(1, 0)] = b;
        WeightedDag::new(m, 1.0).unwrap()
    }

    #[test]
    fn covariance_of_edgeless_is_identity() {
        let dag = WeightedDag::new(DMatrix::zeros(3, 3), 1.0).unwrap();
        assert_eq!(covariance_of(&dag).matrix(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn covariance_of_two_node_chain() {
        let b = 0.7;
        let s = covariance_of(&chain(b));
        assert_abs_diff_eq!(s.get(0, 0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.get(0, 1), b, epsilon = 1e-15);
        assert_abs_diff_eq!(s.get(1, 1), 1.0 + b * b, epsilon = 1e-15);
    }

    #[test]
    fn rejects_cycles_and_self_loops() {
        let mut m = DMatrix::zeros(3, 3);
        m[(1, 0)] = 1.0;
        m[(2, 1)] = 1.0;
        m[(0, 2)] = 1.0;
        assert!(WeightedDag::new(m, 1.0).is_err());
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 0.5;
        assert!(WeightedDag::new(m, 1.0).is_err());
        assert!(WeightedDag::new(DMatrix::zeros(2, 2), 0.0).is_err());
    }

    #[test]
    fn empirical_cov_degenerate_inputs() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let err = Dataset::new(x.clone(), None).and_then(|d| empirical_cov(&d));
        assert!(matches!(err, Err(Error::DegenerateData(_))));

        let x = DMatrix::from_element(5, 1, 3.0);
        let data = Dataset::new(x, None).unwrap();
        assert!(matches!(empirical_cov(&data), Err(Error::DegenerateData(_))));

        // enough rows but a zero-variance column
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 2.0, 0.0, 0.5, 0.0]);
        let data = Dataset::new(x, None).unwrap();
        assert!(matches!(empirical_cov(&data), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn empirical_cov_uses_n_denominator_and_centres() {
        let x = DMatrix::from_row_slice(4, 2, &[11.0, 1.0, 9.0, -1.0, 10.0, 2.0, 10.0, -2.0]);
        let s = empirical_cov(&Dataset::new(x, None).unwrap()).unwrap();
        assert_abs_diff_eq!(s.get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.get(1, 1), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.get(0, 1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn conditional_cov_identity_cases() {
        let s = CovMatrix::new(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(conditional_cov(&s, 0, 1, &[2, 3]).unwrap(), 0.0);
        assert_eq!(conditional_cov(&s, 2, 2, &[]).unwrap(), 1.0);
        assert!(conditional_cov(&s, 0, 1, &[1]).is_err());
    }

    #[test]
    fn conditional_cov_chain_cancels() {
        let b = -1.3;
        let s = covariance_of(&chain(b));
        assert_abs_diff_eq!(conditional_cov(&s, 1, 1, &[0]).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn residuals_of_diag_counterexample() {
        let s = CovMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]))).unwrap();
        let r = equal_variance_residuals(&s, &Ordering::identity(2)).unwrap();
        assert_eq!(r, vec![1.0, 2.0]);
    }

    #[test]
    fn first_residual_is_marginal_variance() {
        let s = covariance_of(&chain(0.4));
        let order = Ordering::new(vec![1, 0]).unwrap();
        let r = equal_variance_residuals(&s, &order).unwrap();
        assert_abs_diff_eq!(r[0], s.get(1, 1), epsilon = 1e-15);
    }

    #[test]
    fn ordering_validation() {
        assert!(Ordering::new(vec![0, 2, 1]).is_ok());
        assert!(Ordering::new(vec![0, 0, 1]).is_err());
        assert!(Ordering::new(vec![0, 3, 1]).is_err());
        assert!(PrefixOrdering::new(vec![2, 0], 3).is_ok());
        assert!(PrefixOrdering::new(vec![2, 2], 3).is_err());
        let o = Ordering::new(vec![2, 0, 1]).unwrap();
        assert_eq!(o.predecessors(1), &[2, 0]);
        assert_eq!(o.one_based(), "(3,1,2)");
    }
}
