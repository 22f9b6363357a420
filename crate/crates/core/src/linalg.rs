use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative pivot threshold used by every Cholesky in the crate.
pub(crate) const PIVOT_REL_TOL: f64 = 1e-12;

pub(crate) fn max_diag(a: &DMatrix<f64>) -> f64 {
    a.diagonal().iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}

/// Cholesky factor of a principal submatrix, grown one node at a time.
///
/// Row `r` of the factor belongs to `nodes[r]`; the squared diagonal entry of
/// row `r` is the conditional variance of `nodes[r]` given all earlier nodes.
pub(crate) struct IncrementalCholesky<'a> {
    sigma: &'a DMatrix<f64>,
    nodes: Vec<usize>,
    factor: Vec<f64>,
    tol: f64,
}

impl<'a> IncrementalCholesky<'a> {
    pub(crate) fn new(sigma: &'a DMatrix<f64>) -> Self {
        let d = sigma.nrows();
        Self {
            sigma,
            nodes: Vec::with_capacity(d),
            factor: vec![0.0; d * d],
            tol: PIVOT_REL_TOL * max_diag(sigma),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.nodes.len()
    }

    pub(crate) fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    #[inline]
    pub(crate) fn entry(&self, row: usize, col: usize) -> f64 {
        self.factor[row * self.sigma.nrows() + col]
    }

    /// Appends `v` and returns its conditional variance given the current nodes.
    pub(crate) fn push(&mut self, v: usize) -> Result<f64> {
        let d = self.sigma.nrows();
        let m = self.nodes.len();
        let base = m * d;
        for r in 0..m {
            let mut acc = self.sigma[(v, self.nodes[r])];
            let row_r = r * d;
            for c in 0..r {
                acc -= self.factor[base + c] * self.factor[row_r + c];
            }
            self.factor[base + r] = acc / self.factor[row_r + r];
        }
        let mut diag = self.sigma[(v, v)];
        for c in 0..m {
            diag -= self.factor[base + c] * self.factor[base + c];
        }
        if !(diag > self.tol) {
            let mut set = self.nodes.clone();
            set.push(v);
            return Err(Error::Conditioning { set, pivot: diag });
        }
        self.factor[base + m] = diag.sqrt();
        self.nodes.push(v);
        Ok(diag)
    }

    pub(crate) fn pop(&mut self) {
        self.nodes.pop();
    }
}

/// Plain Cholesky with the crate-wide pivot rule. Returns the lower factor.
pub(crate) fn cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let tol = PIVOT_REL_TOL * max_diag(a);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for c in 0..=r {
            let mut acc = a[(r, c)];
            for k in 0..c {
                acc -= l[(r, k)] * l[(c, k)];
            }
            if r == c {
                if !(acc > tol) {
                    return None;
                }
                l[(r, r)] = acc.sqrt();
            } else {
                l[(r, c)] = acc / l[(c, c)];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub(crate) fn forward_solve(l: &DMatrix<f64>, b: &mut [f64]) {
    for r in 0..b.len() {
        let mut acc = b[r];
        for c in 0..r {
            acc -= l[(r, c)] * b[c];
        }
        b[r] = acc / l[(r, r)];
    }
}

pub(crate) fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
}

/// `(I - B)^{-1}` for a nilpotent `B`, summed as `I + B + B^2 + ...` until the
/// power vanishes (at most `d - 1` terms).
pub(crate) fn neumann_inverse(b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = b.nrows();
    let mut total = DMatrix::<f64>::identity(d, d);
    let mut power = b.clone();
    for _ in 1..d {
        if power.iter().all(|&x| x == 0.0) {
            break;
        }
        total += &power;
        power = &power * b;
    }
    total
}
