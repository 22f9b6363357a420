//! Dense BFGS with a backtracking Armijo line search.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    /// Stop when `max |grad| <= grad_tol * (1 + |f|)`.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// When the line search can no longer decrease `f`, the point is still
    /// reported as converged if `max |grad| <= stall_grad_tol * (1 + |f|)`.
    pub stall_grad_tol: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iter: 500,
            stall_grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_max: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

/// Minimizes `objective`, which writes the gradient into its second argument
/// and returns the function value.
pub fn minimize<F>(mut objective: F, x0: &[f64], cfg: &BfgsConfig) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    if n == 0 {
        return Minimum {
            x,
            f,
            grad_max: 0.0,
            iterations: 0,
            converged: true,
        };
    }

    let mut h = identity(n);
    let mut fresh_h = true;
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    for iter in 0..cfg.max_iter {
        let gmax = sup_norm(&g);
        if gmax <= cfg.grad_tol * (1.0 + f.abs()) {
            return Minimum { x, f, grad_max: gmax, iterations: iter, converged: true };
        }

        mat_vec(&h, &g, &mut dir);
        dir.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            h = identity(n);
            fresh_h = true;
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut f_new;
        loop {
            for k in 0..n {
                x_new[k] = x[k] + step * dir[k];
            }
            f_new = objective(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + ARMIJO_C1 * step * slope {
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                break;
            }
        }

        if step < MIN_STEP {
            if !fresh_h {
                h = identity(n);
                fresh_h = true;
                continue;
            }
            let converged = gmax <= cfg.stall_grad_tol * (1.0 + f.abs());
            return Minimum { x, f, grad_max: gmax, iterations: iter, converged };
        }

        for k in 0..n {
            s[k] = x_new[k] - x[k];
            y[k] = g_new[k] - g[k];
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;

        let sy = dot(&s, &y);
        if sy > 1e-300 && sy.is_finite() {
            if fresh_h {
                // Shanno-Phua scaling of the initial inverse Hessian
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                fresh_h = false;
            }
            mat_vec(&h, &y, &mut hy);
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            let coef = (1.0 + rho * yhy) * rho;
            for r in 0..n {
                for c in 0..n {
                    h[r * n + c] += coef * s[r] * s[c] - rho * (hy[r] * s[c] + s[r] * hy[c]);
                }
            }
        }
    }

    let gmax = sup_norm(&g);
    Minimum {
        converged: gmax <= cfg.grad_tol * (1.0 + f.abs()),
        x,
        f,
        grad_max: gmax,
        iterations: cfg.max_iter,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for k in 0..n {
        h[k * n + k] = 1.0;
    }
    h
}

fn mat_vec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for r in 0..n {
        out[r] = a[r * n..(r + 1) * n].iter().zip(x).map(|(p, q)| p * q).sum();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
