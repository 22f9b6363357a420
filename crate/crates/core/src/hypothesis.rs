//! Per-ordering tests of `C(i -> j) = psi`.
//!
//! A value is accepted when at least one plausible ordering fails to reject
//! it. With `i` before `j` the statistic compares the reference log-likelihood
//! with the fit constrained to `psi`; with `j` before `i` only `psi = 0` is
//! attainable and the unrestricted fit of the best such ordering is used.
//!
//! The LRT uses the maximum over the equal-variance model as reference and
//! chi-square critical values with `d` and `d - 1` degrees of freedom. The
//! split LRT evaluates the first half of the data at the restricted MLE of the
//! second half and uses the universal critical value `-2 log alpha`.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub use crate::chisq::chisq_quantile;
use crate::error::{Error, Result};
use crate::graphs::random_permutation;
use crate::mle::{self, SolverConfig};
use crate::model::{empirical_cov, CovMatrix, Dataset, Ordering};
use crate::ordersearch::{self, PlausibleOrderings, Reference, Threshold};
use crate::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lrt,
    Slrt,
    Bootstrap,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lrt => "lrt",
            Method::Slrt => "slrt",
            Method::Bootstrap => "bootstrap",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lrt" => Ok(Method::Lrt),
            "slrt" => Ok(Method::Slrt),
            "bootstrap" => Ok(Method::Bootstrap),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub alpha: f64,
    pub method: Method,
    /// Fraction of rows in the evaluation half of the split LRT.
    pub split_ratio: f64,
    /// Scan step; `None` picks `0.01 * max(1, |largest start effect|)`.
    pub step: Option<f64>,
    pub seed: u64,
    pub solver: SolverConfig,
    pub max_steps: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            method: Method::Lrt,
            split_ratio: 0.5,
            step: None,
            seed: 0,
            solver: SolverConfig::default(),
            max_steps: 1_000_000,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split ratio must lie in (0, 1), got {}",
                self.split_ratio
            )));
        }
        if let Some(step) = self.step {
            if !(step > 0.0) || !step.is_finite() {
                return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
            }
        }
        if self.method == Method::Bootstrap {
            return Err(Error::InvalidArgument("bootstrap is not a test-inversion method".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestVerdict {
    pub accepted: bool,
    /// Statistic of the accepting ordering, or the smallest excess over the
    /// critical value when every ordering rejects.
    pub stat: f64,
    pub crit: f64,
    pub order: Option<Ordering>,
}

impl TestVerdict {
    fn rejected() -> Self {
        Self {
            accepted: false,
            stat: f64::INFINITY,
            crit: 0.0,
            order: None,
        }
    }
}

/// Tests `C(i -> j) = psi` against a fixed set of plausible orderings.
#[derive(Debug, Clone)]
pub struct EffectTester {
    sigma_hat: CovMatrix,
    n: usize,
    plaus: PlausibleOrderings,
    reference: f64,
    crit_forward: f64,
    crit_zero: f64,
    solver: SolverConfig,
}

impl EffectTester {
    pub fn lrt(sigma_hat: CovMatrix, n: usize, plaus: PlausibleOrderings, alpha: f64, solver: SolverConfig) -> Self {
        let d = sigma_hat.d();
        let reference = plaus.l1_hat;
        Self {
            sigma_hat,
            n,
            plaus,
            reference,
            crit_forward: chisq_quantile(d, 1.0 - alpha),
            crit_zero: chisq_quantile(d - 1, 1.0 - alpha),
            solver,
        }
    }

    /// Split-LRT tester on the evaluation half; `reference` is the evaluation
    /// log-likelihood at the restricted MLE of the other half.
    pub fn slrt(
        sigma0: CovMatrix,
        n0: usize,
        plaus: PlausibleOrderings,
        reference: f64,
        alpha: f64,
        solver: SolverConfig,
    ) -> Self {
        let crit = universal_critical_value(alpha);
        Self {
            sigma_hat: sigma0,
            n: n0,
            plaus,
            reference,
            crit_forward: crit,
            crit_zero: crit,
            solver,
        }
    }

    pub fn plausible(&self) -> &PlausibleOrderings {
        &self.plaus
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn test(&self, psi: f64) -> TestVerdict {
        let (i, j) = (self.plaus.i, self.plaus.j);
        let mut best = TestVerdict::rejected();
        let mut consider = |stat: f64, crit: f64, order: &Ordering| -> bool {
            if stat <= crit {
                best = TestVerdict {
                    accepted: true,
                    stat,
                    crit,
                    order: Some(order.clone()),
                };
                return true;
            }
            if stat - crit < best.stat - best.crit {
                best = TestVerdict {
                    accepted: false,
                    stat,
                    crit,
                    order: Some(order.clone()),
                };
            }
            false
        };

        for (order, &ll) in self.plaus.orders.iter().zip(&self.plaus.logliks) {
            if !order.precedes(i, j) {
                continue;
            }
            // the constrained fit cannot beat the unrestricted one
            if 2.0 * (self.reference - ll) > self.crit_forward {
                continue;
            }
            let fit = match mle::fit_ordering_constrained(&self.sigma_hat, order, self.n, i, j, psi, &self.solver) {
                Ok(fit) => fit,
                Err(_) => continue,
            };
            if consider(2.0 * (self.reference - fit.loglik), self.crit_forward, order) {
                return best;
            }
        }
        if psi == 0.0 {
            if let Some((order, ll)) = &self.plaus.zero_order {
                if consider(2.0 * (self.reference - ll), self.crit_zero, order) {
                    return best;
                }
            }
        }
        best
    }
}

/// `-2 log alpha`.
pub fn universal_critical_value(alpha: f64) -> f64 {
    -2.0 * alpha.ln()
}

/// LRT of `C(i -> j) = psi` over the plausible orderings `plaus`.
pub fn lrt_test_effect(
    sigma_hat: &CovMatrix,
    n: usize,
    plaus: &PlausibleOrderings,
    psi: f64,
    alpha: f64,
    solver: &SolverConfig,
) -> TestVerdict {
    EffectTester::lrt(sigma_hat.clone(), n, plaus.clone(), alpha, *solver).test(psi)
}

/// Random split of the rows: the first `round(ratio * n)` rows of a seeded
/// permutation form the evaluation half `D0`, the rest `D1`.
pub fn split_dataset(data: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    let mut rng = SimRng::seed_from_u64(seed);
    let perm = random_permutation(n, &mut rng);
    let n0 = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let d0 = data.select_rows(&perm[..n0])?;
    let d1 = data.select_rows(&perm[n0..])?;
    Ok((d0, d1))
}

/// Restricted MLE over the equal-variance model: best ordering and its fit.
pub fn restricted_mle(sigma_hat: &CovMatrix, n: usize) -> Result<mle::OrderingFit> {
    let (order, _) = ordersearch::max_likelihood_ordering(sigma_hat, n)?;
    mle::fit_ordering(sigma_hat, &order, n, None)
}

/// Gaussian log-likelihood of `n` centred rows with empirical covariance
/// `sigma_hat` under the LSEM `(b, sigma2)`:
/// `-(n/2) (d log(2 pi sigma2) + tr((I - B)^T (I - B) Sigma_hat) / sigma2)`.
pub fn lsem_loglik(sigma_hat: &CovMatrix, n: usize, b: &nalgebra::DMatrix<f64>, sigma2: f64) -> f64 {
    let d = sigma_hat.d();
    let a = nalgebra::DMatrix::identity(d, d) - b;
    let trace = (&a * sigma_hat.matrix() * a.transpose()).trace();
    -0.5 * n as f64 * (d as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() + trace / sigma2)
}

/// Everything the split LRT needs, computed once per dataset.
#[derive(Debug, Clone)]
pub struct SplitSetup {
    pub tester: EffectTester,
    pub tilde_fit: mle::OrderingFit,
    pub n0: usize,
    pub n1: usize,
}

impl SplitSetup {
    pub fn new(data: &Dataset, i: usize, j: usize, cfg: &TestConfig) -> Result<Self> {
        let (d0, d1) = split_dataset(data, cfg.split_ratio, cfg.seed)?;
        Self::from_parts(&d0, &d1, i, j, cfg.alpha, cfg.solver)
    }

    /// Split LRT with an explicit evaluation half `d0` and estimation half `d1`.
    pub fn from_parts(d0: &Dataset, d1: &Dataset, i: usize, j: usize, alpha: f64, solver: SolverConfig) -> Result<Self> {
        let sigma0 = empirical_cov(d0)?;
        let sigma1 = empirical_cov(d1)?;
        let tilde_fit = restricted_mle(&sigma1, d1.n())?;
        let reference = lsem_loglik(&sigma0, d0.n(), &tilde_fit.b_hat, tilde_fit.sigma2_hat);
        let threshold = Threshold {
            reference: Reference::Fixed(reference),
            crit: universal_critical_value(alpha),
        };
        let plaus = ordersearch::possible_orderings_with(&sigma0, d0.n(), i, j, threshold)?;
        let tester = EffectTester::slrt(sigma0, d0.n(), plaus, reference, alpha, solver);
        Ok(Self {
            tester,
            tilde_fit,
            n0: d0.n(),
            n1: d1.n(),
        })
    }
}

/// Split LRT of `C(i -> j) = psi`.
pub fn slrt_test_effect(setup: &SplitSetup, psi: f64) -> TestVerdict {
    setup.tester.test(psi)
}
