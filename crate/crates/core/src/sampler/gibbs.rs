//! Conjugate updates for the regression coefficients, the error variance, and
//! the Polya-Gamma latent variables.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::polya_gamma::polya_gamma_draw;
use crate::design::Family;
use crate::error::{DlimError, Result};

/// Gaussian full conditional of the coefficients: precision factor and mean.
#[derive(Debug, Clone)]
pub struct CoefficientConditional {
    pub mean: DVector<f64>,
    pub precision_factor: Cholesky<f64, Dyn>,
}

impl CoefficientConditional {
    /// Solves `(G' G + P) mu = b` for a Gram matrix `gram = G' G` and
    /// right-hand side `rhs`.
    pub fn from_gram(mut gram: DMatrix<f64>, prior_precision: &DVector<f64>, rhs: &DVector<f64>) -> Result<Self> {
        for (i, &p) in prior_precision.iter().enumerate() {
            gram[(i, i)] += p;
        }
        let precision = gram;
        let factor = match Cholesky::new(precision.clone()) {
            Some(f) => f,
            None => {
                return Err(DlimError::SingularPrecision {
                    condition: condition_number(&precision),
                })
            }
        };
        let mean = factor.solve(rhs);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(DlimError::SingularPrecision {
                condition: condition_number(&precision),
            });
        }
        Ok(Self {
            mean,
            precision_factor: factor,
        })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.precision_factor.inverse()
    }

    /// `mean + L^{-T} e` with `e ~ N(0, I)`, where `precision = L L'`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.mean.len();
        let e = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        // Only the lower triangle of `l_dirty` is meaningful.
        let offset = self
            .precision_factor
            .l_dirty()
            .tr_solve_lower_triangular(&e)
            .expect("Cholesky factor has a nonzero diagonal");
        &self.mean + offset
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Full conditional for Gaussian responses: precision `U'U / sigma2 + P`,
/// mean `precision^{-1} U'y / sigma2`.
pub fn gaussian_conditional(
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma2: f64,
    prior_precision: &DVector<f64>,
) -> Result<CoefficientConditional> {
    if u.nrows() != y.len() {
        return Err(DlimError::mismatch("design rows", y.len(), u.nrows()));
    }
    if u.ncols() != prior_precision.len() {
        return Err(DlimError::mismatch("prior precision", u.ncols(), prior_precision.len()));
    }
    let mut gram = u.tr_mul(u);
    gram /= sigma2;
    let rhs = u.tr_mul(y) / sigma2;
    CoefficientConditional::from_gram(gram, prior_precision, &rhs)
}

/// Draws `Psi = (theta, gamma)` from its Gaussian full conditional.
pub fn gibbs_update_coefficients<R: Rng + ?Sized>(
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma2: f64,
    prior_precision: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(gaussian_conditional(u, y, sigma2, prior_precision)?.draw(rng))
}

pub fn residual_sum_of_squares(u: &DMatrix<f64>, y: &DVector<f64>, psi: &DVector<f64>) -> f64 {
    (y - u * psi).norm_squared()
}

/// Draws `sigma2 ~ InvGamma(shape + n/2, scale + RSS/2)`.
pub fn gibbs_update_variance<R: Rng + ?Sized>(
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    psi: &DVector<f64>,
    ig_shape: f64,
    ig_scale: f64,
    rng: &mut R,
) -> f64 {
    let rss = residual_sum_of_squares(u, y, psi);
    draw_inverse_gamma(ig_shape + 0.5 * y.len() as f64, ig_scale + 0.5 * rss, rng)
}

/// One draw from InvGamma(shape, scale), via the reciprocal of a Gamma(shape, rate = scale).
pub fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("inverse-gamma parameters are positive");
    loop {
        let v = 1.0 / g.sample(rng);
        if v.is_finite() && v > 0.0 {
            return v;
        }
    }
}

/// Full conditional for binomial responses given latent `omega`: precision
/// `U' Omega U + P`, mean `precision^{-1} U' kappa`, `kappa = y - 1/2`.
pub fn logistic_conditional(
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    omega: &DVector<f64>,
    prior_precision: &DVector<f64>,
) -> Result<CoefficientConditional> {
    if u.nrows() != y.len() || omega.len() != y.len() {
        return Err(DlimError::mismatch("logistic update rows", y.len(), u.nrows()));
    }
    let mut scaled = u.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= omega[i].sqrt();
    }
    let gram = scaled.tr_mul(&scaled);
    let kappa = y.map(|v| v - 0.5);
    let rhs = u.tr_mul(&kappa);
    CoefficientConditional::from_gram(gram, prior_precision, &rhs)
}

/// Polya-Gamma Gibbs step: `omega_i ~ PG(1, u_i' Psi)` at the current `Psi`,
/// then `Psi` from its conditional given `omega`.
pub fn gibbs_update_logistic<R: Rng + ?Sized>(
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    psi: &DVector<f64>,
    prior_precision: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let eta = u * psi;
    let omega = eta.map(|e| polya_gamma_draw(e, rng));
    let new_psi = logistic_conditional(u, y, &omega, prior_precision)?.draw(rng);
    Ok((new_psi, omega))
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Log-likelihood of `y` given the linear predictor, including constants.
/// `sigma2` is ignored for the binomial family.
pub fn log_likelihood_from_predictor(y: &DVector<f64>, eta: &DVector<f64>, sigma2: f64, family: Family) -> f64 {
    match family {
        Family::Gaussian => {
            let n = y.len() as f64;
            let rss: f64 = y.iter().zip(eta.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln() - 0.5 * rss / sigma2
        }
        Family::Binomial => y
            .iter()
            .zip(eta.iter())
            .map(|(&yi, &e)| yi * e - softplus(e))
            .sum(),
    }
}

pub fn log_likelihood(
    y: &DVector<f64>,
    u: &DMatrix<f64>,
    psi: &DVector<f64>,
    sigma2: Option<f64>,
    family: Family,
) -> f64 {
    let eta = u * psi;
    log_likelihood_from_predictor(y, &eta, sigma2.unwrap_or(1.0), family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        let mut u = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng));
        u.column_mut(d - 1).fill(1.0);
        u
    }

    #[test]
    fn gaussian_loglik_at_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_design(&mut rng, 20, 3);
        let psi = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let y = &u * &psi;
        let ll = log_likelihood(&y, &u, &psi, Some(1.0), Family::Gaussian);
        assert!((ll + 10.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-10);
    }

    #[test]
    fn binomial_loglik_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_design(&mut rng, 15, 3);
        let y = DVector::from_fn(15, |i, _| (i % 2) as f64);
        let ll = log_likelihood(&y, &u, &DVector::zeros(3), None, Family::Binomial);
        assert!((ll + 15.0 * 2f64.ln()).abs() < 1e-12);

        let y1 = DVector::from_element(1, 1.0);
        let eta = DVector::from_element(1, 800.0);
        let ll = log_likelihood_from_predictor(&y1, &eta, 1.0, Family::Binomial);
        assert!(ll.is_finite());
        assert!((ll - (800.0 - 800.0)).abs() < 1e-12);
    }

    #[test]
    fn flat_prior_limit_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_design(&mut rng, 40, 4);
        let y = DVector::from_fn(40, |_, _| StandardNormal.sample(&mut rng));
        let cond = gaussian_conditional(&u, &y, 1.0, &DVector::zeros(4)).unwrap();
        let ols = (u.tr_mul(&u)).cholesky().unwrap().solve(&u.tr_mul(&y));
        assert!((cond.mean - ols).amax() < 1e-10);
    }

    #[test]
    fn concentrates_at_truth_for_tiny_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_design(&mut rng, 30, 5);
        let psi0 = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -0.7]);
        let y = &u * &psi0;
        let prior = DVector::from_vec(vec![0.01, 0.01, 0.01, 0.01, 0.0]);
        let cond = gaussian_conditional(&u, &y, 1e-8, &prior).unwrap();
        assert!((&cond.mean - &psi0).amax() < 1e-6);
        let draw = cond.draw(&mut rng);
        assert!((draw - psi0).amax() < 1e-2);
    }

    #[test]
    fn draws_match_conditional_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_design(&mut rng, 50, 4);
        let y = DVector::from_fn(50, |_, _| StandardNormal.sample(&mut rng));
        let prior = DVector::from_vec(vec![0.01, 0.01, 1.0 / 110.0, 0.0]);
        let cond = gaussian_conditional(&u, &y, 1.0, &prior).unwrap();
        let cov = cond.covariance();
        let s = 20_000;
        let mut sum = DVector::zeros(4);
        for _ in 0..s {
            sum += cond.draw(&mut rng);
        }
        let mean = sum / s as f64;
        for j in 0..4 {
            let se = (cov[(j, j)] / s as f64).sqrt();
            assert!((mean[j] - cond.mean[j]).abs() < 3.0 * se, "coord {j}");
        }
    }

    #[test]
    fn variance_draw_with_zero_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random_design(&mut rng, 10, 2);
        let psi = DVector::from_vec(vec![1.0, 2.0]);
        let y = &u * &psi;
        // IG(1 + 5, 0.001): mean 0.001 / 5.
        let s = 20_000;
        let draws: Vec<f64> = (0..s).map(|_| gibbs_update_variance(&u, &y, &psi, 1.0, 0.001, &mut rng)).collect();
        assert!(draws.iter().all(|&d| d > 0.0));
        let mean = draws.iter().sum::<f64>() / s as f64;
        let sd = 0.001 / 5.0 / 4f64.sqrt();
        assert!((mean - 0.0002).abs() < 3.0 * sd / (s as f64).sqrt());
    }

    #[test]
    fn variance_posterior_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let u = random_design(&mut rng, n, 2);
        let psi = DVector::from_vec(vec![0.5, 1.0]);
        let noise = DVector::from_fn(n, |_, _| { let e: f64 = StandardNormal.sample(&mut rng); 2.0 * e });
        let y = &u * &psi + noise;
        let mean = (0..500).map(|_| gibbs_update_variance(&u, &y, &psi, 1.0, 0.001, &mut rng)).sum::<f64>() / 500.0;
        assert!((mean - 4.0).abs() < 0.2, "{mean}");
    }

    #[test]
    fn equal_omega_reduces_to_weighted_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_design(&mut rng, 25, 3);
        let y = DVector::from_fn(25, |i, _| ((i * 7) % 3 == 0) as u8 as f64);
        let w = 0.2;
        let omega = DVector::from_element(25, w);
        let cond = logistic_conditional(&u, &y, &omega, &DVector::zeros(3)).unwrap();
        let target = y.map(|v| (v - 0.5) / w);
        let wls = (u.tr_mul(&u)).cholesky().unwrap().solve(&u.tr_mul(&target));
        assert!((cond.mean - wls).amax() < 1e-10);
    }

    #[test]
    fn singular_precision_reports_condition() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        match gaussian_conditional(&u, &y, 1.0, &DVector::zeros(2)) {
            Err(DlimError::SingularPrecision { condition }) => assert!(condition > 1e10),
            other => panic!("expected singular precision, got {other:?}"),
        }
    }
}
