//! Metropolis updates for the unnormalized index weights.
//!
//! Without selection each `a_l` gets a folded-normal random-walk proposal,
//! accepted with the Gamma-kernel prior ratio times the likelihood ratio.
//! The folded-normal density is symmetric in its argument and location, so
//! there is no proposal-ratio term.
//!
//! With selection, a zero weight proposes a birth from the slab `Gamma(q_l, 1)`
//! and a nonzero weight proposes a death (`a_l = 0`). The slab density cancels
//! between prior and proposal, leaving the odds `nu / (1 - nu)` (or its inverse)
//! times the likelihood ratio. A rejected death falls back to a folded-normal
//! move. Deaths that would zero every weight are rejected outright because the
//! index is undefined there.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::gibbs::softplus;
use crate::design::{modifier_index_into, Family, IndexWeights};
use crate::priors::unchecked_log_gamma_kernel;
use crate::spline::NaturalSpline;

/// Likelihood of the data as a function of the index weights, with all other
/// parameters held fixed.
pub trait IndexLikelihood {
    /// Log-likelihood at the current weights (up to a constant).
    fn current(&self) -> f64;
    /// Log-likelihood at simplex weights `rho`. The proposal stays pending until
    /// [`accept`](Self::accept) or the next call.
    fn propose(&mut self, rho: &[f64]) -> f64;
    /// Makes the pending proposal current.
    fn accept(&mut self);
}

/// Constant likelihood; the weight sampler then targets the prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatLikelihood;

impl IndexLikelihood for FlatLikelihood {
    fn current(&self) -> f64 {
        0.0
    }

    fn propose(&mut self, _rho: &[f64]) -> f64 {
        0.0
    }

    fn accept(&mut self) {}
}

/// Gaussian or binomial likelihood through the cross-basis.
///
/// With `Theta` the `nu_time x nu_mod` reshape of `theta`, the linear predictor
/// is `eta_i = z_i' gamma + sum_k b_k(m*_i) G[i, k]` where `G = V Theta` does not
/// depend on the weights. A proposal therefore costs one modifier-basis
/// evaluation per individual.
pub struct ModelLikelihood<'a> {
    y: &'a DVector<f64>,
    m: &'a DMatrix<f64>,
    spline: &'a NaturalSpline,
    family: Family,
    sigma2: f64,
    g: DMatrix<f64>,
    offset: DVector<f64>,
    current: f64,
    pending: f64,
    m_star: Vec<f64>,
    basis_row: Vec<f64>,
}

impl<'a> ModelLikelihood<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        y: &'a DVector<f64>,
        m: &'a DMatrix<f64>,
        z: &DMatrix<f64>,
        v: &DMatrix<f64>,
        spline: &'a NaturalSpline,
        theta: &DVector<f64>,
        gamma: &DVector<f64>,
        sigma2: f64,
        family: Family,
        rho: &[f64],
    ) -> Self {
        let nu_time = v.ncols();
        let nu_mod = spline.df();
        let theta_mat = DMatrix::from_column_slice(nu_time, nu_mod, theta.as_slice());
        let g = v * theta_mat;
        let offset = z * gamma;
        let mut lik = Self {
            y,
            m,
            spline,
            family,
            sigma2,
            g,
            offset,
            current: 0.0,
            pending: 0.0,
            m_star: vec![0.0; y.len()],
            basis_row: vec![0.0; nu_mod],
        };
        lik.current = lik.evaluate(rho);
        lik.pending = lik.current;
        lik
    }

    fn evaluate(&mut self, rho: &[f64]) -> f64 {
        modifier_index_into(self.m, rho, &mut self.m_star);
        let mut total = 0.0;
        for i in 0..self.m_star.len() {
            self.spline.eval_into(self.m_star[i], &mut self.basis_row);
            let mut eta = self.offset[i];
            for (k, b) in self.basis_row.iter().enumerate() {
                eta += b * self.g[(i, k)];
            }
            let yi = self.y[i];
            total += match self.family {
                Family::Gaussian => -0.5 * (yi - eta) * (yi - eta) / self.sigma2,
                Family::Binomial => yi * eta - softplus(eta),
            };
        }
        total
    }
}

impl IndexLikelihood for ModelLikelihood<'_> {
    fn current(&self) -> f64 {
        self.current
    }

    fn propose(&mut self, rho: &[f64]) -> f64 {
        self.pending = self.evaluate(rho);
        self.pending
    }

    fn accept(&mut self) {
        self.current = self.pending;
    }
}

/// Folded-normal density of `x >= 0` with location `mu` and scale `zeta`:
/// `phi((x - mu)/zeta)/zeta + phi((x + mu)/zeta)/zeta`.
pub fn folded_normal_density(x: f64, mu: f64, zeta: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let k = 1.0 / (zeta * (2.0 * std::f64::consts::PI).sqrt());
    let d1 = (x - mu) / zeta;
    let d2 = (x + mu) / zeta;
    k * ((-0.5 * d1 * d1).exp() + (-0.5 * d2 * d2).exp())
}

pub fn folded_normal_draw<R: Rng + ?Sized>(mu: f64, zeta: f64, rng: &mut R) -> f64 {
    let e: f64 = StandardNormal.sample(rng);
    (mu + zeta * e).abs()
}

/// `log r` for a folded-normal move from `a` to `a_star` (both positive).
pub fn mh_log_ratio(a: f64, a_star: f64, q: f64, loglik_current: f64, loglik_proposed: f64) -> f64 {
    unchecked_log_gamma_kernel(a_star, q) - unchecked_log_gamma_kernel(a, q) + loglik_proposed - loglik_current
}

/// `log r_select` for a birth (`birth = true`, zero to nonzero) or a death.
pub fn selection_log_ratio(birth: bool, nu: f64, loglik_current: f64, loglik_proposed: f64) -> f64 {
    let odds = (nu / (1.0 - nu)).ln();
    let prefactor = if birth { odds } else { -odds };
    prefactor + loglik_proposed - loglik_current
}

fn rho_with(weights: &IndexWeights, l: usize, value: f64) -> Option<Vec<f64>> {
    let total: f64 = weights.a.iter().sum::<f64>() - weights.a[l] + value;
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    Some(
        weights
            .a
            .iter()
            .enumerate()
            .map(|(j, &a)| if j == l { value / total } else { a / total })
            .collect(),
    )
}

fn set_weight(weights: &mut IndexWeights, l: usize, value: f64, rho: Vec<f64>) {
    weights.a[l] = value;
    weights.eta[l] = value != 0.0;
    weights.rho = rho;
}

/// Folded-normal Metropolis step on `a_l`. Returns whether the move was accepted.
pub fn mh_update_weight<L, R>(
    l: usize,
    weights: &mut IndexWeights,
    zeta: f64,
    q: f64,
    lik: &mut L,
    rng: &mut R,
) -> bool
where
    L: IndexLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    let a = weights.a[l];
    debug_assert!(a > 0.0);
    let a_star = folded_normal_draw(a, zeta, rng);
    let u: f64 = rng.random();
    if a_star == 0.0 {
        return false;
    }
    let Some(rho) = rho_with(weights, l, a_star) else {
        return false;
    };
    let proposed = lik.propose(&rho);
    let log_r = mh_log_ratio(a, a_star, q, lik.current(), proposed);
    if u.ln() < log_r {
        lik.accept();
        set_weight(weights, l, a_star, rho);
        true
    } else {
        false
    }
}

/// What a selection step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMove {
    BirthAccepted,
    BirthRejected,
    DeathAccepted,
    /// The death was rejected (or blocked) and the folded-normal fallback ran.
    Fallback { blocked: bool, accepted: bool },
}

/// Spike-and-slab step on `a_l`.
#[allow(clippy::too_many_arguments)]
pub fn selection_update_weight<L, R>(
    l: usize,
    weights: &mut IndexWeights,
    zeta: f64,
    q: f64,
    nu: f64,
    lik: &mut L,
    rng: &mut R,
) -> SelectionMove
where
    L: IndexLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    if weights.a[l] == 0.0 {
        let slab = Gamma::new(q, 1.0).expect("q is positive");
        let a_star = slab.sample(rng).max(f64::MIN_POSITIVE);
        let u: f64 = rng.random();
        let rho = rho_with(weights, l, a_star).expect("birth keeps the total positive");
        let proposed = lik.propose(&rho);
        if u.ln() < selection_log_ratio(true, nu, lik.current(), proposed) {
            lik.accept();
            set_weight(weights, l, a_star, rho);
            return SelectionMove::BirthAccepted;
        }
        return SelectionMove::BirthRejected;
    }

    let u: f64 = rng.random();
    let blocked = match rho_with(weights, l, 0.0) {
        None => true,
        Some(rho) => {
            let proposed = lik.propose(&rho);
            if u.ln() < selection_log_ratio(false, nu, lik.current(), proposed) {
                lik.accept();
                set_weight(weights, l, 0.0, rho);
                return SelectionMove::DeathAccepted;
            }
            false
        }
    };
    let accepted = mh_update_weight(l, weights, zeta, q, lik, rng);
    SelectionMove::Fallback { blocked, accepted }
}

/// Log-scale Robbins-Monro step for a proposal scale:
/// `zeta * exp(delta * (rate - target))` with `delta = min(0.05, s^{-1/2})`,
/// where `s` counts completed adaptation windows.
pub fn adapt_proposal_scale(zeta: f64, rate: f64, target: f64, window_index: usize) -> f64 {
    let delta = (1.0 / (window_index.max(1) as f64).sqrt()).min(0.05);
    zeta * (delta * (rate - target)).exp()
}

/// Per-weight acceptance bookkeeping for the folded-normal moves.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptanceTracker {
    pub window_attempts: Vec<u64>,
    pub window_accepts: Vec<u64>,
    pub total_attempts: Vec<u64>,
    pub total_accepts: Vec<u64>,
    pub windows_done: usize,
}

impl AcceptanceTracker {
    pub fn new(len: usize) -> Self {
        Self {
            window_attempts: vec![0; len],
            window_accepts: vec![0; len],
            total_attempts: vec![0; len],
            total_accepts: vec![0; len],
            windows_done: 0,
        }
    }

    pub fn record(&mut self, l: usize, accepted: bool) {
        self.window_attempts[l] += 1;
        self.total_attempts[l] += 1;
        if accepted {
            self.window_accepts[l] += 1;
            self.total_accepts[l] += 1;
        }
    }

    /// Adapts every scale from the window's acceptance rates and clears the window.
    /// Weights with no attempts in the window keep their scale.
    pub fn adapt(&mut self, zeta: &mut [f64], target: f64) {
        self.windows_done += 1;
        for l in 0..zeta.len() {
            let attempts = self.window_attempts[l];
            if attempts > 0 {
                let rate = self.window_accepts[l] as f64 / attempts as f64;
                zeta[l] = adapt_proposal_scale(zeta[l], rate, target, self.windows_done);
            }
            self.window_attempts[l] = 0;
            self.window_accepts[l] = 0;
        }
    }

    pub fn reset_totals(&mut self) {
        self.total_attempts.fill(0);
        self.total_accepts.fill(0);
    }
}
