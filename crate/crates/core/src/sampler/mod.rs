//! Metropolis-Hastings-within-Gibbs sampler.
//!
//! Each iteration rebuilds the design at the current weights, draws the
//! regression coefficients from their conjugate conditional (with Polya-Gamma
//! latents for binomial data), updates the error variance, and then visits
//! every index weight with a Metropolis or spike-and-slab step. Proposal
//! scales adapt during burn-in only.

pub mod gibbs;
pub mod polya_gamma;
pub mod weights;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::{fill_cross_basis, modifier_index_into, time_contraction, CohortData, CrossBasis, Family};
use crate::error::{DlimError, Result};
use crate::priors::{init_state, PriorConfig, SamplerState};

pub use gibbs::{
    gaussian_conditional, gibbs_update_coefficients, gibbs_update_logistic, gibbs_update_variance, log_likelihood,
    log_likelihood_from_predictor, logistic_conditional, CoefficientConditional,
};
pub use polya_gamma::{polya_gamma_draw, polya_gamma_mean, polya_gamma_variance};
pub use weights::{
    adapt_proposal_scale, folded_normal_density, mh_update_weight, selection_update_weight, AcceptanceTracker,
    FlatLikelihood, IndexLikelihood, ModelLikelihood, SelectionMove,
};

pub const DEFAULT_ADAPT_TARGET: f64 = 0.44;
pub const DEFAULT_ADAPT_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub nu_mod: usize,
    pub nu_time: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub priors: PriorConfig,
    pub adapt_target: f64,
    pub adapt_window: usize,
    /// Visit weights in a fresh random order each iteration instead of 1..L.
    pub random_scan: bool,
    /// When false the weights stay at their initial values.
    pub update_weights: bool,
    /// Holds the error variance fixed instead of sampling it.
    pub fixed_sigma2: Option<f64>,
    /// Starting unnormalized weights; drawn from the prior when absent.
    pub initial_weights: Option<Vec<f64>>,
}

impl SamplerConfig {
    pub fn new(modifiers: usize) -> Self {
        Self {
            nu_mod: 5,
            nu_time: 5,
            iterations: 5_000,
            burn_in: 2_000,
            thin: 1,
            chains: 1,
            seed: 1,
            priors: PriorConfig::defaults(modifiers),
            adapt_target: DEFAULT_ADAPT_TARGET,
            adapt_window: DEFAULT_ADAPT_WINDOW,
            random_scan: false,
            update_weights: true,
            fixed_sigma2: None,
            initial_weights: None,
        }
    }

    /// Weights fixed at `1/L` each.
    pub fn fixed_equal_weights(mut self) -> Self {
        let l = self.priors.modifiers();
        self.update_weights = false;
        self.initial_weights = Some(vec![1.0; l]);
        self.priors.selection = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DlimError::InvalidConfig(m));
        if self.nu_mod < 1 {
            return bad("nu_mod must be at least 1".into());
        }
        if self.nu_time < 2 {
            return bad("nu_time must be at least 2".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 || self.chains == 0 || self.adapt_window == 0 {
            return bad("thin, chains and adapt_window must be positive".into());
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return bad("adapt_target must lie in (0, 1)".into());
        }
        if let Some(s2) = self.fixed_sigma2 {
            if !(s2 > 0.0) {
                return bad("fixed sigma2 must be positive".into());
            }
        }
        self.priors.validate()
    }

    pub fn stored_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Stored post-burn-in draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub chain_id: usize,
    pub seed: u64,
    /// 1-based iteration number of every stored draw.
    pub iterations: Vec<usize>,
    pub theta: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    /// Absent for the binomial family.
    pub sigma2: Option<Vec<f64>>,
    pub a: DMatrix<f64>,
    pub eta: DMatrix<u8>,
    /// Folded-normal moves accepted and attempted after burn-in, per weight.
    pub accept_count: Vec<u64>,
    pub attempt_count: Vec<u64>,
    /// Deaths refused because they would have removed the last modifier.
    pub blocked_deaths: u64,
    /// Proposal scales at the end of burn-in.
    pub final_zeta: Vec<f64>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Simplex weights of draw `s`.
    pub fn rho(&self, s: usize) -> Vec<f64> {
        let row = self.a.row(s);
        let total: f64 = row.iter().sum();
        row.iter().map(|&a| a / total).collect()
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accept_count
            .iter()
            .zip(&self.attempt_count)
            .map(|(&a, &n)| if n == 0 { 0.0 } else { a as f64 / n as f64 })
            .collect()
    }

    /// Row-concatenation of several chains; bookkeeping fields come from the first.
    pub fn pool(chains: &[PosteriorDraws]) -> Result<PosteriorDraws> {
        let first = chains.first().ok_or(DlimError::EmptyDraws)?;
        let total: usize = chains.iter().map(|c| c.len()).sum();
        let stack = |get: &dyn Fn(&PosteriorDraws) -> &DMatrix<f64>| {
            let cols = get(first).ncols();
            let mut out = DMatrix::zeros(total, cols);
            let mut r = 0;
            for c in chains {
                let m = get(c);
                out.rows_mut(r, m.nrows()).copy_from(m);
                r += m.nrows();
            }
            out
        };
        let mut eta = DMatrix::<u8>::zeros(total, first.eta.ncols());
        let mut r = 0;
        for c in chains {
            eta.rows_mut(r, c.eta.nrows()).copy_from(&c.eta);
            r += c.eta.nrows();
        }
        let sigma2 = if chains.iter().all(|c| c.sigma2.is_some()) {
            Some(chains.iter().flat_map(|c| c.sigma2.clone().unwrap_or_default()).collect())
        } else {
            None
        };
        Ok(PosteriorDraws {
            chain_id: first.chain_id,
            seed: first.seed,
            iterations: chains.iter().flat_map(|c| c.iterations.iter().copied()).collect(),
            theta: stack(&|c| &c.theta),
            gamma: stack(&|c| &c.gamma),
            sigma2,
            a: stack(&|c| &c.a),
            eta,
            accept_count: first.accept_count.clone(),
            attempt_count: first.attempt_count.clone(),
            blocked_deaths: chains.iter().map(|c| c.blocked_deaths).sum(),
            final_zeta: first.final_zeta.clone(),
        })
    }
}

/// Runs one chain. Deterministic in `chain_seed`.
pub fn run_chain(data: &CohortData, config: &SamplerConfig, chain_seed: u64) -> Result<PosteriorDraws> {
    run_chain_with_id(data, config, chain_seed, 0)
}

fn run_chain_with_id(data: &CohortData, config: &SamplerConfig, chain_seed: u64, chain_id: usize) -> Result<PosteriorDraws> {
    config.validate()?;
    let l_count = data.modifiers();
    if config.priors.modifiers() != l_count {
        return Err(DlimError::mismatch("prior q length", l_count, config.priors.modifiers()));
    }
    let basis = CrossBasis::new(config.nu_mod, config.nu_time, data.times())?;
    let v = time_contraction(&data.x, &basis.c)?;
    let n = data.n();
    let n_theta = basis.n_theta();
    let p = data.covariates();
    let priors = &config.priors;

    let mut rng = ChaCha8Rng::seed_from_u64(chain_seed);
    let mut state = init_state(
        priors,
        n_theta,
        p,
        data.family,
        n,
        config.initial_weights.as_deref(),
        &mut rng,
    )?;
    if let Some(s2) = config.fixed_sigma2 {
        state.sigma2 = s2;
    }
    let prior_precision = priors.precision_diagonal(n_theta, p);

    let mut u = DMatrix::<f64>::zeros(n, n_theta + p);
    u.columns_mut(n_theta, p).copy_from(&data.z);
    let mut w = DMatrix::<f64>::zeros(n, n_theta);
    let mut b = DMatrix::<f64>::zeros(n, basis.nu_mod());
    let mut m_star = vec![0.0; n];

    let stored = config.stored_draws();
    let mut draws = PosteriorDraws {
        chain_id,
        seed: chain_seed,
        iterations: Vec::with_capacity(stored),
        theta: DMatrix::zeros(stored, n_theta),
        gamma: DMatrix::zeros(stored, p),
        sigma2: (data.family == Family::Gaussian).then(|| Vec::with_capacity(stored)),
        a: DMatrix::zeros(stored, l_count),
        eta: DMatrix::zeros(stored, l_count),
        accept_count: vec![0; l_count],
        attempt_count: vec![0; l_count],
        blocked_deaths: 0,
        final_zeta: state.zeta.clone(),
    };
    let mut tracker = AcceptanceTracker::new(l_count);
    let mut order: Vec<usize> = (0..l_count).collect();
    let mut row = 0;

    for iter in 0..config.iterations {
        let at = |e: DlimError| DlimError::AtIteration {
            iteration: iter + 1,
            source: Box::new(e),
        };

        // (1) design at the current weights
        modifier_index_into(&data.m, &state.weights.rho, &mut m_star);
        basis.modifier_rows(&m_star, &mut b);
        fill_cross_basis(&v, &b, &mut w);
        u.columns_mut(0, n_theta).copy_from(&w);

        // (2)-(3) coefficients and variance or latent variables
        match data.family {
            Family::Gaussian => {
                let psi = gibbs_update_coefficients(&u, &data.y, state.sigma2, &prior_precision, &mut rng)
                    .map_err(at)?;
                state.set_psi(&psi);
                if config.fixed_sigma2.is_none() {
                    state.sigma2 =
                        gibbs_update_variance(&u, &data.y, &psi, priors.ig_shape, priors.ig_scale, &mut rng);
                }
            }
            Family::Binomial => {
                let (psi, omega) =
                    gibbs_update_logistic(&u, &data.y, &state.psi(), &prior_precision, &mut rng).map_err(at)?;
                state.set_psi(&psi);
                state.omega = Some(omega);
            }
        }

        // (4) index weights
        if config.update_weights {
            let mut lik = ModelLikelihood::new(
                &data.y,
                &data.m,
                &data.z,
                &v,
                &basis.modifier,
                &state.theta,
                &state.gamma,
                state.sigma2,
                data.family,
                &state.weights.rho,
            );
            if config.random_scan {
                order.shuffle(&mut rng);
            }
            for &l in &order {
                update_one_weight(l, &mut state, priors, &mut lik, &mut tracker, &mut draws.blocked_deaths, &mut rng);
            }
            debug_assert!(iter % 1000 != 0 || cached_likelihood_matches(data, &basis, &v, &state, lik.current()));
        }

        // (5) adaptation, burn-in only
        if iter < config.burn_in {
            if (iter + 1) % config.adapt_window == 0 {
                tracker.adapt(&mut state.zeta, config.adapt_target);
            }
            if iter + 1 == config.burn_in {
                tracker.reset_totals();
                draws.blocked_deaths = 0;
                draws.final_zeta = state.zeta.clone();
            }
        }

        debug_assert!(iter % 1000 != 0 || state_is_coherent(&state));

        // (6) storage
        if iter >= config.burn_in && (iter + 1 - config.burn_in) % config.thin == 0 {
            draws.iterations.push(iter + 1);
            draws.theta.row_mut(row).copy_from(&state.theta.transpose());
            draws.gamma.row_mut(row).copy_from(&state.gamma.transpose());
            if let Some(s) = draws.sigma2.as_mut() {
                s.push(state.sigma2);
            }
            for l in 0..l_count {
                draws.a[(row, l)] = state.weights.a[l];
                draws.eta[(row, l)] = state.weights.eta[l] as u8;
            }
            row += 1;
        }
    }
    draws.accept_count = tracker.total_accepts.clone();
    draws.attempt_count = tracker.total_attempts.clone();
    if config.burn_in == 0 {
        draws.final_zeta = state.zeta.clone();
    }
    Ok(draws)
}

fn update_one_weight<L: IndexLikelihood + ?Sized>(
    l: usize,
    state: &mut SamplerState,
    priors: &PriorConfig,
    lik: &mut L,
    tracker: &mut AcceptanceTracker,
    blocked_deaths: &mut u64,
    rng: &mut ChaCha8Rng,
) {
    let zeta = state.zeta[l];
    let q = priors.q[l];
    if priors.selection {
        match selection_update_weight(l, &mut state.weights, zeta, q, priors.nu[l], lik, rng) {
            SelectionMove::Fallback { blocked, accepted } => {
                tracker.record(l, accepted);
                if blocked {
                    *blocked_deaths += 1;
                }
            }
            SelectionMove::BirthAccepted | SelectionMove::BirthRejected | SelectionMove::DeathAccepted => {}
        }
    } else {
        let accepted = mh_update_weight(l, &mut state.weights, zeta, q, lik, rng);
        tracker.record(l, accepted);
    }
}

fn state_is_coherent(state: &SamplerState) -> bool {
    let total: f64 = state.weights.a.iter().sum();
    total > 0.0
        && state
            .weights
            .a
            .iter()
            .zip(&state.weights.rho)
            .zip(&state.weights.eta)
            .all(|((&a, &r), &e)| (a / total - r).abs() < 1e-12 && e == (a != 0.0))
        && state.sigma2 > 0.0
        && state.zeta.iter().all(|&z| z > 0.0)
}

/// Rebuilds the design at the current weights and compares the log-likelihood
/// with the value cached by the weight moves.
fn cached_likelihood_matches(
    data: &CohortData,
    basis: &CrossBasis,
    v: &DMatrix<f64>,
    state: &SamplerState,
    cached: f64,
) -> bool {
    let n = data.n();
    let mut m_star = vec![0.0; n];
    let mut b = DMatrix::zeros(n, basis.nu_mod());
    let mut w = DMatrix::zeros(n, basis.n_theta());
    modifier_index_into(&data.m, &state.weights.rho, &mut m_star);
    basis.modifier_rows(&m_star, &mut b);
    fill_cross_basis(v, &b, &mut w);
    let eta = &w * &state.theta + &data.z * &state.gamma;
    let mut fresh = log_likelihood_from_predictor(&data.y, &eta, state.sigma2, data.family);
    if data.family == Family::Gaussian {
        fresh += 0.5 * n as f64 * (2.0 * std::f64::consts::PI * state.sigma2).ln();
    }
    (fresh - cached).abs() <= 1e-8 * fresh.abs().max(1.0)
}

/// Prior-only weight chain: the weight moves run against a constant
/// likelihood. Returns the `a` draws (one row per iteration after burn-in) and
/// the inclusion indicators.
pub fn run_weight_prior_chain(
    priors: &PriorConfig,
    iterations: usize,
    burn_in: usize,
    adapt_window: usize,
    random_scan: bool,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<u8>)> {
    priors.validate()?;
    if burn_in >= iterations {
        return Err(DlimError::InvalidConfig("burn_in must be smaller than iterations".into()));
    }
    let l_count = priors.modifiers();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = init_state(priors, 0, 1, Family::Gaussian, 0, None, &mut rng)?;
    let mut tracker = AcceptanceTracker::new(l_count);
    let mut lik = FlatLikelihood;
    let mut blocked = 0;
    let kept = iterations - burn_in;
    let mut a = DMatrix::zeros(kept, l_count);
    let mut eta = DMatrix::zeros(kept, l_count);
    let mut order: Vec<usize> = (0..l_count).collect();
    for iter in 0..iterations {
        if random_scan {
            order.shuffle(&mut rng);
        }
        for &l in &order {
            update_one_weight(l, &mut state, priors, &mut lik, &mut tracker, &mut blocked, &mut rng);
        }
        if iter < burn_in && (iter + 1) % adapt_window == 0 {
            tracker.adapt(&mut state.zeta, DEFAULT_ADAPT_TARGET);
        }
        if iter >= burn_in {
            let r = iter - burn_in;
            for l in 0..l_count {
                a[(r, l)] = state.weights.a[l];
                eta[(r, l)] = state.weights.eta[l] as u8;
            }
        }
    }
    Ok((a, eta))
}

/// Runs `config.chains` independent chains (seeds `seed + c`) in parallel.
/// Results are in chain order; a failed chain does not discard the others.
pub fn run_multichain(data: &CohortData, config: &SamplerConfig) -> Vec<Result<PosteriorDraws>> {
    (0..config.chains)
        .into_par_iter()
        .map(|c| {
            run_chain_with_id(data, config, config.seed.wrapping_add(c as u64), c).map_err(|e| DlimError::Chain {
                chain: c,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Posterior mean of the simplex weights over the stored draws.
pub fn posterior_mean_rho(draws: &PosteriorDraws) -> Vec<f64> {
    let l = draws.a.ncols();
    let mut mean = vec![0.0; l];
    for s in 0..draws.len() {
        for (m, r) in mean.iter_mut().zip(draws.rho(s)) {
            *m += r;
        }
    }
    mean.iter_mut().for_each(|m| *m /= draws.len() as f64);
    mean
}

/// Stacks `theta` and `gamma` of draw `s`.
pub fn psi_draw(draws: &PosteriorDraws, s: usize) -> DVector<f64> {
    DVector::from_iterator(
        draws.theta.ncols() + draws.gamma.ncols(),
        draws.theta.row(s).iter().chain(draws.gamma.row(s).iter()).copied(),
    )
}
