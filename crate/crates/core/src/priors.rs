//! Prior hyperparameters, the chain state, and log-prior pieces.
//!
//! Index weights use the Gamma representation of the Dirichlet prior:
//! `a_l ~ Gamma(q_l, 1)` and `rho = a / sum(a)`. Under selection each `a_l`
//! gets a spike at zero with prior inclusion probability `nu_l`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::design::{Family, IndexWeights};
use crate::error::{DlimError, Result};

pub const DEFAULT_TAU2: f64 = 100.0;
pub const DEFAULT_XI2: f64 = 110.0;
pub const DEFAULT_IG_SHAPE: f64 = 1.0;
pub const DEFAULT_IG_SCALE: f64 = 0.001;
pub const DEFAULT_INCLUSION: f64 = 0.5;
pub const INITIAL_PROPOSAL_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    /// Gamma shapes for the unnormalized weights (Dirichlet concentration).
    pub q: Vec<f64>,
    /// Prior variance of cross-basis coefficients.
    pub tau2: f64,
    /// Prior variance of non-intercept covariate coefficients.
    pub xi2: f64,
    pub ig_shape: f64,
    pub ig_scale: f64,
    /// Prior inclusion probabilities.
    pub nu: Vec<f64>,
    pub selection: bool,
}

impl PriorConfig {
    pub fn defaults(modifiers: usize) -> Self {
        Self {
            q: vec![1.0; modifiers],
            tau2: DEFAULT_TAU2,
            xi2: DEFAULT_XI2,
            ig_shape: DEFAULT_IG_SHAPE,
            ig_scale: DEFAULT_IG_SCALE,
            nu: vec![DEFAULT_INCLUSION; modifiers],
            selection: false,
        }
    }

    pub fn modifiers(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(DlimError::InvalidConfig(what.to_string()));
        if self.q.is_empty() {
            return bad("q must have one entry per modifier");
        }
        if self.q.iter().any(|&q| !(q > 0.0 && q.is_finite())) {
            return bad("every q must be positive");
        }
        if self.nu.len() != self.q.len() {
            return Err(DlimError::mismatch("inclusion probabilities", self.q.len(), self.nu.len()));
        }
        if self.nu.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return bad("every nu must lie in (0, 1)");
        }
        for (name, v) in [
            ("tau2", self.tau2),
            ("xi2", self.xi2),
            ("ig_shape", self.ig_shape),
            ("ig_scale", self.ig_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DlimError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Diagonal prior precision over `(theta, gamma)`: `1/tau2` on cross-basis
    /// coefficients, zero on the intercept (flat prior), `1/xi2` elsewhere.
    pub fn precision_diagonal(&self, n_theta: usize, p: usize) -> DVector<f64> {
        DVector::from_fn(n_theta + p, |i, _| {
            if i < n_theta {
                1.0 / self.tau2
            } else if i == n_theta {
                0.0
            } else {
                1.0 / self.xi2
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub theta: DVector<f64>,
    pub gamma: DVector<f64>,
    /// Error variance; held at 1 and unused for the binomial family.
    pub sigma2: f64,
    pub weights: IndexWeights,
    /// Folded-normal proposal scales.
    pub zeta: Vec<f64>,
    /// Polya-Gamma latent variables (binomial family).
    pub omega: Option<DVector<f64>>,
}

impl SamplerState {
    pub fn psi(&self) -> DVector<f64> {
        let mut psi = DVector::zeros(self.theta.len() + self.gamma.len());
        psi.rows_mut(0, self.theta.len()).copy_from(&self.theta);
        psi.rows_mut(self.theta.len(), self.gamma.len()).copy_from(&self.gamma);
        psi
    }

    pub fn set_psi(&mut self, psi: &DVector<f64>) {
        let nt = self.theta.len();
        self.theta.copy_from(&psi.rows(0, nt));
        let np = self.gamma.len();
        self.gamma.copy_from(&psi.rows(nt, np));
    }
}

/// `rho_l = a_l / sum(a)`.
pub fn normalize_weights(a: &[f64]) -> Result<Vec<f64>> {
    if a.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(DlimError::InvalidData(format!(
            "unnormalized weights must be finite and nonnegative: {a:?}"
        )));
    }
    let total: f64 = a.iter().sum();
    if total <= 0.0 {
        return Err(DlimError::AllWeightsZero);
    }
    Ok(a.iter().map(|&v| v / total).collect())
}

/// Gamma(q, 1) log-density of `a` without its normalizing constant.
pub fn log_gamma_prior(a: f64, q: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(DlimError::InvalidData(format!("gamma prior needs a > 0, got {a}")));
    }
    Ok(unchecked_log_gamma_kernel(a, q))
}

#[inline]
pub(crate) fn unchecked_log_gamma_kernel(a: f64, q: f64) -> f64 {
    if q == 1.0 {
        -a
    } else {
        (q - 1.0) * a.ln() - a
    }
}

/// Starting state: coefficients from their priors (intercept at zero),
/// `sigma2 = 1`, `a_l ~ Gamma(q_l, 1)`, every modifier included, `zeta_l = 0.1`.
///
/// `initial_a` overrides the Gamma draw, e.g. for a fixed-weight fit.
pub fn init_state<R: Rng + ?Sized>(
    priors: &PriorConfig,
    n_theta: usize,
    p: usize,
    family: Family,
    n: usize,
    initial_a: Option<&[f64]>,
    rng: &mut R,
) -> Result<SamplerState> {
    priors.validate()?;
    let theta_prior = Normal::new(0.0, priors.tau2.sqrt()).map_err(|e| DlimError::InvalidConfig(e.to_string()))?;
    let gamma_prior = Normal::new(0.0, priors.xi2.sqrt()).map_err(|e| DlimError::InvalidConfig(e.to_string()))?;
    let theta = DVector::from_fn(n_theta, |_, _| theta_prior.sample(rng));
    let gamma = DVector::from_fn(p, |i, _| if i == 0 { 0.0 } else { gamma_prior.sample(rng) });

    let a = match initial_a {
        Some(a) => {
            if a.len() != priors.modifiers() {
                return Err(DlimError::mismatch("initial weights", priors.modifiers(), a.len()));
            }
            a.to_vec()
        }
        None => {
            let mut a = Vec::with_capacity(priors.modifiers());
            for &q in &priors.q {
                let g = Gamma::new(q, 1.0).map_err(|e| DlimError::InvalidConfig(e.to_string()))?;
                // Gamma draws with tiny shapes can underflow to zero.
                a.push(g.sample(rng).max(f64::MIN_POSITIVE));
            }
            a
        }
    };
    let weights = IndexWeights::from_unnormalized(a)?;
    let omega = match family {
        Family::Gaussian => None,
        Family::Binomial => Some(DVector::from_element(n, 0.25)),
    };
    Ok(SamplerState {
        theta,
        gamma,
        sigma2: 1.0,
        zeta: vec![INITIAL_PROPOSAL_SCALE; priors.modifiers()],
        weights,
        omega,
    })
}
