//! Synthetic cohorts with a known modified lag surface.
//!
//! Modifiers are correlated Gaussians rescaled to [0, 1]; the true effect is
//! a Gaussian bump in exposure time whose center moves along a logistic curve
//! in the index and whose height grows linearly with it. Response noise is set
//! from a signal-to-noise ratio.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::design::{modifier_index, CohortData, Family};
use crate::error::{DlimError, Result};
use crate::stats::{mean, sample_sd};

/// Lag at which the bump is centered when the index is 1 (up to the logistic tail).
pub const DGM_HORIZON: f64 = 37.0;
pub const DEFAULT_TIMES: usize = 37;
pub const COVARIATE_COVARIANCE: [[f64; 3]; 3] = [[1.0, 0.5, 0.6], [0.5, 1.0, 0.7], [0.6, 0.7, 1.0]];
const CORRELATION_RANGE: (f64, f64) = (0.4, 0.7);
const EIGEN_FLOOR: f64 = 1e-6;
const JITTER_ATTEMPTS: usize = 100;
const AR_PHI: f64 = 0.8;
const AR_MEAN: f64 = 7.0;
const AR_SD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Equal,
    Different,
    Sparse,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Equal => "equal",
            Scenario::Different => "different",
            Scenario::Sparse => "sparse",
        }
    }
}

impl FromStr for Scenario {
    type Err = DlimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equal" | "1" => Ok(Scenario::Equal),
            "different" | "2" => Ok(Scenario::Different),
            "sparse" | "3" => Ok(Scenario::Sparse),
            other => Err(DlimError::InvalidConfig(format!("unknown scenario '{other}'"))),
        }
    }
}

/// True weights of a scenario.
pub fn scenario_weights(id: Scenario, l: usize) -> Result<Vec<f64>> {
    let third = 1.0 / 3.0;
    match id {
        Scenario::Equal if l == 3 => Ok(vec![third; 3]),
        Scenario::Different if l == 3 => Ok(vec![0.5, 0.4, 0.1]),
        Scenario::Sparse if l >= 3 => {
            let mut rho = vec![0.0; l];
            rho[..3].fill(third);
            Ok(rho)
        }
        _ => Err(DlimError::InvalidConfig(format!(
            "scenario '{}' is not defined for {l} modifiers",
            id.as_str()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExposureSource {
    /// Stationary AR(1) series, truncated at zero.
    SyntheticAr1,
    /// Rows resampled from a pool of observed series (first `T` columns used).
    CsvPool { rows: DMatrix<f64>, replace: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: Scenario,
    pub modifiers: usize,
    pub rho_true: Vec<f64>,
    pub snr: f64,
    pub n: usize,
    pub times: usize,
    pub replicate_count: usize,
    pub seed: u64,
    pub exposures: ExposureSource,
}

impl ScenarioSpec {
    pub fn new(id: Scenario, modifiers: usize, snr: f64, n: usize, replicate_count: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            id,
            modifiers,
            rho_true: scenario_weights(id, modifiers)?,
            snr,
            n,
            times: DEFAULT_TIMES,
            replicate_count,
            seed,
            exposures: ExposureSource::SyntheticAr1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(DlimError::InvalidConfig("snr must be positive".into()));
        }
        if self.n < 2 || self.times < 2 || self.replicate_count == 0 {
            return Err(DlimError::InvalidConfig(
                "need n >= 2, T >= 2 and at least one replicate".into(),
            ));
        }
        if self.rho_true.len() != self.modifiers {
            return Err(DlimError::mismatch("true weights", self.modifiers, self.rho_true.len()));
        }
        let total: f64 = self.rho_true.iter().sum();
        if (total - 1.0).abs() > 1e-12 || self.rho_true.iter().any(|&r| r < 0.0) {
            return Err(DlimError::InvalidConfig("true weights must lie on the simplex".into()));
        }
        Ok(())
    }

    /// Seed of replicate `r`.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCohort {
    pub data: CohortData,
    pub rho_true: Vec<f64>,
    pub m_star_true: DVector<f64>,
    /// `beta_true[(i, t - 1)] = true_effect(t, m_star_true[i])`.
    pub beta_true: DMatrix<f64>,
    pub sigma_true: f64,
    /// Coefficients of the columns of `data.z`.
    pub gamma_true: DVector<f64>,
}

fn std_normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Lag at which the true effect peaks: `37 / (1 + exp(-20 (m* - 0.5)))`.
pub fn effect_center(m_star: f64) -> f64 {
    DGM_HORIZON / (1.0 + (-20.0 * (m_star - 0.5)).exp())
}

/// `m* 2.5 phi((t - c) / 5)` with `c = effect_center(m*)`, for real `t`.
pub fn true_effect_at(t: f64, m_star: f64) -> f64 {
    m_star * 2.5 * std_normal_density((t - effect_center(m_star)) / 5.0)
}

/// True effect at exposure time `t` (1-based).
pub fn true_effect(t: usize, m_star: f64) -> f64 {
    true_effect_at(t as f64, m_star)
}

fn mvn_rows<R: Rng + ?Sized>(n: usize, mean: &[f64], factor: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let d = mean.len();
    let mut out = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(d);
    for i in 0..n {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
        let x = factor * &z;
        for j in 0..d {
            out[(i, j)] = mean[j] + x[j];
        }
    }
    out
}

/// Unit-diagonal matrix with off-diagonals drawn from U(0.4, 0.7), moved to
/// the nearest positive-definite correlation matrix.
pub fn random_correlation<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::identity(l, l);
    for i in 0..l {
        for j in (i + 1)..l {
            let v = rng.random_range(CORRELATION_RANGE.0..CORRELATION_RANGE.1);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    nearest_correlation(&a)
}

fn nearest_correlation(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let floored = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let mut b = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    b = (&b + b.transpose()) * 0.5;
    let d = b.diagonal().map(|v| 1.0 / v.sqrt());
    let mut c = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * d[i] * d[j]);
    let mut jitter = EIGEN_FLOOR;
    for _ in 0..JITTER_ATTEMPTS {
        if Cholesky::new(c.clone()).is_some() {
            return Ok(c);
        }
        for i in 0..c.nrows() {
            c[(i, i)] += jitter;
        }
        jitter *= 2.0;
    }
    Err(DlimError::Simulation("could not make the modifier correlation matrix positive definite".into()))
}

fn cholesky_factor(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::<f64, Dyn>::new(cov)
        .map(|c| c.l())
        .ok_or_else(|| DlimError::Simulation("covariance is not positive definite".into()))
}

/// Correlated Gaussian modifiers with each column min-max scaled to [0, 1].
/// Also returns the correlation matrix used.
pub fn generate_modifiers_with_correlation<R: Rng + ?Sized>(
    n: usize,
    l: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if l < 2 {
        return Err(DlimError::Simulation("modifier generation needs at least 2 modifiers".into()));
    }
    let corr = random_correlation(l, rng)?;
    let raw = mvn_rows(n, &vec![0.0; l], &cholesky_factor(corr.clone())?, rng);
    let mut scaled = raw.clone();
    for mut col in scaled.column_iter_mut() {
        let lo = col.min();
        let hi = col.max();
        if hi <= lo {
            return Err(DlimError::Simulation("a modifier column is constant".into()));
        }
        col.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
    Ok((scaled, raw, corr))
}

pub fn generate_modifiers<R: Rng + ?Sized>(n: usize, l: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    Ok(generate_modifiers_with_correlation(n, l, rng)?.0)
}

/// Covariate draws and regression coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    pub values: DMatrix<f64>,
    pub covariate_coefficients: DVector<f64>,
    pub modifier_coefficients: DVector<f64>,
}

/// Three correlated covariates centered at the mean first-time exposure, with
/// N(0, 1) coefficients; modifier main effects get U(-1, 1) coefficients.
pub fn generate_covariates<R: Rng + ?Sized>(
    n: usize,
    x: &DMatrix<f64>,
    modifiers: usize,
    rng: &mut R,
) -> Result<Covariates> {
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(DlimError::Simulation("exposures are empty".into()));
    }
    let centre = mean(x.column(0).as_slice());
    let cov = DMatrix::from_fn(3, 3, |i, j| COVARIATE_COVARIANCE[i][j]);
    let values = mvn_rows(n, &[centre; 3], &cholesky_factor(cov)?, rng);
    let covariate_coefficients = DVector::from_fn(3, |_, _| StandardNormal.sample(rng));
    let modifier_coefficients = DVector::from_fn(modifiers, |_, _| rng.random_range(-1.0..1.0));
    Ok(Covariates {
        values,
        covariate_coefficients,
        modifier_coefficients,
    })
}

/// Exposure histories, one row per individual.
pub fn generate_exposures<R: Rng + ?Sized>(n: usize, t: usize, source: &ExposureSource, rng: &mut R) -> Result<DMatrix<f64>> {
    if t < 2 {
        return Err(DlimError::Simulation("need at least 2 exposure times".into()));
    }
    match source {
        ExposureSource::SyntheticAr1 => {
            let innovation = Normal::new(0.0, AR_SD * (1.0 - AR_PHI * AR_PHI).sqrt()).expect("positive sd");
            let mut out = DMatrix::zeros(n, t);
            for i in 0..n {
                let z: f64 = StandardNormal.sample(rng);
                let mut dev = AR_SD * z;
                for s in 0..t {
                    if s > 0 {
                        dev = AR_PHI * dev + innovation.sample(rng);
                    }
                    out[(i, s)] = (AR_MEAN + dev).max(0.0);
                }
            }
            Ok(out)
        }
        ExposureSource::CsvPool { rows, replace } => {
            if rows.ncols() < t {
                return Err(DlimError::Simulation(format!(
                    "exposure pool has {} columns, need {t}",
                    rows.ncols()
                )));
            }
            if rows.nrows() == 0 {
                return Err(DlimError::Simulation("exposure pool is empty".into()));
            }
            let picks: Vec<usize> = if *replace {
                (0..n).map(|_| rng.random_range(0..rows.nrows())).collect()
            } else {
                if n > rows.nrows() {
                    return Err(DlimError::Simulation(format!(
                        "cannot draw {n} rows without replacement from a pool of {}",
                        rows.nrows()
                    )));
                }
                let mut idx: Vec<usize> = (0..rows.nrows()).collect();
                idx.shuffle(rng);
                idx.truncate(n);
                idx
            };
            Ok(DMatrix::from_fn(n, t, |i, s| rows[(picks[i], s)]))
        }
    }
}

/// Gaussian responses with noise SD equal to the SD of the exposure term over `snr`.
pub fn generate_response<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    z: &DMatrix<f64>,
    gamma: &DVector<f64>,
    snr: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, f64)> {
    if !(snr > 0.0) {
        return Err(DlimError::InvalidConfig("snr must be positive".into()));
    }
    let exposure_term: Vec<f64> = (0..x.nrows()).map(|i| x.row(i).dot(&beta.row(i))).collect();
    let signal = sample_sd(&exposure_term);
    if !(signal > 0.0 && signal.is_finite()) {
        return Err(DlimError::Simulation("exposure term has no variation".into()));
    }
    let sigma = signal / snr;
    let offset = z * gamma;
    let noise = Normal::new(0.0, sigma).expect("positive sd");
    let y = DVector::from_fn(x.nrows(), |i, _| exposure_term[i] + offset[i] + noise.sample(rng));
    Ok((y, sigma))
}

/// `beta[(i, t - 1)] = true_effect(t, m_star[i])`.
pub fn true_effect_matrix(m_star: &DVector<f64>, times: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m_star.len(), times, |i, t| true_effect(t + 1, m_star[i]))
}

/// One replicate of a scenario; bit-identical for a given spec and replicate index.
pub fn simulate_cohort(spec: &ScenarioSpec, replicate: usize) -> Result<SimulatedCohort> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.replicate_seed(replicate));
    let n = spec.n;
    let l = spec.modifiers;
    let x = generate_exposures(n, spec.times, &spec.exposures, &mut rng)?;
    let m = generate_modifiers(n, l, &mut rng)?;
    let cov = generate_covariates(n, &x, l, &mut rng)?;

    let p = 1 + l + 3;
    let mut z = DMatrix::zeros(n, p);
    z.column_mut(0).fill(1.0);
    z.columns_mut(1, l).copy_from(&m);
    z.columns_mut(1 + l, 3).copy_from(&cov.values);
    let mut gamma = DVector::zeros(p);
    gamma.rows_mut(1, l).copy_from(&cov.modifier_coefficients);
    gamma.rows_mut(1 + l, 3).copy_from(&cov.covariate_coefficients);

    let m_star = modifier_index(&m, &spec.rho_true)?;
    let beta = true_effect_matrix(&m_star, spec.times);
    let (y, sigma) = generate_response(&x, &beta, &z, &gamma, spec.snr, &mut rng)?;
    let data = CohortData::new(y, x, m, z, Family::Gaussian)?;
    Ok(SimulatedCohort {
        data,
        rho_true: spec.rho_true.clone(),
        m_star_true: m_star,
        beta_true: beta,
        sigma_true: sigma,
        gamma_true: gamma,
    })
}
