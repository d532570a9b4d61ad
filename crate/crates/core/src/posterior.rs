//! Exposure-time-response curves, cumulative effects and weight summaries
//! from stored draws.
//!
//! For a fixed index value `m*` the lag-specific effects are
//! `beta(m*) = (b(m*)' kron C) theta`, a `T x JK` loading applied to each draw,
//! and the cumulative effect uses the column sums of that loading.

use nalgebra::{DMatrix, DVector};

use crate::design::{cross_index, CrossBasis};
use crate::error::{DlimError, Result};
use crate::sampler::PosteriorDraws;
use crate::spline::NaturalSpline;
use crate::stats::{equal_tailed_interval, mean, quantile, sample_sd};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_GRID_POINTS: usize = 101;

/// `T x JK` matrix mapping `theta` to `(beta_1(m*), ..., beta_T(m*))`.
pub fn effect_loading(modifier: &NaturalSpline, c: &DMatrix<f64>, m_star: f64) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&m_star) {
        return Err(DlimError::InvalidData(format!("index value {m_star} outside [0, 1]")));
    }
    let nu_mod = modifier.df();
    let nu_time = c.ncols();
    let mut b = vec![0.0; nu_mod];
    modifier.eval_into(m_star, &mut b);
    let mut loading = DMatrix::zeros(c.nrows(), nu_mod * nu_time);
    for (k, &bk) in b.iter().enumerate() {
        for j in 0..nu_time {
            let col = cross_index(j, k, nu_time);
            for t in 0..c.nrows() {
                loading[(t, col)] = bk * c[(t, j)];
            }
        }
    }
    Ok(loading)
}

fn check_theta(theta: &DMatrix<f64>, modifier: &NaturalSpline, c: &DMatrix<f64>) -> Result<()> {
    let expected = modifier.df() * c.ncols();
    if theta.ncols() != expected {
        return Err(DlimError::mismatch("theta draws (columns)", expected, theta.ncols()));
    }
    Ok(())
}

/// Row `s` holds `beta_1(m*), ..., beta_T(m*)` under draw `s`.
pub fn pointwise_effect_draws(
    theta: &DMatrix<f64>,
    m_star: f64,
    modifier: &NaturalSpline,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_theta(theta, modifier, c)?;
    let loading = effect_loading(modifier, c, m_star)?;
    Ok(theta * loading.transpose())
}

/// `CE(m*)` under every draw.
pub fn cumulative_effect_draws(
    theta: &DMatrix<f64>,
    m_star: f64,
    modifier: &NaturalSpline,
    c: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_theta(theta, modifier, c)?;
    let loading = effect_loading(modifier, c, m_star)?;
    let w = loading.row_sum().transpose();
    Ok(theta * w)
}

/// Means and equal-tailed intervals over a grid of index values.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSummary {
    pub m_grid: Vec<f64>,
    pub alpha: f64,
    /// Grid point by time.
    pub pointwise_mean: DMatrix<f64>,
    pub pointwise_lower: DMatrix<f64>,
    pub pointwise_upper: DMatrix<f64>,
    pub cumulative_mean: Vec<f64>,
    pub cumulative_lower: Vec<f64>,
    pub cumulative_upper: Vec<f64>,
}

impl EffectSummary {
    pub fn times(&self) -> usize {
        self.pointwise_mean.ncols()
    }

    fn grid_position(&self, m_star: f64) -> Result<usize> {
        self.m_grid
            .iter()
            .position(|&g| (g - m_star).abs() <= 1e-12)
            .ok_or_else(|| DlimError::InvalidData(format!("index value {m_star} is not on the summary grid")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DlimError::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_draw_count(s: usize) -> Result<()> {
    match s {
        0 => Err(DlimError::EmptyDraws),
        1 => Err(DlimError::InvalidData("summaries need at least two draws".into())),
        _ => Ok(()),
    }
}

/// Pointwise and cumulative summaries of `theta` draws at every grid value.
pub fn summarize_effects(theta: &DMatrix<f64>, basis: &CrossBasis, m_grid: &[f64], alpha: f64) -> Result<EffectSummary> {
    check_alpha(alpha)?;
    check_draw_count(theta.nrows())?;
    let t_len = basis.times();
    let g = m_grid.len();
    let mut summary = EffectSummary {
        m_grid: m_grid.to_vec(),
        alpha,
        pointwise_mean: DMatrix::zeros(g, t_len),
        pointwise_lower: DMatrix::zeros(g, t_len),
        pointwise_upper: DMatrix::zeros(g, t_len),
        cumulative_mean: vec![0.0; g],
        cumulative_lower: vec![0.0; g],
        cumulative_upper: vec![0.0; g],
    };
    for (gi, &m) in m_grid.iter().enumerate() {
        let beta = pointwise_effect_draws(theta, m, &basis.modifier, &basis.c)?;
        for t in 0..t_len {
            let mut col: Vec<f64> = beta.column(t).iter().copied().collect();
            summary.pointwise_mean[(gi, t)] = mean(&col);
            let (lo, hi) = equal_tailed_interval(&mut col, alpha);
            summary.pointwise_lower[(gi, t)] = lo;
            summary.pointwise_upper[(gi, t)] = hi;
        }
        let mut ce: Vec<f64> = cumulative_effect_draws(theta, m, &basis.modifier, &basis.c)?.iter().copied().collect();
        summary.cumulative_mean[gi] = mean(&ce);
        let (lo, hi) = equal_tailed_interval(&mut ce, alpha);
        summary.cumulative_lower[gi] = lo;
        summary.cumulative_upper[gi] = hi;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectSign {
    Positive,
    Negative,
}

/// A maximal run of exposure times (1-based, inclusive) whose interval excludes zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub sign: EffectSign,
}

/// Windows of susceptibility at a grid value.
pub fn windows_of_susceptibility(summary: &EffectSummary, m_star: f64) -> Result<Vec<Window>> {
    let gi = summary.grid_position(m_star)?;
    let mut windows: Vec<Window> = Vec::new();
    for t in 0..summary.times() {
        let sign = if summary.pointwise_lower[(gi, t)] > 0.0 {
            Some(EffectSign::Positive)
        } else if summary.pointwise_upper[(gi, t)] < 0.0 {
            Some(EffectSign::Negative)
        } else {
            None
        };
        let Some(sign) = sign else { continue };
        match windows.last_mut() {
            Some(w) if w.end == t && w.sign == sign => w.end = t + 1,
            _ => windows.push(Window {
                start: t + 1,
                end: t + 1,
                sign,
            }),
        }
    }
    Ok(windows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSummary {
    pub rho_mean: Vec<f64>,
    pub rho_sd: Vec<f64>,
    pub pip: Vec<f64>,
}

impl WeightSummary {
    /// Modifiers with posterior inclusion probability above one half.
    pub fn selected(&self) -> Vec<bool> {
        self.pip.iter().map(|&p| p > 0.5).collect()
    }
}

pub fn summarize_weights(draws: &PosteriorDraws) -> Result<WeightSummary> {
    check_draw_count(draws.len())?;
    let l_count = draws.a.ncols();
    let s = draws.len();
    let mut rho = vec![Vec::with_capacity(s); l_count];
    for i in 0..s {
        for (l, r) in draws.rho(i).into_iter().enumerate() {
            rho[l].push(r);
        }
    }
    Ok(WeightSummary {
        rho_mean: rho.iter().map(|r| mean(r)).collect(),
        rho_sd: rho.iter().map(|r| sample_sd(r)).collect(),
        pip: (0..l_count)
            .map(|l| draws.eta.column(l).iter().filter(|&&e| e == 1).count() as f64 / s as f64)
            .collect(),
    })
}

/// `points` equally spaced values on [0, 1] followed by the requested
/// quantiles (probabilities in (0, 1)) of fitted index values.
pub fn default_grid(points: usize, fitted_index: &[f64], probabilities: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = match points {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..points).map(|i| i as f64 / (points - 1) as f64).collect(),
    };
    if !fitted_index.is_empty() {
        grid.extend(probabilities.iter().map(|&p| quantile(fitted_index, p).clamp(0.0, 1.0)));
    }
    grid
}
