//! Simulation scoring: index error, and RMSE, interval coverage and width for
//! cumulative and lag-specific effects.
//!
//! Effects are scored at every individual's own index. Posterior draws of the
//! index use the weights of the same draw, so interval uncertainty includes
//! uncertainty in the weights.

use nalgebra::DMatrix;

use crate::design::CrossBasis;
use crate::error::{DlimError, Result};
use crate::sampler::{posterior_mean_rho, PosteriorDraws};
use crate::simulation::SimulatedCohort;
use crate::stats::{equal_tailed_interval, mean, std_normal_quantile};

/// RMSE, empirical coverage and mean width of a set of intervals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntervalScore {
    pub rmse: f64,
    pub coverage: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReplicateScore {
    pub index_rmse: f64,
    pub index_abs_bias: f64,
    pub cumulative: IntervalScore,
    pub pointwise: IntervalScore,
}

/// Running sums for an `IntervalScore`, one target at a time.
#[derive(Debug, Clone, Default)]
pub struct IntervalAccumulator {
    squared_error: f64,
    covered: usize,
    width: f64,
    count: usize,
}

impl IntervalAccumulator {
    /// Adds one target. `draws` is reordered in place.
    pub fn push_draws(&mut self, truth: f64, draws: &mut [f64], alpha: f64) {
        let estimate = mean(draws);
        let (lo, hi) = equal_tailed_interval(draws, alpha);
        self.push_interval(truth, estimate, lo, hi);
    }

    pub fn push_interval(&mut self, truth: f64, estimate: f64, lower: f64, upper: f64) {
        self.squared_error += (truth - estimate) * (truth - estimate);
        self.covered += usize::from(lower <= truth && truth <= upper);
        self.width += upper - lower;
        self.count += 1;
    }

    pub fn finish(&self) -> IntervalScore {
        let n = self.count as f64;
        IntervalScore {
            rmse: (self.squared_error / n).sqrt(),
            coverage: self.covered as f64 / n,
            width: self.width / n,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DlimError::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `(rmse, mean absolute error)` of estimated against true index values.
pub fn index_metrics(m_true: &[f64], m_hat: &[f64]) -> Result<(f64, f64)> {
    if m_true.len() != m_hat.len() {
        return Err(DlimError::mismatch("index values", m_true.len(), m_hat.len()));
    }
    if m_true.is_empty() {
        return Err(DlimError::InvalidData("no index values to compare".into()));
    }
    let n = m_true.len() as f64;
    let (sq, abs) = m_true
        .iter()
        .zip(m_hat)
        .fold((0.0, 0.0), |(sq, abs), (a, b)| (sq + (a - b) * (a - b), abs + (a - b).abs()));
    Ok(((sq / n).sqrt(), abs / n))
}

/// Scores cumulative effects; `ce_draws` is draws by individual.
pub fn cumulative_metrics(ce_true: &[f64], ce_draws: &DMatrix<f64>, alpha: f64) -> Result<IntervalScore> {
    check_alpha(alpha)?;
    if ce_draws.ncols() != ce_true.len() {
        return Err(DlimError::mismatch("cumulative effect draws (columns)", ce_true.len(), ce_draws.ncols()));
    }
    if ce_draws.nrows() < 2 {
        return Err(DlimError::InvalidData("need at least two draws".into()));
    }
    if ce_true.is_empty() {
        return Err(DlimError::InvalidData("no individuals to score".into()));
    }
    let mut acc = IntervalAccumulator::default();
    let mut col = vec![0.0; ce_draws.nrows()];
    for (i, &truth) in ce_true.iter().enumerate() {
        col.copy_from_slice(ce_draws.column(i).as_slice());
        acc.push_draws(truth, &mut col, alpha);
    }
    Ok(acc.finish())
}

/// Scores lag-specific effects; `beta_draws[i]` is the draws-by-time block of individual `i`.
pub fn pointwise_metrics(beta_true: &DMatrix<f64>, beta_draws: &[DMatrix<f64>], alpha: f64) -> Result<IntervalScore> {
    check_alpha(alpha)?;
    if beta_draws.len() != beta_true.nrows() {
        return Err(DlimError::mismatch("pointwise draw blocks", beta_true.nrows(), beta_draws.len()));
    }
    if beta_true.nrows() == 0 || beta_true.ncols() == 0 {
        return Err(DlimError::InvalidData("no effects to score".into()));
    }
    let mut acc = IntervalAccumulator::default();
    for (i, block) in beta_draws.iter().enumerate() {
        if block.ncols() != beta_true.ncols() {
            return Err(DlimError::mismatch("pointwise draws (columns)", beta_true.ncols(), block.ncols()));
        }
        if block.nrows() < 2 {
            return Err(DlimError::InvalidData("need at least two draws".into()));
        }
        let mut col = vec![0.0; block.nrows()];
        for t in 0..block.ncols() {
            col.copy_from_slice(block.column(t).as_slice());
            acc.push_draws(beta_true[(i, t)], &mut col, alpha);
        }
    }
    Ok(acc.finish())
}

/// Normal-approximation intervals `estimate +/- z_{1 - alpha/2} se`.
pub fn wald_metrics(truth: &[f64], estimate: &[f64], se: &[f64], alpha: f64) -> Result<IntervalScore> {
    check_alpha(alpha)?;
    if estimate.len() != truth.len() || se.len() != truth.len() {
        return Err(DlimError::mismatch("wald inputs", truth.len(), estimate.len().min(se.len())));
    }
    if truth.is_empty() {
        return Err(DlimError::InvalidData("no targets to score".into()));
    }
    let z = std_normal_quantile(1.0 - alpha / 2.0);
    let mut acc = IntervalAccumulator::default();
    for ((&t, &e), &s) in truth.iter().zip(estimate).zip(se) {
        acc.push_interval(t, e, e - z * s, e + z * s);
    }
    Ok(acc.finish())
}

/// Field-wise mean of replicate scores.
pub fn aggregate(scores: &[ReplicateScore]) -> Result<ReplicateScore> {
    if scores.is_empty() {
        return Err(DlimError::InvalidData("no replicate scores to aggregate".into()));
    }
    let n = scores.len() as f64;
    let avg = |f: &dyn Fn(&ReplicateScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    Ok(ReplicateScore {
        index_rmse: avg(&|s| s.index_rmse),
        index_abs_bias: avg(&|s| s.index_abs_bias),
        cumulative: IntervalScore {
            rmse: avg(&|s| s.cumulative.rmse),
            coverage: avg(&|s| s.cumulative.coverage),
            width: avg(&|s| s.cumulative.width),
        },
        pointwise: IntervalScore {
            rmse: avg(&|s| s.pointwise.rmse),
            coverage: avg(&|s| s.pointwise.coverage),
            width: avg(&|s| s.pointwise.width),
        },
    })
}

/// Scores a fit against the truths of a simulated cohort.
///
/// The index estimate uses the posterior mean of the weights. Effect draws
/// for individual `i` evaluate the surface of draw `s` at `m_i' rho^(s)`.
pub fn score_replicate(
    cohort: &SimulatedCohort,
    draws: &PosteriorDraws,
    basis: &CrossBasis,
    alpha: f64,
) -> Result<ReplicateScore> {
    check_alpha(alpha)?;
    let s_count = draws.len();
    if s_count < 2 {
        return Err(DlimError::InvalidData("need at least two draws".into()));
    }
    let data = &cohort.data;
    let n = data.n();
    let t_len = basis.times();
    let nu_mod = basis.nu_mod();
    let nu_time = basis.nu_time();
    if draws.theta.ncols() != basis.n_theta() {
        return Err(DlimError::mismatch("theta draws (columns)", basis.n_theta(), draws.theta.ncols()));
    }

    let rho_hat = posterior_mean_rho(draws);
    let m_hat: Vec<f64> = (0..n).map(|i| data.m.row(i).iter().zip(&rho_hat).map(|(a, b)| a * b).sum()).collect();
    let (index_rmse, index_abs_bias) = index_metrics(cohort.m_star_true.as_slice(), &m_hat)?;

    // Per-draw `C Theta^(s)`, time by modifier-basis.
    let curves: Vec<DMatrix<f64>> = (0..s_count)
        .map(|s| {
            let theta: Vec<f64> = draws.theta.row(s).iter().copied().collect();
            &basis.c * DMatrix::from_column_slice(nu_time, nu_mod, &theta)
        })
        .collect();
    let rhos: Vec<Vec<f64>> = (0..s_count).map(|s| draws.rho(s)).collect();

    let mut cumulative = IntervalAccumulator::default();
    let mut pointwise = IntervalAccumulator::default();
    let mut block = DMatrix::zeros(s_count, t_len);
    let mut b = vec![0.0; nu_mod];
    let mut ce = vec![0.0; s_count];
    let mut col = vec![0.0; s_count];
    for i in 0..n {
        let m_row = data.m.row(i);
        for s in 0..s_count {
            let m_star: f64 = m_row.iter().zip(&rhos[s]).map(|(a, r)| a * r).sum();
            basis.modifier.eval_into(m_star.clamp(0.0, 1.0), &mut b);
            let curve = &curves[s];
            let mut total = 0.0;
            for t in 0..t_len {
                let v: f64 = (0..nu_mod).map(|k| curve[(t, k)] * b[k]).sum();
                block[(s, t)] = v;
                total += v;
            }
            ce[s] = total;
        }
        let truth_row = cohort.beta_true.row(i);
        for t in 0..t_len {
            col.copy_from_slice(block.column(t).as_slice());
            pointwise.push_draws(truth_row[t], &mut col, alpha);
        }
        cumulative.push_draws(truth_row.sum(), &mut ce, alpha);
    }
    Ok(ReplicateScore {
        index_rmse,
        index_abs_bias,
        cumulative: cumulative.finish(),
        pointwise: pointwise.finish(),
    })
}
