//! Weighted modifier index, cross-basis design `W(X, M, rho)` and the full
//! design `U = [W | Z]`.
//!
//! Cross-basis columns are ordered with the exposure-time index fastest: column
//! `k * nu_time + j` holds `b_k(m*) * sum_t x_t c_j(t)`. This is the column order
//! of `b(m*) (x) C`, so the posterior transformations are plain matrix products.

use nalgebra::{DMatrix, DVector};

use crate::error::{DlimError, Result};
use crate::spline::{make_spec, KnotPlacement, NaturalSpline, SplineSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Family {
    #[default]
    Gaussian,
    Binomial,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = DlimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "binomial" | "logistic" => Ok(Family::Binomial),
            other => Err(DlimError::InvalidConfig(format!("unknown family '{other}'"))),
        }
    }
}

/// Immutable fit input.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortData {
    pub y: DVector<f64>,
    /// Exposure histories, n x T.
    pub x: DMatrix<f64>,
    /// Candidate modifiers scaled to [0, 1], n x L.
    pub m: DMatrix<f64>,
    /// Covariates with a leading intercept column, n x p.
    pub z: DMatrix<f64>,
    pub family: Family,
}

impl CohortData {
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        m: DMatrix<f64>,
        z: DMatrix<f64>,
        family: Family,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(DlimError::InvalidData("no observations".into()));
        }
        for (ctx, rows) in [("exposures", x.nrows()), ("modifiers", m.nrows()), ("covariates", z.nrows())] {
            if rows != n {
                return Err(DlimError::mismatch(ctx, n, rows));
            }
        }
        if x.ncols() < 2 {
            return Err(DlimError::InvalidData(format!(
                "need at least 2 exposure times, got {}",
                x.ncols()
            )));
        }
        if m.ncols() == 0 {
            return Err(DlimError::InvalidData("need at least one modifier".into()));
        }
        if z.ncols() == 0 || z.column(0).iter().any(|&v| v != 1.0) {
            return Err(DlimError::InvalidData(
                "first covariate column must be an all-ones intercept".into(),
            ));
        }
        if y.iter().chain(x.iter()).chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(DlimError::NonFinite("cohort data"));
        }
        for i in 0..n {
            for l in 0..m.ncols() {
                let v = m[(i, l)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(DlimError::InvalidData(format!(
                        "modifier value {v} at row {} column {} is outside [0, 1]",
                        i + 1,
                        l + 1
                    )));
                }
            }
        }
        if family == Family::Binomial && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(DlimError::InvalidData("binomial response must be 0 or 1".into()));
        }
        Ok(Self { y, x, m, z, family })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn times(&self) -> usize {
        self.x.ncols()
    }

    pub fn modifiers(&self) -> usize {
        self.m.ncols()
    }

    pub fn covariates(&self) -> usize {
        self.z.ncols()
    }
}

/// Unnormalized weights, inclusion indicators, and the simplex weights they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexWeights {
    pub a: Vec<f64>,
    pub eta: Vec<bool>,
    pub rho: Vec<f64>,
}

impl IndexWeights {
    pub fn from_unnormalized(a: Vec<f64>) -> Result<Self> {
        let rho = crate::priors::normalize_weights(&a)?;
        let eta = a.iter().map(|&v| v != 0.0).collect();
        Ok(Self { a, eta, rho })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// `m*_i = m_i' rho` for every row.
pub fn modifier_index(m: &DMatrix<f64>, rho: &[f64]) -> Result<DVector<f64>> {
    if m.ncols() != rho.len() {
        return Err(DlimError::mismatch("modifier index weights", m.ncols(), rho.len()));
    }
    let mut out = DVector::zeros(m.nrows());
    modifier_index_into(m, rho, out.as_mut_slice());
    Ok(out)
}

/// Unchecked variant writing into `out`; results are clamped to [0, 1] to absorb rounding.
#[inline]
pub(crate) fn modifier_index_into(m: &DMatrix<f64>, rho: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (l, &r) in rho.iter().enumerate() {
        if r == 0.0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(m.column(l).iter()) {
            *o += v * r;
        }
    }
    for o in out.iter_mut() {
        *o = o.clamp(0.0, 1.0);
    }
}

/// `V = X C`: the rho-free part of the cross-basis.
pub fn time_contraction(x: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != c.nrows() {
        return Err(DlimError::mismatch("time contraction", c.nrows(), x.ncols()));
    }
    Ok(x * c)
}

#[derive(Debug, Clone)]
pub struct CrossBasisDesign {
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// Row-wise outer product of the modifier basis `B` (n x nu_mod) and `V` (n x nu_time).
pub fn build_cross_basis(v: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<CrossBasisDesign> {
    if v.nrows() != b.nrows() {
        return Err(DlimError::mismatch("cross-basis rows", v.nrows(), b.nrows()));
    }
    let mut w = DMatrix::zeros(v.nrows(), v.ncols() * b.ncols());
    fill_cross_basis(v, b, &mut w);
    Ok(CrossBasisDesign { w, v: v.clone() })
}

pub(crate) fn fill_cross_basis(v: &DMatrix<f64>, b: &DMatrix<f64>, w: &mut DMatrix<f64>) {
    let nu_time = v.ncols();
    for k in 0..b.ncols() {
        for j in 0..nu_time {
            let col = k * nu_time + j;
            for i in 0..v.nrows() {
                w[(i, col)] = b[(i, k)] * v[(i, j)];
            }
        }
    }
}

/// `U = [W | Z]`.
pub fn assemble_design(w: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w.nrows() != z.nrows() {
        return Err(DlimError::mismatch("design rows", w.nrows(), z.nrows()));
    }
    let mut u = DMatrix::zeros(w.nrows(), w.ncols() + z.ncols());
    u.columns_mut(0, w.ncols()).copy_from(w);
    u.columns_mut(w.ncols(), z.ncols()).copy_from(z);
    Ok(u)
}

/// Flat cross-basis coefficient index for time basis `j` and modifier basis `k`.
#[inline]
pub fn cross_index(j: usize, k: usize, nu_time: usize) -> usize {
    k * nu_time + j
}

/// Inverse of [`cross_index`]: `(j, k)`.
#[inline]
pub fn cross_pair(index: usize, nu_time: usize) -> (usize, usize) {
    (index % nu_time, index / nu_time)
}

/// The two spline bases of a fitted model.
#[derive(Debug, Clone)]
pub struct CrossBasis {
    pub modifier: NaturalSpline,
    pub time: NaturalSpline,
    /// Exposure-time basis evaluated at t = 1..T, T x nu_time.
    pub c: DMatrix<f64>,
}

impl CrossBasis {
    /// Modifier basis on [0, 1] with equally spaced knots; time basis on
    /// [1, T] with knots at quantiles of 1..T.
    pub fn new(nu_mod: usize, nu_time: usize, times: usize) -> Result<Self> {
        if times < 2 {
            return Err(DlimError::InvalidData("need at least 2 exposure times".into()));
        }
        let mod_spec = make_spec(nu_mod, (0.0, 1.0), KnotPlacement::EquallySpaced)?;
        let grid: Vec<f64> = (1..=times).map(|t| t as f64).collect();
        let time_spec = make_spec(nu_time, (1.0, times as f64), KnotPlacement::QuantilesOf(&grid))?;
        Self::from_specs(&mod_spec, &time_spec, times)
    }

    pub fn from_specs(modifier: &SplineSpec, time: &SplineSpec, times: usize) -> Result<Self> {
        let modifier = NaturalSpline::new(modifier);
        let time = NaturalSpline::new(time);
        let grid: Vec<f64> = (1..=times).map(|t| t as f64).collect();
        let c = time.evaluate(&grid)?.values;
        Ok(Self { modifier, time, c })
    }

    pub fn nu_mod(&self) -> usize {
        self.modifier.df()
    }

    pub fn nu_time(&self) -> usize {
        self.time.df()
    }

    pub fn times(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_theta(&self) -> usize {
        self.nu_mod() * self.nu_time()
    }

    /// Modifier basis rows at every index value.
    pub fn modifier_rows(&self, m_star: &[f64], out: &mut DMatrix<f64>) {
        let mut row = vec![0.0; self.nu_mod()];
        for (i, &m) in m_star.iter().enumerate() {
            self.modifier.eval_into(m, &mut row);
            for (k, v) in row.iter().enumerate() {
                out[(i, k)] = *v;
            }
        }
    }
}
