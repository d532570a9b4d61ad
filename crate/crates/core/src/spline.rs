//! Natural cubic spline bases with an intercept.
//!
//! A basis with `df` columns uses `df - 2` interior knots. It is built from the
//! cubic B-splines on the clamped knot vector, restricted to the subspace whose
//! second derivative vanishes at both boundary knots. Outside the boundary the
//! basis is continued linearly using the value and slope at the boundary.
//!
//! The compiled form stores every column as a piecewise cubic in Taylor form at
//! the left end of each knot interval, so evaluation is a binary search plus a
//! Horner step. This keeps the modifier basis cheap enough to rebuild on every
//! Metropolis proposal.

use nalgebra::DMatrix;

use crate::error::{DlimError, Result};
use crate::stats::quantile;

const CUBIC_ORDER: usize = 4;

/// Where interior knots go.
#[derive(Debug, Clone, Copy)]
pub enum KnotPlacement<'a> {
    EquallySpaced,
    QuantilesOf(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpec {
    df: usize,
    boundary: (f64, f64),
    interior_knots: Vec<f64>,
}

impl SplineSpec {
    /// Builds a spec from explicit knots, checking every invariant.
    pub fn new(df: usize, boundary: (f64, f64), interior_knots: Vec<f64>) -> Result<Self> {
        if df == 0 {
            return Err(DlimError::InvalidSpline("df must be at least 1".into()));
        }
        if !boundary.0.is_finite() || !boundary.1.is_finite() {
            return Err(DlimError::InvalidSpline("boundary knots must be finite".into()));
        }
        if boundary.0 >= boundary.1 {
            return Err(DlimError::InvalidSpline(format!(
                "boundary ({}, {}) is not increasing",
                boundary.0, boundary.1
            )));
        }
        let expected = df.saturating_sub(2);
        if interior_knots.len() != expected {
            return Err(DlimError::InvalidSpline(format!(
                "df = {df} needs {expected} interior knots, got {}",
                interior_knots.len()
            )));
        }
        let mut prev = boundary.0;
        for &k in &interior_knots {
            if !k.is_finite() || k <= prev || k >= boundary.1 {
                return Err(DlimError::InvalidSpline(format!(
                    "interior knots {interior_knots:?} must be strictly increasing inside ({}, {})",
                    boundary.0, boundary.1
                )));
            }
            prev = k;
        }
        Ok(Self {
            df,
            boundary,
            interior_knots,
        })
    }

    pub fn df(&self) -> usize {
        self.df
    }

    pub fn boundary(&self) -> (f64, f64) {
        self.boundary
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    /// Always true: every basis produced here carries an intercept.
    pub fn includes_intercept(&self) -> bool {
        true
    }
}

/// Places `df - 2` interior knots inside `boundary`.
pub fn make_spec(df: usize, boundary: (f64, f64), placement: KnotPlacement<'_>) -> Result<SplineSpec> {
    if df == 0 {
        return Err(DlimError::InvalidSpline("df must be at least 1".into()));
    }
    if !boundary.0.is_finite() || !boundary.1.is_finite() {
        return Err(DlimError::InvalidSpline("boundary knots must be finite".into()));
    }
    let count = df.saturating_sub(2);
    let probs: Vec<f64> = (1..=count).map(|j| j as f64 / (count + 1) as f64).collect();
    let knots = match placement {
        KnotPlacement::EquallySpaced => probs
            .iter()
            .map(|p| boundary.0 + p * (boundary.1 - boundary.0))
            .collect(),
        KnotPlacement::QuantilesOf(values) => {
            if values.is_empty() {
                return Err(DlimError::InvalidSpline(
                    "quantile placement needs at least one value".into(),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(DlimError::NonFinite("knot placement values"));
            }
            probs.iter().map(|&p| quantile(values, p)).collect()
        }
    };
    SplineSpec::new(df, boundary, knots)
}

/// Rows are evaluation points, columns are basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub spec: SplineSpec,
}

impl BasisMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Evaluates the basis for `spec` at every point.
pub fn evaluate_basis(spec: &SplineSpec, points: &[f64]) -> Result<BasisMatrix> {
    let spline = NaturalSpline::new(spec);
    spline.evaluate(points)
}

/// Compiled natural spline basis, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    spec: SplineSpec,
    /// Interval left ends: lower boundary followed by the interior knots.
    breaks: Vec<f64>,
    /// `coefs[interval][column] = [c0, c1, c2, c3]` with
    /// `f(x) = c0 + c1 h + c2 h^2 + c3 h^3`, `h = x - breaks[interval]`.
    coefs: Vec<Vec<[f64; 4]>>,
    /// Value and slope of each column at the upper boundary.
    upper: Vec<[f64; 2]>,
}

impl NaturalSpline {
    pub fn new(spec: &SplineSpec) -> Self {
        let (lo, hi) = spec.boundary;
        if spec.df == 1 {
            return Self {
                spec: spec.clone(),
                breaks: vec![lo],
                coefs: vec![vec![[1.0, 0.0, 0.0, 0.0]]],
                upper: vec![[1.0, 0.0]],
            };
        }

        let interior = &spec.interior_knots;
        let mut knots = vec![lo; CUBIC_ORDER];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(hi, CUBIC_ORDER));
        let n_bspl = interior.len() + CUBIC_ORDER;
        let n_intervals = interior.len() + 1;

        let mut breaks = Vec::with_capacity(n_intervals + 1);
        breaks.push(lo);
        breaks.extend_from_slice(interior);
        breaks.push(hi);

        // Second-derivative constraints at both boundaries.
        let first_span = CUBIC_ORDER - 1;
        let last_span = CUBIC_ORDER - 1 + interior.len();
        let mut constraint = DMatrix::<f64>::zeros(n_bspl, 2);
        for i in 0..n_bspl {
            constraint[(i, 0)] = bspline(&knots, i, CUBIC_ORDER, lo, 2, first_span);
            constraint[(i, 1)] = bspline(&knots, i, CUBIC_ORDER, hi, 2, last_span);
        }
        let null = null_space_of_columns(&constraint);
        debug_assert_eq!(null.ncols(), spec.df);

        let mut coefs: Vec<Vec<[f64; 4]>> = Vec::with_capacity(n_intervals);
        for j in 0..n_intervals {
            let span = CUBIC_ORDER - 1 + j;
            let x = breaks[j];
            // Taylor coefficients of every B-spline at the interval's left end.
            let mut taylor = DMatrix::<f64>::zeros(4, n_bspl);
            for i in 0..n_bspl {
                let mut fact = 1.0;
                for d in 0..4 {
                    if d > 1 {
                        fact *= d as f64;
                    }
                    taylor[(d, i)] = bspline(&knots, i, CUBIC_ORDER, x, d, span) / fact;
                }
            }
            let projected = taylor * &null;
            coefs.push(
                (0..spec.df)
                    .map(|c| {
                        [
                            projected[(0, c)],
                            projected[(1, c)],
                            projected[(2, c)],
                            projected[(3, c)],
                        ]
                    })
                    .collect(),
            );
        }

        let last = &coefs[n_intervals - 1];
        let h = hi - breaks[n_intervals - 1];
        let upper = last
            .iter()
            .map(|c| {
                let value = c[0] + h * (c[1] + h * (c[2] + h * c[3]));
                let slope = c[1] + h * (2.0 * c[2] + 3.0 * h * c[3]);
                [value, slope]
            })
            .collect();

        breaks.pop();
        Self {
            spec: spec.clone(),
            breaks,
            coefs,
            upper,
        }
    }

    pub fn spec(&self) -> &SplineSpec {
        &self.spec
    }

    pub fn df(&self) -> usize {
        self.spec.df
    }

    /// Writes the basis row at `x` into `out` (length `df`).
    #[inline]
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.spec.df);
        let (lo, hi) = self.spec.boundary;
        if x < lo {
            let h = x - lo;
            for (o, c) in out.iter_mut().zip(&self.coefs[0]) {
                *o = c[0] + h * c[1];
            }
        } else if x > hi {
            let h = x - hi;
            for (o, u) in out.iter_mut().zip(&self.upper) {
                *o = u[0] + h * u[1];
            }
        } else {
            let j = self.breaks.partition_point(|&b| b <= x).saturating_sub(1);
            let h = x - self.breaks[j];
            for (o, c) in out.iter_mut().zip(&self.coefs[j]) {
                *o = c[0] + h * (c[1] + h * (c[2] + h * c[3]));
            }
        }
    }

    pub fn evaluate(&self, points: &[f64]) -> Result<BasisMatrix> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(DlimError::NonFinite("spline evaluation points"));
        }
        let df = self.spec.df;
        let mut values = DMatrix::<f64>::zeros(points.len(), df);
        let mut row = vec![0.0; df];
        for (i, &x) in points.iter().enumerate() {
            self.eval_into(x, &mut row);
            for (k, v) in row.iter().enumerate() {
                values[(i, k)] = *v;
            }
        }
        Ok(BasisMatrix {
            values,
            spec: self.spec.clone(),
        })
    }
}

/// Derivative `deriv` of the B-spline `i` of the given order, evaluated at `x`
/// using the polynomial piece of knot interval `span`.
fn bspline(knots: &[f64], i: usize, order: usize, x: f64, deriv: usize, span: usize) -> f64 {
    if order == 1 {
        return if deriv == 0 && i == span { 1.0 } else { 0.0 };
    }
    let left_den = knots[i + order - 1] - knots[i];
    let right_den = knots[i + order] - knots[i + 1];
    if deriv > 0 {
        let mut v = 0.0;
        if left_den > 0.0 {
            v += bspline(knots, i, order - 1, x, deriv - 1, span) / left_den;
        }
        if right_den > 0.0 {
            v -= bspline(knots, i + 1, order - 1, x, deriv - 1, span) / right_den;
        }
        return (order - 1) as f64 * v;
    }
    let mut v = 0.0;
    if left_den > 0.0 {
        v += (x - knots[i]) / left_den * bspline(knots, i, order - 1, x, 0, span);
    }
    if right_den > 0.0 {
        v += (knots[i + order] - x) / right_den * bspline(knots, i + 1, order - 1, x, 0, span);
    }
    v
}

/// Orthonormal basis for the complement of the column space of `a` (m x r, full
/// column rank), from a Householder QR of `a`.
fn null_space_of_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.nrows();
    let r = a.ncols();
    let mut work = a.clone();
    let mut q = DMatrix::<f64>::identity(m, m);
    for j in 0..r {
        let norm = (j..m).map(|i| work[(i, j)].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if work[(j, j)] > 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m];
        for i in j..m {
            v[i] = work[(i, j)];
        }
        v[j] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // work <- H work, q <- q H with H = I - 2 v v' / v'v
        for c in 0..r {
            let dot: f64 = (j..m).map(|i| v[i] * work[(i, c)]).sum();
            let s = 2.0 * dot / vnorm2;
            for i in j..m {
                work[(i, c)] -= s * v[i];
            }
        }
        for row in 0..m {
            let dot: f64 = (j..m).map(|i| q[(row, i)] * v[i]).sum();
            let s = 2.0 * dot / vnorm2;
            for i in j..m {
                q[(row, i)] -= s * v[i];
            }
        }
    }
    q.columns(r, m - r).into_owned()
}
