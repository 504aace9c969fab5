//! Reference forecasters: persistence, least squares, ridge and logistic
//! regression with backward elimination.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mlp::sigmoid;

/// Tomorrow's value is today's. A day gets a forecast only when the
/// previous calendar day is in the series.
pub fn persistence_forecast(series: &[(NaiveDate, f64)]) -> Result<Vec<Option<f64>>> {
    if series.len() < 2 {
        return Err(Error::TooShort);
    }
    let mut out = Vec::with_capacity(series.len());
    out.push(None);
    for w in series.windows(2) {
        let consecutive = w[0].0.succ_opt() == Some(w[1].0);
        out.push(consecutive.then_some(w[0].1));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum Estimator {
    Ols,
    Ridge { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub estimator: Estimator,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.coefficients.len(), x.len())?;
        Ok(self.intercept + dot(&self.coefficients, x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn check_xy(rows: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if rows.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: y.len(),
        });
    }
    let p = rows.first().map_or(0, Vec::len);
    for r in rows {
        check_dim(p, r.len())?;
    }
    Ok(p)
}

/// Ordinary least squares with an intercept.
pub fn ols_fit(rows: &[Vec<f64>], y: &[f64]) -> Result<LinearModel> {
    let p = check_xy(rows, y)?;
    let design = linalg::design_with_intercept(rows, p);
    let beta = linalg::least_squares(&design, &DVector::from_column_slice(y))?;
    Ok(LinearModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        estimator: Estimator::Ols,
    })
}

/// The closed form `(X^T X + lambda I)^{-1} X^T y`, no intercept, no scaling.
pub fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::OutOfDomain(format!("ridge parameter {lambda} is negative")));
    }
    let mut a = x.tr_mul(x);
    for k in 0..a.ncols() {
        a[(k, k)] += lambda;
    }
    linalg::solve_spd(a, &x.tr_mul(y)).ok_or(Error::SingularDesign)
}

/// Ridge regression on standardized predictors with an unpenalized
/// intercept; coefficients are reported on the original scale.
pub fn ridge_fit(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearModel> {
    let p = check_xy(rows, y)?;
    if rows.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: rows.len(),
        });
    }
    let stats: Vec<(f64, f64)> = (0..p)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let s = linalg::sample_std(&col);
            // A constant column centres to zero and gets a zero coefficient.
            (linalg::mean(&col), if s > 0.0 { s } else { 1.0 })
        })
        .collect();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| (rows[i][j] - stats[j].0) / stats[j].1);
    let y_mean = linalg::mean(y);
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    let b = ridge_solve(&x, &yc, lambda)?;
    let coefficients: Vec<f64> = b.iter().zip(&stats).map(|(bj, (_, s))| bj / s).collect();
    let intercept = y_mean - coefficients.iter().zip(&stats).map(|(c, (m, _))| c * m).sum::<f64>();
    Ok(LinearModel {
        intercept,
        coefficients,
        estimator: Estimator::Ridge { lambda },
    })
}

pub const DEFAULT_RIDGE_LAMBDA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Predictor names, one per coefficient.
    #[serde(default)]
    pub names: Vec<String>,
    /// Position of each predictor in the full feature vector.
    #[serde(default)]
    pub columns: Vec<usize>,
    pub deviance: f64,
    pub null_deviance: f64,
    pub intercept_p_value: f64,
    pub coefficient_p_values: Vec<f64>,
    /// Wald standard errors, intercept first.
    #[serde(default)]
    pub standard_errors: Vec<f64>,
    /// Likelihood-ratio test against the intercept-only model.
    pub model_p_value: f64,
    pub iterations: usize,
    /// Log-likelihood after each accepted IRLS update.
    #[serde(skip)]
    pub log_likelihood_trace: Vec<f64>,
}

impl LogisticModel {
    /// Model with given coefficients and no fit statistics.
    pub fn from_coefficients(intercept: f64, coefficients: Vec<f64>) -> Self {
        let k = coefficients.len();
        LogisticModel {
            intercept,
            names: (0..k).map(|j| format!("x{j}")).collect(),
            columns: (0..k).collect(),
            coefficient_p_values: vec![f64::NAN; k],
            standard_errors: vec![f64::NAN; k + 1],
            coefficients,
            deviance: f64::NAN,
            null_deviance: f64::NAN,
            intercept_p_value: f64::NAN,
            model_p_value: f64::NAN,
            iterations: 0,
            log_likelihood_trace: Vec::new(),
        }
    }

    /// Probability for a full feature vector, picking the model's columns.
    pub fn predict_full(&self, x: &[f64]) -> Result<f64> {
        let picked: Vec<f64> = self
            .columns
            .iter()
            .map(|&c| {
                x.get(c).copied().ok_or(Error::DimensionMismatch {
                    expected: c + 1,
                    got: x.len(),
                })
            })
            .collect::<Result<_>>()?;
        logistic_predict(self, &picked)
    }

    pub fn write_coefficients_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["name", "estimate", "p_value"])?;
        w.write_record([
            "(intercept)".to_string(),
            self.intercept.to_string(),
            self.intercept_p_value.to_string(),
        ])?;
        for ((n, b), p) in self.names.iter().zip(&self.coefficients).zip(&self.coefficient_p_values) {
            w.write_record([n.clone(), b.to_string(), p.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<coefficients>", e))?;
        Ok(())
    }
}

/// `exp(z) / (1 + exp(z))` with `z = a + sum b_i x_i`.
pub fn logistic_predict(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    check_dim(model.coefficients.len(), x.len())?;
    Ok(sigmoid(model.intercept + dot(&model.coefficients, x)))
}

const IRLS_MAX_ITERATIONS: usize = 100;
const IRLS_TOLERANCE: f64 = 1e-8;
const SEPARATION_NORM: f64 = 1e4;

fn log_likelihood(design: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = design * beta;
    eta.iter()
        .zip(y)
        .map(|(z, t)| {
            // t ln s(z) + (1-t) ln(1-s(z)) = t z - ln(1 + e^z)
            let softplus = if *z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            t * z - softplus
        })
        .sum()
}

fn weighted_gram(design: &DMatrix<f64>, beta: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mu = (design * beta).map(sigmoid);
    let w = mu.map(|m| m * (1.0 - m));
    let mut xw = design.clone();
    for (i, wi) in w.iter().enumerate() {
        xw.row_mut(i).scale_mut(*wi);
    }
    (design.tr_mul(&xw), mu)
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares, with Wald p-values per coefficient and a likelihood-ratio test
/// against the intercept-only model.
pub fn logistic_fit(rows: &[Vec<f64>], y: &[f64]) -> Result<LogisticModel> {
    let p = check_xy(rows, y)?;
    if y.iter().any(|t| *t != 0.0 && *t != 1.0) {
        return Err(Error::OutOfDomain("logistic targets must be 0 or 1".into()));
    }
    let positives = y.iter().filter(|t| **t == 1.0).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::SingleClass);
    }
    let n = y.len() as f64;
    let design = linalg::design_with_intercept(rows, p);
    let yv = DVector::from_column_slice(y);
    let base = positives as f64 / n;

    let mut beta = DVector::zeros(p + 1);
    beta[0] = (base / (1.0 - base)).ln();
    let mut ll = log_likelihood(&design, y, &beta);
    let null_ll = ll;
    let mut trace = vec![ll];
    let mut iterations = 0;
    loop {
        if iterations == IRLS_MAX_ITERATIONS {
            return Err(Error::NoConvergence(iterations));
        }
        iterations += 1;
        let (info, mu) = weighted_gram(&design, &beta);
        let score = design.tr_mul(&(&yv - mu));
        let step = linalg::solve_spd(info, &score).ok_or(Error::SingularDesign)?;
        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut next_ll = log_likelihood(&design, y, &next);
        while next_ll < ll && scale > 1e-10 {
            scale *= 0.5;
            next = &beta + &step * scale;
            next_ll = log_likelihood(&design, y, &next);
        }
        let change = (&next - &beta).amax();
        beta = next;
        if next_ll >= ll {
            ll = next_ll;
            trace.push(ll);
        }
        if beta.norm() > SEPARATION_NORM || -2.0 * ll < 1e-8 {
            return Err(Error::PerfectSeparation);
        }
        if change < IRLS_TOLERANCE {
            break;
        }
    }

    let (info, _) = weighted_gram(&design, &beta);
    let cov = info.try_inverse().ok_or(Error::SingularDesign)?;
    let normal = Normal::standard();
    let standard_errors: Vec<f64> = (0..=p).map(|k| cov[(k, k)].sqrt()).collect();
    let wald = |k: usize| 2.0 * normal.cdf(-(beta[k] / standard_errors[k]).abs());
    let lr = (2.0 * (ll - null_ll)).max(0.0);
    let model_p_value = if p == 0 {
        1.0
    } else {
        ChiSquared::new(p as f64)
            .map_err(|e| Error::OutOfDomain(e.to_string()))?
            .sf(lr)
    };
    Ok(LogisticModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        names: (0..p).map(|j| format!("x{j}")).collect(),
        columns: (0..p).collect(),
        deviance: -2.0 * ll,
        null_deviance: -2.0 * null_ll,
        intercept_p_value: wald(0),
        coefficient_p_values: (1..=p).map(wald).collect(),
        standard_errors,
        model_p_value,
        iterations,
        log_likelihood_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub name: String,
    pub column: usize,
    pub p_value: f64,
}

/// Backward elimination: drop the predictor with the largest Wald p-value
/// above `keep_p`, refit, and repeat until every remaining p-value is at
/// most `keep_p`.
pub fn logistic_stepwise(
    rows: &[Vec<f64>],
    y: &[f64],
    names: &[String],
    keep_p: f64,
) -> Result<(LogisticModel, Vec<Removal>)> {
    let p = check_xy(rows, y)?;
    check_dim(p, names.len())?;
    let mut kept: Vec<usize> = (0..p).collect();
    let mut removals = Vec::new();
    loop {
        let sub: Vec<Vec<f64>> = rows.iter().map(|r| kept.iter().map(|&c| r[c]).collect()).collect();
        let mut model = logistic_fit(&sub, y)?;
        model.columns = kept.clone();
        model.names = kept.iter().map(|&c| names[c].clone()).collect();
        let worst = model
            .coefficient_p_values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1));
        match worst {
            Some((k, &pv)) if pv > keep_p => {
                removals.push(Removal {
                    name: names[kept[k]].clone(),
                    column: kept[k],
                    p_value: pv,
                });
                kept.remove(k);
            }
            _ => return Ok((model, removals)),
        }
    }
}
