//! Leverages and confidence intervals from the gradients of a trained network.
//!
//! With `Z` the matrix of output gradients over the training rows (one row
//! per example, one column per active weight), the leverage of example `i`
//! is `z_i^T (Z^T Z)^{-1} z_i` and the half-width at a new input `x` is
//! `t * S * sqrt(z^T (Z^T Z)^{-1} z)`, where `z` is the gradient at `x`, `S`
//! the residual standard deviation with `N - q` degrees of freedom and `t`
//! the Student quantile.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{ColumnStats, FeatureTable};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mlp::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct LeverageSet {
    pub leverages: Vec<f64>,
    /// `Z^T Z` over the active weights.
    pub gram: DMatrix<f64>,
    pub q: usize,
    pub n: usize,
    /// `K` with `z^T (Z^T Z)^{-1} z = |K z|^2`.
    whitening: DMatrix<f64>,
}

impl LeverageSet {
    pub fn trace(&self) -> f64 {
        self.leverages.iter().sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "leverage"])?;
        for (i, h) in self.leverages.iter().enumerate() {
            w.write_record([i.to_string(), h.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<leverages>", e))?;
        Ok(())
    }
}

/// Leverage of every training row under `net`.
///
/// Fails with `RankDeficient` when a singular value of `Z` falls below
/// `RANK_TOLERANCE` times the largest one.
pub fn leverages(net: &Network, train: &FeatureTable) -> Result<LeverageSet> {
    let z = net.jacobian_matrix(&train.rows)?;
    let (n, q) = z.shape();
    if n < q {
        return Err(Error::RankDeficient {
            effective: n,
            expected: q,
        });
    }
    let gram = z.tr_mul(&z);
    let svd = z.svd(true, true);
    let rank = linalg::effective_rank(&svd.singular_values);
    if rank < q {
        return Err(Error::RankDeficient {
            effective: rank,
            expected: q,
        });
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let leverages = (0..n).map(|i| u.row(i).norm_squared()).collect();
    let mut whitening = v_t;
    for (k, s) in svd.singular_values.iter().enumerate() {
        whitening.row_mut(k).unscale_mut(*s);
    }
    Ok(LeverageSet {
        leverages,
        gram,
        q,
        n,
        whitening,
    })
}

/// `sqrt(sum r_i^2 / (N - q))` over the training residuals.
pub fn residual_std(net: &Network, train: &FeatureTable, q: usize) -> Result<f64> {
    let n = train.len();
    if n <= q {
        return Err(Error::DofExhausted { n, q });
    }
    let mut ss = 0.0;
    for (x, y) in train.rows.iter().zip(&train.targets) {
        let r = y - net.predict(x)?;
        ss += r * r;
    }
    Ok((ss / (n - q) as f64).sqrt())
}

/// Inverse CDF of Student's t distribution.
pub fn student_t_quantile(prob: f64, dof: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::OutOfDomain(format!("probability {prob} not in (0, 1)")));
    }
    if !(dof >= 1.0) {
        return Err(Error::OutOfDomain(format!("degrees of freedom {dof} below 1")));
    }
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::OutOfDomain(e.to_string()))?;
    Ok(dist.inverse_cdf(prob))
}

/// Which variance the half-width covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IntervalKind {
    /// Uncertainty of the fitted mean only.
    #[default]
    Mean,
    /// Adds one observation's noise: `sqrt(1 + z^T M^{-1} z)`.
    Prediction,
}

/// Everything needed to produce intervals for a trained network, computed
/// once and stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalContext {
    /// Weight indices the gradient columns refer to.
    pub active: Vec<usize>,
    /// Row-major `q x q` matrix `K` with `z^T (Z^T Z)^{-1} z = |K z|^2`.
    pub whitening: Vec<f64>,
    pub residual_std: f64,
    pub n: usize,
    pub q: usize,
}

impl IntervalContext {
    pub fn new(net: &Network, train: &FeatureTable) -> Result<Self> {
        let set = leverages(net, train)?;
        let s = residual_std(net, train, set.q)?;
        Ok(Self::from_leverages(net, &set, s))
    }

    pub fn from_leverages(net: &Network, set: &LeverageSet, residual_std: f64) -> Self {
        let q = set.q;
        let mut whitening = Vec::with_capacity(q * q);
        for r in 0..q {
            for c in 0..q {
                whitening.push(set.whitening[(r, c)]);
            }
        }
        IntervalContext {
            active: net.active_indices(),
            whitening,
            residual_std,
            n: set.n,
            q,
        }
    }

    pub fn dof(&self) -> usize {
        self.n - self.q
    }

    /// `z^T (Z^T Z)^{-1} z` for a gradient over the active weights.
    pub fn leverage_of(&self, z: &[f64]) -> f64 {
        let k = DMatrix::from_row_slice(self.q, self.q, &self.whitening);
        (k * DVector::from_column_slice(z)).norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub point: f64,
    pub half_width: f64,
    /// Significance level, one minus the confidence.
    pub alpha: f64,
    pub dof: usize,
}

impl PredictionInterval {
    pub fn lower(&self) -> f64 {
        self.point - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.point + self.half_width
    }

    /// Map an interval on standardized targets back to physical units.
    pub fn restored(&self, target: &ColumnStats) -> Self {
        PredictionInterval {
            point: target.restore(self.point),
            half_width: self.half_width * target.std,
            ..*self
        }
    }
}

/// Two-sided interval at `confidence` around the network output at `x`.
pub fn prediction_interval(
    net: &Network,
    ctx: &IntervalContext,
    x: &[f64],
    confidence: f64,
    kind: IntervalKind,
) -> Result<PredictionInterval> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::OutOfDomain(format!("confidence {confidence} not in (0, 1)")));
    }
    if ctx.active != net.active_indices() {
        return Err(Error::ContextMismatch);
    }
    if ctx.n <= ctx.q {
        return Err(Error::DofExhausted { n: ctx.n, q: ctx.q });
    }
    let z = net.jacobian(x)?;
    let mut spread = ctx.leverage_of(&z);
    if kind == IntervalKind::Prediction {
        spread += 1.0;
    }
    let t = student_t_quantile((1.0 + confidence) / 2.0, ctx.dof() as f64)?;
    Ok(PredictionInterval {
        point: net.predict(x)?,
        half_width: t * ctx.residual_std * spread.sqrt(),
        alpha: 1.0 - confidence,
        dof: ctx.dof(),
    })
}

/// Alarm when the upper bound reaches the threshold.
pub fn exceedance_by_interval(interval: &PredictionInterval, threshold: f64) -> bool {
    interval.point + interval.half_width >= threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{random_init, OutputKind};
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn bias_only(value: f64) -> Network {
        let mut net = Network::zeros(1, 0, OutputKind::Identity);
        net.prune(1);
        net.set_weight(0, value);
        net
    }

    #[test]
    fn bias_only_leverages_are_one_over_n() {
        let t = FeatureTable::from_xy((0..4).map(|i| vec![i as f64]).collect(), vec![1.0; 4]).unwrap();
        let set = leverages(&bias_only(1.0), &t).unwrap();
        for h in &set.leverages {
            assert_abs_diff_eq!(*h, 0.25, epsilon = 1e-15);
        }
        assert_eq!(set.q, 1);
    }

    #[test]
    fn trace_and_bounds_on_random_problems() {
        let mut rng = rng::stream(21, 0);
        for _ in 0..50 {
            let p = rng.random_range(1..4);
            let n_hidden = rng.random_range(0..3);
            let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let t = FeatureTable::from_xy(rows, vec![0.0; 40]).unwrap();
            let net = random_init(&Network::zeros(p, n_hidden, OutputKind::Identity), &mut rng);
            let set = leverages(&net, &t).unwrap();
            assert_abs_diff_eq!(set.trace(), set.q as f64, epsilon = 1e-6);
            assert!(set.leverages.iter().all(|h| (-1e-12..=1.0 + 1e-12).contains(h)));
        }
    }

    #[test]
    fn duplicated_rows_share_leverage() {
        let rows = vec![vec![0.1], vec![0.5], vec![0.5], vec![-1.0], vec![2.0]];
        let t = FeatureTable::from_xy(rows, vec![0.0; 5]).unwrap();
        let mut net = Network::zeros(1, 0, OutputKind::Identity);
        net.set_weight(1, 1.0);
        let set = leverages(&net, &t).unwrap();
        assert_abs_diff_eq!(set.leverages[1], set.leverages[2], epsilon = 1e-14);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let t = FeatureTable::from_xy(vec![vec![1.0]; 6], vec![0.0; 6]).unwrap();
        let net = Network::zeros(1, 0, OutputKind::Identity);
        assert!(matches!(
            leverages(&net, &t),
            Err(Error::RankDeficient { effective: 1, expected: 2 })
        ));
    }

    #[test]
    fn residual_std_examples() {
        let t = FeatureTable::from_xy(vec![vec![0.0]; 4], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let zero = bias_only(0.0);
        assert_abs_diff_eq!(residual_std(&zero, &t, 2).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        let exact = FeatureTable::from_xy(vec![vec![0.0]; 4], vec![0.0; 4]).unwrap();
        assert_eq!(residual_std(&zero, &exact, 1).unwrap(), 0.0);
        assert!(matches!(residual_std(&zero, &t, 4), Err(Error::DofExhausted { n: 4, q: 4 })));
    }

    #[test]
    fn t_quantiles() {
        assert_abs_diff_eq!(student_t_quantile(0.5, 7.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(student_t_quantile(0.975, 1.0).unwrap(), 12.706_204_736_432_095, epsilon = 1e-6);
        assert_abs_diff_eq!(student_t_quantile(0.975, 3.0).unwrap(), 3.182_446_305_284_263, epsilon = 1e-6);
        assert_abs_diff_eq!(student_t_quantile(0.975, 10_000.0).unwrap(), 1.960_201_239_890_626, epsilon = 1e-6);
        assert!(student_t_quantile(1.0, 3.0).is_err());
        assert!(student_t_quantile(0.9, 0.5).is_err());
    }

    #[test]
    fn bias_only_interval() {
        // Residuals (1, -1, 1, -1) around 0 with q = 1 give S = sqrt(4/3); rescale to S = 1.
        let s = (4.0f64 / 3.0).sqrt();
        let ys: Vec<f64> = [1.0, -1.0, 1.0, -1.0].iter().map(|v| v / s).collect();
        let t = FeatureTable::from_xy(vec![vec![0.0]; 4], ys).unwrap();
        let net = bias_only(0.0);
        let ctx = IntervalContext::new(&net, &t).unwrap();
        assert_abs_diff_eq!(ctx.residual_std, 1.0, epsilon = 1e-15);
        let iv = prediction_interval(&net, &ctx, &[3.0], 0.95, IntervalKind::Mean).unwrap();
        assert_abs_diff_eq!(iv.half_width, 1.591_223_152_642_131_5, epsilon = 1e-6);
        assert_eq!(iv.dof, 3);
        assert_abs_diff_eq!(iv.alpha, 0.05, epsilon = 1e-15);

        let wide = prediction_interval(&net, &ctx, &[3.0], 0.95, IntervalKind::Prediction).unwrap();
        assert_abs_diff_eq!(wide.half_width, 3.182_446_305_284_263 * 1.25f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn perfect_fit_has_zero_width() {
        let t = FeatureTable::from_xy(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1.0, 3.0, 5.0]).unwrap();
        let mut net = Network::zeros(1, 0, OutputKind::Identity);
        net.set_weight(0, 1.0);
        net.set_weight(1, 2.0);
        let ctx = IntervalContext::new(&net, &t).unwrap();
        let iv = prediction_interval(&net, &ctx, &[0.5], 0.95, IntervalKind::Mean).unwrap();
        assert_eq!(iv.half_width, 0.0);
        assert_eq!(iv.point, 2.0);
    }

    #[test]
    fn context_must_match_network() {
        let t = FeatureTable::from_xy(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1.0, 3.0, 4.0]).unwrap();
        let net = Network::zeros(1, 0, OutputKind::Identity);
        let ctx = IntervalContext::new(&net, &t).unwrap();
        let other = bias_only(2.0);
        assert!(matches!(
            prediction_interval(&other, &ctx, &[0.0], 0.95, IntervalKind::Mean),
            Err(Error::ContextMismatch)
        ));
    }

    #[test]
    fn half_width_monotone_in_confidence_and_dof() {
        let lo = student_t_quantile(0.95, 5.0).unwrap();
        let hi = student_t_quantile(0.975, 5.0).unwrap();
        assert!(hi > lo);
        let mut prev = f64::INFINITY;
        for dof in [1.0, 2.0, 5.0, 30.0, 1000.0] {
            let t = student_t_quantile(0.975, dof).unwrap();
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn interval_rule() {
        let iv = |point, half_width| PredictionInterval {
            point,
            half_width,
            alpha: 0.05,
            dof: 10,
        };
        assert!(exceedance_by_interval(&iv(170.0, 15.0), 180.0));
        assert!(!exceedance_by_interval(&iv(170.0, 5.0), 180.0));
        assert!(exceedance_by_interval(&iv(180.0, 0.0), 180.0));
    }
}
