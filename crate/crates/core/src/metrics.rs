//! Verification scores for continuous forecasts and for threshold
//! exceedances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub mbe: f64,
    pub mae: f64,
    pub rmse: f64,
    pub rmse_s: f64,
    pub rmse_u: f64,
    /// Index of agreement.
    pub d: f64,
    /// Regression of predictions on observations, `P = b0 + b1 O`.
    pub b0: f64,
    pub b1: f64,
    pub n: usize,
}

fn check_lengths(p: &[f64], o: &[f64]) -> Result<()> {
    if p.len() != o.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: o.len(),
        });
    }
    Ok(())
}

fn rms(it: impl Iterator<Item = f64>, n: f64) -> f64 {
    (it.map(|e| e * e).sum::<f64>() / n).sqrt()
}

pub fn global_fit_report(p: &[f64], o: &[f64]) -> Result<FitReport> {
    check_lengths(p, o)?;
    if o.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: o.len(),
        });
    }
    let n = o.len() as f64;
    let o_mean = linalg::mean(o);
    let sxx: f64 = o.iter().map(|v| (v - o_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::ConstantObservations);
    }
    let p_mean = linalg::mean(p);
    let sxy: f64 = o.iter().zip(p).map(|(x, y)| (x - o_mean) * (y - p_mean)).sum();
    let b1 = sxy / sxx;
    let b0 = p_mean - b1 * o_mean;
    let fitted: Vec<f64> = o.iter().map(|x| b0 + b1 * x).collect();

    let errors = || p.iter().zip(o).map(|(a, b)| a - b);
    let sse: f64 = errors().map(|e| e * e).sum();
    let potential: f64 = p
        .iter()
        .zip(o)
        .map(|(a, b)| ((a - o_mean).abs() + (b - o_mean).abs()).powi(2))
        .sum();
    // Rounding can push the ratio a hair past 1 when every error meets the bound.
    let d = if potential == 0.0 { 1.0 } else { (1.0 - sse / potential).max(0.0) };
    Ok(FitReport {
        mbe: errors().sum::<f64>() / n,
        mae: errors().map(f64::abs).sum::<f64>() / n,
        rmse: (sse / n).sqrt(),
        rmse_s: rms(fitted.iter().zip(o).map(|(f, b)| f - b), n),
        rmse_u: rms(fitted.iter().zip(p).map(|(f, a)| f - a), n),
        d,
        b0,
        b1,
        n: o.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    /// Correctly predicted exceedances.
    pub a: usize,
    /// Predicted exceedances.
    pub f: usize,
    /// Observed exceedances.
    pub m: usize,
    /// Cases.
    pub n: usize,
}

impl ContingencyTable {
    pub fn false_alarms(&self) -> usize {
        self.f - self.a
    }

    pub fn misses(&self) -> usize {
        self.m - self.a
    }

    pub fn correct_negatives(&self) -> usize {
        self.n + self.a - self.f - self.m
    }

    /// 2x2 layout: rows are forecasts, columns are observations.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["", "observed_exceedance", "observed_no_exceedance"])?;
        w.write_record([
            "forecast_exceedance".to_string(),
            self.a.to_string(),
            self.false_alarms().to_string(),
        ])?;
        w.write_record([
            "forecast_no_exceedance".to_string(),
            self.misses().to_string(),
            self.correct_negatives().to_string(),
        ])?;
        w.flush().map_err(|e| Error::io("<contingency>", e))?;
        Ok(())
    }
}

pub fn contingency(predicted: &[bool], observed: &[bool]) -> Result<ContingencyTable> {
    if predicted.len() != observed.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: observed.len(),
        });
    }
    let pairs = || predicted.iter().zip(observed);
    Ok(ContingencyTable {
        a: pairs().filter(|(p, o)| **p && **o).count(),
        f: predicted.iter().filter(|p| **p).count(),
        m: observed.iter().filter(|o| **o).count(),
        n: observed.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceScores {
    pub tpr: f64,
    pub far: f64,
    pub si: f64,
}

pub fn exceedance_report(table: &ContingencyTable) -> Result<ExceedanceScores> {
    if table.m == 0 {
        return Err(Error::NoObservedExceedances);
    }
    if table.n <= table.m {
        return Err(Error::AllExceedances);
    }
    let tpr = table.a as f64 / table.m as f64;
    let far = table.false_alarms() as f64 / (table.n - table.m) as f64;
    Ok(ExceedanceScores { tpr, far, si: tpr - far })
}

/// `(P_i - O_i) / std(O)`.
pub fn standardized_residuals(p: &[f64], o: &[f64]) -> Result<Vec<f64>> {
    check_lengths(p, o)?;
    if o.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: o.len(),
        });
    }
    let s = linalg::sample_std(o);
    if s == 0.0 {
        return Err(Error::ConstantObservations);
    }
    Ok(p.iter().zip(o).map(|(a, b)| (a - b) / s).collect())
}

pub const REPORT_HEADER: [&str; 9] = ["model", "MBE", "MAE", "RMSE", "RMSE_s", "RMSE_u", "d", "FAR", "SI"];

/// One report line, rounded for display: concentrations to integers,
/// dimensionless scores to two decimals. Absent scores are left blank.
pub fn report_row(model: &str, fit: Option<&FitReport>, scores: Option<&ExceedanceScores>) -> Vec<String> {
    let int = |v: f64| format!("{:.0}", v);
    let two = |v: f64| format!("{:.2}", v);
    let mut row = vec![model.to_string()];
    match fit {
        Some(f) => row.extend([int(f.mbe), int(f.mae), int(f.rmse), int(f.rmse_s), int(f.rmse_u), two(f.d)]),
        None => row.extend(std::iter::repeat_n(String::new(), 6)),
    }
    match scores {
        Some(s) => row.extend([two(s.far), two(s.si)]),
        None => row.extend([String::new(), String::new()]),
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn perfect_forecast() {
        let r = global_fit_report(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.mbe, r.mae, r.rmse, r.d), (0.0, 0.0, 0.0, 1.0));
        assert_abs_diff_eq!(r.rmse_s, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.rmse_u, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn flat_forecast_has_zero_agreement() {
        let r = global_fit_report(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
        assert_eq!((r.mbe, r.mae, r.rmse, r.d), (0.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn proportional_bias_is_systematic() {
        let o = [1.0, 2.0, 3.0];
        let p = [2.0, 4.0, 6.0];
        let r = global_fit_report(&p, &o).unwrap();
        assert_abs_diff_eq!(r.b1, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.b0, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.rmse_u, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.rmse_s, r.rmse, epsilon = 1e-15);
    }

    #[test]
    fn fit_report_errors() {
        assert!(matches!(global_fit_report(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(global_fit_report(&[1.0, 2.0], &[4.0, 4.0]), Err(Error::ConstantObservations)));
    }

    #[test]
    fn contingency_counts() {
        let flags = [true, false, false, true, false, false, true, false, false, false];
        assert_eq!(contingency(&flags, &flags).unwrap(), ContingencyTable { a: 3, f: 3, m: 3, n: 10 });
        let none = contingency(&[false; 10], &flags).unwrap();
        assert_eq!((none.a, none.f), (0, 0));
        let t = contingency(&[true, true, false, false], &[true, false, true, false]).unwrap();
        assert_eq!(t, ContingencyTable { a: 1, f: 2, m: 2, n: 4 });
        assert!(contingency(&[true], &[]).is_err());
    }

    #[test]
    fn exceedance_examples() {
        let perfect = exceedance_report(&ContingencyTable { a: 3, f: 3, m: 3, n: 10 }).unwrap();
        assert_eq!((perfect.tpr, perfect.far, perfect.si), (1.0, 0.0, 1.0));

        let half = exceedance_report(&ContingencyTable { a: 1, f: 2, m: 2, n: 4 }).unwrap();
        assert_eq!((half.tpr, half.far, half.si), (0.5, 0.5, 0.0));

        let s = exceedance_report(&ContingencyTable { a: 6, f: 12, m: 7, n: 105 }).unwrap();
        assert_abs_diff_eq!(s.tpr, 6.0 / 7.0, epsilon = 0.0);
        assert_abs_diff_eq!(s.far, 6.0 / 98.0, epsilon = 0.0);
        assert_eq!(format!("{:.3}", s.tpr), "0.857");
        assert_eq!(format!("{:.3}", s.far), "0.061");
        assert_eq!(format!("{:.3}", s.si), "0.796");

        assert!(matches!(
            exceedance_report(&ContingencyTable { a: 0, f: 1, m: 0, n: 5 }),
            Err(Error::NoObservedExceedances)
        ));
        assert!(matches!(
            exceedance_report(&ContingencyTable { a: 5, f: 5, m: 5, n: 5 }),
            Err(Error::AllExceedances)
        ));
    }

    #[test]
    fn standardized_residual_examples() {
        assert_eq!(standardized_residuals(&[1.0, 5.0], &[1.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        let sr = standardized_residuals(&[1.0, 3.0], &[0.0, 2.0]).unwrap();
        for v in sr {
            assert_abs_diff_eq!(v, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        }
        assert!(matches!(standardized_residuals(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::ConstantObservations)));
    }

    #[test]
    fn report_row_layout() {
        let r = global_fit_report(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
        let s = ExceedanceScores { tpr: 1.0, far: 0.061, si: 0.796 };
        assert_eq!(report_row("net", Some(&r), Some(&s)), vec!["net", "0", "1", "1", "1", "0", "0.00", "0.06", "0.80"]);
        assert_eq!(report_row("pers", Some(&r), None).len(), REPORT_HEADER.len());
        let probability_only = report_row("classifier", None, Some(&s));
        assert_eq!(probability_only[1..7], vec![String::new(); 6]);
    }

    fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-200.0f64..400.0, n),
                prop::collection::vec(-200.0f64..400.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn rmse_decomposes((p, o) in series()) {
            prop_assume!(linalg::sample_std(&o) > 1e-6);
            let r = global_fit_report(&p, &o).unwrap();
            let lhs = r.rmse_s.powi(2) + r.rmse_u.powi(2);
            prop_assert!((lhs - r.rmse.powi(2)).abs() <= 1e-6 * r.rmse.powi(2).max(1e-12));
            prop_assert!((0.0..=1.0).contains(&r.d));
        }

        #[test]
        fn agreement_is_affine_invariant((p, o) in series(), shift in -50.0f64..50.0, scale in 0.1f64..10.0) {
            prop_assume!(linalg::sample_std(&o) > 1e-6);
            let a = global_fit_report(&p, &o).unwrap();
            let tp: Vec<f64> = p.iter().map(|v| scale * v + shift).collect();
            let to: Vec<f64> = o.iter().map(|v| scale * v + shift).collect();
            let b = global_fit_report(&tp, &to).unwrap();
            prop_assert!((a.d - b.d).abs() < 1e-9);
        }

        #[test]
        fn residuals_are_scale_free((p, o) in series(), c in 0.1f64..10.0) {
            prop_assume!(linalg::sample_std(&o) > 1e-6);
            let a = standardized_residuals(&p, &o).unwrap();
            let sp: Vec<f64> = p.iter().map(|v| c * v).collect();
            let so: Vec<f64> = o.iter().map(|v| c * v).collect();
            let b = standardized_residuals(&sp, &so).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
            }
        }

        #[test]
        fn scores_match_enumeration(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let (p, o): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
            let t = contingency(&p, &o).unwrap();
            let hits = pairs.iter().filter(|(a, b)| *a && *b).count();
            let false_alarms = pairs.iter().filter(|(a, b)| *a && !*b).count();
            let misses = pairs.iter().filter(|(a, b)| !*a && *b).count();
            let negatives = pairs.iter().filter(|(a, b)| !*a && !*b).count();
            prop_assert_eq!(t.a, hits);
            prop_assert_eq!(t.false_alarms(), false_alarms);
            prop_assert_eq!(t.misses(), misses);
            prop_assert_eq!(t.correct_negatives(), negatives);
            if let Ok(s) = exceedance_report(&t) {
                prop_assert_eq!(s.tpr, hits as f64 / (hits + misses) as f64);
                prop_assert_eq!(s.far, false_alarms as f64 / (false_alarms + negatives) as f64);
                prop_assert_eq!(s.si, s.tpr - s.far);
                prop_assert!((-1.0..=1.0).contains(&s.si));
            }
        }
    }
}
