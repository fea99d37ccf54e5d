use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{MterError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    /// Mean of `a − b`.
    pub mean_diff: f64,
    pub t: f64,
    pub df: usize,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Two-sided paired t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(MterError::Shape(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(MterError::Validation(
            "paired t-test needs at least 2 pairs".into(),
        ));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        let (t, p_value) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
        return Ok(PairedTTest {
            mean_diff: mean,
            t,
            df,
            p_value,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(PairedTTest {
        mean_diff: mean,
        t,
        df,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_value() {
        // differences 1, 2, 3, 4: mean 2.5, sd 1.2909944, t = 3.8729833, df 3
        let a = [2.0, 4.0, 6.0, 8.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let r = paired_t_test(&a, &b).unwrap();
        assert!((r.t - 3.872983346207417).abs() < 1e-12);
        assert_eq!(r.df, 3);
        // two-sided p for t=3.873 with 3 df (scipy.stats.ttest_rel): 0.030466
        assert!((r.p_value - 0.030466).abs() < 1e-5, "{}", r.p_value);
    }

    #[test]
    fn degenerate_cases() {
        assert_eq!(
            paired_t_test(&[1.0, 1.0], &[1.0, 1.0]).unwrap().p_value,
            1.0
        );
        assert_eq!(
            paired_t_test(&[2.0, 2.0], &[1.0, 1.0]).unwrap().p_value,
            0.0
        );
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    }
}
