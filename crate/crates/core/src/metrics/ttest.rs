use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::shape_err;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub mean_diff: f64,
    /// The differences had zero variance, so `p` is 1 (all zero) or 0.
    pub degenerate: bool,
}

/// Two-sided paired t-test on per-sample scores.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(shape_err!("{} vs {} paired scores", a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("paired t-test needs n >= 2, got {n}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as f64;
    // Differences constant up to rounding count as zero-variance.
    if var.sqrt() <= 1e-12 * mean.abs() || var == 0.0 {
        let zero = mean == 0.0;
        return Ok(TTestResult {
            t: if zero { 0.0 } else { mean.signum() * f64::INFINITY },
            df,
            p: if zero { 1.0 } else { 0.0 },
            mean_diff: mean,
            degenerate: true,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(TTestResult {
        t,
        df,
        p,
        mean_diff: mean,
        degenerate: false,
    })
}

/// Two-sided Welch t-test for samples with unequal variances. `degenerate`
/// is set when both samples have zero variance.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    let (na, nb) = (a.len(), b.len());
    if na < 2 || nb < 2 {
        return Err(Error::InvalidArgument(format!("Welch t-test needs two samples of size >= 2, got {na} and {nb}")));
    }
    let moments = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
    };
    let ((ma, va), (mb, vb)) = (moments(a), moments(b));
    let (sa, sb) = (va / na as f64, vb / nb as f64);
    let mean = ma - mb;
    let se2 = sa + sb;
    if se2 == 0.0 {
        let zero = mean == 0.0;
        return Ok(TTestResult {
            t: if zero { 0.0 } else { mean.signum() * f64::INFINITY },
            df: (na + nb - 2) as f64,
            p: if zero { 1.0 } else { 0.0 },
            mean_diff: mean,
            degenerate: true,
        });
    }
    let df = se2 * se2 / (sa * sa / (na - 1) as f64 + sb * sb / (nb - 1) as f64);
    let t = mean / se2.sqrt();
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(TTestResult {
        t,
        df,
        p,
        mean_diff: mean,
        degenerate: false,
    })
}

/// Significance marker used in reports.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "*"
    } else {
        ""
    }
}
