//! Summary statistics shared by the tuning and simulation code.

use serde::{Deserialize, Serialize};

/// Neumaier-compensated sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean with its standard error `sd / sqrt(count)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Absent with fewer than two observations.
    pub se: Option<f64>,
    pub count: usize,
}

pub fn mean_and_se(values: &[f64]) -> MeanSe {
    let count = values.len();
    if count == 0 {
        return MeanSe {
            mean: f64::NAN,
            se: None,
            count,
        };
    }
    let mean = compensated_sum(values) / count as f64;
    let se = (count > 1).then(|| {
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = compensated_sum(&dev) / (count - 1) as f64;
        (var / count as f64).sqrt()
    });
    MeanSe { mean, se, count }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(&v), 2.0);
    }

    #[test]
    fn mean_se_cases() {
        let one = mean_and_se(&[3.0]);
        assert_eq!((one.mean, one.se), (3.0, None));
        let m = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        // sd = sqrt(5/3)
        assert!((m.se.unwrap() - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert!(mean_and_se(&[]).mean.is_nan());
    }

    #[test]
    fn order_independent_to_rounding() {
        let v: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1013) as f64 * 1e-3 + 1e6).collect();
        let mut r = v.clone();
        r.reverse();
        assert!((mean_and_se(&v).mean - mean_and_se(&r).mean).abs() <= 1e-12 * 1e6);
    }
}
