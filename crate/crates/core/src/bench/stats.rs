use statrs::distribution::{ContinuousCDF, StudentsT};

use super::BenchError;

/// Sample mean with its two-sided 95% t-interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Upper 97.5% quantile of Student's t with `df` degrees of freedom.
pub fn t_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1").inverse_cdf(0.975)
}

pub fn mean_ci95(samples: &[f64]) -> Result<MeanCi, BenchError> {
    let n = samples.len();
    if n < 2 {
        return Err(BenchError::InsufficientSamples(n));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = t_975(n - 1) * (var / n as f64).sqrt();
    Ok(MeanCi { n, mean, low: mean - half, high: mean + half })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_have_no_width() {
        let ci = mean_ci95(&[5.0; 4]).unwrap();
        assert_eq!((ci.mean, ci.low, ci.high), (5.0, 5.0, 5.0));
    }

    #[test]
    fn one_to_thirty() {
        let xs: Vec<f64> = (1..=30).map(f64::from).collect();
        let ci = mean_ci95(&xs).unwrap();
        // sd of 1..30 is sqrt(77.5); t(0.975, 29) = 2.045229642132703
        let half = 2.045229642132703 * (77.5f64 / 30.0).sqrt();
        assert_eq!(ci.mean, 15.5);
        assert!((ci.low - (15.5 - half)).abs() < 1e-9);
        assert!((ci.high - (15.5 + half)).abs() < 1e-9);
        assert!(((ci.high - ci.mean) - (ci.mean - ci.low)).abs() < 1e-12);
    }

    #[test]
    fn single_sample_is_not_enough() {
        assert_eq!(mean_ci95(&[7.0]), Err(BenchError::InsufficientSamples(1)));
    }

    #[test]
    fn t_quantile_spot_values() {
        assert!((t_975(29) - 2.045229642132703).abs() < 1e-9);
        assert!((t_975(1) - 12.706204736174698).abs() < 1e-6);
    }
}
