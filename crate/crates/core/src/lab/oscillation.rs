use serde::{Deserialize, Serialize};

use super::LabError;

pub const MIN_OSCILLATION_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub series: String,
    pub window: usize,
    /// Peak-to-peak amplitude, `max − min` over the window.
    pub amplitude: f64,
    /// Population standard deviation over the window.
    pub std: f64,
    /// Dominant period in ticks, from the autocorrelation peak.
    pub period: Option<usize>,
}

/// Oscillation statistics of the trailing `window` values of `series`.
pub fn oscillation_metrics(name: &str, series: &[f64], window: usize) -> Result<OscillationReport, LabError> {
    if window < MIN_OSCILLATION_WINDOW {
        return Err(LabError::Invalid(format!(
            "oscillation window must be at least {MIN_OSCILLATION_WINDOW}, got {window}"
        )));
    }
    if series.len() < window {
        return Err(LabError::Invalid(format!(
            "series of {} values is shorter than the window {window}",
            series.len()
        )));
    }
    let xs = &series[series.len() - window..];
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(LabError::Invalid(format!("series {name} holds a non-finite value")));
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let amplitude = max - min;
    let period = if amplitude > 0.0 { dominant_period(xs, mean, var) } else { None };
    Ok(OscillationReport { series: name.to_owned(), window, amplitude, std: var.sqrt(), period })
}

/// Lag of the highest local maximum of the autocorrelation over lags
/// `1..=len/2`; ties go to the smallest lag.
fn dominant_period(xs: &[f64], mean: f64, var: f64) -> Option<usize> {
    let max_lag = xs.len() / 2;
    let acf: Vec<f64> = (0..=max_lag + 1)
        .map(|k| {
            if k == 0 {
                return 1.0;
            }
            if k >= xs.len() {
                return f64::NEG_INFINITY;
            }
            let cov: f64 =
                xs.iter().zip(&xs[k..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / (xs.len() - k) as f64;
            cov / var
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for k in 1..=max_lag {
        let is_peak = acf[k] > acf[k - 1] && acf[k] >= acf[k + 1];
        if is_peak && best.is_none_or(|(_, v)| acf[k] > v + 1e-9) {
            best = Some((k, acf[k]));
        }
    }
    best.map(|(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series() {
        let r = oscillation_metrics("n", &[7.0; 40], 20).unwrap();
        assert_eq!(r.amplitude, 0.0);
        assert_eq!(r.std, 0.0);
        assert_eq!(r.period, None);
    }

    #[test]
    fn alternating_series() {
        let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = oscillation_metrics("x", &xs, 50).unwrap();
        assert_eq!(r.amplitude, 2.0);
        assert_eq!(r.period, Some(2));
        assert!((r.std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn five_cycle() {
        let cycle = [0.0, 0.0, 30.0, 50.0, 34.0];
        let xs: Vec<f64> = (0..200).map(|i| cycle[i % 5]).collect();
        let r = oscillation_metrics("n", &xs, 100).unwrap();
        assert_eq!(r.amplitude, 50.0);
        assert_eq!(r.period, Some(5));
    }

    #[test]
    fn window_rules() {
        assert!(oscillation_metrics("x", &[1.0; 20], 5).is_err());
        assert!(oscillation_metrics("x", &[1.0; 8], 10).is_err());
        let mut xs = vec![0.0; 30];
        xs[0] = 100.0;
        // only the trailing window counts
        assert_eq!(oscillation_metrics("x", &xs, 20).unwrap().amplitude, 0.0);
    }
}
