//! Small descriptive statistics over time series.

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divides by `n`), two-pass.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / values.len() as f64).sqrt()
}

/// Sample standard deviation (divides by `n - 1`); zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// A series shifted to zero mean, with its sum of squared deviations.
#[derive(Debug, Clone)]
pub struct Centered {
    pub values: Vec<f64>,
    pub sum_sq: f64,
}

impl Centered {
    pub fn new(values: &[f64]) -> Self {
        let m = mean(values);
        let values: Vec<f64> = values.iter().map(|v| v - m).collect();
        let sum_sq = values.iter().map(|v| v * v).sum();
        Centered { values, sum_sq }
    }

    /// Pearson coefficient against another centered series of equal length,
    /// clamped to [-1, 1]. NaN when either side has zero variance.
    pub fn pearson(&self, other: &Centered) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        let cross: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let denom = (self.sum_sq * other.sum_sq).sqrt();
        if denom == 0.0 {
            return f64::NAN;
        }
        (cross / denom).clamp(-1.0, 1.0)
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    Centered::new(x).pearson(&Centered::new(y))
}
