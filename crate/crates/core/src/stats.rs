//! Shared statistical helpers: running moments, batch-means standard errors
//! for dependent samples, weighted linear fits and Kolmogorov distances.

/// Welford accumulator for mean and variance.
#[derive(Debug, Clone, Default)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n - 1 normalization).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean for independent samples.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let d = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += d * n2 / n;
        self.m2 += other.m2 + d * d * n1 * n2 / n;
        self.count += other.count;
    }
}

/// Standard error of the mean of a dependent (autocorrelated) sequence via
/// non-overlapping batch means.
pub fn batch_means_se(samples: &[f64], batches: usize) -> f64 {
    let b = batches.max(2).min(samples.len().max(1));
    if samples.len() < 2 * b {
        // Too short to batch; fall back to the iid estimate.
        let mut s = RunningStats::new();
        for &x in samples {
            s.push(x);
        }
        return s.std_error();
    }
    let size = samples.len() / b;
    let mut means = RunningStats::new();
    for k in 0..b {
        let chunk = &samples[k * size..(k + 1) * size];
        means.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    means.std_error()
}

/// Weighted least-squares fit y = intercept + slope * x; weights are
/// 1/se_i^2. Returns (intercept, intercept_se, slope).
pub fn weighted_linear_fit(xs: &[f64], ys: &[f64], ses: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert_eq!(xs.len(), ses.len());
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..xs.len() {
        let se = if ses[i] > 0.0 && ses[i].is_finite() { ses[i] } else { 1.0 };
        let w = 1.0 / (se * se);
        sw += w;
        swx += w * xs[i];
        swy += w * ys[i];
        swxx += w * xs[i] * xs[i];
        swxy += w * xs[i] * ys[i];
    }
    let det = sw * swxx - swx * swx;
    if det.abs() < 1e-300 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let intercept = (swxx * swy - swx * swxy) / det;
    let slope = (sw * swxy - swx * swy) / det;
    let intercept_se = (swxx / det).sqrt();
    (intercept, intercept_se, slope)
}

/// Weighted least-squares fit y = a + b x + c x^2; returns (a, se_a, b, c).
/// Used for epsilon-to-zero extrapolations where the underlying quantity
/// has curvature the linear fit would fold into the intercept.
pub fn weighted_quadratic_fit(xs: &[f64], ys: &[f64], ses: &[f64]) -> (f64, f64, f64, f64) {
    use crate::linalg::{solve, Mat};
    assert_eq!(xs.len(), ys.len());
    assert_eq!(xs.len(), ses.len());
    assert!(xs.len() >= 3, "need at least three points for a quadratic fit");
    let mut a = Mat::zeros(3, 3);
    let mut rhs = [0.0; 3];
    for i in 0..xs.len() {
        let se = if ses[i] > 0.0 && ses[i].is_finite() { ses[i] } else { 1.0 };
        let w = 1.0 / (se * se);
        let basis = [1.0, xs[i], xs[i] * xs[i]];
        for r in 0..3 {
            rhs[r] += w * ys[i] * basis[r];
            for c in 0..3 {
                a[(r, c)] += w * basis[r] * basis[c];
            }
        }
    }
    let Some(coef) = solve(&a, &rhs) else {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    };
    // Var(a_hat) = (X^T W X)^{-1}[0][0].
    let e0 = [1.0, 0.0, 0.0];
    let inv0 = solve(&a, &e0).map(|v| v[0]).unwrap_or(f64::NAN);
    (coef[0], inv0.max(0.0).sqrt(), coef[1], coef[2])
}

/// Kolmogorov distance between the empirical law of `samples` and the given
/// CDF. Sorts a copy of the samples.
pub fn kolmogorov_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}
