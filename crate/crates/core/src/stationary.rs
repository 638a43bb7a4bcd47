//! Stationary-distribution estimation and the integral characterization:
//! a stationary law puts no mass on the boundary and integrates Lf to a
//! nonpositive number for every admissible test function.
//!
//! Estimation is the ergodic time average: states sampled every `thin`
//! steps after a burn-in, pooled across paths. Standard errors use batch
//! means because thinned samples remain dependent.

use crate::generator::{check_admissibility, Coefficients, GeneratorError, GeneratorEval, TestFunction};
use crate::geometry::{GeometryError, PolyhedralDomain};
use crate::simulate::{PathSimulator, SimConfig, SimError};
use crate::stats::{batch_means_se, weighted_linear_fit, RunningStats};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Batch count for dependent-sample standard errors.
pub const BATCHES: usize = 32;
/// Minimum pooled sample count after thinning.
pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Error)]
pub enum StationaryError {
    #[error("burn-in {burn_in} must be below half the horizon {horizon}")]
    BurnInTooLong { burn_in: f64, horizon: f64 },
    #[error("only {got} samples after thinning; need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("test function {id} failed admissibility: {source}")]
    Inadmissible { id: String, source: GeneratorError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Pooled long-run samples with empirical moments.
#[derive(Debug, Clone)]
pub struct StationaryEstimate {
    dim: usize,
    /// Flat samples, `dim` entries each, path-major in time order.
    samples: Vec<f64>,
    pub burn_in: f64,
    pub thin: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub warnings: Vec<String>,
}

impl StationaryEstimate {
    /// Wraps externally produced samples (testing and cross-validation).
    pub fn from_samples(dim: usize, samples: Vec<f64>, burn_in: f64, thin: usize) -> Self {
        let mut est = StationaryEstimate {
            dim,
            samples,
            burn_in,
            thin,
            mean: vec![0.0; dim],
            variance: vec![0.0; dim],
            warnings: Vec::new(),
        };
        est.recompute_moments();
        est
    }

    fn recompute_moments(&mut self) {
        let n = self.sample_count();
        for d in 0..self.dim {
            let mut stats = RunningStats::new();
            for k in 0..n {
                stats.push(self.samples[k * self.dim + d]);
            }
            self.mean[d] = stats.mean();
            self.variance[d] = stats.variance();
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len() / self.dim.max(1)
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k * self.dim..(k + 1) * self.dim]
    }

    /// Fraction of sampled states within `epsilon` of the boundary.
    pub fn boundary_mass_at(&self, domain: &PolyhedralDomain, epsilon: f64) -> f64 {
        let n = self.sample_count();
        if n == 0 {
            return 0.0;
        }
        let hits = (0..n).filter(|&k| domain.min_slack(self.sample(k)) < epsilon).count();
        hits as f64 / n as f64
    }

    /// Equal-width marginal histogram of one coordinate: (lo, hi, fraction).
    pub fn marginal_histogram(&self, coord: usize, bins: usize) -> Vec<(f64, f64, f64)> {
        let n = self.sample_count();
        assert!(coord < self.dim && bins > 0);
        let vals: Vec<f64> = (0..n).map(|k| self.sample(k)[coord]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return vec![(lo, hi, 1.0)];
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in &vals {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(b, c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c as f64 / n as f64))
            .collect()
    }
}

/// Long-run sampler: discards `burn_in` time units, then keeps every
/// `thin`-th step of every path.
pub fn estimate_stationary(
    domain: &PolyhedralDomain,
    coeffs: &Coefficients,
    config: &SimConfig,
    burn_in: f64,
    thin: usize,
) -> Result<StationaryEstimate, StationaryError> {
    if burn_in >= config.horizon / 2.0 {
        return Err(StationaryError::BurnInTooLong { burn_in, horizon: config.horizon });
    }
    let thin = thin.max(1);
    let sim = PathSimulator::new(domain, coeffs, config)?;
    let burn_steps = (burn_in / config.step).ceil() as usize;
    let dim = domain.dimension();

    let per_path: Vec<Result<Vec<f64>, SimError>> = (0..config.paths)
        .into_par_iter()
        .map(|idx| {
            let mut kept = Vec::new();
            sim.run_with(idx, |rec| {
                if rec.step > burn_steps && (rec.step - burn_steps).is_multiple_of(thin) {
                    kept.extend_from_slice(rec.z);
                }
            })?;
            Ok(kept)
        })
        .collect();

    // Stationarity diagnostic: within each path, the first- and second-half
    // means of each coordinate must agree; the per-path half differences
    // are independent across paths, so their spread gives an honest error.
    let mut half_diffs: Vec<RunningStats> = vec![RunningStats::new(); dim];
    let mut samples = Vec::new();
    for kept in per_path {
        let kept = kept?;
        let n_path = kept.len() / dim.max(1);
        if n_path >= 4 {
            for d in 0..dim {
                let series: Vec<f64> = (0..n_path).map(|k| kept[k * dim + d]).collect();
                let (first, second) = series.split_at(n_path / 2);
                let m1: f64 = first.iter().sum::<f64>() / first.len() as f64;
                let m2: f64 = second.iter().sum::<f64>() / second.len() as f64;
                half_diffs[d].push(m2 - m1);
            }
        }
        samples.extend(kept);
    }
    let got = samples.len() / dim.max(1);
    if got < MIN_SAMPLES {
        return Err(StationaryError::TooFewSamples { got, need: MIN_SAMPLES });
    }

    let mut est = StationaryEstimate::from_samples(dim, samples, burn_in, thin);
    for (d, stats) in half_diffs.iter().enumerate() {
        if stats.count() < 2 {
            continue;
        }
        let se = stats.std_error().max(1e-300);
        // With one path there is no spread estimate; fall back to the
        // magnitude relative to the coordinate's own deviation.
        let ratio = if stats.count() >= 2 && se > 1e-250 {
            stats.mean().abs() / se
        } else {
            0.0
        };
        if ratio > 5.0 {
            est.warnings.push(format!(
                "coordinate {d}: first/second half means differ by {ratio:.2} SE (non-stationary?)"
            ));
        }
    }
    Ok(est)
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralLine {
    pub test_fn_id: String,
    pub estimate: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryMassLine {
    pub epsilon: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CharacterizationReport {
    pub integrals: Vec<IntegralLine>,
    pub boundary_masses: Vec<BoundaryMassLine>,
    /// Extrapolated boundary mass at epsilon = 0 with its standard error.
    pub boundary_intercept: f64,
    pub boundary_intercept_se: f64,
    pub boundary_pass: bool,
    pub pass: bool,
}

/// Checks the stationary characterization on an estimate: for each battery
/// member, the Monte Carlo estimate of int Lf dpi must not exceed three
/// standard errors above zero, and the epsilon-shell boundary mass must
/// extrapolate to zero within two standard errors.
pub fn check_stationary_characterization(
    estimate: &StationaryEstimate,
    domain: &PolyhedralDomain,
    coeffs: &Coefficients,
    battery: &[TestFunction],
    epsilons: &[f64],
) -> Result<CharacterizationReport, StationaryError> {
    for f in battery {
        check_admissibility(domain, f, 200, 0x57a7)
            .map_err(|source| StationaryError::Inadmissible { id: f.id.clone(), source })?;
    }
    let n = estimate.sample_count();
    let mut integrals = Vec::with_capacity(battery.len());
    let mut pass = true;
    for f in battery {
        let mut eval = GeneratorEval::new(coeffs, f);
        let series: Vec<f64> = (0..n).map(|k| eval.apply(estimate.sample(k))).collect();
        let mean = series.iter().sum::<f64>() / n as f64;
        let se = batch_means_se(&series, BATCHES);
        let ok = mean <= 3.0 * se;
        pass &= ok;
        integrals.push(IntegralLine {
            test_fn_id: f.id.clone(),
            estimate: mean,
            std_error: se,
            pass: ok,
        });
    }

    let mut eps = epsilons.to_vec();
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let masses: Vec<BoundaryMassLine> = eps
        .iter()
        .map(|&e| BoundaryMassLine { epsilon: e, mass: estimate.boundary_mass_at(domain, e) })
        .collect();
    let xs: Vec<f64> = masses.iter().map(|m| m.epsilon).collect();
    let ys: Vec<f64> = masses.iter().map(|m| m.mass).collect();
    // Shell indicators are autocorrelated along the sample sequence, so the
    // per-shell uncertainty comes from batch means, not the binomial count.
    let ses: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let series: Vec<f64> = (0..n)
                .map(|k| if domain.min_slack(estimate.sample(k)) < e { 1.0 } else { 0.0 })
                .collect();
            batch_means_se(&series, BATCHES).max(1e-9)
        })
        .collect();
    // The shell mass has curvature in epsilon; a quadratic extrapolation
    // keeps that out of the intercept.
    let (intercept, intercept_se) = if xs.len() >= 3 {
        let (a, se_a, _, _) = crate::stats::weighted_quadratic_fit(&xs, &ys, &ses);
        (a, se_a)
    } else {
        let (a, se_a, _) = weighted_linear_fit(&xs, &ys, &ses);
        (a, se_a)
    };
    let boundary_pass = intercept.abs() <= 2.0 * intercept_se;
    pass &= boundary_pass;

    Ok(CharacterizationReport {
        integrals,
        boundary_masses: masses,
        boundary_intercept: intercept,
        boundary_intercept_se: intercept_se,
        boundary_pass,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::make_bump_test_fn;
    use crate::geometry::PolyhedralDomain;
    use std::sync::Arc;

    fn reflected_ou(mu: f64, horizon: f64, paths: usize, seed: u64) -> StationaryEstimate {
        let domain = PolyhedralDomain::half_line();
        let coeffs = Coefficients::scalar(-mu, 1.0);
        let mut config = SimConfig::new(1e-3, horizon, paths, seed, vec![0.3]);
        config.bridge_reflection = true;
        estimate_stationary(&domain, &coeffs, &config, horizon * 0.1, 50).unwrap()
    }

    #[test]
    fn exponential_stationary_law() {
        // Reflected drift -1 diffusion on the half-line is Exp(2) in
        // stationarity: mean 1/2, variance 1/4.
        let est = reflected_ou(1.0, 60.0, 16, 2);
        assert!(est.sample_count() >= MIN_SAMPLES);
        assert!((est.mean[0] - 0.5).abs() < 0.03, "mean {}", est.mean[0]);
        assert!((est.variance[0] - 0.25).abs() < 0.03, "variance {}", est.variance[0]);
        assert!(est.warnings.is_empty(), "{:?}", est.warnings);
    }

    #[test]
    fn stationary_mean_scales_with_drift() {
        // Exp(2 mu): mean 1/(2 mu), checked across the drift scan.
        let est = reflected_ou(2.0, 50.0, 12, 3);
        assert!((est.mean[0] - 0.25).abs() < 0.02, "mu=2: mean {}", est.mean[0]);
        let est = reflected_ou(0.5, 120.0, 12, 3);
        assert!((est.mean[0] - 1.0).abs() < 0.06, "mu=0.5: mean {}", est.mean[0]);
    }

    #[test]
    fn transient_dynamics_raise_the_warning() {
        // Positive drift runs away: the first/second half means must
        // disagree far beyond the batch-means error.
        let domain = PolyhedralDomain::half_line();
        let coeffs = Coefficients::scalar(0.5, 1.0);
        let config = SimConfig::new(1e-3, 30.0, 8, 23, vec![0.0]);
        let est = estimate_stationary(&domain, &coeffs, &config, 1.0, 20).unwrap();
        assert!(
            est.warnings.iter().any(|w| w.contains("non-stationary")),
            "expected a non-stationarity warning, got {:?}",
            est.warnings
        );
    }

    #[test]
    fn degenerate_dynamics_are_a_point_mass() {
        let domain = PolyhedralDomain::half_line();
        let coeffs = Coefficients::scalar(0.0, 0.0);
        let config = SimConfig::new(1e-3, 4.0, 1, 5, vec![0.7]);
        let est = estimate_stationary(&domain, &coeffs, &config, 1.0, 2).unwrap();
        assert_eq!(est.mean[0], 0.7);
        assert_eq!(est.variance[0], 0.0);
    }

    #[test]
    fn validation_errors() {
        let domain = PolyhedralDomain::half_line();
        let coeffs = Coefficients::scalar(-1.0, 1.0);
        let config = SimConfig::new(1e-3, 2.0, 1, 5, vec![0.0]);
        assert!(matches!(
            estimate_stationary(&domain, &coeffs, &config, 1.5, 10),
            Err(StationaryError::BurnInTooLong { .. })
        ));
        assert!(matches!(
            estimate_stationary(&domain, &coeffs, &config, 0.5, 1000),
            Err(StationaryError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn characterization_passes_on_the_true_law() {
        let domain = PolyhedralDomain::half_line();
        let coeffs = Coefficients::scalar(-1.0, 1.0);
        let est = reflected_ou(1.0, 60.0, 16, 7);
        let bump = make_bump_test_fn(&domain, &[0.0], 0.6, -1.0).unwrap().f;
        let report = check_stationary_characterization(
            &est,
            &domain,
            &coeffs,
            &[bump, TestFunction::constant(1, 2.0)],
            &[0.2, 0.1, 0.05, 0.025],
        )
        .unwrap();
        assert!(report.pass, "{report:#?}");
        // Constant functions integrate to exactly zero.
        assert_eq!(report.integrals[1].estimate, 0.0);
    }

    #[test]
    fn characterization_oracle_quadrature() {
        // f(x) = x^2 exp(-x) has f'(0) = 0 (admissible either sign) and
        // integrates Lf to exactly zero against Exp(2); quadrature of
        // Lf(x) 2 exp(-2x) confirms, and the MC estimate must agree.
        let domain = PolyhedralDomain::half_line();
        let coeffs = Coefficients::scalar(-1.0, 1.0);
        let f = x2_exp(1.0);
        let mut oracle = 0.0;
        let n = 400_000;
        let h = 30.0 / n as f64;
        let mut eval = GeneratorEval::new(&coeffs, &f);
        for i in 0..n {
            let x = (i as f64 + 0.5) * h;
            oracle += eval.apply(&[x]) * 2.0 * (-2.0 * x).exp() * h;
        }
        assert!(oracle.abs() < 1e-6, "analytic integral should vanish, got {oracle}");

        let est = reflected_ou(1.0, 60.0, 16, 11);
        let report = check_stationary_characterization(
            &est,
            &domain,
            &coeffs,
            &[f],
            &[0.2, 0.1, 0.05, 0.025],
        )
        .unwrap();
        let line = &report.integrals[0];
        assert!(
            (line.estimate - oracle).abs() <= 4.0 * line.std_error + 0.02,
            "estimate {} vs oracle {oracle}",
            line.estimate
        );
    }

    #[test]
    fn characterization_detects_wrong_law() {
        // Uniform[0, 3] is not stationary for drift -1: the negated
        // quadratic-decay function integrates Lf to +0.17, far above any
        // standard error at this sample size.
        let domain = PolyhedralDomain::half_line();
        let coeffs = Coefficients::scalar(-1.0, 1.0);
        let n = 6000;
        let samples: Vec<f64> = (0..n).map(|k| 3.0 * (k as f64 + 0.5) / n as f64).collect();
        let est = StationaryEstimate::from_samples(1, samples, 0.0, 1);
        let f = x2_exp(-1.0);
        let report = check_stationary_characterization(
            &est,
            &domain,
            &coeffs,
            &[f],
            &[0.2, 0.1, 0.05],
        )
        .unwrap();
        assert!(!report.integrals[0].pass, "{report:#?}");
        assert!(report.integrals[0].estimate > 0.1);
    }

    #[test]
    fn interior_supported_functions_integrate_to_zero() {
        // Compactly supported f strictly inside the domain: both signs are
        // admissible and the stationary integral vanishes.
        let domain = PolyhedralDomain::half_line();
        let coeffs = Coefficients::scalar(-1.0, 1.0);
        let est = reflected_ou(1.0, 60.0, 16, 13);
        let f = interior_bump(0.8, 0.5);
        let report = check_stationary_characterization(
            &est,
            &domain,
            &coeffs,
            &[f.clone(), f.scale(-1.0)],
            &[0.2, 0.1],
        )
        .unwrap();
        for line in &report.integrals {
            assert!(
                line.estimate.abs() <= 3.0 * line.std_error + 0.02,
                "interior integral should vanish: {line:?}"
            );
        }
    }

    #[test]
    fn battery_scaling_is_linear() {
        let domain = PolyhedralDomain::half_line();
        let coeffs = Coefficients::scalar(-1.0, 1.0);
        let est = reflected_ou(1.0, 40.0, 8, 17);
        let f = make_bump_test_fn(&domain, &[0.0], 0.6, -1.0).unwrap().f;
        let report = check_stationary_characterization(
            &est,
            &domain,
            &coeffs,
            &[f.clone(), f.scale(4.0)],
            &[0.2, 0.1],
        )
        .unwrap();
        let a = report.integrals[0].estimate;
        let b = report.integrals[1].estimate;
        assert!((b - 4.0 * a).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
        assert_eq!(report.integrals[0].pass, report.integrals[1].pass);
    }

    #[test]
    fn rejects_inadmissible_battery() {
        let domain = PolyhedralDomain::half_line();
        let coeffs = Coefficients::scalar(-1.0, 1.0);
        let est = reflected_ou(1.0, 40.0, 8, 19);
        // f(x) = -x has oblique derivative -1 at the origin.
        let f = crate::generator::make_linear_test_fn(&domain, &[1.0]).unwrap().scale(-1.0);
        assert!(matches!(
            check_stationary_characterization(&est, &domain, &coeffs, &[f], &[0.1]),
            Err(StationaryError::Inadmissible { .. })
        ));
    }

    /// c * x^2 exp(-x): admissible on the half-line for either sign of c
    /// because the derivative vanishes at the origin.
    fn x2_exp(c: f64) -> TestFunction {
        TestFunction::from_parts(
            format!("{c} x^2 exp(-x)"),
            1,
            Arc::new(move |x: &[f64]| c * x[0] * x[0] * (-x[0]).exp()),
            Arc::new(move |x: &[f64], out: &mut [f64]| {
                out[0] = c * (2.0 * x[0] - x[0] * x[0]) * (-x[0]).exp();
            }),
            Arc::new(move |x: &[f64], out: &mut [f64]| {
                out[0] = c * (2.0 - 4.0 * x[0] + x[0] * x[0]) * (-x[0]).exp();
            }),
            f64::INFINITY,
            false,
        )
    }

    /// Cubic-spline bump centered at `center` with the given radius,
    /// supported strictly inside the half-line interior.
    fn interior_bump(center: f64, radius: f64) -> TestFunction {
        assert!(center - radius > 0.0);
        let prof = move |x: f64| -> (f64, f64, f64) {
            let s = ((x - center).abs() / radius).min(1.0);
            if s >= 1.0 {
                return (0.0, 0.0, 0.0);
            }
            let sign = (x - center).signum() / radius;
            let h = 1.0 - 3.0 * s * s + 2.0 * s * s * s;
            let dh = (-6.0 * s + 6.0 * s * s) * sign;
            let d2h = (-6.0 + 12.0 * s) / (radius * radius);
            (h, dh, d2h)
        };
        TestFunction::from_parts(
            format!("interior-bump({center}, {radius})"),
            1,
            Arc::new(move |x: &[f64]| prof(x[0]).0),
            Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = prof(x[0]).1),
            Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = prof(x[0]).2),
            radius,
            true,
        )
    }
}
