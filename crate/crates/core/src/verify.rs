//! Statistical verification of the submartingale-problem properties on
//! simulated ensembles.
//!
//! For a test function f, S^f(t) = f(Z(t)) - f(Z(0)) - int_0^t Lf(Z(u)) du
//! (left-endpoint quadrature, matching the filtration of the Euler draws).
//! Admissible f must make S^f a submartingale; the tests check the mean
//! increment over time pairs, unconditionally and conditioned on coarse
//! bins of the distance to the boundary at the earlier time. The cross
//! check aggregates the four defining properties plus a pathwise hull
//! check of (Z, Y).

use crate::generator::{check_admissibility, Coefficients, GeneratorError, GeneratorEval, TestFunction};
use crate::geometry::{GeometryError, PolyhedralDomain};
use crate::path::DiscretePath;
use crate::rng::PathStream;
use crate::simulate::SimOutput;
use crate::skorokhod::{verify_hull_property, SolveError};
use crate::stats::RunningStats;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("test battery is empty")]
    EmptyBattery,
    #[error("all conditioning bins fell below the 30-sample floor")]
    InsufficientPaths,
    #[error("time pair ({0}, {1}) is not ordered within the horizon")]
    BadTimePair(f64, f64),
    #[error("test function {id} failed admissibility: {source}")]
    Inadmissible { id: String, source: GeneratorError },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Minimum samples per conditioning bin before it is dropped.
pub const MIN_BIN_SAMPLES: usize = 30;
/// Default number of distance-to-boundary bins.
pub const DEFAULT_BINS: usize = 8;
/// Default one-sided threshold in standard errors.
pub const DEFAULT_Z_THRESHOLD: f64 = 3.0;

/// S^f along one path: f(Z_k) - f(Z_0) - sum_{j<k} Lf(Z_j) (t_{j+1} - t_j).
pub fn compute_sf_path(
    coeffs: &Coefficients,
    f: &TestFunction,
    z_path: &DiscretePath,
) -> DiscretePath {
    let n = z_path.len();
    let mut eval = GeneratorEval::new(coeffs, f);
    let f0 = f.value(z_path.value(0));
    let mut quad = 0.0;
    let mut vals = Vec::with_capacity(n);
    for k in 0..n {
        vals.push(f.value(z_path.value(k)) - f0 - quad);
        if k + 1 < n {
            let dt = z_path.time(k + 1) - z_path.time(k);
            quad += eval.apply(z_path.value(k)) * dt;
        }
    }
    DiscretePath::scalar(z_path.times().to_vec(), vals).expect("grid from input")
}

#[derive(Debug, Clone, Serialize)]
pub struct StatLine {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BinLine {
    /// Distance-to-boundary range of the bin.
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
    pub pass: bool,
}

/// Martingale/pushing split of the statistic for linear test functions.
#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub martingale_mean: f64,
    pub martingale_se: f64,
    pub pushing_mean: f64,
    /// Largest per-sample deviation between statistic and part sum.
    pub reconstruction_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairResult {
    pub s: f64,
    pub t: f64,
    pub unconditional: StatLine,
    pub bins: Vec<BinLine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<Decomposition>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmartingaleReport {
    pub test_fn_id: String,
    pub admissible: bool,
    pub z_threshold: f64,
    pub pairs: Vec<PairResult>,
    pub warnings: Vec<String>,
    /// Pass iff every unconditional and binned statistic clears the
    /// one-sided threshold.
    pub verdict: bool,
}

/// Mean of S^f(t) - S^f(s) across the ensemble, unconditionally and binned
/// by the distance of Z(s) to the boundary. Admissibility is checked and
/// recorded, not enforced: inadmissible functions run too, which is what
/// planted negative controls are for.
pub fn test_submartingale(
    ensemble: &[SimOutput],
    domain: &PolyhedralDomain,
    coeffs: &Coefficients,
    f: &TestFunction,
    time_pairs: &[(f64, f64)],
    bins: usize,
    z_threshold: f64,
) -> Result<SubmartingaleReport, VerifyError> {
    if ensemble.is_empty() {
        return Err(VerifyError::EmptyEnsemble);
    }
    let admissible = check_admissibility(domain, f, 200, 0x5f_ad).is_ok();
    let mut warnings = Vec::new();
    let mut pairs = Vec::with_capacity(time_pairs.len());
    let mut verdict = true;
    let linear = is_linear(f, domain);

    for &(s, t) in time_pairs {
        // NaN-rejecting ordering check.
        if s.partial_cmp(&t) != Some(std::cmp::Ordering::Less) {
            return Err(VerifyError::BadTimePair(s, t));
        }
        let mut samples: Vec<(f64, f64)> = Vec::with_capacity(ensemble.len()); // (dist, stat)
        let mut mart = RunningStats::new();
        let mut push = RunningStats::new();
        let mut recon = 0.0f64;
        let mut skipped = 0usize;
        for out in ensemble {
            let grid = &out.z_path;
            let si = grid.index_at(s + 1e-12);
            let ti = grid.index_at(t + 1e-12);
            if ti >= grid.len() || si >= ti || grid.time(ti) + 1e-9 < t {
                skipped += 1;
                continue;
            }
            let sf = compute_sf_path(coeffs, f, grid);
            let stat = sf.value(ti)[0] - sf.value(si)[0];
            let dist = domain.min_slack(grid.value(si)).max(0.0);
            samples.push((dist, stat));
            if let Some(v) = &linear {
                // <v, sum sigma dW> = <v, dZ - b dt - dY> summed over the
                // window; pushing part is <v, Y_t - Y_s>.
                let mut m = 0.0;
                let mut drift_buf = vec![0.0; domain.dimension()];
                for k in si..ti {
                    coeffs.drift_into(grid.value(k), &mut drift_buf);
                    let dt = grid.time(k + 1) - grid.time(k);
                    for d in 0..domain.dimension() {
                        let dz = grid.value(k + 1)[d] - grid.value(k)[d];
                        let dy = out.y_path.value(k + 1)[d] - out.y_path.value(k)[d];
                        m += v[d] * (dz - drift_buf[d] * dt - dy);
                    }
                }
                let mut p = 0.0;
                for d in 0..domain.dimension() {
                    p += v[d] * (out.y_path.value(ti)[d] - out.y_path.value(si)[d]);
                }
                mart.push(m);
                push.push(p);
                recon = recon.max(((m + p) - stat).abs());
            }
        }
        if skipped > 0 {
            warnings.push(format!(
                "pair ({s}, {t}): {skipped} paths stopped before t and were skipped"
            ));
        }
        if samples.is_empty() {
            return Err(VerifyError::InsufficientPaths);
        }

        let mut unc = RunningStats::new();
        for (_, stat) in &samples {
            unc.push(*stat);
        }
        let unc_pass = unc.mean() >= -z_threshold * unc.std_error();
        let unconditional = StatLine {
            mean: unc.mean(),
            std_error: unc.std_error(),
            count: unc.count() as usize,
            pass: unc_pass,
        };
        verdict &= unc_pass;

        // Equal-count bins over the distance to the boundary at time s.
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let nbins = bins.max(1).min(samples.len());
        let mut bin_lines = Vec::new();
        let mut survivors = 0usize;
        for b in 0..nbins {
            let lo_idx = b * samples.len() / nbins;
            let hi_idx = ((b + 1) * samples.len() / nbins).min(samples.len());
            if hi_idx <= lo_idx {
                continue;
            }
            let chunk = &samples[lo_idx..hi_idx];
            if chunk.len() < MIN_BIN_SAMPLES {
                warnings.push(format!(
                    "pair ({s}, {t}): bin {b} dropped with {} samples (< {MIN_BIN_SAMPLES})",
                    chunk.len()
                ));
                continue;
            }
            survivors += 1;
            let mut st = RunningStats::new();
            for (_, v) in chunk {
                st.push(*v);
            }
            let pass = st.mean() >= -z_threshold * st.std_error();
            verdict &= pass;
            bin_lines.push(BinLine {
                lo: chunk.first().unwrap().0,
                hi: chunk.last().unwrap().0,
                mean: st.mean(),
                std_error: st.std_error(),
                count: chunk.len(),
                pass,
            });
        }
        if survivors == 0 {
            return Err(VerifyError::InsufficientPaths);
        }

        let decomposition = linear.as_ref().map(|_| Decomposition {
            martingale_mean: mart.mean(),
            martingale_se: mart.std_error(),
            pushing_mean: push.mean(),
            reconstruction_error: recon,
        });
        pairs.push(PairResult { s, t, unconditional, bins: bin_lines, decomposition });
    }

    Ok(SubmartingaleReport {
        test_fn_id: f.id.clone(),
        admissible,
        z_threshold,
        pairs,
        warnings,
        verdict,
    })
}

/// Detects exactly-linear test functions (constant gradient, zero Hessian)
/// so the martingale/pushing decomposition can be reported.
fn is_linear(f: &TestFunction, domain: &PolyhedralDomain) -> Option<Vec<f64>> {
    let j = domain.dimension();
    let probe_a = vec![0.3; j];
    let probe_b: Vec<f64> = (0..j).map(|d| 0.9 + 0.2 * d as f64).collect();
    let ga = f.gradient(&probe_a);
    let gb = f.gradient(&probe_b);
    if ga.iter().zip(&gb).any(|(x, y)| (x - y).abs() > 1e-13) {
        return None;
    }
    let h = f.hessian(&probe_a);
    if h.data.iter().any(|v| v.abs() > 1e-13) {
        return None;
    }
    Some(ga)
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationRow {
    pub epsilon: f64,
    pub mean_fraction: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationTable {
    pub rows: Vec<OccupationRow>,
    /// Weighted linear extrapolation of the fraction to epsilon = 0.
    pub intercept: f64,
    pub intercept_se: f64,
    pub slope: f64,
}

/// Mean fraction of grid time spent within epsilon of the boundary, per
/// epsilon, with the extrapolated intercept at epsilon = 0.
pub fn test_boundary_occupation(
    ensemble: &[SimOutput],
    domain: &PolyhedralDomain,
    epsilons: &[f64],
) -> Result<OccupationTable, VerifyError> {
    if ensemble.is_empty() {
        return Err(VerifyError::EmptyEnsemble);
    }
    let mut eps = epsilons.to_vec();
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rows = Vec::with_capacity(eps.len());
    for &e in &eps {
        let mut stats = RunningStats::new();
        for out in ensemble {
            let n = out.z_path.len();
            if n <= 1 {
                continue;
            }
            let mut hits = 0usize;
            for k in 1..n {
                if domain.min_slack(out.z_path.value(k)) < e {
                    hits += 1;
                }
            }
            stats.push(hits as f64 / (n - 1) as f64);
        }
        rows.push(OccupationRow {
            epsilon: e,
            mean_fraction: stats.mean(),
            std_error: stats.std_error(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_fraction).collect();
    let ses: Vec<f64> = rows.iter().map(|r| r.std_error.max(1e-12)).collect();
    let (_, _, slope) = crate::stats::weighted_linear_fit(&xs, &ys, &ses);
    // Quadratic extrapolation keeps the occupation curve's curvature out of
    // the epsilon -> 0 intercept.
    let (intercept, intercept_se) = if xs.len() >= 3 {
        let (a, se_a, _, _) = crate::stats::weighted_quadratic_fit(&xs, &ys, &ses);
        (a, se_a)
    } else {
        let (a, se_a, _) = crate::stats::weighted_linear_fit(&xs, &ys, &ses);
        (a, se_a)
    };
    Ok(OccupationTable { rows, intercept, intercept_se, slope })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub items: Vec<CheckItem>,
    pub submartingale: Vec<SubmartingaleReport>,
    pub occupation: OccupationTable,
    pub pass: bool,
}

/// Options for the aggregate cross-check.
#[derive(Debug, Clone)]
pub struct CrossCheckOptions {
    pub time_pairs: Vec<(f64, f64)>,
    pub bins: usize,
    pub z_threshold: f64,
    pub hull_windows_per_path: usize,
    pub hull_paths: usize,
    pub epsilons: Vec<f64>,
    pub seed: u64,
}

impl Default for CrossCheckOptions {
    fn default() -> Self {
        CrossCheckOptions {
            time_pairs: Vec::new(),
            bins: DEFAULT_BINS,
            z_threshold: DEFAULT_Z_THRESHOLD,
            hull_windows_per_path: 100,
            hull_paths: 8,
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            seed: 0xc0_517e,
        }
    }
}

/// Aggregate check that simulated paths satisfy the defining properties of
/// the equivalent martingale-problem formulation: exact initial condition,
/// containment in the closed domain, submartingale statistics for the whole
/// battery, negligible V occupation, and the pathwise hull property of
/// (Z, Y) on random windows.
pub fn cross_check_formulations(
    ensemble: &[SimOutput],
    domain: &PolyhedralDomain,
    coeffs: &Coefficients,
    initial_point: &[f64],
    battery: &[TestFunction],
    options: &CrossCheckOptions,
) -> Result<VerificationReport, VerifyError> {
    if ensemble.is_empty() {
        return Err(VerifyError::EmptyEnsemble);
    }
    if battery.is_empty() {
        return Err(VerifyError::EmptyBattery);
    }
    for f in battery {
        check_admissibility(domain, f, 200, 0xba_77e7)
            .map_err(|source| VerifyError::Inadmissible { id: f.id.clone(), source })?;
    }
    let mut items = Vec::new();

    // Property 1: exact initial condition, bitwise.
    let exact_start = ensemble.iter().all(|out| {
        out.z_path
            .value(0)
            .iter()
            .zip(initial_point)
            .all(|(a, b)| a.to_bits() == b.to_bits())
    });
    items.push(CheckItem {
        name: "initial-condition".into(),
        pass: exact_start,
        detail: format!("{} paths start bitwise at the configured point", ensemble.len()),
    });

    // Property 2: containment in the closed domain at every grid time.
    let mut violations = 0usize;
    let mut checked = 0usize;
    for out in ensemble {
        for k in 0..out.z_path.len() {
            checked += 1;
            if !domain.contains(out.z_path.value(k)) {
                violations += 1;
            }
        }
    }
    items.push(CheckItem {
        name: "containment".into(),
        pass: violations == 0,
        detail: format!("{violations} of {checked} grid states left the closed domain"),
    });

    // Property 3: submartingale statistics for the battery.
    let time_pairs = if options.time_pairs.is_empty() {
        default_time_pairs(ensemble)
    } else {
        options.time_pairs.clone()
    };
    let mut submartingale = Vec::with_capacity(battery.len());
    let mut sub_pass = true;
    for f in battery {
        let report = test_submartingale(
            ensemble,
            domain,
            coeffs,
            f,
            &time_pairs,
            options.bins,
            options.z_threshold,
        )?;
        sub_pass &= report.verdict;
        submartingale.push(report);
    }
    items.push(CheckItem {
        name: "submartingale-battery".into(),
        pass: sub_pass,
        detail: format!("{} test functions x {} time pairs", battery.len(), time_pairs.len()),
    });

    // Property 4: V occupation. The strata audit names the V face sets;
    // count grid states sitting on one.
    let v_strata = domain.v_strata()?;
    let mut v_hits = 0usize;
    if !v_strata.is_empty() {
        for out in ensemble {
            for k in 0..out.z_path.len() {
                let x = out.z_path.value(k);
                let active = domain.faces_near(x, domain.tolerance_at(x));
                if v_strata.iter().any(|s| s == &active) {
                    v_hits += 1;
                }
            }
        }
    }
    items.push(CheckItem {
        name: "v-occupation".into(),
        pass: v_hits == 0,
        detail: if v_strata.is_empty() {
            "domain is completely-S: V is empty".into()
        } else {
            format!("{v_hits} of {checked} grid states sat on a V stratum")
        },
    });

    // Hull property of (Z, Y) on random windows.
    let mut stream = PathStream::new(options.seed, 0);
    let mut hull_checked = 0usize;
    let mut hull_failures = 0usize;
    for out in ensemble.iter().take(options.hull_paths) {
        let n = out.z_path.len();
        if n < 3 {
            continue;
        }
        for _ in 0..options.hull_windows_per_path {
            let s = (stream.uniform() * (n - 2) as f64) as usize;
            let span = 1 + (stream.uniform() * (n - s - 2) as f64) as usize;
            let t = (s + span).min(n - 1);
            let window_len = out.z_path.time(t) - out.z_path.time(s);
            let tol = 1e-7 * window_len.max(1e-6);
            hull_checked += 1;
            if !verify_hull_property(domain, &out.z_path, &out.y_path, (s, t), tol)? {
                hull_failures += 1;
            }
        }
    }
    items.push(CheckItem {
        name: "hull-property".into(),
        pass: hull_failures == 0,
        detail: format!("{hull_failures} of {hull_checked} random windows failed"),
    });

    let occupation = test_boundary_occupation(ensemble, domain, &options.epsilons)?;

    let pass = items.iter().all(|i| i.pass);
    Ok(VerificationReport { items, submartingale, occupation, pass })
}

fn default_time_pairs(ensemble: &[SimOutput]) -> Vec<(f64, f64)> {
    let grid = &ensemble[0].z_path;
    let t_end = grid.time(grid.len() - 1);
    vec![
        (0.0, t_end * 0.25),
        (t_end * 0.25, t_end * 0.5),
        (t_end * 0.5, t_end),
        (0.0, t_end),
    ]
}
