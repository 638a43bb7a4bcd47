//! Pathwise Skorokhod solvers for discretized inputs.
//!
//! The one-dimensional problem has the classical running-maximum solution
//! and serves as the exact oracle. In higher dimensions each step is a
//! linear complementarity problem in face-slack coordinates, solved by
//! Lemke pivoting with lexicographic anti-cycling. The LCP matrix is the
//! Gram-type matrix [<n^i, d^j>]; the completely-S property of the domain
//! is what keeps Lemke away from ray termination.

use crate::geometry::{GeometryError, PolyhedralDomain};
use crate::linalg::{dot, norm, Mat};
use crate::path::DiscretePath;
use thiserror::Error;

/// Complementarity slack tolerated per step.
pub const DEFAULT_COMP_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("initial point lies outside the domain")]
    BadInitialPoint,
    #[error("Lemke ray termination at step {step}: the increment could not be constrained")]
    RayTermination { step: usize },
    #[error("domain is not completely-S (witness face set {witness:?})")]
    NonCompletelyS { witness: Vec<usize> },
    #[error("paths live on different grids")]
    GridMismatch,
    #[error("window indices ({0}, {1}) invalid for path of length {2}")]
    BadWindow(usize, usize, usize),
    #[error("LCP solve failed at step {step}: {msg}")]
    NumericalFailure { step: usize, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Solution of the discrete Skorokhod problem: the constrained path, the
/// pushing process, and per-step local-time increments for every face.
#[derive(Debug, Clone)]
pub struct EspSolution {
    /// Constrained path (lives in the closed domain).
    pub constrained: DiscretePath,
    /// Pushing process, zero at the initial time.
    pub pushing: DiscretePath,
    /// Per-step local-time increments, `face_count` entries per grid point
    /// (the row at the initial time covers constraining the start point).
    pub local_time_increments: Vec<f64>,
    pub face_count: usize,
    /// Lemke iteration count per step.
    pub lcp_iterations: Vec<u32>,
}

impl EspSolution {
    /// Cumulative local time on one face along the grid.
    pub fn cumulative_local_time(&self, face: usize) -> Vec<f64> {
        let n = self.constrained.len();
        let mut acc = 0.0;
        (0..n)
            .map(|k| {
                acc += self.local_time_increments[k * self.face_count + face];
                acc
            })
            .collect()
    }

    pub fn local_time_increment(&self, step: usize, face: usize) -> f64 {
        self.local_time_increments[step * self.face_count + face]
    }

    /// Writes phi.csv, eta.csv, local_times.csv and diagnostics.json.
    pub fn write_to_dir(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let write_path = |name: &str, p: &DiscretePath| -> std::io::Result<()> {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            p.write_csv(&mut f).map_err(std::io::Error::other)
        };
        write_path("phi.csv", &self.constrained)?;
        write_path("eta.csv", &self.pushing)?;
        {
            use std::io::Write;
            let mut f =
                std::io::BufWriter::new(std::fs::File::create(dir.join("local_times.csv"))?);
            write!(f, "t")?;
            for i in 0..self.face_count {
                write!(f, ",l{}", i + 1)?;
            }
            writeln!(f)?;
            for k in 0..self.constrained.len() {
                write!(f, "{}", self.constrained.time(k))?;
                for i in 0..self.face_count {
                    write!(f, ",{}", self.local_time_increment(k, i))?;
                }
                writeln!(f)?;
            }
        }
        let diag = serde_json::json!({
            "steps": self.constrained.len().saturating_sub(1),
            "faces": self.face_count,
            "lcp_iterations_total": self.lcp_iterations.iter().map(|&v| v as u64).sum::<u64>(),
            "lcp_iterations_max": self.lcp_iterations.iter().copied().max().unwrap_or(0),
        });
        std::fs::write(dir.join("diagnostics.json"), serde_json::to_string_pretty(&diag)?)
    }
}

/// Exact solver for the half-line [0, inf) with unit reflection:
/// eta_k = max(0, max_{j<=k} (-psi_j)).
pub fn solve_sp_1d(psi: &DiscretePath) -> Result<EspSolution, SolveError> {
    assert_eq!(psi.dim(), 1, "solve_sp_1d expects a scalar path");
    let n = psi.len();
    if n == 0 || psi.value(0)[0] < 0.0 {
        return Err(SolveError::BadInitialPoint);
    }
    let mut eta = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    let mut increments = Vec::with_capacity(n);
    let mut running = 0.0f64;
    for k in 0..n {
        let prev = running;
        running = running.max(-psi.value(k)[0]);
        eta.push(running);
        phi.push(psi.value(k)[0] + running);
        increments.push(running - prev);
    }
    let times = psi.times().to_vec();
    Ok(EspSolution {
        constrained: DiscretePath::scalar(times.clone(), phi).expect("grid from input"),
        pushing: DiscretePath::scalar(times, eta).expect("grid from input"),
        local_time_increments: increments,
        face_count: 1,
        lcp_iterations: vec![0; n],
    })
}

/// Result of constraining one increment.
#[derive(Debug, Clone)]
pub struct SpStep {
    pub z: Vec<f64>,
    /// Nonnegative local-time weight per face (unit-direction units).
    pub local_times: Vec<f64>,
    pub lcp_iterations: u32,
    /// The active set at z matches a stratum classified InV.
    pub hit_v: bool,
}

/// Reusable per-step solver. Construction audits the completely-S property
/// unless the caller explicitly opts into stopping at V.
pub struct SpStepper<'a> {
    domain: &'a PolyhedralDomain,
    /// Full Gram-type matrix [<n^i, d^j>].
    m_full: Mat,
    /// True when m_full is the identity: faces decouple and the LCP solution
    /// is the coordinatewise positive part.
    identity_m: bool,
    /// Masks of face sets whose strata classify InV (empty when the domain
    /// is completely-S).
    v_masks: Vec<u32>,
    comp_tol: f64,
}

impl<'a> SpStepper<'a> {
    /// Stepper for a completely-S domain; errors otherwise.
    pub fn new(domain: &'a PolyhedralDomain) -> Result<Self, SolveError> {
        match domain.is_completely_s()? {
            v if v.holds() => Self::build(domain, Vec::new()),
            crate::geometry::CompletelySVerdict::NotCompletelyS { witness } => {
                Err(SolveError::NonCompletelyS { witness })
            }
            _ => unreachable!(),
        }
    }

    /// Stepper that tolerates V strata, reporting `hit_v` instead of
    /// requiring completely-S. Used by the simulator when stopping at the
    /// first V hit.
    pub fn tolerating_v(domain: &'a PolyhedralDomain) -> Result<Self, SolveError> {
        let v_masks = domain
            .v_strata()?
            .into_iter()
            .map(|s| s.iter().fold(0u32, |m, &i| m | (1 << i)))
            .collect();
        Self::build(domain, v_masks)
    }

    fn build(domain: &'a PolyhedralDomain, v_masks: Vec<u32>) -> Result<Self, SolveError> {
        let f = domain.faces().len();
        let mut m_full = Mat::zeros(f, f);
        for i in 0..f {
            for j in 0..f {
                m_full[(i, j)] = dot(domain.faces()[i].normal(), domain.faces()[j].direction());
            }
        }
        let identity_m = (0..f).all(|i| {
            (0..f).all(|j| {
                let want = if i == j { 1.0 } else { 0.0 };
                (m_full[(i, j)] - want).abs() <= 1e-14
            })
        });
        Ok(SpStepper { domain, m_full, identity_m, v_masks, comp_tol: DEFAULT_COMP_TOL })
    }

    pub fn domain(&self) -> &PolyhedralDomain {
        self.domain
    }

    pub fn comp_tol(&self) -> f64 {
        self.comp_tol
    }

    /// Constrains x + increment back into the domain:
    /// z = x + increment + sum_i l_i d^i with l >= 0 and complementarity
    /// between l and the face slacks of z.
    pub fn step(&self, x: &[f64], increment: &[f64]) -> Result<SpStep, SolveError> {
        let faces = self.domain.faces();
        let f = faces.len();
        let mut z: Vec<f64> = x.iter().zip(increment).map(|(a, b)| a + b).collect();
        let mut local_times = vec![0.0; f];
        let tol = self.domain.tolerance_at(&z);

        let mut min_slack = f64::INFINITY;
        for face in faces {
            min_slack = min_slack.min(face.slack(&z));
        }
        if min_slack >= 0.0 {
            let hit_v = min_slack <= tol && self.v_hit_at(&z, tol);
            return Ok(SpStep { z, local_times, lcp_iterations: 0, hit_v });
        }

        // Identity Gram matrix: faces decouple, the LCP solution is the
        // positive part in slack coordinates.
        if self.identity_m {
            for (i, face) in faces.iter().enumerate() {
                let q = face.slack(&z);
                if q < 0.0 {
                    local_times[i] = -q;
                }
            }
            for (i, face) in faces.iter().enumerate() {
                if local_times[i] > 0.0 {
                    let li = local_times[i];
                    for (zd, dd) in z.iter_mut().zip(face.direction()) {
                        *zd += li * dd;
                    }
                }
            }
            let hit_v = self.v_hit_at(&z, tol);
            return Ok(SpStep { z, local_times, lcp_iterations: 0, hit_v });
        }

        // Candidate active set: faces near the unconstrained target. Faces
        // violated by the constraining pushes are pulled in on demand.
        let activation = norm(increment) + tol;
        let mut candidates: Vec<usize> =
            (0..f).filter(|&i| faces[i].slack(&z) < activation).collect();
        let target = z.clone();
        let mut iterations = 0u32;
        for _expand in 0..=f {
            let q: Vec<f64> = candidates.iter().map(|&i| faces[i].slack(&target)).collect();
            let sub = candidates.len();
            let mut m_sub = Mat::zeros(sub, sub);
            for (r, &i) in candidates.iter().enumerate() {
                for (c, &j) in candidates.iter().enumerate() {
                    m_sub[(r, c)] = self.m_full[(i, j)];
                }
            }
            let sol = match lemke(&m_sub, &q) {
                Ok(sol) => sol,
                Err(LcpFailure::Ray) => return Err(SolveError::RayTermination { step: 0 }),
                Err(LcpFailure::Numerical(msg)) => {
                    return Err(SolveError::NumericalFailure { step: 0, msg })
                }
            };
            iterations += sol.iterations;
            z.copy_from_slice(&target);
            local_times.fill(0.0);
            for (r, &i) in candidates.iter().enumerate() {
                local_times[i] = sol.l[r];
                if sol.l[r] != 0.0 {
                    for (zd, dd) in z.iter_mut().zip(faces[i].direction()) {
                        *zd += sol.l[r] * dd;
                    }
                }
            }
            // All faces must be satisfied at z, not just the candidates.
            let violated: Vec<usize> = (0..f)
                .filter(|&i| !candidates.contains(&i) && faces[i].slack(&z) < -tol)
                .collect();
            if violated.is_empty() {
                let hit_v = self.v_hit_at(&z, self.domain.tolerance_at(&z));
                return Ok(SpStep { z, local_times, lcp_iterations: iterations, hit_v });
            }
            candidates.extend(violated);
            candidates.sort_unstable();
        }
        Err(SolveError::NumericalFailure {
            step: 0,
            msg: "active-set expansion did not settle".into(),
        })
    }

    fn v_hit_at(&self, z: &[f64], tol: f64) -> bool {
        if self.v_masks.is_empty() {
            return false;
        }
        let mut mask = 0u32;
        for (i, face) in self.domain.faces().iter().enumerate() {
            if face.slack(z).abs() <= tol {
                mask |= 1 << i;
            }
        }
        mask != 0 && self.v_masks.contains(&mask)
    }
}

/// One-shot step solve with the full stepper contract (audits completely-S).
pub fn solve_sp_step(
    domain: &PolyhedralDomain,
    x: &[f64],
    increment: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let stepper = SpStepper::new(domain)?;
    let step = stepper.step(x, increment)?;
    Ok((step.z, step.local_times))
}

/// Chains per-step solves over the increments of psi.
pub fn solve_sp_path(
    domain: &PolyhedralDomain,
    psi: &DiscretePath,
) -> Result<EspSolution, SolveError> {
    let stepper = SpStepper::new(domain)?;
    solve_sp_path_with(&stepper, psi)
}

/// Path solve with a caller-provided stepper (lets ensembles share the
/// completely-S audit).
pub fn solve_sp_path_with(
    stepper: &SpStepper<'_>,
    psi: &DiscretePath,
) -> Result<EspSolution, SolveError> {
    let domain = stepper.domain();
    let j_dim = domain.dimension();
    assert_eq!(psi.dim(), j_dim, "path dimension must match the domain");
    let f = domain.faces().len();
    let n = psi.len();
    if n == 0 || !domain.contains(psi.value(0)) {
        return Err(SolveError::BadInitialPoint);
    }

    let mut phi_flat = Vec::with_capacity(n * j_dim);
    let mut eta_flat = Vec::with_capacity(n * j_dim);
    let mut increments = vec![0.0; n * f];
    let mut iterations = Vec::with_capacity(n);

    // The initial point may sit on the boundary (or within the activation
    // band outside); constrain it with a zero increment first.
    let start = psi.value(0).to_vec();
    let zero = vec![0.0; j_dim];
    let first = stepper.step(&start, &zero).map_err(|e| at_step(e, 0))?;
    let mut phi = first.z;
    let mut eta: Vec<f64> = phi.iter().zip(psi.value(0)).map(|(a, b)| a - b).collect();
    phi_flat.extend_from_slice(&phi);
    eta_flat.extend_from_slice(&eta);
    increments[..f].copy_from_slice(&first.local_times);
    iterations.push(first.lcp_iterations);

    for k in 1..n {
        let inc: Vec<f64> =
            psi.value(k).iter().zip(psi.value(k - 1)).map(|(a, b)| a - b).collect();
        let step = stepper.step(&phi, &inc).map_err(|e| at_step(e, k))?;
        for d in 0..j_dim {
            eta[d] += step.z[d] - phi[d] - inc[d];
        }
        phi = step.z;
        phi_flat.extend_from_slice(&phi);
        eta_flat.extend_from_slice(&eta);
        increments[k * f..(k + 1) * f].copy_from_slice(&step.local_times);
        iterations.push(step.lcp_iterations);
    }

    let times = psi.times().to_vec();
    Ok(EspSolution {
        constrained: DiscretePath::new(times.clone(), phi_flat, j_dim).expect("grid from input"),
        pushing: DiscretePath::new(times, eta_flat, j_dim).expect("grid from input"),
        local_time_increments: increments,
        face_count: f,
        lcp_iterations: iterations,
    })
}

fn at_step(e: SolveError, step: usize) -> SolveError {
    match e {
        SolveError::RayTermination { .. } => SolveError::RayTermination { step },
        SolveError::NumericalFailure { msg, .. } => SolveError::NumericalFailure { step, msg },
        other => other,
    }
}

/// Checks the defining hull property of the extended Skorokhod problem on a
/// grid window: the pushing increment over [s, t] must lie in the cone
/// generated by the directions active at the constrained path's positions
/// inside the window. Interior-only windows degenerate to
/// |eta_t - eta_s| <= tol. Face activity uses the tolerant two-sided test,
/// so candidate paths that escape the domain activate nothing there.
pub fn verify_hull_property(
    domain: &PolyhedralDomain,
    phi: &DiscretePath,
    eta: &DiscretePath,
    window: (usize, usize),
    tol: f64,
) -> Result<bool, SolveError> {
    if !phi.same_grid(eta) || phi.dim() != eta.dim() {
        return Err(SolveError::GridMismatch);
    }
    let (s, t) = window;
    if s >= t || t >= phi.len() {
        return Err(SolveError::BadWindow(s, t, phi.len()));
    }
    let mut seen = vec![false; domain.faces().len()];
    for k in s..=t {
        let x = phi.value(k);
        for i in domain.faces_near(x, domain.tolerance_at(x)) {
            seen[i] = true;
        }
    }
    let generators: Vec<Vec<f64>> = seen
        .iter()
        .enumerate()
        .filter(|(_, &hit)| hit)
        .map(|(i, _)| domain.faces()[i].direction().to_vec())
        .collect();
    let delta: Vec<f64> = eta.value(t).iter().zip(eta.value(s)).map(|(a, b)| a - b).collect();
    Ok(crate::geometry::Cone::new(generators).contains(&delta, tol))
}

// ---------------------------------------------------------------------------
// Lemke pivoting for the LCP w = q + M l, w, l >= 0, w . l = 0.
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum LcpFailure {
    Ray,
    Numerical(String),
}

#[derive(Debug)]
struct LcpSolution {
    l: Vec<f64>,
    iterations: u32,
}

const PIVOT_EPS: f64 = 1e-11;

/// Dense Lemke with lexicographic tie-breaking. Variable ids: w_i = i,
/// l_i = n + i, artificial z0 = 2n.
fn lemke(m: &Mat, q: &[f64]) -> Result<LcpSolution, LcpFailure> {
    let n = q.len();
    if n == 0 || q.iter().all(|&v| v >= 0.0) {
        return Ok(LcpSolution { l: vec![0.0; n], iterations: 0 });
    }
    let ncols = 2 * n + 2; // variables plus rhs
    let rhs = 2 * n + 1;
    let z0 = 2 * n;
    let mut t = Mat::zeros(n, ncols);
    for i in 0..n {
        t[(i, i)] = 1.0;
        for j in 0..n {
            t[(i, n + j)] = -m[(i, j)];
        }
        t[(i, z0)] = -1.0;
        t[(i, rhs)] = q[i];
    }
    let mut basis: Vec<usize> = (0..n).collect();

    // First pivot: z0 enters, the row with the most negative rhs leaves.
    let mut row = 0;
    for i in 1..n {
        if t[(i, rhs)] < t[(row, rhs)] {
            row = i;
        }
    }
    let mut left = basis[row];
    pivot(&mut t, &mut basis, row, z0);
    let mut iterations = 1u32;

    let cap = 200 * (n as u32 + 2);
    loop {
        let enter = if left < n { n + left } else { left - n };
        // Lexicographic minimum ratio test over rows with positive pivot.
        let mut best: Option<usize> = None;
        for i in 0..n {
            if t[(i, enter)] <= PIVOT_EPS {
                continue;
            }
            best = Some(match best {
                None => i,
                Some(b) => {
                    if lex_less(&t, i, b, enter, rhs, n) {
                        i
                    } else {
                        b
                    }
                }
            });
        }
        let Some(r) = best else {
            return Err(LcpFailure::Ray);
        };
        left = basis[r];
        pivot(&mut t, &mut basis, r, enter);
        iterations += 1;
        if left == z0 {
            break;
        }
        if iterations > cap {
            return Err(LcpFailure::Numerical(format!("no convergence after {iterations} pivots")));
        }
    }

    let mut l = vec![0.0; n];
    for i in 0..n {
        if basis[i] >= n && basis[i] < 2 * n {
            l[basis[i] - n] = t[(i, rhs)].max(0.0);
        }
    }
    Ok(LcpSolution { l, iterations })
}

/// Compares the ratio vectors (rhs, w-columns) / pivot of rows a and b.
fn lex_less(t: &Mat, a: usize, b: usize, enter: usize, rhs: usize, n: usize) -> bool {
    let pa = t[(a, enter)];
    let pb = t[(b, enter)];
    let cols = std::iter::once(rhs).chain(0..n);
    for c in cols {
        let va = t[(a, c)] / pa;
        let vb = t[(b, c)] / pb;
        if (va - vb).abs() > 1e-12 * (1.0 + va.abs() + vb.abs()) {
            return va < vb;
        }
    }
    false
}

fn pivot(t: &mut Mat, basis: &mut [usize], row: usize, col: usize) {
    let ncols = t.cols;
    let p = t[(row, col)];
    for j in 0..ncols {
        t[(row, j)] /= p;
    }
    for i in 0..t.rows {
        if i == row {
            continue;
        }
        let f = t[(i, col)];
        if f == 0.0 {
            continue;
        }
        for j in 0..ncols {
            let v = t[(row, j)];
            t[(i, j)] -= f * v;
        }
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PathStream;

    fn path1(times: Vec<f64>, vals: Vec<f64>) -> DiscretePath {
        DiscretePath::scalar(times, vals).unwrap()
    }

    #[test]
    fn sp_1d_examples() {
        // Pure pushing.
        let sol = solve_sp_1d(&path1(vec![0.0, 0.5, 1.0], vec![0.0, -1.0, -2.0])).unwrap();
        assert_eq!(sol.constrained.values_flat(), &[0.0, 0.0, 0.0]);
        assert_eq!(sol.pushing.values_flat(), &[0.0, 1.0, 2.0]);

        // Never hits the boundary.
        let sol = solve_sp_1d(&path1(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(sol.constrained.values_flat(), &[1.0, 2.0, 3.0]);
        assert_eq!(sol.pushing.values_flat(), &[0.0, 0.0, 0.0]);

        // Running-maximum formula by hand.
        let sol = solve_sp_1d(&path1(vec![0.0, 0.5, 1.0], vec![1.0, -1.0, 0.0])).unwrap();
        assert_eq!(sol.constrained.values_flat(), &[1.0, 0.0, 1.0]);
        assert_eq!(sol.pushing.values_flat(), &[0.0, 1.0, 1.0]);

        assert!(matches!(
            solve_sp_1d(&path1(vec![0.0, 1.0], vec![-0.5, 0.0])),
            Err(SolveError::BadInitialPoint)
        ));
    }

    /// Enumerates the active-set cases of a small LCP; the oracle for the
    /// pivoting solver. Returns the unique complementary solution for
    /// P-matrices.
    fn lcp_enumerate(m: &Mat, q: &[f64]) -> Option<Vec<f64>> {
        let n = q.len();
        for mask in 0u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let k = idx.len();
            let mut sub = Mat::zeros(k, k);
            let mut rhs = vec![0.0; k];
            for (r, &i) in idx.iter().enumerate() {
                rhs[r] = -q[i];
                for (c, &j) in idx.iter().enumerate() {
                    sub[(r, c)] = m[(i, j)];
                }
            }
            let l_sub = if k == 0 {
                Vec::new()
            } else {
                match crate::linalg::solve(&sub, &rhs) {
                    Some(s) => s,
                    None => continue,
                }
            };
            if l_sub.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let mut l = vec![0.0; n];
            for (r, &i) in idx.iter().enumerate() {
                l[i] = l_sub[r];
            }
            let w: Vec<f64> = (0..n)
                .map(|i| q[i] + (0..n).map(|j| m[(i, j)] * l[j]).sum::<f64>())
                .collect();
            if w.iter().all(|&v| v >= -1e-10) {
                return Some(l);
            }
        }
        None
    }

    #[test]
    fn lemke_agrees_with_enumeration() {
        // Normalized columns of [[1, 0], [-0.5, 1]].
        let s5 = 1.25f64.sqrt();
        let m = Mat::from_rows(&[vec![1.0 / s5, 0.0], vec![-0.5 / s5, 1.0]]);
        let mut stream = PathStream::new(3, 0);
        for _ in 0..500 {
            let q = vec![stream.normal(), stream.normal()];
            let expect = lcp_enumerate(&m, &q).expect("P-matrix LCP always solvable");
            let got = lemke(&m, &q).expect("lemke");
            for (a, b) in expect.iter().zip(&got.l) {
                assert!((a - b).abs() < 1e-9, "{expect:?} vs {:?}", got.l);
            }
        }
    }

    #[test]
    fn step_examples() {
        // Normal reflection decouples: z is the positive part.
        let orthant = PolyhedralDomain::orthant_normal(2);
        let (z, l) = solve_sp_step(&orthant, &[1.0, 1.0], &[-2.0, 0.0]).unwrap();
        assert_eq!(z, vec![0.0, 1.0]);
        assert_eq!(l, vec![1.0, 0.0]);

        // Interior step is untouched.
        let (z, l) = solve_sp_step(&orthant, &[1.0, 1.0], &[0.1, 0.2]).unwrap();
        assert_eq!(z, vec![1.1, 1.2]);
        assert!(l.iter().all(|&v| v == 0.0));

        // Oblique 2x2 case, enumerated by hand: directions are the
        // normalized columns of [[1, 0], [-0.5, 1]]; local times are
        // measured against the unit directions.
        let oblique = PolyhedralDomain::orthant(&[vec![1.0, -0.5], vec![0.0, 1.0]]).unwrap();
        let (z, l) = solve_sp_step(&oblique, &[0.0, 0.0], &[-1.0, 0.2]).unwrap();
        assert!(z[0].abs() < 1e-12 && z[1].abs() < 1e-12, "z = {z:?}");
        let s5 = 1.25f64.sqrt();
        assert!((l[0] - s5).abs() < 1e-12, "push on face 0 in unit-direction units");
        assert!((l[1] - 0.3).abs() < 1e-12);

        // The same solution via the enumeration oracle.
        let m = Mat::from_rows(&[vec![1.0 / s5, 0.0], vec![-0.5 / s5, 1.0]]);
        let oracle = lcp_enumerate(&m, &[-1.0, 0.2]).unwrap();
        assert!((oracle[0] - l[0]).abs() < 1e-12);
        assert!((oracle[1] - l[1]).abs() < 1e-12);
    }

    #[test]
    fn step_rejects_non_completely_s() {
        let bad = PolyhedralDomain::orthant(&[vec![1.0, -2.0], vec![-2.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_sp_step(&bad, &[0.0, 0.0], &[-0.1, 0.0]),
            Err(SolveError::NonCompletelyS { .. })
        ));
    }

    #[test]
    fn path_matches_1d_formula() {
        let half = PolyhedralDomain::half_line();
        let mut stream = PathStream::new(11, 0);
        for trial in 0..20 {
            let n = 400;
            let mut vals = Vec::with_capacity(n);
            let mut x = stream.uniform() * 0.5;
            let mut times = Vec::with_capacity(n);
            for k in 0..n {
                times.push(k as f64 * 0.01);
                vals.push(x);
                x += 0.1 * stream.normal();
            }
            let psi = path1(times, vals);
            let exact = solve_sp_1d(&psi).unwrap();
            let lcp = solve_sp_path(&half, &psi).unwrap();
            let d = exact.constrained.sup_distance(&lcp.constrained);
            assert!(d <= 1e-10, "trial {trial}: sup distance {d}");
            let d = exact.pushing.sup_distance(&lcp.pushing);
            assert!(d <= 1e-10, "trial {trial}: pushing distance {d}");
        }
    }

    #[test]
    fn path_constant_interior_has_no_pushing() {
        let orthant = PolyhedralDomain::orthant_normal(2);
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let vals: Vec<f64> = times.iter().flat_map(|_| [1.0, 2.0]).collect();
        let psi = DiscretePath::new(times, vals, 2).unwrap();
        let sol = solve_sp_path(&orthant, &psi).unwrap();
        assert!(sol.pushing.values_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn path_coordinates_decouple_under_normal_reflection() {
        // First coordinate dips below zero, second stays interior: phi_1
        // matches the 1-D solver, phi_2 is untouched.
        let orthant = PolyhedralDomain::orthant_normal(2);
        let n = 200;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let first: Vec<f64> = (0..n).map(|k| (k as f64 * 0.1).cos() - 1.0).collect();
        let vals: Vec<f64> = first.iter().flat_map(|&v| [v, 1.0]).collect();
        let psi2 = DiscretePath::new(times.clone(), vals, 2).unwrap();
        let sol2 = solve_sp_path(&orthant, &psi2).unwrap();

        let psi1 = path1(times, first);
        let sol1 = solve_sp_1d(&psi1).unwrap();
        for k in 0..n {
            assert!((sol2.constrained.value(k)[0] - sol1.constrained.value(k)[0]).abs() < 1e-10);
            assert!((sol2.constrained.value(k)[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn esp_invariants_hold_on_solver_output() {
        let oblique = PolyhedralDomain::orthant(&[vec![1.0, -0.5], vec![-0.3, 1.0]]).unwrap();
        let mut stream = PathStream::new(21, 0);
        let n = 500;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.01).collect();
        let mut vals = Vec::with_capacity(2 * n);
        let mut x = [0.5, 0.5];
        for _ in 0..n {
            vals.extend_from_slice(&x);
            x[0] += 0.08 * stream.normal();
            x[1] += 0.08 * stream.normal();
        }
        let psi = DiscretePath::new(times, vals, 2).unwrap();
        let sol = solve_sp_path(&oblique, &psi).unwrap();

        let faces = oblique.faces();
        let mut cumulative = [0.0; 2];
        for k in 0..n {
            // phi = psi + eta at every grid point.
            for d in 0..2 {
                let lhs = sol.constrained.value(k)[d];
                let rhs = psi.value(k)[d] + sol.pushing.value(k)[d];
                assert!((lhs - rhs).abs() < 1e-9, "decomposition at step {k}");
            }
            // phi inside the closed domain.
            assert!(oblique.contains(sol.constrained.value(k)), "containment at step {k}");
            // Local times are nonnegative, complementary, and cumulative
            // local time per face never decreases.
            for (i, face) in faces.iter().enumerate() {
                let li = sol.local_time_increment(k, i);
                assert!(li >= 0.0);
                if li > 1e-12 {
                    let s = face.slack(sol.constrained.value(k));
                    assert!(
                        li * s.max(0.0) <= 1e-9,
                        "complementarity at step {k}, face {i}: l = {li:.3e}, slack = {s:.3e}"
                    );
                }
                cumulative[i] += li;
                assert!(cumulative[i] >= 0.0);
            }
        }
    }

    #[test]
    fn hull_property_examples() {
        let orthant = PolyhedralDomain::orthant_normal(2);
        let times: Vec<f64> = (0..5).map(|k| k as f64).collect();
        // Interior path, constant eta: holds.
        let phi =
            DiscretePath::new(times.clone(), times.iter().flat_map(|_| [1.0, 1.0]).collect(), 2)
                .unwrap();
        let eta = DiscretePath::new(times.clone(), vec![0.0; 10], 2).unwrap();
        assert!(verify_hull_property(&orthant, &phi, &eta, (0, 4), 1e-9).unwrap());

        // Interior path with moving eta: violated.
        let eta_moving = DiscretePath::new(
            times.clone(),
            (0..5).flat_map(|k| [0.1 * k as f64, 0.0]).collect(),
            2,
        )
        .unwrap();
        assert!(!verify_hull_property(&orthant, &phi, &eta_moving, (0, 4), 1e-9).unwrap());

        // Grid mismatch is reported.
        let other = DiscretePath::new(vec![0.0, 1.5, 2.0, 3.0, 4.0], vec![0.0; 10], 2).unwrap();
        assert!(matches!(
            verify_hull_property(&orthant, &phi, &other, (0, 4), 1e-9),
            Err(SolveError::GridMismatch)
        ));
    }

    #[test]
    fn hull_property_holds_on_solver_windows() {
        let oblique = PolyhedralDomain::orthant(&[vec![1.0, -0.4], vec![-0.2, 1.0]]).unwrap();
        let mut stream = PathStream::new(33, 0);
        let n = 300;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.01).collect();
        let mut vals = Vec::with_capacity(2 * n);
        let mut x = [0.2, 0.2];
        for _ in 0..n {
            vals.extend_from_slice(&x);
            x[0] += 0.1 * stream.normal();
            x[1] += 0.1 * stream.normal();
        }
        let psi = DiscretePath::new(times, vals, 2).unwrap();
        let sol = solve_sp_path(&oblique, &psi).unwrap();
        for _ in 0..100 {
            let s = (stream.uniform() * (n - 2) as f64) as usize;
            let span = 1 + (stream.uniform() * (n - s - 2) as f64) as usize;
            let ok = verify_hull_property(
                &oblique,
                &sol.constrained,
                &sol.pushing,
                (s, s + span),
                1e-7,
            )
            .unwrap();
            assert!(ok, "window ({s}, {})", s + span);
        }
    }

    #[test]
    fn grid_refinement_stability() {
        // Same continuous input sampled at h and h/2: the error against a
        // much finer reference solve shrinks under refinement.
        let half = PolyhedralDomain::half_line();
        let f = |t: f64| (3.0 * t).sin() - 0.5 * t;
        let sup_err = |n: usize| -> f64 {
            let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64 * 4.0).collect();
            let vals: Vec<f64> = times.iter().map(|&t| f(t)).collect();
            let sol = solve_sp_path(&half, &path1(times, vals)).unwrap();
            let fine = 16 * n;
            let ft: Vec<f64> = (0..=fine).map(|k| k as f64 / fine as f64 * 4.0).collect();
            let fv: Vec<f64> = ft.iter().map(|&t| f(t)).collect();
            let fine_sol = solve_sp_1d(&path1(ft, fv)).unwrap();
            (0..=n)
                .map(|k| {
                    let t = k as f64 / n as f64 * 4.0;
                    let kf = fine_sol.constrained.index_at(t + 1e-12);
                    (sol.constrained.value(k)[0] - fine_sol.constrained.value(kf)[0]).abs()
                })
                .fold(0.0, f64::max)
        };
        let e1 = sup_err(200);
        let e2 = sup_err(400);
        assert!(e2 < e1, "refinement should reduce the error: {e1} -> {e2}");
    }
}
