//! Convex polyhedral domains with piecewise-constant oblique reflection.
//!
//! A domain is an intersection of open half-spaces, one unit inward normal
//! and one unit reflection direction per face. This module answers every
//! cone and face query the rest of the crate needs: active sets, direction
//! cones, the U/V boundary classification, the generalized completely-S
//! audit over face strata, and metric projection onto finitely generated
//! cones.

use crate::linalg::{self, dot, norm, Mat};
use crate::lp::{self, LpOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default relative band within which a face counts as active.
pub const DEFAULT_FACE_TOLERANCE: f64 = 1e-9;
/// LP optimum above which the strict inequality of the U definition is
/// considered satisfied.
pub const DEFAULT_LP_STRICT_TOL: f64 = 1e-10;
/// Inactive faces must clear this (scaled) slack for a stratum
/// representative to count as relative-interior.
const STRATUM_MARGIN: f64 = 1e-6;
/// Face-count cap for the completely-S strata enumeration.
pub const MAX_COMPLETELY_S_FACES: usize = 16;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("face {index}: {msg}")]
    BadFace { index: usize, msg: String },
    #[error("face dimension mismatch: face {index} has dimension {found}, domain has {expected}")]
    DimensionMismatch { index: usize, found: usize, expected: usize },
    #[error("half-space intersection has empty interior")]
    EmptyDomain,
    #[error("face {index} is redundant: its plane never touches the domain closure")]
    RedundantFace { index: usize },
    #[error("point lies outside the domain: face {face} slack {slack:.3e}")]
    PointOutsideDomain { face: usize, slack: f64 },
    #[error("LP solver failed to converge ({context})")]
    LpNumericalFailure { context: String },
    #[error("completely-S audit supports at most {MAX_COMPLETELY_S_FACES} faces, domain has {count}")]
    TooManyFaces { count: usize },
    #[error("point dimension {found} does not match domain dimension {expected}")]
    PointDimension { found: usize, expected: usize },
}

/// One boundary face: the plane {x : <normal, x> = offset}, with the domain
/// on the side <normal, x> > offset, and a unit oblique reflection direction
/// satisfying <normal, direction> > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    normal: Vec<f64>,
    offset: f64,
    direction: Vec<f64>,
}

impl Face {
    /// Builds a face, normalizing both vectors (the offset rescales with the
    /// normal). Returns the face and whether either input needed
    /// normalization beyond 1e-12.
    pub fn new(
        normal: Vec<f64>,
        offset: f64,
        direction: Vec<f64>,
    ) -> Result<(Face, bool), GeometryError> {
        let bad = |msg: &str| GeometryError::BadFace { index: usize::MAX, msg: msg.into() };
        if normal.len() != direction.len() {
            return Err(bad("normal and direction dimensions differ"));
        }
        if normal.iter().chain(&direction).any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(bad("non-finite entries"));
        }
        let nn = norm(&normal);
        let nd = norm(&direction);
        if nn < 1e-12 || nd < 1e-12 {
            return Err(bad("zero normal or direction"));
        }
        let was_scaled = (nn - 1.0).abs() > 1e-12 || (nd - 1.0).abs() > 1e-12;
        let normal: Vec<f64> = normal.iter().map(|v| v / nn).collect();
        let direction: Vec<f64> = direction.iter().map(|v| v / nd).collect();
        let offset = offset / nn;
        if dot(&normal, &direction) <= 0.0 {
            return Err(bad("<normal, direction> must be strictly positive"));
        }
        Ok((Face { normal, offset, direction }, was_scaled))
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// Signed distance of x to the face plane; nonnegative inside the domain.
    #[inline]
    pub fn slack(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }
}

/// Finitely generated convex cone with vertex at the origin. An empty
/// generator list is the trivial cone {0}.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cone {
    generators: Vec<Vec<f64>>,
}

impl Cone {
    pub fn new(generators: Vec<Vec<f64>>) -> Self {
        Cone { generators }
    }

    pub fn trivial() -> Self {
        Cone { generators: Vec::new() }
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    pub fn is_trivial(&self) -> bool {
        self.generators.is_empty()
    }

    /// Metric projection of y onto the cone, solved as nonnegative least
    /// squares over the generator weights.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        self.project_with_weights(y).0
    }

    /// Projection together with one set of nonnegative generator weights
    /// realizing it.
    pub fn project_with_weights(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.generators.len();
        if m == 0 {
            return (vec![0.0; y.len()], Vec::new());
        }
        let w = nnls_weights(&self.generators, y);
        let mut p = vec![0.0; y.len()];
        for (wi, g) in w.iter().zip(&self.generators) {
            linalg::axpy(&mut p, *wi, g);
        }
        (p, w)
    }

    /// True when the projection of y is within `tol` of y itself.
    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        let p = self.project(y);
        norm(&linalg::sub(y, &p)) <= tol
    }
}

/// Active-set nonnegative least squares: minimize |sum_i w_i g_i - y| over
/// w >= 0. Lawson-Hanson on the normal equations; the systems here have at
/// most a few dozen generators.
fn nnls_weights(generators: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let m = generators.len();
    let gram = {
        let mut g = Mat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                g[(i, j)] = dot(&generators[i], &generators[j]);
            }
        }
        g
    };
    let gy: Vec<f64> = generators.iter().map(|g| dot(g, y)).collect();
    let scale = 1.0 + norm(y);
    let tol = 1e-12 * scale;

    let mut w = vec![0.0; m];
    let mut passive = vec![false; m];
    let max_outer = 3 * m + 10;
    for _ in 0..max_outer {
        // Gradient of 0.5 |Gw - y|^2 is Gram w - gy; the most positive
        // entry of (gy - Gram w) over the active set is freed next.
        let mut grad = gy.clone();
        for i in 0..m {
            if w[i] != 0.0 {
                for j in 0..m {
                    grad[j] -= gram[(j, i)] * w[i];
                }
            }
        }
        let mut best = tol;
        let mut pick = None;
        for i in 0..m {
            if !passive[i] && grad[i] > best {
                best = grad[i];
                pick = Some(i);
            }
        }
        let Some(pick) = pick else {
            return w;
        };
        passive[pick] = true;

        // Inner loop: solve unconstrained on the passive set, clip back
        // until the passive solution is feasible.
        for _ in 0..max_outer {
            let idx: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
            let k = idx.len();
            let mut a = Mat::zeros(k, k);
            let mut b = vec![0.0; k];
            for (r, &i) in idx.iter().enumerate() {
                b[r] = gy[i];
                for (c, &j) in idx.iter().enumerate() {
                    a[(r, c)] = gram[(i, j)];
                }
            }
            let sol = linalg::solve(&a, &b).or_else(|| {
                let mut reg = a.clone();
                for d in 0..k {
                    reg[(d, d)] += 1e-12 * (1.0 + reg[(d, d)].abs());
                }
                linalg::solve(&reg, &b)
            });
            let Some(z) = sol else {
                passive[pick] = false;
                break;
            };
            if z.iter().all(|&v| v > 0.0) {
                for (r, &i) in idx.iter().enumerate() {
                    w[i] = z[r];
                }
                break;
            }
            // Step from w toward z, stopping at the first zero crossing.
            let mut alpha = 1.0f64;
            for (r, &i) in idx.iter().enumerate() {
                if z[r] <= 0.0 && w[i] - z[r] > 0.0 {
                    alpha = alpha.min(w[i] / (w[i] - z[r]));
                }
            }
            for (r, &i) in idx.iter().enumerate() {
                w[i] += alpha * (z[r] - w[i]);
                if w[i] <= tol {
                    w[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryClassification {
    /// Point lies in the open domain.
    Interior,
    /// Boundary point where some inward normal has strictly positive inner
    /// product with every nonzero allowed direction.
    InteriorU,
    /// Boundary point in the complement V, where no such normal exists.
    InV,
}

/// Classification plus the LP evidence backing it.
#[derive(Debug, Clone)]
pub struct ClassifiedPoint {
    pub class: BoundaryClassification,
    pub active: Vec<usize>,
    /// Certificate normal (convex combination of active normals) when the
    /// point is in U.
    pub certificate: Option<Vec<f64>>,
    /// LP optimum: best achievable min_j <n, d^j> over the active set.
    pub margin: f64,
}

/// Outcome of the completely-S audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompletelySVerdict {
    CompletelyS { strata_checked: usize },
    /// The smallest face set whose stratum classifies InV.
    NotCompletelyS { witness: Vec<usize> },
}

impl CompletelySVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, CompletelySVerdict::CompletelyS { .. })
    }
}

/// JSON-compatible domain description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dimension: usize,
    pub faces: Vec<FaceSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaceSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub direction: Vec<f64>,
}

/// Convex polyhedral domain with one oblique reflection direction per face.
///
/// Immutable after construction; construction certifies a nonempty interior
/// and rejects redundant faces. All operations are pure, so values are safe
/// to share across workers.
#[derive(Debug, Clone)]
pub struct PolyhedralDomain {
    dimension: usize,
    faces: Vec<Face>,
    face_tolerance: f64,
    lp_strict_tol: f64,
    interior_point: Vec<f64>,
}

impl PolyhedralDomain {
    pub fn new(dimension: usize, faces: Vec<Face>) -> Result<Self, GeometryError> {
        Self::with_tolerances(dimension, faces, DEFAULT_FACE_TOLERANCE, DEFAULT_LP_STRICT_TOL)
    }

    pub fn with_tolerances(
        dimension: usize,
        faces: Vec<Face>,
        face_tolerance: f64,
        lp_strict_tol: f64,
    ) -> Result<Self, GeometryError> {
        assert!(face_tolerance > 0.0, "face tolerance must be positive");
        for (index, f) in faces.iter().enumerate() {
            if f.normal.len() != dimension {
                return Err(GeometryError::DimensionMismatch {
                    index,
                    found: f.normal.len(),
                    expected: dimension,
                });
            }
        }
        let mut domain = PolyhedralDomain {
            dimension,
            faces,
            face_tolerance,
            lp_strict_tol,
            interior_point: vec![0.0; dimension],
        };
        domain.interior_point =
            domain.stratum_representative(&[])?.ok_or(GeometryError::EmptyDomain)?;
        for index in 0..domain.faces.len() {
            if domain.face_is_redundant(index)? {
                return Err(GeometryError::RedundantFace { index });
            }
        }
        Ok(domain)
    }

    /// Loads a domain from its JSON-compatible description, normalizing
    /// vectors. The second return lists normalization warnings.
    pub fn from_spec(spec: &DomainSpec) -> Result<(Self, Vec<String>), GeometryError> {
        let mut faces = Vec::with_capacity(spec.faces.len());
        let mut warnings = Vec::new();
        for (i, fs) in spec.faces.iter().enumerate() {
            let (face, scaled) = Face::new(fs.normal.clone(), fs.offset, fs.direction.clone())
                .map_err(|e| match e {
                    GeometryError::BadFace { msg, .. } => GeometryError::BadFace { index: i, msg },
                    other => other,
                })?;
            if scaled {
                warnings.push(format!("face {i}: input vectors were not unit length; normalized"));
            }
            faces.push(face);
        }
        Ok((Self::new(spec.dimension, faces)?, warnings))
    }

    pub fn to_spec(&self) -> DomainSpec {
        DomainSpec {
            dimension: self.dimension,
            faces: self
                .faces
                .iter()
                .map(|f| FaceSpec {
                    normal: f.normal.clone(),
                    offset: f.offset,
                    direction: f.direction.clone(),
                })
                .collect(),
        }
    }

    /// Nonnegative orthant in R^J with reflection direction `columns[j]` on
    /// the face {x_j = 0}. Columns need not be unit length.
    pub fn orthant(columns: &[Vec<f64>]) -> Result<Self, GeometryError> {
        let j = columns.len();
        let mut faces = Vec::with_capacity(j);
        for (i, col) in columns.iter().enumerate() {
            let mut normal = vec![0.0; j];
            normal[i] = 1.0;
            let (face, _) = Face::new(normal, 0.0, col.clone())?;
            faces.push(face);
        }
        Self::new(j, faces)
    }

    /// Orthant with normal reflection (identity direction matrix).
    pub fn orthant_normal(dimension: usize) -> Self {
        let cols: Vec<Vec<f64>> = (0..dimension)
            .map(|i| {
                let mut e = vec![0.0; dimension];
                e[i] = 1.0;
                e
            })
            .collect();
        Self::orthant(&cols).expect("identity orthant is always valid")
    }

    /// The half-line [0, infinity) with unit reflection.
    pub fn half_line() -> Self {
        Self::orthant_normal(1)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face_tolerance(&self) -> f64 {
        self.face_tolerance
    }

    pub fn interior_point(&self) -> &[f64] {
        &self.interior_point
    }

    /// Activation band at x: relative version of the face tolerance.
    #[inline]
    pub fn tolerance_at(&self, x: &[f64]) -> f64 {
        self.face_tolerance * (1.0 + norm(x))
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.dimension {
            return Err(GeometryError::PointDimension {
                found: x.len(),
                expected: self.dimension,
            });
        }
        Ok(())
    }

    /// Distance to the boundary from inside: the smallest face slack.
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        self.faces.iter().map(|f| f.slack(x)).fold(f64::INFINITY, f64::min)
    }

    /// True when x lies in the closed domain (within the activation band).
    pub fn contains(&self, x: &[f64]) -> bool {
        let tol = self.tolerance_at(x);
        self.faces.iter().all(|f| f.slack(x) >= -tol)
    }

    /// Indices of all faces whose plane passes within the activation band of
    /// x. Empty means interior. Errors when x lies outside the closed domain.
    pub fn active_faces(&self, x: &[f64]) -> Result<Vec<usize>, GeometryError> {
        self.check_dim(x)?;
        let tol = self.tolerance_at(x);
        let mut active = Vec::new();
        for (i, f) in self.faces.iter().enumerate() {
            let s = f.slack(x);
            if s < -tol {
                return Err(GeometryError::PointOutsideDomain { face: i, slack: s });
            }
            if s <= tol {
                active.push(i);
            }
        }
        Ok(active)
    }

    /// Faces whose plane passes within `tol` of x, with no outside guard.
    /// Used by verifiers that must tolerate escaped candidate paths.
    pub fn faces_near(&self, x: &[f64], tol: f64) -> Vec<usize> {
        self.faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.slack(x).abs() <= tol)
            .map(|(i, _)| i)
            .collect()
    }

    /// The cone of allowed constraining directions at x: generated by the
    /// directions of the active faces, trivial for interior points.
    pub fn direction_cone(&self, x: &[f64]) -> Result<Cone, GeometryError> {
        let active = self.active_faces(x)?;
        Ok(Cone::new(active.iter().map(|&i| self.faces[i].direction.clone()).collect()))
    }

    /// U/V classification of a point of the closed domain.
    ///
    /// The point is in U exactly when some convex combination n of the
    /// active normals satisfies <n, d^j> > 0 for every active direction;
    /// positivity on the generators extends to the whole direction cone
    /// because the cone is finitely generated. The search over combinations
    /// is the small matrix game solved in [`lp::simplex_game`].
    pub fn classify_boundary_point(
        &self,
        x: &[f64],
    ) -> Result<BoundaryClassification, GeometryError> {
        Ok(self.classify_detailed(x)?.class)
    }

    /// Classification plus the certificate normal and LP margin.
    pub fn classify_detailed(&self, x: &[f64]) -> Result<ClassifiedPoint, GeometryError> {
        let active = self.active_faces(x)?;
        if active.is_empty() {
            return Ok(ClassifiedPoint {
                class: BoundaryClassification::Interior,
                active,
                certificate: None,
                margin: f64::INFINITY,
            });
        }
        let (margin, weights) = self.u_margin(&active)?;
        if margin > self.lp_strict_tol {
            let mut n = vec![0.0; self.dimension];
            for (w, &i) in weights.iter().zip(&active) {
                linalg::axpy(&mut n, *w, &self.faces[i].normal);
            }
            Ok(ClassifiedPoint {
                class: BoundaryClassification::InteriorU,
                active,
                certificate: Some(n),
                margin,
            })
        } else {
            Ok(ClassifiedPoint {
                class: BoundaryClassification::InV,
                active,
                certificate: None,
                margin,
            })
        }
    }

    /// Best achievable min_j <n, d^j> over convex combinations n of the
    /// normals indexed by `face_set`, with the optimal weights.
    pub fn u_margin(&self, face_set: &[usize]) -> Result<(f64, Vec<f64>), GeometryError> {
        let m = face_set.len();
        assert!(m > 0);
        let mut b = Mat::zeros(m, m);
        for (r, &j) in face_set.iter().enumerate() {
            for (c, &i) in face_set.iter().enumerate() {
                b[(r, c)] = dot(&self.faces[j].direction, &self.faces[i].normal);
            }
        }
        let game = lp::simplex_game(&b).map_err(|e| GeometryError::LpNumericalFailure {
            context: format!("U classification over faces {face_set:?}: {e}"),
        })?;
        Ok((game.value, game.weights))
    }

    /// Runs the U/V classification on a relative-interior representative of
    /// every nonempty face-intersection stratum. The domain is completely-S
    /// (equivalently, V is empty) when every stratum classifies InteriorU.
    pub fn is_completely_s(&self) -> Result<CompletelySVerdict, GeometryError> {
        let f = self.faces.len();
        if f > MAX_COMPLETELY_S_FACES {
            return Err(GeometryError::TooManyFaces { count: f });
        }
        let mut checked = 0usize;
        for subset in subsets_by_cardinality(f) {
            if self.stratum_representative(&subset)?.is_none() {
                continue;
            }
            checked += 1;
            let (margin, _) = self.u_margin(&subset).map_err(|e| match e {
                GeometryError::LpNumericalFailure { context } => {
                    GeometryError::LpNumericalFailure {
                        context: format!("stratum {subset:?}: {context}"),
                    }
                }
                other => other,
            })?;
            if margin <= self.lp_strict_tol {
                return Ok(CompletelySVerdict::NotCompletelyS { witness: subset });
            }
        }
        Ok(CompletelySVerdict::CompletelyS { strata_checked: checked })
    }

    /// All face sets whose stratum is nonempty and classifies InV.
    pub fn v_strata(&self) -> Result<Vec<Vec<usize>>, GeometryError> {
        let f = self.faces.len();
        if f > MAX_COMPLETELY_S_FACES {
            return Err(GeometryError::TooManyFaces { count: f });
        }
        let mut out = Vec::new();
        for subset in subsets_by_cardinality(f) {
            if self.stratum_representative(&subset)?.is_none() {
                continue;
            }
            let (margin, _) = self.u_margin(&subset)?;
            if margin <= self.lp_strict_tol {
                out.push(subset);
            }
        }
        Ok(out)
    }

    /// A point with the faces in `subset` active and strictly positive slack
    /// on every other face, or `None` when no such point exists (the
    /// stratum's relative interior is empty). An empty `subset` produces an
    /// interior point.
    pub fn stratum_representative(
        &self,
        subset: &[usize],
    ) -> Result<Option<Vec<f64>>, GeometryError> {
        let j_dim = self.dimension;
        let others: Vec<usize> = (0..self.faces.len()).filter(|i| !subset.contains(i)).collect();
        let scale = 1.0 + self.faces.iter().map(|f| f.offset.abs()).fold(0.0, f64::max);
        let margin = STRATUM_MARGIN * scale;

        let (x0, basis) = if subset.is_empty() {
            (vec![0.0; j_dim], Mat::identity(j_dim))
        } else {
            let rows: Vec<Vec<f64>> = subset.iter().map(|&i| self.faces[i].normal.clone()).collect();
            let n_mat = Mat::from_rows(&rows);
            let c: Vec<f64> = subset.iter().map(|&i| self.faces[i].offset).collect();
            let Some(x0) = linalg::min_norm_solution(&n_mat, &c, 1e-9 * scale) else {
                return Ok(None); // inconsistent equalities: empty stratum
            };
            (x0, linalg::null_space(&n_mat))
        };
        let free = basis.cols;

        if others.is_empty() {
            return Ok(Some(x0));
        }
        if free == 0 {
            let ok = others.iter().all(|&jf| self.faces[jf].slack(&x0) > margin);
            return Ok(if ok { Some(x0) } else { None });
        }

        // Maximize t subject to slack_j(x0 + basis y) >= t on the other
        // faces and t <= scale, with y free (split into y+ - y-).
        let nvars = 2 * free + 2;
        let mut rows = Vec::with_capacity(others.len() + 1);
        let mut b = Vec::with_capacity(others.len() + 1);
        for &jf in &others {
            let nz: Vec<f64> = (0..free)
                .map(|k| (0..j_dim).map(|d| self.faces[jf].normal[d] * basis[(d, k)]).sum())
                .collect();
            let mut row = vec![0.0; nvars];
            for k in 0..free {
                row[k] = -nz[k];
                row[free + k] = nz[k];
            }
            row[2 * free] = 1.0;
            row[2 * free + 1] = -1.0;
            rows.push(row);
            b.push(self.faces[jf].slack(&x0));
        }
        let mut cap_row = vec![0.0; nvars];
        cap_row[2 * free] = 1.0;
        cap_row[2 * free + 1] = -1.0;
        rows.push(cap_row);
        b.push(scale);
        let mut c = vec![0.0; nvars];
        c[2 * free] = 1.0;
        c[2 * free + 1] = -1.0;

        let outcome = lp::solve_canonical(&c, &Mat::from_rows(&rows), &b).map_err(|e| {
            GeometryError::LpNumericalFailure {
                context: format!("stratum {subset:?} representative: {e}"),
            }
        })?;
        let sol = match outcome {
            LpOutcome::Optimal(sol) => sol,
            _ => {
                return Err(GeometryError::LpNumericalFailure {
                    context: format!("stratum {subset:?} representative LP degenerate"),
                })
            }
        };
        if sol.value <= margin {
            return Ok(None);
        }
        let mut x = x0;
        for k in 0..free {
            let yk = sol.x[k] - sol.x[free + k];
            for d in 0..j_dim {
                x[d] += basis[(d, k)] * yk;
            }
        }
        // Direct re-verification of the representative.
        let tol = self.tolerance_at(&x).max(1e-9 * scale);
        for &i in subset {
            if self.faces[i].slack(&x).abs() > tol {
                return Err(GeometryError::LpNumericalFailure {
                    context: format!("stratum {subset:?}: representative drifted off the stratum"),
                });
            }
        }
        if others.iter().any(|&jf| self.faces[jf].slack(&x) <= margin * 0.5) {
            return Ok(None);
        }
        Ok(Some(x))
    }

    /// True when the face plane never touches the domain closure.
    fn face_is_redundant(&self, index: usize) -> Result<bool, GeometryError> {
        let j_dim = self.dimension;
        let nvars = 2 * j_dim;
        let mut rows = Vec::with_capacity(self.faces.len());
        let mut b = Vec::with_capacity(self.faces.len());
        for f in &self.faces {
            let mut row = vec![0.0; nvars];
            for d in 0..j_dim {
                row[d] = -f.normal[d];
                row[j_dim + d] = f.normal[d];
            }
            rows.push(row);
            b.push(-f.offset);
        }
        // Maximize -<n_i, x>: min slack over the closure is
        // -(optimal value) - offset_i.
        let target = &self.faces[index];
        let mut c = vec![0.0; nvars];
        for d in 0..j_dim {
            c[d] = -target.normal[d];
            c[j_dim + d] = target.normal[d];
        }
        let outcome = lp::solve_canonical(&c, &Mat::from_rows(&rows), &b).map_err(|e| {
            GeometryError::LpNumericalFailure {
                context: format!("redundancy check for face {index}: {e}"),
            }
        })?;
        match outcome {
            LpOutcome::Optimal(sol) => {
                let min_slack = -sol.value - target.offset;
                let scale = 1.0 + target.offset.abs();
                Ok(min_slack > 1e-7 * scale)
            }
            LpOutcome::Unbounded => Ok(false), // slack shrinks without bound
            LpOutcome::Infeasible => Err(GeometryError::EmptyDomain),
        }
    }
}

/// All nonempty subsets of {0..n}, ordered by cardinality then
/// lexicographically, as index lists. The completely-S witness search
/// depends on this order.
fn subsets_by_cardinality(n: usize) -> Vec<Vec<usize>> {
    let mut masks: Vec<u32> = (1..(1u32 << n)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
        .into_iter()
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthant_oblique(c: f64) -> PolyhedralDomain {
        // Classic 2-D example: d^1 = (1, -c), d^2 = (-c, 1) before
        // normalization; completely-S exactly when c < 1.
        PolyhedralDomain::orthant(&[vec![1.0, -c], vec![-c, 1.0]]).unwrap()
    }

    #[test]
    fn face_normalization_rescales_offset() {
        let (f, scaled) = Face::new(vec![2.0, 0.0], 4.0, vec![3.0, 3.0]).unwrap();
        assert!(scaled);
        assert!((f.normal()[0] - 1.0).abs() < 1e-15);
        assert!((f.offset() - 2.0).abs() < 1e-15);
        assert!((norm(f.direction()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn face_rejects_bad_inputs() {
        assert!(Face::new(vec![1.0, 0.0], 0.0, vec![-1.0, 0.5]).is_err());
        assert!(Face::new(vec![1.0], 0.0, vec![0.0]).is_err());
        assert!(Face::new(vec![1.0, 0.0], f64::NAN, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn active_faces_examples() {
        let half = PolyhedralDomain::half_line();
        assert_eq!(half.active_faces(&[0.0]).unwrap(), vec![0]);

        let orthant = PolyhedralDomain::orthant_normal(2);
        assert!(orthant.active_faces(&[1.0, 1.0]).unwrap().is_empty());
        assert_eq!(orthant.active_faces(&[0.0, 0.0]).unwrap(), vec![0, 1]);
        assert!(matches!(
            orthant.active_faces(&[-1.0, 0.5]),
            Err(GeometryError::PointOutsideDomain { face: 0, .. })
        ));
    }

    #[test]
    fn active_faces_monotone_under_incidence() {
        // Moving a point onto additional faces only grows the active set.
        let orthant = PolyhedralDomain::orthant_normal(3);
        let a = orthant.active_faces(&[0.0, 2.0, 3.0]).unwrap();
        let b = orthant.active_faces(&[0.0, 0.0, 3.0]).unwrap();
        let c = orthant.active_faces(&[0.0, 0.0, 0.0]).unwrap();
        assert!(a.iter().all(|i| b.contains(i)));
        assert!(b.iter().all(|i| c.contains(i)));
    }

    #[test]
    fn direction_cone_examples() {
        let orthant = PolyhedralDomain::orthant_normal(2);
        let cone = orthant.direction_cone(&[0.0, 2.0]).unwrap();
        assert_eq!(cone.generators(), &[vec![1.0, 0.0]]);
        assert!(orthant.direction_cone(&[0.5, 2.0]).unwrap().is_trivial());

        let oblique = PolyhedralDomain::orthant(&[vec![1.0, -0.6], vec![-0.6, 1.0]]).unwrap();
        let corner = oblique.direction_cone(&[0.0, 0.0]).unwrap();
        assert_eq!(corner.generators().len(), 2);
    }

    #[test]
    fn classify_half_line_is_u() {
        let half = PolyhedralDomain::half_line();
        assert_eq!(
            half.classify_boundary_point(&[0.0]).unwrap(),
            BoundaryClassification::InteriorU
        );
        assert_eq!(
            half.classify_boundary_point(&[3.0]).unwrap(),
            BoundaryClassification::Interior
        );
    }

    /// Brute-force oracle for the U condition at the 2-D orthant corner:
    /// grid over the simplex of normal weights, checking the worst direction.
    fn corner_margin_oracle(domain: &PolyhedralDomain, grid: usize) -> f64 {
        let faces = domain.faces();
        let mut best = f64::NEG_INFINITY;
        for k in 0..=grid {
            let s = k as f64 / grid as f64;
            let weights = [s, 1.0 - s];
            let mut n = vec![0.0; 2];
            for (w, f) in weights.iter().zip(faces) {
                linalg::axpy(&mut n, *w, f.normal());
            }
            let worst = faces
                .iter()
                .map(|f| dot(&n, f.direction()))
                .fold(f64::INFINITY, f64::min);
            best = best.max(worst);
        }
        best
    }

    #[test]
    fn classify_oblique_corner_against_grid_oracle() {
        // c = 2: no convex combination of the normals works; c = 0.5 does.
        let steep = orthant_oblique(2.0);
        assert_eq!(
            steep.classify_boundary_point(&[0.0, 0.0]).unwrap(),
            BoundaryClassification::InV
        );
        assert!(corner_margin_oracle(&steep, 4000) < 0.0);

        let shallow = orthant_oblique(0.5);
        assert_eq!(
            shallow.classify_boundary_point(&[0.0, 0.0]).unwrap(),
            BoundaryClassification::InteriorU
        );
        assert!(corner_margin_oracle(&shallow, 4000) > 0.0);

        // The LP margin matches the grid oracle's optimum.
        let detail = shallow.classify_detailed(&[0.0, 0.0]).unwrap();
        assert!((detail.margin - corner_margin_oracle(&shallow, 4000)).abs() < 1e-3);
    }

    #[test]
    fn classify_scale_invariance() {
        // Positive rescaling of the raw direction vectors never changes the
        // verdict (they are normalized at construction).
        for c in [0.3, 0.9, 1.5, 3.0] {
            let base = PolyhedralDomain::orthant(&[vec![1.0, -c], vec![-c, 1.0]]).unwrap();
            let scaled =
                PolyhedralDomain::orthant(&[vec![7.5, -7.5 * c], vec![-0.02 * c, 0.02]]).unwrap();
            assert_eq!(
                base.classify_boundary_point(&[0.0, 0.0]).unwrap(),
                scaled.classify_boundary_point(&[0.0, 0.0]).unwrap(),
                "c = {c}"
            );
        }
    }

    #[test]
    fn completely_s_identity_orthants() {
        for j in 1..=4 {
            let d = PolyhedralDomain::orthant_normal(j);
            assert!(d.is_completely_s().unwrap().holds(), "J = {j}");
        }
    }

    #[test]
    fn completely_s_counterexample_witness() {
        let verdict = orthant_oblique(2.0).is_completely_s().unwrap();
        assert_eq!(verdict, CompletelySVerdict::NotCompletelyS { witness: vec![0, 1] });
    }

    #[test]
    fn completely_s_perturbed_identity() {
        // I + 0.1 (ones - I) in 3-D: the all-ones vector certifies every
        // principal submatrix.
        let cols =
            vec![vec![1.0, 0.1, 0.1], vec![0.1, 1.0, 0.1], vec![0.1, 0.1, 1.0]];
        let d = PolyhedralDomain::orthant(&cols).unwrap();
        let verdict = d.is_completely_s().unwrap();
        assert_eq!(verdict, CompletelySVerdict::CompletelyS { strata_checked: 7 });
    }

    #[test]
    fn v_strata_lists_failing_sets() {
        let strata = orthant_oblique(2.0).v_strata().unwrap();
        assert_eq!(strata, vec![vec![0, 1]]);
        assert!(orthant_oblique(0.5).v_strata().unwrap().is_empty());
    }

    #[test]
    fn stratum_representative_in_relative_interior() {
        let orthant = PolyhedralDomain::orthant_normal(3);
        let rep = orthant.stratum_representative(&[1]).unwrap().unwrap();
        assert!(rep[1].abs() < 1e-9);
        assert!(rep[0] > 1e-3 && rep[2] > 1e-3);

        // Unit square: the stratum of face x = 0 is an edge.
        let spec = DomainSpec {
            dimension: 2,
            faces: vec![
                FaceSpec { normal: vec![1.0, 0.0], offset: 0.0, direction: vec![1.0, 0.0] },
                FaceSpec { normal: vec![0.0, 1.0], offset: 0.0, direction: vec![0.0, 1.0] },
                FaceSpec { normal: vec![-1.0, 0.0], offset: -1.0, direction: vec![-1.0, 0.0] },
                FaceSpec { normal: vec![0.0, -1.0], offset: -1.0, direction: vec![0.0, -1.0] },
            ],
        };
        let (boxd, warnings) = PolyhedralDomain::from_spec(&spec).unwrap();
        assert!(warnings.is_empty());
        let rep = boxd.stratum_representative(&[0]).unwrap().unwrap();
        assert!(rep[0].abs() < 1e-9);
        assert!(rep[1] > 1e-4 && rep[1] < 1.0);
        // Opposite faces never meet: empty stratum.
        assert!(boxd.stratum_representative(&[0, 2]).unwrap().is_none());
    }

    #[test]
    fn rejects_empty_and_redundant_domains() {
        // x >= 0 and x <= -1 is empty.
        let spec = DomainSpec {
            dimension: 1,
            faces: vec![
                FaceSpec { normal: vec![1.0], offset: 0.0, direction: vec![1.0] },
                FaceSpec { normal: vec![-1.0], offset: 1.0, direction: vec![-1.0] },
            ],
        };
        assert!(matches!(PolyhedralDomain::from_spec(&spec), Err(GeometryError::EmptyDomain)));

        // x >= 0 twice over: the copy at offset -1 never binds.
        let spec = DomainSpec {
            dimension: 1,
            faces: vec![
                FaceSpec { normal: vec![1.0], offset: 0.0, direction: vec![1.0] },
                FaceSpec { normal: vec![1.0], offset: -1.0, direction: vec![1.0] },
            ],
        };
        assert!(matches!(
            PolyhedralDomain::from_spec(&spec),
            Err(GeometryError::RedundantFace { index: 1 })
        ));
    }

    #[test]
    fn projection_examples() {
        let cone = Cone::new(vec![vec![1.0, 0.0]]);
        assert_eq!(cone.project(&[2.0, 3.0]), vec![2.0, 0.0]);

        let quarter = Cone::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(quarter.project(&[-1.0, -1.0]), vec![0.0, 0.0]);

        let wedge = Cone::new(vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        let p = wedge.project(&[0.0, 1.0]);
        assert!((p[0] - 0.5).abs() < 1e-9);
        assert!((p[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn projection_dense_grid_oracle() {
        // Independent check of the wedge example by scanning weights.
        let g1 = [1.0, 0.0];
        let g2 = [1.0, 1.0];
        let y = [0.0, 1.0];
        let mut best = (f64::INFINITY, vec![0.0, 0.0]);
        for a in 0..=400 {
            for b in 0..=400 {
                let (a, b) = (a as f64 * 0.005, b as f64 * 0.005);
                let p = [a * g1[0] + b * g2[0], a * g1[1] + b * g2[1]];
                let d2 = (p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2);
                if d2 < best.0 {
                    best = (d2, p.to_vec());
                }
            }
        }
        let cone = Cone::new(vec![g1.to_vec(), g2.to_vec()]);
        let p = cone.project(&y);
        assert!((p[0] - best.1[0]).abs() < 5e-3);
        assert!((p[1] - best.1[1]).abs() < 5e-3);
    }

    #[test]
    fn projection_kkt_conditions() {
        // p in cone, <y - p, g> <= 0 for every generator, <y - p, p> = 0.
        let gens = vec![
            vec![1.0, 0.2, -0.3],
            vec![0.0, 1.0, 0.5],
            vec![-0.4, 0.1, 1.0],
            vec![1.0, 1.0, 1.0],
        ];
        let cone = Cone::new(gens.clone());
        let mut stream = crate::rng::PathStream::new(5, 0);
        for _ in 0..200 {
            let y: Vec<f64> = (0..3).map(|_| 4.0 * stream.normal()).collect();
            let p = cone.project(&y);
            let r = linalg::sub(&y, &p);
            for g in &gens {
                assert!(dot(&r, g) <= 1e-9, "residual correlates with a generator");
            }
            assert!(dot(&r, &p).abs() <= 1e-8 * (1.0 + norm(&y)));
            assert!(cone.contains(&p, 1e-7));
        }
    }

    #[test]
    fn membership_examples() {
        let e1 = Cone::new(vec![vec![1.0, 0.0]]);
        assert!(e1.contains(&[1.0, 0.0], 1e-9));
        assert!(!e1.contains(&[0.0, 1.0], 1e-9));
        let wedge = Cone::new(vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert!(wedge.contains(&[2.0, 1.0], 1e-9));
        for g in wedge.generators() {
            assert!(wedge.contains(g, 1e-9));
        }
        let trivial = Cone::trivial();
        assert!(trivial.contains(&[0.0, 0.0], 1e-12));
        assert!(!trivial.contains(&[1e-3, 0.0], 1e-9));
    }

    #[test]
    fn spec_round_trip_and_normalization_warning() {
        let spec = DomainSpec {
            dimension: 2,
            faces: vec![FaceSpec {
                normal: vec![2.0, 0.0],
                offset: 0.0,
                direction: vec![3.0, 0.0],
            }],
        };
        let (d, warnings) = PolyhedralDomain::from_spec(&spec).unwrap();
        assert_eq!(warnings.len(), 1);
        let rt = d.to_spec();
        assert!((rt.faces[0].normal[0] - 1.0).abs() < 1e-15);
        let json = serde_json::to_string(&rt).unwrap();
        let back: DomainSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.dimension, 2);
    }
}
