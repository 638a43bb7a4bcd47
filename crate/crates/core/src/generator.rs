//! Drift/dispersion coefficients, the second-order operator L, and the
//! boundary-admissible test-function class.
//!
//! Test functions carry exact value/gradient/Hessian evaluators. Admissible
//! members have nonnegative oblique derivative along every reflection
//! direction on the boundary and are constant near the V set; the bump
//! construction below certifies those signs analytically for polyhedral
//! strata.

use crate::geometry::{BoundaryClassification, GeometryError, PolyhedralDomain};
use crate::linalg::{self, dot, norm, Mat};
use crate::rng::PathStream;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("oblique-derivative sign violated on faces {faces:?}")]
    ObliqueSignViolation { faces: Vec<usize> },
    #[error("bump center classifies InV")]
    CenterInV,
    #[error("bump center must lie on the boundary")]
    CenterNotOnBoundary,
    #[error("bump radius too large: {reason}")]
    RadiusTooLarge { reason: String },
    #[error("ellipticity floor violated at sampled point: v^T a v = {value:.3e} < {floor:.3e}")]
    EllipticityViolation { value: f64, floor: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coefficient spec invalid: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

type VecFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Drift b and dispersion sigma, evaluated into caller buffers so the
/// simulation loop stays allocation-free. Dispersion is row-major J x J.
#[derive(Clone)]
pub struct Coefficients {
    dim: usize,
    drift: VecFn,
    dispersion: VecFn,
    ellipticity_floor: f64,
}

impl Coefficients {
    pub fn new(dim: usize, drift: VecFn, dispersion: VecFn, ellipticity_floor: f64) -> Self {
        Coefficients { dim, drift, dispersion, ellipticity_floor }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ellipticity_floor(&self) -> f64 {
        self.ellipticity_floor
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out);
    }

    pub fn dispersion_into(&self, x: &[f64], out: &mut [f64]) {
        (self.dispersion)(x, out);
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        self.drift_into(x, &mut b);
        b
    }

    /// Diffusion matrix a = sigma sigma^T at x.
    pub fn diffusion(&self, x: &[f64]) -> Mat {
        let j = self.dim;
        let mut sig = vec![0.0; j * j];
        self.dispersion_into(x, &mut sig);
        let mut a = Mat::zeros(j, j);
        for r in 0..j {
            for c in 0..j {
                let mut s = 0.0;
                for k in 0..j {
                    s += sig[r * j + k] * sig[c * j + k];
                }
                a[(r, c)] = s;
            }
        }
        a
    }

    /// Spot check of uniform ellipticity: v^T a(x) v >= floor |v|^2 on
    /// sampled (x, v) pairs from the given box. Sampled, not proven.
    pub fn spot_check_ellipticity(
        &self,
        lo: &[f64],
        hi: &[f64],
        samples: usize,
        seed: u64,
    ) -> Result<(), GeneratorError> {
        let j = self.dim;
        let mut stream = PathStream::new(seed, 0);
        for _ in 0..samples {
            let x: Vec<f64> =
                (0..j).map(|d| lo[d] + (hi[d] - lo[d]) * stream.uniform()).collect();
            let mut v: Vec<f64> = (0..j).map(|_| stream.normal()).collect();
            let nv = norm(&v);
            if nv < 1e-12 {
                continue;
            }
            for vi in &mut v {
                *vi /= nv;
            }
            let a = self.diffusion(&x);
            let quad = dot(&v, &a.mul_vec(&v));
            if quad < self.ellipticity_floor {
                return Err(GeneratorError::EllipticityViolation {
                    value: quad,
                    floor: self.ellipticity_floor,
                });
            }
        }
        Ok(())
    }

    /// Constant drift and dispersion.
    pub fn constant(drift: Vec<f64>, sigma: Mat) -> Self {
        let dim = drift.len();
        assert_eq!(sigma.rows, dim);
        assert_eq!(sigma.cols, dim);
        let floor = default_floor(&sigma);
        let sig_data = sigma.data.clone();
        Coefficients::new(
            dim,
            Arc::new(move |_x, out| out.copy_from_slice(&drift)),
            Arc::new(move |_x, out| out.copy_from_slice(&sig_data)),
            floor,
        )
    }

    /// Scalar convenience: dX = b dt + sigma dW on the line.
    pub fn scalar(b: f64, sigma: f64) -> Self {
        Coefficients::constant(vec![b], Mat::from_rows(&[vec![sigma]]))
    }
}

fn default_floor(sigma: &Mat) -> f64 {
    // Conservative default: a fraction of the smallest diagonal of
    // sigma sigma^T, or zero for degenerate dispersion.
    let j = sigma.rows;
    let mut min_diag = f64::INFINITY;
    for r in 0..j {
        let mut s = 0.0;
        for k in 0..j {
            s += sigma[(r, k)] * sigma[(r, k)];
        }
        min_diag = min_diag.min(s);
    }
    if min_diag.is_finite() {
        (min_diag * 0.1).max(0.0)
    } else {
        0.0
    }
}

/// Named coefficient models addressable from run configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum CoefficientSpec {
    /// Constant drift vector and dispersion matrix.
    Constant { drift: Vec<f64>, sigma: Vec<Vec<f64>> },
    /// Linear drift -rate x with constant dispersion.
    Ou { rate: Vec<Vec<f64>>, sigma: Vec<Vec<f64>> },
    /// Constant drift with diagonal dispersion sigma_ii = alpha_i + beta_i x_i.
    StateDiag { drift: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64> },
}

impl CoefficientSpec {
    pub fn lower(&self, dim: usize) -> Result<Coefficients, GeneratorError> {
        let check = |found: usize| {
            if found != dim {
                Err(GeneratorError::DimensionMismatch { expected: dim, found })
            } else {
                Ok(())
            }
        };
        match self {
            CoefficientSpec::Constant { drift, sigma } => {
                check(drift.len())?;
                check(sigma.len())?;
                for row in sigma {
                    check(row.len())?;
                }
                Ok(Coefficients::constant(drift.clone(), Mat::from_rows(sigma)))
            }
            CoefficientSpec::Ou { rate, sigma } => {
                check(rate.len())?;
                for row in rate {
                    check(row.len())?;
                }
                check(sigma.len())?;
                for row in sigma {
                    check(row.len())?;
                }
                let rate = Mat::from_rows(rate);
                let sig = Mat::from_rows(sigma);
                let floor = default_floor(&sig);
                let sig_data = sig.data.clone();
                Ok(Coefficients::new(
                    dim,
                    Arc::new(move |x, out| {
                        for r in 0..dim {
                            out[r] = -dot(rate.row(r), x);
                        }
                    }),
                    Arc::new(move |_x, out| out.copy_from_slice(&sig_data)),
                    floor,
                ))
            }
            CoefficientSpec::StateDiag { drift, alpha, beta } => {
                check(drift.len())?;
                check(alpha.len())?;
                check(beta.len())?;
                let drift = drift.clone();
                let alpha = alpha.clone();
                let beta = beta.clone();
                let floor = alpha
                    .iter()
                    .map(|a| a * a * 0.1)
                    .fold(f64::INFINITY, f64::min)
                    .max(0.0);
                Ok(Coefficients::new(
                    dim,
                    Arc::new(move |_x, out| out.copy_from_slice(&drift)),
                    Arc::new(move |x, out| {
                        out.fill(0.0);
                        for d in 0..dim {
                            out[d * dim + d] = alpha[d] + beta[d] * x[d];
                        }
                    }),
                    floor,
                ))
            }
        }
    }
}

/// Named test-function constructions addressable from run configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunctionSpec {
    Linear { v: Vec<f64> },
    Bump { center: Vec<f64>, radius: f64, sign: f64 },
    Constant { c: f64 },
}

impl TestFunctionSpec {
    pub fn lower(&self, domain: &PolyhedralDomain) -> Result<TestFunction, GeneratorError> {
        match self {
            TestFunctionSpec::Linear { v } => make_linear_test_fn(domain, v),
            TestFunctionSpec::Bump { center, radius, sign } => {
                Ok(make_bump_test_fn(domain, center, *radius, *sign)?.f)
            }
            TestFunctionSpec::Constant { c } => Ok(TestFunction::constant(domain.dimension(), *c)),
        }
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Twice-differentiable test function with exact derivative evaluators.
#[derive(Clone)]
pub struct TestFunction {
    pub id: String,
    dim: usize,
    value: ScalarFn,
    gradient: VecFn,
    /// Row-major J x J Hessian.
    hessian: VecFn,
    /// Radius of the support ball (infinity for globally supported members).
    pub support_radius: f64,
    pub constant_near_v: bool,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("support_radius", &self.support_radius)
            .field("constant_near_v", &self.constant_near_v)
            .finish()
    }
}

impl TestFunction {
    pub fn from_parts(
        id: impl Into<String>,
        dim: usize,
        value: ScalarFn,
        gradient: VecFn,
        hessian: VecFn,
        support_radius: f64,
        constant_near_v: bool,
    ) -> Self {
        TestFunction {
            id: id.into(),
            dim,
            value,
            gradient,
            hessian,
            support_radius,
            constant_near_v,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out);
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    pub fn hessian_into(&self, x: &[f64], out: &mut [f64]) {
        (self.hessian)(x, out);
    }

    pub fn hessian(&self, x: &[f64]) -> Mat {
        let mut h = vec![0.0; self.dim * self.dim];
        self.hessian_into(x, &mut h);
        Mat { rows: self.dim, cols: self.dim, data: h }
    }

    /// Constant function (always admissible, generator annihilates it).
    pub fn constant(dim: usize, c: f64) -> Self {
        TestFunction::from_parts(
            format!("const({c})"),
            dim,
            Arc::new(move |_| c),
            Arc::new(|_, out| out.fill(0.0)),
            Arc::new(|_, out| out.fill(0.0)),
            f64::INFINITY,
            true,
        )
    }

    /// Pointwise scaling by `c`.
    pub fn scale(&self, c: f64) -> Self {
        let v = self.value.clone();
        let g = self.gradient.clone();
        let h = self.hessian.clone();
        TestFunction::from_parts(
            format!("{} * {c}", self.id),
            self.dim,
            Arc::new(move |x| c * v(x)),
            Arc::new(move |x, out| {
                g(x, out);
                for o in out.iter_mut() {
                    *o *= c;
                }
            }),
            Arc::new(move |x, out| {
                h(x, out);
                for o in out.iter_mut() {
                    *o *= c;
                }
            }),
            self.support_radius,
            self.constant_near_v,
        )
    }

    /// Pointwise sum.
    pub fn add(&self, other: &TestFunction) -> Self {
        assert_eq!(self.dim, other.dim);
        let (v1, v2) = (self.value.clone(), other.value.clone());
        let (g1, g2) = (self.gradient.clone(), other.gradient.clone());
        let (h1, h2) = (self.hessian.clone(), other.hessian.clone());
        let dim = self.dim;
        TestFunction::from_parts(
            format!("{} + {}", self.id, other.id),
            dim,
            Arc::new(move |x| v1(x) + v2(x)),
            Arc::new(move |x, out| {
                g1(x, out);
                let mut tmp = vec![0.0; dim];
                g2(x, &mut tmp);
                for (o, t) in out.iter_mut().zip(&tmp) {
                    *o += t;
                }
            }),
            Arc::new(move |x, out| {
                h1(x, out);
                let mut tmp = vec![0.0; dim * dim];
                h2(x, &mut tmp);
                for (o, t) in out.iter_mut().zip(&tmp) {
                    *o += t;
                }
            }),
            self.support_radius.max(other.support_radius),
            self.constant_near_v && other.constant_near_v,
        )
    }
}

/// The operator L f = sum_i b_i df/dx_i + (1/2) sum_ij a_ij d2f/dx_i dx_j.
pub fn apply_generator(coeffs: &Coefficients, f: &TestFunction, x: &[f64]) -> f64 {
    let j = coeffs.dim();
    debug_assert_eq!(f.dim(), j);
    let mut out = 0.0;
    let mut buf = vec![0.0; j];
    coeffs.drift_into(x, &mut buf);
    let mut grad = vec![0.0; j];
    f.gradient_into(x, &mut grad);
    out += dot(&buf, &grad);
    let a = coeffs.diffusion(x);
    let mut hess = vec![0.0; j * j];
    f.hessian_into(x, &mut hess);
    for r in 0..j {
        for c in 0..j {
            out += 0.5 * a[(r, c)] * hess[r * j + c];
        }
    }
    out
}

/// Reusable evaluation context for one (coefficients, test function) pair;
/// avoids reallocating buffers in quadrature loops.
pub struct GeneratorEval<'a> {
    coeffs: &'a Coefficients,
    f: &'a TestFunction,
    drift: Vec<f64>,
    grad: Vec<f64>,
    sig: Vec<f64>,
    hess: Vec<f64>,
}

impl<'a> GeneratorEval<'a> {
    pub fn new(coeffs: &'a Coefficients, f: &'a TestFunction) -> Self {
        let j = coeffs.dim();
        GeneratorEval {
            coeffs,
            f,
            drift: vec![0.0; j],
            grad: vec![0.0; j],
            sig: vec![0.0; j * j],
            hess: vec![0.0; j * j],
        }
    }

    pub fn apply(&mut self, x: &[f64]) -> f64 {
        let j = self.coeffs.dim();
        self.coeffs.drift_into(x, &mut self.drift);
        self.f.gradient_into(x, &mut self.grad);
        let mut out = dot(&self.drift, &self.grad);
        self.coeffs.dispersion_into(x, &mut self.sig);
        self.f.hessian_into(x, &mut self.hess);
        // a = sigma sigma^T contracted against the Hessian.
        for r in 0..j {
            for c in 0..j {
                let mut a_rc = 0.0;
                for k in 0..j {
                    a_rc += self.sig[r * j + k] * self.sig[c * j + k];
                }
                out += 0.5 * a_rc * self.hess[r * j + c];
            }
        }
        out
    }
}

/// Linear member f(x) = <v, x>. Admissible when <v, d^i> >= 0 on every face.
pub fn make_linear_test_fn(
    domain: &PolyhedralDomain,
    v: &[f64],
) -> Result<TestFunction, GeneratorError> {
    if v.len() != domain.dimension() {
        return Err(GeneratorError::DimensionMismatch {
            expected: domain.dimension(),
            found: v.len(),
        });
    }
    let offending: Vec<usize> = domain
        .faces()
        .iter()
        .enumerate()
        .filter(|(_, f)| dot(v, f.direction()) < 0.0)
        .map(|(i, _)| i)
        .collect();
    if !offending.is_empty() {
        return Err(GeneratorError::ObliqueSignViolation { faces: offending });
    }
    let dim = v.len();
    let v1 = v.to_vec();
    let v2 = v.to_vec();
    Ok(TestFunction::from_parts(
        format!("linear({v:?})"),
        dim,
        Arc::new(move |x| dot(&v1, x)),
        Arc::new(move |x, out| {
            let _ = x;
            out.copy_from_slice(&v2);
        }),
        Arc::new(|_, out| out.fill(0.0)),
        f64::INFINITY,
        false,
    ))
}

/// Smooth bump supported in B_radius(center), identically one on a smaller
/// ball around the center.
///
/// The profile rides on k(x) = |x - center|^2 / r^2 + (beta / r) m(x),
/// where m is the certificate combination of the active-face slacks and
/// beta = 3 / margin. On every face the gradient of k then has inner
/// product at least 1/r with the face direction, so the decreasing profile
/// gives <d, grad f> <= 0 on the boundary: with sign = -1 the result is an
/// admissible class member. The plateau radius kappa implied by these
/// parameters is reported on the returned function's id and is capped at
/// radius / 4.
pub struct BumpTestFn {
    pub f: TestFunction,
    /// Certified radius of the f = 1 plateau around the center.
    pub kappa: f64,
}

pub fn make_bump_test_fn(
    domain: &PolyhedralDomain,
    center: &[f64],
    radius: f64,
    sign: f64,
) -> Result<BumpTestFn, GeneratorError> {
    assert!(radius > 0.0, "radius must be positive");
    assert!(sign == 1.0 || sign == -1.0, "sign must be +1 or -1");
    let detail = domain.classify_detailed(center)?;
    match detail.class {
        BoundaryClassification::Interior => return Err(GeneratorError::CenterNotOnBoundary),
        BoundaryClassification::InV => return Err(GeneratorError::CenterInV),
        BoundaryClassification::InteriorU => {}
    }
    // Faces not through the center must stay clear of the support ball.
    for (i, face) in domain.faces().iter().enumerate() {
        if detail.active.contains(&i) {
            continue;
        }
        if face.slack(center).abs() <= radius {
            return Err(GeneratorError::RadiusTooLarge {
                reason: format!("support ball reaches inactive face {i}"),
            });
        }
    }
    // The support must keep clear of every V stratum; the distance to the
    // stratum's affine span is a conservative lower bound on the distance
    // to the stratum itself... the span contains the stratum, so its
    // distance is the smaller one and the test errs on the safe side.
    for stratum in domain.v_strata()? {
        let rows: Vec<Vec<f64>> =
            stratum.iter().map(|&i| domain.faces()[i].normal().to_vec()).collect();
        let n_mat = Mat::from_rows(&rows);
        let resid: Vec<f64> =
            stratum.iter().map(|&i| -domain.faces()[i].slack(center)).collect();
        if let Some(delta) = linalg::min_norm_solution(&n_mat, &resid, 1e-9) {
            if norm(&delta) <= radius {
                return Err(GeneratorError::RadiusTooLarge {
                    reason: format!("support ball reaches the V stratum {stratum:?}"),
                });
            }
        }
    }

    let margin = detail.margin;
    let weights = detail.margin_weights(domain);
    let cert = detail.certificate.clone().expect("InteriorU carries a certificate");
    let beta = 3.0 / margin;
    let k0 = 0.5;
    let k1 = 1.0;
    // Largest rho with rho^2 + beta |n| rho <= k0: the plateau fraction.
    let bn = beta * norm(&cert);
    let rho = 0.5 * (-bn + (bn * bn + 4.0 * k0).sqrt());
    let kappa = (radius * rho).min(radius / 4.0);

    let dim = domain.dimension();
    let center_v = center.to_vec();
    // m(x) = sum_i w_i slack_i(x) over active faces = <cert, x> - const.
    let m_offset: f64 = weights
        .iter()
        .zip(&detail.active)
        .map(|(w, &i)| w * domain.faces()[i].offset())
        .sum();
    let cert_v = cert.clone();
    let r = radius;
    let ramp = k1 - k0;

    let k_fn = move |x: &[f64]| -> (f64, Vec<f64>) {
        let mut u2 = 0.0;
        let mut gk = vec![0.0; x.len()];
        for d in 0..x.len() {
            let dx = x[d] - center_v[d];
            u2 += dx * dx;
            gk[d] = 2.0 * dx / (r * r);
        }
        let m = dot(&cert_v, x) - m_offset;
        let k = u2 / (r * r) + beta / r * m;
        for d in 0..x.len() {
            gk[d] += beta / r * cert_v[d];
        }
        (k, gk)
    };
    let k_value = Arc::new(k_fn);
    let k_for_grad = k_value.clone();
    let k_for_hess = k_value.clone();

    // Decreasing C^1 profile: 1 on (-inf, 0], cubic ramp on (0, 1), 0 after.
    fn profile(s: f64) -> (f64, f64, f64) {
        if s <= 0.0 {
            (1.0, 0.0, 0.0)
        } else if s >= 1.0 {
            (0.0, 0.0, 0.0)
        } else {
            (1.0 - 3.0 * s * s + 2.0 * s * s * s, -6.0 * s + 6.0 * s * s, -6.0 + 12.0 * s)
        }
    }

    let beta_c = beta;
    let value = Arc::new(move |x: &[f64]| -> f64 {
        let (k, _) = k_value(x);
        let (h, _, _) = profile((k - k0) / ramp);
        sign * h
    });
    let gradient: VecFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
        let (k, gk) = k_for_grad(x);
        let (_, dh, _) = profile((k - k0) / ramp);
        for (o, g) in out.iter_mut().zip(&gk) {
            *o = sign * dh / ramp * g;
        }
    });
    let hessian: VecFn = Arc::new(move |x: &[f64], out: &mut [f64]| {
        let j = x.len();
        let (k, gk) = k_for_hess(x);
        let s = (k - k0) / ramp;
        let (_, dh, d2h) = profile(s);
        let _ = beta_c;
        for rr in 0..j {
            for cc in 0..j {
                let mut v = d2h / (ramp * ramp) * gk[rr] * gk[cc];
                if rr == cc {
                    v += dh / ramp * 2.0 / (r * r);
                }
                out[rr * j + cc] = sign * v;
            }
        }
    });

    let f = TestFunction::from_parts(
        format!("bump(center={center:?}, r={radius}, kappa={kappa:.4}, sign={sign})"),
        dim,
        value,
        gradient,
        hessian,
        radius,
        true,
    );
    Ok(BumpTestFn { f, kappa })
}

impl crate::geometry::ClassifiedPoint {
    /// Recovers the certificate weights on the active normals (least
    /// squares against the stored combination).
    fn margin_weights(&self, domain: &PolyhedralDomain) -> Vec<f64> {
        let cert = self.certificate.as_ref().expect("certificate");
        let cols: Vec<Vec<f64>> =
            self.active.iter().map(|&i| domain.faces()[i].normal().to_vec()).collect();
        let cone = crate::geometry::Cone::new(cols);
        cone.project_with_weights(cert).1
    }
}

/// Samples boundary points face by face and checks the oblique-derivative
/// sign <d^i, grad f> >= -tol; also enforces the constant-near-V flag when
/// the domain has a nonempty V set. This is the admissibility gate for
/// statistical test batteries.
pub fn check_admissibility(
    domain: &PolyhedralDomain,
    f: &TestFunction,
    samples_per_face: usize,
    seed: u64,
) -> Result<(), GeneratorError> {
    if !domain.v_strata()?.is_empty() && !f.constant_near_v {
        return Err(GeneratorError::ObliqueSignViolation { faces: vec![] });
    }
    let mut bad = Vec::new();
    let mut stream = PathStream::new(seed, 1);
    let mut grad = vec![0.0; domain.dimension()];
    for (i, _) in domain.faces().iter().enumerate() {
        let Some(rep) = domain.stratum_representative(&[i])? else {
            continue;
        };
        let mut violated = false;
        for s in 0..samples_per_face {
            let x = if s == 0 {
                rep.clone()
            } else {
                // Random offset within the face plane, projected back onto
                // the face and kept only if it stays in the domain.
                let scale = if f.support_radius.is_finite() { f.support_radius } else { 2.0 };
                let mut x: Vec<f64> =
                    rep.iter().map(|&v| v + scale * stream.normal()).collect();
                let face = &domain.faces()[i];
                let s = face.slack(&x);
                for (xd, nd) in x.iter_mut().zip(face.normal()) {
                    *xd -= s * nd;
                }
                if !domain.contains(&x) {
                    continue;
                }
                x
            };
            f.gradient_into(&x, &mut grad);
            let d = domain.faces()[i].direction();
            if dot(d, &grad) < -1e-9 {
                violated = true;
                break;
            }
        }
        if violated {
            bad.push(i);
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(GeneratorError::ObliqueSignViolation { faces: bad })
    }
}
