//! Small dense linear algebra.
//!
//! Every system in this crate is tiny (dimension bounded by the face count,
//! itself capped at 16), so we use straightforward dense routines with
//! partial pivoting instead of pulling in a linear-algebra crate.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            y[i] = dot(self.row(i), x);
        }
        y
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// a += s * b
pub fn axpy(a: &mut [f64], s: f64, b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += s * y;
    }
}

/// Solve A x = b by Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is singular to working precision.
pub fn solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.rows, a.cols);
    assert_eq!(b.len(), a.rows);
    let n = a.rows;
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let mut piv = k;
        let mut best = m[(k, k)].abs();
        for i in k + 1..n {
            if m[(i, k)].abs() > best {
                best = m[(i, k)].abs();
                piv = i;
            }
        }
        if best < 1e-13 {
            return None;
        }
        if piv != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(piv, j)];
                m[(piv, j)] = t;
            }
            x.swap(k, piv);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                m[(i, j)] -= f * m[(k, j)];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= m[(k, j)] * x[j];
        }
        x[k] = s / m[(k, k)];
    }
    Some(x)
}

/// Householder QR of an m x n matrix (no pivoting). Produces the full
/// orthogonal factor so callers can read off range and null-space bases.
pub struct Qr {
    /// m x m orthogonal factor.
    pub q: Mat,
    /// m x n upper triangular factor.
    pub r: Mat,
    /// Numerical rank at the given tolerance.
    pub rank: usize,
}

pub fn qr(a: &Mat, rank_tol: f64) -> Qr {
    let m = a.rows;
    let n = a.cols;
    let mut r = a.clone();
    let mut q = Mat::identity(m);
    for k in 0..n.min(m) {
        // Householder vector for column k below the diagonal.
        let mut alpha = 0.0;
        for i in k..m {
            alpha += r[(i, k)] * r[(i, k)];
        }
        alpha = alpha.sqrt();
        if alpha < 1e-300 {
            continue;
        }
        if r[(k, k)] > 0.0 {
            alpha = -alpha;
        }
        let mut v = vec![0.0; m];
        for i in k..m {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 < 1e-300 {
            continue;
        }
        // Apply H = I - 2 v v^T / |v|^2 to R and accumulate into Q.
        for j in 0..n {
            let mut s = 0.0;
            for i in k..m {
                s += v[i] * r[(i, j)];
            }
            let f = 2.0 * s / vnorm2;
            for i in k..m {
                r[(i, j)] -= f * v[i];
            }
        }
        for j in 0..m {
            let mut s = 0.0;
            for i in k..m {
                s += v[i] * q[(j, i)];
            }
            let f = 2.0 * s / vnorm2;
            for i in k..m {
                q[(j, i)] -= f * v[i];
            }
        }
    }
    let mut rank = 0;
    let scale = (0..n.min(m)).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    let tol = rank_tol * (1.0 + scale);
    for i in 0..n.min(m) {
        if r[(i, i)].abs() > tol {
            rank += 1;
        }
    }
    Qr { q, r, rank }
}

/// Minimum-norm solution of the underdetermined system N x = c where N is
/// k x n with k <= n, via QR of N^T. Returns `None` when the system is
/// inconsistent at tolerance `tol` (then no exact solution exists).
pub fn min_norm_solution(n_mat: &Mat, c: &[f64], tol: f64) -> Option<Vec<f64>> {
    let k = n_mat.rows;
    let n = n_mat.cols;
    assert_eq!(c.len(), k);
    let f = qr(&n_mat.transpose(), 1e-12); // N^T = Q R, so N = R^T Q^T
    let rank = f.rank;
    // Solve R^T y = c for the first `rank` components (forward substitution),
    // requiring consistency on the rest.
    let mut y = vec![0.0; k.min(n)];
    for i in 0..rank {
        let mut s = c[i];
        for j in 0..i {
            s -= f.r[(j, i)] * y[j];
        }
        y[i] = s / f.r[(i, i)];
    }
    // Consistency check: rows beyond the rank must have matching rhs.
    for i in rank..k {
        let mut s = c[i];
        for j in 0..rank {
            s -= f.r[(j, i)] * y[j];
        }
        if s.abs() > tol {
            return None;
        }
    }
    let mut x = vec![0.0; n];
    for j in 0..rank {
        for i in 0..n {
            x[i] += f.q[(i, j)] * y[j];
        }
    }
    Some(x)
}

/// Orthonormal basis of the null space of the k x n matrix N (columns of the
/// returned n x (n - rank) matrix).
pub fn null_space(n_mat: &Mat) -> Mat {
    let n = n_mat.cols;
    let f = qr(&n_mat.transpose(), 1e-12);
    let rank = f.rank;
    let mut z = Mat::zeros(n, n - rank);
    for j in rank..n {
        for i in 0..n {
            z[(i, j - rank)] = f.q[(i, j)];
        }
    }
    z
}
