//! Dense simplex solver for the tiny linear programs used by the geometry
//! module (boundary classification, stratum representatives, redundancy
//! checks). Problems have at most a few dozen variables, so a textbook
//! two-phase tableau with Bland's rule is both simple and robust.

use crate::linalg::Mat;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("simplex iteration cap exceeded ({0} pivots)")]
    IterationCap(usize),
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Reduced costs of the slack columns at the optimum; these are the dual
    /// variables of the inequality rows.
    pub slack_reduced_costs: Vec<f64>,
}

const EPS: f64 = 1e-11;

/// Maximize c^T x subject to A x <= b, x >= 0.
pub fn solve_canonical(c: &[f64], a: &Mat, b: &[f64]) -> Result<LpOutcome, LpError> {
    let m = a.rows;
    let n = a.cols;
    assert_eq!(c.len(), n);
    assert_eq!(b.len(), m);

    // Columns: n structural, m slack, then one artificial per negative row.
    let neg_rows: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = neg_rows.len();
    let ncols = n + m + n_art;
    let mut t = Mat::zeros(m + 1, ncols + 1);
    let mut basis = vec![0usize; m];

    let mut art_col = n + m;
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = flip * a[(i, j)];
        }
        t[(i, n + i)] = flip;
        t[(i, ncols)] = flip * b[i];
        if b[i] < 0.0 {
            t[(i, art_col)] = 1.0;
            basis[i] = art_col;
            art_col += 1;
        } else {
            basis[i] = n + i;
        }
    }

    let cap = 200 * (ncols + m + 4);
    let mut pivots = 0usize;

    if n_art > 0 {
        // Phase 1: maximize -sum(artificials).
        set_objective(&mut t, &basis, |j| if j >= n + m { -1.0 } else { 0.0 });
        run_simplex(&mut t, &mut basis, n + m, cap, &mut pivots)?;
        if t[(m, ncols)] < -1e-7 {
            return Ok(LpOutcome::Infeasible);
        }
        // Pivot any artificial still basic (at zero) out of the basis.
        for i in 0..m {
            if basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| t[(i, j)].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, j);
                }
            }
        }
    }

    // Phase 2 with the real objective; artificial columns are blocked.
    set_objective(&mut t, &basis, |j| if j < n { c[j] } else { 0.0 });
    let unbounded = !run_simplex(&mut t, &mut basis, n + m, cap, &mut pivots)?;
    if unbounded {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[(i, ncols)];
        }
    }
    let slack_reduced_costs = (0..m).map(|i| t[(m, n + i)]).collect();
    Ok(LpOutcome::Optimal(LpSolution { x, value: t[(m, ncols)], slack_reduced_costs }))
}

fn set_objective<F: Fn(usize) -> f64>(t: &mut Mat, basis: &[usize], cost: F) {
    let m = t.rows - 1;
    let ncols = t.cols - 1;
    for j in 0..ncols {
        t[(m, j)] = -cost(j);
    }
    t[(m, ncols)] = 0.0;
    // Price out the basic columns so reduced costs start consistent.
    for i in 0..m {
        let cb = cost(basis[i]);
        if cb != 0.0 {
            for j in 0..=ncols {
                let v = t[(i, j)];
                t[(m, j)] += cb * v;
            }
        }
    }
}

/// Bland-rule simplex on the prepared tableau. Columns >= `max_col` never
/// enter (used to block artificials in phase 2). Returns Ok(false) on
/// unboundedness.
fn run_simplex(
    t: &mut Mat,
    basis: &mut [usize],
    max_col: usize,
    cap: usize,
    pivots: &mut usize,
) -> Result<bool, LpError> {
    let m = t.rows - 1;
    let ncols = t.cols - 1;
    loop {
        let Some(enter) = (0..max_col).find(|&j| t[(m, j)] < -EPS) else {
            return Ok(true);
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[(i, enter)] > EPS {
                let ratio = t[(i, ncols)] / t[(i, enter)];
                let better = ratio < best - EPS
                    || (ratio < best + EPS
                        && leave.is_some_and(|l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return Ok(false);
        };
        pivot(t, basis, leave, enter);
        *pivots += 1;
        if *pivots > cap {
            return Err(LpError::IterationCap(cap));
        }
    }
}

fn pivot(t: &mut Mat, basis: &mut [usize], row: usize, col: usize) {
    let ncols = t.cols - 1;
    let p = t[(row, col)];
    for j in 0..=ncols {
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
        for j in 0..=ncols {
            let v = t[(row, j)];
            t[(i, j)] -= f * v;
        }
    }
    basis[row] = col;
}

/// Solution of the matrix game max over simplex weights w of
/// min over rows j of (R w)_j.
#[derive(Debug, Clone)]
pub struct GameSolution {
    pub value: f64,
    /// Optimal weights on the columns of R; nonnegative, summing to one.
    pub weights: Vec<f64>,
}

/// Value of the game played on the columns of `r`: the maximizer mixes the
/// columns, the adversary picks the worst row. Solved by the classical
/// shift-and-normalize reduction to a canonical-form LP.
pub fn simplex_game(r: &Mat) -> Result<GameSolution, LpError> {
    let m_rows = r.rows;
    let m_cols = r.cols;
    assert!(m_rows > 0 && m_cols > 0);
    let shift = 1.0 + r.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    // max 1^T u  s.t.  (R + shift)^T u <= 1, u >= 0; origin is feasible.
    let mut at = Mat::zeros(m_cols, m_rows);
    for j in 0..m_cols {
        for i in 0..m_rows {
            at[(j, i)] = r[(i, j)] + shift;
        }
    }
    let c = vec![1.0; m_rows];
    let b = vec![1.0; m_cols];
    match solve_canonical(&c, &at, &b)? {
        LpOutcome::Optimal(sol) => {
            // Shifted game value is 1/(1^T u*); the optimal column weights are
            // the duals of the inequality rows, normalized.
            let total = sol.value;
            debug_assert!(total > 0.0);
            let value = 1.0 / total - shift;
            let mut weights: Vec<f64> = sol.slack_reduced_costs.iter().map(|&y| y / total).collect();
            let s: f64 = weights.iter().sum();
            if s > 0.0 {
                for w in &mut weights {
                    *w /= s;
                }
            }
            Ok(GameSolution { value, weights })
        }
        // Shifted payoffs are strictly positive, so the LP is bounded and
        // feasible; reaching here means a numerical breakdown.
        _ => Err(LpError::IterationCap(0)),
    }
}
