//! Small dense linear programs over nonnegative, optionally descending-ordered
//! variables.

use serde::{Deserialize, Serialize};

use crate::error::NumericError;

const PIVOT_CAP: usize = 10_000;

/// `maximize cᵀx  s.t.  A x ≤ b,  Σx ≤ sum_bound,  x ≥ 0`, and when
/// `descending` is set also `x_1 ≥ x_2 ≥ … ≥ x_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub bounds: Vec<f64>,
    pub sum_bound: Option<f64>,
    pub descending: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the rows of `A`, then of the sum bound if present.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

impl LpProblem {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<(), NumericError> {
        let n = self.n_vars();
        if self.constraints.len() != self.bounds.len() {
            return Err(NumericError::Dimension(format!(
                "{} constraint rows but {} bounds",
                self.constraints.len(),
                self.bounds.len()
            )));
        }
        if let Some(r) = self.constraints.iter().position(|row| row.len() != n) {
            return Err(NumericError::Dimension(format!(
                "row {r} has {} entries, expected {n}",
                self.constraints[r].len()
            )));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.bounds.iter().all(|v| v.is_finite())
            && self.constraints.iter().flatten().all(|v| v.is_finite())
            && self.sum_bound.is_none_or(|v| v.is_finite());
        if !finite {
            return Err(NumericError::Dimension("non-finite data".into()));
        }
        Ok(())
    }

    /// Row activities `A x` followed by `Σx` when a sum bound is present.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .constraints
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        if self.sum_bound.is_some() {
            out.push(x.iter().sum());
        }
        out
    }

    pub fn all_bounds(&self) -> Vec<f64> {
        let mut b = self.bounds.clone();
        b.extend(self.sum_bound);
        b
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Objective, rows and right-hand sides in the increment variables
    /// `δ_j = x_j − x_{j+1}` (so `x_k = Σ_{j≥k} δ_j`), or unchanged when the
    /// problem is unordered.
    fn transformed(&self) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
        let n = self.n_vars();
        let lift = |row: &[f64]| -> Vec<f64> {
            if self.descending {
                let mut acc = 0.0;
                row.iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect()
            } else {
                row.to_vec()
            }
        };
        let c = lift(&self.objective);
        let mut rows: Vec<Vec<f64>> = self.constraints.iter().map(|r| lift(r)).collect();
        if self.sum_bound.is_some() {
            rows.push(lift(&vec![1.0; n]));
        }
        (c, rows, self.all_bounds())
    }

    fn untransform(&self, y: &[f64]) -> Vec<f64> {
        if !self.descending {
            return y.to_vec();
        }
        let mut x = vec![0.0; y.len()];
        let mut acc = 0.0;
        for j in (0..y.len()).rev() {
            acc += y[j];
            x[j] = acc;
        }
        x
    }
}

/// Dense tableau simplex with Bland's rule. The origin must be feasible
/// (every bound ≥ 0).
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, NumericError> {
    problem.validate()?;
    let n = problem.n_vars();
    let (c, rows, b) = problem.transformed();
    if let Some(i) = b.iter().position(|&v| v < 0.0) {
        return Err(NumericError::OriginInfeasible(i));
    }
    let m = rows.len();
    let width = n + m + 1;
    let scale = c
        .iter()
        .chain(rows.iter().flatten())
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let eps = 1e-12 * scale;

    // rows 0..m are constraints, row m is the reduced-cost row z - cᵀy = 0
    let mut t = vec![vec![0.0; width]; m + 1];
    for (i, row) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(row);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for j in 0..n {
        t[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let mut pivots = 0;
    loop {
        let Some(enter) = (0..n + m).find(|&j| t[m][j] < -eps) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i][enter];
            if a > eps {
                let ratio = t[i][width - 1] / a;
                let better = match leave {
                    None => true,
                    Some((r, best)) => {
                        ratio < best - 1e-15 * best.abs().max(1.0)
                            || (ratio <= best + 1e-15 * best.abs().max(1.0)
                                && basis[i] < basis[r])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else {
            return Err(NumericError::Unbounded);
        };
        pivot(&mut t, r, enter);
        basis[r] = enter;
        pivots += 1;
        if pivots > PIVOT_CAP {
            return Err(NumericError::PivotLimit(PIVOT_CAP));
        }
    }

    let mut y = vec![0.0; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            y[bv] = t[i][width - 1].max(0.0);
        }
    }
    let duals = (0..m).map(|i| t[m][n + i].max(0.0)).collect();
    let x = problem.untransform(&y);
    let objective = problem.value(&x);
    Ok(LpSolution {
        x,
        objective,
        duals,
        pivots,
    })
}

fn pivot(t: &mut [Vec<f64>], r: usize, col: usize) {
    let p = t[r][col];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i == r {
            continue;
        }
        let f = row[col];
        if f != 0.0 {
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            row[col] = 0.0;
        }
    }
}
