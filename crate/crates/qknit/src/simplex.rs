//! Dense two-phase revised simplex for small standard-form LPs
//! `min cᵀx s.t. Ax = b, x ≥ 0`.
//!
//! Problem sizes here are tiny (≲ 150 variables, ≲ 300 rows after rank
//! reduction), so the basis inverse is kept explicitly and updated by
//! elementary pivots. Bland's rule guards against cycling.

use crate::{QknitError, Result};

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-8;
const PIVOT_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SimplexSolution {
    pub status: SimplexStatus,
    pub objective: f64,
    pub x: Vec<f64>,
}

/// Gaussian elimination with partial pivoting on [A|b]; keeps a maximal
/// independent row subset. Returns `None` if a dependent row has an
/// inconsistent right-hand side (infeasible system).
fn independent_rows(a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let m = a.len();
    if m == 0 {
        return Some((Vec::new(), Vec::new()));
    }
    let n = a[0].len();
    let mut work: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    let mut row = 0usize;
    for col in 0..n {
        if row >= m {
            break;
        }
        let (best, mag) = (row..m)
            .map(|i| (i, work[i][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if mag < 1e-11 {
            continue;
        }
        work.swap(row, best);
        let pivot = work[row][col];
        for i in 0..m {
            if i != row && work[i][col].abs() > 0.0 {
                let f = work[i][col] / pivot;
                for k in col..=n {
                    work[i][k] -= f * work[row][k];
                }
            }
        }
        kept.push(row);
        row += 1;
    }
    // Remaining rows must be numerically zero (consistent) or the system is
    // infeasible.
    for r in work.iter().skip(row) {
        if r[n].abs() > 1e-7 {
            return None;
        }
    }
    let rows: Vec<Vec<f64>> = work[..row].iter().map(|r| r[..n].to_vec()).collect();
    let rhs: Vec<f64> = work[..row].iter().map(|r| r[n]).collect();
    Some((rows, rhs))
}

struct Tableau {
    /// Columns of the constraint matrix including artificials.
    cols: Vec<Vec<f64>>,
    m: usize,
    basis: Vec<usize>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
}

impl Tableau {
    fn column_in_basis_frame(&self, j: usize) -> Vec<f64> {
        let col = &self.cols[j];
        (0..self.m)
            .map(|i| (0..self.m).map(|k| self.binv[i][k] * col[k]).sum())
            .collect()
    }

    fn pivot(&mut self, enter: usize, leave_row: usize, w: &[f64]) {
        let piv = w[leave_row];
        for k in 0..self.m {
            self.binv[leave_row][k] /= piv;
        }
        self.xb[leave_row] /= piv;
        for i in 0..self.m {
            if i != leave_row && w[i].abs() > 0.0 {
                let f = w[i];
                for k in 0..self.m {
                    self.binv[i][k] -= f * self.binv[leave_row][k];
                }
                self.xb[i] -= f * self.xb[leave_row];
            }
        }
        self.basis[leave_row] = enter;
    }

    /// One simplex phase over the allowed columns; Bland's rule.
    fn run(&mut self, cost: &[f64], allowed: &[bool]) -> Result<()> {
        for _ in 0..MAX_ITERS {
            // y = c_B B⁻¹
            let y: Vec<f64> = (0..self.m)
                .map(|k| (0..self.m).map(|i| cost[self.basis[i]] * self.binv[i][k]).sum())
                .collect();
            let mut enter = None;
            for (j, col) in self.cols.iter().enumerate() {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let reduced: f64 = cost[j] - y.iter().zip(col).map(|(a, b)| a * b).sum::<f64>();
                if reduced < -OPT_TOL {
                    enter = Some(j);
                    break;
                }
            }
            let Some(enter) = enter else {
                return Ok(());
            };
            let w = self.column_in_basis_frame(enter);
            let mut leave: Option<usize> = None;
            for i in 0..self.m {
                if w[i] > PIVOT_TOL {
                    let ratio = self.xb[i] / w[i];
                    match leave {
                        None => leave = Some(i),
                        Some(l) => {
                            let best = self.xb[l] / w[l];
                            if ratio < best - 1e-12
                                || ((ratio - best).abs() <= 1e-12 && self.basis[i] < self.basis[l])
                            {
                                leave = Some(i);
                            }
                        }
                    }
                }
            }
            let Some(leave) = leave else {
                return Err(QknitError::SolverStall("LP is unbounded below".into()));
            };
            self.pivot(enter, leave, &w);
        }
        Err(QknitError::SolverStall(format!("simplex exceeded {} iterations", MAX_ITERS)))
    }
}

/// Solve `min cᵀx s.t. Ax = b, x ≥ 0` (rows given as `a`).
pub fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<SimplexSolution> {
    let n = c.len();
    let Some((mut rows, mut rhs)) = independent_rows(a, b) else {
        return Ok(SimplexSolution { status: SimplexStatus::Infeasible, objective: f64::NAN, x: vec![0.0; n] });
    };
    let m = rows.len();
    if m == 0 {
        return Ok(SimplexSolution { status: SimplexStatus::Optimal, objective: 0.0, x: vec![0.0; n] });
    }
    for i in 0..m {
        if rhs[i] < 0.0 {
            rhs[i] = -rhs[i];
            for v in rows[i].iter_mut() {
                *v = -*v;
            }
        }
    }
    // Columns: n structural + m artificial.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| rows[i][j]).collect()).collect();
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        cols.push(e);
    }
    let mut tab = Tableau {
        cols,
        m,
        basis: (n..n + m).collect(),
        binv: (0..m)
            .map(|i| {
                let mut r = vec![0.0; m];
                r[i] = 1.0;
                r
            })
            .collect(),
        xb: rhs.clone(),
    };
    // Phase 1: minimize the artificial sum.
    let mut cost1 = vec![0.0; n + m];
    for ci in cost1.iter_mut().skip(n) {
        *ci = 1.0;
    }
    let allowed = vec![true; n + m];
    tab.run(&cost1, &allowed)?;
    let phase1: f64 = tab
        .basis
        .iter()
        .zip(&tab.xb)
        .map(|(&j, &x)| if j >= n { x } else { 0.0 })
        .sum();
    let scale = 1.0 + rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if phase1 > FEAS_TOL * scale {
        return Ok(SimplexSolution { status: SimplexStatus::Infeasible, objective: f64::NAN, x: vec![0.0; n] });
    }
    // Drive any zero-level artificials out of the basis (rows are
    // independent, so a structural pivot always exists).
    for i in 0..m {
        if tab.basis[i] >= n {
            let mut done = false;
            for j in 0..n {
                if tab.basis.contains(&j) {
                    continue;
                }
                let w = tab.column_in_basis_frame(j);
                if w[i].abs() > PIVOT_TOL {
                    tab.pivot(j, i, &w);
                    done = true;
                    break;
                }
            }
            if !done {
                return Err(QknitError::SolverStall("could not remove artificial variable".into()));
            }
        }
    }
    // Phase 2 over structural columns only.
    let mut cost2 = vec![0.0; n + m];
    cost2[..n].copy_from_slice(c);
    let mut allowed2 = vec![true; n + m];
    for a2 in allowed2.iter_mut().skip(n) {
        *a2 = false;
    }
    tab.run(&cost2, &allowed2)?;
    let mut x = vec![0.0; n];
    for (i, &j) in tab.basis.iter().enumerate() {
        if j < n {
            x[j] = tab.xb[i];
        }
    }
    let objective = x.iter().zip(c).map(|(a, b)| a * b).sum();
    Ok(SimplexSolution { status: SimplexStatus::Optimal, objective, x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_lp() {
        // min x+y s.t. x+2y = 4, x,y ≥ 0 → y=2 optimal, objective 2.
        let sol = solve(&[vec![1.0, 2.0]], &[4.0], &[1.0, 1.0]).unwrap();
        assert_eq!(sol.status, SimplexStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_rows() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![1.0, -1.0]];
        let b = vec![2.0, 4.0, 0.0];
        let sol = solve(&a, &b, &[1.0, 3.0]).unwrap();
        assert_eq!(sol.status, SimplexStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn inconsistent_rows() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let b = vec![2.0, 5.0];
        let sol = solve(&a, &b, &[1.0, 1.0]).unwrap();
        assert_eq!(sol.status, SimplexStatus::Infeasible);
    }

    #[test]
    fn infeasible_signs() {
        // x = -1 with x ≥ 0.
        let sol = solve(&[vec![1.0]], &[-1.0], &[1.0]).unwrap();
        assert_eq!(sol.status, SimplexStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // min -x s.t. x - y = 0 → x can grow without bound.
        let err = solve(&[vec![1.0, -1.0]], &[0.0], &[-1.0, 0.0]);
        assert!(matches!(err, Err(QknitError::SolverStall(_))));
    }

    #[test]
    fn degenerate_vertex() {
        // Degenerate constraints exercising Bland's rule.
        let a = vec![
            vec![1.0, 1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
        ];
        let b = vec![1.0, 1.0];
        let c = vec![0.0, 1.0, 2.0, 3.0];
        let sol = solve(&a, &b, &c).unwrap();
        assert_eq!(sol.status, SimplexStatus::Optimal);
        assert!((sol.objective - 0.0).abs() < 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }
}
