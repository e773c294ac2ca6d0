//! Dense two-phase simplex with Bland's rule.
//!
//! Small and slow on purpose: it is a reference solver for test-sized
//! instances, and Bland's rule guarantees termination on degenerate vertices.

use crate::error::{Error, Result};

/// `min cᵀv  s.t.  A_eq v = b_eq,  A_le v ≤ b_le,  v ≥ 0`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub equalities: Vec<(Vec<f64>, f64)>,
    pub inequalities: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub point: Vec<f64>,
}

const PIVOT_EPS: f64 = 1e-12;

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row; last entry is minus the objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[col] = 0.0;
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[col] = 0.0;
        }
        self.basis[r] = col;
    }

    /// Runs Bland's rule over columns `< allowed`. Returns `false` when the
    /// objective is unbounded below.
    fn optimize(&mut self, allowed: usize, max_pivots: usize) -> Result<bool> {
        let rhs = self.width - 1;
        for _ in 0..max_pivots {
            let entering = (0..allowed).find(|&j| self.obj[j] < -PIVOT_EPS);
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let a = row[col];
                if a > PIVOT_EPS {
                    let ratio = row[rhs] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - PIVOT_EPS
                                || (ratio <= lratio + PIVOT_EPS && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, col),
            }
        }
        Err(Error::Numerical("simplex pivot limit reached".into()))
    }
}

/// Solves a linear program to optimality.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let nv = lp.objective.len();
    let rows: Vec<(&Vec<f64>, f64, bool)> = lp
        .equalities
        .iter()
        .map(|(a, b)| (a, *b, false))
        .chain(lp.inequalities.iter().map(|(a, b)| (a, *b, true)))
        .collect();
    for (a, b, _) in &rows {
        if a.len() != nv {
            return Err(Error::Shape {
                expected: nv,
                actual: a.len(),
            });
        }
        if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("constraint data must be finite".into()));
        }
    }
    let m = rows.len();
    let n_slack = lp.inequalities.len();
    // Columns: originals, slacks, artificials, rhs.
    let art0 = nv + n_slack;
    let width = art0 + m + 1;
    let mut table = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack = nv;
    for (r, (a, b, le)) in rows.iter().enumerate() {
        let mut row = vec![0.0; width];
        row[..nv].copy_from_slice(a);
        row[width - 1] = *b;
        if *le {
            row[slack] = 1.0;
        }
        if *le && *b >= 0.0 {
            // The slack is a feasible starting basic variable.
            basis.push(slack);
        } else {
            if *b < 0.0 {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
            row[art0 + r] = 1.0;
            basis.push(art0 + r);
        }
        if *le {
            slack += 1;
        }
        table.push(row);
    }

    // Phase 1: minimize the sum of artificials.
    let mut obj = vec![0.0; width];
    for (row, &b) in table.iter().zip(&basis) {
        if b >= art0 {
            for (o, v) in obj.iter_mut().zip(row) {
                *o -= v;
            }
        }
    }
    for o in obj[art0..art0 + m].iter_mut() {
        *o = 0.0;
    }
    let mut tab = Tableau {
        rows: table,
        obj,
        basis,
        width,
    };
    let max_pivots = 50 * (width + m) + 10_000;
    tab.optimize(art0, max_pivots)?;
    let infeasibility = -tab.obj[width - 1];
    let scale = 1.0 + rows.iter().map(|(_, b, _)| b.abs()).sum::<f64>();
    if infeasibility > 1e-9 * scale {
        return Err(Error::Infeasible(format!(
            "no point satisfies the constraints (phase-one residual {infeasibility:e})"
        )));
    }

    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < tab.rows.len() {
        if tab.basis[r] >= art0 {
            match (0..art0).find(|&j| tab.rows[r][j].abs() > 1e-9) {
                Some(col) => {
                    tab.pivot(r, col);
                    r += 1;
                }
                None => {
                    tab.rows.remove(r);
                    tab.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    // Phase 2.
    let mut obj = vec![0.0; width];
    obj[..nv].copy_from_slice(&lp.objective);
    for (row, &b) in tab.rows.iter().zip(&tab.basis) {
        let f = obj[b];
        if f != 0.0 {
            for (o, v) in obj.iter_mut().zip(row) {
                *o -= f * v;
            }
        }
    }
    tab.obj = obj;
    if !tab.optimize(art0, max_pivots)? {
        return Err(Error::Numerical("linear program is unbounded".into()));
    }

    let mut point = vec![0.0; nv];
    for (row, &b) in tab.rows.iter().zip(&tab.basis) {
        if b < nv {
            point[b] = row[width - 1].max(0.0);
        }
    }
    let value = point.iter().zip(&lp.objective).map(|(v, c)| v * c).sum();
    Ok(LpSolution { value, point })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_example() {
        // max 3a + 5b s.t. a ≤ 4, 2b ≤ 12, 3a + 2b ≤ 18 → (2, 6), 36
        let lp = LinearProgram {
            objective: vec![-3.0, -5.0],
            equalities: vec![],
            inequalities: vec![
                (vec![1.0, 0.0], 4.0),
                (vec![0.0, 2.0], 12.0),
                (vec![3.0, 2.0], 18.0),
            ],
        };
        let s = solve_lp(&lp).unwrap();
        assert!((s.value + 36.0).abs() < 1e-12);
        assert!((s.point[0] - 2.0).abs() < 1e-12 && (s.point[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn equalities_and_redundancy() {
        // a + b = 1 twice, min a − b → b = 1
        let lp = LinearProgram {
            objective: vec![1.0, -1.0],
            equalities: vec![(vec![1.0, 1.0], 1.0), (vec![2.0, 2.0], 2.0)],
            inequalities: vec![],
        };
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.point, vec![0.0, 1.0]);
    }

    #[test]
    fn negative_rhs_and_infeasible() {
        // −a ≤ −2 means a ≥ 2
        let lp = LinearProgram {
            objective: vec![1.0],
            equalities: vec![],
            inequalities: vec![(vec![-1.0], -2.0)],
        };
        assert!((solve_lp(&lp).unwrap().value - 2.0).abs() < 1e-12);
        let bad = LinearProgram {
            objective: vec![1.0],
            equalities: vec![(vec![1.0], 1.0)],
            inequalities: vec![(vec![1.0], 0.5)],
        };
        assert!(matches!(solve_lp(&bad), Err(Error::Infeasible(_))));
    }

    #[test]
    fn unbounded() {
        let lp = LinearProgram {
            objective: vec![-1.0, 0.0],
            equalities: vec![(vec![1.0, -1.0], 0.0)],
            inequalities: vec![],
        };
        assert!(matches!(solve_lp(&lp), Err(Error::Numerical(_))));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the largest-coefficient rule.
        let lp = LinearProgram {
            objective: vec![-0.75, 150.0, -0.02, 6.0],
            equalities: vec![],
            inequalities: vec![
                (vec![0.25, -60.0, -0.04, 9.0], 0.0),
                (vec![0.5, -90.0, -0.02, 3.0], 0.0),
                (vec![0.0, 0.0, 1.0, 0.0], 1.0),
            ],
        };
        let s = solve_lp(&lp).unwrap();
        assert!((s.value + 0.05).abs() < 1e-12);
    }
}
