//! Dense two-phase simplex solver.
//!
//! Every DEA model and game LP in this crate goes through [`solve_lp`]. The
//! solver is deterministic: identical input bytes produce identical output,
//! which the cross-efficiency and nucleolus contracts rely on.

use thiserror::Error;

/// Feasibility tolerance: max constraint violation accepted in an optimal solution.
pub const EPS_FEAS: f64 = 1e-8;
/// Objective recomputation tolerance.
pub const EPS_OBJ: f64 = 1e-7;
/// Entries smaller than this are not eligible as pivots.
pub const EPS_PIVOT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A dense linear program. Variables default to a lower bound of 0;
/// `lower_bounds[j] = None` marks variable `j` as free.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower_bounds: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: f64,
    pub variable_values: Vec<f64>,
    pub tight_constraint_flags: Vec<bool>,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("constraint {index} has {got} coefficients, expected {expected}")]
    LengthMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite coefficient in {location}")]
    NonFinite { location: String },
    #[error("pivot limit of {0} exceeded")]
    PivotLimit(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    /// Switch from Dantzig's rule to Bland's rule after this many pivots.
    pub bland_after: usize,
    pub max_pivots: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            bland_after: 5_000,
            max_pivots: 500_000,
        }
    }
}

impl LpProblem {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            constraints: Vec::new(),
            lower_bounds: vec![Some(0.0); n],
        }
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    /// Marks variable `j` as unrestricted in sign.
    pub fn set_free(&mut self, j: usize) {
        self.lower_bounds[j] = None;
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite {
                location: "objective".into(),
            });
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::LengthMismatch {
                    index: i,
                    got: c.coeffs.len(),
                    expected: n,
                });
            }
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return Err(LpError::NonFinite {
                    location: format!("constraint {i}"),
                });
            }
        }
        for b in &self.lower_bounds {
            if let Some(b) = b {
                if !b.is_finite() {
                    return Err(LpError::NonFinite {
                        location: "lower bounds".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    solve_lp_with(problem, &LpOptions::default())
}

pub fn solve_lp_with(problem: &LpProblem, options: &LpOptions) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let std_form = StandardForm::build(problem);
    let mut tableau = Tableau::new(&std_form, options);
    match tableau.run()? {
        TableauOutcome::Infeasible => Ok(LpSolution {
            status: LpStatus::Infeasible,
            objective_value: f64::NAN,
            variable_values: Vec::new(),
            tight_constraint_flags: Vec::new(),
        }),
        TableauOutcome::Unbounded => Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective_value: f64::NAN,
            variable_values: Vec::new(),
            tight_constraint_flags: Vec::new(),
        }),
        TableauOutcome::Optimal => {
            let y = tableau.extract();
            let x = std_form.recover(&y);
            let objective_value: f64 = problem
                .objective
                .iter()
                .zip(&x)
                .map(|(c, v)| c * v)
                .sum();
            let tight_constraint_flags = problem
                .constraints
                .iter()
                .map(|c| {
                    let activity: f64 = c.coeffs.iter().zip(&x).map(|(a, v)| a * v).sum();
                    (activity - c.rhs).abs() <= EPS_FEAS
                })
                .collect();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective_value,
                variable_values: x,
                tight_constraint_flags,
            })
        }
    }
}

/// Problem rewritten as: maximize c·y, A y (≤|=|≥) b, y ≥ 0.
///
/// Bounded variables are shifted by their lower bound; free variables are
/// split into a positive and a negative part.
struct StandardForm {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    /// For each original variable: (column of positive part, column of negative part).
    var_map: Vec<(usize, Option<usize>)>,
    shifts: Vec<f64>,
    num_orig: usize,
}

impl StandardForm {
    fn build(problem: &LpProblem) -> Self {
        let n = problem.num_vars();
        let mut var_map = Vec::with_capacity(n);
        let mut shifts = vec![0.0; n];
        let mut next = 0usize;
        for j in 0..n {
            match problem.lower_bounds[j] {
                Some(b) => {
                    shifts[j] = b;
                    var_map.push((next, None));
                    next += 1;
                }
                None => {
                    var_map.push((next, Some(next + 1)));
                    next += 2;
                }
            }
        }
        let ncols = next;

        let negate_objective = problem.sense == Sense::Minimize;
        let mut objective = vec![0.0; ncols];
        for j in 0..n {
            let c = if negate_objective {
                -problem.objective[j]
            } else {
                problem.objective[j]
            };
            let (p, m) = var_map[j];
            objective[p] = c;
            if let Some(m) = m {
                objective[m] = -c;
            }
        }

        let constraints = problem
            .constraints
            .iter()
            .map(|c| {
                let mut coeffs = vec![0.0; ncols];
                let mut rhs = c.rhs;
                for j in 0..n {
                    let a = c.coeffs[j];
                    rhs -= a * shifts[j];
                    let (p, m) = var_map[j];
                    coeffs[p] = a;
                    if let Some(m) = m {
                        coeffs[m] = -a;
                    }
                }
                Constraint {
                    coeffs,
                    relation: c.relation,
                    rhs,
                }
            })
            .collect();

        Self {
            objective,
            constraints,
            var_map,
            shifts,
            num_orig: n,
        }
    }

    fn recover(&self, y: &[f64]) -> Vec<f64> {
        (0..self.num_orig)
            .map(|j| {
                let (p, m) = self.var_map[j];
                let v = y[p] - m.map_or(0.0, |m| y[m]);
                v + self.shifts[j]
            })
            .collect()
    }
}

enum TableauOutcome {
    Optimal,
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row for the current phase; last entry is the objective value.
    cost: Vec<f64>,
    basis: Vec<usize>,
    /// Structural (phase-2) objective coefficients, maximization sense.
    structural_obj: Vec<f64>,
    num_structural: usize,
    first_artificial: usize,
    ncols: usize,
    options: LpOptions,
    pivots: usize,
}

impl Tableau {
    fn new(form: &StandardForm, options: &LpOptions) -> Self {
        let m = form.constraints.len();
        let n = form.objective.len();

        // Count slack/surplus and artificial columns.
        let mut num_slack = 0;
        let mut num_art = 0;
        for c in &form.constraints {
            let flip = c.rhs < 0.0;
            let rel = effective_relation(c.relation, flip);
            match rel {
                Relation::Le => num_slack += 1,
                Relation::Ge => {
                    num_slack += 1;
                    num_art += 1;
                }
                Relation::Eq => num_art += 1,
            }
        }
        let first_artificial = n + num_slack;
        let ncols = first_artificial + num_art;

        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut slack_at = n;
        let mut art_at = first_artificial;
        for c in &form.constraints {
            let flip = c.rhs < 0.0;
            let sign = if flip { -1.0 } else { 1.0 };
            let mut row = vec![0.0; ncols + 1];
            for (j, &a) in c.coeffs.iter().enumerate() {
                row[j] = sign * a;
            }
            row[ncols] = sign * c.rhs;
            match effective_relation(c.relation, flip) {
                Relation::Le => {
                    row[slack_at] = 1.0;
                    basis.push(slack_at);
                    slack_at += 1;
                }
                Relation::Ge => {
                    row[slack_at] = -1.0;
                    slack_at += 1;
                    row[art_at] = 1.0;
                    basis.push(art_at);
                    art_at += 1;
                }
                Relation::Eq => {
                    row[art_at] = 1.0;
                    basis.push(art_at);
                    art_at += 1;
                }
            }
            rows.push(row);
        }

        // Phase-1 reduced costs: maximize -(sum of artificials). With the
        // artificials basic, the canonical cost row is the negated sum of
        // rows holding a basic artificial, with artificial columns zeroed.
        let mut cost = vec![0.0; ncols + 1];
        for (i, &b) in basis.iter().enumerate() {
            if b >= first_artificial {
                for j in 0..=ncols {
                    cost[j] -= rows[i][j];
                }
            }
        }
        for j in first_artificial..ncols {
            cost[j] = 0.0;
        }

        Self {
            rows,
            cost,
            basis,
            structural_obj: form.objective.clone(),
            num_structural: n,
            first_artificial,
            ncols,
            options: *options,
            pivots: 0,
        }
    }

    fn run(&mut self) -> Result<TableauOutcome, LpError> {
        // Phase 1.
        if self.first_artificial < self.ncols {
            if self.iterate(self.ncols)?.is_some() {
                unreachable!("phase 1 objective is bounded above by 0");
            }
            // cost[ncols] holds -(sum of artificials) at optimum.
            if -self.cost[self.ncols] > EPS_FEAS {
                return Ok(TableauOutcome::Infeasible);
            }
            self.drive_out_artificials();
        }

        // Phase 2: rebuild reduced costs for the real objective.
        self.install_phase2_costs();
        if self.iterate(self.first_artificial)?.is_some() {
            return Ok(TableauOutcome::Unbounded);
        }
        Ok(TableauOutcome::Optimal)
    }

    /// Pivots until optimal over columns `0..col_limit`. Returns `Some(col)`
    /// if an improving column has no positive entry (unbounded direction).
    fn iterate(&mut self, col_limit: usize) -> Result<Option<usize>, LpError> {
        loop {
            let use_bland = self.pivots >= self.options.bland_after;
            let entering = if use_bland {
                (0..col_limit).find(|&j| self.cost[j] < -EPS_PIVOT)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..col_limit {
                    let d = self.cost[j];
                    if d < -EPS_PIVOT && best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((j, d));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(col) = entering else {
                return Ok(None);
            };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][col];
                if a > EPS_PIVOT {
                    let ratio = self.rows[i][self.ncols] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Ok(Some(col));
            };
            self.pivot(row, col);
            self.pivots += 1;
            if self.pivots > self.options.max_pivots {
                return Err(LpError::PivotLimit(self.options.max_pivots));
            }
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col];
        let inv = 1.0 / piv;
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        // Pivot column becomes exactly a unit vector.
        self.rows[row][col] = 1.0;
        for i in 0..self.rows.len() {
            if i == row {
                continue;
            }
            let factor = self.rows[i][col];
            if factor != 0.0 {
                for j in 0..=self.ncols {
                    self.rows[i][j] -= factor * self.rows[row][j];
                }
                self.rows[i][col] = 0.0;
            }
        }
        let factor = self.cost[col];
        if factor != 0.0 {
            for j in 0..=self.ncols {
                self.cost[j] -= factor * self.rows[row][j];
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// After phase 1, pivots basic artificials out on any usable column so the
    /// phase-2 basis contains no artificial where avoidable. Rows where no
    /// pivot exists are redundant and left with the artificial basic at zero.
    fn drive_out_artificials(&mut self) {
        for i in 0..self.rows.len() {
            if self.basis[i] < self.first_artificial {
                continue;
            }
            let col = (0..self.first_artificial)
                .find(|&j| self.rows[i][j].abs() > EPS_PIVOT);
            if let Some(col) = col {
                self.pivot(i, col);
            }
        }
    }

    fn install_phase2_costs(&mut self) {
        // Reduced costs d_j = c_B B^{-1} A_j - c_j over the canonical tableau.
        let mut obj = vec![0.0; self.ncols];
        obj[..self.num_structural].copy_from_slice(&self.structural_obj);
        let mut cost = vec![0.0; self.ncols + 1];
        for j in 0..self.ncols {
            cost[j] = -obj[j];
        }
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = obj[b];
            if cb != 0.0 {
                for j in 0..=self.ncols {
                    cost[j] += cb * self.rows[i][j];
                }
            }
        }
        for &b in self.basis.iter() {
            cost[b] = 0.0;
        }
        // Artificial columns must never re-enter.
        for j in self.first_artificial..self.ncols {
            cost[j] = f64::INFINITY;
        }
        self.cost = cost;
    }

    fn extract(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.num_structural];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.num_structural {
                y[b] = self.rows[i][self.ncols];
            }
        }
        y
    }
}

fn effective_relation(rel: Relation, flipped: bool) -> Relation {
    if !flipped {
        return rel;
    }
    match rel {
        Relation::Le => Relation::Ge,
        Relation::Ge => Relation::Le,
        Relation::Eq => Relation::Eq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn le(coeffs: Vec<f64>, rhs: f64) -> (Vec<f64>, Relation, f64) {
        (coeffs, Relation::Le, rhs)
    }

    fn build(sense: Sense, obj: Vec<f64>, cons: Vec<(Vec<f64>, Relation, f64)>) -> LpProblem {
        let mut lp = LpProblem::new(sense, obj);
        for (c, r, b) in cons {
            lp.add_constraint(c, r, b);
        }
        lp
    }

    #[test]
    fn single_bound() {
        let lp = build(Sense::Maximize, vec![1.0], vec![le(vec![1.0], 3.0)]);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, 3.0, epsilon = EPS_OBJ);
        assert_abs_diff_eq!(sol.variable_values[0], 3.0, epsilon = EPS_OBJ);
        assert!(sol.tight_constraint_flags[0]);
    }

    #[test]
    fn unbounded_direction() {
        let lp = build(Sense::Maximize, vec![1.0], vec![(vec![1.0], Relation::Ge, 1.0)]);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn two_var_vertex_optimum() {
        // Vertices of the feasible region: (0,0), (4,0), (0,2), (3,1);
        // objective 3a+2b takes values 0, 12, 4, 11 -> max 12 at (4,0).
        let lp = build(
            Sense::Maximize,
            vec![3.0, 2.0],
            vec![le(vec![1.0, 1.0], 4.0), le(vec![1.0, 3.0], 6.0)],
        );
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, 12.0, epsilon = EPS_OBJ);
        assert_abs_diff_eq!(sol.variable_values[0], 4.0, epsilon = EPS_OBJ);
        assert_abs_diff_eq!(sol.variable_values[1], 0.0, epsilon = EPS_OBJ);
    }

    #[test]
    fn infeasible_system() {
        let lp = build(
            Sense::Maximize,
            vec![1.0],
            vec![le(vec![1.0], 1.0), (vec![1.0], Relation::Ge, 2.0)],
        );
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn minimization_with_equality() {
        let lp = build(
            Sense::Minimize,
            vec![2.0, 1.0],
            vec![(vec![1.0, 1.0], Relation::Eq, 5.0)],
        );
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, 5.0, epsilon = EPS_OBJ);
        assert_abs_diff_eq!(sol.variable_values[1], 5.0, epsilon = EPS_OBJ);
    }

    #[test]
    fn free_variable_goes_negative() {
        let mut lp = build(
            Sense::Minimize,
            vec![1.0],
            vec![(vec![1.0], Relation::Ge, -7.0)],
        );
        lp.set_free(0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.variable_values[0], -7.0, epsilon = EPS_OBJ);
    }

    #[test]
    fn negative_rhs_row() {
        // -x <= -2 means x >= 2.
        let lp = build(
            Sense::Minimize,
            vec![1.0],
            vec![le(vec![-1.0], -2.0)],
        );
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.variable_values[0], 2.0, epsilon = EPS_OBJ);
    }

    #[test]
    fn malformed_problem_is_a_usage_error() {
        let lp = build(Sense::Maximize, vec![1.0, 1.0], vec![le(vec![1.0], 1.0)]);
        assert!(matches!(solve_lp(&lp), Err(LpError::LengthMismatch { .. })));
        let lp = build(Sense::Maximize, vec![f64::NAN], vec![]);
        assert!(matches!(solve_lp(&lp), Err(LpError::NonFinite { .. })));
    }

    #[test]
    fn deterministic_repeat_solves() {
        let lp = build(
            Sense::Maximize,
            vec![3.0, 2.0, 1.0],
            vec![
                le(vec![1.0, 1.0, 1.0], 10.0),
                le(vec![2.0, 1.0, 0.0], 8.0),
                le(vec![0.0, 1.0, 3.0], 9.0),
            ],
        );
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        assert_eq!(a.variable_values, b.variable_values);
        assert_eq!(a.objective_value.to_bits(), b.objective_value.to_bits());
    }

    #[test]
    fn feasibility_of_optimal_solutions() {
        let lp = build(
            Sense::Maximize,
            vec![1.0, 2.0, -1.0],
            vec![
                le(vec![1.0, 1.0, 1.0], 6.0),
                (vec![1.0, -1.0, 2.0], Relation::Eq, 2.0),
                (vec![0.0, 1.0, 1.0], Relation::Ge, 1.0),
            ],
        );
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        for c in &lp.constraints {
            let activity: f64 = c
                .coeffs
                .iter()
                .zip(&sol.variable_values)
                .map(|(a, v)| a * v)
                .sum();
            match c.relation {
                Relation::Le => assert!(activity <= c.rhs + EPS_FEAS),
                Relation::Ge => assert!(activity >= c.rhs - EPS_FEAS),
                Relation::Eq => assert!((activity - c.rhs).abs() <= EPS_FEAS),
            }
        }
    }
}
