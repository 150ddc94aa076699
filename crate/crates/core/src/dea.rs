//! Panel normalization, the 2n sub-DMU transformation, and the aggressive
//! cross-efficiency matrix.

use crate::lp::{solve_lp, LpError, LpProblem, LpSolution, LpStatus, Relation, Sense, EPS_FEAS};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn index(self) -> usize {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Debug, Error)]
pub enum DeaError {
    #[error("panel needs at least 2 DMUs, got {0}")]
    TooFewDmus(usize),
    #[error("panel dimensions must all be at least 1")]
    EmptyDimension,
    #[error("non-positive entry {value} at DMU {dmu}, column {column}")]
    NonPositiveEntry {
        dmu: String,
        column: String,
        value: f64,
    },
    #[error("column {0} sums to zero, cannot normalize")]
    ZeroColumnSum(String),
    #[error("duplicate DMU id {0}")]
    DuplicateId(String),
    #[error("LP for evaluator {d}, target {l} came back {status:?}")]
    DegenerateModel {
        d: usize,
        l: usize,
        status: LpStatus,
    },
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Raw or normalized panel of n two-stage DMUs: n×s initial inputs, n×q
/// intermediates, n×t final outputs.
#[derive(Debug, Clone)]
pub struct DmuPanel {
    pub dmu_ids: Vec<String>,
    pub s: usize,
    pub q: usize,
    pub t: usize,
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl DmuPanel {
    pub fn new(
        dmu_ids: Vec<String>,
        (s, q, t): (usize, usize, usize),
        x: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
    ) -> Result<Self, DeaError> {
        if s == 0 || q == 0 || t == 0 {
            return Err(DeaError::EmptyDimension);
        }
        let n = dmu_ids.len();
        if n < 2 {
            return Err(DeaError::TooFewDmus(n));
        }
        assert_eq!(x.len(), n);
        assert_eq!(z.len(), n);
        assert_eq!(y.len(), n);
        let panel = Self {
            dmu_ids,
            s,
            q,
            t,
            x,
            z,
            y,
        };
        panel.check_positive()?;
        let mut seen = std::collections::HashSet::new();
        for id in &panel.dmu_ids {
            if !seen.insert(id.clone()) {
                return Err(DeaError::DuplicateId(id.clone()));
            }
        }
        Ok(panel)
    }

    pub fn n(&self) -> usize {
        self.dmu_ids.len()
    }

    fn check_positive(&self) -> Result<(), DeaError> {
        let blocks: [(&str, &Vec<Vec<f64>>, usize); 3] = [
            ("x", &self.x, self.s),
            ("z", &self.z, self.q),
            ("y", &self.y, self.t),
        ];
        for (name, block, width) in blocks {
            for (j, row) in block.iter().enumerate() {
                assert_eq!(row.len(), width, "row width mismatch in {name}");
                for (c, &v) in row.iter().enumerate() {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(DeaError::NonPositiveEntry {
                            dmu: self.dmu_ids[j].clone(),
                            column: format!("{name}{}", c + 1),
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Divides every column by its column sum, so each measure column of the
/// returned panel sums to 1.
pub fn normalize_panel(panel: &DmuPanel) -> Result<DmuPanel, DeaError> {
    let mut out = panel.clone();
    for (name, block) in [("x", &mut out.x), ("z", &mut out.z), ("y", &mut out.y)] {
        let width = block[0].len();
        for c in 0..width {
            let sum: f64 = block.iter().map(|row| row[c]).sum();
            if !(sum > 0.0) {
                return Err(DeaError::ZeroColumnSum(format!("{name}{}", c + 1)));
            }
            for row in block.iter_mut() {
                row[c] /= sum;
            }
        }
    }
    Ok(out)
}

/// A single-stage unit in the common (s+q)-input, (q+t)-output space.
#[derive(Debug, Clone)]
pub struct SubDmu {
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
    pub dmu_index: usize,
    pub stage: Stage,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct SubDmuSet {
    pub units: Vec<SubDmu>,
    pub s: usize,
    pub q: usize,
    pub t: usize,
}

impl SubDmuSet {
    pub fn k(&self) -> usize {
        self.units.len()
    }
}

/// Zero-pads each DMU's two stages into 2n single-stage units. Stage-1 units
/// come first (indices 0..n), stage-2 units next (n..2n).
pub fn split_to_subdmus(panel: &DmuPanel) -> SubDmuSet {
    let n = panel.n();
    let (s, q, t) = (panel.s, panel.q, panel.t);
    let mut units = Vec::with_capacity(2 * n);
    for j in 0..n {
        let mut inputs = panel.x[j].clone();
        inputs.extend(std::iter::repeat(0.0).take(q));
        let mut outputs = panel.z[j].clone();
        outputs.extend(std::iter::repeat(0.0).take(t));
        units.push(SubDmu {
            inputs,
            outputs,
            dmu_index: j,
            stage: Stage::One,
            label: format!("{}.1", panel.dmu_ids[j]),
        });
    }
    for j in 0..n {
        let mut inputs = vec![0.0; s];
        inputs.extend_from_slice(&panel.z[j]);
        let mut outputs = vec![0.0; q];
        outputs.extend_from_slice(&panel.y[j]);
        units.push(SubDmu {
            inputs,
            outputs,
            dmu_index: j,
            stage: Stage::Two,
            label: format!("{}.2", panel.dmu_ids[j]),
        });
    }
    SubDmuSet { units, s, q, t }
}

/// k×k matrix of aggressive cross-efficiencies, row d = evaluator, column l =
/// target.
#[derive(Debug, Clone)]
pub struct CrossEfficiencyMatrix {
    k: usize,
    values: Vec<f64>,
    pub labels: Vec<String>,
    pub stages: Vec<Stage>,
}

impl CrossEfficiencyMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn at(&self, d: usize, l: usize) -> f64 {
        self.values[d * self.k + l]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.k)
    }

    /// Players of a given stage, in matrix order.
    pub fn stage_players(&self, stage: Stage) -> Vec<usize> {
        (0..self.k).filter(|&i| self.stages[i] == stage).collect()
    }
}

/// CCR self-efficiency of unit d.
pub fn ccr_efficiency(units: &SubDmuSet, d: usize) -> Result<f64, DeaError> {
    let (num_out, num_in) = (units.q + units.t, units.s + units.q);
    let mut objective = vec![0.0; num_out + num_in];
    objective[..num_out].copy_from_slice(&units.units[d].outputs);
    let mut lp = LpProblem::new(Sense::Maximize, objective);
    for unit in &units.units {
        lp.add_constraint(ratio_row(unit, num_out, num_in), Relation::Le, 0.0);
    }
    let mut norm = vec![0.0; num_out + num_in];
    norm[num_out..].copy_from_slice(&units.units[d].inputs);
    lp.add_constraint(norm, Relation::Eq, 1.0);

    let sol = solve_lp(&lp)?;
    expect_optimal(&sol, d, d)?;
    Ok(sol.objective_value.clamp(0.0, 1.0))
}

/// Aggressive cross-efficiency of target l under evaluator d: minimizes d's
/// evaluation of l while holding d's self-efficiency at `theta_d`.
pub fn aggressive_cross_efficiency(
    units: &SubDmuSet,
    d: usize,
    l: usize,
    theta_d: f64,
) -> Result<f64, DeaError> {
    match aggressive_lp(units, d, l, theta_d, 0.0) {
        Ok(v) => Ok(v),
        // A theta at the edge of feasibility can trip the equality constraint;
        // retry once with the self-efficiency pin relaxed.
        Err(DeaError::DegenerateModel { .. }) => aggressive_lp(units, d, l, theta_d, 1e-7),
        Err(e) => Err(e),
    }
}

fn aggressive_lp(
    units: &SubDmuSet,
    d: usize,
    l: usize,
    theta_d: f64,
    relax: f64,
) -> Result<f64, DeaError> {
    let (num_out, num_in) = (units.q + units.t, units.s + units.q);
    let mut objective = vec![0.0; num_out + num_in];
    objective[..num_out].copy_from_slice(&units.units[l].outputs);
    let mut lp = LpProblem::new(Sense::Minimize, objective);
    for unit in &units.units {
        lp.add_constraint(ratio_row(unit, num_out, num_in), Relation::Le, 0.0);
    }
    let mut norm = vec![0.0; num_out + num_in];
    norm[num_out..].copy_from_slice(&units.units[l].inputs);
    lp.add_constraint(norm, Relation::Eq, 1.0);

    // theta_d * (omega . x_d) - mu . y_d = 0 pins d's self-efficiency.
    let mut pin = vec![0.0; num_out + num_in];
    for (r, &y) in units.units[d].outputs.iter().enumerate() {
        pin[r] = -y;
    }
    for (k, &x) in units.units[d].inputs.iter().enumerate() {
        pin[num_out + k] = theta_d * x;
    }
    if relax == 0.0 {
        lp.add_constraint(pin, Relation::Eq, 0.0);
    } else {
        lp.add_constraint(pin.clone(), Relation::Le, relax);
        lp.add_constraint(pin, Relation::Ge, -relax);
    }

    let sol = solve_lp(&lp)?;
    expect_optimal(&sol, d, l)?;
    let value = sol.objective_value;
    debug_assert!(value > -1e-6 && value < 1.0 + 1e-6);
    Ok(value.clamp(0.0, 1.0))
}

fn ratio_row(unit: &SubDmu, num_out: usize, num_in: usize) -> Vec<f64> {
    let mut row = vec![0.0; num_out + num_in];
    row[..num_out].copy_from_slice(&unit.outputs);
    for (k, &x) in unit.inputs.iter().enumerate() {
        row[num_out + k] = -x;
    }
    row
}

fn expect_optimal(sol: &LpSolution, d: usize, l: usize) -> Result<(), DeaError> {
    if sol.status != LpStatus::Optimal {
        return Err(DeaError::DegenerateModel {
            d,
            l,
            status: sol.status,
        });
    }
    Ok(())
}

/// Builds the full k×k cross-efficiency matrix. Entries are independent LP
/// solves over immutable data; results do not depend on evaluation order.
pub fn build_cem(units: &SubDmuSet) -> Result<CrossEfficiencyMatrix, DeaError> {
    let k = units.k();
    let mut values = vec![0.0; k * k];
    for d in 0..k {
        let theta = ccr_efficiency(units, d)?;
        for l in 0..k {
            values[d * k + l] = if d == l {
                theta
            } else {
                aggressive_cross_efficiency(units, d, l, theta)?
            };
        }
    }
    Ok(CrossEfficiencyMatrix {
        k,
        values,
        labels: units.units.iter().map(|u| u.label.clone()).collect(),
        stages: units.units.iter().map(|u| u.stage).collect(),
    })
}

/// The n×n block of same-stage entries of a 2n-unit matrix.
pub fn stage_submatrix(cem: &CrossEfficiencyMatrix, stage: Stage) -> CrossEfficiencyMatrix {
    let players = cem.stage_players(stage);
    let k = players.len();
    let mut values = Vec::with_capacity(k * k);
    for &d in &players {
        for &l in &players {
            values.push(cem.at(d, l));
        }
    }
    CrossEfficiencyMatrix {
        k,
        values,
        labels: players.iter().map(|&i| cem.labels[i].clone()).collect(),
        stages: vec![stage; k],
    }
}

/// Arithmetic mean of column i over all k evaluators, self included.
pub fn average_cree(cem: &CrossEfficiencyMatrix, i: usize) -> f64 {
    let k = cem.k();
    (0..k).map(|d| cem.at(d, i)).sum::<f64>() / k as f64
}

/// Constructs a matrix directly from values; test and I/O helper.
pub fn cem_from_parts(
    values: Vec<f64>,
    labels: Vec<String>,
    stages: Vec<Stage>,
) -> CrossEfficiencyMatrix {
    let k = labels.len();
    assert_eq!(values.len(), k * k);
    assert_eq!(stages.len(), k);
    CrossEfficiencyMatrix {
        k,
        values,
        labels,
        stages,
    }
}

/// True when every cross-stage entry is at most `EPS_FEAS`.
pub fn has_zero_cross_stage_block(cem: &CrossEfficiencyMatrix) -> bool {
    let k = cem.k();
    (0..k).all(|d| {
        (0..k).all(|l| cem.stages[d] == cem.stages[l] || cem.at(d, l) <= EPS_FEAS)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn panel(ids: &[&str], dims: (usize, usize, usize), rows: &[&[f64]]) -> DmuPanel {
        let (s, q, t) = dims;
        let x = rows.iter().map(|r| r[..s].to_vec()).collect();
        let z = rows.iter().map(|r| r[s..s + q].to_vec()).collect();
        let y = rows.iter().map(|r| r[s + q..s + q + t].to_vec()).collect();
        DmuPanel::new(ids.iter().map(|s| s.to_string()).collect(), dims, x, z, y).unwrap()
    }

    #[test]
    fn normalize_equal_column() {
        let p = panel(
            &["a", "b", "c"],
            (1, 1, 1),
            &[&[2.0, 1.0, 1.0], &[2.0, 3.0, 1.0], &[2.0, 4.0, 2.0]],
        );
        let n = normalize_panel(&p).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(n.x[j][0], 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(n.z[0][0], 1.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n.z[1][0], 3.0 / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn normalize_two_rows() {
        let p = panel(&["a", "b"], (1, 1, 1), &[&[1.0, 1.0, 1.0], &[3.0, 1.0, 1.0]]);
        let n = normalize_panel(&p).unwrap();
        assert_abs_diff_eq!(n.x[0][0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(n.x[1][0], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn split_layout() {
        let p = panel(&["a", "b"], (1, 1, 1), &[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let set = split_to_subdmus(&p);
        assert_eq!(set.k(), 4);
        assert_eq!(set.units[0].inputs, vec![1.0, 0.0]);
        assert_eq!(set.units[0].outputs, vec![2.0, 0.0]);
        assert_eq!(set.units[0].label, "a.1");
        assert_eq!(set.units[2].inputs, vec![0.0, 2.0]);
        assert_eq!(set.units[2].outputs, vec![0.0, 3.0]);
        assert_eq!(set.units[2].label, "a.2");
        assert_eq!(set.units[3].stage, Stage::Two);
    }

    #[test]
    fn identical_units_are_efficient() {
        let p = panel(&["a", "b"], (1, 1, 1), &[&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]]);
        let set = split_to_subdmus(&normalize_panel(&p).unwrap());
        for d in 0..4 {
            assert_abs_diff_eq!(ccr_efficiency(&set, d).unwrap(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn n1_matrix_is_diagonal_across_stages() {
        let p = panel(&["a", "b"], (1, 1, 1), &[&[1.0, 2.0, 1.0], &[2.0, 1.0, 3.0]]);
        let set = split_to_subdmus(&normalize_panel(&p).unwrap());
        let cem = build_cem(&set).unwrap();
        assert!(has_zero_cross_stage_block(&cem));
        for d in 0..4 {
            assert!(cem.at(d, d) > 0.0);
        }
    }

    #[test]
    fn diagonal_matches_ccr() {
        let p = panel(
            &["a", "b", "c"],
            (2, 1, 1),
            &[
                &[3.0, 1.0, 2.0, 1.0],
                &[1.0, 2.0, 1.0, 3.0],
                &[2.0, 2.0, 3.0, 2.0],
            ],
        );
        let set = split_to_subdmus(&normalize_panel(&p).unwrap());
        let cem = build_cem(&set).unwrap();
        for d in 0..set.k() {
            let theta = ccr_efficiency(&set, d).unwrap();
            assert_abs_diff_eq!(cem.at(d, d), theta, epsilon = 1e-7);
        }
    }

    #[test]
    fn cross_never_exceeds_self_ccr() {
        let p = panel(
            &["a", "b", "c"],
            (1, 2, 1),
            &[
                &[5.0, 1.0, 2.0, 2.0],
                &[3.0, 2.0, 1.0, 4.0],
                &[4.0, 3.0, 3.0, 1.0],
            ],
        );
        let set = split_to_subdmus(&normalize_panel(&p).unwrap());
        let cem = build_cem(&set).unwrap();
        for d in 0..set.k() {
            for l in 0..set.k() {
                assert!(cem.at(l, d) <= cem.at(d, d) + 1e-7);
            }
        }
    }

    #[test]
    fn stage_submatrix_projects() {
        let p = panel(&["a", "b"], (1, 1, 1), &[&[1.0, 2.0, 1.0], &[2.0, 1.0, 3.0]]);
        let set = split_to_subdmus(&normalize_panel(&p).unwrap());
        let cem = build_cem(&set).unwrap();
        let s1 = stage_submatrix(&cem, Stage::One);
        assert_eq!(s1.k(), 2);
        assert_eq!(s1.at(0, 1), cem.at(0, 1));
        assert_eq!(s1.labels, vec!["a.1", "b.1"]);
    }

    #[test]
    fn average_of_constant_column() {
        let cem = cem_from_parts(
            vec![0.5, 0.3, 0.5, 0.7],
            vec!["a.1".into(), "b.1".into()],
            vec![Stage::One, Stage::One],
        );
        assert_abs_diff_eq!(average_cree(&cem, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(average_cree(&cem, 1), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_zero_entries() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let err = DmuPanel::new(
            ids,
            (1, 1, 1),
            vec![vec![1.0], vec![0.0]],
            vec![vec![1.0], vec![1.0]],
            vec![vec![1.0], vec![1.0]],
        );
        assert!(matches!(err, Err(DeaError::NonPositiveEntry { .. })));
    }

    #[test]
    fn rejects_single_dmu() {
        let err = DmuPanel::new(
            vec!["a".to_string()],
            (1, 1, 1),
            vec![vec![1.0]],
            vec![vec![1.0]],
            vec![vec![1.0]],
        );
        assert!(matches!(err, Err(DeaError::TooFewDmus(1))));
    }
}
