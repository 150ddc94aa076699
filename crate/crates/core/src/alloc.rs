//! End-to-end allocation modes, stage revenue splits, ranking, and the
//! comparison values derived from average cross-efficiencies.

use crate::dea::{average_cree, stage_submatrix, CrossEfficiencyMatrix, Stage};
use crate::game::{f_value, Coalition, GameError, SingletonUniverse, TuGame};
use crate::solvers::{solve_concept, Concept, SolveError, MAX_EXACT_PLAYERS};
use thiserror::Error;

/// Ties closer than this share a rank; matches the tables' printed precision.
pub const RANK_TIE_TOL: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Direct,
    Secondary,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Direct => write!(f, "direct"),
            Mode::Secondary => write!(f, "secondary"),
        }
    }
}

#[derive(Debug, Error)]
pub enum AllocError {
    #[error(
        "{k} players exceed the exact-computation limit of {MAX_EXACT_PLAYERS}; \
         use secondary mode, which solves each stage separately"
    )]
    SizeLimit { k: usize },
    #[error("degenerate cross-efficiency data: {0}")]
    Game(#[from] GameError),
    #[error("solver failure: {0}")]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PlayerRow {
    pub label: String,
    pub stage: u8,
    pub allocation: f64,
    pub rank: usize,
    pub avg_cree: f64,
    pub comparison: f64,
}

#[derive(Debug, Clone)]
pub struct AllocationReport {
    pub mode: Mode,
    pub concept: Concept,
    pub revenue: f64,
    pub r1: f64,
    pub r2: f64,
    /// First-level uniform excess bound, when the concept reports one.
    pub epsilon: Option<f64>,
    pub players: Vec<PlayerRow>,
}

impl AllocationReport {
    pub fn allocations(&self) -> Vec<f64> {
        self.players.iter().map(|p| p.allocation).collect()
    }

    pub fn stage_sum(&self, stage: Stage) -> f64 {
        self.players
            .iter()
            .filter(|p| p.stage == stage.index() as u8)
            .map(|p| p.allocation)
            .sum()
    }
}

fn stage_mask(cem: &CrossEfficiencyMatrix, stage: Stage) -> Coalition {
    cem.stage_players(stage)
        .into_iter()
        .fold(0u64, |m, i| m | (1 << i))
}

/// Splits R between the stage alliances in proportion to their f-values:
/// R₁ = f(N₁)·R / (f(N₁) + f(N₂)), R₂ = R − R₁.
pub fn stage_revenues(cem: &CrossEfficiencyMatrix, revenue: f64) -> Result<(f64, f64), AllocError> {
    let f1 = f_value(cem, stage_mask(cem, Stage::One));
    let f2 = f_value(cem, stage_mask(cem, Stage::Two));
    if f1 + f2 <= 0.0 {
        return Err(AllocError::Game(GameError::DegenerateGame));
    }
    let r1 = f1 * revenue / (f1 + f2);
    Ok((r1, revenue - r1))
}

/// Descending competition ranking; ties within `RANK_TIE_TOL` share the lower
/// rank number.
pub fn rank_rows(allocations: &[f64]) -> Vec<usize> {
    let n = allocations.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        allocations[b]
            .partial_cmp(&allocations[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0usize; n];
    let mut group_rank = 0usize;
    let mut group_leader = f64::INFINITY;
    for (pos, &i) in order.iter().enumerate() {
        if group_leader - allocations[i] > RANK_TIE_TOL {
            group_rank = pos + 1;
            group_leader = allocations[i];
        }
        ranks[i] = group_rank;
    }
    ranks
}

/// Scales average CREE values so the max-CREE player's comparison value
/// equals its own allocation; every other comparison follows the same
/// coefficient.
pub fn comparison_values(avg_crees: &[f64], allocations: &[f64]) -> Vec<f64> {
    assert_eq!(avg_crees.len(), allocations.len());
    let mut anchor = 0;
    for i in 1..avg_crees.len() {
        // Strict comparison keeps the lowest index on ties.
        if avg_crees[i] > avg_crees[anchor] {
            anchor = i;
        }
    }
    assert!(avg_crees[anchor] > 0.0, "max average CREE must be positive");
    let coefficient = allocations[anchor] / avg_crees[anchor];
    avg_crees.iter().map(|&a| coefficient * a).collect()
}

/// Per-player average CREE over the player's own stage submatrix, aligned to
/// the 2n matrix order.
pub fn stage_average_crees(cem: &CrossEfficiencyMatrix) -> Vec<f64> {
    let mut out = vec![0.0; cem.k()];
    for stage in [Stage::One, Stage::Two] {
        let sub = stage_submatrix(cem, stage);
        for (pos, player) in cem.stage_players(stage).into_iter().enumerate() {
            out[player] = average_cree(&sub, pos);
        }
    }
    out
}

fn assemble_report(
    cem: &CrossEfficiencyMatrix,
    mode: Mode,
    concept: Concept,
    revenue: f64,
    epsilon: Option<f64>,
    x: Vec<f64>,
) -> AllocationReport {
    let avg = stage_average_crees(cem);
    let comparisons = comparison_values(&avg, &x);
    let ranks = rank_rows(&x);
    let players = (0..cem.k())
        .map(|i| PlayerRow {
            label: cem.labels[i].clone(),
            stage: cem.stages[i].index() as u8,
            allocation: x[i],
            rank: ranks[i],
            avg_cree: avg[i],
            comparison: comparisons[i],
        })
        .collect();
    let mut report = AllocationReport {
        mode,
        concept,
        revenue,
        r1: 0.0,
        r2: 0.0,
        epsilon,
        players,
    };
    report.r1 = report.stage_sum(Stage::One);
    report.r2 = report.stage_sum(Stage::Two);
    report
}

/// Allocates R in one game over all 2n sub-DMUs.
pub fn direct_allocation(
    cem: &CrossEfficiencyMatrix,
    revenue: f64,
    concept: Concept,
    universe: SingletonUniverse,
) -> Result<AllocationReport, AllocError> {
    if cem.k() > MAX_EXACT_PLAYERS {
        return Err(AllocError::SizeLimit { k: cem.k() });
    }
    let game = TuGame::from_cem(cem, revenue, universe)?;
    let sol = solve_concept(&game, concept)?;
    Ok(assemble_report(
        cem,
        Mode::Direct,
        concept,
        revenue,
        sol.epsilon,
        sol.x,
    ))
}

/// Splits R into stage pots first, then allocates each pot within its stage.
pub fn secondary_allocation(
    cem: &CrossEfficiencyMatrix,
    revenue: f64,
    concept: Concept,
    universe: SingletonUniverse,
) -> Result<AllocationReport, AllocError> {
    let n1 = cem.stage_players(Stage::One).len();
    let n2 = cem.stage_players(Stage::Two).len();
    if n1.max(n2) > MAX_EXACT_PLAYERS {
        return Err(AllocError::SizeLimit { k: n1.max(n2) });
    }
    let (r1, r2) = stage_revenues(cem, revenue)?;
    let mut x = vec![0.0; cem.k()];
    let mut epsilon = None;
    for (stage, pot) in [(Stage::One, r1), (Stage::Two, r2)] {
        let sub = stage_submatrix(cem, stage);
        let game = TuGame::from_cem(&sub, pot, universe)?;
        let sol = solve_concept(&game, concept)?;
        for (pos, player) in cem.stage_players(stage).into_iter().enumerate() {
            x[player] = sol.x[pos];
        }
        if stage == Stage::One {
            epsilon = sol.epsilon;
        }
    }
    Ok(assemble_report(
        cem,
        Mode::Secondary,
        concept,
        revenue,
        epsilon,
        x,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dea::cem_from_parts;
    use approx::assert_abs_diff_eq;

    fn symmetric_cem() -> CrossEfficiencyMatrix {
        // Two identical stage blocks over 2 DMUs.
        #[rustfmt::skip]
        let values = vec![
            0.5, 0.8, 0.0, 0.0,
            0.4, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.5, 0.8,
            0.0, 0.0, 0.4, 1.0,
        ];
        cem_from_parts(
            values,
            vec!["a.1".into(), "b.1".into(), "a.2".into(), "b.2".into()],
            vec![Stage::One, Stage::One, Stage::Two, Stage::Two],
        )
    }

    #[test]
    fn identical_stages_split_evenly() {
        let (r1, r2) = stage_revenues(&symmetric_cem(), 100.0).unwrap();
        assert_abs_diff_eq!(r1, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r2, 50.0, epsilon = 1e-9);
    }

    #[test]
    fn rank_tie_semantics() {
        assert_eq!(rank_rows(&[10.0, 10.0, 5.0]), vec![1, 1, 3]);
        assert_eq!(rank_rows(&[3.0, 2.0, 1.0]), vec![1, 2, 3]);
        assert_eq!(rank_rows(&[1.0, 2.0, 3.0]), vec![3, 2, 1]);
        // Within the tie tolerance counts as equal.
        assert_eq!(rank_rows(&[10.0, 9.999, 5.0]), vec![1, 1, 3]);
    }

    #[test]
    fn comparison_anchor_equals_own_allocation() {
        let avg = vec![0.5, 1.0, 0.25];
        let alloc = vec![10.0, 40.0, 12.0];
        let cmp = comparison_values(&avg, &alloc);
        assert_abs_diff_eq!(cmp[1], 40.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cmp[0], 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cmp[2], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn all_equal_averages_share_the_anchor_allocation() {
        let cmp = comparison_values(&[0.4, 0.4, 0.4], &[7.0, 5.0, 3.0]);
        for v in cmp {
            assert_abs_diff_eq!(v, 7.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn report_conserves_revenue() {
        let cem = symmetric_cem();
        for concept in [Concept::Shapley, Concept::LeastCore, Concept::Nucleolus] {
            for report in [
                direct_allocation(&cem, 100.0, concept, SingletonUniverse::MatrixPlayers).unwrap(),
                secondary_allocation(&cem, 100.0, concept, SingletonUniverse::FullSet).unwrap(),
            ] {
                let total: f64 = report.allocations().iter().sum();
                assert_abs_diff_eq!(total, 100.0, epsilon = 1e-6);
                assert_abs_diff_eq!(report.r1 + report.r2, 100.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn size_limit_points_to_secondary() {
        let k = 26;
        let values = vec![0.0; k * k];
        let labels = (0..k).map(|i| format!("{}.1", i + 1)).collect();
        let stages = (0..k)
            .map(|i| if i < k / 2 { Stage::One } else { Stage::Two })
            .collect();
        let cem = cem_from_parts(values, labels, stages);
        let err = direct_allocation(&cem, 100.0, Concept::Shapley, SingletonUniverse::MatrixPlayers);
        assert!(matches!(err, Err(AllocError::SizeLimit { k: 26 })));
    }
}
