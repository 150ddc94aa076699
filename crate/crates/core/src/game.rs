//! Transferable-utility game built from a cross-efficiency matrix, plus the
//! structural checks (super-additivity, core non-emptiness).

use crate::dea::{CrossEfficiencyMatrix, Stage};
use crate::lp::EPS_FEAS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Bitmask coalition encoding: bit i set iff player i is in the coalition.
pub type Coalition = u64;

/// Largest player count for which the coalition value table is precomputed
/// densely (2^k scalars). Larger games fall back to per-call evaluation.
pub const DENSE_TABLE_MAX: usize = 24;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("degenerate game: f(N) = 0")]
    DegenerateGame,
    #[error("game with {0} players exceeds the dense table limit of {DENSE_TABLE_MAX}")]
    TooManyPlayers(usize),
}

/// Evaluator universe for the singleton-coalition minimum.
///
/// `MatrixPlayers` takes the min over the evaluators of the matrix the game
/// was built from: the full 2n set in direct mode, the stage's n players in
/// secondary mode. `FullSet` models the min over all 2n sub-DMUs even inside
/// a per-stage game; cross-stage evaluations are zero, so every singleton is
/// worth 0 under this rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingletonUniverse {
    MatrixPlayers,
    FullSet,
}

pub fn full_coalition(k: usize) -> Coalition {
    if k == 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

/// Cross-efficiency of participant `i` inside coalition `coalition`: the best
/// peer evaluation inside the coalition, or the worst peer evaluation over the
/// whole matrix for singletons.
pub fn coalition_cree(cem: &CrossEfficiencyMatrix, coalition: Coalition, i: usize) -> f64 {
    assert!(coalition & (1 << i) != 0, "player {i} not in coalition");
    let k = cem.k();
    if coalition.count_ones() >= 2 {
        let mut best = 0.0f64;
        for d in 0..k {
            if d != i && coalition & (1 << d) != 0 {
                best = best.max(cem.at(d, i));
            }
        }
        best
    } else {
        (0..k)
            .filter(|&d| d != i)
            .map(|d| cem.at(d, i))
            .fold(f64::INFINITY, f64::min)
    }
}

/// f(S): sum of the coalition cross-efficiencies of all members.
pub fn f_value(cem: &CrossEfficiencyMatrix, coalition: Coalition) -> f64 {
    assert!(coalition != 0, "empty coalition");
    let k = cem.k();
    (0..k)
        .filter(|&i| coalition & (1 << i) != 0)
        .map(|i| coalition_cree(cem, coalition, i))
        .sum()
}

/// v(S) = f(S)·R / f(N). Returns R exactly for the grand coalition.
pub fn char_value(
    cem: &CrossEfficiencyMatrix,
    coalition: Coalition,
    revenue: f64,
) -> Result<f64, GameError> {
    let full = full_coalition(cem.k());
    if coalition == full {
        return Ok(revenue);
    }
    let f_total = f_value(cem, full);
    if f_total <= 0.0 {
        return Err(GameError::DegenerateGame);
    }
    Ok(f_value(cem, coalition) * revenue / f_total)
}

/// Dense table of f(S) over all 2^k coalitions.
#[derive(Debug, Clone)]
pub struct CoalitionValueTable {
    f: Vec<f64>,
}

impl CoalitionValueTable {
    pub fn build(
        cem: &CrossEfficiencyMatrix,
        universe: SingletonUniverse,
    ) -> Result<Self, GameError> {
        let k = cem.k();
        if k > DENSE_TABLE_MAX {
            return Err(GameError::TooManyPlayers(k));
        }
        let mut f = vec![0.0; 1usize << k];
        for mask in 1u64..(1u64 << k) {
            f[mask as usize] = if mask.count_ones() == 1 {
                match universe {
                    SingletonUniverse::MatrixPlayers => {
                        f_value(cem, mask)
                    }
                    // Cross-stage evaluators contribute zeros to the min.
                    SingletonUniverse::FullSet => 0.0,
                }
            } else {
                f_value(cem, mask)
            };
        }
        Ok(Self { f })
    }

    pub fn get(&self, coalition: Coalition) -> f64 {
        self.f[coalition as usize]
    }
}

#[derive(Debug, Clone)]
enum GameValues {
    /// CREE-derived game: v(S) = f(S)·R / f(N).
    Cree { table: CoalitionValueTable, f_total: f64 },
    /// Directly specified characteristic values, indexed by coalition mask.
    Explicit { v: Vec<f64> },
}

/// A TU-game over k players with total revenue v(N).
#[derive(Debug, Clone)]
pub struct TuGame {
    player_count: usize,
    revenue: f64,
    values: GameValues,
    stages: Option<Vec<Stage>>,
}

impl TuGame {
    pub fn from_cem(
        cem: &CrossEfficiencyMatrix,
        revenue: f64,
        universe: SingletonUniverse,
    ) -> Result<Self, GameError> {
        let table = CoalitionValueTable::build(cem, universe)?;
        let f_total = table.get(full_coalition(cem.k()));
        if f_total <= 0.0 {
            return Err(GameError::DegenerateGame);
        }
        Ok(Self {
            player_count: cem.k(),
            revenue,
            values: GameValues::Cree { table, f_total },
            stages: Some(cem.stages.clone()),
        })
    }

    /// Builds a game from explicit coalition values; `v` must have 2^k entries
    /// with `v[0] = 0`. The grand-coalition value doubles as the revenue.
    pub fn from_values(v: Vec<f64>) -> Self {
        let k = v.len().trailing_zeros() as usize;
        assert_eq!(v.len(), 1 << k, "value table length must be a power of two");
        assert_eq!(v[0], 0.0, "v(empty) must be 0");
        let revenue = v[v.len() - 1];
        Self {
            player_count: k,
            revenue,
            values: GameValues::Explicit { v },
            stages: None,
        }
    }

    pub fn player_count(&self) -> usize {
        self.player_count
    }

    pub fn revenue(&self) -> f64 {
        self.revenue
    }

    pub fn full_coalition(&self) -> Coalition {
        full_coalition(self.player_count)
    }

    pub fn stages(&self) -> Option<&[Stage]> {
        self.stages.as_deref()
    }

    pub fn value(&self, coalition: Coalition) -> f64 {
        if coalition == 0 {
            return 0.0;
        }
        match &self.values {
            GameValues::Cree { table, f_total } => {
                if coalition == self.full_coalition() {
                    self.revenue
                } else {
                    table.get(coalition) * self.revenue / f_total
                }
            }
            GameValues::Explicit { v } => v[coalition as usize],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuperadditivityReport {
    pub holds: bool,
    pub counterexample: Option<(Coalition, Coalition)>,
    pub pairs_checked: u64,
    pub exhaustive: bool,
}

/// Checks v(S₁ ∪ S₂) ≥ v(S₁) + v(S₂) for disjoint pairs: exhaustively when
/// k ≤ `exhaustive_limit`, otherwise on `sample_pairs` seeded random pairs.
pub fn check_superadditive(
    game: &TuGame,
    exhaustive_limit: usize,
    sample_pairs: u64,
    seed: u64,
) -> SuperadditivityReport {
    let k = game.player_count;
    let tol = 1e-9;
    let mut pairs_checked = 0u64;
    if k <= exhaustive_limit {
        let full = game.full_coalition();
        let mut s1: Coalition = 1;
        while s1 <= full {
            // Enumerate subsets of the complement of s1.
            let comp = full & !s1;
            let mut s2 = comp;
            loop {
                if s2 != 0 {
                    pairs_checked += 1;
                    if game.value(s1 | s2) < game.value(s1) + game.value(s2) - tol {
                        return SuperadditivityReport {
                            holds: false,
                            counterexample: Some((s1, s2)),
                            pairs_checked,
                            exhaustive: true,
                        };
                    }
                }
                if s2 == 0 {
                    break;
                }
                s2 = (s2 - 1) & comp;
            }
            s1 += 1;
        }
        SuperadditivityReport {
            holds: true,
            counterexample: None,
            pairs_checked,
            exhaustive: true,
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = game.full_coalition();
        for _ in 0..sample_pairs {
            let s1 = rng.gen::<u64>() & full;
            let s2 = rng.gen::<u64>() & full & !s1;
            if s1 == 0 || s2 == 0 {
                continue;
            }
            pairs_checked += 1;
            if game.value(s1 | s2) < game.value(s1) + game.value(s2) - tol {
                return SuperadditivityReport {
                    holds: false,
                    counterexample: Some((s1, s2)),
                    pairs_checked,
                    exhaustive: false,
                };
            }
        }
        SuperadditivityReport {
            holds: true,
            counterexample: None,
            pairs_checked,
            exhaustive: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoreReport {
    pub nonempty: bool,
    pub epsilon: f64,
    pub witness: Vec<f64>,
}

/// Solves the least-core LP; the core is nonempty iff the optimal uniform
/// slack is nonnegative (within tolerance). The witness is the optimal x.
pub fn check_core_nonempty(game: &TuGame) -> Result<CoreReport, crate::solvers::SolveError> {
    let sol = crate::solvers::least_core(game)?;
    let epsilon = sol.epsilon.expect("least core always reports epsilon");
    Ok(CoreReport {
        nonempty: epsilon >= -EPS_FEAS,
        epsilon,
        witness: sol.x,
    })
}
