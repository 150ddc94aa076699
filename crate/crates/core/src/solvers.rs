//! Cooperative-game solution concepts: Shapley value, least core, nucleolus.
//!
//! The least-core and nucleolus LPs have 2^k − 2 coalition constraints but
//! only k+1 variables, so they are solved by constraint generation: a small
//! working set of rows is kept in the dense simplex, violated coalitions are
//! found by a full scan over the value table and appended until none remain.

use crate::game::{Coalition, TuGame};
use crate::lp::{solve_lp, LpError, LpProblem, LpStatus, Relation, Sense};
use std::collections::VecDeque;
use thiserror::Error;

/// Largest game solved by the exact paths (2^k coalitions enumerated).
pub const MAX_EXACT_PLAYERS: usize = 24;

const TOL_VIOLATION: f64 = 1e-9;
const TOL_TIGHT: f64 = 1e-7;
/// At most this many violated coalitions join the working set per re-solve.
const ADD_PER_ROUND: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Concept {
    Shapley,
    LeastCore,
    Nucleolus,
}

impl std::fmt::Display for Concept {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Concept::Shapley => write!(f, "shapley"),
            Concept::LeastCore => write!(f, "leastcore"),
            Concept::Nucleolus => write!(f, "nucleolus"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolutionVector {
    pub concept: Concept,
    pub x: Vec<f64>,
    /// First-level uniform excess bound; absent for Shapley.
    pub epsilon: Option<f64>,
    pub iterations: usize,
    pub fixed_coalitions: usize,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("game with {k} players exceeds the exact-computation limit of {max}")]
    UnsupportedSize { k: usize, max: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

fn check_size(game: &TuGame) -> Result<(), SolveError> {
    let k = game.player_count();
    if k > MAX_EXACT_PLAYERS {
        return Err(SolveError::UnsupportedSize {
            k,
            max: MAX_EXACT_PLAYERS,
        });
    }
    Ok(())
}

fn binom(n: usize, r: usize) -> f64 {
    let r = r.min(n - r);
    let mut acc = 1.0f64;
    for i in 0..r {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Exact Shapley value by subset enumeration, followed by the proportional
/// rescaling x_i = φ_i·R/Σφ (a checked no-op, since Σφ = v(N) = R).
pub fn shapley(game: &TuGame) -> Result<SolutionVector, SolveError> {
    check_size(game)?;
    let k = game.player_count();
    let weights: Vec<f64> = (0..k)
        .map(|s| 1.0 / (k as f64 * binom(k - 1, s)))
        .collect();
    let mut phi = vec![0.0; k];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        for mask in 0..(1u64 << k) {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            *phi_i += weights[s] * (game.value(mask | bit) - game.value(mask));
        }
    }
    let total: f64 = phi.iter().sum();
    let revenue = game.revenue();
    if (total - revenue).abs() > 1e-6 {
        return Err(SolveError::Numerical(format!(
            "Shapley efficiency check failed: sum of contributions {total} vs revenue {revenue}"
        )));
    }
    let x = phi.iter().map(|p| p * revenue / total).collect();
    Ok(SolutionVector {
        concept: Concept::Shapley,
        x,
        epsilon: None,
        iterations: 1,
        fixed_coalitions: 0,
    })
}

/// Implicit constraint set of the successive nucleolus LPs: every proper
/// nonempty coalition, minus those fixed as equalities at an earlier level.
struct ConstraintPool<'a> {
    game: &'a TuGame,
    removed: Vec<bool>,
    fixed: Vec<(Coalition, f64)>,
    remaining: usize,
}

impl<'a> ConstraintPool<'a> {
    fn new(game: &'a TuGame) -> Self {
        let k = game.player_count();
        let size = 1usize << k;
        let mut removed = vec![false; size];
        removed[0] = true;
        removed[size - 1] = true;
        Self {
            game,
            removed,
            fixed: Vec::new(),
            remaining: size - 2,
        }
    }

    fn fix(&mut self, coalition: Coalition, eps_level: f64) {
        debug_assert!(!self.removed[coalition as usize]);
        self.removed[coalition as usize] = true;
        self.fixed.push((coalition, eps_level));
        self.remaining -= 1;
    }

    /// Drops a coalition whose equality is already implied by the fixed set;
    /// it leaves the pool but contributes no LP row.
    fn remove_implied(&mut self, coalition: Coalition) {
        debug_assert!(!self.removed[coalition as usize]);
        self.removed[coalition as usize] = true;
        self.remaining -= 1;
    }

    fn coalition_row(&self, coalition: Coalition, num_vars: usize) -> Vec<f64> {
        let k = self.game.player_count();
        let mut row = vec![0.0; num_vars];
        for (i, r) in row.iter_mut().enumerate().take(k) {
            if coalition & (1 << i) != 0 {
                *r = 1.0;
            }
        }
        row
    }
}

/// Sums x over every coalition mask in one subset-DP pass.
fn coalition_sums(x: &[f64]) -> Vec<f64> {
    let k = x.len();
    let mut sums = vec![0.0; 1 << k];
    for mask in 1usize..(1 << k) {
        let low = mask & mask.wrapping_neg();
        sums[mask] = sums[mask ^ low] + x[low.trailing_zeros() as usize];
    }
    sums
}

/// Worst violated pool coalitions under slack bound `eps`, most violated
/// first, masks ascending on ties; at most `ADD_PER_ROUND` of them.
fn worst_violations(
    pool: &ConstraintPool,
    sums: &[f64],
    eps: f64,
    in_working: &[bool],
) -> Vec<Coalition> {
    let mut violated: Vec<(f64, Coalition)> = Vec::new();
    for (mask, &sum) in sums.iter().enumerate().skip(1) {
        if pool.removed[mask] || in_working[mask] {
            continue;
        }
        let violation = pool.game.value(mask as Coalition) + eps - sum;
        if violation > TOL_VIOLATION {
            violated.push((violation, mask as Coalition));
        }
    }
    violated.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    violated.truncate(ADD_PER_ROUND);
    violated.into_iter().map(|(_, m)| m).collect()
}

struct EpsilonOptimum {
    epsilon: f64,
    x: Vec<f64>,
    lp_solves: usize,
}

/// Maximizes the uniform slack ε over the pool via constraint generation.
fn solve_max_epsilon(
    pool: &ConstraintPool,
    working: &mut Vec<Coalition>,
    in_working: &mut Vec<bool>,
) -> Result<EpsilonOptimum, SolveError> {
    let game = pool.game;
    let k = game.player_count();
    let num_vars = k + 1; // x plus epsilon
    let mut lp_solves = 0usize;
    loop {
        let mut lp = LpProblem::new(Sense::Maximize, {
            let mut c = vec![0.0; num_vars];
            c[k] = 1.0;
            c
        });
        for j in 0..num_vars {
            lp.set_free(j);
        }
        for &s in working.iter() {
            let mut row = pool.coalition_row(s, num_vars);
            row[k] = -1.0;
            lp.add_constraint(row, Relation::Ge, game.value(s));
        }
        for &(t, level) in &pool.fixed {
            let row = pool.coalition_row(t, num_vars);
            lp.add_constraint(row, Relation::Eq, game.value(t) + level);
        }
        let grand = pool.coalition_row(game.full_coalition(), num_vars);
        lp.add_constraint(grand, Relation::Eq, game.revenue());

        let sol = solve_lp(&lp)?;
        lp_solves += 1;
        if sol.status != LpStatus::Optimal {
            return Err(SolveError::Numerical(format!(
                "epsilon LP came back {:?}",
                sol.status
            )));
        }
        let x = sol.variable_values[..k].to_vec();
        let epsilon = sol.variable_values[k];
        let sums = coalition_sums(&x);
        let new = worst_violations(pool, &sums, epsilon, in_working);
        if new.is_empty() {
            return Ok(EpsilonOptimum {
                epsilon,
                x,
                lp_solves,
            });
        }
        for s in new {
            in_working[s as usize] = true;
            working.push(s);
        }
    }
}

/// Maximizes x(target) over the ε-optimal face (ε pinned at `eps_level`).
/// Returns the achieved slack x(target) − v(target) and the maximizer.
fn solve_max_coalition_slack(
    pool: &ConstraintPool,
    target: Coalition,
    eps_level: f64,
    working: &mut Vec<Coalition>,
    in_working: &mut Vec<bool>,
) -> Result<(f64, Vec<f64>), SolveError> {
    let game = pool.game;
    let k = game.player_count();
    loop {
        let mut lp = LpProblem::new(Sense::Maximize, pool.coalition_row(target, k));
        for j in 0..k {
            lp.set_free(j);
        }
        for &s in working.iter() {
            let row = pool.coalition_row(s, k);
            lp.add_constraint(row, Relation::Ge, game.value(s) + eps_level);
        }
        for &(t, level) in &pool.fixed {
            let row = pool.coalition_row(t, k);
            lp.add_constraint(row, Relation::Eq, game.value(t) + level);
        }
        let grand = pool.coalition_row(game.full_coalition(), k);
        lp.add_constraint(grand, Relation::Eq, game.revenue());

        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(SolveError::Numerical(format!(
                "slack LP for coalition {target:#b} came back {:?}",
                sol.status
            )));
        }
        let x = sol.variable_values[..k].to_vec();
        let sums = coalition_sums(&x);
        let new = worst_violations(pool, &sums, eps_level, in_working);
        if new.is_empty() {
            let slack = sums[target as usize] - game.value(target);
            return Ok((slack, x));
        }
        for s in new {
            in_working[s as usize] = true;
            working.push(s);
        }
    }
}

fn seed_working(pool: &ConstraintPool) -> (Vec<Coalition>, Vec<bool>) {
    let game = pool.game;
    let k = game.player_count();
    let full = game.full_coalition();
    let mut working = Vec::new();
    let mut in_working = vec![false; 1 << k];
    // Singletons keep every variable bounded; complements pair them up.
    for i in 0..k {
        for s in [1u64 << i, full & !(1u64 << i)] {
            if s != 0 && s != full && !pool.removed[s as usize] && !in_working[s as usize] {
                in_working[s as usize] = true;
                working.push(s);
            }
        }
    }
    (working, in_working)
}

pub fn least_core(game: &TuGame) -> Result<SolutionVector, SolveError> {
    check_size(game)?;
    let k = game.player_count();
    if k == 1 {
        return Ok(SolutionVector {
            concept: Concept::LeastCore,
            x: vec![game.revenue()],
            epsilon: Some(0.0),
            iterations: 0,
            fixed_coalitions: 0,
        });
    }
    let pool = ConstraintPool::new(game);
    let (mut working, mut in_working) = seed_working(&pool);
    let opt = solve_max_epsilon(&pool, &mut working, &mut in_working)?;
    Ok(SolutionVector {
        concept: Concept::LeastCore,
        x: opt.x,
        epsilon: Some(opt.epsilon),
        iterations: opt.lp_solves,
        fixed_coalitions: 0,
    })
}

/// Gauss-Jordan system over player-indicator rows, used to detect when the
/// fixed equalities pin the solution to a single point.
struct EqSystem {
    k: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    pivots: Vec<usize>,
}

impl EqSystem {
    fn new(k: usize) -> Self {
        Self {
            k,
            rows: Vec::new(),
            rhs: Vec::new(),
            pivots: Vec::new(),
        }
    }

    /// Returns true when the row was independent (rank increased).
    fn add(&mut self, mut row: Vec<f64>, mut rhs: f64) -> bool {
        for i in 0..self.rows.len() {
            let f = row[self.pivots[i]];
            if f != 0.0 {
                for j in 0..self.k {
                    row[j] -= f * self.rows[i][j];
                }
                rhs -= f * self.rhs[i];
            }
        }
        let pivot = (0..self.k)
            .filter(|&j| row[j].abs() > 1e-9)
            .max_by(|&a, &b| row[a].abs().partial_cmp(&row[b].abs()).unwrap());
        let Some(p) = pivot else {
            return false;
        };
        let inv = 1.0 / row[p];
        for v in row.iter_mut() {
            *v *= inv;
        }
        rhs *= inv;
        for i in 0..self.rows.len() {
            let f = self.rows[i][p];
            if f != 0.0 {
                for j in 0..self.k {
                    self.rows[i][j] -= f * row[j];
                }
                self.rhs[i] -= f * rhs;
            }
        }
        self.rows.push(row);
        self.rhs.push(rhs);
        self.pivots.push(p);
        true
    }

    fn rank(&self) -> usize {
        self.rows.len()
    }

    /// True when the row lies in the span of the current rows.
    fn is_dependent(&self, row: &[f64]) -> bool {
        let mut r = row.to_vec();
        for i in 0..self.rows.len() {
            let f = r[self.pivots[i]];
            if f != 0.0 {
                for j in 0..self.k {
                    r[j] -= f * self.rows[i][j];
                }
            }
        }
        r.iter().all(|v| v.abs() <= 1e-9)
    }

    /// The unique solution once rank == k.
    fn solve(&self) -> Vec<f64> {
        assert_eq!(self.rank(), self.k);
        let mut x = vec![0.0; self.k];
        for (i, &p) in self.pivots.iter().enumerate() {
            x[p] = self.rhs[i];
        }
        x
    }
}

fn indicator(coalition: Coalition, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| if coalition & (1 << i) != 0 { 1.0 } else { 0.0 })
        .collect()
}

/// Successive-LP nucleolus: maximize the uniform slack, find the coalitions
/// tight in every optimal solution, convert them to equalities, and repeat
/// until the equalities pin a single point.
pub fn nucleolus(game: &TuGame) -> Result<SolutionVector, SolveError> {
    check_size(game)?;
    let k = game.player_count();
    if k == 1 {
        return Ok(SolutionVector {
            concept: Concept::Nucleolus,
            x: vec![game.revenue()],
            epsilon: Some(0.0),
            iterations: 0,
            fixed_coalitions: 0,
        });
    }
    let mut pool = ConstraintPool::new(game);
    let mut eq = EqSystem::new(k);
    eq.add(indicator(game.full_coalition(), k), game.revenue());

    let (mut working, mut in_working) = seed_working(&pool);
    let mut first_epsilon = None;
    let mut rounds = 0usize;
    let max_rounds = 4 * k + 16;
    let mut purged_rank = eq.rank();

    loop {
        rounds += 1;
        if rounds > max_rounds {
            return Err(SolveError::Numerical(
                "nucleolus iteration did not converge".into(),
            ));
        }
        // A coalition whose indicator is spanned by the fixed equalities has
        // constant excess on the remaining face; it cannot affect any later
        // level, so it leaves the pool as soon as the rank grows.
        if eq.rank() > purged_rank {
            let full = game.full_coalition();
            for mask in 1..full {
                if !pool.removed[mask as usize] && eq.is_dependent(&indicator(mask, k)) {
                    pool.remove_implied(mask);
                }
            }
            purged_rank = eq.rank();
        }
        working.retain(|&s| {
            let keep = !pool.removed[s as usize];
            if !keep {
                in_working[s as usize] = false;
            }
            keep
        });
        let opt = solve_max_epsilon(&pool, &mut working, &mut in_working)?;
        let eps_level = opt.epsilon;
        first_epsilon.get_or_insert(eps_level);
        let trace = std::env::var_os("REVALLOC_TRACE").is_some();
        if trace {
            eprintln!(
                "round {rounds}: eps={eps_level:.9} rank={} remaining={} working={}",
                eq.rank(),
                pool.remaining,
                working.len()
            );
        }

        // Candidates: coalitions tight at the found optimum, in mask order.
        let sums = coalition_sums(&opt.x);
        let mut candidates: VecDeque<Coalition> = VecDeque::new();
        for (mask, &sum) in sums.iter().enumerate().skip(1) {
            if !pool.removed[mask]
                && sum - game.value(mask as Coalition) <= eps_level + TOL_TIGHT
            {
                candidates.push_back(mask as Coalition);
            }
        }

        // A candidate is fixed iff its slack cannot rise above ε on the
        // optimal face. A candidate whose indicator row is spanned by the
        // fixed equalities has constant x(S) on that face, so tightness at
        // the found optimum already proves it fixed; no LP needed. Each
        // failed test yields an alternative optimum that prunes every
        // candidate it leaves non-tight.
        let mut progressed = false;
        while let Some(s) = candidates.pop_front() {
            let row = indicator(s, k);
            if eq.is_dependent(&row) {
                pool.remove_implied(s);
                progressed = true;
                continue;
            }
            let (slack, x_alt) =
                solve_max_coalition_slack(&pool, s, eps_level, &mut working, &mut in_working)?;
            if slack <= eps_level + TOL_TIGHT {
                pool.fix(s, eps_level);
                eq.add(row, game.value(s) + eps_level);
                progressed = true;
                if eq.rank() == k {
                    return Ok(SolutionVector {
                        concept: Concept::Nucleolus,
                        x: eq.solve(),
                        epsilon: first_epsilon,
                        iterations: rounds,
                        fixed_coalitions: pool.fixed.len(),
                    });
                }
            } else {
                let alt_sums = coalition_sums(&x_alt);
                candidates.retain(|&t| {
                    alt_sums[t as usize] - game.value(t) <= eps_level + TOL_TIGHT
                });
            }
        }

        if !progressed {
            return Err(SolveError::Numerical(format!(
                "no coalition fixed at level {eps_level}; degenerate tolerance setup"
            )));
        }
        if pool.remaining == 0 {
            return Err(SolveError::Numerical(
                "constraint pool exhausted before the solution was pinned".into(),
            ));
        }
    }
}

/// Dispatch by concept.
pub fn solve_concept(game: &TuGame, concept: Concept) -> Result<SolutionVector, SolveError> {
    match concept {
        Concept::Shapley => shapley(game),
        Concept::LeastCore => least_core(game),
        Concept::Nucleolus => nucleolus(game),
    }
}
