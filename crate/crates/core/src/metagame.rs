//! Empirical zero-sum game machinery: exact matrix-game solving by linear
//! programming, exploitability, and the double-oracle population loop.
//!
//! The population loop ([`run_psro`]) is generic over a [`BestResponseOracle`]
//! so the same loop drives both the RL attack/defence game and exact
//! finite-game oracles in tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed_n;

/// Mixed-strategy solution of a zero-sum matrix game.
#[derive(Debug, Clone)]
pub struct MatrixSolution {
    /// Row player's (maximizer's) mixed strategy.
    pub row: Vec<f64>,
    /// Column player's (minimizer's) mixed strategy.
    pub col: Vec<f64>,
    /// Minimax value, from the row player's perspective.
    pub value: f64,
}

const PIVOT_TOL: f64 = 1e-11;

/// Solves the zero-sum matrix game `U` (row player maximizes) exactly via the
/// standard linear-programming formulation.
///
/// The game is shifted so all payoffs are positive, the column player's LP
/// `max 1'y s.t. U y <= 1, y >= 0` is solved by simplex with Bland's rule,
/// and the row strategy is read off the dual values.
pub fn solve_zero_sum(u: &[Vec<f64>]) -> Result<MatrixSolution> {
    let m = u.len();
    if m == 0 {
        return Err(Error::Solver("empty matrix".into()));
    }
    let n = u[0].len();
    if n == 0 || u.iter().any(|r| r.len() != n) {
        return Err(Error::Solver(
            "matrix must be rectangular and non-empty".into(),
        ));
    }
    if u.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Solver("matrix entries must be finite".into()));
    }

    let min_entry = u.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min_entry;

    // Tableau for: maximize sum(y) s.t. (U + shift) y <= 1, y >= 0.
    // Columns: y_0..y_{n-1}, slack_0..slack_{m-1}, rhs.
    let cols = n + m + 1;
    let mut t = vec![vec![0.0; cols]; m + 1];
    for i in 0..m {
        for j in 0..n {
            t[i][j] = u[i][j] + shift;
        }
        t[i][n + i] = 1.0;
        t[i][cols - 1] = 1.0;
    }
    for j in 0..n {
        t[m][j] = -1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_pivots = 200 * (m + n) + 1000;
    for _ in 0..max_pivots {
        // Bland's rule: entering variable = lowest-index negative reduced cost.
        let Some(enter) = (0..n + m).find(|&j| t[m][j] < -PIVOT_TOL) else {
            break;
        };
        // Ratio test, ties broken by lowest basis index (anti-cycling).
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][enter] > PIVOT_TOL {
                let ratio = t[i][cols - 1] / t[i][enter];
                if ratio < best - PIVOT_TOL
                    || (ratio < best + PIVOT_TOL && leave.is_some_and(|l| basis[i] < basis[l]))
                {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            return Err(Error::Solver("LP unbounded; matrix shift failed".into()));
        };
        let piv = t[leave][enter];
        for v in t[leave].iter_mut() {
            *v /= piv;
        }
        for i in 0..=m {
            if i == leave {
                continue;
            }
            let factor = t[i][enter];
            if factor != 0.0 {
                for j in 0..cols {
                    t[i][j] -= factor * t[leave][j];
                }
            }
        }
        basis[leave] = enter;
    }
    if (0..n + m).any(|j| t[m][j] < -PIVOT_TOL) {
        return Err(Error::Solver("simplex failed to converge".into()));
    }

    let z = t[m][cols - 1];
    if z <= 0.0 {
        return Err(Error::Solver("degenerate LP objective".into()));
    }
    let mut y = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            y[b] = t[i][cols - 1].max(0.0);
        }
    }
    // Dual values live in the objective row under the slack columns.
    let x: Vec<f64> = (0..m).map(|i| t[m][n + i].max(0.0)).collect();

    let col: Vec<f64> = normalize(&y);
    let row: Vec<f64> = normalize(&x);
    let value = 1.0 / z - shift;
    Ok(MatrixSolution { row, col, value })
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

/// Sum of both players' best-response gains against `(row, col)`; zero iff
/// the pair is a Nash equilibrium of `u`.
pub fn exploitability(u: &[Vec<f64>], row: &[f64], col: &[f64]) -> f64 {
    let m = u.len();
    let n = u[0].len();
    let value = mixture_value(u, row, col);
    let best_row = (0..m)
        .map(|i| (0..n).map(|j| u[i][j] * col[j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_col = (0..n)
        .map(|j| (0..m).map(|i| row[i] * u[i][j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    (best_row - value) + (value - worst_col)
}

/// Expected defender utility of mixed strategies under the estimated matrix.
pub fn mixture_value(u: &[Vec<f64>], row: &[f64], col: &[f64]) -> f64 {
    (0..u.len())
        .map(|i| row[i] * (0..u[0].len()).map(|j| u[i][j] * col[j]).sum::<f64>())
        .sum()
}

/// Provider of utility estimates and best responses for the population loop.
///
/// The defender is the row player (maximizes team return), the attacker the
/// column player.
pub trait BestResponseOracle {
    type Def: Clone;
    type Atk: Clone;

    /// Estimated defender utility `(mean, stderr)` for a pure policy pair.
    /// Must be deterministic given `pair_seed`.
    fn utility(&mut self, def: &Self::Def, atk: &Self::Atk, pair_seed: u64) -> (f64, f64);

    /// Approximate best response of the defender to the attacker mixture.
    fn respond_as_defender(
        &mut self,
        atk_pop: &[Self::Atk],
        sigma_atk: &[f64],
        iter: usize,
    ) -> Self::Def;

    /// Approximate best response of the attacker to the defender mixture.
    fn respond_as_attacker(
        &mut self,
        def_pop: &[Self::Def],
        sigma_def: &[f64],
        iter: usize,
    ) -> Self::Atk;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsroConfig {
    /// Maximum number of best-response iterations.
    pub max_iters: usize,
    /// Absolute floor for the convergence tolerance on best-response gains.
    pub tol_abs: f64,
    /// Master seed for utility-estimation episodes.
    pub seed: u64,
}

impl Default for PsroConfig {
    fn default() -> Self {
        PsroConfig {
            max_iters: 6,
            tol_abs: 1e-9,
            seed: 0,
        }
    }
}

/// Estimated utility matrix with per-entry standard errors and the current
/// meta-strategies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaGame {
    /// Defender utilities, rows = defender population, cols = attacker population.
    pub u: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub sigma_def: Vec<f64>,
    pub sigma_atk: Vec<f64>,
    /// Restricted-game value (defender's perspective).
    pub value: f64,
}

impl MetaGame {
    /// Attacker utilities are the exact negation of the stored defender
    /// utilities (zero-sum bookkeeping).
    pub fn attacker_utility(&self, i: usize, j: usize) -> f64 {
        -self.u[i][j]
    }

    fn is_rectangular(&self) -> bool {
        let n = self.sigma_atk.len();
        self.u.len() == self.sigma_def.len() && self.u.iter().all(|r| r.len() == n)
    }
}

/// Per-iteration record of the population loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsroIteration {
    pub iter: usize,
    pub value: f64,
    /// Best-response gain of each player over the previous equilibrium.
    pub br_gain_def: f64,
    pub br_gain_atk: f64,
    /// Two-standard-error slack attached to the gain estimates.
    pub noise_slack: f64,
    /// Exploitability of the previous meta-strategy within the extended game.
    pub exploitability: f64,
}

/// Result of [`run_psro`].
#[derive(Debug, Clone)]
pub struct PsroOutcome<D, A> {
    pub def_pop: Vec<D>,
    pub atk_pop: Vec<A>,
    pub meta: MetaGame,
    pub history: Vec<PsroIteration>,
    pub converged: bool,
}

fn mixture_stderr(stderr_row: &[f64], sigma: &[f64]) -> f64 {
    stderr_row
        .iter()
        .zip(sigma)
        .map(|(se, s)| (se * s) * (se * s))
        .sum::<f64>()
        .sqrt()
}

/// Double-oracle loop: estimate utilities, solve the restricted game, train
/// best responses against the current equilibrium, extend the populations,
/// and repeat until neither best response improves beyond the noise
/// tolerance or the iteration budget is exhausted.
///
/// Only missing utility entries are estimated at each iteration; existing
/// entries are reused. Convergence is checked after the new entries are
/// estimated.
pub fn run_psro<O: BestResponseOracle>(
    oracle: &mut O,
    init_def: O::Def,
    init_atk: O::Atk,
    cfg: &PsroConfig,
) -> Result<PsroOutcome<O::Def, O::Atk>> {
    let mut def_pop = vec![init_def];
    let mut atk_pop = vec![init_atk];
    let mut u: Vec<Vec<f64>> = Vec::new();
    let mut se: Vec<Vec<f64>> = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;

    let pair_seed = |i: usize, j: usize, seed: u64| {
        derive_seed_n(seed, "psro-utility", ((i as u64) << 32) | j as u64)
    };

    let (mean, stderr) = oracle.utility(&def_pop[0], &atk_pop[0], pair_seed(0, 0, cfg.seed));
    u.push(vec![mean]);
    se.push(vec![stderr]);
    let mut sigma_def = vec![1.0];
    let mut sigma_atk = vec![1.0];
    let mut value = mean;

    for iter in 0..cfg.max_iters {
        let new_def = oracle.respond_as_defender(&atk_pop, &sigma_atk, iter);
        let new_atk = oracle.respond_as_attacker(&def_pop, &sigma_def, iter);
        def_pop.push(new_def);
        atk_pop.push(new_atk);
        let nd = def_pop.len();
        let na = atk_pop.len();

        // Estimate only the missing entries: one new row and one new column.
        let mut new_row = Vec::with_capacity(na);
        let mut new_row_se = Vec::with_capacity(na);
        for j in 0..na {
            let (m, s) =
                oracle.utility(&def_pop[nd - 1], &atk_pop[j], pair_seed(nd - 1, j, cfg.seed));
            new_row.push(m);
            new_row_se.push(s);
        }
        for i in 0..nd - 1 {
            let (m, s) =
                oracle.utility(&def_pop[i], &atk_pop[na - 1], pair_seed(i, na - 1, cfg.seed));
            u[i].push(m);
            se[i].push(s);
        }
        u.push(new_row);
        se.push(new_row_se);

        // Best-response gains of the new policies over the previous equilibrium.
        let gain_def: f64 = (0..na - 1)
            .map(|j| sigma_atk[j] * u[nd - 1][j])
            .sum::<f64>()
            - value;
        let gain_atk: f64 = value
            - (0..nd - 1)
                .map(|i| sigma_def[i] * u[i][na - 1])
                .sum::<f64>();
        let slack_def = mixture_stderr(&se[nd - 1][..na - 1], &sigma_atk);
        let slack_atk = {
            let col_se: Vec<f64> = (0..nd - 1).map(|i| se[i][na - 1]).collect();
            mixture_stderr(&col_se, &sigma_def)
        };
        let noise_slack = 2.0 * (slack_def + slack_atk).max(cfg.tol_abs);
        let exploit = gain_def.max(0.0) + gain_atk.max(0.0);

        // Solve the extended restricted game.
        let sol = solve_zero_sum(&u)?;
        sigma_def = sol.row;
        sigma_atk = sol.col;
        value = sol.value;

        history.push(PsroIteration {
            iter,
            value,
            br_gain_def: gain_def,
            br_gain_atk: gain_atk,
            noise_slack,
            exploitability: exploit,
        });

        let tol_def = 2.0 * slack_def.max(cfg.tol_abs);
        let tol_atk = 2.0 * slack_atk.max(cfg.tol_abs);
        if gain_def <= tol_def && gain_atk <= tol_atk {
            converged = true;
            break;
        }
    }

    let meta = MetaGame {
        u,
        stderr: se,
        sigma_def,
        sigma_atk,
        value,
    };
    debug_assert!(meta.is_rectangular());
    Ok(PsroOutcome {
        def_pop,
        atk_pop,
        meta,
        history,
        converged,
    })
}

#[cfg(test)]
pub(crate) mod oracle_tests {
    use super::*;

    /// Exact-best-response oracle over a hidden finite matrix game; policies
    /// are row/column indices.
    pub struct ExactMatrixOracle {
        pub game: Vec<Vec<f64>>,
    }

    impl BestResponseOracle for ExactMatrixOracle {
        type Def = usize;
        type Atk = usize;

        fn utility(&mut self, def: &usize, atk: &usize, _seed: u64) -> (f64, f64) {
            (self.game[*def][*atk], 0.0)
        }

        fn respond_as_defender(&mut self, atk_pop: &[usize], sigma: &[f64], _iter: usize) -> usize {
            (0..self.game.len())
                .max_by(|&a, &b| {
                    let va: f64 = atk_pop
                        .iter()
                        .zip(sigma)
                        .map(|(&j, s)| s * self.game[a][j])
                        .sum();
                    let vb: f64 = atk_pop
                        .iter()
                        .zip(sigma)
                        .map(|(&j, s)| s * self.game[b][j])
                        .sum();
                    va.partial_cmp(&vb).unwrap()
                })
                .unwrap()
        }

        fn respond_as_attacker(&mut self, def_pop: &[usize], sigma: &[f64], _iter: usize) -> usize {
            (0..self.game[0].len())
                .min_by(|&a, &b| {
                    let va: f64 = def_pop
                        .iter()
                        .zip(sigma)
                        .map(|(&i, s)| s * self.game[i][a])
                        .sum();
                    let vb: f64 = def_pop
                        .iter()
                        .zip(sigma)
                        .map(|(&i, s)| s * self.game[i][b])
                        .sum();
                    va.partial_cmp(&vb).unwrap()
                })
                .unwrap()
        }
    }
}
