//! Separable convex solver for the budget-constrained design problem:
//!
//! ```text
//! minimize    sum_{a_ij > 0} a_ij / x_ij
//! subject to  eps_floor <= x_ij <= 1        on the support (a_ij > 0)
//!             x_ij = 0                      off the support
//!             sum_j x_ij <= 1               for every item i
//!             sum_i c_ij x_ij <= b_j        for every buyer j
//! ```
//!
//! The objective is separable and smooth on the interior, so a dedicated
//! dual ascent is enough: for fixed budget duals `lambda_j`, stationarity
//! gives `x_ij = clamp(sqrt(a_ij / (mu_i + lambda_j c_ij)), eps, 1)` with the
//! row dual `mu_i` found by bisection on the row-sum constraint; the
//! `lambda_j` are then driven by coordinate bisection (or, optionally, a
//! projected subgradient schedule) until complementary slackness holds.
//! Everything is deterministic: identical inputs produce identical outputs.

use serde::{Deserialize, Serialize};

use crate::matrix::Mat;
use crate::model::{ExperimentMatrix, FEASIBILITY_TOL};
use crate::{Error, Result};

/// Outer-loop policy for the budget duals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DualSchedule {
    /// Exact coordinate maximization of the dual by bisection on each
    /// `lambda_j` (default).
    CoordinateBisection,
    /// Projected subgradient ascent with step `initial_step / (1 + decay t)`.
    ProjectedGradient { initial_step: f64, decay: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kkt_tolerance: f64,
    /// Cap on outer iterations (sweeps).
    pub max_iterations: usize,
    /// Lower bound substituted for the open constraint `x_ij > 0`.
    pub epsilon_floor: f64,
    pub dual_schedule: DualSchedule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-7,
            max_iterations: 200,
            epsilon_floor: 1e-6,
            dual_schedule: DualSchedule::CoordinateBisection,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.kkt_tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kkt_tolerance must be positive, got {}",
                self.kkt_tolerance
            )));
        }
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon_floor must lie in (0, 1), got {}",
                self.epsilon_floor
            )));
        }
        Ok(())
    }
}

/// Optimality evidence attached to a solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverCertificate {
    pub objective: f64,
    /// Lagrangian dual value at the returned budget duals (weak lower bound).
    pub dual_objective: f64,
    /// Row duals `mu_i` for the `sum_j x_ij <= 1` constraints.
    pub row_duals: Vec<f64>,
    /// Budget duals `lambda_j` for the `sum_i c_ij x_ij <= b_j` constraints.
    pub budget_duals: Vec<f64>,
    pub max_kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective of each accepted (feasible, improving) iterate, in order.
    pub accepted_objectives: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Entry {
    row: usize,
    col: usize,
    a: f64,
    c: f64,
}

struct Workspace {
    entries: Vec<Entry>,
    x: Vec<f64>,
    /// Entry range per row, as (start, end) into `entries`.
    row_ranges: Vec<(usize, usize)>,
    /// Rows with support in each column (unique, ascending).
    col_rows: Vec<Vec<usize>>,
    /// Entry indices per column.
    col_entries: Vec<Vec<usize>>,
    mu: Vec<f64>,
    lambda: Vec<f64>,
}

#[inline]
fn entry_x(a: f64, denom: f64, eps: f64) -> f64 {
    if denom <= 0.0 {
        // Unbounded stationary point; the minimizer of a/x on (0, 1] is 1.
        1.0
    } else {
        (a / denom).sqrt().clamp(eps, 1.0)
    }
}

impl Workspace {
    fn build(a: &Mat, costs: &Mat, n: usize, eps: f64) -> Result<Self> {
        let m = a.rows();
        let mut entries = Vec::new();
        let mut row_ranges = Vec::with_capacity(m);
        let mut col_rows = vec![Vec::new(); n];
        let mut col_entries = vec![Vec::new(); n];
        for i in 0..m {
            let start = entries.len();
            for j in 0..n {
                let aij = a.get(i, j);
                if aij < 0.0 || !aij.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "weight a_({i},{j}) = {aij} must be finite and nonnegative"
                    )));
                }
                if aij > 0.0 {
                    col_entries[j].push(entries.len());
                    if col_rows[j].last() != Some(&i) {
                        col_rows[j].push(i);
                    }
                    entries.push(Entry {
                        row: i,
                        col: j,
                        a: aij,
                        c: costs.get(i, j),
                    });
                }
            }
            row_ranges.push((start, entries.len()));
            let support = entries.len() - start;
            if support as f64 * eps >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "epsilon_floor {eps} too large for row {i} with {support} support entries"
                )));
            }
        }
        if entries.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one weight must be positive".into(),
            ));
        }
        let x = vec![0.0; entries.len()];
        Ok(Self {
            entries,
            x,
            row_ranges,
            col_rows,
            col_entries,
            mu: vec![0.0; m],
            lambda: vec![0.0; n],
        })
    }

    fn row_sum_at(&self, i: usize, mu: f64, eps: f64) -> f64 {
        let (s, e) = self.row_ranges[i];
        self.entries[s..e]
            .iter()
            .map(|en| entry_x(en.a, mu + self.lambda[en.col] * en.c, eps))
            .sum()
    }

    /// Solves row `i` exactly at the current budget duals: finds `mu_i >= 0`
    /// with complementary slackness on the row-sum constraint and writes the
    /// stationary entries back.
    fn solve_row(&mut self, i: usize, eps: f64) {
        let (s, e) = self.row_ranges[i];
        if s == e {
            self.mu[i] = 0.0;
            return;
        }
        let mut mu = 0.0;
        if self.row_sum_at(i, 0.0, eps) > 1.0 {
            // Bracket: row sum is decreasing in mu and falls below 1 well
            // before mu_hi = (sum sqrt(a))^2 apart from floor clamping.
            let mut hi = {
                let root_sum: f64 = self.entries[s..e].iter().map(|en| en.a.sqrt()).sum();
                (root_sum * root_sum).max(1e-12)
            };
            let mut guard = 0;
            while self.row_sum_at(i, hi, eps) > 1.0 && guard < 200 {
                hi *= 2.0;
                guard += 1;
            }
            let mut lo = 0.0;
            for _ in 0..120 {
                let mid = 0.5 * (lo + hi);
                let sum = self.row_sum_at(i, mid, eps);
                if (sum - 1.0).abs() <= 1e-13 {
                    hi = mid;
                    break;
                }
                if sum > 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi.max(1.0) {
                    break;
                }
            }
            mu = hi; // feasible side: row sum <= 1
        }
        self.mu[i] = mu;
        for idx in s..e {
            let en = self.entries[idx];
            self.x[idx] = entry_x(en.a, mu + self.lambda[en.col] * en.c, eps);
        }
    }

    fn resolve_all_rows(&mut self, eps: f64) {
        for i in 0..self.row_ranges.len() {
            self.solve_row(i, eps);
        }
    }

    fn column_spend(&self, j: usize) -> f64 {
        self.col_entries[j]
            .iter()
            .map(|&idx| self.entries[idx].c * self.x[idx])
            .sum()
    }

    /// Sets `lambda_j`, re-solves the rows it touches, and returns the spend.
    fn eval_lambda(&mut self, j: usize, lam: f64, eps: f64) -> f64 {
        self.lambda[j] = lam;
        let rows = std::mem::take(&mut self.col_rows[j]);
        for &i in &rows {
            self.solve_row(i, eps);
        }
        self.col_rows[j] = rows;
        self.column_spend(j)
    }

    /// Exact coordinate maximization of the dual in `lambda_j`.
    fn bisect_lambda(&mut self, j: usize, budget: f64, warm: f64, eps: f64) {
        if self.col_entries[j].is_empty() {
            self.lambda[j] = 0.0;
            return;
        }
        if self.eval_lambda(j, 0.0, eps) <= budget {
            return;
        }
        // Find a feasible upper bracket, seeded from the warm dual or the
        // analytic bound spend(lambda) <= sum sqrt(a c) / sqrt(lambda).
        let mut hi = if warm > 0.0 {
            warm
        } else {
            let root: f64 = self.col_entries[j]
                .iter()
                .map(|&idx| (self.entries[idx].a * self.entries[idx].c).sqrt())
                .sum();
            ((root / budget.max(1e-300)).powi(2)).max(1e-6)
        };
        let mut guard = 0;
        while self.eval_lambda(j, hi, eps) > budget {
            hi *= 4.0;
            guard += 1;
            if guard >= 200 {
                // Budget unreachable above the epsilon floor; leave the cap.
                return;
            }
        }
        let mut lo = 0.0;
        for _ in 0..120 {
            let mid = 0.5 * (lo + hi);
            let spend = self.eval_lambda(j, mid, eps);
            if spend > budget {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
        }
        // End on the feasible side.
        self.eval_lambda(j, hi, eps);
    }

    fn objective(&self) -> f64 {
        self.entries
            .iter()
            .zip(&self.x)
            .map(|(en, &x)| en.a / x)
            .sum()
    }

    /// Lagrangian dual value at the current budget duals, using the exact
    /// row minimizers already stored in `x`.
    fn dual_value(&self, budgets: &[f64]) -> f64 {
        let inner: f64 = self
            .entries
            .iter()
            .zip(&self.x)
            .map(|(en, &x)| en.a / x + self.lambda[en.col] * en.c * x)
            .sum();
        let penalty: f64 = self
            .lambda
            .iter()
            .zip(budgets)
            .map(|(&lam, &b)| lam * b)
            .sum();
        inner - penalty
    }

    fn to_matrix(&self, m: usize, n: usize) -> Mat {
        let mut out = Mat::zeros(m, n);
        for (en, &x) in self.entries.iter().zip(&self.x) {
            out.set(en.row, en.col, x);
        }
        out
    }
}

fn check_inputs(a: &Mat, costs: &Mat, budgets: &[f64]) -> Result<()> {
    if a.shape() != costs.shape() || budgets.len() != costs.cols() {
        return Err(Error::DimensionMismatch(format!(
            "weights {:?}, costs {:?}, budgets len {}",
            a.shape(),
            costs.shape(),
            budgets.len()
        )));
    }
    Ok(())
}

/// Solves the separable program; equivalent to
/// [`solve_separable_warm`] with no warm duals.
pub fn solve_separable(
    a: &Mat,
    costs: &Mat,
    budgets: &[f64],
    cfg: &SolverConfig,
) -> Result<(ExperimentMatrix, SolverCertificate)> {
    solve_separable_warm(a, costs, budgets, cfg, None)
}

/// Solves the separable program, optionally starting the budget duals from a
/// previous solve. Warm starting only changes the iteration count; the fixed
/// point is the same within tolerance.
///
/// On non-convergence the best feasible iterate seen (or the final iterate)
/// is returned with `converged = false` in the certificate.
pub fn solve_separable_warm(
    a: &Mat,
    costs: &Mat,
    budgets: &[f64],
    cfg: &SolverConfig,
    warm_budget_duals: Option<&[f64]>,
) -> Result<(ExperimentMatrix, SolverCertificate)> {
    cfg.validate()?;
    check_inputs(a, costs, budgets)?;
    let (m, n) = a.shape();
    let eps = cfg.epsilon_floor;
    let mut ws = Workspace::build(a, costs, n, eps)?;
    if let Some(warm) = warm_budget_duals {
        if warm.len() == n {
            for (l, &w) in ws.lambda.iter_mut().zip(warm) {
                *l = w.max(0.0);
            }
        }
    }
    // Always leave a row-consistent iterate, even with a zero iteration cap.
    ws.resolve_all_rows(eps);

    let mut accepted = Vec::new();
    let mut best: Option<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut pg_step = match cfg.dual_schedule {
        DualSchedule::ProjectedGradient { initial_step, .. } => initial_step,
        DualSchedule::CoordinateBisection => 0.0,
    };

    for iter in 0..cfg.max_iterations {
        iterations = iter + 1;
        match cfg.dual_schedule {
            DualSchedule::CoordinateBisection => {
                for j in 0..n {
                    let warm = ws.lambda[j];
                    ws.bisect_lambda(j, budgets[j], warm, eps);
                }
            }
            DualSchedule::ProjectedGradient { initial_step, decay } => {
                ws.resolve_all_rows(eps);
                for j in 0..n {
                    let g = ws.column_spend(j) - budgets[j];
                    ws.lambda[j] = (ws.lambda[j] + pg_step * g).max(0.0);
                }
                pg_step = initial_step / (1.0 + decay * (iter + 1) as f64);
            }
        }
        // Bring every row in sync with the final duals of the sweep.
        ws.resolve_all_rows(eps);

        let residual = kkt_residual(
            &ws.to_matrix(m, n),
            a,
            costs,
            budgets,
            &ws.mu,
            &ws.lambda,
            eps,
        )?;
        let viol = (0..n)
            .map(|j| ws.column_spend(j) - budgets[j])
            .fold(0.0, f64::max);
        if viol <= FEASIBILITY_TOL {
            let obj = ws.objective();
            if best.as_ref().is_none_or(|(.., b)| obj < *b) {
                best = Some((ws.x.clone(), ws.mu.clone(), ws.lambda.clone(), obj));
                accepted.push(obj);
            }
        }
        if residual <= cfg.kkt_tolerance && viol <= FEASIBILITY_TOL {
            converged = true;
            break;
        }
    }

    if !converged {
        if let Some((x, mu, lambda, _)) = best.take() {
            ws.x = x;
            ws.mu = mu;
            ws.lambda = lambda;
        }
    }

    let x_mat = ws.to_matrix(m, n);
    let residual = kkt_residual(&x_mat, a, costs, budgets, &ws.mu, &ws.lambda, eps)?;
    let certificate = SolverCertificate {
        objective: ws.objective(),
        dual_objective: ws.dual_value(budgets),
        row_duals: ws.mu.clone(),
        budget_duals: ws.lambda.clone(),
        max_kkt_residual: residual,
        iterations,
        converged,
        accepted_objectives: accepted,
    };
    Ok((ExperimentMatrix::new(x_mat)?, certificate))
}

/// Maximum violation over stationarity, primal feasibility, dual
/// feasibility, and complementary slackness at `(x, duals)`.
///
/// Stationarity is measured in fixed-point form,
/// `|x_ij - clamp(sqrt(a_ij / (mu_i + lambda_j c_ij)), eps, 1)|`; budget
/// feasibility and slackness are scaled by `max(1, b_j)`.
pub fn kkt_residual(
    x: &Mat,
    a: &Mat,
    costs: &Mat,
    budgets: &[f64],
    row_duals: &[f64],
    budget_duals: &[f64],
    eps_floor: f64,
) -> Result<f64> {
    check_inputs(a, costs, budgets)?;
    let (m, n) = a.shape();
    if x.shape() != (m, n) || row_duals.len() != m || budget_duals.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "x {:?}, row duals {}, budget duals {}",
            x.shape(),
            row_duals.len(),
            budget_duals.len()
        )));
    }
    let mut worst = 0.0f64;
    for i in 0..m {
        let mut row_sum = 0.0;
        for j in 0..n {
            let aij = a.get(i, j);
            let xij = x.get(i, j);
            row_sum += xij;
            if aij > 0.0 {
                let target = entry_x(aij, row_duals[i] + budget_duals[j] * costs.get(i, j), eps_floor);
                worst = worst.max((xij - target).abs());
            }
        }
        worst = worst.max(row_sum - 1.0);
        worst = worst.max(-row_duals[i]);
        if row_duals[i] > 0.0 {
            worst = worst.max(row_duals[i] * (1.0 - row_sum) / (1.0 + row_duals[i]));
        }
    }
    for j in 0..n {
        let spend: f64 = (0..m).map(|i| costs.get(i, j) * x.get(i, j)).sum();
        let scale = budgets[j].abs().max(1.0);
        worst = worst.max((spend - budgets[j]) / scale);
        worst = worst.max(-budget_duals[j]);
        if budget_duals[j] > 0.0 {
            worst = worst
                .max(budget_duals[j] * (budgets[j] - spend) / ((1.0 + budget_duals[j]) * scale));
        }
    }
    Ok(worst)
}

/// Objective `sum_{a_ij > 0} a_ij / x_ij` of a design under weights `a`.
pub fn separable_objective(a: &Mat, x: &Mat) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let aij = a.get(i, j);
            if aij > 0.0 {
                total += aij / x.get(i, j);
            }
        }
    }
    total
}

const GRID_CELL_CAP: usize = 8;

/// Derivative-free oracle for tiny instances: exhaustive coarse grid over the
/// feasible polytope followed by nested window refinement down to
/// `resolution`. Independent of the dual-ascent path used by
/// [`solve_separable`].
pub fn grid_oracle(
    a: &Mat,
    costs: &Mat,
    budgets: &[f64],
    resolution: f64,
) -> Result<(Mat, f64)> {
    check_inputs(a, costs, budgets)?;
    if !(resolution > 0.0 && resolution < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "resolution must lie in (0, 1), got {resolution}"
        )));
    }
    let (m, n) = a.shape();
    if m * n > GRID_CELL_CAP {
        return Err(Error::GridOracleTooLarge {
            entries: m * n,
            cap: GRID_CELL_CAP,
        });
    }

    let support: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a.get(i, j) > 0.0)
        .collect();
    if support.is_empty() {
        return Ok((Mat::zeros(m, n), 0.0));
    }

    let coarse = 1.0 / 12.0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let coarse_values: Vec<f64> = (1..=12).map(|t| (t as f64 * coarse).min(1.0)).collect();
    search(
        a,
        costs,
        budgets,
        &support,
        &vec![coarse_values; support.len()],
        &mut best,
    );
    let (mut center, mut best_obj) = match best {
        Some(b) => b,
        // No feasible coarse point: fall back to the floor corner.
        None => {
            let corner = vec![resolution; support.len()];
            let obj = point_objective(a, &support, &corner);
            (corner, obj)
        }
    };

    let mut step = coarse;
    while step > resolution {
        let fine = (step / 3.0).max(resolution);
        for _recenter in 0..12 {
            let values: Vec<Vec<f64>> = center
                .iter()
                .map(|&c| {
                    (-5..=5)
                        .map(|t| (c + t as f64 * fine).clamp(1e-9, 1.0))
                        .collect()
                })
                .collect();
            let mut stage_best = Some((center.clone(), best_obj));
            search(a, costs, budgets, &support, &values, &mut stage_best);
            let (point, obj) = stage_best.unwrap();
            let moved_to_edge = point
                .iter()
                .zip(&center)
                .any(|(&p, &c)| (p - c).abs() >= 5.0 * fine - 1e-12);
            center = point;
            best_obj = obj;
            if !moved_to_edge {
                break;
            }
        }
        step = fine;
        if step <= resolution {
            break;
        }
    }

    let mut x = Mat::zeros(m, n);
    for (&(i, j), &v) in support.iter().zip(&center) {
        x.set(i, j, v);
    }
    Ok((x, best_obj))
}

fn point_objective(a: &Mat, support: &[(usize, usize)], point: &[f64]) -> f64 {
    support
        .iter()
        .zip(point)
        .map(|(&(i, j), &x)| a.get(i, j) / x)
        .sum()
}

/// Exhaustive search over the per-entry value lists with row/budget pruning.
fn search(
    a: &Mat,
    costs: &Mat,
    budgets: &[f64],
    support: &[(usize, usize)],
    values: &[Vec<f64>],
    best: &mut Option<(Vec<f64>, f64)>,
) {
    let mut point = vec![0.0; support.len()];
    let mut row_sums = vec![0.0; a.rows()];
    let mut spends = vec![0.0; a.cols()];
    recurse(
        a, costs, budgets, support, values, 0, 0.0, &mut point, &mut row_sums, &mut spends, best,
    );
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    a: &Mat,
    costs: &Mat,
    budgets: &[f64],
    support: &[(usize, usize)],
    values: &[Vec<f64>],
    depth: usize,
    partial_obj: f64,
    point: &mut Vec<f64>,
    row_sums: &mut Vec<f64>,
    spends: &mut Vec<f64>,
    best: &mut Option<(Vec<f64>, f64)>,
) {
    if depth == support.len() {
        if best.as_ref().is_none_or(|(_, b)| partial_obj < *b) {
            *best = Some((point.clone(), partial_obj));
        }
        return;
    }
    let (i, j) = support[depth];
    let aij = a.get(i, j);
    let cij = costs.get(i, j);
    let mut seen_previous = f64::NAN;
    for &v in &values[depth] {
        if v == seen_previous {
            continue; // clamped duplicates
        }
        seen_previous = v;
        if row_sums[i] + v > 1.0 + 1e-12 || spends[j] + cij * v > budgets[j] + 1e-12 {
            continue;
        }
        let obj = partial_obj + aij / v;
        if best.as_ref().is_some_and(|(_, b)| obj >= *b) {
            continue; // objective only grows with depth
        }
        point[depth] = v;
        row_sums[i] += v;
        spends[j] += cij * v;
        recurse(
            a, costs, budgets, support, values, depth + 1, obj, point, row_sums, spends, best,
        );
        row_sums[i] -= v;
        spends[j] -= cij * v;
    }
}
