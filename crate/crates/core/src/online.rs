//! Streaming experiment design: at each arriving item the design problem is
//! re-solved over the revealed prefix under proportionally scaled budgets,
//! the new item's row is frozen, a buyer is sampled from it, and the
//! allocation is kept only if it passes a hard feasibility test against the
//! full budget.
//!
//! The per-step solutions depend only on the revealed rows and the budgets,
//! never on the sampled allocations, so the streamed experiment matrix can
//! be computed once per (instance, arrival order) and replayed across
//! Monte-Carlo trials.

use rand::Rng;

use crate::design::design_weights;
use crate::matrix::Mat;
use crate::model::{
    AllocationMatrix, ExperimentMatrix, ObservationMatrix, ProblemInstance, FEASIBILITY_TOL,
};
use crate::sampling::draw_utility;
use crate::solver::{solve_separable_warm, SolverConfig};
use crate::{estimators, Error, Result};

/// One revealed item of the stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamItem<'a> {
    /// Position in the stream (0-based step).
    pub step: usize,
    /// Original item index.
    pub item: usize,
    pub costs: &'a [f64],
    pub w1_buyer: Option<usize>,
    pub w0_buyer: Option<usize>,
}

/// Running state of one streamed run.
#[derive(Clone, Debug)]
pub struct StreamState {
    /// Steps completed.
    pub step: usize,
    /// Spend accumulated per buyer; never exceeds the budgets.
    pub spent: Vec<f64>,
    /// Experiment rows fixed so far (original item indexing).
    pub x: Mat,
    /// Observations accumulated so far (original item indexing).
    pub observations: Mat,
    /// Realized buyer per item after the feasibility test.
    pub realized: Vec<Option<usize>>,
}

fn validate_order(order: &[usize], m: usize) -> Result<()> {
    if order.len() != m {
        return Err(Error::InvalidPermutation(format!(
            "permutation has {} entries for {} items",
            order.len(),
            m
        )));
    }
    let mut seen = vec![false; m];
    for &i in order {
        if i >= m || seen[i] {
            return Err(Error::InvalidPermutation(format!(
                "index {i} out of range or repeated"
            )));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Iterates the instance's items in the given arrival order.
pub fn replay_stream<'a>(
    inst: &'a ProblemInstance,
    permutation: &'a [usize],
) -> Result<impl Iterator<Item = StreamItem<'a>> + 'a> {
    validate_order(permutation, inst.m)?;
    Ok(permutation.iter().enumerate().map(move |(step, &item)| StreamItem {
        step,
        item,
        costs: inst.costs.row(item),
        w1_buyer: inst.w1.buyer_of(item),
        w0_buyer: inst.w0.buyer_of(item),
    }))
}

/// The streamed experiment matrix together with the work it took.
#[derive(Clone, Debug)]
pub struct OnlineDesign {
    /// Frozen per-step rows, in original item indexing.
    pub x: ExperimentMatrix,
    /// Solver calls performed (one per stream step with any support).
    pub solver_invocations: usize,
}

/// Runs the per-step solves over the whole stream. Step `t` solves the
/// design problem over the revealed items under budgets scaled by
/// `(t + 1) / m`, warm-starting the budget duals from the previous step,
/// and keeps only the arriving item's row.
pub fn solve_online_design(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    order: &[usize],
) -> Result<OnlineDesign> {
    validate_order(order, inst.m)?;
    let weights = design_weights(inst);
    let m = inst.m;
    let n = inst.n;
    let mut x = Mat::zeros(m, n);
    let mut warm: Option<Vec<f64>> = None;
    let mut solver_invocations = 0;
    let mut any_support = false;

    for t in 0..m {
        let revealed = &order[..=t];
        any_support = any_support || weights.entries().row(order[t]).iter().any(|&a| a > 0.0);
        if !any_support {
            continue; // nothing to randomize yet; rows stay zero
        }
        let sub_a = Mat::from_fn(t + 1, n, |r, j| weights.get(revealed[r], j));
        let sub_c = Mat::from_fn(t + 1, n, |r, j| inst.costs.get(revealed[r], j));
        let scale = (t + 1) as f64 / m as f64;
        let scaled_b: Vec<f64> = inst.budgets.iter().map(|&b| b * scale).collect();
        let (sub_x, cert) = solve_separable_warm(&sub_a, &sub_c, &scaled_b, cfg, warm.as_deref())?;
        solver_invocations += 1;
        if !cert.converged {
            return Err(Error::OnlineSolverFailure {
                step: t,
                residual: cert.max_kkt_residual,
            });
        }
        warm = Some(cert.budget_duals.clone());
        let row = sub_x.row(t).to_vec();
        x.row_mut(order[t]).copy_from_slice(&row);
    }

    Ok(OnlineDesign {
        x: ExperimentMatrix::new(x)?,
        solver_invocations,
    })
}

/// Per-step record of one streamed trial.
#[derive(Clone, Debug, PartialEq)]
pub struct OnlineTrialStep {
    pub step: usize,
    pub item: usize,
    pub sampled_buyer: Option<usize>,
    /// Whether the feasibility test passed (vacuously true on aborts).
    pub feasible: bool,
    /// Cost charged at this step (zero on abort or rejection).
    pub spend: f64,
}

/// Outcome of replaying one trial against a precomputed streamed design.
#[derive(Clone, Debug)]
pub struct OnlineTrialResult {
    pub estimate: f64,
    /// Realized buyer per item (original indexing) after the feasibility test.
    pub realized: Vec<Option<usize>>,
    /// Utility observed per item where realized.
    pub observed: Vec<f64>,
    /// Items whose sampled buyer failed the feasibility test.
    pub rejections: usize,
    pub state: StreamState,
    pub trace: Option<Vec<OnlineTrialStep>>,
}

/// Replays one trial: samples each frozen row in stream order, applies the
/// hard feasibility test, observes utilities on accepted allocations, and
/// computes the plug-in estimate against the streamed design.
pub fn online_trial(
    inst: &ProblemInstance,
    design: &ExperimentMatrix,
    order: &[usize],
    rng: &mut impl Rng,
    record_trace: bool,
) -> Result<OnlineTrialResult> {
    validate_order(order, inst.m)?;
    let m = inst.m;
    let n = inst.n;
    let mut spent = vec![0.0; n];
    let mut realized: Vec<Option<usize>> = vec![None; m];
    let mut observed = vec![0.0; m];
    let mut rejections = 0;
    let mut trace = record_trace.then(Vec::new);

    for (step, &item) in order.iter().enumerate() {
        // Sample the frozen row for this item only.
        let u: f64 = rng.random();
        let mut sampled = None;
        let mut cum = 0.0;
        for (j, &p) in design.row(item).iter().enumerate() {
            if p > 0.0 {
                cum += p;
                if u < cum {
                    sampled = Some(j);
                    break;
                }
            }
        }
        let mut feasible = true;
        let mut spend = 0.0;
        if let Some(j) = sampled {
            let c = inst.costs.get(item, j);
            if spent[j] + c <= inst.budgets[j] + FEASIBILITY_TOL {
                spent[j] += c;
                spend = c;
                realized[item] = Some(j);
                observed[item] = draw_utility(&inst.utility, item, j, rng)?;
            } else {
                feasible = false;
                rejections += 1;
            }
        }
        if let Some(t) = trace.as_mut() {
            t.push(OnlineTrialStep {
                step,
                item,
                sampled_buyer: sampled,
                feasible,
                spend,
            });
        }
    }

    // Plug-in estimate over the accumulated observations, accumulated in
    // original item order (matches the matrix-based estimator exactly).
    let mut estimate = 0.0;
    for i in 0..m {
        if let Some(j) = realized[i] {
            let d = f64::from(inst.w1.get(i, j)) - f64::from(inst.w0.get(i, j));
            if d != 0.0 {
                estimate += observed[i] * d / design.get(i, j);
            }
        }
    }

    let mut observations = Mat::zeros(m, n);
    for i in 0..m {
        if let Some(j) = realized[i] {
            observations.set(i, j, observed[i]);
        }
    }
    let state = StreamState {
        step: m,
        spent,
        x: design.entries().clone(),
        observations,
        realized: realized.clone(),
    };
    Ok(OnlineTrialResult {
        estimate,
        realized,
        observed,
        rejections,
        state,
        trace,
    })
}

/// Result of a full streamed run.
#[derive(Clone, Debug)]
pub struct OnlineRunResult {
    pub x: ExperimentMatrix,
    pub observations: ObservationMatrix,
    pub estimate: f64,
    pub solver_invocations: usize,
    pub rejections: usize,
    pub trace: Vec<OnlineTrialStep>,
}

/// Incremental driver interleaving the per-step solve with sampling and the
/// feasibility test, so callers can persist the trace as it grows and keep
/// the completed prefix if a step fails.
pub struct OnlineRunner<'a> {
    inst: &'a ProblemInstance,
    cfg: &'a SolverConfig,
    order: Vec<usize>,
    weights: Mat,
    x: Mat,
    observations: Mat,
    realized: Vec<Option<usize>>,
    spent: Vec<f64>,
    warm: Option<Vec<f64>>,
    step: usize,
    solver_invocations: usize,
    rejections: usize,
    any_support: bool,
    trace: Vec<OnlineTrialStep>,
}

impl<'a> OnlineRunner<'a> {
    pub fn new(inst: &'a ProblemInstance, cfg: &'a SolverConfig, order: &[usize]) -> Result<Self> {
        validate_order(order, inst.m)?;
        Ok(Self {
            inst,
            cfg,
            order: order.to_vec(),
            weights: design_weights(inst).entries().clone(),
            x: Mat::zeros(inst.m, inst.n),
            observations: Mat::zeros(inst.m, inst.n),
            realized: vec![None; inst.m],
            spent: vec![0.0; inst.n],
            warm: None,
            step: 0,
            solver_invocations: 0,
            rejections: 0,
            any_support: false,
            trace: Vec::with_capacity(inst.m),
        })
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.inst.m
    }

    pub fn trace(&self) -> &[OnlineTrialStep] {
        &self.trace
    }

    /// Runs one stream step; `Err` leaves the completed prefix intact.
    pub fn step(&mut self, rng: &mut impl Rng) -> Result<OnlineTrialStep> {
        let inst = self.inst;
        let t = self.step;
        let item = self.order[t];
        self.any_support =
            self.any_support || self.weights.row(item).iter().any(|&a| a > 0.0);
        if self.any_support {
            let revealed = &self.order[..=t];
            let sub_a = Mat::from_fn(t + 1, inst.n, |r, j| self.weights.get(revealed[r], j));
            let sub_c = Mat::from_fn(t + 1, inst.n, |r, j| inst.costs.get(revealed[r], j));
            let scale = (t + 1) as f64 / inst.m as f64;
            let scaled_b: Vec<f64> = inst.budgets.iter().map(|&b| b * scale).collect();
            let (sub_x, cert) =
                solve_separable_warm(&sub_a, &sub_c, &scaled_b, self.cfg, self.warm.as_deref())?;
            self.solver_invocations += 1;
            if !cert.converged {
                return Err(Error::OnlineSolverFailure {
                    step: t,
                    residual: cert.max_kkt_residual,
                });
            }
            self.warm = Some(cert.budget_duals.clone());
            let row = sub_x.row(t).to_vec();
            self.x.row_mut(item).copy_from_slice(&row);
        }

        let u: f64 = rng.random();
        let mut sampled = None;
        let mut cum = 0.0;
        for (j, &p) in self.x.row(item).iter().enumerate() {
            if p > 0.0 {
                cum += p;
                if u < cum {
                    sampled = Some(j);
                    break;
                }
            }
        }
        let mut feasible = true;
        let mut spend = 0.0;
        if let Some(j) = sampled {
            let c = inst.costs.get(item, j);
            if self.spent[j] + c <= inst.budgets[j] + FEASIBILITY_TOL {
                self.spent[j] += c;
                spend = c;
                self.realized[item] = Some(j);
                self.observations
                    .set(item, j, draw_utility(&inst.utility, item, j, rng)?);
            } else {
                feasible = false;
                self.rejections += 1;
            }
        }
        let record = OnlineTrialStep {
            step: t,
            item,
            sampled_buyer: sampled,
            feasible,
            spend,
        };
        self.trace.push(record.clone());
        self.step += 1;
        Ok(record)
    }

    /// Completes the run: plug-in estimate over the accumulated
    /// observations and frozen rows.
    pub fn finish(self) -> Result<OnlineRunResult> {
        if self.step < self.inst.m {
            return Err(Error::InvalidParameter(format!(
                "stream incomplete: {} of {} steps done",
                self.step, self.inst.m
            )));
        }
        let x = ExperimentMatrix::new(self.x)?;
        let realized = AllocationMatrix::from_assignments(self.inst.n, &self.realized);
        let observations = ObservationMatrix::new(self.observations, realized)?;
        let estimate =
            estimators::plugin_estimator(&observations, &self.inst.w1, &self.inst.w0, &x)?;
        Ok(OnlineRunResult {
            x,
            observations,
            estimate,
            solver_invocations: self.solver_invocations,
            rejections: self.rejections,
            trace: self.trace,
        })
    }
}

/// Full streamed run in natural arrival order: per-step solves, sampling,
/// feasibility-tested allocation, observation, and the final plug-in
/// estimate.
pub fn online_run(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    rng: &mut impl Rng,
) -> Result<OnlineRunResult> {
    let order: Vec<usize> = (0..inst.m).collect();
    online_run_with_order(inst, cfg, &order, rng)
}

/// [`online_run`] with an explicit arrival order.
pub fn online_run_with_order(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    order: &[usize],
    rng: &mut impl Rng,
) -> Result<OnlineRunResult> {
    let mut runner = OnlineRunner::new(inst, cfg, order)?;
    while !runner.is_done() {
        runner.step(rng)?;
    }
    runner.finish()
}
