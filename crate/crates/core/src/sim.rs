//! Synthetic-instance generator, Monte-Carlo trial harness, and parameter
//! sweeps over the supply-demand rate `r1 = m/n`, the budget-cost rate `r2`,
//! and the consistency rate `r3`.
//!
//! Instances are generated as follows: `m = ceil(n r1)` items each pick one
//! treatment and one control buyer uniformly; the first `ceil(m r3)` items
//! are forced to agree; costs and base utilities are lognormal with location
//! 0 and scale 1/4; treated-edge utilities are doubled; each buyer's budget
//! is `r2` times the larger of its two candidate allocation costs.
//!
//! Reproducibility: per-trial generators derive from
//! `(master seed, grid point, instance, design, trial)`, so identical
//! configurations produce identical CSV bytes regardless of `rayon` worker
//! count.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{bernoulli_design, constrained_optimal_design, unconstrained_optimal_design};
use crate::matrix::Mat;
use crate::model::{
    expected_tte, AllocationMatrix, ExperimentMatrix, ProblemInstance,
    UtilityMode, UtilityModel,
};
use crate::online::{online_trial, solve_online_design};
use crate::rng::{derive_seed, shuffle_identity, stream_rng};
use crate::sampling::{estimate_inclusion_probs, PreparedDesign};
use crate::solver::SolverConfig;
use crate::throttle::{throttle_assignments_in_order, ThrottleKind};
use crate::{Error, Result};

/// Lognormal scale parameter (standard deviation of the underlying normal)
/// for generated costs and utilities.
pub const LOGNORMAL_SCALE: f64 = 0.25;

/// Budget assigned to buyers untouched by both candidate allocations, whose
/// natural budget would be zero and violate positivity.
const MIN_GENERATED_BUDGET: f64 = 1e-6;

/// Which experiment matrix the trials sample from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DesignKind {
    Bernoulli { p: f64 },
    Unconstrained,
    Constrained,
    Online,
}

impl std::fmt::Display for DesignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DesignKind::Bernoulli { p } => write!(f, "bernoulli:{p}"),
            DesignKind::Unconstrained => write!(f, "unconstrained"),
            DesignKind::Constrained => write!(f, "constrained"),
            DesignKind::Online => write!(f, "online"),
        }
    }
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "bernoulli" {
            return Ok(DesignKind::Bernoulli { p: 0.5 });
        }
        if let Some(p) = s.strip_prefix("bernoulli:") {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad mixture probability '{p}'")))?;
            return Ok(DesignKind::Bernoulli { p });
        }
        match s {
            "unconstrained" => Ok(DesignKind::Unconstrained),
            "constrained" => Ok(DesignKind::Constrained),
            "online" => Ok(DesignKind::Online),
            other => Err(Error::InvalidParameter(format!(
                "unknown design kind '{other}' (expected bernoulli[:p] | unconstrained | constrained | online)"
            ))),
        }
    }
}

impl Serialize for DesignKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DesignKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which estimator summarizes each trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Plug-in estimator dividing by the design probabilities.
    Plugin,
    /// Horvitz-Thompson with inclusion probabilities replicated `reps` times
    /// per instance.
    Ht { reps: usize },
    /// Self-normalized estimator with replicated inclusion probabilities.
    Hajek { reps: usize },
}

/// Replications used for inclusion-probability estimation when none are
/// given.
pub const DEFAULT_INCLUSION_REPS: usize = 10_000;

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Plugin => write!(f, "plugin"),
            EstimatorKind::Ht { reps } => write!(f, "ht:{reps}"),
            EstimatorKind::Hajek { reps } => write!(f, "hajek:{reps}"),
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_reps = |r: &str| -> Result<usize> {
            r.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad replication count '{r}'")))
        };
        match s {
            "plugin" => Ok(EstimatorKind::Plugin),
            "ht" => Ok(EstimatorKind::Ht {
                reps: DEFAULT_INCLUSION_REPS,
            }),
            "hajek" => Ok(EstimatorKind::Hajek {
                reps: DEFAULT_INCLUSION_REPS,
            }),
            other => {
                if let Some(r) = other.strip_prefix("ht:") {
                    Ok(EstimatorKind::Ht { reps: parse_reps(r)? })
                } else if let Some(r) = other.strip_prefix("hajek:") {
                    Ok(EstimatorKind::Hajek { reps: parse_reps(r)? })
                } else {
                    Err(Error::InvalidParameter(format!(
                        "unknown estimator kind '{other}' (expected plugin | ht[:reps] | hajek[:reps])"
                    )))
                }
            }
        }
    }
}

impl Serialize for EstimatorKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EstimatorKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameters of one simulation cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    /// Supply-demand rate `m / n`.
    pub r1: f64,
    /// Budget-cost rate.
    pub r2: f64,
    /// Consistency rate: fraction of items forced to identical allocations.
    pub r3: f64,
    pub trials: usize,
    pub instances: usize,
    pub design: DesignKind,
    pub throttle: ThrottleKind,
    pub estimator: EstimatorKind,
    pub utility_mode: UtilityMode,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 10,
            r1: 20.0,
            r2: 1.0,
            r3: 0.0,
            trials: 20_000,
            instances: 20,
            design: DesignKind::Constrained,
            throttle: ThrottleKind::Random,
            estimator: EstimatorKind::Plugin,
            utility_mode: UtilityMode::FixedRealization,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

impl SimConfig {
    /// Checks ranges; error messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("n: must be at least 1".into()));
        }
        if !(self.r1 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "r1: must be positive, got {}",
                self.r1
            )));
        }
        if !(self.r2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "r2: must be positive, got {}",
                self.r2
            )));
        }
        if !(0.0..=1.0).contains(&self.r3) {
            return Err(Error::InvalidParameter(format!(
                "r3: must lie in [0, 1], got {}",
                self.r3
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials: must be at least 1".into()));
        }
        if self.instances == 0 {
            return Err(Error::InvalidParameter(
                "instances: must be at least 1".into(),
            ));
        }
        if let DesignKind::Bernoulli { p } = self.design {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "design: mixture probability must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Draws an instance per the synthetic protocol.
pub fn generate_instance(cfg: &SimConfig, seed: u64) -> Result<ProblemInstance> {
    cfg.validate()?;
    let n = cfg.n;
    let m = (n as f64 * cfg.r1).ceil() as usize;
    let mut rng = stream_rng(seed, 0);

    let mut w1_buyers: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    let mut w0_buyers: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    let consistent = (m as f64 * cfg.r3).ceil() as usize;
    for (w0, w1) in w0_buyers.iter_mut().zip(&w1_buyers).take(consistent) {
        *w0 = *w1;
    }
    let w1_assign: Vec<Option<usize>> = w1_buyers.drain(..).map(Some).collect();
    let w0_assign: Vec<Option<usize>> = w0_buyers.drain(..).map(Some).collect();
    let w1 = AllocationMatrix::from_assignments(n, &w1_assign);
    let w0 = AllocationMatrix::from_assignments(n, &w0_assign);

    let base = LogNormal::new(0.0, LOGNORMAL_SCALE)
        .expect("lognormal parameters are fixed and valid");
    let costs = Mat::from_fn(m, n, |_, _| base.sample(&mut rng));

    let utility = match cfg.utility_mode {
        UtilityMode::FixedRealization => {
            let realized = Mat::from_fn(m, n, |i, j| {
                let u = base.sample(&mut rng);
                if w1.get(i, j) == 1 {
                    2.0 * u
                } else {
                    u
                }
            });
            UtilityModel::fixed(realized)
        }
        UtilityMode::ResamplePerTrial => {
            // Doubling a lognormal shifts its location by ln 2.
            let location = Mat::from_fn(m, n, |i, j| {
                if w1.get(i, j) == 1 {
                    2.0f64.ln()
                } else {
                    0.0
                }
            });
            let scale = Mat::filled(m, n, LOGNORMAL_SCALE);
            UtilityModel::lognormal(location, scale)
        }
    };

    let budgets: Vec<f64> = (0..n)
        .map(|j| {
            let max_cost = w1.spend(&costs, j).max(w0.spend(&costs, j));
            (cfg.r2 * max_cost).max(MIN_GENERATED_BUDGET)
        })
        .collect();

    Ok(ProblemInstance {
        m,
        n,
        costs,
        budgets,
        w0,
        w1,
        utility,
    })
}

/// Monte-Carlo bias / spread / MSE of an estimator under a design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub trials: usize,
    /// Ground-truth total treatment effect the estimates are judged against.
    pub tte: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Monte-Carlo standard error of the bias.
    pub bias_se: f64,
    pub stddev: f64,
    pub stddev_se: f64,
    pub mse: f64,
    /// `bias / tte`; absent when the TTE is zero.
    pub rel_bias: Option<f64>,
    /// `stddev / tte`; absent when the TTE is zero.
    pub rel_stddev: Option<f64>,
}

impl SummaryStats {
    fn from_estimates(estimates: &[f64], tte: f64) -> Self {
        let t = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / t;
        let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / t;
        let mse = estimates.iter().map(|e| (e - tte) * (e - tte)).sum::<f64>() / t;
        let stddev = var.sqrt();
        let bias = mean - tte;
        let ratio = |v: f64| (tte != 0.0).then(|| v / tte);
        Self {
            trials: estimates.len(),
            tte,
            mean_estimate: mean,
            bias,
            bias_se: stddev / t.sqrt(),
            stddev,
            stddev_se: stddev / (2.0 * (t - 1.0).max(1.0)).sqrt(),
            mse,
            rel_bias: ratio(bias),
            rel_stddev: ratio(stddev),
        }
    }

    /// Averages per-instance summaries into one row; standard errors combine
    /// as independent.
    pub fn aggregate(per_instance: &[SummaryStats]) -> SummaryStats {
        let k = per_instance.len() as f64;
        let mean = |f: fn(&SummaryStats) -> f64| per_instance.iter().map(f).sum::<f64>() / k;
        let se = |f: fn(&SummaryStats) -> f64| {
            per_instance.iter().map(|s| f(s) * f(s)).sum::<f64>().sqrt() / k
        };
        let tte = mean(|s| s.tte);
        let bias = mean(|s| s.bias);
        let stddev = mean(|s| s.stddev);
        let ratio = |v: f64| (tte != 0.0).then(|| v / tte);
        SummaryStats {
            trials: per_instance.first().map_or(0, |s| s.trials),
            tte,
            mean_estimate: mean(|s| s.mean_estimate),
            bias,
            bias_se: se(|s| s.bias_se),
            stddev,
            stddev_se: se(|s| s.stddev_se),
            mse: mean(|s| s.mse),
            rel_bias: ratio(bias),
            rel_stddev: ratio(stddev),
        }
    }
}

/// Scratch buffers reused across trials by one worker.
struct TrialScratch {
    assignments: Vec<Option<usize>>,
    order: Vec<usize>,
    spent: Vec<f64>,
    cut: Vec<bool>,
}

impl TrialScratch {
    fn new(m: usize, n: usize) -> Self {
        Self {
            assignments: Vec::with_capacity(m),
            order: (0..m).collect(),
            spent: vec![0.0; n],
            cut: vec![false; n],
        }
    }
}

struct TrialContext<'a> {
    inst: &'a ProblemInstance,
    design: &'a ExperimentMatrix,
    prepared: &'a PreparedDesign,
    w1_buyers: &'a [Option<usize>],
    w0_buyers: &'a [Option<usize>],
    throttle: ThrottleKind,
    estimator: EstimatorKind,
    /// Replicated inclusion probabilities, when the estimator needs them.
    inclusion: Option<&'a Mat>,
}

fn draw_trial_utility(
    inst: &ProblemInstance,
    i: usize,
    j: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    crate::sampling::draw_utility(&inst.utility, i, j, rng)
}

/// One offline trial: sample, throttle, observe, estimate.
fn offline_trial(
    ctx: &TrialContext<'_>,
    rng: &mut impl Rng,
    scratch: &mut TrialScratch,
) -> Result<f64> {
    let inst = ctx.inst;
    let m = inst.m;
    ctx.prepared.sample_into(rng, &mut scratch.assignments);
    match ctx.throttle {
        ThrottleKind::Sequential => {
            scratch.order.clear();
            scratch.order.extend(0..m);
            throttle_assignments_in_order(
                &mut scratch.assignments,
                &inst.costs,
                &inst.budgets,
                &scratch.order,
                &mut scratch.spent,
                &mut scratch.cut,
            );
        }
        ThrottleKind::Random => {
            shuffle_identity(&mut scratch.order, m, rng);
            throttle_assignments_in_order(
                &mut scratch.assignments,
                &inst.costs,
                &inst.budgets,
                &scratch.order,
                &mut scratch.spent,
                &mut scratch.cut,
            );
        }
        ThrottleKind::SequentialGreedy => {
            let w = AllocationMatrix::from_assignments(inst.n, &scratch.assignments);
            let kept =
                crate::throttle::sequential_throttle_greedy(&w, &inst.costs, &inst.budgets)?;
            for (i, a) in scratch.assignments.iter_mut().enumerate() {
                if a.is_some_and(|j| kept.get(i, j) == 0) {
                    *a = None;
                }
            }
        }
    }

    match ctx.estimator {
        EstimatorKind::Plugin => {
            let mut estimate = 0.0;
            for i in 0..m {
                if let Some(j) = scratch.assignments[i] {
                    let d = f64::from(u8::from(ctx.w1_buyers[i] == Some(j)))
                        - f64::from(u8::from(ctx.w0_buyers[i] == Some(j)));
                    if d != 0.0 {
                        let u = draw_trial_utility(inst, i, j, rng)?;
                        estimate += u * d / ctx.design.get(i, j);
                    }
                }
            }
            Ok(estimate)
        }
        EstimatorKind::Ht { .. } => {
            let probs = ctx.inclusion.expect("inclusion probabilities prepared");
            let mut estimate = 0.0;
            for i in 0..m {
                if let Some(j) = scratch.assignments[i] {
                    let d = f64::from(u8::from(ctx.w1_buyers[i] == Some(j)))
                        - f64::from(u8::from(ctx.w0_buyers[i] == Some(j)));
                    if d != 0.0 {
                        let p = probs.get(i, j);
                        if p == 0.0 {
                            return Err(Error::ZeroProbabilityObservation { i, j });
                        }
                        let u = draw_trial_utility(inst, i, j, rng)?;
                        estimate += u * d / p;
                    }
                }
            }
            Ok(estimate)
        }
        EstimatorKind::Hajek { .. } => {
            let probs = ctx.inclusion.expect("inclusion probabilities prepared");
            // Realized utilities cancel in the normalizer: o / (p u) = 1 / p.
            let mut weighted = [0.0f64; 2];
            let mut normalizer = [0.0f64; 2];
            for i in 0..m {
                if let Some(j) = scratch.assignments[i] {
                    let in_arm = [ctx.w1_buyers[i] == Some(j), ctx.w0_buyers[i] == Some(j)];
                    if !in_arm[0] && !in_arm[1] {
                        continue;
                    }
                    let p = probs.get(i, j);
                    if p == 0.0 {
                        return Err(Error::ZeroProbabilityObservation { i, j });
                    }
                    // One observation per edge, shared by both arms.
                    let u = draw_trial_utility(inst, i, j, rng)?;
                    for arm in 0..2 {
                        if in_arm[arm] {
                            weighted[arm] += u / p;
                            normalizer[arm] += 1.0 / p;
                        }
                    }
                }
            }
            for (arm, name) in [(0, "treatment"), (1, "control")] {
                if normalizer[arm] == 0.0 {
                    return Err(Error::HajekUndefined { arm: name });
                }
            }
            Ok(m as f64 * (weighted[0] / normalizer[0] - weighted[1] / normalizer[1]))
        }
    }
}

/// Runs the configured number of trials on one instance and aggregates the
/// estimator's bias, spread, and MSE against the instance's TTE.
pub fn run_trials(inst: &ProblemInstance, cfg: &SimConfig) -> Result<SummaryStats> {
    cfg.validate()?;
    let tau = expected_tte(inst);
    let trial_master = derive_seed(cfg.seed, &[0x7261_1a15]);

    let estimates: Vec<f64> = match cfg.design {
        DesignKind::Online => {
            let order: Vec<usize> = (0..inst.m).collect();
            let design = solve_online_design(inst, &cfg.solver, &order)?;
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream_rng(trial_master, t as u64);
                    online_trial(inst, &design.x, &order, &mut rng, false)
                        .map(|r| r.estimate)
                        .map_err(|e| Error::TrialFailed {
                            trial: t,
                            source: Box::new(e),
                        })
                })
                .collect::<Result<Vec<f64>>>()?
        }
        _ => {
            let design = build_offline_design(inst, cfg)?;
            let prepared = PreparedDesign::new(&design)?;
            let w1_buyers: Vec<Option<usize>> = (0..inst.m).map(|i| inst.w1.buyer_of(i)).collect();
            let w0_buyers: Vec<Option<usize>> = (0..inst.m).map(|i| inst.w0.buyer_of(i)).collect();
            let inclusion = match cfg.estimator {
                EstimatorKind::Plugin => None,
                EstimatorKind::Ht { reps } | EstimatorKind::Hajek { reps } => {
                    let mut rng = stream_rng(derive_seed(cfg.seed, &[0x1c71]), 0);
                    Some(estimate_inclusion_probs(
                        inst,
                        &design,
                        cfg.throttle,
                        reps,
                        &mut rng,
                    )?)
                }
            };
            let ctx = TrialContext {
                inst,
                design: &design,
                prepared: &prepared,
                w1_buyers: &w1_buyers,
                w0_buyers: &w0_buyers,
                throttle: cfg.throttle,
                estimator: cfg.estimator,
                inclusion: inclusion.as_ref(),
            };
            (0..cfg.trials)
                .into_par_iter()
                .map_init(
                    || TrialScratch::new(inst.m, inst.n),
                    |scratch, t| {
                        let mut rng = stream_rng(trial_master, t as u64);
                        offline_trial(&ctx, &mut rng, scratch).map_err(|e| Error::TrialFailed {
                            trial: t,
                            source: Box::new(e),
                        })
                    },
                )
                .collect::<Result<Vec<f64>>>()?
        }
    };

    Ok(SummaryStats::from_estimates(&estimates, tau))
}

fn build_offline_design(inst: &ProblemInstance, cfg: &SimConfig) -> Result<ExperimentMatrix> {
    match cfg.design {
        DesignKind::Bernoulli { p } => bernoulli_design(&inst.w0, &inst.w1, p),
        DesignKind::Unconstrained => Ok(unconstrained_optimal_design(inst)),
        DesignKind::Constrained => {
            let (x, cert) = constrained_optimal_design(inst, &cfg.solver)?;
            if !cert.converged {
                return Err(Error::OnlineSolverFailure {
                    step: 0,
                    residual: cert.max_kkt_residual,
                });
            }
            Ok(x)
        }
        DesignKind::Online => unreachable!("online designs are handled by run_trials"),
    }
}

/// A rectangular grid of simulation cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub n: usize,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub designs: Vec<DesignKind>,
    pub throttle: ThrottleKind,
    pub estimator: EstimatorKind,
    pub utility_mode: UtilityMode,
    pub trials: usize,
    pub instances: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            n: 10,
            r1: vec![20.0],
            r2: vec![1.0],
            r3: vec![0.0],
            designs: vec![DesignKind::Constrained],
            throttle: ThrottleKind::Random,
            estimator: EstimatorKind::Plugin,
            utility_mode: UtilityMode::FixedRealization,
            trials: 20_000,
            instances: 20,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

impl SweepGrid {
    /// Bias and spread against the supply-demand rate, optimal design vs
    /// Bernoulli(0.5), at `r2 = 1`.
    pub fn fig3_preset() -> Self {
        Self {
            r1: (1..=30).map(f64::from).collect(),
            designs: vec![DesignKind::Bernoulli { p: 0.5 }, DesignKind::Constrained],
            ..Self::default()
        }
    }

    /// Budget-constrained vs unconstrained optimum against the budget-cost
    /// rate, at `r1 = 20`.
    pub fn fig4_preset() -> Self {
        Self {
            r2: (0..10).map(|k| 1.0 + 0.1 * f64::from(k)).collect(),
            designs: vec![DesignKind::Constrained, DesignKind::Unconstrained],
            ..Self::default()
        }
    }

    /// Offline vs streamed design against the supply-demand rate. The
    /// streamed runs re-solve per item, so the preset keeps a coarse grid.
    pub fn fig5_preset() -> Self {
        Self {
            r1: vec![10.0, 20.0, 30.0],
            designs: vec![DesignKind::Constrained, DesignKind::Online],
            trials: 4_000,
            instances: 10,
            ..Self::default()
        }
    }

    /// Bias against the consistency rate for several budget-cost rates.
    pub fn fig6_preset() -> Self {
        Self {
            r2: vec![1.0, 1.3, 1.6, 1.9],
            r3: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            designs: vec![DesignKind::Constrained],
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "fig3" => Ok(Self::fig3_preset()),
            "fig4" => Ok(Self::fig4_preset()),
            "fig5" => Ok(Self::fig5_preset()),
            "fig6" => Ok(Self::fig6_preset()),
            other => Err(Error::InvalidParameter(format!(
                "unknown preset '{other}' (expected fig3 | fig4 | fig5 | fig6)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r1.is_empty() || self.r2.is_empty() || self.r3.is_empty() {
            return Err(Error::InvalidParameter(
                "r1/r2/r3: grids must not be empty".into(),
            ));
        }
        if self.designs.is_empty() {
            return Err(Error::InvalidParameter("designs: must not be empty".into()));
        }
        for (r1, r2, r3) in self.points() {
            self.cell(r1, r2, r3, self.designs[0], 0).validate()?;
        }
        Ok(())
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.r1.iter().flat_map(move |&r1| {
            self.r2
                .iter()
                .flat_map(move |&r2| self.r3.iter().map(move |&r3| (r1, r2, r3)))
        })
    }

    fn cell(&self, r1: f64, r2: f64, r3: f64, design: DesignKind, seed: u64) -> SimConfig {
        SimConfig {
            n: self.n,
            r1,
            r2,
            r3,
            trials: self.trials,
            instances: self.instances,
            design,
            throttle: self.throttle,
            estimator: self.estimator,
            utility_mode: self.utility_mode,
            seed,
            solver: self.solver.clone(),
        }
    }
}

/// One output row of a sweep: a grid point crossed with a design.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub design: DesignKind,
    pub throttle: ThrottleKind,
    pub estimator: EstimatorKind,
    pub instances: usize,
    pub stats: SummaryStats,
}

/// Runs every (grid point, design) cell. Instances are shared across designs
/// at a grid point for an apples-to-apples comparison; trial seeds include
/// the design index so estimates stay independent.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let mut rows = Vec::new();
    for (point_idx, (r1, r2, r3)) in grid.points().enumerate() {
        let mut per_design: Vec<Vec<SummaryStats>> =
            vec![Vec::with_capacity(grid.instances); grid.designs.len()];
        for inst_idx in 0..grid.instances {
            let inst_seed = derive_seed(grid.seed, &[1, point_idx as u64, inst_idx as u64]);
            let proto = grid.cell(r1, r2, r3, grid.designs[0], inst_seed);
            let inst = generate_instance(&proto, inst_seed)?;
            for (design_idx, &design) in grid.designs.iter().enumerate() {
                let trial_seed = derive_seed(
                    grid.seed,
                    &[2, point_idx as u64, inst_idx as u64, design_idx as u64],
                );
                let cfg = grid.cell(r1, r2, r3, design, trial_seed);
                per_design[design_idx].push(run_trials(&inst, &cfg)?);
            }
        }
        for (design_idx, &design) in grid.designs.iter().enumerate() {
            rows.push(SweepRow {
                r1,
                r2,
                r3,
                design,
                throttle: grid.throttle,
                estimator: grid.estimator,
                instances: grid.instances,
                stats: SummaryStats::aggregate(&per_design[design_idx]),
            });
        }
        log::info!(
            "sweep point {}/{} done (r1={r1}, r2={r2}, r3={r3})",
            point_idx + 1,
            grid.r1.len() * grid.r2.len() * grid.r3.len(),
        );
    }
    Ok(rows)
}

/// Fixed CSV column order shared by the CLI and the test suites.
pub const CSV_HEADER: &str = "r1,r2,r3,design,throttle,estimator,trials,instances,tte,bias,bias_se,stddev,stddev_se,mse,rel_bias,rel_stddev";

/// Renders sweep rows as CSV (stable byte-for-byte for a given input).
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.r1,
            row.r2,
            row.r3,
            row.design,
            row.throttle,
            row.estimator,
            row.stats.trials,
            row.instances,
            row.stats.tte,
            row.stats.bias,
            row.stats.bias_se,
            row.stats.stddev,
            row.stats.stddev_se,
            row.stats.mse,
            opt(row.stats.rel_bias),
            opt(row.stats.rel_stddev),
        ));
    }
    out
}
