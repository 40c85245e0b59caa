//! Sampling realized allocations from an experiment matrix, generating
//! observations, and Monte-Carlo estimation of inclusion probabilities.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use crate::matrix::Mat;
use crate::model::{
    AllocationMatrix, ExperimentMatrix, ObservationMatrix, ProblemInstance, UtilityGenerator,
    UtilityMode, UtilityModel, FEASIBILITY_TOL,
};
use crate::rng::shuffle_identity;
use crate::throttle::{self, ThrottleKind};
use crate::{Error, Result};

/// Per-row categorical sampler precomputed from an experiment matrix.
/// Building it once amortizes the support scan over many trials.
#[derive(Clone, Debug)]
pub struct PreparedDesign {
    rows: Vec<Vec<(usize, f64)>>, // (buyer, cumulative probability)
    cols: usize,
}

impl PreparedDesign {
    pub fn new(x: &ExperimentMatrix) -> Result<Self> {
        let mut rows = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let mut cum = 0.0;
            let mut options = Vec::new();
            for (j, &p) in x.row(i).iter().enumerate() {
                if p > 0.0 {
                    cum += p;
                    options.push((j, cum));
                }
            }
            if cum > 1.0 + FEASIBILITY_TOL {
                return Err(Error::RowSumExceedsOne { row: i, sum: cum });
            }
            rows.push(options);
        }
        Ok(Self {
            rows,
            cols: x.cols(),
        })
    }

    pub fn items(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Draws one buyer (or abort) per item into `out`.
    pub fn sample_into(&self, rng: &mut impl Rng, out: &mut Vec<Option<usize>>) {
        out.clear();
        for options in &self.rows {
            let u: f64 = rng.random();
            let mut chosen = None;
            for &(j, cum) in options {
                if u < cum {
                    chosen = Some(j);
                    break;
                }
            }
            out.push(chosen);
        }
    }
}

/// Samples a realized allocation: row `i` draws buyer `j` with probability
/// `x_ij` and aborts with the leftover row mass, independently across rows.
pub fn sample_allocation(x: &ExperimentMatrix, rng: &mut impl Rng) -> Result<AllocationMatrix> {
    let prepared = PreparedDesign::new(x)?;
    let mut assignments = Vec::new();
    prepared.sample_into(rng, &mut assignments);
    Ok(AllocationMatrix::from_assignments(x.cols(), &assignments))
}

/// Draws the utility of a single realized edge according to the model.
pub fn draw_utility(
    utility: &UtilityModel,
    i: usize,
    j: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    match (&utility.mode, &utility.generator) {
        (UtilityMode::FixedRealization, UtilityGenerator::Fixed { realized }) => {
            Ok(realized.get(i, j))
        }
        (UtilityMode::FixedRealization, UtilityGenerator::Lognormal { .. }) => Err(
            Error::InvalidParameter("fixed-realization mode requires a fixed generator".into()),
        ),
        (UtilityMode::ResamplePerTrial, UtilityGenerator::Fixed { realized }) => {
            Ok(realized.get(i, j))
        }
        (UtilityMode::ResamplePerTrial, UtilityGenerator::Lognormal { location, scale }) => {
            let dist = LogNormal::new(location.get(i, j), scale.get(i, j)).map_err(|e| {
                Error::InvalidParameter(format!("bad lognormal parameters at ({i},{j}): {e}"))
            })?;
            Ok(dist.sample(rng))
        }
    }
}

/// Observes utilities on the realized allocation: `o_ij = u_ij` where
/// `w'_ij = 1`, zero elsewhere.
pub fn observe(
    realized: &AllocationMatrix,
    utility: &UtilityModel,
    rng: &mut impl Rng,
) -> Result<ObservationMatrix> {
    let (m, n) = realized.shape();
    if utility.shape() != (m, n) {
        return Err(Error::DimensionMismatch(format!(
            "utility model {:?} vs allocation {:?}",
            utility.shape(),
            realized.shape()
        )));
    }
    let mut entries = Mat::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            if realized.get(i, j) == 1 {
                entries.set(i, j, draw_utility(utility, i, j, rng)?);
            }
        }
    }
    ObservationMatrix::new(entries, realized.clone())
}

/// Monte-Carlo estimate of the inclusion probabilities
/// `p_ij = Pr(item i survives sampling and throttling to buyer j)` by
/// replication.
pub fn estimate_inclusion_probs(
    inst: &ProblemInstance,
    x: &ExperimentMatrix,
    throttle_kind: ThrottleKind,
    reps: usize,
    rng: &mut impl Rng,
) -> Result<Mat> {
    if reps == 0 {
        return Err(Error::InvalidParameter("reps must be at least 1".into()));
    }
    let prepared = PreparedDesign::new(x)?;
    let m = inst.m;
    let n = inst.n;
    let mut counts = vec![0u32; m * n];
    let mut assignments = Vec::with_capacity(m);
    let mut order: Vec<usize> = (0..m).collect();
    let mut spent = vec![0.0; n];
    let mut cut = vec![false; n];
    for _ in 0..reps {
        prepared.sample_into(rng, &mut assignments);
        match throttle_kind {
            ThrottleKind::Sequential => {
                order.clear();
                order.extend(0..m);
            }
            ThrottleKind::Random => shuffle_identity(&mut order, m, rng),
            ThrottleKind::SequentialGreedy => {
                // The fast path below applies the strict prefix rule; fall
                // back to the dense implementation for the greedy variant.
                let w = AllocationMatrix::from_assignments(n, &assignments);
                let kept = throttle::sequential_throttle_greedy(&w, &inst.costs, &inst.budgets)?;
                for i in 0..m {
                    if let Some(j) = kept.buyer_of(i) {
                        counts[i * n + j] += 1;
                    }
                }
                continue;
            }
        }
        throttle::throttle_assignments_in_order(
            &mut assignments,
            &inst.costs,
            &inst.budgets,
            &order,
            &mut spent,
            &mut cut,
        );
        for (i, a) in assignments.iter().enumerate() {
            if let Some(j) = a {
                counts[i * n + j] += 1;
            }
        }
    }
    Ok(Mat::from_fn(m, n, |i, j| {
        f64::from(counts[i * n + j]) / reps as f64
    }))
}

/// Binomial standard errors to report alongside a replicated estimate from
/// [`estimate_inclusion_probs`].
pub fn inclusion_prob_se(p_hat: &Mat, reps: usize) -> Mat {
    p_hat.map(|p| (p * (1.0 - p) / reps as f64).sqrt())
}
