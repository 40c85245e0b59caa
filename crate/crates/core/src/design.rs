//! Experiment-matrix constructors: Bernoulli mixtures of the two candidate
//! allocations, the closed-form optimum without budget constraints, and the
//! budget-constrained optimum solved by [`crate::solver`].

use serde::{Deserialize, Serialize};

use crate::matrix::Mat;
use crate::model::{AllocationMatrix, ExperimentMatrix, ProblemInstance};
use crate::solver::{self, SolverCertificate, SolverConfig};
use crate::{Error, Result};

/// Per-pair variance weights `a_ij = (mu_ij^2 + sigma_ij^2)(w1_ij + w0_ij)`;
/// the coefficients of the `sum a_ij / x_ij` design objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignWeights {
    entries: Mat,
}

impl DesignWeights {
    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }
}

/// Computes the design weights of an instance.
pub fn design_weights(inst: &ProblemInstance) -> DesignWeights {
    let entries = Mat::from_fn(inst.m, inst.n, |i, j| {
        let k = f64::from(inst.w1.get(i, j)) + f64::from(inst.w0.get(i, j));
        if k == 0.0 {
            0.0
        } else {
            let mu = inst.utility.mu.get(i, j);
            (mu * mu + inst.utility.sigma2.get(i, j)) * k
        }
    });
    DesignWeights { entries }
}

/// Mixture design `X = p W1 + (1 - p) W0`.
pub fn bernoulli_design(
    w0: &AllocationMatrix,
    w1: &AllocationMatrix,
    p: f64,
) -> Result<ExperimentMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "mixture probability must lie in [0, 1], got {p}"
        )));
    }
    if w0.shape() != w1.shape() {
        return Err(Error::DimensionMismatch(format!(
            "w0 {:?} vs w1 {:?}",
            w0.shape(),
            w1.shape()
        )));
    }
    let entries = Mat::from_fn(w0.rows(), w0.cols(), |i, j| {
        p * f64::from(w1.get(i, j)) + (1.0 - p) * f64::from(w0.get(i, j))
    });
    ExperimentMatrix::new(entries)
}

/// Row-wise closed form ignoring budgets:
/// `x_ij = (w1_ij + w0_ij) sqrt(mu_ij^2 + sigma_ij^2) / (row normalizer)`.
/// Rows with all-zero weights stay all-zero.
pub fn unconstrained_optimal_design(inst: &ProblemInstance) -> ExperimentMatrix {
    let mut entries = Mat::zeros(inst.m, inst.n);
    for i in 0..inst.m {
        let mut numer = vec![0.0; inst.n];
        let mut denom = 0.0;
        for j in 0..inst.n {
            let k = f64::from(inst.w1.get(i, j)) + f64::from(inst.w0.get(i, j));
            if k > 0.0 {
                let mu = inst.utility.mu.get(i, j);
                let v = k * (mu * mu + inst.utility.sigma2.get(i, j)).sqrt();
                numer[j] = v;
                denom += v;
            }
        }
        if denom > 0.0 {
            for (j, &v) in numer.iter().enumerate() {
                entries.set(i, j, v / denom);
            }
        }
    }
    ExperimentMatrix::new(entries).expect("normalized rows sum to at most 1")
}

/// Budget-constrained optimal design; delegates to the separable solver on
/// the instance's design weights and returns its certificate.
pub fn constrained_optimal_design(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
) -> Result<(ExperimentMatrix, SolverCertificate)> {
    let weights = design_weights(inst);
    solver::solve_separable(weights.entries(), &inst.costs, &inst.budgets, cfg)
}
