//! Treatment-effect estimators and the closed-form variance / MSE
//! evaluators.
//!
//! All estimators follow the 0/0 = 0 convention: terms with a zero
//! observation are skipped, and a nonzero observation paired with a zero
//! probability is a hard error (it signals inconsistent inputs rather than
//! a harmless empty cell).

use crate::matrix::Mat;
use crate::model::{AllocationMatrix, ExperimentMatrix, ObservationMatrix, ProblemInstance};
use crate::{Error, Result};

fn check_shapes(
    o: &ObservationMatrix,
    w1: &AllocationMatrix,
    w0: &AllocationMatrix,
    probs_shape: (usize, usize),
) -> Result<()> {
    let shape = o.entries().shape();
    if w1.shape() != shape || w0.shape() != shape || probs_shape != shape {
        return Err(Error::DimensionMismatch(format!(
            "observations {:?}, w1 {:?}, w0 {:?}, probabilities {:?}",
            shape,
            w1.shape(),
            w0.shape(),
            probs_shape
        )));
    }
    Ok(())
}

/// Inverse-probability-weighted difference
/// `sum o_ij (w1_ij - w0_ij) / p_ij` over nonzero observations.
///
/// Computed per entry so that pairs with `w1_ij = w0_ij` contribute an exact
/// zero for every realization.
fn weighted_difference(
    o: &ObservationMatrix,
    w1: &AllocationMatrix,
    w0: &AllocationMatrix,
    prob: impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    let (m, n) = o.entries().shape();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let oij = o.get(i, j);
            if oij == 0.0 {
                continue;
            }
            let p = prob(i, j);
            if p == 0.0 {
                return Err(Error::ZeroProbabilityObservation { i, j });
            }
            let d = f64::from(w1.get(i, j)) - f64::from(w0.get(i, j));
            if d != 0.0 {
                total += oij * d / p;
            }
        }
    }
    Ok(total)
}

/// Horvitz-Thompson estimator with true (or replicated) inclusion
/// probabilities `p_ij`.
pub fn ht_estimator(
    o: &ObservationMatrix,
    w1: &AllocationMatrix,
    w0: &AllocationMatrix,
    inclusion_probs: &Mat,
) -> Result<f64> {
    check_shapes(o, w1, w0, inclusion_probs.shape())?;
    weighted_difference(o, w1, w0, |i, j| inclusion_probs.get(i, j))
}

/// Plug-in estimator: inclusion probabilities replaced by the design
/// probabilities `x_ij`.
pub fn plugin_estimator(
    o: &ObservationMatrix,
    w1: &AllocationMatrix,
    w0: &AllocationMatrix,
    x: &ExperimentMatrix,
) -> Result<f64> {
    check_shapes(o, w1, w0, x.entries().shape())?;
    weighted_difference(o, w1, w0, |i, j| x.get(i, j))
}

/// One self-normalized arm of the Hajek estimator:
/// `m * (sum o w / (p u))^-1 * sum o w / p`.
fn hajek_arm(
    o: &ObservationMatrix,
    w: &AllocationMatrix,
    probs: &Mat,
    utilities: &Mat,
    arm: &'static str,
) -> Result<f64> {
    let (m, n) = o.entries().shape();
    let mut weighted = 0.0;
    let mut normalizer = 0.0;
    for i in 0..m {
        for j in 0..n {
            let oij = o.get(i, j);
            if oij == 0.0 || w.get(i, j) == 0 {
                continue;
            }
            let p = probs.get(i, j);
            if p == 0.0 {
                return Err(Error::ZeroProbabilityObservation { i, j });
            }
            let u = utilities.get(i, j);
            if u == 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "hajek utility is zero at observed edge ({i}, {j})"
                )));
            }
            weighted += oij / p;
            normalizer += oij / (p * u);
        }
    }
    if normalizer == 0.0 {
        return Err(Error::HajekUndefined { arm });
    }
    Ok(m as f64 * weighted / normalizer)
}

/// Hajek estimator with inclusion probabilities `p_ij` and per-pair
/// utilities `u_ij` (realized values or means).
pub fn hajek_estimator(
    o: &ObservationMatrix,
    w1: &AllocationMatrix,
    w0: &AllocationMatrix,
    inclusion_probs: &Mat,
    utilities: &Mat,
) -> Result<f64> {
    check_shapes(o, w1, w0, inclusion_probs.shape())?;
    if utilities.shape() != o.entries().shape() {
        return Err(Error::DimensionMismatch(format!(
            "utilities {:?} vs observations {:?}",
            utilities.shape(),
            o.entries().shape()
        )));
    }
    let treated = hajek_arm(o, w1, inclusion_probs, utilities, "treatment")?;
    let control = hajek_arm(o, w0, inclusion_probs, utilities, "control")?;
    Ok(treated - control)
}

/// Hajek variant with design probabilities `x_ij` in place of `p_ij`.
/// Exposed for completeness; no statistical guarantees are asserted for it.
pub fn hajek_design_estimator(
    o: &ObservationMatrix,
    w1: &AllocationMatrix,
    w0: &AllocationMatrix,
    x: &ExperimentMatrix,
    utilities: &Mat,
) -> Result<f64> {
    hajek_estimator(o, w1, w0, x.entries(), utilities)
}

/// Closed-form variance of the plug-in estimator in the sufficient-budget
/// regime:
///
/// `sum (mu^2 + sigma^2)(w1 + w0) / x - sum mu^2 (w1 + w0)
///  + 2 sum_i (sum_j mu w1)_i (sum_j' mu w0)_i`.
///
/// The formula is evaluated as written; asserting the regime is the
/// caller's business.
pub fn variance_closed_form(inst: &ProblemInstance, x: &ExperimentMatrix) -> Result<f64> {
    if x.entries().shape() != (inst.m, inst.n) {
        return Err(Error::DimensionMismatch(format!(
            "experiment {:?} vs instance {}x{}",
            x.entries().shape(),
            inst.m,
            inst.n
        )));
    }
    let mut inverse_weighted = 0.0;
    let mut second_moment = 0.0;
    let mut cross = 0.0;
    for i in 0..inst.m {
        let mut treated_mean = 0.0;
        let mut control_mean = 0.0;
        for j in 0..inst.n {
            let k = f64::from(inst.w1.get(i, j)) + f64::from(inst.w0.get(i, j));
            let mu = inst.utility.mu.get(i, j);
            if k > 0.0 {
                let xij = x.get(i, j);
                if xij == 0.0 {
                    return Err(Error::ZeroProbabilityObservation { i, j });
                }
                let m2 = mu * mu + inst.utility.sigma2.get(i, j);
                inverse_weighted += m2 * k / xij;
                second_moment += mu * mu * k;
            }
            treated_mean += mu * f64::from(inst.w1.get(i, j));
            control_mean += mu * f64::from(inst.w0.get(i, j));
        }
        cross += treated_mean * control_mean;
    }
    Ok(inverse_weighted - second_moment + 2.0 * cross)
}

/// Closed-form MSE upper bound:
/// `sum (mu^2 + sigma^2)(w1 + w0) / x + (sum mu w1)^2 + (sum mu w0)^2`.
pub fn mse_upper_bound(inst: &ProblemInstance, x: &ExperimentMatrix) -> Result<f64> {
    if x.entries().shape() != (inst.m, inst.n) {
        return Err(Error::DimensionMismatch(format!(
            "experiment {:?} vs instance {}x{}",
            x.entries().shape(),
            inst.m,
            inst.n
        )));
    }
    let mut inverse_weighted = 0.0;
    let mut treated_total = 0.0;
    let mut control_total = 0.0;
    for i in 0..inst.m {
        for j in 0..inst.n {
            let k = f64::from(inst.w1.get(i, j)) + f64::from(inst.w0.get(i, j));
            let mu = inst.utility.mu.get(i, j);
            if k > 0.0 {
                let xij = x.get(i, j);
                if xij == 0.0 {
                    return Err(Error::ZeroProbabilityObservation { i, j });
                }
                inverse_weighted += (mu * mu + inst.utility.sigma2.get(i, j)) * k / xij;
            }
            treated_total += mu * f64::from(inst.w1.get(i, j));
            control_total += mu * f64::from(inst.w0.get(i, j));
        }
    }
    Ok(inverse_weighted + treated_total * treated_total + control_total * control_total)
}
