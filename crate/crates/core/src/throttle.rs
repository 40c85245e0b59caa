//! Modification functions mapping any sampled allocation to a
//! budget-satisfying one, plus the large-`m` survival lower bound under
//! random throttling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Mat;
use crate::model::{AllocationMatrix, FEASIBILITY_TOL};
use crate::rng::shuffle_identity;
use crate::{Error, Result};

/// Which modification rule to apply to sampled allocations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThrottleKind {
    /// Per-buyer prefix rule on the original item index: the first item that
    /// overruns the prefix budget and every later item for that buyer are
    /// dropped.
    Sequential,
    /// Prefix rule applied in a uniformly random item order.
    Random,
    /// Looser sequential reading: later items that still fit are kept.
    SequentialGreedy,
}

impl std::fmt::Display for ThrottleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThrottleKind::Sequential => write!(f, "sequential"),
            ThrottleKind::Random => write!(f, "random"),
            ThrottleKind::SequentialGreedy => write!(f, "sequential-greedy"),
        }
    }
}

impl std::str::FromStr for ThrottleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(ThrottleKind::Sequential),
            "random" => Ok(ThrottleKind::Random),
            "sequential-greedy" => Ok(ThrottleKind::SequentialGreedy),
            other => Err(Error::InvalidParameter(format!(
                "unknown throttle kind '{other}' (expected sequential | random | sequential-greedy)"
            ))),
        }
    }
}

fn check_dims(w: &AllocationMatrix, costs: &Mat, budgets: &[f64]) -> Result<()> {
    if w.shape() != costs.shape() || budgets.len() != costs.cols() {
        return Err(Error::DimensionMismatch(format!(
            "allocation {:?}, costs {:?}, budgets len {}",
            w.shape(),
            costs.shape(),
            budgets.len()
        )));
    }
    Ok(())
}

/// Applies the prefix rule in the given item order to a dense allocation.
/// `greedy` keeps later items that still fit instead of cutting at the first
/// overrun.
fn throttle_dense_in_order(
    w: &AllocationMatrix,
    costs: &Mat,
    budgets: &[f64],
    order: &[usize],
    greedy: bool,
) -> AllocationMatrix {
    let n = costs.cols();
    let mut out = w.clone();
    let mut spent = vec![0.0; n];
    let mut cut = vec![false; n];
    for &i in order {
        for j in 0..n {
            if w.get(i, j) == 1 {
                let c = costs.get(i, j);
                if !cut[j] && spent[j] + c <= budgets[j] + FEASIBILITY_TOL {
                    spent[j] += c;
                } else {
                    if !greedy {
                        cut[j] = true;
                    }
                    out.set(i, j, 0);
                }
            }
        }
    }
    out
}

/// Deterministic prefix throttle in ascending item order (Definition-style:
/// everything after the first overrun is dropped for that buyer).
pub fn sequential_throttle(
    w: &AllocationMatrix,
    costs: &Mat,
    budgets: &[f64],
) -> Result<AllocationMatrix> {
    check_dims(w, costs, budgets)?;
    let order: Vec<usize> = (0..w.rows()).collect();
    Ok(throttle_dense_in_order(w, costs, budgets, &order, false))
}

/// Greedy variant of [`sequential_throttle`]: drops only the items that do
/// not fit, keeping cheaper later ones.
pub fn sequential_throttle_greedy(
    w: &AllocationMatrix,
    costs: &Mat,
    budgets: &[f64],
) -> Result<AllocationMatrix> {
    check_dims(w, costs, budgets)?;
    let order: Vec<usize> = (0..w.rows()).collect();
    Ok(throttle_dense_in_order(w, costs, budgets, &order, true))
}

/// Prefix throttle in a uniformly random item order (one permutation per
/// call, Fisher-Yates from the supplied generator).
pub fn random_throttle(
    w: &AllocationMatrix,
    costs: &Mat,
    budgets: &[f64],
    rng: &mut impl Rng,
) -> Result<AllocationMatrix> {
    check_dims(w, costs, budgets)?;
    let mut order = Vec::new();
    shuffle_identity(&mut order, w.rows(), rng);
    Ok(throttle_dense_in_order(w, costs, budgets, &order, false))
}

/// Prefix throttle in an explicit item order; the deterministic core of
/// [`random_throttle`], exposed for exact enumeration over permutations.
pub fn throttle_with_order(
    w: &AllocationMatrix,
    costs: &Mat,
    budgets: &[f64],
    order: &[usize],
) -> Result<AllocationMatrix> {
    check_dims(w, costs, budgets)?;
    if order.len() != w.rows() {
        return Err(Error::InvalidPermutation(format!(
            "order has {} entries for {} items",
            order.len(),
            w.rows()
        )));
    }
    Ok(throttle_dense_in_order(w, costs, budgets, order, false))
}

/// Assignment-vector fast path used by the trial loop; same rule as
/// [`throttle_with_order`] restricted to one-hot allocations, editing
/// `assignments` in place.
pub(crate) fn throttle_assignments_in_order(
    assignments: &mut [Option<usize>],
    costs: &Mat,
    budgets: &[f64],
    order: &[usize],
    spent: &mut [f64],
    cut: &mut [bool],
) {
    spent.fill(0.0);
    cut.fill(false);
    for &i in order {
        if let Some(j) = assignments[i] {
            let c = costs.get(i, j);
            if !cut[j] && spent[j] + c <= budgets[j] + FEASIBILITY_TOL {
                spent[j] += c;
            } else {
                cut[j] = true;
                assignments[i] = None;
            }
        }
    }
}

/// Lower bound on the conditional survival probability
/// `Pr(item kept | item sampled)` under random throttling, for a buyer with
/// `m_j` related items, costs in `[l, h]`, and design probabilities at least
/// `x0` on the support:
///
/// `1 - (T + m_j^(2/3)) / m_j - exp(-2 m_j^(1/3) l^2 x0^2 / h^2)` with
/// `T = ceil(h / (l x0))`, clamped below at 0.
pub fn survival_lower_bound(m_j: usize, l: f64, h: f64, x0: f64) -> Result<f64> {
    if m_j == 0 {
        return Err(Error::InvalidParameter("item count must be at least 1".into()));
    }
    if !(l > 0.0 && h >= l) {
        return Err(Error::InvalidParameter(format!(
            "cost bounds must satisfy 0 < l <= h, got l = {l}, h = {h}"
        )));
    }
    if !(x0 > 0.0 && x0 <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "minimum support probability must lie in (0, 1], got {x0}"
        )));
    }
    let m = m_j as f64;
    let t = (h / (l * x0)).ceil();
    let bound = 1.0 - (t + m.powf(2.0 / 3.0)) / m
        - (-2.0 * m.powf(1.0 / 3.0) * l * l * x0 * x0 / (h * h)).exp();
    Ok(bound.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_budget_satisfying;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn sequential_drops_suffix_of_overrunning_buyer() {
        // 3 items, 1 buyer, unit costs, budget 2: items 1 and 2 survive.
        let w = AllocationMatrix::from_entries(vec![vec![1], vec![1], vec![1]]).unwrap();
        let costs = Mat::filled(3, 1, 1.0);
        let out = sequential_throttle(&w, &costs, &[2.0]).unwrap();
        assert_eq!(out.get(0, 0), 1);
        assert_eq!(out.get(1, 0), 1);
        assert_eq!(out.get(2, 0), 0);
    }

    #[test]
    fn sequential_keeps_already_satisfying_allocation() {
        let w = AllocationMatrix::from_entries(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let costs = Mat::filled(2, 2, 1.0);
        let out = sequential_throttle(&w, &costs, &[1.0, 1.0]).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn sequential_cuts_item_after_first_overrun_even_if_cheaper_fits() {
        // Items cost (1, 2, 0.5); budget 1.5. The prefix rule keeps item 0,
        // drops item 1 (overrun) and also item 2; the greedy variant keeps
        // item 2 because it still fits.
        let w = AllocationMatrix::from_entries(vec![vec![1], vec![1], vec![1]]).unwrap();
        let costs = Mat::from_rows(vec![vec![1.0], vec![2.0], vec![0.5]]).unwrap();
        let strict = sequential_throttle(&w, &costs, &[1.5]).unwrap();
        assert_eq!(strict.get(0, 0), 1);
        assert_eq!(strict.get(1, 0), 0);
        assert_eq!(strict.get(2, 0), 0);
        let greedy = sequential_throttle_greedy(&w, &costs, &[1.5]).unwrap();
        assert_eq!(greedy.get(0, 0), 1);
        assert_eq!(greedy.get(1, 0), 0);
        assert_eq!(greedy.get(2, 0), 1);
    }

    #[test]
    fn sequential_matches_overspend_example() {
        // Unit costs, budget 2, buyer 1 sampled items {1, 2, 3}: item 3 goes.
        let w = AllocationMatrix::from_entries(vec![
            vec![1, 0],
            vec![1, 0],
            vec![1, 0],
            vec![0, 1],
        ])
        .unwrap();
        let costs = Mat::filled(4, 2, 1.0);
        let out = sequential_throttle(&w, &costs, &[2.0, 2.0]).unwrap();
        assert_eq!(out.get(0, 0), 1);
        assert_eq!(out.get(1, 0), 1);
        assert_eq!(out.get(2, 0), 0);
        assert_eq!(out.get(3, 1), 1);
    }

    #[test]
    fn random_keeps_satisfying_allocation_for_every_permutation() {
        let w = AllocationMatrix::from_entries(vec![vec![1, 0], vec![0, 1], vec![1, 0]]).unwrap();
        let costs = Mat::filled(3, 2, 1.0);
        let budgets = [2.0, 1.0];
        let mut rng = stream_rng(31, 0);
        for _ in 0..50 {
            let out = random_throttle(&w, &costs, &budgets, &mut rng).unwrap();
            assert_eq!(out, w);
        }
    }

    #[test]
    fn random_drops_each_overrunning_item_uniformly() {
        // 3 unit-cost items on one buyer with budget 2: each item should be
        // the dropped one in a third of the draws.
        let w = AllocationMatrix::from_entries(vec![vec![1], vec![1], vec![1]]).unwrap();
        let costs = Mat::filled(3, 1, 1.0);
        let mut rng = stream_rng(32, 0);
        let draws = 100_000;
        let mut dropped = [0u32; 3];
        for _ in 0..draws {
            let out = random_throttle(&w, &costs, &[2.0], &mut rng).unwrap();
            for (i, d) in dropped.iter_mut().enumerate() {
                if out.get(i, 0) == 0 {
                    *d += 1;
                }
            }
        }
        let se = (1.0 / 3.0 * 2.0 / 3.0 / draws as f64).sqrt();
        for d in dropped {
            let f = f64::from(d) / draws as f64;
            assert!((f - 1.0 / 3.0).abs() <= 3.0 * se, "drop rate {f}");
        }
    }

    #[test]
    fn random_survivor_is_fair_between_two_items() {
        let w = AllocationMatrix::from_entries(vec![vec![1], vec![1]]).unwrap();
        let costs = Mat::filled(2, 1, 2.0);
        let mut rng = stream_rng(33, 0);
        let draws = 100_000;
        let mut first_survives = 0u32;
        for _ in 0..draws {
            let out = random_throttle(&w, &costs, &[2.0], &mut rng).unwrap();
            let kept: u8 = out.get(0, 0) + out.get(1, 0);
            assert_eq!(kept, 1, "exactly one item must survive");
            first_survives += u32::from(out.get(0, 0));
        }
        let f = f64::from(first_survives) / draws as f64;
        let se = (0.25 / draws as f64).sqrt();
        assert!((f - 0.5).abs() <= 3.0 * se, "survivor rate {f}");
    }

    #[test]
    fn survival_bound_examples() {
        let b = survival_lower_bound(1_000_000, 1.0, 1.0, 1.0).unwrap();
        assert!((b - 0.989999).abs() < 1e-5, "bound {b}");

        // Small m drives the expression negative; clamped at zero.
        assert_eq!(survival_lower_bound(2, 1.0, 1.0, 0.5).unwrap(), 0.0);

        assert!(survival_lower_bound(0, 1.0, 1.0, 0.5).is_err());
        assert!(survival_lower_bound(10, 2.0, 1.0, 0.5).is_err());
        assert!(survival_lower_bound(10, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn survival_bound_is_monotone_in_item_count() {
        let mut prev = 0.0;
        for exp in 1..=7 {
            let m = 10usize.pow(exp);
            let b = survival_lower_bound(m, 0.5, 1.5, 0.4).unwrap();
            assert!(b >= prev, "bound decreased at m = {m}");
            prev = b;
        }
        assert!(prev > 0.9);
    }

    #[test]
    fn sequential_throttle_is_idempotent() {
        let mut rng = stream_rng(34, 0);
        let m = 12;
        let n = 3;
        for _ in 0..20 {
            let assignments: Vec<Option<usize>> = (0..m)
                .map(|_| (rng.random::<f64>() < 0.8).then(|| rng.random_range(0..n)))
                .collect();
            let w = AllocationMatrix::from_assignments(n, &assignments);
            let costs = Mat::from_fn(m, n, |_, _| 0.2 + rng.random::<f64>());
            let budgets: Vec<f64> = (0..n).map(|_| 1.0 + rng.random::<f64>()).collect();
            let once = sequential_throttle(&w, &costs, &budgets).unwrap();
            let twice = sequential_throttle(&once, &costs, &budgets).unwrap();
            assert_eq!(once, twice);
        }
    }

    proptest! {
        // Both throttles return budget-satisfying allocations and only
        // remove edges, for arbitrary binary allocations (including rows
        // with several set entries).
        #[test]
        fn throttles_restore_feasibility(seed in 0u64..500) {
            let mut rng = stream_rng(35, seed);
            let m = rng.random_range(1..10usize);
            let n = rng.random_range(1..4usize);
            let mut w = AllocationMatrix::zeros(m, n);
            for i in 0..m {
                for j in 0..n {
                    if rng.random::<f64>() < 0.45 {
                        w.set(i, j, 1);
                    }
                }
            }
            let costs = Mat::from_fn(m, n, |_, _| rng.random::<f64>() * 2.0);
            let budgets: Vec<f64> = (0..n).map(|_| 0.2 + rng.random::<f64>()).collect();
            for out in [
                sequential_throttle(&w, &costs, &budgets).unwrap(),
                sequential_throttle_greedy(&w, &costs, &budgets).unwrap(),
                random_throttle(&w, &costs, &budgets, &mut rng).unwrap(),
            ] {
                prop_assert!(is_budget_satisfying(&out, &costs, &budgets).unwrap());
                for i in 0..m {
                    for j in 0..n {
                        prop_assert!(out.get(i, j) <= w.get(i, j));
                    }
                }
            }
        }
    }
}
