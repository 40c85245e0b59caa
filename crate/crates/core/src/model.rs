//! Domain types: problem instances, allocation/experiment/observation
//! matrices, utility models, validation, and the ground-truth total
//! treatment effect.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::matrix::Mat;
use crate::{Error, Result};

/// Absolute tolerance on budget and row-sum comparisons.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Binary item-by-buyer matrix; `1` at `(i, j)` allocates item `i` to
/// buyer `j`. A valid allocation has at most one `1` per row (an all-zero
/// row is an aborted item), but invalid matrices are representable so that
/// validation can report them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocationMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl AllocationMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    /// Builds from nested 0/1 rows.
    pub fn from_entries(rows: Vec<Vec<u8>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::DimensionMismatch(format!(
                    "allocation row {i} has {} entries, expected {ncols}",
                    row.len()
                )));
            }
            for &v in row {
                if v > 1 {
                    return Err(Error::InvalidParameter(format!(
                        "allocation entries must be 0 or 1, found {v} in row {i}"
                    )));
                }
                data.push(v);
            }
        }
        Ok(Self {
            rows: nrows,
            cols: ncols,
            data,
        })
    }

    /// Builds a one-hot-per-row allocation from per-item buyer assignments
    /// (`None` aborts the item).
    pub fn from_assignments(cols: usize, assignments: &[Option<usize>]) -> Self {
        let rows = assignments.len();
        let mut data = vec![0; rows * cols];
        for (i, a) in assignments.iter().enumerate() {
            if let Some(j) = a {
                data[i * cols + j] = 1;
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: u8) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.data[i * self.cols..(i + 1) * self.cols]
            .iter()
            .map(|&v| v as usize)
            .sum()
    }

    /// First allocated buyer of row `i`, if any. Meaningful on rows with at
    /// most one set entry.
    pub fn buyer_of(&self, i: usize) -> Option<usize> {
        self.data[i * self.cols..(i + 1) * self.cols]
            .iter()
            .position(|&v| v == 1)
    }

    /// Per-item buyer assignments; rows must be one-hot or empty.
    pub fn assignments(&self) -> Result<Vec<Option<usize>>> {
        (0..self.rows)
            .map(|i| {
                if self.row_sum(i) > 1 {
                    Err(Error::InvalidParameter(format!(
                        "allocation row {i} has more than one buyer"
                    )))
                } else {
                    Ok(self.buyer_of(i))
                }
            })
            .collect()
    }

    /// Total cost charged to buyer `j`.
    pub fn spend(&self, costs: &Mat, j: usize) -> f64 {
        (0..self.rows)
            .filter(|&i| self.get(i, j) == 1)
            .map(|i| costs.get(i, j))
            .sum()
    }

    pub fn as_mat(&self) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| f64::from(self.get(i, j)))
    }
}

impl Serialize for AllocationMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let nested: Vec<Vec<u8>> = (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec())
            .collect();
        nested.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AllocationMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let nested = Vec::<Vec<u8>>::deserialize(deserializer)?;
        AllocationMatrix::from_entries(nested).map_err(serde::de::Error::custom)
    }
}

/// Matrix of per-pair allocation probabilities defining a randomized design:
/// row `i` allocates item `i` to buyer `j` with probability `x_ij`,
/// independently across items; leftover row mass aborts the item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExperimentMatrix {
    entries: Mat,
}

impl ExperimentMatrix {
    /// Wraps a probability matrix, checking entry ranges and row sums.
    pub fn new(entries: Mat) -> Result<Self> {
        for i in 0..entries.rows() {
            let mut sum = 0.0;
            for j in 0..entries.cols() {
                let x = entries.get(i, j);
                if !(0.0..=1.0 + FEASIBILITY_TOL).contains(&x) {
                    return Err(Error::InvalidParameter(format!(
                        "experiment entry ({i}, {j}) = {x} outside [0, 1]"
                    )));
                }
                sum += x;
            }
            if sum > 1.0 + FEASIBILITY_TOL {
                return Err(Error::RowSumExceedsOne { row: i, sum });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.entries.row(i)
    }
}

/// Realized utilities masked by the realized (post-throttling) allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationMatrix {
    entries: Mat,
    realized: AllocationMatrix,
}

impl ObservationMatrix {
    pub fn new(entries: Mat, realized: AllocationMatrix) -> Result<Self> {
        if entries.shape() != realized.shape() {
            return Err(Error::DimensionMismatch(format!(
                "observation entries {:?} vs realized allocation {:?}",
                entries.shape(),
                realized.shape()
            )));
        }
        for i in 0..entries.rows() {
            for j in 0..entries.cols() {
                if entries.get(i, j) != 0.0 && realized.get(i, j) == 0 {
                    return Err(Error::ObservationOutsideAllocation { i, j });
                }
            }
        }
        Ok(Self { entries, realized })
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn realized(&self) -> &AllocationMatrix {
        &self.realized
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }
}

/// How utilities are drawn when an allocation is realized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum UtilityGenerator {
    /// Per-pair lognormal draw: `exp(Normal(location_ij, scale_ij))`.
    Lognormal { location: Mat, scale: Mat },
    /// A fixed realized utility matrix.
    Fixed { realized: Mat },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UtilityMode {
    /// Fresh utilities every trial.
    #[serde(rename = "resample-per-trial")]
    ResamplePerTrial,
    /// One realized utility matrix shared by every trial.
    #[serde(rename = "fixed-realization")]
    FixedRealization,
}

/// First and second moments of the per-pair utilities plus the sampling rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityModel {
    pub mu: Mat,
    pub sigma2: Mat,
    pub generator: UtilityGenerator,
    pub mode: UtilityMode,
}

impl UtilityModel {
    /// Fixed-realization model: means equal the realized matrix, variances
    /// are zero.
    pub fn fixed(realized: Mat) -> Self {
        let sigma2 = Mat::zeros(realized.rows(), realized.cols());
        Self {
            mu: realized.clone(),
            sigma2,
            generator: UtilityGenerator::Fixed { realized },
            mode: UtilityMode::FixedRealization,
        }
    }

    /// Lognormal model with moments derived from the location/scale fields.
    pub fn lognormal(location: Mat, scale: Mat) -> Self {
        let mu = Mat::from_fn(location.rows(), location.cols(), |i, j| {
            let s = scale.get(i, j);
            (location.get(i, j) + 0.5 * s * s).exp()
        });
        let sigma2 = Mat::from_fn(location.rows(), location.cols(), |i, j| {
            let s = scale.get(i, j);
            let loc = location.get(i, j);
            ((s * s).exp() - 1.0) * (2.0 * loc + s * s).exp()
        });
        Self {
            mu,
            sigma2,
            generator: UtilityGenerator::Lognormal { location, scale },
            mode: UtilityMode::ResamplePerTrial,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mu.shape()
    }
}

/// A complete problem: costs, budgets, the two candidate allocations, and
/// the utility model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub m: usize,
    pub n: usize,
    pub costs: Mat,
    pub budgets: Vec<f64>,
    pub w0: AllocationMatrix,
    pub w1: AllocationMatrix,
    pub utility: UtilityModel,
}

impl ProblemInstance {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::InvalidParameter(format!("bad instance JSON: {e}")))
    }
}

/// Violated-invariant report for an instance; empty iff the instance is valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.issues.is_empty() {
            write!(f, "ok")
        } else {
            for issue in &self.issues {
                writeln!(f, "- {issue}")?;
            }
            Ok(())
        }
    }
}

/// Whether allocation `w` keeps every buyer within budget.
pub fn is_budget_satisfying(w: &AllocationMatrix, costs: &Mat, budgets: &[f64]) -> Result<bool> {
    if w.shape() != costs.shape() || budgets.len() != costs.cols() {
        return Err(Error::DimensionMismatch(format!(
            "allocation {:?}, costs {:?}, budgets len {}",
            w.shape(),
            costs.shape(),
            budgets.len()
        )));
    }
    for (j, &b) in budgets.iter().enumerate() {
        if w.spend(costs, j) > b + FEASIBILITY_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether design `x` keeps every buyer's expected cost within budget.
pub fn is_expected_budget_satisfying(
    x: &ExperimentMatrix,
    costs: &Mat,
    budgets: &[f64],
) -> Result<bool> {
    if x.entries().shape() != costs.shape() || budgets.len() != costs.cols() {
        return Err(Error::DimensionMismatch(format!(
            "experiment {:?}, costs {:?}, budgets len {}",
            x.entries().shape(),
            costs.shape(),
            budgets.len()
        )));
    }
    for (j, &b) in budgets.iter().enumerate() {
        let expected: f64 = (0..costs.rows()).map(|i| x.get(i, j) * costs.get(i, j)).sum();
        if expected > b + FEASIBILITY_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Expected total treatment effect `sum_ij mu_ij (w1_ij - w0_ij)`.
pub fn expected_tte(inst: &ProblemInstance) -> f64 {
    let mut total = 0.0;
    for i in 0..inst.m {
        for j in 0..inst.n {
            let d = f64::from(inst.w1.get(i, j)) - f64::from(inst.w0.get(i, j));
            if d != 0.0 {
                total += inst.utility.mu.get(i, j) * d;
            }
        }
    }
    total
}

/// Total treatment effect under a realized utility matrix.
pub fn realized_tte(inst: &ProblemInstance, utilities: &Mat) -> Result<f64> {
    if utilities.shape() != inst.costs.shape() {
        return Err(Error::DimensionMismatch(format!(
            "utilities {:?} vs instance {:?}",
            utilities.shape(),
            inst.costs.shape()
        )));
    }
    let mut total = 0.0;
    for i in 0..inst.m {
        for j in 0..inst.n {
            let d = f64::from(inst.w1.get(i, j)) - f64::from(inst.w0.get(i, j));
            if d != 0.0 {
                total += utilities.get(i, j) * d;
            }
        }
    }
    Ok(total)
}

/// Lists every violated invariant of the instance.
pub fn validate_instance(inst: &ProblemInstance) -> ValidationReport {
    let mut issues = Vec::new();
    let (m, n) = (inst.m, inst.n);

    let mut dims_ok = true;
    let check_shape = |name: &str, shape: (usize, usize), issues: &mut Vec<String>| {
        if shape != (m, n) {
            issues.push(format!(
                "dimension mismatch: {name} is {}x{}, instance declares {m}x{n}",
                shape.0, shape.1
            ));
            false
        } else {
            true
        }
    };
    dims_ok &= check_shape("costs", inst.costs.shape(), &mut issues);
    dims_ok &= check_shape("w0", inst.w0.shape(), &mut issues);
    dims_ok &= check_shape("w1", inst.w1.shape(), &mut issues);
    dims_ok &= check_shape("utility.mu", inst.utility.mu.shape(), &mut issues);
    dims_ok &= check_shape("utility.sigma2", inst.utility.sigma2.shape(), &mut issues);
    match &inst.utility.generator {
        UtilityGenerator::Lognormal { location, scale } => {
            dims_ok &= check_shape("utility.generator.location", location.shape(), &mut issues);
            dims_ok &= check_shape("utility.generator.scale", scale.shape(), &mut issues);
        }
        UtilityGenerator::Fixed { realized } => {
            dims_ok &= check_shape("utility.generator.realized", realized.shape(), &mut issues);
        }
    }
    if inst.budgets.len() != n {
        issues.push(format!(
            "dimension mismatch: budgets has {} entries, instance declares n={n}",
            inst.budgets.len()
        ));
        dims_ok = false;
    }

    for (j, &b) in inst.budgets.iter().enumerate() {
        if !(b > 0.0) {
            issues.push(format!("budget must be positive: b_{j} = {b}"));
        }
    }

    if !dims_ok {
        return ValidationReport { issues };
    }

    for i in 0..m {
        for j in 0..n {
            let c = inst.costs.get(i, j);
            if !(c >= 0.0) || !c.is_finite() {
                issues.push(format!("cost must be nonnegative and finite: c_({i},{j}) = {c}"));
            }
            let s2 = inst.utility.sigma2.get(i, j);
            if !(s2 >= 0.0) {
                issues.push(format!("variance must be nonnegative: sigma2_({i},{j}) = {s2}"));
            }
        }
    }

    for (name, w) in [("w0", &inst.w0), ("w1", &inst.w1)] {
        for i in 0..m {
            let s = w.row_sum(i);
            if s > 1 {
                issues.push(format!(
                    "{name} row {i} violates row-stochasticity: sums to {s}, at most 1 allowed"
                ));
            }
        }
        match is_budget_satisfying(w, &inst.costs, &inst.budgets) {
            Ok(true) => {}
            Ok(false) => issues.push(format!("{name} is not budget-satisfying")),
            Err(e) => issues.push(format!("{name}: {e}")),
        }
    }

    if inst.utility.mode == UtilityMode::FixedRealization {
        match &inst.utility.generator {
            UtilityGenerator::Fixed { realized } => {
                if realized != &inst.utility.mu {
                    issues.push(
                        "fixed-realization mode requires mu to equal the realized utilities".into(),
                    );
                }
                if inst.utility.sigma2.data().iter().any(|&v| v != 0.0) {
                    issues.push("fixed-realization mode requires sigma2 to be all-zero".into());
                }
            }
            UtilityGenerator::Lognormal { .. } => {
                issues.push("fixed-realization mode requires a fixed generator".into());
            }
        }
    }

    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::Distribution;

    pub(crate) fn tiny_instance() -> ProblemInstance {
        // 2 items, 2 buyers, unit costs, one-hot swapped allocations.
        let costs = Mat::filled(2, 2, 1.0);
        let w1 = AllocationMatrix::from_entries(vec![vec![1, 0], vec![0, 1]]).unwrap();
        let w0 = AllocationMatrix::from_entries(vec![vec![0, 1], vec![1, 0]]).unwrap();
        let u = Mat::from_rows(vec![vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        ProblemInstance {
            m: 2,
            n: 2,
            costs,
            budgets: vec![2.0, 2.0],
            w0,
            w1,
            utility: UtilityModel::fixed(u),
        }
    }

    #[test]
    fn valid_instance_has_empty_report() {
        let report = validate_instance(&tiny_instance());
        assert!(report.is_valid(), "unexpected issues: {report}");
    }

    #[test]
    fn zero_budget_is_reported() {
        let mut inst = tiny_instance();
        inst.budgets[0] = 0.0;
        let report = validate_instance(&inst);
        assert!(report.issues.iter().any(|s| s.contains("budget must be positive")));
    }

    #[test]
    fn row_summing_to_two_is_reported() {
        let mut inst = tiny_instance();
        inst.w1.set(0, 0, 1);
        inst.w1.set(0, 1, 1);
        let report = validate_instance(&inst);
        assert!(report.issues.iter().any(|s| s.contains("row-stochasticity")));
    }

    #[test]
    fn budget_satisfying_on_zero_allocation() {
        let inst = tiny_instance();
        let w = AllocationMatrix::zeros(2, 2);
        assert!(is_budget_satisfying(&w, &inst.costs, &inst.budgets).unwrap());
    }

    #[test]
    fn budget_satisfying_example_two() {
        // 4 items, 2 buyers, unit costs, budgets (2, 2): the block allocation
        // is fine, piling all four items on buyer 1 is not.
        let costs = Mat::filled(4, 2, 1.0);
        let budgets = vec![2.0, 2.0];
        let w1 = AllocationMatrix::from_entries(vec![
            vec![1, 0],
            vec![1, 0],
            vec![0, 1],
            vec![0, 1],
        ])
        .unwrap();
        assert!(is_budget_satisfying(&w1, &costs, &budgets).unwrap());
        let all_to_one = AllocationMatrix::from_entries(vec![
            vec![1, 0],
            vec![1, 0],
            vec![1, 0],
            vec![1, 0],
        ])
        .unwrap();
        assert!(!is_budget_satisfying(&all_to_one, &costs, &budgets).unwrap());
    }

    #[test]
    fn expected_budget_satisfying_cases() {
        let inst = tiny_instance();
        // Mixture of two budget-satisfying allocations stays satisfying.
        let x = ExperimentMatrix::new(Mat::from_fn(2, 2, |i, j| {
            0.5 * f64::from(inst.w0.get(i, j)) + 0.5 * f64::from(inst.w1.get(i, j))
        }))
        .unwrap();
        assert!(is_expected_budget_satisfying(&x, &inst.costs, &inst.budgets).unwrap());

        let zeros = ExperimentMatrix::new(Mat::zeros(2, 2)).unwrap();
        assert!(is_expected_budget_satisfying(&zeros, &inst.costs, &inst.budgets).unwrap());

        // Single buyer, two items, expected cost 1.6 over budget 1.
        let costs = Mat::filled(2, 1, 1.0);
        let x = ExperimentMatrix::new(Mat::filled(2, 1, 0.8)).unwrap();
        assert!(!is_expected_budget_satisfying(&x, &costs, &[1.0]).unwrap());
    }

    #[test]
    fn expected_tte_examples() {
        let mut inst = tiny_instance();
        inst.w0 = inst.w1.clone();
        assert_eq!(expected_tte(&inst), 0.0);

        // One item, two buyers, mu = (2, 1), treatment swaps the buyer.
        let costs = Mat::filled(1, 2, 1.0);
        let w1 = AllocationMatrix::from_entries(vec![vec![1, 0]]).unwrap();
        let w0 = AllocationMatrix::from_entries(vec![vec![0, 1]]).unwrap();
        let u = Mat::from_rows(vec![vec![2.0, 1.0]]).unwrap();
        let inst = ProblemInstance {
            m: 1,
            n: 2,
            costs,
            budgets: vec![2.0, 2.0],
            w0,
            w1,
            utility: UtilityModel::fixed(u),
        };
        assert_eq!(expected_tte(&inst), 1.0);
    }

    #[test]
    fn realized_tte_matches_two_loop_oracle() {
        let mut rng = stream_rng(5, 0);
        let m = 5;
        let n = 3;
        let costs = Mat::filled(m, n, 1.0);
        let assign1: Vec<Option<usize>> = (0..m).map(|_| Some(rng.random_range(0..n))).collect();
        let assign0: Vec<Option<usize>> = (0..m).map(|_| Some(rng.random_range(0..n))).collect();
        let w1 = AllocationMatrix::from_assignments(n, &assign1);
        let w0 = AllocationMatrix::from_assignments(n, &assign0);
        let u = Mat::from_fn(m, n, |_, _| rng.random::<f64>() * 3.0);
        let inst = ProblemInstance {
            m,
            n,
            costs,
            budgets: vec![10.0; n],
            w0,
            w1,
            utility: UtilityModel::fixed(u.clone()),
        };

        let mut oracle = 0.0;
        for i in 0..m {
            for j in 0..n {
                oracle += u.get(i, j)
                    * (f64::from(inst.w1.get(i, j)) - f64::from(inst.w0.get(i, j)));
            }
        }
        let got = realized_tte(&inst, &u).unwrap();
        assert!((got - oracle).abs() < 1e-12);

        // Single-entry case.
        let costs = Mat::filled(1, 1, 1.0);
        let w1 = AllocationMatrix::from_entries(vec![vec![1]]).unwrap();
        let w0 = AllocationMatrix::zeros(1, 1);
        let u = Mat::filled(1, 1, 3.0);
        let inst = ProblemInstance {
            m: 1,
            n: 1,
            costs,
            budgets: vec![1.0],
            w0,
            w1,
            utility: UtilityModel::fixed(u.clone()),
        };
        assert_eq!(realized_tte(&inst, &u).unwrap(), 3.0);
    }

    #[test]
    fn realized_tte_zero_for_permuted_equal_counts() {
        // All-ones utilities; w1 permutes w0's rows keeping per-buyer counts.
        let m = 4;
        let n = 2;
        let w0 = AllocationMatrix::from_assignments(n, &[Some(0), Some(1), Some(0), Some(1)]);
        let w1 = AllocationMatrix::from_assignments(n, &[Some(1), Some(0), Some(1), Some(0)]);
        let u = Mat::filled(m, n, 1.0);
        let inst = ProblemInstance {
            m,
            n,
            costs: Mat::filled(m, n, 0.1),
            budgets: vec![5.0, 5.0],
            w0,
            w1,
            utility: UtilityModel::fixed(u.clone()),
        };
        assert_eq!(realized_tte(&inst, &u).unwrap(), 0.0);
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = tiny_instance();
        let json = inst.to_json();
        let back = ProblemInstance::from_json(&json).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn expected_tte_matches_resampled_mean() {
        let mut rng = stream_rng(6, 0);
        let m = 5;
        let n = 3;
        let w1 = AllocationMatrix::from_assignments(
            n,
            &(0..m).map(|_| Some(rng.random_range(0..n))).collect::<Vec<_>>(),
        );
        let w0 = AllocationMatrix::from_assignments(
            n,
            &(0..m).map(|_| Some(rng.random_range(0..n))).collect::<Vec<_>>(),
        );
        let location = Mat::from_fn(m, n, |_, _| rng.random::<f64>() - 0.5);
        let scale = Mat::filled(m, n, 0.4);
        let inst = ProblemInstance {
            m,
            n,
            costs: Mat::filled(m, n, 0.5),
            budgets: vec![10.0; n],
            w0,
            w1,
            utility: UtilityModel::lognormal(location.clone(), scale.clone()),
        };
        let expected = expected_tte(&inst);
        let draws = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..draws {
            let u = Mat::from_fn(m, n, |i, j| {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                (location.get(i, j) + scale.get(i, j) * z).exp()
            });
            let tte = realized_tte(&inst, &u).unwrap();
            sum += tte;
            sumsq += tte * tte;
        }
        let mean = sum / f64::from(draws);
        let var = sumsq / f64::from(draws) - mean * mean;
        let se = (var / f64::from(draws)).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "mean {mean} vs expected {expected} (se {se})"
        );
    }

    // The expected-budget-satisfying designs form a convex set.
    #[test]
    fn expected_budget_satisfying_closed_under_mixtures() {
        let mut rng = stream_rng(7, 0);
        let m = 6;
        let n = 3;
        let costs = Mat::from_fn(m, n, |_, _| 0.3 + rng.random::<f64>());
        let budgets: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
        let mut scaled_feasible = || {
            let raw = Mat::from_fn(m, n, |_, _| rng.random::<f64>() / n as f64);
            let mut shrink = 1.0f64;
            for (j, &b) in budgets.iter().enumerate() {
                let spend: f64 = (0..m).map(|i| raw.get(i, j) * costs.get(i, j)).sum();
                if spend > b {
                    shrink = shrink.min(b / spend);
                }
            }
            ExperimentMatrix::new(raw.map(|v| v * shrink)).unwrap()
        };
        let xa = scaled_feasible();
        let xb = scaled_feasible();
        assert!(is_expected_budget_satisfying(&xa, &costs, &budgets).unwrap());
        assert!(is_expected_budget_satisfying(&xb, &costs, &budgets).unwrap());
        for k in 0..=10 {
            let lambda = f64::from(k) / 10.0;
            let mix = ExperimentMatrix::new(Mat::from_fn(m, n, |i, j| {
                lambda * xa.get(i, j) + (1.0 - lambda) * xb.get(i, j)
            }))
            .unwrap();
            assert!(is_expected_budget_satisfying(&mix, &costs, &budgets).unwrap());
        }
    }
}
