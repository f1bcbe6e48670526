//! Shared instance model: packing instances, item sets, fractional solutions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on every capacity comparison.
pub const CAPACITY_TOL: f64 = 1e-9;

/// A packing program `max w.x  s.t.  A.x <= b, x in {0,1}^n` stored by columns.
///
/// Column `j` lists the rows `C(j)` where item `j` has a nonzero coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingInstance {
    n: usize,
    m: usize,
    capacities: Vec<f64>,
    weights: Vec<f64>,
    columns: Vec<Vec<(usize, f64)>>,
    /// Declared column sparsity, if the producer promised one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
}

impl PackingInstance {
    pub fn new(
        m: usize,
        capacities: Vec<f64>,
        weights: Vec<f64>,
        columns: Vec<Vec<(usize, f64)>>,
    ) -> Self {
        PackingInstance {
            n: columns.len(),
            m,
            capacities,
            weights,
            columns,
            k: None,
        }
    }

    /// Unit capacities on every row.
    pub fn unit(m: usize, weights: Vec<f64>, columns: Vec<Vec<(usize, f64)>>) -> Self {
        Self::new(m, vec![1.0; m], weights, columns)
    }

    pub fn with_declared_sparsity(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<(usize, f64)>] {
        &self.columns
    }

    pub fn declared_sparsity(&self) -> Option<usize> {
        self.k
    }

    /// Row-major view: for each row, the `(item, coefficient)` pairs in item order.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.m];
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, a) in col {
                rows[i].push((j, a));
            }
        }
        rows
    }

    /// Sparsity used by the sampling rules: the declared `k` when present,
    /// otherwise the observed maximum column size (at least 1).
    pub fn sparsity(&self) -> usize {
        self.k.unwrap_or_else(|| column_sparsity(self)).max(1)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_instance(self);
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(report))
        }
    }

    /// Additionally require every capacity to be exactly 1, as the
    /// column-sparse rounding schemes assume.
    pub fn ensure_unit_capacities(&self) -> Result<()> {
        self.ensure_valid()?;
        match self.capacities.iter().position(|&b| b != 1.0) {
            None => Ok(()),
            Some(i) => Err(Error::Param(format!(
                "row {i} has capacity {}; normalize capacities to 1",
                self.capacities[i]
            ))),
        }
    }

    pub fn weight_of(&self, set: &ItemSet) -> f64 {
        set.iter().map(|j| self.weights[j]).sum()
    }
}

/// A sorted, duplicate-free set of item indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemSet(Vec<usize>);

impl ItemSet {
    pub fn new() -> Self {
        ItemSet(Vec::new())
    }

    /// Builds a set from indices already in strictly increasing order.
    pub(crate) fn from_sorted(members: Vec<usize>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        ItemSet(members)
    }

    /// The members of the bitmask `mask` (bit `j` set means item `j`).
    pub fn from_mask(mask: u64) -> Self {
        ItemSet((0..64).filter(|j| mask >> j & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_subset(&self, other: &ItemSet) -> bool {
        self.iter().all(|j| other.contains(j))
    }
}

impl FromIterator<usize> for ItemSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        ItemSet(v)
    }
}

impl From<Vec<usize>> for ItemSet {
    fn from(v: Vec<usize>) -> Self {
        v.into_iter().collect()
    }
}

impl fmt::Display for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (pos, j) in self.0.iter().enumerate() {
            if pos > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

/// A point of the relaxation, `x in [0,1]^n`, with its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl FractionalSolution {
    pub fn new(x: Vec<f64>, weights: &[f64]) -> Self {
        let objective = x.iter().zip(weights).map(|(a, b)| a * b).sum();
        FractionalSolution { x, objective }
    }

    pub fn zeros(n: usize) -> Self {
        FractionalSolution {
            x: vec![0.0; n],
            objective: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub(crate) fn ensure_len(&self, n: usize) -> Result<()> {
        if self.x.len() != n {
            return Err(Error::Param(format!(
                "fractional solution has {} entries, instance has {n} items",
                self.x.len()
            )));
        }
        if let Some(j) = self
            .x
            .iter()
            .position(|v| !v.is_finite() || *v < -1e-12 || *v > 1.0 + 1e-12)
        {
            return Err(Error::Param(format!("x[{j}] = {} is outside [0,1]", self.x[j])));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    RowOutOfRange { item: usize, row: usize },
    CoefficientOutOfRange { item: usize, row: usize, value: f64 },
    DuplicateRow { item: usize, row: usize },
    SparsityExceeded { item: usize, size: usize, k: usize },
    BadWeight { item: usize, value: f64 },
    BadCapacity { row: usize, value: f64 },
    NonIntegralCapacity { row: usize, value: f64 },
    ScenarioMass { item: usize, total: f64 },
    Malformed(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch {
                field,
                expected,
                found,
            } => write!(f, "{field} has length {found}, expected {expected}"),
            Violation::RowOutOfRange { item, row } => {
                write!(f, "item {item}: row {row} out of range")
            }
            Violation::CoefficientOutOfRange { item, row, value } => {
                write!(f, "item {item}, row {row}: coefficient out of (0,1]: {value}")
            }
            Violation::DuplicateRow { item, row } => {
                write!(f, "item {item}: duplicate row in column: {row}")
            }
            Violation::SparsityExceeded { item, size, k } => {
                write!(f, "item {item}: column has {size} entries, declared k = {k}")
            }
            Violation::BadWeight { item, value } => {
                write!(f, "item {item}: weight must be finite and nonnegative, got {value}")
            }
            Violation::BadCapacity { row, value } => {
                write!(f, "row {row}: capacity must be finite and at least 1, got {value}")
            }
            Violation::NonIntegralCapacity { row, value } => {
                write!(f, "row {row}: capacity must be an integer, got {value}")
            }
            Violation::ScenarioMass { item, total } => {
                write!(f, "item {item}: scenario probabilities sum to {total}, not 1")
            }
            Violation::Malformed(what) => f.write_str(what),
        }
    }
}

/// Every violated invariant of an instance; empty iff the instance is well formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (pos, v) in self.violations.iter().enumerate() {
            if pos > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_instance(inst: &PackingInstance) -> ValidationReport {
    let mut report = ValidationReport::default();
    if inst.columns.len() != inst.n {
        report.push(Violation::LengthMismatch {
            field: "columns",
            expected: inst.n,
            found: inst.columns.len(),
        });
    }
    if inst.weights.len() != inst.n {
        report.push(Violation::LengthMismatch {
            field: "weights",
            expected: inst.n,
            found: inst.weights.len(),
        });
    }
    if inst.capacities.len() != inst.m {
        report.push(Violation::LengthMismatch {
            field: "capacities",
            expected: inst.m,
            found: inst.capacities.len(),
        });
    }
    for (row, &value) in inst.capacities.iter().enumerate() {
        if !value.is_finite() || value < 1.0 {
            report.push(Violation::BadCapacity { row, value });
        }
    }
    for (item, &value) in inst.weights.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            report.push(Violation::BadWeight { item, value });
        }
    }
    let mut seen = vec![usize::MAX; inst.m];
    for (item, col) in inst.columns.iter().enumerate() {
        for &(row, value) in col {
            if row >= inst.m {
                report.push(Violation::RowOutOfRange { item, row });
                continue;
            }
            if seen[row] == item {
                report.push(Violation::DuplicateRow { item, row });
            }
            seen[row] = item;
            if !(value > 0.0 && value <= 1.0) {
                report.push(Violation::CoefficientOutOfRange { item, row, value });
            }
        }
        if let Some(k) = inst.k {
            if col.len() > k {
                report.push(Violation::SparsityExceeded {
                    item,
                    size: col.len(),
                    k,
                });
            }
        }
    }
    report
}

/// `max_j |C(j)|`.
pub fn column_sparsity(inst: &PackingInstance) -> usize {
    inst.columns.iter().map(Vec::len).max().unwrap_or(0)
}

/// True iff every row's load over `chosen` is within its capacity (plus [`CAPACITY_TOL`]).
pub fn check_feasible(inst: &PackingInstance, chosen: &ItemSet) -> bool {
    let mut load = vec![0.0; inst.m];
    for j in chosen.iter() {
        for &(i, a) in &inst.columns[j] {
            load[i] += a;
        }
    }
    load.iter()
        .zip(&inst.capacities)
        .all(|(l, b)| *l <= b + CAPACITY_TOL)
}
