//! Space-time block codes as exact dispersion sets, their group partitions,
//! and the structural checks that make a code group-decodable.

use std::fmt;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{rank, vectorize, ExactComplexMatrix, ExactRealMatrix, GaussRational, MatrixError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("a dispersion set needs at least one matrix")]
    Empty,
    #[error("dispersion matrix {index} has shape {got:?}, expected {expected:?}")]
    InconsistentShape {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("K = {k} exceeds L_max = {l_max}")]
    KExceedsLmax { k: u64, l_max: u64 },
    #[error("K must be at least 1")]
    ZeroK,
    #[error("code rate must be positive")]
    NonPositiveRate,
    #[error("code is not group-decodable: {0}")]
    NotGroupDecodable(String),
    #[error("serialization: {0}")]
    Serialization(String),
}

/// Ordered dispersion matrices `C_1..C_L`, all of shape `T x N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DispersionSet {
    t: usize,
    n: usize,
    matrices: Vec<ExactComplexMatrix>,
}

impl DispersionSet {
    pub fn new(matrices: Vec<ExactComplexMatrix>) -> Result<Self, CodeError> {
        let first = matrices.first().ok_or(CodeError::Empty)?;
        let expected = first.shape();
        for (index, m) in matrices.iter().enumerate() {
            if m.shape() != expected {
                return Err(CodeError::InconsistentShape {
                    index,
                    expected,
                    got: m.shape(),
                });
            }
        }
        Ok(Self {
            t: expected.0,
            n: expected.1,
            matrices,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[ExactComplexMatrix] {
        &self.matrices
    }

    pub fn get(&self, l: usize) -> &ExactComplexMatrix {
        &self.matrices[l]
    }
}

/// Disjoint, nonempty groups of 0-based symbol indices covering `0..L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>, l: usize) -> Result<Self, CodeError> {
        let mut seen = vec![false; l];
        for (g, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(CodeError::InvalidPartition(format!("group {} is empty", g + 1)));
            }
            for &i in group {
                if i >= l {
                    return Err(CodeError::InvalidPartition(format!(
                        "symbol {} out of range 1..={l}",
                        i + 1
                    )));
                }
                if seen[i] {
                    return Err(CodeError::InvalidPartition(format!(
                        "symbol {} appears twice",
                        i + 1
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(CodeError::InvalidPartition(format!(
                "symbol {} is not in any group",
                missing + 1
            )));
        }
        Ok(Self { groups })
    }

    /// Every symbol in its own group.
    pub fn singletons(l: usize) -> Self {
        Self {
            groups: (0..l).map(|i| vec![i]).collect(),
        }
    }

    /// All symbols in a single group.
    pub fn single(l: usize) -> Self {
        Self {
            groups: vec![(0..l).collect()],
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn symbol_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Index of the largest group; ties go to the lowest index.
    pub fn largest_group(&self) -> usize {
        let mut best = 0;
        for (g, group) in self.groups.iter().enumerate() {
            if group.len() > self.groups[best].len() {
                best = g;
            }
        }
        best
    }

    pub fn l_max(&self) -> usize {
        self.groups[self.largest_group()].len()
    }

    /// Group index of each symbol.
    pub fn membership(&self) -> Vec<usize> {
        let mut out = vec![0; self.symbol_count()];
        for (g, group) in self.groups.iter().enumerate() {
            for &i in group {
                out[i] = g;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Symbols `p` and `q` (0-based) sit in different groups but are not QOC.
    Qoc { p: usize, q: usize },
    /// Group `group` is linearly dependent; `symbol` is the first member that
    /// lies in the span of the members before it.
    LinearDependence { group: usize, symbol: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Qoc { p, q } => write!(
                f,
                "symbols s{} and s{} are in different groups but violate C_p^H C_q = -C_q^H C_p",
                p + 1,
                q + 1
            ),
            Violation::LinearDependence { group, symbol } => write!(
                f,
                "group {} is linearly dependent (s{} lies in the span of earlier members)",
                group + 1,
                symbol + 1
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub qoc_ok: bool,
    pub independence_ok: Vec<bool>,
    pub symbolwise_diversity: usize,
    pub rate: Rational64,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "QOC across groups: {}", if self.qoc_ok { "ok" } else { "FAILED" })?;
        for (g, ok) in self.independence_ok.iter().enumerate() {
            writeln!(f, "group {} independence: {}", g + 1, if *ok { "ok" } else { "FAILED" })?;
        }
        writeln!(f, "symbol-wise diversity: {}", self.symbolwise_diversity)?;
        writeln!(f, "rate: {}", self.rate)?;
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        Ok(())
    }
}

/// `Cp^H Cq + Cq^H Cp == 0`, exactly.
pub fn qoc_satisfied(cp: &ExactComplexMatrix, cq: &ExactComplexMatrix) -> Result<bool, CodeError> {
    if cp.shape() != cq.shape() {
        return Err(MatrixError::ShapeMismatch {
            left: cp.shape(),
            right: cq.shape(),
        }
        .into());
    }
    let a = cp.hermitian().mul(cq)?;
    // Cq^H Cp is the conjugate transpose of a.
    let (rows, cols) = a.shape();
    for r in 0..rows {
        for c in 0..cols {
            if !(a.get(r, c) + &a.get(c, r).conj()).is_zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn coefficient_matrix(ms: &[&ExactComplexMatrix]) -> ExactRealMatrix {
    ExactRealMatrix::from_rows(&ms.iter().map(|m| vectorize(m)).collect::<Vec<_>>())
}

/// True iff no nontrivial real combination of `ms` vanishes.
pub fn linearly_independent(ms: &[ExactComplexMatrix]) -> Result<bool, CodeError> {
    let refs: Vec<&ExactComplexMatrix> = ms.iter().collect();
    linearly_independent_refs(&refs)
}

fn linearly_independent_refs(ms: &[&ExactComplexMatrix]) -> Result<bool, CodeError> {
    let first = ms.first().ok_or(CodeError::Empty)?;
    if let Some(bad) = ms.iter().find(|m| m.shape() != first.shape()) {
        return Err(MatrixError::ShapeMismatch {
            left: first.shape(),
            right: bad.shape(),
        }
        .into());
    }
    Ok(rank(&coefficient_matrix(ms)) == ms.len())
}

/// Minimum rank over the dispersion matrices.
pub fn symbolwise_diversity(set: &DispersionSet) -> usize {
    set.matrices().iter().map(ExactComplexMatrix::rank).min().unwrap_or(0)
}

/// `L / (2T)` complex symbols per channel use.
pub fn code_rate(set: &DispersionSet) -> Rational64 {
    Rational64::new(set.len() as i64, 2 * set.t() as i64)
}

/// `ceil(L / (2T))`.
pub fn min_receive_antennas(set: &DispersionSet) -> usize {
    set.len().div_ceil(2 * set.t())
}

/// Checks QOC for every cross-group pair and independence inside every group.
pub fn verify_group_decodable(
    set: &DispersionSet,
    partition: &GroupPartition,
) -> Result<VerificationReport, CodeError> {
    if partition.symbol_count() != set.len() {
        return Err(CodeError::InvalidPartition(format!(
            "partition covers {} symbols but the code has {}",
            partition.symbol_count(),
            set.len()
        )));
    }
    let membership = partition.membership();
    let mut violations = Vec::new();
    for p in 0..set.len() {
        for q in p + 1..set.len() {
            if membership[p] != membership[q] && !qoc_satisfied(set.get(p), set.get(q))? {
                violations.push(Violation::Qoc { p, q });
            }
        }
    }
    let qoc_ok = violations.is_empty();

    let mut independence_ok = Vec::with_capacity(partition.len());
    for (g, group) in partition.groups().iter().enumerate() {
        let mut kept: Vec<&ExactComplexMatrix> = Vec::new();
        let mut ok = true;
        for &i in group {
            kept.push(set.get(i));
            if !linearly_independent_refs(&kept)? {
                violations.push(Violation::LinearDependence { group: g, symbol: i });
                kept.pop();
                ok = false;
                break;
            }
        }
        independence_ok.push(ok);
    }

    Ok(VerificationReport {
        qoc_ok,
        independence_ok,
        symbolwise_diversity: symbolwise_diversity(set),
        rate: code_rate(set),
        violations,
    })
}

/// Greedy maximal clique of pairwise-QOC symbols inside `group`, seeded in
/// index order.
pub fn greedy_qoc_clique(set: &DispersionSet, group: &[usize]) -> Vec<usize> {
    let mut clique: Vec<usize> = Vec::new();
    for &i in group {
        let fits = clique
            .iter()
            .all(|&j| qoc_satisfied(set.get(i), set.get(j)).unwrap_or(false));
        if fits {
            clique.push(i);
        }
    }
    clique
}

/// A verified group-decodable code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupDecodableCode {
    dispersion: DispersionSet,
    partition: GroupPartition,
    k_orthogonal: usize,
}

impl GroupDecodableCode {
    /// Verifies the code and computes `K` on the largest group.
    pub fn new(dispersion: DispersionSet, partition: GroupPartition) -> Result<Self, CodeError> {
        let report = verify_group_decodable(&dispersion, &partition)?;
        if !report.passed() {
            let msg: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
            return Err(CodeError::NotGroupDecodable(msg.join("; ")));
        }
        let largest = &partition.groups()[partition.largest_group()];
        let k_orthogonal = greedy_qoc_clique(&dispersion, largest).len();
        Ok(Self {
            dispersion,
            partition,
            k_orthogonal,
        })
    }

    pub fn dispersion(&self) -> &DispersionSet {
        &self.dispersion
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn k_orthogonal(&self) -> usize {
        self.k_orthogonal
    }

    pub fn l_max(&self) -> usize {
        self.partition.l_max()
    }

    pub fn rate(&self) -> Rational64 {
        code_rate(&self.dispersion)
    }

    pub fn report(&self) -> VerificationReport {
        verify_group_decodable(&self.dispersion, &self.partition)
            .expect("partition was validated at construction")
    }

    /// Decoding complexity order for a constellation of `2^b` points.
    pub fn complexity(&self, b: Rational64) -> ComplexityOrder {
        complexity_order(self.l_max() as u64, self.k_orthogonal as u64, b, self.rate())
            .expect("K never exceeds the largest group")
    }

    pub fn to_document(&self) -> Result<CodeDocument, CodeError> {
        CodeDocument::from_parts(&self.dispersion, &self.partition)
    }

    pub fn to_json(&self) -> Result<String, CodeError> {
        serde_json::to_string_pretty(&self.to_document()?)
            .map_err(|e| CodeError::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CodeError> {
        let (set, partition) = CodeDocument::from_json(text)?.into_parts()?;
        Self::new(set, partition)
    }
}

/// `coefficient * 2^exponent` decoding operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexityOrder {
    pub coefficient: u64,
    pub exponent: Rational64,
}

impl fmt::Display for ComplexityOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coefficient != 1 {
            write!(f, "{}·", self.coefficient)?;
        }
        if self.exponent.is_integer() {
            write!(f, "2^{}", self.exponent.numer())
        } else {
            write!(f, "2^({})", self.exponent)
        }
    }
}

impl ComplexityOrder {
    pub fn value(&self) -> f64 {
        self.coefficient as f64 * 2f64.powf(self.exponent.to_f64().unwrap_or(f64::NAN))
    }
}

/// Complexity order with the constellation size left symbolic: exponent is
/// `slope * b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymbolicComplexity {
    pub coefficient: u64,
    pub slope: Rational64,
}

impl fmt::Display for SymbolicComplexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coefficient != 1 {
            write!(f, "{}·", self.coefficient)?;
        }
        let (num, den) = (*self.slope.numer(), *self.slope.denom());
        let head = if num == 1 { "b".to_string() } else { format!("{num}b") };
        if den == 1 {
            write!(f, "2^({head})")
        } else {
            write!(f, "2^({head}/{den})")
        }
    }
}

fn check_complexity_inputs(l_max: u64, k: u64, r: Rational64) -> Result<(), CodeError> {
    if k == 0 {
        return Err(CodeError::ZeroK);
    }
    if k > l_max {
        return Err(CodeError::KExceedsLmax { k, l_max });
    }
    if r <= Rational64::zero() {
        return Err(CodeError::NonPositiveRate);
    }
    Ok(())
}

/// `K * 2^((L_max - K + 1) b / (2R))`.
pub fn complexity_order(l_max: u64, k: u64, b: Rational64, r: Rational64) -> Result<ComplexityOrder, CodeError> {
    let s = complexity_slope(l_max, k, r)?;
    Ok(ComplexityOrder {
        coefficient: k,
        exponent: s.slope * b,
    })
}

/// Like [`complexity_order`] with `b` left as a variable.
pub fn complexity_slope(l_max: u64, k: u64, r: Rational64) -> Result<SymbolicComplexity, CodeError> {
    check_complexity_inputs(l_max, k, r)?;
    Ok(SymbolicComplexity {
        coefficient: k,
        slope: Rational64::from_integer((l_max - k + 1) as i64) / (r * 2),
    })
}

/// Serialized form: `T`, `N`, 1-based `groups`, and each matrix as a
/// row-major list of `[re_num, re_den, im_num, im_den]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeDocument {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub groups: Vec<Vec<usize>>,
    pub matrices: Vec<Vec<[i64; 4]>>,
}

impl CodeDocument {
    pub fn from_parts(set: &DispersionSet, partition: &GroupPartition) -> Result<Self, CodeError> {
        let narrow = |x: &num_bigint::BigInt| {
            x.to_i64()
                .ok_or_else(|| CodeError::Serialization(format!("entry {x} does not fit in 64 bits")))
        };
        let matrices = set
            .matrices()
            .iter()
            .map(|m| {
                m.entries()
                    .iter()
                    .map(|z| {
                        Ok([
                            narrow(z.re.numer())?,
                            narrow(z.re.denom())?,
                            narrow(z.im.numer())?,
                            narrow(z.im.denom())?,
                        ])
                    })
                    .collect::<Result<Vec<_>, CodeError>>()
            })
            .collect::<Result<Vec<_>, CodeError>>()?;
        Ok(Self {
            t: set.t(),
            n: set.n(),
            groups: partition
                .groups()
                .iter()
                .map(|g| g.iter().map(|i| i + 1).collect())
                .collect(),
            matrices,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CodeError> {
        serde_json::from_str(text).map_err(|e| CodeError::Serialization(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, CodeError> {
        serde_json::to_string_pretty(self).map_err(|e| CodeError::Serialization(e.to_string()))
    }

    /// Rebuilds the dispersion set and partition without checking decodability.
    pub fn into_parts(self) -> Result<(DispersionSet, GroupPartition), CodeError> {
        let cells = self.t * self.n;
        let mut mats = Vec::with_capacity(self.matrices.len());
        for (l, entries) in self.matrices.iter().enumerate() {
            if entries.len() != cells {
                return Err(CodeError::Serialization(format!(
                    "matrix {} has {} entries, expected T*N = {cells}",
                    l + 1,
                    entries.len()
                )));
            }
            let mut m = ExactComplexMatrix::zeros(self.t, self.n);
            for (k, q) in entries.iter().enumerate() {
                if q[1] == 0 || q[3] == 0 {
                    return Err(CodeError::Serialization(format!(
                        "matrix {} has a zero denominator",
                        l + 1
                    )));
                }
                m.set(
                    k / self.n,
                    k % self.n,
                    GaussRational::new(crate::matrix::ratio(q[0], q[1]), crate::matrix::ratio(q[2], q[3])),
                );
            }
            mats.push(m);
        }
        let set = DispersionSet::new(mats)?;
        let groups = self
            .groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&i| {
                        i.checked_sub(1)
                            .ok_or_else(|| CodeError::InvalidPartition("symbol indices are 1-based".into()))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let partition = GroupPartition::new(groups, set.len())?;
        Ok((set, partition))
    }
}
