//! Building group-decodable codes: the two-group construction from a single
//! seed matrix, stacking two such codes into a balanced code, and the rate
//! each construction can reach.

pub mod fixtures;

use num_rational::Rational64;
use num_traits::{One, Zero};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::code::{CodeError, DispersionSet, GroupDecodableCode, GroupPartition};
use crate::matrix::{
    build_f, int, integer_normalize, map_g_inv, nullspace, vectorize, ExactComplexMatrix, ExactRealMatrix,
    ExactScalar, MatrixError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructionError {
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("seed matrix has rank {rank}, needs min(T, N) = {needed}")]
    SeedNotFullRank { rank: usize, needed: usize },
    #[error("no full-rank recombination found for basis vector {index} after {attempts} attempts")]
    RefinementFailed { index: usize, attempts: usize },
    #[error("max_refine_attempts must be at least 1")]
    ZeroAttempts,
    #[error("input code is not unbalanced (first group must be exactly {{s1}})")]
    NotUnbalanced,
    #[error("codes are incompatible for stacking: {0}")]
    Incompatible(String),
    #[error("stacking index {0} must lie in 2..=L")]
    BadIndex(usize),
    #[error("balanced construction needs even T, got {0}")]
    OddT(usize),
}

/// Full-rank `T x N` matrix that becomes the lone symbol of the first group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedMatrix {
    c: ExactComplexMatrix,
}

impl SeedMatrix {
    pub fn new(c: ExactComplexMatrix) -> Result<Self, ConstructionError> {
        let rank = c.rank();
        let needed = c.rows().min(c.cols());
        if rank != needed {
            return Err(ConstructionError::SeedNotFullRank { rank, needed });
        }
        Ok(Self { c })
    }

    pub fn matrix(&self) -> &ExactComplexMatrix {
        &self.c
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstructionOptions {
    pub refine_full_rank: bool,
    pub maximize_orthogonal: bool,
    pub recombination_seed: u64,
    pub max_refine_attempts: usize,
}

impl Default for ConstructionOptions {
    fn default() -> Self {
        Self {
            refine_full_rank: true,
            maximize_orthogonal: true,
            recombination_seed: 0,
            max_refine_attempts: 1000,
        }
    }
}

/// Result of [`refine_basis`]: the new basis and the positions where no
/// full-rank vector could be found (those entries are the input vector kept
/// as-is).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Refinement {
    pub vectors: Vec<Vec<ExactScalar>>,
    pub failures: Vec<usize>,
}

fn combine(columns: &[&Vec<ExactScalar>], x: &[ExactScalar]) -> Vec<ExactScalar> {
    let len = columns.first().map_or(0, |c| c.len());
    let mut out = vec![ExactScalar::zero(); len];
    for (col, coef) in columns.iter().zip(x) {
        if coef.is_zero() {
            continue;
        }
        for (o, v) in out.iter_mut().zip(col.iter()) {
            if !v.is_zero() {
                *o += coef * v;
            }
        }
    }
    out
}

fn support(v: &[ExactScalar]) -> usize {
    v.iter().filter(|x| !x.is_zero()).count()
}

struct Picker<'a> {
    t: usize,
    n: usize,
    opts: &'a ConstructionOptions,
    rng: ChaCha8Rng,
}

impl Picker<'_> {
    fn acceptable(&self, v: &[ExactScalar]) -> bool {
        if !self.opts.refine_full_rank {
            return v.iter().any(|x| !x.is_zero());
        }
        map_g_inv(v, self.t, self.n)
            .map(|m| m.is_full_rank())
            .unwrap_or(false)
    }

    /// Picks a vector `B x` with `x` drawn from `span(sub)` and nonzero on at
    /// least one of the first `n_remaining` coordinates. Returns the
    /// normalized vector and the first such coordinate.
    fn pick(
        &mut self,
        columns: &[&Vec<ExactScalar>],
        sub: &[Vec<ExactScalar>],
        n_remaining: usize,
    ) -> Option<(Vec<ExactScalar>, usize)> {
        let lead = |x: &[ExactScalar]| (0..n_remaining).find(|&i| !x[i].is_zero());

        for x in sub {
            if let Some(k) = lead(x) {
                let v = combine(columns, x);
                if self.acceptable(&v) {
                    return Some((integer_normalize(&v), k));
                }
            }
        }

        let coefficients = [-2i64, -1, 1, 2];
        let mut best: Option<(usize, Vec<ExactScalar>, usize)> = None;
        for _ in 0..self.opts.max_refine_attempts {
            let count = self.rng.random_range(1..=sub.len().min(4));
            let chosen = sample(&mut self.rng, sub.len(), count);
            let mut x = vec![ExactScalar::zero(); columns.len()];
            for i in chosen.iter() {
                let c = int(coefficients[self.rng.random_range(0..coefficients.len())]);
                for (xi, si) in x.iter_mut().zip(&sub[i]) {
                    if !si.is_zero() {
                        *xi += &c * si;
                    }
                }
            }
            let Some(k) = lead(&x) else { continue };
            let v = combine(columns, &x);
            if self.acceptable(&v) {
                let s = support(&v);
                if best.as_ref().is_none_or(|(b, _, _)| s < *b) {
                    best = Some((s, integer_normalize(&v), k));
                }
            }
        }
        best.map(|(_, v, k)| (v, k))
    }
}

/// Rewrites a basis (vectors in the column-interleaved layout) so that every
/// image is full rank and the leading images are mutually QOC for as long as
/// possible. The span is preserved exactly.
///
/// At each step the next vector is drawn from the span of the not-yet-used
/// input vectors plus the already accepted ones, and it must use at least one
/// not-yet-used vector, which it then replaces. While possible it is chosen
/// from the exact subspace that is QOC with every accepted image; the first
/// time that subspace has no acceptable member the constraint is dropped for
/// the rest of the pass. Basis vectors are tried before random recombinations,
/// so an already conforming basis comes back unchanged.
pub fn refine_basis(
    basis: &[Vec<ExactScalar>],
    t: usize,
    n: usize,
    opts: &ConstructionOptions,
) -> Refinement {
    let mut picker = Picker {
        t,
        n,
        opts,
        rng: ChaCha8Rng::seed_from_u64(opts.recombination_seed),
    };
    let mut remaining: Vec<Vec<ExactScalar>> = basis.to_vec();
    let mut accepted: Vec<Vec<ExactScalar>> = Vec::new();
    let mut constraint_rows: Vec<Vec<ExactScalar>> = Vec::new();
    let mut orthogonal_open = opts.maximize_orthogonal;
    let mut failures = Vec::new();

    while !remaining.is_empty() {
        let columns: Vec<&Vec<ExactScalar>> = remaining.iter().chain(accepted.iter()).collect();
        let width = columns.len();
        let mut choice = None;

        if orthogonal_open && !accepted.is_empty() {
            // Coordinates x with f(A) * (B x) = 0 for every accepted A.
            let projected: Vec<Vec<ExactScalar>> = constraint_rows
                .iter()
                .map(|row| {
                    columns
                        .iter()
                        .map(|c| {
                            row.iter()
                                .zip(c.iter())
                                .filter(|(a, b)| !a.is_zero() && !b.is_zero())
                                .fold(ExactScalar::zero(), |acc, (a, b)| acc + a * b)
                        })
                        .collect()
                })
                .collect();
            let sub = nullspace(&ExactRealMatrix::from_rows(&projected));
            if !sub.is_empty() {
                choice = picker.pick(&columns, &sub, remaining.len());
            }
            if choice.is_none() {
                orthogonal_open = false;
            }
        }

        if choice.is_none() {
            let unit: Vec<Vec<ExactScalar>> = (0..width)
                .map(|i| {
                    let mut e = vec![ExactScalar::zero(); width];
                    e[i] = ExactScalar::one();
                    e
                })
                .collect();
            choice = picker.pick(&columns, &unit, remaining.len());
        }

        let (v, k) = choice.unwrap_or_else(|| {
            failures.push(accepted.len());
            (remaining[0].clone(), 0)
        });
        remaining.remove(k);
        if orthogonal_open {
            let image = map_g_inv(&v, t, n).expect("vector length is 2TN");
            let f = build_f(&image);
            constraint_rows.extend((0..f.rows()).map(|r| f.row(r).to_vec()));
        }
        accepted.push(v);
    }

    Refinement {
        vectors: accepted,
        failures,
    }
}

/// Two-group code: `{seed}` and the refined nullspace of `f(seed)`.
pub fn construct_unbalanced(
    seed: &SeedMatrix,
    opts: &ConstructionOptions,
) -> Result<GroupDecodableCode, ConstructionError> {
    if opts.max_refine_attempts == 0 {
        return Err(ConstructionError::ZeroAttempts);
    }
    let c = seed.matrix();
    let (t, n) = c.shape();
    let basis = nullspace(&build_f(c));
    let refined = refine_basis(&basis, t, n, opts);
    if opts.refine_full_rank {
        if let Some(&index) = refined.failures.first() {
            return Err(ConstructionError::RefinementFailed {
                index,
                attempts: opts.max_refine_attempts,
            });
        }
    }
    let mut matrices = vec![c.clone()];
    for v in &refined.vectors {
        matrices.push(map_g_inv(v, t, n)?);
    }
    let l = matrices.len();
    let partition = GroupPartition::new(vec![vec![0], (1..l).collect()], l)?;
    Ok(GroupDecodableCode::new(DispersionSet::new(matrices)?, partition)?)
}

fn unbalanced_parts(code: &GroupDecodableCode) -> Result<&[ExactComplexMatrix], ConstructionError> {
    let l = code.dispersion().len();
    let groups = code.partition().groups();
    let expected: Vec<usize> = (1..l).collect();
    if groups.len() != 2 || groups[0] != [0] || groups[1] != expected {
        return Err(ConstructionError::NotUnbalanced);
    }
    Ok(code.dispersion().matrices())
}

/// Stacks two unbalanced codes into a balanced two-group code over twice the
/// block length. `i` and `k` (1-based, in `2..=L`) pick which second-group
/// matrix is paired with the negated seed in each group.
///
/// Group one: `[A_m; B_1]` for `m = 2..L`, then `[A_i; -B_1]`.
/// Group two: `[A_1; B_m]` for `m = 2..L`, then `[-A_1; B_k]`.
pub fn construct_balanced(
    code_a: &GroupDecodableCode,
    code_b: &GroupDecodableCode,
    i: usize,
    k: usize,
) -> Result<GroupDecodableCode, ConstructionError> {
    let a = unbalanced_parts(code_a)?;
    let b = unbalanced_parts(code_b)?;
    if a.len() != b.len() {
        return Err(ConstructionError::Incompatible(format!(
            "L differs ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a[0].shape() != b[0].shape() {
        return Err(ConstructionError::Incompatible(format!(
            "shapes differ ({:?} vs {:?})",
            a[0].shape(),
            b[0].shape()
        )));
    }
    let l = a.len();
    for idx in [i, k] {
        if !(2..=l).contains(&idx) {
            return Err(ConstructionError::BadIndex(idx));
        }
    }

    let mut matrices = Vec::with_capacity(2 * l);
    for am in &a[1..] {
        matrices.push(am.vstack(&b[0])?);
    }
    matrices.push(a[i - 1].vstack(&b[0].neg())?);
    for bm in &b[1..] {
        matrices.push(a[0].vstack(bm)?);
    }
    matrices.push(a[0].neg().vstack(&b[k - 1])?);

    let partition = GroupPartition::new(vec![(0..l).collect(), (l..2 * l).collect()], 2 * l)?;
    Ok(GroupDecodableCode::new(DispersionSet::new(matrices)?, partition)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    TAtLeastN,
    TBelowN,
    TAtLeastTwoN,
    TBelowTwoN,
}

/// Largest rate reachable by a construction together with the size of the
/// non-seed group of each unbalanced code involved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RatePrediction {
    pub max_rate: Rational64,
    pub second_group_size: u64,
    pub regime: Regime,
}

fn second_group_size(t: u64, n: u64) -> (u64, bool) {
    if t >= n {
        (2 * t * n - n * n, true)
    } else {
        (t * t, false)
    }
}

pub fn max_rate_unbalanced(t: usize, n: usize) -> RatePrediction {
    let (t, n) = (t as u64, n as u64);
    let (size, tall) = second_group_size(t, n);
    RatePrediction {
        max_rate: Rational64::new((size + 1) as i64, (2 * t) as i64),
        second_group_size: size,
        regime: if tall { Regime::TAtLeastN } else { Regime::TBelowN },
    }
}

pub fn max_rate_balanced(t: usize, n: usize) -> Result<RatePrediction, ConstructionError> {
    if t % 2 != 0 || t == 0 {
        return Err(ConstructionError::OddT(t));
    }
    let (t, n) = (t as u64, n as u64);
    let (size, _) = second_group_size(t / 2, n);
    let (max_rate, regime) = if t >= 2 * n {
        (Rational64::new((t * n - n * n + 1) as i64, t as i64), Regime::TAtLeastTwoN)
    } else {
        (Rational64::new((t * t + 4) as i64, (4 * t) as i64), Regime::TBelowTwoN)
    };
    Ok(RatePrediction {
        max_rate,
        second_group_size: size,
        regime,
    })
}

/// Column-interleaved vectors of a set of matrices.
pub fn vectors_of(ms: &[ExactComplexMatrix]) -> Vec<Vec<ExactScalar>> {
    ms.iter().map(vectorize).collect()
}
