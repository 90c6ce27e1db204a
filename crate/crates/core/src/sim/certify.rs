//! Rank and determinant of codeword differences over a finite codebook, and
//! the coordinate-wise rotation search built on them.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::matrix::FloatComplexMatrix;
use crate::transceiver::{ConstellationPlan, Family, FloatCode, SlotSymbols};

use super::SimError;

/// Largest codebook (or per-group projection set) enumerated pairwise.
pub const CODEBOOK_LIMIT: u128 = 1 << 16;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-8;

/// Symbol differences below this are treated as equal projections.
const SAME_SYMBOL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CertifyResult {
    /// Minimum rank of `dX^H dX` over distinct pairs.
    pub min_rank: usize,
    /// Minimum product of the `min(T, N)` largest eigenvalues over pairs of
    /// full rank; infinite when there is no such pair.
    pub min_det: f64,
    pub pairs: u64,
    /// `min(T, N)`.
    pub full_rank: usize,
}

impl CertifyResult {
    fn empty(full_rank: usize) -> Self {
        Self {
            min_rank: full_rank,
            min_det: f64::INFINITY,
            pairs: 0,
            full_rank,
        }
    }

    fn merge(self, other: Self) -> Self {
        Self {
            min_rank: self.min_rank.min(other.min_rank),
            min_det: self.min_det.min(other.min_det),
            pairs: self.pairs + other.pairs,
            full_rank: self.full_rank,
        }
    }

    pub fn is_full_diversity(&self) -> bool {
        self.min_rank == self.full_rank
    }
}

/// Rank and leading-eigenvalue product of the smaller Gram matrix of `dx`.
pub fn difference_stats(dx: &FloatComplexMatrix) -> (usize, f64) {
    let (t, n) = dx.shape();
    let g = if t <= n { dx * dx.adjoint() } else { dx.adjoint() * dx };
    let r = g.nrows();
    let mut eig: Vec<f64> = match r {
        1 => vec![g[(0, 0)].re],
        2 => {
            let a = g[(0, 0)].re;
            let d = g[(1, 1)].re;
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + g[(0, 1)].norm_sqr()).sqrt();
            vec![mid + rad, mid - rad]
        }
        _ => {
            let re = DMatrix::from_fn(2 * r, 2 * r, |i, j| {
                let z = g[(i % r, j % r)];
                match (i < r, j < r) {
                    (true, true) | (false, false) => z.re,
                    (true, false) => -z.im,
                    (false, true) => z.im,
                }
            });
            let mut all: Vec<f64> = SymmetricEigen::new(re).eigenvalues.iter().copied().collect();
            all.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
            // The real form repeats every eigenvalue twice.
            all.iter().step_by(2).copied().collect()
        }
    };
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let top = eig[0].max(0.0);
    let cutoff = top * RANK_TOL * RANK_TOL;
    let rank = if top == 0.0 { 0 } else { eig.iter().filter(|&&l| l > cutoff).count() };
    (rank, eig.iter().map(|l| l.max(0.0)).product())
}

fn pairwise(words: &[FloatComplexMatrix], symbols: Option<&[Vec<f64>]>, full_rank: usize) -> CertifyResult {
    (0..words.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = CertifyResult::empty(full_rank);
            for j in i + 1..words.len() {
                if let Some(sym) = symbols {
                    let same = sym[i].iter().zip(&sym[j]).all(|(a, b)| (a - b).abs() < SAME_SYMBOL_TOL);
                    if same {
                        continue;
                    }
                }
                let (rank, det) = difference_stats(&(&words[i] - &words[j]));
                acc.pairs += 1;
                acc.min_rank = acc.min_rank.min(rank);
                if rank == full_rank {
                    acc.min_det = acc.min_det.min(det);
                }
            }
            acc
        })
        .reduce(|| CertifyResult::empty(full_rank), CertifyResult::merge)
}

/// Index tuples over `slots` in lexicographic order.
fn for_each_tuple(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; sizes.len()];
    loop {
        f(&idx);
        let mut k = sizes.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn check_size(sizes: &[usize]) -> Result<(), SimError> {
    let size: u128 = sizes.iter().map(|&s| s as u128).product();
    if size > CODEBOOK_LIMIT {
        return Err(SimError::CodebookTooLarge {
            size,
            limit: CODEBOOK_LIMIT,
        });
    }
    Ok(())
}

/// Enumerates every codeword pair of the energy-normalized codebook.
pub fn certify_full_diversity(code: &FloatCode, plan: &ConstellationPlan) -> Result<CertifyResult, SimError> {
    let sizes: Vec<usize> = plan.slots().iter().map(|s| s.constellation.size()).collect();
    check_size(&sizes)?;
    let alpha = code.energy_scale(plan)?;
    let mut words = Vec::new();
    for_each_tuple(&sizes, |idx| {
        let s = plan.assign(idx).expect("indices within sizes");
        words.push(code.combine(&s.values).expect("plan matches code") * Complex64::new(alpha, 0.0));
    });
    Ok(pairwise(&words, None, code.t().min(code.n())))
}

/// Pairs whose symbol differences are confined to partition group `group`.
///
/// Symbols of different groups have QOC dispersion matrices, so for real
/// symbol differences the cross terms of `dX^H dX` cancel and the Gram
/// matrix of any pair is the sum of its per-group Gram matrices. The
/// minimum over the codebook is therefore the minimum over these
/// per-group sets whenever the codebook factors across groups, i.e. no plan
/// slot straddles two groups (see [`plan_components`]).
pub fn certify_group(code: &FloatCode, plan: &ConstellationPlan, group: usize) -> Result<CertifyResult, SimError> {
    certify_groups(code, plan, &[group])
}

/// Like [`certify_group`] over the union of `groups`.
pub fn certify_groups(code: &FloatCode, plan: &ConstellationPlan, groups: &[usize]) -> Result<CertifyResult, SimError> {
    let mut in_group = vec![false; code.len()];
    let mut members = Vec::new();
    for &g in groups {
        for &m in &code.partition().groups()[g] {
            in_group[m] = true;
            members.push(m);
        }
    }
    members.sort_unstable();
    let touching: Vec<usize> = plan
        .slots()
        .iter()
        .enumerate()
        .filter(|(_, s)| match s.symbols {
            SlotSymbols::Real(x) => in_group[x],
            SlotSymbols::Complex { re, im } => in_group[re] || in_group[im],
        })
        .map(|(k, _)| k)
        .collect();
    let sizes: Vec<usize> = touching.iter().map(|&k| plan.slots()[k].constellation.size()).collect();
    check_size(&sizes)?;
    let alpha = code.energy_scale(plan)?;
    let mut words = Vec::new();
    let mut symbols = Vec::new();
    let mut full_idx = vec![0usize; plan.slots().len()];
    for_each_tuple(&sizes, |idx| {
        for (&k, &i) in touching.iter().zip(idx) {
            full_idx[k] = i;
        }
        let mut s = plan.assign(&full_idx).expect("indices within sizes").values;
        for (v, keep) in s.iter_mut().zip(&in_group) {
            if !keep {
                *v = 0.0;
            }
        }
        words.push(code.combine(&s).expect("plan matches code") * Complex64::new(alpha, 0.0));
        symbols.push(members.iter().map(|&m| s[m]).collect::<Vec<f64>>());
    });
    Ok(pairwise(&words, Some(&symbols), code.t().min(code.n())))
}

/// Partition groups merged wherever a plan slot carries symbols of two
/// groups. The codebook factors across the returned components, so the
/// merged [`certify_groups`] results equal full enumeration.
pub fn plan_components(code: &FloatCode, plan: &ConstellationPlan) -> Vec<Vec<usize>> {
    let n = code.partition().len();
    let membership = code.partition().membership();
    let mut root: Vec<usize> = (0..n).collect();
    fn find(root: &mut [usize], mut x: usize) -> usize {
        while root[x] != x {
            root[x] = root[root[x]];
            x = root[x];
        }
        x
    }
    for slot in plan.slots() {
        if let SlotSymbols::Complex { re, im } = slot.symbols {
            let (a, b) = (find(&mut root, membership[re]), find(&mut root, membership[im]));
            root[a.max(b)] = a.min(b);
        }
    }
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut index_of = vec![usize::MAX; n];
    for g in 0..n {
        let r = find(&mut root, g);
        if index_of[r] == usize::MAX {
            index_of[r] = comps.len();
            comps.push(Vec::new());
        }
        comps[index_of[r]].push(g);
    }
    comps
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
pub enum RotationMetric {
    /// Maximize the minimum determinant (zero when any pair is rank deficient).
    MinDet,
    /// Maximize the minimum rank first, then the minimum determinant.
    #[default]
    MinRankThenDet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RotationSearchConfig {
    /// Angle grid step in radians; angles scanned are `k * step` in `[0, pi/2)`.
    pub step: f64,
    /// Partition groups in optimization order; ascending when `None`.
    pub group_order: Option<Vec<usize>>,
    pub metric: RotationMetric,
    /// Rotation-free plan to optimize.
    pub plan: ConstellationPlan,
}

impl RotationSearchConfig {
    pub fn new(plan: ConstellationPlan) -> Self {
        Self {
            step: PI / 400.0,
            group_order: None,
            metric: RotationMetric::default(),
            plan,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RotationResult {
    /// Radians, one per plan slot.
    pub angles: Vec<f64>,
    pub baseline: CertifyResult,
    pub optimized: CertifyResult,
    pub evaluations: u64,
}

fn score(metric: RotationMetric, c: &CertifyResult) -> (usize, f64) {
    let det = if c.min_det.is_finite() { c.min_det } else { 0.0 };
    match metric {
        RotationMetric::MinDet => (0, if c.is_full_diversity() { det } else { 0.0 }),
        RotationMetric::MinRankThenDet => (c.min_rank, det),
    }
}

fn better(metric: RotationMetric, a: &CertifyResult, b: &CertifyResult) -> bool {
    let (ra, da) = score(metric, a);
    let (rb, db) = score(metric, b);
    ra > rb || (ra == rb && da > db)
}

/// Component holding the groups of `slot`'s symbols.
fn component_of<'a>(code: &FloatCode, plan: &ConstellationPlan, comps: &'a [Vec<usize>], slot: usize) -> &'a [usize] {
    let membership = code.partition().membership();
    let g = match plan.slots()[slot].symbols {
        SlotSymbols::Real(x) => membership[x],
        SlotSymbols::Complex { re, .. } => membership[re],
    };
    comps.iter().find(|c| c.contains(&g)).expect("every group lies in a component")
}

fn evaluate(code: &FloatCode, plan: &ConstellationPlan, comps: &[&[usize]]) -> Result<CertifyResult, SimError> {
    let mut acc = CertifyResult::empty(code.t().min(code.n()));
    for c in comps {
        acc = acc.merge(certify_groups(code, plan, c)?);
    }
    Ok(acc)
}

/// Coordinate-wise grid search over slot rotations, starting from zero.
///
/// Groups are visited in order; within a group its complex slots are visited
/// by ascending first symbol and every grid angle is tried in ascending
/// order. A slot angle changes only when the metric over the slot's
/// component (see [`plan_components`]) strictly improves, so the result is never worse than the
/// unrotated plan.
pub fn optimize_rotations(code: &FloatCode, search: &RotationSearchConfig) -> Result<RotationResult, SimError> {
    if search.step <= 0.0 || !search.step.is_finite() {
        return Err(SimError::Config("rotation step must be positive".into()));
    }
    let slots = search.plan.slots();
    let mut angles = vec![0.0; slots.len()];
    let mut plan = search.plan.with_rotations(&angles);
    let comps = plan_components(code, &search.plan);
    let all: Vec<&[usize]> = comps.iter().map(Vec::as_slice).collect();
    let baseline = evaluate(code, &plan, &all)?;
    let order = search
        .group_order
        .clone()
        .unwrap_or_else(|| (0..code.partition().len()).collect());
    let steps = ((PI / 2.0) / search.step).ceil() as usize;

    let mut done = vec![false; slots.len()];
    let mut evaluations = 0u64;
    for &g in &order {
        let mut candidates: Vec<(usize, usize)> = slots
            .iter()
            .enumerate()
            .filter(|(k, s)| !done[*k] && s.constellation.family() != Family::Pam)
            .filter(|(k, _)| component_of(code, &search.plan, &comps, *k).contains(&g))
            .map(|(k, s)| {
                let first = match s.symbols {
                    SlotSymbols::Real(x) => x,
                    SlotSymbols::Complex { re, im } => re.min(im),
                };
                (first, k)
            })
            .collect();
        candidates.sort_unstable();
        for (_, k) in candidates {
            done[k] = true;
            let touched = [component_of(code, &search.plan, &comps, k)];
            let mut best = evaluate(code, &plan, &touched)?;
            let mut best_angle = angles[k];
            for step in 0..steps {
                let a = step as f64 * search.step;
                if a >= PI / 2.0 {
                    break;
                }
                angles[k] = a;
                let trial = search.plan.with_rotations(&angles);
                let value = evaluate(code, &trial, &touched)?;
                evaluations += 1;
                if better(search.metric, &value, &best) {
                    best = value;
                    best_angle = a;
                }
            }
            angles[k] = best_angle;
            plan = search.plan.with_rotations(&angles);
        }
    }
    let optimized = evaluate(code, &plan, &all)?;
    Ok(RotationResult {
        angles,
        baseline,
        optimized,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::fixtures::{alamouti, builtin_code, Builtin};

    #[test]
    fn stats_of_identity_and_rank_one() {
        let i = FloatComplexMatrix::identity(2, 2);
        assert_eq!(difference_stats(&i), (2, 1.0));
        let r1 = FloatComplexMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)],
        );
        assert_eq!(difference_stats(&r1).0, 1);
        let big = FloatComplexMatrix::identity(3, 3) * Complex64::new(0.0, 2.0);
        let (rank, det) = difference_stats(&big);
        assert_eq!(rank, 3);
        assert!((det - 64.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_design_has_full_diversity() {
        let code = FloatCode::from_exact("alamouti", &alamouti());
        let plan = ConstellationPlan::parse("qam4:1,2; qam4:3,4", 4).unwrap();
        let c = certify_full_diversity(&code, &plan).unwrap();
        assert_eq!(c.min_rank, 2);
        assert_eq!(c.pairs, 16 * 15 / 2);
    }

    #[test]
    fn unrotated_reduced_code_loses_diversity() {
        let code = FloatCode::from_exact("un2r", &builtin_code(Builtin::Un2Reduced).unwrap());
        let plan = ConstellationPlan::parse("pam4:4; qam8:1,5; qam8:2,3", 5).unwrap();
        assert!(certify_full_diversity(&code, &plan).unwrap().min_rank < 2);
    }

    #[test]
    fn guard_rejects_large_codebooks() {
        let code = FloatCode::from_exact("un4", &builtin_code(Builtin::Un4).unwrap());
        let plan = ConstellationPlan::paired(17, &crate::transceiver::Constellation::qam(4).unwrap(), None).unwrap();
        assert!(matches!(
            certify_full_diversity(&code, &plan),
            Err(SimError::CodebookTooLarge { .. })
        ));
    }

    #[test]
    fn component_split_matches_full_enumeration() {
        let code = FloatCode::from_exact("b4", &builtin_code(Builtin::B4).unwrap());
        let plan = ConstellationPlan::parse(
            "qam4@0.1538:1,3; qam4@0.4625:2,5; qam4:4,9; qam4@0.1538:6,8; qam4@0.4625:7,10",
            10,
        )
        .unwrap();
        let full = certify_full_diversity(&code, &plan).unwrap();
        let split = plan_components(&code, &plan)
            .iter()
            .map(|c| certify_groups(&code, &plan, c).unwrap())
            .reduce(CertifyResult::merge)
            .unwrap();
        assert_eq!(full.min_rank, split.min_rank);
        assert!((full.min_det - split.min_det).abs() <= 1e-9 * full.min_det.max(1.0));
    }

    #[test]
    fn straddling_slots_merge_groups() {
        let code = FloatCode::from_exact("un2r", &builtin_code(Builtin::Un2Reduced).unwrap());
        let straddling = ConstellationPlan::parse("pam4:4; qam8:1,5; qam8:2,3", 5).unwrap();
        assert_eq!(plan_components(&code, &straddling), vec![vec![0, 1]]);
        let split = ConstellationPlan::parse("pam2:1; qam4:2,3; qam4:4,5", 5).unwrap();
        assert_eq!(plan_components(&code, &split), vec![vec![0], vec![1]]);
    }

    #[test]
    fn search_on_straddling_plan_reaches_full_rank() {
        let code = FloatCode::from_exact("un2r", &builtin_code(Builtin::Un2Reduced).unwrap());
        let plan = ConstellationPlan::parse("pam4:4; qam8:1,5; qam8:2,3", 5).unwrap();
        let mut search = RotationSearchConfig::new(plan);
        search.step = PI / 40.0;
        let res = optimize_rotations(&code, &search).unwrap();
        assert_eq!(res.baseline.min_rank, 1);
        assert_eq!(res.optimized.min_rank, 2);
        let check = certify_full_diversity(&code, &search.plan.with_rotations(&res.angles)).unwrap();
        assert_eq!(check.min_rank, 2);
        assert!((check.min_det - res.optimized.min_det).abs() <= 1e-12);
    }
}
