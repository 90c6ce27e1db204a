//! Reference codes with known dispersion matrices, plus the rate-one
//! baselines they are compared against.

use std::fmt;
use std::str::FromStr;

use crate::code::{DispersionSet, GroupDecodableCode, GroupPartition};
use crate::matrix::ExactComplexMatrix;

use super::ConstructionError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    /// 2 time slots, 4 antennas, rate 5/4.
    Un2,
    /// `Un2` restricted to its two nonzero antenna columns.
    Un2Reduced,
    /// 4 time slots, 4 antennas, rate 17/8.
    Un4,
    /// 3 time slots, 2 antennas, rate 3/2.
    Gpp3,
    /// Balanced code, 4 time slots, 4 antennas, rate 5/4.
    B4,
}

impl Builtin {
    pub const ALL: [Builtin; 5] = [Builtin::Un2, Builtin::Un2Reduced, Builtin::Un4, Builtin::Gpp3, Builtin::B4];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Un2 => "un2",
            Builtin::Un2Reduced => "un2_reduced",
            Builtin::Un4 => "un4",
            Builtin::Gpp3 => "gpp3",
            Builtin::B4 => "b4",
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("unknown builtin code {0:?} (expected un2, un2_reduced, un4, gpp3 or b4)")]
pub struct UnknownBuiltin(pub String);

impl FromStr for Builtin {
    type Err = UnknownBuiltin;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "un2" => Ok(Builtin::Un2),
            "un2_reduced" | "un2r" => Ok(Builtin::Un2Reduced),
            "un4" => Ok(Builtin::Un4),
            "gpp3" | "3gpp" => Ok(Builtin::Gpp3),
            "b4" => Ok(Builtin::B4),
            _ => Err(UnknownBuiltin(s.to_string())),
        }
    }
}

/// Entry shorthand: `(row, col, re, im)`, 0-based.
type Entry = (usize, usize, i64, i64);

fn sparse(t: usize, n: usize, entries: &[Entry]) -> ExactComplexMatrix {
    let mut m = ExactComplexMatrix::zeros(t, n);
    for &(r, c, re, im) in entries {
        m.set(r, c, crate::matrix::GaussRational::from_ints(re, im));
    }
    m
}

fn dense(t: usize, n: usize, entries: &[(i64, i64)]) -> ExactComplexMatrix {
    ExactComplexMatrix::from_int_pairs(t, n, entries)
}

const O: (i64, i64) = (0, 0);
const P: (i64, i64) = (1, 0);
const M: (i64, i64) = (-1, 0);
const J: (i64, i64) = (0, 1);
const MJ: (i64, i64) = (0, -1);

/// Seed and second group of the 2 x 4 code (columns 3 and 4 are zero).
pub fn un2_matrices() -> Vec<ExactComplexMatrix> {
    vec![
        dense(2, 4, &[P, P, O, O, P, M, O, O]),
        dense(2, 4, &[M, P, O, O, P, P, O, O]),
        dense(2, 4, &[J, MJ, O, O, J, J, O, O]),
        dense(2, 4, &[J, J, O, O, MJ, J, O, O]),
        dense(2, 4, &[J, J, O, O, J, MJ, O, O]),
    ]
}

/// Same structure as [`un2_matrices`] with the energy on antennas 3 and 4.
pub fn companion_matrices() -> Vec<ExactComplexMatrix> {
    vec![
        dense(2, 4, &[O, O, P, P, O, O, P, M]),
        dense(2, 4, &[O, O, M, P, O, O, P, P]),
        dense(2, 4, &[O, O, J, MJ, O, O, J, J]),
        dense(2, 4, &[O, O, J, J, O, O, MJ, J]),
        dense(2, 4, &[O, O, J, J, O, O, J, MJ]),
    ]
}

pub fn un4_matrices() -> Vec<ExactComplexMatrix> {
    let s = |e: &[Entry]| sparse(4, 4, e);
    vec![
        ExactComplexMatrix::identity(4),
        s(&[(0, 2, -1, 0), (1, 3, -1, 0), (2, 0, 1, 0), (3, 1, 1, 0)]),
        s(&[(0, 2, 0, 1), (1, 3, 0, -1), (2, 0, 0, 1), (3, 1, 0, -1)]),
        s(&[(0, 3, 1, 0), (1, 2, -1, 0), (2, 1, 1, 0), (3, 0, -1, 0)]),
        s(&[(0, 3, 0, 1), (1, 2, 0, 1), (2, 1, 0, 1), (3, 0, 0, 1)]),
        s(&[(0, 0, 0, 1), (1, 1, 0, 1), (2, 2, 0, -1), (3, 3, 0, -1)]),
        s(&[(0, 1, 1, 0), (1, 0, -1, 0), (2, 3, 1, 0), (3, 2, -1, 0)]),
        s(&[(0, 1, 0, 1), (1, 0, 0, 1), (2, 3, 0, -1), (3, 2, 0, -1)]),
        s(&[(0, 0, 0, 1), (1, 1, 0, 1), (2, 2, 0, 1), (3, 3, 0, 1)]),
        s(&[(0, 2, 1, 0), (1, 3, -1, 0), (2, 0, -1, 0), (3, 1, 1, 0)]),
        s(&[(0, 2, 0, 1), (1, 3, 0, 1), (2, 0, 0, 1), (3, 1, 0, 1)]),
        s(&[(0, 0, 0, 1), (1, 1, 0, -1), (2, 2, 0, -1), (3, 3, 0, 1)]),
        s(&[(0, 3, 1, 0), (1, 2, 1, 0), (2, 1, -1, 0), (3, 0, -1, 0)]),
        s(&[(0, 1, 1, 0), (1, 0, -1, 0), (2, 3, -1, 0), (3, 2, 1, 0)]),
        s(&[(0, 1, 0, 1), (1, 0, 0, 1), (2, 3, 0, 1), (3, 2, 0, 1)]),
        s(&[(0, 3, 0, 1), (1, 2, 0, -1), (2, 1, 0, -1), (3, 0, 0, 1)]),
        s(&[(0, 0, 0, 1), (1, 1, 0, -1), (2, 2, 0, 1), (3, 3, 0, -1)]),
    ]
}

pub fn gpp3_matrices() -> Vec<ExactComplexMatrix> {
    let d = |e: &[(i64, i64)]| dense(3, 2, e);
    vec![
        d(&[P, O, O, P, O, O]),
        d(&[J, O, O, MJ, O, O]),
        d(&[O, P, M, O, O, O]),
        d(&[O, J, J, O, O, O]),
        d(&[J, O, O, J, O, O]),
        d(&[J, O, O, MJ, O, P]),
        d(&[O, P, M, O, P, O]),
        d(&[O, J, J, O, J, O]),
        d(&[J, O, O, J, O, J]),
    ]
}

/// Balanced 4 x 4 code: group one stacks the 2 x 4 seed over the companion
/// second group, group two stacks the 2 x 4 second group over the companion
/// seed.
pub fn b4_matrices() -> Vec<ExactComplexMatrix> {
    let a = un2_matrices();
    let b = companion_matrices();
    let stack = |x: &ExactComplexMatrix, y: &ExactComplexMatrix| x.vstack(y).expect("same width");
    let mut out: Vec<ExactComplexMatrix> = b[1..].iter().map(|bm| stack(&a[0], bm)).collect();
    out.push(stack(&a[0].neg(), &b[1]));
    out.extend(a[1..].iter().map(|am| stack(am, &b[0])));
    out.push(stack(&a[1], &b[0].neg()));
    out
}

fn unbalanced(ms: Vec<ExactComplexMatrix>) -> Result<GroupDecodableCode, ConstructionError> {
    let l = ms.len();
    let partition = GroupPartition::new(vec![vec![0], (1..l).collect()], l)?;
    Ok(GroupDecodableCode::new(DispersionSet::new(ms)?, partition)?)
}

pub fn builtin_code(which: Builtin) -> Result<GroupDecodableCode, ConstructionError> {
    match which {
        Builtin::Un2 => unbalanced(un2_matrices()),
        Builtin::Un2Reduced => unbalanced(un2_matrices().iter().map(|m| m.leading_columns(2)).collect()),
        Builtin::Un4 => unbalanced(un4_matrices()),
        Builtin::Gpp3 => unbalanced(gpp3_matrices()),
        Builtin::B4 => {
            let partition = GroupPartition::new(vec![(0..5).collect(), (5..10).collect()], 10)?;
            Ok(GroupDecodableCode::new(DispersionSet::new(b4_matrices())?, partition)?)
        }
    }
}

/// Unbalanced 2 x 4 code living on antennas 3 and 4.
pub fn companion_code() -> Result<GroupDecodableCode, ConstructionError> {
    unbalanced(companion_matrices())
}

/// Rate-one orthogonal 2 x 2 code; every real symbol is its own group.
pub fn alamouti() -> GroupDecodableCode {
    let ms = vec![
        ExactComplexMatrix::identity(2),
        dense(2, 2, &[J, O, O, MJ]),
        dense(2, 2, &[O, P, M, O]),
        dense(2, 2, &[O, J, J, O]),
    ];
    GroupDecodableCode::new(DispersionSet::new(ms).expect("same shapes"), GroupPartition::singletons(4))
        .expect("orthogonal design")
}

/// Uncoded spatial multiplexing over two antennas in one time slot.
pub fn blast() -> GroupDecodableCode {
    let ms = vec![
        dense(1, 2, &[P, O]),
        dense(1, 2, &[J, O]),
        dense(1, 2, &[O, P]),
        dense(1, 2, &[O, J]),
    ];
    GroupDecodableCode::new(DispersionSet::new(ms).expect("same shapes"), GroupPartition::single(4))
        .expect("single group is trivially decodable")
}
