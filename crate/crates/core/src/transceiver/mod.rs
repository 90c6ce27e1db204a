//! Floating-point side of the link: energy-normalized encoding, the
//! real-equivalent channel, and detectors.

pub mod constellation;
pub mod detect;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::code::{qoc_satisfied, GroupDecodableCode, GroupPartition};
use crate::matrix::FloatComplexMatrix;

pub use constellation::{Constellation, ConstellationPlan, Family, PlanError, Slot, SlotSymbols, SymbolAssignment};
pub use detect::{DecodeStats, Detector, GroupMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransceiverError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("symbol vector has length {got}, code has {expected} real symbols")]
    SymbolLength { expected: usize, got: usize },
    #[error("{got} receive antennas is below the required {needed}")]
    TooFewReceiveAntennas { needed: usize, got: usize },
    #[error("channel has {got} transmit rows, code uses {expected} antennas")]
    ChannelShape { expected: usize, got: usize },
    #[error("joint search space {size} exceeds the limit {limit}")]
    SearchTooLarge { size: u128, limit: u128 },
    #[error("plan covers {plan} symbols, code has {code}")]
    PlanMismatch { plan: usize, code: usize },
    #[error("received vector has length {got}, expected {expected}")]
    ReceiveLength { expected: usize, got: usize },
}

/// Tolerance for QOC checks on codes that only exist in floating point.
const FLOAT_QOC_TOL: f64 = 1e-12;

/// Dispersion matrices in double precision plus the structure the
/// detectors need.
#[derive(Clone, Debug)]
pub struct FloatCode {
    name: String,
    t: usize,
    n: usize,
    matrices: Vec<FloatComplexMatrix>,
    partition: GroupPartition,
    qoc: Vec<Vec<bool>>,
}

impl FloatCode {
    pub fn from_exact(name: &str, code: &GroupDecodableCode) -> Self {
        let set = code.dispersion();
        let l = set.len();
        let mut qoc = vec![vec![false; l]; l];
        for p in 0..l {
            for q in p + 1..l {
                let ok = qoc_satisfied(set.get(p), set.get(q)).expect("shared shape");
                qoc[p][q] = ok;
                qoc[q][p] = ok;
            }
        }
        Self {
            name: name.to_string(),
            t: set.t(),
            n: set.n(),
            matrices: set.matrices().iter().map(|m| m.to_float()).collect(),
            partition: code.partition().clone(),
            qoc,
        }
    }

    /// Builds a code from float matrices; QOC is decided numerically.
    pub fn from_float(name: &str, matrices: Vec<FloatComplexMatrix>, partition: GroupPartition) -> Self {
        let (t, n) = matrices[0].shape();
        let l = matrices.len();
        let mut qoc = vec![vec![false; l]; l];
        for p in 0..l {
            for q in p + 1..l {
                let a = matrices[p].adjoint() * &matrices[q];
                let s = &a + a.adjoint();
                let ok = s.iter().all(|z| z.norm() < FLOAT_QOC_TOL);
                qoc[p][q] = ok;
                qoc[q][p] = ok;
            }
        }
        Self {
            name: name.to_string(),
            t,
            n,
            matrices,
            partition,
            qoc,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
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

    pub fn matrices(&self) -> &[FloatComplexMatrix] {
        &self.matrices
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn is_qoc(&self, p: usize, q: usize) -> bool {
        self.qoc[p][q]
    }

    pub fn min_receive_antennas(&self) -> usize {
        self.len().div_ceil(2 * self.t)
    }

    /// `sum_l s_l C_l` without energy scaling.
    pub fn combine(&self, s: &[f64]) -> Result<FloatComplexMatrix, TransceiverError> {
        if s.len() != self.len() {
            return Err(TransceiverError::SymbolLength {
                expected: self.len(),
                got: s.len(),
            });
        }
        let mut x = FloatComplexMatrix::zeros(self.t, self.n);
        for (c, &v) in self.matrices.iter().zip(s) {
            if v != 0.0 {
                x += c * Complex64::new(v, 0.0);
            }
        }
        Ok(x)
    }

    /// Scale `alpha` with `E||alpha X||^2 = T` under the plan's symbol
    /// statistics, using the full covariance so correlated components of
    /// rotated constellations are accounted for.
    pub fn energy_scale(&self, plan: &ConstellationPlan) -> Result<f64, TransceiverError> {
        if plan.symbol_count() != self.len() {
            return Err(TransceiverError::PlanMismatch {
                plan: plan.symbol_count(),
                code: self.len(),
            });
        }
        let r = plan.covariance();
        let mut energy = 0.0;
        for p in 0..self.len() {
            for q in 0..self.len() {
                if r[p][q] == 0.0 {
                    continue;
                }
                let tr: f64 = self.matrices[p]
                    .iter()
                    .zip(self.matrices[q].iter())
                    .map(|(a, b)| (a.conj() * b).re)
                    .sum();
                energy += r[p][q] * tr;
            }
        }
        Ok((self.t as f64 / energy).sqrt())
    }
}

/// Energy-normalized codeword `alpha * sum_l s_l C_l`.
pub fn encode(code: &FloatCode, alpha: f64, s: &[f64]) -> Result<FloatComplexMatrix, TransceiverError> {
    Ok(code.combine(s)? * Complex64::new(alpha, 0.0))
}

/// Quasi-static channel `N x M` and linear SNR.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub h: FloatComplexMatrix,
    pub rho: f64,
}

/// `2TM x L` real matrix whose column `l` stacks, receive antenna by receive
/// antenna, `[Re(alpha C_l h_m); Im(alpha C_l h_m)]`. The received block is
/// `r = sqrt(rho) H s + noise` in the same layout.
#[derive(Clone, Debug)]
pub struct RealEquivalentChannel {
    pub h: DMatrix<f64>,
    pub sqrt_rho: f64,
}

impl RealEquivalentChannel {
    /// `sqrt(rho) H`.
    pub fn effective(&self) -> DMatrix<f64> {
        &self.h * self.sqrt_rho
    }
}

pub fn real_equivalent(
    code: &FloatCode,
    alpha: f64,
    ch: &ChannelRealization,
) -> Result<RealEquivalentChannel, TransceiverError> {
    let (rows, m) = ch.h.shape();
    if rows != code.n() {
        return Err(TransceiverError::ChannelShape {
            expected: code.n(),
            got: rows,
        });
    }
    let needed = code.min_receive_antennas();
    if m < needed {
        return Err(TransceiverError::TooFewReceiveAntennas { needed, got: m });
    }
    let t = code.t();
    let mut h = DMatrix::<f64>::zeros(2 * t * m, code.len());
    for (l, c) in code.matrices().iter().enumerate() {
        let ch_l = c * &ch.h;
        for col in 0..m {
            for row in 0..t {
                let v = ch_l[(row, col)] * alpha;
                h[(2 * t * col + row, l)] = v.re;
                h[(2 * t * col + t + row, l)] = v.im;
            }
        }
    }
    Ok(RealEquivalentChannel {
        h,
        sqrt_rho: ch.rho.sqrt(),
    })
}

/// Stacks a complex `T x M` receive block column by column as `[Re; Im]`.
pub fn stack_received(y: &FloatComplexMatrix) -> DVector<f64> {
    let (t, m) = y.shape();
    let mut r = DVector::zeros(2 * t * m);
    for col in 0..m {
        for row in 0..t {
            r[2 * t * col + row] = y[(row, col)].re;
            r[2 * t * col + t + row] = y[(row, col)].im;
        }
    }
    r
}

/// `sqrt(rho) X H + Z` evaluated directly on complex matrices.
pub fn receive(x: &FloatComplexMatrix, ch: &ChannelRealization, noise: &FloatComplexMatrix) -> FloatComplexMatrix {
    x * &ch.h * Complex64::new(ch.rho.sqrt(), 0.0) + noise
}

/// Full-rate 2 x 2 code built on the golden ratio; a single decoding group.
pub fn golden_code() -> FloatCode {
    let s5 = 5f64.sqrt();
    let theta = (1.0 + s5) / 2.0;
    let theta_bar = (1.0 - s5) / 2.0;
    let i = Complex64::i();
    let alpha = Complex64::new(1.0, 0.0) + i - i * theta;
    let alpha_bar = Complex64::new(1.0, 0.0) + i - i * theta_bar;
    let norm = 1.0 / s5;
    let codeword = |a: Complex64, b: Complex64, c: Complex64, d: Complex64| {
        FloatComplexMatrix::from_row_slice(
            2,
            2,
            &[
                alpha * (a + b * theta) * norm,
                alpha * (c + d * theta) * norm,
                i * alpha_bar * (c + d * theta_bar) * norm,
                alpha_bar * (a + b * theta_bar) * norm,
            ],
        )
    };
    let zero = Complex64::new(0.0, 0.0);
    let mut ms = Vec::with_capacity(8);
    for k in 0..4 {
        for unit in [Complex64::new(1.0, 0.0), i] {
            let mut x = [zero; 4];
            x[k] = unit;
            ms.push(codeword(x[0], x[1], x[2], x[3]));
        }
    }
    FloatCode::from_float("golden", ms, GroupPartition::single(8))
}
