//! Finite signal sets with Gray labels, and plans that attach them to the
//! real symbols of a code.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("constellation size {0} is not a power of two >= 2")]
    BadSize(usize),
    #[error("PAM carries one real symbol, QAM/PSK carry two (slot {slot})")]
    Arity { slot: usize },
    #[error("symbol s{0} is assigned more than once")]
    Duplicate(usize),
    #[error("symbol s{0} is not assigned to any constellation")]
    Missing(usize),
    #[error("symbol s{symbol} out of range (code has {l} real symbols)")]
    OutOfRange { symbol: usize, l: usize },
    #[error("cannot parse plan entry {0:?}")]
    Parse(String),
    #[error("bit vector has length {got}, plan carries {expected} bits")]
    BitLength { expected: usize, got: usize },
    #[error("point index {index} out of range for slot {slot}")]
    BadIndex { slot: usize, index: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Pam,
    Qam,
    Psk,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Pam => "pam",
            Family::Qam => "qam",
            Family::Psk => "psk",
        })
    }
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

fn log2_exact(m: usize) -> Result<usize, PlanError> {
    if m < 2 || !m.is_power_of_two() {
        return Err(PlanError::BadSize(m));
    }
    Ok(m.trailing_zeros() as usize)
}

fn pam_levels(m: usize) -> Vec<f64> {
    (0..m).map(|i| 2.0 * i as f64 - (m as f64 - 1.0)).collect()
}

/// Unit-average-power signal set. Point `i` carries label `labels[i]`
/// (`bits` wide, most significant bit first on the wire).
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    family: Family,
    points: Vec<Complex64>,
    labels: Vec<usize>,
    bits: usize,
    rotation: f64,
    /// `(n_i, n_q)` for rectangular QAM; point index is `i * n_q + q`.
    grid: Option<(usize, usize)>,
    /// In-phase and quadrature levels of an unrotated grid.
    grid_levels: Option<(Vec<f64>, Vec<f64>)>,
}

impl Constellation {
    pub fn pam(m: usize) -> Result<Self, PlanError> {
        let bits = log2_exact(m)?;
        let levels = pam_levels(m);
        let scale = (levels.iter().map(|x| x * x).sum::<f64>() / m as f64).sqrt();
        Ok(Self {
            family: Family::Pam,
            points: levels.iter().map(|x| Complex64::new(x / scale, 0.0)).collect(),
            labels: (0..m).map(gray).collect(),
            bits,
            rotation: 0.0,
            grid: None,
            grid_levels: None,
        })
    }

    /// Square QAM for even `log2 m`, otherwise a `2^ceil x 2^floor`
    /// rectangular grid (8-QAM is 4 x 2).
    pub fn qam(m: usize) -> Result<Self, PlanError> {
        let bits = log2_exact(m)?;
        let bq = bits / 2;
        let bi = bits - bq;
        let (ni, nq) = (1usize << bi, 1usize << bq);
        let li = pam_levels(ni);
        let lq = if nq == 1 { vec![0.0] } else { pam_levels(nq) };
        let power = li.iter().map(|x| x * x).sum::<f64>() / ni as f64 + lq.iter().map(|x| x * x).sum::<f64>() / nq as f64;
        let scale = power.sqrt();
        let li: Vec<f64> = li.iter().map(|x| x / scale).collect();
        let lq: Vec<f64> = lq.iter().map(|x| x / scale).collect();
        let mut points = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for (i, xi) in li.iter().enumerate() {
            for (q, xq) in lq.iter().enumerate() {
                points.push(Complex64::new(*xi, *xq));
                labels.push((gray(i) << bq) | gray(q));
            }
        }
        Ok(Self {
            family: Family::Qam,
            points,
            labels,
            bits,
            rotation: 0.0,
            grid: Some((ni, nq)),
            grid_levels: Some((li, lq)),
        })
    }

    pub fn psk(m: usize) -> Result<Self, PlanError> {
        let bits = log2_exact(m)?;
        Ok(Self {
            family: Family::Psk,
            points: (0..m)
                .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / m as f64))
                .collect(),
            labels: (0..m).map(gray).collect(),
            bits,
            rotation: 0.0,
            grid: None,
            grid_levels: None,
        })
    }

    pub fn new(family: Family, m: usize) -> Result<Self, PlanError> {
        match family {
            Family::Pam => Self::pam(m),
            Family::Qam => Self::qam(m),
            Family::Psk => Self::psk(m),
        }
    }

    /// Same set multiplied by `exp(j theta)` (replacing any earlier rotation).
    pub fn rotated(&self, theta: f64) -> Self {
        let delta = Complex64::from_polar(1.0, theta - self.rotation);
        Self {
            points: self.points.iter().map(|p| p * delta).collect(),
            rotation: theta,
            ..self.clone()
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    /// Per-axis levels when the set is an unrotated rectangular grid, so
    /// the two real components can be detected independently.
    pub fn separable_axes(&self) -> Option<(&[f64], &[f64])> {
        if self.rotation != 0.0 {
            return None;
        }
        self.grid_levels.as_ref().map(|(i, q)| (i.as_slice(), q.as_slice()))
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn mean_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.size() as f64
    }

    /// `E[Re^2], E[Re Im], E[Im^2]` under uniform point selection.
    pub fn second_moments(&self) -> (f64, f64, f64) {
        let m = self.size() as f64;
        let (mut rr, mut ri, mut ii) = (0.0, 0.0, 0.0);
        for p in &self.points {
            rr += p.re * p.re;
            ri += p.re * p.im;
            ii += p.im * p.im;
        }
        (rr / m, ri / m, ii / m)
    }

    pub fn index_of_label(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }
}

/// Which real symbols (0-based) a constellation drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotSymbols {
    Real(usize),
    Complex { re: usize, im: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    pub symbols: SlotSymbols,
    pub constellation: Constellation,
}

/// Where a real symbol's value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolSource {
    Pam { slot: usize },
    Qam { slot: usize, imaginary: bool },
}

/// Constellations covering every real symbol exactly once.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstellationPlan {
    slots: Vec<Slot>,
    sources: Vec<SymbolSource>,
}

/// Point index per slot together with the resulting real symbol vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolAssignment {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl ConstellationPlan {
    pub fn new(slots: Vec<Slot>, l: usize) -> Result<Self, PlanError> {
        let mut sources: Vec<Option<SymbolSource>> = vec![None; l];
        let mut claim = |sym: usize, src: SymbolSource| -> Result<(), PlanError> {
            let cell = sources
                .get_mut(sym)
                .ok_or(PlanError::OutOfRange { symbol: sym + 1, l })?;
            if cell.is_some() {
                return Err(PlanError::Duplicate(sym + 1));
            }
            *cell = Some(src);
            Ok(())
        };
        for (k, slot) in slots.iter().enumerate() {
            match (slot.symbols, slot.constellation.family()) {
                (SlotSymbols::Real(s), Family::Pam) => claim(s, SymbolSource::Pam { slot: k })?,
                (SlotSymbols::Complex { re, im }, Family::Qam | Family::Psk) => {
                    claim(re, SymbolSource::Qam { slot: k, imaginary: false })?;
                    claim(im, SymbolSource::Qam { slot: k, imaginary: true })?;
                }
                _ => return Err(PlanError::Arity { slot: k }),
            }
        }
        let sources = sources
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or(PlanError::Missing(i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { slots, sources })
    }

    /// Pairs consecutive symbols `(s1,s2), (s3,s4), ...` on one QAM/PSK set;
    /// an odd trailing symbol gets `tail` (a PAM set).
    pub fn paired(l: usize, c: &Constellation, tail: Option<&Constellation>) -> Result<Self, PlanError> {
        let mut slots = Vec::new();
        for k in 0..l / 2 {
            slots.push(Slot {
                symbols: SlotSymbols::Complex { re: 2 * k, im: 2 * k + 1 },
                constellation: c.clone(),
            });
        }
        if l % 2 == 1 {
            let tail = match tail {
                Some(t) => t.clone(),
                None => Constellation::pam(2)?,
            };
            slots.push(Slot {
                symbols: SlotSymbols::Real(l - 1),
                constellation: tail,
            });
        }
        Self::new(slots, l)
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn sources(&self) -> &[SymbolSource] {
        &self.sources
    }

    pub fn symbol_count(&self) -> usize {
        self.sources.len()
    }

    pub fn bits_per_block(&self) -> usize {
        self.slots.iter().map(|s| s.constellation.bits()).sum()
    }

    pub fn codebook_size(&self) -> u128 {
        self.slots.iter().map(|s| s.constellation.size() as u128).product()
    }

    /// Replaces every slot's rotation (radians, one per slot).
    pub fn with_rotations(&self, angles: &[f64]) -> Self {
        let slots = self
            .slots
            .iter()
            .zip(angles)
            .map(|(s, &a)| Slot {
                symbols: s.symbols,
                constellation: s.constellation.rotated(a),
            })
            .collect();
        Self {
            slots,
            sources: self.sources.clone(),
        }
    }

    pub fn rotations(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.constellation.rotation()).collect()
    }

    /// Symbol covariance `E[s s^T]` (constellations are zero-mean).
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let l = self.symbol_count();
        let mut r = vec![vec![0.0; l]; l];
        for slot in &self.slots {
            let (rr, ri, ii) = slot.constellation.second_moments();
            match slot.symbols {
                SlotSymbols::Real(s) => r[s][s] = rr,
                SlotSymbols::Complex { re, im } => {
                    r[re][re] = rr;
                    r[im][im] = ii;
                    r[re][im] = ri;
                    r[im][re] = ri;
                }
            }
        }
        r
    }

    pub fn assign(&self, indices: &[usize]) -> Result<SymbolAssignment, PlanError> {
        let mut values = vec![0.0; self.symbol_count()];
        for (k, (slot, &idx)) in self.slots.iter().zip(indices).enumerate() {
            let p = *slot
                .constellation
                .points()
                .get(idx)
                .ok_or(PlanError::BadIndex { slot: k, index: idx })?;
            match slot.symbols {
                SlotSymbols::Real(s) => values[s] = p.re,
                SlotSymbols::Complex { re, im } => {
                    values[re] = p.re;
                    values[im] = p.im;
                }
            }
        }
        Ok(SymbolAssignment {
            indices: indices.to_vec(),
            values,
        })
    }

    /// Consumes `bits_per_block` bits, slot by slot, MSB first.
    pub fn indices_from_bits(&self, bits: &[u8]) -> Result<Vec<usize>, PlanError> {
        if bits.len() != self.bits_per_block() {
            return Err(PlanError::BitLength {
                expected: self.bits_per_block(),
                got: bits.len(),
            });
        }
        let mut pos = 0;
        let mut out = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            let c = &slot.constellation;
            let label = bits[pos..pos + c.bits()]
                .iter()
                .fold(0usize, |acc, &b| (acc << 1) | usize::from(b & 1));
            pos += c.bits();
            out.push(c.index_of_label(label).expect("Gray labels are a permutation"));
        }
        Ok(out)
    }

    pub fn bits_from_indices(&self, indices: &[usize]) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.bits_per_block());
        for (slot, &idx) in self.slots.iter().zip(indices) {
            let c = &slot.constellation;
            let label = c.labels()[idx];
            for b in (0..c.bits()).rev() {
                out.push(((label >> b) & 1) as u8);
            }
        }
        out
    }

    /// Compact text form, e.g. `pam4:4; qam8@0.0735:1,5; qam8:2,3` with
    /// 1-based symbols and rotations in multiples of pi.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .slots
            .iter()
            .map(|s| {
                let c = &s.constellation;
                let rot = if c.rotation() == 0.0 {
                    String::new()
                } else {
                    format!("@{}", c.rotation() / PI)
                };
                let syms = match s.symbols {
                    SlotSymbols::Real(x) => format!("{}", x + 1),
                    SlotSymbols::Complex { re, im } => format!("{},{}", re + 1, im + 1),
                };
                format!("{}{}{}:{}", c.family(), c.size(), rot, syms)
            })
            .collect();
        parts.join("; ")
    }

    /// Parses the [`describe`](Self::describe) form for a code with `l` real symbols.
    pub fn parse(text: &str, l: usize) -> Result<Self, PlanError> {
        let mut slots = Vec::new();
        for entry in text.split(';').map(str::trim).filter(|e| !e.is_empty()) {
            let bad = || PlanError::Parse(entry.to_string());
            let (head, syms) = entry.split_once(':').ok_or_else(bad)?;
            let (kind, rot) = match head.split_once('@') {
                Some((k, r)) => (k.trim(), r.trim().parse::<f64>().map_err(|_| bad())? * PI),
                None => (head.trim(), 0.0),
            };
            let split = kind.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?;
            let family = match &kind[..split].to_ascii_lowercase()[..] {
                "pam" => Family::Pam,
                "qam" => Family::Qam,
                "psk" => Family::Psk,
                _ => return Err(bad()),
            };
            let size: usize = kind[split..].parse().map_err(|_| bad())?;
            let c = Constellation::new(family, size)?.rotated(rot);
            let idx: Vec<usize> = syms
                .split(',')
                .map(|s| s.trim().parse::<usize>().ok().and_then(|v| v.checked_sub(1)).ok_or_else(bad))
                .collect::<Result<_, _>>()?;
            let symbols = match idx[..] {
                [s] => SlotSymbols::Real(s),
                [re, im] => SlotSymbols::Complex { re, im },
                _ => return Err(bad()),
            };
            slots.push(Slot {
                symbols,
                constellation: c,
            });
        }
        Self::new(slots, l)
    }
}

impl FromStr for Family {
    type Err = PlanError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pam" => Ok(Family::Pam),
            "qam" => Ok(Family::Qam),
            "psk" => Ok(Family::Psk),
            _ => Err(PlanError::Parse(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hamming(a: usize, b: usize) -> u32 {
        (a ^ b).count_ones()
    }

    #[test]
    fn unit_power() {
        for c in [
            Constellation::pam(4).unwrap(),
            Constellation::qam(4).unwrap(),
            Constellation::qam(8).unwrap(),
            Constellation::qam(16).unwrap(),
            Constellation::psk(8).unwrap(),
            Constellation::qam(16).unwrap().rotated(0.3),
        ] {
            assert!((c.mean_power() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert_eq!(Constellation::qam(6), Err(PlanError::BadSize(6)));
        assert_eq!(Constellation::pam(1), Err(PlanError::BadSize(1)));
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let pam = Constellation::pam(8).unwrap();
        for i in 1..8 {
            assert_eq!(hamming(pam.labels()[i - 1], pam.labels()[i]), 1);
        }
        let qam = Constellation::qam(16).unwrap();
        let (ni, nq) = qam.grid().unwrap();
        for i in 0..ni {
            for q in 0..nq {
                if q + 1 < nq {
                    assert_eq!(hamming(qam.labels()[i * nq + q], qam.labels()[i * nq + q + 1]), 1);
                }
                if i + 1 < ni {
                    assert_eq!(hamming(qam.labels()[i * nq + q], qam.labels()[(i + 1) * nq + q]), 1);
                }
            }
        }
        let psk = Constellation::psk(8).unwrap();
        for i in 0..8 {
            assert_eq!(hamming(psk.labels()[i], psk.labels()[(i + 1) % 8]), 1);
        }
    }

    #[test]
    fn eight_qam_is_four_by_two() {
        let c = Constellation::qam(8).unwrap();
        assert_eq!(c.grid(), Some((4, 2)));
        let mut labels = c.labels().to_vec();
        labels.sort_unstable();
        assert_eq!(labels, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn rotation_hides_axes() {
        let c = Constellation::qam(4).unwrap();
        assert!(c.separable_axes().is_some());
        assert!(c.rotated(0.1).separable_axes().is_none());
        assert!(c.rotated(0.1).rotated(0.0).separable_axes().is_some());
    }

    #[test]
    fn plan_round_trips_bits_and_text() {
        let plan = ConstellationPlan::parse("pam4:4; qam8@0.0735:1,5; qam8:2,3", 5).unwrap();
        assert_eq!(plan.bits_per_block(), 8);
        assert_eq!(plan.codebook_size(), 256);
        let back = ConstellationPlan::parse(&plan.describe(), 5).unwrap();
        assert_eq!(back.describe(), plan.describe());
        for word in 0..256u32 {
            let bits: Vec<u8> = (0..8).rev().map(|b| ((word >> b) & 1) as u8).collect();
            let idx = plan.indices_from_bits(&bits).unwrap();
            assert_eq!(plan.bits_from_indices(&idx), bits);
        }
    }

    #[test]
    fn plan_validation() {
        assert_eq!(ConstellationPlan::parse("qam4:1,2", 3), Err(PlanError::Missing(3)));
        assert_eq!(ConstellationPlan::parse("qam4:1,2; pam2:2", 2), Err(PlanError::Duplicate(2)));
        assert_eq!(ConstellationPlan::parse("pam2:1,2", 2), Err(PlanError::Arity { slot: 0 }));
        assert!(matches!(ConstellationPlan::parse("zzz4:1", 1), Err(PlanError::Parse(_))));
    }

    #[test]
    fn covariance_of_rotated_pair() {
        let plan = ConstellationPlan::parse("qam8@0.25:1,2", 2).unwrap();
        let r = plan.covariance();
        assert!((r[0][0] + r[1][1] - 1.0).abs() < 1e-12);
        assert!((r[0][1] - r[1][0]).abs() < 1e-15);
        assert!(r[0][1].abs() > 1e-3, "rotated rectangular grid correlates its axes");
    }
}
