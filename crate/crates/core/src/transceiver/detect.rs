//! Maximum-likelihood detection over finite constellations.
//!
//! Both detectors minimize `s^T G s - 2 z^T s` with `G = A^T A`,
//! `z = A^T r` and `A = sqrt(rho) H`, which equals `||r - A s||^2` up to a
//! constant. Candidates are enumerated depth first over *units*: an
//! unrotated rectangular QAM slot contributes two one-dimensional units
//! (its axes), every other slot one unit. Enumeration is lexicographic in
//! unit candidate index and only strictly better metrics replace the
//! incumbent, so ties resolve to the first candidate in that order.

use nalgebra::{DMatrix, DVector};

use super::constellation::{ConstellationPlan, SlotSymbols, SymbolAssignment};
use super::{FloatCode, RealEquivalentChannel, TransceiverError};

/// Largest joint candidate count the exhaustive detector accepts.
pub const EXHAUSTIVE_LIMIT: u128 = 1 << 24;

#[derive(Clone, Debug)]
enum UnitKind {
    Whole,
    Axis { imaginary: bool },
}

#[derive(Clone, Debug)]
struct Unit {
    slot: usize,
    kind: UnitKind,
    symbols: Vec<usize>,
    /// `candidates[k * dim + d]` is the value of `symbols[d]` for candidate `k`.
    values: Vec<f64>,
    count: usize,
}

impl Unit {
    fn candidate(&self, k: usize) -> &[f64] {
        let dim = self.symbols.len();
        &self.values[k * dim..(k + 1) * dim]
    }
}

/// Per-decoding-group layout: units enumerated jointly and single-symbol
/// units resolved by scalar quantization once the rest is fixed.
#[derive(Clone, Debug)]
struct DecodeGroup {
    symbols: Vec<usize>,
    joint: Vec<usize>,
    conditional: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupMode {
    /// Enumerate every unit of a group.
    Plain,
    /// Quantize all but one member of the group's greedy QOC clique
    /// conditionally on the enumerated rest.
    Conditional,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeStats {
    /// Leaves of the enumeration tree visited, summed over groups.
    pub leaves: u64,
}

/// Precomputed detection layout for one code and constellation plan.
#[derive(Clone, Debug)]
pub struct Detector {
    plan: ConstellationPlan,
    units: Vec<Unit>,
    groups: Vec<DecodeGroup>,
    l: usize,
    receive_len_per_antenna: usize,
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

impl Detector {
    pub fn new(code: &FloatCode, plan: &ConstellationPlan) -> Result<Self, TransceiverError> {
        let l = code.len();
        if plan.symbol_count() != l {
            return Err(TransceiverError::PlanMismatch {
                plan: plan.symbol_count(),
                code: l,
            });
        }

        let mut units = Vec::new();
        for (k, slot) in plan.slots().iter().enumerate() {
            let c = &slot.constellation;
            match slot.symbols {
                SlotSymbols::Real(s) => units.push(Unit {
                    slot: k,
                    kind: UnitKind::Whole,
                    symbols: vec![s],
                    values: c.points().iter().map(|p| p.re).collect(),
                    count: c.size(),
                }),
                SlotSymbols::Complex { re, im } => match c.separable_axes() {
                    Some((li, lq)) => {
                        units.push(Unit {
                            slot: k,
                            kind: UnitKind::Axis { imaginary: false },
                            symbols: vec![re],
                            values: li.to_vec(),
                            count: li.len(),
                        });
                        units.push(Unit {
                            slot: k,
                            kind: UnitKind::Axis { imaginary: true },
                            symbols: vec![im],
                            values: lq.to_vec(),
                            count: lq.len(),
                        });
                    }
                    None => units.push(Unit {
                        slot: k,
                        kind: UnitKind::Whole,
                        symbols: vec![re, im],
                        values: c.points().iter().flat_map(|p| [p.re, p.im]).collect(),
                        count: c.size(),
                    }),
                },
            }
        }
        units.sort_by_key(|u| u.symbols[0]);

        // Partition groups joined by any unit that straddles them.
        let membership = code.partition().membership();
        let mut parent: Vec<usize> = (0..code.partition().len()).collect();
        for u in &units {
            let first = find(&mut parent, membership[u.symbols[0]]);
            for &s in &u.symbols[1..] {
                let other = find(&mut parent, membership[s]);
                parent[other] = first;
            }
        }
        let mut roots: Vec<usize> = Vec::new();
        let mut groups: Vec<DecodeGroup> = Vec::new();
        for (ui, u) in units.iter().enumerate() {
            let root = find(&mut parent, membership[u.symbols[0]]);
            let g = match roots.iter().position(|&r| r == root) {
                Some(g) => g,
                None => {
                    roots.push(root);
                    groups.push(DecodeGroup {
                        symbols: Vec::new(),
                        joint: Vec::new(),
                        conditional: Vec::new(),
                    });
                    roots.len() - 1
                }
            };
            groups[g].joint.push(ui);
            groups[g].symbols.extend(&u.symbols);
        }
        for g in &mut groups {
            g.symbols.sort_unstable();
        }

        // Conditional candidates: clique members after the first that own a
        // one-dimensional unit.
        for g in &mut groups {
            let mut clique: Vec<usize> = Vec::new();
            for &s in &g.symbols {
                if clique.iter().all(|&c| code.is_qoc(c, s)) {
                    clique.push(s);
                }
            }
            for &s in clique.iter().skip(1) {
                if let Some(pos) = g
                    .joint
                    .iter()
                    .position(|&ui| units[ui].symbols.len() == 1 && units[ui].symbols[0] == s)
                {
                    g.conditional.push(g.joint.remove(pos));
                }
            }
        }

        Ok(Self {
            plan: plan.clone(),
            units,
            groups,
            l,
            receive_len_per_antenna: 2 * code.t(),
        })
    }

    pub fn plan(&self) -> &ConstellationPlan {
        &self.plan
    }

    /// Symbol sets decoded independently of each other.
    pub fn decoding_groups(&self) -> Vec<Vec<usize>> {
        self.groups.iter().map(|g| g.symbols.clone()).collect()
    }

    /// Number of jointly enumerated real symbols in each decoding group.
    pub fn enumerated_symbols(&self) -> Vec<usize> {
        self.groups
            .iter()
            .map(|g| g.joint.iter().map(|&u| self.units[u].symbols.len()).sum())
            .collect()
    }

    fn gram(&self, ch: &RealEquivalentChannel, r: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>), TransceiverError> {
        let a = ch.effective();
        if r.len() != a.nrows() || a.nrows() % self.receive_len_per_antenna != 0 {
            return Err(TransceiverError::ReceiveLength {
                expected: a.nrows(),
                got: r.len(),
            });
        }
        let rv = DVector::from_column_slice(r);
        Ok((a.transpose() * &a, a.transpose() * rv))
    }

    fn assemble(&self, chosen: &[Option<usize>]) -> SymbolAssignment {
        let mut indices = vec![0usize; self.plan.slots().len()];
        for (u, c) in self.units.iter().zip(chosen) {
            let k = c.expect("every unit is decided");
            match u.kind {
                UnitKind::Whole => indices[u.slot] = k,
                UnitKind::Axis { imaginary: false } => {
                    let (_, nq) = self.plan.slots()[u.slot].constellation.grid().expect("axis units come from grids");
                    indices[u.slot] += k * nq;
                }
                UnitKind::Axis { imaginary: true } => indices[u.slot] += k,
            }
        }
        self.plan.assign(&indices).expect("indices come from the plan")
    }

    /// Joint ML over every symbol, ignoring group structure.
    pub fn ml_decode_exhaustive(
        &self,
        ch: &RealEquivalentChannel,
        r: &[f64],
    ) -> Result<(SymbolAssignment, DecodeStats), TransceiverError> {
        let size: u128 = self.units.iter().map(|u| u.count as u128).product();
        if size > EXHAUSTIVE_LIMIT {
            return Err(TransceiverError::SearchTooLarge {
                size,
                limit: EXHAUSTIVE_LIMIT,
            });
        }
        let (g, z) = self.gram(ch, r)?;
        let all: Vec<usize> = (0..self.units.len()).collect();
        let mut chosen = vec![None; self.units.len()];
        let leaves = self.search(&g, &z, &all, &[], &mut chosen);
        Ok((self.assemble(&chosen), DecodeStats { leaves }))
    }

    /// Decodes each decoding group on its own submetric.
    pub fn group_decode(
        &self,
        ch: &RealEquivalentChannel,
        r: &[f64],
        mode: GroupMode,
    ) -> Result<(SymbolAssignment, DecodeStats), TransceiverError> {
        let (g, z) = self.gram(ch, r)?;
        let mut chosen = vec![None; self.units.len()];
        let mut leaves = 0;
        for grp in &self.groups {
            leaves += match mode {
                GroupMode::Conditional => self.search(&g, &z, &grp.joint, &grp.conditional, &mut chosen),
                GroupMode::Plain => {
                    let mut joint: Vec<usize> = grp.joint.iter().chain(&grp.conditional).copied().collect();
                    joint.sort_unstable();
                    self.search(&g, &z, &joint, &[], &mut chosen)
                }
            };
        }
        Ok((self.assemble(&chosen), DecodeStats { leaves }))
    }

    /// Depth-first search over `joint` units with `conditional` single-symbol
    /// units quantized at each leaf. Writes the winning candidates into
    /// `chosen` and returns the number of leaves visited.
    fn search(
        &self,
        g: &DMatrix<f64>,
        z: &DVector<f64>,
        joint: &[usize],
        conditional: &[usize],
        chosen: &mut [Option<usize>],
    ) -> u64 {
        // Entries of `G s` read below each depth: symbols of later joint units
        // and of conditional units.
        let future: Vec<Vec<usize>> = (0..joint.len())
            .map(|d| {
                let mut f: Vec<usize> = joint[d + 1..]
                    .iter()
                    .chain(conditional)
                    .flat_map(|&u| self.units[u].symbols.iter().copied())
                    .collect();
                f.sort_unstable();
                f
            })
            .collect();
        let mut state = SearchState {
            g,
            z,
            units: &self.units,
            joint,
            conditional,
            future,
            buffers: vec![vec![0.0; self.l]; joint.len()],
            path: vec![0; joint.len()],
            best_metric: f64::INFINITY,
            best_path: vec![0; joint.len()],
            best_cond: vec![0; conditional.len()],
            cond_scratch: vec![0; conditional.len()],
            leaves: 0,
        };
        let w = vec![0.0; self.l];
        state.descend(0, 0.0, &w);
        for (d, &u) in joint.iter().enumerate() {
            chosen[u] = Some(state.best_path[d]);
        }
        for (d, &u) in conditional.iter().enumerate() {
            chosen[u] = Some(state.best_cond[d]);
        }
        state.leaves
    }
}

struct SearchState<'a> {
    g: &'a DMatrix<f64>,
    z: &'a DVector<f64>,
    units: &'a [Unit],
    joint: &'a [usize],
    conditional: &'a [usize],
    future: Vec<Vec<usize>>,
    buffers: Vec<Vec<f64>>,
    path: Vec<usize>,
    best_metric: f64,
    best_path: Vec<usize>,
    best_cond: Vec<usize>,
    cond_scratch: Vec<usize>,
    leaves: u64,
}

impl SearchState<'_> {
    /// `w` holds `G s` over the symbols fixed so far; only entries still to
    /// be read are kept current.
    fn descend(&mut self, depth: usize, partial: f64, w: &[f64]) {
        if depth == self.joint.len() {
            self.leaf(partial, w);
            return;
        }
        let unit = &self.units[self.joint[depth]];
        let syms = &unit.symbols;
        let mut next = std::mem::take(&mut self.buffers[depth]);
        let future = std::mem::take(&mut self.future[depth]);
        for k in 0..unit.count {
            let v = unit.candidate(k);
            let mut delta = 0.0;
            for (a, (&sa, &va)) in syms.iter().zip(v).enumerate() {
                delta += va * (2.0 * w[sa] + self.g[(sa, sa)] * va - 2.0 * self.z[sa]);
                for (&sb, &vb) in syms.iter().zip(v).skip(a + 1) {
                    delta += 2.0 * self.g[(sa, sb)] * va * vb;
                }
            }
            for &i in &future {
                let mut acc = w[i];
                for (&s, &val) in syms.iter().zip(v) {
                    acc += self.g[(i, s)] * val;
                }
                next[i] = acc;
            }
            self.path[depth] = k;
            self.descend(depth + 1, partial + delta, &next);
        }
        self.buffers[depth] = next;
        self.future[depth] = future;
    }

    fn leaf(&mut self, partial: f64, w: &[f64]) {
        self.leaves += 1;
        let mut total = partial;
        for (d, &u) in self.conditional.iter().enumerate() {
            let unit = &self.units[u];
            let s = unit.symbols[0];
            let gss = self.g[(s, s)];
            let lin = 2.0 * (self.z[s] - w[s]);
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for k in 0..unit.count {
                let v = unit.values[k];
                let m = gss * v * v - lin * v;
                if m < best {
                    best = m;
                    arg = k;
                }
            }
            self.cond_scratch[d] = arg;
            total += best;
        }
        if total < self.best_metric {
            self.best_metric = total;
            self.best_path.copy_from_slice(&self.path);
            self.best_cond.copy_from_slice(&self.cond_scratch);
        }
    }
}
