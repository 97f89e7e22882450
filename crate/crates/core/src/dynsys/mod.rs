//! Computable free zero-dimensional systems presented through atoms.
//!
//! An odometer atom at level `k` is a residue tuple modulo the level-`k`
//! grid. A substitution atom is an admissible word over a window
//! `[lo, lo+len)`; level `k` means the window `[-k, k]`. Clopen sets carry
//! the frame they are expressed in and are normalized to the coarsest frame
//! representing them.

mod odometer;
mod substitution;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use odometer::Odometer;
pub use substitution::{Substitution, Word};

use crate::error::{Error, Result};
use crate::group::{FiniteSubset, GroupDescriptor, GroupElement};
use crate::rational::{ratio, Interval, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    Grid { level: u32 },
    Window { lo: i64, len: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClopenSet {
    Grid { level: u32, atoms: BTreeSet<u64> },
    Window { lo: i64, len: u32, words: BTreeSet<Word> },
}

impl ClopenSet {
    pub fn frame(&self) -> Frame {
        match self {
            ClopenSet::Grid { level, .. } => Frame::Grid { level: *level },
            ClopenSet::Window { lo, len, .. } => Frame::Window { lo: *lo, len: *len },
        }
    }

    pub fn atom_count(&self) -> usize {
        match self {
            ClopenSet::Grid { atoms, .. } => atoms.len(),
            ClopenSet::Window { words, .. } => words.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.atom_count() == 0
    }

    pub fn empty(frame: Frame) -> Self {
        match frame {
            Frame::Grid { level } => ClopenSet::Grid { level, atoms: BTreeSet::new() },
            Frame::Window { lo, len } => ClopenSet::Window { lo, len, words: BTreeSet::new() },
        }
    }

    /// Odometer set from level-`level` atom indices.
    pub fn grid(level: u32, atoms: impl IntoIterator<Item = u64>) -> Self {
        ClopenSet::Grid { level, atoms: atoms.into_iter().collect() }
    }

    /// Union of cylinders anchored at `lo`.
    pub fn cylinders(lo: i64, words: impl IntoIterator<Item = Vec<u8>>) -> Result<Self> {
        let words: BTreeSet<Word> = words.into_iter().map(Vec::into_boxed_slice).collect();
        let mut lens = words.iter().map(|w| w.len());
        let len = lens.next().unwrap_or(0);
        if lens.any(|l| l != len) {
            return Err(Error::Parse("cylinder words must share one length".into()));
        }
        Ok(ClopenSet::Window { lo, len: len as u32, words })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetOp {
    Union,
    Intersect,
    Minus,
}

/// The atoms of one frame, indexed `0..len()` in canonical order.
#[derive(Clone, Debug)]
pub struct Atoms {
    frame: Frame,
    grid: Vec<u64>,
    words: Option<Arc<Vec<Word>>>,
    count: usize,
}

impl Atoms {
    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn word(&self, i: usize) -> Option<&[u8]> {
        self.words.as_ref().map(|w| &w[i][..])
    }
}

#[derive(Clone, Debug)]
pub enum SymbolicSystem {
    Odometer(Odometer),
    Substitution(Arc<Substitution>),
}

impl PartialEq for SymbolicSystem {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (SymbolicSystem::Odometer(a), SymbolicSystem::Odometer(b)) => a == b,
            (SymbolicSystem::Substitution(a), SymbolicSystem::Substitution(b)) => a == b,
            _ => false,
        }
    }
}

fn default_tolerance() -> Rational {
    ratio(1, 1_000_000)
}

impl SymbolicSystem {
    pub fn odometer(bases: Vec<Vec<u64>>) -> Result<Self> {
        Ok(SymbolicSystem::Odometer(Odometer::new(bases)?))
    }

    pub fn dyadic() -> Self {
        SymbolicSystem::Odometer(Odometer::dyadic())
    }

    pub fn substitution(rule: &str) -> Result<Self> {
        Ok(SymbolicSystem::Substitution(Arc::new(Substitution::parse(rule)?)))
    }

    pub fn fibonacci() -> Self {
        SymbolicSystem::Substitution(Arc::new(Substitution::fibonacci()))
    }

    pub fn descriptor(&self) -> GroupDescriptor {
        match self {
            SymbolicSystem::Odometer(o) => GroupDescriptor::z(o.rank()),
            SymbolicSystem::Substitution(_) => GroupDescriptor::z(1),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, SymbolicSystem::Odometer(_))
    }

    pub fn level_frame(&self, level: u32) -> Frame {
        match self {
            SymbolicSystem::Odometer(_) => Frame::Grid { level },
            SymbolicSystem::Substitution(_) => Frame::Window {
                lo: -(level as i64),
                len: 2 * level + 1,
            },
        }
    }

    /// Smallest level whose frame is at least as fine as `frame`.
    pub fn frame_level(&self, frame: Frame) -> u32 {
        match frame {
            Frame::Grid { level } => level,
            Frame::Window { lo, len } => {
                if len == 0 {
                    0
                } else {
                    let hi = lo + len as i64 - 1;
                    lo.unsigned_abs().max(hi.unsigned_abs()) as u32
                }
            }
        }
    }

    fn check_frame(&self, frame: Frame) -> Result<()> {
        match (self, frame) {
            (SymbolicSystem::Odometer(o), Frame::Grid { level }) => o.check_level(level),
            (SymbolicSystem::Substitution(_), Frame::Window { .. }) => Ok(()),
            _ => Err(Error::InvalidSystem("frame does not belong to this system".into())),
        }
    }

    pub fn atoms(&self, frame: Frame) -> Result<Atoms> {
        self.check_frame(frame)?;
        match (self, frame) {
            (SymbolicSystem::Odometer(o), Frame::Grid { level }) => Ok(Atoms {
                frame,
                grid: o.grid(level),
                words: None,
                count: o.atom_count(level) as usize,
            }),
            (SymbolicSystem::Substitution(s), Frame::Window { len, .. }) => {
                let words = s.language(len as usize)?;
                Ok(Atoms { frame, grid: Vec::new(), count: words.len(), words: Some(words) })
            }
            _ => unreachable!(),
        }
    }

    pub fn whole(&self) -> ClopenSet {
        match self {
            SymbolicSystem::Odometer(_) => ClopenSet::grid(0, [0]),
            SymbolicSystem::Substitution(_) => ClopenSet::Window {
                lo: 0,
                len: 0,
                words: [Box::from([])].into_iter().collect(),
            },
        }
    }

    pub fn empty(&self) -> ClopenSet {
        ClopenSet::empty(self.level_frame(0))
    }

    /// Whether every atom of `fine` lies inside a single atom of `coarse`.
    pub fn finer(&self, fine: Frame, coarse: Frame) -> bool {
        match (fine, coarse) {
            (Frame::Grid { level: a }, Frame::Grid { level: b }) => a >= b,
            (Frame::Window { lo: a, len: la }, Frame::Window { lo: b, len: lb }) => {
                lb == 0 || (a <= b && a + la as i64 >= b + lb as i64)
            }
            _ => false,
        }
    }

    pub fn join(&self, a: Frame, b: Frame) -> Frame {
        match (a, b) {
            (Frame::Grid { level: x }, Frame::Grid { level: y }) => Frame::Grid { level: x.max(y) },
            (Frame::Window { lo: a, len: la }, Frame::Window { lo: b, len: lb }) => {
                if la == 0 {
                    return Frame::Window { lo: b, len: lb };
                }
                if lb == 0 {
                    return Frame::Window { lo: a, len: la };
                }
                let lo = a.min(b);
                let hi = (a + la as i64).max(b + lb as i64);
                Frame::Window { lo, len: (hi - lo) as u32 }
            }
            _ => a,
        }
    }

    pub fn translate_frame(&self, frame: Frame, g: &GroupElement) -> Frame {
        match frame {
            Frame::Window { lo, len } if len > 0 => Frame::Window { lo: lo + g.0[0], len },
            other => other,
        }
    }

    /// A frame `E`, at least as fine as `base`, such that `E + s` is finer
    /// than `target` for every `s` in `shifts`. Membership of `s.x` in a set
    /// over `target` is then decided by the `E`-atom of `x`.
    pub fn cover_frame(&self, base: Frame, target: Frame, shifts: &FiniteSubset) -> Frame {
        match (base, target) {
            (Frame::Window { .. }, Frame::Window { lo, len }) if len > 0 => {
                let mut e = base;
                for s in shifts.iter() {
                    e = self.join(e, Frame::Window { lo: lo - s.0[0], len });
                }
                e
            }
            _ => self.join(base, target),
        }
    }

    /// Maps each atom of `fine` to the index of the atom of `coarse` containing it.
    pub fn parent_map(&self, fine: &Atoms, coarse: &Atoms) -> Result<Vec<usize>> {
        if !self.finer(fine.frame, coarse.frame) {
            return Err(Error::LevelTooCoarse(format!(
                "{:?} is not finer than {:?}",
                fine.frame, coarse.frame
            )));
        }
        match (self, fine.frame, coarse.frame) {
            (SymbolicSystem::Odometer(o), _, _) => Ok((0..fine.count as u64)
                .map(|i| o.project_index(i, &fine.grid, &coarse.grid) as usize)
                .collect()),
            (_, Frame::Window { lo: a, .. }, Frame::Window { lo: b, len: lb }) => {
                let cw = coarse.words.as_ref().expect("window atoms");
                let index: HashMap<&[u8], usize> =
                    cw.iter().enumerate().map(|(i, w)| (&w[..], i)).collect();
                let off = (b - a) as usize;
                let fw = fine.words.as_ref().expect("window atoms");
                fw.iter()
                    .map(|w| {
                        let sub = if lb == 0 { &w[0..0] } else { &w[off..off + lb as usize] };
                        index.get(sub).copied().ok_or_else(|| {
                            Error::InvalidSystem("admissible word with inadmissible factor".into())
                        })
                    })
                    .collect()
            }
            _ => unreachable!(),
        }
    }

    /// Indicator over `atoms` of `{x : s.x in A}`.
    pub fn pullback(&self, a: &ClopenSet, s: &GroupElement, atoms: &Atoms) -> Result<Vec<bool>> {
        self.check_resolves(a, s, atoms)?;
        if let (SymbolicSystem::Odometer(o), ClopenSet::Grid { level, atoms: set }) = (self, a) {
            // Translation commutes with projection to the coarser grid.
            let coarse = o.grid(*level);
            let total: u64 = coarse.iter().product();
            let mut inside = vec![false; total as usize];
            for &c in set {
                inside[c as usize] = true;
            }
            let shift: Vec<i128> = s.0.iter().zip(&coarse).map(|(&g, &n)| (g as i128).rem_euclid(n as i128)).collect();
            let mut r = vec![0u64; coarse.len()];
            return Ok((0..atoms.count as u64)
                .map(|i| {
                    let mut rest = i;
                    for j in (0..coarse.len()).rev() {
                        r[j] = rest % atoms.grid[j];
                        rest /= atoms.grid[j];
                    }
                    let mut index = 0u64;
                    for j in 0..coarse.len() {
                        let n = coarse[j];
                        index = index * n + ((r[j] % n) as i128 + shift[j]).rem_euclid(n as i128) as u64;
                    }
                    inside[index as usize]
                })
                .collect());
        }
        Ok((0..atoms.count).map(|i| self.member_unchecked(a, s, atoms, i)).collect())
    }

    /// Whether `s.x` lies in `A` for `x` the `i`-th atom.
    pub fn member(&self, a: &ClopenSet, s: &GroupElement, atoms: &Atoms, i: usize) -> Result<bool> {
        self.check_resolves(a, s, atoms)?;
        Ok(self.member_unchecked(a, s, atoms, i))
    }

    pub fn check_resolves(&self, a: &ClopenSet, s: &GroupElement, atoms: &Atoms) -> Result<()> {
        let shifted = self.translate_frame(atoms.frame, s);
        if !self.finer(shifted, a.frame()) {
            return Err(Error::LevelTooCoarse(format!(
                "translates by {s} of {:?} do not resolve {:?}",
                atoms.frame,
                a.frame()
            )));
        }
        match (self, a) {
            (SymbolicSystem::Odometer(_), ClopenSet::Grid { .. })
            | (SymbolicSystem::Substitution(_), ClopenSet::Window { .. }) => Ok(()),
            _ => Err(Error::InvalidSystem("set does not belong to this system".into())),
        }
    }

    pub(crate) fn member_unchecked(&self, a: &ClopenSet, s: &GroupElement, atoms: &Atoms, i: usize) -> bool {
        match (self, a) {
            (SymbolicSystem::Odometer(o), ClopenSet::Grid { level, atoms: set }) => {
                let t = o.translate_index(i as u64, &atoms.grid, s);
                set.contains(&o.project_index(t, &atoms.grid, &o.grid(*level)))
            }
            (SymbolicSystem::Substitution(_), ClopenSet::Window { lo, len, words }) => {
                if *len == 0 {
                    return !words.is_empty();
                }
                let Frame::Window { lo: elo, .. } = atoms.frame else { unreachable!() };
                let w = &atoms.words.as_ref().expect("window atoms")[i];
                // (s.x)_i = x_{i-s}: window [lo, lo+len) of s.x is x on [lo-s, ...).
                let off = (lo - s.0[0] - elo) as usize;
                words.contains(&w[off..off + *len as usize])
            }
            _ => false,
        }
    }

    /// Indices of the atoms of `atoms` contained in `A` (a finer frame).
    pub fn indices_in(&self, a: &ClopenSet, atoms: &Atoms) -> Result<Vec<usize>> {
        match (self, a) {
            (SymbolicSystem::Odometer(o), ClopenSet::Grid { level, atoms: set }) => {
                let Frame::Grid { level: fine } = atoms.frame else {
                    return Err(Error::InvalidSystem("frame does not belong to this system".into()));
                };
                if fine < *level {
                    return Err(Error::LevelTooCoarse(format!("level {fine} below {level}")));
                }
                let coarse = o.grid(*level);
                let mut out: Vec<usize> = set
                    .iter()
                    .flat_map(|&i| o.children(i, &coarse, &atoms.grid))
                    .map(|i| i as usize)
                    .collect();
                out.sort_unstable();
                Ok(out)
            }
            _ => Ok(self
                .mask(a, atoms)?
                .iter()
                .enumerate()
                .filter(|(_, b)| **b)
                .map(|(i, _)| i)
                .collect()),
        }
    }

    /// Grid index of the translate of the `i`-th atom (odometers only).
    pub fn translate_atom(&self, atoms: &Atoms, i: usize, g: &GroupElement) -> Option<usize> {
        match self {
            SymbolicSystem::Odometer(o) => Some(o.translate_index(i as u64, &atoms.grid, g) as usize),
            SymbolicSystem::Substitution(_) => None,
        }
    }

    /// Indicator of `A` over `atoms` (which must be finer than `A`'s frame).
    pub fn mask(&self, a: &ClopenSet, atoms: &Atoms) -> Result<Vec<bool>> {
        self.pullback(a, &self.descriptor().identity(), atoms)
    }

    pub fn from_mask(&self, atoms: &Atoms, mask: &[bool]) -> ClopenSet {
        let set = self.set_from_mask(atoms, mask);
        self.normalize(&set)
    }

    fn set_from_mask(&self, atoms: &Atoms, mask: &[bool]) -> ClopenSet {
        match atoms.frame {
            Frame::Grid { level } => ClopenSet::grid(
                level,
                mask.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i as u64),
            ),
            Frame::Window { lo, len } => {
                let fw = atoms.words.as_ref().expect("window atoms");
                ClopenSet::Window {
                    lo,
                    len,
                    words: fw
                        .iter()
                        .zip(mask)
                        .filter(|(_, b)| **b)
                        .map(|(w, _)| w.clone())
                        .collect(),
                }
            }
        }
    }

    /// Re-expresses `A` over a finer frame (not normalized).
    pub fn refine(&self, a: &ClopenSet, frame: Frame) -> Result<ClopenSet> {
        let atoms = self.atoms(frame)?;
        let mask = self.mask(a, &atoms)?;
        Ok(self.set_from_mask(&atoms, &mask))
    }

    /// Coarsest equivalent representation.
    pub fn normalize(&self, a: &ClopenSet) -> ClopenSet {
        match (self, a) {
            (SymbolicSystem::Odometer(o), ClopenSet::Grid { level, atoms }) => {
                let mut level = *level;
                let mut atoms = atoms.clone();
                while level > 0 {
                    let fine = o.grid(level);
                    let coarse = o.grid(level - 1);
                    let ratio = (o.atom_count(level) / o.atom_count(level - 1)) as usize;
                    let mut counts: HashMap<u64, usize> = HashMap::new();
                    for &i in &atoms {
                        *counts.entry(o.project_index(i, &fine, &coarse)).or_default() += 1;
                    }
                    if counts.values().any(|&c| c != ratio) {
                        break;
                    }
                    atoms = counts.into_keys().collect();
                    level -= 1;
                }
                ClopenSet::Grid { level, atoms }
            }
            (SymbolicSystem::Substitution(s), ClopenSet::Window { lo, len, words }) => {
                let (mut lo, mut len, mut words) = (*lo, *len, words.clone());
                if words.is_empty() {
                    return ClopenSet::Window { lo: 0, len: 0, words };
                }
                while len > 0 {
                    let mut changed = false;
                    for drop_front in [true, false] {
                        if len == 0 {
                            break;
                        }
                        let shorter: BTreeSet<Word> = words
                            .iter()
                            .map(|w| {
                                if drop_front {
                                    Box::from(&w[1..])
                                } else {
                                    Box::from(&w[..w.len() - 1])
                                }
                            })
                            .collect();
                        let new_lo = if drop_front { lo + 1 } else { lo };
                        // Equivalent iff every admissible extension of a kept word is kept.
                        let Ok(full) = s.language(len as usize) else { return a.clone() };
                        let expanded = full
                            .iter()
                            .filter(|w| {
                                let sub = if drop_front { &w[1..] } else { &w[..w.len() - 1] };
                                shorter.contains(sub)
                            })
                            .count();
                        if expanded == words.len() {
                            words = shorter;
                            lo = new_lo;
                            len -= 1;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                if len == 0 {
                    lo = 0;
                }
                ClopenSet::Window { lo, len, words }
            }
            _ => a.clone(),
        }
    }

    pub fn translate(&self, a: &ClopenSet, g: &GroupElement) -> ClopenSet {
        match (self, a) {
            (SymbolicSystem::Odometer(o), ClopenSet::Grid { level, atoms }) => {
                let grid = o.grid(*level);
                ClopenSet::Grid {
                    level: *level,
                    atoms: atoms.iter().map(|&i| o.translate_index(i, &grid, g)).collect(),
                }
            }
            (_, ClopenSet::Window { lo, len, words }) if *len > 0 => ClopenSet::Window {
                lo: lo + g.0[0],
                len: *len,
                words: words.clone(),
            },
            _ => a.clone(),
        }
    }

    pub fn combine(&self, op: SetOp, a: &ClopenSet, b: &ClopenSet) -> Result<ClopenSet> {
        let frame = self.join(a.frame(), b.frame());
        let atoms = self.atoms(frame)?;
        let ma = self.mask(a, &atoms)?;
        let mb = self.mask(b, &atoms)?;
        let out: Vec<bool> = ma
            .iter()
            .zip(&mb)
            .map(|(&x, &y)| match op {
                SetOp::Union => x || y,
                SetOp::Intersect => x && y,
                SetOp::Minus => x && !y,
            })
            .collect();
        Ok(self.from_mask(&atoms, &out))
    }

    pub fn complement(&self, a: &ClopenSet) -> Result<ClopenSet> {
        self.combine(SetOp::Minus, &self.whole(), a)
    }

    pub fn union_all<'a>(&self, sets: impl IntoIterator<Item = &'a ClopenSet>) -> Result<ClopenSet> {
        let sets: Vec<&ClopenSet> = sets.into_iter().collect();
        let frame = sets
            .iter()
            .fold(self.level_frame(0), |f, s| self.join(f, s.frame()));
        let atoms = self.atoms(frame)?;
        let mut acc = vec![false; atoms.len()];
        for s in sets {
            for (x, y) in acc.iter_mut().zip(self.mask(s, &atoms)?) {
                *x |= y;
            }
        }
        Ok(self.from_mask(&atoms, &acc))
    }

    pub fn set_eq(&self, a: &ClopenSet, b: &ClopenSet) -> Result<bool> {
        let frame = self.join(a.frame(), b.frame());
        let atoms = self.atoms(frame)?;
        Ok(self.mask(a, &atoms)? == self.mask(b, &atoms)?)
    }

    pub fn is_subset(&self, a: &ClopenSet, b: &ClopenSet) -> Result<bool> {
        Ok(self.combine(SetOp::Minus, a, b)?.is_empty())
    }

    pub fn is_disjoint(&self, a: &ClopenSet, b: &ClopenSet) -> Result<bool> {
        Ok(self.combine(SetOp::Intersect, a, b)?.is_empty())
    }

    pub fn measure_tolerance(&self) -> Rational {
        default_tolerance()
    }

    /// Exact measure on odometers; an enclosing interval of width at most
    /// `tol` on substitution subshifts.
    pub fn measure_with(&self, a: &ClopenSet, tol: &Rational) -> Result<Interval> {
        match (self, a) {
            (SymbolicSystem::Odometer(o), ClopenSet::Grid { level, atoms }) => Ok(Interval::point(
                Rational::new(
                    (atoms.len() as u64).into(),
                    o.atom_count(*level).into(),
                ),
            )),
            (SymbolicSystem::Substitution(s), ClopenSet::Window { len, words, .. }) => {
                s.frequency(words, *len as usize, tol)
            }
            _ => Err(Error::InvalidSystem("set does not belong to this system".into())),
        }
    }

    pub fn measure(&self, a: &ClopenSet) -> Result<Interval> {
        self.measure_with(a, &self.measure_tolerance())
    }

    /// Exact measure of a single atom (odometers only).
    pub fn atom_measure(&self, atoms: &Atoms) -> Option<Rational> {
        match self {
            SymbolicSystem::Odometer(_) => Some(Rational::new(1.into(), (atoms.count as u64).into())),
            SymbolicSystem::Substitution(_) => None,
        }
    }

    /// Level at which every non-identity element of `f` moves every atom.
    pub fn freeness_level(&self, f: &FiniteSubset) -> Result<u32> {
        self.descriptor().check_set(f)?;
        match self {
            SymbolicSystem::Odometer(o) => o.freeness_level(f),
            SymbolicSystem::Substitution(s) => s.freeness_level(f),
        }
    }

    /// Frame of the given level refined so that the translates by `f` of its
    /// atoms are again unions of atoms of a common frame.
    pub fn freeness_frame(&self, f: &FiniteSubset, min_level: u32) -> Result<Frame> {
        Ok(self.level_frame(self.freeness_level(f)?.max(min_level)))
    }

    pub fn format_atom(&self, atoms: &Atoms, i: usize) -> String {
        match self {
            SymbolicSystem::Odometer(o) => {
                let r = o.decode(i as u64, &atoms.grid);
                let parts: Vec<String> = r
                    .iter()
                    .zip(&atoms.grid)
                    .map(|(r, n)| format!("{r} mod {n}"))
                    .collect();
                parts.join(", ")
            }
            SymbolicSystem::Substitution(s) => {
                let Frame::Window { lo, .. } = atoms.frame else { unreachable!() };
                format!("[{}]@{lo}", s.render(atoms.word(i).unwrap_or(&[])))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn g(x: i64) -> GroupElement {
        GroupElement::new([x])
    }

    #[test]
    fn odometer_translation_shifts_residues() {
        let sys = SymbolicSystem::dyadic();
        let a = ClopenSet::grid(2, [0]);
        assert_eq!(sys.translate(&a, &g(1)), ClopenSet::grid(2, [1]));
        assert_eq!(sys.translate(&a, &g(0)), a);
        assert_eq!(sys.translate(&a, &g(-1)), ClopenSet::grid(2, [3]));
    }

    #[test]
    fn boolean_operations() {
        let six = SymbolicSystem::odometer(vec![vec![6]]).unwrap();
        // Level 1 of the base-6 odometer: residues mod 6.
        let even = ClopenSet::grid(1, [0, 2, 4]);
        let three = ClopenSet::grid(1, [0, 3]);
        let both = six.combine(SetOp::Intersect, &even, &three).unwrap();
        assert_eq!(both, ClopenSet::grid(1, [0]));

        let sys = SymbolicSystem::dyadic();
        let a = ClopenSet::grid(2, [0, 1]);
        let b = ClopenSet::grid(2, [1]);
        assert_eq!(sys.combine(SetOp::Minus, &a, &b).unwrap(), ClopenSet::grid(2, [0]));
        let c = sys.complement(&a).unwrap();
        assert_eq!(sys.combine(SetOp::Union, &a, &c).unwrap(), sys.whole());
    }

    #[test]
    fn normalization_coarsens() {
        let sys = SymbolicSystem::dyadic();
        let a = ClopenSet::grid(3, [0, 2, 4, 6]);
        assert_eq!(sys.normalize(&a), ClopenSet::grid(1, [0]));
        let all = ClopenSet::grid(3, 0..8);
        assert_eq!(sys.normalize(&all), sys.whole());
    }

    #[test]
    fn odometer_measures() {
        let sys = SymbolicSystem::dyadic();
        for k in 0..8 {
            let iv = sys.measure(&ClopenSet::grid(k, [0])).unwrap();
            assert_eq!(iv, Interval::point(ratio(1, 1 << k)));
        }
        assert_eq!(sys.measure(&sys.whole()).unwrap(), Interval::point(int(1)));
        let a = ClopenSet::grid(3, [1, 5]);
        let fine = sys.refine(&a, Frame::Grid { level: 6 }).unwrap();
        assert_eq!(sys.measure(&a).unwrap(), sys.measure(&fine).unwrap());
    }

    #[test]
    fn odometer_freeness() {
        let sys = SymbolicSystem::dyadic();
        let f: FiniteSubset = [g(-1), g(1)].into_iter().collect();
        assert_eq!(sys.freeness_level(&f).unwrap(), 1);
        let e: FiniteSubset = [g(0)].into_iter().collect();
        assert_eq!(sys.freeness_level(&e).unwrap(), 0);
        let mixed = SymbolicSystem::odometer(vec![vec![2, 3]]).unwrap();
        let six: FiniteSubset = [g(6)].into_iter().collect();
        // Grids 1, 2, 6, 12: first not dividing 6 is 12 at level 3.
        assert_eq!(mixed.freeness_level(&six).unwrap(), 3);
        let stuck = SymbolicSystem::odometer(vec![vec![1]]).unwrap();
        assert!(matches!(stuck.freeness_level(&f), Err(Error::NotFree(_))));
    }

    #[test]
    fn fibonacci_cylinder_translate() {
        let sys = SymbolicSystem::fibonacci();
        let SymbolicSystem::Substitution(s) = &sys else { unreachable!() };
        let ab = ClopenSet::cylinders(0, [s.parse_word("ab").unwrap()]).unwrap();
        let moved = sys.translate(&ab, &g(1));
        let expected = ClopenSet::cylinders(
            0,
            [s.parse_word("aab").unwrap(), s.parse_word("bab").unwrap()],
        )
        .unwrap();
        assert!(sys.set_eq(&moved, &expected).unwrap());
        // Every b is preceded by a, so both normalize to the cylinder [b] at 2.
        let b = ClopenSet::cylinders(2, [s.parse_word("b").unwrap()]).unwrap();
        assert_eq!(sys.normalize(&expected), b);
        assert_eq!(sys.normalize(&moved), b);
    }

    #[test]
    fn substitution_partition_and_refinement() {
        let sys = SymbolicSystem::fibonacci();
        let atoms = sys.atoms(sys.level_frame(3)).unwrap();
        let all = sys.from_mask(&atoms, &vec![true; atoms.len()]);
        assert_eq!(all, sys.whole());
        let one = sys.from_mask(&atoms, &(0..atoms.len()).map(|i| i == 0).collect::<Vec<_>>());
        let back = sys.refine(&one, sys.level_frame(5)).unwrap();
        assert!(sys.set_eq(&one, &back).unwrap());
    }

    #[test]
    fn fibonacci_measures_add_up() {
        let sys = SymbolicSystem::fibonacci();
        let atoms = sys.atoms(sys.level_frame(2)).unwrap();
        let mut lo = int(0);
        let mut hi = int(0);
        for i in 0..atoms.len() {
            let mask: Vec<bool> = (0..atoms.len()).map(|j| j == i).collect();
            let iv = sys.measure(&sys.from_mask(&atoms, &mask)).unwrap();
            lo += iv.lo;
            hi += iv.hi;
        }
        assert!(lo <= int(1) && int(1) <= hi);
    }
}
