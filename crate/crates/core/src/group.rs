//! Finitely generated amenable groups with computable normal forms.
//!
//! Two families are supported: free abelian groups `Z^d` (elements are integer
//! vectors) and the discrete Heisenberg group in the normal form
//! `(a, b, c)(a', b', c') = (a + a', b + b', c + c' + a b')`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GroupDescriptor {
    FreeAbelian { rank: usize },
    Heisenberg,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(pub Vec<i64>);

impl GroupElement {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        GroupElement(coords.into())
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Sup norm of the coordinate vector.
    pub fn max_abs(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            write!(f, "{}", self.0[0])
        } else {
            let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
            write!(f, "({})", parts.join(","))
        }
    }
}

/// A finite subset in canonical (lexicographic) order.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FiniteSubset(pub BTreeSet<GroupElement>);

impl FiniteSubset {
    pub fn new() -> Self {
        FiniteSubset(BTreeSet::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &GroupElement> + '_ {
        self.0.iter()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.0.contains(g)
    }

    pub fn insert(&mut self, g: GroupElement) -> bool {
        self.0.insert(g)
    }

    pub fn union(&self, other: &FiniteSubset) -> FiniteSubset {
        FiniteSubset(self.0.union(&other.0).cloned().collect())
    }

    pub fn intersection(&self, other: &FiniteSubset) -> FiniteSubset {
        FiniteSubset(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn difference(&self, other: &FiniteSubset) -> FiniteSubset {
        FiniteSubset(self.0.difference(&other.0).cloned().collect())
    }

    pub fn symmetric_difference(&self, other: &FiniteSubset) -> FiniteSubset {
        FiniteSubset(self.0.symmetric_difference(&other.0).cloned().collect())
    }

    pub fn is_subset(&self, other: &FiniteSubset) -> bool {
        self.0.is_subset(&other.0)
    }

    /// Parses `"-1;1"` (rank one), `"1,0;0,1"` style element lists and
    /// rank-one ranges `"-8..=8"` or `"0..4"`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut out = FiniteSubset::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let part = part.trim_start_matches('(').trim_end_matches(')');
            if let Some((lo, hi)) = part.split_once("..") {
                let (inclusive, hi) = match hi.strip_prefix('=') {
                    Some(h) => (true, h),
                    None => (false, hi),
                };
                let bound = |t: &str| {
                    i64::from_str(t.trim()).map_err(|_| Error::Parse(format!("bad range {part:?}")))
                };
                let (lo, hi) = (bound(lo)?, bound(hi)?);
                let hi = if inclusive { hi + 1 } else { hi };
                for x in lo..hi {
                    out.insert(GroupElement(vec![x]));
                }
                continue;
            }
            let coords = part
                .split(',')
                .map(|c| {
                    i64::from_str(c.trim())
                        .map_err(|_| Error::Parse(format!("bad group element {part:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            out.insert(GroupElement(coords));
        }
        Ok(out)
    }
}

impl FromIterator<GroupElement> for FiniteSubset {
    fn from_iter<I: IntoIterator<Item = GroupElement>>(iter: I) -> Self {
        FiniteSubset(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a FiniteSubset {
    type Item = &'a GroupElement;
    type IntoIter = std::collections::btree_set::Iter<'a, GroupElement>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl FromStr for GroupDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "heisenberg" || t == "h3" {
            return Ok(GroupDescriptor::Heisenberg);
        }
        if t == "z" {
            return Ok(GroupDescriptor::FreeAbelian { rank: 1 });
        }
        if let Some(rank) = t.strip_prefix("z^") {
            let rank: usize = rank
                .parse()
                .map_err(|_| Error::Parse(format!("bad group descriptor {s:?}")))?;
            if rank == 0 {
                return Err(Error::Parse("Z^d needs d >= 1".into()));
            }
            return Ok(GroupDescriptor::FreeAbelian { rank });
        }
        Err(Error::Parse(format!("unknown group {s:?}")))
    }
}

impl fmt::Display for GroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupDescriptor::FreeAbelian { rank: 1 } => write!(f, "Z"),
            GroupDescriptor::FreeAbelian { rank } => write!(f, "Z^{rank}"),
            GroupDescriptor::Heisenberg => write!(f, "heisenberg"),
        }
    }
}

impl GroupDescriptor {
    pub fn z(rank: usize) -> Self {
        GroupDescriptor::FreeAbelian { rank }
    }

    pub fn arity(&self) -> usize {
        match self {
            GroupDescriptor::FreeAbelian { rank } => *rank,
            GroupDescriptor::Heisenberg => 3,
        }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(vec![0; self.arity()])
    }

    pub fn check(&self, g: &GroupElement) -> Result<()> {
        if g.0.len() != self.arity() {
            return Err(Error::GroupMismatch(format!(
                "element {g} has {} coordinates, {self} needs {}",
                g.0.len(),
                self.arity()
            )));
        }
        Ok(())
    }

    pub fn check_set(&self, s: &FiniteSubset) -> Result<()> {
        s.iter().try_for_each(|g| self.check(g))
    }

    pub fn multiply(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        Ok(self.mul(g, h))
    }

    /// Unchecked product; callers guarantee matching arity.
    pub(crate) fn mul(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        match self {
            GroupDescriptor::FreeAbelian { .. } => {
                GroupElement(g.0.iter().zip(&h.0).map(|(a, b)| a + b).collect())
            }
            GroupDescriptor::Heisenberg => {
                let (a, b, c) = (g.0[0], g.0[1], g.0[2]);
                let (a2, b2, c2) = (h.0[0], h.0[1], h.0[2]);
                GroupElement(vec![a + a2, b + b2, c + c2 + a * b2])
            }
        }
    }

    pub fn inverse(&self, g: &GroupElement) -> GroupElement {
        match self {
            GroupDescriptor::FreeAbelian { .. } => GroupElement(g.0.iter().map(|a| -a).collect()),
            GroupDescriptor::Heisenberg => {
                let (a, b, c) = (g.0[0], g.0[1], g.0[2]);
                GroupElement(vec![-a, -b, -c + a * b])
            }
        }
    }

    /// Standard symmetric generating set (unit vectors and their inverses).
    pub fn generators(&self) -> Vec<GroupElement> {
        let basis = match self {
            GroupDescriptor::FreeAbelian { rank } => *rank,
            GroupDescriptor::Heisenberg => 2,
        };
        let mut gens = Vec::new();
        for i in 0..basis {
            let mut e = self.identity();
            e.0[i] = 1;
            gens.push(self.inverse(&e));
            gens.push(e);
        }
        gens
    }

    /// `{ k f : k in K, f in F }`.
    pub fn product_set(&self, left: &FiniteSubset, right: &FiniteSubset) -> FiniteSubset {
        let mut out = BTreeSet::new();
        for k in left {
            for f in right {
                out.insert(self.mul(k, f));
            }
        }
        FiniteSubset(out)
    }

    pub fn inverse_set(&self, s: &FiniteSubset) -> FiniteSubset {
        s.iter().map(|g| self.inverse(g)).collect()
    }

    /// `F^{-1} F`.
    pub fn difference_set(&self, s: &FiniteSubset) -> FiniteSubset {
        self.product_set(&self.inverse_set(s), s)
    }

    pub fn left_translate(&self, g: &GroupElement, s: &FiniteSubset) -> FiniteSubset {
        s.iter().map(|h| self.mul(g, h)).collect()
    }

    pub fn right_translate(&self, s: &FiniteSubset, g: &GroupElement) -> FiniteSubset {
        s.iter().map(|h| self.mul(h, g)).collect()
    }

    /// Closed word-metric ball of radius `r` around the identity.
    pub fn ball(&self, r: u32) -> FiniteSubset {
        let gens = self.generators();
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(self.identity());
        queue.push_back((self.identity(), 0u32));
        while let Some((g, d)) = queue.pop_front() {
            if d == r {
                continue;
            }
            for s in &gens {
                let h = self.mul(&g, s);
                if seen.insert(h.clone()) {
                    queue.push_back((h, d + 1));
                }
            }
        }
        FiniteSubset(seen)
    }

    /// The box `[0, n)^d` for `Z^d`.
    pub fn box_set(&self, n: u64) -> FiniteSubset {
        let d = self.arity();
        let mut out = BTreeSet::new();
        let total = (n as u128).pow(d as u32);
        for idx in 0..total {
            let mut rest = idx;
            let mut coords = vec![0i64; d];
            for c in coords.iter_mut().rev() {
                *c = (rest % n as u128) as i64;
                rest /= n as u128;
            }
            out.insert(GroupElement(coords));
        }
        FiniteSubset(out)
    }

    /// The box `[lo, hi)^d`.
    pub fn interval_box(&self, lo: i64, hi: i64) -> FiniteSubset {
        let shift = GroupElement(vec![lo; self.arity()]);
        self.right_translate(&self.box_set((hi - lo).max(0) as u64), &shift)
    }

    pub fn folner(&self) -> FolnerFamily {
        FolnerFamily { descriptor: *self }
    }

    /// `|K F Δ F| / |F|`.
    pub fn invariance_defect(&self, f: &FiniteSubset, k: &FiniteSubset) -> Result<Rational> {
        if f.is_empty() {
            return Err(Error::EmptySet("invariance defect of an empty set"));
        }
        self.check_set(f)?;
        self.check_set(k)?;
        let kf = self.product_set(k, f);
        let sym = kf.0.symmetric_difference(&f.0).count();
        Ok(rational::ratio(sym as i64, f.len() as i64))
    }

    pub fn is_invariant(&self, f: &FiniteSubset, k: &FiniteSubset, delta: &Rational) -> Result<bool> {
        Ok(&self.invariance_defect(f, k)? < delta)
    }

    /// Scans the Følner family for a set `F` with `|F^{-1}F| <= c|F|` such
    /// that both `F` and `F^{-1}F` are `(K, delta)`-invariant.
    pub fn property_star_search(
        &self,
        k: &FiniteSubset,
        delta: &Rational,
        c: &Rational,
        index_bound: u64,
    ) -> Result<FiniteSubset> {
        if delta <= &Rational::zero() {
            return Err(Error::Precondition("delta must be positive".into()));
        }
        if c <= &rational::int(1) {
            return Err(Error::NotFound(format!(
                "c = {} admits no infinite-family witness",
                rational::format(c)
            )));
        }
        let family = self.folner();
        for index in 1..=index_bound {
            let f = family.member(index);
            let ff = self.difference_set(&f);
            if rational::int(ff.len() as i64) > c * rational::int(f.len() as i64) {
                continue;
            }
            if self.is_invariant(&f, k, delta)? && self.is_invariant(&ff, k, delta)? {
                return Ok(f);
            }
        }
        Err(Error::NotFound(format!(
            "no family member up to index {index_bound} satisfies property (*) with c = {}",
            rational::format(c)
        )))
    }
}

/// An `epsilon` such that every subset `F'` of a `(K, epsilon)`-invariant set
/// `F` with `|F'| >= (1 - epsilon)|F|` is `(K, delta)`-invariant.
///
/// Uses `epsilon = min(delta, 1/2) / (2|K| + 2)`; from
/// `|KF' Δ F'| <= |KF Δ F| + (|K| + 1)|F \ F'|` one gets a defect of at most
/// `epsilon (|K| + 2) / (1 - epsilon) < delta`.
pub fn almost_invariant_margin(k: &FiniteSubset, delta: &Rational) -> Rational {
    let half = rational::ratio(1, 2);
    let d = if delta < &half { delta.clone() } else { half };
    d / rational::int(2 * k.len() as i64 + 2)
}

/// Boxes `[0, n)^d` for `Z^d`, word balls for the Heisenberg group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FolnerFamily {
    pub descriptor: GroupDescriptor,
}

impl FolnerFamily {
    pub fn member(&self, index: u64) -> FiniteSubset {
        match self.descriptor {
            GroupDescriptor::FreeAbelian { .. } => self.descriptor.box_set(index.max(1)),
            GroupDescriptor::Heisenberg => self.descriptor.ball(index as u32),
        }
    }

    /// First index whose member is `(K, delta)`-invariant.
    pub fn first_invariant(&self, k: &FiniteSubset, delta: &Rational, bound: u64) -> Result<u64> {
        for index in 1..=bound {
            let f = self.member(index);
            if self.descriptor.is_invariant(&f, k, delta)? {
                return Ok(index);
            }
        }
        Err(Error::FolnerExhausted(format!(
            "no member up to index {bound} is ({}, {})-invariant",
            set_display(k),
            rational::format(delta)
        )))
    }
}

pub fn set_display(s: &FiniteSubset) -> String {
    let parts: Vec<String> = s.iter().map(|g| g.to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn z(n: i64) -> GroupElement {
        GroupElement(vec![n])
    }

    #[test]
    fn z2_multiplication() {
        let g = GroupDescriptor::z(2);
        let p = g
            .multiply(&GroupElement(vec![1, 2]), &GroupElement(vec![3, 4]))
            .unwrap();
        assert_eq!(p, GroupElement(vec![4, 6]));
        assert!(g.multiply(&z(1), &GroupElement(vec![1, 2])).is_err());
    }

    #[test]
    fn heisenberg_normal_form() {
        let h = GroupDescriptor::Heisenberg;
        let p = h
            .multiply(&GroupElement(vec![1, 0, 0]), &GroupElement(vec![0, 1, 0]))
            .unwrap();
        assert_eq!(p, GroupElement(vec![1, 1, 1]));
        let q = h
            .multiply(&GroupElement(vec![0, 1, 0]), &GroupElement(vec![1, 0, 0]))
            .unwrap();
        assert_eq!(q, GroupElement(vec![1, 1, 0]));
    }

    #[test]
    fn heisenberg_associative_on_small_cube() {
        let h = GroupDescriptor::Heisenberg;
        let cube: Vec<GroupElement> = (-2..=2)
            .flat_map(|a| (-2..=2).flat_map(move |b| (-2..=2).map(move |c| GroupElement(vec![a, b, c]))))
            .collect();
        let sample: Vec<&GroupElement> = cube.iter().step_by(7).collect();
        for x in &sample {
            for y in &sample {
                for w in &sample {
                    let l = h.mul(&h.mul(x, y), w);
                    let r = h.mul(x, &h.mul(y, w));
                    assert_eq!(l, r);
                }
            }
            assert!(h.mul(x, &h.inverse(x)).is_zero());
        }
    }

    #[test]
    fn defect_of_interval() {
        let g = GroupDescriptor::z(1);
        let f = g.box_set(10);
        let k = FiniteSubset::parse("-1;0;1").unwrap();
        assert_eq!(g.invariance_defect(&f, &k).unwrap(), ratio(2, 10));
        let e = FiniteSubset::parse("0").unwrap();
        assert_eq!(g.invariance_defect(&f, &e).unwrap(), ratio(0, 1));
        assert!(g.invariance_defect(&FiniteSubset::new(), &k).is_err());
    }

    #[test]
    fn z_balls() {
        let g = GroupDescriptor::z(1);
        assert_eq!(g.ball(0), FiniteSubset::parse("0").unwrap());
        let b3 = g.ball(3);
        assert_eq!(b3.len(), 7);
        assert_eq!(b3, g.interval_box(-3, 4));
    }

    #[test]
    fn property_star_rejects_c_one() {
        let g = GroupDescriptor::z(1);
        let k = FiniteSubset::parse("-1;1").unwrap();
        assert!(matches!(
            g.property_star_search(&k, &ratio(1, 10), &ratio(1, 1), 100),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn property_star_on_z() {
        let g = GroupDescriptor::z(1);
        let k = FiniteSubset::parse("-1;1").unwrap();
        let f = g
            .property_star_search(&k, &ratio(1, 10), &ratio(21, 10), 200)
            .unwrap();
        // 2/n < 1/10 first holds at n = 21
        assert_eq!(f, g.box_set(21));
    }

    #[test]
    fn parse_descriptors() {
        assert_eq!("Z^2".parse::<GroupDescriptor>().unwrap(), GroupDescriptor::z(2));
        assert_eq!("heisenberg".parse::<GroupDescriptor>().unwrap(), GroupDescriptor::Heisenberg);
        assert!("Z^0".parse::<GroupDescriptor>().is_err());
        assert!("SL2".parse::<GroupDescriptor>().is_err());
    }
}
