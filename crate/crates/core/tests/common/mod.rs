//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the library's set algebra: odometer points are residue tuples and
//! every check is a direct enumeration.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};

use castleforge::comparison::SubequivalenceWitness;
use castleforge::dynsys::ClopenSet;
use castleforge::group::{FiniteSubset, GroupElement};
use castleforge::tiling::Castle;
use num_bigint::BigInt;
use num_rational::BigRational;

pub type Q = BigRational;

pub fn q(p: i64, d: i64) -> Q {
    Q::new(BigInt::from(p), BigInt::from(d))
}

/// `Z^d` odometer as residue tuples.
#[derive(Clone, Debug)]
pub struct Residues {
    pub bases: Vec<Vec<u64>>,
}

impl Residues {
    pub fn dyadic() -> Self {
        Residues { bases: vec![vec![2]] }
    }

    pub fn grid(&self, level: u32) -> Vec<u64> {
        self.bases
            .iter()
            .map(|seq| (0..level).map(|i| seq[i as usize % seq.len()]).product())
            .collect()
    }

    /// All points of the level-`level` quotient.
    pub fn points(&self, level: u32) -> Vec<Vec<u64>> {
        let grid = self.grid(level);
        let mut out = vec![Vec::new()];
        for &n in &grid {
            out = out
                .into_iter()
                .flat_map(|p| (0..n).map(move |r| {
                    let mut p = p.clone();
                    p.push(r);
                    p
                }))
                .collect();
        }
        out
    }

    pub fn shift(&self, x: &[u64], g: &GroupElement, level: u32) -> Vec<u64> {
        let grid = self.grid(level);
        x.iter()
            .zip(g.coords())
            .zip(&grid)
            .map(|((&r, &s), &n)| (r as i128 + s as i128).rem_euclid(n as i128) as u64)
            .collect()
    }

    /// Whether the point `x` (at any level at least the set's) lies in `a`.
    pub fn contains(&self, a: &ClopenSet, x: &[u64]) -> bool {
        let ClopenSet::Grid { level, atoms } = a else {
            panic!("odometer oracle needs grid sets");
        };
        let grid = self.grid(*level);
        let index = x.iter().zip(&grid).fold(0u64, |acc, (&r, &n)| acc * n + r % n);
        atoms.contains(&index)
    }

    pub fn measure(&self, a: &ClopenSet, level: u32) -> Q {
        let pts = self.points(level);
        let hits = pts.iter().filter(|x| self.contains(a, x)).count();
        q(hits as i64, pts.len() as i64)
    }
}

pub fn set_level(a: &ClopenSet) -> u32 {
    match a {
        ClopenSet::Grid { level, .. } => *level,
        ClopenSet::Window { .. } => panic!("grid set expected"),
    }
}

pub fn neg(g: &GroupElement) -> GroupElement {
    GroupElement::new(g.coords().iter().map(|c| -c).collect::<Vec<_>>())
}

fn level_of_castle(castle: &Castle) -> u32 {
    castle.towers.iter().map(|t| set_level(&t.base)).max().unwrap_or(0)
}

/// Number of castle levels containing each point of the level-`level` quotient.
pub fn level_counts(o: &Residues, castle: &Castle, level: u32) -> HashMap<Vec<u64>, u32> {
    let pts = o.points(level);
    let mut counts: HashMap<Vec<u64>, u32> = pts.iter().map(|x| (x.clone(), 0)).collect();
    for t in &castle.towers {
        for b in pts.iter().filter(|x| o.contains(&t.base, x)) {
            for s in t.shape.iter() {
                *counts.get_mut(&o.shift(b, s, level)).expect("closed under shifts") += 1;
            }
        }
    }
    counts
}

/// Why a castle fails disjointness or nonemptiness, checked point by point.
pub fn castle_violation(o: &Residues, castle: &Castle) -> Option<String> {
    let level = level_of_castle(castle);
    let pts = o.points(level);
    for (ti, t) in castle.towers.iter().enumerate() {
        if t.shape.is_empty() || !pts.iter().any(|x| o.contains(&t.base, x)) {
            return Some(format!("tower {ti} is empty"));
        }
    }
    level_counts(o, castle, level)
        .into_iter()
        .find(|(_, c)| *c > 1)
        .map(|(x, c)| format!("point {x:?} lies in {c} levels"))
}

pub fn footprint_points(o: &Residues, castle: &Castle, level: u32) -> BTreeSet<Vec<u64>> {
    level_counts(o, castle, level).into_iter().filter(|(_, c)| *c > 0).map(|(x, _)| x).collect()
}

/// Why a witness fails: pieces must partition the source and the moved
/// pieces must be disjoint (per color) inside the target.
pub fn witness_violation(o: &Residues, w: &SubequivalenceWitness) -> Option<String> {
    let level = std::iter::once(&w.source)
        .chain(std::iter::once(&w.target))
        .chain(w.pieces.iter().map(|p| &p.set))
        .map(set_level)
        .max()
        .unwrap_or(0);
    let mut images: HashSet<(u32, Vec<u64>)> = HashSet::new();
    for x in o.points(level) {
        let owners = w.pieces.iter().filter(|p| o.contains(&p.set, &x)).count();
        let in_source = o.contains(&w.source, &x);
        if in_source && owners != 1 {
            return Some(format!("source point {x:?} lies in {owners} pieces"));
        }
        if !in_source && owners > 0 {
            return Some(format!("piece point {x:?} is outside the source"));
        }
        for p in w.pieces.iter().filter(|p| o.contains(&p.set, &x)) {
            let y = o.shift(&x, &p.mover, level);
            if !o.contains(&w.target, &y) {
                return Some(format!("{x:?} moves to {y:?} outside the target"));
            }
            if !images.insert((p.color, y.clone())) {
                return Some(format!("two pieces of color {} reach {y:?}", p.color));
            }
        }
    }
    None
}

pub fn add(a: &GroupElement, b: &GroupElement) -> GroupElement {
    GroupElement::new(a.coords().iter().zip(b.coords()).map(|(x, y)| x + y).collect::<Vec<_>>())
}

/// `|KF Δ F| / |F|` in `Z^d` by hashing.
pub fn defect(f: &FiniteSubset, k: &FiniteSubset) -> Q {
    let fs: HashSet<&GroupElement> = f.iter().collect();
    let kf: HashSet<GroupElement> = k.iter().flat_map(|a| f.iter().map(move |b| add(a, b))).collect();
    let only_kf = kf.iter().filter(|x| !fs.contains(x)).count();
    let only_f = f.iter().filter(|x| !kf.contains(*x)).count();
    q((only_kf + only_f) as i64, f.len() as i64)
}

/// Maximum bipartite matching by simple augmenting paths.
pub fn kuhn(adj: &[Vec<usize>], right: usize) -> usize {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; right];
    (0..adj.len())
        .filter(|&u| augment(u, adj, &mut vec![false; right], &mut owner))
        .count()
}

pub fn elems(xs: &[i64]) -> FiniteSubset {
    xs.iter().map(|&x| GroupElement::new([x])).collect()
}

pub fn range(lo: i64, hi: i64) -> FiniteSubset {
    (lo..hi).map(|x| GroupElement::new([x])).collect()
}
