//! Irrational rotations of the circle `R/Z` by quadratic irrationals,
//! regular closed partitions into arcs and the coding tree of iterated
//! common refinements.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, int, Rational};

/// `a + b√d` with `d` square-free; `d = 1` whenever `b = 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuadraticIrrational {
    a: Rational,
    b: Rational,
    d: u64,
}

fn square_free(d: u64) -> (u64, u64) {
    let (mut outer, mut inner) = (1u64, d);
    let mut p = 2u64;
    while p * p <= inner {
        while inner % (p * p) == 0 {
            inner /= p * p;
            outer *= p;
        }
        p += 1;
    }
    (outer, inner)
}

impl QuadraticIrrational {
    pub fn new(a: Rational, b: Rational, d: u64) -> Self {
        if b.is_zero() || d == 0 {
            return QuadraticIrrational { a, b: int(0), d: 1 };
        }
        let (outer, inner) = square_free(d);
        let b = b * int(outer as i64);
        if inner == 1 {
            return QuadraticIrrational { a: a + b, b: int(0), d: 1 };
        }
        QuadraticIrrational { a, b, d: inner }
    }

    pub fn rational(a: Rational) -> Self {
        QuadraticIrrational { a, b: int(0), d: 1 }
    }

    pub fn integer(n: i64) -> Self {
        Self::rational(int(n))
    }

    /// `(√5 - 1)/2`.
    pub fn golden() -> Self {
        Self::new(rational::ratio(-1, 2), rational::ratio(1, 2), 5)
    }

    pub fn rational_part(&self) -> &Rational {
        &self.a
    }

    pub fn surd_part(&self) -> (&Rational, u64) {
        (&self.b, self.d)
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    fn field(&self, other: &Self) -> u64 {
        match (self.is_rational(), other.is_rational()) {
            (true, _) => other.d,
            (_, true) => self.d,
            _ => {
                assert_eq!(self.d, other.d, "values from different quadratic fields");
                self.d
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let d = self.field(other);
        Self::new(&self.a + &other.a, &self.b + &other.b, d)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let d = self.field(other);
        Self::new(&self.a - &other.a, &self.b - &other.b, d)
    }

    pub fn scale(&self, q: &Rational) -> Self {
        Self::new(&self.a * q, &self.b * q, self.d)
    }

    /// Exact sign.
    pub fn signum(&self) -> i32 {
        let sa = sign(&self.a);
        let sb = sign(&self.b);
        if sb == 0 {
            return sa;
        }
        if sa == 0 || sa == sb {
            return sb;
        }
        // Opposite signs: compare a^2 with b^2 d.
        let a2 = &self.a * &self.a;
        let b2d = &self.b * &self.b * int(self.d as i64);
        match a2.cmp(&b2d) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => 0,
        }
    }

    pub fn to_f64(&self) -> f64 {
        rational::to_f64(&self.a) + rational::to_f64(&self.b) * (self.d as f64).sqrt()
    }

    pub fn floor(&self) -> BigInt {
        let mut n = BigInt::from(self.to_f64().floor() as i64);
        while self.sub(&Self::rational(Rational::from_integer(n.clone()))).signum() < 0 {
            n -= 1;
        }
        while self.sub(&Self::rational(Rational::from_integer(&n + 1))).signum() >= 0 {
            n += 1;
        }
        n
    }

    /// Representative in `[0, 1)`.
    pub fn frac(&self) -> Self {
        self.sub(&Self::rational(Rational::from_integer(self.floor())))
    }

    /// Parses forms such as `(-1+sqrt5)/2`, `sqrt(2)-1`, `(1+2*sqrt3)/7`,
    /// `1/3` or `0.25`.
    pub fn parse(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Parse(format!("not a quadratic irrational: {s:?}"));
        if s.is_empty() {
            return Err(bad());
        }
        let (inner, den) = match (s.starts_with('('), s.rfind(")/")) {
            (true, Some(i)) => (&s[1..i], rational::parse(&s[i + 2..])?),
            _ if s.starts_with('(') && s.ends_with(')') => (&s[1..s.len() - 1], int(1)),
            _ => (s.as_str(), int(1)),
        };
        if den.is_zero() {
            return Err(bad());
        }
        let mut terms = Vec::new();
        let mut start = 0;
        let bytes = inner.as_bytes();
        let mut depth = 0;
        for (i, &c) in bytes.iter().enumerate() {
            match c {
                b'(' => depth += 1,
                b')' => depth -= 1,
                b'+' | b'-' if i > 0 && depth == 0 && bytes[i - 1] != b'/' => {
                    terms.push(&inner[start..i]);
                    start = i;
                }
                _ => {}
            }
        }
        terms.push(&inner[start..]);
        let mut out = Self::integer(0);
        for term in terms {
            let term = term.strip_prefix('+').unwrap_or(term);
            let (neg, body) = match term.strip_prefix('-') {
                Some(t) => (true, t),
                None => (false, term),
            };
            let value = if let Some(i) = body.find("sqrt") {
                let coeff = body[..i].trim_end_matches('*');
                let coeff = if coeff.is_empty() { int(1) } else { rational::parse(coeff)? };
                let radicand = body[i + 4..].trim_start_matches('(').trim_end_matches(')');
                let d: u64 = radicand.parse().map_err(|_| bad())?;
                Self::new(int(0), coeff, d)
            } else {
                Self::rational(rational::parse(body)?)
            };
            let value = if neg { value.scale(&int(-1)) } else { value };
            if !value.is_rational() && !out.is_rational() && value.d != out.d {
                return Err(Error::Parse(format!("mixed square roots in {s:?}")));
            }
            out = out.add(&value);
        }
        Ok(out.scale(&(int(1) / den)))
    }
}

fn sign(q: &Rational) -> i32 {
    if q.is_positive() {
        1
    } else if q.is_negative() {
        -1
    } else {
        0
    }
}

impl Ord for QuadraticIrrational {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sub(other).signum().cmp(&0)
    }
}

impl PartialOrd for QuadraticIrrational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for QuadraticIrrational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            return write!(f, "{}", rational::format(&self.a));
        }
        let mag = self.b.abs();
        let coeff = if mag == int(1) { String::new() } else { format!("{}*", rational::format(&mag)) };
        let sign = if self.b.is_negative() { "-" } else if self.a.is_zero() { "" } else { "+" };
        if !self.a.is_zero() {
            write!(f, "{}", rational::format(&self.a))?;
        }
        write!(f, "{sign}{coeff}sqrt{}", self.d)
    }
}

impl Serialize for QuadraticIrrational {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for QuadraticIrrational {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        QuadraticIrrational::parse(&s).map_err(serde::de::Error::custom)
    }
}

type Point = QuadraticIrrational;

/// `(y - x) mod 1`, the counterclockwise length from `x` to `y`.
fn gap(x: &Point, y: &Point) -> Point {
    y.sub(x).frac()
}

/// Circle distance `min(|x - y| mod 1, 1 - ...)`.
pub fn circle_distance(x: &Point, y: &Point) -> Point {
    let g = gap(x, y);
    let h = Point::integer(1).sub(&g);
    if g <= h { g } else { h }
}

/// Cyclically ordered cut points with a member label on every elementary arc
/// `[cuts[i], cuts[i+1]]`. Adjacent arcs carry distinct labels unless the
/// partition has a single member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularClosedPartition {
    cuts: Vec<Point>,
    labels: Vec<usize>,
    members: usize,
}

impl RegularClosedPartition {
    /// Every arc between consecutive cuts is its own member.
    pub fn from_cuts(cuts: impl IntoIterator<Item = Point>) -> Result<Self> {
        let cuts: BTreeSet<Point> = cuts.into_iter().map(|c| c.frac()).collect();
        if cuts.is_empty() {
            return Err(Error::EmptySet("cut points"));
        }
        let cuts: Vec<Point> = cuts.into_iter().collect();
        let labels = (0..cuts.len()).collect();
        Ok(Self::normalized(cuts, labels))
    }

    /// `n` arcs of length `1/n` starting at `offset`.
    pub fn uniform(n: u64, offset: &Point) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("a partition needs at least one arc".into()));
        }
        Self::from_cuts((0..n).map(|j| offset.add(&Point::rational(rational::ratio(j as i64, n as i64)))))
    }

    /// `{[0, p], [p, 1]}`.
    pub fn two_arc(p: &Point) -> Result<Self> {
        Self::from_cuts([Point::integer(0), p.clone()])
    }

    fn normalized(cuts: Vec<Point>, labels: Vec<usize>) -> Self {
        let m = cuts.len();
        let keep: Vec<usize> = (0..m).filter(|&i| labels[(i + m - 1) % m] != labels[i]).collect();
        let keep = if keep.is_empty() { vec![0] } else { keep };
        let mut canon: BTreeMap<usize, usize> = BTreeMap::new();
        let mut new_labels = Vec::with_capacity(keep.len());
        for &i in &keep {
            let next = canon.len();
            new_labels.push(*canon.entry(labels[i]).or_insert(next));
        }
        RegularClosedPartition {
            cuts: keep.iter().map(|&i| cuts[i].clone()).collect(),
            labels: new_labels,
            members: canon.len(),
        }
    }

    pub fn cuts(&self) -> &[Point] {
        &self.cuts
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn member_count(&self) -> usize {
        self.members
    }

    pub fn arc_count(&self) -> usize {
        self.cuts.len()
    }

    pub fn arc_length(&self, i: usize) -> Point {
        if self.cuts.len() == 1 {
            return Point::integer(1);
        }
        gap(&self.cuts[i], &self.cuts[(i + 1) % self.cuts.len()])
    }

    /// Largest elementary arc length.
    pub fn mesh(&self) -> Point {
        (0..self.arc_count()).map(|i| self.arc_length(i)).max().expect("nonempty")
    }

    /// `∂P`: the cut points separating two members.
    pub fn boundary(&self) -> BTreeSet<Point> {
        if self.members == 1 {
            return BTreeSet::new();
        }
        self.cuts.iter().cloned().collect()
    }

    /// Arcs of member `m` as `(start, length)`.
    pub fn member_arcs(&self, m: usize) -> Vec<(Point, Point)> {
        (0..self.arc_count())
            .filter(|&i| self.labels[i] == m)
            .map(|i| (self.cuts[i].clone(), self.arc_length(i)))
            .collect()
    }

    pub fn member_measure(&self, m: usize) -> Point {
        self.member_arcs(m)
            .iter()
            .fold(Point::integer(0), |acc, (_, l)| acc.add(l))
    }

    /// Upper bound on the circle diameter of member `m`.
    pub fn member_diameter(&self, m: usize) -> Point {
        let arcs = self.member_arcs(m);
        let half = Point::rational(rational::ratio(1, 2));
        match arcs.as_slice() {
            [(_, l)] if l < &half => l.clone(),
            _ => half,
        }
    }

    /// Arc whose half-open span `[cuts[i], cuts[i+1])` contains `x`.
    fn arc_at(&self, x: &Point) -> usize {
        let x = x.frac();
        let i = self.cuts.partition_point(|c| c <= &x);
        if i == 0 {
            self.cuts.len() - 1
        } else {
            i - 1
        }
    }

    /// Members containing `x` (two on the boundary).
    pub fn members_at(&self, x: &Point) -> BTreeSet<usize> {
        let i = self.arc_at(x);
        let mut out = BTreeSet::from([self.labels[i]]);
        if self.cuts[i] == x.frac() {
            out.insert(self.labels[(i + self.cuts.len() - 1) % self.cuts.len()]);
        }
        out
    }

    /// `α_t(P)`, keeping member identities.
    pub fn rotate(&self, t: &Point) -> Self {
        let mut pairs: Vec<(Point, usize)> = self
            .cuts
            .iter()
            .zip(&self.labels)
            .map(|(c, &l)| (c.add(t).frac(), l))
            .collect();
        pairs.sort_by(|x, y| x.0.cmp(&y.0));
        let (cuts, labels) = pairs.into_iter().unzip();
        RegularClosedPartition { cuts, labels, members: self.members }
    }

    /// `⋁ P_i` with cells `cl int(C_1 ∩ ... ∩ C_n)`.
    pub fn join_all(parts: &[&RegularClosedPartition]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::EmptySet("partitions to join"));
        }
        let cuts: BTreeSet<Point> = parts.iter().flat_map(|p| p.cuts.iter().cloned()).collect();
        let cuts: Vec<Point> = cuts.into_iter().collect();
        let mut ids: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let labels = cuts
            .iter()
            .map(|c| {
                let key: Vec<usize> = parts.iter().map(|p| p.labels[p.arc_at(c)]).collect();
                let next = ids.len();
                *ids.entry(key).or_insert(next)
            })
            .collect();
        Ok(Self::normalized(cuts, labels))
    }

    pub fn join(&self, other: &RegularClosedPartition) -> Self {
        Self::join_all(&[self, other]).expect("two partitions")
    }

    /// The unique map `r` with `C ⊆ r(C)`, if `self` refines `coarse`.
    pub fn refinement_map(&self, coarse: &RegularClosedPartition) -> Option<Vec<usize>> {
        if coarse.members == 1 {
            return Some(vec![0; self.members]);
        }
        let mut map: Vec<Option<usize>> = vec![None; self.members];
        for i in 0..self.arc_count() {
            let c = &self.cuts[i];
            let j = coarse.arc_at(c);
            let offset = gap(&coarse.cuts[j], c);
            if offset.add(&self.arc_length(i)) > coarse.arc_length(j) {
                return None;
            }
            let target = coarse.labels[j];
            match map[self.labels[i]] {
                Some(t) if t != target => return None,
                _ => map[self.labels[i]] = Some(target),
            }
        }
        map.into_iter().collect()
    }
}

/// Rotation `x ↦ x + α` of `R/Z` with `α` a quadratic irrational.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rotation {
    pub alpha: QuadraticIrrational,
}

impl Rotation {
    pub fn new(alpha: QuadraticIrrational) -> Result<Self> {
        if alpha.is_rational() {
            return Err(Error::NotFree(format!("rational angle {alpha} has periodic points")));
        }
        Ok(Rotation { alpha: alpha.frac() })
    }

    pub fn golden() -> Self {
        Rotation::new(QuadraticIrrational::golden()).expect("irrational")
    }

    pub fn shift(&self, s: i64) -> Point {
        self.alpha.scale(&int(s)).frac()
    }

    pub fn act(&self, s: i64, x: &Point) -> Point {
        x.add(&self.shift(s)).frac()
    }
}

/// Per-level partitions `P_k`.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    /// `P_k` has `k + 1` arcs of equal length.
    Uniform,
    Fixed(RegularClosedPartition),
    Explicit(Vec<RegularClosedPartition>),
}

impl Schedule {
    pub fn partition(&self, k: usize) -> Result<RegularClosedPartition> {
        match self {
            Schedule::Uniform => RegularClosedPartition::uniform(k as u64 + 1, &Point::integer(0)),
            Schedule::Fixed(p) => Ok(p.clone()),
            Schedule::Explicit(ps) => ps
                .get(k - 1)
                .cloned()
                .ok_or_else(|| Error::Precondition(format!("no partition for level {k}"))),
        }
    }
}

/// `Q_1 = P_1`, `Q_{k+1} = P_{k+1} ∨ ⋁_{s ∈ F_k} α_s(Q_k)` with the
/// refinement maps `r_k : Q_{k+1} → Q_k`. Index `k - 1` holds level `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CodingTree {
    pub rotation: Rotation,
    pub p: Vec<RegularClosedPartition>,
    pub folner: Vec<Vec<i64>>,
    pub q: Vec<RegularClosedPartition>,
    pub r: Vec<Vec<usize>>,
}

pub fn build_refinement_sequence(
    rotation: &Rotation,
    schedule: &Schedule,
    folner: &[Vec<i64>],
    depth: usize,
) -> Result<CodingTree> {
    if depth == 0 {
        return Err(Error::Precondition("depth must be at least 1".into()));
    }
    let mut fs = Vec::new();
    for k in 1..depth {
        let f = folner
            .get(k - 1)
            .or(folner.last())
            .cloned()
            .ok_or_else(|| Error::Precondition("no Følner sets given".into()))?;
        let set: BTreeSet<i64> = f.iter().copied().collect();
        if !set.contains(&0) || set.iter().any(|s| !set.contains(&-s)) {
            return Err(Error::Precondition(format!("F_{k} = {f:?} must be symmetric and contain 0")));
        }
        fs.push(set.into_iter().collect::<Vec<_>>());
    }
    let mut p = vec![schedule.partition(1)?];
    let mut q = vec![p[0].clone()];
    let mut r = Vec::new();
    for k in 1..depth {
        let pk = schedule.partition(k + 1)?;
        let rotated: Vec<RegularClosedPartition> = fs[k - 1].iter().map(|&s| q[k - 1].rotate(&rotation.shift(s))).collect();
        let mut parts: Vec<&RegularClosedPartition> = vec![&pk];
        parts.extend(rotated.iter());
        let next = RegularClosedPartition::join_all(&parts)?;
        let map = next
            .refinement_map(&q[k - 1])
            .ok_or_else(|| Error::Verification(format!("Q_{} does not refine Q_{k}", k + 1)))?;
        r.push(map);
        p.push(pk);
        q.push(next);
    }
    for (k, (qk, pk)) in q.iter().zip(&p).enumerate() {
        if qk.refinement_map(pk).is_none() {
            return Err(Error::Verification(format!("Q_{} does not refine P_{}", k + 1, k + 1)));
        }
    }
    Ok(CodingTree { rotation: rotation.clone(), p, folner: fs, q, r })
}

impl CodingTree {
    pub fn depth(&self) -> usize {
        self.q.len()
    }

    /// `r_k^s : α_s(Q_{k+1}) → Q_k` on member indices of `Q_{k+1}`.
    pub fn r_shifted(&self, k: usize, s: i64) -> Option<Vec<usize>> {
        if k == 0 || k >= self.depth() || !self.folner[k - 1].contains(&s) {
            return None;
        }
        self.q[k].rotate(&self.rotation.shift(s)).refinement_map(&self.q[k - 1])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub checked: usize,
    pub failures: Vec<String>,
}

/// `r_k^{st} ∘ α_{st} ∘ r_{k+1} = r_k^s ∘ α_s ∘ r_{k+1}^t ∘ α_t` on every
/// member of `Q_{k+2}` wherever all maps are defined.
pub fn composition_check(tree: &CodingTree) -> CompositionReport {
    let mut checked = 0;
    let mut failures = Vec::new();
    for k in 1..tree.depth().saturating_sub(1) {
        let r_next = &tree.r[k];
        for &s in &tree.folner[k - 1] {
            for &t in &tree.folner[k] {
                if !tree.folner[k - 1].contains(&(s + t)) {
                    continue;
                }
                let (Some(r_st), Some(r_s), Some(r_t)) =
                    (tree.r_shifted(k, s + t), tree.r_shifted(k, s), tree.r_shifted(k + 1, t))
                else {
                    failures.push(format!("k={k}, s={s}, t={t}: a refinement map is missing"));
                    continue;
                };
                for c in 0..tree.q[k + 1].member_count() {
                    checked += 1;
                    if r_st[r_next[c]] != r_s[r_t[c]] && failures.len() < 16 {
                        failures.push(format!("k={k}, s={s}, t={t}, cell {c}"));
                    }
                }
            }
        }
    }
    CompositionReport { checked, failures }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub arcs: usize,
    pub members: usize,
    pub mesh: QuadraticIrrational,
    pub boundary: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FibreCensus {
    pub levels: Vec<LevelSummary>,
    /// `⋃_k ∂Q_k`, the points with more than one preimage at this depth.
    pub locus: Vec<QuadraticIrrational>,
    /// Endpoints accumulated by `E_{k+1} = ∂P_{k+1} ∪ ⋃_s α_s(E_k)`.
    pub accumulated: usize,
    pub locus_matches_endpoints: bool,
    #[serde(with = "rational::text")]
    pub lebesgue_measure: Rational,
    pub basis_checked: usize,
    pub basis_ok: bool,
}

pub fn fibre_census(tree: &CodingTree) -> FibreCensus {
    let mut locus: BTreeSet<Point> = BTreeSet::new();
    let mut levels = Vec::new();
    for (k, qk) in tree.q.iter().enumerate() {
        let boundary = qk.boundary();
        // Points lying in two members.
        for c in qk.cuts() {
            if qk.members_at(c).len() > 1 {
                locus.insert(c.clone());
            }
        }
        levels.push(LevelSummary {
            level: k + 1,
            arcs: qk.arc_count(),
            members: qk.member_count(),
            mesh: qk.mesh(),
            boundary: boundary.len(),
        });
    }
    let mut endpoints: BTreeSet<Point> = tree.p[0].boundary();
    for k in 1..tree.depth() {
        let mut next = tree.p[k].boundary();
        for &s in &tree.folner[k - 1] {
            let shift = tree.rotation.shift(s);
            next.extend(endpoints.iter().map(|e| e.add(&shift).frac()));
        }
        endpoints = next;
    }
    // π(W) ∩ π(Z \ W) for W over cells of Q_k is the topological boundary.
    let mut basis_checked = 0;
    let mut basis_ok = true;
    for qk in &tree.q {
        for m in 0..qk.member_count() {
            basis_checked += 1;
            for (start, len) in qk.member_arcs(m) {
                let end = start.add(&len).frac();
                for x in [start, end] {
                    let inside = qk.members_at(&x);
                    if inside.len() > 1 && !locus.contains(&x) {
                        basis_ok = false;
                    }
                }
            }
        }
    }
    FibreCensus {
        levels,
        accumulated: endpoints.len(),
        locus_matches_endpoints: locus == endpoints,
        locus: locus.into_iter().collect(),
        lebesgue_measure: int(0),
        basis_checked,
        basis_ok,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub sampled: usize,
    pub boundary_skipped: usize,
    pub singleton: usize,
    pub inconsistent: Vec<String>,
    pub separation_pairs: usize,
    pub separation_failures: usize,
}

/// The cell of `Q_k` containing `x` for every `k`, or `None` if `x` lies on
/// some `∂Q_k`.
pub fn itinerary(tree: &CodingTree, x: &QuadraticIrrational) -> Option<Vec<usize>> {
    let mut thread = Vec::with_capacity(tree.depth());
    for qk in &tree.q {
        let cells = qk.members_at(x);
        if cells.len() > 1 {
            return None;
        }
        thread.push(*cells.iter().next().expect("covered"));
    }
    Some(thread)
}

/// Follows every non-boundary point down the tree: its thread must be unique
/// and compatible with `r_k`, and points farther apart than the member
/// diameter bound must land in different deepest cells.
pub fn sample_codings(tree: &CodingTree, points: &[Rational]) -> SampleReport {
    let deepest = tree.q.last().expect("depth >= 1");
    let mut report = SampleReport {
        sampled: points.len(),
        boundary_skipped: 0,
        singleton: 0,
        inconsistent: Vec::new(),
        separation_pairs: 0,
        separation_failures: 0,
    };
    let mut coded: Vec<(Point, usize)> = Vec::new();
    for x in points {
        let x = Point::rational(x.clone()).frac();
        let Some(thread) = itinerary(tree, &x) else {
            report.boundary_skipped += 1;
            continue;
        };
        let mut ok = true;
        for k in 0..tree.depth() - 1 {
            if tree.r[k][thread[k + 1]] != thread[k] {
                ok = false;
            }
        }
        let cell = *thread.last().expect("depth >= 1");
        let inside = deepest
            .member_arcs(cell)
            .iter()
            .any(|(start, len)| gap(start, &x) < *len);
        if ok && inside {
            report.singleton += 1;
            coded.push((x, cell));
        } else if report.inconsistent.len() < 16 {
            report.inconsistent.push(x.to_string());
        }
    }
    coded.sort_by(|a, b| a.0.cmp(&b.0));
    for w in coded.windows(2) {
        let ((x, cx), (y, cy)) = (&w[0], &w[1]);
        if cx == cy && circle_distance(x, y) > deepest.member_diameter(*cx) {
            report.separation_failures += 1;
        }
        report.separation_pairs += 1;
    }
    report
}

/// Deterministic sample points `(j·p mod n + 1/2)/n` for `j < count`.
pub fn lattice_samples(count: usize) -> Vec<Rational> {
    let n: i64 = 100_003;
    let p: i64 = 7_919;
    (0..count as i64)
        .map(|j| rational::ratio(2 * ((j * p) % n) + 1, 2 * n))
        .collect()
}

/// Finite union of closed arcs `[start, start + length]` (points allowed).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcSet {
    pub arcs: Vec<(QuadraticIrrational, QuadraticIrrational)>,
}

impl ArcSet {
    /// Disjoint `[lo, hi]` pieces of `[0, 1]` covering the set.
    fn pieces(&self) -> Vec<(Point, Point)> {
        let one = Point::integer(1);
        let mut raw = Vec::new();
        for (s, l) in &self.arcs {
            if l >= &one {
                return vec![(Point::integer(0), one)];
            }
            let s = s.frac();
            let e = s.add(l);
            if e > one {
                raw.push((s, one.clone()));
                raw.push((Point::integer(0), e.sub(&one)));
            } else {
                raw.push((s, e));
            }
        }
        raw.sort();
        let mut merged: Vec<(Point, Point)> = Vec::new();
        for (s, e) in raw {
            match merged.last_mut() {
                Some((_, pe)) if s <= *pe => {
                    if e > *pe {
                        *pe = e;
                    }
                }
                _ => merged.push((s, e)),
            }
        }
        merged
    }

    pub fn measure(&self) -> QuadraticIrrational {
        self.pieces()
            .iter()
            .fold(Point::integer(0), |acc, (s, e)| acc.add(&e.sub(s)))
    }

    /// Connected components on the circle.
    pub fn components(&self) -> usize {
        let p = self.pieces();
        let wraps = p.len() > 1
            && p[0].0 == Point::integer(0)
            && p.last().expect("nonempty").1 == Point::integer(1);
        p.len() - usize::from(wraps)
    }
}

/// `δ = ε / (2·#components)` and `A_+ = {x : d(x, A) ≤ δ}`, so that
/// `Leb(A_+) ≤ Leb(A) + ε`.
pub fn portmanteau_fatten(a: &ArcSet, eps: &Rational) -> Result<(Rational, ArcSet)> {
    if eps <= &int(0) {
        return Err(Error::Precondition("ε must be positive".into()));
    }
    let n = a.components().max(1);
    let delta = eps / int(2 * n as i64);
    let d = Point::rational(delta.clone());
    let plus = ArcSet {
        arcs: a
            .arcs
            .iter()
            .map(|(s, l)| (s.sub(&d), l.add(&d).add(&d)))
            .collect(),
    };
    let bound = a.measure().add(&Point::rational(eps.clone()));
    if plus.measure() > bound {
        return Err(Error::Verification("fattened set exceeds Leb(A) + ε".into()));
    }
    Ok((delta, plus))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenCover {
    /// Open arcs `(start, start + length)`.
    pub arcs: Vec<(QuadraticIrrational, QuadraticIrrational)>,
    /// The finite complement.
    pub complement: Vec<QuadraticIrrational>,
    pub max_length: QuadraticIrrational,
    #[serde(with = "rational::text")]
    pub complement_measure: Rational,
}

/// Interiors of the `⌈1/ε⌉` uniform arcs starting at `offset`: pairwise
/// disjoint, of diameter at most `ε`, missing only finitely many points.
pub fn disjoint_open_cover(eps: &Rational, offset: &QuadraticIrrational) -> Result<OpenCover> {
    if eps <= &int(0) {
        return Err(Error::Precondition("ε must be positive".into()));
    }
    let n = rational::ceil_u64(&(int(1) / eps)).max(1);
    let p = RegularClosedPartition::uniform(n, offset)?;
    let arcs: Vec<(Point, Point)> = (0..p.arc_count()).map(|i| (p.cuts()[i].clone(), p.arc_length(i))).collect();
    let max_length = p.mesh();
    if max_length > Point::rational(eps.clone()) {
        return Err(Error::Verification("an arc is longer than ε".into()));
    }
    Ok(OpenCover { arcs, complement: p.cuts().to_vec(), max_length, complement_measure: int(0) })
}
