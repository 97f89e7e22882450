//! Towers, castles and the Ornstein–Weiss machinery on zero-dimensional systems.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::density;
use crate::dynsys::{Atoms, ClopenSet, Frame, SymbolicSystem};
use crate::error::{Error, Result};
use crate::group::{
    almost_invariant_margin, set_display, FiniteSubset, FolnerFamily, GroupDescriptor, GroupElement,
};
use crate::rational::{self, int, Interval, Rational};

#[derive(Clone, Debug, PartialEq)]
pub struct Tower {
    pub base: ClopenSet,
    pub shape: FiniteSubset,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Castle {
    pub towers: Vec<Tower>,
    /// Parameters and notes recorded by the construction that produced it.
    pub provenance: BTreeMap<String, String>,
}

impl Castle {
    pub fn new(towers: Vec<Tower>) -> Self {
        Castle { towers, provenance: BTreeMap::new() }
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.provenance.insert(key.to_string(), value.into());
    }

    pub fn level_count(&self) -> usize {
        self.towers.iter().map(|t| t.shape.len()).sum()
    }

    /// Frame fine enough to express every level `sV`.
    pub fn level_frame(&self, sys: &SymbolicSystem) -> Frame {
        let mut frame = sys.level_frame(0);
        for t in &self.towers {
            for s in t.shape.iter() {
                frame = sys.join(frame, sys.translate_frame(t.base.frame(), s));
            }
        }
        frame
    }

    /// Number of levels covering each atom of `atoms`.
    pub fn occupancy(&self, sys: &SymbolicSystem, atoms: &Atoms) -> Result<Vec<u32>> {
        let mut occ = vec![0u32; atoms.len()];
        for t in &self.towers {
            for s in t.shape.iter() {
                for i in sys.indices_in(&sys.translate(&t.base, s), atoms)? {
                    occ[i] += 1;
                }
            }
        }
        Ok(occ)
    }

    pub fn footprint(&self, sys: &SymbolicSystem) -> Result<ClopenSet> {
        let atoms = sys.atoms(self.level_frame(sys))?;
        let occ = self.occupancy(sys, &atoms)?;
        let mask: Vec<bool> = occ.iter().map(|&c| c > 0).collect();
        Ok(sys.from_mask(&atoms, &mask))
    }

    pub fn remainder(&self, sys: &SymbolicSystem) -> Result<ClopenSet> {
        sys.complement(&self.footprint(sys)?)
    }

    pub fn density(&self, sys: &SymbolicSystem) -> Result<Interval> {
        sys.measure(&self.footprint(sys)?)
    }

    /// Merges towers with equal shapes (their levels stay disjoint).
    pub fn merged(&self, sys: &SymbolicSystem) -> Result<Castle> {
        let mut by_shape: BTreeMap<FiniteSubset, Vec<&ClopenSet>> = BTreeMap::new();
        for t in &self.towers {
            by_shape.entry(t.shape.clone()).or_default().push(&t.base);
        }
        let mut towers = Vec::with_capacity(by_shape.len());
        for (shape, bases) in by_shape {
            towers.push(Tower { base: sys.union_all(bases)?, shape });
        }
        Ok(Castle { towers, provenance: self.provenance.clone() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub atom: String,
    pub first: (usize, GroupElement),
    pub second: (usize, GroupElement),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CastleReport {
    pub disjoint: bool,
    pub collisions: Vec<Collision>,
    pub empty_bases: Vec<usize>,
    pub density: Interval,
    /// Invariance defect of each shape, when a `K` was supplied.
    pub defects: Vec<String>,
    pub max_defect: Option<String>,
}

impl CastleReport {
    pub fn valid(&self) -> bool {
        self.disjoint && self.empty_bases.is_empty()
    }
}

/// Independent check of a castle: levels pairwise disjoint, bases nonempty,
/// exact footprint density and (optionally) shape defects against `K`.
pub fn verify_castle(
    sys: &SymbolicSystem,
    castle: &Castle,
    k: Option<&FiniteSubset>,
) -> Result<CastleReport> {
    let g = sys.descriptor();
    let atoms = sys.atoms(castle.level_frame(sys))?;
    let mut owner: Vec<Option<(usize, GroupElement)>> = vec![None; atoms.len()];
    let mut collisions = Vec::new();
    let mut empty_bases = Vec::new();
    for (ti, t) in castle.towers.iter().enumerate() {
        g.check_set(&t.shape)?;
        if t.base.is_empty() || t.shape.is_empty() {
            empty_bases.push(ti);
        }
        for s in t.shape.iter() {
            for i in sys.indices_in(&sys.translate(&t.base, s), &atoms)? {
                match &owner[i] {
                    Some(prev) => {
                        if collisions.len() < 16 {
                            collisions.push(Collision {
                                atom: sys.format_atom(&atoms, i),
                                first: prev.clone(),
                                second: (ti, s.clone()),
                            });
                        }
                    }
                    None => owner[i] = Some((ti, s.clone())),
                }
            }
        }
    }
    let mask: Vec<bool> = owner.iter().map(Option::is_some).collect();
    let density = sys.measure(&sys.from_mask(&atoms, &mask))?;
    let mut defects = Vec::new();
    let mut max_defect: Option<Rational> = None;
    if let Some(k) = k {
        for t in &castle.towers {
            if t.shape.is_empty() {
                continue;
            }
            let d = g.invariance_defect(&t.shape, k)?;
            defects.push(rational::format(&d));
            if max_defect.as_ref().is_none_or(|m| &d > m) {
                max_defect = Some(d);
            }
        }
    }
    Ok(CastleReport {
        disjoint: collisions.is_empty(),
        collisions,
        empty_bases,
        density,
        defects,
        max_defect: max_defect.map(|d| rational::format(&d)),
    })
}

fn check_eps(eps: &Rational) -> Result<()> {
    if eps <= &int(0) || eps >= &rational::ratio(1, 2) {
        return Err(Error::Precondition(format!(
            "castle step needs 0 < ε < 1/2, got {}",
            rational::format(eps)
        )));
    }
    Ok(())
}

fn large_enough(t: usize, s: usize, eps: &Rational) -> bool {
    int(t as i64) >= (int(1) - eps) * int(s as i64)
}

/// One clopen castle step: towers `(V, T)` with
/// `T ⊆ S`, `|T| >= (1-ε)|S|`, footprint `A` disjoint from `Y`,
/// `Y ∪ A = Y ∪ ⋃ S V` and `|(Y ∪ A) ∩ Sx| >= ε|S|` at every atom.
///
/// Base atoms are processed one by one in canonical order; each piece of an
/// atom gets `T = {s : s·piece ∩ A = ∅}` against the footprint built so far.
pub fn clopen_castle_step(
    sys: &SymbolicSystem,
    y: &ClopenSet,
    s: &FiniteSubset,
    eps: &Rational,
    level: u32,
) -> Result<Castle> {
    check_eps(eps)?;
    if s.is_empty() {
        return Err(Error::EmptySet("castle step shape"));
    }
    let g = sys.descriptor();
    g.check_set(s)?;
    let needed = sys.freeness_level(&g.difference_set(s))?;
    if level < needed {
        return Err(Error::LevelTooCoarse(format!(
            "level {level} is below the freeness level {needed} of S^-1 S"
        )));
    }
    castle_step_at(sys, y, s, eps, level)
}

/// Castle step at a level already known to be at least the freeness level.
fn castle_step_at(
    sys: &SymbolicSystem,
    y: &ClopenSet,
    s: &FiniteSubset,
    eps: &Rational,
    level: u32,
) -> Result<Castle> {
    let level = level.max(sys.frame_level(y.frame()));
    let mut castle = match sys {
        SymbolicSystem::Odometer(_) => castle_step_grid(sys, y, s, eps, level)?,
        SymbolicSystem::Substitution(_) => castle_step_generic(sys, y, s, eps, level)?,
    };
    castle.note("operation", "clopen_castle_step");
    castle.note("epsilon", rational::format(eps));
    castle.note("level", level.to_string());
    castle.note("shape", set_display(s));
    verify_step_at(sys, y, s, eps, &castle, level)?;
    Ok(castle)
}

fn castle_step_grid(
    sys: &SymbolicSystem,
    y: &ClopenSet,
    s: &FiniteSubset,
    eps: &Rational,
    level: u32,
) -> Result<Castle> {
    let atoms = sys.atoms(sys.level_frame(level))?;
    let shifts: Vec<&GroupElement> = s.iter().collect();
    let table: Vec<Vec<usize>> = shifts
        .iter()
        .map(|g| {
            (0..atoms.len())
                .map(|v| sys.translate_atom(&atoms, v, g).expect("grid frame"))
                .collect()
        })
        .collect();
    let mut occupied = sys.mask(y, &atoms)?;
    let mut towers = Vec::new();
    for v in 0..atoms.len() {
        let free: Vec<usize> = (0..shifts.len()).filter(|&j| !occupied[table[j][v]]).collect();
        if !large_enough(free.len(), shifts.len(), eps) {
            continue;
        }
        for &j in &free {
            occupied[table[j][v]] = true;
        }
        let mut mask = vec![false; atoms.len()];
        mask[v] = true;
        towers.push(Tower {
            base: sys.from_mask(&atoms, &mask),
            shape: free.iter().map(|&j| shifts[j].clone()).collect(),
        });
    }
    Ok(Castle::new(towers))
}

fn castle_step_generic(
    sys: &SymbolicSystem,
    y: &ClopenSet,
    s: &FiniteSubset,
    eps: &Rational,
    level: u32,
) -> Result<Castle> {
    let base_atoms = sys.atoms(sys.level_frame(level))?;
    let shifts: Vec<&GroupElement> = s.iter().collect();
    let mut footprint = y.clone();
    let mut towers = Vec::new();
    for v in 0..base_atoms.len() {
        let frame = sys.cover_frame(base_atoms.frame(), footprint.frame(), s);
        let atoms = sys.atoms(frame)?;
        let parent = sys.parent_map(&atoms, &base_atoms)?;
        for g in &shifts {
            sys.check_resolves(&footprint, g, &atoms)?;
        }
        let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for (u, _) in parent.iter().enumerate().filter(|(_, p)| **p == v) {
            let free: Vec<usize> = (0..shifts.len())
                .filter(|&j| !sys.member_unchecked(&footprint, shifts[j], &atoms, u))
                .collect();
            groups.entry(free).or_default().push(u);
        }
        let mut pieces = vec![footprint.clone()];
        for (free, members) in groups {
            if !large_enough(free.len(), shifts.len(), eps) {
                continue;
            }
            let mut mask = vec![false; atoms.len()];
            for u in members {
                mask[u] = true;
            }
            let base = sys.from_mask(&atoms, &mask);
            for &j in &free {
                pieces.push(sys.translate(&base, shifts[j]));
            }
            towers.push(Tower { base, shape: free.iter().map(|&j| shifts[j].clone()).collect() });
        }
        footprint = sys.union_all(pieces.iter())?;
    }
    Ok(Castle::new(towers))
}

/// Re-checks the four conclusions of the castle step.
pub fn verify_castle_step(
    sys: &SymbolicSystem,
    y: &ClopenSet,
    s: &FiniteSubset,
    eps: &Rational,
    castle: &Castle,
) -> Result<()> {
    let level = sys.freeness_level(&sys.descriptor().difference_set(s))?;
    verify_step_at(sys, y, s, eps, castle, level)
}

fn verify_step_at(
    sys: &SymbolicSystem,
    y: &ClopenSet,
    s: &FiniteSubset,
    eps: &Rational,
    castle: &Castle,
    level: u32,
) -> Result<()> {
    let fail = |msg: String| Err(Error::Verification(msg));
    for (i, t) in castle.towers.iter().enumerate() {
        if !t.shape.is_subset(s) || !large_enough(t.shape.len(), s.len(), eps) {
            return fail(format!("tower {i}: shape {} is not a large subset of S", set_display(&t.shape)));
        }
    }
    let report = verify_castle(sys, castle, None)?;
    if !report.disjoint {
        return fail(format!("levels overlap: {:?}", report.collisions[0]));
    }
    let a = castle.footprint(sys)?;
    if !sys.is_disjoint(y, &a)? {
        return fail("footprint meets Y".into());
    }
    let full = Castle::new(
        castle
            .towers
            .iter()
            .map(|t| Tower { base: t.base.clone(), shape: s.clone() })
            .collect(),
    );
    let lhs = sys.combine(crate::dynsys::SetOp::Union, y, &a)?;
    let rhs = sys.combine(crate::dynsys::SetOp::Union, y, &full.footprint(sys)?)?;
    if !sys.set_eq(&lhs, &rhs)? {
        return fail("Y ∪ A differs from Y ∪ S·V".into());
    }
    let atoms = sys.atoms(sys.cover_frame(sys.level_frame(level), lhs.frame(), s))?;
    let counts = density::hit_counts(sys, &lhs, s, &atoms)?;
    let need = eps * int(s.len() as i64);
    if let Some(i) = counts.iter().position(|&c| int(c as i64) < need) {
        return fail(format!(
            "|(Y ∪ A) ∩ Sx| = {} < ε|S| at atom {}",
            counts[i],
            sys.format_atom(&atoms, i)
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OwOptions {
    /// Number of doublings above the smallest admissible Følner index used
    /// for the top stage.
    pub budget: u32,
    pub index_bound: u64,
    /// Extra levels tried when a minimal stage can no longer place a tower.
    pub level_slack: u32,
}

impl Default for OwOptions {
    fn default() -> Self {
        OwOptions { budget: 2, index_bound: 1 << 12, level_slack: 6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Stage number `i` in `n, n-1, ...`.
    pub stage: u64,
    pub family_index: u64,
    pub shape_size: usize,
    pub level: u32,
    pub towers: usize,
    /// Density of `A_i ∪ ... ∪ A_n`.
    pub density: Interval,
    #[serde(with = "rational::text")]
    pub bound: Rational,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub upper: u64,
    pub lower: u64,
    #[serde(with = "rational::text")]
    pub defect: Rational,
    #[serde(with = "rational::text")]
    pub threshold: Rational,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OwReport {
    #[serde(with = "rational::text")]
    pub eps_internal: Rational,
    pub n: u64,
    #[serde(with = "rational::text")]
    pub beta: Rational,
    pub level: u32,
    pub stages: Vec<StageRecord>,
    pub cross: Vec<CrossCheck>,
    pub density: Interval,
    #[serde(with = "rational::text")]
    pub target: Rational,
    #[serde(with = "rational::text")]
    pub max_defect: Rational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OwCastle {
    pub castle: Castle,
    pub report: OwReport,
}

/// Smallest `n` with `(1-ε)^n < ε`.
pub fn stage_count(eps: &Rational) -> u64 {
    let q = int(1) - eps;
    let below = |n: u64| &rational::pow(&q, n as u32) < eps;
    let (e, c) = (rational::to_f64(eps), rational::to_f64(&q));
    let mut n = if c > 0.0 { ((e.ln() / c.ln()).ceil() as u64).max(1) } else { 1 };
    while n > 1 && below(n - 1) {
        n -= 1;
    }
    while !below(n) {
        n += 1;
    }
    n
}

/// First `β = 2^-j` with `(1+β)^{-1}(1 - (1-(1+β)ε)^n) > 1-ε`.
pub fn choose_beta(eps: &Rational, n: u64) -> Result<Rational> {
    for j in 1..=64u32 {
        let beta = rational::ratio(1, 1) / rational::pow(&int(2), j);
        if recursion_bound(eps, &beta, n) > int(1) - eps {
            return Ok(beta);
        }
    }
    Err(Error::Precondition("no β = 2^-j with j <= 64 satisfies the stage inequality".into()))
}

/// `(1+β)^{-1}(1 - (1-ε(1+β))^m)`.
pub fn recursion_bound(eps: &Rational, beta: &Rational, m: u64) -> Rational {
    let one = int(1);
    let inner = &one - eps * (&one + beta);
    (&one - rational::pow(&inner, m as u32)) / (&one + beta)
}

/// Castle with `(K, δ)`-invariant shapes covering density at least `1 - ε`.
///
/// The internal parameter is `ε' = min(ε, margin(K, δ))`; `n` and `β` follow
/// the stage inequalities. Stages run from the top: stage `n` uses the
/// Følner member at index `m·2^(budget-1)` where `m` is the first
/// `(K, ε')`-invariant index, later stages halve the index down to `m`.
/// Construction stops as soon as the exact density reaches `1 - ε`; every
/// executed stage must satisfy the recursion bound.
pub fn ow_castle(
    sys: &SymbolicSystem,
    k: &FiniteSubset,
    delta: &Rational,
    eps: &Rational,
    opts: &OwOptions,
) -> Result<OwCastle> {
    if delta <= &int(0) || eps <= &int(0) {
        return Err(Error::Precondition("δ and ε must be positive".into()));
    }
    let g = sys.descriptor();
    g.check_set(k)?;
    let margin = almost_invariant_margin(k, delta);
    let eps_i = if eps < &margin { eps.clone() } else { margin };
    let n = stage_count(&eps_i);
    let beta = choose_beta(&eps_i, n)?;
    let target = int(1) - eps;
    let family = g.folner();
    let m_min = family.first_invariant(k, &eps_i, opts.index_bound)?;
    let diameter_level = rational::log2_ceil_inverse(delta);

    let top_index = m_min << opts.budget.saturating_sub(1);
    let top_free = sys.freeness_level(&g.difference_set(&family.member(top_index)))?;
    let base_level = top_free.max(diameter_level);
    let mut freeness = BTreeMap::from([(top_index, top_free)]);
    let mut level = base_level;
    let (towers, stages, shapes, density) = loop {
        match run_stages(sys, &g, &family, &mut freeness, &eps_i, &beta, &target, n, m_min, top_index, level, opts)? {
            StageRun::Done(t, s, sh, d) => break (t, s, sh, d),
            StageRun::Stalled(_) if level < base_level + opts.level_slack => level += 1,
            StageRun::Stalled(density) => {
                return Err(Error::FolnerExhausted(format!(
                    "stages stall at density {density} up to level {level}, below {}",
                    rational::format(&target)
                )));
            }
        }
    };
    let cross = cross_checks(&g, &shapes, &beta, &eps_i)?;
    let mut castle = Castle::new(towers);
    let mut max_defect = int(0);
    for t in &castle.towers {
        let d = g.invariance_defect(&t.shape, k)?;
        if &d >= delta {
            return Err(Error::Verification(format!(
                "shape {} has defect {} >= δ",
                set_display(&t.shape),
                rational::format(&d)
            )));
        }
        if d > max_defect {
            max_defect = d;
        }
    }
    castle.note("operation", "ow_castle");
    castle.note("K", set_display(k));
    castle.note("delta", rational::format(delta));
    castle.note("epsilon", rational::format(eps));
    castle.note("epsilon_internal", rational::format(&eps_i));
    castle.note("beta", rational::format(&beta));
    castle.note("n", n.to_string());
    castle.note("level", level.to_string());
    castle.note("stages_executed", stages.len().to_string());
    Ok(OwCastle {
        castle,
        report: OwReport {
            eps_internal: eps_i,
            n,
            beta,
            level,
            stages,
            cross,
            density,
            target,
            max_defect,
        },
    })
}

enum StageRun {
    Done(Vec<Tower>, Vec<StageRecord>, Vec<(u64, FiniteSubset)>, Interval),
    Stalled(Interval),
}

#[allow(clippy::too_many_arguments)]
fn run_stages(
    sys: &SymbolicSystem,
    g: &GroupDescriptor,
    family: &FolnerFamily,
    freeness: &mut BTreeMap<u64, u32>,
    eps_i: &Rational,
    beta: &Rational,
    target: &Rational,
    n: u64,
    m_min: u64,
    top_index: u64,
    level: u32,
    opts: &OwOptions,
) -> Result<StageRun> {
    let mut footprint = sys.empty();
    let mut towers: Vec<Tower> = Vec::new();
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut shapes: Vec<(u64, FiniteSubset)> = Vec::new();
    let mut density = Interval::point(int(0));
    for t in 0..n {
        let index = if (t as u32) < opts.budget { top_index >> t } else { m_min }.max(m_min);
        let shape = family.member(index);
        let free = match freeness.get(&index) {
            Some(&l) => l,
            None => {
                let l = sys.freeness_level(&g.difference_set(&shape))?;
                freeness.insert(index, l);
                l
            }
        };
        let stage_level = level.max(free);
        check_eps(eps_i)?;
        let step = castle_step_at(sys, &footprint, &shape, eps_i, stage_level)?;
        // Later stages repeat this one exactly.
        if step.towers.is_empty() && index == m_min {
            return Ok(StageRun::Stalled(density));
        }
        let added = step.footprint(sys)?;
        footprint = sys.combine(crate::dynsys::SetOp::Union, &footprint, &added)?;
        density = sys.measure(&footprint)?;
        let bound = recursion_bound(eps_i, beta, t + 1);
        let holds = density.lo >= bound;
        stages.push(StageRecord {
            stage: n - t,
            family_index: index,
            shape_size: shape.len(),
            level: stage_level,
            towers: step.towers.len(),
            density: density.clone(),
            bound: bound.clone(),
            holds,
        });
        shapes.push((n - t, shape));
        towers.extend(step.towers);
        if !holds {
            let cross = cross_checks(g, &shapes, beta, eps_i)?;
            let failing = cross.iter().find(|c| !c.holds);
            return Err(Error::FolnerExhausted(format!(
                "stage {} density {} below recursion bound {}; failing pair {}",
                n - t,
                density,
                rational::format(&bound),
                failing.map_or("none".to_string(), |c| format!("(F_{}, F_{}^-1)", c.upper, c.lower))
            )));
        }
        if &density.lo >= target {
            return Ok(StageRun::Done(towers, stages, shapes, density));
        }
    }
    Err(Error::FolnerExhausted(format!(
        "{n} stages reached density {density}, below {}",
        rational::format(target)
    )))
}

fn cross_checks(
    g: &GroupDescriptor,
    shapes: &[(u64, FiniteSubset)],
    beta: &Rational,
    eps: &Rational,
) -> Result<Vec<CrossCheck>> {
    let threshold = beta * (int(1) - eps);
    let mut out = Vec::new();
    for (i, fi) in shapes {
        for (j, fj) in shapes {
            if j < i {
                let defect = g.invariance_defect(fi, &g.inverse_set(fj))?;
                let holds = defect < threshold;
                out.push(CrossCheck { upper: *i, lower: *j, defect, threshold: threshold.clone(), holds });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileSet {
    pub tiles: Vec<FiniteSubset>,
    pub k: FiniteSubset,
    #[serde(with = "rational::text")]
    pub delta: Rational,
    pub defects: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub tile: usize,
    pub center: GroupElement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiTiling {
    pub tileset: TileSet,
    pub placements: Vec<Placement>,
    pub covered: usize,
    pub total: usize,
}

impl QuasiTiling {
    pub fn coverage(&self) -> Rational {
        rational::ratio(self.covered as i64, self.total as i64)
    }

    pub fn translates(&self, g: &GroupDescriptor) -> Vec<FiniteSubset> {
        self.placements
            .iter()
            .map(|p| g.right_translate(&self.tileset.tiles[p.tile], &p.center))
            .collect()
    }
}

/// `{c ∈ E : Tc ⊄ E}` measured against `|E|`, the condition under which box
/// tiles pack a box region up to `ε`.
pub fn inner_boundary(g: &GroupDescriptor, t: &FiniteSubset, e: &FiniteSubset) -> Rational {
    let bad = e
        .iter()
        .filter(|c| t.iter().any(|s| !e.contains(&g.mul(s, c))))
        .count();
    rational::ratio(bad as i64, e.len().max(1) as i64)
}

/// Greedy disjoint quasitiling of `E` by translates `Tc` of `(K, δ)`-invariant
/// tiles, each a base tile or a subset keeping at least `(1-η)` of one.
///
/// Base tiles default to the smallest `(K, η)`-invariant Følner member with
/// `η = margin(K, δ)`. Tiles are placed largest first: full translates in
/// canonical center order, then trimmed ones.
pub fn quasitile(
    g: &GroupDescriptor,
    k: &FiniteSubset,
    delta: &Rational,
    eps: &Rational,
    e: &FiniteSubset,
    bases: Option<&[FiniteSubset]>,
) -> Result<QuasiTiling> {
    let tiling = quasitile_unchecked(g, k, delta, eps, e, bases)?;
    let largest = tiling.tileset.tiles.iter().take(tiling_base_count(bases)).max_by_key(|t| t.len());
    if let Some(t) = largest {
        let b = inner_boundary(g, t, e);
        if &b > eps {
            return Err(Error::Precondition(format!(
                "E is not invariant enough: |{{c ∈ E : Tc ⊄ E}}|/|E| = {} > ε",
                rational::format(&b)
            )));
        }
    }
    Ok(tiling)
}

fn tiling_base_count(bases: Option<&[FiniteSubset]>) -> usize {
    bases.map_or(1, <[FiniteSubset]>::len)
}

/// [`quasitile`] without the invariance precondition on `E`; coverage is
/// still verified.
pub fn quasitile_unchecked(
    g: &GroupDescriptor,
    k: &FiniteSubset,
    delta: &Rational,
    eps: &Rational,
    e: &FiniteSubset,
    bases: Option<&[FiniteSubset]>,
) -> Result<QuasiTiling> {
    if eps <= &int(0) || eps >= &rational::ratio(1, 2) {
        return Err(Error::Precondition("quasitiling needs 0 < ε < 1/2".into()));
    }
    if e.is_empty() {
        return Err(Error::EmptySet("region E"));
    }
    g.check_set(k)?;
    g.check_set(e)?;
    let eta = almost_invariant_margin(k, delta);
    let mut base_tiles: Vec<FiniteSubset> = match bases {
        Some(b) => b.to_vec(),
        None => {
            let index = g.folner().first_invariant(k, &eta, 1 << 12)?;
            vec![g.folner().member(index)]
        }
    };
    for t in &base_tiles {
        g.check_set(t)?;
        if t.is_empty() {
            return Err(Error::EmptySet("base tile"));
        }
        if !g.is_invariant(t, k, delta)? {
            return Err(Error::Precondition(format!(
                "base tile {} is not (K, δ)-invariant",
                set_display(t)
            )));
        }
    }
    base_tiles.sort_by_key(|t| std::cmp::Reverse(t.len()));

    let mut tiles: Vec<FiniteSubset> = base_tiles.clone();
    let mut tile_index: BTreeMap<FiniteSubset, usize> =
        tiles.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let mut covered: BTreeSet<GroupElement> = BTreeSet::new();
    let mut placements = Vec::new();
    for (bi, t) in base_tiles.iter().enumerate() {
        let centers = g.product_set(&g.inverse_set(t), e);
        for trimmed_pass in [false, true] {
            for c in centers.iter() {
                let image: Vec<GroupElement> = t.iter().map(|s| g.mul(s, c)).collect();
                let free: Vec<usize> = (0..image.len())
                    .filter(|&i| e.contains(&image[i]) && !covered.contains(&image[i]))
                    .collect();
                if free.len() == image.len() {
                    covered.extend(image);
                    placements.push(Placement { tile: bi, center: c.clone() });
                    continue;
                }
                if !trimmed_pass || free.is_empty() || !large_enough(free.len(), t.len(), &eta) {
                    continue;
                }
                let elems: Vec<&GroupElement> = t.iter().collect();
                let sub: FiniteSubset = free.iter().map(|&i| elems[i].clone()).collect();
                if !g.is_invariant(&sub, k, delta)? {
                    continue;
                }
                let idx = *tile_index.entry(sub.clone()).or_insert_with(|| {
                    tiles.push(sub.clone());
                    tiles.len() - 1
                });
                covered.extend(free.iter().map(|&i| image[i].clone()));
                placements.push(Placement { tile: idx, center: c.clone() });
            }
        }
    }
    let defects = tiles
        .iter()
        .map(|t| g.invariance_defect(t, k).map(|d| rational::format(&d)))
        .collect::<Result<Vec<_>>>()?;
    let tiling = QuasiTiling {
        tileset: TileSet { tiles, k: k.clone(), delta: delta.clone(), defects },
        placements,
        covered: covered.len(),
        total: e.len(),
    };
    if tiling.coverage() < int(1) - eps {
        return Err(Error::CoverageFailure(format!(
            "tiles cover {} of {} points, below (1-ε)|E|",
            tiling.covered, tiling.total
        )));
    }
    Ok(tiling)
}

/// Independent check: translates disjoint, inside `E`, tiles invariant,
/// coverage as claimed.
pub fn verify_quasitiling(g: &GroupDescriptor, e: &FiniteSubset, q: &QuasiTiling, eps: &Rational) -> Result<()> {
    let mut seen: BTreeSet<GroupElement> = BTreeSet::new();
    for (p, tc) in q.placements.iter().zip(q.translates(g)) {
        if !tc.is_subset(e) {
            return Err(Error::Verification(format!("tile at {} leaves E", p.center)));
        }
        for x in tc.iter() {
            if !seen.insert(x.clone()) {
                return Err(Error::Verification(format!("point {x} covered twice")));
            }
        }
    }
    for t in &q.tileset.tiles {
        if !g.is_invariant(t, &q.tileset.k, &q.tileset.delta)? {
            return Err(Error::Verification(format!("tile {} not invariant", set_display(t))));
        }
    }
    if seen.len() != q.covered || int(seen.len() as i64) < (int(1) - eps) * int(e.len() as i64) {
        return Err(Error::Verification("coverage claim fails".into()));
    }
    Ok(())
}

/// Splits every base by the itinerary `s ↦ (member of P containing s·x)`
/// over its shape, so each level lies inside one member of `P`.
pub fn castle_refine_by_partition(
    sys: &SymbolicSystem,
    castle: &Castle,
    partition: &[ClopenSet],
) -> Result<Castle> {
    check_partition(sys, partition)?;
    let mut towers = Vec::new();
    for t in &castle.towers {
        let mut frame = t.base.frame();
        for p in partition {
            frame = sys.cover_frame(frame, p.frame(), &t.shape);
        }
        let atoms = sys.atoms(frame)?;
        let inside = sys.mask(&t.base, &atoms)?;
        let pulls: Vec<Vec<Vec<bool>>> = t
            .shape
            .iter()
            .map(|s| partition.iter().map(|p| sys.pullback(p, s, &atoms)).collect())
            .collect::<Result<_>>()?;
        let mut classes: BTreeMap<Vec<usize>, Vec<bool>> = BTreeMap::new();
        for x in (0..atoms.len()).filter(|&x| inside[x]) {
            let sigma: Vec<usize> = pulls
                .iter()
                .map(|per_s| per_s.iter().position(|m| m[x]).expect("partition covers X"))
                .collect();
            classes.entry(sigma).or_insert_with(|| vec![false; atoms.len()])[x] = true;
        }
        for mask in classes.into_values() {
            towers.push(Tower { base: sys.from_mask(&atoms, &mask), shape: t.shape.clone() });
        }
    }
    let mut out = Castle { towers, provenance: castle.provenance.clone() };
    out.note("refined_by_partition", format!("{} members; clopen boundary is empty", partition.len()));
    Ok(out)
}

pub fn check_partition(sys: &SymbolicSystem, partition: &[ClopenSet]) -> Result<()> {
    if partition.is_empty() {
        return Err(Error::NotPartition("no members".into()));
    }
    let frame = partition.iter().fold(sys.level_frame(0), |f, p| sys.join(f, p.frame()));
    let atoms = sys.atoms(frame)?;
    let mut count = vec![0u32; atoms.len()];
    for p in partition {
        for i in sys.indices_in(p, &atoms)? {
            count[i] += 1;
        }
    }
    if let Some(i) = count.iter().position(|&c| c != 1) {
        return Err(Error::NotPartition(format!(
            "atom {} lies in {} members",
            sys.format_atom(&atoms, i),
            count[i]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn z() -> GroupDescriptor {
        GroupDescriptor::z(1)
    }

    fn set(xs: &[i64]) -> FiniteSubset {
        xs.iter().map(|&x| GroupElement::new([x])).collect()
    }

    #[test]
    fn castle_step_identity_shape() {
        let sys = SymbolicSystem::dyadic();
        let castle = clopen_castle_step(&sys, &sys.empty(), &set(&[0]), &ratio(1, 4), 2).unwrap();
        assert_eq!(castle.towers.len(), 4);
        assert_eq!(castle.footprint(&sys).unwrap(), sys.whole());
    }

    #[test]
    fn castle_step_full_y_is_empty() {
        let sys = SymbolicSystem::dyadic();
        let castle = clopen_castle_step(&sys, &sys.whole(), &set(&[0, 1]), &ratio(1, 4), 3).unwrap();
        assert!(castle.towers.is_empty());
    }

    #[test]
    fn castle_step_pairs_on_eight_residues() {
        let sys = SymbolicSystem::dyadic();
        let s = set(&[0, 1]);
        let castle = clopen_castle_step(&sys, &sys.empty(), &s, &ratio(2, 5), 3).unwrap();
        // |T| must be at least 6/5, so atom 1 (blocked at 1 + 0) is skipped and
        // the sweep pairs residues (0,1), (2,3), ...
        let bases: Vec<ClopenSet> = castle.towers.iter().map(|t| t.base.clone()).collect();
        assert_eq!(bases, (0..4).map(|i| ClopenSet::grid(3, [2 * i])).collect::<Vec<_>>());
        assert_eq!(castle.footprint(&sys).unwrap(), sys.whole());
        let atoms = sys.atoms(sys.level_frame(3)).unwrap();
        let a = castle.footprint(&sys).unwrap();
        for c in density::hit_counts(&sys, &a, &s, &atoms).unwrap() {
            assert!(int(c as i64) >= ratio(4, 5));
        }
    }

    #[test]
    fn castle_step_rejects_coarse_level() {
        let sys = SymbolicSystem::dyadic();
        let err = clopen_castle_step(&sys, &sys.empty(), &set(&[0, 1, 2]), &ratio(1, 4), 1);
        assert!(matches!(err, Err(Error::LevelTooCoarse(_))));
    }

    #[test]
    fn castle_step_on_fibonacci() {
        let sys = SymbolicSystem::fibonacci();
        let s = set(&[0, 1, 2, 3]);
        let level = sys.freeness_level(&z().difference_set(&s)).unwrap();
        let castle = clopen_castle_step(&sys, &sys.empty(), &s, &ratio(1, 4), level).unwrap();
        assert!(!castle.towers.is_empty());
        assert!(verify_castle(&sys, &castle, None).unwrap().valid());
    }

    #[test]
    fn stage_parameters() {
        assert_eq!(stage_count(&ratio(1, 30)), 101);
        let beta = choose_beta(&ratio(1, 30), 101).unwrap();
        assert!(recursion_bound(&ratio(1, 30), &beta, 101) > ratio(29, 30));
        assert!(recursion_bound(&ratio(1, 30), &(&beta * int(2)), 101) <= ratio(29, 30));
    }

    #[test]
    fn ow_castle_weak_target() {
        let sys = SymbolicSystem::dyadic();
        let out = ow_castle(&sys, &set(&[-1, 1]), &ratio(1, 5), &ratio(9, 10), &OwOptions::default()).unwrap();
        assert_eq!(out.report.stages.len(), 1);
        assert!(out.report.density.lo >= ratio(1, 10));
    }

    #[test]
    fn quasitile_examples() {
        let k = set(&[-1, 1]);
        let t = z().box_set(8);
        let e = z().box_set(100);
        let q = quasitile(&z(), &k, &ratio(3, 10), &ratio(1, 5), &e, Some(std::slice::from_ref(&t))).unwrap();
        assert_eq!(q.placements.len(), 12);
        assert_eq!(q.covered, 96);
        verify_quasitiling(&z(), &e, &q, &ratio(1, 5)).unwrap();

        // A single tile translate is far from invariant, so only the greedy runs.
        let exact = z().right_translate(&t, &GroupElement::new([5]));
        assert!(quasitile(&z(), &k, &ratio(3, 10), &ratio(1, 5), &exact, Some(std::slice::from_ref(&t))).is_err());
        let q = quasitile_unchecked(&z(), &k, &ratio(3, 10), &ratio(1, 5), &exact, Some(&[t])).unwrap();
        assert_eq!(q.coverage(), int(1));
    }

    #[test]
    fn quasitile_square() {
        let z2 = GroupDescriptor::z(2);
        let k: FiniteSubset = z2.generators().into_iter().collect();
        let t = z2.box_set(8);
        let e = z2.box_set(50);
        // The inner boundary of [0,50)^2 for [0,8)^2 is 651/2500 > 1/4.
        assert!(quasitile(&z2, &k, &int(1), &ratio(1, 4), &e, Some(std::slice::from_ref(&t))).is_err());
        let q = quasitile_unchecked(&z2, &k, &int(1), &ratio(1, 4), &e, Some(&[t])).unwrap();
        assert_eq!(q.covered, 2304);
        verify_quasitiling(&z2, &e, &q, &ratio(1, 4)).unwrap();
    }

    #[test]
    fn refine_by_partition_examples() {
        let sys = SymbolicSystem::dyadic();
        let castle = Castle::new(vec![Tower { base: ClopenSet::grid(1, [0]), shape: set(&[0, 1]) }]);
        let same = castle_refine_by_partition(&sys, &castle, &[sys.whole()]).unwrap();
        assert_eq!(same.towers, castle.towers);

        let parts = [ClopenSet::grid(2, [0, 1]), ClopenSet::grid(2, [2, 3])];
        let split = castle_refine_by_partition(&sys, &castle, &parts).unwrap();
        assert_eq!(split.towers.len(), 2);
        assert!(verify_castle(&sys, &split, None).unwrap().valid());
        for t in &split.towers {
            for s in t.shape.iter() {
                let level = sys.translate(&t.base, s);
                assert!(parts.iter().any(|p| sys.is_subset(&level, p).unwrap()));
            }
        }
        let overlapping = [ClopenSet::grid(1, [0]), sys.whole()];
        assert!(matches!(
            castle_refine_by_partition(&sys, &castle, &overlapping),
            Err(Error::NotPartition(_))
        ));
    }
}
