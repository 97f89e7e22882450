//! Dynamical subequivalence witnesses and the constructions built on them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::density::{self, hit_counts, sweep_atoms};
use crate::dynsys::{ClopenSet, SetOp, SymbolicSystem};
use crate::error::{Error, Result};
use crate::group::{set_display, FiniteSubset, GroupElement};
use crate::matching::{hall_violator, hopcroft_karp, BipartiteGraph};
use crate::rational::{self, int, Interval, Rational};
use crate::tiling::{self, verify_castle, Castle, OwOptions, Tower};

#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub set: ClopenSet,
    pub mover: GroupElement,
    pub color: u32,
}

/// `A ≺ B` (or `A ≺_m B` when colors are used): the pieces partition the
/// source and their moved images lie in the target, pairwise disjoint within
/// each color.
#[derive(Clone, Debug, PartialEq)]
pub struct SubequivalenceWitness {
    pub source: ClopenSet,
    pub target: ClopenSet,
    pub pieces: Vec<Piece>,
}

/// A witness whose pieces carry colors `0..=m`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColoredWitness {
    pub m: u32,
    pub witness: SubequivalenceWitness,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub valid: bool,
    pub problems: Vec<String>,
}

/// Decides witness soundness exactly. Images of different colors may overlap.
pub fn verify_witness(sys: &SymbolicSystem, w: &SubequivalenceWitness) -> Result<WitnessReport> {
    let mut frame = sys.join(w.source.frame(), w.target.frame());
    let moved: Vec<ClopenSet> = w.pieces.iter().map(|p| sys.translate(&p.set, &p.mover)).collect();
    for (p, m) in w.pieces.iter().zip(&moved) {
        frame = sys.join(frame, p.set.frame());
        frame = sys.join(frame, m.frame());
    }
    let atoms = sys.atoms(frame)?;
    let mut problems = Vec::new();

    let source = sys.mask(&w.source, &atoms)?;
    let target = sys.mask(&w.target, &atoms)?;
    let mut cover = vec![0u32; atoms.len()];
    for p in &w.pieces {
        for i in sys.indices_in(&p.set, &atoms)? {
            cover[i] += 1;
        }
    }
    for i in 0..atoms.len() {
        let c = cover[i];
        if source[i] && c == 0 && problems.len() < 8 {
            problems.push(format!("source atom {} is not covered", sys.format_atom(&atoms, i)));
        }
        if c > 0 && !source[i] && problems.len() < 8 {
            problems.push(format!("piece atom {} lies outside the source", sys.format_atom(&atoms, i)));
        }
        if c > 1 && problems.len() < 8 {
            problems.push(format!("pieces overlap at {}", sys.format_atom(&atoms, i)));
        }
    }
    let mut images: BTreeMap<u32, Vec<Option<usize>>> = BTreeMap::new();
    for (pi, (p, m)) in w.pieces.iter().zip(&moved).enumerate() {
        let owner = images.entry(p.color).or_insert_with(|| vec![None; atoms.len()]);
        for i in sys.indices_in(m, &atoms)? {
            if !target[i] && problems.len() < 8 {
                problems.push(format!(
                    "piece {pi} moved by {} leaves the target at {}",
                    p.mover,
                    sys.format_atom(&atoms, i)
                ));
            }
            if let Some(prev) = owner[i] {
                if problems.len() < 8 {
                    problems.push(format!(
                        "pieces {prev} and {pi} (color {}) collide at {}",
                        p.color,
                        sys.format_atom(&atoms, i)
                    ));
                }
            } else {
                owner[i] = Some(pi);
            }
        }
    }
    Ok(WitnessReport { valid: problems.is_empty(), problems })
}

pub fn verify_colored(sys: &SymbolicSystem, w: &ColoredWitness) -> Result<WitnessReport> {
    let mut report = verify_witness(sys, &w.witness)?;
    if let Some(p) = w.witness.pieces.iter().find(|p| p.color > w.m) {
        report.valid = false;
        report.problems.push(format!("color {} exceeds m = {}", p.color, w.m));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubequivPrecondition {
    /// `|F^{-1}F| / |F|`.
    #[serde(with = "rational::text")]
    pub c: Rational,
    pub density_a: Interval,
    pub density_b: Interval,
    pub density_ok: bool,
    /// `max_x |A ∩ F^{-1}F x|`.
    pub max_a_hits: usize,
    /// `min_x |B ∩ F x|`.
    pub min_b_hits: usize,
    pub counting_ok: bool,
}

/// The density condition `c·D(A) < D(B)` and the counting inequality
/// `max_x |A ∩ F^{-1}Fx| < min_x |B ∩ Fx|` on which the greedy argument runs.
pub fn subequiv_precondition(
    sys: &SymbolicSystem,
    a: &ClopenSet,
    b: &ClopenSet,
    f: &FiniteSubset,
) -> Result<SubequivPrecondition> {
    let g = sys.descriptor();
    let ff = g.difference_set(f);
    let c = rational::ratio(ff.len() as i64, f.len() as i64);
    let density_a = sys.measure(a)?;
    let density_b = sys.measure(b)?;
    let density_ok = &c * &density_a.hi < density_b.lo;
    let atoms_a = sweep_atoms(sys, &[a], &ff)?;
    let max_a_hits = hit_counts(sys, a, &ff, &atoms_a)?.into_iter().max().unwrap_or(0);
    let atoms_b = sweep_atoms(sys, &[b], f)?;
    let min_b_hits = hit_counts(sys, b, f, &atoms_b)?.into_iter().min().unwrap_or(0);
    Ok(SubequivPrecondition {
        c,
        density_a,
        density_b,
        density_ok,
        max_a_hits,
        min_b_hits,
        counting_ok: max_a_hits < min_b_hits,
    })
}

/// Greedy pieces `A_k = (A \ ⋃_{j<k} A_j) ∩ s_k^{-1}(B \ ⋃_{j<k} s_j A_j)`
/// over the canonical enumeration of `F`.
///
/// Fails with a coverage error, naming an uncovered atom with its counts,
/// when the pieces do not exhaust `A`.
pub fn subequiv_greedy(
    sys: &SymbolicSystem,
    a: &ClopenSet,
    b: &ClopenSet,
    f: &FiniteSubset,
) -> Result<SubequivalenceWitness> {
    if f.is_empty() {
        return Err(Error::EmptySet("mover set F"));
    }
    let g = sys.descriptor();
    g.check_set(f)?;
    let mut remaining = a.clone();
    let mut used = sys.empty();
    let mut pieces = Vec::new();
    for s in f.iter() {
        if remaining.is_empty() {
            break;
        }
        let free = sys.combine(SetOp::Minus, b, &used)?;
        let single: FiniteSubset = [s.clone()].into_iter().collect();
        let frame = sys.cover_frame(remaining.frame(), free.frame(), &single);
        let atoms = sys.atoms(frame)?;
        let rem = sys.mask(&remaining, &atoms)?;
        let pull = sys.pullback(&free, s, &atoms)?;
        let take: Vec<bool> = rem.iter().zip(&pull).map(|(x, y)| *x && *y).collect();
        if !take.iter().any(|&t| t) {
            continue;
        }
        let piece = sys.from_mask(&atoms, &take);
        remaining = sys.combine(SetOp::Minus, &remaining, &piece)?;
        used = sys.combine(SetOp::Union, &used, &sys.translate(&piece, s))?;
        pieces.push(Piece { set: piece, mover: s.clone(), color: 0 });
    }
    if !remaining.is_empty() {
        let ff = g.difference_set(f);
        let atoms = sweep_atoms(sys, &[a, b, &remaining], &ff)?;
        let left = sys.mask(&remaining, &atoms)?;
        let x = left.iter().position(|&l| l).expect("nonempty remainder");
        let b_hits = hit_counts(sys, b, f, &atoms)?[x];
        let a_hits = hit_counts(sys, a, &ff, &atoms)?[x];
        return Err(Error::CoverageFailure(format!(
            "atom {} of A is left uncovered: |B ∩ Fx| = {b_hits}, |A ∩ F^-1 F x| = {a_hits}",
            sys.format_atom(&atoms, x)
        )));
    }
    let witness = SubequivalenceWitness { source: a.clone(), target: b.clone(), pieces };
    let report = verify_witness(sys, &witness)?;
    if !report.valid {
        return Err(Error::Verification(report.problems.join("; ")));
    }
    Ok(witness)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub uncovered_atoms: usize,
    pub reserve_atoms: usize,
    pub level: u32,
    pub remainder_density: Interval,
    pub reserve_density: Interval,
    /// Added shape slots over original slots, per output tower.
    pub modified_fractions: Vec<String>,
    pub max_modified_fraction: String,
    pub max_defect: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchOutcome {
    pub castle: Castle,
    pub report: MatchReport,
}

/// Reserve slots of a tower: the first `⌊r·|S|⌋` shape elements.
pub fn reserve_slots(shape: &FiniteSubset, reserve_fraction: &Rational) -> FiniteSubset {
    let count = rational::floor_u64(&(reserve_fraction * int(shape.len() as i64))) as usize;
    shape.iter().take(count).cloned().collect()
}

/// Adjoins every uncovered atom to a tower through a perfect matching into
/// reserve levels, where an uncovered `u` may use a reserve atom `v = f·u`
/// with `f ∈ F`. The result partitions `X`.
pub fn match_to_partition(
    sys: &SymbolicSystem,
    castle: &Castle,
    f: &FiniteSubset,
    reserve_fraction: &Rational,
    k: Option<&FiniteSubset>,
) -> Result<MatchOutcome> {
    let SymbolicSystem::Odometer(_) = sys else {
        return Err(Error::InvalidSystem(
            "matching to a partition needs an action permuting atoms (odometer)".into(),
        ));
    };
    if reserve_fraction < &int(0) || reserve_fraction > &int(1) {
        return Err(Error::Precondition("reserve fraction must lie in [0, 1]".into()));
    }
    let g = sys.descriptor();
    g.check_set(f)?;
    if g.inverse_set(f) != *f {
        return Err(Error::Precondition(format!("F = {} is not symmetric", set_display(f))));
    }
    let level = sys
        .frame_level(castle.level_frame(sys))
        .max(sys.freeness_level(&g.difference_set(f))?);
    let atoms = sys.atoms(sys.level_frame(level))?;
    let n = atoms.len();

    // owner[x] = (tower, slot) of the level containing atom x.
    let mut owner: Vec<Option<(usize, GroupElement)>> = vec![None; n];
    let mut reserve = vec![false; n];
    for (ti, t) in castle.towers.iter().enumerate() {
        let slots = reserve_slots(&t.shape, reserve_fraction);
        for s in t.shape.iter() {
            for i in sys.indices_in(&sys.translate(&t.base, s), &atoms)? {
                if owner[i].is_some() {
                    return Err(Error::Verification(format!(
                        "castle levels overlap at {}",
                        sys.format_atom(&atoms, i)
                    )));
                }
                owner[i] = Some((ti, s.clone()));
                reserve[i] = slots.contains(s);
            }
        }
    }
    let uncovered: Vec<usize> = (0..n).filter(|&i| owner[i].is_none()).collect();
    let reserve_list: Vec<usize> = (0..n).filter(|&i| reserve[i]).collect();
    let atom_mu = sys.atom_measure(&atoms).expect("odometer atoms");
    let remainder_density = Interval::point(&atom_mu * int(uncovered.len() as i64));
    let reserve_density = Interval::point(&atom_mu * int(reserve_list.len() as i64));
    if uncovered.is_empty() {
        let report = MatchReport {
            uncovered_atoms: 0,
            reserve_atoms: reserve_list.len(),
            level,
            remainder_density,
            reserve_density,
            modified_fractions: vec!["0".into(); castle.towers.len()],
            max_modified_fraction: "0".into(),
            max_defect: max_defect(castle, k, sys)?,
        };
        return Ok(MatchOutcome { castle: castle.clone(), report });
    }
    if reserve_density.lo < int(2) * &remainder_density.hi {
        return Err(Error::Precondition(format!(
            "reserve density {} is below twice the remainder density {}",
            reserve_density, remainder_density
        )));
    }

    let right_index: BTreeMap<usize, usize> =
        reserve_list.iter().enumerate().map(|(j, &v)| (v, j)).collect();
    let movers: Vec<&GroupElement> = f.iter().collect();
    let mut graph = BipartiteGraph::new(uncovered.len(), reserve_list.len());
    let mut via: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (ui, &u) in uncovered.iter().enumerate() {
        for (mi, m) in movers.iter().enumerate() {
            let v = sys.translate_atom(&atoms, u, m).expect("grid atoms");
            if let Some(&j) = right_index.get(&v) {
                if let std::collections::btree_map::Entry::Vacant(e) = via.entry((ui, j)) {
                    e.insert(mi);
                    graph.add_edge(ui, j);
                }
            }
        }
    }
    let matching = hopcroft_karp(&graph);
    if let Some((left, right)) = hall_violator(&graph, &matching) {
        let names: Vec<String> = left.iter().take(8).map(|&i| sys.format_atom(&atoms, uncovered[i])).collect();
        return Err(Error::HallViolation(format!(
            "{} uncovered atoms [{}{}] reach only {} reserve atoms",
            left.len(),
            names.join("; "),
            if left.len() > 8 { "; ..." } else { "" },
            right.len()
        )));
    }

    // Base atom x of tower i gains shape element t = f^-1 s when u = t·x.
    let mut gains: BTreeMap<usize, BTreeMap<usize, FiniteSubset>> = BTreeMap::new();
    for (ui, j) in matching.pair_left.iter().enumerate() {
        let j = j.expect("perfect matching");
        let v = reserve_list[j];
        let (ti, s) = owner[v].clone().expect("reserve atom is covered");
        let mover = movers[via[&(ui, j)]];
        let x = sys
            .translate_atom(&atoms, v, &g.inverse(&s))
            .expect("grid atoms");
        let t = g.mul(&g.inverse(mover), &s);
        gains.entry(ti).or_default().entry(x).or_default().insert(t);
    }

    let mut towers = Vec::new();
    let mut fractions = Vec::new();
    let mut max_fraction = int(0);
    for (ti, t) in castle.towers.iter().enumerate() {
        let Some(per_atom) = gains.get(&ti) else {
            towers.push(t.clone());
            fractions.push("0".to_string());
            continue;
        };
        let base_atoms = sys.indices_in(&t.base, &atoms)?;
        let mut classes: BTreeMap<FiniteSubset, Vec<bool>> = BTreeMap::new();
        for x in base_atoms {
            let extra = per_atom.get(&x).cloned().unwrap_or_default();
            classes.entry(extra).or_insert_with(|| vec![false; n])[x] = true;
        }
        for (extra, mask) in classes {
            let frac = rational::ratio(extra.len() as i64, t.shape.len() as i64);
            if frac > max_fraction {
                max_fraction = frac.clone();
            }
            fractions.push(rational::format(&frac));
            towers.push(Tower { base: sys.from_mask(&atoms, &mask), shape: t.shape.union(&extra) });
        }
    }
    let mut out = Castle { towers, provenance: castle.provenance.clone() };
    out.note("matched", format!("{} atoms at level {level}", uncovered.len()));
    out.note("reserve_fraction", rational::format(reserve_fraction));
    let check = verify_castle(sys, &out, None)?;
    if !check.valid() || check.density != Interval::point(int(1)) {
        return Err(Error::Verification("matched castle does not partition X".into()));
    }
    let report = MatchReport {
        uncovered_atoms: uncovered.len(),
        reserve_atoms: reserve_list.len(),
        level,
        remainder_density,
        reserve_density,
        modified_fractions: fractions,
        max_modified_fraction: rational::format(&max_fraction),
        max_defect: max_defect(&out, k, sys)?,
    };
    Ok(MatchOutcome { castle: out, report })
}

fn max_defect(castle: &Castle, k: Option<&FiniteSubset>, sys: &SymbolicSystem) -> Result<Option<String>> {
    let Some(k) = k else { return Ok(None) };
    let g = sys.descriptor();
    let mut best = int(0);
    for t in &castle.towers {
        let d = g.invariance_defect(&t.shape, k)?;
        if d > best {
            best = d;
        }
    }
    Ok(Some(rational::format(&best)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AfWitness {
    /// `S_i'` per tower.
    pub selection: Vec<FiniteSubset>,
    /// `S_{i,0}, ..., S_{i,m}` per tower.
    pub blocks: Vec<Vec<FiniteSubset>>,
    pub colored: ColoredWitness,
    pub witness: SubequivalenceWitness,
    /// Følner index of the mover set used by the greedy step.
    pub mover_index: Option<u64>,
}

/// Splits each shape into `m+1` consecutive blocks of size
/// `κ = ⌊|S_i|/(2q)⌋ + 1` with `q = (m+1)n`, moves the remainder into the
/// levels of the first blocks and flattens the colors through the block
/// bijections, yielding `X \ castle ≺ ⋃ S_i' V_i` with `|S_i'| < |S_i|/n`.
///
/// Without `supplied`, the `m = 0` part comes from [`subequiv_greedy`] over
/// Følner members scanned upward.
pub fn almost_finite_witness(
    sys: &SymbolicSystem,
    castle: &Castle,
    n: u64,
    m: u32,
    supplied: Option<&ColoredWitness>,
) -> Result<AfWitness> {
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    let g = sys.descriptor();
    let q = (m as u64 + 1) * n;
    let density = castle.density(sys)?;
    let need = int(1) - rational::ratio(1, 2 * q as i64 + 1);
    if density.lo <= need {
        return Err(Error::Precondition(format!(
            "castle too sparse: density {density} is not above {}",
            rational::format(&need)
        )));
    }
    let mut blocks = Vec::new();
    let mut selection = Vec::new();
    for (i, t) in castle.towers.iter().enumerate() {
        let size = t.shape.len() as u64;
        let kappa = size / (2 * q) + 1;
        if size < 2 * q || kappa * q >= size {
            return Err(Error::Precondition(format!(
                "tower {i}: shape of size {size} is too small for q = {q}"
            )));
        }
        let elems: Vec<&GroupElement> = t.shape.iter().collect();
        let tower_blocks: Vec<FiniteSubset> = (0..=m as usize)
            .map(|j| {
                elems[j * kappa as usize..(j + 1) * kappa as usize]
                    .iter()
                    .map(|&e| e.clone())
                    .collect()
            })
            .collect();
        selection.push(tower_blocks.iter().fold(FiniteSubset::new(), |acc, b| acc.union(b)));
        blocks.push(tower_blocks);
    }
    let remainder = castle.remainder(sys)?;
    let first_levels = level_union(sys, castle, |i| &blocks[i][0])?;
    let selected_levels = level_union(sys, castle, |i| &selection[i])?;

    let (colored, mover_index) = match supplied {
        Some(c) => {
            if c.m != m {
                return Err(Error::Precondition(format!("supplied witness has m = {}, expected {m}", c.m)));
            }
            if !sys.set_eq(&c.witness.source, &remainder)? || !sys.set_eq(&c.witness.target, &first_levels)? {
                return Err(Error::Precondition(
                    "supplied witness must map the remainder into the first blocks".into(),
                ));
            }
            let report = verify_colored(sys, c)?;
            if !report.valid {
                return Err(Error::Verification(report.problems.join("; ")));
            }
            (c.clone(), None)
        }
        None if remainder.is_empty() => (
            ColoredWitness {
                m,
                witness: SubequivalenceWitness { source: remainder.clone(), target: first_levels.clone(), pieces: vec![] },
            },
            None,
        ),
        None => {
            let (w, index) = scan_greedy(sys, &remainder, &first_levels)?;
            (ColoredWitness { m, witness: w }, Some(index))
        }
    };

    // Flatten: W_{U,i,t} = U ∩ s_U^{-1} t V_i moves by φ_{i,c}(t) t^{-1} s_U.
    let mut pieces = Vec::new();
    for p in &colored.witness.pieces {
        let image = sys.translate(&p.set, &p.mover);
        for (i, t) in castle.towers.iter().enumerate() {
            let firsts: Vec<&GroupElement> = blocks[i][0].iter().collect();
            let targets: Vec<&GroupElement> = blocks[i][p.color as usize].iter().collect();
            for (k, s0) in firsts.iter().enumerate() {
                let level = sys.translate(&t.base, s0);
                let hit = sys.combine(SetOp::Intersect, &image, &level)?;
                if hit.is_empty() {
                    continue;
                }
                let back = sys.translate(&hit, &g.inverse(&p.mover));
                let mover = g.mul(&g.mul(targets[k], &g.inverse(s0)), &p.mover);
                pieces.push(Piece { set: back, mover, color: 0 });
            }
        }
    }
    let witness = SubequivalenceWitness { source: remainder, target: selected_levels, pieces };
    let out = AfWitness { selection, blocks, colored, witness, mover_index };
    let report = verify_af_witness(sys, castle, n, &out)?;
    if !report.valid {
        return Err(Error::Verification(report.problems.join("; ")));
    }
    Ok(out)
}

fn level_union<'a>(
    sys: &SymbolicSystem,
    castle: &'a Castle,
    slots: impl Fn(usize) -> &'a FiniteSubset,
) -> Result<ClopenSet> {
    let mut levels = Vec::new();
    for (i, t) in castle.towers.iter().enumerate() {
        for s in slots(i).iter() {
            levels.push(sys.translate(&t.base, s));
        }
    }
    sys.union_all(levels.iter())
}

fn scan_greedy(
    sys: &SymbolicSystem,
    a: &ClopenSet,
    b: &ClopenSet,
) -> Result<(SubequivalenceWitness, u64)> {
    let family = sys.descriptor().folner();
    let bound = 1u64 << 10;
    let mut last = None;
    for index in 1..=bound {
        let f = family.member(index);
        let pre = subequiv_precondition(sys, a, b, &f)?;
        if !pre.counting_ok {
            continue;
        }
        match subequiv_greedy(sys, a, b, &f) {
            Ok(w) => return Ok((w, index)),
            Err(e @ Error::CoverageFailure(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| {
        Error::FolnerExhausted(format!("no mover set up to index {bound} meets the counting inequality"))
    }))
}

pub fn verify_af_witness(
    sys: &SymbolicSystem,
    castle: &Castle,
    n: u64,
    w: &AfWitness,
) -> Result<WitnessReport> {
    let mut report = verify_witness(sys, &w.witness)?;
    if !sys.set_eq(&w.witness.source, &castle.remainder(sys)?)? {
        report.problems.push("witness source is not the castle remainder".into());
    }
    let selected = level_union(sys, castle, |i| &w.selection[i])?;
    if !sys.set_eq(&w.witness.target, &selected)? {
        report.problems.push("witness target is not the selected levels".into());
    }
    for (i, (t, sel)) in castle.towers.iter().zip(&w.selection).enumerate() {
        if !sel.is_subset(&t.shape) || (sel.len() as u64) * n >= t.shape.len() as u64 {
            report.problems.push(format!("tower {i}: |S_i'| = {} is not below |S_i|/n", sel.len()));
        }
    }
    report.valid = report.problems.is_empty();
    Ok(report)
}

/// Pairwise disjoint clopen `U_1, ..., U_m ⊆ U`, each of density at least
/// `D(U)/m - η`, cut from the `U`-levels of an internal castle.
pub fn almost_divisible(
    sys: &SymbolicSystem,
    u: &ClopenSet,
    m: u32,
    eta: &Rational,
) -> Result<Vec<ClopenSet>> {
    if m == 0 {
        return Err(Error::Precondition("m must be at least 1".into()));
    }
    if eta <= &int(0) {
        return Err(Error::Precondition("η must be positive".into()));
    }
    let mu = sys.measure(u)?;
    if mu.hi <= int(0) {
        return Err(Error::Precondition("U has density 0".into()));
    }
    let g = sys.descriptor();
    let k: FiniteSubset = g.generators().into_iter().collect();
    // Shapes with defect below η/2 have more than 2/η elements, so the floor
    // losses total at most η/2; the castle misses at most mη/2 of U.
    let delta = eta / int(2);
    let cap = rational::ratio(9, 10);
    let eps = (int(m as i64) * eta / int(2)).min(cap);
    let ow = tiling::ow_castle(sys, &k, &delta, &eps, &OwOptions::default())?;
    let complement = sys.complement(u)?;
    let partition: Vec<ClopenSet> = if complement.is_empty() { vec![u.clone()] } else { vec![u.clone(), complement] };
    let refined = tiling::castle_refine_by_partition(sys, &ow.castle, &partition)?;

    let mut parts: Vec<Vec<ClopenSet>> = vec![Vec::new(); m as usize];
    for t in &refined.towers {
        let inside: Vec<&GroupElement> = t
            .shape
            .iter()
            .filter(|s| sys.is_subset(&sys.translate(&t.base, s), u).unwrap_or(false))
            .collect();
        let per = inside.len() / m as usize;
        for (j, part) in parts.iter_mut().enumerate() {
            for s in &inside[j * per..(j + 1) * per] {
                part.push(sys.translate(&t.base, s));
            }
        }
    }
    let out: Vec<ClopenSet> = parts
        .iter()
        .map(|p| sys.union_all(p.iter()))
        .collect::<Result<_>>()?;
    let floor = &mu.hi / int(m as i64) - eta;
    for (j, p) in out.iter().enumerate() {
        if !sys.is_subset(p, u)? {
            return Err(Error::Verification(format!("part {j} leaves U")));
        }
        for q in &out[j + 1..] {
            if !sys.is_disjoint(p, q)? {
                return Err(Error::Verification(format!("part {j} overlaps a later part")));
            }
        }
        let d = sys.measure(p)?;
        if d.lo < floor {
            return Err(Error::Verification(format!(
                "part {j} has density {d}, below D(U)/m - η = {}",
                rational::format(&floor)
            )));
        }
    }
    Ok(out)
}

/// Bounds for a density claim used by the lower-density bookkeeping.
pub fn lower_density(sys: &SymbolicSystem, a: &ClopenSet) -> Result<Rational> {
    Ok(density::banach_density(sys, a)?.lo)
}
