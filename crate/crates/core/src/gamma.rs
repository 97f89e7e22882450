//! Layered tiles and the pair of orthogonal, almost invariant functions
//! witnessing uniform property Γ on odometers.

use std::collections::BTreeMap;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::dynsys::{ClopenSet, SymbolicSystem};
use crate::error::{Error, Result};
use crate::group::{set_display, FiniteSubset, GroupDescriptor, GroupElement};
use crate::rational::{self, int, Rational};
use crate::tiling::{self, verify_castle, Castle, QuasiTiling};

/// A function on `X` constant on the atoms of one grid level. Atoms absent
/// from `values` carry 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleFunction {
    pub level: u32,
    pub values: BTreeMap<usize, Rational>,
}

impl SimpleFunction {
    pub fn zero(level: u32) -> Self {
        SimpleFunction { level, values: BTreeMap::new() }
    }

    pub fn value(&self, atom: usize) -> Rational {
        self.values.get(&atom).cloned().unwrap_or_else(|| int(0))
    }

    pub fn sup_norm(&self) -> Rational {
        self.values.values().map(|v| v.abs()).max().unwrap_or_else(|| int(0))
    }

    pub fn support(&self, sys: &SymbolicSystem) -> Result<ClopenSet> {
        let atoms = sys.atoms(sys.level_frame(self.level))?;
        let mut mask = vec![false; atoms.len()];
        for (&i, v) in &self.values {
            if v != &int(0) {
                mask[i] = true;
            }
        }
        Ok(sys.from_mask(&atoms, &mask))
    }

    /// `α_s f = f(s^{-1} ·)`.
    pub fn translate(&self, sys: &SymbolicSystem, s: &GroupElement) -> Result<SimpleFunction> {
        let atoms = sys.atoms(sys.level_frame(self.level))?;
        let mut values = BTreeMap::new();
        for (&i, v) in &self.values {
            let j = sys
                .translate_atom(&atoms, i, s)
                .ok_or_else(|| Error::InvalidSystem("translation does not permute atoms".into()))?;
            values.insert(j, v.clone());
        }
        Ok(SimpleFunction { level: self.level, values })
    }

    pub fn sub(&self, other: &SimpleFunction) -> SimpleFunction {
        debug_assert_eq!(self.level, other.level);
        let mut values = self.values.clone();
        for (&i, v) in &other.values {
            let e = values.entry(i).or_insert_with(|| int(0));
            *e -= v;
        }
        SimpleFunction { level: self.level, values }
    }

    pub fn product(&self, other: &SimpleFunction) -> SimpleFunction {
        debug_assert_eq!(self.level, other.level);
        let values = self
            .values
            .iter()
            .filter_map(|(i, v)| other.values.get(i).map(|w| (*i, v * w)))
            .filter(|(_, v)| v != &int(0))
            .collect();
        SimpleFunction { level: self.level, values }
    }

    /// `μ(f · 1_A)` for the unique invariant measure (odometers only).
    pub fn integrate_on(&self, sys: &SymbolicSystem, a: &ClopenSet) -> Result<Rational> {
        let level = self.level.max(sys.frame_level(a.frame()));
        let fine = sys.atoms(sys.level_frame(level))?;
        let coarse = sys.atoms(sys.level_frame(self.level))?;
        let mu = sys
            .atom_measure(&fine)
            .ok_or_else(|| Error::InvalidSystem("exact integration needs an odometer".into()))?;
        let parent = sys.parent_map(&fine, &coarse)?;
        let inside = sys.mask(a, &fine)?;
        let mut total = int(0);
        for (i, p) in parent.iter().enumerate() {
            if inside[i] {
                if let Some(v) = self.values.get(p) {
                    total += v;
                }
            }
        }
        Ok(total * mu)
    }

    pub fn integral(&self, sys: &SymbolicSystem) -> Result<Rational> {
        self.integrate_on(sys, &sys.whole())
    }
}

/// `T_{Q} = ⋂_{s ∈ L^Q} sT` and the layers
/// `T_q = L^{Q-q} T_Q \ L^{Q-q-1} T_Q` for `q < Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayeredTile {
    pub tile: FiniteSubset,
    pub core: FiniteSubset,
    /// `layers[q]` for `q = 0..=Q`; `layers[Q]` is the core.
    pub layers: Vec<FiniteSubset>,
}

impl LayeredTile {
    pub fn q(&self) -> usize {
        self.layers.len() - 1
    }

    /// Layer index of `t`, if `t` lies in some layer.
    pub fn layer_of(&self, t: &GroupElement) -> Option<usize> {
        self.layers.iter().position(|l| l.contains(t))
    }
}

/// `L ∪ L^{-1} ∪ {e}`.
pub fn symmetrize(g: &GroupDescriptor, l: &FiniteSubset) -> FiniteSubset {
    let mut out = l.union(&g.inverse_set(l));
    out.insert(g.identity());
    out
}

fn power(g: &GroupDescriptor, l: &FiniteSubset, n: usize) -> FiniteSubset {
    let mut p: FiniteSubset = [g.identity()].into_iter().collect();
    for _ in 0..n {
        p = g.product_set(l, &p);
    }
    p
}

pub fn layer_tile(g: &GroupDescriptor, t: &FiniteSubset, l: &FiniteSubset, q: usize) -> Result<LayeredTile> {
    if q == 0 {
        return Err(Error::Precondition("Q must be at least 1".into()));
    }
    g.check_set(t)?;
    g.check_set(l)?;
    let l = symmetrize(g, l);
    let lq = power(g, &l, q);
    // x ∈ sT for all s ∈ L^Q iff L^Q x ⊆ T, as L^Q is symmetric.
    let core: FiniteSubset = t
        .iter()
        .filter(|x| lq.iter().all(|s| t.contains(&g.mul(s, x))))
        .cloned()
        .collect();
    if core.is_empty() {
        return Err(Error::Precondition(format!(
            "tile {} has empty core for L^{q}",
            set_display(t)
        )));
    }
    // grown[m] = L^m T_Q.
    let mut grown = vec![core.clone()];
    for m in 1..=q {
        let next = g.product_set(&l, &grown[m - 1]);
        grown.push(next);
    }
    let mut layers: Vec<FiniteSubset> = (0..q).map(|k| grown[q - k].difference(&grown[q - k - 1])).collect();
    layers.push(core.clone());
    let out = LayeredTile { tile: t.clone(), core, layers };
    verify_layers(g, &out, &l)?;
    Ok(out)
}

/// Layers disjoint, inside `T`, and `sT_q ⊆ T_{q-1} ∪ T_q ∪ T_{q+1}` for
/// `s ∈ L`, `q ≥ 1`.
pub fn verify_layers(g: &GroupDescriptor, lt: &LayeredTile, l: &FiniteSubset) -> Result<()> {
    let q = lt.q();
    let mut seen = FiniteSubset::new();
    for (k, layer) in lt.layers.iter().enumerate() {
        if !layer.is_subset(&lt.tile) {
            return Err(Error::Verification(format!("layer {k} leaves the tile")));
        }
        if !seen.intersection(layer).is_empty() {
            return Err(Error::Verification(format!("layer {k} meets an earlier layer")));
        }
        seen = seen.union(layer);
    }
    for k in 1..=q {
        let allowed = lt.layers[k - 1]
            .union(&lt.layers[k])
            .union(lt.layers.get(k + 1).unwrap_or(&FiniteSubset::new()));
        for s in l.iter() {
            if !g.left_translate(s, &lt.layers[k]).is_subset(&allowed) {
                return Err(Error::Verification(format!("{s} moves layer {k} more than one step")));
            }
        }
    }
    Ok(())
}

/// Smallest integer strictly above `1/ε`.
pub fn q_for(eps: &Rational) -> usize {
    (rational::floor_u64(&(int(1) / eps)) + 1) as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorNorm {
    pub s: GroupElement,
    pub k: u8,
    #[serde(with = "rational::text")]
    pub norm: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDeviation {
    pub member: usize,
    pub k: u8,
    #[serde(with = "rational::text")]
    pub trace: Rational,
    #[serde(with = "rational::text")]
    pub half_measure: Rational,
    #[serde(with = "rational::text")]
    pub deviation: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub q: usize,
    pub level: u32,
    pub orthogonal: bool,
    pub commutators: Vec<CommutatorNorm>,
    #[serde(with = "rational::text")]
    pub max_commutator: Rational,
    pub traces: Vec<TraceDeviation>,
    #[serde(with = "rational::text")]
    pub max_deviation: Rational,
    pub traces_symmetric: bool,
    /// Centers left unpaired (one per odd class).
    pub unpaired: usize,
    pub paired: usize,
    #[serde(with = "rational::text")]
    pub castle_density: Rational,
    #[serde(with = "rational::text")]
    pub min_tiling_coverage: Rational,
    /// Measure of the levels outside the tile cores.
    #[serde(with = "rational::text")]
    pub collar_measure: Rational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaWitness {
    pub f1: SimpleFunction,
    pub f2: SimpleFunction,
    pub report: GammaReport,
}

/// `f_k = Σ (q/Q) 1_{tcV_i}` over `t ∈ T_{j,q}` and centers `c` of class `k`,
/// where centers of each tile with equal `P`-itinerary are paired
/// alternately.
///
/// `tilings[i]` tiles the shape of tower `i`; every level must lie in one
/// member of `P`.
pub fn gamma_witness(
    sys: &SymbolicSystem,
    castle: &Castle,
    tilings: &[QuasiTiling],
    l: &FiniteSubset,
    eps: &Rational,
    partition: &[ClopenSet],
) -> Result<GammaWitness> {
    let SymbolicSystem::Odometer(_) = sys else {
        return Err(Error::InvalidSystem("Γ witnesses are certified on odometers".into()));
    };
    if eps <= &int(0) {
        return Err(Error::Precondition("ε must be positive".into()));
    }
    if tilings.len() != castle.towers.len() {
        return Err(Error::Precondition(format!(
            "{} tilings for {} towers",
            tilings.len(),
            castle.towers.len()
        )));
    }
    let g = sys.descriptor();
    g.check_set(l)?;
    tiling::check_partition(sys, partition)?;
    let check = verify_castle(sys, castle, None)?;
    if !check.valid() {
        return Err(Error::Verification("castle levels overlap or bases are empty".into()));
    }
    let q = q_for(eps);
    let sixth = eps / int(6);
    let density = check.density.lo.clone();
    if density < int(1) - &sixth {
        return Err(Error::Precondition(format!(
            "castle density {} is below 1 - ε/6 = {}",
            rational::format(&density),
            rational::format(&(int(1) - &sixth))
        )));
    }

    let mut level = sys.frame_level(castle.level_frame(sys));
    for p in partition {
        level = level.max(sys.frame_level(p.frame()));
    }
    let atoms = sys.atoms(sys.level_frame(level))?;
    let masks: Vec<Vec<bool>> = partition.iter().map(|p| sys.mask(p, &atoms)).collect::<Result<_>>()?;
    let color_of = |set: &ClopenSet| -> Result<usize> {
        let idx = sys.indices_in(set, &atoms)?;
        masks
            .iter()
            .position(|m| idx.iter().all(|&i| m[i]))
            .ok_or_else(|| Error::Precondition("a castle level meets two members of P; refine the castle first".into()))
    };

    let mut layered: BTreeMap<FiniteSubset, LayeredTile> = BTreeMap::new();
    let mut f = [SimpleFunction::zero(level), SimpleFunction::zero(level)];
    let mut min_cov = int(1);
    let (mut paired, mut unpaired) = (0usize, 0usize);
    let mut collar_atoms = 0usize;
    for (i, (tower, qt)) in castle.towers.iter().zip(tilings).enumerate() {
        let translates = qt.translates(&g);
        let mut covered = FiniteSubset::new();
        for tc in &translates {
            if !tc.is_subset(&tower.shape) || !covered.intersection(tc).is_empty() {
                return Err(Error::Precondition(format!("tiling of tower {i} is not a packing of its shape")));
            }
            covered = covered.union(tc);
        }
        let cov = rational::ratio(covered.len() as i64, tower.shape.len() as i64);
        if cov < int(1) - &sixth {
            return Err(Error::Precondition(format!(
                "tiling of tower {i} covers {} of its shape, below 1 - ε/6",
                rational::format(&cov)
            )));
        }
        if cov < min_cov {
            min_cov = cov;
        }
        // Class of a center: (tile, itinerary over the tile).
        let mut classes: BTreeMap<(usize, Vec<usize>), Vec<&GroupElement>> = BTreeMap::new();
        for p in &qt.placements {
            let t = &qt.tileset.tiles[p.tile];
            let sigma = t
                .iter()
                .map(|s| color_of(&sys.translate(&tower.base, &g.mul(s, &p.center))))
                .collect::<Result<Vec<_>>>()?;
            classes.entry((p.tile, sigma)).or_default().push(&p.center);
        }
        let base_atoms = sys.indices_in(&tower.base, &atoms)?;
        for ((tile, _), mut centers) in classes {
            centers.sort();
            let t = &qt.tileset.tiles[tile];
            if !layered.contains_key(t) {
                layered.insert(t.clone(), layer_tile(&g, t, l, q)?);
            }
            let lt = &layered[t];
            let pairs = centers.len() / 2;
            paired += 2 * pairs;
            unpaired += centers.len() % 2;
            for (n, c) in centers.iter().take(2 * pairs).enumerate() {
                let k = n % 2;
                for (layer, members) in lt.layers.iter().enumerate() {
                    if layer == 0 {
                        continue;
                    }
                    let value = rational::ratio(layer as i64, q as i64);
                    for s in members.iter() {
                        let shift = g.mul(s, c);
                        for &x in &base_atoms {
                            let y = sys.translate_atom(&atoms, x, &shift).expect("grid atoms");
                            f[k].values.insert(y, value.clone());
                        }
                    }
                }
                collar_atoms += (t.len() - lt.core.len()) * base_atoms.len();
            }
        }
    }
    let [f1, f2] = f;
    let report = gamma_report(sys, &f1, &f2, l, partition, q)?;
    let mu = sys.atom_measure(&atoms).expect("odometer atoms");
    let report = GammaReport {
        unpaired,
        paired,
        castle_density: density,
        min_tiling_coverage: min_cov,
        collar_measure: mu * int(collar_atoms as i64),
        ..report
    };
    if !report.orthogonal {
        return Err(Error::Verification("f1 and f2 overlap".into()));
    }
    if report.max_commutator > rational::ratio(1, q as i64) {
        return Err(Error::Verification(format!(
            "commutator norm {} exceeds 1/Q",
            rational::format(&report.max_commutator)
        )));
    }
    if &report.max_deviation >= eps {
        return Err(Error::Verification(format!(
            "trace deviation {} is not below ε",
            rational::format(&report.max_deviation)
        )));
    }
    Ok(GammaWitness { f1, f2, report })
}

/// Exact commutator norms, trace deviations and orthogonality of a pair.
pub fn gamma_report(
    sys: &SymbolicSystem,
    f1: &SimpleFunction,
    f2: &SimpleFunction,
    l: &FiniteSubset,
    partition: &[ClopenSet],
    q: usize,
) -> Result<GammaReport> {
    let orthogonal = f1.product(f2).values.is_empty();
    let mut commutators = Vec::new();
    let mut max_commutator = int(0);
    for (k, f) in [(1u8, f1), (2u8, f2)] {
        for s in l.iter() {
            let norm = f.translate(sys, s)?.sub(f).sup_norm();
            if norm > max_commutator {
                max_commutator = norm.clone();
            }
            commutators.push(CommutatorNorm { s: s.clone(), k, norm });
        }
    }
    let mut traces = Vec::new();
    let mut max_deviation = int(0);
    let mut traces_symmetric = true;
    for (member, a) in partition.iter().enumerate() {
        let half = sys.measure(a)?.lo / int(2);
        let t1 = f1.integrate_on(sys, a)?;
        let t2 = f2.integrate_on(sys, a)?;
        traces_symmetric &= t1 == t2;
        for (k, trace) in [(1u8, t1), (2u8, t2)] {
            let deviation = (&trace - &half).abs();
            if deviation > max_deviation {
                max_deviation = deviation.clone();
            }
            traces.push(TraceDeviation { member, k, trace, half_measure: half.clone(), deviation });
        }
    }
    Ok(GammaReport {
        q,
        level: f1.level,
        orthogonal,
        commutators,
        max_commutator,
        traces,
        max_deviation,
        traces_symmetric,
        unpaired: 0,
        paired: 0,
        castle_density: int(0),
        min_tiling_coverage: int(0),
        collar_measure: int(0),
    })
}

/// Refines `castle` by `P`, tiles every shape greedily by `tiles` and builds
/// the witness.
pub fn gamma_from_castle(
    sys: &SymbolicSystem,
    castle: &Castle,
    tiles: &[FiniteSubset],
    l: &FiniteSubset,
    eps: &Rational,
    partition: &[ClopenSet],
) -> Result<GammaWitness> {
    let g = sys.descriptor();
    let refined = tiling::castle_refine_by_partition(sys, castle, partition)?;
    let sixth = (eps / int(6)).min(rational::ratio(1, 3));
    let k = symmetrize(&g, l);
    let mut tilings = Vec::new();
    for t in &refined.towers {
        let qt = tiling::quasitile_unchecked(&g, &k, &int(1), &sixth, &t.shape, Some(tiles))?;
        tilings.push(qt);
    }
    gamma_witness(sys, &refined, &tilings, l, eps, partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use crate::tiling::Tower;

    fn z() -> GroupDescriptor {
        GroupDescriptor::z(1)
    }

    fn range(lo: i64, hi: i64) -> FiniteSubset {
        z().interval_box(lo, hi)
    }

    fn set(xs: &[i64]) -> FiniteSubset {
        xs.iter().map(|&x| GroupElement::new([x])).collect()
    }

    #[test]
    fn layers_of_an_interval() {
        let lt = layer_tile(&z(), &range(0, 16), &set(&[-1, 0, 1]), 4).unwrap();
        assert_eq!(lt.core, range(4, 12));
        for q in 0..4 {
            assert_eq!(lt.layers[q], set(&[q as i64, 15 - q as i64]));
        }
    }

    #[test]
    fn identity_layers() {
        let lt = layer_tile(&z(), &range(0, 8), &set(&[0]), 3).unwrap();
        assert_eq!(lt.core, range(0, 8));
        assert!(lt.layers[..3].iter().all(FiniteSubset::is_empty));
    }

    #[test]
    fn narrow_tile_has_empty_core() {
        assert!(matches!(
            layer_tile(&z(), &range(0, 4), &set(&[-1, 0, 1]), 4),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn heisenberg_layers_verify() {
        let h = GroupDescriptor::Heisenberg;
        let t = h.ball(4);
        let l: FiniteSubset = h.generators().into_iter().collect();
        let lt = layer_tile(&h, &t, &l, 1).unwrap();
        verify_layers(&h, &lt, &symmetrize(&h, &l)).unwrap();
    }

    #[test]
    fn q_is_strictly_above_inverse() {
        assert_eq!(q_for(&ratio(1, 5)), 6);
        assert_eq!(q_for(&ratio(1, 3)), 4);
        assert_eq!(q_for(&ratio(2, 7)), 4);
    }

    #[test]
    fn simple_function_algebra() {
        let sys = SymbolicSystem::dyadic();
        let f = SimpleFunction { level: 2, values: [(0, ratio(1, 2)), (1, int(1))].into() };
        let g = f.translate(&sys, &GroupElement::new([1])).unwrap();
        assert_eq!(g.value(1), ratio(1, 2));
        assert_eq!(g.value(2), int(1));
        assert_eq!(f.integral(&sys).unwrap(), ratio(3, 8));
        assert_eq!(f.integrate_on(&sys, &ClopenSet::grid(3, [1])).unwrap(), ratio(1, 8));
        assert_eq!(f.integrate_on(&sys, &ClopenSet::grid(3, [4])).unwrap(), ratio(1, 16));
        assert_eq!(f.sub(&g).sup_norm(), int(1));
    }

    #[test]
    fn dyadic_witness() {
        let sys = SymbolicSystem::dyadic();
        let castle = Castle::new(vec![Tower { base: ClopenSet::grid(9, [0]), shape: range(0, 512) }]);
        let partition: Vec<ClopenSet> = (0..4).map(|r| ClopenSet::grid(2, [r])).collect();
        let w = gamma_from_castle(&sys, &castle, &[range(0, 256)], &set(&[-1, 1]), &ratio(1, 5), &partition).unwrap();
        assert_eq!(w.report.q, 6);
        assert!(w.report.orthogonal);
        assert!(w.report.max_commutator <= ratio(1, 6));
        assert!(w.report.max_deviation < ratio(1, 5));
        assert!(w.report.traces_symmetric);
        assert_eq!(w.report.paired, 2);
    }

    #[test]
    fn odd_class_leaves_one_center() {
        let sys = SymbolicSystem::odometer(vec![vec![3]]).unwrap();
        let castle = Castle::new(vec![Tower { base: ClopenSet::grid(3, [0]), shape: range(0, 27) }]);
        let w = gamma_from_castle(&sys, &castle, &[range(0, 9)], &set(&[-1, 1]), &int(1), &[sys.whole()]).unwrap();
        assert_eq!(w.report.paired, 2);
        assert_eq!(w.report.unpaired, 1);
        assert_eq!(w.report.traces[0].trace, ratio(6, 27));
    }
}
