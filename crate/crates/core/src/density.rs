//! Banach densities of clopen sets.
//!
//! For a free action `|A ∩ Fx| = sum_{s in F} 1_A(sx)`, so window bounds are
//! a min/max of exact counts over the atoms of a frame fine enough that each
//! translate `s.x` lands inside or outside `A` as a whole.

use serde::{Deserialize, Serialize};

use crate::dynsys::{Atoms, ClopenSet, SymbolicSystem};
use crate::error::{Error, Result};
use crate::group::FiniteSubset;
use crate::rational::{self, Interval, Rational};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub exact: Interval,
    #[serde(with = "rational::text")]
    pub window_lo: Rational,
    #[serde(with = "rational::text")]
    pub window_hi: Rational,
    pub window: FiniteSubset,
}

/// Atoms of a frame resolving `s.x` against every set in `sets` for `s` in `f`,
/// refined at least to the freeness level of `f`.
pub fn sweep_atoms(sys: &SymbolicSystem, sets: &[&ClopenSet], f: &FiniteSubset) -> Result<Atoms> {
    let diff = sys.descriptor().difference_set(f);
    let mut frame = sys.level_frame(sys.freeness_level(&diff)?);
    for a in sets {
        frame = sys.cover_frame(frame, a.frame(), f);
    }
    sys.atoms(frame)
}

/// `counts[i] = |A ∩ F x_i|` for every atom `x_i` of `atoms`.
pub fn hit_counts(
    sys: &SymbolicSystem,
    a: &ClopenSet,
    f: &FiniteSubset,
    atoms: &Atoms,
) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; atoms.len()];
    for s in f.iter() {
        for (c, hit) in counts.iter_mut().zip(sys.pullback(a, s, atoms)?) {
            *c += hit as usize;
        }
    }
    Ok(counts)
}

pub fn window_density_bounds(
    sys: &SymbolicSystem,
    a: &ClopenSet,
    f: &FiniteSubset,
) -> Result<(Rational, Rational)> {
    if f.is_empty() {
        return Err(Error::EmptySet("window"));
    }
    let atoms = sweep_atoms(sys, &[a], f)?;
    let counts = hit_counts(sys, a, f, &atoms)?;
    let n = f.len() as i64;
    let lo = *counts.iter().min().expect("atoms partition X") as i64;
    let hi = *counts.iter().max().expect("atoms partition X") as i64;
    Ok((rational::ratio(lo, n), rational::ratio(hi, n)))
}

/// Equal to the measure of `A` for clopen sets under unique ergodicity.
pub fn banach_density(sys: &SymbolicSystem, a: &ClopenSet) -> Result<Interval> {
    sys.measure(a)
}

pub fn density_report(sys: &SymbolicSystem, a: &ClopenSet, f: &FiniteSubset) -> Result<DensityReport> {
    let (window_lo, window_hi) = window_density_bounds(sys, a, f)?;
    Ok(DensityReport {
        exact: banach_density(sys, a)?,
        window_lo,
        window_hi,
        window: f.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarCheck {
    pub holds: bool,
    pub diagnostic: Option<String>,
}

/// Tests `|(KA Δ A) ∩ Fx| < δ |A ∩ Fx|` at every atom `x`.
pub fn kdelta_star_check(
    sys: &SymbolicSystem,
    a: &ClopenSet,
    k: &FiniteSubset,
    delta: &Rational,
    f: &FiniteSubset,
) -> Result<StarCheck> {
    if f.is_empty() {
        return Err(Error::EmptySet("window"));
    }
    let translates: Vec<ClopenSet> = k.iter().map(|g| sys.translate(a, g)).collect();
    let ka = sys.union_all(translates.iter())?;
    let sym = sys.union_all(
        [
            sys.combine(crate::dynsys::SetOp::Minus, &ka, a)?,
            sys.combine(crate::dynsys::SetOp::Minus, a, &ka)?,
        ]
        .iter(),
    )?;
    let atoms = sweep_atoms(sys, &[a, &sym], f)?;
    let hits = hit_counts(sys, a, f, &atoms)?;
    let bad = hit_counts(sys, &sym, f, &atoms)?;
    for i in 0..atoms.len() {
        if hits[i] == 0 {
            return Ok(StarCheck {
                holds: false,
                diagnostic: Some(format!(
                    "A misses F x at atom {}; window too small",
                    sys.format_atom(&atoms, i)
                )),
            });
        }
        if rational::int(bad[i] as i64) >= delta * rational::int(hits[i] as i64) {
            return Ok(StarCheck {
                holds: false,
                diagnostic: Some(format!(
                    "atom {}: |(KA Δ A) ∩ Fx| = {} is not below δ|A ∩ Fx| = {}",
                    sys.format_atom(&atoms, i),
                    bad[i],
                    rational::format(&(delta * rational::int(hits[i] as i64)))
                )),
            });
        }
    }
    Ok(StarCheck { holds: true, diagnostic: None })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub index: u64,
    #[serde(with = "rational::text")]
    pub lo: Rational,
    #[serde(with = "rational::text")]
    pub hi: Rational,
}

/// Window bounds along the Følner family at the given indices.
pub fn density_curve(sys: &SymbolicSystem, a: &ClopenSet, indices: &[u64]) -> Result<Vec<CurveRow>> {
    let family = sys.descriptor().folner();
    indices
        .iter()
        .map(|&index| {
            let (lo, hi) = window_density_bounds(sys, a, &family.member(index))?;
            Ok(CurveRow { index, lo, hi })
        })
        .collect()
}

/// Conclusion of the lower-density estimate used in the castle recursion:
/// `D(A) >= (1 - ε(1+δ)) D(B) + ε`, decided on certified enclosures.
pub fn lower_density_step_holds(
    sys: &SymbolicSystem,
    a: &ClopenSet,
    b: &ClopenSet,
    eps: &Rational,
    delta: &Rational,
) -> Result<bool> {
    let one = rational::int(1);
    let da = sys.measure(a)?;
    let db = sys.measure(b)?;
    let factor = &one - eps * (&one + delta);
    let bound = if factor >= rational::int(0) { &factor * &db.hi } else { &factor * &db.lo } + eps;
    Ok(da.lo >= bound)
}
