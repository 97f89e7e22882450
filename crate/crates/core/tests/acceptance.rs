//! Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
//!
//! Every expected value is recomputed here from brute-force oracles in
//! `common`; library verifiers are exercised but never trusted alone.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::time::{Duration, Instant};

use castleforge::comparison::{match_to_partition, subequiv_greedy, verify_witness, SubequivalenceWitness};
use castleforge::dynsys::{ClopenSet, SymbolicSystem};
use castleforge::error::Error;
use castleforge::gamma::gamma_from_castle;
use castleforge::group::{FiniteSubset, GroupDescriptor, GroupElement};
use castleforge::io::{self, Artifact, Payload};
use castleforge::rational::{self as rat, Rational};
use castleforge::rotation::{
    build_refinement_sequence, composition_check, fibre_census, lattice_samples, sample_codings, Rotation, Schedule,
};
use castleforge::tiling::{clopen_castle_step, ow_castle, quasitile, verify_castle, Castle, OwOptions, Tower};
use common::*;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and sizes.
const C1_RUNTIME: Duration = Duration::from_secs(30);
const C2_INSTANCES: usize = 50;
const C2_MAX_LEVEL: u32 = 10;
const C3_INSTANCES_PER_GROUP: usize = 50;
const C4_POSITIVE: usize = 200;
const C4_NEGATIVE: usize = 50;
const C4_MAX_ATOMS: u64 = 64;
const C5_RESERVE: (i64, i64) = (1, 10);
const C5_REACH: i64 = 8;
const C7_MAX_LEVEL: u32 = 4;
const C7_WIDTH: (i64, i64) = (1, 1_000_000);
const C8_DEPTH: usize = 8;
const C8_SAMPLES: usize = 10_000;
const C10_MUTANTS: usize = 1000;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn f(q: &Rational) -> String {
    rat::format(q)
}

fn z1() -> GroupDescriptor {
    GroupDescriptor::z(1)
}

fn k_pm1() -> FiniteSubset {
    elems(&[-1, 1])
}

fn c1_castle() -> Result<(castleforge::tiling::OwCastle, Duration), String> {
    let t0 = Instant::now();
    let out = ow_castle(&SymbolicSystem::dyadic(), &k_pm1(), &q(1, 5), &q(1, 5), &OwOptions::default())
        .map_err(|e| e.to_string())?;
    Ok((out, t0.elapsed()))
}

/// `(1+β)^{-1}(1 - (1 - ε'(1+β))^m)` evaluated independently.
fn stage_bound(eps: &Q, beta: &Q, m: u64) -> Q {
    let one = Q::one();
    let inner = &one - eps * (&one + beta);
    let mut p = Q::one();
    for _ in 0..m {
        p *= &inner;
    }
    (&one - p) / (&one + beta)
}

fn criterion_1() -> Outcome {
    let (out, elapsed) = c1_castle()?;
    let o = Residues::dyadic();
    ensure!(elapsed < C1_RUNTIME, "took {elapsed:?}");
    let k = k_pm1();
    let mut worst = Q::zero();
    for t in &out.castle.towers {
        let d = defect(&t.shape, &k);
        ensure!(d < q(1, 5), "shape of size {} has defect {}", t.shape.len(), f(&d));
        worst = worst.max(d);
    }
    ensure!(castle_violation(&o, &out.castle).is_none(), "castle levels overlap");
    let level = out.castle.towers.iter().map(|t| set_level(&t.base)).max().unwrap_or(0);
    let covered = footprint_points(&o, &out.castle, level).len();
    let density = q(covered as i64, 1 << level);
    ensure!(density >= q(4, 5), "footprint density {}", f(&density));
    let r = &out.report;
    ensure!(!r.stages.is_empty(), "no stages logged");
    for s in &r.stages {
        let bound = stage_bound(&r.eps_internal, &r.beta, r.n + 1 - s.stage);
        ensure!(s.bound == bound, "stage {} logs bound {} but recomputation gives {}", s.stage, f(&s.bound), f(&bound));
        ensure!(s.density.lo >= bound, "stage {} density {} below {}", s.stage, s.density, f(&bound));
    }
    Ok(format!(
        "density {} >= 4/5, max defect {} < 1/5, eps' {}, n {}, beta {}, {} stage(s) meet the recursion bound, {:?}",
        f(&density),
        f(&worst),
        f(&r.eps_internal),
        r.n,
        f(&r.beta),
        r.stages.len(),
        elapsed
    ))
}

fn random_grid_set(rng: &mut ChaCha8Rng, o: &Residues, level: u32, p: f64) -> ClopenSet {
    let count: u64 = o.grid(level).iter().product();
    ClopenSet::grid(level, (0..count).filter(|_| rng.gen_bool(p)))
}

fn criterion_2() -> Outcome {
    let sys = SymbolicSystem::dyadic();
    let o = Residues::dyadic();
    let z = z1();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let epsilons = [q(1, 10), q(1, 4), q(2, 5)];
    let ball: Vec<i64> = (-6..=6).collect();
    let mut towers = 0;
    for inst in 0..C2_INSTANCES {
        let size = rng.gen_range(1..=8);
        let s = elems(&ball.choose_multiple(&mut rng, size).copied().collect::<Vec<_>>());
        let eps = epsilons.choose(&mut rng).unwrap().clone();
        let need = sys.freeness_level(&z.difference_set(&s)).map_err(|e| e.to_string())?;
        let level = rng.gen_range(need..=C2_MAX_LEVEL);
        let y_level = rng.gen_range(0..=level);
        let p = *[0.0, 0.1, 0.3, 0.6].choose(&mut rng).unwrap();
        let y = random_grid_set(&mut rng, &o, y_level, p);
        let castle = clopen_castle_step(&sys, &y, &s, &eps, level).map_err(|e| format!("instance {inst}: {e}"))?;
        towers += castle.towers.len();

        let top = castle.towers.iter().map(|t| set_level(&t.base)).chain([level, y_level]).max().unwrap();
        let eps_s = &eps * q(s.len() as i64, 1);
        for t in &castle.towers {
            ensure!(t.shape.is_subset(&s), "instance {inst}: shape leaves S");
            ensure!(q(t.shape.len() as i64, 1) >= (Q::one() - &eps) * q(s.len() as i64, 1), "instance {inst}: shape too small");
        }
        if !castle.towers.is_empty() {
            ensure!(castle_violation(&o, &castle).is_none(), "instance {inst}: {:?}", castle_violation(&o, &castle));
        }
        let a = footprint_points(&o, &castle, top);
        let full = Castle::new(castle.towers.iter().map(|t| Tower { base: t.base.clone(), shape: s.clone() }).collect());
        let sv = footprint_points(&o, &full, top);
        let pts = o.points(top);
        let in_y: HashSet<&Vec<u64>> = pts.iter().filter(|x| o.contains(&y, x)).collect();
        ensure!(a.iter().all(|x| !in_y.contains(x)), "instance {inst}: Y meets A");
        let lhs: BTreeSet<&Vec<u64>> = in_y.iter().copied().chain(a.iter()).collect();
        let rhs: BTreeSet<&Vec<u64>> = in_y.iter().copied().chain(sv.iter()).collect();
        ensure!(lhs == rhs, "instance {inst}: Y u A differs from Y u S.bases");
        for x in &pts {
            let hits = s.iter().filter(|g| lhs.contains(&o.shift(x, g, top))).count();
            ensure!(q(hits as i64, 1) >= eps_s, "instance {inst}: |(Y u A) n Sx| = {hits} at {x:?}");
        }
    }
    Ok(format!("{C2_INSTANCES} instances, {towers} towers, zero failures"))
}

/// `|{c ∈ E : T + c ⊄ E}| / |E|`.
fn inner_fraction(t: &FiniteSubset, e: &HashSet<GroupElement>) -> Q {
    let bad = e.iter().filter(|c| t.iter().any(|s| !e.contains(&add(s, c)))).count();
    q(bad as i64, e.len() as i64)
}

fn check_tiling(
    g: &GroupDescriptor,
    k: &FiniteSubset,
    delta: &Q,
    eps: &Q,
    e: &FiniteSubset,
    bases: Option<&[FiniteSubset]>,
) -> Result<Q, String> {
    let tiling = quasitile(g, k, delta, eps, e, bases).map_err(|err| err.to_string())?;
    let e_set: HashSet<&GroupElement> = e.iter().collect();
    let mut seen: HashSet<GroupElement> = HashSet::new();
    for p in &tiling.placements {
        let tile = &tiling.tileset.tiles[p.tile];
        for s in tile.iter() {
            let x = add(s, &p.center);
            ensure!(e_set.contains(&x), "tile leaves E at {x}");
            ensure!(seen.insert(x.clone()), "{x} covered twice");
        }
    }
    for t in &tiling.tileset.tiles {
        let d = defect(t, k);
        ensure!(&d < delta, "tile of size {} has defect {}", t.len(), f(&d));
    }
    let coverage = q(seen.len() as i64, e.len() as i64);
    ensure!(coverage >= Q::one() - eps, "coverage {}", f(&coverage));
    Ok(coverage)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let epsilons = [q(1, 5), q(1, 4)];
    let mut worst = Q::one();
    let mut skipped = 0;

    // Z: K = {-1, 1}, δ = 1/4, default base tile [0, n) with n the first
    // box whose defect is below min(δ, 1/2) / (2|K| + 2).
    let z = z1();
    let k = k_pm1();
    let delta = q(1, 4);
    let margin = &delta / q(6, 1);
    let n = (1..).find(|&n| defect(&range(0, n), &k) < margin).unwrap();
    let tile = range(0, n);
    let mut done = 0;
    while done < C3_INSTANCES_PER_GROUP {
        let eps = epsilons.choose(&mut rng).unwrap().clone();
        let lo = rng.gen_range(-1000..1000);
        let e = range(lo, lo + rng.gen_range(150..700));
        let e_set: HashSet<GroupElement> = e.iter().cloned().collect();
        if inner_fraction(&tile, &e_set) > eps {
            skipped += 1;
            continue;
        }
        let cov = check_tiling(&z, &k, &delta, &eps, &e, None).map_err(|m| format!("Z, |E| = {}: {m}", e.len()))?;
        worst = worst.min(cov);
        done += 1;
    }

    // Z^2: K = {(1,0), (0,1)}, δ = 1/2, base tile the 5x5 box.
    let z2 = GroupDescriptor::z(2);
    let k2: FiniteSubset = [GroupElement::new([1, 0]), GroupElement::new([0, 1])].into_iter().collect();
    let delta2 = q(1, 2);
    let tile2 = z2.box_set(5);
    ensure!(defect(&tile2, &k2) < delta2, "5x5 box is not invariant");
    let mut done = 0;
    while done < C3_INSTANCES_PER_GROUP {
        let eps = epsilons.choose(&mut rng).unwrap().clone();
        let (x0, y0) = (rng.gen_range(-50..50), rng.gen_range(-50..50));
        let (w, h) = (rng.gen_range(30..80), rng.gen_range(30..80));
        let e: FiniteSubset = (x0..x0 + w)
            .flat_map(|x| (y0..y0 + h).map(move |y| GroupElement::new([x, y])))
            .collect();
        let e_set: HashSet<GroupElement> = e.iter().cloned().collect();
        if inner_fraction(&tile2, &e_set) > eps {
            skipped += 1;
            continue;
        }
        let bases = [tile2.clone()];
        let cov = check_tiling(&z2, &k2, &delta2, &eps, &e, Some(&bases)).map_err(|m| format!("Z^2, {w}x{h}: {m}"))?;
        worst = worst.min(cov);
        done += 1;
    }
    Ok(format!(
        "{} boxes tiled, min coverage {}, {skipped} sampled boxes failed the precondition and were redrawn",
        2 * C3_INSTANCES_PER_GROUP,
        f(&worst)
    ))
}

struct Quotient {
    sys: SymbolicSystem,
    o: Residues,
    levels: std::ops::RangeInclusive<u32>,
    movers: Vec<GroupElement>,
}

fn quotients() -> Vec<Quotient> {
    let z1m: Vec<GroupElement> = (-2..=2).map(|x| GroupElement::new([x])).collect();
    let z2m: Vec<GroupElement> = (-1..=1).flat_map(|x| (-1..=1).map(move |y| GroupElement::new([x, y]))).collect();
    vec![
        Quotient { sys: SymbolicSystem::dyadic(), o: Residues::dyadic(), levels: 3..=6, movers: z1m.clone() },
        Quotient {
            sys: SymbolicSystem::odometer(vec![vec![3]]).unwrap(),
            o: Residues { bases: vec![vec![3]] },
           
            levels: 2..=3,
            movers: z1m,
        },
        Quotient {
            sys: SymbolicSystem::odometer(vec![vec![2], vec![2]]).unwrap(),
            o: Residues { bases: vec![vec![2], vec![2]] },
           
            levels: 2..=3,
            movers: z2m,
        },
    ]
}

fn neg_add(a: &GroupElement, b: &GroupElement) -> GroupElement {
    add(&neg(a), b)
}

/// `c`, `μ(A)`, `μ(B)`, `max |A ∩ F^-1F x|`, `min |B ∩ F x|` by enumeration.
fn c4_stats(qt: &Quotient, a: &ClopenSet, b: &ClopenSet, fset: &FiniteSubset, level: u32) -> (Q, Q, Q, usize, usize) {
    let ff: BTreeSet<GroupElement> = fset.iter().flat_map(|x| fset.iter().map(move |y| neg_add(x, y))).collect();
    let c = q(ff.len() as i64, fset.len() as i64);
    let pts = qt.o.points(level);
    let max_a = pts
        .iter()
        .map(|x| ff.iter().filter(|g| qt.o.contains(a, &qt.o.shift(x, g, level))).count())
        .max()
        .unwrap_or(0);
    let min_b = pts
        .iter()
        .map(|x| fset.iter().filter(|g| qt.o.contains(b, &qt.o.shift(x, g, level))).count())
        .min()
        .unwrap_or(0);
    (c, qt.o.measure(a, level), qt.o.measure(b, level), max_a, min_b)
}

/// Whether some witness with movers in `F` exists: Hall's condition on the
/// level-`level` quotient, which lifts unchanged to every finer level.
fn c4_feasible(qt: &Quotient, a: &ClopenSet, b: &ClopenSet, fset: &FiniteSubset, level: u32) -> bool {
    let pts = qt.o.points(level);
    let left: Vec<&Vec<u64>> = pts.iter().filter(|x| qt.o.contains(a, x)).collect();
    let right: Vec<&Vec<u64>> = pts.iter().filter(|x| qt.o.contains(b, x)).collect();
    let index: BTreeMap<&Vec<u64>, usize> = right.iter().enumerate().map(|(i, x)| (*x, i)).collect();
    let adj: Vec<Vec<usize>> = left
        .iter()
        .map(|x| fset.iter().filter_map(|g| index.get(&qt.o.shift(x, g, level)).copied()).collect())
        .collect();
    kuhn(&adj, right.len()) == left.len()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let qs = quotients();
    let (mut positive, mut negative, mut density_only, mut density_only_ok) = (0, 0, 0, 0);
    let mut draws = 0;
    while positive < C4_POSITIVE || negative < C4_NEGATIVE {
        draws += 1;
        ensure!(draws < 200_000, "sampler stalled at {positive} positive, {negative} negative");
        let qt = qs.choose(&mut rng).unwrap();
        let level = rng.gen_range(qt.levels.clone());
        let atoms: u64 = qt.o.grid(level).iter().product();
        ensure!(atoms <= C4_MAX_ATOMS, "quotient with {atoms} atoms");
        let fsize = rng.gen_range(1..=3);
        let fset: FiniteSubset = qt.movers.choose_multiple(&mut rng, fsize).cloned().collect();
        let want_positive = positive < C4_POSITIVE && (negative >= C4_NEGATIVE || rng.gen_bool(0.8));
        let (pa, pb) = if want_positive { (0.15, 0.8) } else { (0.6, 0.3) };
        let a = random_grid_set(&mut rng, &qt.o, level, pa);
        let b = random_grid_set(&mut rng, &qt.o, level, pb);
        if a.is_empty() {
            continue;
        }
        let (c, mu_a, mu_b, max_a, min_b) = c4_stats(qt, &a, &b, &fset, level);
        let density_ok = &c * &mu_a < mu_b;
        let greedy = subequiv_greedy(&qt.sys, &a, &b, &fset);
        if want_positive && density_ok {
            density_only += 1;
            density_only_ok += usize::from(greedy.is_ok());
            if max_a >= min_b {
                continue;
            }
            let w = greedy.map_err(|e| format!("greedy failed on a valid instance: {e}"))?;
            let report = verify_witness(&qt.sys, &w).map_err(|e| e.to_string())?;
            ensure!(report.valid, "library verifier rejects: {:?}", report.problems);
            ensure!(witness_violation(&qt.o, &w).is_none(), "oracle rejects: {:?}", witness_violation(&qt.o, &w));
            positive += 1;
        } else if !want_positive && !density_ok && !c4_feasible(qt, &a, &b, &fset, level) {
            match greedy {
                Err(Error::CoverageFailure(_)) => negative += 1,
                Err(e) => return Err(format!("infeasible instance failed with the wrong error: {e}")),
                Ok(_) => return Err("bogus witness on an infeasible instance".into()),
            }
        }
    }
    Ok(format!(
        "{positive} valid instances solved and verified, {negative} infeasible instances reported as coverage failures; \
         greedy also solved {density_only_ok}/{density_only} instances that met only the density condition"
    ))
}

fn criterion_5() -> Outcome {
    let (c1, _) = c1_castle()?;
    let sys = SymbolicSystem::dyadic();
    let o = Residues::dyadic();
    let r = q(C5_RESERVE.0, C5_RESERVE.1);
    let fset = range(-C5_REACH, C5_REACH + 1);
    let level = c1.castle.towers.iter().map(|t| set_level(&t.base)).max().unwrap();
    let total = q(1 << level, 1);
    let remainder = Q::one() - q(footprint_points(&o, &c1.castle, level).len() as i64, 1) / &total;
    let mut reserve = Q::zero();
    for t in &c1.castle.towers {
        let slots = (&r * q(t.shape.len() as i64, 1)).floor();
        reserve += slots * o.measure(&t.base, level);
    }
    ensure!(reserve >= q(2, 1) * &remainder, "reserve {} below twice the remainder {}", f(&reserve), f(&remainder));
    let k = k_pm1();
    let out = match_to_partition(&sys, &c1.castle, &fset, &r, Some(&k)).map_err(|e| e.to_string())?;
    ensure!(castle_violation(&o, &out.castle).is_none(), "matched castle overlaps");
    let top = out.castle.towers.iter().map(|t| set_level(&t.base)).max().unwrap();
    let covered = footprint_points(&o, &out.castle, top).len();
    ensure!(covered == 1 << top, "footprint covers {covered} of {} points", 1u64 << top);
    let worst = out.castle.towers.iter().map(|t| defect(&t.shape, &k)).max().unwrap();
    let bound = q(1, 5) + &r * q(2, 1);
    ensure!(worst <= bound, "defect {} exceeds {}", f(&worst), f(&bound));
    ensure!(out.report.max_defect.as_deref() == Some(f(&worst).as_str()), "reported defect disagrees");
    Ok(format!(
        "remainder {} matched into reserve {}, footprint = X, realized defect {} <= {}",
        f(&remainder),
        f(&reserve),
        f(&worst),
        f(&bound)
    ))
}

fn criterion_6() -> Outcome {
    let sys = SymbolicSystem::dyadic();
    let level = 9u32;
    let castle = Castle::new(vec![Tower { base: ClopenSet::grid(level, [0]), shape: range(0, 1 << level) }]);
    let partition: Vec<ClopenSet> = (0..4).map(|r| ClopenSet::grid(2, [r])).collect();
    let l = k_pm1();
    let eps = q(1, 5);
    let w = gamma_from_castle(&sys, &castle, &[range(0, 1 << (level - 1))], &l, &eps, &partition)
        .map_err(|e| e.to_string())?;
    ensure!(w.report.q == 6, "Q = {}", w.report.q);
    let n = 1usize << w.f1.level;
    let value = |fun: &castleforge::gamma::SimpleFunction, i: usize| fun.values.get(&i).cloned().unwrap_or_else(Q::zero);
    for i in 0..n {
        ensure!((value(&w.f1, i) * value(&w.f2, i)).is_zero(), "f1 f2 != 0 at atom {i}");
    }
    let mut comm = Q::zero();
    for fun in [&w.f1, &w.f2] {
        for s in [1usize, n - 1] {
            for i in 0..n {
                comm = comm.max((value(fun, (i + s) % n) - value(fun, i)).abs());
            }
        }
    }
    ensure!(comm <= q(1, 6), "commutator norm {}", f(&comm));
    let mut dev = Q::zero();
    for r in 0..4 {
        for fun in [&w.f1, &w.f2] {
            let trace: Q = (0..n).filter(|i| i % 4 == r).map(|i| value(fun, i)).sum::<Q>() / q(n as i64, 1);
            dev = dev.max((trace - q(1, 8)).abs());
        }
    }
    ensure!(dev < eps, "trace deviation {}", f(&dev));
    ensure!(w.report.max_commutator == comm && w.report.max_deviation == dev, "report disagrees with recomputation");
    Ok(format!(
        "f1 f2 = 0, max commutator {} <= 1/6, max trace deviation {} < 1/5, {} tile classes paired",
        f(&comm),
        f(&dev),
        w.report.paired
    ))
}

/// Whether `lo <= (3 - √5)/2 <= hi`, decided by squaring.
fn encloses_inverse_phi_squared(lo: &Q, hi: &Q) -> bool {
    let five = q(5, 1);
    let three = q(3, 1);
    // x <= (3 - √5)/2  iff  √5 <= 3 - 2x.
    let below = |x: &Q| {
        let t = &three - x * q(2, 1);
        !t.is_negative() && &t * &t >= five
    };
    let above = |x: &Q| {
        let t = &three - x * q(2, 1);
        t.is_negative() || &t * &t <= five
    };
    below(lo) && above(hi)
}

fn criterion_7() -> Outcome {
    let sys = SymbolicSystem::dyadic();
    let mut checked = 0usize;
    for k in 0..=C7_MAX_LEVEL {
        let window = range(0, 1 << k);
        for level in 0..=k {
            let atoms = 1u64 << level;
            for mask in 0u64..(1 << atoms) {
                let a = ClopenSet::grid(level, (0..atoms).filter(|i| mask >> i & 1 == 1));
                let exact = q(mask.count_ones() as i64, atoms as i64);
                let (lo, hi) =
                    castleforge::density::window_density_bounds(&sys, &a, &window).map_err(|e| e.to_string())?;
                ensure!(lo == exact && hi == exact, "level {level} set {mask:b} at [0,2^{k}): ({}, {})", f(&lo), f(&hi));
                checked += 1;
            }
        }
    }

    // Interval power iteration of [[1,1],[1,0]]: F_{n-1}/F_{n+1} brackets 1/φ².
    let fib = SymbolicSystem::fibonacci();
    let (mut a, mut b) = (Q::one(), Q::one());
    let mut ratios = Vec::new();
    for _ in 0..60 {
        let next = &a + &b;
        ratios.push(&a / &next);
        a = b;
        b = next;
    }
    let (olo, ohi) = {
        let (x, y) = (&ratios[ratios.len() - 2], &ratios[ratios.len() - 1]);
        (x.clone().min(y.clone()), x.clone().max(y.clone()))
    };
    ensure!(encloses_inverse_phi_squared(&olo, &ohi), "oracle bracket is wrong");
    let b_cyl = ClopenSet::cylinders(0, [vec![1u8]]).map_err(|e| e.to_string())?;
    let a_cyl = ClopenSet::cylinders(0, [vec![0u8]]).map_err(|e| e.to_string())?;
    let mb = fib.measure(&b_cyl).map_err(|e| e.to_string())?;
    let ma = fib.measure(&a_cyl).map_err(|e| e.to_string())?;
    let width_cap = q(C7_WIDTH.0, C7_WIDTH.1);
    ensure!(mb.width() <= width_cap && ma.width() <= width_cap, "interval widths {} {}", f(&ma.width()), f(&mb.width()));
    ensure!(encloses_inverse_phi_squared(&mb.lo, &mb.hi), "mu([b]) = {mb} misses 1/phi^2");
    ensure!(mb.lo <= ohi && olo <= mb.hi, "mu([b]) disjoint from the oracle bracket");
    // μ([a]) = 1 - μ([b]) = 1/φ.
    let one_minus = (Q::one() - &mb.hi, Q::one() - &mb.lo);
    ensure!(ma.lo <= one_minus.1 && one_minus.0 <= ma.hi, "mu([a]) = {ma} is not 1 - mu([b])");
    Ok(format!(
        "{checked} window/set pairs exact; mu([b]) in {mb} (width {:.2e}) encloses 1/phi^2, mu([a]) in {ma} encloses 1/phi",
        rat::to_f64(&mb.width())
    ))
}

fn criterion_8() -> Outcome {
    let rot = Rotation::golden();
    let folner = vec![vec![-1, 0, 1]];
    let tree = build_refinement_sequence(&rot, &Schedule::Uniform, &folner, C8_DEPTH).map_err(|e| e.to_string())?;

    // Endpoints r + nα are kept as pairs (r mod 1, n); α irrational makes the
    // pairing injective.
    let cuts = |k: usize| -> BTreeSet<(Q, i64)> { (0..=k as i64).map(|j| (q(j, k as i64 + 1), 0)).collect() };
    let mut e = cuts(1);
    for k in 2..=C8_DEPTH {
        let mut next = cuts(k);
        for (r, n) in &e {
            for s in [-1, 0, 1] {
                next.insert((r.clone(), n + s));
            }
        }
        e = next;
    }
    let e: BTreeSet<(Q, i64)> = e.into_iter().map(|(r, n)| (if r == Q::one() { Q::zero() } else { r }, n)).collect();

    let census = fibre_census(&tree);
    ensure!(census.locus_matches_endpoints, "library: locus differs from the accumulated endpoints");
    ensure!(census.locus.len() == e.len(), "locus has {} points, oracle counts {}", census.locus.len(), e.len());
    ensure!(census.lebesgue_measure.is_zero(), "locus measure");
    ensure!(census.basis_ok, "basis boundary check failed");

    let comp = composition_check(&tree);
    ensure!(comp.checked > 0 && comp.failures.is_empty(), "composition rule: {:?}", comp.failures);

    let samples = sample_codings(&tree, &lattice_samples(C8_SAMPLES));
    ensure!(samples.inconsistent.is_empty(), "inconsistent codings: {:?}", samples.inconsistent);
    ensure!(samples.separation_failures == 0, "{} separation failures", samples.separation_failures);
    ensure!(samples.singleton == C8_SAMPLES - samples.boundary_skipped, "sample accounting");
    ensure!(samples.singleton >= C8_SAMPLES * 99 / 100, "only {} non-boundary samples", samples.singleton);
    let last = census.levels.last().unwrap();
    Ok(format!(
        "locus = accumulated endpoints, {} points, measure 0; Q_8 has {} arcs / {} cells; composition rule on {} cells; {} samples coded consistently",
        e.len(),
        last.arcs,
        last.members,
        comp.checked,
        samples.singleton
    ))
}

fn criterion_9() -> Outcome {
    let z2 = GroupDescriptor::z(2);
    let cross: FiniteSubset =
        [[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]].into_iter().map(GroupElement::new).collect();
    let delta = q(1, 10);
    let c = q(9, 2);
    let fset = z2.property_star_search(&cross, &delta, &c, 200).map_err(|e| e.to_string())?;
    let ff: FiniteSubset = fset.iter().flat_map(|x| fset.iter().map(move |y| neg_add(x, y))).collect();
    ensure!(q(ff.len() as i64, 1) <= &c * q(fset.len() as i64, 1), "|F^-1 F| = {} > c|F|", ff.len());
    let (d1, d2) = (defect(&fset, &cross), defect(&ff, &cross));
    ensure!(d1 < delta && d2 < delta, "defects {} {}", f(&d1), f(&d2));
    let side = (fset.len() as f64).sqrt() as i64;
    ensure!(fset == z2.box_set(side as u64), "F is not a box");
    Ok(format!("F = [0,{side})^2, |F^-1 F| = {}, defects {} and {} < 1/10", ff.len(), f(&d1), f(&d2)))
}

fn mutate(rng: &mut ChaCha8Rng, v: &mut serde_json::Value) -> &'static str {
    use serde_json::Value;
    fn sets(v: &Value, path: String, out: &mut Vec<String>) {
        match v {
            Value::Object(m) if m.contains_key("level") && m.contains_key("atoms") => out.push(path),
            Value::Object(m) => m.iter().for_each(|(k, x)| sets(x, format!("{path}/{k}"), out)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| sets(x, format!("{path}/{i}"), out)),
            _ => {}
        }
    }
    let data = v.get_mut("data").expect("payload");
    let kind = rng.gen_range(0..4);
    let mut found = Vec::new();
    sets(data, String::new(), &mut found);
    let path = found[rng.gen_range(0..found.len())].clone();
    match kind {
        0 | 1 => {
            let s = data.pointer_mut(&path).unwrap();
            let level = s["level"].as_u64().unwrap();
            let count = 1u64 << level.min(12);
            let atom = rng.gen_range(0..count.max(1));
            let atoms = s["atoms"].as_array_mut().unwrap();
            if let Some(pos) = atoms.iter().position(|a| a.as_u64() == Some(atom)) {
                atoms.remove(pos);
            } else {
                atoms.push(atom.into());
                atoms.sort_by_key(|a| a.as_u64());
            }
            "atom flip"
        }
        2 => {
            if let Some(pieces) = data.get_mut("pieces").and_then(Value::as_array_mut) {
                if pieces.len() >= 2 && rng.gen_bool(0.5) {
                    let i = rng.gen_range(0..pieces.len());
                    let j = (i + rng.gen_range(1..pieces.len())) % pieces.len();
                    let (mi, mj) = (pieces[i]["mover"].clone(), pieces[j]["mover"].clone());
                    pieces[i]["mover"] = mj;
                    pieces[j]["mover"] = mi;
                } else if !pieces.is_empty() {
                    let i = rng.gen_range(0..pieces.len());
                    let mover = pieces[i]["mover"].as_array_mut().unwrap();
                    let c = rng.gen_range(0..mover.len());
                    let x = mover[c].as_i64().unwrap() + if rng.gen_bool(0.5) { 1 } else { -1 };
                    mover[c] = x.into();
                }
                "mover swap"
            } else {
                let towers = data["towers"].as_array_mut().unwrap();
                let i = rng.gen_range(0..towers.len());
                let shape = towers[i]["shape"].as_array_mut().unwrap();
                let rank = shape.first().map_or(1, |e| e.as_array().unwrap().len());
                let g: Vec<i64> = (0..rank).map(|_| rng.gen_range(-3..300)).collect();
                let gv: Value = g.into();
                if let Some(pos) = shape.iter().position(|e| *e == gv) {
                    shape.remove(pos);
                } else {
                    shape.push(gv);
                }
                "shape edit"
            }
        }
        _ => {
            let s = data.pointer_mut(&path).unwrap();
            let level = s["level"].as_u64().unwrap();
            s["level"] = (if rng.gen_bool(0.5) { level + 1 } else { level.saturating_sub(1) }).into();
            "level shift"
        }
    }
}

fn criterion_10() -> Outcome {
    let dyadic = SymbolicSystem::dyadic();
    let o = Residues::dyadic();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut originals: Vec<String> = Vec::new();
    let (c1, _) = c1_castle()?;
    originals.push(Artifact::new(Some(&dyadic), Payload::Castle(io::castle_to_doc(&dyadic, &c1.castle))).to_canonical());
    let step = clopen_castle_step(&dyadic, &ClopenSet::grid(3, [1, 6]), &elems(&[0, 1, 2, 3]), &q(1, 4), 5)
        .map_err(|e| e.to_string())?;
    originals.push(Artifact::new(Some(&dyadic), Payload::Castle(io::castle_to_doc(&dyadic, &step))).to_canonical());
    for (a, b, fs) in [
        (ClopenSet::grid(4, [0, 5, 9]), ClopenSet::grid(4, (0..16).filter(|i| i % 3 != 0)), elems(&[0, 1, -1, 2])),
        (ClopenSet::grid(5, [2, 3, 17, 30]), ClopenSet::grid(3, [0, 1, 2, 4, 5, 6]), elems(&[0, 1, 2])),
    ] {
        let w = subequiv_greedy(&dyadic, &a, &b, &fs).map_err(|e| e.to_string())?;
        originals.push(Artifact::new(Some(&dyadic), Payload::Witness(io::witness_to_doc(&dyadic, &w, None))).to_canonical());
    }
    for text in &originals {
        ensure!(verdict(text, &o)? == (true, true), "an unmutated artifact fails verification");
    }

    let (mut rejected_bad, mut accepted_good, mut rejected_good, mut parse_rejects) = (0, 0, 0, 0);
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for i in 0..C10_MUTANTS {
        let text = originals.choose(&mut rng).unwrap();
        let original: serde_json::Value = serde_json::from_str(text).unwrap();
        let mut v = original.clone();
        let kind = mutate(&mut rng, &mut v);
        *kinds.entry(kind).or_default() += 1;
        let mutated = io::to_canonical(&v);
        if v == original {
            accepted_good += 1;
            continue;
        }
        match verdict(&mutated, &o) {
            Err(_) => parse_rejects += 1,
            Ok((verifier, oracle)) => match (verifier, oracle) {
                (true, false) => return Err(format!("mutant {i} ({kind}) accepted despite violating an invariant")),
                (false, false) => rejected_bad += 1,
                (true, true) => accepted_good += 1,
                (false, true) => rejected_good += 1,
            },
        }
    }
    ensure!(rejected_good == 0, "{rejected_good} harmless mutants were rejected");
    Ok(format!(
        "{C10_MUTANTS} mutants {kinds:?}: {parse_rejects} rejected at parse, {rejected_bad} invariant violations rejected, \
         {accepted_good} harmless mutants accepted, zero false accepts"
    ))
}

/// `(library verifier accepts, oracle finds no violation)`; parse failures
/// are errors.
fn verdict(text: &str, o: &Residues) -> Result<(bool, bool), String> {
    let art = Artifact::parse(text).map_err(|e| e.to_string())?;
    let sys = art.system().map_err(|e| e.to_string())?;
    match &art.payload {
        Payload::Castle(doc) => {
            let castle = io::castle_from_doc(&sys, doc).map_err(|e| e.to_string())?;
            let report = verify_castle(&sys, &castle, None).map_err(|e| e.to_string())?;
            Ok((report.valid(), castle_violation(o, &castle).is_none()))
        }
        Payload::Witness(doc) => {
            let w: SubequivalenceWitness = io::witness_from_doc(&sys, doc).map_err(|e| e.to_string())?;
            let report = verify_witness(&sys, &w).map_err(|e| e.to_string())?;
            Ok((report.valid, witness_violation(o, &w).is_none()))
        }
        _ => Err("unexpected payload".into()),
    }
}

#[test]
fn acceptance() {
    type Criterion = (u32, &'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (1, "ow_castle on the dyadic odometer", criterion_1),
        (2, "clopen castle step postconditions", criterion_2),
        (3, "quasitiling coverage", criterion_3),
        (4, "greedy subequivalence vs oracle", criterion_4),
        (5, "match_to_partition", criterion_5),
        (6, "gamma witness", criterion_6),
        (7, "density machinery", criterion_7),
        (8, "rotation coding tree", criterion_8),
        (9, "property (*) search", criterion_9),
        (10, "witness integrity fuzzing", criterion_10),
    ];
    // Written to the raw handle so the lines survive the test harness capture.
    let mut out = std::io::stdout().lock();
    let mut failed = Vec::new();
    for (n, name, run) in criteria {
        let t0 = Instant::now();
        let line = match run() {
            Ok(detail) => format!("criterion {n:>2} PASS  {name}: {detail} [{:.1?}]", t0.elapsed()),
            Err(why) => {
                failed.push(n);
                format!("criterion {n:>2} FAIL  {name}: {why} [{:.1?}]", t0.elapsed())
            }
        };
        writeln!(out, "{line}").expect("stdout");
    }
    drop(out);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
