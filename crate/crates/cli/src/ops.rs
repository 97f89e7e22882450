//! One operation per config: build the object, derive its claims.

use std::fs;
use std::path::{Path, PathBuf};

use castleforge::comparison::{almost_divisible, match_to_partition, subequiv_greedy, subequiv_precondition, verify_witness};
use castleforge::config::{parse_set, RunConfig};
use castleforge::density::density_curve;
use castleforge::dynsys::{ClopenSet, SymbolicSystem};
use castleforge::gamma::{gamma_from_castle, q_for};
use castleforge::group::{FiniteSubset, GroupDescriptor, GroupElement};
use castleforge::io::{self, Artifact, Claim, GammaDoc, Payload, Relation, RotationDoc, ScheduleDoc, SetsDoc};
use castleforge::rational::{self, int, ratio, Rational};
use castleforge::certify::rotation_claims;
use castleforge::rotation::QuadraticIrrational;
use castleforge::tiling::{ow_castle, quasitile, verify_castle, verify_quasitiling, Castle, OwOptions, Tower};
use castleforge::{Error, Result};
use sha2::{Digest, Sha256};

pub const OPERATIONS: &[&str] = &["castle", "tile", "subequiv", "match", "divide", "gamma", "rotate", "density"];

pub struct Outcome {
    /// Serialized result, written to `--out` or stdout.
    pub output: String,
    pub claims: Vec<Claim>,
    pub notes: Vec<String>,
    pub digest: String,
}

/// Input files read during a run, hashed with the config.
#[derive(Default)]
struct Inputs {
    files: Vec<(String, String)>,
}

impl Inputs {
    fn read(&mut self, path: &Path) -> Result<String> {
        let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        self.files.push((path.display().to_string(), text.clone()));
        Ok(text)
    }

    fn digest(&self, cfg: &RunConfig) -> String {
        let mut h = Sha256::new();
        h.update(cfg.canonical());
        for (name, text) in &self.files {
            h.update(format!("\n--- {name}\n"));
            h.update(text);
        }
        hex::encode(h.finalize())
    }
}

/// `--system` accepts a file holding a spec or the spec itself.
pub fn system_text(arg: &str) -> Result<String> {
    let p = PathBuf::from(arg);
    if p.is_file() {
        return fs::read_to_string(&p).map_err(|e| Error::Parse(format!("{arg}: {e}")));
    }
    Ok(arg.to_string())
}

fn need<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Parse(format!("missing parameter {key}")))
}

fn rat(cfg: &RunConfig, key: &str) -> Result<Rational> {
    need(cfg.rational(key)?, key)
}

fn subset(cfg: &RunConfig, key: &str) -> Result<FiniteSubset> {
    need(cfg.subset(key)?, key)
}

fn uint(cfg: &RunConfig, key: &str) -> Result<Option<u64>> {
    cfg.integer("params", key)
}

fn system(cfg: &RunConfig) -> Result<SymbolicSystem> {
    need(cfg.system()?, "system")
}

fn set(cfg: &RunConfig, sys: &SymbolicSystem, key: &str) -> Result<ClopenSet> {
    parse_set(sys, need(cfg.param(key), key)?)
}

fn artifact_input(cfg: &RunConfig, inputs: &mut Inputs, key: &str) -> Result<Artifact> {
    let path = need(cfg.param(key), key)?;
    Artifact::parse(&inputs.read(Path::new(path))?)
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let op = need(cfg.operation(), "operation")?;
    let mut inputs = Inputs::default();
    let (output, claims, notes) = match op {
        "castle" => castle(cfg)?,
        "tile" => tile(cfg)?,
        "subequiv" => subequiv(cfg)?,
        "match" => matching(cfg, &mut inputs)?,
        "divide" => divide(cfg)?,
        "gamma" => gamma(cfg, &mut inputs)?,
        "rotate" => rotate(cfg)?,
        "density" => density(cfg)?,
        other => return Err(Error::Parse(format!("unknown operation {other:?}; expected one of {OPERATIONS:?}"))),
    };
    Ok(Outcome { output, claims, notes, digest: inputs.digest(cfg) })
}

type Run = (String, Vec<Claim>, Vec<String>);

fn castle(cfg: &RunConfig) -> Result<Run> {
    let sys = system(cfg)?;
    let k = subset(cfg, "K")?;
    let delta = rat(cfg, "delta")?;
    let eps = rat(cfg, "eps")?;
    let mut opts = OwOptions::default();
    if let Some(b) = uint(cfg, "index_bound")? {
        opts.index_bound = b;
    }
    let out = ow_castle(&sys, &k, &delta, &eps, &opts)?;
    let check = verify_castle(&sys, &out.castle, Some(&k))?;
    let r = &out.report;
    let mut claims = vec![
        Claim::holds("levels pairwise disjoint", check.disjoint),
        Claim::holds("bases nonempty", check.empty_bases.is_empty()),
        Claim::compare("max shape defect", &r.max_defect, Relation::Lt, &delta),
        Claim::compare("footprint density", &check.density.lo, Relation::Ge, &(int(1) - &eps)),
    ];
    for s in &r.stages {
        claims.push(Claim::compare(format!("stage {} density", s.stage), &s.density.lo, Relation::Ge, &s.bound));
    }
    let notes = vec![format!(
        "eps' = {}, n = {}, beta = {}, level {}, towers: {}",
        rational::format(&r.eps_internal),
        r.n,
        rational::format(&r.beta),
        r.level,
        out.castle.towers.len()
    )];
    let text = Artifact::new(Some(&sys), Payload::Castle(io::castle_to_doc(&sys, &out.castle))).to_canonical();
    Ok((text, claims, notes))
}

fn tile(cfg: &RunConfig) -> Result<Run> {
    let g: GroupDescriptor = match cfg.param("group") {
        Some(text) => text.parse()?,
        None => cfg.system()?.map(|s| s.descriptor()).unwrap_or(GroupDescriptor::z(1)),
    };
    let k = subset(cfg, "K")?;
    let delta = rat(cfg, "delta")?;
    let eps = rat(cfg, "eps")?;
    let side = need(uint(cfg, "box")?, "box")?;
    let e = g.box_set(side);
    let bases = match cfg.param("tile").and_then(|t| t.strip_prefix("box:")) {
        Some(n) => Some(vec![g.box_set(n.trim().parse().map_err(|_| Error::Parse(format!("bad tile box {n:?}")))?)]),
        None => cfg.subset("tile")?.map(|t| vec![t]),
    };
    let tiling = quasitile(&g, &k, &delta, &eps, &e, bases.as_deref())?;
    let mut claims = vec![
        Claim::holds("tiles disjoint inside E", verify_quasitiling(&g, &e, &tiling, &eps).is_ok()),
        Claim::compare("coverage", &tiling.coverage(), Relation::Ge, &(int(1) - &eps)),
    ];
    for (i, t) in tiling.tileset.tiles.iter().enumerate() {
        claims.push(Claim::compare(format!("tile {i} defect"), &g.invariance_defect(t, &k)?, Relation::Lt, &delta));
    }
    let mut notes = vec![format!("{} placements, {} of {} covered", tiling.placements.len(), tiling.covered, tiling.total)];
    if let Some(c) = cfg.rational("c")? {
        let bound = uint(cfg, "index_bound")?.unwrap_or(256);
        let f = g.property_star_search(&k, &delta, &c, bound)?;
        let ff = g.difference_set(&f);
        claims.push(Claim::compare("(*) box defect", &g.invariance_defect(&f, &k)?, Relation::Lt, &delta));
        claims.push(Claim::compare("(*) F^-1F defect", &g.invariance_defect(&ff, &k)?, Relation::Lt, &delta));
        claims.push(Claim::compare(
            "(*) |F^-1F| / |F|",
            &ratio(ff.len() as i64, f.len() as i64),
            Relation::Le,
            &c,
        ));
        notes.push(format!("(*) box with {} elements", f.len()));
    }
    Ok((io::to_canonical(&tiling), claims, notes))
}

fn subequiv(cfg: &RunConfig) -> Result<Run> {
    let sys = system(cfg)?;
    let a = set(cfg, &sys, "A")?;
    let b = set(cfg, &sys, "B")?;
    let f = subset(cfg, "F")?;
    let pre = subequiv_precondition(&sys, &a, &b, &f)?;
    let notes = vec![format!(
        "c = {}, mu(A) = {}, mu(B) = {}, density condition {}, max |A n F^-1F x| = {}, min |B n F x| = {}",
        rational::format(&pre.c),
        pre.density_a,
        pre.density_b,
        if pre.density_ok { "holds" } else { "fails" },
        pre.max_a_hits,
        pre.min_b_hits
    )];
    let w = subequiv_greedy(&sys, &a, &b, &f)?;
    let report = verify_witness(&sys, &w)?;
    let claims = vec![
        Claim::holds("witness valid", report.valid).with_detail(report.problems.join("; ")),
        Claim::compare("pieces", &int(w.pieces.len() as i64), Relation::Le, &int(f.len() as i64)),
    ];
    let text = Artifact::new(Some(&sys), Payload::Witness(io::witness_to_doc(&sys, &w, None))).to_canonical();
    Ok((text, claims, notes))
}

fn matching(cfg: &RunConfig, inputs: &mut Inputs) -> Result<Run> {
    let art = artifact_input(cfg, inputs, "castle")?;
    let sys = art.system()?;
    let Payload::Castle(doc) = &art.payload else {
        return Err(Error::Parse("match needs a castle artifact".into()));
    };
    let castle = io::castle_from_doc(&sys, doc)?;
    let f = subset(cfg, "F")?;
    let reserve = rat(cfg, "reserve")?;
    let k = cfg.subset("K")?;
    let out = match_to_partition(&sys, &castle, &f, &reserve, k.as_ref())?;
    let check = verify_castle(&sys, &out.castle, k.as_ref())?;
    let r = &out.report;
    let mut claims = vec![
        Claim::holds("levels pairwise disjoint", check.disjoint),
        Claim::compare("footprint density", &check.density.lo, Relation::Eq, &int(1)),
        Claim::compare("reserve density", &r.reserve_density.lo, Relation::Ge, &(int(2) * &r.remainder_density.hi)),
    ];
    if let (Some(d), Some(delta)) = (&check.max_defect, cfg.rational("delta")?) {
        let bound = &delta + int(2) * &reserve;
        claims.push(Claim::compare("max shape defect", &rational::parse(d)?, Relation::Le, &bound));
    }
    let notes = vec![format!(
        "{} uncovered atoms matched into {} reserve atoms at level {}",
        r.uncovered_atoms, r.reserve_atoms, r.level
    )];
    let text = Artifact::new(Some(&sys), Payload::Castle(io::castle_to_doc(&sys, &out.castle))).to_canonical();
    Ok((text, claims, notes))
}

fn divide(cfg: &RunConfig) -> Result<Run> {
    let sys = system(cfg)?;
    let u = set(cfg, &sys, "U")?;
    let m = need(uint(cfg, "m")?, "m")?;
    let eta = rat(cfg, "eta")?;
    let m = u32::try_from(m).map_err(|_| Error::Parse("m is too large".into()))?;
    let parts = almost_divisible(&sys, &u, m, &eta)?;
    let mu = sys.measure(&u)?;
    let floor = &mu.lo / int(m as i64) - &eta;
    let mut claims = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        claims.push(Claim::holds(format!("U_{} inside U", i + 1), sys.is_subset(p, &u)?));
        claims.push(Claim::compare(format!("mu(U_{})", i + 1), &sys.measure(p)?.lo, Relation::Ge, &floor));
        for (j, q) in parts.iter().enumerate().skip(i + 1) {
            claims.push(Claim::holds(format!("U_{} and U_{} disjoint", i + 1, j + 1), sys.is_disjoint(p, q)?));
        }
    }
    let doc = SetsDoc { within: Some(io::set_to_doc(&sys, &u)), sets: parts.iter().map(|p| io::set_to_doc(&sys, p)).collect() };
    let text = Artifact::new(Some(&sys), Payload::Sets(doc)).to_canonical();
    Ok((text, claims, vec![format!("mu(U) = {mu}")]))
}

/// One tower over atom 0 of `level` whose shape is the full period box.
fn period_castle(sys: &SymbolicSystem, level: u32) -> Result<(Castle, Vec<i64>)> {
    let SymbolicSystem::Odometer(o) = sys else {
        return Err(Error::InvalidSystem("the period castle needs an odometer".into()));
    };
    let grid: Vec<i64> = o.grid(level).into_iter().map(|n| n as i64).collect();
    let shape = box_of(&grid);
    Ok((Castle::new(vec![Tower { base: ClopenSet::grid(level, [0]), shape }]), grid))
}

fn box_of(sides: &[i64]) -> FiniteSubset {
    let mut out = vec![Vec::new()];
    for &n in sides {
        out = out
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                (0..n).map(move |x| {
                    let mut p = p.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(GroupElement::new).collect()
}

fn gamma(cfg: &RunConfig, inputs: &mut Inputs) -> Result<Run> {
    let l = subset(cfg, "L")?;
    let eps = rat(cfg, "eps")?;
    let (sys, castle, sides) = match cfg.param("castle") {
        Some(_) => {
            let art = artifact_input(cfg, inputs, "castle")?;
            let sys = art.system()?;
            let Payload::Castle(doc) = &art.payload else {
                return Err(Error::Parse("gamma needs a castle artifact".into()));
            };
            let castle = io::castle_from_doc(&sys, doc)?;
            (sys, castle, None)
        }
        None => {
            let sys = system(cfg)?;
            let (castle, sides) = period_castle(&sys, need(uint(cfg, "level")?, "level")? as u32)?;
            (sys, castle, Some(sides))
        }
    };
    let tiles = match (cfg.subset("tile")?, sides) {
        (Some(t), _) => vec![t],
        (None, Some(sides)) => vec![box_of(&sides.iter().map(|n| (n / 2).max(1)).collect::<Vec<_>>())],
        (None, None) => return Err(Error::Parse("missing parameter tile".into())),
    };
    let partition: Vec<ClopenSet> = match (cfg.param("partition"), uint(cfg, "partition_level")?) {
        (Some(path), _) => {
            let art = Artifact::parse(&inputs.read(Path::new(path))?)?;
            let Payload::Sets(doc) = &art.payload else {
                return Err(Error::Parse("partition file must hold a sets artifact".into()));
            };
            doc.sets.iter().map(|d| io::set_from_doc(&sys, d)).collect::<Result<_>>()?
        }
        (None, Some(level)) => {
            let SymbolicSystem::Odometer(o) = &sys else {
                return Err(Error::InvalidSystem("level partitions need an odometer".into()));
            };
            (0..o.atom_count(level as u32)).map(|i| ClopenSet::grid(level as u32, [i])).collect()
        }
        (None, None) => return Err(Error::Parse("missing parameter partition or partition_level".into())),
    };
    let w = gamma_from_castle(&sys, &castle, &tiles, &l, &eps, &partition)?;
    let r = &w.report;
    let q = q_for(&eps);
    let claims = vec![
        Claim::holds("f1 f2 = 0", r.orthogonal),
        Claim::compare("max commutator norm", &r.max_commutator, Relation::Le, &ratio(1, q as i64)),
        Claim::compare("max trace deviation", &r.max_deviation, Relation::Lt, &eps),
    ];
    let notes = vec![format!(
        "Q = {}, level {}, {} classes paired, {} unpaired, castle density {}",
        r.q,
        r.level,
        r.paired,
        r.unpaired,
        rational::format(&r.castle_density)
    )];
    let doc = GammaDoc {
        l,
        q: r.q,
        eps,
        partition: partition.iter().map(|p| io::set_to_doc(&sys, p)).collect(),
        f1: io::function_to_doc(&w.f1),
        f2: io::function_to_doc(&w.f2),
    };
    Ok((Artifact::new(Some(&sys), Payload::Gamma(doc)).to_canonical(), claims, notes))
}

/// `-1,0,1` for every level, or `a,b;c,d` level by level.
pub fn parse_folner(text: &str) -> Result<Vec<Vec<i64>>> {
    text.split(';')
        .map(|level| {
            level
                .split(',')
                .map(|x| x.trim().parse::<i64>().map_err(|_| Error::Parse(format!("bad Følner set {text:?}"))))
                .collect()
        })
        .collect()
}

fn rotate(cfg: &RunConfig) -> Result<Run> {
    let alpha = match cfg.param("alpha") {
        Some(a) => QuadraticIrrational::parse(a)?,
        None => QuadraticIrrational::golden(),
    };
    let folner = match cfg.param("folner") {
        Some(f) => parse_folner(f)?,
        None => vec![vec![-1, 0, 1]],
    };
    if folner.len() > 1 {
        return Err(Error::Parse("rotation artifacts record a single Følner set".into()));
    }
    let mut doc = RotationDoc {
        alpha: alpha.to_string(),
        depth: need(uint(cfg, "depth")?, "depth")? as usize,
        folner: folner[0].clone(),
        schedule: cfg.param("schedule").map(ScheduleDoc::parse).transpose()?.unwrap_or(ScheduleDoc::Uniform),
        samples: uint(cfg, "samples")?.unwrap_or(10_000) as usize,
        locus: Vec::new(),
    };
    let (claims, notes, locus) = rotation_claims(&doc)?;
    doc.locus = locus;
    Ok((Artifact::new(None, Payload::Rotation(doc)).to_canonical(), claims, notes))
}

/// `0,1,2` or an inclusive range `0..=12`.
fn parse_indices(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Parse(format!("bad window list {text:?}"));
    if let Some((lo, hi)) = text.split_once("..=") {
        let (lo, hi): (u64, u64) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
        return Ok((lo..=hi).collect());
    }
    text.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn density(cfg: &RunConfig) -> Result<Run> {
    let sys = system(cfg)?;
    let a = set(cfg, &sys, "A")?;
    let indices = parse_indices(cfg.param("windows").unwrap_or("0..=8"))?;
    let rows = density_curve(&sys, &a, &indices)?;
    let mu = sys.measure(&a)?;
    let mut table = String::from("index\tlo\thi\tlo_approx\thi_approx\n");
    let mut claims = Vec::new();
    for r in &rows {
        table.push_str(&format!(
            "{}\t{}\t{}\t{:.9}\t{:.9}\n",
            r.index,
            rational::format(&r.lo),
            rational::format(&r.hi),
            rational::to_f64(&r.lo),
            rational::to_f64(&r.hi)
        ));
        claims.push(Claim::compare(format!("window {} lower bound", r.index), &r.lo, Relation::Le, &mu.hi));
        claims.push(Claim::compare(format!("window {} upper bound", r.index), &r.hi, Relation::Ge, &mu.lo));
    }
    Ok((table, claims, vec![format!("mu(A) = {mu}")]))
}
