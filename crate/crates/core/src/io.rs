//! Versioned JSON artifacts: systems, clopen sets, castles, witnesses, Γ
//! function pairs, rotation runs and certificates.
//!
//! Every rational is stored as `"p/q"` text. Serializing a parsed artifact
//! reproduces the canonical bytes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::comparison::{ColoredWitness, Piece, SubequivalenceWitness};
use crate::dynsys::{ClopenSet, Frame, SymbolicSystem};
use crate::error::{Error, Result};
use crate::gamma::SimpleFunction;
use crate::group::{FiniteSubset, GroupElement};
use crate::rational::{self, Rational};
use crate::tiling::{Castle, Tower};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    Odometer { bases: Vec<Vec<u64>> },
    Substitution { rule: String },
}

impl SystemSpec {
    /// Accepts `dyadic`, `fibonacci`, `odometer:2`, `odometer:2,3;5`
    /// (one base cycle per coordinate), `substitution:a->ab; b->a`, or the
    /// JSON form.
    pub fn parse(text: &str) -> Result<Self> {
        let text: String = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join(" ");
        if text.starts_with('{') {
            return Ok(serde_json::from_str(&text)?);
        }
        let (kind, rest) = text.split_once(':').unwrap_or((text.as_str(), ""));
        let bad = |m: &str| Error::Parse(format!("system {text:?}: {m}"));
        match kind.trim() {
            "dyadic" => Ok(SystemSpec::Odometer { bases: vec![vec![2]] }),
            "fibonacci" => Ok(SystemSpec::Substitution { rule: "a->ab; b->a".into() }),
            "odometer" => {
                let bases = rest
                    .split(';')
                    .map(|coord| {
                        coord
                            .split(',')
                            .map(|b| b.trim().parse::<u64>().map_err(|_| bad("bad base")))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SystemSpec::Odometer { bases })
            }
            "substitution" => Ok(SystemSpec::Substitution { rule: rest.trim().to_string() }),
            _ => Err(bad("unknown kind")),
        }
    }

    pub fn build(&self) -> Result<SymbolicSystem> {
        match self {
            SystemSpec::Odometer { bases } => SymbolicSystem::odometer(bases.clone()),
            SystemSpec::Substitution { rule } => SymbolicSystem::substitution(rule),
        }
    }

    pub fn of(sys: &SymbolicSystem) -> Self {
        match sys {
            SymbolicSystem::Odometer(o) => SystemSpec::Odometer { bases: o.bases.clone() },
            SymbolicSystem::Substitution(s) => SystemSpec::Substitution { rule: s.rule() },
        }
    }
}

/// `{level, atoms}` for odometers (mixed-radix atom indices) or
/// `{anchor, length, words}` for cylinder unions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetDoc {
    Grid { level: u32, atoms: Vec<u64> },
    Window { anchor: i64, length: u32, words: Vec<String> },
}

pub fn set_to_doc(sys: &SymbolicSystem, a: &ClopenSet) -> SetDoc {
    match (sys, a) {
        (_, ClopenSet::Grid { level, atoms }) => {
            SetDoc::Grid { level: *level, atoms: atoms.iter().copied().collect() }
        }
        (SymbolicSystem::Substitution(s), ClopenSet::Window { lo, len, words }) => SetDoc::Window {
            anchor: *lo,
            length: *len,
            words: words.iter().map(|w| s.render(w)).collect(),
        },
        (SymbolicSystem::Odometer(_), ClopenSet::Window { lo, len, words }) => SetDoc::Window {
            anchor: *lo,
            length: *len,
            words: words.iter().map(|w| w.iter().map(|&c| char::from(b'0' + c)).collect()).collect(),
        },
    }
}

/// Rejects atoms that do not exist at the stated resolution.
pub fn set_from_doc(sys: &SymbolicSystem, doc: &SetDoc) -> Result<ClopenSet> {
    match (sys, doc) {
        (SymbolicSystem::Odometer(o), SetDoc::Grid { level, atoms }) => {
            let count = o.atom_count(*level);
            if let Some(bad) = atoms.iter().find(|&&i| i >= count) {
                return Err(Error::Parse(format!("atom {bad} out of range at level {level}")));
            }
            Ok(ClopenSet::grid(*level, atoms.iter().copied()))
        }
        (SymbolicSystem::Substitution(s), SetDoc::Window { anchor, length, words }) => {
            let language = sys.atoms(Frame::Window { lo: *anchor, len: *length })?;
            let mut parsed = Vec::with_capacity(words.len());
            for w in words {
                let word = s.parse_word(w)?;
                if word.len() != *length as usize
                    || !(0..language.len()).any(|i| language.word(i) == Some(&word[..]))
                {
                    return Err(Error::Parse(format!("{w:?} is not a legal word of length {length}")));
                }
                parsed.push(word);
            }
            let set = ClopenSet::cylinders(*anchor, parsed)?;
            Ok(match set {
                ClopenSet::Window { lo, words, .. } => ClopenSet::Window { lo, len: *length, words },
                other => other,
            })
        }
        _ => Err(Error::Parse("set representation does not match the system".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerDoc {
    pub base: SetDoc,
    pub shape: FiniteSubset,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CastleDoc {
    pub towers: Vec<TowerDoc>,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

pub fn castle_to_doc(sys: &SymbolicSystem, c: &Castle) -> CastleDoc {
    CastleDoc {
        towers: c
            .towers
            .iter()
            .map(|t| TowerDoc { base: set_to_doc(sys, &t.base), shape: t.shape.clone() })
            .collect(),
        provenance: c.provenance.clone(),
    }
}

pub fn castle_from_doc(sys: &SymbolicSystem, doc: &CastleDoc) -> Result<Castle> {
    let g = sys.descriptor();
    let mut towers = Vec::with_capacity(doc.towers.len());
    for t in &doc.towers {
        g.check_set(&t.shape)?;
        towers.push(Tower { base: set_from_doc(sys, &t.base)?, shape: t.shape.clone() });
    }
    Ok(Castle { towers, provenance: doc.provenance.clone() })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceDoc {
    pub set: SetDoc,
    pub mover: GroupElement,
    #[serde(default)]
    pub color: u32,
}

/// A subequivalence witness; `m` is present for colored witnesses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    pub source: SetDoc,
    pub target: SetDoc,
    pub pieces: Vec<PieceDoc>,
}

pub fn witness_to_doc(sys: &SymbolicSystem, w: &SubequivalenceWitness, m: Option<u32>) -> WitnessDoc {
    WitnessDoc {
        m,
        source: set_to_doc(sys, &w.source),
        target: set_to_doc(sys, &w.target),
        pieces: w
            .pieces
            .iter()
            .map(|p| PieceDoc { set: set_to_doc(sys, &p.set), mover: p.mover.clone(), color: p.color })
            .collect(),
    }
}

pub fn witness_from_doc(sys: &SymbolicSystem, doc: &WitnessDoc) -> Result<SubequivalenceWitness> {
    let g = sys.descriptor();
    let mut pieces = Vec::with_capacity(doc.pieces.len());
    for p in &doc.pieces {
        g.check(&p.mover)?;
        pieces.push(Piece { set: set_from_doc(sys, &p.set)?, mover: p.mover.clone(), color: p.color });
    }
    Ok(SubequivalenceWitness {
        source: set_from_doc(sys, &doc.source)?,
        target: set_from_doc(sys, &doc.target)?,
        pieces,
    })
}

pub fn colored_from_doc(sys: &SymbolicSystem, doc: &WitnessDoc) -> Result<ColoredWitness> {
    Ok(ColoredWitness { m: doc.m.unwrap_or(0), witness: witness_from_doc(sys, doc)? })
}

/// A finite family of clopen sets, e.g. a partition of `X` or the pieces of
/// an almost-divisibility split of `within`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within: Option<SetDoc>,
    pub sets: Vec<SetDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionDoc {
    pub level: u32,
    /// `[atom, value]` pairs for the nonzero values, atoms ascending.
    pub values: Vec<(u64, String)>,
}

pub fn function_to_doc(f: &SimpleFunction) -> FunctionDoc {
    FunctionDoc {
        level: f.level,
        values: f.values.iter().map(|(&i, v)| (i as u64, rational::format(v))).collect(),
    }
}

pub fn function_from_doc(sys: &SymbolicSystem, doc: &FunctionDoc) -> Result<SimpleFunction> {
    let SymbolicSystem::Odometer(o) = sys else {
        return Err(Error::Parse("simple functions live on odometers".into()));
    };
    let count = o.atom_count(doc.level);
    let mut values = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for &(i, ref v) in &doc.values {
        if i >= count {
            return Err(Error::Parse(format!("atom {i} out of range at level {}", doc.level)));
        }
        if !seen.insert(i) {
            return Err(Error::Parse(format!("atom {i} listed twice")));
        }
        let v = rational::parse(v)?;
        if v != rational::int(0) {
            values.insert(i as usize, v);
        }
    }
    Ok(SimpleFunction { level: doc.level, values })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaDoc {
    pub l: FiniteSubset,
    pub q: usize,
    #[serde(with = "rational::text")]
    pub eps: Rational,
    pub partition: Vec<SetDoc>,
    pub f1: FunctionDoc,
    pub f2: FunctionDoc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationDoc {
    pub alpha: String,
    pub depth: usize,
    pub folner: Vec<i64>,
    /// `uniform` or the cut points of one fixed partition.
    pub schedule: ScheduleDoc,
    pub samples: usize,
    pub locus: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleDoc {
    Uniform,
    Fixed(Vec<String>),
}

impl ScheduleDoc {
    /// `uniform` or `fixed:c1,c2,...`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t == "uniform" {
            return Ok(ScheduleDoc::Uniform);
        }
        match t.strip_prefix("fixed:") {
            Some(cuts) => Ok(ScheduleDoc::Fixed(cuts.split(',').map(|c| c.trim().to_string()).collect())),
            None => Err(Error::Parse(format!("schedule {t:?}: expected uniform or fixed:c1,c2,..."))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "lowercase")]
pub enum Payload {
    Castle(CastleDoc),
    Witness(WitnessDoc),
    Sets(SetsDoc),
    Gamma(GammaDoc),
    Rotation(RotationDoc),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Castle(_) => "castle",
            Payload::Witness(_) => "witness",
            Payload::Sets(_) => "sets",
            Payload::Gamma(_) => "gamma",
            Payload::Rotation(_) => "rotation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Artifact {
    pub fn new(sys: Option<&SymbolicSystem>, payload: Payload) -> Self {
        Artifact { schema_version: SCHEMA_VERSION, system: sys.map(SystemSpec::of), payload }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let a: Artifact = serde_json::from_str(text)?;
        if a.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema version {}", a.schema_version)));
        }
        Ok(a)
    }

    pub fn system(&self) -> Result<SymbolicSystem> {
        self.system
            .as_ref()
            .ok_or_else(|| Error::Parse(format!("{} artifact lacks a system", self.payload.kind())))?
            .build()
    }

    pub fn to_canonical(&self) -> String {
        to_canonical(self)
    }
}

/// Pretty JSON with a trailing newline; arrays of scalars stay on one line.
pub fn to_canonical<T: Serialize>(value: &T) -> String {
    let pretty = serde_json::to_string_pretty(value).expect("artifacts serialize");
    let mut out = String::with_capacity(pretty.len());
    // Open arrays: output offset and whether only scalars were seen.
    let mut open: Vec<(usize, bool)> = Vec::new();
    let (mut in_string, mut escaped) = (false, false);
    for ch in pretty.chars() {
        if in_string {
            out.push(ch);
            match (escaped, ch) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '[' | '{' => {
                if let Some(top) = open.last_mut() {
                    top.1 = false;
                }
            }
            _ => {}
        }
        out.push(ch);
        match ch {
            '[' => open.push((out.len(), true)),
            '{' => open.push((out.len(), false)),
            ']' | '}' => {
                if let Some((start, true)) = open.pop() {
                    let body: String = out[start..].split('\n').map(str::trim_start).collect();
                    out.truncate(start);
                    out.push_str(&body);
                }
            }
            _ => {}
        }
    }
    out.push('\n');
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Relation {
    pub fn holds(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Gt => lhs > rhs,
        }
    }
}

/// A named exact inequality `value relation bound`. Boolean facts are stored
/// as `1 = 1` or `0 = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Claim {
    pub name: String,
    pub value: String,
    pub relation: Relation,
    pub bound: String,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Claim {
    pub fn compare(name: impl Into<String>, value: &Rational, relation: Relation, bound: &Rational) -> Self {
        Claim {
            name: name.into(),
            value: rational::format(value),
            relation,
            bound: rational::format(bound),
            pass: relation.holds(value, bound),
            detail: String::new(),
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        let v = rational::int(i64::from(ok));
        Self::compare(name, &v, Relation::Eq, &rational::int(1))
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// Re-evaluates the stored comparison.
    pub fn recheck(&self) -> Result<bool> {
        Ok(self.relation.holds(&rational::parse(&self.value)?, &rational::parse(&self.bound)?))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    pub schema_version: u32,
    pub operation: String,
    /// SHA-256 of the canonical inputs, hex encoded.
    pub inputs_digest: String,
    pub claims: Vec<Claim>,
    pub pass: bool,
}

impl Certificate {
    pub fn new(operation: &str, inputs_digest: String, claims: Vec<Claim>) -> Self {
        let pass = claims.iter().all(|c| c.pass);
        Certificate { schema_version: SCHEMA_VERSION, operation: operation.into(), inputs_digest, claims, pass }
    }

    /// Every stored verdict agrees with its recomputed comparison.
    pub fn consistent(&self) -> Result<bool> {
        let mut all = true;
        for c in &self.claims {
            if c.recheck()? != c.pass {
                return Ok(false);
            }
            all &= c.pass;
        }
        Ok(all == self.pass)
    }
}
