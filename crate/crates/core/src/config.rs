//! Run configuration: `key = value` lines grouped under `[section]` headers.
//!
//! ```text
//! [system]
//! spec = dyadic
//!
//! [run]
//! operation = castle
//!
//! [params]
//! K = -1;1
//! delta = 1/5
//! eps = 1/5
//!
//! [output]
//! out = castle.json
//! ```
//!
//! Unknown sections and keys are errors. Rationals are exact (`p/q` or a
//! finite decimal).

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::dynsys::{ClopenSet, SymbolicSystem};
use crate::error::{Error, Result};
use crate::group::FiniteSubset;
use crate::io::{self, SetDoc};
use crate::rational::{self, Rational};

const SECTIONS: &[(&str, &[&str])] = &[
    ("system", &["spec"]),
    ("run", &["operation", "jobs", "seedless"]),
    (
        "params",
        &[
            "K", "delta", "eps", "n", "m", "L", "Q", "depth", "F", "reserve", "eta", "A", "B", "U",
            "level", "tile", "partition_level", "alpha", "folner", "samples", "schedule", "windows",
            "group", "box", "index_bound", "c", "castle", "partition",
        ],
    ),
    ("output", &["out", "certificate"]),
];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<(String, String), String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section: Option<&str> = None;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |m: String| Error::Parse(format!("line {}: {m}", no + 1));
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                section = Some(
                    SECTIONS
                        .iter()
                        .find(|(s, _)| *s == name)
                        .map(|(s, _)| *s)
                        .ok_or_else(|| at(format!("unknown section [{name}]")))?,
                );
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| at("expected key = value".into()))?;
            let key = key.trim();
            let sec = section.ok_or_else(|| at(format!("key {key:?} outside a section")))?;
            let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(at(format!("unknown key {key:?} in [{sec}]")));
            }
            if values.insert((sec.to_string(), key.to_string()), value.trim().to_string()).is_some() {
                return Err(at(format!("duplicate key {key:?}")));
            }
        }
        let cfg = RunConfig { values };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Type-checks every present value.
    fn validate(&self) -> Result<()> {
        for (sec, key) in self.values.keys() {
            match (sec.as_str(), key.as_str()) {
                ("params", "delta" | "eps" | "reserve" | "eta" | "c") => {
                    self.rational(key)?;
                }
                ("params", "n" | "m" | "Q" | "depth" | "level" | "partition_level" | "samples" | "index_bound")
                | ("run", "jobs") => {
                    self.integer(sec, key)?;
                }
                ("params", "tile") if self.param(key).is_some_and(|t| t.starts_with("box:")) => {}
                ("params", "K" | "L" | "F" | "tile") => {
                    self.subset(key)?;
                }
                ("run", "seedless") => {
                    self.flag(sec, key)?;
                }
                ("system", "spec") => {
                    io::SystemSpec::parse(self.get(sec, key).unwrap_or_default())?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) -> Result<()> {
        let allowed = SECTIONS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k);
        if !allowed.is_some_and(|k| k.contains(&key)) {
            return Err(Error::Parse(format!("unknown key {key:?} in [{section}]")));
        }
        self.values.insert((section.to_string(), key.to_string()), value.into());
        Ok(())
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.get("params", key)
    }

    pub fn operation(&self) -> Option<&str> {
        self.get("run", "operation")
    }

    pub fn system(&self) -> Result<Option<SymbolicSystem>> {
        self.get("system", "spec").map(|s| io::SystemSpec::parse(s)?.build()).transpose()
    }

    pub fn rational(&self, key: &str) -> Result<Option<Rational>> {
        self.param(key).map(rational::parse).transpose()
    }

    pub fn integer(&self, section: &str, key: &str) -> Result<Option<u64>> {
        self.get(section, key)
            .map(|v| v.parse::<u64>().map_err(|_| Error::Parse(format!("{key} = {v:?} is not a nonnegative integer"))))
            .transpose()
    }

    pub fn subset(&self, key: &str) -> Result<Option<FiniteSubset>> {
        self.param(key).map(FiniteSubset::parse).transpose()
    }

    pub fn flag(&self, section: &str, key: &str) -> Result<Option<bool>> {
        self.get(section, key)
            .map(|v| match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Parse(format!("{key} = {v:?} is not a boolean"))),
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get("output", key).map(PathBuf::from)
    }

    /// Sorted `[section]` / `key = value` text; equal configs render equally.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for ((sec, key), value) in &self.values {
            if sec != current {
                out.push_str(&format!("[{sec}]\n"));
                current = sec;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}

/// Compact set notation: `level:i,j,...` for odometer atoms and
/// `@anchor:word,word,...` for cylinders; `all` and `none` also work.
pub fn parse_set(sys: &SymbolicSystem, text: &str) -> Result<ClopenSet> {
    let text = text.trim();
    match text {
        "all" => return Ok(sys.whole()),
        "none" => return Ok(sys.empty()),
        _ => {}
    }
    if text.starts_with('{') {
        let doc: SetDoc = serde_json::from_str(text)?;
        return io::set_from_doc(sys, &doc);
    }
    let bad = || Error::Parse(format!("bad set {text:?}"));
    let (head, body) = text.split_once(':').ok_or_else(bad)?;
    let items = body.split(',').map(str::trim).filter(|s| !s.is_empty());
    let doc = if let Some(anchor) = head.trim().strip_prefix('@') {
        let words: Vec<String> = items.map(String::from).collect();
        let length = words.first().map(|w| w.chars().count() as u32).unwrap_or(0);
        SetDoc::Window { anchor: anchor.parse().map_err(|_| bad())?, length, words }
    } else {
        let atoms = items.map(|i| i.parse::<u64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        SetDoc::Grid { level: head.trim().parse().map_err(|_| bad())?, atoms }
    };
    io::set_from_doc(sys, &doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    const SAMPLE: &str = "
# castle run
[system]
spec = dyadic

[run]
operation = castle
seedless = true

[params]
K = -1;1      # generators
delta = 1/5
eps = 0.2

[output]
out = castle.json
";

    #[test]
    fn parses_sections() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.operation(), Some("castle"));
        assert_eq!(cfg.rational("eps").unwrap(), Some(ratio(1, 5)));
        assert_eq!(cfg.subset("K").unwrap().unwrap().len(), 2);
        assert_eq!(cfg.flag("run", "seedless").unwrap(), Some(true));
        assert_eq!(cfg.path("out"), Some(PathBuf::from("castle.json")));
        assert!(cfg.system().unwrap().is_some());
        assert_eq!(RunConfig::parse(&cfg.canonical()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::parse("[params]\nwobble = 1").is_err());
        assert!(RunConfig::parse("[extras]\n").is_err());
        assert!(RunConfig::parse("delta = 1/5").is_err());
        assert!(RunConfig::parse("[params]\ndelta = 1/0").is_err());
        assert!(RunConfig::parse("[params]\ndelta = 1/5\ndelta = 1/4").is_err());
        assert!(RunConfig::parse("[params]\nn = -3").is_err());
        assert!(RunConfig::parse("[system]\nspec = torus").is_err());
        let mut cfg = RunConfig::default();
        assert!(cfg.set("params", "nope", "1").is_err());
    }

    #[test]
    fn set_notation() {
        let sys = SymbolicSystem::dyadic();
        assert_eq!(parse_set(&sys, "3:0, 4").unwrap(), ClopenSet::grid(3, [0, 4]));
        assert_eq!(parse_set(&sys, "all").unwrap(), sys.whole());
        assert!(parse_set(&sys, "2:9").is_err());
        let fib = SymbolicSystem::fibonacci();
        let a = parse_set(&fib, "@0:a").unwrap();
        assert_eq!(a.atom_count(), 1);
        assert!(parse_set(&fib, "@0:bb").is_err());
    }
}
