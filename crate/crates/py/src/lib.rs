//! Python bindings. Artifacts cross the boundary as canonical JSON text.

use castleforge::certify::{rotation_claims, verify_artifact};
use castleforge::comparison::{match_to_partition, subequiv_greedy, verify_witness};
use castleforge::config::parse_set;
use castleforge::density::density_curve;
use castleforge::dynsys::SymbolicSystem;
use castleforge::group::FiniteSubset;
use castleforge::io::{self, Artifact, Claim, Payload, RotationDoc, ScheduleDoc, SystemSpec};
use castleforge::rational::{self, Rational};
use castleforge::rotation::QuadraticIrrational;
use castleforge::tiling::{ow_castle, verify_castle, OwOptions};
use castleforge::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    if e.is_claim_failure() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn rat(text: &str) -> PyResult<Rational> {
    rational::parse(text).map_err(py_err)
}

fn subset(text: &str) -> PyResult<FiniteSubset> {
    FiniteSubset::parse(text).map_err(py_err)
}

fn castle_input(text: &str) -> PyResult<(SymbolicSystem, castleforge::tiling::Castle)> {
    let art = Artifact::parse(text).map_err(py_err)?;
    let sys = art.system().map_err(py_err)?;
    let Payload::Castle(doc) = &art.payload else {
        return Err(PyValueError::new_err("expected a castle artifact"));
    };
    let castle = io::castle_from_doc(&sys, doc).map_err(py_err)?;
    Ok((sys, castle))
}

/// A serialized result with the claims checked against it.
#[pyclass(frozen, get_all)]
pub struct Report {
    pub artifact: String,
    /// Claims as a JSON array of `{name, value, relation, bound, pass}`.
    pub claims: String,
    pub notes: Vec<String>,
    pub passed: bool,
}

impl Report {
    fn new(artifact: String, claims: Vec<Claim>, notes: Vec<String>) -> Self {
        let passed = claims.iter().all(|c| c.pass);
        let claims = serde_json::to_string(&claims).expect("claims serialize");
        Report { artifact, claims, notes, passed }
    }
}

#[pymethods]
impl Report {
    fn __repr__(&self) -> String {
        format!("Report(passed={}, notes={:?})", self.passed, self.notes)
    }
}

/// A symbolic system built from a spec such as `dyadic` or `odometer:2,3`.
#[pyclass(frozen)]
pub struct System {
    spec: String,
    sys: SymbolicSystem,
}

#[pymethods]
impl System {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let sys = SystemSpec::parse(spec).and_then(|s| s.build()).map_err(py_err)?;
        Ok(System { spec: spec.to_string(), sys })
    }

    #[getter]
    fn spec(&self) -> &str {
        &self.spec
    }

    /// Exact measure bounds `(lo, hi)` of a clopen set.
    fn measure(&self, set: &str) -> PyResult<(String, String)> {
        let a = parse_set(&self.sys, set).map_err(py_err)?;
        let mu = self.sys.measure(&a).map_err(py_err)?;
        Ok((rational::format(&mu.lo), rational::format(&mu.hi)))
    }

    /// Rows `(index, lo, hi)` of window densities of `set` along the Følner sequence.
    fn density_curve(&self, set: &str, indices: Vec<u64>) -> PyResult<Vec<(u64, String, String)>> {
        let a = parse_set(&self.sys, set).map_err(py_err)?;
        let rows = density_curve(&self.sys, &a, &indices).map_err(py_err)?;
        Ok(rows.iter().map(|r| (r.index, rational::format(&r.lo), rational::format(&r.hi))).collect())
    }

    #[pyo3(signature = (k, delta, eps, index_bound=None))]
    fn castle(&self, k: &str, delta: &str, eps: &str, index_bound: Option<u64>) -> PyResult<Report> {
        let k = subset(k)?;
        let (delta, eps) = (rat(delta)?, rat(eps)?);
        let mut opts = OwOptions::default();
        if let Some(b) = index_bound {
            opts.index_bound = b;
        }
        let out = ow_castle(&self.sys, &k, &delta, &eps, &opts).map_err(py_err)?;
        let check = verify_castle(&self.sys, &out.castle, Some(&k)).map_err(py_err)?;
        let claims = vec![
            Claim::holds("levels pairwise disjoint", check.disjoint),
            Claim::compare("max shape defect", &out.report.max_defect, io::Relation::Lt, &delta),
            Claim::compare("footprint density", &check.density.lo, io::Relation::Ge, &(rational::int(1) - &eps)),
        ];
        let notes = vec![format!("level {}, towers: {}", out.report.level, out.castle.towers.len())];
        let text = Artifact::new(Some(&self.sys), Payload::Castle(io::castle_to_doc(&self.sys, &out.castle))).to_canonical();
        Ok(Report::new(text, claims, notes))
    }

    /// Greedy witness that `a` is subequivalent to `b` through the shifts in `f`.
    fn subequiv(&self, a: &str, b: &str, f: &str) -> PyResult<Report> {
        let a = parse_set(&self.sys, a).map_err(py_err)?;
        let b = parse_set(&self.sys, b).map_err(py_err)?;
        let w = subequiv_greedy(&self.sys, &a, &b, &subset(f)?).map_err(py_err)?;
        let r = verify_witness(&self.sys, &w).map_err(py_err)?;
        let claims = vec![Claim::holds("witness valid", r.valid).with_detail(r.problems.join("; "))];
        let text = Artifact::new(Some(&self.sys), Payload::Witness(io::witness_to_doc(&self.sys, &w, None))).to_canonical();
        Ok(Report::new(text, claims, vec![format!("{} pieces", w.pieces.len())]))
    }
}

/// Completes a castle artifact to a partition by matching its remainder into `f`-translates.
#[pyfunction]
#[pyo3(signature = (castle, f, reserve, k=None))]
fn match_castle(castle: &str, f: &str, reserve: &str, k: Option<&str>) -> PyResult<Report> {
    let (sys, castle) = castle_input(castle)?;
    let k = k.map(subset).transpose()?;
    let out = match_to_partition(&sys, &castle, &subset(f)?, &rat(reserve)?, k.as_ref()).map_err(py_err)?;
    let check = verify_castle(&sys, &out.castle, k.as_ref()).map_err(py_err)?;
    let claims = vec![
        Claim::holds("levels pairwise disjoint", check.disjoint),
        Claim::compare("footprint density", &check.density.lo, io::Relation::Eq, &rational::int(1)),
    ];
    let text = Artifact::new(Some(&sys), Payload::Castle(io::castle_to_doc(&sys, &out.castle))).to_canonical();
    Ok(Report::new(text, claims, Vec::new()))
}

/// Coding tree of the rotation by `alpha` with its census checks.
#[pyfunction]
#[pyo3(signature = (depth, alpha=None, folner=vec![-1, 0, 1], schedule="uniform", samples=10_000))]
fn rotate(depth: usize, alpha: Option<&str>, folner: Vec<i64>, schedule: &str, samples: usize) -> PyResult<Report> {
    let alpha = match alpha {
        Some(a) => QuadraticIrrational::parse(a).map_err(py_err)?,
        None => QuadraticIrrational::golden(),
    };
    let mut doc = RotationDoc {
        alpha: alpha.to_string(),
        depth,
        folner,
        schedule: ScheduleDoc::parse(schedule).map_err(py_err)?,
        samples,
        locus: Vec::new(),
    };
    let (claims, notes, locus) = rotation_claims(&doc).map_err(py_err)?;
    doc.locus = locus;
    Ok(Report::new(Artifact::new(None, Payload::Rotation(doc)).to_canonical(), claims, notes))
}

/// Re-checks any artifact or certificate from its text.
#[pyfunction]
fn verify(text: &str) -> PyResult<Report> {
    let r = verify_artifact(text).map_err(py_err)?;
    Ok(Report::new(String::new(), r.claims, r.notes))
}

#[pymodule]
mod castleforge_py {
    #[pymodule_export]
    use super::{match_castle, rotate, verify, Report, System};
}
