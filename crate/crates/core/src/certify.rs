//! Claims re-derived from serialized artifacts alone.

use crate::comparison::{verify_colored, verify_witness};
use crate::error::Result;
use crate::gamma::gamma_report;
use crate::io::{self, Artifact, Certificate, Claim, Payload, Relation, RotationDoc, ScheduleDoc};
use crate::rational::{int, ratio};
use crate::rotation::{
    build_refinement_sequence, composition_check, fibre_census, lattice_samples, sample_codings, QuadraticIrrational,
    RegularClosedPartition, Rotation, Schedule,
};
use crate::tiling::verify_castle;

pub struct ArtifactReport {
    pub claims: Vec<Claim>,
    pub notes: Vec<String>,
}

/// Checks an artifact or certificate from its text alone.
pub fn verify_artifact(text: &str) -> Result<ArtifactReport> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("operation").is_some() {
        let cert: Certificate = serde_json::from_value(value)?;
        let ok = cert.consistent()?;
        let claims = vec![
            Claim::holds("stored verdicts recompute", ok),
            Claim::holds("certificate passes", cert.pass),
        ];
        return Ok(ArtifactReport { claims, notes: vec![format!("certificate for {}", cert.operation)] });
    }
    let art = Artifact::parse(text)?;
    match &art.payload {
        Payload::Castle(doc) => {
            let sys = art.system()?;
            let castle = io::castle_from_doc(&sys, doc)?;
            let r = verify_castle(&sys, &castle, None)?;
            let mut notes: Vec<String> = r
                .collisions
                .iter()
                .map(|c| {
                    format!(
                        "collision at atom {}: tower {} level {} and tower {} level {}",
                        c.atom, c.first.0, c.first.1, c.second.0, c.second.1
                    )
                })
                .collect();
            notes.push(format!("footprint density {}", r.density));
            let claims = vec![
                Claim::holds("levels pairwise disjoint", r.disjoint),
                Claim::holds("bases nonempty", r.empty_bases.is_empty()),
            ];
            Ok(ArtifactReport { claims, notes })
        }
        Payload::Witness(doc) => {
            let sys = art.system()?;
            let report = match doc.m {
                Some(_) => verify_colored(&sys, &io::colored_from_doc(&sys, doc)?)?,
                None => verify_witness(&sys, &io::witness_from_doc(&sys, doc)?)?,
            };
            Ok(ArtifactReport { claims: vec![Claim::holds("witness valid", report.valid)], notes: report.problems })
        }
        Payload::Sets(doc) => {
            let sys = art.system()?;
            let sets = doc.sets.iter().map(|d| io::set_from_doc(&sys, d)).collect::<Result<Vec<_>>>()?;
            let mut claims = Vec::new();
            for (i, a) in sets.iter().enumerate() {
                for (j, b) in sets.iter().enumerate().skip(i + 1) {
                    claims.push(Claim::holds(format!("sets {i} and {j} disjoint"), sys.is_disjoint(a, b)?));
                }
            }
            if let Some(u) = &doc.within {
                let u = io::set_from_doc(&sys, u)?;
                for (i, a) in sets.iter().enumerate() {
                    claims.push(Claim::holds(format!("set {i} inside the ambient set"), sys.is_subset(a, &u)?));
                }
            }
            Ok(ArtifactReport { claims, notes: Vec::new() })
        }
        Payload::Gamma(doc) => {
            let sys = art.system()?;
            let f1 = io::function_from_doc(&sys, &doc.f1)?;
            let f2 = io::function_from_doc(&sys, &doc.f2)?;
            let partition = doc.partition.iter().map(|d| io::set_from_doc(&sys, d)).collect::<Result<Vec<_>>>()?;
            let r = gamma_report(&sys, &f1, &f2, &doc.l, &partition, doc.q)?;
            let claims = vec![
                Claim::holds("f1 f2 = 0", r.orthogonal),
                Claim::compare("max commutator norm", &r.max_commutator, Relation::Le, &ratio(1, doc.q as i64)),
                Claim::compare("max trace deviation", &r.max_deviation, Relation::Lt, &doc.eps),
            ];
            Ok(ArtifactReport { claims, notes: Vec::new() })
        }
        Payload::Rotation(doc) => {
            let (mut claims, notes, locus) = rotation_claims(doc)?;
            claims.push(Claim::holds("recorded locus reproduces", locus == doc.locus));
            claims.push(Claim::compare("locus size", &int(locus.len() as i64), Relation::Eq, &int(doc.locus.len() as i64)));
            Ok(ArtifactReport { claims, notes })
        }
    }
}

pub fn parse_schedule(doc: &ScheduleDoc) -> Result<Schedule> {
    match doc {
        ScheduleDoc::Uniform => Ok(Schedule::Uniform),
        ScheduleDoc::Fixed(cuts) => {
            let cuts = cuts.iter().map(|c| QuadraticIrrational::parse(c)).collect::<Result<Vec<_>>>()?;
            Ok(Schedule::Fixed(RegularClosedPartition::from_cuts(cuts)?))
        }
    }
}

/// Rebuilds and checks a coding tree; shared with `verify`.
pub fn rotation_claims(doc: &RotationDoc) -> Result<(Vec<Claim>, Vec<String>, Vec<String>)> {
    let rot = Rotation::new(QuadraticIrrational::parse(&doc.alpha)?)?;
    let folner = if doc.folner.is_empty() { vec![vec![-1, 0, 1]] } else { vec![doc.folner.clone()] };
    let tree = build_refinement_sequence(&rot, &parse_schedule(&doc.schedule)?, &folner, doc.depth)?;
    let census = fibre_census(&tree);
    let comp = composition_check(&tree);
    let samples = sample_codings(&tree, &lattice_samples(doc.samples));
    let locus: Vec<String> = census.locus.iter().map(ToString::to_string).collect();
    let claims = vec![
        Claim::holds("locus = accumulated endpoints", census.locus_matches_endpoints),
        Claim::compare("locus Lebesgue measure", &census.lebesgue_measure, Relation::Eq, &int(0)),
        Claim::holds("basis boundaries", census.basis_ok),
        Claim::compare("composition failures", &int(comp.failures.len() as i64), Relation::Eq, &int(0))
            .with_detail(format!("{} cells checked", comp.checked)),
        Claim::compare("inconsistent codings", &int(samples.inconsistent.len() as i64), Relation::Eq, &int(0)),
        Claim::compare("separation failures", &int(samples.separation_failures as i64), Relation::Eq, &int(0)),
    ];
    let mut notes = vec![format!(
        "locus has {} points; {} samples singleton, {} on boundaries",
        locus.len(),
        samples.singleton,
        samples.boundary_skipped
    )];
    for lv in &census.levels {
        notes.push(format!("Q_{}: {} arcs, {} cells, mesh {:.6}", lv.level, lv.arcs, lv.members, lv.mesh.to_f64()));
    }
    Ok((claims, notes, locus))
}

