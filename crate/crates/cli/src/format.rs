//! On-disk documents: instance files and the JSON forms of reports and certificates.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rejsched::model::{Instance, Job, ProblemKind};
use rejsched::oracle::{DualCertificate, MachineInterval};
use rejsched::rational::{fmt, parse, Rational};

pub fn rat_str(x: &Rational) -> String {
    fmt(x)
}

pub fn rat_parse(s: &str, what: &str) -> Result<Rational> {
    parse(s).with_context(|| format!("bad rational for {what}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub version: u32,
    pub machines: usize,
    pub epsilon: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRecord {
    pub id: u64,
    pub release: String,
    pub size: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_weight: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_weight: Option<String>,
    pub machines: Vec<usize>,
    pub rank: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub header: Header,
    pub jobs: Vec<JobRecord>,
}

impl InstanceFile {
    /// Weights equal to their default are left out: `weight` defaults to 1,
    /// and both split weights default to `weight`.
    pub fn from_instance(inst: &Instance) -> Self {
        let one = Rational::from_integer(1.into());
        let jobs = inst
            .jobs
            .iter()
            .map(|j| JobRecord {
                id: j.id,
                release: rat_str(&j.release),
                size: rat_str(&j.size),
                weight: (j.weight != one).then(|| rat_str(&j.weight)),
                flow_weight: (j.flow_weight != j.weight).then(|| rat_str(&j.flow_weight)),
                rejection_weight: (j.rejection_weight != j.weight).then(|| rat_str(&j.rejection_weight)),
                machines: j.allowed.clone(),
                rank: j.rank,
            })
            .collect();
        InstanceFile {
            header: Header {
                version: 1,
                machines: inst.machines,
                epsilon: rat_str(&inst.epsilon),
                kind: inst.kind.name().to_string(),
            },
            jobs,
        }
    }

    pub fn to_instance(&self) -> Result<Instance> {
        if self.header.version != 1 {
            bail!("unsupported instance version {}", self.header.version);
        }
        let kind = ProblemKind::from_name(&self.header.kind)?;
        let epsilon = rat_parse(&self.header.epsilon, "epsilon")?;
        let mut jobs = Vec::with_capacity(self.jobs.len());
        for r in &self.jobs {
            let what = |f: &str| format!("job {} {f}", r.id);
            let mut job = Job::new(
                r.id,
                rat_parse(&r.release, &what("release"))?,
                rat_parse(&r.size, &what("size"))?,
                r.machines.iter().copied(),
            )
            .with_rank(r.rank);
            if let Some(w) = &r.weight {
                job.weight = rat_parse(w, &what("weight"))?;
            }
            job.flow_weight = match &r.flow_weight {
                Some(w) => rat_parse(w, &what("flow_weight"))?,
                None => job.weight.clone(),
            };
            job.rejection_weight = match &r.rejection_weight {
                Some(w) => rat_parse(w, &what("rejection_weight"))?,
                None => job.weight.clone(),
            };
            jobs.push(job);
        }
        Ok(Instance::new(self.header.machines, epsilon, kind, jobs))
    }
}

pub fn read_instance(path: &str) -> Result<Instance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {path}"))?;
    let file: InstanceFile = serde_json::from_str(&text).with_context(|| format!("malformed instance file {path}"))?;
    let inst = file.to_instance().with_context(|| format!("malformed instance file {path}"))?;
    inst.ensure_valid()?;
    Ok(inst)
}

pub fn instance_json(inst: &Instance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from_instance(inst)).expect("instance serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalRecord {
    pub machine: usize,
    pub start: String,
    pub end: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_class: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub t_star_claimed: String,
    pub intervals: Vec<IntervalRecord>,
    /// Dual value per job id.
    pub alphas: BTreeMap<u64, String>,
}

impl CertificateFile {
    pub fn from_certificate(c: &DualCertificate) -> Self {
        CertificateFile {
            t_star_claimed: rat_str(&c.t_star_claimed),
            intervals: c
                .intervals
                .iter()
                .map(|i| IntervalRecord {
                    machine: i.machine,
                    start: rat_str(&i.start),
                    end: rat_str(&i.end),
                    weight_class: i.weight_class,
                })
                .collect(),
            alphas: c.alphas.iter().map(|(j, a)| (*j, rat_str(a))).collect(),
        }
    }

    pub fn to_certificate(&self) -> Result<DualCertificate> {
        let mut intervals = Vec::with_capacity(self.intervals.len());
        for i in &self.intervals {
            intervals.push(MachineInterval {
                start: rat_parse(&i.start, "interval start")?,
                end: rat_parse(&i.end, "interval end")?,
                machine: i.machine,
                weight_class: i.weight_class,
            });
        }
        let mut alphas = BTreeMap::new();
        for (j, a) in &self.alphas {
            alphas.insert(*j, rat_parse(a, "alpha")?);
        }
        Ok(DualCertificate {
            intervals,
            alphas,
            t_star_claimed: rat_parse(&self.t_star_claimed, "t_star_claimed")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rejsched::gen::{generate, GenSpec, Shape};
    use rejsched::rational::rat;

    #[test]
    fn generated_instances_round_trip() {
        let kinds = [
            ProblemKind::LoadBalancing,
            ProblemKind::MaxFlowTime,
            ProblemKind::WtdMaxFlowTime,
            ProblemKind::GenWtdMaxFlowTime,
        ];
        for (seed, kind) in kinds.into_iter().enumerate() {
            let inst = generate(&GenSpec {
                kind,
                jobs: 30,
                machines: 3,
                epsilon: rat(1, 8),
                seed: seed as u64,
                shape: Shape::PowerlawSizes,
            })
            .unwrap();
            let text = instance_json(&inst);
            let back: InstanceFile = serde_json::from_str(&text).unwrap();
            assert_eq!(back.to_instance().unwrap(), inst);
        }
    }

    #[test]
    fn omitted_weights_default() {
        let text = r#"{"header":{"version":1,"machines":2,"epsilon":"1/4","kind":"gen-wtd-max-flow-time"},
            "jobs":[{"id":0,"release":"0","size":"3/2","weight":"2","rejection_weight":"1/2","machines":[1],"rank":0}]}"#;
        let f: InstanceFile = serde_json::from_str(text).unwrap();
        let inst = f.to_instance().unwrap();
        let j = &inst.jobs[0];
        assert_eq!((j.weight.clone(), j.flow_weight.clone(), j.rejection_weight.clone()), (rat(2, 1), rat(2, 1), rat(1, 2)));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"header":{"version":1,"machines":2,"epsilon":"1/4","kind":"load-balancing","extra":1},"jobs":[]}"#;
        assert!(serde_json::from_str::<InstanceFile>(text).is_err());
    }
}
