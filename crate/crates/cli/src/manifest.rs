//! The run manifest written by `verify`.

use cohen_core::identities::{IdentityReport, Params, Status};
use cohen_core::subgroups::{Membership, MembershipVerdict};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const REPORT_SCHEMA: u32 = 1;

/// One result line of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entry {
    Identity(IdentityReport),
    Membership(MembershipVerdict),
    /// The case could not be evaluated at all.
    Error {
        claim: String,
        parameters: Params,
        message: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    Pass,
    Fail,
    /// Nothing failed but some verdicts are inconclusive.
    Mixed,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub verified: usize,
    pub falsified: usize,
    pub skipped: usize,
    pub member: usize,
    pub non_member: usize,
    pub inconclusive: usize,
    pub errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InconclusiveRef {
    pub claim: String,
    pub params: Params,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(rename = "report-schema")]
    pub report_schema: u32,
    pub tool_version: String,
    pub timestamp: String,
    pub claim: String,
    pub parameters: serde_json::Map<String, Value>,
    pub entries: Vec<Entry>,
    pub summary: Summary,
    pub inconclusive: Vec<InconclusiveRef>,
    pub overall: Overall,
}

impl RunManifest {
    pub fn new(claim: &str, parameters: serde_json::Map<String, Value>, entries: Vec<Entry>) -> RunManifest {
        let mut summary = Summary::default();
        let mut inconclusive = Vec::new();
        for e in &entries {
            match e {
                Entry::Identity(r) => match r.status {
                    Status::Verified => summary.verified += 1,
                    Status::Falsified => summary.falsified += 1,
                    Status::Skipped => summary.skipped += 1,
                },
                Entry::Membership(v) => match v.status {
                    Membership::Member => summary.member += 1,
                    Membership::NonMember => summary.non_member += 1,
                    Membership::Inconclusive => {
                        summary.inconclusive += 1;
                        inconclusive.push(InconclusiveRef {
                            claim: v.claim.clone(),
                            params: v.params.clone(),
                            note: v.note.clone(),
                        });
                    }
                },
                Entry::Error { .. } => summary.errors += 1,
            }
        }
        let overall = if summary.falsified + summary.non_member + summary.errors > 0 {
            Overall::Fail
        } else if summary.inconclusive > 0 {
            Overall::Mixed
        } else {
            Overall::Pass
        };
        RunManifest {
            report_schema: REPORT_SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            claim: claim.into(),
            parameters,
            entries,
            summary,
            inconclusive,
            overall,
        }
    }

    pub fn strip_timings(&mut self) {
        for e in &mut self.entries {
            if let Entry::Identity(r) = e {
                r.elapsed_ms = None;
            }
        }
    }
}

fn compact(params: &Params) -> String {
    params
        .iter()
        .map(|(k, v)| match v {
            Value::String(s) => format!("{}={}", k, s),
            Value::Object(o) if o.contains_key("p") => format!("{}=Z/{}^{}", k, o["p"], o["r"]),
            other => format!("{}={}", k, other),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

impl Entry {
    /// One human-readable line.
    pub fn line(&self) -> String {
        let (tag, claim, params, note) = match self {
            Entry::Identity(r) => {
                let tag = match r.status {
                    Status::Verified => "ok",
                    Status::Falsified => "FALSIFIED",
                    Status::Skipped => "skipped",
                };
                (tag, &r.claim_id, &r.parameters, r.note.clone())
            }
            Entry::Membership(v) => {
                let tag = match v.status {
                    Membership::Member => "member",
                    Membership::NonMember => "NON-MEMBER",
                    Membership::Inconclusive => "inconclusive",
                };
                let element = v.element.expr.clone().unwrap_or_else(|| v.element.nf.display.clone());
                let note = if v.note.is_empty() {
                    format!("{} in {}", element, v.subgroup.description)
                } else {
                    format!("{} in {}; {}", element, v.subgroup.description, v.note)
                };
                (tag, &v.claim, &v.params, note)
            }
            Entry::Error { claim, parameters, message } => ("ERROR", claim, parameters, message.clone()),
        };
        if note.is_empty() {
            format!("[{}] {} {}", tag, claim, compact(params))
        } else {
            format!("[{}] {} {}: {}", tag, claim, compact(params), note)
        }
    }
}
