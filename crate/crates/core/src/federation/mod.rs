//! The consumer side: find members, send one query to all of them at once
//! and merge what comes back.
//!
//! Merging is a bag union. Aggregates are computed per member and are not
//! recombined: `COUNT(*)` over three members yields three rows.

mod render;
mod repl;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::net::{self, NetError};
use crate::schema::{load_registry_file, ConfigError, DataType, GridMember};
use crate::value::{ResultColumn, ResultSet, Value};
use crate::wire::{Message, WireError};

pub use render::{outcomes_json, render_json, render_outcomes, render_table};
pub use repl::{run_repl, ReplConfig, PROMPT};

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;
pub const PROVENANCE_COLUMN: &str = "__member";
pub const UNIFICATION_MISMATCH: &str = "UNIFICATION_MISMATCH";
pub const PROTOCOL_ERROR: &str = "PROTOCOL_ERROR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MemberSource {
    File(PathBuf),
    Center(String),
}

#[derive(Debug, Error)]
pub enum DiscoverError {
    #[error(transparent)]
    FileError(#[from] ConfigError),
    #[error(transparent)]
    ConnectionFailed(#[from] NetError),
    #[error("center answered with {0} instead of a member list")]
    Protocol(String),
}

pub fn discover_members(
    source: &MemberSource,
    timeout: Duration,
) -> Result<Vec<GridMember>, DiscoverError> {
    match source {
        MemberSource::File(path) => Ok(load_registry_file(path)?.members),
        MemberSource::Center(endpoint) => {
            match net::request(endpoint, &Message::ListMembers, timeout)? {
                Message::MemberList { members } => Ok(members),
                other => Err(DiscoverError::Protocol(other.type_name().to_string())),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeStatus {
    Ok,
    Error,
    Timeout,
    Unreachable,
}

impl OutcomeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeStatus::Ok => "ok",
            OutcomeStatus::Error => "error",
            OutcomeStatus::Timeout => "timeout",
            OutcomeStatus::Unreachable => "unreachable",
        }
    }
}

/// What happened at one member. `result` is present iff `status` is `Ok`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberOutcome {
    pub member: GridMember,
    pub status: OutcomeStatus,
    pub result: Option<ResultSet>,
    pub error_code: Option<String>,
    pub message: Option<String>,
    pub elapsed: Duration,
}

impl MemberOutcome {
    fn failed(
        member: GridMember,
        status: OutcomeStatus,
        code: Option<&str>,
        message: String,
        elapsed: Duration,
    ) -> Self {
        Self {
            member,
            status,
            result: None,
            error_code: code.map(str::to_string),
            message: Some(message),
            elapsed,
        }
    }

    pub fn row_count(&self) -> usize {
        self.result.as_ref().map_or(0, |r| r.rows.len())
    }
}

static REQUEST_SEQ: AtomicU64 = AtomicU64::new(1);

fn next_request_id() -> String {
    format!(
        "{:x}-{}",
        std::process::id(),
        REQUEST_SEQ.fetch_add(1, Ordering::Relaxed)
    )
}

fn classify(
    member: GridMember,
    request_id: &str,
    reply: Result<Message, NetError>,
    elapsed: Duration,
) -> MemberOutcome {
    use OutcomeStatus as S;
    match reply {
        Ok(Message::ResultOk {
            request_id: rid,
            columns,
            rows,
            warnings,
        }) if rid == request_id => MemberOutcome {
            member,
            status: S::Ok,
            result: Some(ResultSet {
                columns,
                rows,
                warnings,
            }),
            error_code: None,
            message: None,
            elapsed,
        },
        Ok(Message::ResultErr {
            request_id: rid,
            code,
            message,
        }) if rid == request_id => {
            MemberOutcome::failed(member, S::Error, Some(code.as_str()), message, elapsed)
        }
        Ok(other) => MemberOutcome::failed(
            member,
            S::Error,
            Some(PROTOCOL_ERROR),
            format!("unexpected {} reply", other.type_name()),
            elapsed,
        ),
        Err(NetError::ConnectionFailed { source, .. }) => {
            MemberOutcome::failed(member, S::Unreachable, None, source.to_string(), elapsed)
        }
        Err(NetError::Timeout(_)) => {
            MemberOutcome::failed(member, S::Timeout, None, "no response".into(), elapsed)
        }
        Err(NetError::Protocol {
            source: WireError::Closed,
            ..
        }) => MemberOutcome::failed(
            member,
            S::Error,
            Some(PROTOCOL_ERROR),
            "connection closed without a reply".into(),
            elapsed,
        ),
        Err(NetError::Protocol { source, .. }) => {
            MemberOutcome::failed(member, S::Error, Some(PROTOCOL_ERROR), source.to_string(), elapsed)
        }
    }
}

/// Sends `sql` to every member in parallel and waits at most `timeout`.
/// Outcomes are in member order.
pub fn fan_out(sql: &str, members: &[GridMember], timeout: Duration) -> Vec<MemberOutcome> {
    let start = Instant::now();
    let deadline = start + timeout;
    let (tx, rx) = mpsc::channel();
    for (i, member) in members.iter().enumerate() {
        let tx = tx.clone();
        let member = member.clone();
        let request_id = next_request_id();
        let msg = Message::Query {
            request_id: request_id.clone(),
            sql: sql.to_string(),
        };
        let spawned = thread::Builder::new()
            .name(format!("fanout-{}", member.name))
            .spawn(move || {
                let t0 = Instant::now();
                let reply = net::request(&member.endpoint(), &msg, timeout);
                let outcome = classify(member, &request_id, reply, t0.elapsed());
                let _ = tx.send((i, outcome));
            });
        if let Err(e) = spawned {
            log::error!("fan-out: cannot spawn worker: {e}");
        }
    }
    drop(tx);

    let mut slots: Vec<Option<MemberOutcome>> = vec![None; members.len()];
    let mut pending = members.len();
    while pending > 0 {
        let remaining = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(remaining) {
            Ok((i, outcome)) => {
                slots[i] = Some(outcome);
                pending -= 1;
            }
            Err(_) => break,
        }
    }
    slots
        .into_iter()
        .zip(members)
        .map(|(slot, m)| {
            slot.unwrap_or_else(|| {
                MemberOutcome::failed(
                    m.clone(),
                    OutcomeStatus::Timeout,
                    None,
                    "no response".into(),
                    start.elapsed(),
                )
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedResult {
    pub columns: Vec<ResultColumn>,
    pub rows: Vec<Vec<Value>>,
    pub outcomes: Vec<MemberOutcome>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum FederationError {
    #[error("member discovery failed: {0}")]
    Discover(#[from] DiscoverError),
    #[error("no member answered successfully")]
    NoSuccessfulMembers(Vec<MemberOutcome>),
}

fn same_names(a: &[ResultColumn], b: &[ResultColumn]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.name.eq_ignore_ascii_case(&y.name))
}

/// Bag union of the successful results. Members whose column names differ
/// from the first successful member are demoted to errors.
pub fn unify(
    mut outcomes: Vec<MemberOutcome>,
    with_provenance: bool,
) -> Result<FederatedResult, FederationError> {
    let Some(reference) = outcomes
        .iter()
        .find_map(|o| o.result.as_ref().map(|r| r.columns.clone()))
    else {
        return Err(FederationError::NoSuccessfulMembers(outcomes));
    };

    let mut warnings = Vec::new();
    for o in &mut outcomes {
        let Some(rs) = &o.result else { continue };
        if !same_names(&rs.columns, &reference) {
            let got: Vec<&str> = rs.column_names();
            let want: Vec<&str> = reference.iter().map(|c| c.name.as_str()).collect();
            o.status = OutcomeStatus::Error;
            o.error_code = Some(UNIFICATION_MISMATCH.into());
            o.message = Some(format!(
                "columns [{}] do not match [{}]",
                got.join(", "),
                want.join(", ")
            ));
            o.result = None;
            continue;
        }
        for w in &rs.warnings {
            warnings.push(format!("{}: {w}", o.member.name));
        }
    }

    let contributors: Vec<&MemberOutcome> =
        outcomes.iter().filter(|o| o.result.is_some()).collect();
    let mut columns = reference.clone();
    let mut to_text = vec![false; columns.len()];
    let mut to_float = vec![false; columns.len()];
    for (i, col) in columns.iter_mut().enumerate() {
        let types: Vec<DataType> = contributors
            .iter()
            .map(|o| o.result.as_ref().expect("contributor").columns[i].datatype)
            .collect();
        if types.iter().all(|t| *t == types[0]) {
            continue;
        }
        if types.iter().all(|t| t.is_numeric()) {
            col.datatype = DataType::Float;
            to_float[i] = true;
        } else {
            col.datatype = DataType::String;
            to_text[i] = true;
            warnings.push(format!(
                "column {} has mixed types across members; values shown as text",
                col.name
            ));
        }
    }

    let mut rows = Vec::new();
    for o in &contributors {
        let rs = o.result.as_ref().expect("contributor");
        for row in &rs.rows {
            let mut out = Vec::with_capacity(row.len() + 1);
            if with_provenance {
                out.push(Value::text(o.member.name.as_str()));
            }
            for (i, v) in row.iter().enumerate() {
                out.push(match v {
                    Value::Null => Value::Null,
                    v if to_text[i] => Value::Text(v.to_string()),
                    Value::Int(n) if to_float[i] => Value::Float(*n as f64),
                    v => v.clone(),
                });
            }
            rows.push(out);
        }
    }
    if with_provenance {
        columns.insert(0, ResultColumn::new(PROVENANCE_COLUMN, DataType::String));
    }
    Ok(FederatedResult {
        columns,
        rows,
        outcomes,
        warnings,
    })
}

/// Discover, fan out and unify in one call.
pub fn run_query(
    source: &MemberSource,
    sql: &str,
    timeout: Duration,
    with_provenance: bool,
) -> Result<FederatedResult, FederationError> {
    let members = discover_members(source, timeout)?;
    unify(fan_out(sql, &members, timeout), with_provenance)
}
