//! Line-driven setup: map the center schema onto local tables, write the
//! mapping file and register with the center.
//!
//! Every prompt reads one line, so a file of answers replays a session.
//! `-` skips a table or column; an empty answer takes the default shown in
//! brackets.

use std::io::{self, BufRead, Write};
use std::net::UdpSocket;
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::engine::{self, TableInfo};
use crate::schema::{
    save_mapping, validate_mapping, write_atomic, BackendKind, ColumnMap, ConfigError, GridMember,
    MemberMapping, TableMap, VirtualSchema,
};
use crate::wire::AckStatus;

use super::register_with_center;

pub const DEFAULT_PORT: u16 = 2222;

#[derive(Debug, Clone)]
pub struct WizardOptions {
    /// Where GridMapping.xml is written.
    pub output: PathBuf,
    /// Center registry endpoint; registration is skipped without one.
    pub center: Option<String>,
    /// Fixed member address instead of auto-detection.
    pub address: Option<String>,
    pub timeout: Duration,
}

#[derive(Debug)]
pub struct WizardOutcome {
    pub mapping: MemberMapping,
    pub member: GridMember,
    /// `None` when no center was given.
    pub registration: Option<Result<(AckStatus, u64), String>>,
}

#[derive(Debug, Error)]
pub enum WizardError {
    #[error("input ended before the setup was complete")]
    InputClosed,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("mapping failed validation: {0}")]
    Invalid(String),
}

struct Prompter<'a, R, W> {
    input: &'a mut R,
    out: &'a mut W,
}

impl<R: BufRead, W: Write> Prompter<'_, R, W> {
    fn ask(&mut self, prompt: &str) -> Result<String, WizardError> {
        write!(self.out, "{prompt}: ")?;
        self.out.flush()?;
        let mut line = String::new();
        if self.input.read_line(&mut line)? == 0 {
            writeln!(self.out)?;
            return Err(WizardError::InputClosed);
        }
        let answer = line.trim().to_string();
        Ok(answer)
    }

    fn ask_default(&mut self, prompt: &str, default: &str) -> Result<String, WizardError> {
        let answer = self.ask(&format!("{prompt} [{default}]"))?;
        Ok(if answer.is_empty() {
            default.to_string()
        } else {
            answer
        })
    }

    fn say(&mut self, text: &str) -> Result<(), WizardError> {
        writeln!(self.out, "{text}")?;
        Ok(())
    }
}

/// Local address used to reach `center`, found by connecting a UDP socket
/// (no packet is sent). Falls back to loopback.
pub fn detect_local_address(center: Option<&str>) -> String {
    let probe = || -> io::Result<String> {
        let socket = UdpSocket::bind("0.0.0.0:0")?;
        socket.connect(center.unwrap_or("192.0.2.1:9"))?;
        Ok(socket.local_addr()?.ip().to_string())
    };
    match probe() {
        Ok(ip) if ip != "0.0.0.0" => ip,
        _ => "127.0.0.1".to_string(),
    }
}

pub fn run_wizard<R: BufRead, W: Write>(
    schema: &VirtualSchema,
    options: &WizardOptions,
    input: &mut R,
    out: &mut W,
) -> Result<WizardOutcome, WizardError> {
    let mut p = Prompter { input, out };

    // Backend and its local catalog.
    let (kind, connection_string, local) = loop {
        let kind = match p.ask_default("Backend kind (embedded/external)", "embedded")?.parse::<BackendKind>() {
            Ok(k) => k,
            Err(e) => {
                p.say(&e)?;
                continue;
            }
        };
        let conn = p.ask(match kind {
            BackendKind::Embedded => "Fixture script path",
            BackendKind::External => "Connection string",
        })?;
        let catalog = engine::open(kind, &conn).and_then(|h| h.tables());
        match (kind, catalog) {
            (_, Ok(tables)) => break (kind, conn, Some(tables)),
            (BackendKind::External, Err(_)) => {
                p.say("The external adapter cannot list tables; names will not be checked.")?;
                break (kind, conn, None);
            }
            (_, Err(e)) => p.say(&format!("Cannot open backend: {e}"))?,
        }
    };
    if let Some(tables) = &local {
        p.say("Local tables:")?;
        for t in tables {
            let cols: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
            p.say(&format!("  {} ({})", t.name, cols.join(", ")))?;
        }
    }

    // Center tables and columns, one prompt each.
    let mut tables = Vec::new();
    for ct in &schema.tables {
        p.say(&format!("Center table {}: {}", ct.name, ct.description))?;
        let local_table = loop {
            let answer = p.ask(&format!("  local table for {} (- to skip)", ct.name))?;
            if answer == "-" {
                break None;
            }
            match find_table(local.as_deref(), &answer) {
                Ok(t) => break Some(t),
                Err(msg) => p.say(&format!("  {msg}"))?,
            }
        };
        let Some((grid_table, local_info)) = local_table else {
            continue;
        };
        let mut columns = Vec::new();
        for cc in &ct.columns {
            loop {
                let answer = p.ask(&format!(
                    "    {}.{} ({}, {}) -> local column (- to skip)",
                    ct.name, cc.name, cc.description, cc.datatype
                ))?;
                if answer == "-" {
                    break;
                }
                match find_column(local_info.as_ref(), &answer) {
                    Ok(grid_column) => {
                        columns.push(ColumnMap {
                            center_column: cc.name.clone(),
                            grid_column,
                        });
                        break;
                    }
                    Err(msg) => p.say(&format!("    {msg}"))?,
                }
            }
        }
        if columns.is_empty() {
            p.say(&format!("  no columns mapped, leaving {} out", ct.name))?;
            continue;
        }
        tables.push(TableMap {
            center_table: ct.name.clone(),
            grid_table,
            columns,
        });
    }

    let port = loop {
        match p
            .ask_default("Service port", &DEFAULT_PORT.to_string())?
            .parse::<u16>()
        {
            Ok(port) if port > 0 => break port,
            _ => p.say("Port must be a number between 1 and 65535.")?,
        }
    };

    let mapping = MemberMapping {
        connection_string,
        backend_kind: Some(kind),
        tables,
        port,
    };
    let issues = validate_mapping(&mapping, schema);
    if !issues.is_empty() {
        let text: Vec<String> = issues.iter().map(ToString::to_string).collect();
        return Err(WizardError::Invalid(text.join("; ")));
    }
    mapping.validate()?;
    write_atomic(&options.output, &save_mapping(&mapping))?;
    p.say(&format!("Mapping written to {}", options.output.display()))?;

    // Registration page.
    let name = loop {
        let name = p.ask("Member name")?;
        if !name.is_empty() && !name.chars().any(char::is_whitespace) {
            break name;
        }
        p.say("The name must be non-empty and contain no spaces.")?;
    };
    let detected = options
        .address
        .clone()
        .unwrap_or_else(|| detect_local_address(options.center.as_deref()));
    let address = p.ask_default("Member address", &detected)?;
    let member = GridMember::new(name, address, port);

    let registration = options.center.as_ref().map(|center| {
        let result = register_with_center(center, &member, options.timeout);
        result.map_err(|e| e.to_string())
    });
    match &registration {
        Some(Ok((status, count))) => {
            p.say(&format!("Registered {member}: {status} ({count} members)"))?
        }
        Some(Err(e)) => p.say(&format!(
            "Registration failed: {e}. Retry later with `gridctl member register`."
        ))?,
        None => p.say("No center given; registration skipped.")?,
    }

    Ok(WizardOutcome {
        mapping,
        member,
        registration,
    })
}

fn find_table(
    local: Option<&[TableInfo]>,
    answer: &str,
) -> Result<(String, Option<TableInfo>), String> {
    if answer.is_empty() {
        return Err("a table name is required".into());
    }
    let Some(tables) = local else {
        return Ok((answer.to_string(), None));
    };
    tables
        .iter()
        .find(|t| t.name.eq_ignore_ascii_case(answer))
        .map(|t| (t.name.clone(), Some(t.clone())))
        .ok_or_else(|| format!("no local table `{answer}`"))
}

fn find_column(table: Option<&TableInfo>, answer: &str) -> Result<String, String> {
    if answer.is_empty() {
        return Err("a column name is required".into());
    }
    let Some(t) = table else {
        return Ok(answer.to_string());
    };
    t.columns
        .iter()
        .find(|c| c.name.eq_ignore_ascii_case(answer))
        .map(|c| c.name.clone())
        .ok_or_else(|| format!("table {} has no column `{answer}`", t.name))
}
