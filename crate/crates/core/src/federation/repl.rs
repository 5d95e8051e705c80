//! Interactive shell: one SQL statement per line, plus `\members`,
//! `\timeout N` and `\quit`.

use std::io::{self, BufRead, Write};
use std::time::Duration;

use super::{
    discover_members, fan_out, render_outcomes, render_table, unify, FederationError,
    MemberSource,
};

#[derive(Debug, Clone)]
pub struct ReplConfig {
    pub source: MemberSource,
    pub timeout: Duration,
    pub provenance: bool,
}

pub const PROMPT: &str = "grid> ";

pub fn run_repl<R: BufRead, W: Write>(
    config: &mut ReplConfig,
    input: &mut R,
    out: &mut W,
) -> io::Result<()> {
    loop {
        write!(out, "{PROMPT}")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            return Ok(());
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(cmd) = line.strip_prefix('\\') {
            let mut parts = cmd.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("quit" | "q"), _) => return Ok(()),
                (Some("members"), _) => match discover_members(&config.source, config.timeout) {
                    Ok(members) if members.is_empty() => writeln!(out, "no members registered")?,
                    Ok(members) => {
                        for m in members {
                            writeln!(out, "{m}")?;
                        }
                    }
                    Err(e) => writeln!(out, "error: {e}")?,
                },
                (Some("timeout"), None) => {
                    writeln!(out, "timeout is {} ms", config.timeout.as_millis())?
                }
                (Some("timeout"), Some(n)) => match n.parse::<u64>() {
                    Ok(ms) if ms > 0 => {
                        config.timeout = Duration::from_millis(ms);
                        writeln!(out, "timeout set to {ms} ms")?;
                    }
                    _ => writeln!(out, "error: timeout must be a positive number of milliseconds")?,
                },
                _ => writeln!(out, "unknown command \\{cmd}; try \\members, \\timeout N, \\quit")?,
            }
            continue;
        }
        run_one(config, line, out)?;
    }
}

fn run_one<W: Write>(config: &ReplConfig, sql: &str, out: &mut W) -> io::Result<()> {
    let members = match discover_members(&config.source, config.timeout) {
        Ok(m) => m,
        Err(e) => return writeln!(out, "error: {e}"),
    };
    if members.is_empty() {
        return writeln!(out, "error: no members registered");
    }
    match unify(fan_out(sql, &members, config.timeout), config.provenance) {
        Ok(result) => {
            write!(out, "{}", render_table(&result))?;
            write!(out, "{}", render_outcomes(&result.outcomes))
        }
        Err(FederationError::NoSuccessfulMembers(outcomes)) => {
            writeln!(out, "error: no member answered successfully")?;
            write!(out, "{}", render_outcomes(&outcomes))
        }
        Err(e) => writeln!(out, "error: {e}"),
    }
}
