//! The center's registration service: keeps `GridList.xml` and answers
//! `Register` and `ListMembers`.

use std::io;
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::net::{self, ServerHandle};
use crate::schema::{
    load_registry_file, save_registry, write_atomic, ConfigError, GridMember, GridRegistry,
};
use crate::wire::{self, AckStatus, ErrorCode, Message, WireError};

/// Replaces the entry with the same name, or appends a new one.
pub fn apply_registration(registry: &GridRegistry, member: GridMember) -> (GridRegistry, AckStatus) {
    let mut next = registry.clone();
    match next.members.iter_mut().find(|m| m.name == member.name) {
        Some(existing) => {
            *existing = member;
            (next, AckStatus::Updated)
        }
        None => {
            next.members.push(member);
            (next, AckStatus::Added)
        }
    }
}

/// One line per member, as written to the log.
pub fn member_list_lines(registry: &GridRegistry) -> Vec<String> {
    let mut lines = vec![format!("grid members: {}", registry.members.len())];
    for (i, m) in registry.members.iter().enumerate() {
        lines.push(format!("  {:>2}. {}  {}:{}", i + 1, m.name, m.address, m.port));
    }
    lines
}

fn display(registry: &GridRegistry) {
    for line in member_list_lines(registry) {
        log::info!("{line}");
    }
}

#[derive(Debug, Clone)]
pub struct RegistryConfig {
    pub listen: String,
    pub registry_path: PathBuf,
}

/// Loads the registry file, or starts empty when it does not exist.
pub fn load_or_empty(path: &Path) -> Result<GridRegistry, ConfigError> {
    if path.exists() {
        load_registry_file(path)
    } else {
        Ok(GridRegistry::default())
    }
}

struct State {
    registry: Mutex<GridRegistry>,
    path: PathBuf,
}

/// Registry service bound to `config.listen`. The returned handle keeps it
/// running.
pub fn serve_registry(config: &RegistryConfig) -> Result<ServerHandle, ServiceError> {
    let registry = load_or_empty(&config.registry_path)?;
    display(&registry);
    let state = Arc::new(State {
        registry: Mutex::new(registry),
        path: config.registry_path.clone(),
    });
    let handle = net::serve(&config.listen, "center", move |stream| {
        handle_connection(stream, &state)
    })?;
    Ok(handle)
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot listen: {0}")]
    Io(#[from] io::Error),
}

const IDLE_TIMEOUT: Duration = Duration::from_secs(30);

fn handle_connection(mut stream: TcpStream, state: &State) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "?".into());
    let _ = stream.set_read_timeout(Some(IDLE_TIMEOUT));
    loop {
        let msg = match wire::read_message(&mut stream) {
            Ok(m) => m,
            Err(WireError::Closed) => return,
            Err(e) => {
                log::warn!("center: dropping connection from {peer}: {e}");
                return;
            }
        };
        let reply = match msg {
            Message::Register {
                name,
                address,
                port,
            } => register(state, GridMember::new(name, address, port)),
            Message::ListMembers => {
                let members = lock(state).members.clone();
                Message::MemberList { members }
            }
            other => {
                log::warn!("center: unexpected {} from {peer}", other.type_name());
                return;
            }
        };
        if let Err(e) = wire::write_message(&mut stream, &reply) {
            log::warn!("center: cannot reply to {peer}: {e}");
            return;
        }
    }
}

fn lock(state: &State) -> std::sync::MutexGuard<'_, GridRegistry> {
    state.registry.lock().unwrap_or_else(|p| p.into_inner())
}

fn register(state: &State, member: GridMember) -> Message {
    let candidate = GridRegistry {
        members: vec![member.clone()],
    };
    if let Err(e) = candidate.validate() {
        return Message::result_err("", ErrorCode::Internal, e.to_string());
    }
    // Mutation and persistence happen under one lock, one registration at
    // a time.
    let mut current = lock(state);
    let (next, status) = apply_registration(&current, member.clone());
    if let Err(e) = write_atomic(&state.path, &save_registry(&next)) {
        log::error!("center: registration of {member} not persisted: {e}");
        return Message::result_err("", ErrorCode::Internal, format!("not persisted: {e}"));
    }
    *current = next;
    log::info!("center: {member} {status}");
    display(&current);
    Message::RegisterAck {
        status,
        member_count: current.members.len() as u64,
    }
}
