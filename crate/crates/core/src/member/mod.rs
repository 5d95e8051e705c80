//! The data grid service run by each member: answer center-schema queries
//! from the local backend, plus setup and self-registration.

mod wizard;

use std::io;
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::engine::{self, BackendError, BackendHandle};
use crate::net::{self, NetError, ServerHandle};
use crate::rewrite::{rewrite_query, RemapError};
use crate::schema::{
    load_mapping_file, load_virtual_schema_file, ConfigError, GridMember, MemberMapping,
    VirtualSchema,
};
use crate::sql;
use crate::wire::{self, AckStatus, ErrorCode, Message, WireError};

pub use wizard::{
    detect_local_address, run_wizard, WizardError, WizardOptions, WizardOutcome, DEFAULT_PORT,
};

/// Everything a member needs to answer queries. Immutable once built and
/// shared by all connection threads.
#[derive(Debug, Clone)]
pub struct MemberAgent {
    schema: VirtualSchema,
    mapping: MemberMapping,
    backend: BackendHandle,
}

impl MemberAgent {
    pub fn new(schema: VirtualSchema, mapping: MemberMapping, backend: BackendHandle) -> Self {
        Self {
            schema,
            mapping,
            backend,
        }
    }

    pub fn mapping(&self) -> &MemberMapping {
        &self.mapping
    }

    pub fn handle_query(&self, request_id: &str, sql_text: &str) -> Message {
        let answer = catch_unwind(AssertUnwindSafe(|| self.answer(request_id, sql_text)));
        answer.unwrap_or_else(|_| {
            Message::result_err(request_id, ErrorCode::Internal, "internal error while answering")
        })
    }

    fn answer(&self, request_id: &str, sql_text: &str) -> Message {
        let fail = |code, msg: String| {
            log::info!("member: {request_id} failed with {code}: {msg}");
            Message::result_err(request_id, code, msg)
        };
        let ast = match sql::parse(sql_text) {
            Ok(ast) => ast,
            Err(e) => return fail(ErrorCode::ParseError, e.to_string()),
        };
        let local = match rewrite_query(&ast, &self.schema, &self.mapping) {
            Ok(q) => q,
            Err(RemapError::Rewrite(e)) => return fail(ErrorCode::MappingIncomplete, e.to_string()),
            Err(e) => return fail(ErrorCode::ParseError, e.to_string()),
        };
        log::debug!("member: {request_id}: {local}");
        match self.backend.execute_select(&local) {
            Ok(rs) => Message::result_ok(request_id, rs),
            Err(e) => fail(ErrorCode::BackendError, e.to_string()),
        }
    }

    /// Reply to one incoming message; `None` for messages a member does not
    /// serve.
    pub fn handle_message(&self, msg: &Message) -> Option<Message> {
        match msg {
            Message::Query { request_id, sql } => Some(self.handle_query(request_id, sql)),
            _ => None,
        }
    }
}

/// Free-function form of [`MemberAgent::handle_query`].
pub fn handle_query(
    msg: &Message,
    mapping: &MemberMapping,
    schema: &VirtualSchema,
    backend: &BackendHandle,
) -> Option<Message> {
    MemberAgent::new(schema.clone(), mapping.clone(), backend.clone()).handle_message(msg)
}

#[derive(Debug, Error)]
pub enum MemberError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot open backend: {0}")]
    Backend(#[from] BackendError),
    #[error("cannot listen: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct MemberConfig {
    pub mapping_path: PathBuf,
    pub schema_path: PathBuf,
    /// Overrides the mapping's connection string with an embedded fixture.
    pub fixture_path: Option<PathBuf>,
    /// Overrides `0.0.0.0:<mapping port>`.
    pub listen: Option<String>,
}

pub fn open_agent(config: &MemberConfig) -> Result<MemberAgent, MemberError> {
    let schema = load_virtual_schema_file(&config.schema_path)?;
    let mapping = load_mapping_file(&config.mapping_path)?;
    let backend = match &config.fixture_path {
        Some(p) => engine::open(crate::schema::BackendKind::Embedded, &p.to_string_lossy())?,
        None => engine::open(mapping.kind(), &mapping.connection_string)?,
    };
    Ok(MemberAgent::new(schema, mapping, backend))
}

pub fn serve_member(config: &MemberConfig) -> Result<ServerHandle, MemberError> {
    let agent = open_agent(config)?;
    let listen = config
        .listen
        .clone()
        .unwrap_or_else(|| format!("0.0.0.0:{}", agent.mapping.port));
    Ok(serve_agent(Arc::new(agent), &listen)?)
}

const READ_TIMEOUT: Duration = Duration::from_secs(30);

pub fn serve_agent(agent: Arc<MemberAgent>, listen: &str) -> io::Result<ServerHandle> {
    net::serve(listen, "member", move |stream| serve_connection(stream, &agent))
}

fn serve_connection(mut stream: TcpStream, agent: &MemberAgent) {
    let _ = stream.set_read_timeout(Some(READ_TIMEOUT));
    let _ = stream.set_nodelay(true);
    loop {
        let msg = match wire::read_message(&mut stream) {
            Ok(m) => m,
            Err(WireError::Closed) => return,
            Err(e) => {
                log::warn!("member: dropping connection: {e}");
                return;
            }
        };
        let Some(reply) = agent.handle_message(&msg) else {
            log::warn!("member: unexpected {}", msg.type_name());
            return;
        };
        if let Err(e) = wire::write_message(&mut stream, &reply) {
            log::warn!("member: cannot reply: {e}");
            return;
        }
    }
}

#[derive(Debug, Error)]
pub enum RegisterError {
    #[error(transparent)]
    ConnectionFailed(#[from] NetError),
    #[error("center refused registration: {0}")]
    Refused(String),
    #[error("unexpected reply {0}")]
    ProtocolError(String),
}

pub fn register_with_center(
    center: &str,
    member: &GridMember,
    timeout: Duration,
) -> Result<(AckStatus, u64), RegisterError> {
    match net::request(center, &Message::register(member), timeout)? {
        Message::RegisterAck {
            status,
            member_count,
        } => Ok((status, member_count)),
        Message::ResultErr { message, .. } => Err(RegisterError::Refused(message)),
        other => Err(RegisterError::ProtocolError(other.type_name().to_string())),
    }
}
