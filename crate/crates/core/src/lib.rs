//! Federated SELECT over heterogeneous member databases.
//!
//! A center publishes a virtual schema and a registry of members. Each
//! member maps the virtual schema onto its local tables, rewrites incoming
//! queries and runs them on its own backend; a consumer fans a query out to
//! every registered member and unions the answers.

pub mod engine;
pub mod federation;
pub mod member;
pub mod net;
pub mod registry;
pub mod rewrite;
pub mod schema;
pub mod sql;
pub mod value;
pub mod wire;

pub use rewrite::{resolve, rewrite, rewrite_query, rewrite_sql, RemapError};
pub use schema::{GridMember, GridRegistry, MemberMapping, VirtualSchema};
pub use value::{ResultColumn, ResultSet, Value};
pub use wire::Message;
