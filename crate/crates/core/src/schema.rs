//! Configuration documents shared by the center and the members.
//!
//! Three XML files are modelled here:
//!
//! * `centre.xml` ([`VirtualSchema`]): the center's table/column catalog.
//! * `GridMapping.xml` ([`MemberMapping`]): a member's center-to-local name
//!   mapping, its backend connection string and its listen port.
//! * `GridList.xml` ([`GridRegistry`]): the members known to the center.
//!
//! Identifier lookups are case-insensitive; serialized output keeps the case
//! the document was loaded with.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed XML: {0}")]
    XmlMalformed(String),
    #[error("invalid virtual schema: {0}")]
    SchemaInvalid(String),
    #[error("invalid mapping: {0}")]
    MappingInvalid(String),
    #[error("invalid registry: {0}")]
    RegistryInvalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Column datatypes understood by the center and by the embedded engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    String,
    Int,
    Float,
    Bool,
    Date,
}

impl DataType {
    pub const ALL: [DataType; 5] = [
        DataType::String,
        DataType::Int,
        DataType::Float,
        DataType::Bool,
        DataType::Date,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::String => "string",
            DataType::Int => "int",
            DataType::Float => "float",
            DataType::Bool => "bool",
            DataType::Date => "date",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int | DataType::Float)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown datatype `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnDef {
    pub name: String,
    pub description: String,
    pub datatype: DataType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableDef {
    pub name: String,
    pub description: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// In-memory image of `centre.xml`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VirtualSchema {
    pub tables: Vec<TableDef>,
}

impl VirtualSchema {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    /// Checks the uniqueness and naming invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = ConfigError::SchemaInvalid;
        for (i, table) in self.tables.iter().enumerate() {
            check_identifier(&table.name).map_err(invalid)?;
            if self.tables[..i]
                .iter()
                .any(|t| t.name.eq_ignore_ascii_case(&table.name))
            {
                return Err(invalid(format!("duplicate table `{}`", table.name)));
            }
            if table.columns.is_empty() {
                return Err(invalid(format!("table `{}` has no columns", table.name)));
            }
            for (j, col) in table.columns.iter().enumerate() {
                check_identifier(&col.name).map_err(invalid)?;
                if table.columns[..j]
                    .iter()
                    .any(|c| c.name.eq_ignore_ascii_case(&col.name))
                {
                    return Err(invalid(format!(
                        "duplicate column `{}` in table `{}`",
                        col.name, table.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub center_column: String,
    pub grid_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableMap {
    pub center_table: String,
    pub grid_table: String,
    pub columns: Vec<ColumnMap>,
}

impl TableMap {
    pub fn column(&self, center_column: &str) -> Option<&ColumnMap> {
        self.columns
            .iter()
            .find(|c| c.center_column.eq_ignore_ascii_case(center_column))
    }
}

/// Which adapter a member uses to reach its data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum BackendKind {
    #[default]
    Embedded,
    External,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Embedded => "embedded",
            BackendKind::External => "external",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "embedded" => Ok(BackendKind::Embedded),
            "external" => Ok(BackendKind::External),
            _ => Err(format!("unknown backend kind `{s}`")),
        }
    }
}

/// In-memory image of `GridMapping.xml`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberMapping {
    pub connection_string: String,
    /// `None` when the file carries no `kind` attribute.
    pub backend_kind: Option<BackendKind>,
    pub tables: Vec<TableMap>,
    pub port: u16,
}

impl MemberMapping {
    pub fn kind(&self) -> BackendKind {
        self.backend_kind.unwrap_or_default()
    }

    pub fn table(&self, center_table: &str) -> Option<&TableMap> {
        self.tables
            .iter()
            .find(|t| t.center_table.eq_ignore_ascii_case(center_table))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = ConfigError::MappingInvalid;
        if self.port == 0 {
            return Err(invalid("port must be in 1..=65535".into()));
        }
        for (i, table) in self.tables.iter().enumerate() {
            check_identifier(&table.center_table).map_err(invalid)?;
            check_non_empty(&table.grid_table, "GridTable").map_err(invalid)?;
            if self.tables[..i]
                .iter()
                .any(|t| t.center_table.eq_ignore_ascii_case(&table.center_table))
            {
                return Err(invalid(format!(
                    "center table `{}` mapped twice",
                    table.center_table
                )));
            }
            for (j, col) in table.columns.iter().enumerate() {
                check_identifier(&col.center_column).map_err(invalid)?;
                check_non_empty(&col.grid_column, "GridColumn").map_err(invalid)?;
                if table.columns[..j]
                    .iter()
                    .any(|c| c.center_column.eq_ignore_ascii_case(&col.center_column))
                {
                    return Err(invalid(format!(
                        "center column `{}.{}` mapped twice",
                        table.center_table, col.center_column
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridMember {
    pub name: String,
    pub address: String,
    pub port: u16,
}

impl GridMember {
    pub fn new(name: impl Into<String>, address: impl Into<String>, port: u16) -> Self {
        Self {
            name: name.into(),
            address: address.into(),
            port,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}:{}", self.address, self.port)
    }
}

impl fmt::Display for GridMember {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}:{}", self.name, self.address, self.port)
    }
}

/// In-memory image of `GridList.xml`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GridRegistry {
    pub members: Vec<GridMember>,
}

impl GridRegistry {
    pub fn get(&self, name: &str) -> Option<&GridMember> {
        self.members.iter().find(|m| m.name == name)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = ConfigError::RegistryInvalid;
        for (i, m) in self.members.iter().enumerate() {
            check_non_empty(&m.name, "gridOrganization").map_err(invalid)?;
            check_non_empty(&m.address, "GridNetworkAddress").map_err(invalid)?;
            if m.port == 0 {
                return Err(invalid(format!("member `{}` has port 0", m.name)));
            }
            if self.members[..i].iter().any(|o| o.name == m.name) {
                return Err(invalid(format!("duplicate member `{}`", m.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    UnknownCenterTable,
    UnknownCenterColumn,
}

/// A mapping entry that names something the virtual schema does not have.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingIssue {
    pub kind: IssueKind,
    pub subject: String,
}

impl fmt::Display for MappingIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            IssueKind::UnknownCenterTable => write!(f, "unknown center table `{}`", self.subject),
            IssueKind::UnknownCenterColumn => {
                write!(f, "unknown center column `{}`", self.subject)
            }
        }
    }
}

/// Lists every center table or column referenced by `mapping` that is absent
/// from `schema`.
pub fn validate_mapping(mapping: &MemberMapping, schema: &VirtualSchema) -> Vec<MappingIssue> {
    let mut issues = Vec::new();
    for tm in &mapping.tables {
        let Some(table) = schema.table(&tm.center_table) else {
            issues.push(MappingIssue {
                kind: IssueKind::UnknownCenterTable,
                subject: tm.center_table.clone(),
            });
            continue;
        };
        for cm in &tm.columns {
            if table.column(&cm.center_column).is_none() {
                issues.push(MappingIssue {
                    kind: IssueKind::UnknownCenterColumn,
                    subject: format!("{}.{}", tm.center_table, cm.center_column),
                });
            }
        }
    }
    issues
}

fn check_identifier(name: &str) -> Result<(), String> {
    if name.is_empty() {
        return Err("empty identifier".into());
    }
    if name.chars().any(char::is_whitespace) {
        return Err(format!("identifier `{name}` contains whitespace"));
    }
    Ok(())
}

fn check_non_empty(value: &str, what: &str) -> Result<(), String> {
    if value.trim().is_empty() {
        Err(format!("{what} must not be empty"))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Reading

fn parse_document(xml: &str) -> Result<roxmltree::Document<'_>, ConfigError> {
    roxmltree::Document::parse(xml).map_err(|e| ConfigError::XmlMalformed(e.to_string()))
}

fn expect_root(doc: &roxmltree::Document<'_>, name: &str) -> Result<(), ConfigError> {
    let root = doc.root_element();
    if root.tag_name().name() != name {
        return Err(ConfigError::XmlMalformed(format!(
            "expected root element <{name}>, found <{}>",
            root.tag_name().name()
        )));
    }
    Ok(())
}

fn elements<'a, 'input>(
    node: roxmltree::Node<'a, 'input>,
    name: &'static str,
) -> impl Iterator<Item = roxmltree::Node<'a, 'input>> {
    node.children()
        .filter(move |n| n.is_element() && n.tag_name().name() == name)
}

fn required_attr<'a>(
    node: roxmltree::Node<'a, '_>,
    attr: &str,
    err: fn(String) -> ConfigError,
) -> Result<&'a str, ConfigError> {
    node.attribute(attr).ok_or_else(|| {
        err(format!(
            "<{}> is missing attribute `{attr}`",
            node.tag_name().name()
        ))
    })
}

fn parse_port(text: &str, err: fn(String) -> ConfigError) -> Result<u16, ConfigError> {
    match text.trim().parse::<u16>() {
        Ok(p) if p > 0 => Ok(p),
        _ => Err(err(format!("invalid port `{}`", text.trim()))),
    }
}

pub fn load_virtual_schema(xml: &str) -> Result<VirtualSchema, ConfigError> {
    let doc = parse_document(xml)?;
    expect_root(&doc, "database")?;
    let invalid = ConfigError::SchemaInvalid;
    let mut schema = VirtualSchema::default();
    for t in elements(doc.root_element(), "table") {
        let mut table = TableDef {
            name: required_attr(t, "name", invalid)?.to_string(),
            description: t.attribute("description").unwrap_or_default().to_string(),
            columns: Vec::new(),
        };
        for c in elements(t, "column") {
            let datatype = required_attr(c, "datatype", invalid)?
                .parse::<DataType>()
                .map_err(invalid)?;
            table.columns.push(ColumnDef {
                name: required_attr(c, "name", invalid)?.to_string(),
                description: c.attribute("description").unwrap_or_default().to_string(),
                datatype,
            });
        }
        schema.tables.push(table);
    }
    schema.validate()?;
    Ok(schema)
}

pub fn load_mapping(xml: &str) -> Result<MemberMapping, ConfigError> {
    let doc = parse_document(xml)?;
    expect_root(&doc, "Mapping")?;
    let invalid = ConfigError::MappingInvalid;
    let root = doc.root_element();

    let conn = elements(root, "ConnectionString")
        .next()
        .ok_or_else(|| invalid("missing <ConnectionString>".into()))?;
    let connection_string = required_attr(conn, "value", invalid)?.to_string();
    let backend_kind = match conn.attribute("kind") {
        Some(k) => Some(k.parse().map_err(invalid)?),
        None => None,
    };

    let mut tables = Vec::new();
    for t in elements(root, "Table") {
        let mut columns = Vec::new();
        for c in elements(t, "Column") {
            columns.push(ColumnMap {
                center_column: required_attr(c, "CenterColumn", invalid)?.to_string(),
                grid_column: required_attr(c, "GridColumn", invalid)?.to_string(),
            });
        }
        tables.push(TableMap {
            center_table: required_attr(t, "CenterTable", invalid)?.to_string(),
            grid_table: required_attr(t, "GridTable", invalid)?.to_string(),
            columns,
        });
    }

    let port_text = elements(root, "PortAddress")
        .flat_map(|pa| elements(pa, "Port"))
        .next()
        .and_then(|p| p.text())
        .ok_or_else(|| invalid("missing <PortAddress><Port>".into()))?;
    let port = parse_port(port_text, invalid)?;

    let mapping = MemberMapping {
        connection_string,
        backend_kind,
        tables,
        port,
    };
    mapping.validate()?;
    Ok(mapping)
}

pub fn load_registry(xml: &str) -> Result<GridRegistry, ConfigError> {
    let doc = parse_document(xml)?;
    expect_root(&doc, "GridList")?;
    let invalid = ConfigError::RegistryInvalid;
    let mut registry = GridRegistry::default();
    for g in elements(doc.root_element(), "Grid") {
        registry.members.push(GridMember {
            name: required_attr(g, "gridOrganization", invalid)?.to_string(),
            address: required_attr(g, "GridNetworkAddress", invalid)?.to_string(),
            port: parse_port(required_attr(g, "Port", invalid)?, invalid)?,
        });
    }
    registry.validate()?;
    Ok(registry)
}

// ---------------------------------------------------------------------------
// Writing

const CENTRE_PROLOG: &str = r#"<?xml version="1.0" encoding="UTF-8" ?>"#;
// No encoding declaration: the document is UTF-8 by default.
const STANDALONE_PROLOG: &str = r#"<?xml version="1.0" standalone="yes" ?>"#;

fn escape_attr(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for ch in value.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

pub fn save_virtual_schema(schema: &VirtualSchema) -> String {
    let mut out = format!("{CENTRE_PROLOG}\n<database>\n");
    for t in &schema.tables {
        out.push_str(&format!(
            "  <table name=\"{}\" description=\"{}\">\n",
            escape_attr(&t.name),
            escape_attr(&t.description)
        ));
        for c in &t.columns {
            out.push_str(&format!(
                "    <column name=\"{}\" description=\"{}\" datatype=\"{}\" />\n",
                escape_attr(&c.name),
                escape_attr(&c.description),
                c.datatype
            ));
        }
        out.push_str("  </table>\n");
    }
    out.push_str("</database>\n");
    out
}

/// `kind` is written only when the mapping carries one, so sample-style
/// files round-trip unchanged.
pub fn save_mapping(mapping: &MemberMapping) -> String {
    let mut out = format!("{STANDALONE_PROLOG}\n<Mapping>\n");
    out.push_str(&format!(
        "  <ConnectionString value=\"{}\"",
        escape_attr(&mapping.connection_string)
    ));
    if let Some(kind) = mapping.backend_kind {
        out.push_str(&format!(" kind=\"{kind}\""));
    }
    out.push_str(" />\n");
    for t in &mapping.tables {
        out.push_str(&format!(
            "  <Table CenterTable=\"{}\" GridTable=\"{}\">\n",
            escape_attr(&t.center_table),
            escape_attr(&t.grid_table)
        ));
        for c in &t.columns {
            out.push_str(&format!(
                "    <Column CenterColumn=\"{}\" GridColumn=\"{}\" />\n",
                escape_attr(&c.center_column),
                escape_attr(&c.grid_column)
            ));
        }
        out.push_str("  </Table>\n");
    }
    out.push_str(&format!(
        "  <PortAddress>\n    <Port>{}</Port>\n  </PortAddress>\n</Mapping>\n",
        mapping.port
    ));
    out
}

pub fn save_registry(registry: &GridRegistry) -> String {
    let mut out = format!("{STANDALONE_PROLOG}\n<GridList>\n");
    for m in &registry.members {
        out.push_str(&format!(
            "  <Grid gridOrganization=\"{}\" GridNetworkAddress=\"{}\" Port=\"{}\" />\n",
            escape_attr(&m.name),
            escape_attr(&m.address),
            m.port
        ));
    }
    out.push_str("</GridList>\n");
    out
}

// ---------------------------------------------------------------------------
// Files

pub fn read_file(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Replaces `path` with `contents` via a sibling temp file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), ConfigError> {
    let io_err = |source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "document".into());
    let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err)
}

pub fn load_virtual_schema_file(path: &Path) -> Result<VirtualSchema, ConfigError> {
    load_virtual_schema(&read_file(path)?)
}

pub fn load_mapping_file(path: &Path) -> Result<MemberMapping, ConfigError> {
    load_mapping(&read_file(path)?)
}

pub fn load_registry_file(path: &Path) -> Result<GridRegistry, ConfigError> {
    load_registry(&read_file(path)?)
}
