#![allow(dead_code)]

pub mod engine_oracle;
pub mod fed;

use std::path::PathBuf;

use gridfed::schema::{load_mapping, load_registry, load_virtual_schema};
use gridfed::{GridRegistry, MemberMapping, VirtualSchema};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn center_schema() -> VirtualSchema {
    load_virtual_schema(&read_fixture("centre.xml")).unwrap()
}

pub fn sample_mapping() -> MemberMapping {
    load_mapping(&read_fixture("GridMapping.xml")).unwrap()
}

pub fn sample_registry() -> GridRegistry {
    load_registry(&read_fixture("GridList.xml")).unwrap()
}

pub fn mapping(name: &str) -> MemberMapping {
    load_mapping(&read_fixture(name)).unwrap()
}

/// Every center name mapped to itself.
pub fn identity_mapping(schema: &VirtualSchema) -> MemberMapping {
    use gridfed::schema::{ColumnMap, TableMap};
    MemberMapping {
        connection_string: ":memory:".into(),
        backend_kind: None,
        tables: schema
            .tables
            .iter()
            .map(|t| TableMap {
                center_table: t.name.clone(),
                grid_table: t.name.clone(),
                columns: t
                    .columns
                    .iter()
                    .map(|c| ColumnMap {
                        center_column: c.name.clone(),
                        grid_column: c.name.clone(),
                    })
                    .collect(),
            })
            .collect(),
        port: 2222,
    }
}
