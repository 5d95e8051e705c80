//! Members over random local schemas, partitioned center data and a
//! generator of aggregate-free center queries.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use gridfed::engine::{Backend, BackendError, BackendHandle, Database, TableInfo};
use gridfed::member::{serve_agent, MemberAgent};
use gridfed::net::ServerHandle;
use gridfed::schema::{ColumnMap, DataType, TableMap};
use gridfed::sql::Query;
use gridfed::{GridMember, MemberMapping, ResultColumn, ResultSet, Value, VirtualSchema};

pub fn spawn_member(schema: &VirtualSchema, mapping: MemberMapping, backend: BackendHandle) -> ServerHandle {
    let agent = MemberAgent::new(schema.clone(), mapping, backend);
    serve_agent(Arc::new(agent), "127.0.0.1:0").unwrap()
}

pub fn member_for(name: &str, handle: &ServerHandle) -> GridMember {
    GridMember::new(name, "127.0.0.1", handle.local_addr().port())
}

/// Wraps a backend and sleeps before every query.
pub struct Delayed {
    pub inner: BackendHandle,
    pub delay: Duration,
}

impl Backend for Delayed {
    fn execute_select(&self, query: &Query) -> Result<ResultSet, BackendError> {
        thread::sleep(self.delay);
        self.inner.execute_select(query)
    }

    fn tables(&self) -> Result<Vec<TableInfo>, BackendError> {
        self.inner.tables()
    }
}

/// Center-schema rows: student then Department, columns in schema order.
#[derive(Clone, Debug)]
pub struct CenterData {
    pub students: Vec<Vec<Value>>,
    pub departments: Vec<Vec<Value>>,
}

const NAMES: [&str; 10] = [
    "Alice", "Bob", "Carol", "Dan", "Erin", "Farid", "Gita", "Hiro", "Ivan", "Jo",
];
const DEPT_NAMES: [&str; 5] = ["Physics", "Mathematics", "Computer Science", "Biology", "Arts"];
const CGPAS: [f64; 7] = [2.25, 2.9, 3.0, 3.25, 3.5, 3.75, 4.0];
const CREDITS: [f64; 5] = [120.0, 140.0, 150.0, 155.5, 160.0];

fn maybe_null(rng: &mut StdRng, v: Value) -> Value {
    if rng.random_bool(0.12) {
        Value::Null
    } else {
        v
    }
}

pub fn random_center_data(rng: &mut StdRng) -> CenterData {
    let nd = rng.random_range(1..=4);
    let departments = (0..nd)
        .map(|i| {
            vec![
                Value::text(format!("d{}", i + 1)),
                Value::text(*DEPT_NAMES.choose(rng).unwrap()),
                {
                    let v = Value::Float(*CREDITS.choose(rng).unwrap());
                    maybe_null(rng, v)
                },
            ]
        })
        .collect();
    let ns = rng.random_range(0..=8);
    let students = (0..ns)
        .map(|i| {
            let dept = match rng.random_range(0..10) {
                0 => Value::Null,
                1 => Value::text("d9"),
                _ => Value::text(format!("d{}", rng.random_range(1..=nd))),
            };
            vec![
                Value::text(format!("s{i}")),
                Value::text(*NAMES.choose(rng).unwrap()),
                dept,
                {
                    let v = Value::text(*["F", "M"].choose(rng).unwrap());
                    maybe_null(rng, v)
                },
                {
                    let v = Value::Float(*CGPAS.choose(rng).unwrap());
                    maybe_null(rng, v)
                },
            ]
        })
        .collect();
    CenterData {
        students,
        departments,
    }
}

/// Splits rows across `k` members, keeping each department together with
/// its students.
pub fn partition(rng: &mut StdRng, data: &CenterData, k: usize) -> Vec<CenterData> {
    let mut parts = vec![
        CenterData {
            students: vec![],
            departments: vec![],
        };
        k
    ];
    let mut owner: Vec<(Value, usize)> = Vec::new();
    let mut owner_of = |rng: &mut StdRng, key: &Value| -> usize {
        if let Some((_, o)) = owner.iter().find(|(v, _)| v == key) {
            return *o;
        }
        let o = rng.random_range(0..k);
        owner.push((key.clone(), o));
        o
    };
    for d in &data.departments {
        let o = owner_of(rng, &d[0]);
        parts[o].departments.push(d.clone());
    }
    for s in &data.students {
        let o = owner_of(rng, &s[2]);
        parts[o].students.push(s.clone());
    }
    parts
}

fn create(db: &mut Database, name: &str, cols: &[(String, DataType)], rows: &[Vec<Value>]) {
    let columns = cols
        .iter()
        .map(|(n, t)| ResultColumn::new(n.clone(), *t))
        .collect();
    db.create_table(name, columns).unwrap();
    for r in rows {
        db.insert(name, r.clone()).unwrap();
    }
}

/// The data stored under the center names.
pub fn center_database(schema: &VirtualSchema, data: &CenterData) -> Database {
    let mut db = Database::new();
    for (t, rows) in schema
        .tables
        .iter()
        .zip([&data.students, &data.departments])
    {
        let cols: Vec<(String, DataType)> =
            t.columns.iter().map(|c| (c.name.clone(), c.datatype)).collect();
        create(&mut db, &t.name, &cols, rows);
    }
    db
}

const LOCAL_TABLES: [[&str; 2]; 4] = [
    ["STUD", "DEP"],
    ["pupil", "faculty"],
    ["learner", "unit"],
    ["t_student", "t_dept"],
];
const PREFIXES: [&str; 4] = ["c", "col", "F", "x_"];

/// A member-local layout of `data`: renamed tables and columns, shuffled
/// column order, sometimes an extra unmapped column.
pub fn local_variant(
    rng: &mut StdRng,
    schema: &VirtualSchema,
    data: &CenterData,
    port: u16,
) -> (MemberMapping, Database) {
    let names = LOCAL_TABLES.choose(rng).unwrap();
    let prefix = *PREFIXES.choose(rng).unwrap();
    let mut db = Database::new();
    let mut tables = Vec::new();
    for ((t, rows), local) in schema
        .tables
        .iter()
        .zip([&data.students, &data.departments])
        .zip(names)
    {
        let mut order: Vec<usize> = (0..t.columns.len()).collect();
        order.shuffle(rng);
        let extra = rng.random_bool(0.3);
        let mut cols: Vec<(String, DataType)> = order
            .iter()
            .map(|&i| (format!("{prefix}{i}_{}", t.name.len()), t.columns[i].datatype))
            .collect();
        if extra {
            cols.push(("extra".into(), DataType::Int));
        }
        let local_rows: Vec<Vec<Value>> = rows
            .iter()
            .map(|r| {
                let mut out: Vec<Value> = order.iter().map(|&i| r[i].clone()).collect();
                if extra {
                    out.push(Value::Int(7));
                }
                out
            })
            .collect();
        create(&mut db, local, &cols, &local_rows);
        tables.push(TableMap {
            center_table: t.name.clone(),
            grid_table: local.to_string(),
            columns: order
                .iter()
                .zip(&cols)
                .map(|(&i, (local_col, _))| ColumnMap {
                    center_column: t.columns[i].name.clone(),
                    grid_column: local_col.clone(),
                })
                .collect(),
        });
    }
    let mapping = MemberMapping {
        connection_string: ":memory:".into(),
        backend_kind: None,
        tables,
        port,
    };
    (mapping, db)
}

/// Center SQL without aggregates, DISTINCT or LIMIT. Joins only pair a
/// student with its own department and subqueries only test membership
/// by non-null department key, so co-located partitions answer exactly
/// their share, negated or not.
pub fn random_center_query(rng: &mut StdRng) -> String {
    let mode = rng.random_range(0..4);
    let has_s = mode != 1;
    let has_d = mode != 0;
    let from = match mode {
        0 => "student s".to_string(),
        1 => "Department d".to_string(),
        2 => "student s JOIN Department d ON s.departmentid = d.departmentiden".to_string(),
        _ => "student s LEFT JOIN Department d ON s.departmentid = d.departmentiden".to_string(),
    };

    let mut pool: Vec<&str> = Vec::new();
    if has_s {
        pool.extend([
            "s.studentid",
            "s.studentname",
            "studentname",
            "s.departmentid",
            "s.sex",
            "s.CGPA",
            "s.CGPA * 2",
            "UPPER(s.studentname)",
            "s.CGPA + 1 AS bumped",
            "LENGTH(studentname) AS len",
        ]);
    }
    if has_d {
        pool.extend([
            "d.departmentiden",
            "d.departmentName",
            "departmentName",
            "d.TotalCredit",
            "d.TotalCredit / 10",
            "LOWER(d.departmentName) AS lname",
        ]);
    }
    if has_s && has_d {
        pool.extend(["d.TotalCredit - s.CGPA AS gap", "COALESCE(d.departmentName, s.sex)"]);
    }
    let items: Vec<String> = if rng.random_bool(0.1) {
        vec!["*".into()]
    } else if has_s && rng.random_bool(0.08) {
        vec!["s.*".into()]
    } else {
        let n = rng.random_range(1..=4);
        (0..n).map(|_| pool.choose(rng).unwrap().to_string()).collect()
    };

    let mut preds: Vec<&str> = Vec::new();
    if has_s {
        preds.extend([
            "s.CGPA > 3.0",
            "s.CGPA >= 3.5",
            "s.CGPA IS NULL",
            "s.sex = 'F'",
            "s.studentname LIKE '%a%'",
            "s.departmentid IN ('d1', 'd2')",
            "s.departmentid IN (SELECT departmentiden FROM Department WHERE TotalCredit > 140)",
            "s.departmentid IS NOT NULL",
        ]);
    }
    if has_d {
        preds.extend([
            "d.TotalCredit >= 150",
            "d.departmentName LIKE 'P%'",
            "d.departmentName <> 'Arts'",
        ]);
    }
    if mode == 1 {
        preds.push("d.departmentiden IN (SELECT departmentid FROM student WHERE CGPA > 3 AND departmentid IS NOT NULL)");
    }
    let mut where_clause = String::new();
    if rng.random_bool(0.7) {
        let mut p = preds.choose(rng).unwrap().to_string();
        for _ in 0..rng.random_range(0..=2) {
            let q = preds.choose(rng).unwrap();
            let op = if rng.random_bool(0.5) { "AND" } else { "OR" };
            p = if rng.random_bool(0.2) {
                format!("NOT ({p}) {op} {q}")
            } else {
                format!("({p}) {op} {q}")
            };
        }
        where_clause = format!(" WHERE {p}");
    }
    let order = if rng.random_bool(0.3) {
        " ORDER BY 1 DESC".to_string()
    } else {
        String::new()
    };
    format!("SELECT {} FROM {from}{where_clause}{order}", items.join(", "))
}
