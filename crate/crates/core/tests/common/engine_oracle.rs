//! Brute-force evaluator for a small query family, used to check the
//! embedded engine. Queries are generated in their own representation,
//! rendered to SQL for the engine and evaluated here directly.

use std::cmp::Ordering;

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use gridfed::engine::Database;
use gridfed::schema::DataType;
use gridfed::{ResultColumn, Value};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum T {
    Int,
    Float,
    Text,
}

#[derive(Clone, Debug)]
pub struct OTable {
    pub name: &'static str,
    pub alias: &'static str,
    pub cols: Vec<(&'static str, T)>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arith {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Clone, Debug)]
pub enum E {
    /// Index into the joined row.
    Col(usize),
    Lit(Value),
    Arith(Arith, Box<E>, Box<E>),
    Neg(Box<E>),
    Cmp(Cmp, Box<E>, Box<E>),
    And(Box<E>, Box<E>),
    Or(Box<E>, Box<E>),
    Not(Box<E>),
    IsNull(Box<E>, bool),
    Like(Box<E>, String),
    In(Box<E>, Vec<E>),
    Upper(Box<E>),
    Length(Box<E>),
    Abs(Box<E>),
    Coalesce(Box<E>, Box<E>),
}

#[derive(Clone, Debug)]
pub enum Agg {
    CountStar,
    Count(E),
    Sum(E),
    Avg(E),
    Min(E),
    Max(E),
}

#[derive(Clone, Debug)]
pub enum Item {
    E(E),
    Agg(Agg),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JoinK {
    Inner,
    Left,
    Right,
    Cross,
}

#[derive(Clone, Debug)]
pub enum OrdKey {
    /// 0-based output position.
    Out(usize),
    /// Expression over the joined row; ungrouped, non-distinct only.
    Expr(E),
}

#[derive(Clone, Debug)]
pub struct OQuery {
    pub left: usize,
    pub join: Option<(JoinK, usize, Option<E>)>,
    pub distinct: bool,
    pub items: Vec<Item>,
    pub aliases: Vec<Option<String>>,
    pub filter: Option<E>,
    /// Joined-row column indexes.
    pub group_by: Vec<usize>,
    pub having: Option<(Agg, Cmp, Value)>,
    pub order: Vec<(OrdKey, bool)>,
    pub limit: Option<usize>,
}

// ---------------------------------------------------------------------------
// Data

const INTS: [i64; 8] = [-3, -1, 0, 1, 2, 3, 5, 7];
const FLOATS: [f64; 7] = [-1.5, 0.0, 0.5, 1.25, 2.0, 3.75, 10.0];
const TEXTS: [&str; 7] = ["ab", "b", "abc", "x", "", "Ab", "b_c"];

fn rand_value(rng: &mut StdRng, t: T) -> Value {
    if rng.random_bool(0.15) {
        return Value::Null;
    }
    match t {
        T::Int => Value::Int(*INTS.choose(rng).unwrap()),
        T::Float => Value::Float(*FLOATS.choose(rng).unwrap()),
        T::Text => Value::text(*TEXTS.choose(rng).unwrap()),
    }
}

pub fn random_tables(rng: &mut StdRng) -> Vec<OTable> {
    let specs: [(&str, &str, Vec<(&str, T)>); 2] = [
        (
            "r",
            "x",
            vec![("a", T::Int), ("b", T::Float), ("c", T::Text), ("d", T::Int)],
        ),
        ("s", "y", vec![("a", T::Int), ("e", T::Text), ("f", T::Float)]),
    ];
    specs
        .into_iter()
        .map(|(name, alias, cols)| {
            let n = rng.random_range(0..=8);
            let rows = (0..n)
                .map(|_| cols.iter().map(|(_, t)| rand_value(rng, *t)).collect())
                .collect();
            OTable {
                name,
                alias,
                cols,
                rows,
            }
        })
        .collect()
}

pub fn build_database(tables: &[OTable]) -> Database {
    let mut db = Database::new();
    for t in tables {
        let cols = t
            .cols
            .iter()
            .map(|(n, ty)| {
                let dt = match ty {
                    T::Int => DataType::Int,
                    T::Float => DataType::Float,
                    T::Text => DataType::String,
                };
                ResultColumn::new(*n, dt)
            })
            .collect();
        db.create_table(t.name, cols).unwrap();
        for r in &t.rows {
            db.insert(t.name, r.clone()).unwrap();
        }
    }
    db
}

// ---------------------------------------------------------------------------
// Generation

struct Cols {
    /// (sql text, type) per joined-row position.
    list: Vec<(String, T)>,
}

pub struct Gen {
    pub rng: StdRng,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: StdRng::seed_from_u64(seed),
        }
    }

    fn p(&mut self, x: f64) -> bool {
        self.rng.random_bool(x)
    }

    fn col_of(&mut self, cols: &Cols, t: Option<T>) -> Option<usize> {
        let idx: Vec<usize> = (0..cols.list.len())
            .filter(|i| t.is_none_or(|t| cols.list[*i].1 == t))
            .collect();
        idx.choose(&mut self.rng).copied()
    }

    fn lit(&mut self, t: T) -> E {
        if self.p(0.05) {
            return E::Lit(Value::Null);
        }
        E::Lit(match t {
            T::Int => Value::Int(*INTS.choose(&mut self.rng).unwrap()),
            T::Float => Value::Float(*FLOATS.choose(&mut self.rng).unwrap()),
            T::Text => Value::text(*TEXTS.choose(&mut self.rng).unwrap()),
        })
    }

    /// A numeric expression and its static type.
    fn num(&mut self, cols: &Cols, budget: u32) -> (E, T) {
        let pick = if budget == 0 { self.rng.random_range(0..3) } else { self.rng.random_range(0..8) };
        match pick {
            0 | 1 => {
                let want = if self.p(0.5) { T::Int } else { T::Float };
                match self.col_of(cols, Some(want)) {
                    Some(i) => (E::Col(i), want),
                    None => (self.lit(want), want),
                }
            }
            2 => {
                let t = if self.p(0.5) { T::Int } else { T::Float };
                (self.lit(t), t)
            }
            3 | 4 => {
                let op = *[Arith::Add, Arith::Sub, Arith::Mul, Arith::Div]
                    .choose(&mut self.rng)
                    .unwrap();
                let (l, lt) = self.num(cols, budget - 1);
                let (r, rt) = self.num(cols, budget - 1);
                let t = if op == Arith::Div || lt == T::Float || rt == T::Float {
                    T::Float
                } else {
                    T::Int
                };
                (E::Arith(op, Box::new(l), Box::new(r)), t)
            }
            5 => {
                let (e, t) = self.num(cols, budget - 1);
                (E::Neg(Box::new(e)), t)
            }
            6 => {
                let (e, t) = self.num(cols, budget - 1);
                (E::Abs(Box::new(e)), t)
            }
            _ => (E::Length(Box::new(self.text(cols, budget - 1))), T::Int),
        }
    }

    fn text(&mut self, cols: &Cols, budget: u32) -> E {
        let pick = if budget == 0 { self.rng.random_range(0..2) } else { self.rng.random_range(0..4) };
        match pick {
            0 => match self.col_of(cols, Some(T::Text)) {
                Some(i) => E::Col(i),
                None => self.lit(T::Text),
            },
            1 => self.lit(T::Text),
            2 => E::Upper(Box::new(self.text(cols, budget - 1))),
            _ => E::Coalesce(
                Box::new(self.text(cols, budget - 1)),
                Box::new(self.lit(T::Text)),
            ),
        }
    }

    fn pred(&mut self, cols: &Cols, budget: u32) -> E {
        let pick = if budget == 0 { self.rng.random_range(0..4) } else { self.rng.random_range(0..9) };
        match pick {
            0 | 1 => {
                let op = *[Cmp::Eq, Cmp::Ne, Cmp::Lt, Cmp::Le, Cmp::Gt, Cmp::Ge]
                    .choose(&mut self.rng)
                    .unwrap();
                let b = budget.min(1);
                let (l, r) = if self.p(0.65) {
                    (self.num(cols, b).0, self.num(cols, b).0)
                } else {
                    (self.text(cols, b), self.text(cols, b))
                };
                E::Cmp(op, Box::new(l), Box::new(r))
            }
            2 => {
                let pat = *["a%", "%b", "_b%", "%", "ab", "b\\_c", "%c"]
                    .choose(&mut self.rng)
                    .unwrap();
                E::Like(Box::new(self.text(cols, 0)), pat.replace('\\', ""))
            }
            3 => {
                let e = match self.col_of(cols, None) {
                    Some(i) => E::Col(i),
                    None => self.lit(T::Int),
                };
                E::IsNull(Box::new(e), self.p(0.5))
            }
            4 => E::And(Box::new(self.pred(cols, budget - 1)), Box::new(self.pred(cols, budget - 1))),
            5 => E::Or(Box::new(self.pred(cols, budget - 1)), Box::new(self.pred(cols, budget - 1))),
            6 => E::Not(Box::new(self.pred(cols, budget - 1))),
            _ => {
                let n = self.rng.random_range(1..=3);
                if self.p(0.5) {
                    let (lhs, _) = self.num(cols, 0);
                    let items = (0..n).map(|_| self.lit(T::Int)).collect();
                    E::In(Box::new(lhs), items)
                } else {
                    let lhs = self.text(cols, 0);
                    let items = (0..n).map(|_| self.lit(T::Text)).collect();
                    E::In(Box::new(lhs), items)
                }
            }
        }
    }

    pub fn query(&mut self, tables: &[OTable]) -> OQuery {
        let left = self.rng.random_range(0..tables.len());
        let join = if self.p(0.5) {
            let right = 1 - left;
            let kind = *[JoinK::Inner, JoinK::Left, JoinK::Right, JoinK::Cross]
                .choose(&mut self.rng)
                .unwrap();
            Some((kind, right, None::<E>))
        } else {
            None
        };
        let mut list = Vec::new();
        let mut push_cols = |t: &OTable| {
            for (n, ty) in &t.cols {
                list.push((format!("{}.{}", t.alias, n), *ty));
            }
        };
        push_cols(&tables[left]);
        if let Some((_, r, _)) = &join {
            push_cols(&tables[*r]);
        }
        let cols = Cols { list };
        let join = join.map(|(k, r, _)| {
            let on = match k {
                JoinK::Cross => None,
                _ if self.p(0.6) => {
                    let l = 0;
                    let rr = tables[left].cols.len();
                    // Both tables start with the int column `a`.
                    Some(E::Cmp(Cmp::Eq, Box::new(E::Col(l)), Box::new(E::Col(rr))))
                }
                _ => Some(self.pred(&cols, 1)),
            };
            (k, r, on)
        });

        let filter = if self.p(0.6) { Some(self.pred(&cols, 2)) } else { None };
        let grouped = self.p(0.3);
        let mut items = Vec::new();
        let mut group_by = Vec::new();
        let mut having = None;
        if grouped {
            for _ in 0..self.rng.random_range(0..=2) {
                let c = self.col_of(&cols, None).unwrap();
                if !group_by.contains(&c) {
                    group_by.push(c);
                    items.push(Item::E(E::Col(c)));
                }
            }
            for _ in 0..self.rng.random_range(1..=2) {
                let a = self.agg(&cols);
                items.push(Item::Agg(a));
            }
            if self.p(0.3) {
                let a = match self.rng.random_range(0..3) {
                    0 => Agg::CountStar,
                    1 => Agg::Sum(self.num(&cols, 1).0),
                    _ => Agg::Avg(self.num(&cols, 1).0),
                };
                having = Some((a, Cmp::Ge, Value::Int(self.rng.random_range(0..3))));
            }
        } else {
            for _ in 0..self.rng.random_range(1..=3) {
                let e = match self.rng.random_range(0..4) {
                    0 => self.num(&cols, 2).0,
                    1 => self.text(&cols, 1),
                    2 => self.pred(&cols, 1),
                    _ => E::Col(self.col_of(&cols, None).unwrap()),
                };
                items.push(Item::E(e));
            }
        }
        let aliases = (0..items.len())
            .map(|i| if self.p(0.5) { Some(format!("o{i}")) } else { None })
            .collect();
        let distinct = !grouped && self.p(0.2);

        let mut order = Vec::new();
        let mut limit = None;
        if self.p(0.5) {
            if self.p(0.3) {
                // Every output column: the order is total up to equal rows.
                for i in 0..items.len() {
                    order.push((OrdKey::Out(i), self.p(0.5)));
                }
                if self.p(0.5) {
                    limit = Some(self.rng.random_range(0..6));
                }
            } else {
                for _ in 0..self.rng.random_range(1..=2) {
                    if !grouped && !distinct && self.p(0.4) {
                        let e = self.num(&cols, 1).0;
                        // A bare integer would be read as a position.
                        if !matches!(e, E::Lit(_)) {
                            order.push((OrdKey::Expr(e), self.p(0.5)));
                        }
                    } else {
                        order.push((OrdKey::Out(self.rng.random_range(0..items.len())), self.p(0.5)));
                    }
                }
            }
        } else if self.p(0.1) {
            limit = Some(self.rng.random_range(0..6));
        }

        OQuery {
            left,
            join,
            distinct,
            items,
            aliases,
            filter,
            group_by,
            having,
            order,
            limit,
        }
    }

    fn agg(&mut self, cols: &Cols) -> Agg {
        match self.rng.random_range(0..6) {
            0 => Agg::CountStar,
            1 => Agg::Count(E::Col(self.col_of(cols, None).unwrap())),
            2 => Agg::Sum(self.num(cols, 1).0),
            3 => Agg::Avg(self.num(cols, 1).0),
            4 => Agg::Min(E::Col(self.col_of(cols, None).unwrap())),
            _ => Agg::Max(self.num(cols, 0).0),
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering

fn lit_sql(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) => {
            let s = format!("{f:?}");
            if s.contains('.') { s } else { format!("{s}.0") }
        }
        Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
        Value::Bool(b) => if *b { "TRUE" } else { "FALSE" }.into(),
    }
}

fn cmp_sql(op: Cmp) -> &'static str {
    match op {
        Cmp::Eq => "=",
        Cmp::Ne => "<>",
        Cmp::Lt => "<",
        Cmp::Le => "<=",
        Cmp::Gt => ">",
        Cmp::Ge => ">=",
    }
}

/// Fully parenthesized, so precedence never matters.
fn e_sql(e: &E, names: &[String]) -> String {
    let s = |e: &E| e_sql(e, names);
    match e {
        E::Col(i) => names[*i].clone(),
        E::Lit(v) => lit_sql(v),
        E::Arith(op, l, r) => {
            let o = match op {
                Arith::Add => "+",
                Arith::Sub => "-",
                Arith::Mul => "*",
                Arith::Div => "/",
            };
            format!("({} {o} {})", s(l), s(r))
        }
        E::Neg(x) => format!("(- {})", s(x)),
        E::Cmp(op, l, r) => format!("({} {} {})", s(l), cmp_sql(*op), s(r)),
        E::And(l, r) => format!("({} AND {})", s(l), s(r)),
        E::Or(l, r) => format!("({} OR {})", s(l), s(r)),
        E::Not(x) => format!("(NOT {})", s(x)),
        E::IsNull(x, neg) => format!("({} IS {}NULL)", s(x), if *neg { "NOT " } else { "" }),
        E::Like(x, p) => format!("({} LIKE {})", s(x), lit_sql(&Value::text(p.as_str()))),
        E::In(x, items) => {
            let list: Vec<String> = items.iter().map(s).collect();
            format!("({} IN ({}))", s(x), list.join(", "))
        }
        E::Upper(x) => format!("UPPER({})", s(x)),
        E::Length(x) => format!("LENGTH({})", s(x)),
        E::Abs(x) => format!("ABS({})", s(x)),
        E::Coalesce(a, b) => format!("COALESCE({}, {})", s(a), s(b)),
    }
}

fn agg_sql(a: &Agg, names: &[String]) -> String {
    match a {
        Agg::CountStar => "COUNT(*)".into(),
        Agg::Count(e) => format!("COUNT({})", e_sql(e, names)),
        Agg::Sum(e) => format!("SUM({})", e_sql(e, names)),
        Agg::Avg(e) => format!("AVG({})", e_sql(e, names)),
        Agg::Min(e) => format!("MIN({})", e_sql(e, names)),
        Agg::Max(e) => format!("MAX({})", e_sql(e, names)),
    }
}

fn joined_names(q: &OQuery, tables: &[OTable]) -> Vec<String> {
    let mut names = Vec::new();
    let mut add = |t: &OTable| {
        for (n, _) in &t.cols {
            names.push(format!("{}.{}", t.alias, n));
        }
    };
    add(&tables[q.left]);
    if let Some((_, r, _)) = &q.join {
        add(&tables[*r]);
    }
    names
}

pub fn to_sql(q: &OQuery, tables: &[OTable]) -> String {
    let names = joined_names(q, tables);
    let items: Vec<String> = q
        .items
        .iter()
        .zip(&q.aliases)
        .map(|(item, alias)| {
            let body = match item {
                Item::E(e) => e_sql(e, &names),
                Item::Agg(a) => agg_sql(a, &names),
            };
            match alias {
                Some(a) => format!("{body} AS {a}"),
                None => body,
            }
        })
        .collect();
    let l = &tables[q.left];
    let mut sql = format!(
        "SELECT {}{} FROM {} {}",
        if q.distinct { "DISTINCT " } else { "" },
        items.join(", "),
        l.name,
        l.alias
    );
    if let Some((k, r, on)) = &q.join {
        let t = &tables[*r];
        let kw = match k {
            JoinK::Inner => "JOIN",
            JoinK::Left => "LEFT JOIN",
            JoinK::Right => "RIGHT JOIN",
            JoinK::Cross => "CROSS JOIN",
        };
        sql.push_str(&format!(" {kw} {} {}", t.name, t.alias));
        if let Some(on) = on {
            sql.push_str(&format!(" ON {}", e_sql(on, &names)));
        }
    }
    if let Some(f) = &q.filter {
        sql.push_str(&format!(" WHERE {}", e_sql(f, &names)));
    }
    if !q.group_by.is_empty() {
        let g: Vec<&str> = q.group_by.iter().map(|i| names[*i].as_str()).collect();
        sql.push_str(&format!(" GROUP BY {}", g.join(", ")));
    }
    if let Some((a, op, v)) = &q.having {
        sql.push_str(&format!(" HAVING {} {} {}", agg_sql(a, &names), cmp_sql(*op), lit_sql(v)));
    }
    if !q.order.is_empty() {
        let keys: Vec<String> = q
            .order
            .iter()
            .map(|(k, desc)| {
                let key = match k {
                    OrdKey::Out(i) => match &q.aliases[*i] {
                        Some(a) => a.clone(),
                        None => (i + 1).to_string(),
                    },
                    OrdKey::Expr(e) => e_sql(e, &names),
                };
                format!("{key}{}", if *desc { " DESC" } else { "" })
            })
            .collect();
        sql.push_str(&format!(" ORDER BY {}", keys.join(", ")));
    }
    if let Some(n) = q.limit {
        sql.push_str(&format!(" LIMIT {n}"));
    }
    sql
}

// ---------------------------------------------------------------------------
// Evaluation

/// Outcome of evaluation: rows, plus whether some division by zero occurred.
#[derive(Debug)]
pub struct Evaluated {
    pub rows: Vec<Vec<Value>>,
    pub div_by_zero: bool,
}

struct Ev {
    div_by_zero: bool,
}

fn num(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(f) => *f,
        _ => panic!("not numeric: {v:?}"),
    }
}

/// SQL ordering between two non-null values of compatible type.
fn order_of(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Text(x), Value::Text(y)) => x.as_bytes().cmp(y.as_bytes()),
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        _ => num(a).partial_cmp(&num(b)).unwrap(),
    }
}

/// `%` any run, `_` one character; recursive definition.
pub fn like_match(t: &[char], p: &[char]) -> bool {
    match p.split_first() {
        None => t.is_empty(),
        Some(('%', rest)) => (0..=t.len()).any(|k| like_match(&t[k..], rest)),
        Some(('_', rest)) => !t.is_empty() && like_match(&t[1..], rest),
        Some((c, rest)) => t.first() == Some(c) && like_match(&t[1..], rest),
    }
}

fn tri(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Null => None,
        _ => panic!("not a truth value: {v:?}"),
    }
}

fn from_tri(b: Option<bool>) -> Value {
    b.map_or(Value::Null, Value::Bool)
}

impl Ev {
    fn eval(&mut self, e: &E, row: &[Value]) -> Value {
        match e {
            E::Col(i) => row[*i].clone(),
            E::Lit(v) => v.clone(),
            E::Arith(op, l, r) => {
                let (a, b) = (self.eval(l, row), self.eval(r, row));
                if a.is_null() || b.is_null() {
                    return Value::Null;
                }
                match (op, &a, &b) {
                    (Arith::Div, _, _) => {
                        if num(&b) == 0.0 {
                            self.div_by_zero = true;
                            Value::Null
                        } else {
                            Value::Float(num(&a) / num(&b))
                        }
                    }
                    (Arith::Add, Value::Int(x), Value::Int(y)) => Value::Int(x + y),
                    (Arith::Sub, Value::Int(x), Value::Int(y)) => Value::Int(x - y),
                    (Arith::Mul, Value::Int(x), Value::Int(y)) => Value::Int(x * y),
                    (Arith::Add, _, _) => Value::Float(num(&a) + num(&b)),
                    (Arith::Sub, _, _) => Value::Float(num(&a) - num(&b)),
                    (Arith::Mul, _, _) => Value::Float(num(&a) * num(&b)),
                }
            }
            E::Neg(x) => match self.eval(x, row) {
                Value::Int(i) => Value::Int(-i),
                Value::Float(f) => Value::Float(-f),
                v => v,
            },
            E::Abs(x) => match self.eval(x, row) {
                Value::Int(i) => Value::Int(i.abs()),
                Value::Float(f) => Value::Float(f.abs()),
                v => v,
            },
            E::Cmp(op, l, r) => {
                let (a, b) = (self.eval(l, row), self.eval(r, row));
                if a.is_null() || b.is_null() {
                    return Value::Null;
                }
                let o = order_of(&a, &b);
                Value::Bool(match op {
                    Cmp::Eq => o == Ordering::Equal,
                    Cmp::Ne => o != Ordering::Equal,
                    Cmp::Lt => o == Ordering::Less,
                    Cmp::Le => o != Ordering::Greater,
                    Cmp::Gt => o == Ordering::Greater,
                    Cmp::Ge => o != Ordering::Less,
                })
            }
            // A decisive left operand skips the right one; this only
            // shows in the division warning.
            E::And(l, r) => {
                let a = tri(&self.eval(l, row));
                if a == Some(false) {
                    return Value::Bool(false);
                }
                let b = tri(&self.eval(r, row));
                from_tri(match (a, b) {
                    (Some(false), _) | (_, Some(false)) => Some(false),
                    (Some(true), Some(true)) => Some(true),
                    _ => None,
                })
            }
            E::Or(l, r) => {
                let a = tri(&self.eval(l, row));
                if a == Some(true) {
                    return Value::Bool(true);
                }
                let b = tri(&self.eval(r, row));
                from_tri(match (a, b) {
                    (Some(true), _) | (_, Some(true)) => Some(true),
                    (Some(false), Some(false)) => Some(false),
                    _ => None,
                })
            }
            E::Not(x) => from_tri(tri(&self.eval(x, row)).map(|b| !b)),
            E::IsNull(x, neg) => Value::Bool(self.eval(x, row).is_null() != *neg),
            E::Like(x, p) => match self.eval(x, row) {
                Value::Text(t) => {
                    let t: Vec<char> = t.chars().collect();
                    let p: Vec<char> = p.chars().collect();
                    Value::Bool(like_match(&t, &p))
                }
                _ => Value::Null,
            },
            E::In(x, items) => {
                let v = self.eval(x, row);
                if v.is_null() {
                    return Value::Null;
                }
                let mut unknown = false;
                for item in items {
                    let c = self.eval(item, row);
                    if c.is_null() {
                        unknown = true;
                    } else if order_of(&v, &c) == Ordering::Equal {
                        return Value::Bool(true);
                    }
                }
                if unknown { Value::Null } else { Value::Bool(false) }
            }
            E::Upper(x) => match self.eval(x, row) {
                Value::Text(t) => Value::Text(t.to_uppercase()),
                v => v,
            },
            E::Length(x) => match self.eval(x, row) {
                Value::Text(t) => Value::Int(t.chars().count() as i64),
                v => v,
            },
            E::Coalesce(a, b) => {
                let (a, b) = (self.eval(a, row), self.eval(b, row));
                if a.is_null() { b } else { a }
            }
        }
    }

    fn agg(&mut self, a: &Agg, rows: &[Vec<Value>]) -> Value {
        let arg = match a {
            Agg::CountStar => return Value::Int(rows.len() as i64),
            Agg::Count(e) | Agg::Sum(e) | Agg::Avg(e) | Agg::Min(e) | Agg::Max(e) => e,
        };
        let vals: Vec<Value> = rows
            .iter()
            .map(|r| self.eval(arg, r))
            .filter(|v| !v.is_null())
            .collect();
        if let Agg::Count(_) = a {
            return Value::Int(vals.len() as i64);
        }
        if vals.is_empty() {
            return Value::Null;
        }
        match a {
            Agg::Sum(_) => {
                if vals.iter().all(|v| matches!(v, Value::Int(_))) {
                    Value::Int(vals.iter().map(|v| num(v) as i64).sum())
                } else {
                    let mut t = 0.0;
                    for v in &vals {
                        t += num(v);
                    }
                    Value::Float(t)
                }
            }
            Agg::Avg(_) => {
                let mut t = 0.0;
                for v in &vals {
                    t += num(v);
                }
                Value::Float(t / vals.len() as f64)
            }
            Agg::Min(_) => vals
                .iter()
                .cloned()
                .reduce(|m, v| if order_of(&v, &m) == Ordering::Less { v } else { m })
                .unwrap(),
            Agg::Max(_) => vals
                .iter()
                .cloned()
                .reduce(|m, v| if order_of(&v, &m) == Ordering::Greater { v } else { m })
                .unwrap(),
            _ => unreachable!(),
        }
    }
}

/// Equality used for grouping and DISTINCT: NULL matches NULL.
fn same(a: &Value, b: &Value) -> bool {
    match (a.is_null(), b.is_null()) {
        (true, true) => true,
        (false, false) => order_of(a, b) == Ordering::Equal,
        _ => false,
    }
}

fn same_row(a: &[Value], b: &[Value]) -> bool {
    a.iter().zip(b).all(|(x, y)| same(x, y))
}

/// NULLs last in either direction.
pub fn key_order(a: &Value, b: &Value, desc: bool) -> Ordering {
    match (a.is_null(), b.is_null()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ if desc => order_of(b, a),
        _ => order_of(a, b),
    }
}

pub fn evaluate(q: &OQuery, tables: &[OTable]) -> Evaluated {
    let mut ev = Ev { div_by_zero: false };
    let l = &tables[q.left];
    let mut rows: Vec<Vec<Value>> = l.rows.clone();
    if let Some((kind, r, on)) = &q.join {
        let rt = &tables[*r];
        let (lw, rw) = (l.cols.len(), rt.cols.len());
        let mut out = Vec::new();
        let mut right_hit = vec![false; rt.rows.len()];
        for lr in &l.rows {
            let mut hit = false;
            for (ri, rr) in rt.rows.iter().enumerate() {
                let row: Vec<Value> = lr.iter().chain(rr).cloned().collect();
                let keep = match on {
                    None => true,
                    Some(c) => tri(&ev.eval(c, &row)) == Some(true),
                };
                if keep {
                    hit = true;
                    right_hit[ri] = true;
                    out.push(row);
                }
            }
            if !hit && *kind == JoinK::Left {
                let mut row = lr.clone();
                row.extend(std::iter::repeat_n(Value::Null, rw));
                out.push(row);
            }
        }
        if *kind == JoinK::Right {
            for (ri, rr) in rt.rows.iter().enumerate() {
                if !right_hit[ri] {
                    let mut row = vec![Value::Null; lw];
                    row.extend(rr.iter().cloned());
                    out.push(row);
                }
            }
        }
        rows = out;
    }
    if let Some(f) = &q.filter {
        rows.retain(|r| tri(&ev.eval(f, r)) == Some(true));
    }

    let grouped = !q.group_by.is_empty()
        || q.items.iter().any(|i| matches!(i, Item::Agg(_)))
        || q.having.is_some();
    // (output row, sort key row)
    let mut produced: Vec<(Vec<Value>, Vec<Value>)> = Vec::new();
    if grouped {
        let mut groups: Vec<(Vec<Value>, Vec<Vec<Value>>)> = Vec::new();
        for r in rows {
            let key: Vec<Value> = q.group_by.iter().map(|i| r[*i].clone()).collect();
            match groups.iter_mut().find(|(k, _)| same_row(k, &key)) {
                Some((_, members)) => members.push(r),
                None => groups.push((key, vec![r])),
            }
        }
        if groups.is_empty() && q.group_by.is_empty() {
            groups.push((Vec::new(), Vec::new()));
        }
        for (_, members) in groups {
            // Every group's aggregates are computed before HAVING drops any.
            let out: Vec<Value> = q
                .items
                .iter()
                .map(|item| match item {
                    Item::E(e) => ev.eval(e, &members[0]),
                    Item::Agg(a) => ev.agg(a, &members),
                })
                .collect();
            if let Some((a, op, v)) = &q.having {
                let got = ev.agg(a, &members);
                let keep = ev.eval(
                    &E::Cmp(*op, Box::new(E::Lit(got)), Box::new(E::Lit(v.clone()))),
                    &[],
                );
                if tri(&keep) != Some(true) {
                    continue;
                }
            }
            produced.push((out, Vec::new()));
        }
    } else {
        for r in &rows {
            let out: Vec<Value> = q
                .items
                .iter()
                .map(|item| match item {
                    Item::E(e) => ev.eval(e, r),
                    Item::Agg(_) => unreachable!(),
                })
                .collect();
            let keys: Vec<Value> = q
                .order
                .iter()
                .map(|(k, _)| match k {
                    OrdKey::Expr(e) => ev.eval(e, r),
                    OrdKey::Out(_) => Value::Null,
                })
                .collect();
            produced.push((out, keys));
        }
    }
    if q.distinct {
        let mut kept: Vec<(Vec<Value>, Vec<Value>)> = Vec::new();
        for p in produced {
            if !kept.iter().any(|(o, _)| same_row(o, &p.0)) {
                kept.push(p);
            }
        }
        produced = kept;
    }
    if !q.order.is_empty() {
        produced.sort_by(|(oa, ka), (ob, kb)| {
            for (i, (k, desc)) in q.order.iter().enumerate() {
                let ord = match k {
                    OrdKey::Out(j) => key_order(&oa[*j], &ob[*j], *desc),
                    OrdKey::Expr(_) => key_order(&ka[i], &kb[i], *desc),
                };
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            Ordering::Equal
        });
    }
    let mut out: Vec<Vec<Value>> = produced.into_iter().map(|(o, _)| o).collect();
    if let Some(n) = q.limit {
        out.truncate(n);
    }
    Evaluated {
        rows: out,
        div_by_zero: ev.div_by_zero,
    }
}

// ---------------------------------------------------------------------------
// Comparison

/// Cells are equal when they have the same variant and value; floats may
/// differ by 1e-9 relative.
pub fn cell_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => {
            x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs())
        }
        _ => a == b,
    }
}

pub fn row_eq(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| cell_eq(x, y))
}

fn canonical_cmp(a: &Value, b: &Value) -> Ordering {
    fn rank(v: &Value) -> u8 {
        match v {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int(_) => 2,
            Value::Float(_) => 3,
            Value::Text(_) => 4,
        }
    }
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => x.total_cmp(y),
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Text(x), Value::Text(y)) => x.cmp(y),
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        _ => rank(a).cmp(&rank(b)),
    }
}

pub fn sort_bag(rows: &[Vec<Value>]) -> Vec<Vec<Value>> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| canonical_cmp(x, y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    rows
}

/// Multiset equality. Rows are matched greedily, which is exact when the
/// only inexact cells are nearly equal floats.
pub fn bag_eq(a: &[Vec<Value>], b: &[Vec<Value>]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    'outer: for ra in a {
        for (i, rb) in b.iter().enumerate() {
            if !used[i] && row_eq(ra, rb) {
                used[i] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}
