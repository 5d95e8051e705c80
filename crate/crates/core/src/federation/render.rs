//! Text and JSON presentation of federated results.

use serde_json::json;

use crate::value::Value;

use super::{FederatedResult, MemberOutcome};

fn cell(v: &Value) -> String {
    v.to_string()
}

fn right_aligned(v: &Value) -> bool {
    matches!(v, Value::Int(_) | Value::Float(_))
}

/// Aligned table with a header rule and a row count line.
pub fn render_table(result: &FederatedResult) -> String {
    let headers: Vec<String> = result.columns.iter().map(|c| c.name.clone()).collect();
    let cells: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| r.iter().map(cell).collect())
        .collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }

    let mut out = String::new();
    let line = |parts: Vec<String>| parts.join(" | ").trim_end().to_string();
    out.push_str(&line(
        headers
            .iter()
            .zip(&widths)
            .map(|(h, w)| format!("{h:<w$}"))
            .collect(),
    ));
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    out.push('\n');
    for (row, values) in cells.iter().zip(&result.rows) {
        out.push_str(&line(
            row.iter()
                .zip(&widths)
                .zip(values)
                .map(|((c, w), v)| {
                    if right_aligned(v) {
                        format!("{c:>w$}")
                    } else {
                        format!("{c:<w$}")
                    }
                })
                .collect(),
        ));
        out.push('\n');
    }
    let n = result.rows.len();
    out.push_str(&format!("({n} row{})\n", if n == 1 { "" } else { "s" }));
    for w in &result.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}

/// Per-member status footer.
pub fn render_outcomes(outcomes: &[MemberOutcome]) -> String {
    let name_w = outcomes
        .iter()
        .map(|o| o.member.name.chars().count())
        .max()
        .unwrap_or(0)
        .max("member".len());
    let mut out = format!(
        "{:<name_w$}  {:<11}  {:>5}  {:>8}\n",
        "member", "status", "rows", "elapsed"
    );
    for o in outcomes {
        let mut line = format!(
            "{:<name_w$}  {:<11}  {:>5}  {:>6}ms",
            o.member.name,
            o.status.as_str(),
            o.row_count(),
            o.elapsed.as_millis()
        );
        if let Some(code) = &o.error_code {
            line.push_str(&format!("  {code}"));
        }
        if let Some(msg) = &o.message {
            line.push_str(&format!("  {msg}"));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn outcomes_json(outcomes: &[MemberOutcome]) -> serde_json::Value {
    outcomes
        .iter()
        .map(|o| {
            json!({
                "member": o.member,
                "status": o.status,
                "rows": o.row_count(),
                "error_code": o.error_code,
                "message": o.message,
                "elapsed_ms": o.elapsed.as_millis() as u64,
            })
        })
        .collect()
}

/// `{columns, rows, outcomes}` document.
pub fn render_json(result: &FederatedResult) -> serde_json::Value {
    json!({
        "columns": result.columns,
        "rows": result.rows,
        "outcomes": outcomes_json(&result.outcomes),
        "warnings": result.warnings,
    })
}
