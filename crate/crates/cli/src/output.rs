//! Canonical JSON and CSV emission.
//!
//! Reports must be byte-identical across runs for the same spec and seed:
//! object keys come out sorted (serde_json maps are BTree-backed) and every
//! float is printed with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde_json::Value;

use greenbvp::greens::GreensKernel;
use greenbvp::hammerstein::Solution;

/// Fixed 17-significant-digit float format used in JSON and CSV output.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a JSON value with sorted keys and canonical float formatting.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    render(value, &mut out);
    out
}

fn render(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                let _ = write!(out, "{}", fmt_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => {
            let _ = write!(out, "{}", Value::String(s.clone()));
        }
        Value::Array(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                render(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (k, (key, item)) in map.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}:", Value::String(key.clone()));
                render(item, out);
            }
            out.push('}');
        }
    }
}

pub fn print_report(value: &Value) {
    println!("{}", canonical_json(value));
}

/// Serialize any `Serialize` into a canonical-ready `Value`.
pub fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Write a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = path.to_path_buf();
    tmp.set_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Solution CSV: columns t, x_1..x_N, dx_1..dx_N, w_1..w_N.
pub fn solution_csv(solution: &Solution) -> String {
    let grid = solution.x.grid();
    let dim = solution.x.dim();
    let mut out = String::from("t");
    for prefix in ["x", "dx", "w"] {
        for k in 1..=dim {
            let _ = write!(out, ",{prefix}_{k}");
        }
    }
    out.push('\n');
    for i in 0..grid.len() {
        let _ = write!(out, "{}", fmt_float(grid.node(i)));
        for field in [&solution.x, &solution.dx, &solution.w] {
            for v in field.value(i) {
                let _ = write!(out, ",{}", fmt_float(*v));
            }
        }
        out.push('\n');
    }
    out
}

/// Dense kernel snapshot: header row of s-nodes, then one row per t-node.
pub fn kernel_csv(kernel: &GreensKernel) -> String {
    let grid = kernel.grid();
    let mut out = String::from("t");
    for j in 0..grid.len() {
        let _ = write!(out, ",{}", fmt_float(grid.node(j)));
    }
    out.push('\n');
    for i in 0..grid.len() {
        let _ = write!(out, "{}", fmt_float(grid.node(i)));
        for j in 0..grid.len() {
            let _ = write!(out, ",{}", fmt_float(kernel.value(i, j)));
        }
        out.push('\n');
    }
    out
}
