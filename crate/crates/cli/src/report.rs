use serde_json::{json, Map, Value};

use projequiv::report::json_number;

/// One named check: `value` measured against `tol`.
#[derive(Clone, Debug)]
pub struct Record {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Record {
    /// Passes when `value < tol`.
    pub fn below(name: &str, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tol, pass: value < tol }
    }

    /// Passes when `value > tol`; used for negative controls.
    pub fn above(name: &str, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, tol, pass: value > tol }
    }

    /// Passes when `value` equals `expected` exactly; `tol` is reported as 0.
    pub fn exact(name: &str, value: f64, expected: f64) -> Self {
        Self { name: name.into(), value, tol: 0.0, pass: value == expected }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "value": json_number(self.value),
            "tol": json_number(self.tol),
            "pass": self.pass,
        })
    }
}

pub struct Report {
    pub config: Map<String, Value>,
    pub records: Vec<Record>,
    pub wall_time: f64,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config": Value::Object(self.config.clone()),
            "records": self.records.iter().map(Record::to_json).collect::<Vec<_>>(),
            "pass": self.pass(),
            "wall_time": json_number(self.wall_time),
        })
    }
}
