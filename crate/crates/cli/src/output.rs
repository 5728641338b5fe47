//! Fixed-schema tables rendered as CSV or JSON.

use serde_json::{Map, Value};

use crate::config::Format;

pub const SCHEMA_VERSION: u32 = 1;

pub const PROVENANCE_COLUMNS: [&str; 5] = ["schema_version", "command", "seed", "config_hash", "version"];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Bool(bool),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) if v.is_finite() => Value::from(*v),
            Cell::Float(v) => Value::from(format_float(*v)),
            Cell::Int(v) => Value::from(*v),
            Cell::Bool(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    fn cells(&self) -> [Cell; 5] {
        [
            Cell::Int(SCHEMA_VERSION as u64),
            self.command.into(),
            Cell::Int(self.seed),
            self.config_hash.clone().into(),
            env!("CARGO_PKG_VERSION").into(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &'static [&'static str]) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the schema");
        self.rows.push(row);
    }

    pub fn render(&self, format: Format, prov: &Provenance) -> Vec<u8> {
        let header = self.columns.iter().chain(PROVENANCE_COLUMNS.iter());
        let prov_cells = prov.cells();
        match format {
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
                w.write_record(header).expect("in-memory write");
                for row in &self.rows {
                    let cells = row.iter().chain(prov_cells.iter()).map(Cell::text).collect::<Vec<_>>();
                    w.write_record(&cells).expect("in-memory write");
                }
                w.into_inner().expect("in-memory flush")
            }
            Format::Json => {
                let names: Vec<&str> = header.copied().collect();
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let cells = row.iter().chain(prov_cells.iter()).map(Cell::json);
                        Value::Object(names.iter().map(|n| n.to_string()).zip(cells).collect::<Map<_, _>>())
                    })
                    .collect();
                let mut out = serde_json::to_vec_pretty(&Value::Array(rows)).expect("json serializes");
                out.push(b'\n');
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            command: "risk",
            seed: 7,
            config_hash: "abc".into(),
        }
    }

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_quotes_and_carries_provenance() {
        let mut t = Table::new(&["label", "value"]);
        t.push(vec!["a,b".into(), 0.5.into()]);
        let text = String::from_utf8(t.render(Format::Csv, &prov())).unwrap();
        let mut lines = text.split("\r\n");
        assert_eq!(lines.next().unwrap(), "label,value,schema_version,command,seed,config_hash,version");
        assert!(lines.next().unwrap().starts_with("\"a,b\",5.0000000000000000e-1,1,risk,7,abc,"));
    }

    #[test]
    fn json_mirrors_columns() {
        let mut t = Table::new(&["label", "value"]);
        t.push(vec!["x".into(), f64::NAN.into()]);
        let v: Value = serde_json::from_slice(&t.render(Format::Json, &prov())).unwrap();
        let row = &v[0];
        assert_eq!(row["label"], "x");
        assert_eq!(row["value"], "NaN");
        assert_eq!(row["seed"], 7);
    }
}
