use std::io::Write;

use serde_json::{Map, Number, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    /// Exact integers, kept as decimal strings in CSV and as numbers in JSON
    /// when they fit.
    Int(String),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format_num(*v),
            Cell::Int(s) | Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => Number::from_f64(*v).map_or_else(|| Value::String(format_num(*v)), Value::Number),
            Cell::Int(s) => s
                .parse::<u64>()
                .map_or_else(|_| Value::String(s.clone()), |v| Value::Number(v.into())),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Bool(b) => Value::Bool(*b),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::Num(v.unwrap_or(f64::NAN))
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Shortest round-trip scientific notation; `inf`, `-inf`, `nan` otherwise.
pub fn format_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(headers: Vec<&'static str>) -> Self {
        Table {
            headers,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, out: W, format: Format) -> std::io::Result<()> {
        match format {
            Format::Csv => {
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(out);
                w.write_record(&self.headers)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::csv))?;
                }
                w.flush()
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> = self
                            .headers
                            .iter()
                            .zip(row)
                            .map(|(h, c)| (h.to_string(), c.json()))
                            .collect();
                        Value::Object(obj)
                    })
                    .collect();
                let mut out = out;
                serde_json::to_writer_pretty(&mut out, &rows)?;
                writeln!(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -2.5e-300, 1.0 / 3.0, 0.0, 1e22] {
            assert_eq!(format_num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_num(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_quotes_text() {
        let mut t = Table::new(vec!["a", "b"]);
        t.push(vec![Cell::Text("x, y".into()), 1.5.into()]);
        let mut buf = Vec::new();
        t.write(&mut buf, Format::Csv).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n\"x, y\",1.5e0\n");
    }

    #[test]
    fn json_fields_match_headers() {
        let mut t = Table::new(vec!["J", "l"]);
        t.push(vec![Cell::Text("1/2".into()), Cell::Int("3".into())]);
        let mut buf = Vec::new();
        t.write(&mut buf, Format::Json).unwrap();
        let v: Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v[0]["l"], 3);
        assert_eq!(v[0]["J"], "1/2");
    }
}
