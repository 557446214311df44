//! CSV output with a self-describing preamble.
//!
//! Every file starts with `#` comment lines carrying the toolkit version,
//! the seed and the full resolved config, then one header row. Floats use
//! the shortest representation that round-trips.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as u64)
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

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

/// Shortest round-trip text for a float; exponent form outside
/// `[1e-5, 1e16)` to keep tiny and huge values compact.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Float(v) => f.write_str(&format_float(*v)),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    write!(f, "\"{}\"", s.replace('"', "\"\""))
                } else {
                    f.write_str(s)
                }
            }
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Empty => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> anyhow::Result<()> {
        if row.len() != self.columns.len() {
            bail!("row has {} cells, table has {} columns", row.len(), self.columns.len());
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    pub fn render(&self, preamble: &Preamble) -> String {
        let mut out = preamble.render();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path, preamble: &Preamble) -> anyhow::Result<()> {
        std::fs::write(path, self.render(preamble)).with_context(|| format!("writing {}", path.display()))
    }
}

/// Comment block at the top of every CSV.
#[derive(Debug, Clone)]
pub struct Preamble {
    pub command: String,
    pub seed: u64,
    pub config_json: String,
}

impl Preamble {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# ghostlab {}", ghostlab::VERSION);
        let _ = writeln!(out, "# command: {}", self.command);
        let _ = writeln!(out, "# seed: {}", self.seed);
        out.push_str("# config:\n");
        for line in self.config_json.lines() {
            let _ = writeln!(out, "# {line}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2.0, 1e-300, 6.02e23, -4.5e-7, 123456.789, 0.0] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(2.0), "2");
        assert_eq!(format_float(1e-7), "1e-7");
    }

    #[test]
    fn render_layout() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.push(vec![1u32.into(), 0.5.into(), "x,y".into()]).unwrap();
        assert!(t.push(vec![Cell::Empty]).is_err());
        let p = Preamble {
            command: "analytic".into(),
            seed: 9,
            config_json: "{\n  \"seed\": 9\n}".into(),
        };
        let text = t.render(&p);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# ghostlab "));
        assert_eq!(lines[2], "# seed: 9");
        assert_eq!(lines[3], "# config:");
        assert_eq!(lines[6], "# }");
        assert_eq!(lines[7], "a,b,c");
        assert_eq!(lines[8], "1,0.5,\"x,y\"");
    }
}
