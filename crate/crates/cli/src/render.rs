//! Plain tables and their CSV, markdown and aligned-text renderings.

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Placeholder for cells without a value.
pub const EMPTY: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Csv,
    Markdown,
    Text,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            "text" | "txt" => Ok(Format::Text),
            other => Err(CliError::Config(format!("unknown format '{other}' (csv, markdown or text)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Number(f64),
    Text(String),
    Empty,
}

impl Cell {
    /// NaN becomes [`Cell::Empty`]; infinities are kept as text.
    pub fn num(v: f64) -> Cell {
        if v.is_nan() {
            Cell::Empty
        } else if v.is_infinite() {
            Cell::Text(if v > 0.0 { "inf".into() } else { "-inf".into() })
        } else {
            Cell::Number(v)
        }
    }

    pub fn opt(v: Option<f64>) -> Cell {
        v.map_or(Cell::Empty, Cell::num)
    }

    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    fn full(&self) -> String {
        match self {
            Cell::Number(v) => format!("{v}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => EMPTY.into(),
        }
    }

    fn rounded(&self) -> String {
        match self {
            Cell::Number(v) => format!("{v:.3}"),
            other => other.full(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// File-name stem, e.g. `metrics`.
    pub name: String,
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, title: impl Into<String>, columns: Vec<String>) -> Self {
        Table { name: name.into(), title: title.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Cell in the row whose first cell reads `key`.
    pub fn get(&self, key: &str, column: &str) -> Option<&Cell> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| matches!(&r[0], Cell::Text(s) if s == key)).map(|r| &r[c])
    }
}

/// RFC 4180 CSV with full-precision numbers.
pub fn to_csv(table: &Table) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(&table.columns).expect("writing to memory cannot fail");
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::full)).expect("writing to memory cannot fail");
    }
    String::from_utf8(w.into_inner().expect("writing to memory cannot fail")).expect("CSV output is UTF-8")
}

/// Inverse of [`to_csv`]: numeric-looking cells become numbers, the
/// placeholder becomes empty.
pub fn from_csv(name: &str, text: &str) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let columns: Vec<String> = r
        .headers()
        .map_err(|e| CliError::Data(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut table = Table::new(name, name, columns);
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Data(e.to_string()))?;
        table.rows.push(
            rec.iter()
                .map(|s| match s {
                    EMPTY => Cell::Empty,
                    _ => s.parse::<f64>().ok().filter(|v| v.is_finite()).map_or_else(|| Cell::text(s), Cell::Number),
                })
                .collect(),
        );
    }
    Ok(table)
}

fn to_markdown(table: &Table) -> String {
    let mut out = format!("### {}\n\n", table.title);
    out += &format!("| {} |\n", table.columns.join(" | "));
    out += &format!("|{}\n", table.columns.iter().map(|_| "---|").collect::<String>());
    for row in &table.rows {
        out += &format!("| {} |\n", row.iter().map(Cell::rounded).collect::<Vec<_>>().join(" | "));
    }
    out
}

fn to_text(table: &Table) -> String {
    let cells: Vec<Vec<String>> = table.rows.iter().map(|r| r.iter().map(Cell::rounded).collect()).collect();
    let widths: Vec<usize> = (0..table.columns.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .chain(std::iter::once(table.columns[c].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |items: &[String]| {
        items
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                let pad = " ".repeat(w - s.chars().count());
                // labels left-aligned, numbers right-aligned
                if c == 0 { format!("{s}{pad}") } else { format!("{pad}{s}") }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = format!("{}\n", table.title);
    out += &line(&table.columns);
    out.push('\n');
    out += &"-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1));
    out.push('\n');
    for r in &cells {
        out += &line(r);
        out.push('\n');
    }
    out
}

pub fn render_table(table: &Table, format: Format) -> String {
    match format {
        Format::Csv => to_csv(table),
        Format::Markdown => to_markdown(table),
        Format::Text => to_text(table),
    }
}
