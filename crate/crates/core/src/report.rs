//! CSV rendering for experiment outputs. Rendering lives in the core so
//! that byte-identity of results across worker counts is a library
//! property, not a CLI accident.

/// A CSV table: a comment line echoing the run configuration, a header
/// row, and data rows. Values are pre-rendered strings.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub config_comment: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(config_comment: impl Into<String>, header: &[&str]) -> Table {
        Table {
            config_comment: config_comment.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Comma-separated, '.' decimal, header row; the config echo rides in
    /// a leading comment line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if !self.config_comment.is_empty() {
            out.push_str("# ");
            out.push_str(&self.config_comment);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest-roundtrip decimal rendering; deterministic for a given f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}
