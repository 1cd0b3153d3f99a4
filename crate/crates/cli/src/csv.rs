use std::fmt::Write;

/// CSV text with a single header line: column names, then `# ` and the sign
/// conventions the values follow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    text: String,
    columns: usize,
}

impl Table {
    pub fn new(columns: &[String], convention: &str) -> Self {
        let mut text = columns.join(",");
        if !convention.is_empty() {
            text.push_str(" # ");
            text.push_str(convention);
        }
        text.push('\n');
        Self {
            text,
            columns: columns.len(),
        }
    }

    pub fn with(columns: &[&str], convention: &str) -> Self {
        Self::new(&columns.iter().map(|c| c.to_string()).collect::<Vec<_>>(), convention)
    }

    pub fn row(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.columns, "row width");
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            write!(self.text, "{v:.12e}").unwrap();
        }
        self.text.push('\n');
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// `prefix0, prefix1, …`.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}
