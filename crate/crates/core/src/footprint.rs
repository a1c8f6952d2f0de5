//! Byte-size accounting of a deployed model bundle.

use std::fmt;
use std::path::Path;

use crate::error::Result;

pub const COMPONENTS: [&str; 5] = ["acoustic model", "decoder graph", "rescoring LM", "lexicon", "personalization overlay"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootprintReport {
    components: Vec<(String, u64)>,
}

impl FootprintReport {
    pub fn new() -> Self {
        Self { components: Vec::new() }
    }

    pub fn add(&mut self, name: &str, bytes: u64) {
        self.components.push((name.to_string(), bytes));
    }

    /// Adds the size of the file at `path`.
    pub fn add_file(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::metadata(path)?.len();
        self.add(name, bytes);
        Ok(())
    }

    pub fn components(&self) -> &[(String, u64)] {
        &self.components
    }

    pub fn total(&self) -> u64 {
        self.components.iter().map(|(_, b)| b).sum()
    }
}

impl Default for FootprintReport {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Display for FootprintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.components.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
        for (name, bytes) in &self.components {
            writeln!(f, "{name:<width$}  {bytes:>12}  {:>9.3} MB", *bytes as f64 / 1e6)?;
        }
        let total = self.total();
        write!(f, "{:<width$}  {total:>12}  {:>9.3} MB", "total", total as f64 / 1e6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_is_sum() {
        let mut r = FootprintReport::new();
        for (i, name) in COMPONENTS.iter().enumerate() {
            r.add(name, 1000 * (i as u64 + 1));
        }
        assert_eq!(r.total(), 15_000);
        let text = r.to_string();
        assert!(text.lines().last().unwrap().starts_with("total"));
        assert_eq!(text.lines().count(), 6);
    }
}
