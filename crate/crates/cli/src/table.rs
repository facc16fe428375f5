//! Tabular results and the bound checks attached to them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::Result;

/// A CSV table with a fixed header. Cells are already formatted, floats via
/// [`num`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        let bytes = writer.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }
}

/// Shortest round-tripping decimal for `x`, switching to exponent notation
/// outside `[1e-4, 1e15)` so tiny bounds stay readable.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Builds a table row from displayable cells.
#[macro_export]
macro_rules! row {
    ($($cell:expr),* $(,)?) => { vec![$($cell.to_string()),*] };
}

/// One asserted inequality: `estimate` against `bound`, with its CI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub claim: String,
    pub label: String,
    pub estimate: f64,
    pub bound: f64,
    pub ci: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(claim: &str, label: impl Into<String>, estimate: f64, bound: f64, ci: f64, passed: bool) -> Self {
        Self { claim: claim.into(), label: label.into(), estimate, bound, ci, passed }
    }

    /// `estimate ≤ bound + ci`.
    pub fn at_most(claim: &str, label: impl Into<String>, estimate: f64, bound: f64, ci: f64) -> Self {
        Self::new(claim, label, estimate, bound, ci, estimate <= bound + ci)
    }

    /// `estimate ≥ bound − ci`.
    pub fn at_least(claim: &str, label: impl Into<String>, estimate: f64, bound: f64, ci: f64) -> Self {
        Self::new(claim, label, estimate, bound, ci, estimate >= bound - ci)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn output_path(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rendering_is_stable() {
        let mut t = Table::new(&["claim", "x"]);
        t.push(row!["haar-tail", num(0.1 + 0.2)]);
        t.push(row!["haar-tail", num(1.2494789409261236e-45)]);
        t.push(row!["haar-tail", num(0.0)]);
        assert_eq!(
            t.to_csv_string().unwrap(),
            "claim,x\nhaar-tail,0.30000000000000004\nhaar-tail,1.2494789409261236e-45\nhaar-tail,0\n"
        );
        assert_eq!(t.column("x").unwrap().len(), 3);
    }

    #[test]
    fn checks_include_the_interval() {
        assert!(Check::at_most("c", "l", 0.51, 0.5, 0.02).passed);
        assert!(!Check::at_most("c", "l", 0.53, 0.5, 0.02).passed);
        assert!(Check::at_least("c", "l", 0.49, 0.5, 0.02).passed);
    }
}
