use std::fmt::Write as _;
use std::path::Path;

use gbsde::analysis::Section;
use serde::Serialize;

use crate::config::SCHEMA_VERSION;

/// Everything a command asserted, in a form that depends only on the
/// configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub schema_version: u32,
    pub seed: u64,
    pub strict: bool,
    pub pass: bool,
    pub sections: Vec<Section>,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, strict: bool) -> Self {
        Self { command: command.into(), schema_version: SCHEMA_VERSION, seed, strict, pass: true, sections: Vec::new() }
    }

    pub fn push(&mut self, s: Section) {
        self.sections.push(s);
        self.pass = self.compute_pass();
    }

    fn compute_pass(&self) -> bool {
        self.sections.iter().all(|s| s.pass && (!self.strict || s.warnings.is_empty()))
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn warnings(&self) -> usize {
        self.sections.iter().map(|s| s.warnings.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())
    }

    /// One line per section, followed by the failing checks and warnings.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let status = if s.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "[{status}] {:<22} {} checks, {} warnings", s.name, s.checks.len(), s.warnings.len());
            for c in s.failures() {
                let _ = writeln!(
                    out,
                    "       failed: {} (value {:.6e}, target {:.6e}, tolerance {:.3e})",
                    c.name, c.value, c.target, c.tolerance
                );
            }
            for w in &s.warnings {
                let _ = writeln!(out, "       warning: {w}");
            }
        }
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let strict = if self.strict { " (strict)" } else { "" };
        let _ = writeln!(out, "{}: {verdict}{strict}", self.command);
        out
    }
}
