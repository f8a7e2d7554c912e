use serde::Serialize;

/// One asserted comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, target: bound, tolerance: 0.0, pass: value <= bound }
    }

    /// `|value − target| ≤ tolerance`.
    pub fn near(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, target, tolerance, pass: (value - target).abs() <= tolerance }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        let v = if pass { 1.0 } else { 0.0 };
        Self { name: name.into(), value: v, target: 1.0, tolerance: 0.0, pass }
    }
}

/// A named group of checks with free-form data, as written to the run report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Section {
    pub name: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub data: serde_json::Value,
}

impl Section {
    pub fn new(name: impl Into<String>, data: impl Serialize) -> Self {
        Self {
            name: name.into(),
            pass: true,
            checks: Vec::new(),
            warnings: Vec::new(),
            notes: Vec::new(),
            data: serde_json::to_value(data).unwrap_or(serde_json::Value::Null),
        }
    }

    pub fn check(mut self, c: Check) -> Self {
        self.pass &= c.pass;
        self.checks.push(c);
        self
    }

    pub fn checks(mut self, cs: impl IntoIterator<Item = Check>) -> Self {
        for c in cs {
            self = self.check(c);
        }
        self
    }

    pub fn warn(mut self, w: impl Into<String>) -> Self {
        self.warnings.push(w.into());
        self
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Nonincreasing with slack `tol`.
pub fn nonincreasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Strictly decreasing.
pub fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}
