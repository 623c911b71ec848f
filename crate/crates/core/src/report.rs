//! Report types shared by the experiments and the command line runner.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// One measured value compared against a bound.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::AtMost,
            bound,
            passed: value <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::AtLeast,
            bound,
            passed: value >= bound,
        }
    }

    /// A yes/no condition, recorded as 1/0 against 1.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }

    pub fn describe(&self) -> String {
        let op = match self.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        format!("{} = {:.4e} {op} {:.4e}", self.name, self.value, self.bound)
    }
}

/// Result of one experiment.
#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub id: String,
    pub title: String,
    pub checks: Vec<Check>,
    pub runtime_s: f64,
    pub notes: Vec<String>,
    pub data: serde_json::Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// `PASS id title (k/m checks, t s)`, with the failed checks appended.
    pub fn line(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        let mut s = format!(
            "{} {} {} ({}/{} checks, {:.1} s)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            ok,
            self.checks.len(),
            self.runtime_s
        );
        for c in self.failures() {
            let _ = write!(s, "; {}", c.describe());
        }
        s
    }
}

/// Report for one reconstruction `P = K(I − A)⁻¹`.
#[derive(Clone, Debug, Serialize)]
pub struct ReconstructionReport {
    pub domain: String,
    pub grid: String,
    pub nodes: usize,
    pub skew_norm: f64,
    pub skew_max: f64,
    pub condition_estimate: Option<f64>,
    pub idempotence_defect: f64,
    pub self_adjointness_defect: f64,
    pub residuals: Vec<(String, f64)>,
}

/// One row of a weighted sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub t: f64,
    pub p: f64,
    pub resolution: usize,
    pub nodes: usize,
    pub weight_constant: f64,
    pub norm_estimate: f64,
    /// `true` when the norm is the exact discrete value (p = 2).
    pub certified: bool,
}

pub const SWEEP_COLUMNS: &str = "t,p,resolution,nodes,weight_constant,norm_estimate,certified";

/// CSV with `# key: value` provenance lines before the header. Floats are
/// printed with `{:.12e}` so reruns are byte-identical.
pub fn sweep_csv(rows: &[SweepRow], provenance: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in provenance {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(s, "{SWEEP_COLUMNS}");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.12e},{:.12e},{}",
            r.t, r.p, r.resolution, r.nodes, r.weight_constant, r.norm_estimate, r.certified
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_line_lists_failures() {
        let o = Outcome {
            id: "x".into(),
            title: "demo".into(),
            checks: vec![Check::at_most("a", 1.0, 2.0), Check::at_least("b", 1.0, 2.0)],
            runtime_s: 0.25,
            notes: vec![],
            data: serde_json::Value::Null,
        };
        assert!(!o.passed());
        let line = o.line();
        assert!(line.starts_with("FAIL x demo (1/2 checks"));
        assert!(line.contains("b = 1.0000e0 >= 2.0000e0"));
    }

    #[test]
    fn csv_is_stable() {
        let row = SweepRow {
            t: -1.5,
            p: 2.0,
            resolution: 128,
            nodes: 128,
            weight_constant: 1.0 / 3.0,
            norm_estimate: 1.0,
            certified: true,
        };
        let a = sweep_csv(&[row.clone()], &[("seed", "7".into())]);
        let b = sweep_csv(&[row], &[("seed", "7".into())]);
        assert_eq!(a, b);
        assert_eq!(a.lines().nth(1), Some(SWEEP_COLUMNS));
        assert_eq!(a.lines().nth(2), Some("-1.5,2,128,128,3.333333333333e-1,1.000000000000e0,true"));
    }
}
