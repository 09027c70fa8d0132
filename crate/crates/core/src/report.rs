//! Per-category test-harness summary.
//!
//! `programs`, `executed` and `error` count programs; `pass`, `fail`,
//! `deleted`, `inspect` and `total` count test cases. Deleted and inspect
//! counts come from manifest annotations. Every row satisfies
//! `pass + fail + deleted + inspect = total`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::Category;

pub const HARNESS_COLUMNS: [&str; 9] =
    ["Module", "Programs", "Executed", "Error", "Pass", "Fail", "Deleted", "Inspect", "Total"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessCounts {
    pub programs: u64,
    pub executed: u64,
    pub error: u64,
    pub pass: u64,
    pub fail: u64,
    pub deleted: u64,
    pub inspect: u64,
    pub total: u64,
}

impl HarnessCounts {
    pub fn identity_holds(&self) -> bool {
        self.pass + self.fail + self.deleted + self.inspect == self.total
    }

    fn absorb(&mut self, o: &HarnessCounts) {
        self.programs += o.programs;
        self.executed += o.executed;
        self.error += o.error;
        self.pass += o.pass;
        self.fail += o.fail;
        self.deleted += o.deleted;
        self.inspect += o.inspect;
        self.total += o.total;
    }
}

/// Outcome of the finalized translation of one program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgramHarnessResult {
    pub category: Category,
    pub executed: bool,
    pub errored: bool,
    pub pass: u64,
    pub fail: u64,
    pub deleted: u64,
    pub inspect: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub rows: BTreeMap<Category, HarnessCounts>,
}

impl HarnessReport {
    pub fn totals(&self) -> HarnessCounts {
        let mut t = HarnessCounts::default();
        for row in self.rows.values() {
            t.absorb(row);
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        for (cat, row) in &self.rows {
            if !row.identity_holds() {
                return Err(CoreError::ReportIdentity(cat.to_string()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let r: HarnessReport = serde_json::from_str(json).map_err(|e| CoreError::Parse(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    /// Header, one row per category in benchmark order, then a `Total` row.
    pub fn to_csv(&self) -> String {
        let mut out = HARNESS_COLUMNS.join(",");
        out.push('\n');
        let mut line = |name: &str, c: &HarnessCounts| {
            out.push_str(&format!(
                "{name},{},{},{},{},{},{},{},{}\n",
                c.programs, c.executed, c.error, c.pass, c.fail, c.deleted, c.inspect, c.total
            ));
        };
        for (cat, row) in &self.rows {
            line(cat.as_str(), row);
        }
        line("Total", &self.totals());
        out
    }

    pub fn from_csv(csv: &str) -> Result<Self> {
        let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| CoreError::Parse("empty CSV".into()))?;
        if header.split(',').map(str::trim).ne(HARNESS_COLUMNS) {
            return Err(CoreError::Parse(format!("unexpected header `{header}`")));
        }
        let mut report = HarnessReport::default();
        let mut total_row = None;
        for line in lines {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != HARNESS_COLUMNS.len() {
                return Err(CoreError::Parse(format!("bad row `{line}`")));
            }
            let n = |i: usize| cells[i].parse::<u64>().map_err(|_| CoreError::Parse(format!("bad count in `{line}`")));
            let counts = HarnessCounts {
                programs: n(1)?,
                executed: n(2)?,
                error: n(3)?,
                pass: n(4)?,
                fail: n(5)?,
                deleted: n(6)?,
                inspect: n(7)?,
                total: n(8)?,
            };
            if cells[0] == "Total" {
                total_row = Some(counts);
            } else {
                report.rows.insert(Category::parse_lossy(cells[0]), counts);
            }
        }
        report.validate()?;
        if let Some(t) = total_row {
            if t != report.totals() {
                return Err(CoreError::Parse("Total row does not match the category rows".into()));
            }
        }
        Ok(report)
    }
}

/// Groups finalized program results by category.
pub fn build_harness_report(results: &[ProgramHarnessResult]) -> HarnessReport {
    let mut report = HarnessReport::default();
    for r in results {
        let row = report.rows.entry(r.category).or_default();
        row.programs += 1;
        row.executed += u64::from(r.executed);
        row.error += u64::from(r.errored);
        row.pass += r.pass;
        row.fail += r.fail;
        row.deleted += r.deleted;
        row.inspect += r.inspect;
        row.total += r.pass + r.fail + r.deleted + r.inspect;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_all_zero() {
        let r = build_harness_report(&[]);
        assert!(r.rows.is_empty());
        assert_eq!(r.totals(), HarnessCounts::default());
        assert_eq!(
            r.to_csv(),
            "Module,Programs,Executed,Error,Pass,Fail,Deleted,Inspect,Total\nTotal,0,0,0,0,0,0,0,0\n"
        );
    }

    #[test]
    fn identity_violation_rejected_on_parse() {
        let csv = "Module,Programs,Executed,Error,Pass,Fail,Deleted,Inspect,Total\nNC,1,1,0,3,0,0,0,4\n";
        assert!(matches!(HarnessReport::from_csv(csv), Err(CoreError::ReportIdentity(_))));
    }
}
