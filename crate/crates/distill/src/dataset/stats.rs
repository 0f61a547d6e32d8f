use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::extract::TrajectoryRecord;

/// Counts for one source dataset. `questions` are problems that yielded at
/// least one trajectory; every other debated problem is `excluded`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub questions: usize,
    pub trajectories: usize,
    pub corrective: usize,
    pub excluded: usize,
    pub aborted: usize,
    pub debated: usize,
}

impl DatasetStats {
    fn merge(&mut self, o: &DatasetStats) {
        self.questions += o.questions;
        self.trajectories += o.trajectories;
        self.corrective += o.corrective;
        self.excluded += o.excluded;
        self.aborted += o.aborted;
        self.debated += o.debated;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub datasets: BTreeMap<String, DatasetStats>,
}

impl CorpusStats {
    /// Accounts for one debated problem and the trajectories kept from it.
    pub fn add_problem(&mut self, dataset: &str, aborted: bool, records: &[TrajectoryRecord]) {
        let s = self.datasets.entry(dataset.to_string()).or_default();
        s.debated += 1;
        if aborted {
            s.aborted += 1;
        }
        if records.is_empty() {
            s.excluded += 1;
        } else {
            s.questions += 1;
            s.trajectories += records.len();
            s.corrective += records.iter().filter(|r| r.is_corrective).count();
        }
    }

    /// Q/T counts of an already-built file, with nothing excluded.
    pub fn add_counts(&mut self, dataset: &str, questions: usize, trajectories: usize) {
        let s = self.datasets.entry(dataset.to_string()).or_default();
        s.questions += questions;
        s.trajectories += trajectories;
        s.debated += questions;
    }

    pub fn total(&self) -> DatasetStats {
        let mut t = DatasetStats::default();
        for s in self.datasets.values() {
            t.merge(s);
        }
        t
    }

    /// Aligned text table with a `Q / T` column, plus a total row when more
    /// than one dataset is present.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, DatasetStats)> = self.datasets.iter().map(|(k, v)| (k.clone(), *v)).collect();
        if rows.len() > 1 {
            rows.push(("total".into(), self.total()));
        }
        let header = ["dataset", "Q / T", "corrective", "excluded", "aborted"];
        let cells: Vec<[String; 5]> = rows
            .iter()
            .map(|(name, s)| {
                [
                    name.clone(),
                    format!("{} / {}", s.questions, s.trajectories),
                    s.corrective.to_string(),
                    s.excluded.to_string(),
                    s.aborted.to_string(),
                ]
            })
            .collect();
        let mut width = header.map(str::len);
        for row in &cells {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |row: [&str; 5]| {
            let mut parts = Vec::with_capacity(5);
            parts.push(format!("{:<w$}", row[0], w = width[0]));
            for (c, w) in row[1..].iter().zip(&width[1..]) {
                parts.push(format!("{c:>w$}"));
            }
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(header);
        for row in &cells {
            line([&row[0], &row[1], &row[2], &row[3], &row[4]]);
        }
        out
    }
}
