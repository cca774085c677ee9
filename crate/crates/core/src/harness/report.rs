//! Ablation reports as JSON and Markdown tables. Wall-clock timings go to a
//! separate file so that reports of identical runs are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: String,
    /// Marks the configuration used by the main model.
    pub default: bool,
    pub accuracy: f64,
    pub final_loss: f64,
    /// Paths relative to the report directory.
    pub checkpoint: PathBuf,
    pub eval_log: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub title: String,
    pub variant_header: String,
    pub config_hash: String,
    pub seed: u64,
    /// `1 / K`.
    pub chance: f64,
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_secs: f64,
    pub variants: Vec<(String, f64)>,
}

impl ExperimentReport {
    pub fn to_markdown(&self) -> String {
        let mut s = format!("# {}\n\n", self.title);
        let _ = writeln!(s, "config `{}`, seed {}\n", self.config_hash, self.seed);
        let _ = writeln!(s, "| {} | Top-1 (%) | Final loss | Checkpoint |", self.variant_header);
        s.push_str("|---|---:|---:|---|\n");
        for r in &self.rows {
            let name = if r.default {
                format!("**{}** (default)", r.variant)
            } else {
                r.variant.clone()
            };
            let _ = writeln!(
                s,
                "| {name} | {:.1} | {:.4} | `{}` |",
                100.0 * r.accuracy,
                r.final_loss,
                r.checkpoint.display()
            );
        }
        let _ = writeln!(s, "\nChance level: {:.1}%.", 100.0 * self.chance);
        for n in &self.notes {
            let _ = writeln!(s, "\n{n}");
        }
        s
    }

    /// Writes `{stem}.json` and `{stem}.md` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), HarnessError> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join(format!("{stem}.json"));
        let md = dir.join(format!("{stem}.md"));
        std::fs::write(&json, serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::write(&md, self.to_markdown())?;
        Ok((json, md))
    }
}
