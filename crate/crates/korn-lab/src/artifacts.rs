//! Run directory layout: `report.json` + `summary.txt` + `data/*.csv`,
//! all byte-deterministic for a fixed config and seed. Wall-clock metadata
//! goes to a separate sidecar so the main artifacts stay reproducible.

use anyhow::{Context, Result};
use korn_core::report::{all_pass, CheckReport};
use serde::Serialize;
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub struct Artifacts {
    out: PathBuf,
    checks: Vec<CheckReport>,
    notes: Vec<String>,
    payloads: Vec<(String, Value)>,
}

impl Artifacts {
    pub fn create(out: &Path) -> Result<Artifacts> {
        fs::create_dir_all(out.join("data"))
            .with_context(|| format!("creating output directory {}", out.display()))?;
        Ok(Artifacts {
            out: out.to_path_buf(),
            checks: Vec::new(),
            notes: Vec::new(),
            payloads: Vec::new(),
        })
    }

    pub fn check(&mut self, c: CheckReport) {
        self.checks.push(c);
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.notes.push(line.into());
    }

    /// Structured per-command payload embedded in the report.
    pub fn attach(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.payloads
            .push((key.to_string(), serde_json::to_value(value)?));
        Ok(())
    }

    pub fn csv(&self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut text = String::with_capacity(16 + rows.len() * 32);
        text.push_str(header);
        text.push('\n');
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        let path = self.out.join("data").join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let mut text = String::new();
        for r in rows {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        let path = self.out.join("data").join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    /// Writes the report trio and returns whether every check passed.
    pub fn finish(self, command: &str, config: Value) -> Result<bool> {
        let pass = all_pass(&self.checks);
        let mut report = serde_json::Map::new();
        report.insert("command".into(), command.into());
        report.insert("config".into(), config);
        report.insert("pass".into(), pass.into());
        report.insert(
            "checks".into(),
            serde_json::to_value(&self.checks).expect("checks serialize"),
        );
        for (k, v) in self.payloads {
            report.insert(k, v);
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(report))?;
        text.push('\n');
        fs::write(self.out.join("report.json"), text)?;

        let mut summary = format!(
            "{command}: {} checks, {}\n",
            self.checks.len(),
            if pass { "all pass" } else { "FAILURES" }
        );
        for n in &self.notes {
            summary.push_str(n);
            summary.push('\n');
        }
        for c in &self.checks {
            summary.push_str(&format!(
                "[{}] {} (measured {:e}, bound {:e})\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.bound
            ));
        }
        fs::write(self.out.join("summary.txt"), summary)?;

        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        fs::write(self.out.join("meta.txt"), format!("unix_time: {stamp}\n"))?;

        for c in self.checks.iter().filter(|c| !c.pass) {
            eprintln!(
                "audit failure: {} (measured {:e}, bound {:e})",
                c.name, c.measured, c.bound
            );
        }
        Ok(pass)
    }
}
