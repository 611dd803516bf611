//! Report assembly and emission: one human-readable structured report plus
//! flat CSV tables, all deterministic for a fixed config and seed. The only
//! non-reproducible fields (timestamp, wall time) live in a header line.

use bhp_core::Result;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Pass,
    Fail,
    Info,
}

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub name: String,
    pub value: String,
    pub status: RowStatus,
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub config_echo: String,
    pub rows: Vec<ReportRow>,
    /// (file name, CSV body) pairs.
    pub tables: Vec<(String, String)>,
    pub seed: u64,
    pub wall_seconds: f64,
}

/// 17 significant digits, RFC-4180-style field.
pub fn fmt_g(x: f64) -> String {
    format!("{x:.16e}")
}

impl RunReport {
    pub fn info(&mut self, name: &str, value: impl std::fmt::Display) {
        self.rows.push(ReportRow { name: name.into(), value: value.to_string(), status: RowStatus::Info });
    }

    pub fn check(&mut self, name: &str, value: impl std::fmt::Display, pass: bool) {
        self.rows.push(ReportRow {
            name: name.into(),
            value: value.to_string(),
            status: if pass { RowStatus::Pass } else { RowStatus::Fail },
        });
    }

    pub fn table(&mut self, name: &str, body: String) {
        self.tables.push((name.to_string(), body));
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.status != RowStatus::Fail)
    }

    /// Deterministic report body (everything below the header line).
    pub fn body(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version: {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "\n[config]");
        for line in self.config_echo.lines() {
            let _ = writeln!(out, "  {line}");
        }
        let _ = writeln!(out, "\n[results]");
        for row in &self.rows {
            let tag = match row.status {
                RowStatus::Pass => "pass",
                RowStatus::Fail => "FAIL",
                RowStatus::Info => "info",
            };
            let _ = writeln!(out, "  {:<44} = {:<26} [{tag}]", row.name, row.value);
        }
        let _ = writeln!(
            out,
            "\noverall: {}",
            if self.all_pass() { "pass" } else { "FAIL" }
        );
        out
    }

    /// Writes report.txt, the config echo, and every CSV table into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let header = format!("# generated unix:{stamp} wall:{:.3}s\n", self.wall_seconds);
        std::fs::write(dir.join("report.txt"), header + &self.body())?;
        std::fs::write(dir.join("config_echo.conf"), &self.config_echo)?;
        for (name, body) in &self.tables {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}
