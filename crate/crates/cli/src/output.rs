//! Result files.
//!
//! ```text
//! knitsim-csv/1
//! # command=<name>
//! # config_hash=<sha256 of the canonical config JSON>
//! # config=<canonical config JSON>
//! # run unix_time=<s> wall_clock_s=<s>
//! <csv header>
//! <csv rows>
//! # content_sha256=<sha256 of every line above except the "# run" line>
//! ```
//!
//! The `# run` line is the only one that changes between replays.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::config::sha256_hex;
use crate::CliError;

pub const SCHEMA: &str = "knitsim-csv/1";
const RUN_PREFIX: &str = "# run ";
const CONTENT_PREFIX: &str = "# content_sha256=";

/// CSV rows for one invocation, plus its identity.
pub struct ResultTable {
    pub command: &'static str,
    pub config_json: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultTable {
    pub fn new(command: &'static str, config_json: String, header: &[&str]) -> Self {
        ResultTable { command, config_json, header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.config_json.as_bytes())
    }

    /// `<command>-<first 12 hex digits of the config hash>`.
    pub fn stem(&self) -> String {
        format!("{}-{}", self.command, &self.config_hash()[..12])
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, elapsed: Duration) -> Result<String, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).map_err(io_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(io_err)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)
            .map_err(|e| CliError::Io(e.to_string()))?;

        let mut hashed = String::new();
        hashed.push_str(SCHEMA);
        hashed.push('\n');
        hashed.push_str(&format!("# command={}\n", self.command));
        hashed.push_str(&format!("# config_hash={}\n", self.config_hash()));
        hashed.push_str(&format!("# config={}\n", self.config_json));
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_secs();
        let run = format!("{RUN_PREFIX}unix_time={now} wall_clock_s={:.3}\n", elapsed.as_secs_f64());

        let content = sha256_hex(format!("{hashed}{body}").as_bytes());
        Ok(format!("{hashed}{run}{body}{CONTENT_PREFIX}{content}\n"))
    }
}

fn io_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes `<out>/<stem>.csv` and, if given, `<out>/<stem>.json`.
pub fn write(out: &Path, table: &ResultTable, elapsed: Duration, json: Option<&serde_json::Value>) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
    let csv_path = out.join(format!("{}.csv", table.stem()));
    std::fs::write(&csv_path, table.render(elapsed)?).map_err(|e| CliError::Io(format!("cannot write {}: {e}", csv_path.display())))?;
    if let Some(j) = json {
        let json_path = out.join(format!("{}.json", table.stem()));
        let text = serde_json::to_string_pretty(j).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&json_path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", json_path.display())))?;
    }
    Ok(csv_path)
}

/// What `verify` found in one file.
#[derive(Debug, PartialEq, Eq)]
pub struct Verified {
    pub command: String,
    pub config_hash: String,
    pub rows: usize,
}

/// Re-checks the schema line, the config hash, the content hash and (if the
/// file name follows the `<command>-<hash12>.csv` pattern) the name.
pub fn verify_text(text: &str, file_name: Option<&str>) -> Result<Verified, String> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.first() != Some(&SCHEMA) {
        return Err(format!("first line is not {SCHEMA:?}"));
    }
    let field = |prefix: &str| -> Result<&str, String> {
        lines
            .iter()
            .find_map(|l| l.strip_prefix(prefix))
            .ok_or_else(|| format!("missing {prefix:?} line"))
    };
    let command = field("# command=")?;
    let claimed = field("# config_hash=")?;
    let config = field("# config=")?;
    let actual = sha256_hex(config.as_bytes());
    if claimed != actual {
        return Err(format!("config hash mismatch: header says {claimed}, config hashes to {actual}"));
    }
    let last = lines.last().copied().unwrap_or_default();
    let Some(content_claimed) = last.strip_prefix(CONTENT_PREFIX) else {
        return Err("missing trailing content hash".into());
    };
    let mut hashed = String::new();
    for l in &lines[..lines.len() - 1] {
        if !l.starts_with(RUN_PREFIX) {
            hashed.push_str(l);
            hashed.push('\n');
        }
    }
    let content_actual = sha256_hex(hashed.as_bytes());
    if content_claimed != content_actual {
        return Err(format!("content hash mismatch: trailer says {content_claimed}, content hashes to {content_actual}"));
    }
    if let Some(name) = file_name {
        if let Some(rest) = name.strip_suffix(".csv").and_then(|s| s.strip_prefix(&format!("{command}-"))) {
            if rest.len() == 12 && rest.chars().all(|c| c.is_ascii_hexdigit()) && !actual.starts_with(rest) {
                return Err(format!("file name hash {rest} does not match config hash {actual}"));
            }
        }
    }
    let rows = lines.iter().filter(|l| !l.starts_with('#') && **l != SCHEMA).count().saturating_sub(1);
    Ok(Verified { command: command.to_string(), config_hash: actual, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ResultTable {
        let mut t = ResultTable::new("demo", r#"{"eps":0.1}"#.into(), &["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        t.push(vec!["2".into(), "z".into()]);
        t
    }

    #[test]
    fn rendered_files_verify() {
        let text = table().render(Duration::from_millis(5)).unwrap();
        let v = verify_text(&text, Some(&format!("{}.csv", table().stem()))).unwrap();
        assert_eq!(v.rows, 2);
        assert_eq!(v.command, "demo");
        assert!(text.starts_with("knitsim-csv/1\n"));
        assert!(text.contains("\"x,y\""));
    }

    #[test]
    fn only_the_run_line_differs_between_renders() {
        let a = table().render(Duration::from_millis(5)).unwrap();
        let b = table().render(Duration::from_secs(7)).unwrap();
        let strip = |s: &str| s.lines().filter(|l| !l.starts_with(RUN_PREFIX)).collect::<Vec<_>>().join("\n");
        assert_eq!(strip(&a), strip(&b));
        assert!(verify_text(&b, None).is_ok());
    }

    #[test]
    fn tampering_is_detected() {
        let text = table().render(Duration::ZERO).unwrap();
        assert!(verify_text(&text.replace("\n2,z\n", "\n3,z\n"), None).unwrap_err().contains("content hash"));
        assert!(verify_text(&text.replace("0.1", "0.2"), None).unwrap_err().contains("config hash"));
        assert!(verify_text(&text.replacen("knitsim-csv/1", "knitsim-csv/2", 1), None).is_err());
        assert!(verify_text(&text, Some("demo-000000000000.csv")).unwrap_err().contains("file name"));
        // The run line is outside both hashes.
        let edited = text.lines().map(|l| if l.starts_with(RUN_PREFIX) { "# run edited" } else { l }).collect::<Vec<_>>().join("\n");
        assert!(verify_text(&edited, None).is_ok());
    }
}
