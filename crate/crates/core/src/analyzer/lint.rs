//! Optional external linter (clang-tidy style diagnostics).

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{LintIssue, Location, SourceUnit};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LintConfig {
    pub enabled: bool,
    /// Linter executable; looked up on PATH when relative.
    pub binary: PathBuf,
    /// Extra arguments placed before the file name.
    pub args: Vec<String>,
    /// Arguments placed after the file name (compiler flags after `--`).
    pub trailing_args: Vec<String>,
    /// Exit codes that still count as a normal run.
    pub ok_exit_codes: Vec<i32>,
}

impl Default for LintConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            binary: PathBuf::from("clang-tidy"),
            args: vec!["--quiet".into(), "--checks=-*,bugprone-*,clang-analyzer-*".into()],
            trailing_args: vec!["--".into(), "-fopenmp".into()],
            ok_exit_codes: vec![0, 1],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LintOutcome {
    pub issues: Vec<LintIssue>,
    pub skipped: bool,
    pub warnings: Vec<String>,
}

fn diag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(.+?):(\d+):(\d+): (warning|error|note): (.*?)(?: \[([^\[\]]+)\])?$")
            .expect("static regex")
    })
}

/// Parse `file:line:col: severity: message [check-name]` lines. Notes are
/// dropped; diagnostics without a check name use their severity as code.
pub fn parse_diagnostics(output: &str, file: &str) -> Vec<LintIssue> {
    output
        .lines()
        .filter_map(|l| diag_re().captures(l.trim_end()))
        .filter(|c| &c[4] != "note")
        .map(|c| LintIssue {
            location: Location {
                file: file.to_string(),
                line: c[2].parse().unwrap_or(0),
                col: c[3].parse().unwrap_or(0),
            },
            code: c.get(6).map_or_else(|| c[4].to_string(), |m| m.as_str().to_string()),
            message: c[5].to_string(),
        })
        .collect()
}

pub fn run_lint(unit: &SourceUnit, config: &LintConfig) -> LintOutcome {
    if !config.enabled {
        return LintOutcome {
            skipped: true,
            ..Default::default()
        };
    }
    let dir = match tempfile_dir() {
        Ok(d) => d,
        Err(e) => {
            return LintOutcome {
                skipped: true,
                warnings: vec![format!("lint scratch dir unavailable: {e}")],
                ..Default::default()
            }
        }
    };
    let path = dir.join(unit.file_name());
    let written = std::fs::File::create(&path).and_then(|mut f| f.write_all(unit.text.as_bytes()));
    if let Err(e) = written {
        let _ = std::fs::remove_dir_all(&dir);
        return LintOutcome {
            skipped: true,
            warnings: vec![format!("lint input not writable: {e}")],
            ..Default::default()
        };
    }
    let out = Command::new(&config.binary)
        .args(&config.args)
        .arg(&path)
        .args(&config.trailing_args)
        .output();
    let _ = std::fs::remove_dir_all(&dir);
    match out {
        Err(e) => LintOutcome {
            skipped: true,
            warnings: vec![format!("linter {} not runnable: {e}", config.binary.display())],
            ..Default::default()
        },
        Ok(o) => {
            let code = o.status.code();
            match code {
                Some(c) if config.ok_exit_codes.contains(&c) => {
                    let text = String::from_utf8_lossy(&o.stdout);
                    let issues = parse_diagnostics(&text, &unit.file_name())
                        .into_iter()
                        .filter(|i| i.location.line > 0)
                        .collect();
                    LintOutcome {
                        issues,
                        skipped: false,
                        warnings: Vec::new(),
                    }
                }
                _ => LintOutcome {
                    issues: Vec::new(),
                    skipped: false,
                    warnings: vec![format!(
                        "LinterCrashed({})",
                        code.map_or_else(|| "signal".to_string(), |c| c.to_string())
                    )],
                },
            }
        }
    }
}

fn tempfile_dir() -> std::io::Result<PathBuf> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static SEQ: AtomicU64 = AtomicU64::new(0);
    let dir = std::env::temp_dir().join(format!(
        "hpct-lint-{}-{}",
        std::process::id(),
        SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
