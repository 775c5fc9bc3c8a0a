//! Compiles and runs generated tests, classifies the outcome and collects
//! gcov coverage for the embedded source.

use std::io::{BufRead, Read};
use std::sync::{Arc, OnceLock};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::metrics::pct;
use crate::synth::{ExecModel, GeneratedTest};

const OUTPUT_LIMIT: usize = 16 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    AssertionFailure,
    TimeoutDeadlock,
    SetupError,
    Crash,
    CompileError,
    ToolchainUnavailable,
}

impl Outcome {
    /// Exit-code contract of the embedded header.
    pub fn from_exit_code(code: i32) -> Outcome {
        match code {
            0 => Outcome::Pass,
            2 => Outcome::AssertionFailure,
            3 => Outcome::TimeoutDeadlock,
            4 => Outcome::SetupError,
            _ => Outcome::Crash,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::AssertionFailure => "assertion_failure",
            Outcome::TimeoutDeadlock => "timeout_deadlock",
            Outcome::SetupError => "setup_error",
            Outcome::Crash => "crash",
            Outcome::CompileError => "compile_error",
            Outcome::ToolchainUnavailable => "toolchain_unavailable",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolchainConfig {
    pub cxx: Option<PathBuf>,
    pub mpicxx: Option<PathBuf>,
    pub mpirun: Option<PathBuf>,
    pub gcov: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Toolchain {
    pub cxx: Option<PathBuf>,
    pub mpicxx: Option<PathBuf>,
    pub mpirun: Option<PathBuf>,
    pub gcov: Option<PathBuf>,
}

fn which(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(name)).find(|p| p.is_file())
}

fn pick(configured: &Option<PathBuf>, env: &str, names: &[&str]) -> Option<PathBuf> {
    configured
        .clone()
        .or_else(|| std::env::var_os(env).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| names.iter().find_map(|n| which(n)))
}

impl Toolchain {
    /// Explicit configuration, then `HPCT_*` variables, then `PATH`.
    pub fn discover(config: &ToolchainConfig) -> Toolchain {
        Toolchain {
            cxx: pick(&config.cxx, "HPCT_CXX", &["g++", "c++", "clang++"]),
            mpicxx: pick(&config.mpicxx, "HPCT_MPICXX", &["mpicxx", "mpic++"]),
            mpirun: pick(&config.mpirun, "HPCT_MPIRUN", &["mpirun", "mpiexec"]),
            gcov: pick(&config.gcov, "HPCT_GCOV", &["gcov"]),
        }
    }

    pub fn supports(&self, model: ExecModel) -> bool {
        match model {
            ExecModel::Mpi => self.mpicxx.is_some() && self.mpirun.is_some(),
            _ => self.cxx.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub coverage: bool,
    pub optimization: String,
    pub extra_cxxflags: Vec<String>,
    pub mpirun_args: Vec<String>,
    /// Hard kill happens at `timeout_factor * timeout + kill_grace_seconds`;
    /// the in-test watchdog normally fires first.
    pub timeout_factor: f64,
    pub kill_grace_seconds: f64,
    pub compile_timeout_seconds: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            coverage: true,
            optimization: "-O1".into(),
            extra_cxxflags: Vec::new(),
            mpirun_args: vec!["--allow-run-as-root".into(), "--oversubscribe".into()],
            timeout_factor: 1.0,
            kill_grace_seconds: 1.0,
            compile_timeout_seconds: 120.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub file: String,
    pub lines_total: u32,
    pub lines_hit: u32,
    pub branches_total: u32,
    pub branches_hit: u32,
    pub line_pct: Option<f64>,
    pub branch_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub recipe_id: String,
    pub file_name: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<i32>,
    /// True when the harness had to kill the process group.
    pub hard_killed: bool,
    pub command: Vec<String>,
    pub stdout: String,
    pub stderr: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub compile_log: String,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Coverage>,
}

struct Finished {
    exit_code: Option<i32>,
    signal: Option<i32>,
    stdout: String,
    stderr: String,
    killed: bool,
    /// The in-test watchdog reported a timeout (see [`WATCHDOG_MARKER`]).
    watchdog_fired: bool,
    wall: f64,
}

/// Printed by the header's watchdog just before it exits the rank.
const WATCHDOG_MARKER: &str = "[hpct] rank ";
const WATCHDOG_SUFFIX: &str = "(possible deadlock)";
/// How long a launcher may spend tearing down after a watchdog fired.
const WATCHDOG_GRACE: Duration = Duration::from_millis(250);

fn is_watchdog_line(line: &str) -> bool {
    line.starts_with(WATCHDOG_MARKER) && line.trim_end().ends_with(WATCHDOG_SUFFIX)
}

fn truncate(mut s: String) -> String {
    if s.len() > OUTPUT_LIMIT {
        let mut cut = OUTPUT_LIMIT;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
        s.push_str("\n[truncated]\n");
    }
    s
}

/// Run in a fresh process group; SIGKILL the whole group at the deadline.
fn run_bounded(mut cmd: Command, deadline: Duration, env: &[(&str, String)]) -> std::io::Result<Finished> {
    use std::os::unix::process::ExitStatusExt;
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped()).process_group(0);
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let mut out = child.stdout.take().expect("piped stdout");
    let mut err = child.stderr.take().expect("piped stderr");
    let t_out = std::thread::spawn(move || {
        let mut b = Vec::new();
        let _ = out.read_to_end(&mut b);
        b
    });
    let fired = Arc::new(OnceLock::<Instant>::new());
    let seen = Arc::clone(&fired);
    let t_err = std::thread::spawn(move || {
        // line-wise so a watchdog report is noticed while the launcher lingers
        let mut b = Vec::new();
        let mut reader = std::io::BufReader::new(&mut err);
        loop {
            let at = b.len();
            match reader.read_until(b'\n', &mut b) {
                Ok(0) | Err(_) => break,
                Ok(_) => {
                    if is_watchdog_line(&String::from_utf8_lossy(&b[at..])) {
                        let _ = seen.set(Instant::now());
                    }
                }
            }
        }
        b
    });
    let pgid = child.id() as libc::pid_t;
    let mut killed = false;
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break s;
        }
        if fired.get().is_some_and(|t| t.elapsed() >= WATCHDOG_GRACE) {
            // the verdict is in; don't wait for the launcher's teardown
            unsafe {
                libc::kill(-pgid, libc::SIGKILL);
            }
            break child.wait()?;
        }
        if start.elapsed() >= deadline {
            // SAFETY: plain syscall on a process group we created
            unsafe {
                libc::kill(-pgid, libc::SIGKILL);
            }
            killed = true;
            break child.wait()?;
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    // stragglers (e.g. orphaned ranks) must not keep the pipes open
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
    let wall = start.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&t_out.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&t_err.join().unwrap_or_default()).into_owned();
    Ok(Finished {
        exit_code: status.code(),
        signal: status.signal(),
        stdout,
        stderr,
        killed,
        watchdog_fired: fired.get().is_some(),
        wall,
    })
}

fn unavailable(test: &GeneratedTest, why: String) -> RunResult {
    RunResult {
        recipe_id: test.recipe_id.clone(),
        file_name: test.file_name.clone(),
        outcome: Outcome::ToolchainUnavailable,
        exit_code: None,
        signal: None,
        hard_killed: false,
        command: Vec::new(),
        stdout: String::new(),
        stderr: why,
        compile_log: String::new(),
        wall_seconds: 0.0,
        coverage: None,
    }
}

/// Compile `test` into `work_dir` and run it under its launch spec.
pub fn run_test(test: &GeneratedTest, toolchain: &Toolchain, config: &HarnessConfig, work_dir: &Path) -> RunResult {
    let spec = &test.launch_spec;
    if !toolchain.supports(spec.model) {
        return unavailable(test, format!("no toolchain for the {:?} model", spec.model));
    }
    let dir = work_dir.join(test.file_name.trim_end_matches(".cpp"));
    // stale counters from an earlier build would be merged into this run
    let _ = std::fs::remove_dir_all(&dir);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        return unavailable(test, format!("cannot create {}: {e}", dir.display()));
    }
    let src = dir.join(&test.file_name);
    if let Err(e) = std::fs::write(&src, &test.source_text) {
        return unavailable(test, format!("cannot write {}: {e}", src.display()));
    }
    let compiler = match spec.model {
        ExecModel::Mpi => toolchain.mpicxx.clone(),
        _ => toolchain.cxx.clone(),
    }
    .expect("checked by supports");
    let binary = dir.join("test_bin");
    let mut cc = Command::new(&compiler);
    cc.current_dir(&dir).args(["-std=c++17", "-fopenmp", "-pthread"]);
    if config.coverage {
        cc.args(["--coverage", "-O0", "-DHPCT_COVERAGE"]);
    } else {
        cc.arg(&config.optimization);
    }
    cc.args(&config.extra_cxxflags).arg(&test.file_name).arg("-o").arg(&binary);
    let compile = run_bounded(cc, Duration::from_secs_f64(config.compile_timeout_seconds), &[]);
    let compile = match compile {
        Ok(f) => f,
        Err(e) => return unavailable(test, format!("cannot start {}: {e}", compiler.display())),
    };
    let compile_log = truncate(format!("{}{}", compile.stdout, compile.stderr));
    if compile.exit_code != Some(0) {
        return RunResult {
            recipe_id: test.recipe_id.clone(),
            file_name: test.file_name.clone(),
            outcome: Outcome::CompileError,
            exit_code: compile.exit_code,
            signal: compile.signal,
            hard_killed: compile.killed,
            command: vec![compiler.display().to_string(), test.file_name.clone()],
            stdout: String::new(),
            stderr: String::new(),
            compile_log,
            wall_seconds: 0.0,
            coverage: None,
        };
    }

    let mut command: Vec<String> = Vec::new();
    let mut env: Vec<(&str, String)> = Vec::new();
    if let Some(t) = spec.num_threads {
        env.push(("OMP_NUM_THREADS", t.to_string()));
    }
    match spec.model {
        ExecModel::Mpi => {
            command.push(toolchain.mpirun.as_ref().expect("checked by supports").display().to_string());
            command.extend(config.mpirun_args.iter().cloned());
            command.push("-np".into());
            command.push(spec.num_processes.unwrap_or(1).to_string());
            command.push(binary.display().to_string());
        }
        _ => command.push(binary.display().to_string()),
    }
    let mut cmd = Command::new(&command[0]);
    cmd.args(&command[1..]).current_dir(&dir);
    let deadline = Duration::from_secs_f64(spec.timeout_seconds * config.timeout_factor + config.kill_grace_seconds);
    let run = match run_bounded(cmd, deadline, &env) {
        Ok(f) => f,
        Err(e) => return unavailable(test, format!("cannot start {}: {e}", command[0])),
    };
    let outcome = if run.killed || run.watchdog_fired {
        Outcome::TimeoutDeadlock
    } else {
        match run.exit_code {
            Some(c) => Outcome::from_exit_code(c),
            None => Outcome::Crash,
        }
    };
    let coverage = if config.coverage {
        toolchain
            .gcov
            .as_ref()
            .and_then(|g| collect_coverage(g, &dir, &test.embedded_source))
    } else {
        None
    };
    RunResult {
        recipe_id: test.recipe_id.clone(),
        file_name: test.file_name.clone(),
        outcome,
        exit_code: run.exit_code,
        signal: run.signal,
        hard_killed: run.killed,
        command,
        stdout: truncate(run.stdout),
        stderr: truncate(run.stderr),
        compile_log,
        wall_seconds: run.wall,
        coverage,
    }
}

fn collect_coverage(gcov: &Path, dir: &Path, source: &str) -> Option<Coverage> {
    // notes files exist even when the run never wrote counts
    let gcno: Vec<PathBuf> = std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "gcno"))
        .collect();
    let first = gcno.first()?;
    let mut cmd = Command::new(gcov);
    cmd.current_dir(dir).args(["-b", "--json-format", "--stdout"]).arg(first.file_name()?);
    let out = run_bounded(cmd, Duration::from_secs(60), &[]).ok()?;
    if out.exit_code != Some(0) {
        log::warn!("gcov failed: {}", out.stderr.trim());
        return None;
    }
    parse_gcov_json(&out.stdout, source)
}

/// Line and branch coverage for `source` from `gcov --json-format` output
/// (one JSON document per line).
pub fn parse_gcov_json(text: &str, source: &str) -> Option<Coverage> {
    let mut cov = Coverage {
        file: source.to_string(),
        ..Coverage::default()
    };
    let mut seen = false;
    for doc in text.lines().filter(|l| l.trim_start().starts_with('{')) {
        let v: serde_json::Value = serde_json::from_str(doc).ok()?;
        for f in v["files"].as_array().into_iter().flatten() {
            let name = f["file"].as_str().unwrap_or_default();
            if name != source && !name.ends_with(&format!("/{source}")) {
                continue;
            }
            seen = true;
            for line in f["lines"].as_array().into_iter().flatten() {
                cov.lines_total += 1;
                if line["count"].as_u64().unwrap_or(0) > 0 {
                    cov.lines_hit += 1;
                }
                for b in line["branches"].as_array().into_iter().flatten() {
                    cov.branches_total += 1;
                    if b["count"].as_u64().unwrap_or(0) > 0 {
                        cov.branches_hit += 1;
                    }
                }
            }
        }
    }
    if !seen {
        return None;
    }
    cov.line_pct = pct(cov.lines_hit as u64, cov.lines_total as u64);
    cov.branch_pct = pct(cov.branches_hit as u64, cov.branches_total as u64);
    Some(cov)
}
