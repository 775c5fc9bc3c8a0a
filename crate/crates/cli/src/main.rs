//! `hpct` — drive the test-generation pipeline or any single stage of it.
//!
//! Exit codes: 0 ok, 1 usage/other, 2 validation failure (`kg validate`,
//! `recipe validate`), 3 input not found, 4 invalid KG, 5 analysis,
//! 6 recipe, 7 synthesis, 8 harness, 9 report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hpct_core::pipeline::{
    self, read_json, write_json, BackendChoice, MetadataArtifact, PipelineConfig, PipelineError, Preset,
    RecipesArtifact, TestsArtifact, METADATA_FILE, RECIPES_FILE, RESULTS_FILE, TESTS_FILE,
};
use hpct_core::recipe::{validate_recipe, RecipeConfig, RecipeSet};
use hpct_core::synth::ExcerptMode;

#[derive(Parser, Debug)]
#[command(name = "hpct", version, about = "Unit-test generation for OpenMP/MPI code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Static analysis of source files.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Output file; stdout when omitted. A single input file yields a
        /// bare metadata document, anything else the run artifact.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Knowledge-graph utilities.
    Kg {
        #[command(subcommand)]
        command: KgCommand,
    },
    /// Test recipes.
    Recipe {
        #[command(subcommand)]
        command: RecipeCommand,
    },
    /// Test synthesis.
    Test {
        #[command(subcommand)]
        command: TestCommand,
    },
    /// Compile and run generated tests of a run directory.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Build report.json from a run directory's artifacts.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// All stages end to end.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand, Debug)]
enum KgCommand {
    Validate { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum RecipeCommand {
    /// metadata.json → recipes.json inside a run directory.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Check a recipes file (run artifact or single recipe set).
    Validate { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum TestCommand {
    /// metadata.json + recipes.json → tests.json and sources.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run_dir: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Template,
    Llm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExcerptArg {
    Function,
    FullFile,
}

/// Flags shared by the stage commands. Config file first, flags win.
#[derive(Args, Debug, Default)]
struct Common {
    /// Source files or directories.
    inputs: Vec<PathBuf>,
    /// Corpus manifest; inputs then filter its entries.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// JSON config file (keys as in the report's `config`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kg: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// full | no-critique | no-recipe | standalone
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    no_recipe: bool,
    #[arg(long)]
    no_critique: bool,
    /// Canned LLM completions (JSON array of strings).
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_iterations: Option<u32>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long, value_enum)]
    excerpt: Option<ExcerptArg>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    cxx: Option<PathBuf>,
    #[arg(long)]
    mpicxx: Option<PathBuf>,
    #[arg(long)]
    mpirun: Option<PathBuf>,
    #[arg(long)]
    no_coverage: bool,
    /// Generate tests without compiling or running them.
    #[arg(long)]
    skip_run: bool,
}

enum Failure {
    Stage(PipelineError),
    Usage(String),
    Invalid(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Stage(e)
    }
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig, Failure> {
        let mut c = match &self.config {
            Some(p) => {
                if !p.is_file() {
                    return Err(PipelineError::InputNotFound(p.display().to_string()).into());
                }
                read_json::<PipelineConfig>(p).map_err(Failure::Usage)?
            }
            None => PipelineConfig::default(),
        };
        if !self.inputs.is_empty() {
            c.inputs = self.inputs.clone();
        }
        if self.manifest.is_some() {
            c.manifest = self.manifest.clone();
        }
        if self.kg.is_some() {
            c.kg_path = self.kg.clone();
        }
        if let Some(b) = self.backend {
            c.backend = match b {
                BackendArg::Template => BackendChoice::Template,
                BackendArg::Llm => BackendChoice::Llm,
            };
        }
        if let Some(p) = &self.preset {
            let preset = Preset::parse(p).ok_or_else(|| Failure::Usage(format!("unknown preset `{p}`")))?;
            c.ablations = preset.ablations();
        }
        c.ablations.no_recipe |= self.no_recipe;
        c.ablations.no_critique |= self.no_critique;
        if self.mock_script.is_some() {
            c.mock_script = self.mock_script.clone();
        }
        if let Some(e) = &self.endpoint {
            c.llm.endpoint = e.clone();
        }
        if let Some(m) = &self.model {
            c.llm.model = m.clone();
        }
        if let Some(n) = self.max_iterations {
            c.max_iterations = n;
        }
        if let Some(n) = self.candidates {
            c.candidates = n;
        }
        if let Some(t) = self.temperature {
            c.temperature = t;
        }
        if let Some(t) = self.timeout {
            c.timeout_seconds = t;
        }
        if let Some(x) = self.excerpt {
            c.excerpt_mode = match x {
                ExcerptArg::Function => ExcerptMode::Function,
                ExcerptArg::FullFile => ExcerptMode::FullFile,
            };
        }
        if let Some(d) = &self.output_dir {
            c.output_dir = d.clone();
        }
        if self.run_id.is_some() {
            c.run_id = self.run_id.clone();
        }
        if self.cxx.is_some() {
            c.toolchain.cxx = self.cxx.clone();
        }
        if self.mpicxx.is_some() {
            c.toolchain.mpicxx = self.mpicxx.clone();
        }
        if self.mpirun.is_some() {
            c.toolchain.mpirun = self.mpirun.clone();
        }
        if self.no_coverage {
            c.harness.coverage = false;
        }
        c.skip_run |= self.skip_run;
        Ok(c)
    }
}

fn emit<T: serde::Serialize>(value: &T, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(p) => write_json(p, value).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
            Ok(())
        }
    }
}

fn load<T: for<'de> serde::Deserialize<'de>>(run_dir: &Path, name: &str) -> Result<T, Failure> {
    let p = run_dir.join(name);
    if !p.is_file() {
        return Err(PipelineError::InputNotFound(p.display().to_string()).into());
    }
    read_json(&p).map_err(|e| Failure::Usage(e))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze { common, output } => {
            let config = common.resolve()?;
            let kg = pipeline::load_kg_for(&config)?;
            let artifact = pipeline::stage_analyze(&config, &kg)?;
            let single = config.manifest.is_none()
                && config.inputs.len() == 1
                && config.inputs[0].is_file()
                && artifact.sources.len() == 1;
            if single {
                emit(&artifact.sources[0], output.as_deref())
            } else {
                emit(&artifact, output.as_deref())
            }
        }
        Command::Kg {
            command: KgCommand::Validate { file },
        } => {
            if !file.is_file() {
                return Err(PipelineError::InputNotFound(file.display().to_string()).into());
            }
            let kg = hpct_core::load_kg(&file).map_err(|e| Failure::Invalid(e.to_string()))?;
            println!("ok: {} patterns (version {})", kg.patterns.len(), kg.version);
            Ok(())
        }
        Command::Recipe {
            command: RecipeCommand::Generate { common, run_dir },
        } => {
            let config = common.resolve()?;
            let kg = pipeline::load_kg_for(&config)?;
            let metadata: MetadataArtifact = load(&run_dir, METADATA_FILE)?;
            let recipes = pipeline::stage_recipes(&config, &kg, &metadata)?;
            emit(&recipes, Some(&run_dir.join(RECIPES_FILE)))
        }
        Command::Recipe {
            command: RecipeCommand::Validate { file },
        } => {
            if !file.is_file() {
                return Err(PipelineError::InputNotFound(file.display().to_string()).into());
            }
            let text = std::fs::read_to_string(&file).map_err(|e| Failure::Usage(e.to_string()))?;
            let sets: Vec<RecipeSet> = match serde_json::from_str::<RecipesArtifact>(&text) {
                Ok(a) => a.sets,
                Err(_) => vec![serde_json::from_str::<RecipeSet>(&text).map_err(|e| Failure::Invalid(e.to_string()))?],
            };
            let registry = RecipeConfig::default().registry;
            let mut problems = Vec::new();
            let mut count = 0;
            for r in sets.iter().flat_map(|s| &s.recipes) {
                count += 1;
                if let Err(vs) = validate_recipe(r, &registry) {
                    for v in vs {
                        problems.push(format!("{}: {}: {}", r.test_id, v.field, v.message));
                    }
                }
            }
            if problems.is_empty() {
                println!("ok: {count} recipes");
                Ok(())
            } else {
                Err(Failure::Invalid(problems.join("\n")))
            }
        }
        Command::Test {
            command: TestCommand::Generate { common, run_dir },
        } => {
            let config = common.resolve()?;
            let metadata: MetadataArtifact = load(&run_dir, METADATA_FILE)?;
            let recipes: RecipesArtifact = load(&run_dir, RECIPES_FILE)?;
            let tests = pipeline::stage_tests(&config, &metadata, &recipes, &run_dir)?;
            emit(&tests, Some(&run_dir.join(TESTS_FILE)))
        }
        Command::Run { common, run_dir } => {
            let config = common.resolve()?;
            let tests: TestsArtifact = load(&run_dir, TESTS_FILE)?;
            let results = pipeline::stage_run(&config, &tests, &run_dir);
            emit(&results, Some(&run_dir.join(RESULTS_FILE)))
        }
        Command::Report { common, run_dir } => {
            let config = common.resolve()?;
            let report = pipeline::stage_report(&config, &run_dir)?;
            eprintln!("{}", summary_line(&report));
            Ok(())
        }
        Command::Pipeline { common } => {
            let config = common.resolve()?;
            let out = pipeline::run_pipeline(&config)?;
            eprintln!("{}", summary_line(&out.report));
            println!("{}", out.run_dir.display());
            Ok(())
        }
    }
}

fn summary_line(r: &pipeline::Report) -> String {
    let rate = r.metrics.compilation_rate_pct.map_or("n/a".to_string(), |p| format!("{p}%"));
    format!(
        "{} sources, {} tests, compilation {rate}, escalations {}",
        r.sources.len(),
        r.tests.len(),
        r.escalations
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap's own usage errors exit 2, which is ours for validation failures
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("invalid: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
