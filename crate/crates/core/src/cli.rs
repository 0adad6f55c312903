//! Command-line front end.
//!
//! Exit codes: 0 success, 1 domain failure (invalid data, disagreement
//! problems, unresolved ties), 2 I/O or usage failure.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::agreement::{align, stats_report, AnnotationSet, ResolutionSession, VoteTally};
use crate::error::{ApiError, ErrorCode};
use crate::model::{
    parse_with, serialize, Dialogue, DialogueCollection, LabelSchema,
    ParseOptions,
};
use crate::recommend::RecommenderRegistry;
use crate::segment::{segment, to_dialogues};
use crate::server::{serve, AppState, ServeConfig};
use crate::store::{atomic_write, load_schema_file, SchemaFileError, Store, SCHEMA_FILE};

#[derive(Debug, Parser)]
#[command(name = "dialign", version, about = "Dialogue annotation toolkit")]
pub struct Cli {
    /// Label schema config; defaults to ./schema.json, or the workspace's
    /// schema.json for `serve`.
    #[arg(long, global = true, env = "DIALIGN_CONFIG")]
    pub config: Option<PathBuf>,
    /// Print errors on stderr as JSON objects.
    #[arg(long, global = true)]
    pub json_errors: bool,
    /// Keep labels missing from the schema instead of rejecting the file.
    #[arg(long, global = true)]
    pub allow_unknown_labels: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a raw transcript into dialogues and turns.
    Segment {
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a dataset file against the label schema.
    Validate { file: PathBuf },
    /// Agreement statistics over annotator copies of the same dialogues.
    Stats {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Merge annotator copies, accepting every majority default.
    Resolve {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        majority: bool,
        /// Also accept defaults of tied items.
        #[arg(long)]
        break_ties: bool,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the HTTP server.
    Serve {
        #[arg(long, env = "DIALIGN_WORKSPACE", default_value = ".")]
        workspace: PathBuf,
        #[arg(long, env = "DIALIGN_HOST", default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "DIALIGN_PORT", default_value_t = 8000)]
        port: u16,
        /// Directory with the web client build, served at `/`.
        #[arg(long, env = "DIALIGN_STATIC_DIR")]
        static_dir: Option<PathBuf>,
    },
}

/// A failed command.
#[derive(Debug)]
pub enum CliError {
    Domain(ApiError),
    Io(ApiError),
    Usage(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(ApiError::new(500, "Io", e.to_string()).with_path(path.display().to_string()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) | CliError::Usage(_) => 2,
        }
    }

    pub fn to_api_error(&self) -> ApiError {
        match self {
            CliError::Domain(e) | CliError::Io(e) => e.clone(),
            CliError::Usage(m) => ApiError::new(400, "Usage", m.clone()),
        }
    }
}

impl<E: ErrorCode> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Domain(e.into())
    }
}

fn schema_error(e: SchemaFileError) -> CliError {
    CliError::Io(e.into())
}

/// Output of a command; written to stdout by [`run`].
pub struct Outcome {
    pub stdout: String,
}

type CliResult = Result<Outcome, CliError>;

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_or_print(output: Option<&Path>, text: String) -> CliResult {
    match output {
        Some(path) => {
            atomic_write(path, text.as_bytes()).map_err(|e| CliError::io(path, e))?;
            Ok(Outcome {
                stdout: String::new(),
            })
        }
        None => Ok(Outcome { stdout: text }),
    }
}

fn resolve_schema(config: Option<&Path>) -> Result<Option<LabelSchema>, CliError> {
    match config {
        Some(path) => load_schema_file(path).map(Some).map_err(schema_error),
        None => {
            let default = Path::new(SCHEMA_FILE);
            if default.is_file() {
                load_schema_file(default).map(Some).map_err(schema_error)
            } else {
                Ok(None)
            }
        }
    }
}

fn require_schema(config: Option<&Path>) -> Result<LabelSchema, CliError> {
    resolve_schema(config)?.ok_or_else(|| {
        CliError::Usage("no label schema: pass --config or add schema.json here".into())
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads annotator files; each file's stem names its annotator.
fn annotator_copies(
    files: &[PathBuf],
    schema: &LabelSchema,
    options: ParseOptions,
) -> Result<Vec<(String, Dialogue)>, CliError> {
    let mut stems: Vec<String> = files.iter().map(|f| stem(f)).collect();
    for i in 0..stems.len() {
        if stems.iter().filter(|s| **s == stems[i]).count() > 1 {
            stems[i] = files[i].display().to_string();
        }
    }
    let mut copies = Vec::new();
    for (file, annotator) in files.iter().zip(stems) {
        let (c, _) = parse_with(&read(file)?, schema, options).map_err(|e| {
            let mut api = ApiError::from(e);
            api.message = format!("{}: {}", file.display(), api.message);
            CliError::Domain(api)
        })?;
        copies.extend(c.dialogues.into_iter().map(|d| (annotator.clone(), d)));
    }
    Ok(copies)
}

fn sessions(sets: Vec<AnnotationSet>, schema: &LabelSchema) -> Vec<ResolutionSession> {
    sets.into_iter()
        .map(|s| ResolutionSession::new(s, schema))
        .collect()
}

fn cmd_segment(cli: &Cli, input: &Path, output: Option<&Path>) -> CliResult {
    let text = read(input)?;
    let registry = match resolve_schema(cli.config.as_deref())? {
        Some(schema) => RecommenderRegistry::from_schema(&schema),
        None => RecommenderRegistry::default(),
    };
    let out = to_dialogues(&segment(&text), &stem(input), &registry);
    for f in &out.failures {
        eprintln!(
            "warning: {} turn {}: {} recommender failed: {}",
            f.dialogue_id, f.turn, f.failure.label, f.failure.error
        );
    }
    write_or_print(output, serialize(&out.collection))
}

fn cmd_validate(cli: &Cli, file: &Path) -> CliResult {
    let schema = require_schema(cli.config.as_deref())?;
    let options = ParseOptions {
        allow_unknown_labels: cli.allow_unknown_labels,
    };
    let (c, warnings) = parse_with(&read(file)?, &schema, options)?;
    for w in &warnings {
        eprintln!("warning: label `{}` not in schema at {}", w.label, w.path);
    }
    let turns: usize = c.dialogues.iter().map(|d| d.turns.len()).sum();
    Ok(Outcome {
        stdout: format!(
            "ok: {} dialogues, {} turns\n",
            c.dialogues.len(),
            turns
        ),
    })
}

fn cmd_stats(cli: &Cli, files: &[PathBuf]) -> CliResult {
    let schema = require_schema(cli.config.as_deref())?;
    let options = ParseOptions {
        allow_unknown_labels: cli.allow_unknown_labels,
    };
    let stdout = stats_report(annotator_copies(files, &schema, options)?, &schema)?;
    Ok(Outcome { stdout })
}

fn describe_tie(dialogue_id: &str, t: &VoteTally) -> String {
    let options: Vec<String> = t
        .options
        .iter()
        .map(|o| {
            let slot = o.slot.as_deref().map(|s| format!("{s}=")).unwrap_or_default();
            format!("{slot}{} ({})", o.value.to_json(), o.count)
        })
        .collect();
    format!(
        "tie: {dialogue_id} turn {} label `{}`: {}",
        t.turn_index,
        t.label,
        options.join(", ")
    )
}

fn cmd_resolve(
    cli: &Cli,
    files: &[PathBuf],
    majority: bool,
    break_ties: bool,
    output: Option<&Path>,
) -> CliResult {
    if !majority {
        return Err(CliError::Usage(
            "only batch majority resolution is supported; pass --majority".into(),
        ));
    }
    let schema = require_schema(cli.config.as_deref())?;
    let options = ParseOptions {
        allow_unknown_labels: cli.allow_unknown_labels,
    };
    let mut sessions = sessions(align(annotator_copies(files, &schema, options)?)?, &schema);
    let mut ties = Vec::new();
    for s in &mut sessions {
        let id = s.set().dialogue_id().to_string();
        ties.extend(
            s.accept_majority(&schema, break_ties)
                .iter()
                .map(|t| describe_tie(&id, t)),
        );
    }
    if !ties.is_empty() {
        let e = ApiError::new(
            409,
            "UnresolvedRemaining",
            format!(
                "{} tied items left unresolved; pass --break-ties to accept their defaults\n{}",
                ties.len(),
                ties.join("\n")
            ),
        );
        return Err(CliError::Domain(e));
    }
    let mut merged = DialogueCollection::new("merged");
    for s in &sessions {
        merged.dialogues.push(s.export()?);
    }
    write_or_print(output, serialize(&merged))
}

fn cmd_serve(
    cli: &Cli,
    workspace: &Path,
    host: &str,
    port: u16,
    static_dir: Option<PathBuf>,
) -> CliResult {
    let schema = match &cli.config {
        Some(path) => Some(load_schema_file(path).map_err(schema_error)?),
        None => None,
    };
    let (store, issues) = Store::open(workspace, schema).map_err(|e| CliError::Io(e.into()))?;
    for issue in &issues {
        eprintln!("warning: skipped {}: {}", issue.path.display(), issue.reason);
    }
    if store.schema().is_err() {
        eprintln!(
            "warning: {} has no usable {SCHEMA_FILE}; schema-dependent endpoints will fail",
            workspace.display()
        );
    }
    let state = AppState::new(Arc::new(store)).allow_unknown_labels(cli.allow_unknown_labels);
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Io(ApiError::new(500, "Io", e.to_string())))?;
    runtime
        .block_on(serve(
            state,
            ServeConfig {
                host: host.to_string(),
                port,
                static_dir,
            },
        ))
        .map_err(|e| CliError::Io(ApiError::new(500, "Io", e.to_string())))?;
    Ok(Outcome {
        stdout: String::new(),
    })
}

/// Runs a parsed command without touching the process's stdout or exit code.
pub fn execute(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Segment { input, output } => cmd_segment(cli, input, output.as_deref()),
        Command::Validate { file } => cmd_validate(cli, file),
        Command::Stats { files } => cmd_stats(cli, files),
        Command::Resolve {
            files,
            majority,
            break_ties,
            output,
        } => cmd_resolve(cli, files, *majority, *break_ties, output.as_deref()),
        Command::Serve {
            workspace,
            host,
            port,
            static_dir,
        } => cmd_serve(cli, workspace, host, *port, static_dir.clone()),
    }
}

/// Parses arguments, runs the command and reports the outcome.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.stdout.as_bytes());
            let _ = stdout.flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            let api = e.to_api_error();
            if cli.json_errors {
                eprintln!("{}", api.to_json());
            } else {
                eprintln!("error: {api}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
