//! Command-line front end: `symcheck <subcommand> [flags]`.
//!
//! Exit codes: 0 on success (and for `--help`/`--version`), 1 on a usage
//! error, 2 on a runtime failure.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::agent::{Actor, EpisodeTrace, Policy, PolicyKind};
use crate::classifier::{fit_svm, svm_accuracy, FeatureMode, SvmConfig};
use crate::datagen::{dataset_stats, generate_dataset, split_train_test, ConditionalProbabilityTable, Dataset, Goal, Split};
use crate::domain::{Ontology, SymptomStatus};
use crate::error::{Error, Result};
use crate::evaluation::{
    error_matrix, evaluate, export_transcript, match_rate, render_summaries, render_turns, render_workers, summaries_csv,
    worker_reports, ErrorMatrix, EvalReport, MatchCount, Summary, WorkerReport,
};
use crate::rng::{stream, Stream};
use crate::session::{DiagnosisSession, Prompt, SessionStatus};
use crate::trainer::{eval_subset, train, train_flat, TrainConfig};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SYMCHECK_OUT_DIR";
/// Environment variable holding the log filter (`info`, `debug`, ...).
pub const LOG_ENV: &str = "SYMCHECK_LOG";

#[derive(Debug, Parser)]
#[command(name = "symcheck", version, about = "Hierarchical reinforcement learning for symptom-checking dialogues")]
pub struct Cli {
    /// Threads for episode rollouts; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic dataset from a probability table.
    GenData(GenDataArgs),
    /// Print per-group statistics of a dataset.
    Stats(StatsArgs),
    /// Train the hierarchical policy (or the flat baseline).
    Train(TrainArgs),
    /// Evaluate checkpoints on a dataset.
    Eval(EvalArgs),
    /// Print one greedy dialogue as a transcript table.
    Transcript(TranscriptArgs),
    /// Render the tables of a saved evaluation.
    Report(ReportArgs),
    /// Answer the agent's questions on the terminal.
    Interact(InteractArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    /// Parameters with the best training-sample evaluation.
    Best,
    /// Parameters after the last epoch.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    /// Probability table (JSON); the bundled toy table when omitted.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub per_disease: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset file to write (newline-delimited JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Share of each disease's goals labelled `train`.
    #[arg(long, default_value_t = 0.8)]
    pub train_ratio: f64,
    /// Ontology file to write; defaults to `<out>.ontology.json`.
    #[arg(long)]
    pub ontology: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Emit JSON instead of the text table.
    #[arg(long)]
    pub json: bool,
    /// Also write `stats.json` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ontology: PathBuf,
    /// Training configuration (JSON); defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: PathBuf,
    /// Train the flat single-level baseline.
    #[arg(long)]
    pub flat: bool,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent runs on consecutive seeds, written to `seed_<s>/`.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// Overrides the configuration's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Checkpoint, training output or multi-seed output directory; repeatable.
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Number of seeded runs to take from each multi-seed directory.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long, value_enum, default_value_t = Which::Best)]
    pub which: Which,
    /// Goals to evaluate on; `test` falls back to all goals when unsplit.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Evaluate on the checkpoint seed's fixed sample of this size.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Never ask about a symptom whose status is already known.
    #[arg(long)]
    pub mask_known: bool,
    /// Add the SVM-ex and SVM-ex&im baselines (needs a split dataset).
    #[arg(long)]
    pub svm: bool,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TranscriptArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Which::Best)]
    pub which: Which,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Position of the goal within the selected split.
    #[arg(long, conflicts_with = "disease")]
    pub index: Option<usize>,
    /// First goal of this disease.
    #[arg(long)]
    pub disease: Option<String>,
    #[arg(long)]
    pub mask_known: bool,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// `eval.json` written by `eval`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct InteractArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Which::Best)]
    pub which: Which,
    /// Self-reported symptom, `name` or `name=true|false|unk`; repeatable.
    #[arg(long = "symptom")]
    pub symptoms: Vec<String>,
    #[arg(long)]
    pub mask_known: bool,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
}

/// Everything `eval` measured, as written to `eval.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDocument {
    pub summaries: Vec<Summary>,
    pub workers: Vec<ModelWorkers>,
    pub match_rates: Vec<ModelMatch>,
    pub error_matrices: Vec<ModelErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWorkers {
    pub model: String,
    pub rows: Vec<WorkerReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMatch {
    pub model: String,
    pub hits: usize,
    pub requests: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelErrors {
    pub model: String,
    pub matrix: ErrorMatrix,
}

/// Installs the line-delimited JSON logger on stderr.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "info");
    let _ = env_logger::Builder::from_env(env)
        .format(|buf, record| {
            let ts = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0);
            let event = serde_json::json!({
                "ts": ts,
                "level": record.level().as_str(),
                "target": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{event}")
        })
        .try_init();
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match dispatch(cli, input, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let jobs = cli.jobs;
    if jobs == Some(0) {
        return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::GenData(a) => gen_data(&a, out),
        Command::Stats(a) => stats(&a, out),
        Command::Train(a) => train_cmd(&a, jobs, out),
        Command::Eval(a) => eval_cmd(&a, jobs.unwrap_or(1), out),
        Command::Transcript(a) => transcript_cmd(&a, out),
        Command::Report(a) => report_cmd(&a, out),
        Command::Interact(a) => interact_cmd(&a, input, out),
    }
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")))
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory")))
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    write_text(path, &(text + "\n"))
}

/// Logs the effective configuration and stores it as
/// `<dir>/<command>.config.json`.
fn log_config<T: Serialize>(dir: Option<&Path>, command: &str, config: &T) -> Result<()> {
    let value = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    info!(target: "config", "{value}");
    if let Some(dir) = dir {
        write_json(&dir.join(format!("{command}.config.json")), &value)?;
    }
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn gen_data(a: &GenDataArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(t) = &a.table {
        require_file(t)?;
    }
    let dir = parent_dir(&a.out);
    require_dir(&dir)?;
    let onto_path = a.ontology.clone().unwrap_or_else(|| a.out.with_extension("ontology.json"));
    if let Some(t) = &a.table {
        if same_file(t, &a.out) || same_file(t, &onto_path) {
            return Err(Error::InvalidConfig("outputs would overwrite the table file".into()));
        }
    }
    if !(a.train_ratio > 0.0 && a.train_ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("--train-ratio {} must lie in (0, 1)", a.train_ratio)));
    }
    log_config(Some(&dir), "gen-data", a)?;
    let cpt = match &a.table {
        Some(t) => ConditionalProbabilityTable::load(t)?,
        None => ConditionalProbabilityTable::toy(),
    };
    let data = generate_dataset(&cpt, a.per_disease, a.seed)?;
    let data = split_train_test(&data, a.train_ratio, &mut stream(a.seed, Stream::Split, 0))?;
    data.save(&a.out)?;
    cpt.ontology().save(&onto_path)?;
    info!(target: "gen-data", "wrote {} goals to {}", data.len(), a.out.display());
    say(out, &dataset_stats(&data).render())
}

fn stats(a: &StatsArgs, out: &mut dyn Write) -> Result<()> {
    require_file(&a.data)?;
    if let Some(d) = &a.out {
        require_dir(d)?;
    }
    log_config(a.out.as_deref(), "stats", a)?;
    let data = Dataset::load(&a.data)?;
    let s = dataset_stats(&data);
    if let Some(d) = &a.out {
        write_json(&d.join("stats.json"), &s)?;
    }
    if a.json {
        let text = serde_json::to_string_pretty(&s).map_err(|e| Error::json("<stdout>", e))?;
        say(out, &(text + "\n"))
    } else {
        say(out, &s.render())
    }
}

fn select_goals(data: &Dataset, split: SplitArg, onto: &Ontology) -> Result<Vec<Goal>> {
    let part = match (split, data.split.is_some()) {
        (SplitArg::Train, true) => data.part(Split::Train),
        (SplitArg::Test, true) => data.part(Split::Test),
        (SplitArg::Train, false) => return Err(Error::InvalidConfig("the dataset has no train/test labels".into())),
        _ => data.goals.iter().collect(),
    };
    if part.is_empty() {
        return Err(Error::EmptyGoalSource);
    }
    Goal::resolve_all(part, onto)
}

#[derive(Serialize)]
struct EffectiveTrain<'a> {
    data: &'a Path,
    ontology: &'a Path,
    flat: bool,
    seeds: Vec<u64>,
    train: &'a TrainConfig,
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    best_epoch: Option<usize>,
    best_success: f64,
    final_success: Option<f64>,
}

fn train_cmd(a: &TrainArgs, jobs: Option<usize>, out: &mut dyn Write) -> Result<()> {
    require_file(&a.data)?;
    require_file(&a.ontology)?;
    if let Some(c) = &a.config {
        require_file(c)?;
    }
    if a.seeds == 0 {
        return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
    }
    let mut config = match &a.config {
        Some(c) => TrainConfig::load(c)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(j) = jobs {
        config.jobs = j;
    }
    config.checkpoint_dir = None;
    config.validate()?;
    ensure_dir(&a.out)?;
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|k| config.seed + k).collect();
    log_config(
        Some(&a.out),
        "train",
        &EffectiveTrain { data: &a.data, ontology: &a.ontology, flat: a.flat, seeds: seeds.clone(), train: &config },
    )?;
    let onto = Ontology::load(&a.ontology)?;
    let data = Dataset::load(&a.data)?;
    let goals = select_goals(&data, if data.split.is_some() { SplitArg::Train } else { SplitArg::All }, &onto)?;
    let mut summaries = Vec::new();
    for &seed in &seeds {
        let dir = if seeds.len() == 1 { a.out.clone() } else { a.out.join(format!("seed_{seed}")) };
        ensure_dir(&dir)?;
        let run = TrainConfig { seed, checkpoint_dir: Some(dir.clone()), ..config.clone() };
        let outcome = if a.flat { train_flat(&run, &onto, &goals)? } else { train(&run, &onto, &goals)? };
        let summary = TrainSummary {
            seed,
            best_epoch: outcome.best_epoch,
            best_success: outcome.best_success,
            final_success: outcome.curves.last().map(|c| c.success),
        };
        say(
            out,
            &format!(
                "seed {seed}: best epoch {} success {:.4}, final success {:.4} -> {}\n",
                summary.best_epoch.map(|e| e.to_string()).unwrap_or_else(|| "-".into()),
                summary.best_success,
                summary.final_success.unwrap_or(f64::NAN),
                dir.display()
            ),
        )?;
        summaries.push(summary);
    }
    write_json(&a.out.join("train_summary.json"), &summaries)
}

fn subdir(which: Which) -> &'static str {
    match which {
        Which::Best => "best",
        Which::Final => "checkpoint",
    }
}

/// Expands a path into checkpoint directories: a checkpoint itself, a
/// training output holding `best/` and `checkpoint/`, or a multi-seed
/// output holding `seed_<s>/` runs.
pub fn resolve_checkpoints(path: &Path, which: Which, seeds: Option<usize>) -> Result<Vec<PathBuf>> {
    require_dir(path)?;
    let found = if path.join("meta.json").is_file() {
        vec![path.to_path_buf()]
    } else if path.join(subdir(which)).join("meta.json").is_file() {
        vec![path.join(subdir(which))]
    } else {
        let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
        let mut runs: Vec<(u64, PathBuf)> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(path, e))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if let Some(seed) = name.strip_prefix("seed_").and_then(|s| s.parse::<u64>().ok()) {
                let dir = entry.path().join(subdir(which));
                if dir.join("meta.json").is_file() {
                    runs.push((seed, dir));
                }
            }
        }
        runs.sort();
        runs.into_iter().map(|(_, d)| d).collect()
    };
    if found.is_empty() {
        return Err(Error::Checkpoint { path: path.to_path_buf(), reason: "no checkpoint found".into() });
    }
    match seeds {
        Some(n) if n > found.len() => Err(Error::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("{n} seeded runs requested, {} found", found.len()),
        }),
        Some(n) => Ok(found.into_iter().take(n).collect()),
        None => Ok(found),
    }
}

fn model_label(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::Hierarchical => "HRL",
        PolicyKind::Flat => "Flat-DQN",
    }
}

struct ModelRuns {
    reports: Vec<EvalReport>,
    traces: Vec<EpisodeTrace>,
    ontology: Ontology,
}

fn eval_cmd(a: &EvalArgs, jobs: usize, out: &mut dyn Write) -> Result<()> {
    require_file(&a.data)?;
    let mut dirs = Vec::new();
    for c in &a.checkpoint {
        dirs.extend(resolve_checkpoints(c, a.which, a.seeds)?);
    }
    ensure_dir(&a.out)?;
    log_config(Some(&a.out), "eval", a)?;
    let data = Dataset::load(&a.data)?;
    let mut models: BTreeMap<PolicyKind, ModelRuns> = BTreeMap::new();
    let mut seeds = Vec::new();
    for dir in &dirs {
        let (policy, meta) = Policy::load(dir)?;
        let onto = policy.ontology().clone();
        let mut goals = select_goals(&data, a.split, &onto)?;
        if let Some(n) = a.sample {
            goals = eval_subset(&goals, n, meta.seed);
        }
        let (report, traces) = evaluate(&policy, &goals, &meta.episode, a.mask_known, jobs)?;
        info!(target: "eval", "{}: success {:.4} over {} goals", dir.display(), report.success_rate, report.episodes);
        seeds.push(meta.seed);
        let entry = models.entry(policy.kind()).or_insert_with(|| ModelRuns { reports: Vec::new(), traces: Vec::new(), ontology: onto });
        entry.reports.push(report);
        entry.traces.extend(traces);
    }
    let mut doc = EvalDocument { summaries: Vec::new(), workers: Vec::new(), match_rates: Vec::new(), error_matrices: Vec::new() };
    for (kind, runs) in &models {
        let label = model_label(*kind);
        doc.summaries.push(Summary::new(label, runs.reports.clone()));
        if *kind == PolicyKind::Hierarchical {
            doc.workers.push(ModelWorkers { model: label.into(), rows: worker_reports(&runs.traces, &runs.ontology) });
        }
        let MatchCount { hits, requests } = match_rate(&runs.traces);
        doc.match_rates.push(ModelMatch { model: label.into(), hits, requests, rate: MatchCount { hits, requests }.rate() });
        let matrix = error_matrix(&runs.traces, &runs.ontology);
        write_text(&a.out.join(format!("error_matrix_{}.csv", label.to_lowercase())), &matrix.to_csv())?;
        doc.error_matrices.push(ModelErrors { model: label.into(), matrix });
    }
    if a.svm {
        let onto = models.values().next().map(|m| m.ontology.clone()).expect("at least one checkpoint");
        let train_goals = select_goals(&data, SplitArg::Train, &onto)?;
        let test_goals = select_goals(&data, a.split, &onto)?;
        let (ns, nd) = (onto.num_symptoms(), onto.num_diseases());
        for mode in [FeatureMode::Ex, FeatureMode::ExIm] {
            let mut reports = Vec::new();
            for &seed in &seeds {
                let svm = fit_svm(&train_goals, ns, nd, mode, &SvmConfig::default(), &mut stream(seed, Stream::Svm, 0))?;
                let acc = svm_accuracy(&svm, &test_goals, ns, mode)?;
                reports.push(EvalReport::classification((acc * test_goals.len() as f64).round() as usize, test_goals.len()));
            }
            doc.summaries.push(Summary::new(mode.label(), reports));
        }
    }
    write_json(&a.out.join("eval.json"), &doc)?;
    write_text(&a.out.join("eval.csv"), &summaries_csv(&doc.summaries))?;
    say(out, &render_document(&doc))
}

/// Text tables of an evaluation: overall metrics, per-worker metrics and
/// the group error matrices.
pub fn render_document(doc: &EvalDocument) -> String {
    let mut text = render_summaries(&doc.summaries);
    for m in &doc.match_rates {
        text.push_str(&format!("\n{} match rate: {:.2}% ({} of {} requests)\n", m.model, 100.0 * m.rate, m.hits, m.requests));
    }
    for w in &doc.workers {
        text.push_str(&format!("\n{} workers\n", w.model));
        text.push_str(&render_workers(&w.rows));
    }
    for e in &doc.error_matrices {
        text.push_str(&format!("\n{} wrong diagnoses by true group (rows) and predicted group (columns)\n", e.model));
        text.push_str(&e.matrix.render());
    }
    text
}

fn transcript_cmd(a: &TranscriptArgs, out: &mut dyn Write) -> Result<()> {
    require_file(&a.data)?;
    let dir = resolve_checkpoints(&a.checkpoint, a.which, None)?.remove(0);
    ensure_dir(&a.out)?;
    log_config(Some(&a.out), "transcript", a)?;
    let (policy, meta) = Policy::load(&dir)?;
    let onto = policy.ontology();
    let goals = select_goals(&Dataset::load(&a.data)?, a.split, onto)?;
    let goal = match (&a.index, &a.disease) {
        (Some(i), _) => goals.get(*i).ok_or(Error::IndexOutOfRange { index: *i, len: goals.len() })?,
        (None, Some(name)) => {
            let d = onto.disease_id(name)?;
            goals.iter().find(|g| g.disease == d).ok_or(Error::EmptyGoalSource)?
        }
        (None, None) => &goals[0],
    };
    let trace = policy.run_greedy(goal, &meta.episode, a.mask_known)?;
    let mut text = format!(
        "Disease: {} ({})\nSelf-report: {}\nOutcome: {:?}\n",
        onto.disease_name(goal.disease),
        onto.group_name(goal.group),
        goal.explicit.iter().map(|(s, v)| format!("{}={}", onto.symptom_name(*s), v.label())).collect::<Vec<_>>().join(", "),
        trace.status,
    );
    text.push_str(&export_transcript(&trace, onto)?);
    write_text(&a.out.join("transcript.txt"), &text)?;
    say(out, &text)
}

fn report_cmd(a: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    require_file(&a.input)?;
    if let Some(d) = &a.out {
        require_dir(d)?;
    }
    log_config(a.out.as_deref(), "report", a)?;
    let text = std::fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let doc: EvalDocument = serde_json::from_str(&text).map_err(|e| Error::json(&a.input, e))?;
    let rendered = render_document(&doc);
    if let Some(d) = &a.out {
        write_text(&d.join("report.txt"), &rendered)?;
    }
    say(out, &rendered)
}

fn parse_self_report(items: &[String], onto: &Ontology) -> Result<Vec<(crate::domain::SymptomId, SymptomStatus)>> {
    items
        .iter()
        .map(|item| {
            let (name, label) = item.split_once('=').unwrap_or((item.as_str(), "true"));
            let id = onto.symptom_id(name.trim())?;
            let status = SymptomStatus::from_label(label.trim())
                .ok_or_else(|| Error::InvalidConfig(format!("bad symptom status `{label}`")))?;
            Ok((id, status))
        })
        .collect()
}

#[derive(Serialize)]
struct SessionRecord<'a> {
    status: SessionStatus,
    diagnosis: Option<&'a str>,
    turns: &'a [crate::agent::TurnRecord],
}

fn interact_cmd(a: &InteractArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let dir = resolve_checkpoints(&a.checkpoint, a.which, None)?.remove(0);
    ensure_dir(&a.out)?;
    log_config(Some(&a.out), "interact", a)?;
    let (policy, meta) = Policy::load(&dir)?;
    let policy = Arc::new(policy);
    let onto = policy.ontology().clone();
    let explicit = parse_self_report(&a.symptoms, &onto)?;
    let mut session = DiagnosisSession::new(Arc::clone(&policy), &explicit, meta.episode, a.mask_known)?;
    say(out, "Answer y (yes), n (no), u (not sure) or q (quit).\n")?;
    'dialogue: loop {
        match session.next_prompt()? {
            Prompt::Ask { symptom, actor } => loop {
                let who = match actor {
                    Actor::Worker(g) => format!("[{}] ", onto.group_name(g)),
                    _ => String::new(),
                };
                say(out, &format!("Turn {}: {who}Do you have {}? [y/n/u/q] ", session.turn() + 1, onto.symptom_name(symptom)))?;
                out.flush().map_err(|e| Error::io("<stdout>", e))?;
                let mut line = String::new();
                if input.read_line(&mut line).map_err(|e| Error::io("<stdin>", e))? == 0 {
                    say(out, "\n")?;
                    session.abort();
                    break 'dialogue;
                }
                let status = match line.trim().to_ascii_lowercase().as_str() {
                    "y" | "yes" => SymptomStatus::True,
                    "n" | "no" => SymptomStatus::False,
                    "u" | "unknown" | "not sure" => SymptomStatus::Unknown,
                    "q" | "quit" => {
                        session.abort();
                        break 'dialogue;
                    }
                    _ => {
                        say(out, "Please answer y, n, u or q.\n")?;
                        continue;
                    }
                };
                session.answer(status)?;
                break;
            },
            Prompt::Diagnosis { disease, actor, top } => {
                say(out, &format!("Diagnosis: {}\n", onto.disease_name(disease)))?;
                let scale = if actor == Actor::Classifier { "probability" } else { "Q-value" };
                say(out, &format!("Top candidates ({scale}):\n"))?;
                for (d, p) in top {
                    say(out, &format!("  {:<30} {p:.3}\n", onto.disease_name(d)))?;
                }
                break;
            }
            Prompt::Ended(_) => break,
        }
    }
    match session.status() {
        SessionStatus::MaxTurnsReached => say(
            out,
            &format!("Maximum number of turns ({}) reached without a diagnosis.\n", meta.episode.max_turns),
        )?,
        SessionStatus::RepeatedAction => say(out, "The agent repeated a question; the dialogue ended without a diagnosis.\n")?,
        SessionStatus::Aborted => say(out, "Session aborted.\n")?,
        SessionStatus::Diagnosed | SessionStatus::Ongoing => {}
    }
    let table = if session.turns().is_empty() {
        "(no turns)\n".to_string()
    } else {
        render_turns(session.turns(), &onto)?
    };
    write_text(&a.out.join("interact_transcript.txt"), &table)?;
    write_json(
        &a.out.join("interact_session.json"),
        &SessionRecord {
            status: session.status(),
            diagnosis: session.diagnosis().map(|d| onto.disease_name(d)),
            turns: session.turns(),
        },
    )?;
    say(out, &format!("Transcript saved to {}\n", a.out.join("interact_transcript.txt").display()))
}
