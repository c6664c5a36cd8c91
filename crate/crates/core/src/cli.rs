//! Batch commands over one run configuration.
//!
//! Every command reads a TOML [`RunConfig`], applies flag overrides, and
//! writes into `<out>/seed<seed>-<fingerprint>/`, starting with an echo of the
//! merged config. Exit codes: 0 success, 1 usage, 2 data or format, 3
//! training failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::synthetic::{GeneratedSuite, SuiteConfig};
use crate::data::{TaskConfig, TaskDataset};
use crate::error::{Error, Result};
use crate::frozen_model::{pretrain, FrozenModel, PretrainConfig};
use crate::numerics::RngStream;
use crate::pipeline::{save_assembly, save_task_prompt, EvalReport, Metric, Pipeline, PipelineConfig, RunTag, StageTrace, TaskBundle};
use crate::verbalizer::VerbalizerConfig;

/// Everything that determines a run. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub checkpoint: PathBuf,
    /// Synthetic suite used by `pretrain` for the world and the task data.
    pub suite: Option<PathBuf>,
    /// Where `pretrain` writes the suite's task data and configs.
    pub data_dir: Option<PathBuf>,
    pub tasks: Vec<PathBuf>,
    /// Label words and synonym groups; derived from `suite` when absent.
    pub verbalizers: Option<PathBuf>,
    pub out: PathBuf,
    /// Per-task metric overrides.
    pub metrics: BTreeMap<String, Metric>,
    pub pretrain: PretrainConfig,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            checkpoint: PathBuf::from("model.ckpt"),
            suite: None,
            data_dir: None,
            tasks: Vec::new(),
            verbalizers: None,
            out: PathBuf::from("runs"),
            metrics: BTreeMap::new(),
            pretrain: PretrainConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the config with output location and worker count removed,
    /// which do not affect results.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.pipeline.workers = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out.join(format!("seed{}-{}", self.seed, &self.fingerprint()[..12]))
    }

    pub fn tag(&self) -> RunTag {
        RunTag {
            seed: self.seed,
            fingerprint: self.fingerprint(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.checkpoint);
        fix(&mut self.out);
        for p in self.tasks.iter_mut() {
            fix(p);
        }
        for p in [&mut self.suite, &mut self.data_dir, &mut self.verbalizers].into_iter().flatten() {
            fix(p);
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ctpt", version, about = "Cross-task prompt tuning over a frozen masked language model")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Root directory for run outputs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Threads used to score candidates.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Tspt,
    Ctpt,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus, pretrain, freeze and save the model.
    Pretrain,
    /// Write the k-shot train and dev splits of every task.
    Sample {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Train task prompts or the cross-task stage and report test scores.
    Train {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Restrict to these tasks (comma separated).
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
        /// Print learnable parameter counts and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Score saved prompts on the test splits.
    Eval {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
    },
    /// Zero-shot transfer from source prompts to an unseen target.
    Transfer {
        #[arg(long)]
        target: String,
        #[arg(long, value_delimiter = ',', required = true)]
        sources: Vec<String>,
    },
    /// Cross-task score averaged over every source subset of each size.
    Ablate {
        #[arg(long)]
        target: String,
        #[arg(long, value_delimiter = ',', required = true)]
        sources: Vec<String>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) | Error::Config(_) => 1,
        Error::Format(_) | Error::Ingestion { .. } | Error::Sampling(_) | Error::Io { .. } => 2,
        Error::Training(_) | Error::Protocol(_) | Error::Frozen(_) | Error::Shape { .. } => 3,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Loads the config named by `--config` and applies flag overrides.
pub fn load_config(global: &GlobalArgs) -> Result<RunConfig> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| Error::Argument("--config is required".into()))?;
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(w) = global.workers {
        cfg.pipeline.workers = Some(w);
    }
    cfg.resolve(path.parent().unwrap_or(Path::new(".")));
    if let Some(o) = &global.out {
        cfg.out = o.clone();
    }
    cfg.pipeline.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::Pretrain => cmd_pretrain(&cfg),
        Command::Sample { k } => {
            if let Some(k) = *k {
                if k == 0 {
                    return Err(Error::Argument("--k must be at least 1".into()));
                }
                cfg.pipeline.k_shot = k;
            }
            cmd_sample(&cfg)
        }
        Command::Train { mode, tasks, dry_run } => {
            if *dry_run {
                print!("{}", dry_run_report(&cfg, *mode));
                return Ok(());
            }
            cmd_train(&cfg, *mode, tasks)
        }
        Command::Eval { mode, tasks } => cmd_eval(&cfg, *mode, tasks),
        Command::Transfer { target, sources } => cmd_transfer(&cfg, target, sources),
        Command::Ablate { target, sources } => cmd_ablate(&cfg, target, sources),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Creates the run directory and echoes the merged config into it.
fn open_run(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.run_dir();
    create_dir(&dir)?;
    let mut text = format!("# seed {} fingerprint {}\n", cfg.seed, cfg.fingerprint());
    text.push_str(&toml::to_string(cfg).map_err(|e| Error::Config(format!("cannot echo config: {e}")))?);
    write_file(&dir.join("config.toml"), &text)?;
    Ok(dir)
}

fn append_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    for r in rows {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceLine<'a> {
    seed: u64,
    fingerprint: &'a str,
    #[serde(flatten)]
    trace: &'a StageTrace,
}

fn write_trace(dir: &Path, name: &str, tag: &RunTag, trace: &[StageTrace]) -> Result<()> {
    let tdir = dir.join("traces");
    create_dir(&tdir)?;
    let path = tdir.join(format!("{name}.jsonl"));
    let _ = fs::remove_file(&path);
    let rows: Vec<TraceLine<'_>> = trace
        .iter()
        .map(|t| TraceLine {
            seed: tag.seed,
            fingerprint: &tag.fingerprint,
            trace: t,
        })
        .collect();
    append_jsonl(&path, &rows)
}

/// Human-readable table with per-label scores.
pub fn report_table(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(
            s,
            "{:<14} {:<10} {:<22} {:>7.4}  (n={}, seed {}, config {})",
            r.task_id,
            r.method,
            r.metric.name(),
            r.score,
            r.examples,
            r.seed,
            &r.fingerprint[..r.fingerprint.len().min(12)]
        );
        for l in &r.per_label {
            let _ = writeln!(
                s,
                "    {:<14} P {:.3}  R {:.3}  F1 {:.3}  support {}",
                l.label, l.precision, l.recall, l.f1, l.support
            );
        }
    }
    s
}

fn emit_reports(dir: &Path, name: &str, reports: &[EvalReport]) -> Result<()> {
    append_jsonl(&dir.join("reports.jsonl"), reports)?;
    let table = report_table(reports);
    write_file(&dir.join(format!("{name}.txt")), &table)?;
    print!("{table}");
    Ok(())
}

fn load_suite(cfg: &RunConfig) -> Result<SuiteConfig> {
    let path = cfg
        .suite
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs `suite` in the run config".into()))?;
    SuiteConfig::from_file(path)
}

/// Pretrains the frozen model on the suite's world, exactly as `pretrain` does.
pub fn pretrain_on_suite(seed: u64, suite_cfg: &SuiteConfig, suite: &GeneratedSuite, cfg: &PretrainConfig) -> Result<FrozenModel> {
    let root = RngStream::new(seed);
    let corpus = suite.world.pretraining_corpus(&suite_cfg.world.corpus, &mut root.derive("corpus"));
    log::info!(
        "pretraining on {} sequences, vocabulary {}",
        corpus.len(),
        suite.world.vocab().len()
    );
    pretrain(suite.world.vocab().clone(), &corpus, cfg, &mut root.derive("pretrain"))
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<()> {
    let suite_cfg = load_suite(cfg)?;
    let suite = GeneratedSuite::generate(&suite_cfg)?;
    let mut model = pretrain_on_suite(cfg.seed, &suite_cfg, &suite, &cfg.pretrain)?;
    model.set_provenance(serde_json::json!({ "seed": cfg.seed, "fingerprint": cfg.fingerprint() }));
    if let Some(parent) = cfg.checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    model.save(&cfg.checkpoint)?;
    println!("checkpoint {} sha256 {}", cfg.checkpoint.display(), model.checksum());
    if let Some(dir) = &cfg.data_dir {
        let written = suite.write(&suite_cfg, dir)?;
        let verbs = toml::to_string(&suite_cfg.verbalizer_config()).map_err(|e| Error::Config(format!("cannot write verbalizers: {e}")))?;
        write_file(&dir.join("verbalizers.toml"), &verbs)?;
        println!("wrote {} tasks to {}", written.len(), dir.display());
    }
    Ok(())
}

/// The tasks of a run, loaded and checked against the verbalizer config.
pub struct Workspace {
    pub model: FrozenModel,
    pub verbalizers: VerbalizerConfig,
    pub tasks: Vec<(TaskConfig, TaskDataset)>,
}

impl Workspace {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let model = FrozenModel::load(&cfg.checkpoint)?;
        let verbalizers = match &cfg.verbalizers {
            Some(p) => VerbalizerConfig::from_file(p)?,
            None => load_suite(cfg)?.verbalizer_config(),
        };
        if cfg.tasks.is_empty() {
            return Err(Error::Config("the run config lists no tasks".into()));
        }
        let tasks = cfg
            .tasks
            .iter()
            .map(|p| {
                let mut tc = TaskConfig::from_file(p)?;
                if let Some(m) = cfg.metrics.get(&tc.id) {
                    tc.metric = *m;
                }
                let ds = TaskDataset::load(&tc)?;
                Ok((tc, ds))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, verbalizers, tasks })
    }

    pub fn ids(&self) -> Vec<&str> {
        self.tasks.iter().map(|(t, _)| t.id.as_str()).collect()
    }

    pub fn pipeline(&self, cfg: &RunConfig) -> Result<Pipeline<'_>> {
        let union = if cfg.pipeline.emotional_knowledge {
            Some(self.verbalizers.union_for(&self.ids(), self.model.vocab())?)
        } else {
            None
        };
        Ok(Pipeline::new(&self.model, cfg.pipeline.clone(), union)?.with_tag(cfg.tag()))
    }

    pub fn bundle(&self, pipe: &Pipeline<'_>, id: &str, root: &RngStream) -> Result<TaskBundle> {
        let (tc, ds) = self
            .tasks
            .iter()
            .find(|(t, _)| t.id == id)
            .ok_or_else(|| Error::Argument(format!("unknown task {id}; configured: {}", self.ids().join(", "))))?;
        let verb = self.verbalizers.task_verbalizer(id, self.model.vocab())?;
        pipe.bundle(ds.clone(), verb, tc.metric, root)
    }
}

fn select<'a>(ws: &'a Workspace, requested: &'a [String]) -> Result<Vec<&'a str>> {
    if requested.is_empty() {
        return Ok(ws.ids());
    }
    let known = ws.ids();
    for r in requested {
        if !known.contains(&r.as_str()) {
            return Err(Error::Argument(format!("unknown task {r}; configured: {}", known.join(", "))));
        }
    }
    Ok(requested.iter().map(String::as_str).collect())
}

pub fn cmd_sample(cfg: &RunConfig) -> Result<()> {
    let ws = Workspace::load(cfg)?;
    let pipe = ws.pipeline(cfg)?;
    let dir = open_run(cfg)?.join("fewshot");
    create_dir(&dir)?;
    let root = RngStream::new(cfg.seed);
    for id in ws.ids() {
        let b = ws.bundle(&pipe, id, &root)?;
        for (split, rows) in [("train", &b.split.train), ("dev", &b.split.dev)] {
            let path = dir.join(format!("{id}.{split}.jsonl"));
            let _ = fs::remove_file(&path);
            append_jsonl(&path, rows)?;
        }
        println!("{id}: {} train, {} dev examples", b.split.train.len(), b.split.dev.len());
    }
    Ok(())
}

fn prompt_path(dir: &Path, id: &str, ext: &str) -> PathBuf {
    dir.join("prompts").join(format!("{id}.{ext}"))
}

/// Bundles for `ids` with their saved task prompts; lists every missing one.
fn load_trained(ws: &Workspace, pipe: &Pipeline<'_>, dir: &Path, ids: &[&str], root: &RngStream) -> Result<Vec<TaskBundle>> {
    let missing: Vec<&str> = ids.iter().copied().filter(|id| !prompt_path(dir, id, "prompt").exists()).collect();
    if !missing.is_empty() {
        return Err(Error::Training(format!(
            "no trained task prompt for: {} (run `train --mode tspt` first)",
            missing.join(", ")
        )));
    }
    ids.iter()
        .map(|id| {
            let mut b = ws.bundle(pipe, id, root)?;
            pipe.load_task_prompt(&mut b, &prompt_path(dir, id, "prompt"))?;
            Ok(b)
        })
        .collect()
}

pub fn dry_run_report(cfg: &RunConfig, mode: Mode) -> String {
    let p = &cfg.pipeline.prompt;
    let d = cfg.pretrain.model.d_model;
    match mode {
        Mode::Tspt => format!(
            "tspt learnables per task: {} (prompt {}x{} = {} coordinates)\n",
            p.prompt_dim,
            p.tokens,
            d,
            p.tokens * d
        ),
        Mode::Ctpt => format!(
            "ctpt learnables per task: {} (attention {} -> {} coordinates, gate {} -> {})\n",
            p.ctpt_learnables(),
            p.attention_dim,
            3 * d * d,
            p.gate_dim(),
            p.tokens
        ),
    }
}

pub fn cmd_train(cfg: &RunConfig, mode: Mode, tasks: &[String]) -> Result<()> {
    let ws = Workspace::load(cfg)?;
    let pipe = ws.pipeline(cfg)?;
    let dir = open_run(cfg)?;
    create_dir(&dir.join("prompts"))?;
    let root = RngStream::new(cfg.seed);
    let tag = cfg.tag();
    let ids = select(&ws, tasks)?;
    let checksum = ws.model.checksum();
    let mut reports = Vec::new();
    match mode {
        Mode::Tspt => {
            for id in ids {
                let mut b = ws.bundle(&pipe, id, &root)?;
                let out = pipe.train_tspt(&mut b, &root)?;
                write_trace(&dir, &format!("tspt-{id}"), &tag, &out.trace)?;
                save_task_prompt(&b, &tag, &prompt_path(&dir, id, "prompt"))?;
                reports.push(pipe.evaluate_tspt(&b)?.report);
            }
        }
        Mode::Ctpt => {
            let all = ws.ids();
            let bundles = load_trained(&ws, &pipe, &dir, &all, &root)?;
            for id in ids {
                let target = bundles.iter().find(|b| b.id() == id).expect("selected task is loaded");
                let sources: Vec<&TaskBundle> = bundles.iter().filter(|b| b.id() != id).collect();
                let (asm, trace) = pipe.train_ctpt(target, &sources, &root)?;
                write_trace(&dir, &format!("ctpt-{id}"), &tag, &trace)?;
                save_assembly(&asm, &tag, &prompt_path(&dir, id, "ctpt"))?;
                reports.push(pipe.evaluate_ctpt(&asm, target, &sources)?.report);
            }
        }
    }
    if ws.model.checksum() != checksum {
        return Err(Error::Training("frozen model changed during training".into()));
    }
    emit_reports(&dir, &format!("train-{}", mode_name(mode)), &reports)
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Tspt => "tspt",
        Mode::Ctpt => "ctpt",
    }
}

pub fn cmd_eval(cfg: &RunConfig, mode: Mode, tasks: &[String]) -> Result<()> {
    let ws = Workspace::load(cfg)?;
    let pipe = ws.pipeline(cfg)?;
    let dir = open_run(cfg)?;
    let root = RngStream::new(cfg.seed);
    let ids = select(&ws, tasks)?;
    let mut reports = Vec::new();
    match mode {
        Mode::Tspt => {
            for b in load_trained(&ws, &pipe, &dir, &ids, &root)? {
                reports.push(pipe.evaluate_tspt(&b)?.report);
            }
        }
        Mode::Ctpt => {
            let bundles = load_trained(&ws, &pipe, &dir, &ws.ids(), &root)?;
            for id in ids {
                let path = prompt_path(&dir, id, "ctpt");
                if !path.exists() {
                    return Err(Error::Training(format!(
                        "no cross-task stage saved for {id} (run `train --mode ctpt`)"
                    )));
                }
                let asm = pipe.load_assembly(&path, &root)?;
                let target = bundles.iter().find(|b| b.id() == id).expect("selected task is loaded");
                let sources: Vec<&TaskBundle> = asm
                    .sources
                    .iter()
                    .map(|s| {
                        bundles
                            .iter()
                            .find(|b| b.id() == s)
                            .ok_or_else(|| Error::Format(format!("assembly refers to unknown source {s}")))
                    })
                    .collect::<Result<_>>()?;
                reports.push(pipe.evaluate_ctpt(&asm, target, &sources)?.report);
            }
        }
    }
    emit_reports(&dir, &format!("eval-{}", mode_name(mode)), &reports)
}

fn check_sources<'a>(target: &str, sources: &'a [String]) -> Result<Vec<&'a str>> {
    if sources.iter().any(|s| s == target) {
        return Err(Error::Argument(format!("target {target} appears in the source list")));
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in sources {
        if !seen.insert(s) {
            return Err(Error::Argument(format!("source {s} listed twice")));
        }
    }
    Ok(sources.iter().map(String::as_str).collect())
}

pub fn cmd_transfer(cfg: &RunConfig, target: &str, sources: &[String]) -> Result<()> {
    let source_ids = check_sources(target, sources)?;
    let ws = Workspace::load(cfg)?;
    let pipe = ws.pipeline(cfg)?;
    let dir = open_run(cfg)?;
    let root = RngStream::new(cfg.seed);
    let tag = cfg.tag();
    let bundles = load_trained(&ws, &pipe, &dir, &source_ids, &root)?;
    let target_bundle = ws.bundle(&pipe, target, &root)?;
    let refs: Vec<&TaskBundle> = bundles.iter().collect();
    let (eval, asm, trace) = pipe.zero_shot_transfer(&refs, &target_bundle, &root)?;
    write_trace(&dir, &format!("transfer-{target}"), &tag, &trace)?;
    create_dir(&dir.join("prompts"))?;
    save_assembly(&asm, &tag, &prompt_path(&dir, target, "transfer"))?;
    emit_reports(&dir, &format!("transfer-{target}"), &[eval.report])
}

#[derive(Serialize)]
struct AblationLine<'a> {
    target: &'a str,
    seed: u64,
    fingerprint: &'a str,
    #[serde(flatten)]
    point: &'a crate::pipeline::AblationPoint,
}

pub fn cmd_ablate(cfg: &RunConfig, target: &str, sources: &[String]) -> Result<()> {
    let source_ids = check_sources(target, sources)?;
    let ws = Workspace::load(cfg)?;
    let pipe = ws.pipeline(cfg)?;
    let dir = open_run(cfg)?;
    let root = RngStream::new(cfg.seed);
    let tag = cfg.tag();
    let mut ids = vec![target];
    ids.extend(&source_ids);
    let bundles = load_trained(&ws, &pipe, &dir, &ids, &root)?;
    let refs: Vec<&TaskBundle> = bundles[1..].iter().collect();
    let points = pipe.ablate_sources(&bundles[0], &refs, &root)?;
    let lines: Vec<AblationLine<'_>> = points
        .iter()
        .map(|p| AblationLine {
            target,
            seed: tag.seed,
            fingerprint: &tag.fingerprint,
            point: p,
        })
        .collect();
    let path = dir.join(format!("ablation-{target}.jsonl"));
    let _ = fs::remove_file(&path);
    append_jsonl(&path, &lines)?;
    let mut table = format!("# seed {} fingerprint {}\n", tag.seed, tag.fingerprint);
    for p in &points {
        let _ = writeln!(
            table,
            "{target}  sources {}  subsets {:>2}  mean {:.4}",
            p.size,
            p.subsets.len(),
            p.mean
        );
    }
    write_file(&dir.join(format!("ablation-{target}.txt")), &table)?;
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_ignores_output_location_and_workers() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("/elsewhere");
        b.pipeline.workers = Some(7);
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert!(a.run_dir().ends_with(format!("seed0-{}", &a.fingerprint()[..12])));
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["ctpt", "frobnicate"]), 1);
        assert_eq!(main_with_args(["ctpt", "pretrain"]), 1);
        assert_eq!(main_with_args(["ctpt", "--config", "/nonexistent/run.toml", "pretrain"]), 1);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Format("x".into())), 2);
        assert_eq!(exit_code(&Error::Sampling("x".into())), 2);
        assert_eq!(exit_code(&Error::Training("x".into())), 3);
    }

    #[test]
    fn transfer_rejects_target_among_sources() {
        assert!(matches!(check_sources("a", &["b".into(), "a".into()]), Err(Error::Argument(_))));
        assert_eq!(check_sources("a", &["b".into(), "c".into()]).unwrap(), vec!["b", "c"]);
    }

    #[test]
    fn dry_run_counts_full_scale_learnables() {
        let mut cfg = RunConfig::default();
        cfg.pipeline.prompt.tokens = 50;
        cfg.pipeline.prompt.attention_dim = 950;
        let text = dry_run_report(&cfg, Mode::Ctpt);
        assert!(text.starts_with("ctpt learnables per task: 1000"), "{text}");
    }
}
