//! The `crysflow` command line. Exit codes: 0 success, 1 a check failed,
//! 2 usage or input error.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crysflow_core::conditioning::{describe_composition, describe_structure, predict_space_group, DescriptionMode, SpaceGroupDatabase};
use crysflow_core::flow::LatticeStats;
use crysflow_core::metrics::{self, coverage, Fingerprint, MetricsReport};
use crysflow_core::net::{gradcheck, init_params, NetError};
use crysflow_core::sampler::{formula_set, CompositionSource, GenerationRecord};
use crysflow_core::train::{Trainer, TrainingExample};
use crysflow_core::{Composition, CrystalStructure, FlowModel, NetworkConfig, PathConfig, SpaceGroup};
use serde::Serialize;
use serde_json::json;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState};
use crate::cif::{parse_cif, write_cif};
use crate::config::RunConfig;
use crate::dataset::{read_dataset, write_dataset, DatasetRecord};
use crate::db::{read_db, write_db};
use crate::manifest::{write_atomic, RunManifest};
use crate::parallel;

#[derive(Debug, Parser)]
#[command(name = "crysflow", version, about = "Text-conditioned flow matching for crystal structures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset, retrieval database and lattice statistics from CIF
    /// files or a dataset JSONL.
    Ingest(IngestArgs),
    /// Train a model on an ingested dataset.
    Train(TrainArgs),
    /// Predict one structure per composition.
    Csp(CspArgs),
    /// Generate structures for compositions drawn from a dataset.
    Sample(SampleArgs),
    /// Compute metrics of generated structures against references.
    Evaluate(EvaluateArgs),
    /// Print the description of a structure or composition.
    Describe(DescribeArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, conflicts_with = "jsonl", required_unless_present = "jsonl")]
    pub cif_dir: Option<PathBuf>,
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
    /// Lattice statistics; defaults to `<out>.stats.json`.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Passes over the dataset; overrides `train.max_steps`.
    #[arg(long, conflicts_with = "steps")]
    pub epochs: Option<usize>,
    /// Optimizer steps; overrides `train.max_steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Loss log; defaults to `<out>.loss.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub log_every: usize,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CspMode {
    Retrieved,
    Oracle,
}

#[derive(Debug, Args)]
pub struct CspArgs {
    /// One formula per line; blank lines and `#` comments are skipped.
    #[arg(long)]
    pub compositions: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, value_enum, default_value_t = CspMode::Retrieved)]
    pub mode: CspMode,
    /// Reference structures aligned with the composition lines (dataset
    /// JSONL or CIF directory); required in oracle mode.
    #[arg(long)]
    pub references: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
    /// Dataset whose compositions are sampled and whose formulas count as
    /// known.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(short = 'n', long)]
    pub n: usize,
    #[arg(long)]
    pub reject_known: bool,
    /// Generation attempts allowed in total; defaults to 10·n.
    #[arg(long)]
    pub max_attempts: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricSet {
    All,
    Validity,
    Coverage,
    Match,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of generated CIF files.
    #[arg(long)]
    pub gen: PathBuf,
    /// Reference CIF directory or dataset JSONL.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MetricSet::All)]
    pub metrics: MetricSet,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DescribeMode {
    Oracle,
    Conditional,
}

#[derive(Debug, Args)]
pub struct DescribeArgs {
    #[arg(long, conflicts_with = "formula", required_unless_present = "formula")]
    pub cif: Option<PathBuf>,
    #[arg(long)]
    pub formula: Option<String>,
    /// Space-group number; otherwise taken from the CIF or retrieved from
    /// `--db`.
    #[arg(long)]
    pub sg: Option<u16>,
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DescribeMode::Oracle)]
    pub mode: DescribeMode,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Network settings; the tiny built-in network when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_values_t = [0u64])]
    pub seed: Vec<u64>,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Perturb the analytic gradient of this tensor (tests the checker).
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// A failed command and its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or unreadable input (exit 2).
    Usage(String),
    /// The command ran but a check or budget failed (exit 1).
    Check(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Check(_) => 1,
        }
    }
}

fn usage<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Usage(format!("{context}: {e}"))
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Check(m) => eprintln!("error: {m}"),
            }
            f.code()
        }
    }
}

pub fn execute(cmd: Command) -> CmdResult {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Csp(a) => csp(a),
        Command::Sample(a) => sample(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Describe(a) => describe(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(e.to_string())),
        None => Ok(RunConfig::default()),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn finish_manifest(mut m: RunManifest, started: Instant, path: &Path) -> CmdResult {
    m.wall_seconds = started.elapsed().as_secs_f64();
    m.save(path).map_err(usage(format!("writing {}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let bytes = serde_json::to_vec_pretty(value).map_err(usage("serializing"))?;
    write_atomic(path, &bytes).map_err(usage(format!("writing {}", path.display())))
}

/// CIF files of a directory in path order.
fn cif_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(usage(format!("reading {}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("cif")))
        .collect();
    files.sort();
    Ok(files)
}

/// Parses every CIF of `dir` in parallel; results follow path order.
fn read_cif_dir(dir: &Path) -> Result<Vec<(PathBuf, Result<(CrystalStructure, Option<SpaceGroup>), String>)>, Failure> {
    use rayon::prelude::*;
    let files = cif_files(dir)?;
    let pool = parallel::pool(parallel::thread_count());
    Ok(pool.install(|| {
        files
            .into_par_iter()
            .map(|p| {
                let parsed = fs::read(&p)
                    .map_err(|e| e.to_string())
                    .and_then(|b| parse_cif(&b).map_err(|e| e.to_string()))
                    .map(|d| (d.structure, d.space_group));
                (p, parsed)
            })
            .collect()
    }))
}

/// Structures from a dataset JSONL or a CIF directory, in order. CIFs
/// without a space group are treated as P1.
fn read_structures(path: &Path) -> Result<Vec<(CrystalStructure, SpaceGroup)>, Failure> {
    if path.is_dir() {
        let mut out = Vec::new();
        for (p, r) in read_cif_dir(path)? {
            let (s, sg) = r.map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            out.push((s, sg.unwrap_or(SpaceGroup::P1)));
        }
        Ok(out)
    } else {
        let (records, _) = read_dataset(path, true).map_err(usage(display(path)))?;
        records.iter().map(|r| r.to_structure().map_err(Failure::Usage)).collect()
    }
}

fn ingest(a: IngestArgs) -> CmdResult {
    let started = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    let mut items: Vec<(CrystalStructure, SpaceGroup)> = Vec::new();
    let input = if let Some(dir) = &a.cif_dir {
        let parsed = read_cif_dir(dir)?;
        if parsed.is_empty() {
            return Err(Failure::Usage(format!("no inputs in {}", dir.display())));
        }
        for (p, r) in parsed {
            match r {
                Ok((s, sg)) => items.push((s, sg.unwrap_or(SpaceGroup::P1))),
                Err(e) => failures.push(format!("{}: {e}", p.display())),
            }
        }
        dir.clone()
    } else {
        let path = a.jsonl.clone().expect("clap requires one input");
        let (records, skipped) = read_dataset(&path, false).map_err(usage(display(&path)))?;
        failures.extend(skipped.iter().map(|e| e.to_string()));
        for r in &records {
            items.push(r.to_structure().map_err(Failure::Usage)?);
        }
        if items.is_empty() && failures.is_empty() {
            return Err(Failure::Usage(format!("no inputs in {}", path.display())));
        }
        path
    };
    for f in &failures {
        eprintln!("warning: {f}");
    }
    if items.is_empty() {
        return Err(Failure::Usage(format!("all {} inputs failed to parse", failures.len())));
    }
    let mut records = Vec::with_capacity(items.len());
    let mut db = SpaceGroupDatabase::default();
    for (s, sg) in &items {
        let d = describe_structure(s, *sg, DescriptionMode::Oracle).map_err(usage("describing structure"))?;
        records.push(DatasetRecord::from_structure(s, *sg, Some(d.text)));
        db.push(&s.composition, *sg);
    }
    let stats = LatticeStats::from_lattices(items.iter().map(|(s, _)| &s.lattice)).expect("non-empty");
    write_dataset(&records, &a.out).map_err(usage(display(&a.out)))?;
    write_db(&db, &a.db).map_err(usage(display(&a.db)))?;
    let stats_path = a.stats.clone().unwrap_or_else(|| sibling(&a.out, ".stats.json"));
    write_json(&stats_path, &stats)?;
    println!("ingested {} structures, {} warnings", records.len(), failures.len());
    let mut m = RunManifest::new("ingest", &RunConfig::default(), 0, parallel::thread_count());
    m.inputs.push(display(&input));
    m.outputs = vec![display(&a.out), display(&a.db), display(&stats_path)];
    m.n_records = records.len();
    m.n_failed = failures.len();
    m.notes = failures;
    finish_manifest(m, started, &a.manifest.unwrap_or_else(|| sibling(&a.out, ".manifest.json")))
}

#[derive(Serialize)]
struct LossLine {
    step: u64,
    loss: f64,
    loss_f: f64,
    loss_l: f64,
}

fn train(a: TrainArgs) -> CmdResult {
    let started = Instant::now();
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    if !a.data.exists() {
        return Err(Failure::Usage(format!("dataset {} does not exist", a.data.display())));
    }
    let (records, _) = read_dataset(&a.data, true).map_err(usage(display(&a.data)))?;
    if records.is_empty() {
        return Err(Failure::Usage(format!("dataset {} is empty", a.data.display())));
    }
    cfg.net.validate().map_err(usage("network config"))?;
    let mut examples = Vec::with_capacity(records.len());
    let mut lattices = Vec::with_capacity(records.len());
    for r in &records {
        let (s, sg) = r.to_structure().map_err(Failure::Usage)?;
        examples.push(
            TrainingExample::new(&s, sg, r.description.as_deref(), cfg.net.n_buckets).map_err(usage("training example"))?,
        );
        lattices.push(s.lattice);
    }
    let stats = LatticeStats::from_lattices(lattices.iter()).expect("non-empty");
    let path = PathConfig {
        sigma_l: cfg.path.sigma_l,
        lambda_l: cfg.path.lambda_l,
        time: cfg.path.time,
        ..PathConfig::from_stats(&stats)
    };
    path.validate().map_err(usage("path config"))?;
    let steps = match (a.epochs, a.steps) {
        (Some(e), _) => e * examples.len().div_ceil(cfg.train.batch_size.max(1)),
        (None, Some(s)) => s,
        (None, None) => cfg.train.max_steps,
    };
    cfg.train.max_steps = steps;
    let model = FlowModel { params: init_params(&cfg.net, cfg.train.seed), net: cfg.net, path, stats };
    let mut trainer = Trainer::new(model, cfg.train);
    let pool = parallel::pool(parallel::thread_count());

    let log_path = a.log.clone().unwrap_or_else(|| sibling(&a.out, ".loss.jsonl"));
    let best_path = sibling(&a.out, ".best");
    let log_file = fs::File::create(&log_path).map_err(usage(display(&log_path)))?;
    let mut log = BufWriter::new(log_file);
    let every = a.log_every.max(1);
    let mut window = (0.0, 0usize);
    let mut best = f64::INFINITY;
    let ckpt = |t: &Trainer| Checkpoint { model: t.model.clone(), rng: RngState { seed: t.config.seed, steps: t.step } };
    let mut notes = Vec::new();
    for _ in 0..steps {
        let entry = match parallel::train_step(&mut trainer, &examples, &pool) {
            Ok(l) => l,
            Err(e @ NetError::NonFiniteGradient(_)) => {
                let dump = sibling(&a.out, ".diagnostic.json");
                let payload = json!({
                    "error": e.to_string(),
                    "step": trainer.step,
                    "lr": trainer.config.lr,
                    "params_finite": trainer.model.params.is_finite(),
                    "hint": "reduce train.lr or set train.grad_clip",
                });
                write_json(&dump, &payload)?;
                let _ = log.flush();
                return Err(Failure::Check(format!("{e} at step {}; diagnostics in {}", trainer.step, dump.display())));
            }
            Err(e) => return Err(Failure::Usage(e.to_string())),
        };
        window.0 += entry.loss;
        window.1 += 1;
        if window.1 == every || trainer.step as usize == steps {
            let line = LossLine { step: trainer.step, loss: window.0 / window.1 as f64, loss_f: entry.loss_f, loss_l: entry.loss_l };
            serde_json::to_writer(&mut log, &line).map_err(usage("loss log"))?;
            log.write_all(b"\n").map_err(usage("loss log"))?;
            if line.loss < best {
                best = line.loss;
                save_checkpoint(&ckpt(&trainer), &best_path).map_err(usage(display(&best_path)))?;
            }
            window = (0.0, 0);
        }
    }
    log.flush().map_err(usage("loss log"))?;
    save_checkpoint(&ckpt(&trainer), &a.out).map_err(usage(display(&a.out)))?;
    if steps == 0 {
        notes.push("no training steps; checkpoint holds initial parameters".to_string());
    } else {
        println!("trained {steps} steps, best windowed loss {best:.4}");
    }
    let mut m = RunManifest::new("train", &cfg, cfg.train.seed, pool.current_num_threads());
    m.inputs.push(display(&a.data));
    m.outputs = vec![display(&a.out), display(&log_path)];
    if steps > 0 {
        m.outputs.push(display(&best_path));
    }
    m.n_records = steps;
    m.notes = notes;
    finish_manifest(m, started, &a.manifest.unwrap_or_else(|| sibling(&a.out, ".manifest.json")))
}

fn read_compositions(path: &Path) -> Result<Vec<Composition>, Failure> {
    let text = fs::read_to_string(path).map_err(usage(display(path)))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(Composition::from_formula(line).map_err(|e| Failure::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

fn load_model(path: &Path) -> Result<FlowModel, Failure> {
    Ok(load_checkpoint(path).map_err(usage(display(path)))?.model)
}

#[derive(Serialize)]
struct RecordLine<'a> {
    index: usize,
    formula: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sg_number: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    description: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn record_line<'a>(index: usize, c: &Composition, file: Option<String>, r: Result<&'a GenerationRecord, String>) -> RecordLine<'a> {
    let formula = c.formula();
    match r {
        Ok(g) => RecordLine {
            index,
            formula,
            file,
            mode: Some(g.mode.as_str()),
            sg_number: Some(g.space_group.number()),
            seed: Some(g.seed),
            description: Some(&g.description),
            error: None,
        },
        Err(e) => RecordLine { index, formula, file, mode: None, sg_number: None, seed: None, description: None, error: Some(e) },
    }
}

fn write_jsonl<T: Serialize>(path: &Path, lines: &[T]) -> CmdResult {
    let mut buf = Vec::new();
    for l in lines {
        serde_json::to_writer(&mut buf, l).map_err(usage("serializing"))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf).map_err(usage(display(path)))
}

fn write_structure(dir: &Path, index: usize, g: &GenerationRecord) -> Result<String, Failure> {
    let name = format!("{index:06}.cif");
    let path = dir.join(&name);
    write_atomic(&path, write_cif(&g.structure, Some(g.space_group)).as_bytes()).map_err(usage(display(&path)))?;
    Ok(name)
}

fn csp(a: CspArgs) -> CmdResult {
    let started = Instant::now();
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.sampler.seed = seed;
    }
    cfg.sampler.validate().map_err(usage("sampler config"))?;
    let compositions = read_compositions(&a.compositions)?;
    let references = match (a.mode, &a.references) {
        (CspMode::Oracle, None) => return Err(Failure::Usage("oracle mode requires --references".into())),
        (CspMode::Oracle, Some(p)) => {
            let refs = read_structures(p)?;
            if refs.len() != compositions.len() {
                return Err(Failure::Usage(format!(
                    "{} references for {} compositions",
                    refs.len(),
                    compositions.len()
                )));
            }
            Some(refs)
        }
        (CspMode::Retrieved, _) => None,
    };
    let model = load_model(&a.ckpt)?;
    let db = read_db(&a.db).map_err(usage(display(&a.db)))?;
    fs::create_dir_all(&a.out).map_err(usage(display(&a.out)))?;
    let pool = parallel::pool(parallel::thread_count());
    let results = parallel::csp_batch(&model, &compositions, &db, references.as_deref(), &cfg.sampler, 0, &pool);
    let mut lines = Vec::with_capacity(results.len());
    let mut failed = 0;
    let mut rejected_descriptions = 0;
    for (i, (c, r)) in compositions.iter().zip(&results).enumerate() {
        match r {
            Ok(g) => {
                let file = write_structure(&a.out, i, g)?;
                rejected_descriptions += g.rejected_descriptions;
                lines.push(record_line(i, c, Some(file), Ok(g)));
            }
            Err(e) => {
                eprintln!("warning: composition {i} ({}): {e}", c.formula());
                failed += 1;
                lines.push(record_line(i, c, None, Err(e.to_string())));
            }
        }
    }
    write_jsonl(&a.out.join("records.jsonl"), &lines)?;
    println!("{} structures written, {failed} failed", compositions.len() - failed);
    let mut m = RunManifest::new("csp", &cfg, cfg.sampler.seed, pool.current_num_threads());
    m.inputs = vec![display(&a.compositions), display(&a.ckpt), display(&a.db)];
    m.inputs.extend(a.references.as_deref().map(display));
    m.outputs.push(display(&a.out));
    m.n_records = compositions.len() - failed;
    m.n_failed = failed;
    m.rejected_descriptions = rejected_descriptions;
    m.notes.push(format!("mode {:?}", a.mode).to_lowercase());
    finish_manifest(m, started, &a.out.join("manifest.json"))
}

fn sample(a: SampleArgs) -> CmdResult {
    let started = Instant::now();
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.sampler.seed = seed;
    }
    cfg.sampler.validate().map_err(usage("sampler config"))?;
    let pool_compositions: Vec<Composition> = read_structures(&a.data)?.into_iter().map(|(s, _)| s.composition).collect();
    if pool_compositions.is_empty() && a.n > 0 {
        return Err(Failure::Usage(format!("dataset {} is empty", a.data.display())));
    }
    let known: BTreeSet<String> = if a.reject_known { formula_set(pool_compositions.iter()) } else { BTreeSet::new() };
    let model = load_model(&a.ckpt)?;
    let db = read_db(&a.db).map_err(usage(display(&a.db)))?;
    fs::create_dir_all(&a.out).map_err(usage(display(&a.out)))?;
    let pool = parallel::pool(parallel::thread_count());

    let budget = a.max_attempts.unwrap_or(10 * a.n);
    let drawn = CompositionSource::Empirical(pool_compositions).draw(budget, cfg.sampler.seed);
    let mut lines = Vec::new();
    let mut kept = 0;
    let mut attempts = 0;
    let mut failed = 0;
    let mut rejected = 0;
    let mut rejected_descriptions = 0;
    let mut records: Vec<(usize, GenerationRecord)> = Vec::new();
    while kept < a.n && attempts < budget {
        let take = (a.n - kept).min(budget - attempts);
        let chunk = &drawn[attempts..attempts + take];
        let results = parallel::csp_batch(&model, chunk, &db, None, &cfg.sampler, attempts, &pool);
        for (j, r) in results.into_iter().enumerate() {
            match r {
                Ok(g) => {
                    rejected_descriptions += g.rejected_descriptions;
                    if known.contains(&crysflow_core::crystal::reduced_formula(&g.structure.composition)) {
                        rejected += 1;
                    } else if kept < a.n {
                        records.push((attempts + j, g));
                        kept += 1;
                    }
                }
                Err(e) => {
                    eprintln!("warning: attempt {}: {e}", attempts + j);
                    failed += 1;
                }
            }
        }
        attempts += take;
    }
    for (k, (attempt, g)) in records.iter().enumerate() {
        let file = write_structure(&a.out, k, g)?;
        let mut line = record_line(k, &g.structure.composition, Some(file), Ok(g));
        line.index = *attempt;
        lines.push(line);
    }
    write_jsonl(&a.out.join("records.jsonl"), &lines)?;
    let mut m = RunManifest::new("sample", &cfg, cfg.sampler.seed, pool.current_num_threads());
    m.inputs = vec![display(&a.ckpt), display(&a.db), display(&a.data)];
    m.outputs.push(display(&a.out));
    m.n_records = kept;
    m.n_failed = failed;
    m.n_rejected = rejected;
    m.rejected_descriptions = rejected_descriptions;
    m.notes.push(format!("{attempts} attempts of {budget} allowed"));
    let exhausted = kept < a.n;
    if exhausted {
        m.notes.push("retry budget exhausted".into());
    }
    finish_manifest(m, started, &a.out.join("manifest.json"))?;
    println!("{kept} kept, {rejected} rejected as known, {failed} failed");
    if exhausted {
        return Err(Failure::Check(format!("retry budget exhausted: {kept} of {} kept after {attempts} attempts", a.n)));
    }
    Ok(())
}

/// Index of a file from its numeric stem (`000012.cif` is 12).
fn stem_index(p: &Path) -> Option<usize> {
    p.file_stem()?.to_str()?.parse().ok()
}

/// Generated CIFs keyed by stem index (or position when stems are not
/// numeric); unparseable files map to `None`.
fn read_generated(dir: &Path) -> Result<BTreeMap<usize, Option<CrystalStructure>>, Failure> {
    let parsed = read_cif_dir(dir)?;
    let numeric = parsed.iter().all(|(p, _)| stem_index(p).is_some());
    let mut out = BTreeMap::new();
    for (pos, (p, r)) in parsed.into_iter().enumerate() {
        let key = if numeric { stem_index(&p).expect("checked") } else { pos };
        if let Err(e) = &r {
            eprintln!("warning: {}: {e}", p.display());
        }
        out.insert(key, r.ok().map(|(s, _)| s));
    }
    Ok(out)
}

/// References keyed like [`read_generated`]; dataset lines use their
/// position.
fn read_references(path: &Path) -> Result<Vec<(usize, CrystalStructure)>, Failure> {
    if path.is_dir() {
        let parsed = read_cif_dir(path)?;
        let numeric = parsed.iter().all(|(p, _)| stem_index(p).is_some());
        parsed
            .into_iter()
            .enumerate()
            .map(|(pos, (p, r))| {
                let key = if numeric { stem_index(&p).expect("checked") } else { pos };
                r.map(|(s, _)| (key, s)).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
            })
            .collect()
    } else {
        Ok(read_structures(path)?.into_iter().enumerate().map(|(i, (s, _))| (i, s)).collect())
    }
}

fn metrics_err(e: metrics::MetricsError) -> Failure {
    Failure::Usage(e.to_string())
}

fn evaluate(a: EvaluateArgs) -> CmdResult {
    let started = Instant::now();
    let cfg = load_config(a.config.as_deref())?;
    let generated = read_generated(&a.gen)?;
    let parsed: Vec<CrystalStructure> = generated.values().flatten().cloned().collect();
    let refs = match &a.reference {
        Some(p) => Some(read_references(p)?),
        None if matches!(a.metrics, MetricSet::Validity) => None,
        None => return Err(Failure::Usage("--ref is required for coverage and match metrics".into())),
    };
    let mut report = MetricsReport { n_generated: generated.len(), n_reference: refs.as_ref().map_or(0, |r| r.len()), ..Default::default() };
    let want = |m: MetricSet| a.metrics == MetricSet::All || a.metrics == m;
    if want(MetricSet::Validity) {
        if generated.is_empty() {
            return Err(metrics_err(metrics::MetricsError::EmptyInput));
        }
        // Unparseable files count as invalid.
        let (sv, cv, exhausted) = if parsed.is_empty() { (0.0, 0.0, 0) } else { metrics::validity(&parsed).map_err(metrics_err)? };
        let scale = parsed.len() as f64 / generated.len() as f64;
        report.struct_validity = Some(sv * scale);
        report.comp_validity = Some(cv * scale);
        report.comp_validity_budget_exhausted = Some(exhausted);
    }
    if let Some(refs) = &refs {
        let ref_structures: Vec<CrystalStructure> = refs.iter().map(|(_, s)| s.clone()).collect();
        if want(MetricSet::Coverage) {
            let fp = |set: &[CrystalStructure]| -> Result<Vec<Fingerprint>, Failure> {
                set.iter().map(|s| Fingerprint::of(s).map_err(usage("fingerprint"))).collect()
            };
            let (recall, precision) = coverage(&fp(&parsed)?, &fp(&ref_structures)?, &cfg.coverage).map_err(metrics_err)?;
            let (wd, wn) = metrics::property_stats(&parsed, &ref_structures).map_err(metrics_err)?;
            report.cov_recall = Some(recall);
            report.cov_precision = Some(precision);
            report.wdist_density = Some(wd);
            report.wdist_nel = Some(wn);
        }
        if want(MetricSet::Match) {
            let keys: BTreeSet<usize> = refs.iter().map(|(k, _)| *k).collect();
            if generated.keys().any(|k| !keys.contains(k)) {
                return Err(metrics_err(metrics::MetricsError::LengthMismatch { generated: generated.len(), reference: refs.len() }));
            }
            let aligned: Vec<Option<CrystalStructure>> = refs.iter().map(|(k, _)| generated.get(k).cloned().flatten()).collect();
            let summary = metrics::match_rate_and_rmsd(&aligned, &ref_structures, &cfg.matching).map_err(metrics_err)?;
            report.match_rate = Some(summary.match_rate);
            report.mean_rmsd = summary.rmsd_defined.then_some(summary.mean_rmsd);
            report.rmsd_defined = Some(summary.rmsd_defined);
        }
    }
    write_json(&a.out, &report)?;
    print_report(&report);
    let mut m = RunManifest::new("evaluate", &cfg, 0, parallel::thread_count());
    m.inputs.push(display(&a.gen));
    m.inputs.extend(a.reference.as_deref().map(display));
    m.outputs.push(display(&a.out));
    m.n_records = generated.len();
    m.n_failed = generated.len() - parsed.len();
    finish_manifest(m, started, &a.manifest.unwrap_or_else(|| sibling(&a.out, ".manifest.json")))
}

fn print_report(r: &MetricsReport) {
    let value = serde_json::to_value(r).expect("report serializes");
    if let Some(map) = value.as_object() {
        for (k, v) in map {
            println!("{k:<32} {v}");
        }
    }
}

fn describe(a: DescribeArgs) -> CmdResult {
    let started = Instant::now();
    let (structure, cif_sg, composition) = match (&a.cif, &a.formula) {
        (Some(p), _) => {
            let bytes = fs::read(p).map_err(usage(display(p)))?;
            let doc = parse_cif(&bytes).map_err(usage(display(p)))?;
            let c = doc.structure.composition.clone();
            (Some(doc.structure), doc.space_group, c)
        }
        (None, Some(f)) => (None, None, Composition::from_formula(f).map_err(usage("formula"))?),
        (None, None) => return Err(Failure::Usage("either --cif or --formula is required".into())),
    };
    let sg = match (a.sg, cif_sg, &a.db) {
        (Some(n), _, _) => SpaceGroup::new(n).ok_or_else(|| Failure::Usage(format!("space-group number {n} outside 1..=230")))?,
        (None, Some(sg), _) => sg,
        (None, None, Some(db)) => {
            let db = read_db(db).map_err(usage(display(db)))?;
            predict_space_group(&composition, &db).map_err(usage("retrieval"))?.0
        }
        (None, None, None) => SpaceGroup::P1,
    };
    let d = match (a.mode, &structure) {
        (DescribeMode::Oracle, Some(s)) => describe_structure(s, sg, DescriptionMode::Oracle).map_err(usage("describing"))?,
        (DescribeMode::Oracle, None) => return Err(Failure::Usage("oracle mode needs a structure (--cif)".into())),
        (DescribeMode::Conditional, _) => describe_composition(&composition, sg),
    };
    if a.json {
        println!("{}", json!({ "text": d.text, "mode": d.mode, "sg_number": sg.number(), "formula": d.declared_formula }));
    } else {
        println!("{}", d.text);
    }
    if let Some(path) = &a.manifest {
        let mut m = RunManifest::new("describe", &RunConfig::default(), 0, 1);
        m.inputs.extend(a.cif.as_deref().map(display));
        m.n_records = 1;
        finish_manifest(m, started, path)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GradcheckReport {
    seed: u64,
    tensors: Vec<gradcheck::TensorReport>,
}

fn gradcheck_cmd(a: GradcheckArgs) -> CmdResult {
    let started = Instant::now();
    let (net, cfg) = match &a.config {
        Some(p) => {
            let c = load_config(Some(p))?;
            (c.net, c)
        }
        None => (NetworkConfig::tiny(), RunConfig { net: NetworkConfig::tiny(), ..RunConfig::default() }),
    };
    let mut reports = Vec::new();
    let mut offenders = Vec::new();
    for &seed in &a.seed {
        let tensors = gradcheck::run(&net, seed, 2, 2, a.eps, a.corrupt.as_deref()).map_err(usage("gradcheck"))?;
        println!("seed {seed}");
        for t in &tensors {
            let ok = t.max_rel_err < a.tolerance;
            println!("  {:<28} {:.3e} {}", t.name, t.max_rel_err, if ok { "ok" } else { "FAIL" });
            if !ok {
                offenders.push(format!("{} (seed {seed}, {:.3e})", t.name, t.max_rel_err));
            }
        }
        reports.push(GradcheckReport { seed, tensors });
    }
    if let Some(out) = &a.out {
        write_json(out, &reports)?;
    }
    if let Some(path) = &a.manifest {
        let mut m = RunManifest::new("gradcheck", &cfg, a.seed.first().copied().unwrap_or(0), 1);
        m.n_records = reports.len();
        m.n_failed = offenders.len();
        m.outputs.extend(a.out.as_deref().map(display));
        finish_manifest(m, started, path)?;
    }
    if offenders.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("gradient check failed for {}", offenders.join(", "))))
    }
}
