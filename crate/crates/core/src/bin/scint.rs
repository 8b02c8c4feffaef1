//! `scint`: command-line front end for the scintillation classification workflow.
//!
//! Each subcommand reads files, writes its artifacts into the output
//! directory together with `manifest.json`, and exits with 0 on success,
//! 1 for usage or configuration errors, 2 for data errors and 3 for
//! numerical failures.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use scint_core::config::{RunConfig, SplitConfig};
use scint_core::eval;
use scint_core::ingest::{self, ColumnMap, SolarFormat};
use scint_core::learners::{self, BaggedParams, ModelKind, ModelParams, Samples, TrainedModel};
use scint_core::metrics::{self, ConfusionMatrix};
use scint_core::pipeline::{self, IppSource, SplitPlan};
use scint_core::synth;
use scint_core::tuner::{self, SearchSpace};
use scint_core::{Dataset, Error, Result, SeverityClass};

#[derive(Parser, Debug)]
#[command(
    name = "scint",
    version,
    about = "GNSS amplitude-scintillation severity classification"
)]
struct Cli {
    /// Run configuration (TOML), or a previous run's manifest.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every component seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse receiver and solar-index files into normalized CSV.
    Ingest(IngestArgs),
    /// Filter, label and balance records into classification datasets.
    Preprocess(PreprocessArgs),
    /// Generate a seeded synthetic fixture.
    Synth(SynthArgs),
    /// Fit a classifier and save it as JSON.
    Train(TrainArgs),
    /// Tune bagged-tree hyperparameters by Bayesian optimization.
    Tune(TuneArgs),
    /// Confusion matrix and rates from cross-validation, a saved model, or a predictions file.
    Eval(EvalArgs),
    /// Predict classes for a dataset with a saved model.
    Predict(PredictArgs),
    /// Print a stored confusion matrix or metrics file.
    Report(ReportArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Layout {
    /// Canonical CSV with a header (what `ingest` and `synth` write).
    Normalized,
    /// Headerless receiver log keyed by GPS week and time of week.
    WeekTow,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolarLayout {
    /// `date,kp,ssn,f107` with a header.
    Csv,
    /// Whitespace-separated `YEAR DOY HR Kp*10 R F10.7`.
    Omniweb,
}

#[derive(Args, Debug)]
struct InputFormat {
    /// Observation file layout; overrides `input.columns`.
    #[arg(long, value_enum)]
    layout: Option<Layout>,
    /// Solar listing layout; overrides `input.solar_format`.
    #[arg(long, value_enum)]
    solar_layout: Option<SolarLayout>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    solar: Option<PathBuf>,
    #[command(flatten)]
    format: InputFormat,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    solar: Option<PathBuf>,
    #[command(flatten)]
    format: InputFormat,
    #[arg(long)]
    elevation_cutoff: Option<f64>,
    #[arg(long)]
    s4_floor: Option<f64>,
    /// Skip the balanced dataset.
    #[arg(long)]
    no_balance: bool,
    /// Compute pierce points for a receiver at LAT,LON instead of reading them from the records.
    #[arg(long, value_name = "LAT,LON")]
    receiver: Option<String>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    rows: Option<usize>,
    /// Weak, moderate and severe shares, e.g. `0.5,0.3,0.2` or counts `3789,157,23`.
    #[arg(long, value_name = "P1,P2,P3")]
    proportions: Option<String>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// tree, nb, svm, knn, boosted or bagged.
    #[arg(long)]
    model: Option<String>,
    /// Hyperparameter override, e.g. `--set max_splits=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    initial: Option<usize>,
    /// `splits=lo:hi,learners=lo:hi`.
    #[arg(long)]
    bounds: Option<String>,
    /// `kfold:K`, `holdout:F` or `stratified:F`.
    #[arg(long)]
    split: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// `kfold:K`, `holdout:F` or `stratified:F`.
    #[arg(long)]
    split: Option<String>,
    /// Score a saved model on the whole dataset instead of cross-validating.
    #[arg(long, conflicts_with = "predictions")]
    model_file: Option<PathBuf>,
    /// CSV with `predicted` and `truth` columns (class labels 1-3).
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// A `metrics.json`, `confusion.json`, or a run directory containing one.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        None => RunConfig::default(),
        Some(p) if p.extension().is_some_and(|e| e == "json") => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let manifest: Value = serde_json::from_str(&text)?;
            let c: RunConfig = serde_json::from_value(manifest.get("config").cloned().unwrap_or(Value::Null))
                .map_err(|e| Error::Config(format!("{}: no usable `config` in manifest: {e}", p.display())))?;
            c.validate()?;
            c
        }
        Some(p) => RunConfig::load(p)?,
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = &cli.out {
        config.output_dir = o.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli)?;
    let argv: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::Config => {
            config.validate()?;
            emit(&config.to_toml()?)
        }
        Command::Report(a) => report(&a),
        Command::Ingest(a) => {
            apply_format(&mut config, &a.format);
            set_path(&mut config.input.records, a.records);
            set_path(&mut config.input.solar, a.solar);
            config.validate()?;
            with_run(&config, argv, |run| ingest_cmd(&config, run))
        }
        Command::Preprocess(a) => {
            apply_format(&mut config, &a.format);
            set_path(&mut config.input.records, a.records);
            set_path(&mut config.input.solar, a.solar);
            if let Some(v) = a.elevation_cutoff {
                config.pipeline.elevation_cutoff_deg = v;
            }
            if let Some(v) = a.s4_floor {
                config.pipeline.s4_floor = v;
            }
            if a.no_balance {
                config.pipeline.balance = false;
            }
            if let Some(r) = a.receiver {
                let (lat, lon) = parse_pair(&r)?;
                config.pipeline.ipp = IppSource::Computed {
                    receiver_lat_deg: lat,
                    receiver_lon_deg: lon,
                    shell: Default::default(),
                };
            }
            config.validate()?;
            with_run(&config, argv, |run| preprocess_cmd(&config, run))
        }
        Command::Synth(a) => {
            if let Some(v) = a.rows {
                config.synth.rows = v;
            }
            if let Some(p) = a.proportions {
                config.synth.proportions = parse_proportions(&p)?;
            }
            if let Some(v) = a.separation {
                config.synth.separation = v;
            }
            if let Some(v) = a.noise {
                config.synth.noise = v;
            }
            config.validate()?;
            with_run(&config, argv, |run| synth_cmd(&config, run))
        }
        Command::Train(a) => {
            set_path(&mut config.input.dataset, a.dataset);
            apply_model(&mut config, &a.model)?;
            config.validate()?;
            with_run(&config, argv, |run| train_cmd(&config, run))
        }
        Command::Tune(a) => {
            set_path(&mut config.input.dataset, a.dataset);
            if let Some(v) = a.iterations {
                config.tune.iterations = v;
            }
            if let Some(v) = a.initial {
                config.tune.initial = v;
            }
            if a.bounds.is_some() {
                config.tune.bounds = a.bounds;
            }
            if let Some(s) = a.split {
                config.split = SplitConfig::parse(&s)?;
            }
            config.validate()?;
            with_run(&config, argv, |run| tune_cmd(&config, run))
        }
        Command::Eval(a) => {
            set_path(&mut config.input.dataset, a.dataset);
            set_path(&mut config.input.model, a.model_file);
            set_path(&mut config.input.predictions, a.predictions);
            apply_model(&mut config, &a.model)?;
            if let Some(s) = a.split {
                config.split = SplitConfig::parse(&s)?;
            }
            config.validate()?;
            with_run(&config, argv, |run| eval_cmd(&config, run))
        }
        Command::Predict(a) => {
            set_path(&mut config.input.model, a.model_file);
            set_path(&mut config.input.dataset, a.dataset);
            config.validate()?;
            with_run(&config, argv, |run| predict_cmd(&config, run))
        }
    }
}

fn set_path(slot: &mut Option<PathBuf>, v: Option<PathBuf>) {
    if v.is_some() {
        *slot = v;
    }
}

fn apply_format(config: &mut RunConfig, f: &InputFormat) {
    match f.layout {
        Some(Layout::Normalized) => config.input.columns = ColumnMap::default(),
        Some(Layout::WeekTow) => config.input.columns = ColumnMap::week_tow_ismr(),
        None => {}
    }
    match f.solar_layout {
        Some(SolarLayout::Csv) => config.input.solar_format = SolarFormat::default(),
        Some(SolarLayout::Omniweb) => config.input.solar_format = SolarFormat::omniweb(),
        None => {}
    }
}

fn apply_model(config: &mut RunConfig, m: &ModelArgs) -> Result<()> {
    if let Some(kind) = &m.model {
        let kind: ModelKind = kind.parse()?;
        if kind != config.model.kind() {
            config.model = ModelParams::defaults(kind);
        }
    }
    if m.set.is_empty() {
        return Ok(());
    }
    let mut v = serde_json::to_value(&config.model)?;
    let obj = v.as_object_mut().expect("model params serialize as an object");
    for kv in &m.set {
        let (key, raw) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        let key = key.trim();
        if key == "model_kind" || !obj.contains_key(key) {
            let known: Vec<&String> = obj.keys().filter(|k| *k != "model_kind").collect();
            return Err(Error::Config(format!(
                "model.{key}: unknown hyperparameter for {} (known: {known:?})",
                config.model.kind()
            )));
        }
        let raw = raw.trim();
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        obj.insert(key.to_string(), value);
    }
    config.model = serde_json::from_value(v).map_err(|e| Error::Config(format!("model: {e}")))?;
    Ok(())
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("expected LAT,LON, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn parse_proportions(s: &str) -> Result<[f64; 3]> {
    let bad = || {
        Error::Config(format!(
            "synth.proportions: expected three non-negative numbers, got `{s}`"
        ))
    };
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let [a, b, c]: [f64; 3] = parts.try_into().map_err(|_| bad())?;
    let total = a + b + c;
    if total.is_nan() || total <= 0.0 || a < 0.0 || b < 0.0 || c < 0.0 {
        return Err(bad());
    }
    // counts or shares: both normalize to shares
    Ok([a / total, b / total, c / total])
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("input.{what}: missing (pass --{what} or set it in the config)")))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_csv(open(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        e => e,
    })
}

fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((hex(&Sha256::digest(&bytes)), bytes.len() as u64))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One artifact-producing run: holds the output-directory lock and collects
/// the files read and written for the manifest.
struct RunDir {
    dir: PathBuf,
    lock: PathBuf,
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<PathBuf>,
}

impl RunDir {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let lock = dir.join(".scint.lock");
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Config(format!(
                    "output directory {} is in use by another run ({} exists; remove it if no run is active)",
                    dir.display(),
                    lock.display()
                )))
            }
            Err(e) => return Err(Error::io(&lock, e)),
        }
        Ok(RunDir {
            dir: dir.to_path_buf(),
            lock,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn input(&mut self, role: &str, path: &Path) {
        self.inputs.push((role.to_string(), path.to_path_buf()));
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(path);
        Ok(BufWriter::new(f))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    fn finish(&self, config: &RunConfig, argv: Vec<String>) -> Result<()> {
        let files = |list: Vec<(String, &PathBuf)>| -> Result<Vec<Value>> {
            list.into_iter()
                .map(|(role, p)| {
                    let (sha, bytes) = sha256_file(p)?;
                    Ok(json!({ "role": role, "path": p, "sha256": sha, "bytes": bytes }))
                })
                .collect()
        };
        let inputs = files(self.inputs.iter().map(|(r, p)| (r.clone(), p)).collect())?;
        let outputs = files(
            self.outputs
                .iter()
                .map(|p| {
                    (
                        p.file_name()
                            .map(|n| n.to_string_lossy().into_owned())
                            .unwrap_or_default(),
                        p,
                    )
                })
                .collect(),
        )?;
        let manifest = json!({
            "tool": "scint",
            "version": env!("CARGO_PKG_VERSION"),
            "command": argv,
            "created_utc": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            "seeds": config.seeds(),
            "config": config,
            "inputs": inputs,
            "outputs": outputs,
        });
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

fn with_run(config: &RunConfig, argv: Vec<String>, f: impl FnOnce(&mut RunDir) -> Result<()>) -> Result<()> {
    let mut run = RunDir::open(&config.output_dir)?;
    f(&mut run)?;
    run.finish(config, argv)
}

fn ingest_cmd(config: &RunConfig, run: &mut RunDir) -> Result<()> {
    let mut summary = serde_json::Map::new();
    let records_path = config.input.records.as_deref();
    let solar_path = config.input.solar.as_deref();
    if records_path.is_none() && solar_path.is_none() {
        return Err(Error::Config(
            "input.records / input.solar: pass at least one of --records, --solar".into(),
        ));
    }
    if let Some(p) = records_path {
        run.input("records", p);
        let parsed = ingest::parse_ismr(open(p)?, &config.input.columns)?;
        let mut w = run.create("records.csv")?;
        ingest::write_normalized_csv(&parsed.records, &mut w)?;
        w.flush()?;
        let mut w = run.create("diagnostics.csv")?;
        ingest::write_diagnostics_csv(&parsed.diagnostics, &mut w)?;
        summary.insert("records".into(), json!(parsed.records.len()));
        summary.insert("record_diagnostics".into(), json!(parsed.diagnostics.len()));
        eprintln!(
            "{}: {} records, {} diagnostics",
            p.display(),
            parsed.records.len(),
            parsed.diagnostics.len()
        );
    }
    if let Some(p) = solar_path {
        run.input("solar", p);
        let parsed = ingest::parse_solar_with(open(p)?, &config.input.solar_format)?;
        let mut w = run.create("solar.csv")?;
        ingest::write_solar_csv(&parsed.records, &mut w)?;
        w.flush()?;
        let mut w = run.create("solar_diagnostics.csv")?;
        ingest::write_diagnostics_csv(&parsed.diagnostics, &mut w)?;
        summary.insert("solar_days".into(), json!(parsed.records.len()));
        summary.insert(
            "solar_missing_f107".into(),
            json!(parsed.records.iter().filter(|d| d.f107_missing).count()),
        );
        summary.insert("solar_diagnostics".into(), json!(parsed.diagnostics.len()));
    }
    run.write_json("ingest.json", &summary)
}

fn preprocess_cmd(config: &RunConfig, run: &mut RunDir) -> Result<()> {
    let rp = require(&config.input.records, "records")?;
    let sp = require(&config.input.solar, "solar")?;
    run.input("records", rp);
    run.input("solar", sp);
    let records = ingest::parse_ismr(open(rp)?, &config.input.columns)?;
    let solar = ingest::parse_solar_with(open(sp)?, &config.input.solar_format)?;
    if !records.diagnostics.is_empty() || !solar.diagnostics.is_empty() {
        let mut w = run.create("diagnostics.csv")?;
        let all: Vec<_> = records.diagnostics.iter().chain(&solar.diagnostics).cloned().collect();
        ingest::write_diagnostics_csv(&all, &mut w)?;
        eprintln!("{} malformed lines skipped (see diagnostics.csv)", all.len());
    }
    let out = pipeline::preprocess(
        records.records,
        &solar.records,
        &config.pipeline,
        config.seeds().balance,
    )?;
    let mut w = run.create("imbalanced.csv")?;
    out.imbalanced.write_csv(&mut w)?;
    w.flush()?;
    if let Some(b) = &out.balanced {
        let mut w = run.create("balanced.csv")?;
        b.write_csv(&mut w)?;
        w.flush()?;
    }
    let p = &out.provenance;
    eprintln!(
        "{} records -> {} after elevation cutoff -> {} after S4 floor -> {} after index join; classes {:?}",
        p.input_records, p.after_elevation_cutoff, p.after_s4_floor, p.after_index_join, p.class_counts
    );
    run.write_json("provenance.json", &out.provenance)
}

fn synth_cmd(config: &RunConfig, run: &mut RunDir) -> Result<()> {
    let s = synth::generate(&config.synth_spec())?;
    let mut w = run.create("records.csv")?;
    ingest::write_normalized_csv(&s.records, &mut w)?;
    w.flush()?;
    let mut w = run.create("solar.csv")?;
    ingest::write_solar_csv(&s.solar, &mut w)?;
    w.flush()?;
    let mut w = run.create("dataset.csv")?;
    s.dataset.write_csv(&mut w)?;
    w.flush()?;
    run.write_json(
        "synth.json",
        &json!({ "spec": config.synth_spec(), "class_counts": s.class_counts, "records": s.records.len() }),
    )
}

fn train_cmd(config: &RunConfig, run: &mut RunDir) -> Result<()> {
    let dp = require(&config.input.dataset, "dataset")?;
    run.input("dataset", dp);
    let data = read_dataset(dp)?;
    let mut model = learners::train(&config.model, &Samples::from_dataset(&data), config.seeds().train)?;
    model.metadata.dataset_fingerprint = Some(data.fingerprint());
    let text = model.to_json()?;
    run.write_text("model.json", &text)?;
    eprintln!("trained {} on {} rows", model.kind(), data.len());
    Ok(())
}

fn tune_cmd(config: &RunConfig, run: &mut RunDir) -> Result<()> {
    let dp = require(&config.input.dataset, "dataset")?;
    run.input("dataset", dp);
    let data = read_dataset(dp)?;
    let samples = Samples::from_dataset(&data);
    let mut space = SearchSpace::bagged_trees(data.len())?;
    if let Some(b) = &config.tune.bounds {
        space = space.with_bounds(b)?;
    }
    let plan = config.split_plan();
    let objective = tuner::bagged_objective(&samples, plan, config.seeds().train);
    let result = tuner::tune(objective, &space, &config.tune_config())?;
    let mut w = run.create("history.csv")?;
    result.write_history_csv(&space, &mut w)?;
    w.flush()?;
    let best_model = ModelParams::BaggedTrees(BaggedParams {
        max_splits: Some(result.best.params[0] as usize),
        n_learners: result.best.params[1] as usize,
        ..BaggedParams::default()
    });
    run.write_json(
        "best.json",
        &json!({
            "max_splits": result.best.params[0],
            "n_learners": result.best.params[1],
            "objective": result.best.objective,
            "model": best_model,
            "split": plan,
            "space": space,
            "failures": result.failures,
        }),
    )?;
    eprintln!(
        "best validation accuracy {:.2}% at max_splits = {}, n_learners = {} ({} trials, {} failed)",
        100.0 * result.best.objective,
        result.best.params[0],
        result.best.params[1],
        result.history.len(),
        result.failures.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct MetricsReport<'a> {
    orientation: &'static str,
    source: &'a str,
    counts: [[u64; 3]; 3],
    summary: metrics::Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<SplitPlan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a ModelParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fold_accuracies: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_fold_accuracy: Option<f64>,
}

const ORIENTATION: &str = "rows = predicted class 1-3, columns = ground-truth class 1-3";

fn read_predictions(path: &Path) -> Result<(Vec<SeverityClass>, Vec<SeverityClass>)> {
    let mut r = csv::Reader::from_reader(open(path)?);
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Format(format!("{}: missing column `{name}`", path.display())))
    };
    let (pi, ti) = (col("predicted")?, col("truth")?);
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let class = |i: usize| -> Result<SeverityClass> {
            let raw = rec.get(i).unwrap_or("").trim();
            raw.parse::<u8>()
                .ok()
                .and_then(|v| SeverityClass::try_from(v).ok())
                .ok_or_else(|| Error::Data(format!("{} line {}: bad class `{raw}`", path.display(), line + 2)))
        };
        pred.push(class(pi)?);
        truth.push(class(ti)?);
    }
    Ok((pred, truth))
}

fn eval_cmd(config: &RunConfig, run: &mut RunDir) -> Result<()> {
    let (cm, source, split, model, folds) = if let Some(pp) = &config.input.predictions {
        run.input("predictions", pp);
        let (p, t) = read_predictions(pp)?;
        (metrics::accumulate(&p, &t)?, "predictions", None, None, None)
    } else if let Some(mp) = &config.input.model {
        run.input("model", mp);
        let dp = require(&config.input.dataset, "dataset")?;
        run.input("dataset", dp);
        let model = TrainedModel::load(mp)?;
        let data = Samples::from_dataset(&read_dataset(dp)?);
        let predicted = model.predict_all(&data)?;
        (
            metrics::accumulate(&predicted, data.labels())?,
            "saved model",
            None,
            Some(model.params),
            None,
        )
    } else {
        let dp = require(&config.input.dataset, "dataset")?;
        run.input("dataset", dp);
        let data = Samples::from_dataset(&read_dataset(dp)?);
        let plan = config.split_plan();
        let e = eval::cross_validate(&data, &config.model, &plan, config.seeds().train)?;
        (
            e.report.pooled,
            "cross-validation",
            Some(plan),
            Some(config.model.clone()),
            Some(e.report),
        )
    };
    let summary = cm.summary()?;
    let report = MetricsReport {
        orientation: ORIENTATION,
        source,
        counts: cm.counts,
        summary,
        split,
        model: model.as_ref(),
        fold_accuracies: folds.as_ref().map(|f| f.fold_accuracies.as_slice()),
        mean_fold_accuracy: folds.as_ref().map(|f| f.mean_fold_accuracy),
    };
    run.write_json(
        "confusion.json",
        &json!({ "orientation": ORIENTATION, "counts": cm.counts }),
    )?;
    let mut w = run.create("confusion.csv")?;
    cm.write_csv(&mut w)?;
    w.flush()?;
    run.write_json("metrics.json", &report)?;
    let text = cm.render();
    run.write_text("report.txt", &text)?;
    emit(&text)
}

fn predict_cmd(config: &RunConfig, run: &mut RunDir) -> Result<()> {
    let mp = require(&config.input.model, "model")?;
    let dp = require(&config.input.dataset, "dataset")?;
    run.input("model", mp);
    run.input("dataset", dp);
    let model = TrainedModel::load(mp)?;
    let data = Samples::from_dataset(&read_dataset(dp)?);
    let mut w = csv::Writer::from_writer(run.create("predictions.csv")?);
    w.write_record(["row", "predicted", "truth", "score_1", "score_2", "score_3"])?;
    for i in 0..data.len() {
        let s = model.predict_scores(data.row(i))?;
        let p = learners::argmax(&s);
        w.write_record([
            i.to_string(),
            p.label().to_string(),
            data.label(i).label().to_string(),
            s[0].to_string(),
            s[1].to_string(),
            s[2].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let path = if a.input.is_dir() {
        ["metrics.json", "confusion.json"]
            .iter()
            .map(|n| a.input.join(n))
            .find(|p| p.exists())
            .ok_or_else(|| Error::Config(format!("{}: no metrics.json or confusion.json", a.input.display())))?
    } else {
        a.input.clone()
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let v: Value = serde_json::from_str(&text)?;
    let counts: [[u64; 3]; 3] = serde_json::from_value(v.get("counts").cloned().unwrap_or(Value::Null))
        .map_err(|e| Error::Format(format!("{}: no 3x3 `counts`: {e}", path.display())))?;
    let cm = ConfusionMatrix::from_counts(counts);
    match a.format {
        ReportFormat::Text => emit(&cm.render()),
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            cm.write_csv(&mut buf)?;
            emit(&String::from_utf8_lossy(&buf))
        }
        ReportFormat::Json => {
            let out = json!({ "orientation": ORIENTATION, "counts": cm.counts, "summary": cm.summary()? });
            emit(&(serde_json::to_string_pretty(&out)? + "\n"))
        }
    }
}

/// Writes to stdout; a reader that closed early is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Stream(e)),
        _ => Ok(()),
    }
}
