mod settings;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use trielog_core::engine::{Engine, LineMeta};
use trielog_core::eval::{
    self, BenchError, DatasetError, DatasetFormat, EvalError, EvalSetup, LabeledDataset, OnlineReport,
    SynthConfig,
};
use trielog_core::preprocess::RawLine;
use trielog_core::trie::CatalogEntry;

use settings::{ConfigFlags, Settings, SettingsError};

#[derive(Debug, Parser)]
#[command(name = "trielog", version, about = "Streaming log parsing and anomaly detection")]
struct Cli {
    /// TOML config file; flags override its keys.
    #[arg(long, short, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long, global = true)]
    json: bool,
    /// Also write the JSON report to this file.
    #[arg(long, global = true, value_name = "FILE")]
    json_out: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on the first 80% of a labeled log, test on the rest.
    RunOffline {
        #[command(flatten)]
        data: DatasetArgs,
        /// Also run the no-feedback floor: half the training data, no experts at test time.
        #[arg(long)]
        floor: bool,
    },
    /// Six-chunk online protocol.
    RunOnline {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, value_enum, default_value_t = Variant::Both)]
        variant: Variant,
    },
    /// Throughput and memory of the full pipeline with experts disabled.
    Bench {
        /// Labeled log to replay; a synthetic stream is generated when absent.
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Bgl)]
        format: Format,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Write a synthetic labeled log in BGL format.
    GenSynth {
        #[command(flatten)]
        synth: SynthArgs,
        /// Output file; stdout when absent.
        #[arg(long, short, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        /// Template catalog to load before serving.
        #[arg(long, value_name = "FILE")]
        import: Option<PathBuf>,
        /// Write the template catalog here on shutdown.
        #[arg(long, value_name = "FILE")]
        export_on_exit: Option<PathBuf>,
    },
    /// Parse a log and write its template catalog as NDJSON.
    ExportTemplates {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, short, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Load a template catalog, optionally keep parsing a log, and list the result.
    ImportTemplates {
        #[arg(long, value_name = "FILE")]
        catalog: PathBuf,
        #[arg(long, value_name = "FILE")]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Bgl)]
        format: Format,
        /// Write the merged catalog here.
        #[arg(long, short, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct DatasetArgs {
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Bgl)]
    format: Format,
    /// Keep only the first N lines.
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Bgl,
    Thunderbird,
    Generic,
}

impl From<Format> for DatasetFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Bgl => DatasetFormat::Bgl,
            Format::Thunderbird => DatasetFormat::Thunderbird,
            Format::Generic => DatasetFormat::Generic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    Kept,
    Wiped,
    Both,
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Synthetic stream")]
struct SynthArgs {
    #[arg(long = "synth-lines", value_name = "N")]
    lines: Option<usize>,
    #[arg(long = "synth-templates", value_name = "N")]
    templates: Option<usize>,
    #[arg(long = "synth-anomaly-templates", value_name = "N")]
    anomaly_templates: Option<usize>,
    #[arg(long = "synth-anomaly-bursts", value_name = "N")]
    anomaly_bursts: Option<usize>,
    #[arg(long = "synth-param-cardinality", value_name = "N")]
    param_cardinality: Option<usize>,
    #[arg(long = "synth-word-params", value_name = "BOOL")]
    word_params: Option<bool>,
    #[arg(long = "synth-drift-share", value_name = "FRACTION")]
    drift_share: Option<f64>,
    #[arg(long = "synth-drift-at", value_name = "FRACTION")]
    drift_at: Option<f64>,
    #[arg(long = "synth-zipf", value_name = "EXPONENT")]
    zipf_exponent: Option<f64>,
    #[arg(long = "synth-rate", value_name = "LINES_PER_SEC")]
    rate: Option<f64>,
    #[arg(long = "synth-seed", value_name = "N")]
    seed: Option<u64>,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        let mut c = SynthConfig::default();
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        apply!(lines, templates, anomaly_templates, anomaly_bursts, param_cardinality, word_params);
        apply!(drift_share, drift_at, zipf_exponent, rate, seed);
        c
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Dataset(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Other(_) => 1,
            Self::Dataset(_) => 2,
            Self::Config(_) => 3,
        }
    }
}

impl From<SettingsError> for CliError {
    fn from(e: SettingsError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::Dataset(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(c) => Self::Config(c.to_string()),
            EvalError::Metrics(m) => Self::Dataset(m.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Dataset(d) => d.into(),
            BenchError::Eval(e) => e.into(),
        }
    }
}

impl From<trielog_core::config::ConfigError> for CliError {
    fn from(e: trielog_core::config::ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let settings = Settings::load(cli.config.as_deref(), &cli.flags)?;
    match &cli.command {
        Command::RunOffline { data, floor } => run_offline(cli, &settings, data, *floor),
        Command::RunOnline { data, variant } => run_online(cli, &settings, data, *variant),
        Command::Bench { dataset, format, synth } => bench(cli, &settings, dataset.as_deref(), *format, synth),
        Command::GenSynth { synth, out } => gen_synth(synth, out.as_deref()),
        Command::Serve { import, export_on_exit } => serve(&settings, import.as_deref(), export_on_exit.as_deref()),
        Command::ExportTemplates { data, out } => export_templates(&settings, data, out.as_deref()),
        Command::ImportTemplates { catalog, dataset, format, out } => {
            import_templates(cli, &settings, catalog, dataset.as_deref(), *format, out.as_deref())
        }
    }
}

fn emit(cli: &Cli, table: &str, report: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).context("serializing report")?;
    if let Some(path) = &cli.json_out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    if cli.json {
        println!("{text}");
    } else {
        print!("{table}");
    }
    Ok(())
}

fn load(data: &DatasetArgs) -> Result<LabeledDataset, CliError> {
    let ds = eval::load_path(&data.dataset, data.format.into(), data.limit)?;
    if ds.skipped > 0 {
        tracing::warn!(skipped = ds.skipped, "malformed lines skipped");
    }
    Ok(ds)
}

fn heading(s: &mut String, title: &str) {
    s.push_str(&format!("== {title} ==\n"));
}

fn run_offline(cli: &Cli, settings: &Settings, data: &DatasetArgs, floor: bool) -> Result<(), CliError> {
    let setup = EvalSetup::from_config(&settings.engine)?;
    let ds = load(data)?;
    let offline = eval::run_offline(&ds, &setup)?;
    let mut table = String::new();
    heading(&mut table, &format!("offline: {} ({} lines, {} anomalous)", ds.name, ds.len(), ds.anomalies()));
    table.push_str(&format!("{:<16}{:>14}\n{:<16}{:>14}\n", "train lines", offline.train_lines, "test lines", offline.test_lines));
    table.push_str(&offline.metrics.table());
    let mut report = json!({ "dataset": ds.name, "offline": offline });
    if floor {
        let f = eval::run_floor(&ds, &setup)?;
        heading(&mut table, "no-feedback floor");
        table.push_str(&f.metrics.table());
        report["floor"] = serde_json::to_value(&f).context("serializing floor report")?;
    }
    emit(cli, &table, &report)
}

fn online_table(r: &OnlineReport) -> String {
    let mut s = format!("{:<8}{:>10}{:>10}{:>10}\n", "chunk", "F1", "windows", "queries");
    for (i, m) in r.chunks.iter().enumerate() {
        s.push_str(&format!("{:<8}{:>10.4}{:>10}{:>10}\n", i + 1, m.f1, m.windows_total, m.queries_issued));
    }
    s.push_str(&format!("{:<8}{:>10.4}\n", "mean", r.mean_f1));
    s
}

fn run_online(cli: &Cli, settings: &Settings, data: &DatasetArgs, variant: Variant) -> Result<(), CliError> {
    let setup = EvalSetup::from_config(&settings.engine)?;
    let ds = load(data)?;
    let mut table = String::new();
    let mut report = json!({ "dataset": ds.name });
    for (name, wipe) in [("kept", false), ("wiped", true)] {
        if variant == Variant::Both || (variant == Variant::Wiped) == wipe {
            let r = eval::run_online(&ds, &setup, wipe)?;
            heading(&mut table, &format!("online, knowledge base {name}"));
            table.push_str(&online_table(&r));
            report[name] = serde_json::to_value(&r).context("serializing online report")?;
        }
    }
    emit(cli, &table, &report)
}

fn bench(cli: &Cli, settings: &Settings, dataset: Option<&Path>, format: Format, synth: &SynthArgs) -> Result<(), CliError> {
    let setup = EvalSetup::from_config(&settings.engine)?;
    let (name, text, format) = match dataset {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Dataset(format!("{}: {e}", p.display())))?;
            (p.display().to_string(), text, format.into())
        }
        None => {
            let cfg = synth.config();
            (format!("synthetic ({} lines, {} templates)", cfg.lines, cfg.templates), eval::generate_bgl_text(&cfg), DatasetFormat::Bgl)
        }
    };
    let r = eval::run_bench(&text, format, &setup)?;
    drop(text);
    let mb = |b: Option<u64>| b.map_or("n/a".to_string(), |b| format!("{:.1}", b as f64 / 1e6));
    let mut table = String::new();
    heading(&mut table, &format!("bench: {name}"));
    table.push_str(&format!("{:<22}{:>14}\n", "lines", r.lines));
    table.push_str(&format!("{:<22}{:>14.0}\n", "lines/s", r.lines_per_sec));
    table.push_str(&format!("{:<22}{:>14}\n", "templates", r.stats.clusters));
    table.push_str(&format!("{:<22}{:>14}\n", "detector entries", r.detector_entries));
    table.push_str(&format!("{:<22}{:>14}\n", "baseline RSS (MB)", mb(r.baseline_rss)));
    table.push_str(&format!("{:<22}{:>14}\n", "engine memory (MB)", mb(r.engine_memory)));
    table.push_str(&r.metrics.table());
    emit(cli, &table, &json!({ "dataset": name, "bench": r }))
}

fn gen_synth(synth: &SynthArgs, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = synth.config();
    let n = match out {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            eval::write_bgl(&cfg, BufWriter::new(f))
        }
        None => eval::write_bgl(&cfg, io::stdout().lock()),
    }
    .context("writing synthetic log")?;
    eprintln!("wrote {n} lines");
    Ok(())
}

fn read_catalog(path: &Path) -> Result<Vec<CatalogEntry>, CliError> {
    let f = File::open(path).map_err(|e| CliError::Dataset(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::Dataset(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| CliError::Dataset(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

fn write_catalog(entries: &[CatalogEntry], out: Option<&Path>) -> Result<(), CliError> {
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    };
    for e in entries {
        serde_json::to_writer(&mut w, e).context("writing catalog")?;
        w.write_all(b"\n").context("writing catalog")?;
    }
    w.flush().context("writing catalog")?;
    Ok(())
}

fn feed(engine: &mut Engine, ds: LabeledDataset) {
    let base = engine.stats().processed + engine.stats().malformed;
    for (i, l) in ds.lines.into_iter().enumerate() {
        let mut raw = RawLine::new(base + i as u64, l.text);
        raw.timestamp = l.timestamp;
        let meta = LineMeta {
            level: l.level.as_deref().map(str::to_string),
            component: l.component.as_deref().map(str::to_string),
            label: Some(l.label),
        };
        engine.ingest(raw, meta);
    }
    engine.flush();
}

fn export_templates(settings: &Settings, data: &DatasetArgs, out: Option<&Path>) -> Result<(), CliError> {
    let setup = EvalSetup::from_config(&settings.engine)?;
    let ds = load(data)?;
    let mut engine = setup.engine(Vec::new())?;
    feed(&mut engine, ds);
    let catalog = engine.export_catalog();
    write_catalog(&catalog, out)?;
    eprintln!("exported {} templates from {} lines", catalog.len(), engine.stats().processed);
    Ok(())
}

fn import_templates(
    cli: &Cli,
    settings: &Settings,
    catalog: &Path,
    dataset: Option<&Path>,
    format: Format,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let setup = EvalSetup::from_config(&settings.engine)?;
    let entries = read_catalog(catalog)?;
    let mut engine = setup.engine(Vec::new())?;
    let imported = engine
        .import_catalog(&entries)
        .map_err(|e| CliError::Dataset(format!("{}: {e}", catalog.display())))?;
    if let Some(p) = dataset {
        feed(&mut engine, eval::load_path(p, format.into(), None)?);
    }
    if let Some(p) = out {
        write_catalog(&engine.export_catalog(), Some(p))?;
    }
    let templates = engine.templates();
    let mut table = format!("imported {imported} templates\n{:>8}  {:>10}  template\n", "id", "count");
    for t in &templates {
        table.push_str(&format!("{:>8}  {:>10}  {}\n", t.cluster_id, t.count, t.rendered));
    }
    emit(cli, &table, &json!({ "imported": imported, "stats": engine.stats(), "templates": templates }))
}

fn serve(settings: &Settings, import: Option<&Path>, export_on_exit: Option<&Path>) -> Result<(), CliError> {
    let token = settings.service.token().map_err(|e| CliError::Config(e.to_string()))?;
    let mut engine = Engine::from_config(&settings.engine)?;
    if let Some(p) = import {
        let n = engine
            .import_catalog(&read_catalog(p)?)
            .map_err(|e| CliError::Dataset(format!("{}: {e}", p.display())))?;
        tracing::info!(templates = n, "catalog imported");
    }
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    let cfg = settings.service.clone();
    let engine = rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.bind)
            .await
            .with_context(|| format!("binding {}", cfg.bind))?;
        eprintln!("listening on {}", listener.local_addr().context("local address")?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        trielog_service::serve(listener, engine, &cfg, token, shutdown)
            .await
            .context("serving")
    })?;
    if let Some(p) = export_on_exit {
        write_catalog(&engine.export_catalog(), Some(p))?;
    }
    Ok(())
}

