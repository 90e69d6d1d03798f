//! `borelog`: run the observation service, load batches, import AGS-lite
//! files, reduce raw test files and print borehole logs.

mod client;
mod server;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use borelog_core::ags::{import_ags_lite, AgsMapping};
use borelog_core::api::{batch_summary, Api};
use borelog_core::log::{fetch_borehole_log, ApiSource, BoreholeLog, ResourceSource};
use borelog_core::reduction::{
    build_atterberg_graph, build_cpt_graph, build_spt_graph, cpt_derive_series, AtterbergRaw, CptRaw, Determination,
    GraphRefs, PressuremeterRaw, SptRaw,
};
use borelog_core::{Batch, EntityId, Principal, Store};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "borelog", version, about = "Geotechnical borehole observation service and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Serve the HTTP API until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Journal file; the store is in memory when omitted.
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long, requires = "admin_pass")]
        admin_user: Option<String>,
        #[arg(long, requires = "admin_user")]
        admin_pass: Option<String>,
        /// Public base URL used in links; defaults to http://<bound address>.
        #[arg(long)]
        base_url: Option<String>,
    },
    /// Create every entity of a batch document. Without a target the batch
    /// is checked against an empty in-memory store.
    Load {
        file: PathBuf,
        #[command(flatten)]
        target: Target,
    },
    /// Convert an AGS-lite file into a batch document.
    ImportAgs {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Replacement heading mapping (group,heading,role CSV).
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Print the borehole log of a collar.
    Log {
        collar_id: u64,
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        target: Target,
    },
    /// Reduce a raw test file to its reported results.
    Reduce {
        kind: TestKind,
        file: PathBuf,
    },
    /// Build the observation graph batch of a raw test file.
    Graph {
        kind: GraphKind,
        file: PathBuf,
        /// JSON object with thing, sensor, featureOfInterest, label and
        /// optional keyPrefix and phenomenonTime.
        #[arg(long)]
        refs: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Target {
    /// Base URL of a running server, e.g. http://127.0.0.1:8080.
    #[arg(long, conflicts_with = "journal")]
    endpoint: Option<String>,
    /// Journal file of an embedded store.
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Basic auth user for --endpoint; also read from BORELOG_USER.
    #[arg(long, env = "BORELOG_USER")]
    user: Option<String>,
    /// Basic auth password for --endpoint; also read from BORELOG_PASS.
    #[arg(long, env = "BORELOG_PASS", hide_env_values = true)]
    pass: Option<String>,
}

impl Target {
    fn authorization(&self) -> Option<String> {
        match (&self.user, &self.pass) {
            (Some(u), Some(p)) => Some(client::basic_header(u, p)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TestKind {
    Spt,
    Atterberg,
    Cpt,
    Pressuremeter,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GraphKind {
    Spt,
    Atterberg,
    Cpt,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Serve { bind, journal, admin_user, admin_pass, base_url } => {
            let store = open_store(journal.as_deref())?;
            if let (Some(u), Some(p)) = (admin_user, admin_pass) {
                store.bootstrap_admin(&u, &p).context("creating the admin user")?;
            }
            server::serve(Arc::new(store), &bind, base_url)?;
            Ok(())
        }
        Command::Load { file, target } => load(&file, &target),
        Command::ImportAgs { file, output, mapping } => {
            let mapping = match mapping {
                Some(p) => AgsMapping::parse(&read(&p)?).with_context(|| format!("mapping {}", p.display()))?,
                None => AgsMapping::default(),
            };
            let imported = import_ags_lite(&read(&file)?, &mapping).with_context(|| format!("{}", file.display()))?;
            for w in &imported.warnings {
                eprintln!("warning: {w}");
            }
            write_json(&output, &serde_json::to_value(&imported.batch).map_err(anyhow::Error::from)?)?;
            eprintln!("wrote {} batch items to {}", imported.batch.requests.len(), output.display());
            Ok(())
        }
        Command::Log { collar_id, csv, target } => {
            let log = fetch_log(EntityId(collar_id), &target)?;
            emit(&if csv { log.to_csv() } else { log.to_text() });
            Ok(())
        }
        Command::Reduce { kind, file } => {
            let raw = read_json(&file)?;
            emit(&(pretty(&reduce(kind, raw)?) + "\n"));
            Ok(())
        }
        Command::Graph { kind, file, refs, output } => {
            let raw = read_json(&file)?;
            let refs: GraphRefs = serde_json::from_value(read_json(&refs)?).context("graph refs")?;
            let batch = match kind {
                GraphKind::Spt => build_spt_graph(&parse::<SptRaw>(raw)?, &refs),
                GraphKind::Atterberg => build_atterberg_graph(&parse::<AtterbergRaw>(raw)?, &refs),
                GraphKind::Cpt => build_cpt_graph(&parse::<CptRaw>(raw)?, &refs),
            }
            .map_err(anyhow::Error::from)?;
            let doc = serde_json::to_value(&batch).map_err(anyhow::Error::from)?;
            match output {
                Some(p) => write_json(&p, &doc)?,
                None => emit(&(pretty(&doc) + "\n")),
            }
            Ok(())
        }
    }
}

fn load(file: &Path, target: &Target) -> CliResult {
    let doc = read_json(file)?;
    if let Some(endpoint) = &target.endpoint {
        let summary = client::post_batch(endpoint, target.authorization().as_deref(), &doc)?;
        emit(&(pretty(&summary) + "\n"));
        return Ok(());
    }
    let batch = Batch::from_value(doc).context("invalid batch document")?;
    let store = open_store(target.journal.as_deref())?;
    let outcome = store.batch_create(&batch, &Principal::system()).map_err(|e| anyhow!(e))?;
    emit(&(pretty(&batch_summary(&outcome, "/v1.1")) + "\n"));
    if target.journal.is_none() {
        eprintln!("checked against an empty in-memory store; nothing was persisted");
    }
    Ok(())
}

fn fetch_log(collar: EntityId, target: &Target) -> Result<BoreholeLog, Failure> {
    if let Some(endpoint) = &target.endpoint {
        let mut src = client::HttpSource::new(endpoint, target.authorization());
        return fetch(&mut src, collar);
    }
    let Some(journal) = &target.journal else {
        return Err(Failure::Usage("log needs --endpoint or --journal".into()));
    };
    let store = Store::open(journal).with_context(|| format!("opening {}", journal.display()))?;
    let api = Api::new(Arc::new(store), "");
    let mut src = ApiSource::trusted(&api, Principal::system());
    fetch(&mut src, collar)
}

fn fetch(src: &mut dyn ResourceSource, collar: EntityId) -> Result<BoreholeLog, Failure> {
    fetch_borehole_log(src, collar).map_err(|e| Failure::Data(e.into()))
}

fn open_store(journal: Option<&Path>) -> anyhow::Result<Store> {
    match journal {
        Some(p) => Store::open(p).with_context(|| format!("opening journal {}", p.display())),
        None => Ok(Store::in_memory()),
    }
}

fn determination(d: Option<Determination<f64>>) -> Value {
    match d {
        None => Value::Null,
        Some(Determination::Determined(v)) => json!(v),
        Some(Determination::Undetermined) => json!("undetermined"),
    }
}

fn reduce(kind: TestKind, raw: Value) -> anyhow::Result<Value> {
    Ok(match kind {
        TestKind::Spt => {
            let r = parse::<SptRaw>(raw)?.reduce()?;
            json!({
                "nValue": r.n_value.label(),
                "n60": r.n60,
                "n1_60": r.n1_60,
                "terminationReason": r.termination,
            })
        }
        TestKind::Atterberg => {
            let r = parse::<AtterbergRaw>(raw)?.reduce()?;
            let label = |d: Determination<i64>| d.value().map_or(json!("undetermined"), |v| json!(v));
            json!({
                "liquidLimit": label(r.liquid_limit),
                "plasticLimit": label(r.plastic_limit),
                "plasticityIndex": r.plasticity_index.to_string(),
            })
        }
        TestKind::Cpt => {
            let raw = parse::<CptRaw>(raw)?;
            let rows = cpt_derive_series(&raw.rows)?;
            json!({ "rows": rows.iter().map(|r| json!({ "depth": r.depth, "frictionRatio": r.friction_ratio })).collect::<Vec<_>>() })
        }
        TestKind::Pressuremeter => {
            let r = parse::<PressuremeterRaw>(raw)?.reduce()?;
            json!({
                "creepPressure": determination(r.creep_pressure),
                "limitPressure": determination(r.limit_pressure),
            })
        }
    })
}

fn parse<T: serde::de::DeserializeOwned>(v: Value) -> anyhow::Result<T> {
    serde_json::from_value(v).context("raw test file does not match the expected layout")
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, v: &Value) -> anyhow::Result<()> {
    std::fs::write(path, pretty(v) + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values serialize")
}
