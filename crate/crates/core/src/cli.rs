//! Command-line front end. Every flag can also be set through an `RPCLURE_*` variable.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use bigdecimal::BigDecimal;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::gateway::record::read_log;
use crate::gateway::server::serve;
use crate::gateway::{Gateway, HoneypotConfig, NdjsonLog};
use crate::ledger::{crawl, CrawlOptions, LabelSet, LedgerStore};
use crate::miner::{analyze, AttackerGroup, BehaviorOptions, GroupingOptions};
use crate::node::{BackendEndpoint, NodeClient};
use crate::sim::{run_scenario, Scenario, ScenarioKind};
use crate::taint::report::{ProfitReport, DEFAULT_PRICE};
use crate::taint::{estimate_profit, export_dot, trace, DEFAULT_THRESHOLD};
use crate::wire::{decode_call_data, decode_raw_hex, SelectorRegistry};

#[derive(Debug, Parser)]
#[command(name = "rpclure", version, about = "Ethereum JSON-RPC honeypot and log forensics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the honeypot gateway until interrupted.
    Serve(ServeArgs),
    /// Replay a scripted attacker against a gateway URL.
    Replay(ReplayArgs),
    /// Decode raw signed transactions.
    Decode(DecodeArgs),
    /// Import ledger transactions (NDJSON) into a store file.
    Ingest(IngestArgs),
    /// Fetch transactions from a node block by block.
    Crawl(CrawlArgs),
    /// Extract attacker addresses from a gateway log, group them and flag behaviors.
    Group(GroupArgs),
    /// Trace attacker funds to markets and write the profit report and graph.
    Taint(TaintArgs),
    /// Re-render a profit report CSV with totals at a given price.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML or JSON gateway configuration.
    #[arg(long, env = "RPCLURE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "RPCLURE_PORT")]
    pub port: Option<u16>,
    /// NDJSON request log.
    #[arg(long, env = "RPCLURE_LOG")]
    pub log: Option<PathBuf>,
    /// Backend node URL for forwarded methods.
    #[arg(long, env = "RPCLURE_BACKEND")]
    pub backend: Option<String>,
    #[arg(long, env = "RPCLURE_BIND", default_value = "0.0.0.0")]
    pub bind: String,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long, env = "RPCLURE_SCENARIO", value_parser = ScenarioKind::from_str)]
    pub scenario: ScenarioKind,
    /// Gateway URL to attack.
    #[arg(long, env = "RPCLURE_TARGET")]
    pub target: String,
    #[arg(long, env = "RPCLURE_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Paced requests per second.
    #[arg(long, env = "RPCLURE_RATE", default_value_t = 50.0)]
    pub rate: f64,
    /// Seconds of paced sending.
    #[arg(long, env = "RPCLURE_DURATION", default_value_t = 10.0)]
    pub duration: f64,
    /// Password list, one per line.
    #[arg(long, env = "RPCLURE_DICT")]
    pub dict: Option<PathBuf>,
    #[arg(long, env = "RPCLURE_SENDERS")]
    pub senders: Option<usize>,
    /// Trace output (NDJSON); standard output when absent.
    #[arg(long, env = "RPCLURE_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// One 0x-prefixed raw transaction.
    #[arg(long, env = "RPCLURE_RAW", conflicts_with = "input")]
    pub raw: Option<String>,
    /// File with one raw transaction per line, `-` for standard input.
    #[arg(long, env = "RPCLURE_INPUT")]
    pub input: Option<PathBuf>,
    /// Extra selectors, CSV `selector_hex,signature`.
    #[arg(long, env = "RPCLURE_REGISTRY")]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// LedgerTx NDJSON, `-` for standard input.
    #[arg(long, env = "RPCLURE_INPUT")]
    pub input: PathBuf,
    /// Store file; created if missing.
    #[arg(long, env = "RPCLURE_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrawlArgs {
    #[arg(long, env = "RPCLURE_BACKEND")]
    pub backend: String,
    #[arg(long)]
    pub from: u64,
    #[arg(long)]
    pub to: u64,
    /// NDJSON output, appended to.
    #[arg(long, env = "RPCLURE_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "RPCLURE_CHECKPOINT", default_value = "crawl.checkpoint.json")]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    /// Gateway log, `-` for standard input.
    #[arg(long, env = "RPCLURE_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "RPCLURE_REGISTRY")]
    pub registry: Option<PathBuf>,
    /// Tor exit list, one IP per line.
    #[arg(long, env = "RPCLURE_TOR")]
    pub tor: Option<PathBuf>,
    /// Requests needed before a shared id merges addresses.
    #[arg(long, env = "RPCLURE_MIN_ID_COUNT", default_value_t = 100)]
    pub min_id_count: usize,
    /// Output directory for groups.json and behaviors.json.
    #[arg(long, env = "RPCLURE_OUT", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TaintArgs {
    /// groups.json written by `group`.
    #[arg(long, env = "RPCLURE_GROUPS")]
    pub groups: PathBuf,
    /// Labels CSV `address,label,name`.
    #[arg(long, env = "RPCLURE_LABELS")]
    pub labels: PathBuf,
    /// Ledger store or LedgerTx NDJSON, `-` for standard input.
    #[arg(long, env = "RPCLURE_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "RPCLURE_THRESHOLD", default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: u32,
    /// USD per Ether.
    #[arg(long, env = "RPCLURE_PRICE", default_value = DEFAULT_PRICE)]
    pub price: BigDecimal,
    /// Output directory for report.csv and graph.dot.
    #[arg(long, env = "RPCLURE_OUT", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report CSV, `-` for standard input.
    #[arg(long, env = "RPCLURE_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "RPCLURE_PRICE", default_value = DEFAULT_PRICE)]
    pub price: BigDecimal,
    /// Output file; standard output when absent.
    #[arg(long, env = "RPCLURE_OUT")]
    pub out: Option<PathBuf>,
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(io::stdout().lock())),
        Some(p) if p == Path::new("-") => Ok(Box::new(io::stdout().lock())),
        Some(p) => Ok(Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        ))),
    }
}

fn registry(path: Option<&Path>) -> Result<SelectorRegistry> {
    let mut reg = SelectorRegistry::with_defaults();
    if let Some(p) = path {
        reg.load_csv(open_input(p)?).with_context(|| format!("loading {}", p.display()))?;
    }
    Ok(reg)
}

async fn cmd_serve(a: ServeArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => HoneypotConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => HoneypotConfig::default(),
    };
    if let Some(port) = a.port {
        cfg.listen_port = port;
    }
    if let Some(log) = a.log {
        cfg.log_path = log;
    }
    if let Some(b) = a.backend {
        cfg.backend_url = b;
    }
    let bind: SocketAddr = format!("{}:{}", a.bind, cfg.listen_port)
        .parse()
        .with_context(|| format!("bad bind address {}", a.bind))?;
    let log = Arc::new(NdjsonLog::open(&cfg.log_path).with_context(|| format!("opening log {}", cfg.log_path.display()))?);
    let backend = NodeClient::new(BackendEndpoint::new(cfg.backend_url.clone()));
    if !backend.health_check().await {
        tracing::warn!(backend = %cfg.backend_url, "backend not answering; forwarded calls will get internal errors");
    }
    let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
    tracing::info!(addr = %listener.local_addr()?, log = %cfg.log_path.display(), "gateway listening");
    let gateway = Arc::new(Gateway::new(cfg, backend));
    serve(gateway, log.clone(), listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    tracing::info!(records = log.written(), "gateway stopped");
    Ok(())
}

async fn cmd_replay(a: ReplayArgs) -> Result<()> {
    if !(a.rate > 0.0) || !(a.duration >= 0.0) {
        bail!("--rate must be positive and --duration non-negative");
    }
    let mut s = Scenario::new(a.scenario, a.seed);
    s.params.rate = a.rate;
    s.params.duration = Duration::from_secs_f64(a.duration);
    if let Some(n) = a.senders {
        s.params.senders = n;
    }
    if let Some(d) = &a.dict {
        let text = std::fs::read_to_string(d).with_context(|| format!("reading {}", d.display()))?;
        s.params.dictionary = text.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect();
    }
    let mut out = open_output(a.out.as_deref())?;
    let (trace, truth) = run_scenario(&s, &a.target).await;
    for e in &trace.entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    eprintln!("{}", serde_json::to_string(&json!({"scenario": trace.scenario, "sent": trace.entries.len(), "complete": trace.complete, "truth": truth}))?);
    if !trace.complete {
        bail!("replay incomplete: {}", trace.error.unwrap_or_default());
    }
    Ok(())
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    let reg = registry(a.registry.as_deref())?;
    let raws: Vec<String> = match (&a.raw, &a.input) {
        (Some(r), _) => vec![r.clone()],
        (None, Some(p)) => open_input(p)?
            .lines()
            .map(|l| l.map(|l| l.trim().to_owned()))
            .filter(|l| l.as_ref().map_or(true, |l| !l.is_empty()))
            .collect::<io::Result<_>>()?,
        (None, None) => bail!("one of --raw or --input is required"),
    };
    let mut out = io::stdout().lock();
    let mut failed = 0;
    for raw in &raws {
        match decode_raw_hex(raw) {
            Ok(tx) => {
                let call = decode_call_data(&tx.data, &reg).ok();
                let mut v = serde_json::to_value(&tx)?;
                v["hash"] = json!(format!("0x{}", hex::encode(tx.hash())));
                v["call"] = serde_json::to_value(&call)?;
                writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
            }
            Err(e) => {
                failed += 1;
                eprintln!("cannot decode {}: {e}", &raw[..raw.len().min(20)]);
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} transactions failed to decode", raws.len());
    }
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let (mut store, _) = LedgerStore::load(&a.out).with_context(|| format!("loading {}", a.out.display()))?;
    let report = store.import_transactions(open_input(&a.input)?)?;
    for (line, reason) in &report.malformed {
        eprintln!("line {line}: {reason}");
    }
    store.save(&a.out)?;
    eprintln!(
        "imported {} new, {} duplicate, {} malformed; store holds {}",
        report.inserted,
        report.duplicates,
        report.malformed.len(),
        store.len()
    );
    Ok(())
}

async fn cmd_crawl(a: CrawlArgs) -> Result<()> {
    if a.from > a.to {
        bail!("--from must not exceed --to");
    }
    let client = NodeClient::new(BackendEndpoint::new(a.backend));
    let f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&a.out)
        .with_context(|| format!("opening {}", a.out.display()))?;
    let mut out = BufWriter::new(f);
    let summary = crawl(&client, a.from..=a.to, &a.checkpoint, &mut out, &CrawlOptions::default()).await?;
    eprintln!("crawled {} blocks, {} transactions", summary.blocks, summary.lines);
    Ok(())
}

fn cmd_group(a: GroupArgs) -> Result<()> {
    let reg = registry(a.registry.as_deref())?;
    let mut gopts = GroupingOptions {
        min_id_count: a.min_id_count,
        ..Default::default()
    };
    if let Some(t) = &a.tor {
        let text = std::fs::read_to_string(t).with_context(|| format!("reading {}", t.display()))?;
        gopts.load_tor_exits(&text).map_err(anyhow::Error::msg)?;
    }
    let log = read_log(open_input(&a.input)?)?;
    for (line, reason) in log.malformed.iter().take(10) {
        eprintln!("log line {line}: {reason}");
    }
    let analysis = analyze(&log.records, &reg, &gopts, &BehaviorOptions::default());
    std::fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("groups.json"), &analysis.grouping.groups)?;
    write_json(&a.out.join("behaviors.json"), &analysis.behaviors)?;
    eprintln!(
        "{} records ({} malformed lines), {} targets, {} groups, {} skipped, {} undecodable",
        log.records.len(),
        log.malformed.len(),
        analysis.extraction.targets.len(),
        analysis.grouping.groups.len(),
        analysis.extraction.skipped,
        analysis.extraction.decode_failures
    );
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn cmd_taint(a: TaintArgs) -> Result<()> {
    let groups: Vec<AttackerGroup> = serde_json::from_reader(open_input(&a.groups)?)
        .with_context(|| format!("parsing {}", a.groups.display()))?;
    let labels = LabelSet::from_csv(open_input(&a.labels)?)?;
    let mut ledger = LedgerStore::new();
    let rep = ledger.import_transactions(open_input(&a.input)?)?;
    if !rep.malformed.is_empty() {
        eprintln!("ledger: {} malformed lines skipped", rep.malformed.len());
    }
    let group_of = crate::miner::group_index(&groups);
    let seeds = group_of.keys().copied().collect();
    let graph = trace(&seeds, &labels, &ledger, a.threshold);
    let report = estimate_profit(&graph, &ledger, a.price, &group_of);
    std::fs::create_dir_all(&a.out)?;
    report.write_csv(File::create(a.out.join("report.csv"))?)?;
    std::fs::write(a.out.join("graph.dot"), export_dot(&graph))?;
    eprintln!(
        "{} nodes, {} edges, {} report rows",
        graph.nodes.len(),
        graph.edges.len(),
        report.rows.len()
    );
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let report = ProfitReport::from_csv(open_input(&a.input)?, a.price)?;
    report.write_csv(open_output(a.out.as_deref())?)?;
    Ok(())
}

pub async fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve(a) => cmd_serve(a).await,
        Command::Replay(a) => cmd_replay(a).await,
        Command::Decode(a) => cmd_decode(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Crawl(a) => cmd_crawl(a).await,
        Command::Group(a) => cmd_group(a),
        Command::Taint(a) => cmd_taint(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Exit codes: 0 success, 1 operational failure, 2 usage error.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match rt.block_on(execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
