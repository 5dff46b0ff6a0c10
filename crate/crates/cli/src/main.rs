use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hpkb_core::audit::{Auditor, Envelope, Prescription, Transport, TransportError};
use hpkb_core::eval::{case_study_corpus, case_study_prescription, generate_corpus, run_eval, EvalConfig};
use hpkb_core::ingest::{build_store, load_corpus, section_markdown, write_corpus};
use hpkb_core::par::Execution;
use hpkb_core::schema::{
    read_proposal_log, run_isr, seed_schema, standard_schema, write_proposal_log, ExpertPolicy, GapDetector,
    HybridSchema, InteractivePolicy, ReplayProposer, RuleTemplateDetector, ScriptedPolicy, StratifiedDoc,
    DEFAULT_N_STABLE,
};
use hpkb_core::store::{load_store, save_store};

/// Hybrid pharmaceutical knowledge base: build, refine, audit, evaluate.
#[derive(Parser)]
#[command(name = "hpkb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a corpus directory into a sealed store directory.
    Build(BuildArgs),
    /// Refine a schema over a corpus until it stabilizes.
    Isr(IsrArgs),
    /// Audit a prescription against a sealed store.
    Audit(AuditArgs),
    /// Run the synthetic evaluation end to end.
    Eval(EvalArgs),
    /// Write a synthetic corpus (or the two-drug fixture) to a directory.
    GenCorpus(GenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Adapter {
    Deterministic,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    /// Accept every proposal.
    AcceptAll,
    /// Ask on the terminal.
    Interactive,
}

#[derive(Args)]
struct ExecArgs {
    /// Run every stage on one thread.
    #[arg(long)]
    sequential: bool,
}

impl ExecArgs {
    fn mode(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    /// Corpus directory holding manifest.json.
    #[arg(long)]
    corpus: PathBuf,
    /// Schema JSON; the built-in schema when omitted.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output store directory. Must not already hold a store.
    #[arg(long)]
    store: PathBuf,
    /// Where to write ingest-report.json; the store directory when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated strata to keep.
    #[arg(long, value_delimiter = ',')]
    strata: Vec<String>,
    #[command(flatten)]
    exec: ExecArgs,
}

#[derive(Args)]
struct IsrArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Seed schema JSON; the minimal seed when omitted.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output directory for schema.json and proposals.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_N_STABLE)]
    n_stable: usize,
    #[arg(long, value_delimiter = ',')]
    strata: Vec<String>,
    #[arg(long, value_enum, default_value = "accept-all")]
    policy: Policy,
    /// Replay proposals and verdicts from a recorded log instead.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    /// Sealed store directory.
    #[arg(long)]
    store: PathBuf,
    /// Prescription JSON file.
    prescription: PathBuf,
    /// Report output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long, value_enum, default_value = "deterministic")]
    adapter: Adapter,
    /// Agent endpoint for the remote adapter.
    #[arg(long, env = "HPKB_AGENT_ENDPOINT")]
    endpoint: Option<String>,
    /// Seconds to wait for the agent.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    #[command(flatten)]
    exec: ExecArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_docs: usize,
    #[arg(long, value_delimiter = ',')]
    strata: Vec<String>,
    /// Directory for summary.json and summary.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Skip the operation-count scaling runs.
    #[arg(long)]
    no_scaling: bool,
    #[command(flatten)]
    exec: ExecArgs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_docs: usize,
    #[arg(long, value_delimiter = ',')]
    strata: Vec<String>,
    /// Write the two-drug fixture and its prescription instead.
    #[arg(long)]
    case_study: bool,
}

/// Posts envelopes as JSON and reads one envelope back.
struct HttpTransport {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    fn new(endpoint: &str, timeout: Duration) -> Self {
        HttpTransport { endpoint: endpoint.to_string(), agent: ureq::AgentBuilder::new().timeout(timeout).build() }
    }
}

impl Transport for HttpTransport {
    fn exchange(&self, request: &Envelope) -> Result<Envelope, TransportError> {
        match self.agent.post(&self.endpoint).send_json(request) {
            Ok(resp) => resp.into_json().map_err(|e| TransportError::Io(e.to_string())),
            Err(ureq::Error::Status(code, resp)) => {
                Err(TransportError::Rejected(format!("HTTP {code}: {}", resp.into_string().unwrap_or_default())))
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") {
                    Err(TransportError::Timeout)
                } else {
                    Err(TransportError::Io(msg))
                }
            }
        }
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        bail!("{what} {} is not a directory", path.display());
    }
    Ok(())
}

fn load_schema(path: Option<&Path>, fallback: fn() -> HybridSchema) -> Result<HybridSchema> {
    match path {
        Some(p) => HybridSchema::load(p).with_context(|| format!("loading schema {}", p.display())),
        None => Ok(fallback()),
    }
}

fn write_json(path: &Path, json: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

fn cmd_build(a: BuildArgs) -> Result<ExitCode> {
    require_dir(&a.corpus, "corpus")?;
    if a.store.join("manifest.json").exists() {
        bail!("{} already holds a store; sealed stores are never rewritten", a.store.display());
    }
    let schema = load_schema(a.schema.as_deref(), standard_schema)?;
    let corpus = load_corpus(&a.corpus, &a.strata)?;
    let mut out = build_store(&corpus, schema, a.exec.mode(), None)?;
    let report_path = a.out.unwrap_or_else(|| a.store.clone()).join("ingest-report.json");
    write_json(&report_path, &serde_json::to_string_pretty(&out.report)?)?;
    if let Err(e) = out.store.seal() {
        eprintln!("store not sealed: {e}");
        return Ok(ExitCode::from(1));
    }
    save_store(&out.store, &a.store)?;
    println!(
        "{} documents, {} facts, {} quarantined; sealed {}",
        out.report.documents,
        out.report.facts_inserted(),
        out.report.quarantined.len(),
        out.store.seal_hash().unwrap_or_default()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_isr(a: IsrArgs) -> Result<ExitCode> {
    require_dir(&a.corpus, "corpus")?;
    let seed = load_schema(a.schema.as_deref(), seed_schema)?;
    let mut corpus = Vec::new();
    for d in load_corpus(&a.corpus, &a.strata)? {
        corpus.push(StratifiedDoc { doc: section_markdown(&d.doc_id, &d.markdown)?, stratum: d.stratum });
    }
    let replay = a.replay.as_deref().map(read_proposal_log).transpose()?;
    let template = RuleTemplateDetector::default();
    let replayer;
    let proposer: &dyn GapDetector = match &replay {
        Some(log) => {
            replayer = ReplayProposer::from_log(log);
            &replayer
        }
        None => &template,
    };
    let stdin = io::stdin();
    let mut policy: Box<dyn ExpertPolicy> = match (&replay, a.policy) {
        (Some(log), _) => Box::new(ScriptedPolicy::from_log(log)),
        (None, Policy::AcceptAll) => Box::new(ScriptedPolicy::accept_all()),
        (None, Policy::Interactive) => Box::new(InteractivePolicy::new(BufReader::new(stdin.lock()), io::stderr())),
    };
    let outcome = run_isr(&corpus, seed, proposer, policy.as_mut(), a.n_stable);
    fs::create_dir_all(&a.out)?;
    outcome.schema().save(&a.out.join("schema.json"))?;
    write_proposal_log(&a.out.join("proposals.jsonl"), &outcome.state.log)?;
    println!(
        "{} after {} of {} documents; schema v{} ({} tables, {} labels, {} edge types)",
        if outcome.converged { "stabilized" } else { "corpus exhausted" },
        outcome.state.docs_processed,
        corpus.len(),
        outcome.schema().version,
        outcome.schema().tables.len(),
        outcome.schema().node_labels.len(),
        outcome.schema().edge_types.len()
    );
    Ok(if outcome.converged { ExitCode::SUCCESS } else { ExitCode::from(4) })
}

fn cmd_audit(a: AuditArgs) -> Result<ExitCode> {
    require_dir(&a.store, "store")?;
    let text = fs::read_to_string(&a.prescription).with_context(|| format!("reading {}", a.prescription.display()))?;
    let prescription: Prescription = serde_json::from_str(&text).context("parsing prescription")?;
    let transport = match a.adapter {
        Adapter::Deterministic => None,
        Adapter::Remote => {
            let Some(endpoint) = a.endpoint.as_deref() else {
                bail!("--adapter remote needs --endpoint or HPKB_AGENT_ENDPOINT");
            };
            Some(HttpTransport::new(endpoint, Duration::from_secs(a.timeout)))
        }
    };
    let store = load_store(&a.store)?;
    let agent = transport.as_ref().map(|t| t as &dyn Transport);
    let auditor = Auditor { execution: a.exec.mode(), decomposition: agent, synthesis: agent, ..Default::default() };
    let report = auditor.audit(&prescription, &store)?;
    let rendered = match a.format {
        Format::Json => report.to_json(),
        Format::Text => report.render_text(),
    };
    match &a.out {
        Some(p) => write_json(p, &rendered)?,
        None => println!("{rendered}"),
    }
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let config = EvalConfig {
        seed: a.seed,
        n_docs: a.n_docs,
        strata: a.strata,
        execution: a.exec.mode(),
        ..Default::default()
    };
    let summary = run_eval(&config, !a.no_scaling)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.json"), summary.to_json())?;
        fs::write(dir.join("summary.txt"), summary.render_text())?;
    }
    match a.format {
        Format::Json => println!("{}", summary.to_json()),
        Format::Text => print!("{}", summary.render_text()),
    }
    Ok(if summary.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_gen(a: GenArgs) -> Result<ExitCode> {
    if a.case_study {
        write_corpus(&a.out, &case_study_corpus())?;
        write_json(&a.out.join("prescription.json"), &serde_json::to_string_pretty(&case_study_prescription())?)?;
        println!("wrote fixture corpus and prescription.json to {}", a.out.display());
    } else {
        let corpus = generate_corpus(a.seed, a.n_docs, &a.strata);
        write_corpus(&a.out, &corpus.corpus_docs())?;
        println!("wrote {} documents ({} gold records) to {}", corpus.docs.len(), corpus.gold_records(), a.out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Isr(a) => cmd_isr(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::GenCorpus(a) => cmd_gen(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
