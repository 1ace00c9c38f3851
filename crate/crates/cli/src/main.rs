//! `ddx`: command-line front end for the diagnosis engine.
//!
//! Machine-readable output goes to stdout (or `--out`); logs go to stderr.
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 failed check or
//! invalid network.

mod interactive;

use std::fs::File;
use std::io::{self, BufWriter, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ddx_core::eval::{
    cheater_detailed, evaluate_cases, evaluate_detailed, evaluate_dialogue, format_table, grid_search, write_csv,
    EvalOptions, EvalReport, UnrecordedAnswer,
};
use ddx_core::io::{network_to_json, read_network_spec, save_network};
use ddx_core::simulator::{sample_cohort, CaseRecord, InitialFinding};
use ddx_core::{
    build_network_from_cases, generate_synthetic_network, load_dialogue_cases, validate, Evidence, Execution,
    LookaheadConfig, NetworkFormat, PriorMode, QmrNetwork, SessionConfig, SyntheticParams, UtilityKind,
};

#[derive(Parser, Debug)]
#[command(name = "ddx", version, about = "Differential diagnosis over noisy-OR belief networks")]
struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a network file and print its statistics.
    Validate {
        #[command(flatten)]
        net: NetArgs,
    },
    /// Sample simulated patient cases and dump them as JSON.
    Simulate {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        run: RunArgs,
        /// How the opening positive finding is chosen.
        #[arg(long, value_enum, default_value_t = InitialArg::Uniform)]
        initial: InitialArg,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one configuration on simulated or recorded cases.
    Evaluate {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        session: SessionArgs,
        /// Maximum number of questions per episode.
        #[arg(long, default_value_t = 20)]
        max_steps: usize,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        report: ReportArgs,
        /// Evaluate a dumped cohort (from `simulate`) instead of sampling one.
        #[arg(long, conflicts_with = "dialogue")]
        cohort: Option<PathBuf>,
        /// Evaluate recorded dialogue cases instead of simulated patients.
        #[arg(long)]
        dialogue: Option<PathBuf>,
        /// Answer for findings a dialogue case does not record.
        #[arg(long, value_enum, default_value_t = UnrecordedArg::Absent)]
        unrecorded: UnrecordedArg,
        /// Also report the cheater baseline (every finding observed) on the same cohort.
        #[arg(long)]
        cheater: bool,
    },
    /// Evaluate every (threshold, max steps) pair on one shared cohort.
    Grid {
        #[command(flatten)]
        net: NetArgs,
        /// Comma-separated utility thresholds (nats).
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.10")]
        thresholds: Vec<f64>,
        /// Comma-separated step budgets.
        #[arg(long, value_delimiter = ',', default_value = "10,15,20")]
        max_steps: Vec<usize>,
        /// Lookahead depth.
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long, value_enum, default_value_t = UtilityArg::Kl)]
        utility: UtilityArg,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Interactive diagnosis in the terminal.
    Diagnose {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value_t = 20)]
        max_steps: usize,
        /// Initial evidence, `+Name` for present or `-Name` for absent; repeatable.
        #[arg(long = "init", allow_hyphen_values = true)]
        init: Vec<String>,
        /// Write the session transcript (JSON lines) here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Build a network from dialogue case records.
    BuildNet {
        /// Case file: `[{"disease", "explicit", "implicit"}, ...]`.
        #[arg(long)]
        cases: PathBuf,
        #[arg(long, value_enum, default_value_t = PriorArg::Uniform)]
        priors: PriorArg,
        /// Output file for the native network JSON (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a random network shaped like a benchmark knowledge base.
    Generate {
        #[arg(long, value_enum)]
        shape: ShapeArg,
        #[arg(long)]
        diseases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP session API.
    Serve {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Allow cross-origin requests (for a separately hosted UI).
        #[arg(long)]
        cors: bool,
        /// Serve static UI assets from this directory.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Keep a JSON-lines transcript per session in this directory.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value_t = 20)]
        max_steps: usize,
    },
}

#[derive(Args, Debug)]
struct NetArgs {
    /// Network file.
    #[arg(long)]
    net: PathBuf,
    /// Network file format.
    #[arg(long, value_enum, default_value_t = FormatArg::Native)]
    format: FormatArg,
}

#[derive(Args, Debug)]
struct SessionArgs {
    /// Stop asking once the best utility drops below this (nats).
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    /// Lookahead depth (1 = greedy).
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long, value_enum, default_value_t = UtilityArg::Kl)]
    utility: UtilityArg,
    /// Length of the final ranking.
    #[arg(long, default_value_t = 5)]
    top_k: usize,
}

impl SessionArgs {
    fn config(&self, max_steps: usize) -> SessionConfig {
        SessionConfig {
            max_steps,
            utility_threshold: self.threshold,
            lookahead: LookaheadConfig::new(self.depth, self.utility.into()),
            top_k: self.top_k,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Number of simulated cases.
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores). Output is identical for any value.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    output_format: Option<OutputArg>,
    /// Exit with code 3 if any report invariant fails.
    #[arg(long)]
    check: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FormatArg {
    Native,
    Symcat,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum UtilityArg {
    Kl,
    Ig,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum UnrecordedArg {
    Absent,
    Skip,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PriorArg {
    Uniform,
    Empirical,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum InitialArg {
    Uniform,
    MostProbable,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ShapeArg {
    Symcat,
    Hpo,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OutputArg {
    Csv,
    Table,
    Json,
}

impl From<FormatArg> for NetworkFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Native => NetworkFormat::Native,
            FormatArg::Symcat => NetworkFormat::Symcat,
        }
    }
}

impl From<UtilityArg> for UtilityKind {
    fn from(u: UtilityArg) -> Self {
        match u {
            UtilityArg::Kl => UtilityKind::Kl,
            UtilityArg::Ig => UtilityKind::Ig,
        }
    }
}

impl From<UnrecordedArg> for UnrecordedAnswer {
    fn from(u: UnrecordedArg) -> Self {
        match u {
            UnrecordedArg::Absent => UnrecordedAnswer::Absent,
            UnrecordedArg::Skip => UnrecordedAnswer::Skip,
        }
    }
}

impl From<InitialArg> for InitialFinding {
    fn from(i: InitialArg) -> Self {
        match i {
            InitialArg::Uniform => InitialFinding::Uniform,
            InitialArg::MostProbable => InitialFinding::MostProbable,
        }
    }
}

/// A failure that maps to a specific exit code.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_ansi(color_enabled(&io::stderr()))
        .with_max_level(if cli.quiet { tracing::Level::WARN } else { tracing::Level::INFO })
        .with_target(false)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<CheckFailed>().is_some() => {
            eprintln!("check failed: {e:#}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

pub(crate) fn color_enabled(stream: &impl IsTerminal) -> bool {
    std::env::var_os("NO_COLOR").map_or(true, |v| v.is_empty()) && stream.is_terminal()
}

fn load(net: &NetArgs) -> Result<QmrNetwork> {
    let spec = read_network_spec(&net.net, net.format.into())?;
    if let Err(violations) = validate(&spec) {
        let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(CheckFailed(format!("{}: {} violation(s)\n{}", net.net.display(), violations.len(), lines.join("\n"))).into());
    }
    Ok(QmrNetwork::from_spec(&spec)?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execution(workers: Option<usize>) -> Result<Execution> {
    match workers {
        Some(0) => bail!("--workers must be at least 1"),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn emit_reports(reports: &[EvalReport], args: &ReportArgs, default: OutputArg) -> Result<()> {
    let mut out = output(args.out.as_deref())?;
    match args.output_format.unwrap_or(default) {
        OutputArg::Csv => write_csv(reports, &mut out)?,
        OutputArg::Table => out.write_all(format_table(reports).as_bytes())?,
        OutputArg::Json => {
            serde_json::to_writer_pretty(&mut out, reports)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    if args.check {
        let problems: Vec<String> = reports.iter().flat_map(|r| r.check()).collect();
        if !problems.is_empty() {
            return Err(CheckFailed(problems.join("; ")).into());
        }
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Validate { net } => {
            let net = load(&net)?;
            let s = net.stats();
            println!("diseases\t{}", s.n_diseases);
            println!("findings\t{}", s.n_findings);
            println!("edges\t{}", s.n_edges);
            println!("isolated_findings\t{}", s.isolated_findings);
            println!("findings_per_disease\t{:.3}", s.findings_per_disease);
            println!("diseases_per_finding\t{:.3}", s.diseases_per_finding);
            Ok(())
        }
        Command::Simulate { net, run, initial, out } => {
            let net = load(&net)?;
            let exec = execution(run.workers)?;
            let cases = sample_cohort(&net, run.cases, run.seed, initial.into(), exec)?;
            let records: Vec<CaseRecord> = cases.iter().map(|c| CaseRecord::from_case(&net, c)).collect();
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &records)?;
            w.write_all(b"\n")?;
            w.flush()?;
            tracing::info!(cases = records.len(), seed = run.seed, "simulated");
            Ok(())
        }
        Command::Evaluate { net, session, max_steps, run, report, cohort, dialogue, unrecorded, cheater } => {
            let net = load(&net)?;
            let cfg = session.config(max_steps);
            cfg.validate()?;
            let exec = execution(run.workers)?;
            let opts = EvalOptions { exec, ..Default::default() };
            let mut reports = Vec::new();
            if let Some(path) = dialogue {
                let cases = load_dialogue_cases(&path)?;
                let (r, _) = evaluate_dialogue(&net, &cases, &cfg, unrecorded.into(), exec)?;
                if r.missing_disease > 0 {
                    tracing::warn!(cases = r.missing_disease, "cases name diseases missing from the network; scored as misses");
                }
                reports.push(r);
            } else if let Some(path) = cohort {
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let records: Vec<CaseRecord> = serde_json::from_str(&text)?;
                let cases = records.iter().map(|r| r.to_case(&net)).collect::<Result<Vec<_>, _>>()?;
                reports.push(evaluate_cases(&net, &cfg, &cases, exec)?);
            } else {
                tracing::info!(cases = run.cases, seed = run.seed, "evaluating");
                reports.push(evaluate_detailed(&net, &cfg, run.cases, run.seed, &opts)?.0);
                if cheater {
                    reports.push(cheater_detailed(&net, run.cases, run.seed, &opts)?.0);
                }
            }
            emit_reports(&reports, &report, OutputArg::Csv)
        }
        Command::Grid { net, thresholds, max_steps, depth, utility, run, report } => {
            let net = load(&net)?;
            let base = SessionConfig { lookahead: LookaheadConfig::new(depth, utility.into()), ..SessionConfig::default() };
            let exec = execution(run.workers)?;
            let opts = EvalOptions { exec, ..Default::default() };
            tracing::info!(cells = thresholds.len() * max_steps.len(), cases = run.cases, "grid search");
            let reports = grid_search(&net, &base, &thresholds, &max_steps, run.cases, run.seed, &opts)?;
            emit_reports(&reports, &report, OutputArg::Table)
        }
        Command::Diagnose { net, session, max_steps, init, transcript } => {
            let net = load(&net)?;
            let cfg = session.config(max_steps);
            let initial = parse_init(&net, &init)?;
            let stdin = io::stdin();
            let stdout = io::stdout();
            let color = color_enabled(&stdout);
            let events = interactive::run(&net, cfg, initial, stdin.lock(), stdout.lock(), color)?;
            if let Some(path) = transcript {
                let mut w = output(Some(&path))?;
                ddx_core::session::write_transcript(&mut w, &events)?;
                w.flush()?;
            }
            Ok(())
        }
        Command::BuildNet { cases, priors, out } => {
            let cases = load_dialogue_cases(&cases)?;
            let mode = match priors {
                PriorArg::Uniform => PriorMode::Uniform,
                PriorArg::Empirical => PriorMode::Empirical,
            };
            let (net, warnings) = build_network_from_cases(&cases, mode)?;
            for w in &warnings {
                tracing::warn!("{w:?}");
            }
            write_network(&net, out.as_deref())
        }
        Command::Generate { shape, diseases, seed, out } => {
            let params = match shape {
                ShapeArg::Symcat => SyntheticParams::symcat_like(diseases),
                ShapeArg::Hpo => SyntheticParams::hpo_like(diseases),
            };
            let net = generate_synthetic_network(&params, seed)?;
            write_network(&net, out.as_deref())
        }
        Command::Serve { net, addr, cors, static_dir, transcripts, session, max_steps } => {
            let net = Arc::new(load(&net)?);
            let defaults = session.config(max_steps);
            defaults.validate()?;
            if let Some(dir) = &transcripts {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let options = ddx_service::ServiceOptions { cors, static_dir, transcript_dir: transcripts, defaults };
            let app = ddx_service::router(net, options);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                tracing::info!(addr = %listener.local_addr()?, "listening");
                ddx_service::serve(listener, app).await?;
                Ok(())
            })
        }
    }
}

fn write_network(net: &QmrNetwork, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => save_network(net, p)?,
        None => println!("{}", network_to_json(net)),
    }
    Ok(())
}

/// `+Name` / `-Name` items into evidence, names matched exactly after trimming.
fn parse_init(net: &QmrNetwork, items: &[String]) -> Result<Evidence> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for item in items {
        let (sign, name) = item.split_at(item.chars().next().map_or(0, char::len_utf8));
        let target = match sign {
            "+" => &mut pos,
            "-" => &mut neg,
            _ => bail!("initial finding {item:?} must start with + or -"),
        };
        let name = name.trim();
        target.push(net.finding_id(name).with_context(|| format!("unknown finding {name:?}"))?);
    }
    Ok(Evidence::from_sets(pos, neg)?)
}
