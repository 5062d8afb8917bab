use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use assist_core::audit::{AuditLog, CaptureProxy, Clock, TraceStore};
use assist_core::code::{enumerate_methods, strip_header};
use assist_core::docs::{DocIndex, Embedder, HashEmbedder, RemoteEmbedder};
use assist_core::harness::{
    build_matrix, bundled_matrix, sampling_presets, summarize, AnnotationFile, AnnotationStore, DefectAnnotation,
    DefectCategory, DefectTable, Endpoint, ModelSet, RunPlan, Runner, SamplingSet, SweepKind, TaskFixture, Variant,
};
use assist_core::http::TraceDirection;
use assist_core::orchestrator::{
    Gateway, HttpChatModel, Orchestrator, OrchestratorConfig, ResponseLanguage, SamplingConfig,
};
use assist_core::repo::{GitLabBackend, RepoSnapshot};
use assist_core::scripted::{Scenario, ScriptedServer};

#[derive(Parser)]
#[command(name = "assist", version, about = "Repository-aware assistant workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interactive chat on stdin/stdout.
    Chat(ChatArgs),
    /// Build or query a document index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Run the gateway or the scripted model endpoint.
    #[command(subcommand)]
    Serve(ServeCommand),
    /// Forward HTTP verbatim to an upstream and store raw traces.
    Proxy(ProxyArgs),
    /// Plan and execute the evaluation matrix.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Record and report defect annotations.
    #[command(subcommand)]
    Defects(DefectsCommand),
    /// Read-only repository access.
    #[command(subcommand)]
    Repo(RepoCommand),
}

#[derive(Args, Clone)]
struct RepoArgs {
    /// Local checkout used as the repository.
    #[arg(long, conflicts_with_all = ["gitlab_url", "project"])]
    repo_dir: Option<PathBuf>,
    /// GitLab API root, e.g. https://gitlab.example.org/api/v4 (token from ASSIST_GITLAB_TOKEN).
    #[arg(long, requires = "project")]
    gitlab_url: Option<String>,
    #[arg(long)]
    project: Option<String>,
    #[arg(long = "ref", default_value = "main")]
    git_ref: String,
}

impl RepoArgs {
    fn snapshot(&self) -> Result<Arc<RepoSnapshot>> {
        match (&self.repo_dir, &self.gitlab_url, &self.project) {
            (Some(dir), _, _) => Ok(Arc::new(RepoSnapshot::local(dir, &self.git_ref))),
            (None, Some(url), Some(project)) => Ok(Arc::new(RepoSnapshot::gitlab(
                GitLabBackend::from_env(url, project),
                &self.git_ref,
            ))),
            _ => bail!("give --repo-dir or --gitlab-url with --project"),
        }
    }
}

#[derive(Args, Clone)]
struct EmbedArgs {
    /// OpenAI-compatible embeddings server; the hash embedder is used when absent.
    #[arg(long)]
    embed_url: Option<String>,
    #[arg(long, requires = "embed_url")]
    embed_model: Option<String>,
    #[arg(long, requires = "embed_url")]
    embed_dim: Option<usize>,
}

impl EmbedArgs {
    fn embedder(&self) -> Result<Arc<dyn Embedder>> {
        match &self.embed_url {
            None => Ok(Arc::new(HashEmbedder)),
            Some(url) => {
                let model = self
                    .embed_model
                    .clone()
                    .ok_or_else(|| anyhow!("--embed-model is required"))?;
                let dim = self.embed_dim.ok_or_else(|| anyhow!("--embed-dim is required"))?;
                Ok(Arc::new(RemoteEmbedder::new(url, model, dim)))
            }
        }
    }
}

fn load_index(path: &Path, embed: &EmbedArgs) -> Result<Arc<DocIndex>> {
    let index = DocIndex::load(path, embed.embedder()?).with_context(|| format!("loading {}", path.display()))?;
    Ok(Arc::new(index))
}

fn kb_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "knowledge-base".into())
}

#[derive(Args)]
struct OrchestratorArgs {
    #[command(flatten)]
    repo: RepoArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Knowledge base written by `assist index build`.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// OpenAI-compatible server base URL (without /v1).
    #[arg(long, default_value = "http://127.0.0.1:8000")]
    endpoint: String,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
    #[arg(long, default_value = "en")]
    language: ResponseLanguage,
    #[arg(long, default_value_t = assist_core::docs::DEFAULT_TOP_K)]
    top_k: usize,
    /// Frozen timestamps in the ledger.
    #[arg(long)]
    replay_clock: bool,
}

impl OrchestratorArgs {
    fn build(&self, models: Vec<String>) -> Result<Orchestrator> {
        let clock = if self.replay_clock {
            Clock::replay()
        } else {
            Clock::Real
        };
        let audit = Arc::new(AuditLog::new(&self.runs_dir, clock)?);
        let traces = Arc::new(TraceStore::new(&self.runs_dir));
        let model = HttpChatModel::new(&self.endpoint).with_sink(traces);
        let config = OrchestratorConfig {
            language: self.language,
            top_k: self.top_k,
            models,
            ..OrchestratorConfig::default()
        };
        let mut orchestrator = Orchestrator::new(Arc::new(model), self.repo.snapshot()?, audit, config);
        if let Some(kb) = &self.kb {
            orchestrator = orchestrator.with_knowledge_base(load_index(kb, &self.embed)?, kb_label(kb));
        }
        Ok(orchestrator)
    }
}

#[derive(Args)]
struct ChatArgs {
    #[arg(long)]
    model: String,
    /// Sampling preset label (see `assist serve gateway` /presets).
    #[arg(long, conflicts_with_all = ["temperature", "top_p", "min_p"])]
    preset: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    min_p: Option<f64>,
    #[command(flatten)]
    common: OrchestratorArgs,
}

#[derive(Subcommand)]
enum IndexCommand {
    Build {
        /// Directory of .md/.markdown/.txt files.
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(short, long, default_value_t = assist_core::docs::DEFAULT_TOP_K)]
        k: usize,
        text: String,
        #[command(flatten)]
        embed: EmbedArgs,
    },
}

#[derive(Subcommand)]
enum ServeCommand {
    Gateway {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Allowed model ids; any id is accepted when none are given.
        #[arg(long = "model")]
        models: Vec<String>,
        #[command(flatten)]
        common: OrchestratorArgs,
    },
    Scripted {
        #[arg(long, default_value = "127.0.0.1:8000")]
        addr: String,
        /// Directory of scenario files; the bundled scenarios are used when absent.
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ProxyArgs {
    #[arg(long, default_value = "127.0.0.1:8090")]
    listen: String,
    #[arg(long)]
    upstream: String,
    #[arg(long, value_enum, default_value_t = Direction::Model)]
    direction: Direction,
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Model,
    Provider,
}

#[derive(Subcommand)]
enum SweepCommand {
    /// List a sampling set.
    Configs {
        #[arg(long)]
        sampling: Option<PathBuf>,
    },
    Plan {
        /// Sampling set; the bundled fifteen configurations when absent.
        #[arg(long)]
        sampling: Option<PathBuf>,
        /// Model set; the bundled six models when absent.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Run {
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Live OpenAI-compatible endpoint.
        #[arg(long, conflicts_with = "replay", required_unless_present = "replay")]
        endpoint: Option<String>,
        /// Replay against scripted scenarios; bundled ones when no directory is given.
        #[arg(long, num_args = 0..=1)]
        replay: Option<Option<PathBuf>>,
        /// Execute only these run ids.
        #[arg(long = "only")]
        only: Vec<String>,
        #[arg(long, default_value = "runs")]
        runs_dir: PathBuf,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[command(flatten)]
        embed: EmbedArgs,
        #[command(flatten)]
        repo: RepoArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand)]
enum DefectsCommand {
    Add {
        /// Annotation store file, created when missing.
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        run: String,
        #[arg(long)]
        category: DefectCategory,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, default_value_t = 1)]
        count: u32,
        #[arg(long, default_value = "")]
        note: String,
    },
    Render {
        #[arg(long)]
        sweep: SweepKind,
        /// Annotation file; the bundled transcription for the sweep when absent.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    Summarize {
        /// Annotation files; both bundled transcriptions when absent.
        #[arg(long = "annotations")]
        annotations: Vec<PathBuf>,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Subcommand)]
enum RepoCommand {
    Tree {
        #[arg(long)]
        prefix: Option<String>,
        #[command(flatten)]
        repo: RepoArgs,
    },
    Find {
        class_name: String,
        #[command(flatten)]
        repo: RepoArgs,
    },
    Fetch {
        path: String,
        /// Drop a leading license comment from Java sources.
        #[arg(long)]
        strip_header: bool,
        #[command(flatten)]
        repo: RepoArgs,
    },
    Methods {
        path: String,
        #[command(flatten)]
        repo: RepoArgs,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_plans(path: Option<&Path>) -> Result<Vec<RunPlan>> {
    match path {
        None => Ok(bundled_matrix()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn load_annotations(path: &Path) -> Result<AnnotationFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(AnnotationFile::parse(&path.display().to_string(), &text)?)
}

fn chat(args: ChatArgs) -> Result<()> {
    let sampling = match &args.preset {
        Some(label) => {
            sampling_presets()
                .into_iter()
                .find(|p| &p.label == label)
                .ok_or_else(|| anyhow!("unknown preset `{label}`"))?
                .sampling
        }
        None => {
            let d = SamplingConfig::DEFAULT;
            SamplingConfig::new(
                args.temperature.unwrap_or(d.temperature),
                args.top_p.unwrap_or(d.top_p),
                args.min_p.unwrap_or(d.min_p),
            )?
        }
    };
    let orchestrator = args.common.build(Vec::new())?;
    let session = orchestrator.create_session(None, &args.model, sampling)?;
    eprintln!(
        "session {} ({}); empty line or EOF ends the chat",
        session.session_id, args.model
    );
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    loop {
        eprint!("> ");
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        match orchestrator.send_user_message(&session.session_id, line.trim()) {
            Ok(turn) => {
                for step in &turn.tool_trace {
                    eprintln!(
                        "  [{}] {} {}",
                        if step.ok { "ok" } else { "err" },
                        step.tool,
                        step.arguments
                    );
                }
                writeln!(out, "{}\n", turn.text)?;
            }
            Err(e) => eprintln!("error: {e}"),
        }
    }
    orchestrator.close_session(&session.session_id)?;
    let record = orchestrator.export_run(&session.session_id)?;
    eprintln!("ledger {} ({} events)", record.path.display(), record.event_count);
    Ok(())
}

fn index(cmd: IndexCommand) -> Result<()> {
    match cmd {
        IndexCommand::Build { docs, out, embed } => {
            let mut index = DocIndex::new(embed.embedder()?);
            let chunks = index.ingest_dir(&docs)?;
            index.save(&out)?;
            eprintln!("{chunks} chunks written to {}", out.display());
        }
        IndexCommand::Query { index, k, text, embed } => {
            let index = load_index(&index, &embed)?;
            for hit in index.query(&text, k)? {
                println!("{:.4}  {} #{}", hit.score, hit.chunk.source, hit.chunk.ordinal);
            }
        }
    }
    Ok(())
}

fn serve(cmd: ServeCommand) -> Result<()> {
    match cmd {
        ServeCommand::Gateway { addr, models, common } => {
            let orchestrator = Arc::new(common.build(models)?);
            let handle = Gateway::new(orchestrator, sampling_presets()).serve(&addr)?;
            eprintln!("gateway on {}", handle.url());
            handle.join();
        }
        ServeCommand::Scripted { addr, scenarios } => {
            let scenarios = match scenarios {
                Some(dir) => Scenario::load_dir(&dir)?,
                None => Scenario::bundled(),
            };
            let server = ScriptedServer::start(scenarios, &addr)?;
            eprintln!(
                "scripted endpoint on {} ({})",
                server.url(),
                server.model().scenario_ids().join(", ")
            );
            server.join();
        }
    }
    Ok(())
}

fn proxy(args: ProxyArgs) -> Result<()> {
    let direction = match args.direction {
        Direction::Model => TraceDirection::ToModel,
        Direction::Provider => TraceDirection::ToProvider,
    };
    let store = Arc::new(TraceStore::new(&args.runs_dir));
    let proxy = CaptureProxy::start(&args.listen, &args.upstream, direction, Some(store))?;
    eprintln!("proxy {} -> {}", proxy.url(), args.upstream);
    proxy.join();
    Ok(())
}

fn sweep(cmd: SweepCommand) -> Result<()> {
    match cmd {
        SweepCommand::Configs { sampling } => {
            let set = match sampling {
                Some(p) => SamplingSet::load(&p)?,
                None => SamplingSet::bundled(),
            };
            print!("{}", set.render_text());
        }
        SweepCommand::Plan { sampling, models, out } => {
            let sampling = match sampling {
                Some(p) => SamplingSet::load(&p)?,
                None => SamplingSet::bundled(),
            };
            let models = match models {
                Some(p) => ModelSet::load(&p)?,
                None => ModelSet::bundled(),
            };
            let plans = build_matrix(&sampling, &models, &TaskFixture::both())?;
            let text = serde_json::to_string_pretty(&plans)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, text + "\n")?;
                    eprintln!("{} plans written to {}", plans.len(), path.display());
                }
                None => println!("{text}"),
            }
        }
        SweepCommand::Run {
            plan,
            endpoint,
            replay,
            only,
            runs_dir,
            kb,
            embed,
            repo,
        } => {
            let plans = load_plans(plan.as_deref())?;
            let mut server = None;
            let endpoint = match (endpoint, replay) {
                (Some(url), _) => Endpoint::Live { base_url: url },
                (None, Some(dir)) => {
                    let scenarios = match dir {
                        Some(dir) => Scenario::load_dir(&dir)?,
                        None => Scenario::bundled(),
                    };
                    let started = ScriptedServer::start(scenarios, "127.0.0.1:0")?;
                    let base_url = started.url();
                    server = Some(started);
                    Endpoint::Replay { base_url }
                }
                (None, None) => bail!("give --endpoint or --replay"),
            };
            let mut runner = Runner::open(&runs_dir, repo.snapshot()?)?;
            if let Some(kb) = &kb {
                runner = runner.with_knowledge_base(load_index(kb, &embed)?, kb_label(kb));
            }
            let mut failed = 0;
            for plan in plans.iter().filter(|p| only.is_empty() || only.contains(&p.run_id)) {
                match runner.execute_plan(plan, &endpoint) {
                    Ok(entry) => println!(
                        "{}  completed  {}",
                        entry.run_id,
                        entry.run.map(|r| r.content_hash).unwrap_or_default()
                    ),
                    Err(e) => {
                        failed += 1;
                        println!("{}  failed  {e}", plan.run_id);
                    }
                }
            }
            if let Some(server) = server {
                server.shutdown();
            }
            if failed > 0 {
                bail!("{failed} run(s) did not complete");
            }
        }
    }
    Ok(())
}

fn defects(cmd: DefectsCommand) -> Result<()> {
    match cmd {
        DefectsCommand::Add {
            store,
            plan,
            run,
            category,
            variant,
            count,
            note,
        } => {
            let plans = load_plans(plan.as_deref())?;
            let task_id = plans
                .iter()
                .find(|p| p.run_id == run)
                .map(|p| p.task.task_id)
                .ok_or_else(|| anyhow!("unknown run `{run}`"))?;
            let mut store = AnnotationStore::open(&plans, &store)?;
            let stored = store.annotate(
                &run,
                DefectAnnotation {
                    run_id: run.clone(),
                    task_id,
                    category,
                    variant,
                    count,
                    note,
                },
            )?;
            print_json(stored)?;
        }
        DefectsCommand::Render {
            sweep,
            annotations,
            plan,
            format,
        } => {
            let plans = load_plans(plan.as_deref())?;
            let file = match annotations {
                Some(p) => load_annotations(&p)?,
                None => match sweep {
                    SweepKind::Sampling => AnnotationFile::sampling_fixture(),
                    SweepKind::Model => AnnotationFile::model_fixture(),
                },
            };
            let store = AnnotationStore::from_file(&plans, &file)?;
            let table = DefectTable::build(sweep, &plans, store.annotations());
            match format {
                Format::Text => print!("{}", table.render_text()),
                Format::Csv => print!("{}", table.render_csv()),
                Format::Json => print_json(&table)?,
            }
        }
        DefectsCommand::Summarize {
            annotations,
            plan,
            format,
        } => {
            let plans = load_plans(plan.as_deref())?;
            let files = if annotations.is_empty() {
                vec![AnnotationFile::sampling_fixture(), AnnotationFile::model_fixture()]
            } else {
                annotations.iter().map(|p| load_annotations(p)).collect::<Result<_>>()?
            };
            let mut all = Vec::new();
            for file in &files {
                all.extend(AnnotationStore::from_file(&plans, file)?.annotations().iter().cloned());
            }
            let summary = summarize(&all, &plans);
            match format {
                Format::Json => print_json(&summary)?,
                _ => print!("{}", summary.render_text()),
            }
        }
    }
    Ok(())
}

fn repo(cmd: RepoCommand) -> Result<()> {
    match cmd {
        RepoCommand::Tree { prefix, repo } => {
            for entry in repo.snapshot()?.list_tree(prefix.as_deref())? {
                println!("{}", entry.path);
            }
        }
        RepoCommand::Find { class_name, repo } => {
            let paths = repo.snapshot()?.find_class_path(&class_name)?;
            if paths.is_empty() {
                bail!("no class `{class_name}`");
            }
            for p in paths {
                println!("{p}");
            }
        }
        RepoCommand::Fetch {
            path,
            strip_header: strip,
            repo,
        } => {
            let file = repo.snapshot()?.fetch_file(&path)?;
            let text = if strip { strip_header(&file.text) } else { &file.text };
            print!("{text}");
        }
        RepoCommand::Methods { path, repo } => {
            let file = repo.snapshot()?.fetch_file(&path)?;
            for m in enumerate_methods(&file.text)? {
                println!("{}-{}  {}", m.start_line, m.end_line, m.signature);
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    match Cli::parse().command {
        Command::Chat(args) => chat(args),
        Command::Index(cmd) => index(cmd),
        Command::Serve(cmd) => serve(cmd),
        Command::Proxy(args) => proxy(args),
        Command::Sweep(cmd) => sweep(cmd),
        Command::Defects(cmd) => defects(cmd),
        Command::Repo(cmd) => repo(cmd),
    }
}
