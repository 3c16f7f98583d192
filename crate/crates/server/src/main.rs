use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use dtinterview_core::catalog::{default_catalog, load_catalog_file};
use dtinterview_core::report::{render_report, ReportFormat};
use dtinterview_core::session::SessionStatus;
use dtinterview_core::store::{SessionFilter, SessionStore};
use dtinterview_server::{serve, ServiceConfig};
use uuid::Uuid;

#[derive(Parser)]
#[command(
    name = "dtinterview",
    version,
    about = "Workflow-driven digital-transformation interview service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(Box<ServiceConfig>),
    /// Check a catalog document and print its category counts.
    ValidateCatalog { path: PathBuf },
    /// Print a session's stored report.
    Export {
        #[arg(long)]
        session: Uuid,
        #[arg(long, value_enum, default_value = "md")]
        format: ExportFormat,
        #[arg(long, env = "DT_DATA_DIR", default_value = "./data")]
        data_dir: PathBuf,
    },
    /// List stored sessions, newest first.
    ListSessions {
        #[arg(long)]
        company: Option<String>,
        #[arg(long)]
        client: Option<String>,
        #[arg(long)]
        job_title: Option<String>,
        #[arg(long, value_enum)]
        status: Option<StatusArg>,
        #[arg(long)]
        json: bool,
        #[arg(long, env = "DT_DATA_DIR", default_value = "./data")]
        data_dir: PathBuf,
        #[arg(long, env = "DT_CATALOG")]
        catalog: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Md,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatusArg {
    Active,
    Completed,
}

fn open_store(data_dir: PathBuf, catalog: Option<PathBuf>) -> Result<SessionStore, String> {
    let catalog = match catalog {
        Some(path) => load_catalog_file(path).map_err(|e| e.to_string())?,
        None => default_catalog(),
    };
    SessionStore::open(data_dir, Arc::new(catalog)).map_err(|e| e.to_string())
}

async fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Serve(config) => {
            let state = config.build_state().map_err(|e| e.to_string())?;
            serve(&config, state).await.map_err(|e| e.to_string())
        }
        Command::ValidateCatalog { path } => {
            let catalog = load_catalog_file(&path).map_err(|e| e.to_string())?;
            println!("{}: catalog version {}", path.display(), catalog.version);
            for c in &catalog.categories {
                println!("  {:<22} {:>3}  {}", c.id.as_str(), c.questions.len(), c.display_name);
            }
            println!(
                "ok: {} categories, {} questions",
                catalog.categories.len(),
                catalog.total_questions()
            );
            Ok(())
        }
        Command::Export {
            session,
            format,
            data_dir,
        } => {
            let store = open_store(data_dir, None)?;
            store.load(session).map_err(|e| e.to_string())?;
            let report = store
                .load_report(session)
                .map_err(|e| e.to_string())?
                .ok_or_else(|| format!("session {session} has no report yet"))?;
            let format = match format {
                ExportFormat::Md => ReportFormat::Markdown,
                ExportFormat::Json => ReportFormat::Json,
            };
            print!("{}", render_report(&report, format));
            Ok(())
        }
        Command::ListSessions {
            company,
            client,
            job_title,
            status,
            json,
            data_dir,
            catalog,
        } => {
            let store = open_store(data_dir, catalog)?;
            let filter = SessionFilter {
                company,
                client,
                job_title,
                status: status.map(|s| match s {
                    StatusArg::Active => SessionStatus::Active,
                    StatusArg::Completed => SessionStatus::Completed,
                }),
            };
            let sessions = store.list_sessions(&filter).map_err(|e| e.to_string())?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&sessions).map_err(|e| e.to_string())?
                );
                return Ok(());
            }
            for s in sessions {
                let progress = s
                    .progress
                    .map(|p| format!("{}/{}", p.total_asked, p.total_asked + p.total_remaining))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{}  {:<9}  {}  {} / {} / {}  {}",
                    s.session_id,
                    format!("{:?}", s.status).to_lowercase(),
                    s.updated_at,
                    s.profile.company_name,
                    s.profile.client_name,
                    s.profile.job_title,
                    progress
                );
            }
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
