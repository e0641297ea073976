//! `tippy`: serve the platform over HTTP, serve a tool server over MCP, or
//! manage configuration lineage.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use tippy_core::config::PlatformConfig;
use tippy_core::mcp::stdio;
use tippy_core::observability::{materialize, Lineage, LINEAGE_FILE};
use tippy_core::platform::{ModelChoice, Platform, PlatformOptions, DEFAULT_SEED};
use tippy_core::tools::molecule_server::build_molecule_server;
use tippy_gateway::{mcp_router, router, AppState};

#[derive(Parser)]
#[command(
    name = "tippy",
    version,
    about = "Multi-agent laboratory automation platform"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Directory for world snapshot, logs, traces, memory and lineage.
    #[arg(long, env = "TIPPY_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Configuration directory; the bundled configuration when omitted.
    #[arg(long, env = "TIPPY_CONFIG_DIR")]
    config: Option<PathBuf>,
    #[arg(long, env = "TIPPY_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "TIPPY_HTTP_ADDR", default_value = "127.0.0.1:8080")]
        listen: String,
        #[arg(long, env = "TIPPY_API_TOKEN", hide_env_values = true)]
        token: String,
        /// Virtual seconds per wall-clock second; 0 leaves the clock to
        /// `POST /api/clock/tick`.
        #[arg(long, env = "TIPPY_CLOCK_SCALE", default_value_t = 1.0)]
        clock_scale: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Serve one tool server over MCP.
    McpServe {
        #[arg(long, value_enum, default_value = "stdio")]
        transport: Transport,
        #[arg(long, value_enum, default_value = "main")]
        server: ServerKind,
        /// Address for the HTTP transport.
        #[arg(long, default_value = "127.0.0.1:8081")]
        listen: String,
        #[command(flatten)]
        common: Common,
    },
    /// Configuration lineage.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Stdio,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum ServerKind {
    Main,
    Lab,
    Molecule,
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Record the current configuration; prints its hash.
    Snapshot {
        #[command(flatten)]
        common: Common,
    },
    /// Attach a unique label to a snapshot.
    Tag {
        hash: String,
        label: String,
        #[arg(long, env = "TIPPY_DATA_DIR")]
        data_dir: PathBuf,
    },
    /// Print the chain of snapshots from the head back to the first one.
    Log {
        #[arg(long, env = "TIPPY_DATA_DIR")]
        data_dir: PathBuf,
    },
    /// Write the files of a tagged snapshot into a directory.
    Checkout {
        label: String,
        out: PathBuf,
        #[arg(long, env = "TIPPY_DATA_DIR")]
        data_dir: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<PlatformConfig, String> {
    match &common.config {
        Some(dir) => PlatformConfig::load(dir).map_err(|e| e.to_string()),
        None => Ok(PlatformConfig::bundled()),
    }
}

fn open_platform(common: &Common) -> Result<Platform, String> {
    Platform::open(PlatformOptions {
        data_dir: common.data_dir.clone(),
        config: load_config(common)?,
        seed: common.seed,
        model: ModelChoice::from_env().map_err(|e| e.to_string())?,
    })
    .map_err(|e| e.to_string())
}

async fn serve(
    listen: String,
    token: String,
    clock_scale: f64,
    common: Common,
) -> Result<(), String> {
    if token.is_empty() {
        return Err("TIPPY_API_TOKEN must not be empty".into());
    }
    let platform = Arc::new(open_platform(&common)?);
    if clock_scale > 0.0 {
        let p = platform.clone();
        tokio::spawn(async move {
            let mut every = tokio::time::interval(Duration::from_secs(1));
            every.tick().await;
            loop {
                every.tick().await;
                let p = p.clone();
                if let Ok(Err(e)) = tokio::task::spawn_blocking(move || p.tick(clock_scale)).await {
                    eprintln!("clock tick failed: {e}");
                }
            }
        });
    }
    let app = router(AppState::new(platform, &token));
    let listener = tokio::net::TcpListener::bind(&listen)
        .await
        .map_err(|e| format!("{listen}: {e}"))?;
    eprintln!(
        "tippy listening on http://{}",
        listener.local_addr().map_err(|e| e.to_string())?
    );
    axum::serve(listener, app).await.map_err(|e| e.to_string())
}

async fn mcp_serve(
    transport: Transport,
    kind: ServerKind,
    listen: String,
    common: Common,
) -> Result<(), String> {
    let server = match kind {
        // The molecule server needs no lab state.
        ServerKind::Molecule => Arc::new(build_molecule_server(None)),
        ServerKind::Main => open_platform(&common)?.main_server().clone(),
        ServerKind::Lab => open_platform(&common)?.lab_server().clone(),
    };
    match transport {
        Transport::Stdio => tokio::task::spawn_blocking(move || {
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            stdio::serve(&server, stdin, stdout)
        })
        .await
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string()),
        Transport::Http => {
            let listener = tokio::net::TcpListener::bind(&listen)
                .await
                .map_err(|e| format!("{listen}: {e}"))?;
            eprintln!(
                "MCP server on http://{}/mcp",
                listener.local_addr().map_err(|e| e.to_string())?
            );
            axum::serve(listener, mcp_router(server))
                .await
                .map_err(|e| e.to_string())
        }
    }
}

fn open_lineage(data_dir: &std::path::Path) -> Result<Lineage, String> {
    Lineage::open(&data_dir.join(LINEAGE_FILE)).map_err(|e| e.to_string())
}

fn config_cmd(action: ConfigAction) -> Result<(), String> {
    match action {
        ConfigAction::Snapshot { common } => {
            let dir = common.data_dir.clone().ok_or("--data-dir is required")?;
            let config = load_config(&common)?;
            let mut lineage = open_lineage(&dir)?;
            let (snap, appended) = lineage
                .snapshot_payload(&config.payload(), 0.0)
                .map_err(|e| e.to_string())?;
            println!(
                "{} {}",
                snap.hash,
                if appended { "recorded" } else { "unchanged" }
            );
        }
        ConfigAction::Tag {
            hash,
            label,
            data_dir,
        } => {
            let snap = open_lineage(&data_dir)?
                .tag(&hash, &label)
                .map_err(|e| e.to_string())?;
            println!("{} {label}", snap.hash);
        }
        ConfigAction::Log { data_dir } => {
            let lineage = open_lineage(&data_dir)?;
            if let Some(head) = lineage.head() {
                for s in lineage.chain(&head.hash).map_err(|e| e.to_string())? {
                    println!("{} {}", s.hash, s.tag.as_deref().unwrap_or(""));
                }
            }
        }
        ConfigAction::Checkout {
            label,
            out,
            data_dir,
        } => {
            let snap = open_lineage(&data_dir)?
                .get_by_tag(&label)
                .map_err(|e| e.to_string())?;
            materialize(&snap.decode().map_err(|e| e.to_string())?, &out)
                .map_err(|e| e.to_string())?;
            println!("{} written to {}", snap.hash, out.display());
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve {
            listen,
            token,
            clock_scale,
            common,
        } => serve(listen, token, clock_scale, common).await,
        Command::McpServe {
            transport,
            server,
            listen,
            common,
        } => mcp_serve(transport, server, listen, common).await,
        Command::Config { action } => config_cmd(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tippy: {e}");
            ExitCode::FAILURE
        }
    }
}
