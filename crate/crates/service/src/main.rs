use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use tracing_subscriber::EnvFilter;
use zonekit_service::{router, AppState, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "zonekit-server", version, about = "HTTP service for zone-layout workspaces")]
struct Args {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured bind address.
    #[arg(long)]
    bind: Option<String>,
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"))).init();
    let args = Args::parse();
    let mut config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ServiceConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ServiceConfig::default(),
    }
    .with_env();
    if let Some(b) = args.bind {
        config.bind = b;
    }
    config.pipeline.validate().context("pipeline config")?;
    if let Some(dir) = &config.snapshot_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let provider = config.build_provider().context("building provider")?;
    let listener = tokio::net::TcpListener::bind(&config.bind).await.with_context(|| format!("binding {}", config.bind))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config, provider))).await?;
    Ok(())
}
