use clap::Parser;

#[derive(Parser)]
#[command(name = "obeliskd", about = "Encrypted-analytics orchestration service")]
struct Args {
    /// Path to the TOML configuration file.
    #[arg(long)]
    config: std::path::PathBuf,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    let raw = std::fs::read_to_string(&args.config)?;
    let cfg: obeliskd::ObeliskConfig = toml::from_str(&raw)?;
    let handle = obeliskd::serve(cfg).await?;
    tracing::info!(addr = %handle.addr, "orchestrator listening");
    tokio::signal::ctrl_c().await?;
    handle.stop().await;
    Ok(())
}
