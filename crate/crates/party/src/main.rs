use clap::Parser;

#[derive(Parser)]
#[command(name = "party", about = "MPC party daemon")]
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
    let cfg: moz_party::PartyConfig = toml::from_str(&raw)?;
    let handle = moz_party::serve(cfg).await?;
    tokio::signal::ctrl_c().await?;
    handle.stop().await;
    Ok(())
}
