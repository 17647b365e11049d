use std::io::IsTerminal;
use std::sync::Arc;

use anyhow::Context;
use escalate_service::{router, Store, DEFAULT_ADDR, DEFAULT_DATA_DIR};
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    let addr = std::env::var("ESCALATE_ADDR").unwrap_or_else(|_| DEFAULT_ADDR.to_string());
    let data_dir = std::env::var("ESCALATE_DATA_DIR").unwrap_or_else(|_| DEFAULT_DATA_DIR.to_string());

    let store = Store::open(&data_dir).with_context(|| format!("opening data directory {data_dir}"))?;
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    println!("listening on {local}");
    tracing::info!(%local, data_dir, "serving");

    axum::serve(listener, router(Arc::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
