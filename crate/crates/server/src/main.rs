use std::net::SocketAddr;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use tracing_subscriber::EnvFilter;

use funnelbot_core::{Mediator, MediatorSettings};
use funnelbot_server::{router, AppState, GitHubForge, HeaderNames, DRAIN_TIMEOUT};

const DEFAULT_FORGE_URL: &str = "https://api.github.com";
const DEFAULT_BIND: &str = "0.0.0.0:3000";

fn env_or(name: &str, default: &str) -> String {
    std::env::var(name)
        .ok()
        .filter(|v| !v.is_empty())
        .unwrap_or_else(|| default.to_string())
}

fn required(name: &str) -> Result<String> {
    std::env::var(name)
        .ok()
        .filter(|v| !v.is_empty())
        .with_context(|| format!("{name} is not set"))
}

fn run() -> Result<()> {
    let secret = required("FUNNELBOT_SECRET")?;
    let token = required("FUNNELBOT_TOKEN")?;
    let forge_url = env_or("FUNNELBOT_FORGE_URL", DEFAULT_FORGE_URL);
    let bind: SocketAddr = env_or("FUNNELBOT_BIND", DEFAULT_BIND)
        .parse()
        .context("FUNNELBOT_BIND is not a socket address")?;

    // the blocking HTTP client must be built outside the async runtime
    let forge = GitHubForge::new(forge_url.clone(), token).context("building HTTP client")?;
    let mut settings = MediatorSettings::new(secret);
    if let Ok(login) = std::env::var("FUNNELBOT_APP_LOGIN") {
        settings.app_login = login;
    }
    let state = AppState::new(
        Mediator::new(settings, Arc::new(forge)),
        HeaderNames::default(),
    );

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        tracing::info!(%bind, forge = %forge_url, "funnelbot listening");
        axum::serve(listener, router(state.clone()))
            .with_graceful_shutdown(shutdown_signal())
            .await?;
        if !state.drain(DRAIN_TIMEOUT).await {
            tracing::warn!("queued deliveries still running after {DRAIN_TIMEOUT:?}");
        }
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = tokio::signal::ctrl_c();
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
            .expect("installing SIGTERM handler");
        tokio::select! {
            _ = ctrl_c => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = ctrl_c.await;
    tracing::info!("shutting down");
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e:#}");
            eprintln!("funnelbot: {e:#}");
            ExitCode::from(1)
        }
    }
}
