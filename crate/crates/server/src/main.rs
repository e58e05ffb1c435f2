use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use mentorloop::app::{build_state, load_script};
use mentorloop::backend::generate_router;
use mentorloop::cli::{run_offline, Cli, Command};
use mentorloop::config::ServiceConfig;
use mentorloop::router;
use mentorloop_core::orchestrator::MockBackend;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(out) = run_offline(&cli.command) {
        print!("{}", out.stdout);
        eprint!("{}", out.stderr);
        return ExitCode::from(out.code as u8);
    }
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("cannot start runtime: {e}");
            return ExitCode::from(2);
        }
    };
    let result = rt.block_on(async {
        match cli.command {
            Command::Serve { config } => serve(&config).await,
            Command::MockBackend { script, bind } => mock_backend(script.as_deref(), &bind).await,
            _ => unreachable!("offline commands handled above"),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}

async fn serve(config: &std::path::Path) -> Result<(), String> {
    let cfg = ServiceConfig::load(config).map_err(|e| e.to_string())?;
    let state = build_state(&cfg)?;
    if cfg.engine.auto_confirm_after.is_some() {
        let engine = state.engine.clone();
        let every = Duration::from_secs(cfg.sweep_interval_secs.max(1));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                let e = engine.clone();
                if let Ok(Err(err)) = tokio::task::spawn_blocking(move || e.sweep_auto_confirm()).await {
                    eprintln!("auto-confirm sweep failed: {err}");
                }
            }
        });
    }
    let listener = tokio::net::TcpListener::bind(&cfg.bind)
        .await
        .map_err(|e| format!("bind {}: {e}", cfg.bind))?;
    eprintln!("listening on {}", cfg.bind);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}

async fn mock_backend(script: Option<&std::path::Path>, bind: &str) -> Result<(), String> {
    let entries = match script {
        Some(p) => load_script(p)?,
        None => Vec::new(),
    };
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| format!("bind {bind}: {e}"))?;
    eprintln!("mock backend listening on {bind}");
    axum::serve(listener, generate_router(Arc::new(MockBackend::new(entries))))
        .await
        .map_err(|e| e.to_string())
}
