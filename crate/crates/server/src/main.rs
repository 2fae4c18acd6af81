use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use ir_server::{router, AppState, DEFAULT_LISTEN};

/// Inline replication analysis service.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Address to bind; port 0 picks a free port.
    #[arg(long, env = "IR_LISTEN", default_value = DEFAULT_LISTEN)]
    listen: String,
    /// Directory of `*.csv` datasets loaded at startup; uploads are saved here.
    #[arg(long, env = "IR_DATASET_DIR")]
    dataset_dir: Option<PathBuf>,
    /// Idle lifetime of incremental sessions, in seconds.
    #[arg(long, env = "IR_SESSION_TTL", default_value_t = 3600)]
    session_ttl_secs: u64,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let ttl = Duration::from_secs(args.session_ttl_secs.max(1));
    let state = match args.dataset_dir {
        Some(dir) => {
            if let Err(e) = std::fs::create_dir_all(&dir) {
                eprintln!("error: {}: {e}", dir.display());
                std::process::exit(2);
            }
            AppState::with_dataset_dir(dir, ttl).unwrap_or_else(|e| {
                eprintln!("error: {e}");
                std::process::exit(2);
            })
        }
        None => AppState::new(None, ttl),
    };
    let state = Arc::new(state);

    let listener = match tokio::net::TcpListener::bind(&args.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", args.listen);
            std::process::exit(2);
        }
    };
    let addr = listener.local_addr().expect("bound socket has an address");
    println!("listening on {addr}");
    let _ = std::io::stdout().flush();

    let sweeper = Arc::clone(&state);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(ttl.min(Duration::from_secs(60)));
        loop {
            tick.tick().await;
            sweeper.expire_sessions();
        }
    });

    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
    {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
