use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use selcube_core::coordinator::CoordinatorOptions;
use selcube_engine::Database;
use selcube_server::{ServerConfig, SessionOptions};

/// Serve coordinated sessions over WebSocket.
#[derive(Parser, Debug)]
#[command(name = "selcube-server", version)]
struct Args {
    /// Database directory; an empty in-memory database when omitted.
    #[arg(long, env = "SELCUBE_DB")]
    db: Option<PathBuf>,
    #[arg(long, env = "SELCUBE_HOST", default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "SELCUBE_PORT", default_value_t = 8080)]
    port: u16,
    /// Result cache capacity per session (0 disables caching).
    #[arg(long, env = "SELCUBE_CACHE_ENTRIES", default_value_t = 1024)]
    cache_entries: usize,
    /// Answer every update with a direct query.
    #[arg(long, env = "SELCUBE_NO_OPTIMIZE")]
    no_optimize: bool,
    /// Static files served at `/`.
    #[arg(long, env = "SELCUBE_ASSETS")]
    assets: Option<PathBuf>,
    /// Zero all timing fields in result frames.
    #[arg(long, env = "SELCUBE_STABLE_FRAMES")]
    stable_frames: bool,
}

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let db = match &args.db {
        Some(dir) => match Database::open(dir) {
            Ok(db) => db,
            Err(e) => {
                log::error!("cannot open database {}: {e}", dir.display());
                std::process::exit(1);
            }
        },
        None => Database::new(),
    };
    log::info!("tables: {:?}", db.table_names());
    let config = ServerConfig {
        host: args.host,
        port: args.port,
        options: SessionOptions {
            coordinator: CoordinatorOptions {
                optimize: !args.no_optimize,
                cache_entries: args.cache_entries,
            },
            stable_frames: args.stable_frames,
        },
        assets: args.assets,
    };
    match selcube_server::start(Arc::new(db), config).await {
        Ok((addr, task)) => {
            log::info!("listening on http://{addr} (WebSocket at /session)");
            let _ = task.await;
        }
        Err(e) => {
            log::error!("cannot bind: {e}");
            std::process::exit(1);
        }
    }
}
