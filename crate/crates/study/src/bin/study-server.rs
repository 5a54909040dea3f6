use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use study_server::{router, AppState, Study, SystemClock};

/// Serve one or more studies over HTTP.
#[derive(Parser)]
#[command(name = "study-server", version)]
struct Cli {
    /// Study file; repeat to serve several studies.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    #[arg(long, env = "STUDY_ADDR", default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory holding one record log per study.
    #[arg(long, env = "STUDY_DATA_DIR", default_value = "study-data")]
    data_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut studies = Vec::new();
    for path in &cli.config {
        match Study::open(path, &cli.data_dir, Arc::new(SystemClock)) {
            Ok(s) => {
                eprintln!("study `{}`: {} sessions restored", s.id(), s.sessions().count());
                studies.push(s);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
    }
    let state = match AppState::new(studies) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let result = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(cli.addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state)).await
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
