use std::io::Write;
use std::sync::Arc;

use sstem_rating::{serve, RatingStore, ServiceOptions};

use crate::exit::{write_output, Exit, OrExit, BIND_FAILED, FAILED, INVALID_ARGS};
use crate::setup::load_manifest;
use crate::{ExportHumanArgs, ServeArgs};

pub fn run(args: ServeArgs) -> Result<(), Exit> {
    let manifest = load_manifest(&args.manifest)?;
    let store = Arc::new(RatingStore::open(&args.store_dir, manifest).or_exit(FAILED)?);
    let options = ServiceOptions {
        ui_dir: args.ui_dir.clone(),
    };
    let runtime = tokio::runtime::Runtime::new().or_exit(FAILED)?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Exit::msg(BIND_FAILED, format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().or_exit(FAILED)?;
        println!("listening on http://{local}");
        let _ = std::io::stdout().flush();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, store, &options, shutdown).await.or_exit(FAILED)
    })
}

pub fn export_human(args: ExportHumanArgs) -> Result<(), Exit> {
    let manifest = load_manifest(&args.manifest)?;
    let store = RatingStore::open(&args.store_dir, manifest).or_exit(INVALID_ARGS)?;
    write_output(&args.out, &store.export_human_scores())?;
    println!("{} rated videos -> {}", store.aggregates().len(), args.out.display());
    Ok(())
}
