use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use sstem_core::backends::BackendsConfig;
use sstem_core::ingestion::ArtifactCache;
use sstem_core::stages::{score_video, ScoringOptions, VideoScoreError};
use sstem_core::tabular::{scores_csv, ScoreRow};
use sstem_core::StageScores;

use crate::exit::{
    sidecar_path, write_json, write_output, Exit, OrExit, BACKEND_UNAVAILABLE, FAILED,
    INVALID_ARGS,
};
use crate::setup::load_manifest;
use crate::ScoreArgs;

/// Effective settings and outcome of a scoring run, written next to the
/// scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMeta {
    pub dataset_id: String,
    pub manifest: PathBuf,
    pub backends_config: Option<PathBuf>,
    pub seed: u64,
    pub stride: usize,
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
    pub backends: Vec<String>,
    pub n_videos: usize,
    pub n_scored: usize,
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub video_id: String,
    pub codes: Vec<String>,
    pub message: String,
}

type Outcome = Option<Result<StageScores, VideoScoreError>>;

pub fn run(args: ScoreArgs) -> Result<(), Exit> {
    let manifest = load_manifest(&args.manifest)?;
    let config = match &args.backends {
        Some(p) => BackendsConfig::load(p).or_exit(INVALID_ARGS)?,
        None => BackendsConfig::default(),
    };
    // flags win over the config file, which wins over defaults
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let stride = args.stride.or(config.stride).unwrap_or(1);
    let workers = args.workers.or(config.workers).unwrap_or(1);
    if stride == 0 || workers == 0 {
        return Err(Exit::msg(INVALID_ARGS, "--stride and --workers must be at least 1"));
    }
    let cache_dir = if args.no_cache {
        None
    } else {
        args.cache_dir.clone().or_else(|| config.cache_dir.clone())
    };
    let cache = cache_dir
        .as_ref()
        .map(ArtifactCache::open)
        .transpose()
        .or_exit(FAILED)?;
    let backend_ids = config.build(seed).or_exit(INVALID_ARGS)?.ids();

    let n = manifest.videos.len();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let outcomes: Mutex<Vec<Outcome>> = Mutex::new((0..n).map(|_| None).collect());
    let options = ScoringOptions {
        stride,
        cache: cache.as_ref(),
    };
    thread::scope(|scope| {
        for _ in 0..workers.min(n) {
            scope.spawn(|| {
                let backends = config.build(seed).expect("config built once already");
                while !abort.load(Ordering::SeqCst) {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(entry) = manifest.videos.get(i) else { break };
                    let result = score_video(entry, &backends, &options);
                    if matches!(&result, Err(e) if e.is_backend_unavailable()) {
                        // later videos would only fail the same way
                        abort.store(true, Ordering::SeqCst);
                    }
                    outcomes.lock().expect("outcome lock")[i] = Some(result);
                }
            });
        }
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut unavailable = false;
    for (entry, outcome) in manifest.videos.iter().zip(outcomes.into_inner().expect("outcome lock")) {
        match outcome {
            Some(Ok(scores)) => rows.push(ScoreRow::new(&scores, &entry.model_name, stride)),
            Some(Err(e)) => {
                unavailable |= e.is_backend_unavailable();
                failures.push(FailureRecord {
                    video_id: entry.video_id.clone(),
                    codes: e.failures.iter().map(|f| f.code().to_owned()).collect(),
                    message: e.to_string(),
                });
            }
            None => failures.push(FailureRecord {
                video_id: entry.video_id.clone(),
                codes: vec!["SKIPPED".into()],
                message: format!("video `{}` skipped after a backend became unavailable", entry.video_id),
            }),
        }
    }

    write_output(&args.out, &scores_csv(&rows))?;
    let meta = ScoreMeta {
        dataset_id: manifest.dataset_id.clone(),
        manifest: args.manifest.clone(),
        backends_config: args.backends.clone(),
        seed,
        stride,
        workers,
        cache_dir,
        backends: backend_ids.iter().map(ToString::to_string).collect(),
        n_videos: n,
        n_scored: rows.len(),
        failures: failures.clone(),
    };
    write_json(&sidecar_path(&args.out), &meta)?;

    for f in &failures {
        eprintln!("{} [{}]: {}", f.video_id, f.codes.join(","), f.message);
    }
    println!("scored {}/{} videos -> {}", rows.len(), n, args.out.display());
    match (failures.is_empty(), unavailable) {
        (true, _) => Ok(()),
        (false, true) => Err(Exit::msg(BACKEND_UNAVAILABLE, "a backend is unavailable; partial results written")),
        (false, false) => Err(Exit::msg(
            FAILED,
            format!("{} video(s) failed; partial results written", failures.len()),
        )),
    }
}
