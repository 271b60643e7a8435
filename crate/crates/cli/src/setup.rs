use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sstem_core::backends::{BackendSpec, BackendsConfig, MockOptions};
use sstem_core::ingestion::decode_video;
use sstem_core::model::{normalize_raw, ContentHash, validate_manifest, DatasetManifest, SplitRole};
use sstem_core::numeric::exact_mean;
use sstem_core::synth::write_dataset;
use sstem_core::tabular::{human_scores_csv, HumanScoreRow};

use crate::exit::{write_json, write_output, Exit, OrExit, FAILED, INVALID_ARGS};
use crate::{SynthArgs, ValidateArgs};

/// Loads a manifest, rejects structural violations, and resolves relative
/// media paths against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, Exit> {
    let manifest = DatasetManifest::load(path).or_exit(INVALID_ARGS)?;
    let violations = validate_manifest(&manifest);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{}: {v}", path.display());
        }
        return Err(Exit::msg(
            INVALID_ARGS,
            format!("{}: {} manifest violation(s)", path.display(), violations.len()),
        ));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(manifest.with_paths_resolved(base))
}

pub fn validate(args: ValidateArgs) -> Result<(), Exit> {
    let manifest = load_manifest(&args.manifest)?;
    let mut missing = 0;
    for v in &manifest.videos {
        for p in [&v.original_path, &v.edited_path] {
            if !p.exists() {
                eprintln!("{}: media not found: {}", v.video_id, p.display());
                missing += 1;
            }
        }
    }
    if missing > 0 {
        return Err(Exit::msg(INVALID_ARGS, format!("{missing} media path(s) missing")));
    }
    println!(
        "{}: {} videos ({} optimization, {} validation)",
        manifest.dataset_id,
        manifest.videos.len(),
        manifest.ids_in(SplitRole::Optimization).len(),
        manifest.ids_in(SplitRole::Validation).len()
    );
    Ok(())
}

const FILLER: &[&str] = &["a", "blurry", "scene", "outdoor", "person", "street", "bright", "frame"];

/// Some of the prompt's words plus filler, so captions only partly agree
/// with the prompt.
fn noisy_caption(rng: &mut ChaCha8Rng, prompt: &str) -> String {
    let mut words: Vec<&str> = prompt.split_whitespace().filter(|_| rng.gen_bool(0.6)).collect();
    for _ in 0..rng.gen_range(1..=3) {
        words.push(FILLER[rng.gen_range(0..FILLER.len())]);
    }
    words.join(" ")
}

/// Captions are seeded fixtures for every edited frame; human scores are
/// three seeded 1..=10 ratings per video.
pub fn synth(args: SynthArgs) -> Result<(), Exit> {
    if args.videos == 0 || args.frames < 2 {
        return Err(Exit::msg(INVALID_ARGS, "need at least one video of two frames"));
    }
    let manifest = write_dataset(&args.out, args.videos, args.frames, args.seed).or_exit(INVALID_ARGS)?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut captions = BTreeMap::new();
    for v in &manifest.videos {
        let (frames, _) = decode_video(&args.out.join(&v.edited_path)).or_exit(FAILED)?;
        for f in &frames {
            captions.insert(ContentHash::of_image(f).to_hex(), noisy_caption(&mut rng, &v.edit_prompt));
        }
    }
    let config = BackendsConfig {
        seed: Some(args.seed),
        captioner: BackendSpec::Mock(MockOptions {
            captions,
            ..MockOptions::default()
        }),
        detector: BackendSpec::Mock(MockOptions {
            synthesize: true,
            ..MockOptions::default()
        }),
        ..BackendsConfig::default()
    };
    write_json(&args.out.join("backends.json"), &config)?;

    let human: Vec<HumanScoreRow> = manifest
        .videos
        .iter()
        .map(|v| {
            let ratings: Vec<f64> = (0..3).map(|_| normalize_raw(rng.gen_range(1..=10))).collect();
            HumanScoreRow {
                video_id: v.video_id.clone(),
                mean_normalized: exact_mean(ratings).expect("three ratings"),
                n_raters: 3,
            }
        })
        .collect();
    write_output(&args.out.join("human_scores.csv"), &human_scores_csv(&human))?;
    println!(
        "wrote {} videos to {}",
        manifest.videos.len(),
        args.out.display()
    );
    Ok(())
}
