use std::fs;

use sstem_core::reporting::{build_report, render, ReportConfig, ReportFormat};
use sstem_core::tabular::{read_human_scores, read_scores};

use crate::exit::{write_output, Exit, OrExit, INVALID_ARGS};
use crate::fit::{read_score_meta, WeightsFile};
use crate::ReportArgs;

pub fn run(args: ReportArgs) -> Result<(), Exit> {
    let format: ReportFormat = match (&args.format, args.out.extension().and_then(|e| e.to_str())) {
        (Some(f), _) => f.parse().or_exit(INVALID_ARGS)?,
        (None, Some("json")) => ReportFormat::Structured,
        (None, Some("csv")) => ReportFormat::Tabular,
        (None, _) => ReportFormat::Markdown,
    };
    let scores = read_scores(&args.scores).or_exit(INVALID_ARGS)?;
    let weights_text = fs::read_to_string(&args.weights)
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.weights.display()))
        .or_exit(INVALID_ARGS)?;
    let weights: WeightsFile = serde_json::from_str(&weights_text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.weights.display()))
        .or_exit(INVALID_ARGS)?;
    let human = match &args.human {
        Some(p) => read_human_scores(p).or_exit(INVALID_ARGS)?,
        None => Vec::new(),
    };

    let meta = read_score_meta(&args.scores);
    let fit_cfg = &weights.effective_config;
    let config = ReportConfig {
        stride: meta.as_ref().map(|m| m.stride).or(fit_cfg.stride),
        backends: meta
            .as_ref()
            .map(|m| m.backends.clone())
            .unwrap_or_else(|| fit_cfg.backends.clone()),
        temporal_form: weights.fit.weights.temporal_form,
        method: Some(weights.fit.method.as_str().to_owned()),
        seed: meta.as_ref().map(|m| m.seed).or(fit_cfg.seed),
    };
    let dataset_id = meta.map_or_else(|| "unknown".to_owned(), |m| m.dataset_id);
    let generated_at = args.generated_at.clone().unwrap_or_else(|| {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    });

    let report = build_report(
        &dataset_id,
        &scores,
        &weights.fit.weights,
        &human,
        config,
        &generated_at,
    );
    write_output(&args.out, &render(&report, format))?;
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    println!("report -> {}", args.out.display());
    Ok(())
}
