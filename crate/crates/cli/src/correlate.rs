use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sstem_core::reporting::{correlation_csv, correlation_markdown};
use sstem_core::stats::{correlation_table, PairedSeries, StatsError};
use sstem_core::tabular::{read_human_scores, read_metrics, MetricsFile};

use crate::exit::{sidecar_path, write_json, write_output, Exit, OrExit, ALIGNMENT, FAILED, INVALID_ARGS};
use crate::CorrelateArgs;

#[derive(Serialize)]
struct CorrelateMeta<'a> {
    metrics: &'a Path,
    human: Option<&'a PathBuf>,
    human_column: Option<&'a str>,
    n_items: usize,
    metric_names: Vec<&'a str>,
}

#[derive(Clone, Copy)]
enum TableFormat {
    Csv,
    Markdown,
}

fn table_format(explicit: Option<&str>, out: &Path) -> Result<TableFormat, Exit> {
    let name = match explicit {
        Some(f) => f.to_owned(),
        None => match out.extension().and_then(|e| e.to_str()) {
            Some("md") => "markdown".to_owned(),
            _ => "csv".to_owned(),
        },
    };
    match name.as_str() {
        "csv" | "tabular" => Ok(TableFormat::Csv),
        "markdown" | "md" => Ok(TableFormat::Markdown),
        other => Err(Exit::msg(INVALID_ARGS, format!("unknown table format `{other}`"))),
    }
}

fn keyed(labels: &[String], values: &[f64], what: &str) -> Result<BTreeMap<String, f64>, Exit> {
    let mut map = BTreeMap::new();
    for (l, &v) in labels.iter().zip(values) {
        if map.insert(l.clone(), v).is_some() {
            return Err(Exit::msg(ALIGNMENT, format!("{what} lists `{l}` twice")));
        }
    }
    Ok(map)
}

fn stats_exit(e: StatsError) -> Exit {
    let code = if e.code() == "ALIGNMENT_ERROR" { ALIGNMENT } else { FAILED };
    Exit::new(code, e)
}

type Column = (String, Vec<f64>);

pub fn run(args: CorrelateArgs) -> Result<(), Exit> {
    let format = table_format(args.format.as_deref(), &args.out)?;
    let MetricsFile { labels, columns } = read_metrics(&args.metrics).or_exit(INVALID_ARGS)?;

    let (human, metric_columns): (BTreeMap<String, f64>, Vec<&Column>) =
        match (&args.human_column, &args.human) {
            (Some(col), _) => {
                let (_, values) = columns.iter().find(|(n, _)| n == col).ok_or_else(|| {
                    Exit::msg(INVALID_ARGS, format!("metrics file has no `{col}` column"))
                })?;
                let rest = columns.iter().filter(|(n, _)| n != col).collect();
                (keyed(&labels, values, "human column")?, rest)
            }
            (None, Some(path)) => {
                let rows = read_human_scores(path).or_exit(INVALID_ARGS)?;
                let ids: Vec<String> = rows.iter().map(|r| r.video_id.clone()).collect();
                let values: Vec<f64> = rows.iter().map(|r| r.mean_normalized).collect();
                (keyed(&ids, &values, "human scores")?, columns.iter().collect())
            }
            (None, None) => return Err(Exit::msg(INVALID_ARGS, "need --human or --human-column")),
        };
    if metric_columns.is_empty() {
        return Err(Exit::msg(INVALID_ARGS, "metrics file has no metric columns"));
    }

    let mut series = Vec::new();
    for (name, values) in &metric_columns {
        let x = keyed(&labels, values, "metrics file")?;
        let s = PairedSeries::align(&x, &human).map_err(stats_exit)?;
        series.push((name.clone(), s));
    }
    let table = correlation_table(&series).map_err(stats_exit)?;

    let text = match format {
        TableFormat::Csv => correlation_csv(&table),
        TableFormat::Markdown => correlation_markdown(&table),
    };
    write_output(&args.out, text.as_bytes())?;
    write_json(
        &sidecar_path(&args.out),
        &CorrelateMeta {
            metrics: &args.metrics,
            human: args.human.as_ref(),
            human_column: args.human_column.as_deref(),
            n_items: human.len(),
            metric_names: metric_columns.iter().map(|(n, _)| n.as_str()).collect(),
        },
    )?;
    print!("{}", correlation_markdown(&table));
    Ok(())
}
