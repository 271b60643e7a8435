use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sstem_core::model::{DatasetManifest, VideoEntry};
use sstem_core::tabular::{read_human_scores, write_atomic};
use sstem_rating::{RatingStore, LOG_FILE};

fn manifest(ids: &[&str]) -> DatasetManifest {
    DatasetManifest {
        dataset_id: "study".into(),
        videos: ids
            .iter()
            .map(|id| VideoEntry {
                video_id: id.to_string(),
                original_path: PathBuf::from("o.gif"),
                edited_path: PathBuf::from("e.gif"),
                edit_prompt: "turn the cat into a tiger".into(),
                model_name: "m".into(),
            })
            .collect(),
        split: BTreeMap::new(),
    }
}

fn open(dir: &Path, ids: &[&str]) -> RatingStore {
    RatingStore::open(dir, manifest(ids)).unwrap()
}

#[test]
fn two_raters_average() {
    let dir = tempfile::tempdir().unwrap();
    let s = open(dir.path(), &["v1"]);
    assert!(s.aggregates().is_empty());
    assert_eq!(s.submit_at("alice", "v1", [4, 4, 4], "t").unwrap().record.normalized, 0.4);
    s.submit_at("bob", "v1", [5, 5, 5], "t").unwrap();
    let agg = s.aggregates();
    assert_eq!(agg.len(), 1);
    assert_eq!(agg[0].mean_normalized, 0.45);
    assert_eq!(agg[0].n_raters, 2);
    assert_eq!(agg[0].per_axis.semantic_accuracy, 4.5);
}

#[test]
fn resubmission_replaces() {
    let dir = tempfile::tempdir().unwrap();
    let s = open(dir.path(), &["v1"]);
    s.submit_at("alice", "v1", [4, 4, 4], "t1").unwrap();
    s.submit_at("bob", "v1", [5, 5, 5], "t1").unwrap();
    s.submit_at("alice", "v1", [6, 6, 6], "t2").unwrap();
    let agg = s.aggregates();
    assert_eq!(agg[0].mean_normalized, 0.55);
    assert_eq!(agg[0].n_raters, 2);
    // replacement also survives replay
    assert_eq!(open(dir.path(), &["v1"]).aggregates(), agg);
}

#[test]
fn axis_examples() {
    let dir = tempfile::tempdir().unwrap();
    let s = open(dir.path(), &["v1"]);
    let r = s.submit_at("a", "v1", [8, 8, 8], "t").unwrap();
    assert_eq!((r.record.raw_score, r.record.normalized), (8, 0.8));
    let r = s.submit_at("b", "v1", [10, 10, 10], "t").unwrap();
    assert_eq!(r.record.normalized, 1.0);
    assert_eq!(s.submit_at("c", "v1", [0, 5, 5], "t").unwrap_err().code(), "OUT_OF_RANGE");
    assert_eq!(s.snapshot().len(), 2);
}

#[test]
fn order_of_submission_does_not_matter() {
    let subs: Vec<(&str, &str, [i64; 3])> = vec![
        ("a", "v1", [3, 7, 9]),
        ("b", "v1", [10, 1, 4]),
        ("c", "v2", [6, 6, 5]),
        ("a", "v2", [2, 9, 9]),
        ("d", "v1", [7, 7, 8]),
    ];
    let dir1 = tempfile::tempdir().unwrap();
    let forward = open(dir1.path(), &["v1", "v2"]);
    for (r, v, x) in &subs {
        forward.submit_at(r, v, *x, "t").unwrap();
    }
    let dir2 = tempfile::tempdir().unwrap();
    let backward = open(dir2.path(), &["v1", "v2"]);
    for (r, v, x) in subs.iter().rev() {
        backward.submit_at(r, v, *x, "t").unwrap();
    }
    assert_eq!(forward.aggregates(), backward.aggregates());
    assert_eq!(forward.export_human_scores(), backward.export_human_scores());
}

#[test]
fn restart_preserves_records_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let before: Vec<_> = {
        let s = open(dir.path(), &["v1", "v2"]);
        s.submit("alice", "v1", [7, 9, 8]).unwrap();
        s.submit("bob", "v1", [1, 2, 2]).unwrap();
        s.submit("alice", "v2", [10, 10, 9]).unwrap();
        s.flush().unwrap();
        s.snapshot().records().cloned().collect()
    };
    let log = fs::read(dir.path().join(LOG_FILE)).unwrap();
    let s = open(dir.path(), &["v1", "v2"]);
    let after: Vec<_> = s.snapshot().records().cloned().collect();
    assert_eq!(after, before);
    assert_eq!(fs::read(dir.path().join(LOG_FILE)).unwrap(), log);
    let again: Vec<String> = after.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    let lines: Vec<&str> = std::str::from_utf8(&log).unwrap().lines().collect();
    let mut sorted_lines = lines.clone();
    sorted_lines.sort();
    let mut sorted_again = again.clone();
    sorted_again.sort();
    assert_eq!(sorted_again, sorted_lines);
}

#[test]
fn export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let s = open(dir.path(), &["v1", "v2", "v3"]);
    assert_eq!(s.export_human_scores(), b"video_id,mean_normalized,n_raters\n");
    s.submit_at("alice", "v1", [4, 4, 4], "t").unwrap();
    s.submit_at("bob", "v1", [5, 5, 5], "t").unwrap();
    s.submit_at("alice", "v3", [7, 8, 9], "t").unwrap();
    let path = dir.path().join("human.csv");
    write_atomic(&path, &s.export_human_scores()).unwrap();
    let rows = read_human_scores(&path).unwrap();
    assert_eq!(rows.len(), 2);
    for (row, agg) in rows.iter().zip(s.aggregates()) {
        assert_eq!(row.video_id, agg.video_id);
        assert!((row.mean_normalized - agg.mean_normalized).abs() <= 1e-12);
        assert_eq!(row.n_raters, agg.n_raters);
    }
    assert_eq!(rows[0].mean_normalized, 0.45);
}

#[test]
fn concurrent_submissions_all_land() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<String> = (0..8).map(|i| format!("v{i}")).collect();
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let s = open(dir.path(), &refs);
    std::thread::scope(|scope| {
        for r in 0..6 {
            let s = &s;
            let ids = &ids;
            scope.spawn(move || {
                for (i, v) in ids.iter().enumerate() {
                    let x = (r + i) as i64 % 10 + 1;
                    s.submit_at(&format!("r{r}"), v, [x, x, x], "t").unwrap();
                }
            });
        }
    });
    assert_eq!(s.snapshot().len(), 48);
    assert!(s.aggregates().iter().all(|a| a.n_raters == 6));
    assert_eq!(open(dir.path(), &refs).aggregates(), s.aggregates());
}
