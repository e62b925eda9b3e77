use std::fs;
use std::path::Path;

use proptest::prelude::*;

use paircraft::config::RunConfig;
use paircraft::formats::{outcome_runs_from_json, read_columns, FRANSON_HEADER, FRINGE_HEADER};
use paircraft::quantum_state::DensityMatrix;
use paircraft::timetag_sim::{events_from_csv, CoincidenceHistogram, OutcomeTable};
use paircraft::tomography::ProjectionCountTable;

fn parse_everything(text: &str) {
    let _ = ProjectionCountTable::from_csv(text);
    let _ = ProjectionCountTable::from_json(text);
    let _ = CoincidenceHistogram::from_csv(text);
    let _ = events_from_csv(text);
    let _ = OutcomeTable::from_json(text);
    let _ = outcome_runs_from_json(text);
    let _ = DensityMatrix::from_json(text);
    let _ = RunConfig::parse(text);
    let _ = read_columns(text, &FRINGE_HEADER);
    let _ = read_columns(text, &FRANSON_HEADER);
}

#[test]
fn fuzz_corpus_seeds() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus");
    let mut seen = 0;
    for dir in fs::read_dir(&root).unwrap() {
        let dir = dir.unwrap().path();
        for file in fs::read_dir(&dir).unwrap() {
            let bytes = fs::read(file.unwrap().path()).unwrap();
            let text = String::from_utf8_lossy(&bytes);
            parse_everything(&text);
            parse_everything(text.get(1..).unwrap_or(""));
            seen += 1;
        }
    }
    assert!(seen >= 16, "{seen} seeds");
}

#[test]
fn valid_seeds_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus");
    let read = |p: &str| fs::read_to_string(root.join(p)).unwrap();
    ProjectionCountTable::from_csv(&read("table_csv/timebin_counts.csv")).unwrap();
    ProjectionCountTable::from_json(&read("table_json/timebin_counts.json")).unwrap();
    CoincidenceHistogram::from_csv(&read("histogram_csv/peak.csv")).unwrap();
    events_from_csv(&read("events_csv/cw.csv")).unwrap();
    outcome_runs_from_json(&read("outcome_json/runs.json")).unwrap();
    OutcomeTable::from_json(&read("outcome_json/single.json")).unwrap();
    DensityMatrix::from_json(&read("density_json/phi_plus.json")).unwrap();
    RunConfig::parse(&read("run_config/full.cfg")).unwrap();
}

proptest! {
    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,300}") {
        parse_everything(&text);
    }

    #[test]
    fn csv_like_text_never_panics(text in "[a-z_0-9,.#=:\\-\\n {}\\[\\]\"]{0,300}") {
        parse_everything(&text);
        parse_everything(&format!("delay_ps,count\n{text}"));
        parse_everything(&format!("channel,timestamp_ps\n{text}"));
        parse_everything(&format!("x,count\n{text}"));
    }
}
