#![no_main]

use libfuzzer_sys::fuzz_target;
use paircraft::formats::{outcome_runs_from_json, outcome_runs_to_json};
use paircraft::timetag_sim::OutcomeTable;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = OutcomeTable::from_json(text) {
        assert_eq!(OutcomeTable::from_json(&table.to_json()).expect("own JSON parses"), table);
    }
    if let Ok(runs) = outcome_runs_from_json(text) {
        assert_eq!(outcome_runs_from_json(&outcome_runs_to_json(&runs)).expect("own JSON parses"), runs);
    }
});
