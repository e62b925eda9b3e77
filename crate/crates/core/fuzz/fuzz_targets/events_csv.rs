#![no_main]

use libfuzzer_sys::fuzz_target;
use paircraft::timetag_sim::{events_from_csv, events_to_csv, CwEvents};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = events_from_csv(text) {
        let again = events_from_csv(&events_to_csv(&records)).expect("own CSV parses");
        assert_eq!(records, again);
        let _ = CwEvents::from_records(&records);
    }
});
