#![no_main]

use libfuzzer_sys::fuzz_target;
use paircraft::timetag_sim::CoincidenceHistogram;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(hist) = CoincidenceHistogram::from_csv(text) {
        assert!(hist.bin_width > 0);
        let again = CoincidenceHistogram::from_csv(&hist.to_csv()).expect("own CSV parses");
        assert_eq!(hist, again);
    }
});
