#![no_main]

use libfuzzer_sys::fuzz_target;
use paircraft::tomography::ProjectionCountTable;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = ProjectionCountTable::from_json(text) {
        let again = ProjectionCountTable::from_json(&table.to_json()).expect("own JSON parses");
        assert_eq!(table, again);
    }
});
