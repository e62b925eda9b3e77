#![no_main]

use libfuzzer_sys::fuzz_target;
use paircraft::formats::{read_columns, write_columns, BEATING_HEADER, FRANSON_HEADER, FRINGE_HEADER, POWER_SWEEP_HEADER};

fuzz_target!(|data: &[u8]| {
    let Some((&which, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let header: &[&str] = match which % 4 {
        0 => &FRINGE_HEADER,
        1 => &FRANSON_HEADER,
        2 => &BEATING_HEADER,
        _ => &POWER_SWEEP_HEADER,
    };
    if let Ok(cols) = read_columns(text, header) {
        assert_eq!(cols.len(), header.len());
        assert!(cols.iter().all(|c| c.len() == cols[0].len() && c.iter().all(|v| v.is_finite())));
        assert_eq!(read_columns(&write_columns(header, &cols), header).expect("own CSV parses"), cols);
    }
});
