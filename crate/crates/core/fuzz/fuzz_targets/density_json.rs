#![no_main]

use libfuzzer_sys::fuzz_target;
use paircraft::quantum_state::DensityMatrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rho) = DensityMatrix::from_json(text) {
        DensityMatrix::from_json(&rho.to_json()).expect("own JSON parses");
        let _ = rho.is_physical();
    }
});
