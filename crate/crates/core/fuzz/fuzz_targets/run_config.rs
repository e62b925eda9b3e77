#![no_main]

use libfuzzer_sys::fuzz_target;
use paircraft::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        assert!(cfg.window > 0.0 && cfg.duration > 0.0);
        assert!(cfg.pump_powers_mw.iter().all(|p| *p >= 0.0));
        let _ = cfg.angular_frequencies();
    }
});
