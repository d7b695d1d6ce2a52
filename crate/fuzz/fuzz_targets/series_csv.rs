#![no_main]

use clf_core::data::parse_series_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(series) = parse_series_csv(text) {
        assert!(series.iter().all(|v| v.is_finite()));
    }
});
