#![no_main]

use clf_core::config::parse_pool;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(pool) = parse_pool(data) {
        assert!(pool.iter().all(|v| v.is_finite()));
    }
});
