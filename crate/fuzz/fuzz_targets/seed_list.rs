#![no_main]

use clf_core::config::parse_seed_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(seeds) = parse_seed_list(data) {
        assert!(!seeds.is_empty());
        let unique: std::collections::HashSet<_> = seeds.iter().collect();
        assert_eq!(unique.len(), seeds.len());
    }
});
