#![no_main]

use clf_core::data::parse_classification_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&first, rest)) = data.split_first() else {
        return;
    };
    let n_classes = 2 + (first % 9) as usize;
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    if let Ok(dataset) = parse_classification_csv(text, n_classes) {
        assert_eq!(dataset.inputs.rows(), dataset.labels.len());
        assert!(dataset.labels.iter().all(|&l| l < n_classes));
    }
});
