#![no_main]

use libfuzzer_sys::fuzz_target;
use strad::timeseries::read_labels;

fuzz_target!(|data: &[u8]| {
    if let Ok(labels) = read_labels(data, "label") {
        assert!(labels.iter().all(|&l| l <= 1));
    }
});
