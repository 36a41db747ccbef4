#![no_main]

use libfuzzer_sys::fuzz_target;
use strad::checkpoint::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode(data) {
        assert_eq!(encode(&model), data);
    }
});
