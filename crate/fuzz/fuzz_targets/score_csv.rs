#![no_main]

use libfuzzer_sys::fuzz_target;
use strad::timeseries::{read_scores, write_scores};

fuzz_target!(|data: &[u8]| {
    if let Ok(scores) = read_scores(data) {
        let mut buf = Vec::new();
        write_scores(&mut buf, &scores, &[]).unwrap();
        assert_eq!(read_scores(buf.as_slice()).unwrap(), scores);
    }
});
