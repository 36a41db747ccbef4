#![no_main]

use libfuzzer_sys::fuzz_target;
use strad::timeseries::{default_column_names, read_csv, write_csv};

fuzz_target!(|data: &[u8]| {
    for cols in [&["x0"][..], &["x0", "x1"][..]] {
        let Ok(series) = read_csv(data, "fuzz", cols, Some("label")) else {
            continue;
        };
        assert_eq!(series.len() * cols.len(), series.values().len());
        // Anything accepted must survive a write/read cycle unchanged.
        let names = default_column_names(cols.len());
        let mut buf = Vec::new();
        write_csv(&mut buf, &series, &names, "label", &[]).unwrap();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let again = read_csv(buf.as_slice(), "fuzz", &name_refs, Some("label")).unwrap();
        assert_eq!(again.values(), series.values());
        assert_eq!(again.labels(), series.labels());
    }
});
