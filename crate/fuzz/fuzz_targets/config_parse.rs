#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use strad_cli::config::parse;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = parse(text, Path::new("fuzz.toml")) {
        let again = parse(&cfg.to_toml(), Path::new("fuzz.toml")).expect("rendered config parses");
        assert_eq!(again.hash(), cfg.hash());
    }
});
