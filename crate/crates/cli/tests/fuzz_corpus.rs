//! Replays the config-parser fuzz seeds with the fuzz target's invariant.

use std::fs;
use std::path::{Path, PathBuf};

use strad_cli::config::parse;

#[test]
fn config_parse_seeds() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/config_parse");
    let mut outcomes = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    for path in entries {
        let text = fs::read_to_string(&path).unwrap();
        let parsed = parse(&text, Path::new("seed.toml"));
        if let Ok(cfg) = &parsed {
            let again = parse(&cfg.to_toml(), Path::new("seed.toml")).unwrap();
            assert_eq!(again.hash(), cfg.hash(), "{}", path.display());
        }
        outcomes.push(parsed.is_ok());
    }
    assert_eq!(outcomes, [true, true, false]);
}
