#![no_main]

use ldrld_cli::config::parse_config;
use libfuzzer_sys::fuzz_target;

const BASE: &str = include_str!("../../configs/smoke.toml");

// Each input line is one `--set KEY=VALUE` applied to a known-good config.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let sets: Vec<String> = text.lines().map(str::to_owned).collect();
        let _ = parse_config(BASE, &sets);
    }
});
