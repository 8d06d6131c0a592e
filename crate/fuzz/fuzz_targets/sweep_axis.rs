#![no_main]

use ldrld_cli::sweep::{cell_name, grid, parse_axis};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(axis) = parse_axis(text) {
        assert!(!axis.values.is_empty());
        for cell in grid(std::slice::from_ref(&axis)) {
            assert!(!cell_name(&cell).contains('/'));
        }
    }
});
