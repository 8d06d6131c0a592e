#![no_main]

use ldrld_train::checkpoint::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode(data) {
        assert_eq!(encode(&model), data);
    }
});
