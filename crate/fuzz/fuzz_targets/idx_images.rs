#![no_main]

use ldrld_train::data::{idx_dataset, parse_idx_images, Split};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_idx_images(data) {
        assert_eq!(img.pixels.len(), img.count * img.rows * img.cols);
        let labels = vec![0u8; img.count];
        let _ = idx_dataset(&img, &labels, None, Split::Train);
    }
});
