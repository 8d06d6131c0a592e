#![no_main]

use ldrld_train::data::{parse_delimited, write_delimited, DelimitedOptions, Split};
use libfuzzer_sys::fuzz_target;

// First byte picks the options, the rest is the file body.
fuzz_target!(|data: &[u8]| {
    let Some((&head, body)) = data.split_first() else { return };
    let mut opts = DelimitedOptions::new([',', ';', '\t', ' '][(head & 3) as usize], ((head >> 2) & 7) as usize);
    opts.has_header = head & 0x20 != 0;
    if let Ok(ds) = parse_delimited(body, &opts, Split::Train) {
        let mut text = Vec::new();
        write_delimited(&ds, &opts, &mut text).expect("parsed data writes back");
        let again = parse_delimited(&text, &opts, Split::Train).expect("written data parses");
        assert_eq!(again.labels(), ds.labels());
        assert_eq!(again.features().len(), ds.features().len());
    }
});
