#![no_main]

use libfuzzer_sys::fuzz_target;
use lunar_sfs_core::vq::parse_codebook_meta;

fuzz_target!(|text: &str| {
    let _ = parse_codebook_meta(text);
});
