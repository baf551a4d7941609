#![no_main]

use libfuzzer_sys::fuzz_target;
use lunar_sfs_core::config::KeyValues;

fuzz_target!(|text: &str| {
    let _ = KeyValues::parse(text);
});
