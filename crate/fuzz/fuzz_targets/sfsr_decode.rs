#![no_main]

use libfuzzer_sys::fuzz_target;
use lunar_sfs_core::dataset::Raster;

// Anything that decodes must re-encode to the same bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok(r) = Raster::decode(data) {
        assert_eq!(r.encode(), data);
    }
});
