#![no_main]

use libfuzzer_sys::fuzz_target;
use lunar_sfs_core::vq::TokenGrid;

fuzz_target!(|text: &str| {
    if let Ok(grid) = TokenGrid::parse(text) {
        assert_eq!(grid.indices.len(), grid.cells_x * grid.cells_y);
        assert_eq!(TokenGrid::parse(&grid.to_text()).unwrap().indices, grid.indices);
    }
});
