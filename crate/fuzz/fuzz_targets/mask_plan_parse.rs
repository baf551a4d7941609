#![no_main]

use libfuzzer_sys::fuzz_target;
use lunar_sfs_core::dataset::MaskPlan;

fuzz_target!(|text: &str| {
    if let Ok(plan) = MaskPlan::parse(text) {
        let again = MaskPlan::parse(&plan.to_text()).expect("printed plan parses");
        assert_eq!(again.to_text(), plan.to_text());
    }
});
