#![no_main]

use fokker_lab::worldline::{SwitchingProfile, Worldline};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Worldline::from_table(text, 1.0, SwitchingProfile::constant(0.1));
    }
});
