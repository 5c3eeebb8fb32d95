#![no_main]

use libfuzzer_sys::fuzz_target;
use voe_core::storage::{format_score_line, parse_score_line};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rec) = parse_score_line(text, 1) {
        assert!(rec.s.is_finite() && rec.s >= 0.0);
        // Accepted records survive a write and re-read unchanged.
        let again = parse_score_line(&format_score_line(&rec), 1).expect("formatted line parses");
        assert_eq!(again, rec);
    }
});
