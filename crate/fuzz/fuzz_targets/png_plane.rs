#![no_main]

use libfuzzer_sys::fuzz_target;
use voe_core::storage::decode_png;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = decode_png(data) {
        let bytes_per_sample = if p.bit_depth == 16 { 2 } else { 1 };
        let want = p.width as usize * p.height as usize * p.channels * bytes_per_sample;
        assert_eq!(p.data.len(), want);
    }
});
