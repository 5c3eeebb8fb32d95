#![no_main]

use libfuzzer_sys::fuzz_target;
use voe_core::storage::parse_video_meta;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = parse_video_meta(data) {
        assert!(m.frames >= 1 && m.camera.width >= 1 && m.camera.near < m.camera.far);
    }
});
