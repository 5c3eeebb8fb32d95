#![no_main]

use libfuzzer_sys::fuzz_target;
use voe_core::storage::{parse_manifest, FORMAT_VERSION};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = parse_manifest(data) {
        assert_eq!(m.format_version, FORMAT_VERSION);
        let text = serde_json::to_vec(&m).unwrap();
        assert_eq!(parse_manifest(&text).expect("serialized manifest parses"), m);
    }
});
