#![no_main]

use libfuzzer_sys::fuzz_target;
use navrl::policy_io::parse_manifest;

fuzz_target!(|data: &str| {
    if let Ok(m) = parse_manifest(data) {
        let again = parse_manifest(&m.to_json_string()).expect("serialized manifest parses");
        assert_eq!(m, again);
    }
});
