#![no_main]

use libfuzzer_sys::fuzz_target;
use navrl::world::WorldSpec;

fuzz_target!(|data: &str| {
    if let Ok(spec) = WorldSpec::from_json_str(data) {
        let again = WorldSpec::from_json_str(&spec.to_json_string()).expect("serialized spec parses");
        assert_eq!(spec, again);
    }
});
