#![no_main]

use libfuzzer_sys::fuzz_target;
use navrl::bridge::parse_line;

fuzz_target!(|data: &str| {
    if let Ok(msg) = parse_line(data) {
        let again = parse_line(&msg.to_line()).expect("serialized message parses");
        assert_eq!(msg, again);
    }
});
