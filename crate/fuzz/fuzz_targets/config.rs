#![no_main]

use libfuzzer_sys::fuzz_target;
use navrl::config::{parse_config_strs, parse_override, TaskConfig, TrainConfig};

fuzz_target!(|data: &str| {
    let _ = TaskConfig::from_json_str(data);
    let _ = TrainConfig::from_json_str(data);
    if parse_override(data).is_ok() {
        let _ = parse_config_strs("{}", "{}", &[data.to_string()]);
    }
});
