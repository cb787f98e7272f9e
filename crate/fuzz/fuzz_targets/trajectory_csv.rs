#![no_main]

use libfuzzer_sys::fuzz_target;
use navrl::eval::{parse_trajectory_csv, trajectory_csv};

fuzz_target!(|data: &str| {
    if let Ok(rows) = parse_trajectory_csv(data) {
        let _ = parse_trajectory_csv(&trajectory_csv(&rows));
    }
});
