#![no_main]

use libfuzzer_sys::fuzz_target;
use navrl::policy_io::load_from_bytes;

// Input is `manifest JSON \0 weight blob`.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else { return };
    let Ok(manifest) = std::str::from_utf8(&data[..split]) else { return };
    if let Ok((weights, m)) = load_from_bytes(manifest, &data[split + 1..]) {
        assert_eq!(weights.num_params(), m.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum::<usize>());
    }
});
