#![no_main]

use libfuzzer_sys::fuzz_target;
use modl::training::{Expectation, Manifest, ModelCheckpoint};

// Input: u32 LE manifest length, manifest bytes, tensor blob.
fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let n = u32::from_le_bytes([data[0], data[1], data[2], data[3]]) as usize;
    let rest = &data[4..];
    let (manifest, blob) = rest.split_at(n.min(rest.len()));
    let _ = Manifest::from_json(manifest);
    if let Ok(ck) = ModelCheckpoint::<f32>::decode(manifest, blob, &Expectation::default()) {
        if let Ok((m, b)) = ck.encode() {
            assert_eq!(ModelCheckpoint::<f32>::decode(&m, &b, &Expectation::default()).unwrap(), ck);
        }
    }
    let _ = ModelCheckpoint::<f64>::decode(manifest, blob, &Expectation::default());
});
