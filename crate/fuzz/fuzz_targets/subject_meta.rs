#![no_main]

use libfuzzer_sys::fuzz_target;
use modl::data::{decode_subject, SubjectMeta};

// Input: u32 LE meta length, meta.json bytes, then the bytes served for every array file.
fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let n = u32::from_le_bytes([data[0], data[1], data[2], data[3]]) as usize;
    let rest = &data[4..];
    let (meta, payload) = rest.split_at(n.min(rest.len()));
    if let Ok(meta) = SubjectMeta::from_json(meta) {
        let _ = decode_subject(&meta, |_| Ok(payload.to_vec()));
    }
});
