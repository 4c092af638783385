#![no_main]

use libfuzzer_sys::fuzz_target;
use modl::data::{decode_complex, encode_complex};

// Input: rank byte, that many u16 LE dims, array bytes.
fuzz_target!(|data: &[u8]| {
    let Some((&rank, rest)) = data.split_first() else { return };
    let rank = (rank % 4) as usize;
    if rest.len() < 2 * rank {
        return;
    }
    let shape: Vec<usize> = rest[..2 * rank].chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as usize).collect();
    let bytes = &rest[2 * rank..];
    if let Ok(v) = decode_complex(bytes, &shape) {
        assert_eq!(encode_complex(&v), bytes);
    }
});
