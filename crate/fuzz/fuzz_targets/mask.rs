#![no_main]

use libfuzzer_sys::fuzz_target;
use modl::data::decode_mask;
use modl::mri::MaskKind;

// Input: height byte, width byte, acceleration byte (tenths), mask bytes.
fuzz_target!(|data: &[u8]| {
    if data.len() < 3 {
        return;
    }
    let (h, w, r) = (data[0] as usize, data[1] as usize, data[2] as f64 / 10.0);
    let _ = decode_mask(&data[3..], h, w, MaskKind::PoissonDisc1d, r);
});
