#![no_main]

use libfuzzer_sys::fuzz_target;
use modl::conditioning::ConditionVector;

fuzz_target!(|data: &[u8]| {
    let v: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if let Ok(c) = ConditionVector::from_values(&v) {
        assert_eq!(c.values().as_slice(), v.as_slice());
    }
});
