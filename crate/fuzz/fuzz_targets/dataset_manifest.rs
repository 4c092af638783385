#![no_main]

use libfuzzer_sys::fuzz_target;
use modl::data::DatasetManifest;

fuzz_target!(|data: &[u8]| {
    let _ = DatasetManifest::from_json(data);
});
