#![no_main]

use libfuzzer_sys::fuzz_target;
use modl::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = RunConfig::from_json(data) {
        // Anything accepted must survive a round trip.
        let again = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(again, cfg);
        let _ = cfg.hash();
    }
});
