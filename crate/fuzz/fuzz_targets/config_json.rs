#![no_main]

use libfuzzer_sys::fuzz_target;
use slip_core::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let p = cfg.policy_config().expect("validated config has a policy config");
        assert!(p.validate().is_ok());
    }
});
