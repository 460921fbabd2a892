#![no_main]

use std::collections::BTreeMap;

use libfuzzer_sys::fuzz_target;
use serde_json::Value;
use slip_core::harness::apply_overrides;
use slip_core::policy::PolicyConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(map) = serde_json::from_slice::<BTreeMap<String, Value>>(data) else { return };
    let base = PolicyConfig::default();
    if let Ok(cfg) = apply_overrides(&base, &map) {
        let again = serde_json::to_value(&cfg).unwrap();
        assert_eq!(serde_json::from_value::<PolicyConfig>(again).unwrap(), cfg);
    }
});
