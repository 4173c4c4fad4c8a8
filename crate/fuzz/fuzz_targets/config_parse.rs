// cargo fuzz run config_parse corpus/config_parse

#![no_main]

use libfuzzer_sys::fuzz_target;
use sphere::config::{RawConfig, TrainConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(raw) = RawConfig::parse(text) else {
        return;
    };
    let Ok(cfg) = TrainConfig::from_raw(&raw) else {
        return;
    };
    // The canonical rendering is a fixed point.
    let canon = cfg.to_text();
    let again = TrainConfig::from_raw(&RawConfig::parse(&canon).expect("canonical text parses")).expect("canonical text is valid");
    assert_eq!(again.to_text(), canon);
});
