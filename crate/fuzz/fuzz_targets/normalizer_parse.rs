// cargo fuzz run normalizer_parse corpus/normalizer_parse

#![no_main]

use libfuzzer_sys::fuzz_target;
use sphere::data::Normalizer;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(norm) = Normalizer::from_text(text) else {
        return;
    };
    let canon = norm.to_text();
    assert_eq!(Normalizer::from_text(&canon).expect("canonical text parses").to_text(), canon);
});
