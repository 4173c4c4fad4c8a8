// cargo fuzz run idx_decode corpus/idx_decode

#![no_main]

use libfuzzer_sys::fuzz_target;
use sphere::data::{decode_idx, encode_idx};

fuzz_target!(|data: &[u8]| {
    let Ok(arr) = decode_idx(data) else {
        return;
    };
    assert_eq!(arr.dims.iter().product::<usize>(), arr.data.len());
    assert_eq!(encode_idx(&arr), data);
});
