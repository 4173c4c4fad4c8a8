// cargo fuzz run checkpoint_decode corpus/checkpoint_decode

#![no_main]

use libfuzzer_sys::fuzz_target;
use sphere::network::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    let Ok(net) = decode_checkpoint(data) else {
        return;
    };
    let canon = encode_checkpoint(&net);
    let again = decode_checkpoint(&canon).expect("canonical encoding decodes");
    assert_eq!(encode_checkpoint(&again), canon);
});
