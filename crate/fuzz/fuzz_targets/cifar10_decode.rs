// cargo fuzz run cifar10_decode corpus/cifar10_decode

#![no_main]

use libfuzzer_sys::fuzz_target;
use sphere::data::{decode_cifar10, encode_cifar10};

fuzz_target!(|data: &[u8]| {
    let Ok(batch) = decode_cifar10(data) else {
        return;
    };
    assert_eq!(encode_cifar10(&batch), data, "accepted records must re-encode byte for byte");
    assert!(batch.labels.iter().all(|&l| l < 10));
});
