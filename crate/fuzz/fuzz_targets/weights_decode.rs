#![no_main]

use libfuzzer_sys::fuzz_target;
use mpno_core::fno::{decode_weights, encode_weights};

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = decode_weights(data) {
        let bytes = encode_weights(&model).expect("decoded model encodes");
        let again = decode_weights(&bytes).expect("encoded model decodes");
        assert_eq!(encode_weights(&again).expect("re-encode"), bytes);
    }
});
