#![no_main]

use libfuzzer_sys::fuzz_target;
use mpno_core::ScalarField;

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = ScalarField::read_csv(data) {
        let mut buf = Vec::new();
        field.write_csv(&mut buf).expect("write to memory");
        let back = ScalarField::read_csv(buf.as_slice()).expect("written csv reads back");
        assert_eq!(back.values(), field.values());
    }
});
