#![no_main]

use libfuzzer_sys::fuzz_target;
use mpno_core::Spectrum;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = Spectrum::read_csv(data) {
        let mut buf = Vec::new();
        spec.write_csv(&mut buf).expect("write to memory");
        let back = Spectrum::read_csv(buf.as_slice()).expect("written csv reads back");
        assert_eq!(back.coeffs, spec.coeffs);
    }
});
