#![no_main]

use libfuzzer_sys::fuzz_target;
use mpno_core::PrecisionSystem;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sys) = text.parse::<PrecisionSystem>() {
        let again: PrecisionSystem = sys.to_string().parse().expect("display output parses");
        assert_eq!(again, sys);
        for x in [0.0, 0.3, -1.7, 1e300] {
            assert!(sys.round(x).is_finite() || matches!(sys, PrecisionSystem::EmuHalf));
        }
    }
});
