#![no_main]

//! Tokens accepted by command-line options: lowering, stabilizer, precision
//! mode, activation and test function.

use libfuzzer_sys::fuzz_target;
use mpno_core::contract::LoweringMode;
use mpno_core::error_lab::FunctionSpec;
use mpno_core::fno::{Activation, PrecisionMode, StabilizerKind};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = text.parse::<LoweringMode>();
    let _ = text.parse::<StabilizerKind>();
    let _ = text.parse::<PrecisionMode>();
    let _ = text.parse::<Activation>();
    let _ = FunctionSpec::parse(text, 0);
});
