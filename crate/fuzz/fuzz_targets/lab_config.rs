#![no_main]

use libfuzzer_sys::fuzz_target;
use mpno_lab::config::{parse_config, BoundsArgs, ModesArgs, PlanArgs, SpectrumArgs, TrainArgs};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_config::<BoundsArgs>(text);
    let _ = parse_config::<PlanArgs>(text);
    let _ = parse_config::<TrainArgs>(text);
    let _ = parse_config::<ModesArgs>(text);
    let _ = parse_config::<SpectrumArgs>(text);
});
