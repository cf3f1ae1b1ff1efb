#![no_main]

//! First line is the equation; each following byte sets the next axis length.

use libfuzzer_sys::fuzz_target;
use mpno_core::contract::{parse, plan_flop_optimal, plan_greedy};

fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == b'\n').unwrap_or(data.len());
    let Ok(equation) = std::str::from_utf8(&data[..split]) else { return };
    let mut dims = data.get(split + 1..).unwrap_or(&[]).iter().map(|b| (*b % 6) as usize + 1);
    let lhs = equation.split("->").next().unwrap_or("");
    let shapes: Vec<Vec<usize>> =
        lhs.split(',').map(|op| op.chars().map(|_| dims.next().unwrap_or(2)).collect()).collect();
    if let Ok(spec) = parse(equation, &shapes) {
        let reparsed = parse(&spec.equation(), spec.shapes()).expect("canonical form parses");
        assert_eq!(reparsed.equation(), spec.equation());
        if (2..=6).contains(&spec.num_operands()) {
            let g = plan_greedy(&spec).expect("greedy plans any valid spec");
            let o = plan_flop_optimal(&spec).expect("flop-optimal plans any valid spec");
            assert!(o.total_flops <= g.total_flops);
        }
    }
});
