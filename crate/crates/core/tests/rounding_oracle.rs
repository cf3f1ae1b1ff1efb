//! Binary16 and E5M2 rounding against tables built from the bit layouts.

use mpno_core::precision::{round_binary16, round_e5m2_clip};
use mpno_core::PrecisionSystem;
use proptest::prelude::*;

/// Non-negative finite values of a binary float with `exp_bits` exponent bits
/// and `man_bits` fraction bits, ascending. Index parity is the parity of the
/// encoding, which is what ties-to-even looks at.
fn table(exp_bits: u32, man_bits: u32) -> Vec<f64> {
    let bias = (1i32 << (exp_bits - 1)) - 1;
    let mut v = Vec::new();
    for e in 0..(1u32 << exp_bits) - 1 {
        for f in 0..1u32 << man_bits {
            let frac = f as f64 / (1u32 << man_bits) as f64;
            v.push(if e == 0 {
                frac * 2f64.powi(1 - bias)
            } else {
                (1.0 + frac) * 2f64.powi(e as i32 - bias)
            });
        }
    }
    v
}

/// Nearest table entry, ties to the even encoding. Past the top, `overflow`
/// decides what a magnitude rounding beyond the largest value becomes.
fn nearest(t: &[f64], a: f64, overflow: f64) -> f64 {
    let top = t[t.len() - 1];
    let ulp_top = top - t[t.len() - 2];
    if a >= top {
        // next value up would be top + ulp_top, with an even encoding
        return if a >= top + ulp_top / 2.0 { overflow } else { top };
    }
    let i = t.partition_point(|&x| x <= a) - 1;
    let (lo, hi) = (t[i], t[i + 1]);
    let (dl, dh) = (a - lo, hi - a);
    if dl < dh || (dl == dh && i % 2 == 0) {
        lo
    } else {
        hi
    }
}

#[test]
fn binary16_matches_table_on_every_value_and_midpoint() {
    let t = table(5, 10);
    assert_eq!(t.len(), 31 * 1024);
    assert_eq!(t[t.len() - 1], 65504.0);
    for (i, &x) in t.iter().enumerate() {
        assert_eq!(round_binary16(x), x);
        assert_eq!(round_binary16(-x), -x);
        if let Some(&next) = t.get(i + 1) {
            let mid = (x + next) / 2.0;
            let want = if i % 2 == 0 { x } else { next };
            assert_eq!(round_binary16(mid), want, "midpoint of {x} and {next}");
        }
    }
    assert_eq!(round_binary16(65519.99), 65504.0);
    assert_eq!(round_binary16(65520.0), f64::INFINITY);
    assert_eq!(round_binary16(-1e9), f64::NEG_INFINITY);
}

#[test]
fn e5m2_matches_table_on_every_value_and_midpoint() {
    let t = table(5, 2);
    assert_eq!(t[t.len() - 1], 57344.0);
    for (i, &x) in t.iter().enumerate() {
        assert_eq!(round_e5m2_clip(x), x);
        if let Some(&next) = t.get(i + 1) {
            let want = if i % 2 == 0 { x } else { next };
            assert_eq!(round_e5m2_clip((x + next) / 2.0), want);
        }
    }
    assert_eq!(round_e5m2_clip(1e30), 57344.0);
    assert_eq!(round_e5m2_clip(-1e30), -57344.0);
}

fn magnitudes() -> impl Strategy<Value = f64> {
    prop_oneof![0.0..1e-4f64, 0.0..1.0f64, 0.0..70000.0f64, (-30i32..17, 0.0..1.0f64).prop_map(|(e, u)| (1.0 + u) * 2f64.powi(e))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4096))]

    #[test]
    fn half_agrees_with_nearest_search(a in magnitudes(), neg in any::<bool>()) {
        let t = table(5, 10);
        let x = if neg { -a } else { a };
        let want = nearest(&t, a, f64::INFINITY).copysign(x);
        prop_assert_eq!(PrecisionSystem::EmuHalf.round(x), want);
    }

    #[test]
    fn e5m2_agrees_with_nearest_search(a in magnitudes(), neg in any::<bool>()) {
        let t = table(5, 2);
        let x = if neg { -a } else { a };
        let want = nearest(&t, a, 57344.0).copysign(x);
        prop_assert_eq!(PrecisionSystem::EmuFp8Clip.round(x), want);
    }

    #[test]
    fn geometric_agrees_with_enumeration(
        a0 in 0.01..2.0f64,
        eps in 0.01..1.0f64,
        t in 0u32..40,
        x in -200.0..200.0f64,
    ) {
        let sys = PrecisionSystem::geometric(a0, eps, t).unwrap();
        let mut set = vec![0.0];
        for i in 0..=t {
            let l = a0 * (1.0 + eps).powi(i as i32);
            set.push(l);
            set.push(-l);
        }
        // nearest; on a tie the smaller magnitude wins
        let best = set
            .iter()
            .copied()
            .min_by(|p, q| {
                (x - p).abs().partial_cmp(&(x - q).abs()).unwrap().then(p.abs().partial_cmp(&q.abs()).unwrap())
            })
            .unwrap();
        prop_assert_eq!(sys.round(x), best);
    }
}
