//! Planned contractions against a direct nested-loop einsum.

use std::collections::BTreeMap;

use mpno_core::contract::{execute, parse, plan_flop_optimal, plan_greedy, ComplexTensor, LoweringMode, PlanCache};
use mpno_core::PrecisionSystem;
use num_complex::Complex64;
use proptest::prelude::*;

#[derive(Debug)]
struct Case {
    equation: String,
    shapes: Vec<Vec<usize>>,
    ops: Vec<ComplexTensor>,
}

fn naive(case: &Case) -> Vec<Complex64> {
    let (lhs, rhs) = case.equation.split_once("->").unwrap();
    let inputs: Vec<&[u8]> = lhs.split(',').map(str::as_bytes).collect();
    let output = rhs.as_bytes();
    let mut dims = BTreeMap::new();
    for (labels, shape) in inputs.iter().zip(&case.shapes) {
        for (l, &n) in labels.iter().zip(shape) {
            dims.insert(*l, n);
        }
    }
    let labels: Vec<u8> = dims.keys().copied().collect();
    let pos = |l: &u8| labels.iter().position(|x| x == l).unwrap();
    let offset = |ls: &[u8], idx: &[usize]| ls.iter().fold(0, |acc, l| acc * dims[l] + idx[pos(l)]);
    let total: usize = dims.values().product();
    let mut out = vec![Complex64::new(0.0, 0.0); output.iter().map(|l| dims[l]).product()];
    let mut idx = vec![0; labels.len()];
    for mut flat in 0..total {
        for k in (0..labels.len()).rev() {
            idx[k] = flat % dims[&labels[k]];
            flat /= dims[&labels[k]];
        }
        let p: Complex64 = inputs.iter().zip(&case.ops).map(|(ls, op)| op.data[offset(ls, &idx)]).product();
        out[offset(output, &idx)] += p;
    }
    out
}

fn cases() -> impl Strategy<Value = Case> {
    let alphabet = b"abcdef";
    (2usize..=5, prop::collection::vec(1usize..=3, 6), any::<u64>()).prop_flat_map(move |(k, sizes, seed)| {
        let operand = prop::sample::subsequence(alphabet.to_vec(), 1..=3);
        (prop::collection::vec(operand, k), prop::sample::subsequence(alphabet.to_vec(), 0..=3)).prop_map(
            move |(inputs, out)| {
                let used: Vec<u8> = alphabet.iter().copied().filter(|l| inputs.iter().any(|op| op.contains(l))).collect();
                let output: Vec<u8> = out.into_iter().filter(|l| used.contains(l)).collect();
                let lhs: Vec<String> = inputs.iter().map(|op| String::from_utf8(op.clone()).unwrap()).collect();
                let equation = format!("{}->{}", lhs.join(","), String::from_utf8(output).unwrap());
                let dim = |l: u8| sizes[(l - b'a') as usize];
                let shapes: Vec<Vec<usize>> = inputs.iter().map(|op| op.iter().map(|&l| dim(l)).collect()).collect();
                let mut state = seed | 1;
                let mut next = move || {
                    // xorshift64
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
                };
                let ops = shapes
                    .iter()
                    .map(|s| ComplexTensor::from_fn(s.clone(), |_| Complex64::new(next(), next())))
                    .collect();
                Case { equation, shapes, ops }
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_plan_and_lowering_matches_nested_loops(case in cases()) {
        let spec = parse(&case.equation, &case.shapes).unwrap();
        let want = naive(&case);
        let greedy = plan_greedy(&spec).unwrap();
        let optimal = plan_flop_optimal(&spec).unwrap();
        prop_assert!(optimal.total_flops <= greedy.total_flops, "{}", case.equation);
        prop_assert_eq!(greedy.steps.len(), case.shapes.len() - 1);
        for plan in [&greedy, &optimal] {
            for mode in [LoweringMode::AllReal, LoweringMode::PairwiseReal, LoweringMode::Hybrid(2)] {
                let got = execute(plan, &case.ops, &PrecisionSystem::Exact, mode).unwrap();
                prop_assert_eq!(&got.shape, &spec.output_shape());
                for (a, b) in got.data.iter().zip(&want) {
                    prop_assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()), "{}: {} vs {}", case.equation, a, b);
                }
            }
        }
    }

    #[test]
    fn half_execution_stays_close(case in cases()) {
        let spec = parse(&case.equation, &case.shapes).unwrap();
        let want = naive(&case);
        let plan = plan_greedy(&spec).unwrap();
        let got = execute(&plan, &case.ops, &PrecisionSystem::EmuHalf, LoweringMode::default()).unwrap();
        // entries are sums of at most 3^6 products of five unit-bounded factors
        let scale = want.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for (a, b) in got.data.iter().zip(&want) {
            prop_assert!((a - b).norm() <= 0.05 * scale, "{}: {} vs {}", case.equation, a, b);
        }
    }
}

#[test]
fn cache_shares_plans_across_threads() {
    let spec = parse("ab,bc,cd->ad", &[vec![2, 3], vec![3, 4], vec![4, 5]]).unwrap();
    let cache = PlanCache::new();
    std::thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| {
                for _ in 0..50 {
                    cache.get_or_plan(&spec, &PrecisionSystem::Exact, LoweringMode::default()).unwrap();
                }
            });
        }
    });
    assert_eq!(cache.hits() + cache.misses(), 400);
    assert_eq!(cache.plannings(), 1);
    assert_eq!(cache.len(), 1);
}
