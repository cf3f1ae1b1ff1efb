//! Einsum parsing, pairwise contraction planning, plan caching and
//! execution under a precision system.

mod cache;
mod exec;
mod plan;
mod spec;

pub use cache::PlanCache;
pub use exec::{complex_mul_via_real, execute, reference_contract, ComplexTensor};
pub use plan::{
    peak_of, plan_flop_optimal, plan_greedy, CacheKey, EinsumPlan, LoweringMode, PlanDoc, PlanStep, Strategy,
    DEFAULT_HYBRID_THRESHOLD, MAX_OPTIMAL_OPERANDS,
};
pub use spec::{parse, EinsumSpec};

/// Named benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub name: &'static str,
    pub equation: &'static str,
    pub shapes: Vec<Vec<usize>>,
}

/// FNO weight contraction, CP-factorized weights, a 3-chain and a 4-chain.
pub fn bundled_suite() -> Vec<BenchCase> {
    let (b, i, o, x, y, r) = (2, 4, 4, 8, 8, 3);
    vec![
        BenchCase {
            name: "fno",
            equation: "bixy,ioxy->boxy",
            shapes: vec![vec![b, i, x, y], vec![i, o, x, y]],
        },
        BenchCase {
            name: "cp",
            equation: "bixy,r,ri,ro,rx,ry->boxy",
            shapes: vec![vec![b, i, x, y], vec![r], vec![r, i], vec![r, o], vec![r, x], vec![r, y]],
        },
        BenchCase {
            name: "chain3",
            equation: "ab,bc,cd->ad",
            shapes: vec![vec![2, 100], vec![100, 2], vec![2, 100]],
        },
        BenchCase {
            name: "chain4",
            equation: "ab,bc,cd,de->ae",
            shapes: vec![vec![4, 32], vec![32, 8], vec![8, 64], vec![64, 4]],
        },
    ]
}
