use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::spec::{term_str, EinsumSpec};
use crate::error::{Error, Result};

/// Largest operand count accepted by the exhaustive FLOP-optimal search.
pub const MAX_OPTIMAL_OPERANDS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    FlopOptimal,
}

/// How complex contractions are lowered to real arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoweringMode {
    /// Every operand split into real parts up front, one monolithic contraction.
    AllReal,
    /// Real/imaginary split around every pairwise step.
    PairwiseReal,
    /// Split only on steps whose result rank is at least the threshold.
    Hybrid(usize),
}

pub const DEFAULT_HYBRID_THRESHOLD: usize = 3;

impl Default for LoweringMode {
    fn default() -> Self {
        LoweringMode::Hybrid(DEFAULT_HYBRID_THRESHOLD)
    }
}

impl LoweringMode {
    pub fn hybrid(threshold: usize) -> Result<Self> {
        if threshold == 0 {
            return Err(Error::Parse("hybrid threshold must be at least 1".into()));
        }
        Ok(LoweringMode::Hybrid(threshold))
    }

    /// Whether a pairwise step with this result rank runs in real arithmetic.
    pub fn step_is_real(&self, result_rank: usize) -> bool {
        match *self {
            LoweringMode::AllReal | LoweringMode::PairwiseReal => true,
            LoweringMode::Hybrid(t) => result_rank >= t,
        }
    }
}

impl fmt::Display for LoweringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoweringMode::AllReal => f.write_str("all-real"),
            LoweringMode::PairwiseReal => f.write_str("pairwise-real"),
            LoweringMode::Hybrid(t) => write!(f, "hybrid:{t}"),
        }
    }
}

impl FromStr for LoweringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all-real" => Ok(LoweringMode::AllReal),
            "pairwise-real" => Ok(LoweringMode::PairwiseReal),
            "hybrid" => Ok(LoweringMode::default()),
            other => {
                let t = other
                    .strip_prefix("hybrid:")
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown lowering mode `{other}`")))?;
                LoweringMode::hybrid(t)
            }
        }
    }
}

impl Serialize for LoweringMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LoweringMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One pairwise contraction. Inputs have ids `0..k`; step `s` produces id `k + s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub left: usize,
    pub right: usize,
    pub equation: String,
    pub shape: Vec<usize>,
    pub elems: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub equation: String,
    pub shapes: Vec<Vec<usize>>,
    pub precision: String,
    pub mode: LoweringMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EinsumPlan {
    pub spec: EinsumSpec,
    pub strategy: Strategy,
    pub steps: Vec<PlanStep>,
    pub peak_intermediate_elems: u64,
    pub total_flops: u64,
    pub cache_key: Option<CacheKey>,
}

/// JSON document for one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub equation: String,
    pub shapes: Vec<Vec<usize>>,
    pub steps: Vec<PlanStep>,
    pub peak_elems: u64,
    pub flops: u64,
    pub mode: LoweringMode,
}

impl EinsumPlan {
    pub fn doc(&self, mode: LoweringMode) -> PlanDoc {
        PlanDoc {
            equation: self.spec.equation(),
            shapes: self.spec.shapes().to_vec(),
            steps: self.steps.clone(),
            peak_elems: self.peak_intermediate_elems,
            flops: self.total_flops,
            mode,
        }
    }

    /// Peak in bytes for a given storage width per real component.
    pub fn peak_bytes(&self, bytes_per_real: usize) -> u64 {
        self.peak_intermediate_elems.saturating_mul(2 * bytes_per_real as u64)
    }

    /// Stable human-readable listing.
    pub fn render(&self) -> String {
        let mut out = format!("{:?} {}\n", self.strategy, self.spec.equation()).to_lowercase();
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "  step {i}: ({}, {}) {} -> {:?} elems={} flops={}\n",
                s.left, s.right, s.equation, s.shape, s.elems, s.flops
            ));
        }
        out.push_str(&format!(
            "  peak_intermediate_elems={} total_flops={}\n",
            self.peak_intermediate_elems, self.total_flops
        ));
        out
    }
}

#[derive(Clone)]
struct Live {
    id: usize,
    labels: Vec<u8>,
}

/// Labels kept after contracting `a` and `b`: those still needed by `others`
/// or the output, in first-appearance order. The final step uses the output order.
fn result_labels(spec: &EinsumSpec, a: &[u8], b: &[u8], others: &[&[u8]], last: bool) -> Vec<u8> {
    if last {
        return spec.output().to_vec();
    }
    let mut out = Vec::new();
    for &l in a.iter().chain(b) {
        if out.contains(&l) {
            continue;
        }
        if spec.output().contains(&l) || others.iter().any(|o| o.contains(&l)) {
            out.push(l);
        }
    }
    out
}

fn step_flops(spec: &EinsumSpec, a: &[u8], b: &[u8]) -> u64 {
    let mut union: Vec<u8> = a.to_vec();
    union.extend(b.iter().filter(|l| !a.contains(l)));
    spec.size_of(&union)
}

fn make_step(spec: &EinsumSpec, left: &Live, right: &Live, res: &[u8]) -> PlanStep {
    PlanStep {
        left: left.id,
        right: right.id,
        equation: format!("{},{}->{}", term_str(&left.labels), term_str(&right.labels), term_str(res)),
        shape: res.iter().map(|&l| spec.dim(l)).collect(),
        elems: spec.size_of(res),
        flops: step_flops(spec, &left.labels, &right.labels),
    }
}

/// Peak summed size of live intermediates across steps. During a step the
/// consumed operands and its result are all live; the final output is excluded.
pub fn peak_of(num_inputs: usize, steps: &[PlanStep]) -> u64 {
    let mut live: Vec<(usize, u64)> = Vec::new();
    let mut peak = 0u64;
    for (s, step) in steps.iter().enumerate() {
        let last = s + 1 == steps.len();
        let held: u64 = live.iter().map(|&(_, e)| e).sum();
        let during = held + if last { 0 } else { step.elems };
        peak = peak.max(during);
        live.retain(|&(id, _)| id != step.left && id != step.right);
        if !last {
            live.push((num_inputs + s, step.elems));
        }
    }
    peak
}

fn finish(spec: &EinsumSpec, strategy: Strategy, steps: Vec<PlanStep>) -> EinsumPlan {
    let peak = peak_of(spec.num_operands(), &steps);
    let total = steps.iter().fold(0u64, |a, s| a.saturating_add(s.flops));
    EinsumPlan {
        spec: spec.clone(),
        strategy,
        steps,
        peak_intermediate_elems: peak,
        total_flops: total,
        cache_key: None,
    }
}

fn require_pairwise(spec: &EinsumSpec) -> Result<()> {
    if spec.num_operands() < 2 {
        return Err(Error::Einsum("planning needs at least two operands".into()));
    }
    Ok(())
}

/// Candidate pairs and their keys at one greedy decision point.
pub(crate) fn greedy_candidates(spec: &EinsumSpec, live: &[(usize, Vec<u8>)]) -> Vec<((u64, u64), usize, usize)> {
    let last = live.len() == 2;
    let mut out = Vec::new();
    for i in 0..live.len() {
        for j in i + 1..live.len() {
            let others: Vec<&[u8]> = live
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i && k != j)
                .map(|(_, (_, l))| l.as_slice())
                .collect();
            let res = result_labels(spec, &live[i].1, &live[j].1, &others, last);
            out.push(((spec.size_of(&res), step_flops(spec, &live[i].1, &live[j].1)), i, j));
        }
    }
    out
}

/// Contract, step by step, the pair whose result has the fewest elements;
/// ties go to fewer step FLOPs, then to the lowest operand-id pair.
pub fn plan_greedy(spec: &EinsumSpec) -> Result<EinsumPlan> {
    require_pairwise(spec)?;
    let k = spec.num_operands();
    let mut live: Vec<Live> = spec
        .inputs()
        .iter()
        .enumerate()
        .map(|(id, l)| Live { id, labels: l.clone() })
        .collect();
    let mut steps = Vec::with_capacity(k - 1);
    while live.len() > 1 {
        let view: Vec<(usize, Vec<u8>)> = live.iter().map(|l| (l.id, l.labels.clone())).collect();
        let (_, i, j) = greedy_candidates(spec, &view)
            .into_iter()
            .min_by_key(|&(key, i, j)| (key, live[i].id.min(live[j].id), live[i].id.max(live[j].id)))
            .expect("at least one pair");
        let (a, b) = if live[i].id < live[j].id { (i, j) } else { (j, i) };
        let others: Vec<&[u8]> = live
            .iter()
            .enumerate()
            .filter(|&(x, _)| x != i && x != j)
            .map(|(_, l)| l.labels.as_slice())
            .collect();
        let res = result_labels(spec, &live[a].labels, &live[b].labels, &others, live.len() == 2);
        let step = make_step(spec, &live[a], &live[b], &res);
        let new = Live { id: k + steps.len(), labels: res };
        steps.push(step);
        let (hi, lo) = (i.max(j), i.min(j));
        live.remove(hi);
        live.remove(lo);
        live.push(new);
    }
    Ok(finish(spec, Strategy::Greedy, steps))
}

/// Exact minimum-total-FLOP pairwise order by dynamic programming over subsets.
pub fn plan_flop_optimal(spec: &EinsumSpec) -> Result<EinsumPlan> {
    require_pairwise(spec)?;
    let k = spec.num_operands();
    if k > MAX_OPTIMAL_OPERANDS {
        return Err(Error::Einsum(format!(
            "FLOP-optimal search supports at most {MAX_OPTIMAL_OPERANDS} operands, got {k}"
        )));
    }
    let full = (1usize << k) - 1;
    // labels of the intermediate formed from each subset
    let labels_of = |set: usize| -> Vec<u8> {
        if set == full {
            return spec.output().to_vec();
        }
        let mut out = Vec::new();
        for x in 0..k {
            if set & (1 << x) == 0 {
                continue;
            }
            for &l in &spec.inputs()[x] {
                if out.contains(&l) {
                    continue;
                }
                let outside = (0..k).any(|y| set & (1 << y) == 0 && spec.inputs()[y].contains(&l));
                if outside || spec.output().contains(&l) {
                    out.push(l);
                }
            }
        }
        out
    };
    let set_labels: Vec<Vec<u8>> = (0..=full).map(labels_of).collect();
    let mut cost = vec![u64::MAX; full + 1];
    let mut split = vec![0usize; full + 1];
    for x in 0..k {
        cost[1 << x] = 0;
    }
    for set in 1..=full {
        if set.count_ones() < 2 {
            continue;
        }
        let low = set & set.wrapping_neg();
        // enumerate sub-splits with the lowest member on the left
        let mut sub = (set - 1) & set;
        while sub > 0 {
            if sub & low != 0 {
                let other = set ^ sub;
                let (ca, cb) = (cost[sub], cost[other]);
                if ca != u64::MAX && cb != u64::MAX {
                    let c = ca
                        .saturating_add(cb)
                        .saturating_add(step_flops(spec, &set_labels[sub], &set_labels[other]));
                    if c < cost[set] {
                        cost[set] = c;
                        split[set] = sub;
                    }
                }
            }
            sub = (sub - 1) & set;
        }
    }
    let mut steps = Vec::with_capacity(k - 1);
    emit(spec, full, &split, &set_labels, &mut steps);
    Ok(finish(spec, Strategy::FlopOptimal, steps))
}

fn emit(spec: &EinsumSpec, set: usize, split: &[usize], labels: &[Vec<u8>], steps: &mut Vec<PlanStep>) -> Live {
    if set.count_ones() == 1 {
        let id = set.trailing_zeros() as usize;
        return Live { id, labels: labels[set].clone() };
    }
    let a = emit(spec, split[set], split, labels, steps);
    let b = emit(spec, set ^ split[set], split, labels, steps);
    let (a, b) = if a.id < b.id { (a, b) } else { (b, a) };
    let res = labels[set].clone();
    let step = make_step(spec, &a, &b, &res);
    let id = spec.num_operands() + steps.len();
    steps.push(step);
    Live { id, labels: res }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::parse;

    #[test]
    fn chain_prefers_small_intermediate() {
        let s = parse("ab,bc,cd->ad", &[vec![2, 100], vec![100, 2], vec![2, 100]]).unwrap();
        let g = plan_greedy(&s).unwrap();
        assert_eq!((g.steps[0].left, g.steps[0].right), (0, 1));
        assert_eq!(g.steps[0].elems, 4);
        assert_eq!(g.steps[1].equation, "cd,ac->ad");
        let o = plan_flop_optimal(&s).unwrap();
        assert_eq!(o.total_flops, g.total_flops);
        assert_eq!(o.steps, g.steps);
    }

    #[test]
    fn two_operands_are_forced() {
        let s = parse("bixy,ioxy->boxy", &[vec![2, 4, 8, 8], vec![4, 4, 8, 8]]).unwrap();
        let g = plan_greedy(&s).unwrap();
        let o = plan_flop_optimal(&s).unwrap();
        assert_eq!(g.steps, o.steps);
        assert_eq!(g.steps.len(), 1);
        assert_eq!(g.peak_intermediate_elems, 0);
        assert_eq!(g.total_flops, 2 * 4 * 4 * 8 * 8);
    }

    #[test]
    fn peak_accounting() {
        let step = |l, r, e| PlanStep { left: l, right: r, equation: String::new(), shape: vec![], elems: e, flops: 0 };
        // ((0,1)->3 of 10, (3,2)->4 final)
        assert_eq!(peak_of(3, &[step(0, 1, 10), step(3, 2, 7)]), 10);
        // (0,1)->4 of 5, (2,3)->5 of 6, (4,5)->final: 5 + 6 live together
        assert_eq!(peak_of(4, &[step(0, 1, 5), step(2, 3, 6), step(4, 5, 1)]), 11);
    }

    #[test]
    fn mode_tokens() {
        for m in [LoweringMode::AllReal, LoweringMode::PairwiseReal, LoweringMode::Hybrid(3)] {
            assert_eq!(m.to_string().parse::<LoweringMode>().unwrap(), m);
        }
        assert_eq!("hybrid".parse::<LoweringMode>().unwrap(), LoweringMode::Hybrid(3));
        assert!("hybrid:0".parse::<LoweringMode>().is_err());
        assert!("complex".parse::<LoweringMode>().is_err());
        assert!(LoweringMode::Hybrid(3).step_is_real(4));
        assert!(!LoweringMode::Hybrid(3).step_is_real(2));
    }

    #[test]
    fn too_many_operands_for_exhaustive_search() {
        let eq = "ab,bc,cd,de,ef,fg,gh,hi,ij->aj";
        let shapes = vec![vec![2, 2]; 9];
        let s = parse(eq, &shapes).unwrap();
        assert!(plan_flop_optimal(&s).is_err());
        assert_eq!(plan_greedy(&s).unwrap().steps.len(), 8);
        assert!(plan_greedy(&parse("ab->a", &[vec![2, 2]]).unwrap()).is_err());
    }
}
