use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use super::plan::{plan_greedy, CacheKey, EinsumPlan, LoweringMode};
use super::spec::EinsumSpec;
use crate::error::Result;
use crate::precision::PrecisionSystem;

/// Greedy plans keyed by (equation, shapes, precision, lowering mode).
#[derive(Debug, Default)]
pub struct PlanCache {
    plans: RwLock<HashMap<CacheKey, Arc<EinsumPlan>>>,
    hits: AtomicU64,
    misses: AtomicU64,
    plannings: AtomicU64,
}

impl PlanCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(spec: &EinsumSpec, sys: &PrecisionSystem, mode: LoweringMode) -> CacheKey {
        CacheKey {
            equation: spec.equation(),
            shapes: spec.shapes().to_vec(),
            precision: sys.to_string(),
            mode,
        }
    }

    pub fn get_or_plan(&self, spec: &EinsumSpec, sys: &PrecisionSystem, mode: LoweringMode) -> Result<Arc<EinsumPlan>> {
        let key = Self::key(spec, sys, mode);
        if let Some(plan) = self.plans.read().expect("plan cache poisoned").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(plan));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.plannings.fetch_add(1, Ordering::Relaxed);
        let mut plan = plan_greedy(spec)?;
        plan.cache_key = Some(key.clone());
        let mut map = self.plans.write().expect("plan cache poisoned");
        // a concurrent planner may have won; keep the first stored plan
        Ok(Arc::clone(map.entry(key).or_insert_with(|| Arc::new(plan))))
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Number of times the planner actually ran.
    pub fn plannings(&self) -> u64 {
        self.plannings.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.plans.read().expect("plan cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
