//! Greedy preferred-increment sequences and ordering predicates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::{Distribution, Point, PointIncrement, DROP_TOLERANCE};
use crate::error::{Error, Result};
use crate::participation::{kappa, potential, Participation};
use crate::transform::ProducerTransform;
use crate::valuation::{best_of, mapping_registry, singleton_value, v_value, BaseStats, PreferenceMapping, Scored};

/// Tolerance for "kappa still increasing".
pub const KAPPA_RISE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    HighestXi,
    Explicit(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePolicy {
    All,
    TopK(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementPolicy {
    FullPoint,
    UnitChunks(f64),
}

#[derive(Debug, Clone)]
pub struct SequenceConfig {
    pub seed_policy: SeedPolicy,
    pub candidate_policy: CandidatePolicy,
    pub increment_policy: IncrementPolicy,
    pub mapping: Arc<dyn PreferenceMapping>,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            seed_policy: SeedPolicy::HighestXi,
            candidate_policy: CandidatePolicy::All,
            increment_policy: IncrementPolicy::FullPoint,
            mapping: mapping_registry().get("delta_v").expect("builtin mapping"),
        }
    }
}

impl SequenceConfig {
    pub fn with_mapping(mut self, name: &str) -> Result<Self> {
        self.mapping = mapping_registry().lookup(name)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if let CandidatePolicy::TopK(k) = self.candidate_policy {
            if k == 0 {
                return Err(Error::Precondition("top_k needs k >= 1".into()));
            }
        }
        if let IncrementPolicy::UnitChunks(w) = self.increment_policy {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Precondition("chunk must be positive".into()));
            }
        }
        Ok(())
    }

    fn increment_weight(&self, remaining: f64) -> f64 {
        match self.increment_policy {
            IncrementPolicy::FullPoint => remaining,
            IncrementPolicy::UnitChunks(w) => w.min(remaining),
        }
    }
}

/// Points still available to add, with their remaining weight.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pool {
    items: Vec<(Point, f64)>,
}

impl Pool {
    /// Everything in `d_all` not yet in `d`.
    pub fn remaining(d_all: &Distribution, d: &Distribution) -> Self {
        let items = d_all
            .entries()
            .filter_map(|e| {
                let left = e.weight - d.weight_of(&e.point.id);
                (left > DROP_TOLERANCE).then(|| (e.point.clone(), left))
            })
            .collect();
        Pool { items }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[(Point, f64)] {
        &self.items
    }

    pub fn take(&mut self, inc: &PointIncrement) {
        if let Some(pos) = self.items.iter().position(|(p, _)| p.id == inc.point.id) {
            let left = self.items[pos].1 - inc.weight;
            if left <= DROP_TOLERANCE {
                self.items.remove(pos);
            } else {
                self.items[pos].1 = left;
            }
        }
    }

    /// Drops a point entirely.
    pub fn exclude(&mut self, id: &str) {
        self.items.retain(|(p, _)| p.id != id);
    }
}

fn transformed(pool: &Pool, t: &dyn ProducerTransform) -> Result<Vec<f64>> {
    pool.items.iter().map(|(p, _)| t.apply(p.p)).collect()
}

/// Preferred next increment from an explicit pool.
pub fn best_increment_from_pool(
    d: &Distribution,
    pool: &Pool,
    cfg: &SequenceConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<PointIncrement> {
    if pool.is_empty() {
        return Err(Error::ExhaustedPool);
    }
    let tps = transformed(pool, t)?;
    let mut idx: Vec<usize> = (0..pool.items.len()).collect();
    let scores: Vec<f64> = if d.is_empty() {
        pool.items
            .iter()
            .map(|(p, _)| singleton_value(p, model, t))
            .collect::<Result<_>>()?
    } else {
        let base = BaseStats::of(d, model, t)?;
        if let CandidatePolicy::TopK(k) = cfg.candidate_policy {
            if k < idx.len() {
                let qs = base.q.abs().max(1e-12);
                let es = base.e.abs().max(1e-12);
                let pre = |i: usize| (pool.items[i].0.c - base.q) / qs + (tps[i] - base.e) / es;
                idx.sort_by(|&a, &b| pre(b).total_cmp(&pre(a)).then_with(|| pool.items[a].0.id.cmp(&pool.items[b].0.id)));
                idx.truncate(k);
                idx.sort_unstable();
            }
        }
        pool.items
            .iter()
            .zip(&tps)
            .map(|((p, w), tp)| cfg.mapping.score(&base, p.c, *tp, cfg.increment_weight(*w), model))
            .collect()
    };
    let scored: Vec<Scored<'_>> = idx
        .iter()
        .map(|&i| Scored { score: scores[i], c: pool.items[i].0.c, tp: tps[i], id: pool.items[i].0.id.as_str() })
        .collect();
    let pick = idx[best_of(&scored).expect("non-empty")];
    let (point, w) = &pool.items[pick];
    Ok(PointIncrement::new(point.clone(), cfg.increment_weight(*w)))
}

/// Preferred next increment among points of `d_all` not yet in `d`.
pub fn best_increment(
    d: &Distribution,
    d_all: &Distribution,
    cfg: &SequenceConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<PointIncrement> {
    best_increment_from_pool(d, &Pool::remaining(d_all, d), cfg, model, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextInSequence {
    pub d_prime: Distribution,
    pub added: Vec<PointIncrement>,
    /// Slope against the entry distribution after each added increment.
    pub kappas: Vec<f64>,
    pub exhausted: bool,
}

impl NextInSequence {
    pub fn kappa(&self) -> Option<f64> {
        self.kappas.last().copied()
    }

    /// The added block as its own distribution.
    pub fn block(&self) -> Result<Distribution> {
        let mut b = Distribution::empty();
        for inc in &self.added {
            b = b.apply_increment(inc)?;
        }
        Ok(b)
    }
}

/// Keeps adding while the slope against `d` rises inside (0, 1).
pub fn best_next_from_pool(
    d: &Distribution,
    pool: &mut Pool,
    cfg: &SequenceConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<NextInSequence> {
    let mut out = NextInSequence { d_prime: d.clone(), added: Vec::new(), kappas: Vec::new(), exhausted: false };
    loop {
        let inc = match best_increment_from_pool(&out.d_prime, pool, cfg, model, t) {
            Ok(inc) => inc,
            Err(Error::ExhaustedPool) => {
                out.exhausted = true;
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        pool.take(&inc);
        out.d_prime = out.d_prime.apply_increment(&inc)?;
        out.added.push(inc);
        let k = kappa(model, d, &out.d_prime)?;
        let prev = out.kappas.last().copied();
        out.kappas.push(k);
        if k >= 1.0 || k <= 0.0 {
            return Ok(out);
        }
        match prev {
            Some(p) if k <= p + KAPPA_RISE_TOL => return Ok(out),
            _ => {}
        }
    }
}

pub fn best_next_in_sequence(
    d: &Distribution,
    d_all: &Distribution,
    cfg: &SequenceConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<NextInSequence> {
    let mut pool = Pool::remaining(d_all, d);
    best_next_from_pool(d, &mut pool, cfg, model, t)
}

/// Whether r1 is ranked before r2 when both are offered at `d_a`.
pub fn order_prefers(
    r1: (&Point, f64),
    r2: (&Point, f64),
    d_a: &Distribution,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<bool> {
    let v1 = v_value(&d_a.apply_increment(&PointIncrement::new(r1.0.clone(), r1.1))?, model, t)?;
    let v2 = v_value(&d_a.apply_increment(&PointIncrement::new(r2.0.clone(), r2.1))?, model, t)?;
    Ok(v1 > v2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceStep {
    pub step_index: usize,
    pub added: PointIncrement,
    /// Increments removed by a carveout in this step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub carved: Vec<PointIncrement>,
    pub n_after: f64,
    pub q_after: f64,
    pub m_after: f64,
    pub delta_v_of_step: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFlags {
    pub monotone_decreasing: bool,
    pub generally_decreasing: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SequenceTrace {
    steps: Vec<SequenceStep>,
    flags: TraceFlags,
}

impl SequenceTrace {
    pub fn from_steps(steps: Vec<SequenceStep>) -> Self {
        let tol = |q: f64| 1e-12 * q.abs().max(1.0);
        let monotone = steps.windows(2).all(|w| w[1].q_after <= w[0].q_after + tol(w[0].q_after));
        let general = steps
            .first()
            .is_none_or(|s0| steps.iter().all(|s| s.q_after <= s0.q_after + tol(s0.q_after)));
        SequenceTrace { steps, flags: TraceFlags { monotone_decreasing: monotone, generally_decreasing: general } }
    }

    pub fn steps(&self) -> &[SequenceStep] {
        &self.steps
    }

    pub fn flags(&self) -> TraceFlags {
        self.flags
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Replays the steps, returning the distribution after each one.
    pub fn distributions(&self) -> Result<Vec<Distribution>> {
        let mut d = Distribution::empty();
        let mut out = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            if !s.carved.is_empty() {
                let mut y = Distribution::empty();
                for c in &s.carved {
                    y = y.apply_increment(c)?;
                }
                d = d.remove_subdistribution(&y)?;
            }
            d = d.apply_increment(&s.added)?;
            out.push(d.clone());
        }
        Ok(out)
    }
}

/// Records one step of a trace.
pub fn make_step(
    index: usize,
    before: &Distribution,
    added: PointIncrement,
    carved: Vec<PointIncrement>,
    after: &Distribution,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<SequenceStep> {
    let dv = if before.is_empty() {
        v_value(after, model, t)?
    } else {
        v_value(after, model, t)? - v_value(before, model, t)?
    };
    Ok(SequenceStep {
        step_index: index,
        added,
        carved,
        n_after: after.volume(),
        q_after: after.q()?,
        m_after: potential(model, after)?,
        delta_v_of_step: dv,
    })
}

/// Seed distribution D0.
pub fn seed(
    d_all: &Distribution,
    cfg: &SequenceConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<Vec<PointIncrement>> {
    match &cfg.seed_policy {
        SeedPolicy::HighestXi => {
            Ok(vec![best_increment_from_pool(&Distribution::empty(), &Pool::remaining(d_all, &Distribution::empty()), cfg, model, t)?])
        }
        SeedPolicy::Explicit(ids) => {
            if ids.is_empty() {
                return Err(Error::Precondition("explicit seed needs at least one id".into()));
            }
            ids.iter()
                .map(|id| {
                    d_all
                        .entries()
                        .find(|e| &e.point.id == id)
                        .map(|e| PointIncrement::new(e.point.clone(), e.weight))
                        .ok_or_else(|| Error::UnknownPoint(id.clone()))
                })
                .collect()
        }
    }
}

/// The full greedy sequence from the seed until the pool runs out.
pub fn build_sequence(
    d_all: &Distribution,
    cfg: &SequenceConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<SequenceTrace> {
    let mut d = Distribution::empty();
    let mut steps = Vec::new();
    let mut pool = Pool::remaining(d_all, &d);
    for inc in seed(d_all, cfg, model, t)? {
        let next = d.apply_increment(&inc)?;
        pool.take(&inc);
        steps.push(make_step(steps.len(), &d, inc, Vec::new(), &next, model, t)?);
        d = next;
    }
    while let Ok(inc) = best_increment_from_pool(&d, &pool, cfg, model, t) {
        let next = d.apply_increment(&inc)?;
        pool.take(&inc);
        steps.push(make_step(steps.len(), &d, inc, Vec::new(), &next, model, t)?);
        d = next;
    }
    Ok(SequenceTrace::from_steps(steps))
}

/// The last increment that produced `at`, if the trace holds it.
pub fn last_increment_before(at: &Distribution, trace: &SequenceTrace) -> Result<Option<(Distribution, PointIncrement)>> {
    let ds = trace.distributions()?;
    for (i, d) in ds.iter().enumerate().rev() {
        if d.max_weight_diff(at) <= DROP_TOLERANCE {
            let inc = trace.steps[i].added.clone();
            let d_a = at.remove_subdistribution(&Distribution::singleton(inc.point.clone(), inc.weight)?)?;
            return Ok(if d_a.is_empty() { None } else { Some((d_a, inc)) });
        }
    }
    Ok(None)
}

/// Viability of adding `block` after `at`, judged against the last increment before `at`.
///
/// Participation at `at` is taken as N(at), the crossing value.
pub fn is_viable_block(
    block: &Distribution,
    at: &Distribution,
    trace: &SequenceTrace,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<bool> {
    let Some((d_a, _)) = last_increment_before(at, trace)? else {
        return Ok(true);
    };
    let lhs = at.expected_t(t)? * at.volume();
    let rhs = v_value(&d_a.combine(block), model, t)?;
    Ok(lhs >= rhs)
}

pub fn is_viable(
    candidate: &PointIncrement,
    at: &Distribution,
    trace: &SequenceTrace,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<bool> {
    let block = Distribution::singleton(candidate.point.clone(), candidate.weight)?;
    is_viable_block(&block, at, trace, model, t)
}
