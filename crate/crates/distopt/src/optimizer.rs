//! Growing D to its crossing point, carveouts, and the second crossing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::distribution::{Distribution, PointIncrement, DROP_TOLERANCE};
use crate::error::{Error, Result};
use crate::participation::{actual, kappa, potential, Participation};
use crate::sequence::{
    best_increment_from_pool, best_next_from_pool, last_increment_before, make_step, seed, IncrementPolicy, NextInSequence, Pool,
    SequenceConfig, SequenceStep, SequenceTrace,
};
use crate::thresholds::{classify, ConsumerMode, EquilibriumVerdict, ExtensionContext, VerdictKind, DEFAULT_IOTA};
use crate::transform::ProducerTransform;
use crate::valuation::{s_value, v_value};

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Keep growing while M/N is above this.
    pub ratio_threshold: f64,
    /// Extra increments probed past a falling slope, looking for a slope of one or more.
    pub lookahead_steps: usize,
    /// None means ten times the number of points.
    pub max_steps: Option<usize>,
    /// Relative |M - N| counted as balanced.
    pub crossing_tolerance: f64,
    pub consumer_mode: ConsumerMode,
    pub iota: f64,
    pub sequence: SequenceConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            ratio_threshold: 1.05,
            lookahead_steps: 5,
            max_steps: None,
            crossing_tolerance: 0.05,
            consumer_mode: ConsumerMode::Adaptive,
            iota: DEFAULT_IOTA,
            sequence: SequenceConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio_threshold.is_finite() && self.ratio_threshold > 0.0) {
            return Err(Error::Precondition("ratio_threshold must be positive".into()));
        }
        if !(self.crossing_tolerance.is_finite() && self.crossing_tolerance >= 0.0) {
            return Err(Error::Precondition("crossing_tolerance must be >= 0".into()));
        }
        if !(self.iota.is_finite() && self.iota >= 0.0) {
            return Err(Error::Precondition("iota must be >= 0".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Precondition("max_steps must be >= 1".into()));
        }
        self.sequence.validate()
    }

    fn step_budget(&self, d_all: &Distribution) -> usize {
        self.max_steps.unwrap_or(10 * d_all.len().max(1))
    }
}

/// |M - N| / max(M, N).
pub fn crossing_gap(m: f64, n: f64) -> f64 {
    let scale = m.abs().max(n.abs());
    if scale == 0.0 {
        0.0
    } else {
        (m - n).abs() / scale
    }
}

pub fn is_balanced(d: &Distribution, model: &dyn Participation, tol: f64) -> Result<bool> {
    Ok(crossing_gap(potential(model, d)?, d.volume()) <= tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarveoutResult {
    pub y: Distribution,
    /// D* - Y + r2.
    pub d_plus: Distribution,
    /// The remaining fields are in units where N(D*) = 1.
    pub n_y: f64,
    pub n_r2: f64,
    pub consumer_gain: f64,
    pub producer_slack: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarveoutCertificate {
    pub consumer_no_worse: bool,
    pub producer_no_worse: bool,
    pub smaller_than_block: bool,
    pub balanced: bool,
}

impl CarveoutCertificate {
    pub fn all(&self) -> bool {
        self.consumer_no_worse && self.producer_no_worse && self.smaller_than_block && self.balanced
    }
}

/// Rechecks a carveout from its distributions alone.
pub fn certify(
    c: &CarveoutResult,
    d_star: &Distribution,
    r2: &Distribution,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
    tol: f64,
) -> Result<CarveoutCertificate> {
    let n_star = d_star.volume();
    let n_y = c.y.volume() / n_star;
    let n_r2 = r2.volume() / n_star;
    let d_plus = d_star.remove_subdistribution(&c.y)?.combine(r2);
    Ok(CarveoutCertificate {
        consumer_no_worse: c.y.c_total() <= r2.c_total(),
        producer_no_worse: c.y.t_total(t)? <= r2.t_total(t)?,
        smaller_than_block: n_y < n_r2,
        balanced: d_plus.max_weight_diff(&c.d_plus) <= 1e-9 && is_balanced(&d_plus, model, tol)?,
    })
}

/// Removes low-value points from `d_star` until adding `r2` leaves M and N balanced.
pub fn generate_carveout(
    d_star: &Distribution,
    r2: &Distribution,
    cfg: &OptimizerConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<CarveoutResult> {
    let k = kappa(model, d_star, &d_star.combine(r2))?;
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::Precondition(format!("carveout needs a slope in (0, 1), got {k}")));
    }
    let n_star = d_star.volume();
    let n_r2 = r2.volume() / n_star;
    let c_r2 = r2.q()?;
    let t_r2 = r2.expected_t(t)?;
    let c_budget = c_r2 * n_r2;
    let t_budget = t_r2 * n_r2;

    let chunk = match cfg.sequence.increment_policy {
        IncrementPolicy::FullPoint => f64::INFINITY,
        IncrementPolicy::UnitChunks(w) => w,
    };
    let mut avail: Vec<(crate::distribution::Point, f64, f64)> = d_star
        .entries()
        .filter(|e| e.point.c < c_r2)
        .map(|e| Ok((e.point.clone(), t.apply(e.point.p)?, e.weight)))
        .collect::<Result<_>>()?;
    let mut y = Distribution::empty();
    let (mut s_c, mut s_t) = (0.0, 0.0);
    let bound = 1 + avail.iter().map(|(_, _, w)| (w / chunk).ceil().min(1e6) as usize).sum::<usize>();
    for iterations in 0..=bound {
        let d_plus = d_star.remove_subdistribution(&y)?.combine(r2);
        if is_balanced(&d_plus, model, cfg.crossing_tolerance)? {
            let n_y = y.volume() / n_star;
            return Ok(CarveoutResult {
                n_y,
                n_r2,
                consumer_gain: c_budget - y.c_total() / n_star,
                producer_slack: t_budget - y.t_total(t)? / n_star,
                y,
                d_plus,
                iterations,
            });
        }
        let pick = avail
            .iter()
            .enumerate()
            .filter(|(_, (p, tp, w))| {
                let n_x = w.min(chunk) / n_star;
                s_c + n_x * p.c <= c_budget && s_t + n_x * tp <= t_budget
            })
            .min_by(|(_, a), (_, b)| a.0.c.total_cmp(&b.0.c).then_with(|| a.0.id.cmp(&b.0.id)))
            .map(|(i, _)| i);
        let Some(i) = pick else {
            break;
        };
        let (point, tp, w) = avail[i].clone();
        let take = w.min(chunk);
        s_c += take / n_star * point.c;
        s_t += take / n_star * tp;
        y = y.apply_increment(&PointIncrement::new(point, take))?;
        if w - take <= DROP_TOLERANCE {
            avail.remove(i);
        } else {
            avail[i].2 = w - take;
        }
    }
    Err(Error::InfeasibleCarveout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEvent {
    /// Trace length when the probe was made.
    pub at_step: usize,
    pub n_at: f64,
    pub block: Vec<PointIncrement>,
    pub kappa: f64,
    pub verdict: VerdictKind,
    pub lookahead: bool,
    pub carveout_adopted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub block: Vec<PointIncrement>,
    pub kappa: f64,
    pub d_prime: Distribution,
    pub lookahead: bool,
}

impl Probe {
    pub fn block_distribution(&self) -> Result<Distribution> {
        let mut b = Distribution::empty();
        for inc in &self.block {
            b = b.apply_increment(inc)?;
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondCrossing {
    pub gap: f64,
    pub delta_v: f64,
    pub delta_s: f64,
    pub verdict: EquilibriumVerdict,
}

/// Work counters; deterministic, unlike wall-clock time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    pub probes: usize,
    pub lookahead_increments: usize,
    pub carveouts_adopted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub d_star: Distribution,
    pub n_star: f64,
    pub crossing_gap: f64,
    pub trace: SequenceTrace,
    pub verdict: EquilibriumVerdict,
    pub probe: Option<Probe>,
    pub carveout: Option<CarveoutResult>,
    pub d2_star: Option<Distribution>,
    pub second_crossing: Option<SecondCrossing>,
    pub events: Vec<ProbeEvent>,
    /// Points carved out during the run; they never re-enter the pool.
    pub excluded: Vec<String>,
    pub budget_exhausted: bool,
    /// Accepted post-crossing blocks that raised both E(T|D) and M above N.
    pub order_conflicts: usize,
    pub stats: RunStats,
}

#[allow(clippy::large_enum_variant)]
enum Exit {
    Crossed { verdict: EquilibriumVerdict, probe: Option<Probe>, carveout: Option<CarveoutResult> },
    UnderServed,
    Budget,
}

struct Runner<'a> {
    d_all: &'a Distribution,
    cfg: &'a OptimizerConfig,
    model: &'a dyn Participation,
    t: &'a dyn ProducerTransform,
    d: Distribution,
    pool: Pool,
    steps: Vec<SequenceStep>,
    /// First trace index eligible when picking the best crossing.
    floor: usize,
    events: Vec<ProbeEvent>,
    excluded: BTreeSet<String>,
    stats: RunStats,
    order_conflicts: usize,
    budget: usize,
}

impl<'a> Runner<'a> {
    fn new(
        d_all: &'a Distribution,
        cfg: &'a OptimizerConfig,
        model: &'a dyn Participation,
        t: &'a dyn ProducerTransform,
    ) -> Self {
        Runner {
            d_all,
            cfg,
            model,
            t,
            d: Distribution::empty(),
            pool: Pool::remaining(d_all, &Distribution::empty()),
            steps: Vec::new(),
            floor: 0,
            events: Vec::new(),
            excluded: BTreeSet::new(),
            stats: RunStats::default(),
            order_conflicts: 0,
            budget: cfg.step_budget(d_all),
        }
    }

    fn push(&mut self, inc: PointIncrement, carved: Vec<PointIncrement>) -> Result<()> {
        let mut base = self.d.clone();
        for c in &carved {
            base = base.remove_subdistribution(&Distribution::singleton(c.point.clone(), c.weight)?)?;
        }
        let next = base.apply_increment(&inc)?;
        self.pool.take(&inc);
        let step = make_step(self.steps.len(), &self.d, inc, carved, &next, self.model, self.t)?;
        self.steps.push(step);
        self.d = next;
        self.stats.steps += 1;
        Ok(())
    }

    fn adopt_block(&mut self, block: &[PointIncrement], carved: Vec<PointIncrement>) -> Result<()> {
        let mut carved = Some(carved);
        for inc in block {
            self.push(inc.clone(), carved.take().unwrap_or_default())?;
        }
        Ok(())
    }

    fn note_post_crossing(&mut self, block: &Distribution) -> Result<()> {
        let d_prime = self.d.combine(block);
        if block.expected_t(self.t)? > self.d.expected_t(self.t)? && potential(self.model, &d_prime)? > self.d.volume() {
            self.order_conflicts += 1;
        }
        Ok(())
    }

    fn context(&self, block: &Distribution) -> Result<ExtensionContext> {
        let prior = match self.steps.last() {
            Some(last) => {
                let r1 = Distribution::singleton(last.added.point.clone(), last.added.weight)?;
                let d_a = self.d.remove_subdistribution(&r1)?;
                (!d_a.is_empty()).then_some((d_a, r1))
            }
            None => None,
        };
        ExtensionContext::from_distributions(
            &self.d,
            prior.as_ref().map(|(a, r)| (a, r)),
            block,
            self.model,
            self.t,
            self.cfg.consumer_mode,
            self.cfg.iota,
        )
    }

    fn verdict_for(&self, block: &Distribution, k: f64) -> Result<EquilibriumVerdict> {
        match self.context(block) {
            Ok(ctx) => classify(&ctx),
            Err(Error::DegenerateDenominator(_)) => {
                let mut v = EquilibriumVerdict::bare(VerdictKind::StayAtDStar);
                v.indeterminate = k > 0.0;
                Ok(v)
            }
            Err(e) => Err(e),
        }
    }

    fn probe(&self) -> Result<(NextInSequence, Pool)> {
        let mut pool = self.pool.clone();
        let next = best_next_from_pool(&self.d, &mut pool, &self.cfg.sequence, self.model, self.t)?;
        Ok((next, pool))
    }

    fn record(&mut self, block: &[PointIncrement], k: f64, verdict: VerdictKind, lookahead: bool, carved: bool) {
        self.events.push(ProbeEvent {
            at_step: self.steps.len(),
            n_at: self.d.volume(),
            block: block.to_vec(),
            kappa: k,
            verdict,
            lookahead,
            carveout_adopted: carved,
        });
    }

    fn run(&mut self) -> Result<Exit> {
        loop {
            if self.stats.steps >= self.budget {
                return Ok(Exit::Budget);
            }
            let m = potential(self.model, &self.d)?;
            let n = self.d.volume();
            if m > self.cfg.ratio_threshold * n {
                match best_increment_from_pool(&self.d, &self.pool, &self.cfg.sequence, self.model, self.t) {
                    Ok(inc) => {
                        self.push(inc, Vec::new())?;
                        continue;
                    }
                    Err(Error::ExhaustedPool) => return Ok(Exit::UnderServed),
                    Err(e) => return Err(e),
                }
            }
            self.stats.probes += 1;
            let (next, _) = self.probe()?;
            let Some(k) = next.kappa() else {
                return self.finish();
            };
            if k <= 0.0 {
                if potential(self.model, &next.d_prime)? > next.d_prime.volume() {
                    // Still above the crossing; the dip is just growth.
                    self.adopt_block(&next.added, Vec::new())?;
                    continue;
                }
                if actual(self.model, &next.d_prime)? > actual(self.model, &self.d)? {
                    // The step across the crossing lands closer to balance.
                    self.adopt_block(&next.added, Vec::new())?;
                }
                return self.finish();
            }
            if k >= 1.0 {
                return self.finish();
            }
            let block = next.block()?;
            match generate_carveout(&self.d, &block, self.cfg, self.model, self.t) {
                Ok(c) => {
                    let verdict = self.verdict_for(&block, k)?.kind;
                    self.record(&next.added, k, verdict, false, true);
                    self.note_post_crossing(&block)?;
                    let carved: Vec<PointIncrement> =
                        c.y.entries().map(|e| PointIncrement::new(e.point.clone(), e.weight)).collect();
                    for e in c.y.entries() {
                        self.excluded.insert(e.point.id.clone());
                        self.pool.exclude(&e.point.id);
                    }
                    self.adopt_block(&next.added, carved)?;
                    self.floor = self.steps.len() - 1;
                    self.stats.carveouts_adopted += 1;
                }
                Err(Error::InfeasibleCarveout) => return self.finish(),
                Err(e) => return Err(e),
            }
        }
    }

    /// Settles on the best crossing since the last adoption, then probes from it.
    fn finish(&mut self) -> Result<Exit> {
        let best = (self.floor..self.steps.len())
            .map(|i| (i, self.steps[i].m_after.min(self.steps[i].n_after)))
            .fold(None, |acc: Option<(usize, f64)>, (i, w)| match acc {
                Some((_, bw)) if bw >= w => acc,
                _ => Some((i, w)),
            });
        if let Some((i, _)) = best {
            if i + 1 < self.steps.len() {
                self.steps.truncate(i + 1);
                self.d = SequenceTrace::from_steps(self.steps.clone())
                    .distributions()?
                    .pop()
                    .expect("non-empty trace");
                self.pool = Pool::remaining(self.d_all, &self.d);
                for id in &self.excluded {
                    self.pool.exclude(id);
                }
            }
        }
        let (next, mut rest) = self.probe()?;
        let Some(k) = next.kappa() else {
            return Ok(Exit::Crossed { verdict: EquilibriumVerdict::bare(VerdictKind::StayAtDStar), probe: None, carveout: None });
        };
        let block = next.block()?;
        let mut verdict = self.verdict_for(&block, k)?;
        let mut probe = Probe { block: next.added.clone(), kappa: k, d_prime: next.d_prime.clone(), lookahead: false };
        if k <= 0.0 {
            if let Some((la, lk, lv)) = self.lookahead(&next, &mut rest)? {
                probe = la;
                verdict = lv;
                self.record(&probe.block, lk, verdict.kind, true, false);
                return Ok(Exit::Crossed { verdict, probe: Some(probe), carveout: None });
            }
        }
        self.record(&next.added, k, verdict.kind, false, false);
        let carveout = if verdict.kind.needs_carveout() {
            match generate_carveout(&self.d, &block, self.cfg, self.model, self.t) {
                Ok(c) => Some(c),
                Err(Error::InfeasibleCarveout) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        Ok(Exit::Crossed { verdict, probe: Some(probe), carveout })
    }

    fn lookahead(&mut self, next: &NextInSequence, pool: &mut Pool) -> Result<Option<(Probe, f64, EquilibriumVerdict)>> {
        let mut d_prime = next.d_prime.clone();
        let mut added = next.added.clone();
        for _ in 0..self.cfg.lookahead_steps {
            let inc = match best_increment_from_pool(&d_prime, pool, &self.cfg.sequence, self.model, self.t) {
                Ok(inc) => inc,
                Err(Error::ExhaustedPool) => break,
                Err(e) => return Err(e),
            };
            self.stats.lookahead_increments += 1;
            pool.take(&inc);
            d_prime = d_prime.apply_increment(&inc)?;
            added.push(inc);
            let k = kappa(self.model, &self.d, &d_prime)?;
            if k >= 1.0 {
                let block = d_prime.remove_subdistribution(&self.d)?;
                let v = self.verdict_for(&block, k)?;
                if v.kind == VerdictKind::ContinueToSecondCrossing {
                    return Ok(Some((Probe { block: added, kappa: k, d_prime, lookahead: true }, k, v)));
                }
            }
        }
        Ok(None)
    }

    fn gap(&self) -> Result<f64> {
        Ok(crossing_gap(potential(self.model, &self.d)?, self.d.volume()))
    }
}

fn degenerate_start(d_all: &Distribution, model: &dyn Participation) -> bool {
    d_all.entries().all(|e| model.at_rate(e.point.c) <= 0.0)
}

fn saturated(d: &Distribution, model: &dyn Participation) -> Result<bool> {
    Ok(match model.cap() {
        Some(cap) => potential(model, d)? >= cap * (1.0 - 1e-12),
        None => false,
    })
}

/// Grows the preferred sequence to its crossing point and classifies the best extension.
pub fn determine_d_star(
    d_all: &Distribution,
    cfg: &OptimizerConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<OptimizationResult> {
    if d_all.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    cfg.validate()?;
    let mut run = Runner::new(d_all, cfg, model, t);
    for inc in seed(d_all, &cfg.sequence, model, t)? {
        run.push(inc, Vec::new())?;
    }
    let exit = if degenerate_start(d_all, model) {
        Exit::Crossed { verdict: EquilibriumVerdict::bare(VerdictKind::SaturatedConsumer), probe: None, carveout: None }
    } else {
        run.run()?
    };
    let mut budget_exhausted = false;
    let (mut verdict, probe, carveout) = match exit {
        Exit::Crossed { verdict, probe, carveout } => (verdict, probe, carveout),
        Exit::UnderServed => (EquilibriumVerdict::bare(VerdictKind::UnderServed), None, None),
        Exit::Budget => {
            budget_exhausted = true;
            (EquilibriumVerdict::bare(VerdictKind::StayAtDStar), None, None)
        }
    };
    if !verdict.kind.is_degenerate() && saturated(&run.d, model)? {
        let witness = verdict.witness.take();
        verdict = EquilibriumVerdict::bare(VerdictKind::SaturatedConsumer);
        verdict.witness = witness;
    }
    Ok(OptimizationResult {
        n_star: run.d.volume(),
        crossing_gap: run.gap()?,
        d_star: run.d.clone(),
        trace: SequenceTrace::from_steps(run.steps),
        verdict,
        probe,
        carveout,
        d2_star: None,
        second_crossing: None,
        events: run.events,
        excluded: run.excluded.into_iter().collect(),
        budget_exhausted,
        order_conflicts: run.order_conflicts,
        stats: run.stats,
    })
}

/// Adopts the stored slope-above-one extension and grows to the next crossing.
pub fn continue_to_d2_star(
    result: &OptimizationResult,
    d_all: &Distribution,
    cfg: &OptimizerConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<OptimizationResult> {
    if result.verdict.kind != VerdictKind::ContinueToSecondCrossing {
        return Err(Error::Precondition("second crossing needs a continue verdict".into()));
    }
    let probe = result.probe.as_ref().ok_or_else(|| Error::Precondition("continue verdict without a probe".into()))?;
    cfg.validate()?;
    let mut run = Runner::new(d_all, cfg, model, t);
    run.steps = result.trace.steps().to_vec();
    run.d = result.d_star.clone();
    run.excluded = result.excluded.iter().cloned().collect();
    run.pool = Pool::remaining(d_all, &run.d);
    for id in &run.excluded {
        run.pool.exclude(id);
    }
    run.events = result.events.clone();
    run.stats = result.stats;
    run.order_conflicts = result.order_conflicts;
    run.budget = result.stats.steps + cfg.step_budget(d_all);
    run.note_post_crossing(&probe.block_distribution()?)?;
    run.adopt_block(&probe.block, Vec::new())?;
    run.floor = run.steps.len() - 1;

    let mut out = result.clone();
    let exit = run.run()?;
    out.budget_exhausted = matches!(exit, Exit::Budget);
    if let Exit::Crossed { verdict, .. } = exit {
        let gap = run.gap()?;
        out.second_crossing = Some(SecondCrossing {
            gap,
            delta_v: v_value(&run.d, model, t)? - v_value(&result.d_star, model, t)?,
            delta_s: s_value(&run.d, model, t)? - s_value(&result.d_star, model, t)?,
            verdict,
        });
        out.d2_star = Some(run.d.clone());
    }
    out.trace = SequenceTrace::from_steps(run.steps);
    out.events = run.events;
    out.excluded = run.excluded.into_iter().collect();
    out.order_conflicts = run.order_conflicts;
    out.stats = run.stats;
    Ok(out)
}

/// Classifies extending the result's D* by the rest of one named point.
pub fn analyze_candidate(
    result: &OptimizationResult,
    d_all: &Distribution,
    candidate_id: &str,
    cfg: &OptimizerConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<EquilibriumVerdict> {
    let entry = d_all
        .entries()
        .find(|e| e.point.id == candidate_id)
        .ok_or_else(|| Error::UnknownPoint(candidate_id.to_string()))?;
    let left = entry.weight - result.d_star.weight_of(candidate_id);
    if left <= DROP_TOLERANCE || result.excluded.iter().any(|x| x == candidate_id) {
        return Err(Error::Precondition(format!("candidate {candidate_id} is not available past D*")));
    }
    let block = Distribution::singleton(entry.point.clone(), left)?;
    let prior = last_increment_before(&result.d_star, &result.trace)?
        .map(|(d_a, inc)| Ok::<_, Error>((d_a, Distribution::singleton(inc.point, inc.weight)?)))
        .transpose()?;
    let ctx = ExtensionContext::from_distributions(
        &result.d_star,
        prior.as_ref().map(|(a, r)| (a, r)),
        &block,
        model,
        t,
        cfg.consumer_mode,
        cfg.iota,
    )?;
    classify(&ctx)
}

/// determine_d_star, followed by the second crossing when the verdict calls for it.
pub fn optimize(
    d_all: &Distribution,
    cfg: &OptimizerConfig,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<OptimizationResult> {
    let r = determine_d_star(d_all, cfg, model, t)?;
    if r.verdict.kind == VerdictKind::ContinueToSecondCrossing {
        continue_to_d2_star(&r, d_all, cfg, model, t)
    } else {
        Ok(r)
    }
}
