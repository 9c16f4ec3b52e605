//! On-disk instance and report formats.

use distopt::optimizer::{CarveoutResult, OptimizationResult, OptimizerConfig, RunStats};
use distopt::oracle::Draft;
use distopt::participation::potential;
use distopt::sequence::{CandidatePolicy, IncrementPolicy, SeedPolicy};
use distopt::thresholds::{ConsumerMode, EquilibriumVerdict, ThresholdReport, VerdictKind};
use distopt::valuation::mapping_registry;
use distopt::{Distribution, ModelSpec, Participation, Point, ProducerTransform, TransformSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub id: String,
    pub c: f64,
    pub p: f64,
    pub n: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookahead_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossing_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consumer_mode: Option<ConsumerMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iota: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_policy: Option<SeedPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increment_policy: Option<IncrementPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_policy: Option<CandidatePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<String>,
}

fn identity() -> TransformSpec {
    TransformSpec::identity()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub points: Vec<PointRecord>,
    pub participation: ModelSpec,
    #[serde(default = "identity")]
    pub transform: TransformSpec,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    /// Default point for `analyze` and `carveout`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
}

/// A validated instance ready to run.
pub struct Loaded {
    pub d_all: Distribution,
    pub model: std::sync::Arc<dyn Participation>,
    pub transform: std::sync::Arc<dyn ProducerTransform>,
    pub config: OptimizerConfig,
    pub file: InstanceFile,
}

fn finite(v: f64, what: &str) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Schema(format!("{what} must be finite")))
    }
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(CliError::Schema(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn from_draft(draft: &Draft, transform: TransformSpec, candidate: Option<String>) -> Self {
        InstanceFile {
            schema_version: SCHEMA_VERSION,
            points: draft
                .points
                .iter()
                .map(|(p, w)| PointRecord { id: p.id.clone(), c: p.c, p: p.p, n: *w })
                .collect(),
            participation: draft.model.clone(),
            transform,
            optimizer: OptimizerSection {
                iota: Some(draft.iota),
                seed_policy: draft.seed.clone().map(SeedPolicy::Explicit),
                ..OptimizerSection::default()
            },
            candidate,
        }
    }

    pub fn config(&self) -> Result<OptimizerConfig, CliError> {
        let o = &self.optimizer;
        let mut cfg = OptimizerConfig::default();
        if let Some(v) = o.ratio_threshold {
            cfg.ratio_threshold = v;
        }
        if let Some(v) = o.lookahead_steps {
            cfg.lookahead_steps = v;
        }
        cfg.max_steps = o.max_steps.or(cfg.max_steps);
        if let Some(v) = o.crossing_tolerance {
            cfg.crossing_tolerance = v;
        }
        if let Some(v) = o.consumer_mode {
            cfg.consumer_mode = v;
        }
        if let Some(v) = o.iota {
            cfg.iota = v;
        }
        if let Some(v) = &o.seed_policy {
            cfg.sequence.seed_policy = v.clone();
        }
        if let Some(v) = o.increment_policy {
            cfg.sequence.increment_policy = v;
        }
        if let Some(v) = o.candidate_policy {
            cfg.sequence.candidate_policy = v;
        }
        if let Some(name) = &o.mapping {
            cfg.sequence.mapping = mapping_registry().lookup(name).map_err(|e| CliError::Schema(e.to_string()))?;
        }
        cfg.validate().map_err(|e| CliError::Schema(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(self) -> Result<Loaded, CliError> {
        if self.points.is_empty() {
            return Err(CliError::Schema("instance has no points".into()));
        }
        for r in &self.points {
            finite(r.c, "c")?;
            finite(r.p, "p")?;
            finite(r.n, "n")?;
        }
        let d_all = Distribution::from_points(self.points.iter().map(|r| (Point::new(r.id.clone(), r.c, r.p), r.n)))
            .map_err(|e| CliError::Schema(e.to_string()))?;
        let model = self.participation.build().map_err(|e| CliError::Schema(e.to_string()))?;
        let transform = self.transform.build().map_err(|e| CliError::Schema(e.to_string()))?;
        for r in &self.points {
            transform.apply(r.p).map_err(|e| CliError::Schema(e.to_string()))?;
        }
        let config = self.config()?;
        if let SeedPolicy::Explicit(ids) = &config.sequence.seed_policy {
            if let Some(bad) = ids.iter().find(|id| !d_all.contains(id)) {
                return Err(CliError::Schema(format!("seed id {bad} is not a point")));
            }
        }
        Ok(Loaded { d_all, model, transform, config, file: self })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightRecord {
    pub id: String,
    pub n: f64,
}

fn weights(d: &Distribution) -> Vec<WeightRecord> {
    d.entries().map(|e| WeightRecord { id: e.point.id.clone(), n: e.weight }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSummary {
    pub points: Vec<WeightRecord>,
    pub n: f64,
    pub q: f64,
    pub m: f64,
    pub e_t: f64,
}

impl DistributionSummary {
    pub fn of(d: &Distribution, model: &dyn Participation, t: &dyn ProducerTransform) -> Result<Self, CliError> {
        Ok(DistributionSummary { points: weights(d), n: d.volume(), q: d.q()?, m: potential(model, d)?, e_t: d.expected_t(t)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRow {
    pub j: usize,
    pub added: String,
    pub added_n: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub carved: Vec<String>,
    pub n: f64,
    pub q: f64,
    pub m: f64,
    pub delta_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRecord {
    pub kind: VerdictKind,
    pub is_nash: bool,
    pub is_pareto: bool,
    pub indeterminate: bool,
    pub carveout_recommended: bool,
}

impl From<&EquilibriumVerdict> for VerdictRecord {
    fn from(v: &EquilibriumVerdict) -> Self {
        VerdictRecord {
            kind: v.kind,
            is_nash: v.is_nash,
            is_pareto: v.is_pareto,
            indeterminate: v.indeterminate,
            carveout_recommended: v.carveout_recommended,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeRecord {
    pub block: Vec<WeightRecord>,
    pub kappa: f64,
    pub lookahead: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarveoutRecord {
    pub block: Vec<WeightRecord>,
    pub y: Vec<WeightRecord>,
    pub d_plus: DistributionSummary,
    pub n_y: f64,
    pub n_r2: f64,
    pub consumer_gain: f64,
    pub producer_slack: f64,
    pub iterations: usize,
}

impl CarveoutRecord {
    pub fn of(
        c: &CarveoutResult,
        block: &Distribution,
        model: &dyn Participation,
        t: &dyn ProducerTransform,
    ) -> Result<Self, CliError> {
        Ok(CarveoutRecord {
            block: weights(block),
            y: weights(&c.y),
            d_plus: DistributionSummary::of(&c.d_plus, model, t)?,
            n_y: c.n_y,
            n_r2: c.n_r2,
            consumer_gain: c.consumer_gain,
            producer_slack: c.producer_slack,
            iterations: c.iterations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondCrossingRecord {
    pub d2_star: DistributionSummary,
    pub gap: f64,
    pub delta_v: f64,
    pub delta_s: f64,
    pub verdict: VerdictRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub at_step: usize,
    pub n_at: f64,
    pub block: Vec<WeightRecord>,
    pub kappa: f64,
    pub verdict: VerdictKind,
    pub lookahead: bool,
    pub carveout_adopted: bool,
}

/// Work counters; wall-clock time is left out so that reports stay reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub steps: usize,
    pub probes: usize,
    pub lookahead_increments: usize,
    pub carveouts_adopted: usize,
}

impl From<RunStats> for Timing {
    fn from(s: RunStats) -> Self {
        Timing {
            steps: s.steps,
            probes: s.probes,
            lookahead_increments: s.lookahead_increments,
            carveouts_adopted: s.carveouts_adopted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub d_star: DistributionSummary,
    pub crossing_gap: f64,
    pub trace: Vec<TraceRow>,
    pub verdict: VerdictRecord,
    pub thresholds: Option<ThresholdReport>,
    pub probe: Option<ProbeRecord>,
    pub carveout: Option<CarveoutRecord>,
    pub second_crossing: Option<SecondCrossingRecord>,
    pub events: Vec<EventRecord>,
    pub excluded: Vec<String>,
    pub budget_exhausted: bool,
    pub order_conflicts: usize,
    pub timing: Timing,
}

impl RunReport {
    pub fn build(r: &OptimizationResult, model: &dyn Participation, t: &dyn ProducerTransform) -> Result<Self, CliError> {
        let trace = r
            .trace
            .steps()
            .iter()
            .map(|s| TraceRow {
                j: s.step_index,
                added: s.added.point.id.clone(),
                added_n: s.added.weight,
                carved: s.carved.iter().map(|c| c.point.id.clone()).collect(),
                n: s.n_after,
                q: s.q_after,
                m: s.m_after,
                delta_v: s.delta_v_of_step,
            })
            .collect();
        let carveout = match (&r.carveout, &r.probe) {
            (Some(c), Some(p)) => Some(CarveoutRecord::of(c, &p.block_distribution()?, model, t)?),
            _ => None,
        };
        let second_crossing = match (&r.d2_star, &r.second_crossing) {
            (Some(d2), Some(sc)) => Some(SecondCrossingRecord {
                d2_star: DistributionSummary::of(d2, model, t)?,
                gap: sc.gap,
                delta_v: sc.delta_v,
                delta_s: sc.delta_s,
                verdict: (&sc.verdict).into(),
            }),
            _ => None,
        };
        Ok(RunReport {
            schema_version: SCHEMA_VERSION,
            d_star: DistributionSummary::of(&r.d_star, model, t)?,
            crossing_gap: r.crossing_gap,
            trace,
            verdict: (&r.verdict).into(),
            thresholds: r.verdict.witness.clone(),
            probe: r.probe.as_ref().map(|p| ProbeRecord {
                block: p.block.iter().map(|i| WeightRecord { id: i.point.id.clone(), n: i.weight }).collect(),
                kappa: p.kappa,
                lookahead: p.lookahead,
            }),
            carveout,
            second_crossing,
            events: r
                .events
                .iter()
                .map(|e| EventRecord {
                    at_step: e.at_step,
                    n_at: e.n_at,
                    block: e.block.iter().map(|i| WeightRecord { id: i.point.id.clone(), n: i.weight }).collect(),
                    kappa: e.kappa,
                    verdict: e.verdict,
                    lookahead: e.lookahead,
                    carveout_adopted: e.carveout_adopted,
                })
                .collect(),
            excluded: r.excluded.clone(),
            budget_exhausted: r.budget_exhausted,
            order_conflicts: r.order_conflicts,
            timing: r.stats.into(),
        })
    }
}

/// Output of `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub candidate: String,
    pub d_star: DistributionSummary,
    pub verdict: VerdictRecord,
    pub thresholds: Option<ThresholdReport>,
}

/// Output of `carveout`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarveoutReport {
    pub schema_version: u32,
    pub candidate: Option<String>,
    pub d_star: DistributionSummary,
    /// Slope of the block against D*; None without a block.
    pub kappa: Option<f64>,
    pub feasible: bool,
    pub carveout: Option<CarveoutRecord>,
    pub certified: Option<bool>,
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}
