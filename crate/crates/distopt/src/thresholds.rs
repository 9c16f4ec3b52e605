//! Slope thresholds for extending a distribution past its crossing point.
//!
//! Every quantity here is expressed in units where N(D*) = 1.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::participation::{potential, Participation};
use crate::registry::Registry;
use crate::transform::ProducerTransform;
use crate::valuation::{s_value, v_value};

/// Classifications this close to a threshold are flagged indeterminate.
pub const NEAR_THRESHOLD: f64 = 1e-9;
pub const DEFAULT_IOTA: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumerMode {
    /// Stops at M without consuming the surplus.
    #[default]
    Adaptive,
    /// Consumes all N and only then reacts.
    Reactive,
}

impl ConsumerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConsumerMode::Adaptive => "adaptive",
            ConsumerMode::Reactive => "reactive",
        }
    }

    pub fn response(self) -> Arc<dyn ConsumerResponse> {
        consumer_registry().get(self.as_str()).expect("builtin consumer mode")
    }
}

impl std::str::FromStr for ConsumerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(ConsumerMode::Adaptive),
            "reactive" => Ok(ConsumerMode::Reactive),
            other => Err(Error::UnknownStrategy { kind: "consumer mode", name: other.to_string() }),
        }
    }
}

/// How a consumer response turns into the producer's lower slope threshold.
pub trait ConsumerResponse: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn lower_threshold(&self, tp2_ratio: f64, n_r2: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AdaptiveResponse;

impl ConsumerResponse for AdaptiveResponse {
    fn name(&self) -> &'static str {
        "adaptive"
    }
    fn lower_threshold(&self, tp2_ratio: f64, n_r2: f64) -> Result<f64> {
        x_l_kappa_adaptive(tp2_ratio, n_r2)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReactiveResponse;

impl ConsumerResponse for ReactiveResponse {
    fn name(&self) -> &'static str {
        "reactive"
    }
    fn lower_threshold(&self, tp2_ratio: f64, n_r2: f64) -> Result<f64> {
        Ok(x_l_kappa_reactive(tp2_ratio, n_r2))
    }
}

pub fn consumer_registry() -> Registry<dyn ConsumerResponse> {
    let mut r: Registry<dyn ConsumerResponse> = Registry::new("consumer mode");
    r.register("adaptive", Arc::new(AdaptiveResponse));
    r.register("reactive", Arc::new(ReactiveResponse));
    r
}

/// A candidate extension r2 of D*, with r1 the increment that completed D*.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionContext {
    /// False when D* is the seed, so no order condition binds.
    pub has_prior: bool,
    pub n_r1: f64,
    pub n_r2: f64,
    /// T(p1) / E(T|D_a).
    pub tp1_ratio: f64,
    /// T(p2) / E(T|D*).
    pub tp2_ratio: f64,
    /// T(p2) / E(T|D_a).
    pub tp2a_ratio: f64,
    /// c1 / Q(D_a).
    pub c1a_ratio: f64,
    /// c2 / Q(D_a).
    pub c2a_ratio: f64,
    /// c2 / Q(D*).
    pub c2_ratio: f64,
    pub kappa_r2: f64,
    pub kappa_ar2: f64,
    /// M(D*) / N*.
    pub m_star: f64,
    /// M(D* + r2) / N*.
    pub m_r2: f64,
    /// M(D_a + r2) / N*.
    pub m_ar2: f64,
    pub iota: f64,
    pub consumer_mode: ConsumerMode,
    /// Exponent when participation is a pure power law.
    pub alpha: Option<f64>,
    pub n_star: f64,
    pub q_star: f64,
    pub e_star: f64,
    /// Direct V(D*+r2) - V(D*), raw units.
    pub delta_v: f64,
    /// Direct S(D*+r2) - S(D*), raw units.
    pub delta_s: f64,
}

impl Default for ExtensionContext {
    fn default() -> Self {
        ExtensionContext {
            has_prior: false,
            n_r1: 0.0,
            n_r2: 0.0,
            tp1_ratio: 1.0,
            tp2_ratio: 0.0,
            tp2a_ratio: 0.0,
            c1a_ratio: 1.0,
            c2a_ratio: 1.0,
            c2_ratio: 1.0,
            kappa_r2: 0.0,
            kappa_ar2: 0.0,
            m_star: 1.0,
            m_r2: 1.0,
            m_ar2: 1.0,
            iota: DEFAULT_IOTA,
            consumer_mode: ConsumerMode::Adaptive,
            alpha: None,
            n_star: 1.0,
            q_star: 1.0,
            e_star: 1.0,
            delta_v: 0.0,
            delta_s: 0.0,
        }
    }
}

fn ratio(num: f64, den: f64, what: &'static str) -> Result<f64> {
    if den == 0.0 || !den.is_finite() {
        return Err(Error::DegenerateDenominator(what));
    }
    Ok(num / den)
}

impl ExtensionContext {
    /// Builds the context from raw distributions. `prior` is (D_a, r1) with D* = D_a + r1.
    #[allow(clippy::too_many_arguments)]
    pub fn from_distributions(
        d_star: &Distribution,
        prior: Option<(&Distribution, &Distribution)>,
        r2: &Distribution,
        model: &dyn Participation,
        t: &dyn ProducerTransform,
        consumer_mode: ConsumerMode,
        iota: f64,
    ) -> Result<Self> {
        if !(iota.is_finite() && iota >= 0.0) {
            return Err(Error::Precondition("iota must be >= 0".into()));
        }
        let n_star = d_star.volume();
        let q_star = d_star.q()?;
        let e_star = d_star.expected_t(t)?;
        let m_star_raw = potential(model, d_star)?;
        let d_prime = d_star.combine(r2);
        let n2_raw = r2.volume();
        let c2 = r2.q()?;
        let t2 = r2.expected_t(t)?;
        let m_prime = potential(model, &d_prime)?;
        let kappa_r2 = ratio(m_prime - m_star_raw, n2_raw, "kappa")?;
        let tp2_ratio = ratio(t2, e_star, "T(p2)/E(T|D*)")?;
        let c2_ratio = ratio(c2, q_star, "c2/Q(D*)")?;
        let delta_v = v_value(&d_prime, model, t)? - v_value(d_star, model, t)?;
        let delta_s = s_value(&d_prime, model, t)? - s_value(d_star, model, t)?;
        let mut ctx = ExtensionContext {
            has_prior: false,
            n_r1: 0.0,
            n_r2: n2_raw / n_star,
            tp1_ratio: 1.0,
            tp2_ratio,
            tp2a_ratio: tp2_ratio,
            c1a_ratio: 1.0,
            c2a_ratio: c2_ratio,
            c2_ratio,
            kappa_r2,
            kappa_ar2: kappa_r2,
            m_star: m_star_raw / n_star,
            m_r2: m_prime / n_star,
            m_ar2: m_prime / n_star,
            iota,
            consumer_mode,
            alpha: model.power_form().map(|(_, a)| a),
            n_star,
            q_star,
            e_star,
            delta_v,
            delta_s,
        };
        if let Some((d_a, r1)) = prior {
            if !d_a.is_empty() {
                let q_a = d_a.q()?;
                let e_a = d_a.expected_t(t)?;
                let d_ar2 = d_a.combine(r2);
                let m_ar2 = potential(model, &d_ar2)?;
                ctx.has_prior = true;
                ctx.n_r1 = r1.volume() / n_star;
                ctx.tp1_ratio = ratio(r1.expected_t(t)?, e_a, "T(p1)/E(T|D_a)")?;
                ctx.tp2a_ratio = ratio(t2, e_a, "T(p2)/E(T|D_a)")?;
                ctx.c1a_ratio = ratio(r1.q()?, q_a, "c1/Q(D_a)")?;
                ctx.c2a_ratio = ratio(c2, q_a, "c2/Q(D_a)")?;
                ctx.m_ar2 = m_ar2 / n_star;
                ctx.kappa_ar2 = ratio(m_ar2 - potential(model, d_a)?, n2_raw, "kappa_ar2")?;
            }
        }
        Ok(ctx)
    }

    /// Order-condition viability with participation at D* taken as N*.
    pub fn is_viable(&self) -> bool {
        if !self.has_prior {
            return true;
        }
        let (n1, n2) = (self.n_r1, self.n_r2);
        let lhs = 1.0 - n1 + self.tp1_ratio * n1;
        let rhs = (1.0 - n1 + self.tp2a_ratio * n2) * self.m_ar2 / (1.0 - n1 + n2);
        lhs >= rhs
    }

    /// Change in consumer utility, Q(D')M(D') - Q(D*)N*, raw units.
    pub fn delta_u(&self) -> f64 {
        let q_prime = (self.q_star + self.c2_ratio * self.q_star * self.n_r2) / (1.0 + self.n_r2);
        self.n_star * (q_prime * self.m_r2 - self.q_star)
    }
}

pub fn x_l_kappa_adaptive(tp2_ratio: f64, n_r2: f64) -> Result<f64> {
    ratio(1.0 - tp2_ratio, 1.0 + tp2_ratio * n_r2, "adaptive lower threshold")
}

pub fn x_l_kappa_reactive(tp2_ratio: f64, n_r2: f64) -> f64 {
    1.0 - tp2_ratio * (1.0 + n_r2)
}

/// Lower slope threshold for the producer to gain, per the consumer mode.
pub fn x_l_kappa(ctx: &ExtensionContext) -> Result<f64> {
    ctx.consumer_mode.response().lower_threshold(ctx.tp2_ratio, ctx.n_r2)
}

/// (standard, alternative) upper viability thresholds.
pub fn x_u_kappa(ctx: &ExtensionContext) -> Result<(f64, f64)> {
    let (n1, n2, t2) = (ctx.n_r1, ctx.n_r2, ctx.tp2_ratio);
    let den = 1.0 - n1 + t2 * n2;
    let standard = ratio(1.0 - t2, den, "upper threshold")?;
    if n2 <= 0.0 {
        return Err(Error::Precondition("alternative upper threshold needs N_r2 > 0".into()));
    }
    let alt = ratio((1.0 - n1 + n2) * (ctx.tp1_ratio - 1.0) * (n1 / n2) + (1.0 - t2), den, "upper threshold")?;
    Ok((standard, alt))
}

/// Consumer break-even slope for a reactive consumer.
pub fn x_c_kappa(ctx: &ExtensionContext) -> f64 {
    let g = ctx.iota * (1.0 + ctx.n_r2);
    (1.0 - ctx.c2_ratio * (1.0 + ctx.n_r2) + g) / (1.0 + g)
}

/// Cutoff on T(p1)/E(T|D_a) below which the alternative upper threshold sits under the lower one.
pub fn tau_tp1(ctx: &ExtensionContext) -> Result<f64> {
    let (n1, n2, t2) = (ctx.n_r1, ctx.n_r2, ctx.tp2_ratio);
    ratio((1.0 - n1) + (2.0 - n1 + n2) * t2 * n2, (1.0 - n1 + n2) * (1.0 + t2 * n2), "tau")
}

/// (lower bound on T(p2)/E(T|D*) for producer gain, upper bound on T(p2)/E(T|D_a) for viability).
pub fn f_bounds(ctx: &ExtensionContext) -> Result<(f64, f64)> {
    let (n1, n2) = (ctx.n_r1, ctx.n_r2);
    if n2 <= 0.0 {
        return Err(Error::Precondition("bounds need N_r2 > 0".into()));
    }
    let inv_m = ratio(1.0, ctx.m_r2, "M_r2")?;
    let f_low = (inv_m - 1.0) / n2 + inv_m;
    let level = ratio((1.0 - n1 + n2) * (1.0 - n1 + ctx.tp1_ratio * n1), ctx.m_ar2, "M_ar2")?;
    Ok((f_low, (level - (1.0 - n1)) / n2))
}

/// Closed-form M_ar2 / M_r2 under a power law.
pub fn m_ratio(ctx: &ExtensionContext) -> Result<f64> {
    let alpha = ctx.alpha.ok_or(Error::NonPowerModel)?;
    let (n1, n2) = (ctx.n_r1, ctx.n_r2);
    let base = ((1.0 + n2) / (1.0 - n1 + n2)) * (1.0 - n1 + n2 * ctx.c2a_ratio)
        / ((1.0 - n1 + ctx.c1a_ratio * n1) + n2 * ctx.c2a_ratio);
    Ok(base.powf(alpha))
}

/// Reduction in viable slope values from a given m.
pub fn rvv_from_m(m: f64, ctx: &ExtensionContext) -> Result<f64> {
    let (n1, n2, t2) = (ctx.n_r1, ctx.n_r2, ctx.tp2_ratio);
    ratio(((m - 1.0) / m) * (1.0 + t2 * n2) * (1.0 - n1 + n2), n2 * n1 * (1.0 - t2), "rvv")
}

pub fn m_ratio_and_rvv(ctx: &ExtensionContext) -> Result<(f64, f64)> {
    let m = m_ratio(ctx)?;
    Ok((m, rvv_from_m(m, ctx)?))
}

/// Left side of the condition that keeps the D* slope below one; it must stay under m.
pub fn slope_gap_lhs(ctx: &ExtensionContext) -> f64 {
    let (n1, n2, t2) = (ctx.n_r1, ctx.n_r2, ctx.tp2_ratio);
    (1.0 - n1 + n2) / ((1.0 + n2) * (1.0 - n1 + t2 * n2))
}

/// Upper bound on M_ar2 with r1 exactly average.
pub fn x_u_level_average(n1: f64, tp2: f64, n2: f64) -> f64 {
    (1.0 - n1 + n2) / (1.0 - n1 + tp2 * n2)
}

/// Upper bound on M_ar2 with r1 below average in producer value.
pub fn x_u_level_below_average(n1: f64, tp1: f64, tp2: f64, n2: f64) -> f64 {
    (1.0 - n1 + tp1 * n1) * (1.0 - n1 + n2) / (1.0 - n1 + tp2 * n2)
}

/// Lower bound on M_r2 for the producer to gain.
pub fn x_l_level(tp2: f64, n2: f64) -> f64 {
    (1.0 + n2) / (1.0 + tp2 * n2)
}

/// Standard upper minus adaptive lower slope threshold.
pub fn band_width(n1: f64, tp2: f64, n2: f64) -> f64 {
    (1.0 - tp2) / (1.0 - n1 + tp2 * n2) - (1.0 - tp2) / (1.0 + tp2 * n2)
}

/// Left side of the sufficient condition for producer gain to imply non-viability; compare with N_r1.
pub fn sole_producer_condition_lhs(c2a: f64, c1a: f64, n2: f64) -> f64 {
    (1.0 + c2a * n2) * (1.0 - n2) / (1.0 - n2 * (1.0 - c1a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub x_l_kappa: f64,
    pub x_u_kappa: f64,
    pub x_u_kappa_alt: f64,
    pub x_c_kappa: f64,
    pub tau: f64,
    pub kappa_r2: f64,
    pub kappa_ar2: f64,
    pub f_low: f64,
    pub f_up: f64,
    pub m_ratio: f64,
    /// None when N_r1 = 0 or T(p2) = E(T|D*).
    pub rvv: Option<f64>,
    pub viable: bool,
    pub delta_u: f64,
    pub delta_v: f64,
    pub delta_s: f64,
    pub n_r1: f64,
    pub n_r2: f64,
    pub tp1_ratio: f64,
    pub tp2_ratio: f64,
    pub c2_ratio: f64,
    pub n_star: f64,
    pub consumer_mode: ConsumerMode,
}

pub fn report(ctx: &ExtensionContext) -> Result<ThresholdReport> {
    let (x_u, x_u_alt) = x_u_kappa(ctx)?;
    let (f_low, f_up) = f_bounds(ctx)?;
    let m = match m_ratio(ctx) {
        Ok(m) => m,
        Err(Error::NonPowerModel) => ratio(ctx.m_ar2, ctx.m_r2, "M_r2")?,
        Err(e) => return Err(e),
    };
    Ok(ThresholdReport {
        x_l_kappa: x_l_kappa(ctx)?,
        x_u_kappa: x_u,
        x_u_kappa_alt: x_u_alt,
        x_c_kappa: x_c_kappa(ctx),
        tau: tau_tp1(ctx)?,
        kappa_r2: ctx.kappa_r2,
        kappa_ar2: ctx.kappa_ar2,
        f_low,
        f_up,
        m_ratio: m,
        rvv: rvv_from_m(m, ctx).ok().filter(|v| v.is_finite()),
        viable: ctx.is_viable(),
        delta_u: ctx.delta_u(),
        delta_v: ctx.delta_v,
        delta_s: ctx.delta_s,
        n_r1: ctx.n_r1,
        n_r2: ctx.n_r2,
        tp1_ratio: ctx.tp1_ratio,
        tp2_ratio: ctx.tp2_ratio,
        c2_ratio: ctx.c2_ratio,
        n_star: ctx.n_star,
        consumer_mode: ctx.consumer_mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictKind {
    #[serde(rename = "stay")]
    StayAtDStar,
    #[serde(rename = "both_prefer")]
    BothPreferExtension,
    #[serde(rename = "consumer_prefers")]
    ConsumerPrefersExtension,
    #[serde(rename = "producer_prefers")]
    ProducerPrefersExtension,
    #[serde(rename = "neither_prefers")]
    NeitherPrefersExtension,
    #[serde(rename = "continue")]
    ContinueToSecondCrossing,
    #[serde(rename = "underserved")]
    UnderServed,
    #[serde(rename = "saturated")]
    SaturatedConsumer,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::StayAtDStar => "stay",
            VerdictKind::BothPreferExtension => "both_prefer",
            VerdictKind::ConsumerPrefersExtension => "consumer_prefers",
            VerdictKind::ProducerPrefersExtension => "producer_prefers",
            VerdictKind::NeitherPrefersExtension => "neither_prefers",
            VerdictKind::ContinueToSecondCrossing => "continue",
            VerdictKind::UnderServed => "underserved",
            VerdictKind::SaturatedConsumer => "saturated",
        }
    }

    pub fn is_nash(self) -> bool {
        matches!(
            self,
            VerdictKind::StayAtDStar
                | VerdictKind::BothPreferExtension
                | VerdictKind::NeitherPrefersExtension
                | VerdictKind::ContinueToSecondCrossing
        )
    }

    pub fn needs_carveout(self) -> bool {
        matches!(self, VerdictKind::ConsumerPrefersExtension | VerdictKind::ProducerPrefersExtension)
    }

    pub fn is_degenerate(self) -> bool {
        matches!(self, VerdictKind::UnderServed | VerdictKind::SaturatedConsumer)
    }
}

impl std::str::FromStr for VerdictKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use VerdictKind::*;
        [
            StayAtDStar,
            BothPreferExtension,
            ConsumerPrefersExtension,
            ProducerPrefersExtension,
            NeitherPrefersExtension,
            ContinueToSecondCrossing,
            UnderServed,
            SaturatedConsumer,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::UnknownStrategy { kind: "verdict", name: s.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumVerdict {
    pub kind: VerdictKind,
    pub is_nash: bool,
    pub is_pareto: bool,
    /// Slope within the near-threshold band of a deciding threshold.
    pub indeterminate: bool,
    pub carveout_recommended: bool,
    pub witness: Option<ThresholdReport>,
}

impl EquilibriumVerdict {
    pub fn bare(kind: VerdictKind) -> Self {
        EquilibriumVerdict {
            kind,
            is_nash: kind.is_nash(),
            is_pareto: kind.is_nash() && !kind.is_degenerate(),
            indeterminate: false,
            carveout_recommended: kind.needs_carveout(),
            witness: None,
        }
    }
}

/// Classifies the extension described by `ctx`.
pub fn classify(ctx: &ExtensionContext) -> Result<EquilibriumVerdict> {
    let witness = report(ctx)?;
    let k = ctx.kappa_r2;
    let mut indeterminate = false;
    let kind = if k <= 0.0 || ctx.m_r2 < ctx.m_star {
        VerdictKind::StayAtDStar
    } else if k >= 1.0 {
        if witness.viable && ctx.delta_v > 0.0 {
            VerdictKind::ContinueToSecondCrossing
        } else {
            VerdictKind::StayAtDStar
        }
    } else {
        let (xl, xc) = (witness.x_l_kappa, witness.x_c_kappa);
        indeterminate = (k - xl).abs() < NEAR_THRESHOLD || (k - xc).abs() < NEAR_THRESHOLD;
        match (k > xl, k > xc) {
            (true, true) => VerdictKind::BothPreferExtension,
            (false, true) => VerdictKind::ConsumerPrefersExtension,
            (true, false) => VerdictKind::ProducerPrefersExtension,
            (false, false) => VerdictKind::NeitherPrefersExtension,
        }
    };
    let mut v = EquilibriumVerdict::bare(kind);
    v.indeterminate = indeterminate;
    v.witness = Some(witness);
    Ok(v)
}
