//! Producer and media-source value functions and candidate scoring.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::{Distribution, Point};
use crate::error::{Error, Result};
use crate::participation::{potential, Participation};
use crate::registry::Registry;
use crate::transform::ProducerTransform;

/// S(D) = E(T|D) min(M, N).
pub fn s_value(d: &Distribution, model: &dyn Participation, t: &dyn ProducerTransform) -> Result<f64> {
    let m = potential(model, d)?;
    Ok(d.expected_t(t)? * m.min(d.volume()))
}

/// V(D) = E(T|D) M(D).
pub fn v_value(d: &Distribution, model: &dyn Participation, t: &dyn ProducerTransform) -> Result<f64> {
    Ok(d.expected_t(t)? * potential(model, d)?)
}

/// Returns the block separating two nested distributions and whether `d_prime` is the larger.
fn nested_difference(d: &Distribution, d_prime: &Distribution) -> Result<(Distribution, bool)> {
    if d.is_subdistribution_of(d_prime) {
        Ok((d_prime.remove_subdistribution(d)?, true))
    } else if d_prime.is_subdistribution_of(d) {
        Ok((d.remove_subdistribution(d_prime)?, false))
    } else {
        Err(Error::NotNested)
    }
}

/// Closed-form change in V between nested distributions.
pub fn delta_v(
    d: &Distribution,
    d_prime: &Distribution,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<f64> {
    let (y, _) = nested_difference(d, d_prime)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let (n, np) = (d.volume(), d_prime.volume());
    let (m, mp) = (potential(model, d)?, potential(model, d_prime)?);
    let e = d.expected_t(t)?;
    let h = y.expected_t(t)?;
    Ok(e * n * (mp / np - m / n) + h * (np - n) * mp / np)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// N <= M on both sides.
    BelowDStar,
    /// N >= M on both sides.
    AtOrAboveDStar,
    Crossing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueDelta {
    pub delta_v: f64,
    pub delta_s: f64,
    pub regime: Regime,
}

pub fn delta_s(
    d: &Distribution,
    d_prime: &Distribution,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<ValueDelta> {
    let (y, grows) = nested_difference(d, d_prime)?;
    let dv = delta_v(d, d_prime, model, t)?;
    if y.is_empty() {
        return Ok(ValueDelta { delta_v: 0.0, delta_s: 0.0, regime: Regime::AtOrAboveDStar });
    }
    let (n, np) = (d.volume(), d_prime.volume());
    let (m, mp) = (potential(model, d)?, potential(model, d_prime)?);
    if n >= m && np >= mp {
        return Ok(ValueDelta { delta_v: dv, delta_s: dv, regime: Regime::AtOrAboveDStar });
    }
    if n <= m && np <= mp {
        let h = y.expected_t(t)?;
        let dn = if grows { y.volume() } else { -y.volume() };
        return Ok(ValueDelta { delta_v: dv, delta_s: h * dn, regime: Regime::BelowDStar });
    }
    let ds = s_value(d_prime, model, t)? - s_value(d, model, t)?;
    Ok(ValueDelta { delta_v: dv, delta_s: ds, regime: Regime::Crossing })
}

/// V of D after adding a point of relative share `phi` at (c, T(p)).
pub fn xi(
    c: f64,
    p: f64,
    phi_r: f64,
    d: &Distribution,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<f64> {
    if !(0.0..1.0).contains(&phi_r) {
        return Err(Error::Precondition(format!("share must lie in [0, 1), got {phi_r}")));
    }
    let base = BaseStats::of(d, model, t)?;
    Ok(base.xi(c, t.apply(p)?, phi_r, model))
}

/// Xi at the unit-increment share 1/(N+1).
pub fn upsilon(c: f64, p: f64, d: &Distribution, model: &dyn Participation, t: &dyn ProducerTransform) -> Result<f64> {
    let base = BaseStats::of(d, model, t)?;
    Ok(base.xi(c, t.apply(p)?, 1.0 / (d.volume() + 1.0), model))
}

/// Summary of a base distribution used to score candidates in O(1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseStats {
    pub n: f64,
    pub q: f64,
    pub e: f64,
    pub m: f64,
}

impl BaseStats {
    pub fn of(d: &Distribution, model: &dyn Participation, t: &dyn ProducerTransform) -> Result<Self> {
        let q = d.q()?;
        Ok(BaseStats { n: d.volume(), q, e: d.expected_t(t)?, m: model.at_rate(q) })
    }

    pub fn v(&self) -> f64 {
        self.e * self.m
    }

    pub fn xi(&self, c: f64, tp: f64, phi: f64, model: &dyn Participation) -> f64 {
        (self.e + phi * (tp - self.e)) * model.at_rate(self.q + phi * (c - self.q))
    }

    /// Closed-form change in V from adding `w` units at (c, T(p)).
    pub fn delta_v(&self, c: f64, tp: f64, w: f64, model: &dyn Participation) -> f64 {
        let np = self.n + w;
        let mp = model.at_rate((self.q * self.n + c * w) / np);
        self.e * self.n * (mp / np - self.m / self.n) + tp * w * mp / np
    }
}

/// Scores a candidate increment against a common base; larger is better.
pub trait PreferenceMapping: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn score(&self, base: &BaseStats, c: f64, tp: f64, weight: f64, model: &dyn Participation) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DeltaVMapping;

impl PreferenceMapping for DeltaVMapping {
    fn name(&self) -> &'static str {
        "delta_v"
    }
    fn score(&self, base: &BaseStats, c: f64, tp: f64, weight: f64, model: &dyn Participation) -> f64 {
        base.delta_v(c, tp, weight, model)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct XiMapping;

impl PreferenceMapping for XiMapping {
    fn name(&self) -> &'static str {
        "xi"
    }
    fn score(&self, base: &BaseStats, c: f64, tp: f64, weight: f64, model: &dyn Participation) -> f64 {
        base.xi(c, tp, weight / (base.n + weight), model)
    }
}

/// Ignores the candidate weight and scores it as one unit.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpsilonMapping;

impl PreferenceMapping for UpsilonMapping {
    fn name(&self) -> &'static str {
        "upsilon"
    }
    fn score(&self, base: &BaseStats, c: f64, tp: f64, _weight: f64, model: &dyn Participation) -> f64 {
        base.xi(c, tp, 1.0 / (base.n + 1.0), model)
    }
}

pub fn mapping_registry() -> Registry<dyn PreferenceMapping> {
    let mut r: Registry<dyn PreferenceMapping> = Registry::new("preference mapping");
    r.register("delta_v", Arc::new(DeltaVMapping));
    r.register("xi", Arc::new(XiMapping));
    r.register("upsilon", Arc::new(UpsilonMapping));
    r
}

/// A scored candidate, ordered so that the preferred one compares greatest.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<'a> {
    pub score: f64,
    pub c: f64,
    pub tp: f64,
    pub id: &'a str,
}

/// Scores closer than this (relative) count as tied.
pub const SCORE_TIE: f64 = 1e-12;

impl Scored<'_> {
    /// Higher score, then higher c, then higher T(p), then smaller id.
    pub fn preference(&self, other: &Scored<'_>) -> Ordering {
        let scale = 1.0_f64.max(self.score.abs()).max(other.score.abs());
        if (self.score - other.score).abs() > SCORE_TIE * scale {
            return self.score.total_cmp(&other.score);
        }
        self.c
            .total_cmp(&other.c)
            .then(self.tp.total_cmp(&other.tp))
            .then_with(|| other.id.cmp(self.id))
    }
}

/// Index of the preferred candidate.
pub fn best_of(scored: &[Scored<'_>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scored.iter().enumerate() {
        match best {
            Some(b) if scored[b].preference(s) != Ordering::Less => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Value of a lone point as a starting distribution.
pub fn singleton_value(point: &Point, model: &dyn Participation, t: &dyn ProducerTransform) -> Result<f64> {
    Ok(t.apply(point.p)? * model.at_rate(point.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::PointIncrement;
    use crate::participation::Power;
    use crate::transform::Identity;

    fn lin() -> Power {
        Power::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn s_and_v_examples() {
        // E(T)=1, M=3, N=7
        let d = Distribution::from_points([(Point::new("a", 3.0, 1.0), 7.0)]).unwrap();
        assert_eq!(s_value(&d, &lin(), &Identity).unwrap(), 3.0);
        // E(T)=2, M=10, N=5
        let d = Distribution::from_points([(Point::new("a", 10.0, 2.0), 5.0)]).unwrap();
        assert_eq!(s_value(&d, &lin(), &Identity).unwrap(), 10.0);
        let d0 = Distribution::from_points([(Point::new("a", 10.0, 0.0), 5.0)]).unwrap();
        assert_eq!(s_value(&d0, &lin(), &Identity).unwrap(), 0.0);

        let d = Distribution::from_points([(Point::new("a", 4.5, 1.0), 2.0)]).unwrap();
        assert_eq!(v_value(&d, &lin(), &Identity).unwrap(), 4.5);
        let d = Distribution::from_points([(Point::new("a", 2.0, 3.0), 1.0)]).unwrap();
        assert_eq!(v_value(&d, &lin(), &Identity).unwrap(), 6.0);
        let d = Distribution::from_points([(Point::new("a", -2.0, 3.0), 1.0)]).unwrap();
        assert_eq!(v_value(&d, &lin(), &Identity).unwrap(), 0.0);
    }

    #[test]
    fn delta_v_normalized_example() {
        // Base: E=1, M=N=1. Increment T=0.5, weight 1, lands at M'=1.5, N'=2.
        let d = Distribution::from_points([(Point::new("a", 1.0, 1.0), 1.0)]).unwrap();
        let dp = d.apply_increment(&PointIncrement::new(Point::new("b", 2.0, 0.5), 1.0)).unwrap();
        let closed = delta_v(&d, &dp, &lin(), &Identity).unwrap();
        let direct = v_value(&dp, &lin(), &Identity).unwrap() - v_value(&d, &lin(), &Identity).unwrap();
        assert!((closed - 0.125).abs() < 1e-15);
        assert!((closed - direct).abs() < 1e-15);
        assert_eq!(delta_v(&d, &d, &lin(), &Identity).unwrap(), 0.0);
        // reductive direction is the negation
        let back = delta_v(&dp, &d, &lin(), &Identity).unwrap();
        assert!((back + closed).abs() < 1e-15);
    }

    #[test]
    fn delta_v_rejects_unrelated() {
        let a = Distribution::from_points([(Point::new("a", 1.0, 1.0), 1.0)]).unwrap();
        let b = Distribution::from_points([(Point::new("b", 1.0, 1.0), 1.0)]).unwrap();
        assert_eq!(delta_v(&a, &b, &lin(), &Identity), Err(Error::NotNested));
    }

    #[test]
    fn delta_s_below_regime() {
        // M much larger than N on both sides.
        let d = Distribution::from_points([(Point::new("a", 100.0, 1.0), 1.0)]).unwrap();
        let dp = d.apply_increment(&PointIncrement::new(Point::new("b", 100.0, 2.0), 3.0)).unwrap();
        let vd = delta_s(&d, &dp, &lin(), &Identity).unwrap();
        assert_eq!(vd.regime, Regime::BelowDStar);
        assert_eq!(vd.delta_s, 6.0);
        let dn = d.apply_increment(&PointIncrement::new(Point::new("b", 100.0, -1.0), 2.0)).unwrap();
        assert_eq!(delta_s(&d, &dn, &lin(), &Identity).unwrap().delta_s, -2.0);
    }

    #[test]
    fn delta_s_past_crossing_is_tp_times_weight() {
        // Normalized D*: N=M=1, E=1. Candidate T=0.3, weight 0.5, steep enough that M' >= N'.
        let d = Distribution::from_points([(Point::new("a", 1.0, 1.0), 1.0)]).unwrap();
        let dp = d.apply_increment(&PointIncrement::new(Point::new("b", 5.0, 0.3), 0.5)).unwrap();
        let vd = delta_s(&d, &dp, &lin(), &Identity).unwrap();
        assert_eq!(vd.regime, Regime::BelowDStar);
        assert!((vd.delta_s - 0.15).abs() < 1e-15);
    }

    #[test]
    fn delta_s_above_regime_equals_delta_v() {
        let d = Distribution::from_points([(Point::new("a", 1.0, 1.0), 4.0)]).unwrap();
        let dp = d.apply_increment(&PointIncrement::new(Point::new("b", 0.5, 2.0), 1.0)).unwrap();
        let vd = delta_s(&d, &dp, &lin(), &Identity).unwrap();
        assert_eq!(vd.regime, Regime::AtOrAboveDStar);
        assert_eq!(vd.delta_s, vd.delta_v);
    }

    #[test]
    fn xi_neutral_cases() {
        let m = Power::new(1.5, 0.5).unwrap();
        let d = Distribution::from_points([(Point::new("a", 2.0, 1.0), 1.0), (Point::new("b", 4.0, 3.0), 1.0)]).unwrap();
        let v = v_value(&d, &m, &Identity).unwrap();
        assert_eq!(xi(9.0, 9.0, 0.0, &d, &m, &Identity).unwrap(), v);
        let (q, e) = (d.q().unwrap(), d.expected_t(&Identity).unwrap());
        for phi in [0.1, 0.5, 0.9] {
            assert!((xi(q, e, phi, &d, &m, &Identity).unwrap() - v).abs() < 1e-12);
        }
        assert!(xi(1.0, 1.0, 1.0, &d, &m, &Identity).is_err());
    }

    #[test]
    fn upsilon_limits() {
        let m = Power::new(1.0, 0.5).unwrap();
        let d = Distribution::from_points([(Point::new("a", 2.0, 1.0), 1e9)]).unwrap();
        let v = v_value(&d, &m, &Identity).unwrap();
        let u = upsilon(50.0, 7.0, &d, &m, &Identity).unwrap();
        assert!(((u - v) / v).abs() < 1e-6);
        let d1 = Distribution::from_points([(Point::new("a", 2.0, 3.0), 1.0)]).unwrap();
        let v1 = v_value(&d1, &m, &Identity).unwrap();
        assert!((upsilon(2.0, 3.0, &d1, &m, &Identity).unwrap() - v1).abs() < 1e-15);
    }

    #[test]
    fn tie_break_contract() {
        let a = Scored { score: 1.0, c: 2.0, tp: 1.0, id: "b" };
        let b = Scored { score: 1.0, c: 2.0, tp: 1.0, id: "a" };
        assert_eq!(best_of(&[a.clone(), b.clone()]), Some(1));
        let hi_c = Scored { score: 1.0, c: 3.0, tp: 0.0, id: "z" };
        assert_eq!(best_of(&[a.clone(), hi_c]), Some(1));
        let hi_t = Scored { score: 1.0, c: 2.0, tp: 5.0, id: "z" };
        assert_eq!(best_of(&[a, hi_t]), Some(1));
        assert_eq!(best_of(&[]), None);
    }

    #[test]
    fn mappings_registered() {
        let r = mapping_registry();
        assert_eq!(r.names(), vec!["delta_v", "upsilon", "xi"]);
    }
}
