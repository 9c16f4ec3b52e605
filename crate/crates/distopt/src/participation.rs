//! Potential participation M(q), actual participation W and slopes.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distribution::Distribution;
use crate::error::{Error, Result};
use crate::registry::Registry;

pub trait Participation: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    /// M at utility rate `q`; zero for non-positive rates.
    fn at_rate(&self, q: f64) -> f64;
    /// (zeta, alpha) when M is a pure power law in q.
    fn power_form(&self) -> Option<(f64, f64)> {
        None
    }
    fn cap(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Power {
    pub zeta: f64,
    pub alpha: f64,
}

impl Power {
    pub fn new(zeta: f64, alpha: f64) -> Result<Self> {
        if !(zeta.is_finite() && zeta > 0.0) {
            return Err(Error::InvalidModel(format!("zeta must be positive, got {zeta}")));
        }
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidModel(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Power { zeta, alpha })
    }
}

impl Participation for Power {
    fn name(&self) -> &'static str {
        "power"
    }
    fn at_rate(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        if self.alpha == 1.0 {
            self.zeta * q
        } else {
            self.zeta * q.powf(self.alpha)
        }
    }
    fn power_form(&self) -> Option<(f64, f64)> {
        Some((self.zeta, self.alpha))
    }
}

/// Power law with a hard ceiling.
#[derive(Debug, Clone, Copy)]
pub struct Saturating {
    pub power: Power,
    pub cap: f64,
}

impl Saturating {
    pub fn new(zeta: f64, alpha: f64, cap: f64) -> Result<Self> {
        if !(cap.is_finite() && cap > 0.0) {
            return Err(Error::InvalidModel(format!("cap must be positive, got {cap}")));
        }
        Ok(Saturating { power: Power::new(zeta, alpha)?, cap })
    }
}

impl Participation for Saturating {
    fn name(&self) -> &'static str {
        "saturating"
    }
    fn at_rate(&self, q: f64) -> f64 {
        self.power.at_rate(q).min(self.cap)
    }
    fn cap(&self) -> Option<f64> {
        Some(self.cap)
    }
}

/// Piecewise-linear between knots, flat outside them.
#[derive(Debug, Clone)]
pub struct TableModel {
    knots: Vec<(f64, f64)>,
}

impl TableModel {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidModel("table needs at least one knot".into()));
        }
        if knots.iter().any(|(q, m)| !q.is_finite() || !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidModel("knots must be finite with M >= 0".into()));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1) {
            return Err(Error::NonMonotoneTable);
        }
        Ok(TableModel { knots })
    }
}

impl Participation for TableModel {
    fn name(&self) -> &'static str {
        "table"
    }
    fn at_rate(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if q <= first.0 {
            return first.1;
        }
        if q >= last.0 {
            return last.1;
        }
        let i = self.knots.partition_point(|(k, _)| *k <= q);
        let (q0, m0) = self.knots[i - 1];
        let (q1, m1) = self.knots[i];
        m0 + (m1 - m0) * (q - q0) / (q1 - q0)
    }
    fn cap(&self) -> Option<f64> {
        Some(self.knots[self.knots.len() - 1].1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<[f64; 2]>>,
}

impl ModelSpec {
    pub fn power(zeta: f64, alpha: f64) -> Self {
        ModelSpec { kind: "power".into(), zeta: Some(zeta), alpha: Some(alpha), cap: None, knots: None }
    }

    pub fn saturating(zeta: f64, alpha: f64, cap: f64) -> Self {
        ModelSpec { cap: Some(cap), kind: "saturating".into(), ..ModelSpec::power(zeta, alpha) }
    }

    pub fn table(knots: Vec<[f64; 2]>) -> Self {
        ModelSpec { kind: "table".into(), zeta: None, alpha: None, cap: None, knots: Some(knots) }
    }

    pub fn build(&self) -> Result<Arc<dyn Participation>> {
        model_registry().build(self)
    }
}

pub type ModelBuilder = dyn Fn(&ModelSpec) -> Result<Arc<dyn Participation>> + Send + Sync;

impl Registry<ModelBuilder> {
    pub fn build(&self, spec: &ModelSpec) -> Result<Arc<dyn Participation>> {
        let f = self.lookup(&spec.kind)?;
        f(spec)
    }
}

fn need(v: Option<f64>, what: &str) -> Result<f64> {
    v.ok_or_else(|| Error::InvalidModel(format!("missing {what}")))
}

pub fn model_registry() -> Registry<ModelBuilder> {
    let mut r: Registry<ModelBuilder> = Registry::new("participation model");
    r.register(
        "power",
        Arc::new(|s: &ModelSpec| {
            Ok(Arc::new(Power::new(need(s.zeta, "zeta")?, need(s.alpha, "alpha")?)?) as Arc<dyn Participation>)
        }),
    );
    r.register(
        "saturating",
        Arc::new(|s: &ModelSpec| {
            let m = Saturating::new(need(s.zeta, "zeta")?, need(s.alpha, "alpha")?, need(s.cap, "cap")?)?;
            Ok(Arc::new(m) as Arc<dyn Participation>)
        }),
    );
    r.register(
        "table",
        Arc::new(|s: &ModelSpec| {
            let knots = s.knots.as_ref().ok_or_else(|| Error::InvalidModel("missing knots".into()))?;
            let m = TableModel::new(knots.iter().map(|k| (k[0], k[1])).collect())?;
            Ok(Arc::new(m) as Arc<dyn Participation>)
        }),
    );
    r
}

/// M(Q(D)).
pub fn potential(model: &dyn Participation, d: &Distribution) -> Result<f64> {
    Ok(model.at_rate(d.q()?))
}

/// W(D) = min(M(D), N(D)).
pub fn actual(model: &dyn Participation, d: &Distribution) -> Result<f64> {
    Ok(potential(model, d)?.min(d.volume()))
}

/// Slope of M against N between two distributions.
pub fn kappa(model: &dyn Participation, d_from: &Distribution, d_to: &Distribution) -> Result<f64> {
    let dn = d_to.volume() - d_from.volume();
    if dn == 0.0 {
        return Err(Error::ZeroVolumeChange);
    }
    Ok((potential(model, d_to)? - potential(model, d_from)?) / dn)
}

/// Slope from raw (N, M) pairs.
pub fn slope(n_from: f64, m_from: f64, n_to: f64, m_to: f64) -> Result<f64> {
    let dn = n_to - n_from;
    if dn == 0.0 {
        return Err(Error::ZeroVolumeChange);
    }
    Ok((m_to - m_from) / dn)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaPair {
    pub kappa_r2: f64,
    pub kappa_ar2: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::Point;

    fn single(c: f64) -> Distribution {
        Distribution::from_points([(Point::new("x", c, 0.0), 1.0)]).unwrap()
    }

    #[test]
    fn potential_examples() {
        let lin = Power::new(1.0, 1.0).unwrap();
        assert_eq!(potential(&lin, &single(4.5)).unwrap(), 4.5);
        let root = Power::new(2.0, 0.5).unwrap();
        assert_eq!(potential(&root, &single(4.0)).unwrap(), 2.0 * 4.0_f64.sqrt());
        assert_eq!(potential(&root, &single(0.0)).unwrap(), 0.0);
        assert_eq!(potential(&root, &single(-3.0)).unwrap(), 0.0);
        assert_eq!(potential(&lin, &Distribution::empty()), Err(Error::EmptyDistribution));
    }

    #[test]
    fn actual_takes_the_smaller() {
        let lin = Power::new(1.0, 1.0).unwrap();
        let many = Distribution::from_points([(Point::new("x", 10.0, 0.0), 5.0)]).unwrap();
        assert_eq!(actual(&lin, &many).unwrap(), 5.0);
        let few = Distribution::from_points([(Point::new("x", 3.0, 0.0), 7.0)]).unwrap();
        assert_eq!(actual(&lin, &few).unwrap(), 3.0);
        let eq = Distribution::from_points([(Point::new("x", 4.0, 0.0), 4.0)]).unwrap();
        assert_eq!(actual(&lin, &eq).unwrap(), 4.0);
    }

    #[test]
    fn slope_examples() {
        assert_eq!(slope(4.0, 4.0, 5.0, 3.5).unwrap(), -0.5);
        assert_eq!(slope(1.0, 1.0, 2.0, 1.5).unwrap(), 0.5);
        assert_eq!(slope(1.0, 2.0, 3.0, 2.0).unwrap(), 0.0);
        assert_eq!(slope(1.0, 2.0, 1.0, 3.0), Err(Error::ZeroVolumeChange));
    }

    #[test]
    fn kappa_from_distributions() {
        let lin = Power::new(1.0, 1.0).unwrap();
        let d = Distribution::from_points((2..=5).map(|c| (Point::new(format!("p{c}"), c as f64, 1.0), 1.0))).unwrap();
        let d2 = d.apply_increment(&crate::distribution::PointIncrement::new(Point::new("p1", 1.0, 1.0), 1.0)).unwrap();
        assert_eq!(kappa(&lin, &d, &d2).unwrap(), -0.5);
        assert_eq!(kappa(&lin, &d, &d), Err(Error::ZeroVolumeChange));
    }

    #[test]
    fn saturating_caps() {
        let s = Saturating::new(1.0, 1.0, 3.0).unwrap();
        assert_eq!(s.at_rate(2.0), 2.0);
        assert_eq!(s.at_rate(10.0), 3.0);
    }

    #[test]
    fn table_interpolates_and_validates() {
        let t = TableModel::new(vec![(1.0, 1.0), (3.0, 5.0)]).unwrap();
        assert_eq!(t.at_rate(2.0), 3.0);
        assert_eq!(t.at_rate(0.5), 1.0);
        assert_eq!(t.at_rate(9.0), 5.0);
        assert_eq!(t.at_rate(-1.0), 0.0);
        assert_eq!(TableModel::new(vec![(1.0, 2.0), (2.0, 1.0)]).unwrap_err(), Error::NonMonotoneTable);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::power(1.0, 1.5).build().is_err());
        assert!(ModelSpec::power(0.0, 0.5).build().is_err());
        assert_eq!(ModelSpec::saturating(1.0, 0.5, 2.0).build().unwrap().name(), "saturating");
        let unknown = ModelSpec { kind: "logistic".into(), ..ModelSpec::power(1.0, 0.5) };
        assert!(matches!(unknown.build(), Err(Error::UnknownStrategy { .. })));
    }
}
