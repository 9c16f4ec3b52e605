//! Frequency distributions over scored content points.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::ProducerTransform;

/// Weights at or below this after subtraction are dropped.
pub const DROP_TOLERANCE: f64 = 1e-9;

/// Neumaier compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: String,
    /// Consumer value per unit, already divided by time per unit.
    pub c: f64,
    /// Raw producer value per unit.
    pub p: f64,
}

impl Point {
    pub fn new(id: impl Into<String>, c: f64, p: f64) -> Self {
        Point { id: id.into(), c, p }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.c.is_finite() {
            return Err(Error::NonFinite("c"));
        }
        if !self.p.is_finite() {
            return Err(Error::NonFinite("p"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointIncrement {
    pub point: Point,
    pub weight: f64,
}

impl PointIncrement {
    pub fn new(point: Point, weight: f64) -> Self {
        PointIncrement { point, weight }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub point: Point,
    pub weight: f64,
}

/// Immutable weighted set of points keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Entry>", try_from = "Vec<Entry>")]
pub struct Distribution {
    entries: BTreeMap<String, Entry>,
    n: f64,
    c_sum: f64,
}

impl From<Distribution> for Vec<Entry> {
    fn from(d: Distribution) -> Self {
        d.entries.into_values().collect()
    }
}

impl TryFrom<Vec<Entry>> for Distribution {
    type Error = Error;

    fn try_from(entries: Vec<Entry>) -> Result<Self> {
        Distribution::from_entries(entries)
    }
}

impl Distribution {
    pub fn empty() -> Self {
        Distribution::default()
    }

    pub fn singleton(point: Point, weight: f64) -> Result<Self> {
        Distribution::empty().apply_increment(&PointIncrement::new(point, weight))
    }

    /// Builds from entries; ids must be unique.
    pub fn from_entries<I: IntoIterator<Item = Entry>>(entries: I) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in entries {
            e.point.validate()?;
            check_weight(e.weight)?;
            if map.contains_key(&e.point.id) {
                return Err(Error::DuplicateId(e.point.id));
            }
            map.insert(e.point.id.clone(), e);
        }
        Ok(Self::rebuild(map))
    }

    pub fn from_points<I: IntoIterator<Item = (Point, f64)>>(points: I) -> Result<Self> {
        Self::from_entries(points.into_iter().map(|(point, weight)| Entry { point, weight }))
    }

    fn rebuild(entries: BTreeMap<String, Entry>) -> Self {
        let n = compensated_sum(entries.values().map(|e| e.weight));
        let c_sum = compensated_sum(entries.values().map(|e| e.weight * e.point.c));
        Distribution { entries, n, c_sum }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Total volume N.
    pub fn volume(&self) -> f64 {
        self.n
    }

    /// Weighted sum of consumer values, N times Q.
    pub fn c_total(&self) -> f64 {
        self.c_sum
    }

    pub fn weight_of(&self, id: &str) -> f64 {
        self.entries.get(id).map_or(0.0, |e| e.weight)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &Entry> {
        self.entries.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Expected consumer value Q.
    pub fn q(&self) -> Result<f64> {
        if self.is_empty() || self.n <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        Ok(self.c_sum / self.n)
    }

    /// Sum of N_r T(p_r).
    pub fn t_total(&self, t: &dyn ProducerTransform) -> Result<f64> {
        let vals = self
            .entries
            .values()
            .map(|e| t.apply(e.point.p).map(|tp| e.weight * tp))
            .collect::<Result<Vec<_>>>()?;
        Ok(compensated_sum(vals))
    }

    /// Expected transformed producer value E(T|D).
    pub fn expected_t(&self, t: &dyn ProducerTransform) -> Result<f64> {
        if self.is_empty() || self.n <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        Ok(self.t_total(t)? / self.n)
    }

    pub fn min_c(&self) -> Option<f64> {
        self.entries.values().map(|e| e.point.c).reduce(f64::min)
    }

    pub fn max_c(&self) -> Option<f64> {
        self.entries.values().map(|e| e.point.c).reduce(f64::max)
    }

    pub fn apply_increment(&self, inc: &PointIncrement) -> Result<Self> {
        inc.point.validate()?;
        check_weight(inc.weight)?;
        let mut entries = self.entries.clone();
        entries
            .entry(inc.point.id.clone())
            .and_modify(|e| e.weight += inc.weight)
            .or_insert_with(|| Entry { point: inc.point.clone(), weight: inc.weight });
        Ok(Self::rebuild(entries))
    }

    /// Pointwise sum of weights.
    pub fn combine(&self, other: &Distribution) -> Self {
        let mut entries = self.entries.clone();
        for e in other.entries.values() {
            entries
                .entry(e.point.id.clone())
                .and_modify(|x| x.weight += e.weight)
                .or_insert_with(|| e.clone());
        }
        Self::rebuild(entries)
    }

    /// Pointwise subtraction; `y` must fit inside `self`.
    pub fn remove_subdistribution(&self, y: &Distribution) -> Result<Self> {
        let mut entries = self.entries.clone();
        for e in y.entries.values() {
            let Some(cur) = entries.get_mut(&e.point.id) else {
                if e.weight <= DROP_TOLERANCE {
                    continue;
                }
                return Err(Error::NotSubdistribution(e.point.id.clone()));
            };
            let left = cur.weight - e.weight;
            if left < -DROP_TOLERANCE {
                return Err(Error::NotSubdistribution(e.point.id.clone()));
            }
            if left <= DROP_TOLERANCE {
                entries.remove(&e.point.id);
            } else {
                cur.weight = left;
            }
        }
        Ok(Self::rebuild(entries))
    }

    /// True when every weight of `self` fits inside `other`.
    pub fn is_subdistribution_of(&self, other: &Distribution) -> bool {
        self.entries
            .values()
            .all(|e| e.weight <= other.weight_of(&e.point.id) + DROP_TOLERANCE)
    }

    /// Largest absolute weight difference over the union of ids.
    pub fn max_weight_diff(&self, other: &Distribution) -> f64 {
        let ids: std::collections::BTreeSet<&str> = self.ids().chain(other.ids()).collect();
        ids.into_iter()
            .map(|id| (self.weight_of(id) - other.weight_of(id)).abs())
            .fold(0.0, f64::max)
    }

    /// Every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(k, e)| (k.clone(), Entry { point: e.point.clone(), weight: e.weight * factor }))
            .collect();
        Self::rebuild(entries)
    }
}

pub fn combine(d1: &Distribution, d2: &Distribution) -> Distribution {
    d1.combine(d2)
}

pub fn q_of(d: &Distribution) -> Result<f64> {
    d.q()
}

pub fn expected_t(d: &Distribution, t: &dyn ProducerTransform) -> Result<f64> {
    d.expected_t(t)
}

pub fn apply_increment(d: &Distribution, inc: &PointIncrement) -> Result<Distribution> {
    d.apply_increment(inc)
}

pub fn remove_subdistribution(d: &Distribution, y: &Distribution) -> Result<Distribution> {
    d.remove_subdistribution(y)
}

fn check_weight(w: f64) -> Result<()> {
    if !w.is_finite() {
        return Err(Error::NonFinite("weight"));
    }
    if w <= 0.0 {
        return Err(Error::NonPositiveWeight(w));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{Affine, Identity};

    fn pt(id: &str, c: f64) -> Point {
        Point::new(id, c, 1.0)
    }

    #[test]
    fn combine_examples() {
        let e = Distribution::empty();
        let d = Distribution::from_points([(pt("a", 1.0), 2.0)]).unwrap();
        assert_eq!(combine(&e, &d), d);

        let d2 = Distribution::from_points([(pt("b", 4.0), 2.0)]).unwrap();
        let c = combine(&d, &d2);
        assert_eq!(c.volume(), 4.0);
        assert_eq!(c.q().unwrap(), 2.5);

        let s = Distribution::from_points([(pt("a", 3.0), 1.0)]).unwrap();
        let ss = combine(&s, &s);
        assert_eq!(ss.len(), 1);
        assert_eq!(ss.weight_of("a"), 2.0);
        assert_eq!(ss.q().unwrap(), 3.0);
    }

    #[test]
    fn q_examples() {
        let d = Distribution::from_points([(pt("a", 2.0), 5.0)]).unwrap();
        assert_eq!(d.q().unwrap(), 2.0);
        let d = Distribution::from_points([(pt("a", 1.0), 1.0), (pt("b", 3.0), 1.0)]).unwrap();
        assert_eq!(d.q().unwrap(), 2.0);
        assert_eq!(Distribution::empty().q(), Err(Error::EmptyDistribution));
    }

    #[test]
    fn q_of_four_points_matches_direct_sum() {
        let d = Distribution::from_points((2..=5).map(|c| (pt(&format!("p{c}"), c as f64), 1.0))).unwrap();
        let direct = (5.0 + 4.0 + 3.0 + 2.0) / 4.0;
        assert_eq!(d.q().unwrap(), direct);
    }

    #[test]
    fn expected_t_examples() {
        let d = Distribution::from_points([(Point::new("a", 0.0, 7.0), 3.0)]).unwrap();
        assert_eq!(d.expected_t(&Identity).unwrap(), 7.0);
        let d = Distribution::from_points([(Point::new("a", 0.0, 1.0), 1.0), (Point::new("b", 0.0, 3.0), 1.0)]).unwrap();
        assert_eq!(d.expected_t(&Identity).unwrap(), 2.0);
        let d = Distribution::from_points([(Point::new("a", 0.0, 0.0), 1.0), (Point::new("b", 0.0, 2.0), 3.0)]).unwrap();
        let direct = (1.0 * 1.0 + 3.0 * 5.0) / 4.0;
        assert_eq!(d.expected_t(&Affine::new(2.0, 1.0)).unwrap(), direct);
    }

    #[test]
    fn increment_examples() {
        let d = Distribution::empty().apply_increment(&PointIncrement::new(pt("a", 5.0), 1.0)).unwrap();
        assert_eq!(d.q().unwrap(), 5.0);
        let d = d.apply_increment(&PointIncrement::new(pt("b", 4.0), 1.0)).unwrap();
        assert_eq!(d.q().unwrap(), 4.5);
        let bad = PointIncrement::new(pt("c", 1.0), f64::NAN);
        assert_eq!(d.apply_increment(&bad), Err(Error::NonFinite("weight")));
    }

    #[test]
    fn increment_order_does_not_matter() {
        let base = Distribution::from_points([(pt("a", 2.0), 1.5)]).unwrap();
        let i1 = PointIncrement::new(pt("b", 7.0), 0.25);
        let i2 = PointIncrement::new(pt("c", -1.0), 3.0);
        let x = base.apply_increment(&i1).unwrap().apply_increment(&i2).unwrap();
        let y = base.apply_increment(&i2).unwrap().apply_increment(&i1).unwrap();
        assert_eq!(x.q().unwrap(), y.q().unwrap());
        assert_eq!(x.volume(), y.volume());
    }

    #[test]
    fn subtraction_examples() {
        let d = Distribution::from_points([(pt("a", 1.0), 2.0), (pt("b", 3.0), 2.0)]).unwrap();
        assert!(d.remove_subdistribution(&d).unwrap().is_empty());
        assert_eq!(d.remove_subdistribution(&Distribution::empty()).unwrap(), d);
        let y = Distribution::from_points([(pt("a", 1.0), 2.0)]).unwrap();
        let r = d.remove_subdistribution(&y).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.weight_of("b"), 2.0);
        assert_eq!(r.q().unwrap(), 3.0);
        let too_much = Distribution::from_points([(pt("a", 1.0), 2.5)]).unwrap();
        assert!(matches!(d.remove_subdistribution(&too_much), Err(Error::NotSubdistribution(_))));
    }
}
