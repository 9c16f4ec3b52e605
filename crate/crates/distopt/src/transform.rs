//! Producer value transforms T(p).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;

pub trait ProducerTransform: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn apply(&self, p: f64) -> Result<f64>;
    /// Whether T is known to be non-decreasing.
    fn is_monotone(&self) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl ProducerTransform for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }
    fn apply(&self, p: f64) -> Result<f64> {
        Ok(p)
    }
    fn is_monotone(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
}

impl Affine {
    pub fn new(a: f64, b: f64) -> Self {
        Affine { a, b }
    }
}

impl ProducerTransform for Affine {
    fn name(&self) -> &'static str {
        "affine"
    }
    fn apply(&self, p: f64) -> Result<f64> {
        Ok(self.a * p + self.b)
    }
    fn is_monotone(&self) -> bool {
        self.a > 0.0
    }
}

/// Explicit lookup; p values must match a key within 1e-12.
#[derive(Debug, Clone)]
pub struct Table {
    pairs: Vec<(f64, f64)>,
    monotone: bool,
}

impl Table {
    pub fn new(mut pairs: Vec<(f64, f64)>, monotone: bool) -> Result<Self> {
        if pairs.iter().any(|(p, t)| !p.is_finite() || !t.is_finite()) {
            return Err(Error::InvalidTransform("table entries must be finite".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.windows(2).any(|w| w[1].0 - w[0].0 <= 1e-12) {
            return Err(Error::InvalidTransform("duplicate p in table".into()));
        }
        if monotone && pairs.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::InvalidTransform("table declared monotone but decreases".into()));
        }
        Ok(Table { pairs, monotone })
    }
}

impl ProducerTransform for Table {
    fn name(&self) -> &'static str {
        "table"
    }
    fn apply(&self, p: f64) -> Result<f64> {
        let i = self.pairs.partition_point(|(k, _)| *k < p - 1e-12);
        match self.pairs.get(i) {
            Some((k, t)) if (k - p).abs() <= 1e-12 => Ok(*t),
            _ => Err(Error::MissingTableEntry(p)),
        }
    }
    fn is_monotone(&self) -> bool {
        self.monotone
    }
}

/// Serializable description of a transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotone: Option<bool>,
}

impl TransformSpec {
    pub fn identity() -> Self {
        TransformSpec { kind: "identity".into(), a: None, b: None, table: None, monotone: None }
    }

    pub fn affine(a: f64, b: f64) -> Self {
        TransformSpec { kind: "affine".into(), a: Some(a), b: Some(b), table: None, monotone: None }
    }

    pub fn build(&self) -> Result<Arc<dyn ProducerTransform>> {
        transform_registry().build(self)
    }
}

pub type TransformBuilder = dyn Fn(&TransformSpec) -> Result<Arc<dyn ProducerTransform>> + Send + Sync;

impl Registry<TransformBuilder> {
    pub fn build(&self, spec: &TransformSpec) -> Result<Arc<dyn ProducerTransform>> {
        let f = self.lookup(&spec.kind)?;
        f(spec)
    }
}

pub fn transform_registry() -> Registry<TransformBuilder> {
    let mut r: Registry<TransformBuilder> = Registry::new("transform");
    r.register("identity", Arc::new(|_: &TransformSpec| Ok(Arc::new(Identity) as Arc<dyn ProducerTransform>)));
    r.register(
        "affine",
        Arc::new(|s: &TransformSpec| {
            let a = s.a.ok_or_else(|| Error::InvalidTransform("affine needs a".into()))?;
            let b = s.b.unwrap_or(0.0);
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidTransform("affine coefficients must be finite".into()));
            }
            Ok(Arc::new(Affine::new(a, b)) as Arc<dyn ProducerTransform>)
        }),
    );
    r.register(
        "table",
        Arc::new(|s: &TransformSpec| {
            let rows = s.table.as_ref().ok_or_else(|| Error::InvalidTransform("table needs rows".into()))?;
            let t = Table::new(rows.iter().map(|r| (r[0], r[1])).collect(), s.monotone.unwrap_or(false))?;
            Ok(Arc::new(t) as Arc<dyn ProducerTransform>)
        }),
    );
    r
}
