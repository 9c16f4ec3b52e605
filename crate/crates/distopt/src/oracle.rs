//! Brute-force and finite-difference verifiers, and seeded instance search.
//!
//! The direct side of every check here uses only distributions and value
//! functions; closed-form thresholds appear only as the thing being checked.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{Distribution, Point, PointIncrement};
use crate::error::{Error, Result};
use crate::optimizer::{analyze_candidate, certify, determine_d_star, CarveoutResult, OptimizerConfig};
use crate::participation::{potential, ModelSpec, Participation};
use crate::sequence::SeedPolicy;
use crate::thresholds::{
    band_width, classify, x_c_kappa, x_l_kappa, x_l_kappa_adaptive, x_l_kappa_reactive, x_l_level, x_u_kappa,
    x_u_level_average, x_u_level_below_average, ConsumerMode, ExtensionContext, VerdictKind, DEFAULT_IOTA, NEAR_THRESHOLD,
};
use crate::transform::{Identity, ProducerTransform, TransformSpec};
use crate::valuation::{s_value, v_value, SCORE_TIE};

pub const BRUTE_FORCE_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub fingerprint: String,
    pub quantity: String,
    pub expected: f64,
    pub got: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checked: usize,
    /// Cases inside the near-threshold band, skipped.
    pub indeterminate: usize,
    pub mismatches: Vec<Mismatch>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn merge(&mut self, other: OracleReport) {
        self.checked += other.checked;
        self.indeterminate += other.indeterminate;
        self.mismatches.extend(other.mismatches);
        self.mismatches.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint).then_with(|| a.quantity.cmp(&b.quantity)));
    }

    fn check(&mut self, fingerprint: impl Into<String>, quantity: &str, ok: bool, expected: f64, got: f64, tol: f64) {
        self.checked += 1;
        if !ok {
            self.mismatches.push(Mismatch { fingerprint: fingerprint.into(), quantity: quantity.into(), expected, got, tolerance: tol });
        }
    }

    fn close(&mut self, fingerprint: impl Into<String>, quantity: &str, expected: f64, got: f64, tol: f64) {
        self.check(fingerprint, quantity, (expected - got).abs() <= tol, expected, got, tol);
    }
}

/// Greedy sequence by direct re-evaluation of V for every candidate.
///
/// Ties within a relative 1e-12 go to higher c, then higher T(p), then the smaller id.
pub fn greedy_prefixes(
    d_all: &Distribution,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<Vec<Distribution>> {
    let mut left: Vec<(Point, f64, f64)> =
        d_all.entries().map(|e| Ok((e.point.clone(), e.weight, t.apply(e.point.p)?))).collect::<Result<_>>()?;
    let mut d = Distribution::empty();
    let mut out = Vec::with_capacity(left.len());
    while !left.is_empty() {
        let mut scores = Vec::with_capacity(left.len());
        for (p, w, _) in &left {
            scores.push(v_value(&d.apply_increment(&PointIncrement::new(p.clone(), *w))?, model, t)?);
        }
        let mut best = 0;
        for i in 1..left.len() {
            let (a, b) = (scores[i], scores[best]);
            let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            let better = if (a - b).abs() <= SCORE_TIE * scale {
                let (pi, pb) = (&left[i], &left[best]);
                pi.0.c > pb.0.c || (pi.0.c == pb.0.c && (pi.2 > pb.2 || (pi.2 == pb.2 && pi.0.id < pb.0.id)))
            } else {
                a > b
            };
            if better {
                best = i;
            }
        }
        let (p, w, _) = left.remove(best);
        d = d.apply_increment(&PointIncrement::new(p, w))?;
        out.push(d.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WMax {
    pub best_prefix_w: f64,
    pub best_prefix_n: f64,
    pub best_subset_w: f64,
    pub best_subset_n: f64,
}

fn w_of(d: &Distribution, model: &dyn Participation) -> Result<f64> {
    Ok(potential(model, d)?.min(d.volume()))
}

/// Exact maxima of min(M, N) over greedy prefixes and over all non-empty subsets of whole points.
pub fn brute_force_w_max(
    d_all: &Distribution,
    model: &dyn Participation,
    t: &dyn ProducerTransform,
) -> Result<WMax> {
    let n = d_all.len();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::SizeCap { max: BRUTE_FORCE_CAP, got: n });
    }
    if n == 0 {
        return Err(Error::EmptyDistribution);
    }
    let mut best = WMax { best_prefix_w: f64::NEG_INFINITY, best_prefix_n: 0.0, best_subset_w: f64::NEG_INFINITY, best_subset_n: 0.0 };
    for d in greedy_prefixes(d_all, model, t)? {
        let w = w_of(&d, model)?;
        if w > best.best_prefix_w {
            best.best_prefix_w = w;
            best.best_prefix_n = d.volume();
        }
    }
    let entries: Vec<_> = d_all.entries().collect();
    for mask in 1u32..(1u32 << n) {
        let (mut c, mut vol) = (0.0, 0.0);
        for (i, e) in entries.iter().enumerate() {
            if mask & (1 << i) != 0 {
                c += e.point.c * e.weight;
                vol += e.weight;
            }
        }
        let w = model.at_rate(c / vol).min(vol);
        if w > best.best_subset_w {
            best.best_subset_w = w;
            best.best_subset_n = vol;
        }
    }
    Ok(best)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// A crossing distribution D* = D_a + r1 with r1 exactly average and M(D*) = N(D*).
#[derive(Debug, Clone)]
pub struct CalibratedContext {
    pub d_a: Distribution,
    pub r1: Distribution,
    pub d_star: Distribution,
    pub r2: Distribution,
    pub model: ModelSpec,
}

pub fn sample_calibrated_context(rng: &mut ChaCha8Rng) -> Result<CalibratedContext> {
    let k = rng.gen_range(1..=4);
    let d_a = Distribution::from_points((0..k).map(|i| {
        let c = uniform(rng, 0.5, 5.0);
        let p = uniform(rng, 0.2, 3.0);
        let w = uniform(rng, 0.2, 2.0);
        (Point::new(format!("a{i}"), c, p), w)
    }))?;
    let r1 = Distribution::singleton(Point::new("r1", d_a.q()?, d_a.expected_t(&Identity)?), uniform(rng, 0.1, 1.5))?;
    let d_star = d_a.combine(&r1);
    let (n_star, q_star, e_star) = (d_star.volume(), d_star.q()?, d_star.expected_t(&Identity)?);
    let alpha = uniform(rng, 0.3, 1.0);
    let model = ModelSpec::power(n_star / q_star.powf(alpha), alpha);
    let r2 = Distribution::singleton(
        Point::new("r2", uniform(rng, 0.01, 3.0) * q_star, uniform(rng, 0.01, 2.0) * e_star),
        uniform(rng, 0.05, 1.5) * n_star,
    )?;
    Ok(CalibratedContext { d_a, r1, d_star, r2, model })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Compares direct value changes with the slope-threshold rules on sampled contexts.
pub fn crosscheck_thresholds(n_samples: usize, rng_seed: u64, iota: f64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut rep = OracleReport::default();
    let t = Identity;
    for i in 0..n_samples {
        let cc = sample_calibrated_context(&mut rng)?;
        let model = cc.model.build()?;
        let m = model.as_ref();
        let fp = format!("seed{rng_seed}-{i}");

        // Direct side.
        let d_prime = cc.d_star.combine(&cc.r2);
        let n_star = cc.d_star.volume();
        let (m_star, m_prime) = (potential(m, &cc.d_star)?, potential(m, &d_prime)?);
        let n2 = cc.r2.volume();
        let k = (m_prime - m_star) / n2;
        let ds = s_value(&d_prime, m, &t)? - s_value(&cc.d_star, m, &t)?;
        let dv = v_value(&d_prime, m, &t)? - v_value(&cc.d_star, m, &t)?;
        let d_ar2 = cc.d_a.combine(&cc.r2);
        let k_ar2 = (potential(m, &d_ar2)? - potential(m, &cc.d_a)?) / n2;
        let viable = cc.d_star.expected_t(&t)? * n_star >= v_value(&d_ar2, m, &t)?;

        // Threshold side.
        let prediction = |mode: ConsumerMode| {
            ExtensionContext::from_distributions(&cc.d_star, Some((&cc.d_a, &cc.r1)), &cc.r2, m, &t, mode, iota)
        };
        let ctx = prediction(ConsumerMode::Adaptive)?;
        let xl = x_l_kappa(&ctx)?;
        let (xu, _) = x_u_kappa(&ctx)?;

        if (k - xl).abs() < NEAR_THRESHOLD {
            rep.indeterminate += 1;
        } else {
            rep.check(&fp, "sign(delta_v)", sign(dv) == sign(k - xl), sign(k - xl), sign(dv), 0.0);
            if m_prime <= d_prime.volume() {
                rep.check(&fp, "sign(delta_s)", sign(ds) == sign(k - xl), sign(k - xl), sign(ds), 0.0);
            } else {
                rep.check(&fp, "sign(delta_s) above one", sign(ds) == sign(ctx.tp2_ratio), sign(ctx.tp2_ratio), sign(ds), 0.0);
            }
        }
        if (k_ar2 - xu).abs() < NEAR_THRESHOLD {
            rep.indeterminate += 1;
        } else {
            rep.check(&fp, "viability", viable == (k_ar2 < xu), f64::from(u8::from(k_ar2 < xu)), f64::from(u8::from(viable)), 0.0);
            rep.check(&fp, "context viability", viable == ctx.is_viable(), f64::from(u8::from(viable)), f64::from(u8::from(ctx.is_viable())), 0.0);
        }
        rep.close(&fp, "kappa", k, ctx.kappa_r2, 1e-9 * k.abs().max(1.0));

        // Two-period comparisons for a reactive consumer, normalized so N* = 1.
        if k < 1.0 {
            let rctx = prediction(ConsumerMode::Reactive)?;
            let (n_p, m_p) = (d_prime.volume() / n_star, m_prime / n_star);
            let e_ratio = d_prime.expected_t(&t)? / cc.d_star.expected_t(&t)?;
            let producer = e_ratio * n_p + m_p / n_p - 2.0;
            let xlr = x_l_kappa(&rctx)?;
            if (k - xlr).abs() >= NEAR_THRESHOLD && producer.abs() > 1e-12 {
                rep.check(&fp, "reactive producer", (producer > 0.0) == (k > xlr), xlr, k, 0.0);
            }
            for gain in [iota, 0.0] {
                let cctx = ExtensionContext { iota: gain, ..rctx.clone() };
                let q_star = cc.d_star.q()?;
                let consumer = (1.0 - (n_p - m_p) * gain) * q_star + (n2 / n_star) * cc.r2.q()? + (m_p / n_p) * q_star
                    - 2.0 * q_star;
                let xc = x_c_kappa(&cctx);
                if (k - xc).abs() >= NEAR_THRESHOLD && consumer.abs() > 1e-12 * q_star {
                    rep.check(&fp, "reactive consumer", (consumer > 0.0) == (k > xc), xc, k, 0.0);
                }
            }
        }
    }
    Ok(rep)
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

pub const FD_STEP: f64 = 1e-6;
/// Curvature needs a wider step than slope to stay above rounding noise.
pub const FD_CURVATURE_STEP: f64 = 1e-4;
pub const FD_MARGIN: f64 = 1e-8;
pub const TP2_GRID: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
pub const TP1_GRID: [f64; 3] = [0.5, 0.8, 0.95];

/// Slope and curvature signs of the viability and producer-gain bounds on a 50 x 50 grid.
pub fn finite_difference_facts() -> OracleReport {
    let mut rep = OracleReport::default();
    let h = FD_STEP;
    let h2 = FD_CURVATURE_STEP;
    for n1 in grid(0.02, 0.98, 50) {
        for n2 in grid(0.02, 0.98, 50) {
            for t2 in TP2_GRID {
                let fp = format!("n1={n1:.4},n2={n2:.4},tp2={t2}");
                let xu = |x: f64| x_u_level_average(n1, t2, x);
                rep.close(&fp, "average r1: upper bound at zero", 1.0, xu(0.0), 1e-12);
                let slope0 = (xu(h) - xu(0.0)) / h;
                if (n1 - t2).abs() > 1e-3 {
                    rep.check(&fp, "average r1: slope at zero below one", (slope0 < 1.0) == (n1 < t2), (n1 < t2) as u8 as f64, slope0, FD_MARGIN);
                }
                if n1 <= t2 {
                    let slope = (xu(n2 + h) - xu(n2 - h)) / (2.0 * h);
                    rep.check(&fp, "average r1: slope below one", slope < 1.0 - FD_MARGIN, 1.0, slope, FD_MARGIN);
                }
                let curv = (xu(n2 + h2) - 2.0 * xu(n2) + xu(n2 - h2)) / (h2 * h2);
                rep.check(&fp, "average r1: curvature negative", curv < -FD_MARGIN, 0.0, curv, FD_MARGIN);
                let xl = x_l_level(t2, n2);
                rep.check(&fp, "lower bound under upper", xl < xu(n2), xu(n2), xl, 0.0);

                for tp1 in TP1_GRID {
                    let fp4 = format!("{fp},tp1={tp1}");
                    let g = 1.0 + n1 * (tp1 - 1.0);
                    let xb = |x: f64| x_u_level_below_average(n1, tp1, t2, x);
                    rep.close(&fp4, "below-average r1: upper bound at zero", g, xb(0.0), 1e-12);
                    rep.close(&fp4, "below-average r1: reduction factor", g, xb(n2) / xu(n2), 1e-12);
                    let cut = n1 * tp1 / (1.0 - n1 + n1 * tp1);
                    if (cut - t2).abs() > 1e-3 {
                        let s = (xb(h) - xb(0.0)) / h;
                        rep.check(&fp4, "below-average r1: slope at zero below one", (s < 1.0) == (cut < t2), (cut < t2) as u8 as f64, s, FD_MARGIN);
                    }
                }

                let gap = |t: f64| band_width(n1, t, n2);
                let d1 = (gap(t2 + h) - gap(t2 - h)) / (2.0 * h);
                rep.check(&fp, "band narrows in tp2", d1 < -FD_MARGIN, 0.0, d1, FD_MARGIN);
                let d2 = (gap(t2 + h2) - 2.0 * gap(t2) + gap(t2 - h2)) / (h2 * h2);
                rep.check(&fp, "band convex in tp2", d2 > FD_MARGIN, 0.0, d2, FD_MARGIN);
                let closed = (1.0 - t2) * n1 / ((1.0 + t2 * n2) * (1.0 - n1 + t2 * n2));
                rep.close(&fp, "band closed form", closed, gap(t2), 1e-12);
            }
        }
    }
    rep
}

/// Boundary identities of the slope thresholds.
pub fn boundary_identities() -> OracleReport {
    let mut rep = OracleReport::default();
    for n1 in grid(0.02, 0.98, 25) {
        for n2 in grid(0.02, 0.98, 25) {
            let fp = format!("n1={n1:.4},n2={n2:.4}");
            rep.close(&fp, "lower slope at zero producer value", 1.0, x_l_kappa_adaptive(0.0, n2).unwrap_or(f64::NAN), 1e-12);
            rep.close(&fp, "reactive lower slope at zero producer value", 1.0, x_l_kappa_reactive(0.0, n2), 1e-12);
            for t2 in TP2_GRID {
                let ctx = ExtensionContext { n_r1: n1, n_r2: n2, tp2_ratio: t2, ..Default::default() };
                let tau = crate::thresholds::tau_tp1(&ctx).unwrap_or(f64::NAN);
                rep.check(&fp, "tau below one", tau < 1.0, 1.0, tau, 0.0);
            }
        }
    }
    rep
}

/// Points, participation and the optimizer settings that go with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub points: Vec<(Point, f64)>,
    pub model: ModelSpec,
    pub iota: f64,
    /// Explicit seed ids; None means the default seed policy.
    pub seed: Option<Vec<String>>,
}

impl Draft {
    fn plain(points: Vec<(Point, f64)>, model: ModelSpec) -> Self {
        Draft { points, model, iota: DEFAULT_IOTA, seed: None }
    }

    pub fn distribution(&self) -> Result<Distribution> {
        Distribution::from_points(self.points.iter().cloned())
    }

    pub fn config(&self) -> OptimizerConfig {
        let mut cfg = OptimizerConfig { iota: self.iota, ..OptimizerConfig::default() };
        if let Some(ids) = &self.seed {
            cfg.sequence.seed_policy = SeedPolicy::Explicit(ids.clone());
        }
        cfg
    }
}

/// A generated instance with the verdict it was searched for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    pub draft: Draft,
    pub transform: TransformSpec,
    pub verdict: VerdictKind,
    /// The point whose extension carries the verdict, when there is one.
    pub candidate: Option<String>,
    pub attempts: usize,
}

fn jitter_points(rng: &mut ChaCha8Rng, prefix: &str, n: usize, c: (f64, f64), p: (f64, f64), w: (f64, f64)) -> Vec<(Point, f64)> {
    (0..n)
        .map(|i| {
            let point = Point::new(format!("{prefix}{i}"), uniform(rng, c.0, c.1), uniform(rng, p.0, p.1));
            (point, uniform(rng, w.0, w.1))
        })
        .collect()
}

/// The id of the designated candidate in generated scenario instances.
pub const CANDIDATE_ID: &str = "tail";

/// A calibrated core that crosses exactly, a candidate tail sized for the target, and a decoy.
///
/// The run is seeded with the whole core. The decoy has low value and high producer
/// weight, so the greedy probe from the core picks it and stops on a falling slope,
/// leaving the tail available for analysis. With participation calibrated at the core,
/// a positive slope needs the tail above the core's average value, which keeps the
/// consumer threshold negative unless the tail is small or iota is large.
pub fn scenario_candidate(rng: &mut ChaCha8Rng, target: VerdictKind) -> Result<Draft> {
    use VerdictKind::*;
    let n = rng.gen_range(2..=5);
    let mut pts = jitter_points(rng, "p", n, (3.0, 8.0), (1.5, 4.0), (0.5, 1.5));
    let core = Distribution::from_points(pts.iter().cloned())?;
    let (q, e, vol) = (core.q()?, core.expected_t(&Identity)?, core.volume());
    let alpha = uniform(rng, 0.4, 1.0);
    let zeta = vol / q.powf(alpha);
    let (c_mul, p_mul, w_mul, iota) = match target {
        BothPreferExtension => ((1.02, 1.5), (0.9, 1.5), (0.1, 1.5), DEFAULT_IOTA),
        ConsumerPrefersExtension => ((1.05, 2.5), (0.0, 0.5), (0.1, 0.8), DEFAULT_IOTA),
        ProducerPrefersExtension => ((1.0, 1.1), (1.0, 1.6), (0.3, 0.8), 1.0),
        NeitherPrefersExtension => ((1.0, 1.1), (0.0, 0.8), (0.3, 0.8), 1.0),
        _ => ((0.0, 3.0), (0.0, 2.0), (0.1, 1.2), DEFAULT_IOTA),
    };
    let seed: Vec<String> = pts.iter().map(|(p, _)| p.id.clone()).collect();
    let tail = Point::new(CANDIDATE_ID, uniform(rng, c_mul.0, c_mul.1) * q, uniform(rng, p_mul.0, p_mul.1) * e);
    pts.push((tail, uniform(rng, w_mul.0, w_mul.1) * vol));
    let decoy = Point::new("decoy", uniform(rng, 0.3, 0.8) * q, uniform(rng, 3.0, 6.0) * e);
    pts.push((decoy, uniform(rng, 0.3, 1.0) * vol));
    Ok(Draft { points: pts, model: ModelSpec::power(zeta, alpha), iota, seed: Some(seed) })
}

/// Built so the first crossing sees a slope-above-one block with no producer value, and a zero-value filler closes the second crossing.
pub fn second_crossing_candidate(rng: &mut ChaCha8Rng) -> Result<Option<Draft>> {
    let p = uniform(rng, 2.0, 10.0);
    let c_b = uniform(rng, 1.0, 3.0);
    let c_a = c_b * uniform(rng, 1.5, 3.0);
    let (w_a, w_b) = (uniform(rng, 0.5, 1.5), uniform(rng, 0.5, 1.5));
    let n_star = w_a + w_b;
    let q_star = (c_a * w_a + c_b * w_b) / n_star;
    let zeta = n_star / q_star;
    let w2 = uniform(rng, 0.5, 1.5) * n_star;
    let c2 = uniform(rng, 2.0, 5.0) * q_star;
    let c_after = c_a * w_a + c_b * w_b + c2 * w2;
    // With unit exponent, M = N after the filler exactly when (N' + w)^2 = zeta * (total c).
    let w3 = (zeta * c_after).sqrt() - (n_star + w2);
    if w3 <= 0.0 {
        return Ok(None);
    }
    let pts = vec![
        (Point::new("a", c_a, p), w_a),
        (Point::new("b", c_b, p), w_b),
        (Point::new("r2", c2, 0.0), w2),
        (Point::new("r3", 0.0, 0.0), w3),
    ];
    // The sequence must reach the first crossing as {a, b}, so b has to beat both zero-value points.
    let model = ModelSpec::power(zeta, 1.0);
    let m = model.build()?;
    let a = Distribution::from_points([pts[0].clone()])?;
    let v_after = |i: usize| v_value(&a.apply_increment(&PointIncrement::new(pts[i].0.clone(), pts[i].1))?, m.as_ref(), &Identity);
    let v_b = v_after(1)?;
    if v_after(2)? >= v_b || v_after(3)? >= v_b {
        return Ok(None);
    }
    Ok(Some(Draft::plain(pts, model)))
}

/// A few rich but tiny points: participation stays above the available volume after all of them.
pub fn underserved_instance(rng: &mut ChaCha8Rng, size: usize) -> Draft {
    Draft::plain(jitter_points(rng, "p", size, (5.0, 10.0), (0.5, 2.0), (0.05, 0.3)), ModelSpec::power(1.0, 1.0))
}

/// Every point has a non-positive rate, so nobody participates.
pub fn saturated_instance(rng: &mut ChaCha8Rng, size: usize) -> Draft {
    Draft::plain(jitter_points(rng, "p", size, (-2.0, 0.0), (0.5, 2.0), (0.5, 1.5)), ModelSpec::power(1.0, 1.0))
}

pub fn uniform_instance(rng: &mut ChaCha8Rng, size: usize) -> Draft {
    let pts = jitter_points(rng, "p", size, (0.5, 10.0), (0.1, 3.0), (0.2, 2.0));
    Draft::plain(pts, ModelSpec::power(uniform(rng, 0.2, 1.0), uniform(rng, 0.3, 1.0)))
}

pub fn find_scenario_instance(target: VerdictKind, budget: usize, seed: u64) -> Result<Option<ScenarioInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=budget {
        let draft = match target {
            VerdictKind::UnderServed => {
                let n = rng.gen_range(1..=3);
                underserved_instance(&mut rng, n)
            }
            VerdictKind::SaturatedConsumer => {
                let n = rng.gen_range(1..=4);
                saturated_instance(&mut rng, n)
            }
            VerdictKind::StayAtDStar => {
                let n = rng.gen_range(3..=10);
                uniform_instance(&mut rng, n)
            }
            VerdictKind::ContinueToSecondCrossing => match second_crossing_candidate(&mut rng)? {
                Some(d) => d,
                None => continue,
            },
            _ => scenario_candidate(&mut rng, target)?,
        };
        let d_all = draft.distribution()?;
        let model = draft.model.build()?;
        let cfg = draft.config();
        let r = determine_d_star(&d_all, &cfg, model.as_ref(), &Identity)?;
        let (kind, candidate) = if target.needs_carveout()
            || matches!(target, VerdictKind::BothPreferExtension | VerdictKind::NeitherPrefersExtension)
        {
            if r.verdict.kind.is_degenerate() {
                continue;
            }
            match analyze_candidate(&r, &d_all, CANDIDATE_ID, &cfg, model.as_ref(), &Identity) {
                Ok(v) if !v.indeterminate => (v.kind, Some(CANDIDATE_ID.to_string())),
                Ok(_) | Err(Error::Precondition(_)) | Err(Error::DegenerateDenominator(_)) => continue,
                Err(e) => return Err(e),
            }
        } else {
            (r.verdict.kind, r.probe.as_ref().and_then(|p| p.block.first()).map(|i| i.point.id.clone()))
        };
        if kind == target {
            return Ok(Some(ScenarioInstance {
                draft,
                transform: TransformSpec::identity(),
                verdict: target,
                candidate,
                attempts: attempt,
            }));
        }
    }
    Ok(None)
}

/// A crossing D* and a block whose extension only one side prefers.
#[derive(Debug, Clone)]
pub struct CarveCase {
    pub d_star: Distribution,
    pub r2: Distribution,
    pub model: ModelSpec,
    pub verdict: VerdictKind,
}

/// Many small, weak points alongside one strong point, and a large block that is rich for the consumer.
pub fn sample_carve_case(rng: &mut ChaCha8Rng) -> Result<Option<CarveCase>> {
    let k = rng.gen_range(5..=12);
    let mut pts = vec![(Point::new("core", uniform(rng, 4.0, 8.0), uniform(rng, 1.0, 3.0)), uniform(rng, 1.0, 3.0))];
    pts.extend(jitter_points(rng, "small", k, (0.1, 1.5), (0.01, 0.3), (0.05, 0.3)));
    let d_star = Distribution::from_points(pts)?;
    let (n_star, q_star, e_star) = (d_star.volume(), d_star.q()?, d_star.expected_t(&Identity)?);
    let alpha = uniform(rng, 0.3, 1.0);
    let model = ModelSpec::power(n_star / q_star.powf(alpha), alpha);
    let r2 = Distribution::singleton(
        Point::new("r2", uniform(rng, 1.0, 2.5) * q_star, uniform(rng, 0.05, 1.2) * e_star),
        uniform(rng, 0.1, 0.5) * n_star,
    )?;
    let m = model.build()?;
    let ctx = ExtensionContext::from_distributions(&d_star, None, &r2, m.as_ref(), &Identity, ConsumerMode::Adaptive, 0.1)?;
    if !(ctx.kappa_r2 > 0.0 && ctx.kappa_r2 < 1.0) {
        return Ok(None);
    }
    let v = classify(&ctx)?;
    Ok(v.kind.needs_carveout().then_some(CarveCase { d_star, r2, model, verdict: v.kind }))
}

pub fn find_carve_cases(count: usize, budget: usize, seed: u64) -> Result<Vec<CarveCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..budget {
        if out.len() >= count {
            break;
        }
        if let Some(c) = sample_carve_case(&mut rng)? {
            out.push(c);
        }
    }
    Ok(out)
}

/// Subset-level agreement between `certify` and a raw recomputation of the carveout conditions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CarveRecheck {
    pub report: OracleReport,
    pub subsets: usize,
    /// Subsets meeting every condition.
    pub valid: usize,
}

/// Enumerates every whole-point Y drawn from the D* points cheaper than the block and compares
/// `certify` against sums taken directly over the underlying points.
pub fn exhaustive_carve_recheck(case: &CarveCase, tol: f64) -> Result<CarveRecheck> {
    let m = case.model.build()?;
    let t = Identity;
    let c_r2 = case.r2.q()?;
    let pool: Vec<_> = case.d_star.entries().filter(|e| e.point.c < c_r2).cloned().collect();
    if pool.len() > 10 {
        return Err(Error::SizeCap { max: 10, got: pool.len() });
    }
    let n_star = case.d_star.volume();
    let (r2_c, r2_t, r2_n) = (case.r2.c_total(), case.r2.t_total(&t)?, case.r2.volume());
    let mut out = CarveRecheck::default();
    for mask in 0u32..(1u32 << pool.len()) {
        let chosen: Vec<_> = pool.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, e)| e).collect();
        let y = Distribution::from_entries(chosen.iter().map(|e| (*e).clone()))?;
        let d_plus = case.d_star.remove_subdistribution(&y)?.combine(&case.r2);
        let (mut y_c, mut y_t, mut y_n) = (0.0, 0.0, 0.0);
        for e in &chosen {
            y_c += e.point.c * e.weight;
            y_t += e.point.p * e.weight;
            y_n += e.weight;
        }
        let (mut c_sum, mut n_sum) = (0.0, 0.0);
        for e in case.d_star.entries().filter(|e| !chosen.iter().any(|c| c.point.id == e.point.id)).chain(case.r2.entries()) {
            c_sum += e.point.c * e.weight;
            n_sum += e.weight;
        }
        let m_plus = m.at_rate(c_sum / n_sum);
        let direct = y_c <= r2_c + 1e-12 * r2_c.abs().max(1.0)
            && y_t <= r2_t + 1e-12 * r2_t.abs().max(1.0)
            && y_n < r2_n
            && (m_plus - n_sum).abs() / m_plus.max(n_sum) <= tol;
        let cand = CarveoutResult {
            n_y: y.volume() / n_star,
            n_r2: r2_n / n_star,
            consumer_gain: (r2_c - y.c_total()) / n_star,
            producer_slack: (r2_t - y.t_total(&t)?) / n_star,
            y,
            d_plus,
            iterations: 0,
        };
        let certified = certify(&cand, &case.d_star, &case.r2, m.as_ref(), &t, tol)?.all();
        out.subsets += 1;
        out.valid += usize::from(direct);
        out.report.check(format!("mask{mask:#x}"), "certificate", certified == direct, f64::from(u8::from(direct)), f64::from(u8::from(certified)), 0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::participation::Power;

    #[test]
    fn five_point_prefix_max() {
        let d = Distribution::from_points((1..=5).map(|c| (Point::new(format!("c{c}"), c as f64, 1.0), 1.0))).unwrap();
        let w = brute_force_w_max(&d, &Power::new(1.0, 1.0).unwrap(), &Identity).unwrap();
        assert_eq!(w.best_prefix_w, 3.5);
        assert_eq!(w.best_prefix_n, 4.0);
        assert!(w.best_subset_w >= w.best_prefix_w);
    }

    #[test]
    fn single_point_maxima() {
        let d = Distribution::from_points([(Point::new("x", 3.0, 1.0), 2.0)]).unwrap();
        let w = brute_force_w_max(&d, &Power::new(1.0, 1.0).unwrap(), &Identity).unwrap();
        assert_eq!((w.best_prefix_w, w.best_subset_w), (2.0, 2.0));
    }

    #[test]
    fn equal_values_cross_or_fill() {
        let lin = Power::new(1.0, 1.0).unwrap();
        let d = Distribution::from_points((0..6).map(|i| (Point::new(format!("e{i}"), 2.5, 1.0), 1.0))).unwrap();
        let w = brute_force_w_max(&d, &lin, &Identity).unwrap();
        assert_eq!(w.best_prefix_w, 2.5);
        let few = Distribution::from_points((0..2).map(|i| (Point::new(format!("e{i}"), 2.5, 1.0), 1.0))).unwrap();
        assert_eq!(brute_force_w_max(&few, &lin, &Identity).unwrap().best_prefix_w, 2.0);
    }

    #[test]
    fn size_cap_is_enforced() {
        let d = Distribution::from_points((0..21).map(|i| (Point::new(format!("x{i}"), 1.0, 1.0), 1.0))).unwrap();
        assert_eq!(
            brute_force_w_max(&d, &Power::new(1.0, 1.0).unwrap(), &Identity),
            Err(Error::SizeCap { max: 20, got: 21 })
        );
    }

    #[test]
    fn crosscheck_small_batch() {
        let rep = crosscheck_thresholds(500, 7, 0.1).unwrap();
        assert!(rep.passed(), "{:?}", &rep.mismatches[..rep.mismatches.len().min(5)]);
    }

    #[test]
    fn pinned_threshold_is_indeterminate() {
        let ctx = ExtensionContext { n_r2: 1.0, tp2_ratio: 0.5, kappa_r2: 1.0 / 3.0, m_r2: 4.0 / 3.0, ..Default::default() };
        assert!(classify(&ctx).unwrap().indeterminate);
    }

    #[test]
    fn searches_are_reproducible() {
        let a = find_scenario_instance(VerdictKind::UnderServed, 10, 3).unwrap().unwrap();
        let b = find_scenario_instance(VerdictKind::UnderServed, 10, 3).unwrap().unwrap();
        assert_eq!(a, b);
    }
}
