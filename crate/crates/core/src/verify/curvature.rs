//! The four-point curvature inequality and its Monte-Carlo verifier, plus the
//! two helper inequalities it rests on.
//!
//! For `ε ∈ (0, 1/2)` and `η ∈ (0, (ε/10)^10)`, any four points whose middle
//! two are `ε`-separated from the endpoints satisfy
//!
//! `d(p1,p2) + d(p2,p3) + d(p3,p4) - d(p1,p4) >=
//!     ε⁴η²/(10^14 D³) · max_i sup_{a∈seg(p_i,p_{i+1})} d(a, seg(p1,p4))⁴`
//!
//! with `D` the diameter of the four points. The verifier samples
//! configurations in three regimes (flat, vertical, far-vertical) and reports
//! violations; the statement is a theorem, so any violation signals an
//! implementation bug or a hypothesis breach.

use crate::error::{Error, Result};
use crate::line::{dist_point_to_segment, scan_max, HorizontalSegment};
use crate::metric::MetricCtx;
use crate::point::Point;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Configuration of the Monte-Carlo verifier.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvatureConfig {
    pub epsilon: f64,
    pub eta: f64,
    pub samples: u32,
    pub seed: u64,
}

impl CurvatureConfig {
    /// `η` defaults to half the admissible maximum `(ε/10)^10`.
    pub fn new(epsilon: f64, samples: u32, seed: u64) -> Result<Self> {
        let eta = 0.5 * (epsilon / 10.0).powi(10);
        CurvatureConfig {
            epsilon,
            eta,
            samples,
            seed,
        }
        .validated()
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        self.eta = eta;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Domain(format!(
                "epsilon must be in (0, 1/2), got {}",
                self.epsilon
            )));
        }
        if !(self.eta > 0.0 && self.eta < (self.epsilon / 10.0).powi(10)) {
            return Err(Error::Domain(format!(
                "eta must be in (0, (epsilon/10)^10), got {}",
                self.eta
            )));
        }
        Ok(self)
    }
}

/// Left-hand side `d(p1,p2) + d(p2,p3) + d(p3,p4) - d(p1,p4)`; nonnegative by
/// the triangle inequality whenever `η <= 16`.
pub fn curvature_lhs(ctx: &MetricCtx, p: &[Point; 4]) -> f64 {
    ctx.distance(&p[0], &p[1]) + ctx.distance(&p[1], &p[2]) + ctx.distance(&p[2], &p[3])
        - ctx.distance(&p[0], &p[3])
}

/// Separation hypothesis: the middle points keep distance `ε·d(p1,p4)` from
/// both endpoints.
pub fn separation_holds(ctx: &MetricCtx, epsilon: f64, p: &[Point; 4]) -> bool {
    let d14 = ctx.distance(&p[0], &p[3]);
    let ends = [p[0], p[3]];
    ctx.distance_to_set(&p[1], ends.iter()) >= epsilon * d14
        && ctx.distance_to_set(&p[2], ends.iter()) >= epsilon * d14
}

/// Right-hand side of the curvature inequality. The sup over each connecting
/// segment is computed by a 33-point scan with ternary refinement
/// (tolerance 1e-10), the inner distance by the segment search.
pub fn curvature_rhs(ctx: &MetricCtx, epsilon: f64, p: &[Point; 4]) -> Result<f64> {
    if !separation_holds(ctx, epsilon, p) {
        return Err(Error::Hypothesis(
            "curvature_rhs: middle points are closer than epsilon·d(p1,p4) to an endpoint".into(),
        ));
    }
    let diam = ctx.diameter(p.as_slice());
    if diam == 0.0 {
        return Ok(0.0);
    }
    let base = HorizontalSegment::between(&p[0], &p[3]);
    let mut sup4: f64 = 0.0;
    for i in 0..3 {
        let seg = HorizontalSegment::between(&p[i], &p[i + 1]);
        let (_, sup) = scan_max(
            |u| dist_point_to_segment(ctx, &seg.eval(u), &base, 1e-10),
            32,
            1e-10,
        );
        sup4 = sup4.max(sup.powi(4));
    }
    Ok(epsilon.powi(4) * ctx.eta * ctx.eta / (1e14 * diam.powi(3)) * sup4)
}

/// Cheap upper bound for the right-hand side: every point of a connecting
/// segment stays within `d(p_i, p_{i+1}) + d(p_i, p_1)` of `p_1`, so the sup
/// is at most `2 (d12 + d23 + d34)`, and `D >= d14`.
fn rhs_upper_bound(ctx: &MetricCtx, epsilon: f64, p: &[Point; 4]) -> f64 {
    let path = ctx.distance(&p[0], &p[1]) + ctx.distance(&p[1], &p[2]) + ctx.distance(&p[2], &p[3]);
    let d14 = ctx.distance(&p[0], &p[3]).max(f64::MIN_POSITIVE);
    epsilon.powi(4) * ctx.eta * ctx.eta / (1e14 * d14.powi(3)) * (2.0 * path).powi(4)
}

/// One sampled configuration kept for the report.
#[derive(Debug, Clone, Serialize)]
pub struct Prop4Witness {
    pub points: [Point; 4],
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of a Monte-Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct Prop4Report {
    pub config: CurvatureConfig,
    pub samples: u32,
    pub violations: u32,
    /// Minimum of `lhs - rhs` over fully evaluated configurations.
    pub min_slack: f64,
    /// Configurations where the exact rhs was computed (the rest were
    /// screened out by an upper bound with `lhs` far above it).
    pub full_evaluations: u32,
    pub regime_counts: [u32; 3],
    pub witnesses: Vec<Prop4Witness>,
}

impl Prop4Report {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Sample one 4-point configuration in the given regime (0 = flat,
/// 1 = vertical, 2 = far-vertical), rejection-sampled to satisfy the
/// separation hypothesis.
fn sample_config(
    ctx: &MetricCtx,
    epsilon: f64,
    regime: usize,
    rng: &mut ChaCha8Rng,
) -> Option<[Point; 4]> {
    let eta = ctx.eta;
    for _ in 0..200 {
        let t: f64 = match regime {
            // Flat: endpoints nearly co-horizontal.
            0 => rng.gen_range(-2.0..2.0),
            // Vertical: z-offset comparable to or above the horizontal gap.
            1 => {
                let cap = (10.0 / epsilon).powi(4) / eta.sqrt();
                let mag = 10f64.powf(rng.gen_range(-1.0..cap.log10()));
                mag * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
            }
            // Far-vertical: d(p1,p4) > 100/ε², deep square-root regime.
            _ => {
                let lo = (100.0 / (epsilon * epsilon)).powi(2) / eta.sqrt();
                let mag = lo * rng.gen_range(1.5..100.0);
                mag * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
            }
        };
        let p1 = Point::origin();
        let p4 = Point::new(1.0, 0.0, t);
        let mid = |rng: &mut ChaCha8Rng, frac: f64| {
            let x = frac + rng.gen_range(-0.15..0.15);
            let y = rng.gen_range(-0.3..0.3);
            let z = x * t + rng.gen_range(-0.5..0.5) * (t.abs() + 1.0);
            Point::new(x, y, z)
        };
        let p2 = mid(rng, 0.33);
        let p3 = mid(rng, 0.67);
        let pts = [p1, p2, p3, p4];
        if !separation_holds(ctx, epsilon, &pts) {
            continue;
        }
        // Exercise the isometry invariances: random rotation + translation.
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let g = Point::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let moved = pts.map(|p| g.multiply(&p.rotate_z(theta)));
        // Isometries preserve the hypothesis exactly in theory; re-check to
        // guard against rounding at extreme scales.
        if separation_holds(ctx, epsilon, &moved) {
            return Some(moved);
        }
    }
    None
}

/// Monte-Carlo verification of the curvature inequality.
///
/// Draws `samples` configurations mixing the three regimes 2:2:1, screens
/// each with a cheap rhs upper bound, and fully evaluates the sup-based rhs
/// whenever the screen is inconclusive (plus a deterministic 1-in-64
/// subsample). Violations are reported, never thrown.
pub fn verify_prop4(cfg: &CurvatureConfig) -> Result<Prop4Report> {
    let cfg = cfg.validated()?;
    let ctx = MetricCtx::new(cfg.eta)?;
    let n = cfg.samples;
    // Deterministic per-sample seeds so the work can be parallelized.
    let results: Vec<(usize, f64, Option<Prop4Witness>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1));
            let regime = match i % 5 {
                0 | 1 => 0,
                2 | 3 => 1,
                _ => 2,
            };
            let Some(pts) = sample_config(&ctx, cfg.epsilon, regime, &mut rng) else {
                return (regime, f64::INFINITY, None, false);
            };
            let lhs = curvature_lhs(&ctx, &pts);
            let scale = ctx.distance(&pts[0], &pts[3]).max(1.0);
            let screen = rhs_upper_bound(&ctx, cfg.epsilon, &pts);
            let must_evaluate = lhs < 2.0 * screen || i % 64 == 0;
            if !must_evaluate {
                return (regime, f64::INFINITY, None, false);
            }
            let rhs = curvature_rhs(&ctx, cfg.epsilon, &pts).unwrap_or(0.0);
            let slack = lhs - rhs;
            let violated = slack < -1e-12 * scale;
            (
                regime,
                slack,
                Some(Prop4Witness { points: pts, lhs, rhs }),
                violated,
            )
        })
        .collect();

    let mut report = Prop4Report {
        config: cfg,
        samples: n,
        violations: 0,
        min_slack: f64::INFINITY,
        full_evaluations: 0,
        regime_counts: [0; 3],
        witnesses: Vec::new(),
    };
    let mut all: Vec<(f64, Prop4Witness)> = Vec::new();
    for (regime, slack, witness, violated) in results {
        report.regime_counts[regime] += 1;
        if violated {
            report.violations += 1;
        }
        if let Some(w) = witness {
            report.full_evaluations += 1;
            report.min_slack = report.min_slack.min(slack);
            all.push((slack, w));
        }
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    report.witnesses = all.into_iter().take(10).map(|(_, w)| w).collect();
    Ok(report)
}

// ---------------------------------------------------------------------------
// helper inequalities
// ---------------------------------------------------------------------------

/// `(a+b)^{1/p} >= a^{1/p} + b^{1/p}/2` whenever `b >= 2^p a` (p >= 1).
pub fn check_concave_power(p: f64, a: f64, b: f64) -> Result<bool> {
    if !(p >= 1.0) || !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Hypothesis(format!(
            "check_concave_power: need p >= 1, a, b > 0 (got p={p}, a={a}, b={b})"
        )));
    }
    if b < 2f64.powf(p) * a {
        return Err(Error::Hypothesis(format!(
            "check_concave_power: b = {b} < 2^p a = {}",
            2f64.powf(p) * a
        )));
    }
    let lhs = (a + b).powf(1.0 / p);
    let rhs = a.powf(1.0 / p) + 0.5 * b.powf(1.0 / p);
    Ok(lhs - rhs >= -1e-12 * lhs.max(1.0))
}

/// `d(a,b) + d(b,c) - d(a,c) >= [(d(a,b)+d(b,c))⁴ - d(a,c)⁴] / (100 α³ d(a,c)³)`
/// whenever `max{d(a,b), d(b,c)} <= α d(a,c)` and `α >= 1/2`.
pub fn check_power_curvature(
    ctx: &MetricCtx,
    a: &Point,
    b: &Point,
    c: &Point,
    alpha: f64,
) -> Result<bool> {
    if alpha < 0.5 {
        return Err(Error::Hypothesis(format!(
            "check_power_curvature: alpha = {alpha} < 1/2"
        )));
    }
    let dab = ctx.distance(a, b);
    let dbc = ctx.distance(b, c);
    let dac = ctx.distance(a, c);
    if dac == 0.0 {
        return Err(Error::Hypothesis(
            "check_power_curvature: d(a,c) = 0".into(),
        ));
    }
    if dab.max(dbc) > alpha * dac * (1.0 + 1e-12) {
        return Err(Error::Hypothesis(format!(
            "check_power_curvature: max(d(a,b), d(b,c)) = {} > alpha d(a,c) = {}",
            dab.max(dbc),
            alpha * dac
        )));
    }
    let lhs = dab + dbc - dac;
    let rhs = ((dab + dbc).powi(4) - dac.powi(4)) / (100.0 * alpha.powi(3) * dac.powi(3));
    Ok(lhs - rhs >= -1e-12 * dac.max(1.0))
}
