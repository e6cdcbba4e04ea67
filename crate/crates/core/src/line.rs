//! Horizontal lines and segments, and distances to them.
//!
//! A horizontal line is `L(t) = g · δ_t(h)` with `h` a horizontal unit vector;
//! it is isometric to the real line (`d(L(t1), L(t2)) = |t1 - t2|`). The
//! horizontal segment `seg(a,b)` starts at `a` and moves in the horizontal
//! direction of `a⁻¹b`; it contains `a` but reaches `b` only when `a⁻¹b` is
//! horizontal.

use crate::metric::MetricCtx;
use crate::point::Point;
use serde::{Deserialize, Serialize};

/// Default absolute tolerance for the scalar searches in this module.
pub const DIST_TOL: f64 = 1e-10;

/// A horizontal line `L(t) = base · δ_t(cosθ, sinθ, 0)`, unit speed in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalLine {
    pub base: Point,
    pub angle: f64,
}

impl HorizontalLine {
    pub fn new(base: Point, angle: f64) -> Self {
        HorizontalLine { base, angle }
    }

    /// Unit horizontal direction of the line.
    pub fn direction(&self) -> Point {
        let (s, c) = self.angle.sin_cos();
        Point::new(c, s, 0.0)
    }

    pub fn eval(&self, t: f64) -> Point {
        self.base.multiply(&self.direction().dilate_unchecked(t))
    }
}

/// The horizontal segment `{a · δ_t(π̃(a⁻¹b)) : t ∈ [0,1]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalSegment {
    pub start: Point,
    /// Horizontal direction `π̃(start⁻¹ · end_target)`; zero for a degenerate
    /// segment.
    pub direction: Point,
    /// The point the segment aims at; not necessarily on the segment.
    pub end_target: Point,
}

impl HorizontalSegment {
    /// Segment from `a` toward `b`. Degenerate (`a = b`, or `a⁻¹b` vertical)
    /// segments are allowed and evaluate to the constant `a`.
    pub fn between(a: &Point, b: &Point) -> Self {
        HorizontalSegment {
            start: *a,
            direction: a.offset_to(b).project_pi_tilde(),
            end_target: *b,
        }
    }

    /// Evaluate at `t ∈ [0,1]`. `eval(0) = start`; `eval(1) = start·direction`,
    /// which equals `end_target` iff `start⁻¹·end_target` is horizontal.
    pub fn eval(&self, t: f64) -> Point {
        self.start.multiply(&self.direction.dilate_unchecked(t))
    }

    /// Unit-speed length of the segment (planar norm of the direction).
    pub fn len(&self) -> f64 {
        self.direction.planar_norm()
    }

    pub fn is_degenerate(&self) -> bool {
        self.len() == 0.0
    }

    /// The full horizontal line this segment lies on. `None` when degenerate.
    pub fn line(&self) -> Option<HorizontalLine> {
        if self.is_degenerate() {
            return None;
        }
        Some(HorizontalLine::new(
            self.start,
            self.direction.y.atan2(self.direction.x),
        ))
    }
}

// ---------------------------------------------------------------------------
// scalar searches
// ---------------------------------------------------------------------------

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
/// Returns `(argmin, min)`; tracks the best sampled value so a mildly
/// non-unimodal `f` still yields a sound upper bound for the minimum.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let (mut best_t, mut best_f) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..200 {
        if (b - a) <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        if f1 < best_f {
            best_t = x1;
            best_f = f1;
        }
        if f2 < best_f {
            best_t = x2;
            best_f = f2;
        }
    }
    (best_t, best_f)
}

/// Maximize over `[0,1]` by a coarse scan followed by local golden refinement
/// around the best sample. Robust when the function is only piecewise
/// unimodal; returns `(argmax, max)`.
pub fn scan_max<F: FnMut(f64) -> f64>(
    mut f: F,
    n_coarse: usize,
    tol: f64,
) -> (f64, f64) {
    let n = n_coarse.max(2);
    let mut best_i = 0usize;
    let mut best_u = 0.0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..=n {
        let u = i as f64 / n as f64;
        let v = f(u);
        if v > best_v {
            best_v = v;
            best_u = u;
            best_i = i;
        }
    }
    let lo = if best_i == 0 { 0.0 } else { (best_i - 1) as f64 / n as f64 };
    let hi = if best_i == n { 1.0 } else { (best_i + 1) as f64 / n as f64 };
    let (u, neg) = golden_min(|u| -f(u), lo, hi, tol);
    if -neg > best_v {
        (u, -neg)
    } else {
        (best_u, best_v)
    }
}

// ---------------------------------------------------------------------------
// distances
// ---------------------------------------------------------------------------

/// Distance from `p` to the full horizontal line, `inf_t d(p, L(t))`.
///
/// The map `t -> d(p, L(t))` is strictly quasi-convex (Koranyi balls are
/// convex and the line is affine). A bracket is grown around the parameter of
/// the Euclidean foot of `π(p)` on `π(L)`, doubling the width until both
/// boundary values exceed the center value, then golden-section search
/// resolves the minimum to `tol`.
pub fn dist_point_to_line(ctx: &MetricCtx, p: &Point, line: &HorizontalLine, tol: f64) -> f64 {
    let u = line.direction();
    let foot = (p.x - line.base.x) * u.x + (p.y - line.base.y) * u.y;
    let f = |t: f64| ctx.distance(p, &line.eval(t));
    let fc = f(foot);
    let mut w = (4.0 * ctx.distance(p, &line.base)).max(tol.max(1e-9));
    for _ in 0..64 {
        if f(foot - w) > fc && f(foot + w) > fc {
            break;
        }
        w *= 2.0;
    }
    golden_min(f, foot - w, foot + w, tol).1
}

/// Distance from `p` to a horizontal segment, `inf_{t∈[0,1]} d(p, seg(t))`.
/// A degenerate segment gives `d(p, start)`.
pub fn dist_point_to_segment(
    ctx: &MetricCtx,
    p: &Point,
    seg: &HorizontalSegment,
    tol: f64,
) -> f64 {
    let len = seg.len();
    if len == 0.0 {
        return ctx.distance(p, &seg.start);
    }
    // Search in the unit parameter; tolerance converted to parameter units.
    let param_tol = (tol / len).min(0.25).max(1e-14);
    golden_min(|t| ctx.distance(p, &seg.eval(t)), 0.0, 1.0, param_tol).1
}

/// Exact point-to-line distance via the quartic normal form.
///
/// `d(p, L(t))^4` is a strictly convex quartic in `t`; its derivative is a
/// monotone cubic with a single real root, solved in closed form. This is the
/// fast path used inside optimizers; it agrees with [`dist_point_to_line`] to
/// search tolerance (cross-checked in tests).
pub fn dist_point_to_line_exact(ctx: &MetricCtx, p: &Point, line: &HorizontalLine) -> f64 {
    let u = line.direction();
    let q = line.base.offset_to(p);
    quartic_min_distance(ctx.eta, &q, u.x, u.y, None)
}

/// Exact point-to-segment distance via the quartic normal form (the
/// constrained minimum of a strictly convex function is its unconstrained
/// minimizer clamped to the interval).
pub fn dist_point_to_segment_exact(ctx: &MetricCtx, p: &Point, seg: &HorizontalSegment) -> f64 {
    let len = seg.len();
    if len == 0.0 {
        return ctx.distance(p, &seg.start);
    }
    let ux = seg.direction.x / len;
    let uy = seg.direction.y / len;
    let q = seg.start.offset_to(p);
    quartic_min_distance(ctx.eta, &q, ux, uy, Some((0.0, len)))
}

/// Minimize `N(L(t)^{-1} p)` where the line passes through the origin of the
/// frame of `q = base⁻¹·p` with unit horizontal direction `(ux, uy)`.
fn quartic_min_distance(
    eta: f64,
    q: &Point,
    ux: f64,
    uy: f64,
    clamp: Option<(f64, f64)>,
) -> f64 {
    // L(t)^{-1} p = (qx - t ux, qy - t uy, qz + t (uy qx - ux qy) / 2).
    let tf = q.x * ux + q.y * uy;
    let rho_sq = (q.x * q.x + q.y * q.y - tf * tf).max(0.0);
    let g = 0.5 * (uy * q.x - ux * q.y);
    let e_tilde = q.z + g * tf;
    // d^4(s) = (s² + ρ²)² + η (ẽ + g s)², s = t - tf.
    // d/ds = 4s³ + (4ρ² + 2ηg²) s + 2ηgẽ  =>  s³ + ps + r = 0, p >= 0.
    let p3 = rho_sq + 0.5 * eta * g * g;
    let r = 0.5 * eta * g * e_tilde;
    let s_star = monotone_cubic_root(p3, r);
    let t_star = match clamp {
        Some((lo, hi)) => (tf + s_star).clamp(lo, hi),
        None => tf + s_star,
    };
    let s = t_star - tf;
    let planar = s * s + rho_sq;
    let zt = e_tilde + g * s;
    (planar * planar + eta * zt * zt).sqrt().sqrt()
}

/// Unique real root of `s³ + p s + r = 0` with `p >= 0`.
fn monotone_cubic_root(p: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    if p == 0.0 {
        return -r.cbrt();
    }
    // Cardano; the discriminant is nonnegative because p >= 0.
    let half_r = 0.5 * r;
    let disc = half_r * half_r + (p / 3.0).powi(3);
    let sq = disc.sqrt();
    (-half_r + sq).cbrt() + (-half_r - sq).cbrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn line_is_unit_speed() {
        let ctx = MetricCtx::default();
        let line = HorizontalLine::new(Point::new(0.3, -1.0, 2.0), 0.77);
        for &(t1, t2) in &[(0.0, 1.0), (-2.5, 0.3), (4.0, 4.0), (-1.0, -7.5)] {
            let d = ctx.distance(&line.eval(t1), &line.eval(t2));
            assert_abs_diff_eq!(d, (t1 - t2).abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn segment_endpoints() {
        // Vertical target: segment runs along the x-axis and misses b.
        let a = Point::origin();
        let b = Point::new(1.0, 0.0, 5.0);
        let seg = HorizontalSegment::between(&a, &b);
        assert_eq!(seg.eval(0.0), a);
        let end = seg.eval(1.0);
        assert_abs_diff_eq!(end.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(end.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(end.z, 0.0, epsilon = 1e-15);
        assert!(MetricCtx::default().distance(&end, &b) > 1.0);
    }

    #[test]
    fn segment_between_non_cohorizontal_points() {
        // a=(1,0,0), b=(0,1,0): eval(t) = (1-t, t, t/2), ends at (0,1,1/2).
        let seg = HorizontalSegment::between(&Point::new(1.0, 0.0, 0.0), &Point::new(0.0, 1.0, 0.0));
        for &t in &[0.0, 0.25, 0.5, 1.0] {
            let p = seg.eval(t);
            assert_abs_diff_eq!(p.x, 1.0 - t, epsilon = 1e-15);
            assert_abs_diff_eq!(p.y, t, epsilon = 1e-15);
            assert_abs_diff_eq!(p.z, 0.5 * t, epsilon = 1e-15);
        }
    }

    #[test]
    fn segment_reaches_cohorizontal_target() {
        let a = Point::origin();
        let b = Point::new(0.0, 1.0, 0.0);
        let seg = HorizontalSegment::between(&a, &b);
        let end = seg.eval(1.0);
        assert_abs_diff_eq!(MetricCtx::default().distance(&end, &b), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn dist_to_line_examples() {
        let ctx = MetricCtx::default();
        let x_axis = HorizontalLine::new(Point::origin(), 0.0);
        // d((0,0,1), (t,0,0)) = (t^4 + 1)^(1/4), minimized at t = 0.
        let d = dist_point_to_line(&ctx, &Point::new(0.0, 0.0, 1.0), &x_axis, DIST_TOL);
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-9);
        // Point on the line.
        let d = dist_point_to_line(&ctx, &x_axis.eval(3.7), &x_axis, DIST_TOL);
        assert!(d <= 1e-9);
    }

    #[test]
    fn dist_to_line_matches_grid_oracle() {
        // Exhaustive 1e-4 grid over t in [-2, 3] as the independent oracle.
        let ctx = MetricCtx::default();
        let p = Point::new(0.5, 0.3, 0.0);
        let x_axis = HorizontalLine::new(Point::origin(), 0.0);
        let mut oracle = f64::INFINITY;
        let mut t = -2.0;
        while t <= 3.0 {
            oracle = oracle.min(ctx.distance(&p, &x_axis.eval(t)));
            t += 1e-4;
        }
        let d = dist_point_to_line(&ctx, &p, &x_axis, DIST_TOL);
        assert_abs_diff_eq!(d, oracle, epsilon = 1e-6);
    }

    #[test]
    fn degenerate_segment_distance() {
        let ctx = MetricCtx::default();
        let a = Point::new(1.0, 2.0, 3.0);
        let seg = HorizontalSegment::between(&a, &a);
        assert!(seg.is_degenerate());
        let p = Point::new(1.5, 2.0, 3.0);
        assert_abs_diff_eq!(
            dist_point_to_segment(&ctx, &p, &seg, DIST_TOL),
            ctx.distance(&p, &a),
            epsilon = 1e-15
        );
    }

    fn arb_point() -> impl Strategy<Value = Point> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Point::new(x, y, z))
    }

    proptest! {
        #[test]
        fn pi_isometric_on_lines(
            base in arb_point(), angle in 0.0..std::f64::consts::TAU,
            t1 in -4.0..4.0f64, t2 in -4.0..4.0f64
        ) {
            let line = HorizontalLine::new(base, angle);
            let planar = crate::point::planar_distance(&line.eval(t1), &line.eval(t2));
            prop_assert!((planar - (t1 - t2).abs()).abs() <= 1e-12);
        }

        #[test]
        fn segment_lies_on_its_line(a in arb_point(), b in arb_point(), t in 0.0..1.0f64) {
            let seg = HorizontalSegment::between(&a, &b);
            prop_assume!(!seg.is_degenerate());
            let line = seg.line().unwrap();
            let ctx = MetricCtx::default();
            let on_line = line.eval(t * seg.len());
            // fp noise in z is amplified to sqrt by the metric
            prop_assert!(ctx.distance(&seg.eval(t), &on_line) <= 1e-7);
        }

        #[test]
        fn exact_line_distance_matches_search(p in arb_point(), base in arb_point(),
                                              angle in 0.0..std::f64::consts::TAU) {
            let ctx = MetricCtx::default();
            let line = HorizontalLine::new(base, angle);
            let slow = dist_point_to_line(&ctx, &p, &line, DIST_TOL);
            let fast = dist_point_to_line_exact(&ctx, &p, &line);
            prop_assert!((slow - fast).abs() <= 1e-7 * slow.max(1.0));
        }

        #[test]
        fn exact_segment_distance_matches_search(p in arb_point(), a in arb_point(), b in arb_point()) {
            let ctx = MetricCtx::default();
            let seg = HorizontalSegment::between(&a, &b);
            let slow = dist_point_to_segment(&ctx, &p, &seg, DIST_TOL);
            let fast = dist_point_to_segment_exact(&ctx, &p, &seg);
            prop_assert!((slow - fast).abs() <= 1e-7 * slow.max(1.0));
        }

        #[test]
        fn line_distance_is_quasi_convex_on_grid(p in arb_point(), base in arb_point(),
                                                 angle in 0.0..std::f64::consts::TAU) {
            // The near-minimal set on a dense grid must be one contiguous run.
            let ctx = MetricCtx::default();
            let line = HorizontalLine::new(base, angle);
            let n = 1000usize;
            let vals: Vec<f64> = (0..=n)
                .map(|i| ctx.distance(&p, &line.eval(-6.0 + 12.0 * i as f64 / n as f64)))
                .collect();
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let near: Vec<usize> = (0..=n).filter(|&i| vals[i] <= min + 1e-9).collect();
            prop_assert!(near.windows(2).all(|w| w[1] == w[0] + 1));
        }
    }
}
