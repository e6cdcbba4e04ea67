//! The Koranyi norm and metric.
//!
//! `N(x,y,z) = ((x²+y²)² + η z²)^(1/4)` and `d(g,h) = N(g⁻¹h)`. The distance
//! is left-invariant for every `η > 0` and satisfies the triangle inequality
//! for `η ∈ (0,16]`. Dilations scale it exactly: `d(δ_λ a, δ_λ b) = λ d(a,b)`.

use crate::error::{Error, Result};
use crate::point::Point;
use serde::{Deserialize, Serialize};

/// Metric context carrying the Koranyi parameter `η`. All distances in the
/// crate flow through a `MetricCtx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricCtx {
    pub eta: f64,
}

impl Default for MetricCtx {
    /// `η = 1`: the default for all metric work at double precision.
    fn default() -> Self {
        MetricCtx { eta: 1.0 }
    }
}

impl MetricCtx {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::Domain(format!("eta must be positive, got {eta}")));
        }
        Ok(MetricCtx { eta })
    }

    /// True if this `η` is in the range where the triangle inequality holds.
    pub fn triangle_inequality_holds(&self) -> bool {
        self.eta <= crate::constants::ETA_TRIANGLE_MAX
    }

    /// Koranyi norm of a point.
    pub fn norm(&self, p: &Point) -> f64 {
        let planar_sq = p.x * p.x + p.y * p.y;
        (planar_sq * planar_sq + self.eta * p.z * p.z).sqrt().sqrt()
    }

    /// Koranyi distance `d(a,b) = N(a⁻¹b)`.
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        self.norm(&a.offset_to(b))
    }

    /// Distance from a point to a finite set; infinity on an empty set.
    pub fn distance_to_set<'a, I>(&self, p: &Point, set: I) -> f64
    where
        I: IntoIterator<Item = &'a Point>,
    {
        set.into_iter()
            .map(|q| self.distance(p, q))
            .fold(f64::INFINITY, f64::min)
    }

    /// Diameter of a finite point set (max pairwise distance).
    pub fn diameter(&self, pts: &[Point]) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                best = best.max(self.distance(&pts[i], &pts[j]));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn norm_examples() {
        let ctx = MetricCtx::default();
        // ((9+16)^2)^(1/4) = 5 for any eta since z = 0.
        assert_abs_diff_eq!(ctx.norm(&Point::new(3.0, 4.0, 0.0)), 5.0, epsilon = 1e-12);
        let ctx7 = MetricCtx::new(7.0).unwrap();
        assert_abs_diff_eq!(ctx7.norm(&Point::new(3.0, 4.0, 0.0)), 5.0, epsilon = 1e-12);
        // N(0,0,4) with eta = 1 is (16)^(1/4) = 2.
        assert_abs_diff_eq!(ctx.norm(&Point::new(0.0, 0.0, 4.0)), 2.0, epsilon = 1e-12);
        // N(1,0,t) = (1 + eta t^2)^(1/4).
        for &(eta, t) in &[(1.0, 0.7), (0.25, 3.0), (16.0, 0.01)] {
            let c = MetricCtx::new(eta).unwrap();
            assert_abs_diff_eq!(
                c.norm(&Point::new(1.0, 0.0, t)),
                (1.0 + eta * t * t).powf(0.25),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn distance_examples() {
        let ctx = MetricCtx::default();
        let o = Point::origin();
        assert_abs_diff_eq!(
            ctx.distance(&o, &Point::new(1.0, 0.0, 0.0)),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ctx.distance(&o, &Point::new(0.0, 0.0, 1.0)),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_norm_only_at_identity() {
        let ctx = MetricCtx::default();
        assert_eq!(ctx.norm(&Point::origin()), 0.0);
        assert!(ctx.norm(&Point::new(0.0, 0.0, 1e-8)) > 0.0);
        assert!(ctx.norm(&Point::new(1e-8, 0.0, 0.0)) > 0.0);
    }

    fn arb_point() -> impl Strategy<Value = Point> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y, z)| Point::new(x, y, z))
    }

    proptest! {
        #[test]
        fn pi_tilde_never_increases_norm(p in arb_point()) {
            let ctx = MetricCtx::default();
            prop_assert!(ctx.norm(&p.project_pi_tilde()) <= ctx.norm(&p) + 1e-15);
        }

        #[test]
        fn distance_is_symmetric(a in arb_point(), b in arb_point()) {
            let ctx = MetricCtx::default();
            prop_assert!((ctx.distance(&a, &b) - ctx.distance(&b, &a)).abs() <= 1e-12);
        }

        #[test]
        fn left_invariance(g in arb_point(), a in arb_point(), b in arb_point()) {
            let ctx = MetricCtx::default();
            let d = ctx.distance(&a, &b);
            let dg = ctx.distance(&g.multiply(&a), &g.multiply(&b));
            prop_assert!((d - dg).abs() <= 1e-12 * d.max(1.0));
        }

        #[test]
        fn dilation_homogeneity(a in arb_point(), b in arb_point(), lam in 0.01..10.0f64) {
            let ctx = MetricCtx::default();
            let d = ctx.distance(&a, &b);
            let dl = ctx.distance(&a.dilate_unchecked(lam), &b.dilate_unchecked(lam));
            prop_assert!((lam * d - dl).abs() <= 1e-12 * (lam * d).max(1.0));
        }

        #[test]
        fn rotation_isometry(a in arb_point(), b in arb_point(), th in -7.0..7.0f64) {
            let ctx = MetricCtx::new(0.37).unwrap();
            let d = ctx.distance(&a, &b);
            let dr = ctx.distance(&a.rotate_z(th), &b.rotate_z(th));
            prop_assert!((d - dr).abs() <= 1e-12 * d.max(1.0));
        }

        #[test]
        fn triangle_inequality_for_small_eta(
            a in arb_point(), b in arb_point(), c in arb_point(), eta in 0.01..16.0f64
        ) {
            let ctx = MetricCtx::new(eta).unwrap();
            let lhs = ctx.distance(&a, &c);
            let rhs = ctx.distance(&a, &b) + ctx.distance(&b, &c);
            prop_assert!(lhs <= rhs + 1e-12 * rhs.max(1.0));
        }

        #[test]
        fn pi_is_one_lipschitz(a in arb_point(), b in arb_point()) {
            let ctx = MetricCtx::default();
            let planar = crate::point::planar_distance(&a, &b);
            prop_assert!(planar <= ctx.distance(&a, &b) + 1e-12);
        }
    }
}
