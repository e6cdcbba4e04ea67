//! Ball beta numbers: the scale-normalized minimax distance from the points
//! of `K ∩ B` to the best horizontal line.
//!
//! Lines are parametrized by three numbers relative to the ball center: the
//! direction angle `θ`, the planar offset `s` perpendicular to the direction,
//! and the vertical offset `h` (translation along the line is quotiented
//! out). The optimizer is a deterministic multi-start pattern search refined
//! by per-coordinate golden sections; the independent grid oracle searches
//! the same 3-parameter box exhaustively.

use crate::error::{Error, Result};
use crate::line::{dist_point_to_line_exact, golden_min, HorizontalLine};
use crate::metric::MetricCtx;
use crate::multires::Ball;
use crate::point::Point;

/// Line through `center · (-s sinθ, s cosθ, h)` with direction `θ`.
fn line_from_params(center: &Point, theta: f64, s: f64, h: f64) -> HorizontalLine {
    let (sin, cos) = theta.sin_cos();
    let base = center.multiply(&Point::new(-s * sin, s * cos, h));
    HorizontalLine::new(base, theta)
}

fn objective(ctx: &MetricCtx, pts: &[Point], center: &Point, theta: f64, s: f64, h: f64) -> f64 {
    let line = line_from_params(center, theta, s, h);
    pts.iter()
        .map(|p| dist_point_to_line_exact(ctx, p, &line))
        .fold(0.0, f64::max)
}

/// Points of `k_points` inside the ball.
pub fn points_in_ball(ctx: &MetricCtx, k_points: &[Point], ball: &Ball) -> Vec<Point> {
    k_points
        .iter()
        .filter(|p| ball.contains(ctx, p))
        .copied()
        .collect()
}

/// Starting directions: the diameter pair of a subsample, the planar
/// least-squares direction, and their perpendiculars.
fn start_angles(ctx: &MetricCtx, pts: &[Point]) -> Vec<f64> {
    let mut angles = Vec::new();
    // Diameter pair over a bounded subsample.
    let stride = (pts.len() / 48).max(1);
    let sub: Vec<&Point> = pts.iter().step_by(stride).collect();
    let mut best = (0.0, 0usize, 0usize);
    for i in 0..sub.len() {
        for j in (i + 1)..sub.len() {
            let d = ctx.distance(sub[i], sub[j]);
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    if best.0 > 0.0 {
        let (p, q) = (sub[best.1], sub[best.2]);
        if crate::point::planar_distance(p, q) > 1e-14 {
            angles.push((q.y - p.y).atan2(q.x - p.x));
        }
    }
    // Planar least-squares direction through the centroid.
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.x).sum::<f64>() / n,
        pts.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx + syy > 0.0 {
        angles.push(0.5 * (2.0 * sxy).atan2(sxx - syy));
    }
    if angles.is_empty() {
        angles.push(0.0);
    }
    let perp: Vec<f64> = angles
        .iter()
        .map(|a| a + std::f64::consts::FRAC_PI_2)
        .collect();
    angles.extend(perp);
    angles.push(0.0);
    // Dedupe directions that coincide mod pi.
    let mut out: Vec<f64> = Vec::new();
    for a in angles {
        let canon = a.rem_euclid(std::f64::consts::PI);
        if out
            .iter()
            .all(|b| (b.rem_euclid(std::f64::consts::PI) - canon).abs() > 1e-3)
        {
            out.push(a);
        }
    }
    out
}

/// Minimax beta number of a point set over a ball: `inf_L sup d(x, L) / diam(B)`
/// with `diam(B) = 2r` and the infimum over horizontal lines.
///
/// The instance is normalized first (center translated to the origin, radius
/// dilated to 1), so the search is scale-free and dilation equivariance holds
/// by construction.
pub fn beta_ball(ctx: &MetricCtx, k_points: &[Point], ball: &Ball) -> Result<f64> {
    let raw = points_in_ball(ctx, k_points, ball);
    if raw.is_empty() {
        return Err(Error::Degenerate(
            "beta_ball: no points of K inside the ball".into(),
        ));
    }
    if raw.len() == 1 {
        return Ok(0.0);
    }
    let inv = ball.center.inverse();
    let scale = 1.0 / ball.radius;
    let pts: Vec<Point> = raw
        .iter()
        .map(|p| inv.multiply(p).dilate_unchecked(scale))
        .collect();
    let origin = Point::origin();
    let z_scale = 4.0 / ctx.eta.sqrt();
    let mut best = f64::INFINITY;
    for theta0 in start_angles(ctx, &pts) {
        let mut state = [theta0, 0.0, 0.0];
        let mut steps = [0.35, 0.5, 0.25 * z_scale];
        let mut f_cur = objective(ctx, &pts, &origin, state[0], state[1], state[2]);
        for _ in 0..42 {
            let mut improved = false;
            for c in 0..3 {
                for dir in [-1.0, 1.0] {
                    let mut cand = state;
                    cand[c] += dir * steps[c];
                    let f = objective(ctx, &pts, &origin, cand[0], cand[1], cand[2]);
                    if f < f_cur {
                        state = cand;
                        f_cur = f;
                        improved = true;
                    }
                }
            }
            if !improved {
                steps = steps.map(|s| s * 0.55);
                if steps[0] < 1e-6 {
                    break;
                }
            }
        }
        // Coordinate-descent refinement with shrinking golden sections.
        for round in 0..2 {
            let shrink = 0.1f64.powi(round);
            for c in 0..3 {
                let span = shrink
                    * match c {
                        0 => 0.1,
                        1 => 0.05,
                        _ => 0.05 * z_scale,
                    };
                let (v, f) = golden_min(
                    |x| {
                        let mut cand = state;
                        cand[c] = x;
                        objective(ctx, &pts, &origin, cand[0], cand[1], cand[2])
                    },
                    state[c] - span,
                    state[c] + span,
                    1e-7 * span.max(1e-300),
                );
                if f < f_cur {
                    state[c] = v;
                    f_cur = f;
                }
            }
        }
        best = best.min(f_cur);
    }
    Ok(best / 2.0)
}

/// Exhaustive 3-parameter grid oracle with local refinement. Independent of
/// the optimizer path; used to certify it.
pub fn beta_ball_grid_oracle(
    ctx: &MetricCtx,
    k_points: &[Point],
    ball: &Ball,
    n_grid: usize,
) -> Result<f64> {
    let pts = points_in_ball(ctx, k_points, ball);
    if pts.is_empty() {
        return Err(Error::Degenerate(
            "beta_ball_grid_oracle: no points of K inside the ball".into(),
        ));
    }
    if pts.len() == 1 {
        return Ok(0.0);
    }
    let r = ball.radius;
    let mut t_range = (0.0, std::f64::consts::PI);
    let mut s_range = (-1.3 * r, 1.3 * r);
    let z_half = 4.0 * r * r / ctx.eta.sqrt();
    let mut h_range = (-z_half, z_half);
    let mut best = f64::INFINITY;
    let mut best_at = (0.0, 0.0, 0.0);
    for round in 0..3 {
        let n = if round == 0 { n_grid } else { 13 };
        for it in 0..=n {
            let theta = t_range.0 + (t_range.1 - t_range.0) * it as f64 / n as f64;
            for is in 0..=n {
                let s = s_range.0 + (s_range.1 - s_range.0) * is as f64 / n as f64;
                for ih in 0..=n {
                    let h = h_range.0 + (h_range.1 - h_range.0) * ih as f64 / n as f64;
                    let f = objective(ctx, &pts, &ball.center, theta, s, h);
                    if f < best {
                        best = f;
                        best_at = (theta, s, h);
                    }
                }
            }
        }
        // Shrink the box around the best cell.
        let shrink = |range: (f64, f64), at: f64, n: usize| {
            let w = (range.1 - range.0) / n as f64;
            (at - 1.5 * w, at + 1.5 * w)
        };
        t_range = shrink(t_range, best_at.0, n);
        s_range = shrink(s_range, best_at.1, n);
        h_range = shrink(h_range, best_at.2, n);
    }
    Ok(best / (2.0 * r))
}
