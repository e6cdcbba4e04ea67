//! Flat/non-flat ball classification and the geometric lemmas about flat
//! balls: the reverse-closeness of `L_τ` to its arc, and the covering excess
//! of the two-strand set assembled inside a flat ball.

use crate::curve::{diam_over_indices, Arc, Curve};
use crate::error::{Error, Result};
use crate::filtration::{
    complete_filtration, prefiltration_from_cubes, ArcId, Filtration, Prefiltration,
};
use crate::line::{golden_min, scan_max};
use crate::metric::MetricCtx;
use crate::multires::{build_cubes, build_nets, filter_g, multiresolution, Ball, CubeForest};
use crate::point::Point;
use crate::verify::beta_ball;
use rayon::prelude::*;
use serde::Serialize;

/// Flatness class of a ball: Flat when every through-arc is `ε₀`-flatter
/// than the ball's beta number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Flatness {
    Flat,
    NonFlat,
}

/// Parameters of the classification pipeline.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassifyParams {
    pub a: f64,
    pub j: u32,
    pub kappa: f64,
    pub delta: f64,
    pub eps0: f64,
    /// Coarsest and finest net levels.
    pub min_level: i32,
    pub depth: i32,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            a: 10.0,
            j: 10,
            kappa: 3.0,
            delta: 2f64.powi(-5),
            eps0: 1e-2,
            min_level: 0,
            depth: 11,
        }
    }
}

/// Per-family machinery: cubes over the doubled balls, the prefiltration they
/// cut out, and its completion.
pub struct FamilyData {
    pub forest: CubeForest,
    pub pre: Prefiltration,
    pub filt: Filtration,
    /// For each cube: its prefiltration arcs as `(level, index)` pairs.
    pub cube_arcs: Vec<Vec<(i64, usize)>>,
}

/// Classification record of one fine ball.
#[derive(Debug, Clone, Serialize)]
pub struct GBallEntry {
    pub ball: Ball,
    pub family: usize,
    pub cube: usize,
    pub beta_gamma: f64,
    pub class: Flatness,
    /// Largest arc beta among the extended through-arcs.
    pub max_arc_beta: f64,
    pub witness: Option<ArcId>,
}

#[derive(Debug, Serialize)]
pub struct GClassification {
    pub eps0: f64,
    pub entries: Vec<GBallEntry>,
}

impl GClassification {
    pub fn count(&self, class: Flatness) -> usize {
        self.entries.iter().filter(|e| e.class == class).count()
    }
}

/// Run the full pipeline on a normalized, densely sampled curve: nets over
/// the sample points, fine balls, doubled families, cubes, filtrations, ball
/// beta numbers, and the flat/non-flat split.
///
/// Balls with `β_Γ(B) = 0` are classified Flat (both sums vanish on them).
pub fn classify_g_balls(
    ctx: &MetricCtx,
    curve: &Curve,
    params: &ClassifyParams,
) -> Result<(GClassification, Vec<FamilyData>)> {
    let k_points = curve.points();
    let nets = build_nets(ctx, k_points, params.min_level..=params.depth);
    let balls = multiresolution(&nets, params.a);
    let g_balls = filter_g(&balls);
    let doubles: Vec<Ball> = g_balls.iter().map(|b| b.enlarged(2.0)).collect();
    let families = crate::multires::split_families(ctx, &doubles, params.j, params.kappa)?;

    let mut family_data: Vec<FamilyData> = Vec::new();
    for fam in &families.families {
        let forest = build_cubes(ctx, fam, params.j, params.kappa);
        let pre = prefiltration_from_cubes(ctx, curve, &forest)?;
        let filt = complete_filtration(ctx, curve, &pre, params.delta)?;
        let mut cube_arcs: Vec<Vec<(i64, usize)>> = vec![Vec::new(); forest.len()];
        for (&level, arcs) in &pre.levels {
            for (idx, arc) in arcs.iter().enumerate() {
                cube_arcs[arc.cube].push((level, idx));
            }
        }
        family_data.push(FamilyData {
            forest,
            pre,
            filt,
            cube_arcs,
        });
    }

    let entries: Vec<GBallEntry> = g_balls
        .par_iter()
        .enumerate()
        .map(|(i, ball)| -> Result<GBallEntry> {
            let (family, cube) = families.assignments[i];
            let beta_gamma = beta_ball(ctx, k_points, ball)?;
            let fam = &family_data[family];
            let mut max_arc_beta: f64 = 0.0;
            let mut witness = None;
            for &(level, idx) in &fam.cube_arcs[cube] {
                let id = fam.filt.lambda_prime(level, idx)?;
                let arc = fam.filt.domain_arc(ctx, curve, id)?;
                let beta = if arc.diameter() > 0.0 {
                    arc.beta(ctx)?
                } else {
                    0.0
                };
                if beta > max_arc_beta {
                    max_arc_beta = beta;
                    witness = Some(id);
                }
            }
            let non_flat = beta_gamma > 0.0 && max_arc_beta >= params.eps0 * beta_gamma;
            Ok(GBallEntry {
                ball: *ball,
                family,
                cube,
                beta_gamma,
                class: if non_flat {
                    Flatness::NonFlat
                } else {
                    Flatness::Flat
                },
                max_arc_beta,
                witness: if non_flat { witness } else { None },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((
        GClassification {
            eps0: params.eps0,
            entries,
        },
        family_data,
    ))
}

// ---------------------------------------------------------------------------
// Lemma 8: the segment stays close to the arc
// ---------------------------------------------------------------------------

/// Slack of the reverse-closeness inequality
/// `sup_{x∈L_τ} d(x, τ) <= β(τ)·diam(τ)`; nonnegative when it holds.
///
/// The sup over the segment uses a 64-point scan with golden refinement; the
/// arc distance is exact over the arc's edges, so the slack is biased
/// conservatively (never reported larger than it is).
pub fn check_lemma8(ctx: &MetricCtx, arc: &Arc) -> Result<f64> {
    let diam = arc.diameter();
    if diam <= 0.0 {
        return Ok(0.0);
    }
    let beta = arc.beta(ctx)?;
    let l_tau = arc.l_tau();
    let (_, sup) = scan_max(
        |u| arc.distance_from_point(ctx, &l_tau.eval(u)),
        64,
        1e-10,
    );
    Ok(beta * diam - sup)
}

// ---------------------------------------------------------------------------
// flat-ball covering excess
// ---------------------------------------------------------------------------

/// Greedy ball cover of a point set: net points at separation `radius`, one
/// ball of that radius per net point. Every input point is covered.
pub fn cover_points_greedy(ctx: &MetricCtx, pts: &[Point], radius: f64) -> Vec<Ball> {
    let mut centers: Vec<Point> = Vec::new();
    for p in pts {
        if centers.iter().all(|c| ctx.distance(c, p) >= radius) {
            centers.push(*p);
        }
    }
    centers
        .into_iter()
        .map(|c| Ball {
            center: c,
            radius,
            level: 0,
        })
        .collect()
}

/// Covering-excess check for a flat ball.
///
/// Given a Flat entry (under the run's `ε₀`), assembles the witness set `E`
/// (a long sub-arc of the through-arc trimmed between the feet of its
/// endpoints, plus a far sub-arc of another strand), verifies the assembly
/// postconditions, then checks
/// `Σ diam(B_i) >= 4r + ε₀ β_Γ(B) diam(B)` for the given covering of `E` by
/// balls with `diam(B_i) < 10 ε₀ β_Γ(B) diam(B)`.
pub fn check_flat_excess(
    ctx: &MetricCtx,
    curve: &Curve,
    fam: &FamilyData,
    entry: &GBallEntry,
    covering: &[Ball],
    eps0: f64,
) -> Result<bool> {
    if entry.class != Flatness::Flat {
        return Err(Error::Hypothesis(
            "check_flat_excess: ball is not flat".into(),
        ));
    }
    let ball = &entry.ball;
    let (r, beta_g) = (ball.radius, entry.beta_gamma);
    if beta_g <= 0.0 {
        return Err(Error::Hypothesis(
            "check_flat_excess: beta_Gamma(B) = 0, nothing to cover".into(),
        ));
    }
    let diam_b = 2.0 * r;
    let two_b = ball.enlarged(2.0);
    let n = curve.len();

    // The through-arc: prefiltration arc of this cube whose image passes
    // closest to the ball center.
    let arcs = &fam.cube_arcs[entry.cube];
    if arcs.is_empty() {
        return Err(Error::Hypothesis(
            "check_flat_excess: cube has no through-arcs".into(),
        ));
    }
    let dist_to_center = |range: &crate::filtration::IdxRange| -> f64 {
        (range.i0..=range.i1)
            .map(|i| ctx.distance(&curve.point(i), &ball.center))
            .fold(f64::INFINITY, f64::min)
    };
    let (&(tau_level, tau_idx), _) = arcs
        .iter()
        .map(|id| {
            let range = fam.pre.levels[&id.0][id.1].range;
            (id, dist_to_center(&range))
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(id, d)| (id, d))
        .ok_or_else(|| Error::Hypothesis("no through-arc".into()))?;

    let tau_range = fam.pre.levels[&tau_level][tau_idx].range;
    let tau_prime_id = fam.filt.lambda_prime(tau_level, tau_idx)?;
    let tau_prime = fam.filt.domain_arc(ctx, curve, tau_prime_id)?;
    let beta_tp = if tau_prime.diameter() > 0.0 {
        tau_prime.beta(ctx)?
    } else {
        0.0
    };
    if beta_tp >= eps0 * beta_g {
        return Err(Error::Hypothesis(format!(
            "check_flat_excess: through-arc beta {beta_tp} >= eps0 beta_Gamma = {}",
            eps0 * beta_g
        )));
    }
    let l_tp = tau_prime.l_tau();
    let h = eps0 * beta_g * tau_prime.diameter();
    if !(h < r / 10.0) {
        return Err(Error::Hypothesis(format!(
            "check_flat_excess: h = {h} not below r/10 = {}",
            r / 10.0
        )));
    }

    // Feet of the through-arc endpoints on L_{τ'}.
    let foot = |p: &Point| -> Point {
        if l_tp.is_degenerate() {
            return l_tp.start;
        }
        let (u, _) = golden_min(|u| ctx.distance(p, &l_tp.eval(u)), 0.0, 1.0, 1e-12);
        l_tp.eval(u)
    };
    let ga = curve.point(tau_range.i0);
    let gb = curve.point(tau_range.i1);
    let x_foot = foot(&ga);
    let z_foot = foot(&gb);

    // τ̃: sub-arc of τ connecting the spheres B(x, 3h/2) and B(z, 3h/2)
    // without leaving 2B. Scan inside-2B runs for endpoints near the feet.
    let in_2b: Vec<bool> = (tau_range.i0..=tau_range.i1)
        .map(|i| two_b.contains(ctx, &curve.point(i)))
        .collect();
    let mut best_tilde: Option<(usize, usize, f64)> = None;
    let mut run_start: Option<usize> = None;
    for (off, &inside) in in_2b.iter().chain([false].iter()).enumerate() {
        if inside {
            run_start.get_or_insert(tau_range.i0 + off);
            continue;
        }
        let Some(s) = run_start.take() else { continue };
        let e = tau_range.i0 + off - 1;
        // Indices near each foot within this run.
        let near_x: Vec<usize> = (s..=e)
            .filter(|&i| ctx.distance(&curve.point(i), &x_foot) <= 1.5 * h)
            .collect();
        let near_z: Vec<usize> = (s..=e)
            .filter(|&i| ctx.distance(&curve.point(i), &z_foot) <= 1.5 * h)
            .collect();
        if near_x.is_empty() || near_z.is_empty() {
            continue;
        }
        for &ix in [near_x[0], *near_x.last().unwrap()].iter() {
            for &iz in [near_z[0], *near_z.last().unwrap()].iter() {
                let (lo, hi) = (ix.min(iz), ix.max(iz));
                let d = diam_over_indices(ctx, curve, lo, hi, &[]);
                if best_tilde.map(|(_, _, bd)| d > bd).unwrap_or(true) {
                    best_tilde = Some((lo, hi, d));
                }
            }
        }
    }
    let (t0, t1, tilde_diam) = best_tilde.ok_or_else(|| {
        Error::Hypothesis("check_flat_excess: no sub-arc connects the endpoint feet in 2B".into())
    })?;
    let slack = 3.0 * curve.max_edge_gap();
    if tilde_diam < 4.0 * r - 10.0 * h - slack {
        return Err(Error::Invariant(format!(
            "tilde arc diameter {tilde_diam} below 4r - 10h = {}",
            4.0 * r - 10.0 * h
        )));
    }

    // ξ: another arc of the cube with a point of 2B far from L_{τ'}.
    let far_threshold = 100.0 * eps0 * beta_g * tau_prime.diameter();
    let mut far_best: Option<(usize, f64)> = None; // (sample index, distance)
    for &(level, idx) in arcs {
        if (level, idx) == (tau_level, tau_idx) {
            continue;
        }
        let range = fam.pre.levels[&level][idx].range;
        for i in range.i0..=range.i1 {
            let p = curve.point(i);
            if !two_b.contains(ctx, &p) {
                continue;
            }
            let d = crate::line::dist_point_to_segment_exact(ctx, &p, &l_tp);
            if far_best.map(|(_, bd)| d > bd).unwrap_or(true) {
                far_best = Some((i, d));
            }
        }
    }
    let (x0_idx, x0_dist) = far_best.ok_or_else(|| {
        Error::Hypothesis("check_flat_excess: no second strand inside 2B".into())
    })?;
    if x0_dist <= far_threshold {
        return Err(Error::Hypothesis(format!(
            "check_flat_excess: far point only {x0_dist} from L_tau', need > {far_threshold}"
        )));
    }
    let x0 = curve.point(x0_idx);
    let margin = 20.0 * eps0 * beta_g * diam_b;
    let d_x0_tau = tau_prime.distance_from_point(ctx, &x0);
    let rho = d_x0_tau - margin;
    if rho <= 0.0 {
        return Err(Error::Hypothesis(format!(
            "check_flat_excess: far point too close to the through-arc ({d_x0_tau})"
        )));
    }
    // Grow ξ̌ around x0 inside B(x0, ρ) ∩ 2B.
    let ok = |i: usize| {
        let p = curve.point(i);
        ctx.distance(&p, &x0) <= rho && two_b.contains(ctx, &p)
    };
    let (mut c0, mut c1) = (x0_idx, x0_idx);
    while c0 > 0 && ok(c0 - 1) && x0_idx - c0 < n {
        c0 -= 1;
    }
    while ok(c1 + 1) && c1 - x0_idx < n {
        c1 += 1;
    }
    let check_diam = diam_over_indices(ctx, curve, c0, c1, &[]);
    if check_diam <= margin - slack {
        return Err(Error::Invariant(format!(
            "xi-check arc diameter {check_diam} below {margin}"
        )));
    }

    // E: samples of τ̃ and ξ̌ inside 2B.
    let mut e_points: Vec<Point> = Vec::new();
    for i in (t0..=t1).chain(c0..=c1) {
        let p = curve.point(i);
        if two_b.contains(ctx, &p) {
            e_points.push(p);
        }
    }

    // Covering hypotheses: small balls, covering E.
    let cap = 10.0 * eps0 * beta_g * diam_b;
    for b in covering {
        if 2.0 * b.radius >= cap {
            return Err(Error::Hypothesis(format!(
                "covering ball diameter {} exceeds the cap {cap}",
                2.0 * b.radius
            )));
        }
    }
    for p in &e_points {
        if !covering.iter().any(|b| {
            ctx.distance(&b.center, p) <= b.radius * (1.0 + 1e-9)
        }) {
            return Err(Error::Hypothesis(
                "covering does not cover the witness set E".into(),
            ));
        }
    }
    let total: f64 = covering.iter().map(|b| 2.0 * b.radius).sum();
    Ok(total >= 4.0 * r + eps0 * beta_g * diam_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{gen_oscillating, gen_segment, lift_planar, out_and_back};

    fn ctx() -> MetricCtx {
        MetricCtx::default()
    }

    #[test]
    fn lemma8_zero_on_straight_arc() {
        let cx = ctx();
        let curve = gen_segment(&cx, 1.0).unwrap().refined(0.01).unwrap();
        let arc = Arc::new(&cx, &curve, 0.0, 1.0).unwrap();
        let slack = check_lemma8(&cx, &arc).unwrap();
        assert!(slack.abs() <= 1e-9, "slack = {slack}");
    }

    #[test]
    fn lemma8_nonnegative_on_tent_arcs() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.2, 1, 1.0).unwrap();
        let curve = curve.refined(curve.max_edge_gap() / 20.0).unwrap();
        // Arcs across the single tent (apex angle 0.2).
        for &(a, b) in &[(0.0, 1.01), (0.1, 0.9), (0.3, 0.8)] {
            let arc = Arc::new(&cx, &curve, a, b).unwrap();
            let slack = check_lemma8(&cx, &arc).unwrap();
            assert!(
                slack >= -1e-10 * arc.diameter().max(1e-30),
                "slack = {slack} on [{a},{b}]"
            );
        }
    }

    #[test]
    fn lemma8_matches_grid_oracle_on_tent() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.2, 1, 1.0).unwrap();
        let curve = curve.refined(curve.max_edge_gap() / 20.0).unwrap();
        let arc = Arc::new(&cx, &curve, 0.05, 1.0).unwrap();
        let l_tau = arc.l_tau();
        let mut oracle_sup: f64 = 0.0;
        for i in 0..=1000 {
            let u = i as f64 / 1000.0;
            oracle_sup = oracle_sup.max(arc.distance_from_point(&cx, &l_tau.eval(u)));
        }
        let slack = check_lemma8(&cx, &arc).unwrap();
        let oracle_slack = arc.beta(&cx).unwrap() * arc.diameter() - oracle_sup;
        assert!(
            (slack - oracle_slack).abs() <= 1e-4 * oracle_slack.abs().max(1e-6),
            "{slack} vs oracle {oracle_slack}"
        );
    }

    /// Two parallel strands crossing the ball (the near one through the
    /// center), connected far outside 2B.
    fn two_strand_setup(
        cx: &MetricCtx,
    ) -> (Curve, FamilyData, GBallEntry, f64) {
        let r = 0.3;
        let g = 0.02;
        let planar = vec![
            [-6.0 * r, 0.0],
            [6.0 * r, 0.0],
            [6.0 * r, g],
            [-6.0 * r, g],
        ];
        let curve = lift_planar(cx, &out_and_back(&planar), 0.0).unwrap();
        let curve = curve.refined(1e-4).unwrap();
        // Ball centered on the near strand at the origin.
        let center = curve
            .points()
            .iter()
            .copied()
            .min_by(|p, q| {
                let dp = p.x.hypot(p.y);
                let dq = q.x.hypot(q.y);
                dp.partial_cmp(&dq).unwrap()
            })
            .unwrap();
        let ball = Ball {
            center,
            radius: r,
            level: 0,
        };
        let double = ball.enlarged(2.0);
        let forest = build_cubes(cx, &[double], 10, 3.0);
        let pre = prefiltration_from_cubes(cx, &curve, &forest).unwrap();
        let filt = complete_filtration(cx, &curve, &pre, 2f64.powi(-10)).unwrap();
        let mut cube_arcs: Vec<Vec<(i64, usize)>> = vec![Vec::new(); 1];
        for (&level, arcs) in &pre.levels {
            for (idx, _) in arcs.iter().enumerate() {
                cube_arcs[0].push((level, idx));
            }
        }
        let beta_gamma = beta_ball(cx, curve.points(), &ball).unwrap();
        let fam = FamilyData {
            forest,
            pre,
            filt,
            cube_arcs,
        };
        // The witness thresholds scale like 100 eps0 beta diam(tau');
        // crossing arcs have diam(tau') ~ 2 diam(B), so eps0 must sit below
        // ~diam(B)/(100 diam(tau')) ~ 5e-3 for the hypotheses to be
        // satisfiable. 1e-3 is inside the moderated parameter band.
        let eps0 = 1e-3;
        let mut max_arc_beta: f64 = 0.0;
        for &(level, idx) in &fam.cube_arcs[0] {
            let id = fam.filt.lambda_prime(level, idx).unwrap();
            let arc = fam.filt.domain_arc(cx, &curve, id).unwrap();
            if arc.diameter() > 0.0 {
                max_arc_beta = max_arc_beta.max(arc.beta(cx).unwrap());
            }
        }
        let entry = GBallEntry {
            ball,
            family: 0,
            cube: 0,
            beta_gamma,
            class: if max_arc_beta < eps0 * beta_gamma {
                Flatness::Flat
            } else {
                Flatness::NonFlat
            },
            max_arc_beta,
            witness: None,
        };
        (curve, fam, entry, eps0)
    }

    #[test]
    fn flat_excess_on_two_strand_ball() {
        let cx = ctx();
        let (curve, fam, entry, eps0) = two_strand_setup(&cx);
        assert_eq!(
            entry.class,
            Flatness::Flat,
            "two-strand ball should be flat: beta_gamma = {}, max_arc_beta = {}",
            entry.beta_gamma,
            entry.max_arc_beta
        );
        assert!(entry.beta_gamma > 0.01, "strands too close to resolve");

        // Cover E by next-finer balls below the diameter cap.
        let cap = 10.0 * eps0 * entry.beta_gamma * 2.0 * entry.ball.radius;
        let two_b = entry.ball.enlarged(2.0);
        let e_candidates: Vec<Point> = curve
            .points()
            .iter()
            .filter(|p| two_b.contains(&cx, p))
            .copied()
            .collect();
        let covering = cover_points_greedy(&cx, &e_candidates, 0.4 * cap);
        let ok = check_flat_excess(&cx, &curve, &fam, &entry, &covering, eps0).unwrap();
        assert!(ok, "covering excess inequality must hold");
    }

    #[test]
    fn classification_monotone_in_eps0() {
        // Raising eps0 never moves a ball from Flat to NonFlat.
        let betas = [(0.5, 0.01), (0.2, 0.15), (0.0, 0.0), (0.3, 0.29)];
        for (beta_gamma, arc_beta) in betas {
            let class = |eps0: f64| {
                if beta_gamma > 0.0 && arc_beta >= eps0 * beta_gamma {
                    Flatness::NonFlat
                } else {
                    Flatness::Flat
                }
            };
            let mut prev = class(1e-6);
            for eps0 in [1e-4, 1e-2, 0.5, 1.0] {
                let cur = class(eps0);
                assert!(
                    !(prev == Flatness::Flat && cur == Flatness::NonFlat),
                    "raising eps0 flipped Flat -> NonFlat"
                );
                prev = cur;
            }
        }
    }
}
