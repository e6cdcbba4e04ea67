//! End-to-end pipeline: curve -> nets -> balls -> beta numbers -> multiscale
//! sums, experiment presets, and report persistence.

use crate::curve::{
    gen_lifted_circle, gen_lifted_square, gen_oscillating, gen_random_walk, gen_segment,
    oscillating_planar, out_and_back, Arc, Curve,
};
use crate::error::{Error, Result};
use crate::filtration::{
    chord_sums, complete_filtration, dtau_bound_log_constant, dtau_triangle_data,
    prefiltration_from_cubes, telescoping_check, verify_extension_sizes, verify_filtration,
    IdxRange, PreArc, Prefiltration,
};
use crate::metric::MetricCtx;
use crate::multires::{build_cubes, build_nets, multiresolution, split_families, Ball};
use crate::point::Point;
use crate::verify::{
    build_martingale, check_lemma8, verify_martingale, verify_prop4, CurvatureConfig,
};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

/// Run parameters with their defaults. The reference values of the source
/// analysis (`J = 100`, `δ = 2^-10`, `ε₀ = 10^-10`, `η = 2^-1200`) are
/// recorded in [`crate::constants`]; experiment presets moderate the ones
/// that are numerically degenerate in double precision.
#[derive(Debug, Clone, Serialize)]
pub struct ParamSet {
    pub a: f64,
    pub j: u32,
    pub kappa: f64,
    pub delta: f64,
    pub eps0: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub m_param: u32,
    pub seed: u64,
    pub net_depth: i32,
    pub p_exponents: Vec<f64>,
    pub samples: u32,
    /// Curve refinement: max sample gap as a fraction of the finest ball
    /// radius.
    pub density: f64,
}

impl Default for ParamSet {
    fn default() -> Self {
        ParamSet {
            a: 10.0,
            j: 100,
            kappa: 3.0,
            delta: 2f64.powi(-10),
            eps0: 1e-2,
            eta: 1.0,
            epsilon: 0.05,
            m_param: 3,
            seed: 0,
            net_depth: 8,
            p_exponents: vec![2.0, 4.0],
            samples: 100_000,
            density: 1e-2,
        }
    }
}

impl ParamSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 2.0) {
            return Err(Error::Domain(format!("A must exceed 2, got {}", self.a)));
        }
        if self.j < 10 {
            return Err(Error::Domain(format!("J must be >= 10, got {}", self.j)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain(format!(
                "delta must be in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 16.0) {
            return Err(Error::Domain(format!(
                "eta must be in (0, 16], got {}",
                self.eta
            )));
        }
        if self.net_depth < 1 {
            return Err(Error::Domain("net_depth must be >= 1".into()));
        }
        Ok(())
    }

    pub fn ctx(&self) -> Result<MetricCtx> {
        MetricCtx::new(self.eta)
    }
}

/// Fixed-format float with 12 significant digits ('.' decimal separator).
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.11e}")
}

// ---------------------------------------------------------------------------
// beta sums
// ---------------------------------------------------------------------------

/// Per-scale row of a report: cumulative sums over all levels up to `n`.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleRow {
    pub n: i32,
    pub balls: usize,
    /// Cumulative `Σ β^p diam(B)` per requested exponent.
    pub sums: Vec<f64>,
}

/// Multiscale beta-sum report.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub label: String,
    pub params: ParamSet,
    /// Dilation applied to normalize the curve to diameter 1.
    pub normalization: f64,
    /// Length of the normalized parametrization.
    pub length: f64,
    pub rows: Vec<ScaleRow>,
    pub totals: Vec<f64>,
    /// `Σ β⁴ diam / ℓ(γ)` when exponent 4 is requested.
    pub ratio_p4: Option<f64>,
    pub unix_time: u64,
}

impl Report {
    fn exponent_index(&self, p: f64) -> Option<usize> {
        self.params
            .p_exponents
            .iter()
            .position(|&q| (q - p).abs() < 1e-12)
    }

    pub fn total_for(&self, p: f64) -> Option<f64> {
        self.exponent_index(p).map(|i| self.totals[i])
    }

    /// CSV with header `n,balls,sum_p2,sum_p4,length_ratio_p4`.
    pub fn to_csv(&self) -> Result<String> {
        let (i2, i4) = match (self.exponent_index(2.0), self.exponent_index(4.0)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Domain(
                    "CSV schema requires exponents 2 and 4".into(),
                ))
            }
        };
        let mut out = String::from("n,balls,sum_p2,sum_p4,length_ratio_p4\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.n,
                row.balls,
                fmt_sig(row.sums[i2]),
                fmt_sig(row.sums[i4]),
                fmt_sig(row.sums[i4] / self.length)
            ));
        }
        Ok(out)
    }
}

/// Planar hash grid over curve samples for ball queries (the projection is
/// 1-Lipschitz, so a Koranyi ball lies inside its planar box).
struct SampleLocator {
    cell: f64,
    map: HashMap<(i64, i64), Vec<usize>>,
}

impl SampleLocator {
    fn build(curve: &Curve, cell: f64) -> Self {
        let cell = cell.max(1e-12);
        let mut map: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in curve.points().iter().enumerate() {
            let key = ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
            map.entry(key).or_default().push(i);
        }
        SampleLocator { cell, map }
    }

    /// Sorted sample indices within the planar box of radius `r` around `c`.
    fn in_box(&self, c: &Point, r: f64) -> Vec<usize> {
        let k0 = ((c.x - r) / self.cell).floor() as i64;
        let k1 = ((c.x + r) / self.cell).floor() as i64;
        let l0 = ((c.y - r) / self.cell).floor() as i64;
        let l1 = ((c.y + r) / self.cell).floor() as i64;
        let mut out = Vec::new();
        for k in k0..=k1 {
            for l in l0..=l1 {
                if let Some(v) = self.map.get(&(k, l)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Sup distance of the points to the horizontal line through their diameter
/// pair (over a bounded subsample). None when no planar direction exists.
fn chord_line_sup(ctx: &MetricCtx, pts: &[Point]) -> Option<f64> {
    let stride = (pts.len() / 48).max(1);
    let sub: Vec<&Point> = pts.iter().step_by(stride).collect();
    let mut best = (0.0f64, 0usize, 0usize);
    for i in 0..sub.len() {
        for j in (i + 1)..sub.len() {
            let d = ctx.distance(sub[i], sub[j]);
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    let (p, q) = (sub[best.1], sub[best.2]);
    if crate::point::planar_distance(p, q) <= 1e-14 {
        return None;
    }
    let line = crate::line::HorizontalLine::new(*p, (q.y - p.y).atan2(q.x - p.x));
    Some(
        pts.iter()
            .map(|x| crate::line::dist_point_to_line_exact(ctx, x, &line))
            .fold(0.0, f64::max),
    )
}

/// Compute the multiscale beta sums of a curve: normalize to unit diameter,
/// refine to the density contract, build nested nets and the ball family, and
/// accumulate `Σ β_Γ(B)^p diam(B)` per level for every requested exponent.
pub fn beta_sum(ctx: &MetricCtx, curve: &Curve, params: &ParamSet, label: &str) -> Result<Report> {
    params.validate()?;
    let (normalized, lambda) = curve.normalized_to_unit_diameter(ctx)?;
    let finest_r = params.a * 2f64.powi(-params.net_depth);
    let gap = (params.density * finest_r).max(1e-9);
    let refined = if normalized.max_edge_gap() > gap {
        normalized.refined(gap)?
    } else {
        normalized
    };
    let k_points = refined.points();
    let nets = build_nets(ctx, k_points, 0..=params.net_depth);
    let balls = multiresolution(&nets, params.a);
    let locator = SampleLocator::build(&refined, (8.0 * gap).max(finest_r * 0.5));

    // Per-ball beta with curve points subsampled to ~4e-3 of the ball radius.
    // Balls whose points hug a single chord line are resolved by that line
    // directly (an upper bound for the minimax, within the subsampling
    // error); the optimizer only runs where the curve actually bends.
    const CHORD_SCREEN: f64 = 5e-4;
    let betas: Vec<(i32, f64, f64)> = balls
        .par_iter()
        .map(|ball| -> Result<(i32, f64, f64)> {
            let candidates = locator.in_box(&ball.center, ball.radius);
            let stride = ((4e-3 * ball.radius / gap).floor() as usize).max(1);
            let mut pts: Vec<Point> = Vec::new();
            for (j, &i) in candidates.iter().enumerate() {
                if j % stride == 0 || j + 1 == candidates.len() {
                    let p = refined.point(i);
                    if ball.contains(ctx, &p) {
                        pts.push(p);
                    }
                }
            }
            if pts.len() < 2 {
                return Ok((ball.level, 0.0, 2.0 * ball.radius));
            }
            let beta = match chord_line_sup(ctx, &pts) {
                Some(sup) if sup <= CHORD_SCREEN * 2.0 * ball.radius => {
                    sup / (2.0 * ball.radius)
                }
                _ => crate::verify::beta_ball(ctx, &pts, ball)?,
            };
            Ok((ball.level, beta, 2.0 * ball.radius))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_level: BTreeMap<i32, (usize, Vec<f64>)> = BTreeMap::new();
    for (level, beta, diam) in betas {
        let entry = per_level
            .entry(level)
            .or_insert_with(|| (0, vec![0.0; params.p_exponents.len()]));
        entry.0 += 1;
        for (k, &p) in params.p_exponents.iter().enumerate() {
            entry.1[k] += beta.powf(p) * diam;
        }
    }
    let mut rows = Vec::new();
    let mut cum = vec![0.0; params.p_exponents.len()];
    for (n, (count, sums)) in per_level {
        for (k, s) in sums.iter().enumerate() {
            cum[k] += s;
        }
        rows.push(ScaleRow {
            n,
            balls: count,
            sums: cum.clone(),
        });
    }
    let length = refined.length(ctx);
    let ratio_p4 = params
        .p_exponents
        .iter()
        .position(|&q| (q - 4.0).abs() < 1e-12)
        .map(|i| cum[i] / length);
    Ok(Report {
        schema: "heis-tsp/1",
        label: label.to_string(),
        params: params.clone(),
        normalization: lambda,
        length,
        totals: cum,
        rows,
        ratio_p4,
        unix_time: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

// ---------------------------------------------------------------------------
// generator corpus
// ---------------------------------------------------------------------------

/// The shipped generator corpus for trend and stability experiments.
pub fn generator_corpus(ctx: &MetricCtx, seed: u64) -> Result<Vec<(String, Curve)>> {
    Ok(vec![
        ("segment".into(), gen_segment(ctx, 1.0)?),
        ("circle".into(), gen_lifted_circle(ctx, 256, 0.5)?),
        ("square".into(), gen_lifted_square(ctx, 1.0, 16)?),
        ("walk".into(), gen_random_walk(ctx, 40, 0.1, seed)?),
        (
            "oscillating".into(),
            gen_oscillating(ctx, 0.6, 0.5, 4, 1.0)?,
        ),
    ])
}

/// Continuous (out-and-back) corpus used by filtration audits: arcs of these
/// curves never cross a parametrization jump.
pub fn audit_corpus(ctx: &MetricCtx, seed: u64) -> Result<Vec<(String, Curve)>> {
    let circle_planar: Vec<[f64; 2]> = (0..128)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / 128.0;
            [0.5 * a.cos(), 0.5 * a.sin()]
        })
        .collect();
    Ok(vec![
        (
            "circle-oab".into(),
            crate::curve::lift_planar(ctx, &out_and_back(&circle_planar), 0.0)?,
        ),
        ("walk".into(), gen_random_walk(ctx, 30, 0.1, seed)?),
        (
            "oscillating".into(),
            gen_oscillating(ctx, 0.6, 0.5, 3, 1.0)?,
        ),
    ])
}

/// Depth schedule for the dichotomy runs: the finest net level tracks the
/// stage-`s` tent scale (`~2^-s` after normalization, against ball radius
/// `A 2^-n`), plus margin so the last stage is fully captured.
pub fn stage_depth(stage: u32, a: f64) -> i32 {
    (stage as i32) + (a.log2().ceil() as i32) + 1
}

// ---------------------------------------------------------------------------
// filtration audit
// ---------------------------------------------------------------------------

/// Summary of a filtration audit over one curve.
#[derive(Debug, Clone, Serialize)]
pub struct FiltrationAudit {
    pub label: String,
    pub families: usize,
    pub arcs: usize,
    pub property_failures: u32,
    pub chord_sum_violations: u32,
    pub lemma8_min_slack_ratio: f64,
    pub telescoping_violations: u32,
    pub dtau_bound_violations: u32,
    pub arcs_with_children: usize,
}

/// Build the cube/prefiltration/filtration machinery over a curve and audit
/// every constructed instance: prefiltration hypotheses, the six filtration
/// properties, chord sums, the reverse-closeness slack of every arc, the
/// telescoping bound, and the modified curvature bound.
///
/// Alongside the pipeline filtrations (single-level at desk-scale depths), a
/// synthetic two-level prefiltration per curve exercises parent/child checks.
pub fn audit_filtrations(
    ctx: &MetricCtx,
    curve: &Curve,
    params: &ParamSet,
    label: &str,
) -> Result<FiltrationAudit> {
    params.validate()?;
    let (normalized, _) = curve.normalized_to_unit_diameter(ctx)?;
    let finest_r = params.a * 2f64.powi(-params.net_depth);
    let gap = (params.density * finest_r).max(1e-9);
    let refined = if normalized.max_edge_gap() > gap {
        normalized.refined(gap)?
    } else {
        normalized
    };
    let k_points = refined.points();
    let nets = build_nets(ctx, k_points, 0..=params.net_depth);
    let g_balls = crate::multires::filter_g(&multiresolution(&nets, params.a));
    let doubles: Vec<Ball> = g_balls.iter().map(|b| b.enlarged(2.0)).collect();
    let families = split_families(ctx, &doubles, params.j, params.kappa)?;

    let mut audit = FiltrationAudit {
        label: label.to_string(),
        families: 0,
        arcs: 0,
        property_failures: 0,
        chord_sum_violations: 0,
        lemma8_min_slack_ratio: f64::INFINITY,
        telescoping_violations: 0,
        dtau_bound_violations: 0,
        arcs_with_children: 0,
    };
    let tol = 3.0 * refined.max_edge_gap();
    let length = refined.length(ctx);
    let instances = build_filtration_instances(ctx, &refined, &families.families, params)?;

    let log_c = dtau_bound_log_constant(params.j, ctx.eta);
    for (pre, filt) in &instances {
        audit.families += 1;
        if pre.verify(&refined, tol).is_err() {
            audit.property_failures += 1;
        }
        if verify_filtration(&refined, pre, filt, tol).is_err() {
            audit.property_failures += 1;
        }
        if verify_extension_sizes(ctx, &refined, pre, filt, tol).is_err() {
            audit.property_failures += 1;
        }
        for (_, sum) in chord_sums(ctx, &refined, filt) {
            if sum > length + 1e-9 {
                audit.chord_sum_violations += 1;
            }
        }
        let ids = filt.ids();
        audit.arcs += ids.len();
        let results: Vec<(f64, bool, bool, bool)> = ids
            .par_iter()
            .map(|&id| {
                let arc = filt.domain_arc(ctx, &refined, id).unwrap();
                let slack_ratio = if arc.diameter() > 0.0 {
                    check_lemma8(ctx, &arc).unwrap_or(f64::NEG_INFINITY)
                        / arc.diameter().max(1e-300)
                } else {
                    0.0
                };
                let has_children = !filt.children(&refined, id, 1).is_empty();
                let telescoping_ok = match telescoping_check(ctx, &refined, filt, id) {
                    Ok((lhs, rhs)) => lhs <= rhs + 1e-9,
                    Err(_) => false,
                };
                let dtau_ok = match dtau_triangle_data(ctx, &refined, filt, id) {
                    None => true,
                    Some((lhs, excess)) => {
                        if lhs <= 0.0 {
                            true
                        } else if excess <= 0.0 {
                            // Zero excess forces d_tau ~ 0 up to sampling noise.
                            lhs.powf(0.25) <= tol * 10.0
                        } else {
                            lhs.ln() <= log_c + excess.ln() + 1e-9
                        }
                    }
                };
                (slack_ratio, has_children, telescoping_ok, dtau_ok)
            })
            .collect();
        for (slack_ratio, has_children, telescoping_ok, dtau_ok) in results {
            audit.lemma8_min_slack_ratio = audit.lemma8_min_slack_ratio.min(slack_ratio);
            if has_children {
                audit.arcs_with_children += 1;
            }
            if !telescoping_ok {
                audit.telescoping_violations += 1;
            }
            if !dtau_ok {
                audit.dtau_bound_violations += 1;
            }
        }
    }
    Ok(audit)
}

/// Cube/prefiltration/filtration instances over the given families, plus one
/// synthetic two-level instance for parent/child structure at desk scale.
pub fn build_filtration_instances(
    ctx: &MetricCtx,
    refined: &Curve,
    families: &[Vec<Ball>],
    params: &ParamSet,
) -> Result<Vec<(Prefiltration, crate::filtration::Filtration)>> {
    let mut instances = Vec::new();
    for fam in families {
        let forest = build_cubes(ctx, fam, params.j, params.kappa);
        let pre = prefiltration_from_cubes(ctx, refined, &forest)?;
        if pre.is_empty() {
            continue;
        }
        let filt = complete_filtration(ctx, refined, &pre, params.delta)?;
        instances.push((pre, filt));
    }
    if let Some(two_level) = synthetic_two_level(ctx, refined, params.j) {
        let filt = complete_filtration(ctx, refined, &two_level, params.delta)?;
        instances.push((two_level, filt));
    }
    Ok(instances)
}

/// Normalize and refine a curve, then build the fine-ball families over it.
/// Returns the refined curve and the double-ball families.
pub fn prepare_families(
    ctx: &MetricCtx,
    curve: &Curve,
    params: &ParamSet,
) -> Result<(Curve, Vec<Vec<Ball>>)> {
    let (normalized, _) = curve.normalized_to_unit_diameter(ctx)?;
    let finest_r = params.a * 2f64.powi(-params.net_depth);
    let gap = (params.density * finest_r).max(1e-9);
    let refined = if normalized.max_edge_gap() > gap {
        normalized.refined(gap)?
    } else {
        normalized
    };
    let nets = build_nets(ctx, refined.points(), 0..=params.net_depth);
    let g_balls = crate::multires::filter_g(&multiresolution(&nets, params.a));
    let doubles: Vec<Ball> = g_balls.iter().map(|b| b.enlarged(2.0)).collect();
    let families = split_families(ctx, &doubles, params.j, params.kappa)?;
    Ok((refined, families.families))
}

/// JSON export of a filtration: one record per arc with its level, domain
/// interval, and parent id.
pub fn filtration_json(curve: &Curve, filt: &crate::filtration::Filtration) -> serde_json::Value {
    let arcs: Vec<serde_json::Value> = filt
        .levels
        .iter()
        .flat_map(|(&level, arcs)| {
            arcs.iter().enumerate().map(move |(idx, a)| {
                serde_json::json!({
                    "level": level,
                    "id": idx,
                    "a": curve.param(a.range.i0),
                    "b": curve.param(a.range.i1),
                    "diam": a.diam,
                    "parent": a.parent,
                })
            })
        })
        .collect();
    serde_json::json!({
        "schema": "heis-tsp/1",
        "j": filt.j,
        "delta": filt.delta,
        "l_param": filt.l_param,
        "arcs": arcs,
    })
}

/// A two-level prefiltration (levels 0 and 1, scales `L` and `L 2^{-J}`)
/// grown directly on the curve; None when the curve is too small.
fn synthetic_two_level(ctx: &MetricCtx, curve: &Curve, j: u32) -> Option<Prefiltration> {
    let n = curve.len();
    let l_param = 0.4 * curve.diameter(ctx);
    let grow = |i0: usize, lo: f64, cap: usize| -> Option<usize> {
        let mut i1 = i0 + 1;
        while i1 < cap {
            if crate::curve::diam_over_indices(ctx, curve, i0, i1, &[]) >= lo {
                return Some(i1);
            }
            i1 += ((i1 - i0) / 2).max(1);
        }
        None
    };
    let top0 = n / 16;
    let top1 = grow(top0, l_param, top0 + n - 1)?;
    let mut levels = BTreeMap::new();
    levels.insert(
        0i64,
        vec![PreArc {
            range: IdxRange::new(top0, top1),
            diam: crate::curve::diam_over_indices(ctx, curve, top0, top1, &[]),
            cube: 0,
        }],
    );
    let lo1 = l_param * 2f64.powi(-(j as i32));
    let mut kids = Vec::new();
    let span = top1 - top0;
    let mut start = top0 + span / 10;
    for c in 0..4 {
        let end = grow(start, lo1, top1)?;
        if end >= top1 {
            break;
        }
        kids.push(PreArc {
            range: IdxRange::new(start, end),
            diam: crate::curve::diam_over_indices(ctx, curve, start, end, &[]),
            cube: c,
        });
        start = end + span / 8;
        if start >= top1 {
            break;
        }
    }
    if kids.len() < 2 {
        return None;
    }
    levels.insert(1, kids);
    Some(Prefiltration {
        levels,
        j,
        l_param,
    })
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

/// Output format for experiment files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Generator and output options for experiments.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOpts {
    pub q: f64,
    pub c: f64,
    pub stages: Vec<u32>,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for ExperimentOpts {
    fn default() -> Self {
        ExperimentOpts {
            q: 0.6,
            c: 0.5,
            stages: vec![2, 4, 6, 8],
            out_dir: PathBuf::from("."),
            format: OutputFormat::Csv,
        }
    }
}

/// One row of the dichotomy experiment.
#[derive(Debug, Clone, Serialize)]
pub struct DichotomyRow {
    pub stage: u32,
    pub depth: i32,
    pub length: f64,
    pub one_way_length: f64,
    pub sum_p2: f64,
    pub sum_p4: f64,
}

/// Run the oscillating-family dichotomy: per stage, generate the curve at the
/// stage-tracked depth and accumulate both exponent sums.
pub fn run_dichotomy(params: &ParamSet, opts: &ExperimentOpts) -> Result<Vec<DichotomyRow>> {
    let ctx = params.ctx()?;
    let mut rows = Vec::new();
    for &stage in &opts.stages {
        let curve = gen_oscillating(&ctx, opts.q, opts.c, stage, 1.0)?;
        let mut p = params.clone();
        p.net_depth = stage_depth(stage, params.a);
        p.p_exponents = vec![2.0, 4.0];
        let report = beta_sum(&ctx, &curve, &p, &format!("oscillating-{stage}"))?;
        let one_way =
            crate::curve::planar_polyline_length(&oscillating_planar(opts.q, opts.c, stage, 1.0));
        rows.push(DichotomyRow {
            stage,
            depth: p.net_depth,
            length: report.length,
            one_way_length: one_way * report.normalization,
            sum_p2: report.total_for(2.0).unwrap(),
            sum_p4: report.total_for(4.0).unwrap(),
        });
    }
    Ok(rows)
}

pub fn dichotomy_csv(rows: &[DichotomyRow]) -> String {
    let mut out = String::from("stage,length,sum_p2,sum_p4\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.stage,
            fmt_sig(r.length),
            fmt_sig(r.sum_p2),
            fmt_sig(r.sum_p4)
        ));
    }
    out
}

/// One row of the main-bound stability experiment.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub label: String,
    pub depth: i32,
    pub length: f64,
    pub sum_p4: f64,
    pub ratio_p4: f64,
}

/// Ratios `Σ β⁴ diam / ℓ` over the corpus at two depths.
pub fn run_mainbound(params: &ParamSet, depths: [i32; 2]) -> Result<Vec<StabilityRow>> {
    let ctx = params.ctx()?;
    let mut rows = Vec::new();
    for (label, curve) in generator_corpus(&ctx, params.seed)? {
        for depth in depths {
            let mut p = params.clone();
            p.net_depth = depth;
            p.p_exponents = vec![2.0, 4.0];
            let report = beta_sum(&ctx, &curve, &p, &label)?;
            rows.push(StabilityRow {
                label: label.clone(),
                depth,
                length: report.length,
                sum_p4: report.total_for(4.0).unwrap(),
                ratio_p4: report.ratio_p4.unwrap(),
            });
        }
    }
    Ok(rows)
}

pub fn stability_csv(rows: &[StabilityRow]) -> String {
    let mut out = String::from("curve,depth,length,sum_p4,ratio_p4\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.label,
            r.depth,
            fmt_sig(r.length),
            fmt_sig(r.sum_p4),
            fmt_sig(r.ratio_p4)
        ));
    }
    out
}

/// Martingale experiment summary for one corpus curve and one `M`.
#[derive(Debug, Clone, Serialize)]
pub struct MartingaleRun {
    pub label: String,
    pub m_param: u32,
    pub report: crate::verify::MartingaleReport,
}

/// Build and verify martingale trees over the audit corpus. Trees are built
/// per split family over nested multiresolution balls (a small `J` keeps the
/// trees multi-level at desk scale).
pub fn run_martingale(params: &ParamSet, m_values: &[u32]) -> Result<Vec<MartingaleRun>> {
    let ctx = params.ctx()?;
    let mut out = Vec::new();
    for (label, curve) in audit_corpus(&ctx, params.seed)? {
        let (normalized, _) = curve.normalized_to_unit_diameter(&ctx)?;
        let depth = params.net_depth.min(8);
        let refined = normalized.refined(2f64.powi(-depth) * 0.05)?;
        let nets = build_nets(&ctx, refined.points(), 2..=depth);
        let balls = multiresolution(&nets, 0.75);
        // Small-J split so families span several levels and nest.
        let families = split_families(&ctx, &balls, 2, params.kappa)?;
        let fam = families
            .families
            .iter()
            .max_by_key(|f| f.len())
            .cloned()
            .unwrap_or_default();
        if fam.is_empty() {
            continue;
        }
        let forest = build_cubes(&ctx, &fam, 2, params.kappa);
        for &m in m_values {
            let tree = build_martingale(&ctx, &refined, forest.clone(), m, params.eps0)?;
            let report = verify_martingale(&ctx, &refined, &tree)?;
            out.push(MartingaleRun {
                label: label.clone(),
                m_param: m,
                report,
            });
        }
    }
    Ok(out)
}

/// Aggregate lemma checks: the two numeric inequalities on random admissible
/// inputs plus the reverse-closeness slack over oscillating-curve arcs.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub concave_power_checked: u32,
    pub concave_power_violations: u32,
    pub power_curvature_checked: u32,
    pub power_curvature_violations: u32,
    pub lemma8_arcs: usize,
    pub lemma8_min_slack_ratio: f64,
}

pub fn run_lemmas(params: &ParamSet) -> Result<LemmaReport> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let ctx = params.ctx()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
    let mut report = LemmaReport {
        concave_power_checked: 0,
        concave_power_violations: 0,
        power_curvature_checked: 0,
        power_curvature_violations: 0,
        lemma8_arcs: 0,
        lemma8_min_slack_ratio: f64::INFINITY,
    };
    for _ in 0..10_000 {
        let p = rng.gen_range(1.0..6.0);
        let a = 10f64.powf(rng.gen_range(-3.0..2.0));
        let b = 2f64.powf(p) * a * rng.gen_range(1.0..100.0);
        report.concave_power_checked += 1;
        if !crate::verify::check_concave_power(p, a, b)? {
            report.concave_power_violations += 1;
        }
    }
    while report.power_curvature_checked < 10_000 {
        let a = Point::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let c = Point::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let b = Point::new(
            0.5 * (a.x + c.x) + rng.gen_range(-0.3..0.3),
            0.5 * (a.y + c.y) + rng.gen_range(-0.3..0.3),
            0.5 * (a.z + c.z) + rng.gen_range(-0.3..0.3),
        );
        let dac = ctx.distance(&a, &c);
        if dac < 1e-3 {
            continue;
        }
        let alpha = (ctx.distance(&a, &b).max(ctx.distance(&b, &c)) / dac).max(0.5);
        if alpha > 1.5 {
            continue;
        }
        report.power_curvature_checked += 1;
        if !crate::verify::check_power_curvature(&ctx, &a, &b, &c, alpha)? {
            report.power_curvature_violations += 1;
        }
    }
    // Reverse-closeness slack over arcs of one oscillating curve.
    let curve = gen_oscillating(&ctx, 0.6, 0.5, 3, 1.0)?;
    let curve = curve.refined(curve.max_edge_gap() / 8.0)?;
    let t = curve.circumference();
    for i in 0..64 {
        let a = t * i as f64 / 64.0;
        let arc = Arc::new(&ctx, &curve, a, a + t * 0.11)?;
        if arc.diameter() <= 0.0 {
            continue;
        }
        let slack = check_lemma8(&ctx, &arc)?;
        report.lemma8_arcs += 1;
        report.lemma8_min_slack_ratio = report.lemma8_min_slack_ratio.min(slack / arc.diameter());
    }
    Ok(report)
}

/// Experiment dispatcher: writes report files plus a reproducibility manifest
/// and returns the written paths together with the number of verification
/// violations found (exit-code semantics are the CLI's concern).
pub fn run_experiment(
    name: &str,
    params: &ParamSet,
    opts: &ExperimentOpts,
) -> Result<(Vec<PathBuf>, u32)> {
    params.validate()?;
    std::fs::create_dir_all(&opts.out_dir)?;
    let mut written = Vec::new();
    let mut violations = 0u32;

    match name {
        "dichotomy" => {
            let rows = run_dichotomy(params, opts)?;
            written.push(write_report(
                &opts.out_dir,
                name,
                opts.format,
                &dichotomy_csv(&rows),
                &rows,
            )?);
        }
        "mainbound" => {
            let rows = run_mainbound(params, [6, 8])?;
            written.push(write_report(
                &opts.out_dir,
                name,
                opts.format,
                &stability_csv(&rows),
                &rows,
            )?);
        }
        "prop4" => {
            let cfg = CurvatureConfig::new(params.epsilon, params.samples, params.seed)?;
            let report = verify_prop4(&cfg)?;
            violations += report.violations;
            let path = opts.out_dir.join(format!("{name}.json"));
            write_file(&path, &serde_json::to_string_pretty(&report).unwrap())?;
            written.push(path);
        }
        "lemmas" => {
            let report = run_lemmas(params)?;
            violations += report.concave_power_violations + report.power_curvature_violations;
            if report.lemma8_min_slack_ratio < -1e-10 {
                violations += 1;
            }
            let path = opts.out_dir.join(format!("{name}.json"));
            write_file(&path, &serde_json::to_string_pretty(&report).unwrap())?;
            written.push(path);
        }
        "martingale" => {
            let runs = run_martingale(params, &[1, params.m_param, 5])?;
            violations += runs.iter().map(|r| r.report.violations).sum::<u32>();
            let path = opts.out_dir.join(format!("{name}.json"));
            write_file(&path, &serde_json::to_string_pretty(&runs).unwrap())?;
            written.push(path);
        }
        "filtration-audit" => {
            let ctx = params.ctx()?;
            let mut audits = Vec::new();
            for (label, curve) in audit_corpus(&ctx, params.seed)? {
                let audit = audit_filtrations(&ctx, &curve, params, &label)?;
                violations += audit.property_failures
                    + audit.chord_sum_violations
                    + audit.telescoping_violations
                    + audit.dtau_bound_violations;
                if audit.lemma8_min_slack_ratio < -1e-10 {
                    violations += 1;
                }
                audits.push(audit);
            }
            let path = opts.out_dir.join(format!("{name}.json"));
            write_file(&path, &serde_json::to_string_pretty(&audits).unwrap())?;
            written.push(path);
        }
        other => return Err(Error::UnknownExperiment(other.to_string())),
    }

    let manifest_path = opts.out_dir.join(format!("{name}.manifest.json"));
    let manifest = serde_json::json!({
        "schema": "heis-tsp/1",
        "experiment": name,
        "params": params,
        "opts": opts,
        "violations": violations,
    });
    write_file(
        &manifest_path,
        &serde_json::to_string_pretty(&manifest).unwrap(),
    )?;
    written.push(manifest_path);
    Ok((written, violations))
}

fn write_report<T: Serialize>(
    dir: &Path,
    name: &str,
    format: OutputFormat,
    csv: &str,
    rows: &T,
) -> Result<PathBuf> {
    match format {
        OutputFormat::Csv => {
            let path = dir.join(format!("{name}.csv"));
            write_file(&path, csv)?;
            Ok(path)
        }
        OutputFormat::Json => {
            let path = dir.join(format!("{name}.json"));
            write_file(&path, &serde_json::to_string_pretty(rows).unwrap())?;
            Ok(path)
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn beta_sum_zero_on_segment() {
        let params = ParamSet {
            net_depth: 6,
            ..Default::default()
        };
        let ctx = params.ctx().unwrap();
        let curve = gen_segment(&ctx, 1.0).unwrap();
        let report = beta_sum(&ctx, &curve, &params, "segment").unwrap();
        assert!(report.total_for(2.0).unwrap() <= 1e-10);
        assert!(report.total_for(4.0).unwrap() <= 1e-15);
    }

    #[test]
    fn beta_sum_rows_are_monotone() {
        let params = ParamSet {
            net_depth: 5,
            ..Default::default()
        };
        let ctx = params.ctx().unwrap();
        let curve = gen_lifted_circle(&ctx, 64, 0.5).unwrap();
        let report = beta_sum(&ctx, &curve, &params, "circle").unwrap();
        for w in report.rows.windows(2) {
            for k in 0..report.params.p_exponents.len() {
                assert!(w[1].sums[k] >= w[0].sums[k] - 1e-15);
            }
        }
        assert!(report.total_for(4.0).unwrap() > 0.0);
        assert!(report.length > 0.0);
    }

    #[test]
    fn beta_sum_is_deterministic() {
        let params = ParamSet {
            net_depth: 5,
            ..Default::default()
        };
        let ctx = params.ctx().unwrap();
        let curve = gen_random_walk(&ctx, 20, 0.1, 42).unwrap();
        let r1 = beta_sum(&ctx, &curve, &params, "walk").unwrap();
        let r2 = beta_sum(&ctx, &curve, &params, "walk").unwrap();
        assert_eq!(r1.to_csv().unwrap(), r2.to_csv().unwrap());
    }

    #[test]
    fn csv_schema_header() {
        let params = ParamSet {
            net_depth: 4,
            ..Default::default()
        };
        let ctx = params.ctx().unwrap();
        let curve = gen_segment(&ctx, 1.0).unwrap();
        let report = beta_sum(&ctx, &curve, &params, "segment").unwrap();
        let csv = report.to_csv().unwrap();
        assert!(csv.starts_with("n,balls,sum_p2,sum_p4,length_ratio_p4\n"));
    }

    #[test]
    fn unknown_experiment_is_an_error() {
        let params = ParamSet::default();
        let opts = ExperimentOpts {
            out_dir: std::env::temp_dir().join("heis-unknown"),
            ..Default::default()
        };
        assert!(matches!(
            run_experiment("nope", &params, &opts),
            Err(Error::UnknownExperiment(_))
        ));
    }

    #[test]
    fn stage_depth_tracks_stages() {
        assert_eq!(stage_depth(2, 10.0), 7);
        assert_eq!(stage_depth(8, 10.0), 13);
        assert!(stage_depth(4, 10.0) < stage_depth(6, 10.0));
    }

    #[test]
    fn fmt_sig_has_12_digits_and_dot() {
        let s = fmt_sig(1.0 / 3.0);
        assert!(s.contains('.'));
        assert!(s.starts_with("3.33333333333"));
    }

    #[test]
    fn normalization_is_recorded() {
        let params = ParamSet {
            net_depth: 4,
            ..Default::default()
        };
        let ctx = params.ctx().unwrap();
        let curve = gen_segment(&ctx, 4.0).unwrap();
        let report = beta_sum(&ctx, &curve, &params, "long-segment").unwrap();
        assert_abs_diff_eq!(report.normalization, 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(report.length, 2.0, epsilon = 1e-6);
    }
}
