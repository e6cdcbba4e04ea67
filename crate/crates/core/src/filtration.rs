//! Arc prefiltrations cut out by cube forests, and their completion into
//! filtrations that cover the whole domain circle.
//!
//! Arcs here are index ranges over a fixed curve's samples (the endpoints of
//! every constructed arc sit on sample parameters). A prefiltration level `k`
//! holds arcs with image diameter in `[L 2^{-kJ}, L 2^{-kJ+3})`, pairwise
//! disjoint within a level and nested across levels. Completion fills the
//! gaps: small gaps merge into a neighboring arc, mid-sized gaps become arcs,
//! oversized gaps are partitioned into bracket-sized pieces whose cuts avoid
//! splitting deeper prefiltration arcs.

use crate::curve::{diam_over_indices, Arc, Curve};
use crate::error::{Error, Result};
use crate::line::{dist_point_to_segment_exact, scan_max, HorizontalSegment};
use crate::metric::MetricCtx;
use crate::multires::{Ball, CubeForest};
use serde::Serialize;
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// circular index ranges
// ---------------------------------------------------------------------------

/// Inclusive range of (unrolled) sample indices on a closed curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IdxRange {
    pub i0: usize,
    pub i1: usize,
}

impl IdxRange {
    pub fn new(i0: usize, i1: usize) -> Self {
        debug_assert!(i1 >= i0);
        IdxRange { i0, i1 }
    }

    /// Number of edges covered.
    pub fn edges(&self) -> usize {
        self.i1 - self.i0
    }

    /// Canonical copy with `i0` reduced mod `n`.
    pub fn canonical(&self, n: usize) -> IdxRange {
        let s = self.i0 % n;
        IdxRange::new(s, s + self.edges())
    }

    /// Offset of `other`'s start from ours, walking forward around the circle.
    fn fwd(&self, other: &IdxRange, n: usize) -> usize {
        (other.i0 as i64 - self.i0 as i64).rem_euclid(n as i64) as usize
    }

    /// Closed ranges share at least one sample index.
    pub fn indices_intersect(&self, other: &IdxRange, n: usize) -> bool {
        self.fwd(other, n) <= self.edges() || other.fwd(self, n) <= other.edges()
    }

    /// Half-open edge ranges overlap (shared endpoints do not count).
    pub fn edges_intersect(&self, other: &IdxRange, n: usize) -> bool {
        (self.edges() > 0 && self.fwd(other, n) < self.edges())
            || (other.edges() > 0 && other.fwd(self, n) < other.edges())
    }

    /// Every index of `other` lies inside `self`.
    pub fn contains(&self, other: &IdxRange, n: usize) -> bool {
        self.fwd(other, n) + other.edges() <= self.edges()
    }
}

// ---------------------------------------------------------------------------
// lambda arcs
// ---------------------------------------------------------------------------

/// Connected subarcs of the curve through cube `cube_id` whose image meets
/// `inner_ball`: the connected components of the sample set inside the cube,
/// filtered to those touching the ball.
///
/// Requires curve samples dense at the ball's scale.
pub fn lambda_arcs(
    ctx: &MetricCtx,
    curve: &Curve,
    forest: &CubeForest,
    cube_id: usize,
    inner_ball: &Ball,
) -> Result<Vec<IdxRange>> {
    let n = curve.len();
    let mut inside = vec![false; n];
    let mut any_outside = false;
    for (i, flag) in inside.iter_mut().enumerate() {
        *flag = forest.contains_point(ctx, cube_id, &curve.point(i));
        any_outside |= !*flag;
    }
    if !any_outside {
        return Err(Error::Invariant(format!(
            "lambda_arcs: the whole curve lies inside cube {cube_id}"
        )));
    }
    // Walk components circularly, starting just after an outside sample.
    let start = (0..n).find(|&i| !inside[i]).unwrap();
    let mut components: Vec<IdxRange> = Vec::new();
    let mut run_start: Option<usize> = None;
    for off in 1..=n {
        let i = start + off;
        if inside[i % n] {
            run_start.get_or_insert(i);
        } else if let Some(s) = run_start.take() {
            components.push(IdxRange::new(s, i - 1));
        }
    }
    let out = components
        .into_iter()
        .filter(|r| (r.i0..=r.i1).any(|i| inner_ball.contains(ctx, &curve.point(i))))
        .map(|r| r.canonical(n))
        .collect();
    Ok(out)
}

// ---------------------------------------------------------------------------
// prefiltration
// ---------------------------------------------------------------------------

/// One arc of a prefiltration level.
#[derive(Debug, Clone, Serialize)]
pub struct PreArc {
    pub range: IdxRange,
    pub diam: f64,
    /// Cube that generated this arc (diagnostics only).
    pub cube: usize,
}

/// Level-indexed arc family satisfying the prefiltration hypotheses.
#[derive(Debug, Clone)]
pub struct Prefiltration {
    /// Level `k` -> arcs sorted by canonical start index.
    pub levels: BTreeMap<i64, Vec<PreArc>>,
    pub j: u32,
    /// Diameter scale: level `k` arcs have `diam ∈ [L 2^{-kJ}, L 2^{-kJ+3})`.
    pub l_param: f64,
}

impl Prefiltration {
    pub fn is_empty(&self) -> bool {
        self.levels.values().all(|v| v.is_empty())
    }

    pub fn arc_count(&self) -> usize {
        self.levels.values().map(|v| v.len()).sum()
    }

    /// Diameter bracket `[L 2^{-kJ}, L 2^{-kJ+3})` of a level.
    pub fn bracket(&self, k: i64) -> (f64, f64) {
        let base = self.l_param * 2f64.powi((-k * self.j as i64) as i32);
        (base, base * 8.0)
    }

    /// Hypothesis checks (i)-(iii) with `tol` slack on diameters.
    pub fn verify(&self, curve: &Curve, tol: f64) -> Result<()> {
        let n = curve.len();
        for (&k, arcs) in &self.levels {
            let (lo, hi) = self.bracket(k);
            for (ai, a) in arcs.iter().enumerate() {
                if a.diam < lo - tol || a.diam >= hi + tol {
                    return Err(Error::Invariant(format!(
                        "prefiltration level {k} arc {ai} (cube {}): diam {} outside [{lo}, {hi})",
                        a.cube, a.diam
                    )));
                }
                for (bi, b) in arcs.iter().enumerate().skip(ai + 1) {
                    if a.range.indices_intersect(&b.range, n) {
                        return Err(Error::Invariant(format!(
                            "prefiltration level {k}: arcs {ai} (cube {}) and {bi} (cube {}) overlap",
                            a.cube, b.cube
                        )));
                    }
                }
            }
        }
        let levels: Vec<i64> = self.levels.keys().copied().collect();
        for (i, &ka) in levels.iter().enumerate() {
            for &kb in &levels[i + 1..] {
                for a in &self.levels[&ka] {
                    for b in &self.levels[&kb] {
                        if b.range.indices_intersect(&a.range, n) && !a.range.contains(&b.range, n)
                        {
                            return Err(Error::Invariant(format!(
                                "prefiltration: level {kb} arc intersects level {ka} arc without containment"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Build the prefiltration of one cube family. The forest is built over the
/// doubled balls `2B`; the inner ball of each cube is the same center at half
/// the radius. Levels come from the net levels (`k = (level - level_min)/J`)
/// and `L` is the inner radius at the top level.
pub fn prefiltration_from_cubes(
    ctx: &MetricCtx,
    curve: &Curve,
    forest: &CubeForest,
) -> Result<Prefiltration> {
    let j = forest.j;
    let mut levels: BTreeMap<i64, Vec<PreArc>> = BTreeMap::new();
    if forest.is_empty() {
        return Ok(Prefiltration {
            levels,
            j,
            l_param: 1.0,
        });
    }
    let n0 = forest.balls.iter().map(|b| b.level).min().unwrap();
    let l_param = forest
        .balls
        .iter()
        .find(|b| b.level == n0)
        .map(|b| 0.5 * b.radius)
        .unwrap();
    let n = curve.len();
    for cube in 0..forest.len() {
        let ball = &forest.balls[cube];
        if (ball.level - n0) % j as i32 != 0 {
            return Err(Error::Invariant(format!(
                "cube {cube}: level {} is not congruent to {n0} mod J",
                ball.level
            )));
        }
        let k = ((ball.level - n0) / j as i32) as i64;
        let inner = Ball {
            center: ball.center,
            radius: 0.5 * ball.radius,
            level: ball.level,
        };
        let inner_r = inner.radius;
        for range in lambda_arcs(ctx, curve, forest, cube, &inner)? {
            let diam = diam_over_indices(ctx, curve, range.i0, range.i1, &[]);
            // Postcondition r(B) <= diam(τ) <= 5 r(B), with sampling slack.
            let slack = 3.0 * curve.max_edge_gap();
            if diam < inner_r - slack || diam > 5.0 * inner_r + slack {
                return Err(Error::Invariant(format!(
                    "lambda arc of cube {cube} has diam {diam}, outside [r, 5r] = [{inner_r}, {}] \
                     (insufficient sampling density?)",
                    5.0 * inner_r
                )));
            }
            levels
                .entry(k)
                .or_default()
                .push(PreArc { range, diam, cube });
        }
    }
    for arcs in levels.values_mut() {
        arcs.sort_by_key(|a| a.range.canonical(n).i0);
        arcs.dedup_by(|a, b| a.range == b.range);
    }
    Ok(Prefiltration { levels, j, l_param })
}

// ---------------------------------------------------------------------------
// filtration
// ---------------------------------------------------------------------------

/// One arc of a filtration level.
#[derive(Debug, Clone, Serialize)]
pub struct FiltArc {
    pub range: IdxRange,
    pub diam: f64,
    /// Prefiltration arc this one extends, as an index into the same level.
    pub origin: Option<usize>,
    /// Parent index in the previous level (None at the top level).
    pub parent: Option<usize>,
}

/// A filtration of the domain circle: every level covers the circle, arcs
/// have unique parents, and diameters sit in `[δL 2^{-nJ}, L 2^{-nJ+4})`.
#[derive(Debug, Clone)]
pub struct Filtration {
    pub levels: BTreeMap<i64, Vec<FiltArc>>,
    pub j: u32,
    pub delta: f64,
    pub l_param: f64,
}

/// Identifier of a filtration arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ArcId {
    pub level: i64,
    pub idx: usize,
}

impl Filtration {
    pub fn arc(&self, id: ArcId) -> &FiltArc {
        &self.levels[&id.level][id.idx]
    }

    pub fn arc_count(&self) -> usize {
        self.levels.values().map(|v| v.len()).sum()
    }

    pub fn level_ids(&self) -> Vec<i64> {
        self.levels.keys().copied().collect()
    }

    pub fn ids(&self) -> Vec<ArcId> {
        self.levels
            .iter()
            .flat_map(|(&level, arcs)| (0..arcs.len()).map(move |idx| ArcId { level, idx }))
            .collect()
    }

    /// Diameter bracket `[δL 2^{-nJ}, L 2^{-nJ+4})` of a level.
    pub fn bracket(&self, k: i64) -> (f64, f64) {
        let base = self.l_param * 2f64.powi((-k * self.j as i64) as i32);
        (self.delta * base, base * 16.0)
    }

    /// Children `F_{τ,k}`: arcs `k` levels down whose domain lies inside `τ`.
    pub fn children(&self, curve: &Curve, id: ArcId, k: i64) -> Vec<ArcId> {
        let n = curve.len();
        let target = id.level + k;
        let range = self.arc(id).range;
        match self.levels.get(&target) {
            None => Vec::new(),
            Some(arcs) => arcs
                .iter()
                .enumerate()
                .filter(|(_, a)| range.contains(&a.range, n) || range.edges() >= n)
                .map(|(idx, _)| ArcId { level: target, idx })
                .collect(),
        }
    }

    /// The `Arc` view of a filtration arc.
    pub fn domain_arc<'c>(&self, ctx: &MetricCtx, curve: &'c Curve, id: ArcId) -> Result<Arc<'c>> {
        let r = self.arc(id).range;
        Arc::from_index_range(ctx, curve, r.i0, r.i1)
    }

    /// `L_τ` of a filtration arc.
    pub fn l_tau(&self, curve: &Curve, id: ArcId) -> HorizontalSegment {
        let r = self.arc(id).range;
        HorizontalSegment::between(&curve.point(r.i0), &curve.point(r.i1))
    }

    /// `d_τ`: the maximal deviation of the children's segments from `L_τ`,
    /// `max_{τ'∈F_{τ,1}} sup_{z∈L_{τ'}} d(z, L_τ)`. The sup over each child
    /// segment uses 33 parameter samples with local refinement. Returns 0 for
    /// arcs with no children.
    pub fn d_tau(&self, ctx: &MetricCtx, curve: &Curve, id: ArcId) -> f64 {
        let l_parent = self.l_tau(curve, id);
        let mut best: f64 = 0.0;
        for child in self.children(curve, id, 1) {
            let seg = self.l_tau(curve, child);
            let (_, sup) = scan_max(
                |u| dist_point_to_segment_exact(ctx, &seg.eval(u), &l_parent),
                32,
                1e-10,
            );
            best = best.max(sup);
        }
        best
    }

    /// The unique same-level filtration arc extending a prefiltration arc.
    pub fn lambda_prime(&self, pre_level: i64, pre_idx: usize) -> Result<ArcId> {
        let arcs = self
            .levels
            .get(&pre_level)
            .ok_or_else(|| Error::Lookup(format!("no filtration level {pre_level}")))?;
        arcs.iter()
            .position(|a| a.origin == Some(pre_idx))
            .map(|idx| ArcId {
                level: pre_level,
                idx,
            })
            .ok_or_else(|| {
                Error::Lookup(format!(
                    "prefiltration arc {pre_idx} at level {pre_level} has no extension"
                ))
            })
    }
}

/// State used while completing one level.
struct LevelBuilder<'a> {
    curve: &'a Curve,
    ctx: &'a MetricCtx,
    /// Deeper prefiltration arcs that a cut must not split.
    forbidden: Vec<IdxRange>,
}

impl LevelBuilder<'_> {
    fn diam(&self, i0: usize, i1: usize) -> f64 {
        diam_over_indices(self.ctx, self.curve, i0, i1, &[])
    }

    /// Cheap test for `diam([i0,i1]) < thr`: upper bound by accumulated edge
    /// lengths, lower bound by the chord, exact hierarchical diameter only
    /// when the bounds straddle the threshold.
    fn diam_lt(&self, i0: usize, i1: usize, thr: f64) -> bool {
        let ub = (i1 - i0) as f64 * self.curve.max_edge_gap();
        if ub < thr {
            return true;
        }
        let chord = self
            .ctx
            .distance(&self.curve.point(i0), &self.curve.point(i1));
        if chord >= thr {
            return false;
        }
        self.diam(i0, i1) < thr
    }

    /// Move a cut index out of the interior of any forbidden range. Prefers
    /// the forbidden range's start (cut before it) when that keeps the cut
    /// past `lo_bound`, else uses its end.
    fn snap(&self, cut: usize, lo_bound: usize, n: usize) -> usize {
        for f in &self.forbidden {
            let fc = f.canonical(n);
            for wrap in 0..=(cut / n) as i64 {
                let f0 = fc.i0 as i64 + wrap * n as i64;
                let f1 = f0 + fc.edges() as i64;
                let c = cut as i64;
                if c > f0 && c < f1 {
                    return if f0 as usize > lo_bound {
                        f0 as usize
                    } else {
                        f1 as usize
                    };
                }
            }
        }
        cut
    }

    /// Partition an oversized gap `[g0, g1]` into pieces with image diameter
    /// in `[lo, hi)`, targeting `4·lo`, with cuts snapped off deeper arcs.
    fn partition(&self, g0: usize, g1: usize, lo: f64, hi: f64) -> Result<Vec<IdxRange>> {
        let n = self.curve.len();
        let target = (4.0 * lo).min(0.5 * hi);
        let mut cuts: Vec<usize> = vec![g0];
        let mut c = g0;
        loop {
            if self.diam_lt(c, g1, hi) {
                if cuts.len() > 1 && self.diam_lt(c, g1, lo) {
                    // Remainder too small: merge into the previous piece.
                    cuts.pop();
                }
                cuts.push(g1);
                break;
            }
            // Largest j with diam([c, j]) < target: exponential growth to
            // bracket the boundary, then bisection (diameter is monotone in j).
            let mut step = 1usize;
            while c + step < g1 && self.diam_lt(c, c + step, target) {
                step *= 2;
            }
            let (mut a, mut b) = (c + step / 2, (c + step).min(g1));
            if a <= c {
                a = c + 1;
            }
            while a < b {
                let mid = (a + b + 1) / 2;
                if self.diam_lt(c, mid, target) {
                    a = mid;
                } else {
                    b = mid - 1;
                }
            }
            let mut j = self.snap(a, c, n);
            if j <= c {
                j = c + 1;
            }
            if j >= g1 {
                cuts.push(g1);
                break;
            }
            let piece = self.diam(c, j);
            if piece < lo {
                return Err(Error::Invariant(format!(
                    "gap partition piece [{c},{j}] has diam {piece} < {lo}; sampling too coarse"
                )));
            }
            cuts.push(j);
            c = j;
        }
        Ok(cuts.windows(2).map(|w| IdxRange::new(w[0], w[1])).collect())
    }
}

/// Complete a prefiltration into a filtration (gap merging, gap promotion,
/// gap partitioning), level by level. Small gaps merge into the arc on their
/// earlier-in-flow side when both neighbors are arcs.
pub fn complete_filtration(
    ctx: &MetricCtx,
    curve: &Curve,
    pre: &Prefiltration,
    delta: f64,
) -> Result<Filtration> {
    if pre.j < 10 {
        return Err(Error::Domain("complete_filtration: J must be >= 10".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(
            "complete_filtration: delta must be in (0,1)".into(),
        ));
    }
    let n = curve.len();
    let mut filt = Filtration {
        levels: BTreeMap::new(),
        j: pre.j,
        delta,
        l_param: pre.l_param,
    };
    let nonempty: Vec<i64> = pre
        .levels
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(&k, _)| k)
        .collect();
    let Some(&k_min) = nonempty.first() else {
        return Ok(filt);
    };
    let k_max = *nonempty.last().unwrap();

    let mut prev_level: Vec<FiltArc> = Vec::new();
    for k in k_min..=k_max {
        let empty = Vec::new();
        let arcs0: Vec<&PreArc> = pre.levels.get(&k).unwrap_or(&empty).iter().collect();
        let (lo_small, hi) = filt.bracket(k); // [δ L 2^{-kJ}, 16 L 2^{-kJ})
        let lo_piece = lo_small / delta; // partition pieces start at L 2^{-kJ}

        let forbidden: Vec<IdxRange> = pre
            .levels
            .range((k + 1)..)
            .flat_map(|(_, v)| v.iter().map(|a| a.range))
            .collect();
        let builder = LevelBuilder {
            curve,
            ctx,
            forbidden,
        };

        let mut boundary: Vec<usize> = prev_level
            .iter()
            .flat_map(|a| [a.range.i0 % n, a.range.i1 % n])
            .collect();
        boundary.sort_unstable();
        boundary.dedup();

        // Circular sequence of original arcs and gap pieces (gaps cut at
        // parent boundaries).
        #[derive(Debug)]
        struct Work {
            range: IdxRange,
            origin: Option<usize>,
            is_gap: bool,
        }
        let mut work: Vec<Work> = Vec::new();
        if arcs0.is_empty() {
            if prev_level.is_empty() {
                return Err(Error::Invariant(format!(
                    "level {k}: empty prefiltration level with no parent cover"
                )));
            }
            for a in &prev_level {
                work.push(Work {
                    range: a.range,
                    origin: None,
                    is_gap: true,
                });
            }
        } else {
            let m = arcs0.len();
            for (ai, a) in arcs0.iter().enumerate() {
                let a_can = a.range.canonical(n);
                work.push(Work {
                    range: a_can,
                    origin: Some(ai),
                    is_gap: false,
                });
                let next = arcs0[(ai + 1) % m].range.canonical(n);
                let gap_len = if m == 1 {
                    n - a_can.edges()
                } else {
                    (next.i0 as i64 - (a_can.i1 % n) as i64).rem_euclid(n as i64) as usize
                };
                if gap_len == 0 {
                    continue;
                }
                let gap_start = a_can.i1;
                let mut cuts: Vec<usize> = vec![gap_start];
                for off in 1..gap_len {
                    if boundary.binary_search(&((gap_start + off) % n)).is_ok() {
                        cuts.push(gap_start + off);
                    }
                }
                cuts.push(gap_start + gap_len);
                for w in cuts.windows(2) {
                    work.push(Work {
                        range: IdxRange::new(w[0], w[1]),
                        origin: None,
                        is_gap: true,
                    });
                }
            }
        }

        // Merge small gaps into a neighboring original arc (left preferred).
        let small = |w: &Work| w.is_gap && builder.diam_lt(w.range.i0, w.range.i1, lo_small);
        let mut merged: Vec<Work> = Vec::new();
        let mut pending: Option<IdxRange> = None;
        for w in work {
            if small(&w) {
                // Try to merge into the arc just before it.
                if let Some(prev) = merged.last_mut() {
                    if prev.origin.is_some() && prev.range.i1 % n == w.range.i0 % n {
                        prev.range = IdxRange::new(prev.range.i0, prev.range.i1 + w.range.edges());
                        continue;
                    }
                }
                if pending.is_some() {
                    return Err(Error::Invariant(format!(
                        "level {k}: two consecutive unmerged small gaps"
                    )));
                }
                pending = Some(w.range);
                continue;
            }
            let mut w = w;
            if let Some(g) = pending.take() {
                if w.origin.is_none() {
                    return Err(Error::Invariant(format!(
                        "level {k}: small gap borders no prefiltration arc"
                    )));
                }
                // Extend the following arc backward over the gap.
                w.range = IdxRange::new(g.i0, g.i0 + g.edges() + w.range.edges());
            }
            merged.push(w);
        }
        if let Some(g) = pending.take() {
            let first_arc = merged.iter_mut().find(|w| w.origin.is_some());
            match first_arc {
                Some(w) if w.range.i0 % n == g.i1 % n => {
                    w.range = IdxRange::new(g.i0, g.i0 + g.edges() + w.range.edges());
                }
                _ => {
                    return Err(Error::Invariant(format!(
                        "level {k}: wrap-around small gap is not adjacent to an arc"
                    )))
                }
            }
        }

        // Promote or partition the remaining gaps; assemble the level.
        let mut new_arcs: Vec<FiltArc> = Vec::new();
        for w in merged {
            if w.is_gap && !builder.diam_lt(w.range.i0, w.range.i1, hi) {
                for piece in builder.partition(w.range.i0, w.range.i1, lo_piece, hi)? {
                    new_arcs.push(FiltArc {
                        range: piece.canonical(n),
                        diam: builder.diam(piece.i0, piece.i1),
                        origin: None,
                        parent: None,
                    });
                }
            } else {
                new_arcs.push(FiltArc {
                    range: w.range.canonical(n),
                    diam: builder.diam(w.range.i0, w.range.i1),
                    origin: w.origin,
                    parent: None,
                });
            }
        }
        new_arcs.sort_by_key(|a| a.range.i0);

        if k > k_min {
            for arc in new_arcs.iter_mut() {
                let parent = prev_level
                    .iter()
                    .position(|p| p.range.contains(&arc.range, n) || p.range.edges() >= n);
                arc.parent = Some(parent.ok_or_else(|| {
                    Error::Invariant(format!(
                        "level {k}: arc [{}, {}] has no parent",
                        arc.range.i0, arc.range.i1
                    ))
                })?);
            }
        }

        prev_level = new_arcs.clone();
        filt.levels.insert(k, new_arcs);
    }
    Ok(filt)
}

// ---------------------------------------------------------------------------
// verification
// ---------------------------------------------------------------------------

/// Check the six filtration conclusion properties plus the diameter brackets,
/// with `tol` slack for sampled diameters.
pub fn verify_filtration(
    curve: &Curve,
    pre: &Prefiltration,
    filt: &Filtration,
    tol: f64,
) -> Result<()> {
    let n = curve.len();
    let levels = filt.level_ids();
    for (li, &k) in levels.iter().enumerate() {
        let arcs = &filt.levels[&k];
        let (lo, hi) = filt.bracket(k);
        let full_circle = arcs.len() == 1 && arcs[0].range.edges() >= n;

        // (2) diameter bracket.
        for (ai, a) in arcs.iter().enumerate() {
            if !full_circle && (a.diam < lo - tol || a.diam >= hi + tol) {
                return Err(Error::Invariant(format!(
                    "level {k} arc {ai}: diam {} outside [{lo}, {hi})",
                    a.diam
                )));
            }
        }
        // (3) same-level arcs intersect at most in endpoints; (4) they cover
        // the circle.
        let mut edge_total = 0usize;
        for (ai, a) in arcs.iter().enumerate() {
            edge_total += a.range.edges();
            for (bi, b) in arcs.iter().enumerate().skip(ai + 1) {
                if a.range.edges_intersect(&b.range, n) {
                    return Err(Error::Invariant(format!(
                        "level {k}: arcs {ai} and {bi} overlap in their interiors"
                    )));
                }
            }
        }
        if edge_total != n {
            return Err(Error::Invariant(format!(
                "level {k}: arcs cover {edge_total} of {n} edges"
            )));
        }
        // (1) unique parent.
        if li > 0 {
            let prev = &filt.levels[&levels[li - 1]];
            for (ai, a) in arcs.iter().enumerate() {
                if a.parent.is_none() {
                    return Err(Error::Invariant(format!(
                        "level {k} arc {ai}: missing parent link"
                    )));
                }
                let holders = prev
                    .iter()
                    .filter(|p| p.range.contains(&a.range, n) || p.range.edges() >= n)
                    .count();
                if holders != 1 && prev.len() > 1 {
                    return Err(Error::Invariant(format!(
                        "level {k} arc {ai}: {holders} containing parents"
                    )));
                }
            }
        }
        // (5)/(6): original arcs extend uniquely; extensions verified by
        // `verify_extension_sizes`.
        if let Some(pre_arcs) = pre.levels.get(&k) {
            let mut seen: Vec<usize> = Vec::new();
            for (ai, a) in arcs.iter().enumerate() {
                if let Some(oi) = a.origin {
                    if seen.contains(&oi) {
                        return Err(Error::Invariant(format!(
                            "level {k}: prefiltration arc {oi} extended twice"
                        )));
                    }
                    seen.push(oi);
                    if !(a.range.contains(&pre_arcs[oi].range, n) || a.range.edges() >= n) {
                        return Err(Error::Invariant(format!(
                            "level {k} arc {ai}: does not contain its origin {oi}"
                        )));
                    }
                }
            }
            if seen.len() != pre_arcs.len() {
                return Err(Error::Invariant(format!(
                    "level {k}: {} of {} prefiltration arcs extended",
                    seen.len(),
                    pre_arcs.len()
                )));
            }
        }
    }
    Ok(())
}

/// Extension-size check for property (5): every extension component has image
/// diameter below `δ L 2^{-kJ}` (with `tol` slack).
pub fn verify_extension_sizes(
    ctx: &MetricCtx,
    curve: &Curve,
    pre: &Prefiltration,
    filt: &Filtration,
    tol: f64,
) -> Result<()> {
    let n = curve.len();
    for (&k, arcs) in &filt.levels {
        let Some(pre_arcs) = pre.levels.get(&k) else {
            continue;
        };
        let (lo, _) = filt.bracket(k);
        for a in arcs {
            let Some(oi) = a.origin else { continue };
            let orig = pre_arcs[oi].range.canonical(n);
            let lead = a.range.fwd(&orig, n);
            let trail = a.range.edges() - lead - orig.edges();
            if lead > 0 {
                let d = diam_over_indices(ctx, curve, a.range.i0, a.range.i0 + lead, &[]);
                if d >= lo + tol {
                    return Err(Error::Invariant(format!(
                        "level {k}: leading extension diam {d} >= {lo}"
                    )));
                }
            }
            if trail > 0 {
                let i0 = a.range.i0 + lead + orig.edges();
                let d = diam_over_indices(ctx, curve, i0, a.range.i1, &[]);
                if d >= lo + tol {
                    return Err(Error::Invariant(format!(
                        "level {k}: trailing extension diam {d} >= {lo}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Per-level chord sums `Σ d(γ(a(τ)), γ(b(τ)))`; each is at most the curve
/// length.
pub fn chord_sums(ctx: &MetricCtx, curve: &Curve, filt: &Filtration) -> Vec<(i64, f64)> {
    filt.levels
        .iter()
        .map(|(&k, arcs)| {
            let sum = arcs
                .iter()
                .map(|a| ctx.distance(&curve.point(a.range.i0), &curve.point(a.range.i1)))
                .sum();
            (k, sum)
        })
        .collect()
}

/// Audit of the telescoping bound for one arc: follow the maximal-`d_τ`
/// descendant chain; returns `(β(τ)·diam(τ), Σ_k d_{τ_k} + tail)` where the
/// tail bounds the truncated remainder by twice the finest arc diameter.
pub fn telescoping_check(
    ctx: &MetricCtx,
    curve: &Curve,
    filt: &Filtration,
    id: ArcId,
) -> Result<(f64, f64)> {
    let arc = filt.domain_arc(ctx, curve, id)?;
    let lhs = if arc.diameter() > 0.0 {
        arc.beta(ctx)? * arc.diameter()
    } else {
        0.0
    };
    let mut sum = 0.0;
    let mut current = id;
    loop {
        let kids = filt.children(curve, current, 1);
        if kids.is_empty() {
            sum += 2.0 * filt.arc(current).diam;
            break;
        }
        sum += filt.d_tau(ctx, curve, current);
        current = kids
            .into_iter()
            .max_by(|a, b| {
                filt.d_tau(ctx, curve, *a)
                    .partial_cmp(&filt.d_tau(ctx, curve, *b))
                    .unwrap()
            })
            .unwrap();
    }
    Ok((lhs, sum))
}

/// Data for the modified curvature bound
/// `d_τ⁴ / diam(τ)³ <= C(J,η) · (Σ_{F_{τ,2}} chords - chord(τ))`.
/// Returns `(lhs, excess)`, or None when no grandchildren exist.
pub fn dtau_triangle_data(
    ctx: &MetricCtx,
    curve: &Curve,
    filt: &Filtration,
    id: ArcId,
) -> Option<(f64, f64)> {
    let grandkids = filt.children(curve, id, 2);
    if grandkids.is_empty() {
        return None;
    }
    let arc = filt.arc(id);
    let chord = ctx.distance(&curve.point(arc.range.i0), &curve.point(arc.range.i1));
    let sum: f64 = grandkids
        .iter()
        .map(|&g| {
            let r = filt.arc(g).range;
            ctx.distance(&curve.point(r.i0), &curve.point(r.i1))
        })
        .sum();
    let d_tau = filt.d_tau(ctx, curve, id);
    let lhs = d_tau.powi(4) / arc.diam.powi(3).max(f64::MIN_POSITIVE);
    Some((lhs, sum - chord))
}

/// `ln C(J, η)` for the modified curvature bound constant
/// `C = 10^14 · 2^(4J+64) / η²` (the constant itself overflows f64 for large
/// `J`, so comparisons happen in log space).
pub fn dtau_bound_log_constant(j: u32, eta: f64) -> f64 {
    14.0 * std::f64::consts::LN_10 + (4.0 * j as f64 + 64.0) * std::f64::consts::LN_2
        - 2.0 * eta.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{gen_oscillating, gen_segment};
    use crate::multires::build_cubes;
    use crate::point::Point;

    fn ctx() -> MetricCtx {
        MetricCtx::default()
    }

    fn ball_at(p: Point, r: f64, level: i32) -> Ball {
        Ball {
            center: p,
            radius: r,
            level,
        }
    }

    #[test]
    fn idx_range_circular_ops() {
        let n = 10;
        let a = IdxRange::new(8, 12); // wraps: indices 8,9,0,1,2
        let b = IdxRange::new(0, 1);
        let c = IdxRange::new(3, 5);
        assert!(a.indices_intersect(&b, n));
        assert!(a.contains(&b, n));
        assert!(!a.indices_intersect(&c, n));
        assert!(!a.contains(&c, n));
        // Shared endpoint only: indices intersect, edges do not.
        let d = IdxRange::new(12, 14);
        assert!(a.indices_intersect(&d, n));
        assert!(!a.edges_intersect(&d, n));
    }

    #[test]
    fn lambda_arcs_on_straight_curve() {
        let cx = ctx();
        let curve = gen_segment(&cx, 1.0).unwrap().refined(0.01).unwrap();
        // One cube around the midpoint of the segment.
        let fam = [ball_at(Point::new(0.5, 0.0, 0.0), 0.2, 0)];
        let forest = build_cubes(&cx, &fam, 10, 3.0);
        let inner = ball_at(Point::new(0.5, 0.0, 0.0), 0.1, 0);
        let arcs = lambda_arcs(&cx, &curve, &forest, 0, &inner).unwrap();
        // The segment is traversed out and back: one component per pass.
        assert_eq!(arcs.len(), 2);

        // A ball the curve misses entirely.
        let fam2 = [ball_at(Point::new(0.5, 5.0, 0.0), 0.2, 0)];
        let forest2 = build_cubes(&cx, &fam2, 10, 3.0);
        let inner2 = ball_at(Point::new(0.5, 5.0, 0.0), 0.1, 0);
        let arcs2 = lambda_arcs(&cx, &curve, &forest2, 0, &inner2).unwrap();
        assert!(arcs2.is_empty());
    }

    /// Single-level pipeline: normalized oscillating curve, nets at one level,
    /// doubled balls, largest split family, cubes.
    fn sample_pipeline(cx: &MetricCtx, stages: u32, level: i32, a_param: f64) -> (Curve, CubeForest) {
        let curve = gen_oscillating(cx, 0.6, 0.5, stages, 1.0).unwrap();
        let (curve, _) = curve.normalized_to_unit_diameter(cx).unwrap();
        let r = a_param * 2f64.powi(-level);
        let curve = curve.refined(r * 1e-2).unwrap();
        let nets = crate::multires::build_nets(cx, curve.points(), level..=level);
        let balls = crate::multires::multiresolution(&nets, 2.0 * a_param);
        let fams = crate::multires::split_families(cx, &balls, 10, 3.0).unwrap();
        let fam = fams.families.iter().max_by_key(|f| f.len()).unwrap().clone();
        let forest = build_cubes(cx, &fam, 10, 3.0);
        (curve, forest)
    }

    #[test]
    fn prefiltration_and_filtration_single_level() {
        let cx = ctx();
        let (curve, forest) = sample_pipeline(&cx, 3, 6, 0.4);
        let pre = prefiltration_from_cubes(&cx, &curve, &forest).unwrap();
        assert!(!pre.is_empty());
        pre.verify(&curve, 3.0 * curve.max_edge_gap()).unwrap();

        let filt = complete_filtration(&cx, &curve, &pre, 2f64.powi(-5)).unwrap();
        verify_filtration(&curve, &pre, &filt, 3.0 * curve.max_edge_gap()).unwrap();
        verify_extension_sizes(&cx, &curve, &pre, &filt, 3.0 * curve.max_edge_gap()).unwrap();

        let len = curve.length(&cx);
        for (_, s) in chord_sums(&cx, &curve, &filt) {
            assert!(s <= len + 1e-9);
        }
        for (&k, arcs) in &pre.levels {
            for i in 0..arcs.len() {
                filt.lambda_prime(k, i).unwrap();
            }
        }
    }

    #[test]
    fn empty_forest_gives_empty_prefiltration() {
        let cx = ctx();
        let curve = gen_segment(&cx, 1.0).unwrap().refined(0.05).unwrap();
        let forest = build_cubes(&cx, &[], 10, 3.0);
        let pre = prefiltration_from_cubes(&cx, &curve, &forest).unwrap();
        assert!(pre.is_empty());
        let filt = complete_filtration(&cx, &curve, &pre, 0.5).unwrap();
        assert_eq!(filt.arc_count(), 0);
    }

    #[test]
    fn single_arc_small_gap_merges_to_full_circle() {
        let cx = ctx();
        let curve = gen_segment(&cx, 1.0).unwrap().refined(0.001).unwrap();
        let n = curve.len();
        let i0 = 3usize;
        let i1 = i0 + n - 6;
        let diam = diam_over_indices(&cx, &curve, i0, i1, &[]);
        let mut levels = BTreeMap::new();
        levels.insert(
            0i64,
            vec![PreArc {
                range: IdxRange::new(i0, i1),
                diam,
                cube: 0,
            }],
        );
        let pre = Prefiltration {
            levels,
            j: 10,
            l_param: diam,
        };
        // The remaining gap has diameter far below δL: single-arc branch
        // merges it, leaving F_m = {whole circle}.
        let filt = complete_filtration(&cx, &curve, &pre, 0.5).unwrap();
        let arcs = &filt.levels[&0];
        assert_eq!(arcs.len(), 1);
        assert_eq!(arcs[0].range.edges(), n);
        assert_eq!(arcs[0].origin, Some(0));
    }

    #[test]
    fn mid_sized_gap_becomes_its_own_arc() {
        let cx = ctx();
        let curve = gen_segment(&cx, 1.0).unwrap().refined(0.001).unwrap();
        let n = curve.len();
        let i0 = 0usize;
        let i1 = n / 2;
        let diam = diam_over_indices(&cx, &curve, i0, i1, &[]);
        let mut levels = BTreeMap::new();
        levels.insert(
            0i64,
            vec![PreArc {
                range: IdxRange::new(i0, i1),
                diam,
                cube: 0,
            }],
        );
        let pre = Prefiltration {
            levels,
            j: 10,
            l_param: diam,
        };
        let filt = complete_filtration(&cx, &curve, &pre, 2f64.powi(-10)).unwrap();
        let arcs = &filt.levels[&0];
        assert_eq!(arcs.len(), 2);
        let covered: usize = arcs.iter().map(|a| a.range.edges()).sum();
        assert_eq!(covered, n);
    }

    /// Two-level synthetic prefiltration (J = 10): one top arc grown to
    /// diameter ~`l`, several level-1 arcs inside it at scale `l·2^{-10}`.
    fn synthetic_two_level_pre(cx: &MetricCtx, curve: &Curve, l: f64) -> Prefiltration {
        let n = curve.len();
        let grow = |i0: usize, lo: f64, cap: usize| -> Option<usize> {
            let mut i1 = i0 + 1;
            while i1 < cap {
                if diam_over_indices(cx, curve, i0, i1, &[]) >= lo {
                    return Some(i1);
                }
                i1 += ((i1 - i0) / 2).max(1);
            }
            None
        };
        let top0 = n / 16;
        let top1 = grow(top0, l, top0 + n - 1).expect("curve too small for top arc");
        let top_diam = diam_over_indices(cx, curve, top0, top1, &[]);
        let mut levels = BTreeMap::new();
        levels.insert(
            0i64,
            vec![PreArc {
                range: IdxRange::new(top0, top1),
                diam: top_diam,
                cube: 0,
            }],
        );
        let lo1 = l * 2f64.powi(-10);
        let mut kids = Vec::new();
        let span = top1 - top0;
        let mut start = top0 + span / 10;
        for c in 0..4 {
            let Some(end) = grow(start, lo1, top1) else { break };
            if end >= top1 {
                break;
            }
            kids.push(PreArc {
                range: IdxRange::new(start, end),
                diam: diam_over_indices(cx, curve, start, end, &[]),
                cube: c,
            });
            start = end + span / 8;
            if start >= top1 {
                break;
            }
        }
        assert!(kids.len() >= 2, "need at least two child arcs");
        levels.insert(1i64, kids);
        Prefiltration {
            levels,
            j: 10,
            l_param: l,
        }
    }

    #[test]
    fn d_tau_zero_for_collinear_children() {
        let cx = ctx();
        let curve = gen_segment(&cx, 1.0).unwrap().refined(2e-4).unwrap();
        let pre = synthetic_two_level_pre(&cx, &curve, 0.4);
        let filt = complete_filtration(&cx, &curve, &pre, 2f64.powi(-10)).unwrap();
        let n = curve.len();
        let mut with_children = 0;
        for id in filt.ids() {
            let d = filt.d_tau(&cx, &curve, id);
            assert!(d <= 2.0 * filt.arc(id).diam + 1e-9, "d_tau > 2 diam");
            // Arcs inside the forward pass traverse one horizontal segment
            // monotonically; their children's segments lie inside L_τ. Arcs
            // across the turnaround legitimately deviate from their chord.
            let r = filt.arc(id).range.canonical(n);
            let forward = r.i1 <= n / 2;
            if forward && !filt.children(&curve, id, 1).is_empty() {
                with_children += 1;
                assert!(d <= 1e-7, "collinear children should give d_tau ~ 0, got {d}");
            }
        }
        assert!(with_children > 0);
    }

    #[test]
    fn d_tau_bound_and_oracle_on_oscillating() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.5, 2, 1.0).unwrap();
        let (curve, _) = curve.normalized_to_unit_diameter(&cx).unwrap();
        let curve = curve.refined(2e-4).unwrap();
        let pre = synthetic_two_level_pre(&cx, &curve, 0.4);
        let filt = complete_filtration(&cx, &curve, &pre, 2f64.powi(-10)).unwrap();
        assert!(filt.arc_count() > 0);
        for id in filt.ids() {
            let d = filt.d_tau(&cx, &curve, id);
            assert!(d <= 2.0 * filt.arc(id).diam + 1e-9);
        }
        // Grid oracle on the top arc.
        let id = ArcId { level: 0, idx: 0 };
        let top = filt
            .ids()
            .into_iter()
            .filter(|i| i.level == 0)
            .find(|&i| !filt.children(&curve, i, 1).is_empty())
            .unwrap_or(id);
        let fast = filt.d_tau(&cx, &curve, top);
        let l_parent = filt.l_tau(&curve, top);
        let mut oracle: f64 = 0.0;
        for child in filt.children(&curve, top, 1) {
            let seg = filt.l_tau(&curve, child);
            for i in 0..=1000 {
                let u = i as f64 / 1000.0;
                oracle = oracle.max(dist_point_to_segment_exact(&cx, &seg.eval(u), &l_parent));
            }
        }
        assert!(
            (fast - oracle).abs() <= 1e-4 * oracle.max(1e-6),
            "fast {fast} vs oracle {oracle}"
        );
    }

    #[test]
    fn telescoping_bound_on_synthetic_filtration() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.5, 3, 1.0).unwrap();
        let (curve, _) = curve.normalized_to_unit_diameter(&cx).unwrap();
        let curve = curve.refined(2e-4).unwrap();
        let pre = synthetic_two_level_pre(&cx, &curve, 0.4);
        let filt = complete_filtration(&cx, &curve, &pre, 2f64.powi(-10)).unwrap();
        for id in filt.ids().into_iter().take(40) {
            let (lhs, rhs) = telescoping_check(&cx, &curve, &filt, id).unwrap();
            assert!(
                lhs <= rhs + 1e-9,
                "telescoping failed at {id:?}: {lhs} > {rhs}"
            );
        }
    }
}
