//! Arclength-parametrized closed polyline curves on a circle domain.
//!
//! A curve is an ordered list of `(t, point)` samples on a circle of
//! circumference `T`; consecutive samples are joined by horizontal segments.
//! The 1-Lipschitz certificate `d(p_k, p_{k+1}) <= t_{k+1} - t_k` is validated
//! on ingestion. Arcs are domain intervals `[a, b]` with diameters measured on
//! the image.

use crate::error::{Error, Result};
use crate::line::{dist_point_to_segment_exact, HorizontalSegment};
use crate::metric::MetricCtx;
use crate::point::Point;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, Write};

/// Tolerance for the Lipschitz certificate.
pub const LIPSCHITZ_TOL: f64 = 1e-9;

/// A closed polyline curve. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Curve {
    ts: Vec<f64>,
    pts: Vec<Point>,
    circumference: f64,
    max_edge_gap: f64,
}

impl Curve {
    /// Build a closed curve from a cyclic chain of points. Parameter gaps are
    /// the Koranyi distances of consecutive points (arclength), including the
    /// closing edge from the last point back to the first. Consecutive
    /// duplicates are dropped.
    pub fn closed_polyline(ctx: &MetricCtx, chain: &[Point]) -> Result<Curve> {
        let mut pts: Vec<Point> = Vec::with_capacity(chain.len());
        for p in chain {
            if let Some(last) = pts.last() {
                if ctx.distance(last, p) == 0.0 {
                    continue;
                }
            }
            pts.push(*p);
        }
        while pts.len() > 1 && ctx.distance(pts.last().unwrap(), &pts[0]) == 0.0 {
            pts.pop();
        }
        if pts.len() < 2 {
            return Err(Error::Degenerate(
                "closed_polyline: need at least two distinct points".into(),
            ));
        }
        let n = pts.len();
        let mut ts = Vec::with_capacity(n);
        let mut t = 0.0;
        for k in 0..n {
            ts.push(t);
            t += ctx.distance(&pts[k], &pts[(k + 1) % n]);
        }
        Curve::from_parts(ts, pts, t)
    }

    /// Build from explicit samples and circumference; validates monotone
    /// parameters and the Lipschitz certificate.
    pub fn from_samples(
        ctx: &MetricCtx,
        samples: Vec<(f64, Point)>,
        circumference: f64,
    ) -> Result<Curve> {
        if samples.len() < 2 {
            return Err(Error::Degenerate("curve needs at least two samples".into()));
        }
        if !(circumference > 0.0) {
            return Err(Error::Domain("circumference must be positive".into()));
        }
        let (ts, pts): (Vec<f64>, Vec<Point>) = samples.into_iter().unzip();
        let curve = Curve::from_parts(ts, pts, circumference)?;
        curve.check_lipschitz(ctx)?;
        Ok(curve)
    }

    fn from_parts(mut ts: Vec<f64>, pts: Vec<Point>, circumference: f64) -> Result<Curve> {
        // Normalize so the first sample sits at parameter 0; edge gaps and the
        // circumference are unchanged.
        let t0 = ts[0];
        if t0 != 0.0 {
            for t in &mut ts {
                *t -= t0;
            }
        }
        for w in ts.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Domain(
                    "sample parameters must be strictly increasing".into(),
                ));
            }
        }
        if *ts.last().unwrap() >= circumference {
            return Err(Error::Domain(
                "last sample parameter must be below the circumference".into(),
            ));
        }
        let n = ts.len();
        let mut max_edge_gap: f64 = 0.0;
        for k in 0..n {
            let gap = if k + 1 < n {
                ts[k + 1] - ts[k]
            } else {
                circumference - ts[k]
            };
            max_edge_gap = max_edge_gap.max(gap);
        }
        Ok(Curve {
            ts,
            pts,
            circumference,
            max_edge_gap,
        })
    }

    /// Verify `d(p_k, p_{k+1}) <= t_{k+1} - t_k` on every edge (closing edge
    /// included).
    pub fn check_lipschitz(&self, ctx: &MetricCtx) -> Result<()> {
        let n = self.len();
        for k in 0..n {
            let gap = self.edge_gap(k);
            let d = ctx.distance(&self.pts[k], &self.pts[(k + 1) % n]);
            if d > gap + LIPSCHITZ_TOL {
                return Err(Error::Invariant(format!(
                    "Lipschitz certificate failed at edge {k}: d = {d}, gap = {gap}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn circumference(&self) -> f64 {
        self.circumference
    }

    pub fn points(&self) -> &[Point] {
        &self.pts
    }

    pub fn max_edge_gap(&self) -> f64 {
        self.max_edge_gap
    }

    /// Point at wrapped sample index.
    pub fn point(&self, i: usize) -> Point {
        self.pts[i % self.len()]
    }

    /// Unrolled parameter of sample index `i` (adds a full turn per wrap).
    pub fn param(&self, i: usize) -> f64 {
        let n = self.len();
        self.ts[i % n] + (i / n) as f64 * self.circumference
    }

    fn edge_gap(&self, k: usize) -> f64 {
        let n = self.len();
        let k = k % n;
        if k + 1 < n {
            self.ts[k + 1] - self.ts[k]
        } else {
            self.circumference - self.ts[k]
        }
    }

    /// The horizontal segment interpolating edge `k`.
    pub fn edge_segment(&self, k: usize) -> HorizontalSegment {
        let n = self.len();
        HorizontalSegment::between(&self.pts[k % n], &self.pts[(k + 1) % n])
    }

    /// Index of the sample at or before parameter `t` (reduced mod `T`).
    pub fn index_at(&self, t: f64) -> usize {
        let tm = t.rem_euclid(self.circumference);
        match self.ts.binary_search_by(|x| x.partial_cmp(&tm).unwrap()) {
            Ok(i) => i,
            Err(0) => self.len() - 1, // cannot happen since ts[0] = 0
            Err(i) => i - 1,
        }
    }

    /// Evaluate the curve at parameter `t` by horizontal interpolation.
    pub fn eval(&self, t: f64) -> Point {
        let tm = t.rem_euclid(self.circumference);
        let k = self.index_at(tm);
        let gap = self.edge_gap(k);
        let u = if gap > 0.0 { (tm - self.ts[k]) / gap } else { 0.0 };
        self.edge_segment(k).eval(u.clamp(0.0, 1.0))
    }

    /// Total length: sum of Koranyi distances over consecutive samples,
    /// closing edge included.
    pub fn length(&self, ctx: &MetricCtx) -> f64 {
        let n = self.len();
        (0..n)
            .map(|k| ctx.distance(&self.pts[k], &self.pts[(k + 1) % n]))
            .sum()
    }

    /// Image diameter over the curve's sample points.
    pub fn diameter(&self, ctx: &MetricCtx) -> f64 {
        diam_over_indices(ctx, self, 0, self.len() - 1, &[])
    }

    /// Dilate the whole curve by `δ_λ` (parameters scale by `λ` too, so the
    /// arclength parametrization is preserved exactly).
    pub fn dilated(&self, lambda: f64) -> Curve {
        Curve {
            ts: self.ts.iter().map(|t| t * lambda).collect(),
            pts: self
                .pts
                .iter()
                .map(|p| p.dilate_unchecked(lambda))
                .collect(),
            circumference: self.circumference * lambda,
            max_edge_gap: self.max_edge_gap * lambda,
        }
    }

    /// Left-translate the whole curve by `g`.
    pub fn translated(&self, g: &Point) -> Curve {
        Curve {
            ts: self.ts.clone(),
            pts: self.pts.iter().map(|p| g.multiply(p)).collect(),
            circumference: self.circumference,
            max_edge_gap: self.max_edge_gap,
        }
    }

    /// Subdivide every edge so no parameter gap exceeds `max_gap`. New points
    /// lie on the interpolating horizontal segments, so the image is
    /// unchanged for chains of co-horizontal samples.
    pub fn refined(&self, max_gap: f64) -> Result<Curve> {
        if !(max_gap > 0.0) {
            return Err(Error::Domain("refined: max_gap must be positive".into()));
        }
        let n = self.len();
        let mut ts = Vec::new();
        let mut pts = Vec::new();
        for k in 0..n {
            let gap = self.edge_gap(k);
            ts.push(self.ts[k]);
            pts.push(self.pts[k]);
            let seg = self.edge_segment(k);
            if seg.len() == 0.0 {
                continue; // degenerate edge: constant interpolation
            }
            let m = (gap / max_gap).ceil() as usize;
            for j in 1..m {
                let u = j as f64 / m as f64;
                ts.push(self.ts[k] + u * gap);
                pts.push(seg.eval(u));
            }
        }
        Curve::from_parts(ts, pts, self.circumference)
    }

    /// Uniformly dilate so the image diameter is 1. Returns the scaled curve
    /// and the factor applied.
    pub fn normalized_to_unit_diameter(&self, ctx: &MetricCtx) -> Result<(Curve, f64)> {
        let d = self.diameter(ctx);
        if !(d > 0.0) {
            return Err(Error::Degenerate("curve has zero diameter".into()));
        }
        let lambda = 1.0 / d;
        Ok((self.dilated(lambda), lambda))
    }

    // -- file format ---------------------------------------------------------

    /// Write in the curve file format: `T=<circumference>` then `t x y z`
    /// lines.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "T={:.12e}", self.circumference)?;
        for (t, p) in self.ts.iter().zip(&self.pts) {
            writeln!(w, "{:.12e} {:.12e} {:.12e} {:.12e}", t, p.x, p.y, p.z)?;
        }
        Ok(())
    }

    /// Read the curve file format and validate the Lipschitz certificate.
    pub fn read_from<R: BufRead>(ctx: &MetricCtx, r: R) -> Result<Curve> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty curve file".into()))??;
        let circ: f64 = header
            .trim()
            .strip_prefix("T=")
            .ok_or_else(|| Error::Parse("first line must be T=<circumference>".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad circumference: {e}")))?;
        let mut samples = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<f64> {
                it.next()
                    .ok_or_else(|| Error::Parse(format!("short line: {line}")))?
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad number in '{line}': {e}")))
            };
            let t = next()?;
            let p = Point::new(next()?, next()?, next()?);
            samples.push((t, p));
        }
        Curve::from_samples(ctx, samples, circ)
    }
}

// ---------------------------------------------------------------------------
// arcs
// ---------------------------------------------------------------------------

/// A subarc of a curve: the domain interval `[a, b]` (respecting the flow
/// direction, `b <= a + T`) with its image diameter cached.
#[derive(Debug, Clone)]
pub struct Arc<'c> {
    curve: &'c Curve,
    a: f64,
    b: f64,
    /// Unrolled index range of samples with parameter in `[a, b]`;
    /// `None` when no sample falls inside.
    idx: Option<(usize, usize)>,
    diam: f64,
}

impl<'c> Arc<'c> {
    /// Arc over `[a, b]`. `b` may exceed the circumference to express wrapping
    /// but `b - a` must not exceed one full turn.
    pub fn new(ctx: &MetricCtx, curve: &'c Curve, a: f64, b: f64) -> Result<Arc<'c>> {
        if !(b >= a) || b - a > curve.circumference() + 1e-12 {
            return Err(Error::Domain(format!(
                "arc interval [{a}, {b}] invalid for circumference {}",
                curve.circumference()
            )));
        }
        let idx = sample_range(curve, a, b);
        let extra = [curve.eval(a), curve.eval(b)];
        let diam = match idx {
            Some((i0, i1)) => diam_over_indices(ctx, curve, i0, i1, &extra),
            None => ctx.distance(&extra[0], &extra[1]),
        };
        Ok(Arc { curve, a, b, idx, diam })
    }

    /// Arc spanning the inclusive unrolled sample index range.
    pub fn from_index_range(
        ctx: &MetricCtx,
        curve: &'c Curve,
        i0: usize,
        i1: usize,
    ) -> Result<Arc<'c>> {
        Arc::new(ctx, curve, curve.param(i0), curve.param(i1))
    }

    pub fn curve(&self) -> &'c Curve {
        self.curve
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn domain_len(&self) -> f64 {
        self.b - self.a
    }

    /// Cached image diameter.
    pub fn diameter(&self) -> f64 {
        self.diam
    }

    pub fn start_point(&self) -> Point {
        self.curve.eval(self.a)
    }

    pub fn end_point(&self) -> Point {
        self.curve.eval(self.b)
    }

    /// Unrolled indices of the curve samples inside the domain interval.
    pub fn sample_indices(&self) -> impl Iterator<Item = usize> {
        let range = match self.idx {
            Some((i0, i1)) => i0..=i1,
            #[allow(clippy::reversed_empty_ranges)]
            None => 1..=0,
        };
        range
    }

    /// All points of the arc: exact endpoints plus interior samples.
    pub fn points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        out.push(self.start_point());
        for i in self.sample_indices() {
            out.push(self.curve.point(i));
        }
        out.push(self.end_point());
        out
    }

    /// The horizontal segment from `γ(a)` toward `γ(b)`.
    pub fn l_tau(&self) -> HorizontalSegment {
        HorizontalSegment::between(&self.start_point(), &self.end_point())
    }

    /// Arc beta number: `sup d(γ(t), L_τ) / diam(τ)`, the sup taken over the
    /// arc's samples plus 8 interior subdivision points per edge (segment
    /// interiors can bow away from `L_τ`).
    pub fn beta(&self, ctx: &MetricCtx) -> Result<f64> {
        if self.diam <= 0.0 {
            return Err(Error::Degenerate(
                "beta of an arc with zero diameter".into(),
            ));
        }
        Ok(self.deviation_sup(ctx) / self.diam)
    }

    /// `sup d(γ(t), L_τ)` over the arc (unnormalized).
    pub fn deviation_sup(&self, ctx: &MetricCtx) -> f64 {
        let l_tau = self.l_tau();
        let mut sup: f64 = 0.0;
        let mut probe = |p: &Point| {
            let d = dist_point_to_segment_exact(ctx, p, &l_tau);
            if d > sup {
                sup = d;
            }
        };
        probe(&self.start_point());
        probe(&self.end_point());
        let idx: Vec<usize> = self.sample_indices().collect();
        for &i in &idx {
            probe(&self.curve.point(i));
        }
        // Interior subdivision points of every edge fully inside the arc.
        for w in idx.windows(2) {
            let seg = self.curve.edge_segment(w[0]);
            if seg.len() == 0.0 {
                continue;
            }
            for j in 1..=8 {
                probe(&seg.eval(j as f64 / 9.0));
            }
        }
        sup
    }

    /// Distance from a point to the arc's image (min over its edges,
    /// endpoints handled exactly; edge interiors via the closed-form segment
    /// distance with pruning).
    pub fn distance_from_point(&self, ctx: &MetricCtx, p: &Point) -> f64 {
        let pts = self.points();
        let mut best = f64::INFINITY;
        for q in &pts {
            best = best.min(ctx.distance(p, q));
        }
        // Edge interiors: prune edges that cannot beat the best by the
        // triangle inequality (interior within edge length of an endpoint).
        for w in pts.windows(2) {
            let seg = HorizontalSegment::between(&w[0], &w[1]);
            let l = seg.len();
            if l == 0.0 {
                continue;
            }
            let near = ctx.distance(p, &w[0]).min(ctx.distance(p, &w[1]));
            if near - l >= best {
                continue;
            }
            best = best.min(dist_point_to_segment_exact(ctx, p, &seg));
        }
        best
    }
}

/// Unrolled index range of samples with parameter in `[a, b]` (b <= a + T).
fn sample_range(curve: &Curve, a: f64, b: f64) -> Option<(usize, usize)> {
    let n = curve.len();
    let t = curve.circumference();
    let am = a.rem_euclid(t);
    let shift = a - am; // a = am + shift, shift a multiple of T
    let param = |i: usize| curve.ts[i % n] + (i / n) as f64 * t + shift;
    // index_at gives ts[k] <= am, so param(k) <= a.
    let mut i0 = curve.index_at(am);
    if param(i0) < a - 1e-15 {
        i0 += 1;
    }
    if param(i0) > b + 1e-15 {
        return None;
    }
    let mut i1 = i0;
    while i1 + 1 - i0 < n && param(i1 + 1) <= b + 1e-15 {
        i1 += 1;
    }
    Some((i0, i1))
}

// ---------------------------------------------------------------------------
// diameter
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum DiamNode {
    Sample(usize),
    Fixed(Point),
}

/// Diameter of the sample range `[i0, i1]` (unrolled, inclusive) plus fixed
/// extra points. Exact for small ranges; for large ranges a coarse pass
/// selects candidate pairs which are then refined at full resolution (the
/// coarse bound `d(p_i, p_{i+k}) <= k * max_edge_gap` makes the candidate set
/// complete).
pub(crate) fn diam_over_indices(
    ctx: &MetricCtx,
    curve: &Curve,
    i0: usize,
    i1: usize,
    extra: &[Point],
) -> f64 {
    let m = i1 - i0 + 1;
    const EXACT_LIMIT: usize = 640;
    if m + extra.len() <= EXACT_LIMIT {
        let pts: Vec<Point> = (i0..=i1)
            .map(|i| curve.point(i))
            .chain(extra.iter().copied())
            .collect();
        return ctx.diameter(&pts);
    }

    let stride = m.div_ceil(256);
    let mut nodes: Vec<DiamNode> = (i0..=i1)
        .step_by(stride)
        .map(DiamNode::Sample)
        .collect();
    if !matches!(nodes.last(), Some(DiamNode::Sample(i)) if *i == i1) {
        nodes.push(DiamNode::Sample(i1));
    }
    nodes.extend(extra.iter().map(|p| DiamNode::Fixed(*p)));

    let pt_of = |n: &DiamNode| -> Point {
        match n {
            DiamNode::Sample(i) => curve.point(*i),
            DiamNode::Fixed(p) => *p,
        }
    };

    let mut coarse_max: f64 = 0.0;
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..nodes.len() {
        let pi = pt_of(&nodes[i]);
        for j in (i + 1)..nodes.len() {
            let d = ctx.distance(&pi, &pt_of(&nodes[j]));
            coarse_max = coarse_max.max(d);
            pairs.push((i, j, d));
        }
    }
    let slack = 2.0 * stride as f64 * curve.max_edge_gap();
    let mut candidates: Vec<&(usize, usize, f64)> = pairs
        .iter()
        .filter(|(_, _, d)| *d >= coarse_max - slack)
        .collect();
    candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
    candidates.truncate(64);

    let window = |node: &DiamNode| -> Vec<Point> {
        match node {
            DiamNode::Fixed(p) => vec![*p],
            DiamNode::Sample(i) => {
                let lo = i.saturating_sub(stride).max(i0);
                let hi = (i + stride).min(i1);
                (lo..=hi).map(|k| curve.point(k)).collect()
            }
        }
    };

    let mut best = coarse_max;
    for (i, j, _) in candidates {
        let wi = window(&nodes[*i]);
        let wj = window(&nodes[*j]);
        for p in &wi {
            for q in &wj {
                let d = ctx.distance(p, q);
                if d > best {
                    best = d;
                }
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// generators
// ---------------------------------------------------------------------------

/// Horizontal lift of a planar polyline starting at height `z0`:
/// `p_{k+1} = p_k · (dx, dy, 0)`, so the z-increment per edge is
/// `(x_k dy - y_k dx) / 2`.
pub fn lift_chain(planar: &[[f64; 2]], z0: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(planar.len());
    if planar.is_empty() {
        return out;
    }
    // Planar coordinates are taken verbatim so the projection of the lift is
    // the input polyline exactly; only z accumulates.
    let mut z = z0;
    out.push(Point::new(planar[0][0], planar[0][1], z));
    for w in planar.windows(2) {
        let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
        z += 0.5 * (w[0][0] * dy - w[0][1] * dx);
        out.push(Point::new(w[1][0], w[1][1], z));
    }
    out
}

/// Lift a planar polyline to a closed Curve. The closing edge runs from the
/// last lifted point back to the first.
pub fn lift_planar(ctx: &MetricCtx, planar: &[[f64; 2]], z0: f64) -> Result<Curve> {
    if planar.len() < 2 {
        return Err(Error::Degenerate("lift_planar: need at least 2 points".into()));
    }
    Curve::closed_polyline(ctx, &lift_chain(planar, z0))
}

/// Planar Euclidean length of a polyline.
pub fn planar_polyline_length(planar: &[[f64; 2]]) -> f64 {
    planar
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

/// Close an open chain by traversing it out and back. The image is unchanged
/// and the reversed half cancels the lift increments exactly, so the result
/// closes in the group.
pub fn out_and_back(planar: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = planar.to_vec();
    for p in planar.iter().rev().skip(1).take(planar.len().saturating_sub(2)) {
        out.push(*p);
    }
    out
}

/// One-way planar polyline of the oscillating tent family.
///
/// Stage `k` replaces every segment by a two-segment tent with half-angle
/// `θ_k = c / k^q`; the apex is found by rotating the half-segment by `±θ_k`,
/// alternating sides per segment. Planar length multiplies by `1/cos θ_k`
/// per stage.
pub fn oscillating_planar(q: f64, c: f64, stages: u32, base_len: f64) -> Vec<[f64; 2]> {
    let mut poly = vec![[0.0, 0.0], [base_len, 0.0]];
    for k in 1..=stages {
        let theta = c / (k as f64).powf(q);
        let (s, co) = theta.sin_cos();
        let mut next = Vec::with_capacity(poly.len() * 2);
        let mut side = 1.0;
        for w in poly.windows(2) {
            let (ax, ay) = (w[0][0], w[0][1]);
            let (dx, dy) = (w[1][0] - ax, w[1][1] - ay);
            // Rotate the half-segment by ±θ: apex sits over the midpoint at
            // height (|d|/2) tanθ.
            let scale = 0.5 / co;
            let rx = scale * (co * dx - side * s * dy);
            let ry = scale * (side * s * dx + co * dy);
            next.push([ax, ay]);
            next.push([ax + rx, ay + ry]);
            side = -side;
        }
        next.push(*poly.last().unwrap());
        poly = next;
    }
    poly
}

/// Oscillating tent curve, closed by an exact out-and-back traversal.
///
/// `q <= 1/2` forfeits the bounded-length guarantee (`Σ θ_k²` diverges); the
/// curve is still generated and the condition is reported by
/// [`oscillating_length_bounded`].
pub fn gen_oscillating(
    ctx: &MetricCtx,
    q: f64,
    c: f64,
    stages: u32,
    base_len: f64,
) -> Result<Curve> {
    if !(base_len > 0.0) || !(c > 0.0) {
        return Err(Error::Domain("gen_oscillating: need base_len > 0, c > 0".into()));
    }
    let poly = oscillating_planar(q, c, stages, base_len);
    lift_planar(ctx, &out_and_back(&poly), 0.0)
}

/// Whether the requested exponent gives the bounded-length guarantee.
pub fn oscillating_length_bounded(q: f64) -> bool {
    q > 0.5
}

/// Horizontal lift of a regular planar polygon approximating a circle,
/// traversed once (the lift does not close; the closing edge carries the
/// area holonomy as a vertical jump).
pub fn gen_lifted_circle(ctx: &MetricCtx, n_vertices: usize, radius: f64) -> Result<Curve> {
    let n = n_vertices.max(3);
    let mut planar: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect();
    planar.push(planar[0]);
    lift_planar(ctx, &planar, 0.0)
}

/// Horizontal lift of the boundary of a planar square with subdivided edges.
pub fn gen_lifted_square(ctx: &MetricCtx, side: f64, subdiv_per_edge: usize) -> Result<Curve> {
    let m = subdiv_per_edge.max(1);
    let corners = [[0.0, 0.0], [side, 0.0], [side, side], [0.0, side], [0.0, 0.0]];
    let mut planar = Vec::new();
    for w in corners.windows(2) {
        for j in 0..m {
            let u = j as f64 / m as f64;
            planar.push([
                w[0][0] + u * (w[1][0] - w[0][0]),
                w[0][1] + u * (w[1][1] - w[0][1]),
            ]);
        }
    }
    planar.push([0.0, 0.0]);
    lift_planar(ctx, &planar, 0.0)
}

/// Random horizontal walk with bounded turning, closed out-and-back.
pub fn gen_random_walk(
    ctx: &MetricCtx,
    steps: usize,
    step_len: f64,
    seed: u64,
) -> Result<Curve> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heading: f64 = 0.0;
    let mut planar = vec![[0.0, 0.0]];
    let mut pos = [0.0, 0.0];
    for _ in 0..steps.max(1) {
        heading += rng.gen_range(-0.6..0.6);
        pos = [
            pos[0] + step_len * heading.cos(),
            pos[1] + step_len * heading.sin(),
        ];
        planar.push(pos);
    }
    lift_planar(ctx, &out_and_back(&planar), 0.0)
}

/// Single horizontal segment of the given length (closed out-and-back by the
/// wrap edge).
pub fn gen_segment(ctx: &MetricCtx, len: f64) -> Result<Curve> {
    lift_planar(ctx, &[[0.0, 0.0], [len, 0.0]], 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ctx() -> MetricCtx {
        MetricCtx::default()
    }

    #[test]
    fn out_and_back_segment_has_length_two() {
        let c = gen_segment(&ctx(), 1.0).unwrap();
        assert_abs_diff_eq!(c.length(&ctx()), 2.0, epsilon = 1e-12);
        c.check_lipschitz(&ctx()).unwrap();
    }

    #[test]
    fn lift_of_square_gains_area_in_z() {
        let chain = lift_chain(
            &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]],
            0.0,
        );
        let end = chain.last().unwrap();
        // Signed area of the unit square loop.
        assert_abs_diff_eq!(end.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(end.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(end.z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lift_backtrack_returns_to_start() {
        let chain = lift_chain(&[[0.0, 0.0], [0.7, 0.3], [0.0, 0.0]], 0.25);
        let end = chain.last().unwrap();
        assert_abs_diff_eq!(end.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(end.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(end.z, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn lift_examples() {
        let chain = lift_chain(&[[0.0, 0.0], [1.0, 0.0]], 0.0);
        assert_eq!(chain[0], Point::origin());
        assert_eq!(chain[1], Point::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn pi_of_lift_is_input() {
        let planar = [[0.1, 0.2], [0.5, -0.3], [1.0, 0.4], [0.2, 0.9]];
        let chain = lift_chain(&planar, 0.0);
        for (p, q) in chain.iter().zip(planar.iter()) {
            assert_eq!(p.project_pi(), *q, "projection must be exact");
        }
    }

    #[test]
    fn horizontal_polyline_length_is_planar_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let planar: Vec<[f64; 2]> = (0..20)
            .scan([0.0, 0.0], |pos, _| {
                pos[0] += rng.gen_range(-1.0..1.0f64);
                pos[1] += rng.gen_range(-1.0..1.0f64);
                Some(*pos)
            })
            .collect();
        let loop_planar = out_and_back(&planar);
        let curve = lift_planar(&ctx(), &loop_planar, 0.0).unwrap();
        let planar_len: f64 = planar_polyline_length(&loop_planar)
            + (loop_planar[0][0] - loop_planar.last().unwrap()[0])
                .hypot(loop_planar[0][1] - loop_planar.last().unwrap()[1]);
        assert_abs_diff_eq!(curve.length(&ctx()), planar_len, epsilon = 1e-9);
    }

    #[test]
    fn generated_curves_are_one_lipschitz() {
        let cx = ctx();
        for curve in [
            gen_segment(&cx, 1.0).unwrap(),
            gen_lifted_circle(&cx, 64, 1.0).unwrap(),
            gen_lifted_square(&cx, 1.0, 8).unwrap(),
            gen_random_walk(&cx, 30, 0.1, 7).unwrap(),
            gen_oscillating(&cx, 0.6, 0.5, 4, 1.0).unwrap(),
        ] {
            curve.check_lipschitz(&cx).unwrap();
            curve
                .refined(curve.max_edge_gap() / 7.3)
                .unwrap()
                .check_lipschitz(&cx)
                .unwrap();
        }
    }

    #[test]
    fn oscillating_stage_counts_and_lengths() {
        let p0 = oscillating_planar(0.6, 0.5, 0, 1.0);
        assert_eq!(p0.len(), 2);
        assert_abs_diff_eq!(planar_polyline_length(&p0), 1.0, epsilon = 1e-12);

        let p1 = oscillating_planar(0.6, 0.5, 1, 1.0);
        assert_eq!(p1.len(), 3);
        assert_abs_diff_eq!(
            planar_polyline_length(&p1),
            1.0 / 0.5f64.cos(),
            epsilon = 1e-12
        );

        // 8 stages: length = Π 1/cos θ_k, finite.
        let stages = 8;
        let p8 = oscillating_planar(0.6, 0.5, stages, 1.0);
        let expected: f64 = (1..=stages)
            .map(|k| 1.0 / (0.5 / (k as f64).powf(0.6)).cos())
            .product();
        assert_abs_diff_eq!(planar_polyline_length(&p8), expected, epsilon = 1e-9);
        assert!(oscillating_length_bounded(0.6));
        assert!(!oscillating_length_bounded(0.5));
    }

    #[test]
    fn oscillating_curve_closes_exactly() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.5, 3, 1.0).unwrap();
        // Out-and-back: the wrap edge has positive planar length and the
        // whole chain is horizontal (no vertical jumps).
        let n = curve.len();
        for k in 0..n {
            let seg = curve.edge_segment(k);
            let d = cx.distance(&seg.eval(1.0), &curve.point(k + 1));
            // Koranyi distance turns 1e-16 coordinate noise into ~1e-8.
            assert!(d <= 1e-7, "edge {k} does not reach the next sample (d = {d})");
        }
    }

    #[test]
    fn curve_file_roundtrip() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.5, 2, 1.0).unwrap();
        let mut buf = Vec::new();
        curve.write_to(&mut buf).unwrap();
        let back = Curve::read_from(&cx, &buf[..]).unwrap();
        assert_eq!(back.len(), curve.len());
        assert_abs_diff_eq!(back.circumference(), curve.circumference(), epsilon = 1e-9);
        for i in 0..curve.len() {
            // 12-digit text roundtrip leaves ~1e-13 coordinate error, which the
            // fourth root turns into ~1e-6 in the metric.
            assert!(cx.distance(&back.point(i), &curve.point(i)) <= 1e-5);
        }
    }

    #[test]
    fn arc_basics() {
        let cx = ctx();
        let curve = gen_segment(&cx, 1.0).unwrap();
        // Full forward pass: [0, 1] covers the unit segment.
        let arc = Arc::new(&cx, &curve, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(arc.diameter(), 1.0, epsilon = 1e-12);
        // Single point arc.
        let pt_arc = Arc::new(&cx, &curve, 0.3, 0.3).unwrap();
        assert_eq!(pt_arc.diameter(), 0.0);
        assert!(pt_arc.beta(&cx).is_err());
    }

    #[test]
    fn beta_zero_on_straight_arc() {
        let cx = ctx();
        let curve = gen_segment(&cx, 1.0).unwrap();
        let arc = Arc::new(&cx, &curve, 0.0, 1.0).unwrap();
        assert!(arc.beta(&cx).unwrap() <= 1e-12);
    }

    #[test]
    fn l_tau_starts_at_arc_start() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.5, 2, 1.0).unwrap();
        for &(a, b) in &[(0.0, 0.8), (0.3, 1.1), (0.9, 2.0)] {
            let arc = Arc::new(&cx, &curve, a, b).unwrap();
            let seg = arc.l_tau();
            assert!(cx.distance(&seg.eval(0.0), &arc.start_point()) <= 1e-15);
        }
    }

    #[test]
    fn beta_at_most_two_for_lipschitz_curves() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.5, 4, 1.0).unwrap();
        let t = curve.circumference();
        for i in 0..16 {
            let a = t * i as f64 / 16.0;
            let b = a + t * 0.2;
            let arc = Arc::new(&cx, &curve, a, b).unwrap();
            if arc.diameter() > 0.0 {
                assert!(arc.beta(&cx).unwrap() <= 2.0);
            }
        }
    }

    #[test]
    fn beta_is_dilation_equivariant() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.5, 3, 1.0).unwrap();
        let scaled = curve.dilated(3.7);
        let arc = Arc::new(&cx, &curve, 0.1, 0.9).unwrap();
        let arc_s = Arc::new(&cx, &scaled, 0.1 * 3.7, 0.9 * 3.7).unwrap();
        let b1 = arc.beta(&cx).unwrap();
        let b2 = arc_s.beta(&cx).unwrap();
        assert_abs_diff_eq!(b1, b2, epsilon = 1e-9 * b1.max(1.0));
    }

    #[test]
    fn arc_diameter_matches_dense_resampling_oracle() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.5, 2, 1.0).unwrap();
        let dense = curve.refined(curve.max_edge_gap() / 10.0).unwrap();
        for &(a, b) in &[(0.05, 0.55), (0.2, 1.3), (0.6, 1.9)] {
            let arc = Arc::new(&cx, &curve, a, b).unwrap();
            let arc_dense = Arc::new(&cx, &dense, a, b).unwrap();
            let (d, dd) = (arc.diameter(), arc_dense.diameter());
            assert!(
                (d - dd).abs() <= 0.01 * dd.max(1e-12),
                "arc [{a},{b}]: {d} vs dense {dd}"
            );
        }
    }

    #[test]
    fn hierarchical_diameter_matches_exact() {
        let cx = ctx();
        let curve = gen_oscillating(&cx, 0.6, 0.5, 4, 1.0)
            .unwrap()
            .refined(5e-4)
            .unwrap();
        assert!(curve.len() > 2000);
        let i1 = curve.len() - 2;
        let fast = diam_over_indices(&cx, &curve, 0, i1, &[]);
        let mut exact: f64 = 0.0;
        for i in 0..=i1 {
            for j in (i + 1)..=i1 {
                exact = exact.max(cx.distance(&curve.point(i), &curve.point(j)));
            }
        }
        assert_abs_diff_eq!(fast, exact, epsilon = 1e-9 * exact.max(1.0));
    }

    #[test]
    fn midpoint_gap_grows_like_sqrt_of_endpoint_gap() {
        // Two unit segments from the origin with small angle gap φ: the
        // Koranyi gap between them is of order sqrt(planar endpoint gap),
        // reproducing the sqrt(ε) mid-segment divergence.
        let cx = ctx();
        let mut prev_ratio = 0.0;
        for &phi in &[0.1, 0.01, 0.001] {
            let l1 = crate::line::HorizontalLine::new(Point::origin(), 0.0);
            let l2 = crate::line::HorizontalLine::new(Point::origin(), phi);
            let mut max_gap: f64 = 0.0;
            for i in 0..=1000 {
                let t = i as f64 / 1000.0;
                max_gap = max_gap.max(cx.distance(&l1.eval(t), &l2.eval(t)));
            }
            let planar_gap = crate::point::planar_distance(&l1.eval(1.0), &l2.eval(1.0));
            assert!(
                max_gap >= 0.3 * planar_gap.sqrt(),
                "phi = {phi}: {max_gap} < 0.3 sqrt({planar_gap})"
            );
            let ratio = max_gap / planar_gap;
            assert!(ratio > prev_ratio, "sqrt amplification must grow as φ shrinks");
            prev_ratio = ratio;
        }
    }
}
