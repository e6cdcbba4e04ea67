//! Separated nets, multiresolution ball families, well-separated subfamilies,
//! and dyadic-like cube forests.
//!
//! Nets are greedy max-separated subsets seeded level by level (`X_{n+1} ⊇
//! X_n`). The multiresolution is one ball of radius `A·2^{-n}` per net point
//! per level. Families split the balls so that, within one family, same-radius
//! balls are `κr`-separated as sets and radius ratios lie in `2^{JZ}`. A cube
//! absorbs every same-family ball of smaller-or-equal radius that touches it,
//! yielding a nested, separated forest.

use crate::error::{Error, Result};
use crate::metric::MetricCtx;
use crate::point::Point;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

/// A metric ball of the multiresolution; `radius = A·2^{-level}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
    pub level: i32,
}

impl Ball {
    pub fn contains(&self, ctx: &MetricCtx, p: &Point) -> bool {
        ctx.distance(&self.center, p) <= self.radius
    }

    pub fn intersects(&self, ctx: &MetricCtx, other: &Ball) -> bool {
        ctx.distance(&self.center, &other.center) <= self.radius + other.radius
    }

    /// Ball with the same center and `lambda` times the radius.
    pub fn enlarged(&self, lambda: f64) -> Ball {
        Ball {
            center: self.center,
            radius: self.radius * lambda,
            level: self.level,
        }
    }

    /// Deterministic points on the Koranyi sphere of this ball:
    /// `c · (r s cosφ, r s sinφ, ± r² sqrt(1-s⁴)/sqrt(η))` has distance
    /// exactly `r` from `c`.
    pub fn boundary_points(&self, ctx: &MetricCtx, count: usize) -> Vec<Point> {
        let mut out = Vec::with_capacity(count);
        let r = self.radius;
        for i in 0..count {
            let u = (i as f64 + 0.5) / count as f64;
            let s = (1.0 - u * u).sqrt().sqrt(); // bias toward the equator
            let phi = 2.399_963_229_728_653 * i as f64; // golden angle
            let zmag = r * r * (1.0 - s.powi(4)).max(0.0).sqrt() / ctx.eta.sqrt();
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let v = Point::new(r * s * phi.cos(), r * s * phi.sin(), sign * zmag);
            out.push(self.center.multiply(&v));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// nets
// ---------------------------------------------------------------------------

/// Nested hierarchy of `2^{-n}`-separated nets.
#[derive(Debug, Clone)]
pub struct NetHierarchy {
    pub levels: BTreeMap<i32, Vec<Point>>,
}

/// Planar hash grid; the planar projection is 1-Lipschitz, so Koranyi
/// neighbors within `cell` are always in the 3x3 cell block.
struct PlanarGrid {
    cell: f64,
    map: HashMap<(i64, i64), Vec<usize>>,
}

impl PlanarGrid {
    fn new(cell: f64) -> Self {
        PlanarGrid {
            cell: cell.max(f64::MIN_POSITIVE),
            map: HashMap::new(),
        }
    }

    fn key(&self, p: &Point) -> (i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
        )
    }

    fn insert(&mut self, idx: usize, p: &Point) {
        self.map.entry(self.key(p)).or_default().push(idx);
    }

    fn neighbors(&self, p: &Point) -> impl Iterator<Item = usize> + '_ {
        let (kx, ky) = self.key(p);
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                self.map
                    .get(&(kx + dx, ky + dy))
                    .into_iter()
                    .flatten()
                    .copied()
            })
        })
    }
}

impl NetHierarchy {
    pub fn level(&self, n: i32) -> &[Point] {
        self.levels.get(&n).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Check separation, covering of `K`, and nesting on every level.
    pub fn verify(&self, ctx: &MetricCtx, k_points: &[Point]) -> Result<()> {
        let mut prev: Option<(&i32, &Vec<Point>)> = None;
        for (n, net) in &self.levels {
            let sep = 2f64.powi(-n);
            for i in 0..net.len() {
                for j in (i + 1)..net.len() {
                    if ctx.distance(&net[i], &net[j]) < sep - 1e-12 {
                        return Err(Error::Invariant(format!(
                            "net level {n}: separation violated between {i} and {j}"
                        )));
                    }
                }
            }
            for (ki, k) in k_points.iter().enumerate() {
                if ctx.distance_to_set(k, net.iter()) >= sep {
                    return Err(Error::Invariant(format!(
                        "net level {n}: point {ki} not covered within {sep}"
                    )));
                }
            }
            if let Some((pn, pnet)) = prev {
                if net.len() < pnet.len() || net[..pnet.len()] != pnet[..] {
                    return Err(Error::Invariant(format!(
                        "nesting violated between levels {pn} and {n}"
                    )));
                }
            }
            prev = Some((n, net));
        }
        Ok(())
    }
}

/// Greedy nested nets over the inclusive level range, scanning `K` in input
/// order at every level and seeding each level with the previous one.
/// Assumes `K` is normalized (`diam(K) <= 1`-ish) so the coarsest level stays
/// small.
pub fn build_nets(
    ctx: &MetricCtx,
    k_points: &[Point],
    levels: std::ops::RangeInclusive<i32>,
) -> NetHierarchy {
    let mut out = BTreeMap::new();
    let mut prev: Vec<Point> = Vec::new();
    for n in levels {
        let sep = 2f64.powi(-n);
        let mut net: Vec<Point> = Vec::new();
        let mut grid = PlanarGrid::new(sep);
        let try_insert = |net: &mut Vec<Point>, grid: &mut PlanarGrid, p: &Point| {
            let ok = grid
                .neighbors(p)
                .all(|i| ctx.distance(&net[i], p) >= sep);
            if ok {
                grid.insert(net.len(), p);
                net.push(*p);
            }
        };
        for p in &prev {
            try_insert(&mut net, &mut grid, p);
        }
        for p in k_points {
            try_insert(&mut net, &mut grid, p);
        }
        prev = net.clone();
        out.insert(n, net);
    }
    NetHierarchy { levels: out }
}

/// The multiresolution: one ball of radius `A·2^{-n}` per net point per level.
pub fn multiresolution(nets: &NetHierarchy, a: f64) -> Vec<Ball> {
    let mut out = Vec::new();
    for (n, net) in &nets.levels {
        let r = a * 2f64.powi(-n);
        for p in net {
            out.push(Ball {
                center: *p,
                radius: r,
                level: *n,
            });
        }
    }
    out
}

/// Keep only the fine balls (radius below the cutoff 1/100).
pub fn filter_g(balls: &[Ball]) -> Vec<Ball> {
    balls
        .iter()
        .filter(|b| b.radius < crate::constants::G_RADIUS_CUTOFF)
        .copied()
        .collect()
}

// ---------------------------------------------------------------------------
// family splitting
// ---------------------------------------------------------------------------

/// A partition of a ball collection into well-separated subfamilies.
#[derive(Debug, Clone)]
pub struct BallFamilies {
    pub families: Vec<Vec<Ball>>,
    /// For each input ball (in input order): its `(family, position)`.
    pub assignments: Vec<(usize, usize)>,
    pub j: u32,
    pub kappa: f64,
}

impl BallFamilies {
    /// The number of families actually used (`D'` is reported, not derived
    /// from a closed form).
    pub fn d_prime(&self) -> usize {
        self.families.len()
    }
}

/// Split into families so that within one family (a) radius ratios lie in
/// `2^{JZ}` (levels share a residue mod `J`), and (b) same-radius balls are
/// `κr`-separated as sets: `d(c1,c2) - 2r > κr`.
pub fn split_families(ctx: &MetricCtx, balls: &[Ball], j: u32, kappa: f64) -> Result<BallFamilies> {
    if j == 0 {
        return Err(Error::Domain("split_families: J must be >= 1".into()));
    }
    // (residue, color) -> family accumulator; per (residue, level) greedy
    // coloring with a planar grid per color.
    let mut families: BTreeMap<(u32, usize), Vec<(usize, Ball)>> = BTreeMap::new();
    let mut by_res_level: BTreeMap<(u32, i32), Vec<(usize, Ball)>> = BTreeMap::new();
    for (bi, b) in balls.iter().enumerate() {
        let res = (b.level.rem_euclid(j as i32)) as u32;
        by_res_level.entry((res, b.level)).or_default().push((bi, *b));
    }
    for ((res, _level), lvl_balls) in by_res_level {
        let r = lvl_balls[0].1.radius;
        let min_center_dist = (kappa + 2.0) * r;
        let mut grids: Vec<(PlanarGrid, Vec<Point>)> = Vec::new();
        for (bi, b) in lvl_balls {
            let mut placed = None;
            for (color, (grid, centers)) in grids.iter_mut().enumerate() {
                let ok = grid
                    .neighbors(&b.center)
                    .all(|i| ctx.distance(&centers[i], &b.center) > min_center_dist);
                if ok {
                    grid.insert(centers.len(), &b.center);
                    centers.push(b.center);
                    placed = Some(color);
                    break;
                }
            }
            let color = match placed {
                Some(c) => c,
                None => {
                    let mut grid = PlanarGrid::new(min_center_dist);
                    grid.insert(0, &b.center);
                    grids.push((grid, vec![b.center]));
                    grids.len() - 1
                }
            };
            families.entry((res, color)).or_default().push((bi, b));
        }
    }
    let mut out_families = Vec::with_capacity(families.len());
    let mut assignments = vec![(0usize, 0usize); balls.len()];
    for (fi, members) in families.into_values().enumerate() {
        let mut fam = Vec::with_capacity(members.len());
        for (pos, (bi, b)) in members.into_iter().enumerate() {
            assignments[bi] = (fi, pos);
            fam.push(b);
        }
        out_families.push(fam);
    }
    Ok(BallFamilies {
        families: out_families,
        assignments,
        j,
        kappa,
    })
}

/// Postcondition checker for [`split_families`]: partition, separation and
/// radius-ratio constraints.
pub fn verify_families(ctx: &MetricCtx, input: &[Ball], fam: &BallFamilies) -> Result<()> {
    let total: usize = fam.families.iter().map(|f| f.len()).sum();
    if total != input.len() {
        return Err(Error::Invariant(format!(
            "families do not partition the input: {total} vs {}",
            input.len()
        )));
    }
    for (fi, f) in fam.families.iter().enumerate() {
        for i in 0..f.len() {
            for k in (i + 1)..f.len() {
                let (a, b) = (&f[i], &f[k]);
                let ratio = a.radius / b.radius;
                let log = ratio.log2() / fam.j as f64;
                if (log - log.round()).abs() > 1e-9 {
                    return Err(Error::Invariant(format!(
                        "family {fi}: radius ratio {ratio} not in 2^(JZ)"
                    )));
                }
                if (a.radius - b.radius).abs() <= 1e-12 * a.radius {
                    let gap = ctx.distance(&a.center, &b.center) - 2.0 * a.radius;
                    if gap <= fam.kappa * a.radius {
                        return Err(Error::Invariant(format!(
                            "family {fi}: same-radius balls only {gap} apart"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// cubes
// ---------------------------------------------------------------------------

/// A forest of dyadic-like cubes over one ball family. Each ball generates a
/// cube; a cube is the union of its member balls.
#[derive(Debug, Clone)]
pub struct CubeForest {
    pub balls: Vec<Ball>,
    /// Member ball indices per cube (cube `i` is generated by ball `i`).
    pub members: Vec<Vec<usize>>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub j: u32,
    pub kappa: f64,
}

/// Serializable summary of a forest (ids, radii, parent links).
#[derive(Debug, Serialize)]
pub struct CubeForestSummary {
    pub cubes: Vec<CubeSummary>,
}

#[derive(Debug, Serialize)]
pub struct CubeSummary {
    pub id: usize,
    pub level: i32,
    pub radius: f64,
    pub center: Point,
    pub parent: Option<usize>,
    pub member_count: usize,
}

impl CubeForest {
    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    /// Allowed enlargement: `Q ⊂ (1 + 2^{-J+2}) B`.
    pub fn enlargement_factor(&self) -> f64 {
        1.0 + 2f64.powi(-(self.j as i32) + 2)
    }

    pub fn contains_point(&self, ctx: &MetricCtx, cube: usize, p: &Point) -> bool {
        self.members[cube]
            .iter()
            .any(|&m| self.balls[m].contains(ctx, p))
    }

    pub fn cubes_intersect(&self, ctx: &MetricCtx, a: usize, b: usize) -> bool {
        self.members[a].iter().any(|&ma| {
            self.members[b]
                .iter()
                .any(|&mb| self.balls[ma].intersects(ctx, &self.balls[mb]))
        })
    }

    /// Set distance between two cubes via member balls
    /// (`min d(c,c') - r - r'`, clamped at 0).
    pub fn cube_set_distance(&self, ctx: &MetricCtx, a: usize, b: usize) -> f64 {
        let mut best = f64::INFINITY;
        for &ma in &self.members[a] {
            for &mb in &self.members[b] {
                let d = ctx.distance(&self.balls[ma].center, &self.balls[mb].center)
                    - self.balls[ma].radius
                    - self.balls[mb].radius;
                best = best.min(d);
            }
        }
        best.max(0.0)
    }

    /// Sampled diameter of a cube: max pairwise distance over member-ball
    /// boundary samples plus horizontal antipodes (exact `2r` for single-ball
    /// cubes).
    pub fn cube_diameter(&self, ctx: &MetricCtx, cube: usize) -> f64 {
        let mut pts = Vec::new();
        for &m in &self.members[cube] {
            let b = &self.balls[m];
            pts.push(b.center.multiply(&Point::new(b.radius, 0.0, 0.0)));
            pts.push(b.center.multiply(&Point::new(-b.radius, 0.0, 0.0)));
            pts.push(b.center.multiply(&Point::new(0.0, b.radius, 0.0)));
            pts.push(b.center.multiply(&Point::new(0.0, -b.radius, 0.0)));
            pts.extend(b.boundary_points(ctx, 8));
        }
        ctx.diameter(&pts)
    }

    pub fn summary(&self) -> CubeForestSummary {
        CubeForestSummary {
            cubes: (0..self.len())
                .map(|i| CubeSummary {
                    id: i,
                    level: self.balls[i].level,
                    radius: self.balls[i].radius,
                    center: self.balls[i].center,
                    parent: self.parent[i],
                    member_count: self.members[i].len(),
                })
                .collect(),
        }
    }

    /// Root cubes (no parent).
    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.parent[i].is_none()).collect()
    }

    /// Lemma-style property checks: (1) `B ⊂ Q ⊂ (1+2^{-J+2})B` (member-ball
    /// bound plus sampled boundary points), (2) nesting, (3) same-radius
    /// separation `> (κ-1) r` as sets.
    pub fn verify(&self, ctx: &MetricCtx, boundary_samples: usize) -> Result<()> {
        let lam = self.enlargement_factor();
        for i in 0..self.len() {
            let b = &self.balls[i];
            if !self.members[i].contains(&i) {
                return Err(Error::Invariant(format!("cube {i}: base ball missing")));
            }
            for &m in &self.members[i] {
                let reach = ctx.distance(&b.center, &self.balls[m].center) + self.balls[m].radius;
                if reach > lam * b.radius + 1e-9 * b.radius {
                    return Err(Error::Invariant(format!(
                        "cube {i}: member {m} reaches {reach} > {}",
                        lam * b.radius
                    )));
                }
                for p in self.balls[m].boundary_points(ctx, boundary_samples) {
                    if ctx.distance(&b.center, &p) > lam * b.radius + 1e-9 * b.radius {
                        return Err(Error::Invariant(format!(
                            "cube {i}: sampled boundary point of member {m} escapes (1+2^-J+2)B"
                        )));
                    }
                }
            }
        }
        for i in 0..self.len() {
            for k in 0..self.len() {
                if i == k {
                    continue;
                }
                let (bi, bk) = (&self.balls[i], &self.balls[k]);
                if bi.radius > bk.radius && self.cubes_intersect(ctx, i, k) {
                    let subset = self.members[k].iter().all(|m| self.members[i].contains(m));
                    if !subset {
                        return Err(Error::Invariant(format!(
                            "nesting violated: cube {k} touches larger cube {i} but is not inside"
                        )));
                    }
                }
                if k > i && (bi.radius - bk.radius).abs() <= 1e-12 * bi.radius {
                    let d = self.cube_set_distance(ctx, i, k);
                    if d <= (self.kappa - 1.0) * bi.radius {
                        return Err(Error::Invariant(format!(
                            "same-radius cubes {i},{k} only {d} apart"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Build the cube forest of one family: each cube absorbs, to a fixed point,
/// every family ball of smaller-or-equal radius that intersects it.
/// Terminates because membership grows strictly each round.
pub fn build_cubes(ctx: &MetricCtx, family: &[Ball], j: u32, kappa: f64) -> CubeForest {
    let n = family.len();
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut mem = vec![i];
        let mut in_cube = vec![false; n];
        in_cube[i] = true;
        let mut queue = vec![i];
        while let Some(m) = queue.pop() {
            for cand in 0..n {
                if in_cube[cand] || family[cand].radius > family[i].radius {
                    continue;
                }
                if family[cand].intersects(ctx, &family[m]) {
                    in_cube[cand] = true;
                    mem.push(cand);
                    queue.push(cand);
                }
            }
        }
        mem.sort_unstable();
        members.push(mem);
    }
    // Parent: smallest strictly-larger cube whose member set contains the
    // base ball (equivalent to cube containment for this construction).
    let mut parent: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let mut best: Option<usize> = None;
        for cand in 0..n {
            if family[cand].radius <= family[i].radius {
                continue;
            }
            if members[cand].binary_search(&i).is_ok() {
                best = match best {
                    Some(b) if family[b].radius <= family[cand].radius => Some(b),
                    _ => Some(cand),
                };
            }
        }
        parent[i] = best;
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        if let Some(p) = parent[i] {
            children[p].push(i);
        }
    }
    CubeForest {
        balls: family.to_vec(),
        members,
        parent,
        children,
        j,
        kappa,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> MetricCtx {
        MetricCtx::default()
    }

    #[test]
    fn greedy_net_in_input_order() {
        let cx = ctx();
        let k = [
            Point::origin(),
            Point::new(0.3, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
        ];
        let nets = build_nets(&cx, &k, 1..=1);
        let x1 = nets.level(1);
        assert_eq!(x1.len(), 2);
        assert_eq!(x1[0], Point::origin());
        assert_eq!(x1[1], Point::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn single_point_nets() {
        let cx = ctx();
        let k = [Point::new(0.1, 0.2, 0.0)];
        let nets = build_nets(&cx, &k, 0..=5);
        for n in 0..=5 {
            assert_eq!(nets.level(n), &k[..]);
        }
        nets.verify(&cx, &k).unwrap();
    }

    #[test]
    fn nets_verify_on_random_points() {
        let cx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k: Vec<Point> = (0..200)
            .map(|_| {
                Point::new(
                    rng.gen_range(0.0..0.5),
                    rng.gen_range(0.0..0.5),
                    rng.gen_range(-0.1..0.1),
                )
            })
            .collect();
        let nets = build_nets(&cx, &k, 0..=4);
        nets.verify(&cx, &k).unwrap();
    }

    #[test]
    fn multiresolution_radii_and_g_filter() {
        let cx = ctx();
        let k = [Point::origin()];
        let nets = build_nets(&cx, &k, 0..=3);
        let balls = multiresolution(&nets, 10.0);
        let radii: Vec<f64> = balls.iter().map(|b| b.radius).collect();
        assert_eq!(radii, vec![10.0, 5.0, 2.5, 1.25]);
        assert!(filter_g(&balls).is_empty());

        let nets11 = build_nets(&cx, &k, 0..=11);
        let balls11 = multiresolution(&nets11, 10.0);
        let g = filter_g(&balls11);
        // 10·2^-n < 1/100 iff n >= 10.
        assert_eq!(g.len(), 2);
        assert!(g.iter().all(|b| b.level >= 10));
        let n_total: usize = nets11.levels.values().map(|v| v.len()).sum();
        assert_eq!(balls11.len(), n_total);
    }

    fn ball(x: f64, y: f64, r: f64, level: i32) -> Ball {
        Ball {
            center: Point::new(x, y, 0.0),
            radius: r,
            level,
        }
    }

    #[test]
    fn same_radius_close_balls_split_apart() {
        let cx = ctx();
        // Set separation kappa*r requires center distance > (kappa+2) r = 5r.
        let close = [ball(0.0, 0.0, 1.0, 0), ball(2.0, 0.0, 1.0, 0)];
        let fam = split_families(&cx, &close, 100, 3.0).unwrap();
        assert_eq!(fam.d_prime(), 2);
        verify_families(&cx, &close, &fam).unwrap();

        let far = [ball(0.0, 0.0, 1.0, 0), ball(5.5, 0.0, 1.0, 0)];
        let fam = split_families(&cx, &far, 100, 3.0).unwrap();
        assert_eq!(fam.d_prime(), 1);
        verify_families(&cx, &far, &fam).unwrap();
    }

    #[test]
    fn families_partition_random_multiresolution() {
        let cx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k: Vec<Point> = (0..150)
            .map(|_| {
                Point::new(
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(-0.2..0.2),
                )
            })
            .collect();
        let nets = build_nets(&cx, &k, 0..=6);
        let balls = multiresolution(&nets, 10.0);
        assert!(balls.len() >= 100);
        let fam = split_families(&cx, &balls, 100, 3.0).unwrap();
        verify_families(&cx, &balls, &fam).unwrap();
    }

    #[test]
    fn singleton_family_cube_is_its_ball() {
        let cx = ctx();
        let fam = [ball(0.0, 0.0, 1.0, 0)];
        let forest = build_cubes(&cx, &fam, 10, 3.0);
        assert_eq!(forest.members, vec![vec![0]]);
        assert_eq!(forest.parent, vec![None]);
        forest.verify(&cx, 32).unwrap();
        assert_abs_diff_eq!(forest.cube_diameter(&cx, 0), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn two_far_balls_make_two_roots() {
        let cx = ctx();
        let fam = [ball(0.0, 0.0, 1.0, 0), ball(50.0, 0.0, 1.0, 0)];
        let forest = build_cubes(&cx, &fam, 10, 3.0);
        assert_eq!(forest.roots(), vec![0, 1]);
        assert!(!forest.cubes_intersect(&cx, 0, 1));
        forest.verify(&cx, 32).unwrap();
    }

    #[test]
    fn absorption_nests_small_touching_balls() {
        let cx = ctx();
        let j = 4u32;
        // One big ball and two small ones a level (factor 2^-J) down: the one
        // touching the big ball is absorbed, the far one is its own root.
        let r_small = 2f64.powi(-(j as i32));
        let fam = [
            ball(0.0, 0.0, 1.0, 0),
            ball(1.0 + r_small * 0.5, 0.0, r_small, j as i32),
            ball(10.0, 0.0, r_small, j as i32),
        ];
        let forest = build_cubes(&cx, &fam, j, 3.0);
        assert_eq!(forest.members[0], vec![0, 1]);
        assert_eq!(forest.parent[1], Some(0));
        assert_eq!(forest.parent[2], None);
        forest.verify(&cx, 32).unwrap();
    }

    #[test]
    fn diam_scaling_under_enlargement() {
        // diam(λB) <= λ diam(B) for λ > 1, diameters by sampled sup.
        let cx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let b = Ball {
                center: Point::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                radius: rng.gen_range(0.1..2.0),
                level: 0,
            };
            let lam = rng.gen_range(1.0..4.0);
            let d1 = cx.diameter(&b.boundary_points(&cx, 64));
            let d2 = cx.diameter(&b.enlarged(lam).boundary_points(&cx, 64));
            assert!(d2 <= lam * d1 + 1e-9);
        }
    }

    #[test]
    fn random_family_cube_audit() {
        let cx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k: Vec<Point> = (0..200)
            .map(|_| {
                Point::new(
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(-0.3..0.3),
                )
            })
            .collect();
        let nets = build_nets(&cx, &k, 0..=7);
        let balls = multiresolution(&nets, 2.5);
        let fams = split_families(&cx, &balls, 10, 3.0).unwrap();
        let mut cubes_checked = 0;
        for fam in &fams.families {
            let forest = build_cubes(&cx, fam, 10, 3.0);
            forest.verify(&cx, 100).unwrap();
            cubes_checked += forest.len();
        }
        assert!(cubes_checked >= 200, "only {cubes_checked} cubes");
    }
}
