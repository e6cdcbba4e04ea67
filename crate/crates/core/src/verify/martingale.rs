//! The diameter-mass martingale over a cube forest.
//!
//! Each root cube distributes its diameter as mass down the forest: a node's
//! mass splits between its maximal subcubes (proportionally to their
//! diameters) and the remainder `R_Q = Q \ ∪ Q^i` (proportionally to its
//! arclength measure), normalized by `s' = H¹_Γ(R_Q) + Σ diam(Q^i)`. The
//! pointwise density then decays geometrically down chains with ratio
//! `q = 1/(1 + c₀ 2^{-M})`, `c₀ = ε₀/10`, which bounds `Σ_Q diam(Q)` by
//! `(10/ε₀) 2^M H¹(Γ)`.
//!
//! `H¹_Γ` is approximated by the arclength measure of the parametrization
//! restricted to preimages; this over-counts multiplicity, which only
//! strengthens the checked upper bounds.

use crate::curve::Curve;
use crate::error::{Error, Result};
use crate::metric::MetricCtx;
use crate::multires::CubeForest;
use serde::Serialize;
use std::collections::BTreeMap;

/// Smallest integer strictly larger than `M - log2(10 ε₀) + 10`.
pub fn jm_param(m_param: u32, eps0: f64) -> u32 {
    let x = m_param as f64 - (10.0 * eps0).log2() + 10.0;
    (x.floor() as i64 + 1).max(1) as u32
}

/// A cube forest with the martingale masses distributed from every root.
#[derive(Debug)]
pub struct MartingaleTree {
    pub forest: CubeForest,
    pub m_param: u32,
    pub eps0: f64,
    /// Sampled cube diameters.
    pub node_diam: Vec<f64>,
    /// Arclength of the curve inside each cube.
    pub h1_node: Vec<f64>,
    /// Arclength of the curve inside each cube's remainder `R_Q`.
    pub h1_remainder: Vec<f64>,
    /// Edge midpoints used for measure attribution: `(cube chain leaf, length)`
    /// per curve edge and per root is resolved on demand.
    /// Masses per root: `mass[root][node]` is `w_Q(node)`.
    pub mass: Vec<BTreeMap<usize, f64>>,
    /// Mass assigned to the remainder of each node, per root.
    pub remainder_mass: Vec<BTreeMap<usize, f64>>,
    pub roots: Vec<usize>,
}

/// Build the martingale over a cube forest for a curve.
///
/// Fails with a decomposition error if the maximal subcubes of some node are
/// not pairwise disjoint, and with an invariant error if mass must flow into
/// a cube the curve does not enter.
pub fn build_martingale(
    ctx: &MetricCtx,
    curve: &Curve,
    forest: CubeForest,
    m_param: u32,
    eps0: f64,
) -> Result<MartingaleTree> {
    let n_cubes = forest.len();
    // Disjointness of each node's children (the chop-up decomposition).
    for q in 0..n_cubes {
        let ch = &forest.children[q];
        for i in 0..ch.len() {
            for j in (i + 1)..ch.len() {
                if forest.cubes_intersect(ctx, ch[i], ch[j]) {
                    return Err(Error::Invariant(format!(
                        "chop-up decomposition of cube {q}: children {} and {} intersect",
                        ch[i], ch[j]
                    )));
                }
            }
        }
    }

    // Arclength attribution by edge midpoints.
    let n = curve.len();
    let mut h1_node = vec![0.0; n_cubes];
    let mut h1_remainder = vec![0.0; n_cubes];
    for k in 0..n {
        let seg = curve.edge_segment(k);
        let midpoint = seg.eval(0.5);
        let len = curve.param(k + 1) - curve.param(k);
        for q in 0..n_cubes {
            if forest.contains_point(ctx, q, &midpoint) {
                h1_node[q] += len;
                let in_child = forest.children[q]
                    .iter()
                    .any(|&c| forest.contains_point(ctx, c, &midpoint));
                if !in_child {
                    h1_remainder[q] += len;
                }
            }
        }
    }

    let node_diam: Vec<f64> = (0..n_cubes).map(|q| forest.cube_diameter(ctx, q)).collect();
    let roots = forest.roots();
    let mut mass: Vec<BTreeMap<usize, f64>> = Vec::with_capacity(roots.len());
    let mut remainder_mass: Vec<BTreeMap<usize, f64>> = Vec::with_capacity(roots.len());
    for &root in &roots {
        let mut w: BTreeMap<usize, f64> = BTreeMap::new();
        let mut rem: BTreeMap<usize, f64> = BTreeMap::new();
        w.insert(root, node_diam[root]);
        let mut queue = vec![root];
        while let Some(q) = queue.pop() {
            let m = w[&q];
            let s_prime: f64 = h1_remainder[q]
                + forest.children[q]
                    .iter()
                    .map(|&c| node_diam[c])
                    .sum::<f64>();
            if s_prime <= 0.0 {
                if m > 0.0 {
                    return Err(Error::Invariant(format!(
                        "cube {q} carries mass {m} but the curve has no length in it"
                    )));
                }
                continue;
            }
            rem.insert(q, m * h1_remainder[q] / s_prime);
            for &c in &forest.children[q] {
                w.insert(c, m * node_diam[c] / s_prime);
                queue.push(c);
            }
        }
        mass.push(w);
        remainder_mass.push(rem);
    }

    Ok(MartingaleTree {
        forest,
        m_param,
        eps0,
        node_diam,
        h1_node,
        h1_remainder,
        mass,
        remainder_mass,
        roots,
    })
}

/// Verification report for a martingale tree.
#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub nodes: usize,
    pub roots: usize,
    /// Worst relative mass-conservation error over all nodes.
    pub conservation_err: f64,
    /// `w_Q(Q) = diam(Q)` holds exactly at every root (property (i), tight).
    pub integral_ok: bool,
    /// Mass only flows to subcubes (property (iii)).
    pub support_ok: bool,
    /// Max over sampled points of `Σ_Q w_Q(x)` (density form).
    pub pointwise_max: f64,
    /// The bound `(10/ε₀) 2^M`.
    pub pointwise_bound: f64,
    /// `Σ_{Q∈Δ} diam(Q)`.
    pub sum_diam: f64,
    /// `(10/ε₀) 2^M ℓ(γ)` with curve length as the `H¹` surrogate.
    pub sum_diam_bound: f64,
    pub violations: u32,
}

impl MartingaleReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Check mass conservation, the integral and support properties, the
/// pointwise density bound on every curve edge, and the total-diameter bound.
pub fn verify_martingale(
    ctx: &MetricCtx,
    curve: &Curve,
    tree: &MartingaleTree,
) -> Result<MartingaleReport> {
    let forest = &tree.forest;
    let mut report = MartingaleReport {
        nodes: forest.len(),
        roots: tree.roots.len(),
        conservation_err: 0.0,
        integral_ok: true,
        support_ok: true,
        pointwise_max: 0.0,
        pointwise_bound: 10.0 / tree.eps0 * 2f64.powi(tree.m_param as i32),
        sum_diam: tree.node_diam.iter().sum(),
        sum_diam_bound: 0.0,
        violations: 0,
    };
    report.sum_diam_bound = report.pointwise_bound * curve.length(ctx);

    for (ri, &root) in tree.roots.iter().enumerate() {
        let w = &tree.mass[ri];
        let rem = &tree.remainder_mass[ri];
        // (i): the root integral is its diameter, exactly.
        if w[&root] != tree.node_diam[root] {
            report.integral_ok = false;
            report.violations += 1;
        }
        for (&q, &m) in w {
            // (iii): support inside the root cube (subcube membership).
            if q != root && !forest.members[root].contains(&q) {
                report.support_ok = false;
                report.violations += 1;
            }
            // Conservation: mass in = children + remainder.
            let out: f64 = forest.children[q].iter().map(|&c| w[&c]).sum::<f64>()
                + rem.get(&q).copied().unwrap_or(0.0);
            if tree.h1_remainder[q]
                + forest.children[q]
                    .iter()
                    .map(|&c| tree.node_diam[c])
                    .sum::<f64>()
                > 0.0
            {
                let err = (m - out).abs() / m.max(1e-300);
                report.conservation_err = report.conservation_err.max(err);
                if err > 1e-12 {
                    report.violations += 1;
                }
            }
        }
    }

    // Pointwise density bound on every curve edge midpoint:
    // Σ_roots w_root-density(x) <= (10/ε₀) 2^M.
    let n = curve.len();
    for k in 0..n {
        let x = curve.edge_segment(k).eval(0.5);
        let mut total = 0.0;
        for (ri, &root) in tree.roots.iter().enumerate() {
            if !forest.contains_point(ctx, root, &x) {
                continue;
            }
            // Descend to the node whose remainder holds x.
            let mut q = root;
            loop {
                match forest.children[q]
                    .iter()
                    .find(|&&c| forest.contains_point(ctx, c, &x))
                {
                    Some(&c) => q = c,
                    None => break,
                }
            }
            if tree.h1_remainder[q] > 0.0 {
                total += tree.remainder_mass[ri][&q] / tree.h1_remainder[q];
            }
        }
        report.pointwise_max = report.pointwise_max.max(total);
    }
    if report.pointwise_max > report.pointwise_bound * (1.0 + 1e-9) {
        report.violations += 1;
    }
    if report.sum_diam > report.sum_diam_bound * (1.0 + 1e-9) {
        report.violations += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::lift_planar;
    use crate::multires::{build_cubes, Ball};
    use crate::point::Point;
    use approx::assert_abs_diff_eq;

    fn ctx() -> MetricCtx {
        MetricCtx::default()
    }

    #[test]
    fn jm_param_examples() {
        // eps0 = 0.01: M - log2(0.1) + 10 = M + 13.32..., so J_M = M + 14.
        assert_eq!(jm_param(1, 0.01), 15);
        assert_eq!(jm_param(3, 0.01), 17);
        assert_eq!(jm_param(5, 0.01), 19);
    }

    #[test]
    fn leaf_only_tree_is_tight() {
        let cx = ctx();
        let curve = lift_planar(&cx, &[[-0.5, 0.0], [1.5, 0.0]], 0.0)
            .unwrap()
            .refined(0.01)
            .unwrap();
        let ball = Ball {
            center: Point::new(0.5, 0.0, 0.0),
            radius: 0.4,
            level: 0,
        };
        let forest = build_cubes(&cx, &[ball], 10, 3.0);
        let tree = build_martingale(&cx, &curve, forest, 3, 0.01).unwrap();
        // All mass sits on the root's remainder, uniformly.
        assert_abs_diff_eq!(tree.mass[0][&0], tree.node_diam[0], epsilon = 1e-15);
        assert_abs_diff_eq!(
            tree.remainder_mass[0][&0],
            tree.node_diam[0],
            epsilon = 1e-12
        );
        let report = verify_martingale(&cx, &curve, &tree).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn two_children_mass_split_matches_arithmetic() {
        let cx = ctx();
        // Root ball radius 0.5 (diam 1) containing children radius 0.25 and
        // 0.2 (diam 0.5, 0.4); straight curve through everything. The
        // out-and-back doubling makes H1(R) = 2 * one-way remainder length.
        let curve = lift_planar(&cx, &[[-0.3, 0.0], [1.3, 0.0]], 0.0)
            .unwrap()
            .refined(0.002)
            .unwrap();
        let root = Ball {
            center: Point::new(0.5, 0.0, 0.0),
            radius: 0.5,
            level: 0,
        };
        let c1 = Ball {
            center: Point::new(0.25, 0.0, 0.0),
            radius: 0.25,
            level: 5,
        };
        let c2 = Ball {
            center: Point::new(0.75, 0.0, 0.0),
            radius: 0.2,
            level: 5,
        };
        let forest = build_cubes(&cx, &[root, c1, c2], 5, 3.0);
        assert_eq!(forest.parent[1], Some(0));
        assert_eq!(forest.parent[2], Some(0));
        let tree = build_martingale(&cx, &curve, forest, 3, 0.01).unwrap();
        // One-way remainder: [0.5, 0.55] ∪ [0.95, 1.0], length 0.1; doubled.
        assert_abs_diff_eq!(tree.h1_remainder[0], 0.2, epsilon = 0.02);
        let (d0, d1, d2) = (tree.node_diam[0], tree.node_diam[1], tree.node_diam[2]);
        assert_abs_diff_eq!(d0, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(d1, 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(d2, 0.4, epsilon = 1e-6);
        let s_prime = tree.h1_remainder[0] + d1 + d2;
        assert_abs_diff_eq!(tree.mass[0][&1], d0 * d1 / s_prime, epsilon = 1e-12);
        assert_abs_diff_eq!(tree.mass[0][&2], d0 * d2 / s_prime, epsilon = 1e-12);
        assert_abs_diff_eq!(
            tree.remainder_mass[0][&0],
            d0 * tree.h1_remainder[0] / s_prime,
            epsilon = 1e-12
        );
        let report = verify_martingale(&cx, &curve, &tree).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.conservation_err <= 1e-12);
    }

    #[test]
    fn multi_level_tree_respects_pointwise_bound() {
        let cx = ctx();
        // A 4-level nested chain of balls on a straight curve.
        let curve = lift_planar(&cx, &[[-1.5, 0.0], [1.5, 0.0]], 0.0)
            .unwrap()
            .refined(0.003)
            .unwrap();
        let mut balls = Vec::new();
        for lvl in 0..4 {
            let r = 1.0 * 0.25f64.powi(lvl);
            let count = 1 << lvl;
            for i in 0..count {
                let x = -0.8 + 1.6 * (i as f64 + 0.5) / count as f64;
                balls.push(Ball {
                    center: Point::new(x, 0.0, 0.0),
                    radius: r * 0.4,
                    level: 2 * lvl,
                });
            }
        }
        let forest = build_cubes(&cx, &balls, 2, 3.0);
        for m_param in [1u32, 3, 5] {
            let tree =
                build_martingale(&cx, &curve, forest.clone(), m_param, 0.01).unwrap();
            let report = verify_martingale(&cx, &curve, &tree).unwrap();
            assert!(report.passed(), "M = {m_param}: {report:?}");
            assert!(report.pointwise_max <= report.pointwise_bound);
            assert!(report.sum_diam <= report.sum_diam_bound);
        }
    }
}
