use std::f64::consts::{FRAC_PI_2, PI};

use crate::imaging::{orientation_diff, EdgeMap, EdgePixel};

/// Affinity exponent.
pub const AFFINITY_GAMMA: i32 = 2;
/// Affinities below this are not stored.
pub const MIN_AFFINITY: f64 = 0.05;
/// Groups are adjacent when some member pixels are this close (Chebyshev).
pub const ADJACENCY_RADIUS: i64 = 2;

/// A chain of connected edge pixels with bounded orientation change.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGroup {
    pub pixels: Vec<EdgePixel>,
    /// Magnitude-weighted mean of the member pixel centers.
    pub mean: (f64, f64),
    /// Magnitude-weighted mean orientation (doubled-angle average), in `[0, pi)`.
    pub orientation: f64,
    /// Sum of member magnitudes.
    pub magnitude: f64,
    /// Inclusive pixel extent `(min_x, min_y, max_x, max_y)`.
    pub extent: (u32, u32, u32, u32),
}

impl EdgeGroup {
    fn from_pixels(pixels: Vec<EdgePixel>) -> Self {
        let mut m = 0.0;
        let (mut sx, mut sy, mut sc, mut ss) = (0.0, 0.0, 0.0, 0.0);
        let mut extent = (u32::MAX, u32::MAX, 0, 0);
        for p in &pixels {
            m += p.magnitude;
            sx += p.magnitude * (p.x as f64 + 0.5);
            sy += p.magnitude * (p.y as f64 + 0.5);
            sc += p.magnitude * (2.0 * p.orientation).cos();
            ss += p.magnitude * (2.0 * p.orientation).sin();
            extent.0 = extent.0.min(p.x);
            extent.1 = extent.1.min(p.y);
            extent.2 = extent.2.max(p.x);
            extent.3 = extent.3.max(p.y);
        }
        let orientation = (0.5 * ss.atan2(sc)).rem_euclid(PI);
        Self {
            mean: (sx / m, sy / m),
            orientation: if orientation >= PI { 0.0 } else { orientation },
            magnitude: m,
            extent,
            pixels,
        }
    }
}

const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Greedy 8-connected grouping. Seeds are taken in raster order; a group
/// absorbs an unassigned neighbor while the summed orientation change over
/// all its merges stays strictly below pi/2, so a full right-angle turn always
/// starts a new group.
pub fn group_edges(e: &EdgeMap) -> Vec<EdgeGroup> {
    let (w, h) = (e.width as i64, e.height as i64);
    // -1: no edge, -2: unassigned edge, >= 0: group id
    let mut label = vec![-1i64; e.width * e.height];
    let mut index = vec![usize::MAX; e.width * e.height];
    for (k, p) in e.pixels.iter().enumerate() {
        let i = p.y as usize * e.width + p.x as usize;
        label[i] = -2;
        index[i] = k;
    }

    let mut groups = Vec::new();
    let mut stack = Vec::new();
    for seed in &e.pixels {
        let si = seed.y as usize * e.width + seed.x as usize;
        if label[si] != -2 {
            continue;
        }
        let gid = groups.len() as i64;
        label[si] = gid;
        let mut members = vec![*seed];
        let mut turned = 0.0;
        stack.clear();
        stack.push(*seed);
        while let Some(q) = stack.pop() {
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (q.x as i64 + dx, q.y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let ni = (ny * w + nx) as usize;
                if label[ni] != -2 {
                    continue;
                }
                let n = e.pixels[index[ni]];
                let d = orientation_diff(q.orientation, n.orientation);
                if turned + d >= FRAC_PI_2 {
                    continue;
                }
                turned += d;
                label[ni] = gid;
                members.push(n);
                stack.push(n);
            }
        }
        groups.push(EdgeGroup::from_pixels(members));
    }
    groups
}

/// Sparse symmetric affinity map between edge groups.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffinityGraph {
    adjacency: Vec<Vec<(u32, f64)>>,
}

impl AffinityGraph {
    pub fn with_groups(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Inserts a symmetric edge; values below [`MIN_AFFINITY`] are dropped.
    pub fn insert(&mut self, i: usize, j: usize, a: f64) {
        if i == j || a < MIN_AFFINITY {
            return;
        }
        let a = a.clamp(0.0, 1.0);
        for (x, y) in [(i, j), (j, i)] {
            let list = &mut self.adjacency[x];
            match list.binary_search_by_key(&(y as u32), |e| e.0) {
                Ok(pos) => list[pos].1 = a,
                Err(pos) => list.insert(pos, (y as u32, a)),
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&(j as u32), |e| e.0)
            .map(|pos| self.adjacency[i][pos].1)
            .unwrap_or(0.0)
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.adjacency[i]
    }

    pub fn group_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// `|cos(theta_i - theta_ij) * cos(theta_j - theta_ij)|^gamma`, where
/// `theta_ij` is the direction of the line joining the two group means.
pub fn pair_affinity(gi: &EdgeGroup, gj: &EdgeGroup) -> f64 {
    let dx = gj.mean.0 - gi.mean.0;
    let dy = gj.mean.1 - gi.mean.1;
    let theta_ij = dy.atan2(dx).rem_euclid(PI);
    affinity_closed_form(gi.orientation, gj.orientation, theta_ij)
}

#[inline]
pub fn affinity_closed_form(theta_i: f64, theta_j: f64, theta_ij: f64) -> f64 {
    ((theta_i - theta_ij).cos() * (theta_j - theta_ij).cos())
        .abs()
        .powi(AFFINITY_GAMMA)
        .min(1.0)
}

/// Affinities between groups whose member pixels come within
/// [`ADJACENCY_RADIUS`] of each other.
pub fn compute_affinities(groups: &[EdgeGroup], width: usize, height: usize) -> AffinityGraph {
    let mut label = vec![u32::MAX; width * height];
    for (g, group) in groups.iter().enumerate() {
        for p in &group.pixels {
            label[p.y as usize * width + p.x as usize] = g as u32;
        }
    }
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let r = ADJACENCY_RADIUS;
    for (g, group) in groups.iter().enumerate() {
        for p in &group.pixels {
            for dy in -r..=r {
                let y = p.y as i64 + dy;
                if y < 0 || y >= height as i64 {
                    continue;
                }
                for dx in -r..=r {
                    let x = p.x as i64 + dx;
                    if x < 0 || x >= width as i64 {
                        continue;
                    }
                    let other = label[y as usize * width + x as usize];
                    if other != u32::MAX && other as usize > g {
                        pairs.push((g as u32, other));
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();

    let mut graph = AffinityGraph::with_groups(groups.len());
    for (i, j) in pairs {
        let a = pair_affinity(&groups[i as usize], &groups[j as usize]);
        graph.insert(i as usize, j as usize, a);
    }
    graph
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(x: u32, y: u32, orientation: f64) -> EdgePixel {
        EdgePixel {
            x,
            y,
            magnitude: 1.0,
            orientation,
        }
    }

    fn map(w: usize, h: usize, mut pixels: Vec<EdgePixel>) -> EdgeMap {
        pixels.sort_by_key(|p| (p.y, p.x));
        EdgeMap {
            width: w,
            height: h,
            pixels,
        }
    }

    #[test]
    fn empty_map_has_no_groups() {
        assert!(group_edges(&EdgeMap::default()).is_empty());
    }

    #[test]
    fn straight_segment_is_one_group() {
        let e = map(40, 10, (5..25).map(|x| px(x, 4, 0.0)).collect());
        let g = group_edges(&e);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].pixels.len(), 20);
        assert!((g[0].magnitude - 20.0).abs() < 1e-12);
        assert_eq!(g[0].extent, (5, 4, 24, 4));
    }

    #[test]
    fn square_outline_splits_at_corners() {
        // tangents: horizontal sides 0, vertical sides pi/2, corners pi/4 or 3pi/4
        let mut pixels = Vec::new();
        let (a, b) = (5u32, 25u32);
        for x in a..=b {
            for y in [a, b] {
                let corner = x == a || x == b;
                let o = if corner {
                    if (x == a) == (y == a) {
                        3.0 * PI / 4.0
                    } else {
                        PI / 4.0
                    }
                } else {
                    0.0
                };
                pixels.push(px(x, y, o));
            }
        }
        for y in a + 1..b {
            pixels.push(px(a, y, FRAC_PI_2));
            pixels.push(px(b, y, FRAC_PI_2));
        }
        let e = map(32, 32, pixels);

        // oracle: walk the closed outline in order, summing orientation changes
        let mut ring = Vec::new();
        ring.extend((a..=b).map(|x| (x, a)));
        ring.extend((a + 1..=b).map(|y| (b, y)));
        ring.extend((a..b).rev().map(|x| (x, b)));
        ring.extend((a + 1..b).rev().map(|y| (a, y)));
        let lookup = |x: u32, y: u32| e.pixels.iter().find(|p| p.x == x && p.y == y).unwrap().orientation;
        let total: f64 = (0..ring.len())
            .map(|i| {
                let (x0, y0) = ring[i];
                let (x1, y1) = ring[(i + 1) % ring.len()];
                orientation_diff(lookup(x0, y0), lookup(x1, y1))
            })
            .sum();
        assert!((total - 2.0 * PI).abs() < 1e-9);
        let lower_bound = (total / FRAC_PI_2).floor() as usize;

        let groups = group_edges(&e);
        assert!(groups.len() >= lower_bound, "{} groups", groups.len());
        let members: usize = groups.iter().map(|g| g.pixels.len()).sum();
        assert_eq!(members, e.len());
    }

    #[test]
    fn affinity_closed_form_examples() {
        assert!((affinity_closed_form(0.3, 0.3, 0.3) - 1.0).abs() < 1e-12);
        assert!(affinity_closed_form(0.0, FRAC_PI_2, 0.0) < 1e-12);
        let v = affinity_closed_form(PI / 4.0, 0.0, 0.0);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn collinear_and_perpendicular_segments() {
        // two collinear horizontal runs with a one-pixel gap
        let mut pixels: Vec<_> = (2..12).map(|x| px(x, 5, 0.0)).collect();
        pixels.extend((13..23).map(|x| px(x, 5, 0.0)));
        let e = map(30, 12, pixels);
        let g = group_edges(&e);
        assert_eq!(g.len(), 2);
        let aff = compute_affinities(&g, 30, 12);
        assert!((aff.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(aff.get(0, 1), aff.get(1, 0));

        // an L: horizontal run meeting a vertical run
        let mut pixels: Vec<_> = (2..12).map(|x| px(x, 20, 0.0)).collect();
        pixels.extend((8..20).map(|y| px(13, y, FRAC_PI_2)));
        let e = map(30, 30, pixels);
        let g = group_edges(&e);
        assert_eq!(g.len(), 2);
        let theta_ij = (g[1].mean.1 - g[0].mean.1).atan2(g[1].mean.0 - g[0].mean.0).rem_euclid(PI);
        let expected = affinity_closed_form(g[0].orientation, g[1].orientation, theta_ij);
        let aff = compute_affinities(&g, 30, 30);
        // perpendicular groups have at most 1/4 affinity for any joining line
        assert!(expected <= 0.25 + 1e-12);
        if expected >= MIN_AFFINITY {
            assert!((aff.get(0, 1) - expected).abs() < 1e-12);
        } else {
            assert_eq!(aff.get(0, 1), 0.0);
        }
    }

    #[test]
    fn corner_meeting_at_right_angle_along_axis() {
        // groups meet end to end along the x axis: one horizontal, one vertical
        let g0 = EdgeGroup::from_pixels((0..10).map(|x| px(x, 0, 0.0)).collect());
        let g1 = EdgeGroup::from_pixels(vec![px(20, 0, FRAC_PI_2)]);
        assert!(pair_affinity(&g0, &g1) < 1e-12);
    }

    #[test]
    fn distant_groups_are_not_adjacent() {
        let mut pixels: Vec<_> = (2..6).map(|x| px(x, 5, 0.0)).collect();
        pixels.extend((10..14).map(|x| px(x, 5, 0.0)));
        let e = map(20, 10, pixels);
        let g = group_edges(&e);
        let aff = compute_affinities(&g, 20, 10);
        assert_eq!(aff.edge_count(), 0);
    }
}
