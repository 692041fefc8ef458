//! Independent brute-force reference implementations used for verification.
//! Deliberately simple, pure, and free of any cost accounting; allowed to be
//! O(n⁴) at desk scale.

use crate::error::{MeshError, Result};
use crate::geometry::{z_index, Coord, GridGeometry};
use crate::image::{Color, ImageGrid};
use std::collections::{BTreeMap, VecDeque};

/// Per-pixel figure labels; a label is the minimal z-index of the figure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub n: u32,
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn get(&self, c: Coord) -> u32 {
        self.labels[(c.y * self.n + c.x) as usize]
    }

    pub fn to_text_grid(&self) -> String {
        let mut out = String::new();
        for y in 0..self.n {
            for x in 0..self.n {
                if x > 0 {
                    out.push(' ');
                }
                out.push_str(&self.get(Coord::new(x, y)).to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Labels plus per-pixel rank, figure size, and breakpoint links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrongLabels {
    pub labels: LabelMap,
    pub rank: Vec<u32>,
    pub figure_size: Vec<u32>,
    /// Breakpoint cell → location of the next breakpoint of the same figure.
    pub next_breakpoint: BTreeMap<Coord, Coord>,
}

impl StrongLabels {
    pub fn n(&self) -> u32 {
        self.labels.n
    }

    pub fn rank_at(&self, c: Coord) -> u32 {
        self.rank[(c.y * self.n() + c.x) as usize]
    }

    pub fn size_at(&self, c: Coord) -> u32 {
        self.figure_size[(c.y * self.n() + c.x) as usize]
    }
}

/// Canonical figure labeling by flood fill; ground truth for all labelers.
pub fn bfs_label(image: &ImageGrid) -> LabelMap {
    bfs_label_geom(image, &GridGeometry::new(image.n(), Default::default()).unwrap())
}

pub fn bfs_label_geom(image: &ImageGrid, geom: &GridGeometry) -> LabelMap {
    let n = image.n();
    let mut labels = vec![u32::MAX; (n * n) as usize];
    for z in 0..n * n {
        let start = crate::geometry::z_coords(z, n).unwrap();
        let sidx = (start.y * n + start.x) as usize;
        if labels[sidx] != u32::MAX {
            continue;
        }
        let color = image.get(start);
        let mut queue = VecDeque::from([start]);
        labels[sidx] = z;
        while let Some(c) = queue.pop_front() {
            for nb in geom.neighbors(c) {
                let nidx = (nb.y * n + nb.x) as usize;
                if labels[nidx] == u32::MAX && image.get(nb) == color {
                    labels[nidx] = z;
                    queue.push_back(nb);
                }
            }
        }
    }
    LabelMap { n, labels }
}

/// Ground-truth strong labeling: per-figure pixel sort by z-index.
pub fn rank_oracle(image: &ImageGrid) -> StrongLabels {
    let labels = bfs_label(image);
    let n = image.n();
    let mut groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for z in 0..n * n {
        let c = crate::geometry::z_coords(z, n).unwrap();
        groups.entry(labels.get(c)).or_default().push(z);
    }
    let mut rank = vec![0u32; (n * n) as usize];
    let mut size = vec![0u32; (n * n) as usize];
    let mut next_breakpoint = BTreeMap::new();
    for (_, zs) in groups {
        // Entries are pushed in increasing z, so zs is already sorted.
        let figure_size = zs.len() as u32;
        for (r, &z) in zs.iter().enumerate() {
            let c = crate::geometry::z_coords(z, n).unwrap();
            rank[(c.y * n + c.x) as usize] = r as u32;
            size[(c.y * n + c.x) as usize] = figure_size;
        }
        if figure_size > n {
            // Ranks that are multiples of n are breakpoints; each links to
            // the next breakpoint when one exists.
            let mut r = 0u32;
            while r + n < figure_size {
                let here = crate::geometry::z_coords(zs[r as usize], n).unwrap();
                let next = crate::geometry::z_coords(zs[(r + n) as usize], n).unwrap();
                next_breakpoint.insert(here, next);
                r += n;
            }
        }
    }
    StrongLabels {
        labels,
        rank,
        figure_size: size,
        next_breakpoint,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    L2,
    Linf,
}

impl Metric {
    /// Comparable distance measure: L1/L∞ in plain units, L2 in squared
    /// integer form (no floating point anywhere).
    pub fn measure(&self, a: Coord, b: Coord) -> u64 {
        let dx = a.x.abs_diff(b.x) as u64;
        let dy = a.y.abs_diff(b.y) as u64;
        match self {
            Metric::L1 => dx + dy,
            Metric::L2 => dx * dx + dy * dy,
            Metric::Linf => dx.max(dy),
        }
    }
}

/// Per-pixel nearest qualifying location (None when no candidate exists).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NearestMap {
    pub n: u32,
    pub metric: Metric,
    pub nearest: Vec<Option<Coord>>,
}

impl NearestMap {
    pub fn get(&self, c: Coord) -> Option<Coord> {
        self.nearest[(c.y * self.n + c.x) as usize]
    }

    /// Distance-level equality: locations may differ only among ties.
    pub fn distances_match(&self, other: &NearestMap) -> bool {
        if self.n != other.n || self.metric != other.metric {
            return false;
        }
        for y in 0..self.n {
            for x in 0..self.n {
                let c = Coord::new(x, y);
                let d = |m: &NearestMap| m.get(c).map(|q| m.metric.measure(c, q));
                if d(self) != d(other) {
                    return false;
                }
            }
        }
        true
    }
}

/// Which pixels qualify as candidates for a nearest-point query.
pub enum NearestPredicate<'a> {
    /// Pixels of the given color.
    OfColor(Color),
    /// Pixels whose label differs from the query pixel's own non-empty label.
    DifferingLabel(&'a [Option<u32>]),
    /// Pixels with the query pixel's color, excluding the pixel itself.
    SimilarExcludingSelf,
}

/// All-pairs nearest scan; O(n⁴) permitted at desk scale.
pub fn brute_nearest(
    image: &ImageGrid,
    predicate: &NearestPredicate<'_>,
    metric: Metric,
) -> NearestMap {
    let n = image.n();
    let mut nearest = vec![None; (n * n) as usize];
    for p in image.coords() {
        let mut best: Option<(u64, u32, Coord)> = None;
        for q in image.coords() {
            let qualifies = match predicate {
                NearestPredicate::OfColor(c) => image.get(q) == *c,
                NearestPredicate::DifferingLabel(labels) => {
                    let lp = labels[(p.y * n + p.x) as usize];
                    let lq = labels[(q.y * n + q.x) as usize];
                    lq.is_some() && lp.is_some() && lq != lp
                }
                NearestPredicate::SimilarExcludingSelf => q != p && image.get(q) == image.get(p),
            };
            if !qualifies {
                continue;
            }
            let d = metric.measure(p, q);
            let zq = z_index(q, n).unwrap();
            // Tie-break on the smallest z-index so the oracle is canonical.
            if best.map(|(bd, bz, _)| (d, zq) < (bd, bz)).unwrap_or(true) {
                best = Some((d, zq, q));
            }
        }
        nearest[(p.y * n + p.x) as usize] = best.map(|(_, _, q)| q);
    }
    NearestMap { n, metric, nearest }
}

/// Per-figure containment facts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestingInfo {
    /// Figure label → label of the smallest container, if any.
    pub container: BTreeMap<u32, Option<u32>>,
    /// Figure label → number of figures containing it.
    pub level: BTreeMap<u32, u32>,
}

/// Containment by definition: G contains F iff removing G's pixels
/// disconnects F from the image border.
pub fn nesting_oracle(image: &ImageGrid) -> NestingInfo {
    let labels = bfs_label(image);
    let n = image.n();
    let geom = GridGeometry::new(n, Default::default()).unwrap();
    let mut figures: Vec<u32> = labels.labels.clone();
    figures.sort_unstable();
    figures.dedup();
    // For each figure G: flood from the border over non-G pixels; any figure
    // with an unreached pixel is contained in G.
    let mut contained_in: BTreeMap<u32, Vec<u32>> =
        figures.iter().map(|&f| (f, Vec::new())).collect();
    for &g in &figures {
        let mut reached = vec![false; (n * n) as usize];
        let mut queue = VecDeque::new();
        for y in 0..n {
            for x in 0..n {
                if x == 0 || y == 0 || x == n - 1 || y == n - 1 {
                    let c = Coord::new(x, y);
                    let i = (y * n + x) as usize;
                    if labels.get(c) != g && !reached[i] {
                        reached[i] = true;
                        queue.push_back(c);
                    }
                }
            }
        }
        while let Some(c) = queue.pop_front() {
            for nb in geom.neighbors(c) {
                let i = (nb.y * n + nb.x) as usize;
                if !reached[i] && labels.get(nb) != g {
                    reached[i] = true;
                    queue.push_back(nb);
                }
            }
        }
        for &f in &figures {
            if f == g {
                continue;
            }
            let anchor = crate::geometry::z_coords(f, n).unwrap();
            if !reached[(anchor.y * n + anchor.x) as usize] {
                contained_in.get_mut(&f).unwrap().push(g);
            }
        }
    }
    let mut container = BTreeMap::new();
    let mut level = BTreeMap::new();
    for &f in &figures {
        let blockers = &contained_in[&f];
        level.insert(f, blockers.len() as u32);
        // Containers are totally ordered; the smallest has the deepest level.
        let smallest = blockers
            .iter()
            .max_by_key(|g| contained_in[g].len())
            .copied();
        container.insert(f, smallest);
    }
    NestingInfo { container, level }
}

/// Smallest same-color container: first same-color figure on the container
/// chain. Only defined for black/white images.
pub fn same_color_container_oracle(image: &ImageGrid) -> Result<BTreeMap<u32, Option<u32>>> {
    if !image.is_two_color() {
        return Err(MeshError::domain(
            "same-color containment is defined for black/white images only",
        ));
    }
    let info = nesting_oracle(image);
    let n = image.n();
    let color_of = |label: u32| -> Color {
        let c = crate::geometry::z_coords(label, n).unwrap();
        image.get(c)
    };
    let mut out = BTreeMap::new();
    for (&f, _) in &info.container {
        let my_color = color_of(f);
        let mut cur = info.container[&f];
        while let Some(g) = cur {
            if color_of(g) == my_color {
                break;
            }
            cur = info.container[&g];
        }
        out.insert(f, cur);
    }
    Ok(out)
}

/// Flood-fill reachability between two path cells of a black/white maze.
pub fn reach_oracle(image: &ImageGrid, start: Coord, stop: Coord) -> Result<bool> {
    for (name, c) in [("start", start), ("stop", stop)] {
        if image.get(c) != 0 {
            return Err(MeshError::domain(format!(
                "{name} cell ({}, {}) is blocked",
                c.x, c.y
            )));
        }
    }
    let labels = bfs_label(image);
    Ok(labels.get(start) == labels.get(stop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{generate, Generator};

    #[test]
    fn uniform_image_single_label() {
        let img = ImageGrid::filled(4, 5).unwrap();
        let lm = bfs_label(&img);
        assert!(lm.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn checkerboard_has_distinct_labels() {
        let mut img = ImageGrid::filled(4, 0).unwrap();
        for c in img.coords().collect::<Vec<_>>() {
            img.set(c, ((c.x + c.y) % 2) as u16);
        }
        let lm = bfs_label(&img);
        for c in img.coords() {
            assert_eq!(lm.get(c), z_index(c, 4).unwrap());
        }
    }

    #[test]
    fn rank_of_uniform_image_is_z_order() {
        let img = ImageGrid::filled(4, 1).unwrap();
        let strong = rank_oracle(&img);
        for c in img.coords() {
            assert_eq!(strong.rank_at(c), z_index(c, 4).unwrap());
            assert_eq!(strong.size_at(c), 16);
        }
        // Size 16 > n=4: breakpoints at ranks 0, 4, 8, 12; links 0→4→8→12.
        assert_eq!(strong.next_breakpoint.len(), 3);
    }

    #[test]
    fn small_figure_has_no_breakpoints() {
        let mut img = ImageGrid::filled(4, 0).unwrap();
        for &(x, y) in &[(0, 0), (1, 0), (0, 1), (1, 1), (2, 0)] {
            img.set(Coord::new(x, y), 1);
        }
        let strong = rank_oracle(&img);
        // The 5-pixel figure has ranks 0..4 (size 5 > n=4 → breakpoint at 0
        // links to rank 4).
        let leader = Coord::new(0, 0);
        assert_eq!(strong.rank_at(leader), 0);
        assert_eq!(strong.size_at(leader), 5);
    }

    #[test]
    fn brute_nearest_single_candidate() {
        let mut img = ImageGrid::filled(8, 0).unwrap();
        img.set(Coord::new(2, 3), 1);
        let nm = brute_nearest(&img, &NearestPredicate::OfColor(1), Metric::L1);
        for c in img.coords() {
            assert_eq!(nm.get(c), Some(Coord::new(2, 3)));
        }
    }

    #[test]
    fn brute_nearest_no_candidate() {
        let img = ImageGrid::filled(4, 0).unwrap();
        let nm = brute_nearest(&img, &NearestPredicate::OfColor(1), Metric::Linf);
        assert!(nm.nearest.iter().all(|v| v.is_none()));
    }

    #[test]
    fn metric_sandwich_on_random_images() {
        for seed in 0..5 {
            let img = generate(Generator::Bernoulli { density_pct: 10 }, 16, seed).unwrap();
            let l1 = brute_nearest(&img, &NearestPredicate::OfColor(1), Metric::L1);
            let l2 = brute_nearest(&img, &NearestPredicate::OfColor(1), Metric::L2);
            let li = brute_nearest(&img, &NearestPredicate::OfColor(1), Metric::Linf);
            for c in img.coords() {
                let (Some(a), Some(b), Some(i)) = (l1.get(c), l2.get(c), li.get(c)) else {
                    continue;
                };
                let d1 = Metric::L1.measure(c, a) as f64;
                let d2 = (Metric::L2.measure(c, b) as f64).sqrt();
                let di = Metric::Linf.measure(c, i) as f64;
                assert!(di <= d2 + 1e-9 && d2 <= d1 + 1e-9);
            }
        }
    }

    #[test]
    fn nesting_dot_ring_background() {
        // Background 0 around a ring 1 around a dot 0... use 3 colors to get
        // distinct figures: bg 0, ring 1, dot 2.
        let mut img = ImageGrid::filled(8, 0).unwrap();
        for x in 2..=4 {
            for y in 2..=4 {
                img.set(Coord::new(x, y), 1);
            }
        }
        img.set(Coord::new(3, 3), 2);
        let labels = bfs_label(&img);
        let info = nesting_oracle(&img);
        let bg = labels.get(Coord::new(0, 0));
        let ring = labels.get(Coord::new(2, 2));
        let dot = labels.get(Coord::new(3, 3));
        assert_eq!(info.level[&bg], 0);
        assert_eq!(info.container[&bg], None);
        assert_eq!(info.level[&ring], 1);
        assert_eq!(info.container[&ring], Some(bg));
        assert_eq!(info.level[&dot], 2);
        assert_eq!(info.container[&dot], Some(ring));
    }

    #[test]
    fn u_shape_does_not_contain_dot() {
        // U of color 1 open to the north; dot color 2 inside the bay.
        let mut img = ImageGrid::filled(8, 0).unwrap();
        for y in 2..=5 {
            img.set(Coord::new(2, y), 1);
            img.set(Coord::new(4, y), 1);
        }
        img.set(Coord::new(3, 5), 1);
        img.set(Coord::new(3, 3), 2);
        let labels = bfs_label(&img);
        let info = nesting_oracle(&img);
        let u = labels.get(Coord::new(2, 2));
        let dot = labels.get(Coord::new(3, 3));
        let bg = labels.get(Coord::new(0, 0));
        // The dot escapes through the bay mouth, so only the background
        // contains it.
        assert_eq!(info.level[&dot], 1);
        assert_eq!(info.container[&dot], Some(bg));
        assert_eq!(info.level[&u], 1);
    }

    #[test]
    fn reach_oracle_examples() {
        let img = ImageGrid::filled(8, 0).unwrap();
        assert!(reach_oracle(&img, Coord::new(0, 0), Coord::new(7, 7)).unwrap());
        let mut walled = ImageGrid::filled(8, 0).unwrap();
        for x in 0..8 {
            walled.set(Coord::new(x, 4), 1);
        }
        assert!(!reach_oracle(&walled, Coord::new(0, 0), Coord::new(7, 7)).unwrap());
        assert!(reach_oracle(&walled, Coord::new(0, 0), Coord::new(0, 4)).is_err());
    }
}
