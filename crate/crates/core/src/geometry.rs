//! Grid geometry: coordinates, z-order (Morton) indexing, quadtree-aligned
//! decompositions of z-index intervals, and boundary walks of those regions.

use crate::error::{MeshError, Result};
use serde::{Deserialize, Serialize};

/// Side length bound; keeps z-indices, labels and ranks within 16 bits.
pub const MAX_SIDE: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjacency {
    Edge4,
    Edge8,
}

impl Default for Adjacency {
    fn default() -> Self {
        Adjacency::Edge4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    pub n: u32,
    pub adjacency: Adjacency,
}

impl GridGeometry {
    pub fn new(n: u32, adjacency: Adjacency) -> Result<Self> {
        if n < 2 || n > MAX_SIDE || !n.is_power_of_two() {
            return Err(MeshError::domain(format!(
                "grid side must be a power of 2 in [2, {MAX_SIDE}], got {n}"
            )));
        }
        Ok(GridGeometry { n, adjacency })
    }

    pub fn cells(&self) -> u32 {
        self.n * self.n
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x < self.n && c.y < self.n
    }

    pub fn neighbors(&self, c: Coord) -> impl Iterator<Item = Coord> + '_ {
        let dirs: &[(i32, i32)] = match self.adjacency {
            Adjacency::Edge4 => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Adjacency::Edge8 => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        };
        let n = self.n as i32;
        dirs.iter().filter_map(move |&(dx, dy)| {
            let (x, y) = (c.x as i32 + dx, c.y as i32 + dy);
            (x >= 0 && y >= 0 && x < n && y < n).then(|| Coord::new(x as u32, y as u32))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub x: u32,
    pub y: u32,
}

impl Coord {
    pub fn new(x: u32, y: u32) -> Self {
        Coord { x, y }
    }

    pub fn manhattan(&self, other: Coord) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn step(&self, d: Dir) -> Option<Coord> {
        let (dx, dy) = d.delta();
        let x = self.x as i64 + dx as i64;
        let y = self.y as i64 + dy as i64;
        (x >= 0 && y >= 0).then(|| Coord::new(x as u32, y as u32))
    }
}

/// The four mesh directions (y grows downward, matching row-major images).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    East,
    West,
    South,
    North,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::East, Dir::West, Dir::South, Dir::North];

    pub fn delta(&self) -> (i32, i32) {
        match self {
            Dir::East => (1, 0),
            Dir::West => (-1, 0),
            Dir::South => (0, 1),
            Dir::North => (0, -1),
        }
    }
}

/// Bit-interleaved z-order index: y_k x_k … y_0 x_0 with x in the low bit.
pub fn z_index(c: Coord, n: u32) -> Result<u32> {
    if c.x >= n || c.y >= n {
        return Err(MeshError::domain(format!(
            "coordinate ({}, {}) outside {n}x{n} grid",
            c.x, c.y
        )));
    }
    Ok(interleave(c.x) | (interleave(c.y) << 1))
}

/// Inverse of [`z_index`].
pub fn z_coords(z: u32, n: u32) -> Result<Coord> {
    if z >= n * n {
        return Err(MeshError::domain(format!(
            "z-index {z} outside {n}x{n} grid"
        )));
    }
    Ok(Coord::new(deinterleave(z), deinterleave(z >> 1)))
}

fn interleave(v: u32) -> u32 {
    let mut v = v & 0xFFFF;
    v = (v | (v << 8)) & 0x00FF00FF;
    v = (v | (v << 4)) & 0x0F0F0F0F;
    v = (v | (v << 2)) & 0x33333333;
    v = (v | (v << 1)) & 0x55555555;
    v
}

fn deinterleave(v: u32) -> u32 {
    let mut v = v & 0x55555555;
    v = (v | (v >> 1)) & 0x33333333;
    v = (v | (v >> 2)) & 0x0F0F0F0F;
    v = (v | (v >> 4)) & 0x00FF00FF;
    v = (v | (v >> 8)) & 0x0000FFFF;
    v
}

/// Axis-aligned square block, aligned to the quadtree of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub origin: Coord,
    pub side: u32,
}

impl Block {
    pub fn contains(&self, c: Coord) -> bool {
        c.x >= self.origin.x
            && c.x < self.origin.x + self.side
            && c.y >= self.origin.y
            && c.y < self.origin.y + self.side
    }

    pub fn cells(&self) -> impl Iterator<Item = Coord> + '_ {
        let b = *self;
        (0..b.side).flat_map(move |dy| {
            (0..b.side).map(move |dx| Coord::new(b.origin.x + dx, b.origin.y + dy))
        })
    }

    /// Cells of the block in z-order.
    pub fn cells_z_order(&self, n: u32) -> Vec<Coord> {
        let mut v: Vec<Coord> = self.cells().collect();
        v.sort_by_key(|c| z_index(*c, n).unwrap());
        v
    }

    /// Centered sub-block of the given side.
    pub fn centered_sub(&self, side: u32) -> Block {
        debug_assert!(side <= self.side);
        let off = (self.side - side) / 2;
        Block {
            origin: Coord::new(self.origin.x + off, self.origin.y + off),
            side,
        }
    }
}

/// Decompose the z-index interval `[lo, hi]` into maximal quadtree-aligned
/// blocks. The union of the blocks is exactly the set of cells with z-index
/// in the interval; there are at most two blocks per size class.
pub fn z_interval_blocks(lo: u32, hi: u32, n: u32) -> Result<Vec<Block>> {
    let total = n * n;
    if lo > hi || hi >= total {
        return Err(MeshError::domain(format!(
            "invalid z interval [{lo}, {hi}] on {n}x{n} grid"
        )));
    }
    let mut out = Vec::new();
    cover(0, total, lo, hi, n, &mut out);
    Ok(out)
}

fn cover(start: u32, len: u32, lo: u32, hi: u32, n: u32, out: &mut Vec<Block>) {
    let end = start + len - 1;
    if hi < start || lo > end {
        return;
    }
    if lo <= start && end <= hi {
        let side = (len as f64).sqrt() as u32;
        debug_assert_eq!(side * side, len);
        out.push(Block {
            origin: z_coords(start, n).unwrap(),
            side,
        });
        return;
    }
    let q = len / 4;
    for i in 0..4 {
        cover(start + i * q, q, lo, hi, n, out);
    }
}

/// Closed boundary walk of the region `{c : lo ≤ z(c) ≤ hi}`.
///
/// Returns one cell tour per connected component. Each tour visits every
/// region cell that has a non-region 4-neighbor (or lies on the image edge),
/// moving between 4-adjacent region cells; interior cells may appear as
/// pass-throughs where boundary cells touch only diagonally. Total length is
/// O(n).
pub fn z_interval_boundary(lo: u32, hi: u32, n: u32) -> Result<Vec<Vec<Coord>>> {
    if lo > hi || hi >= n * n {
        return Err(MeshError::domain(format!(
            "invalid z interval [{lo}, {hi}] on {n}x{n} grid"
        )));
    }
    let inside = |c: Coord| -> bool {
        c.x < n && c.y < n && {
            let z = z_index(c, n).unwrap();
            z >= lo && z <= hi
        }
    };
    region_boundary_tours(n, &inside)
}

/// Boundary tours of an arbitrary cell region given by a membership test.
/// Components are discovered in z-order of their minimal cell.
pub fn region_boundary_tours(n: u32, inside: &dyn Fn(Coord) -> bool) -> Result<Vec<Vec<Coord>>> {
    let mut seen = vec![false; (n * n) as usize];
    let mut tours = Vec::new();
    for z in 0..n * n {
        let c = z_coords(z, n)?;
        if !inside(c) || seen[(c.y * n + c.x) as usize] {
            continue;
        }
        if !is_boundary(c, n, inside) {
            continue;
        }
        let tour = trace_boundary(c, n, inside);
        for &t in &tour {
            seen[(t.y * n + t.x) as usize] = true;
        }
        // Mark the whole component so later cells of it are skipped: flood
        // from the tour over region cells. Boundary cells bound every
        // component cell's row, so marking boundary cells suffices for the
        // z-scan only if interior cells are also marked; flood instead.
        let mut stack: Vec<Coord> = tour.clone();
        while let Some(c) = stack.pop() {
            for d in Dir::ALL {
                if let Some(nb) = c.step(d) {
                    if nb.x < n && nb.y < n && inside(nb) && !seen[(nb.y * n + nb.x) as usize] {
                        seen[(nb.y * n + nb.x) as usize] = true;
                        stack.push(nb);
                    }
                }
            }
        }
        tours.push(tour);
    }
    Ok(tours)
}

fn is_boundary(c: Coord, n: u32, inside: &dyn Fn(Coord) -> bool) -> bool {
    if c.x == 0 || c.y == 0 || c.x == n - 1 || c.y == n - 1 {
        return true;
    }
    Dir::ALL
        .iter()
        .any(|&d| c.step(d).map(|nb| !inside(nb)).unwrap_or(true))
}

/// Inner boundary trace (left-hand wall following over region cells).
fn trace_boundary(start: Coord, n: u32, inside: &dyn Fn(Coord) -> bool) -> Vec<Coord> {
    let ok = |c: Coord| c.x < n && c.y < n && inside(c);
    // Directions in clockwise order: E, S, W, N.
    const CW: [Dir; 4] = [Dir::East, Dir::South, Dir::West, Dir::North];
    let mut tour = vec![start];
    // Find an initial heading with the outside on the left.
    let mut heading = 0usize;
    let single = Dir::ALL.iter().all(|&d| start.step(d).map(|nb| !ok(nb)).unwrap_or(true));
    if single {
        return tour;
    }
    // Start heading: first clockwise direction whose counter-clockwise
    // neighbor is outside.
    for (i, &d) in CW.iter().enumerate() {
        let left = CW[(i + 3) % 4];
        let left_out = start.step(left).map(|nb| !ok(nb)).unwrap_or(true);
        let fwd_in = start.step(d).map(ok).unwrap_or(false);
        if left_out && fwd_in {
            heading = i;
            break;
        }
    }
    let mut pos = start;
    let mut dir = heading;
    let mut first_move: Option<(Coord, usize)> = None;
    loop {
        // Turn left, go straight, turn right, or reverse (left-hand rule).
        let mut mv: Option<(Coord, usize)> = None;
        for turn in [3usize, 0, 1, 2] {
            let nd = (dir + turn) % 4;
            if let Some(nb) = pos.step(CW[nd]) {
                if ok(nb) {
                    mv = Some((nb, nd));
                    break;
                }
            }
        }
        let Some((nb, nd)) = mv else { break };
        if pos == start {
            match first_move {
                Some(fm) if fm == (nb, nd) => break,
                Some(_) => {}
                None => first_move = Some((nb, nd)),
            }
        }
        pos = nb;
        dir = nd;
        tour.push(pos);
        assert!(
            tour.len() <= (8 * n * n) as usize,
            "boundary trace failed to close"
        );
    }
    tour
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_index_examples() {
        assert_eq!(z_index(Coord::new(0, 0), 4).unwrap(), 0);
        assert_eq!(z_index(Coord::new(1, 0), 2).unwrap(), 1);
        // x=11₂, y=01₂ interleaves to 0111₂ = 7
        assert_eq!(z_index(Coord::new(3, 1), 4).unwrap(), 7);
        assert!(z_index(Coord::new(4, 0), 4).is_err());
    }

    #[test]
    fn z_round_trip_all_sides() {
        for k in 1..=8 {
            let n = 1u32 << k;
            for z in 0..n * n {
                let c = z_coords(z, n).unwrap();
                assert_eq!(z_index(c, n).unwrap(), z);
            }
        }
    }

    #[test]
    fn interval_blocks_full_grid() {
        let blocks = z_interval_blocks(0, 15, 4).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].side, 4);
        assert_eq!(blocks[0].origin, Coord::new(0, 0));
    }

    #[test]
    fn interval_blocks_first_quadrant() {
        let blocks = z_interval_blocks(0, 3, 4).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].side, 2);
        assert_eq!(blocks[0].origin, Coord::new(0, 0));
    }

    #[test]
    fn interval_blocks_match_scan() {
        // (5, 11) on n=4 plus a sweep of random intervals.
        let check = |lo: u32, hi: u32, n: u32| {
            let blocks = z_interval_blocks(lo, hi, n).unwrap();
            for z in 0..n * n {
                let c = z_coords(z, n).unwrap();
                let member = blocks.iter().any(|b| b.contains(c));
                assert_eq!(member, z >= lo && z <= hi, "z={z} lo={lo} hi={hi} n={n}");
            }
            // Disjointness.
            let mut count = 0;
            for b in &blocks {
                count += b.side * b.side;
            }
            assert_eq!(count, hi - lo + 1);
        };
        check(5, 11, 4);
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut rnd = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..200 {
            let n = 1u32 << (1 + rnd() % 4);
            let a = (rnd() % (n * n) as u64) as u32;
            let b = (rnd() % (n * n) as u64) as u32;
            check(a.min(b), a.max(b), n);
        }
    }

    #[test]
    fn boundary_tour_covers_boundary() {
        for (lo, hi, n) in [(0u32, 15u32, 4u32), (5, 11, 4), (3, 37, 8), (21, 22, 8)] {
            let tours = z_interval_boundary(lo, hi, n).unwrap();
            let inside =
                |c: Coord| z_index(c, n).map(|z| z >= lo && z <= hi).unwrap_or(false);
            let mut expected = Vec::new();
            for z in lo..=hi {
                let c = z_coords(z, n).unwrap();
                if is_boundary(c, n, &inside) {
                    expected.push(c);
                }
            }
            let mut got: Vec<Coord> = tours.iter().flatten().copied().collect();
            got.sort();
            got.dedup();
            expected.sort();
            for c in &expected {
                assert!(got.contains(c), "boundary {c:?} missed: lo={lo} hi={hi} n={n}");
            }
            for c in &got {
                assert!(inside(*c), "tour left the region: lo={lo} hi={hi} n={n}");
            }
            // Consecutive tour cells are 4-adjacent.
            for tour in &tours {
                for w in tour.windows(2) {
                    assert_eq!(w[0].manhattan(w[1]), 1);
                }
            }
            let total: usize = tours.iter().map(|t| t.len()).sum();
            assert!(total <= 16 * n as usize, "tour too long: {total}");
        }
    }
}
