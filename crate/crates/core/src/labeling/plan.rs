//! Static planning for the divide-and-conquer hierarchy: square grids per
//! level, squirrel assignments, and staging-arena layouts at square centers.

use crate::engine::MAX_WORDS;
use crate::error::{MeshError, Result};
use crate::geometry::{z_coords, z_index, Block, Coord};

/// First scratch slot available for staging (0..4 are reserved for the
/// per-cell flags/label/rank/size registers).
pub const SLOT_BASE: usize = 4;
pub const SLOTS_PER_CELL: usize = MAX_WORDS.min(8) - SLOT_BASE;

/// Charged-subroutine time constant: an embedded mesh algorithm on an
/// r×r submesh is billed `C_MESH · r` simulated steps over `r²` processors.
pub const C_MESH: u64 = 2;

/// Cargo batch size for ferry trips (leaves payload headroom).
pub const BATCH: usize = 6;

pub const SLOT_FLAGS: usize = 0;
pub const SLOT_LABEL: usize = 1;
pub const SLOT_RANK: usize = 2;
pub const SLOT_SIZE: usize = 3;

/// One aligned square of the recursion at some level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Square {
    pub block: Block,
    /// Index of the square in z-order of squares at its level.
    pub index: u32,
}

impl Square {
    pub fn side(&self) -> u32 {
        self.block.side
    }

    pub fn origin(&self) -> Coord {
        self.block.origin
    }

    /// The four child squares in z-order.
    pub fn children(&self) -> [Block; 4] {
        let h = self.block.side / 2;
        let o = self.block.origin;
        [
            Block { origin: o, side: h },
            Block {
                origin: Coord::new(o.x + h, o.y),
                side: h,
            },
            Block {
                origin: Coord::new(o.x, o.y + h),
                side: h,
            },
            Block {
                origin: Coord::new(o.x + h, o.y + h),
                side: h,
            },
        ]
    }

    /// Seam pair anchors: cells on the west/north side of the internal
    /// cross, each paired with its adjacent cells across the seam.
    pub fn seam_anchors(&self, adjacency: crate::geometry::Adjacency) -> Vec<(Coord, Coord)> {
        use crate::geometry::Adjacency;
        let k = self.block.side;
        let o = self.block.origin;
        let mid = k / 2;
        let diag = adjacency == Adjacency::Edge8;
        let mut out = Vec::new();
        for y in 0..k {
            let a = Coord::new(o.x + mid - 1, o.y + y);
            out.push((a, Coord::new(o.x + mid, o.y + y)));
            if diag {
                if y > 0 {
                    out.push((a, Coord::new(o.x + mid, o.y + y - 1)));
                }
                if y + 1 < k {
                    out.push((a, Coord::new(o.x + mid, o.y + y + 1)));
                }
            }
        }
        for x in 0..k {
            let a = Coord::new(o.x + x, o.y + mid - 1);
            out.push((a, Coord::new(o.x + x, o.y + mid)));
            if diag {
                if x > 0 {
                    out.push((a, Coord::new(o.x + x - 1, o.y + mid)));
                }
                if x + 1 < k {
                    out.push((a, Coord::new(o.x + x + 1, o.y + mid)));
                }
            }
        }
        out
    }

    /// Outer boundary ring cells, clockwise from the origin corner.
    pub fn ring(&self) -> Vec<Coord> {
        let k = self.block.side;
        let o = self.block.origin;
        if k == 1 {
            return vec![o];
        }
        let mut out = Vec::with_capacity(4 * (k as usize - 1));
        for x in 0..k {
            out.push(Coord::new(o.x + x, o.y));
        }
        for y in 1..k {
            out.push(Coord::new(o.x + k - 1, o.y + y));
        }
        for x in (0..k - 1).rev() {
            out.push(Coord::new(o.x + x, o.y + k - 1));
        }
        for y in (1..k - 1).rev() {
            out.push(Coord::new(o.x, o.y + y));
        }
        out
    }
}

/// Squares of one level in z-order.
pub fn squares_at_level(n: u32, k: u32) -> Vec<Square> {
    let per_side = n / k;
    let count = per_side * per_side;
    (0..count)
        .map(|index| {
            let zc = z_coords(index, per_side).unwrap();
            Square {
                block: Block {
                    origin: Coord::new(zc.x * k, zc.y * k),
                    side: k,
                },
                index,
            }
        })
        .collect()
}

/// Square of side `k` containing a cell.
pub fn square_of(n: u32, k: u32, c: Coord) -> u32 {
    let per_side = n / k;
    z_index(Coord::new(c.x / k, c.y / k), per_side).unwrap()
}

/// A staging arena: consecutive word addresses inside a centered region of a
/// square, mapped to (cell, slot) pairs in region row-major order.
///
/// Two slot layers keep staged data with different lifetimes from clobbering
/// each other when regions of nested squares overlap: finalization maps live
/// in slots 4..=5, per-step working data in slots 6..=7.
#[derive(Debug, Clone)]
pub struct Arena {
    pub region: Block,
    cells: Vec<Coord>,
    slot_lo: usize,
    spc: usize,
}

pub const FMAP_SLOT: usize = 4;
pub const WORK_SLOT: usize = 6;
pub const LAYER_SLOTS: usize = 2;

impl Arena {
    /// Per-step working staging (slots 6..=7).
    pub fn work(square: Block, capacity: usize) -> Result<Arena> {
        Arena::with_layer(square, capacity, WORK_SLOT)
    }

    /// Finalization-map staging (slots 4..=5).
    pub fn fmap(square: Block, capacity: usize) -> Result<Arena> {
        Arena::with_layer(square, capacity, FMAP_SLOT)
    }

    fn with_layer(square: Block, capacity: usize, slot_lo: usize) -> Result<Arena> {
        let need_cells = capacity.div_ceil(LAYER_SLOTS).max(1);
        let mut side = (need_cells as f64).sqrt().ceil() as u32;
        while (side as usize) * (side as usize) < need_cells {
            side += 1;
        }
        if side > square.side {
            return Err(MeshError::domain(format!(
                "staging arena of {capacity} words does not fit a side-{} square",
                square.side
            )));
        }
        let region = square.centered_sub(side);
        let cells = region.cells().collect();
        Ok(Arena {
            region,
            cells,
            slot_lo,
            spc: LAYER_SLOTS,
        })
    }

    pub fn capacity(&self) -> usize {
        self.cells.len() * self.spc
    }

    /// Word address `i` as a (cell, slot) pair.
    pub fn addr(&self, i: usize) -> (Coord, usize) {
        let cell = self.cells[i / self.spc];
        (cell, self.slot_lo + i % self.spc)
    }

    /// Parking cell for the j-th squirrel assigned to this square.
    pub fn park(&self, j: usize) -> Coord {
        self.cells[j % self.cells.len()]
    }
}

/// Scratch slot used for depth-first-search backtrack pointers.
pub const SLOT_DFS: usize = 7;

/// Round-robin assignment of `count` work items to `s` squirrels; returns
/// item indices for squirrel `i`.
pub fn items_for_squirrel(count: u32, s: u32, i: u32) -> Vec<u32> {
    (0..count).filter(|j| j % s == i).collect()
}

/// Squirrels working square `j` when squares are scarcer than squirrels.
pub fn squad_for_square(count: u32, s: u32, j: u32) -> Vec<u32> {
    (0..s).filter(|i| i % count == j).collect()
}

/// Divide-and-conquer shape for `s ≤ n`: bottom square side and merge levels.
#[derive(Debug, Clone)]
pub struct DcShape {
    pub m0: u32,
    pub levels: Vec<u32>,
    pub top: u32,
}

impl DcShape {
    pub fn new(n: u32, s: u32, top: u32) -> DcShape {
        // Bottom square count: the smallest power of 4 that is ≥ s (capped
        // so every square keeps side ≥ 2).
        let mut sqrt_q = 1u32;
        while sqrt_q * sqrt_q < s && (top / (2 * sqrt_q)) >= 2 {
            sqrt_q *= 2;
        }
        let m0 = (top / sqrt_q).max(2).min(top);
        let mut levels = Vec::new();
        let mut k = m0 * 2;
        while k <= top {
            levels.push(k);
            k *= 2;
        }
        DcShape { m0, levels, top }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seam_and_ring_sizes() {
        let sq = Square {
            block: Block {
                origin: Coord::new(4, 4),
                side: 4,
            },
            index: 0,
        };
        assert_eq!(sq.seam_anchors(crate::geometry::Adjacency::Edge4).len(), 8);
        assert_eq!(sq.seam_anchors(crate::geometry::Adjacency::Edge8).len(), 20);
        let ring = sq.ring();
        assert_eq!(ring.len(), 12);
        // Ring is a closed 4-connected tour.
        for w in ring.windows(2) {
            assert_eq!(w[0].manhattan(w[1]), 1);
        }
        assert_eq!(ring.first().unwrap().manhattan(*ring.last().unwrap()), 1);
    }

    #[test]
    fn arena_addressing_is_disjoint() {
        let sq = Block {
            origin: Coord::new(0, 0),
            side: 8,
        };
        let work = Arena::work(sq, 30).unwrap();
        let fmap = Arena::fmap(sq, 30).unwrap();
        assert!(work.capacity() >= 30);
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..30 {
            let (c, slot) = work.addr(i);
            assert!(work.region.contains(c));
            assert!((6..8).contains(&slot));
            assert!(seen.insert((c, slot)));
            let (c2, slot2) = fmap.addr(i);
            assert!((4..6).contains(&slot2));
            assert!(seen.insert((c2, slot2)), "layers must not collide");
        }
    }

    #[test]
    fn dc_shape_examples() {
        let shape = DcShape::new(64, 1, 64);
        assert_eq!(shape.m0, 64);
        assert!(shape.levels.is_empty());
        let shape = DcShape::new(64, 64, 64);
        assert_eq!(shape.m0, 8);
        assert_eq!(shape.levels, vec![16, 32, 64]);
        let shape = DcShape::new(64, 2, 64);
        assert_eq!(shape.m0, 32);
        assert_eq!(shape.levels, vec![64]);
        // Tiny grids keep side ≥ 2.
        let shape = DcShape::new(2, 2, 2);
        assert_eq!(shape.m0, 2);
        assert!(shape.levels.is_empty());
    }

    #[test]
    fn squares_partition_grid() {
        let squares = squares_at_level(8, 4);
        assert_eq!(squares.len(), 4);
        for c in (0..64).map(|z| z_coords(z, 8).unwrap()) {
            let j = square_of(8, 4, c);
            assert!(squares[j as usize].block.contains(c));
        }
    }
}
