//! Merge machinery for the labeling recursion: seam-edge gathering, the
//! charged union-find over staged edges, and eager relabeling of losing
//! pieces.
//!
//! Invariant maintained level by level: after the side-k step, every piece
//! (maximal same-color region within a k-square) is uniformly labeled with
//! the minimal z-index of its cells. A merge therefore only has to rewrite
//! the losing pieces of each seam component, each of which is a uniform
//! region inside one child quadrant. Nothing is staged across level steps.

use super::plan::{Arena, Square, BATCH, C_MESH, SLOT_LABEL};
use crate::engine::{Action, ChargedSubroutine, Ctx, Engine, Program, RegionIo, Word};
use crate::error::{MeshError, Result};
use crate::geometry::{Adjacency, Block, Coord};
use crate::records::{pack_edge, pack_map, unpack_edge};
use petgraph::unionfind::UnionFind;
use std::collections::BTreeMap;
use std::ops::Range;

/// Squares with side ≤ this are merged by direct region reads, with no
/// staged edge records (their centers cannot hold worst-case edge sets).
pub const DIRECT_SIDE: u32 = 8;

/// Stepwise-simulation bill for a merge over `edges_cap` boundary records:
/// the embedded mesh algorithm runs on a Θ(records)-processor submesh in
/// Θ(√records) time.
pub fn merge_bill(records: u64) -> (u64, u64) {
    let procs = records.max(1);
    let time = C_MESH * (procs as f64).sqrt().ceil() as u64;
    (time, procs)
}

pub fn edge_cap(k: u32, adjacency: Adjacency) -> usize {
    let k = k as usize;
    let anchors = match adjacency {
        Adjacency::Edge4 => 2 * k,
        Adjacency::Edge8 => 2 * k + 4 * (k - 1),
    };
    anchors.min(k * k)
}

fn label_cap(k: u32) -> usize {
    let k = k as usize;
    (4 * k).min(k * k)
}

/// Staging layout for one merge step.
#[derive(Debug, Clone)]
pub struct MergeLayout {
    pub square: Block,
    pub arena: Arena,
    pub direct: bool,
    pub edges: Range<usize>,
    pub edge_hdrs: Range<usize>,
    pub m: Range<usize>,
    pub m_hdr: usize,
}

impl MergeLayout {
    pub fn new(square: Block, squad_cap: u32, adjacency: Adjacency) -> Result<MergeLayout> {
        let k = square.side;
        MergeLayout::build(square, edge_cap(k, adjacency), label_cap(k), squad_cap, k <= DIRECT_SIDE)
    }

    /// Layout with an explicit edge capacity (the high-power single merge
    /// gathers every inter-square border at once).
    pub fn custom(square: Block, edges: usize, squad_cap: u32) -> Result<MergeLayout> {
        let cells = (square.side * square.side) as usize;
        MergeLayout::build(square, edges, (2 * edges).min(cells), squad_cap, false)
    }

    fn build(
        square: Block,
        e_cap: usize,
        m_cap: usize,
        squad_cap: u32,
        direct: bool,
    ) -> Result<MergeLayout> {
        let g_cap = (squad_cap as usize).max(1);
        let mut at = 0usize;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let (edges, edge_hdrs) = if direct {
            (take(0), take(0))
        } else {
            (take(e_cap), take(g_cap))
        };
        let m = take(m_cap);
        let m_hdr = take(1).start;
        let arena = Arena::work(square, at)?;
        Ok(MergeLayout {
            square,
            arena,
            direct,
            edges,
            edge_hdrs,
            m,
            m_hdr,
        })
    }
}

// ---------------------------------------------------------------------
// Programs
// ---------------------------------------------------------------------

enum GatherState {
    ToAnchor,
    Reading,
    FerryPut { word_i: usize },
    BackTo(Coord),
    Header,
    Park,
    Done,
}

/// Walk a seam segment collecting same-color cross-seam label pairs, ferry
/// them to the staging arena in batches, then write a count header and park.
pub struct GatherSeam {
    anchors: Vec<(Coord, Coord)>,
    next_anchor: usize,
    arena: Arena,
    write_idx: usize,
    write_end: usize,
    hdr_idx: usize,
    park: Coord,
    count: u32,
    state: GatherState,
    walker: Option<crate::programs::WalkTo>,
}

impl GatherSeam {
    pub fn new(
        anchors: Vec<(Coord, Coord)>,
        arena: Arena,
        write_range: Range<usize>,
        hdr_idx: usize,
        park: Coord,
    ) -> Self {
        GatherSeam {
            anchors,
            next_anchor: 0,
            arena,
            write_idx: write_range.start,
            write_end: write_range.end,
            hdr_idx,
            park,
            count: 0,
            state: GatherState::ToAnchor,
            walker: None,
        }
    }
}

impl Program for GatherSeam {
    fn next(&mut self, ctx: &mut Ctx<'_>) -> Option<Action> {
        loop {
            if let Some(w) = &mut self.walker {
                if let Some(a) = w.next(ctx) {
                    return Some(a);
                }
                self.walker = None;
            }
            match self.state {
                GatherState::ToAnchor => {
                    if self.next_anchor >= self.anchors.len() {
                        self.state = GatherState::Header;
                        continue;
                    }
                    let target = self.anchors[self.next_anchor].0;
                    if ctx.pos != target {
                        self.walker = Some(crate::programs::WalkTo { target });
                        continue;
                    }
                    self.state = GatherState::Reading;
                }
                GatherState::Reading => {
                    let (a, b) = self.anchors[self.next_anchor];
                    debug_assert_eq!(ctx.pos, a);
                    if ctx.color(a) == ctx.color(b) {
                        let la = ctx.slot(a, SLOT_LABEL).expect("cell labeled") as u16;
                        let lb = ctx.slot(b, SLOT_LABEL).expect("cell labeled") as u16;
                        if la != lb {
                            ctx.payload.push(pack_edge(la, lb));
                        }
                    }
                    self.next_anchor += 1;
                    if !ctx.payload.is_empty()
                        && (ctx.payload.len() >= BATCH || self.next_anchor >= self.anchors.len())
                    {
                        self.state = GatherState::FerryPut { word_i: 0 };
                    } else {
                        self.state = GatherState::ToAnchor;
                    }
                }
                GatherState::FerryPut { word_i } => {
                    if word_i >= ctx.payload.len() {
                        ctx.payload.clear();
                        self.state = if self.next_anchor < self.anchors.len() {
                            GatherState::BackTo(self.anchors[self.next_anchor].0)
                        } else {
                            GatherState::Header
                        };
                        continue;
                    }
                    assert!(
                        self.write_idx < self.write_end,
                        "edge staging overflow at index {}",
                        self.write_idx
                    );
                    let (cell, slot) = self.arena.addr(self.write_idx);
                    if ctx.pos != cell {
                        self.walker = Some(crate::programs::WalkTo { target: cell });
                        continue;
                    }
                    let word = ctx.payload[word_i];
                    self.write_idx += 1;
                    self.count += 1;
                    self.state = GatherState::FerryPut { word_i: word_i + 1 };
                    return Some(Action::Put { slot, word });
                }
                GatherState::BackTo(c) => {
                    if ctx.pos != c {
                        self.walker = Some(crate::programs::WalkTo { target: c });
                        continue;
                    }
                    self.state = GatherState::ToAnchor;
                }
                GatherState::Header => {
                    let (cell, slot) = self.arena.addr(self.hdr_idx);
                    if ctx.pos != cell {
                        self.walker = Some(crate::programs::WalkTo { target: cell });
                        continue;
                    }
                    self.state = GatherState::Park;
                    return Some(Action::Put {
                        slot,
                        word: self.count as Word,
                    });
                }
                GatherState::Park => {
                    if ctx.pos != self.park {
                        self.walker = Some(crate::programs::WalkTo { target: self.park });
                        continue;
                    }
                    self.state = GatherState::Done;
                }
                GatherState::Done => return None,
            }
        }
    }
}

// ---------------------------------------------------------------------
// Charged subroutine bodies
// ---------------------------------------------------------------------

fn read_staged(io: &RegionIo<'_>, arena: &Arena, start: usize, count: usize) -> Result<Vec<Word>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let (cell, slot) = arena.addr(start + i);
        let w = io.read(cell, slot)?.ok_or_else(|| {
            MeshError::domain(format!(
                "staged word {i} missing at ({}, {})",
                cell.x, cell.y
            ))
        })?;
        out.push(w);
    }
    Ok(out)
}

fn read_hdr(io: &RegionIo<'_>, arena: &Arena, idx: usize) -> Result<usize> {
    let (cell, slot) = arena.addr(idx);
    Ok(io.read(cell, slot)?.unwrap_or(0) as usize)
}

fn write_staged(
    io: &mut RegionIo<'_>,
    arena: &Arena,
    range: &Range<usize>,
    hdr: usize,
    words: &[Word],
) -> Result<()> {
    if words.len() > range.len() {
        return Err(MeshError::domain(format!(
            "staging overflow: {} words into range of {}",
            words.len(),
            range.len()
        )));
    }
    for (i, &w) in words.iter().enumerate() {
        let (cell, slot) = arena.addr(range.start + i);
        io.write(cell, slot, w)?;
    }
    let (cell, slot) = arena.addr(hdr);
    io.write(cell, slot, words.len() as Word)?;
    Ok(())
}

/// Seam edges of a small square, read directly from its cells.
fn direct_edges(
    io: &RegionIo<'_>,
    anchors: &[(Coord, Coord)],
) -> Result<Vec<(u16, u16)>> {
    let mut edges = Vec::new();
    for &(a, b) in anchors {
        if io.color(a)? != io.color(b)? {
            continue;
        }
        let la = io.read(a, SLOT_LABEL)?.expect("cell labeled") as u16;
        let lb = io.read(b, SLOT_LABEL)?.expect("cell labeled") as u16;
        if la != lb {
            edges.push((la, lb));
        }
    }
    Ok(edges)
}

fn staged_edges(
    io: &RegionIo<'_>,
    arena: &Arena,
    edges: &Range<usize>,
    hdrs: &Range<usize>,
    seg_offsets: &[usize],
) -> Result<Vec<(u16, u16)>> {
    let mut out = Vec::new();
    for (seg, &off) in seg_offsets.iter().enumerate() {
        let count = read_hdr(io, arena, hdrs.start + seg)?;
        let words = read_staged(io, arena, edges.start + off, count)?;
        out.extend(words.iter().map(|&w| unpack_edge(w)));
    }
    Ok(out)
}

/// Run the merge's embedded component labeling: union-find over the seam
/// edges, staging the relabel map (changed labels only, minimum label wins).
pub fn charged_merge(
    engine: &mut Engine,
    layout: &MergeLayout,
    scope: Block,
    anchors: &[(Coord, Coord)],
    squad: &[u32],
    seg_offsets: &[usize],
    bill_records: u64,
) -> Result<()> {
    let (sim_time, sim_procs) = merge_bill(bill_records);
    let layout = layout.clone();
    let anchors = anchors.to_vec();
    let seg_offsets = seg_offsets.to_vec();
    engine.run_charged(
        ChargedSubroutine {
            region: layout.arena.region,
            scope,
            sim_time,
            sim_procs,
            squirrels: squad,
        },
        |io| {
            let edges = if layout.direct {
                direct_edges(io, &anchors)?
            } else {
                staged_edges(
                    io,
                    &layout.arena,
                    &layout.edges,
                    &layout.edge_hdrs,
                    &seg_offsets,
                )?
            };
            let m = merge_map(&edges);
            let words: Vec<Word> = m.iter().map(|(&o, &n)| pack_map(o, n)).collect();
            write_staged(io, &layout.arena, &layout.m, layout.m_hdr, &words)
        },
    )
}

/// Minimal-label union-find over edges, as a changed-entries-only map.
pub fn merge_map(edges: &[(u16, u16)]) -> BTreeMap<u16, u16> {
    let mut ids: Vec<u16> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    ids.sort_unstable();
    ids.dedup();
    let index: BTreeMap<u16, usize> = ids.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut uf = UnionFind::<usize>::new(ids.len());
    for &(a, b) in edges {
        uf.union(index[&a], index[&b]);
    }
    let mut min_of: BTreeMap<usize, u16> = BTreeMap::new();
    for &l in &ids {
        let root = uf.find(index[&l]);
        let e = min_of.entry(root).or_insert(l);
        *e = (*e).min(l);
    }
    let mut m = BTreeMap::new();
    for &l in &ids {
        let new = min_of[&uf.find(index[&l])];
        if new != l {
            m.insert(l, new);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_map_min_wins() {
        let m = merge_map(&[(5, 9), (9, 2), (7, 7)]);
        assert_eq!(m.get(&5), Some(&2));
        assert_eq!(m.get(&9), Some(&2));
        assert_eq!(m.get(&2), None);
        assert_eq!(m.get(&7), None);
    }

    #[test]
    fn bill_scales_with_records() {
        let (t4, p4) = merge_bill(4);
        assert_eq!((t4, p4), (4, 4));
        let (t128, p128) = merge_bill(128);
        assert_eq!(p128, 128);
        assert_eq!(t128, 2 * 12);
    }
}
