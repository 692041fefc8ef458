//! Bottom-level and merge-time squirrel programs: the z-ordered scan with
//! per-piece depth-first labeling, and the eager relabeling of losing pieces
//! after each merge.
//!
//! Depth-first searches keep O(1) squirrel state by storing a backtrack
//! direction in a scratch slot of each visited cell (pebble style).

use super::merge::MergeLayout;
use super::plan::{Square, SLOT_DFS, SLOT_LABEL};
use crate::engine::{Action, Ctx, Program, Word};
use crate::geometry::{z_coords, z_index, Adjacency, Block, Coord, Dir};
use crate::programs::WalkTo;
use crate::records::unpack_map;

/// Neighbor offsets in deterministic order (edge-4 first, then diagonals).
const DELTAS: [(i32, i32); 8] = [
    (1, 0),
    (0, 1),
    (-1, 0),
    (0, -1),
    (1, 1),
    (-1, 1),
    (-1, -1),
    (1, -1),
];

fn num_dirs(adjacency: Adjacency) -> usize {
    match adjacency {
        Adjacency::Edge4 => 4,
        Adjacency::Edge8 => 8,
    }
}

fn offset(c: Coord, d: (i32, i32)) -> Option<Coord> {
    let x = c.x as i64 + d.0 as i64;
    let y = c.y as i64 + d.1 as i64;
    (x >= 0 && y >= 0).then(|| Coord::new(x as u32, y as u32))
}

/// Route to an 8-neighborhood offset as 1–2 mesh moves, x-leg first.
fn route(d: (i32, i32)) -> Vec<Dir> {
    let mut out = Vec::with_capacity(2);
    match d.0 {
        1 => out.push(Dir::East),
        -1 => out.push(Dir::West),
        _ => {}
    }
    match d.1 {
        1 => out.push(Dir::South),
        -1 => out.push(Dir::North),
        _ => {}
    }
    out
}

/// What counts as an unvisited piece cell.
#[derive(Clone, Copy)]
enum DfsMode {
    /// Unlabeled cells of the given color (initial scan).
    ScanColor(u16),
    /// Cells still carrying the old label (merge relabeling).
    Relabel { old: Word },
}

/// Pebbled depth-first traversal over one piece, restricted to a square.
/// Writes `label` at every visited cell; visiting marks cells implicitly
/// (their label changes), so no extra flags are needed.
struct PieceDfs {
    bound: Block,
    mode: DfsMode,
    label: Word,
    adjacency: Adjacency,
    gen: Word,
    pending: Vec<Dir>,
    entering: bool,
    parent_dir: Option<usize>,
    done: bool,
}

impl PieceDfs {
    fn new(bound: Block, mode: DfsMode, label: Word, adjacency: Adjacency, gen: Word) -> Self {
        PieceDfs {
            bound,
            mode,
            label,
            adjacency,
            gen,
            pending: Vec::new(),
            entering: true,
            parent_dir: None,
            done: false,
        }
    }

    fn unvisited(&self, ctx: &Ctx<'_>, c: Coord) -> bool {
        match self.mode {
            DfsMode::ScanColor(color) => {
                ctx.color(c) == color && ctx.slot(c, SLOT_LABEL).is_none()
            }
            DfsMode::Relabel { old } => ctx.slot(c, SLOT_LABEL) == Some(old),
        }
    }

    fn candidate(&self, ctx: &Ctx<'_>) -> Option<usize> {
        for (i, &d) in DELTAS[..num_dirs(self.adjacency)].iter().enumerate() {
            let Some(nb) = offset(ctx.pos, d) else { continue };
            if !self.bound.contains(nb) || !ctx.geom.contains(nb) {
                continue;
            }
            if self.unvisited(ctx, nb) {
                return Some(i);
            }
        }
        None
    }

    fn step(&mut self, ctx: &mut Ctx<'_>) -> Option<Action> {
        loop {
            if self.done {
                return None;
            }
            if let Some(dir) = self.pending.pop() {
                return Some(Action::Move(dir));
            }
            if self.entering {
                if ctx.here_slot(SLOT_LABEL) != Some(self.label) {
                    return Some(Action::Put {
                        slot: SLOT_LABEL,
                        word: self.label,
                    });
                }
                if let Some(pd) = self.parent_dir.take() {
                    return Some(Action::Put {
                        slot: SLOT_DFS,
                        word: (self.gen << 3) | pd as Word,
                    });
                }
                self.entering = false;
                continue;
            }
            if let Some(i) = self.candidate(ctx) {
                let d = DELTAS[i];
                self.pending = route(d).into_iter().rev().collect();
                self.entering = true;
                self.parent_dir = Some(i);
                continue;
            }
            // Backtrack along the generation-tagged parent pointer; a cell
            // without a live pointer is the traversal root.
            match ctx.here_slot(SLOT_DFS) {
                Some(w) if w >> 3 == self.gen => {
                    let d = DELTAS[(w & 7) as usize];
                    self.pending = route((-d.0, -d.1)).into_iter().rev().collect();
                }
                _ => self.done = true,
            }
        }
    }
}

/// Z-ordered scan of assigned squares; each unlabeled cell starts a
/// depth-first labeling of its piece with the cell's z-index as the label.
/// The squirrel returns to the piece leader before resuming the scan.
pub struct BottomScan {
    squares: Vec<Block>,
    square_i: usize,
    z_next: u32,
    z_end: u32,
    n: u32,
    adjacency: Adjacency,
    gen_base: Word,
    gen_count: Word,
    dfs: Option<(PieceDfs, Coord)>,
    walker: Option<WalkTo>,
    started: bool,
}

impl BottomScan {
    pub fn new(squares: Vec<Block>, n: u32, adjacency: Adjacency, gen_base: Word) -> Self {
        BottomScan {
            squares,
            square_i: 0,
            z_next: 0,
            z_end: 0,
            n,
            adjacency,
            gen_base,
            gen_count: 0,
            dfs: None,
            walker: None,
            started: false,
        }
    }
}

impl Program for BottomScan {
    fn next(&mut self, ctx: &mut Ctx<'_>) -> Option<Action> {
        loop {
            if let Some(w) = &mut self.walker {
                if let Some(a) = w.next(ctx) {
                    return Some(a);
                }
                self.walker = None;
            }
            if let Some((dfs, root)) = &mut self.dfs {
                if let Some(a) = dfs.step(ctx) {
                    return Some(a);
                }
                let root = *root;
                self.dfs = None;
                if ctx.pos != root {
                    self.walker = Some(WalkTo { target: root });
                }
                continue;
            }
            if !self.started {
                if self.square_i >= self.squares.len() {
                    return None;
                }
                let sq = self.squares[self.square_i];
                self.z_next = z_index(sq.origin, self.n).unwrap();
                self.z_end = self.z_next + sq.side * sq.side;
                self.started = true;
            }
            if self.z_next >= self.z_end {
                self.square_i += 1;
                self.started = false;
                continue;
            }
            let cell = z_coords(self.z_next, self.n).unwrap();
            if ctx.pos != cell {
                self.walker = Some(WalkTo { target: cell });
                continue;
            }
            if ctx.here_slot(SLOT_LABEL).is_some() {
                self.z_next += 1;
                continue;
            }
            // New piece; its first z-scan cell is the minimal z, the leader.
            let label = self.z_next as Word;
            let color = ctx.here_color();
            let sq = self.squares[self.square_i];
            self.gen_count += 1;
            let gen = self.gen_base + self.gen_count;
            self.dfs = Some((
                PieceDfs::new(sq, DfsMode::ScanColor(color), label, self.adjacency, gen),
                cell,
            ));
            self.z_next += 1;
        }
    }
}

enum RewriteState {
    ReadHdr,
    NextEntry,
    ToLeader { old: u16, new: u16 },
    Park,
    Done,
}

/// Relabel the losing pieces of a merge: for each assigned map entry, walk
/// to the old label's leader and depth-first rewrite its uniform piece,
/// bounded by the aligned `bound_side` square containing the leader.
pub struct MapRewrite {
    layout: MergeLayout,
    bound_side: u32,
    n: u32,
    adjacency: Adjacency,
    role: usize,
    squad: usize,
    gen_base: Word,
    gen_count: Word,
    count: usize,
    next_entry: usize,
    dfs: Option<PieceDfs>,
    park: Coord,
    state: RewriteState,
    walker: Option<WalkTo>,
}

impl MapRewrite {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        layout: MergeLayout,
        bound_side: u32,
        n: u32,
        adjacency: Adjacency,
        role: usize,
        squad: usize,
        gen_base: Word,
        park: Coord,
    ) -> Self {
        MapRewrite {
            layout,
            bound_side: bound_side.max(1),
            n,
            adjacency,
            role,
            squad: squad.max(1),
            gen_base,
            gen_count: 0,
            count: 0,
            next_entry: 0,
            dfs: None,
            park,
            state: RewriteState::ReadHdr,
            walker: None,
        }
    }

    /// Aligned square of side `bound_side` containing the leader.
    fn bound_of(&self, leader: Coord) -> Block {
        let b = self.bound_side;
        Block {
            origin: Coord::new(leader.x / b * b, leader.y / b * b),
            side: b,
        }
    }
}

impl Program for MapRewrite {
    fn next(&mut self, ctx: &mut Ctx<'_>) -> Option<Action> {
        loop {
            if let Some(w) = &mut self.walker {
                if let Some(a) = w.next(ctx) {
                    return Some(a);
                }
                self.walker = None;
            }
            if let Some(dfs) = &mut self.dfs {
                if let Some(a) = dfs.step(ctx) {
                    return Some(a);
                }
                self.dfs = None;
                self.state = RewriteState::NextEntry;
                continue;
            }
            match self.state {
                RewriteState::ReadHdr => {
                    let (cell, slot) = self.layout.arena.addr(self.layout.m_hdr);
                    if ctx.pos != cell {
                        self.walker = Some(WalkTo { target: cell });
                        continue;
                    }
                    self.count = ctx.here_slot(slot).unwrap_or(0) as usize;
                    self.next_entry = self.role;
                    self.state = RewriteState::NextEntry;
                }
                RewriteState::NextEntry => {
                    if self.next_entry >= self.count {
                        self.state = RewriteState::Park;
                        continue;
                    }
                    let (cell, slot) = self
                        .layout
                        .arena
                        .addr(self.layout.m.start + self.next_entry);
                    if ctx.pos != cell {
                        self.walker = Some(WalkTo { target: cell });
                        continue;
                    }
                    let w = ctx.here_slot(slot).expect("map entry staged");
                    let (old, new) = unpack_map(w);
                    self.next_entry += self.squad;
                    self.state = RewriteState::ToLeader { old, new };
                }
                RewriteState::ToLeader { old, new } => {
                    let leader = z_coords(old as u32, self.n).unwrap();
                    debug_assert!(self.layout.square.contains(leader));
                    if ctx.pos != leader {
                        self.walker = Some(WalkTo { target: leader });
                        continue;
                    }
                    self.gen_count += 1;
                    let gen = self.gen_base + self.gen_count;
                    self.dfs = Some(PieceDfs::new(
                        self.bound_of(leader),
                        DfsMode::Relabel { old: old as Word },
                        new as Word,
                        self.adjacency,
                        gen,
                    ));
                    self.state = RewriteState::NextEntry;
                }
                RewriteState::Park => {
                    if ctx.pos != self.park {
                        self.walker = Some(WalkTo { target: self.park });
                        continue;
                    }
                    self.state = RewriteState::Done;
                }
                RewriteState::Done => return None,
            }
        }
    }
}
