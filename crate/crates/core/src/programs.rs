//! Composable squirrel programs: walks, path following, scripted action
//! sequences, and sequencing of sub-programs.

use crate::engine::{Action, Ctx, Program, Word};
use crate::geometry::{Coord, Dir};
use arrayvec::ArrayVec;
use std::collections::VecDeque;

/// Run sub-programs in order.
pub struct Seq {
    parts: VecDeque<Box<dyn Program>>,
}

impl Seq {
    pub fn new(parts: Vec<Box<dyn Program>>) -> Self {
        Seq {
            parts: parts.into(),
        }
    }
}

impl Program for Seq {
    fn next(&mut self, ctx: &mut Ctx<'_>) -> Option<Action> {
        while let Some(front) = self.parts.front_mut() {
            if let Some(a) = front.next(ctx) {
                return Some(a);
            }
            self.parts.pop_front();
        }
        None
    }
}

/// Dimension-ordered walk to a target cell: x first, then y.
pub struct WalkTo {
    pub target: Coord,
}

impl Program for WalkTo {
    fn next(&mut self, ctx: &mut Ctx<'_>) -> Option<Action> {
        let p = ctx.pos;
        if p.x < self.target.x {
            Some(Action::Move(Dir::East))
        } else if p.x > self.target.x {
            Some(Action::Move(Dir::West))
        } else if p.y < self.target.y {
            Some(Action::Move(Dir::South))
        } else if p.y > self.target.y {
            Some(Action::Move(Dir::North))
        } else {
            None
        }
    }
}

/// Step through an explicit list of cells (each adjacent to the previous).
pub struct FollowPath {
    cells: VecDeque<Coord>,
}

impl FollowPath {
    pub fn new(cells: impl IntoIterator<Item = Coord>) -> Self {
        FollowPath {
            cells: cells.into_iter().collect(),
        }
    }
}

impl Program for FollowPath {
    fn next(&mut self, ctx: &mut Ctx<'_>) -> Option<Action> {
        let next = *self.cells.front()?;
        if next == ctx.pos {
            self.cells.pop_front();
            return self.next(ctx);
        }
        debug_assert_eq!(
            ctx.pos.manhattan(next),
            1,
            "path cell ({}, {}) not adjacent to ({}, {})",
            next.x,
            next.y,
            ctx.pos.x,
            ctx.pos.y
        );
        let dir = if next.x > ctx.pos.x {
            Dir::East
        } else if next.x < ctx.pos.x {
            Dir::West
        } else if next.y > ctx.pos.y {
            Dir::South
        } else {
            Dir::North
        };
        self.cells.pop_front();
        Some(Action::Move(dir))
    }
}

/// Fixed action script.
pub struct Script {
    actions: VecDeque<Action>,
}

impl Script {
    pub fn new(actions: impl IntoIterator<Item = Action>) -> Self {
        Script {
            actions: actions.into_iter().collect(),
        }
    }

    pub fn one(action: Action) -> Self {
        Script::new([action])
    }
}

impl Program for Script {
    fn next(&mut self, _ctx: &mut Ctx<'_>) -> Option<Action> {
        self.actions.pop_front()
    }
}

/// Idle for a fixed number of unit steps (deterministic staggering).
pub struct Stagger {
    pub steps: u32,
}

impl Program for Stagger {
    fn next(&mut self, _ctx: &mut Ctx<'_>) -> Option<Action> {
        if self.steps == 0 {
            None
        } else {
            self.steps -= 1;
            Some(Action::Idle)
        }
    }
}

/// Deposit words from a queue at the current cell, `batch` per action.
pub struct DepositAll {
    words: VecDeque<Word>,
}

impl DepositAll {
    pub fn new(words: impl IntoIterator<Item = Word>) -> Self {
        DepositAll {
            words: words.into_iter().collect(),
        }
    }
}

impl Program for DepositAll {
    fn next(&mut self, ctx: &mut Ctx<'_>) -> Option<Action> {
        if self.words.is_empty() {
            return None;
        }
        let cap = ctx.config.w_cell;
        let mut av: ArrayVec<Word, { crate::engine::MAX_WORDS }> = ArrayVec::new();
        while av.len() < cap && !self.words.is_empty() {
            av.push(self.words.pop_front().unwrap());
        }
        Some(Action::Deposit(av))
    }
}

/// Drop the whole payload into the current cell's scratch, then end.
pub struct DepositPayload {
    fired: bool,
}

impl DepositPayload {
    pub fn new() -> Self {
        DepositPayload { fired: false }
    }
}

impl Default for DepositPayload {
    fn default() -> Self {
        Self::new()
    }
}

impl Program for DepositPayload {
    fn next(&mut self, ctx: &mut Ctx<'_>) -> Option<Action> {
        if self.fired || ctx.payload.is_empty() {
            return None;
        }
        self.fired = true;
        let words: ArrayVec<Word, { crate::engine::MAX_WORDS }> =
            ctx.payload.drain(..).collect();
        Some(Action::Deposit(words))
    }
}

/// Shortest-path route between two cells, x-leg then y-leg.
pub fn dimension_ordered_path(from: Coord, to: Coord) -> Vec<Coord> {
    let mut cells = Vec::with_capacity((from.manhattan(to) + 1) as usize);
    let mut c = from;
    while c.x != to.x {
        c.x = if c.x < to.x { c.x + 1 } else { c.x - 1 };
        cells.push(c);
    }
    while c.y != to.y {
        c.y = if c.y < to.y { c.y + 1 } else { c.y - 1 };
        cells.push(c);
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Engine, ModelConfig};
    use crate::exact::Exact;
    use crate::image::ImageGrid;

    #[test]
    fn walk_to_takes_manhattan_steps() {
        let img = ImageGrid::filled(8, 0).unwrap();
        let mut eng = Engine::new(&img, 1, ModelConfig::default()).unwrap();
        eng.run_phase(vec![(
            0,
            Box::new(WalkTo {
                target: Coord::new(5, 3),
            }),
        )])
        .unwrap();
        assert_eq!(eng.squirrel(0).pos, Coord::new(5, 3));
        assert_eq!(eng.elapsed(), Exact::from_int(8));
    }

    #[test]
    fn seq_runs_in_order() {
        let img = ImageGrid::filled(8, 0).unwrap();
        let mut eng = Engine::new(&img, 1, ModelConfig::default()).unwrap();
        eng.run_phase(vec![(
            0,
            Box::new(Seq::new(vec![
                Box::new(WalkTo {
                    target: Coord::new(2, 0),
                }),
                Box::new(Script::one(Action::Put { slot: 4, word: 77 })),
                Box::new(WalkTo {
                    target: Coord::new(0, 0),
                }),
            ])),
        )])
        .unwrap();
        assert_eq!(eng.cell(Coord::new(2, 0)).slot(4), Some(77));
        assert_eq!(eng.squirrel(0).pos, Coord::new(0, 0));
    }

    #[test]
    fn occupancy_wait_resolves() {
        // Squirrel 1 must wait (charged, active) until squirrel 0 vacates.
        let img = ImageGrid::filled(8, 0).unwrap();
        let config = ModelConfig {
            k_occ: 1,
            ..Default::default()
        };
        let mut eng = Engine::new(&img, 2, config).unwrap();
        // Homes: 0 → (0,0), 1 → (0,4).
        let progs: Vec<(u32, Box<dyn Program>)> = vec![
            (
                0,
                Box::new(Seq::new(vec![
                    Box::new(Stagger { steps: 5 }),
                    Box::new(Script::one(Action::Move(Dir::East))),
                ])),
            ),
            (
                1,
                Box::new(WalkTo {
                    target: Coord::new(0, 0),
                }),
            ),
        ];
        eng.run_phase(progs).unwrap();
        assert_eq!(eng.squirrel(0).pos, Coord::new(1, 0));
        assert_eq!(eng.squirrel(1).pos, Coord::new(0, 0));
        // Squirrel 1 reached (0,1) at t=3, waited until 0 vacated at t=5,
        // and arrived at t=6. Total energy: 6 for each squirrel.
        assert_eq!(eng.elapsed(), Exact::from_int(6));
        assert_eq!(eng.total_cell_energy(), Exact::from_int(12));
    }

    #[test]
    fn head_on_deadlock_is_detected() {
        let img = ImageGrid::filled(8, 0).unwrap();
        let config = ModelConfig {
            k_occ: 1,
            ..Default::default()
        };
        let mut eng = Engine::new(&img, 2, config).unwrap();
        // 0 at (0,0) and 1 at (0,4) swap places along the same column.
        let progs: Vec<(u32, Box<dyn Program>)> = vec![
            (
                0,
                Box::new(WalkTo {
                    target: Coord::new(0, 4),
                }),
            ),
            (
                1,
                Box::new(WalkTo {
                    target: Coord::new(0, 0),
                }),
            ),
        ];
        let err = eng.run_phase(progs).unwrap_err();
        assert!(matches!(err, crate::error::MeshError::SchedulingFault(_)));
    }
}
