//! The mesh simulation engine.
//!
//! One engine instance is a deterministic sequential state machine: squirrels
//! execute unit-cost actions (move, deposit, collect, slot writes) under a
//! discrete-event scheduler ordered by (model time, squirrel id). Occupancy,
//! cell scratch capacity, and squirrel payload capacity are enforced on every
//! action. Embedded standard-mesh subroutines run as charged subroutines:
//! the functional result is computed outside the step engine while time and
//! energy are billed by the stepwise-simulation formula.
//!
//! Time, energy, and speed are exact elements of Q(√2); a squirrel at speed
//! `v = √p` spends `1/v` time and `v` energy per action (power `p = v²`).

use crate::error::{MeshError, Result};
use crate::exact::{Exact, Rat};
use crate::geometry::{Adjacency, Block, Coord, Dir, GridGeometry};
use crate::image::{Color, ImageGrid};
use arrayvec::ArrayVec;
use num_traits::Zero;
use std::collections::{BTreeMap, BinaryHeap};

pub type Word = u64;

/// Compile-time bound on the configurable word capacities.
pub const MAX_WORDS: usize = 12;

/// Bounded-memory and occupancy constants. All three are knobs; the defaults
/// are deliberately small so algorithms must respect the discipline.
#[derive(Debug, Clone, Copy)]
pub struct ModelConfig {
    pub w_cell: usize,
    pub w_sq: usize,
    pub k_occ: usize,
    /// Max times a cell may be activated within one spread simulation.
    pub k_reuse: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            w_cell: 8,
            w_sq: 8,
            k_occ: 4,
            k_reuse: 3,
        }
    }
}

/// How charged subroutines land on the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyMode {
    /// Bill the subroutine region's cells uniformly.
    PeakPowerOnly,
    /// Expand the simulating submesh across its enclosing square with spaced
    /// slots and a diagonal drift so no cell is reused.
    BalancedPerCell,
}

#[derive(Debug, Clone)]
pub struct CellState {
    pub color: Color,
    slots: [Option<Word>; MAX_WORDS],
    pub energy: Exact,
}

impl CellState {
    fn new(color: Color) -> Self {
        CellState {
            color,
            slots: [None; MAX_WORDS],
            energy: Exact::zero(),
        }
    }

    pub fn slot(&self, i: usize) -> Option<Word> {
        self.slots[i]
    }

    fn occupied(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }
}

#[derive(Debug, Clone)]
pub struct SquirrelState {
    pub id: u32,
    pub pos: Coord,
    pub payload: ArrayVec<Word, MAX_WORDS>,
    speed: Exact,
    inv_speed: Exact,
    power: Rat,
    pub clock: Exact,
}

impl SquirrelState {
    pub fn speed(&self) -> Exact {
        self.speed
    }

    pub fn power(&self) -> Rat {
        self.power
    }
}

/// One unit-cost squirrel action. Every action takes `1/speed` model time
/// and `speed` energy.
#[derive(Debug, Clone)]
pub enum Action {
    Move(Dir),
    /// Stay active in place for one unit step.
    Idle,
    /// Write one scratch slot of the current cell.
    Put { slot: usize, word: Word },
    /// Clear one scratch slot.
    Erase { slot: usize },
    /// Move one slot word from the cell into the payload (clears the slot).
    Take { slot: usize },
    /// Copy one slot word into the payload (slot kept).
    Load { slot: usize },
    /// Append words to the cell scratch (lowest free slots first).
    Deposit(ArrayVec<Word, MAX_WORDS>),
    /// Remove the `k` highest occupied slots into the payload.
    Collect(usize),
}

/// View of the world a program may consult when choosing its next action.
/// Reads are local: the current cell and its Chebyshev-1 neighborhood.
pub struct Ctx<'a> {
    pub id: u32,
    pub pos: Coord,
    pub payload: &'a mut ArrayVec<Word, MAX_WORDS>,
    pub geom: GridGeometry,
    pub s: u32,
    pub config: ModelConfig,
    cells: &'a [CellState],
    occupancy: &'a [u8],
}

impl<'a> Ctx<'a> {
    fn local(&self, c: Coord) -> bool {
        self.geom.contains(c)
            && c.x.abs_diff(self.pos.x) <= 1
            && c.y.abs_diff(self.pos.y) <= 1
    }

    fn idx(&self, c: Coord) -> usize {
        (c.y * self.geom.n + c.x) as usize
    }

    pub fn color(&self, c: Coord) -> Color {
        debug_assert!(self.local(c), "non-local read at ({}, {})", c.x, c.y);
        self.cells[self.idx(c)].color
    }

    pub fn slot(&self, c: Coord, i: usize) -> Option<Word> {
        debug_assert!(self.local(c), "non-local read at ({}, {})", c.x, c.y);
        self.cells[self.idx(c)].slot(i)
    }

    pub fn here_color(&self) -> Color {
        self.cells[self.idx(self.pos)].color
    }

    pub fn here_slot(&self, i: usize) -> Option<Word> {
        self.cells[self.idx(self.pos)].slot(i)
    }

    pub fn occupancy(&self, c: Coord) -> u8 {
        debug_assert!(self.local(c));
        self.occupancy[self.idx(c)]
    }

    pub fn n(&self) -> u32 {
        self.geom.n
    }
}

/// A squirrel's control program: yields one action at a time; `None` ends it.
/// Program structs hold only O(1) control state; carried data lives in the
/// capacity-checked payload.
pub trait Program {
    fn next(&mut self, ctx: &mut Ctx<'_>) -> Option<Action>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunState {
    Runnable,
    Done,
}

/// Raw activity trace event: at `t`, active count changes by `dcount` and
/// total active power by `dpower`.
#[derive(Debug, Clone)]
pub struct TraceEvent {
    pub t: Exact,
    pub dcount: i64,
    pub dpower: Rat,
}

/// Per-phase statistics returned by the scheduler.
#[derive(Debug, Clone, Default)]
pub struct PhaseStats {
    /// Move-action count per participating squirrel id.
    pub moves: BTreeMap<u32, u64>,
}

pub struct Engine {
    pub geom: GridGeometry,
    config: ModelConfig,
    cells: Vec<CellState>,
    occupancy: Vec<u8>,
    squirrels: Vec<SquirrelState>,
    events: Vec<TraceEvent>,
    mode: EnergyMode,
    /// Optional cap asserted against the instantaneous sum of active powers.
    power_budget: Option<Rat>,
    max_active_power: Rat,
    charged_max_reuse: u32,
    global_clock: Exact,
}

impl Engine {
    pub fn new(image: &ImageGrid, s: u32, config: ModelConfig) -> Result<Engine> {
        Engine::with_adjacency(image, s, config, Adjacency::Edge4)
    }

    pub fn with_adjacency(
        image: &ImageGrid,
        s: u32,
        config: ModelConfig,
        adjacency: Adjacency,
    ) -> Result<Engine> {
        if s == 0 {
            return Err(MeshError::domain("squirrel count must be at least 1"));
        }
        let geom = GridGeometry::new(image.n(), adjacency)?;
        let n = geom.n;
        let cells: Vec<CellState> = image.pixels().iter().map(|&c| CellState::new(c)).collect();
        let mut occupancy = vec![0u8; (n * n) as usize];
        let stride = ((n * n) / s).max(1);
        let mut squirrels = Vec::with_capacity(s as usize);
        for id in 0..s {
            let z = (id as u64 * stride as u64 % (n * n) as u64) as u32;
            let pos = crate::geometry::z_coords(z, n)?;
            occupancy[(pos.y * n + pos.x) as usize] += 1;
            squirrels.push(SquirrelState {
                id,
                pos,
                payload: ArrayVec::new(),
                speed: Exact::one(),
                inv_speed: Exact::one(),
                power: Rat::from_integer(1),
                clock: Exact::zero(),
            });
        }
        Ok(Engine {
            geom,
            config,
            cells,
            occupancy,
            squirrels,
            events: Vec::new(),
            mode: EnergyMode::PeakPowerOnly,
            power_budget: None,
            max_active_power: Rat::zero(),
            charged_max_reuse: 0,
            global_clock: Exact::zero(),
        })
    }

    pub fn config(&self) -> ModelConfig {
        self.config
    }

    pub fn s(&self) -> u32 {
        self.squirrels.len() as u32
    }

    pub fn n(&self) -> u32 {
        self.geom.n
    }

    pub fn set_energy_mode(&mut self, mode: EnergyMode) {
        self.mode = mode;
    }

    pub fn energy_mode(&self) -> EnergyMode {
        self.mode
    }

    pub fn set_power_budget(&mut self, budget: Option<Rat>) {
        self.power_budget = budget;
    }

    pub fn max_active_power(&self) -> Rat {
        self.max_active_power
    }

    pub fn charged_max_reuse(&self) -> u32 {
        self.charged_max_reuse
    }

    /// Set a squirrel's speed to √power. Only representable speeds (power of
    /// the form q² or 2q²) are accepted.
    pub fn set_speed_from_power(&mut self, id: u32, power: Rat) -> Result<()> {
        let speed = Exact::new(power, Rat::zero())
            .sqrt_exact()
            .ok_or_else(|| {
                MeshError::domain(format!(
                    "per-squirrel power {power} has no exact √ in Q(√2); use q² or 2q²"
                ))
            })?;
        let sq = &mut self.squirrels[id as usize];
        sq.speed = speed;
        sq.inv_speed = speed.recip();
        sq.power = power;
        Ok(())
    }

    pub fn set_all_speeds_from_power(&mut self, power: Rat) -> Result<()> {
        for id in 0..self.s() {
            self.set_speed_from_power(id, power)?;
        }
        Ok(())
    }

    pub fn squirrel(&self, id: u32) -> &SquirrelState {
        &self.squirrels[id as usize]
    }

    pub fn cell(&self, c: Coord) -> &CellState {
        &self.cells[self.cell_idx(c)]
    }

    fn cell_idx(&self, c: Coord) -> usize {
        (c.y * self.geom.n + c.x) as usize
    }

    pub fn elapsed(&self) -> Exact {
        self.global_clock
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn total_cell_energy(&self) -> Exact {
        self.cells.iter().map(|c| c.energy).sum()
    }

    pub fn max_cell_energy(&self) -> Exact {
        self.cells
            .iter()
            .map(|c| c.energy)
            .max()
            .unwrap_or_else(Exact::zero)
    }

    /// Synchronize every squirrel's clock to the phase barrier.
    pub fn barrier(&mut self) {
        let t = self
            .squirrels
            .iter()
            .map(|s| s.clock)
            .max()
            .unwrap_or_else(Exact::zero)
            .max(self.global_clock);
        for s in &mut self.squirrels {
            s.clock = t;
        }
        self.global_clock = t;
    }

    fn record_interval(&mut self, from: Exact, to: Exact, count: i64, power: Rat) {
        self.events.push(TraceEvent {
            t: from,
            dcount: count,
            dpower: power,
        });
        self.events.push(TraceEvent {
            t: to,
            dcount: -count,
            dpower: -power,
        });
    }

    fn charge_cell(&mut self, c: Coord, e: Exact) {
        let i = self.cell_idx(c);
        self.cells[i].energy += e;
    }

    /// Run one SIMD-style phase: each (id, program) pair executes to
    /// completion, interleaved in (time, id) order, then all clocks are
    /// synchronized at the phase barrier.
    pub fn run_phase(&mut self, programs: Vec<(u32, Box<dyn Program>)>) -> Result<PhaseStats> {
        let mut stats = PhaseStats::default();
        let mut progs: BTreeMap<u32, Box<dyn Program>> = BTreeMap::new();
        for (id, p) in programs {
            if progs.insert(id, p).is_some() {
                return Err(MeshError::domain(format!(
                    "squirrel {id} given two programs in one phase"
                )));
            }
            stats.moves.insert(id, 0);
        }
        let mut state: BTreeMap<u32, RunState> =
            progs.keys().map(|&id| (id, RunState::Runnable)).collect();
        // Min-heap on (time, id).
        let mut heap: BinaryHeap<std::cmp::Reverse<(Exact, u32)>> = progs
            .keys()
            .map(|&id| std::cmp::Reverse((self.squirrels[id as usize].clock, id)))
            .collect();
        let mut waiting: BTreeMap<Coord, Vec<u32>> = BTreeMap::new();
        // Moves blocked by occupancy, retried verbatim once woken.
        let mut pending: BTreeMap<u32, Dir> = BTreeMap::new();
        let mut live = progs.len();

        while live > 0 {
            let Some(std::cmp::Reverse((t, id))) = heap.pop() else {
                let stuck: Vec<u32> = waiting.values().flatten().copied().collect();
                return Err(MeshError::SchedulingFault(format!(
                    "deadlock: squirrels {stuck:?} wait on full cells"
                )));
            };
            if state[&id] == RunState::Done {
                continue;
            }
            let action = if let Some(&dir) = pending.get(&id) {
                Some(Action::Move(dir))
            } else {
                let sq = &mut self.squirrels[id as usize];
                let mut payload = std::mem::take(&mut sq.payload);
                let pos = sq.pos;
                let mut ctx = Ctx {
                    id,
                    pos,
                    payload: &mut payload,
                    geom: self.geom,
                    s: self.squirrels.len() as u32,
                    config: self.config,
                    cells: &self.cells,
                    occupancy: &self.occupancy,
                };
                let action = progs.get_mut(&id).unwrap().next(&mut ctx);
                if payload.len() > self.config.w_sq {
                    return Err(MeshError::PayloadFault {
                        id,
                        detail: format!(
                            "payload grew to {} words (capacity {})",
                            payload.len(),
                            self.config.w_sq
                        ),
                    });
                }
                self.squirrels[id as usize].payload = payload;
                action
            };
            let Some(action) = action else {
                state.insert(id, RunState::Done);
                live -= 1;
                continue;
            };
            if let Action::Move(dir) = action {
                match self.try_move(id, t, dir, &mut waiting)? {
                    MoveOutcome::Moved => {
                        *stats.moves.get_mut(&id).unwrap() += 1;
                        pending.remove(&id);
                        // Departure may unblock waiters of the vacated cell.
                        let sq = &self.squirrels[id as usize];
                        heap.push(std::cmp::Reverse((sq.clock, id)));
                        self.wake(&mut waiting, &mut heap, t);
                    }
                    MoveOutcome::Blocked => {
                        pending.insert(id, dir);
                    }
                }
            } else {
                self.execute_stationary(id, t, action)?;
                let sq = &self.squirrels[id as usize];
                heap.push(std::cmp::Reverse((sq.clock, id)));
            }
        }
        self.barrier();
        Ok(stats)
    }

    fn wake(
        &mut self,
        waiting: &mut BTreeMap<Coord, Vec<u32>>,
        heap: &mut BinaryHeap<std::cmp::Reverse<(Exact, u32)>>,
        now: Exact,
    ) {
        // Requeue every waiter whose target now has room, lowest id first.
        let mut to_wake: Vec<u32> = Vec::new();
        for (&cell, ids) in waiting.iter_mut() {
            let free =
                self.config.k_occ.saturating_sub(self.occupancy[self.cell_idx(cell)] as usize);
            if free == 0 || ids.is_empty() {
                continue;
            }
            ids.sort_unstable();
            for _ in 0..free.min(ids.len()) {
                to_wake.push(ids.remove(0));
            }
        }
        waiting.retain(|_, v| !v.is_empty());
        for id in to_wake {
            let t = self.squirrels[id as usize].clock.max(now);
            heap.push(std::cmp::Reverse((t, id)));
        }
    }

    fn try_move(
        &mut self,
        id: u32,
        now: Exact,
        dir: Dir,
        waiting: &mut BTreeMap<Coord, Vec<u32>>,
    ) -> Result<MoveOutcome> {
        let target = t_target(self, id, dir)?;
        let tidx = self.cell_idx(target);
        if (self.occupancy[tidx] as usize) >= self.config.k_occ {
            waiting.entry(target).or_default().push(id);
            return Ok(MoveOutcome::Blocked);
        }
        let (pos, clock, speed, inv_speed, power) = {
            let sq = &self.squirrels[id as usize];
            (sq.pos, sq.clock, sq.speed, sq.inv_speed, sq.power)
        };
        // Idle-active wait time (blocked moves resume later than their clock).
        if now > clock {
            let wait = now - clock;
            self.charge_cell(pos, wait * Exact::new(power, Rat::zero()));
            self.record_interval(clock, now, 1, power);
        }
        let done = now + inv_speed;
        let pidx = self.cell_idx(pos);
        self.occupancy[pidx] -= 1;
        self.occupancy[tidx] += 1;
        self.charge_cell(target, speed);
        self.record_interval(now, done, 1, power);
        self.track_power(power);
        let sq = &mut self.squirrels[id as usize];
        sq.pos = target;
        sq.clock = done;
        Ok(MoveOutcome::Moved)
    }

    fn execute_stationary(&mut self, id: u32, now: Exact, action: Action) -> Result<()> {
        let (pos, clock, speed, inv_speed, power) = {
            let sq = &self.squirrels[id as usize];
            (sq.pos, sq.clock, sq.speed, sq.inv_speed, sq.power)
        };
        debug_assert!(now >= clock);
        if now > clock {
            let wait = now - clock;
            self.charge_cell(pos, wait * Exact::new(power, Rat::zero()));
            self.record_interval(clock, now, 1, power);
        }
        let done = now + inv_speed;
        self.apply_cell_action(id, pos, action)?;
        self.charge_cell(pos, speed);
        self.record_interval(now, done, 1, power);
        self.track_power(power);
        self.squirrels[id as usize].clock = done;
        Ok(())
    }

    fn track_power(&mut self, p: Rat) {
        // Conservative bookkeeping: the scheduler interleaves, so the exact
        // concurrent set comes from the trace; here we only track the cap.
        if self.power_budget.is_some() && p > self.max_active_power {
            self.max_active_power = p;
        }
    }

    fn apply_cell_action(&mut self, id: u32, pos: Coord, action: Action) -> Result<()> {
        let w_cell = self.config.w_cell;
        let w_sq = self.config.w_sq;
        let idx = self.cell_idx(pos);
        match action {
            Action::Move(_) => unreachable!(),
            Action::Idle => {}
            Action::Put { slot, word } => {
                if slot >= w_cell {
                    return Err(capacity(pos, format!("slot {slot} >= W_cell {w_cell}")));
                }
                self.cells[idx].slots[slot] = Some(word);
            }
            Action::Erase { slot } => {
                if slot >= w_cell {
                    return Err(capacity(pos, format!("slot {slot} >= W_cell {w_cell}")));
                }
                self.cells[idx].slots[slot] = None;
            }
            Action::Take { slot } | Action::Load { slot } => {
                if slot >= w_cell {
                    return Err(capacity(pos, format!("slot {slot} >= W_cell {w_cell}")));
                }
                let take = matches!(action, Action::Take { .. });
                let Some(word) = self.cells[idx].slots[slot] else {
                    return Err(MeshError::domain(format!(
                        "squirrel {id} read empty slot {slot} at ({}, {})",
                        pos.x, pos.y
                    )));
                };
                let sq = &mut self.squirrels[id as usize];
                if sq.payload.len() >= w_sq {
                    return Err(MeshError::PayloadFault {
                        id,
                        detail: format!("payload full (capacity {w_sq})"),
                    });
                }
                sq.payload.push(word);
                if take {
                    self.cells[idx].slots[slot] = None;
                }
            }
            Action::Deposit(words) => {
                let cell = &mut self.cells[idx];
                if cell.occupied() + words.len() > w_cell {
                    return Err(capacity(
                        pos,
                        format!(
                            "deposit of {} words onto {} occupied (capacity {w_cell})",
                            words.len(),
                            cell.occupied()
                        ),
                    ));
                }
                for w in words {
                    let free = cell.slots[..w_cell]
                        .iter()
                        .position(|s| s.is_none())
                        .expect("free slot exists");
                    cell.slots[free] = Some(w);
                }
            }
            Action::Collect(k) => {
                let sq_len = self.squirrels[id as usize].payload.len();
                if sq_len + k > w_sq {
                    return Err(MeshError::PayloadFault {
                        id,
                        detail: format!("collect {k} onto {sq_len} (capacity {w_sq})"),
                    });
                }
                let cell = &mut self.cells[idx];
                let mut grabbed = Vec::with_capacity(k);
                for s in cell.slots[..w_cell].iter_mut().rev() {
                    if grabbed.len() == k {
                        break;
                    }
                    if let Some(w) = s.take() {
                        grabbed.push(w);
                    }
                }
                if grabbed.len() < k {
                    return Err(MeshError::domain(format!(
                        "collect {k} from cell with {} words",
                        grabbed.len()
                    )));
                }
                grabbed.reverse();
                let sq = &mut self.squirrels[id as usize];
                for w in grabbed {
                    sq.payload.push(w);
                }
            }
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Direct-drive single operations (used by tests and simple phases).
    // ------------------------------------------------------------------

    /// Step one squirrel in a direction, outside any phase.
    pub fn step_move(&mut self, id: u32, dir: Dir) -> Result<()> {
        let mut waiting = BTreeMap::new();
        let now = self.squirrels[id as usize].clock;
        match self.try_move(id, now, dir, &mut waiting)? {
            MoveOutcome::Moved => Ok(()),
            MoveOutcome::Blocked => Err(MeshError::SchedulingFault(format!(
                "squirrel {id} blocked by occupancy outside a phase"
            ))),
        }
    }

    pub fn deposit_words(&mut self, id: u32, words: &[Word]) -> Result<()> {
        let now = self.squirrels[id as usize].clock;
        let mut av = ArrayVec::new();
        for &w in words {
            av.try_push(w)
                .map_err(|_| MeshError::domain("deposit exceeds compile-time word bound"))?;
        }
        self.execute_stationary(id, now, Action::Deposit(av))
    }

    pub fn collect_words(&mut self, id: u32, k: usize) -> Result<Vec<Word>> {
        let now = self.squirrels[id as usize].clock;
        let before = self.squirrels[id as usize].payload.len();
        self.execute_stationary(id, now, Action::Collect(k))?;
        Ok(self.squirrels[id as usize].payload[before..].to_vec())
    }

    /// Exchange designated payload words between co-located or adjacent
    /// squirrels. One unit is charged to each participant.
    pub fn exchange(&mut self, a: u32, b: u32) -> Result<()> {
        if a == b {
            return Err(MeshError::domain("exchange requires two squirrels"));
        }
        let (pa, pb) = (self.squirrels[a as usize].pos, self.squirrels[b as usize].pos);
        if pa.manhattan(pb) > 1 {
            return Err(MeshError::domain(format!(
                "exchange requires same or adjacent cells; distance {}",
                pa.manhattan(pb)
            )));
        }
        let t = self.squirrels[a as usize]
            .clock
            .max(self.squirrels[b as usize].clock);
        for id in [a, b] {
            let sq = &self.squirrels[id as usize];
            let (pos, clock, speed, inv, power) =
                (sq.pos, sq.clock, sq.speed, sq.inv_speed, sq.power);
            if t > clock {
                self.charge_cell(pos, (t - clock) * Exact::new(power, Rat::zero()));
                self.record_interval(clock, t, 1, power);
            }
            self.charge_cell(pos, speed);
            self.record_interval(t, t + inv, 1, power);
            self.squirrels[id as usize].clock = t + inv;
        }
        let pay_a = self.squirrels[a as usize].payload.clone();
        let pay_b = self.squirrels[b as usize].payload.clone();
        self.squirrels[a as usize].payload = pay_b;
        self.squirrels[b as usize].payload = pay_a;
        Ok(())
    }

    // ------------------------------------------------------------------
    // Charged subroutines
    // ------------------------------------------------------------------

    /// Run an embedded standard-mesh algorithm functionally, billing
    /// `sim_time × ⌈sim_procs / g⌉ / v` model time to the `g` assigned
    /// squirrels and `sim_time × sim_procs × v` energy (× the relay spacing
    /// in balanced mode) across the region.
    pub fn run_charged(
        &mut self,
        sub: ChargedSubroutine<'_>,
        f: impl FnOnce(&mut RegionIo<'_>) -> Result<()>,
    ) -> Result<()> {
        let ChargedSubroutine {
            region,
            scope,
            sim_time,
            sim_procs,
            squirrels,
        } = sub;
        if squirrels.is_empty() {
            return Err(MeshError::domain(
                "charged subroutine needs at least one assigned squirrel",
            ));
        }
        let g = squirrels.len() as u64;
        let speed = self.squirrels[squirrels[0] as usize].speed;
        for &id in squirrels {
            let sq = &self.squirrels[id as usize];
            if sq.speed != speed {
                return Err(MeshError::domain(
                    "charged subroutine squirrels must share one speed",
                ));
            }
            let inside = sq.pos.x + 1 >= scope.origin.x
                && sq.pos.x <= scope.origin.x + scope.side
                && sq.pos.y + 1 >= scope.origin.y
                && sq.pos.y <= scope.origin.y + scope.side;
            if !inside {
                return Err(MeshError::domain(format!(
                    "squirrel {id} at ({}, {}) outside subroutine scope",
                    sq.pos.x, sq.pos.y
                )));
            }
        }
        // Functional result first; billing is independent of it.
        {
            let mut io = RegionIo {
                engine: self,
                scope,
            };
            f(&mut io)?;
        }
        let power = self.squirrels[squirrels[0] as usize].power;
        let inv_speed = self.squirrels[squirrels[0] as usize].inv_speed;
        let t0 = squirrels
            .iter()
            .map(|&id| self.squirrels[id as usize].clock)
            .max()
            .unwrap();
        let slowdown = (sim_procs + g - 1) / g;
        let spacing = match self.mode {
            EnergyMode::PeakPowerOnly => 1u64,
            EnergyMode::BalancedPerCell => spread_spacing(scope.side, region.side),
        };
        let duration =
            Exact::from_int((sim_time * slowdown * spacing) as i64) * inv_speed;
        let total_energy = Exact::from_int((sim_time * sim_procs * spacing) as i64) * speed;
        match self.mode {
            EnergyMode::PeakPowerOnly => {
                let cells: Vec<Coord> = region.cells().collect();
                let share = total_energy * Rat::new(1, cells.len() as i128);
                for c in cells {
                    self.charge_cell(c, share);
                }
            }
            EnergyMode::BalancedPerCell => {
                self.bill_spread(region, scope, sim_time, sim_procs, spacing, speed)?;
            }
        }
        let active_power = power * Rat::from_integer(g as i128);
        if let Some(budget) = self.power_budget {
            if active_power > budget {
                return Err(MeshError::domain(format!(
                    "charged subroutine power {active_power} exceeds budget {budget}"
                )));
            }
        }
        self.record_interval(t0, t0 + duration, g as i64, active_power);
        if active_power > self.max_active_power {
            self.max_active_power = active_power;
        }
        for &id in squirrels {
            self.squirrels[id as usize].clock = t0 + duration;
        }
        Ok(())
    }

    /// Expanded-mesh billing: simulating slots spaced `spacing` apart drift
    /// diagonally one cell per round so no cell is reused.
    fn bill_spread(
        &mut self,
        region: Block,
        scope: Block,
        sim_time: u64,
        sim_procs: u64,
        spacing: u64,
        speed: Exact,
    ) -> Result<()> {
        let side = scope.side as u64;
        let r = (sim_procs as f64).sqrt().ceil() as u64;
        let steps_per_round = (sim_time + spacing - 1) / spacing;
        let rounds = (sim_time + steps_per_round - 1) / steps_per_round;
        let mut weights: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        let mut touched: BTreeMap<(u64, u64), u32> = BTreeMap::new();
        let mut billed_steps = 0;
        for round in 0..rounds {
            let steps = steps_per_round.min(sim_time - billed_steps);
            billed_steps += steps;
            let mut procs_left = sim_procs;
            'outer: for j in 0..r {
                for i in 0..r {
                    if procs_left == 0 {
                        break 'outer;
                    }
                    procs_left -= 1;
                    let bx = (i * spacing + round) % side;
                    let by = (j * spacing + round) % side;
                    for k in 0..spacing {
                        let cell = ((bx + k) % side, by);
                        *weights.entry(cell).or_insert(0) += steps;
                    }
                    let t = touched.entry((bx, by)).or_insert(0);
                    *t += 1;
                    self.charged_max_reuse = self.charged_max_reuse.max(*t);
                }
            }
        }
        let _ = region;
        for ((x, y), w) in weights {
            let c = Coord::new(
                scope.origin.x + x as u32,
                scope.origin.y + y as u32,
            );
            self.charge_cell(c, speed * Exact::from_int(w as i64));
        }
        Ok(())
    }
}

fn spread_spacing(scope_side: u32, region_side: u32) -> u64 {
    let max_fit = (scope_side / region_side.max(1)).max(1);
    let target = (scope_side as f64).sqrt() as u32;
    let mut s = 1u32;
    while s * 2 <= target.min(max_fit) {
        s *= 2;
    }
    s as u64
}

fn capacity(pos: Coord, detail: String) -> MeshError {
    MeshError::CapacityFault {
        x: pos.x,
        y: pos.y,
        detail,
    }
}

fn t_target(engine: &Engine, id: u32, dir: Dir) -> Result<Coord> {
    let pos = engine.squirrels[id as usize].pos;
    let target = pos
        .step(dir)
        .filter(|c| engine.geom.contains(*c))
        .ok_or_else(|| {
            MeshError::domain(format!(
                "squirrel {id} would move off-grid from ({}, {})",
                pos.x, pos.y
            ))
        })?;
    Ok(target)
}

enum MoveOutcome {
    Moved,
    Blocked,
}

/// Parameters of one charged standard-mesh subroutine invocation.
pub struct ChargedSubroutine<'a> {
    /// Cells that hold the subroutine's inputs and outputs.
    pub region: Block,
    /// Enclosing square; balanced mode spreads the simulation across it.
    pub scope: Block,
    pub sim_time: u64,
    pub sim_procs: u64,
    pub squirrels: &'a [u32],
}

/// Scratch access handed to a charged subroutine's functional body. Reads
/// and writes are bounded by the subroutine's scope.
pub struct RegionIo<'a> {
    engine: &'a mut Engine,
    scope: Block,
}

impl<'a> RegionIo<'a> {
    fn check(&self, c: Coord) -> Result<()> {
        if !self.scope.contains(c) {
            return Err(MeshError::domain(format!(
                "charged subroutine touched ({}, {}) outside its scope",
                c.x, c.y
            )));
        }
        Ok(())
    }

    pub fn scope(&self) -> Block {
        self.scope
    }

    pub fn w_cell(&self) -> usize {
        self.engine.config.w_cell
    }

    pub fn color(&self, c: Coord) -> Result<Color> {
        self.check(c)?;
        Ok(self.engine.cells[self.engine.cell_idx(c)].color)
    }

    pub fn read(&self, c: Coord, slot: usize) -> Result<Option<Word>> {
        self.check(c)?;
        Ok(self.engine.cells[self.engine.cell_idx(c)].slot(slot))
    }

    pub fn write(&mut self, c: Coord, slot: usize, w: Word) -> Result<()> {
        self.check(c)?;
        if slot >= self.engine.config.w_cell {
            return Err(capacity(c, format!("slot {slot} >= W_cell")));
        }
        let idx = self.engine.cell_idx(c);
        self.engine.cells[idx].slots[slot] = Some(w);
        Ok(())
    }

    pub fn clear(&mut self, c: Coord, slot: usize) -> Result<()> {
        self.check(c)?;
        let idx = self.engine.cell_idx(c);
        self.engine.cells[idx].slots[slot] = None;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageGrid;

    fn engine(n: u32, s: u32) -> Engine {
        let img = ImageGrid::filled(n, 0).unwrap();
        Engine::new(&img, s, ModelConfig::default()).unwrap()
    }

    #[test]
    fn unit_move_costs_unit_time_and_energy() {
        let mut eng = engine(4, 1);
        assert_eq!(eng.squirrel(0).pos, Coord::new(0, 0));
        eng.step_move(0, Dir::East).unwrap();
        assert_eq!(eng.squirrel(0).pos, Coord::new(1, 0));
        assert_eq!(eng.squirrel(0).clock, Exact::one());
        assert_eq!(eng.cell(Coord::new(1, 0)).energy, Exact::one());
    }

    #[test]
    fn off_grid_move_is_domain_error() {
        let mut eng = engine(4, 1);
        assert!(matches!(
            eng.step_move(0, Dir::West),
            Err(MeshError::Domain(_))
        ));
    }

    #[test]
    fn speed_two_eight_cells() {
        // Speed 2 (power 4) over 8 cells: elapsed 4, energy 16.
        let mut eng = engine(16, 1);
        eng.set_speed_from_power(0, Rat::from_integer(4)).unwrap();
        for _ in 0..8 {
            eng.step_move(0, Dir::East).unwrap();
        }
        assert_eq!(eng.squirrel(0).clock, Exact::from_int(4));
        assert_eq!(eng.total_cell_energy(), Exact::from_int(16));
    }

    #[test]
    fn deposit_collect_round_trip() {
        let mut eng = engine(4, 1);
        eng.deposit_words(0, &[7, 9]).unwrap();
        let words = eng.collect_words(0, 2).unwrap();
        assert_eq!(words, vec![7, 9]);
    }

    #[test]
    fn deposit_capacity_fault() {
        let mut eng = engine(4, 1);
        eng.deposit_words(0, &[1; 8]).unwrap();
        assert!(matches!(
            eng.deposit_words(0, &[2]),
            Err(MeshError::CapacityFault { .. })
        ));
    }

    #[test]
    fn exchange_adjacency() {
        let img = ImageGrid::filled(4, 0).unwrap();
        let mut eng = Engine::new(&img, 2, ModelConfig::default()).unwrap();
        // Squirrel 1 homes at z=8 → (0,2); walk it adjacent to squirrel 0.
        while eng.squirrel(1).pos != Coord::new(0, 1) {
            eng.step_move(1, Dir::North).unwrap();
        }
        eng.squirrels[0].payload.push(5);
        eng.squirrels[1].payload.push(6);
        eng.exchange(0, 1).unwrap();
        assert_eq!(eng.squirrel(0).payload.as_slice(), &[6]);
        assert_eq!(eng.squirrel(1).payload.as_slice(), &[5]);
        // Distance 2 fails.
        eng.step_move(1, Dir::South).unwrap();
        eng.step_move(1, Dir::South).unwrap();
        assert!(eng.exchange(0, 1).is_err());
    }

    #[test]
    fn charged_formula() {
        // simulatedTime=4, simulatedProcs=16, 4 squirrels → time 16, energy 64.
        let img = ImageGrid::filled(8, 0).unwrap();
        let mut eng = Engine::new(&img, 4, ModelConfig::default()).unwrap();
        let region = Block {
            origin: Coord::new(0, 0),
            side: 4,
        };
        let scope = Block {
            origin: Coord::new(0, 0),
            side: 8,
        };
        eng.run_charged(
            ChargedSubroutine {
                region,
                scope,
                sim_time: 4,
                sim_procs: 16,
                squirrels: &[0, 1, 2, 3],
            },
            |_| Ok(()),
        )
        .unwrap();
        eng.barrier();
        assert_eq!(eng.elapsed(), Exact::from_int(16));
        assert_eq!(eng.total_cell_energy(), Exact::from_int(64));

        // 16 squirrels for 16 procs → charged time 4.
        let mut eng2 = Engine::new(&img, 16, ModelConfig::default()).unwrap();
        let ids: Vec<u32> = (0..16).collect();
        eng2.run_charged(
            ChargedSubroutine {
                region,
                scope,
                sim_time: 4,
                sim_procs: 16,
                squirrels: &ids,
            },
            |_| Ok(()),
        )
        .unwrap();
        eng2.barrier();
        assert_eq!(eng2.elapsed(), Exact::from_int(4));
    }

    #[test]
    fn empty_charged_squirrels_rejected() {
        let img = ImageGrid::filled(4, 0).unwrap();
        let mut eng = Engine::new(&img, 1, ModelConfig::default()).unwrap();
        let b = Block {
            origin: Coord::new(0, 0),
            side: 2,
        };
        let r = eng.run_charged(
            ChargedSubroutine {
                region: b,
                scope: b,
                sim_time: 1,
                sim_procs: 1,
                squirrels: &[],
            },
            |_| Ok(()),
        );
        assert!(r.is_err());
    }
}
