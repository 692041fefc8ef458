//! Figure (connected component) labeling: the single-squirrel z-scan, the
//! divide-and-conquer labeler across the full power range, and maze
//! reachability. Labels are z-indices; a figure's label is the minimal
//! z-index of its pixels (its leader).

pub mod merge;
pub mod plan;
pub mod scan;

use crate::engine::{Engine, Program};
use crate::error::{MeshError, Result};
use crate::geometry::{Adjacency, Block, Coord};
use crate::oracle::LabelMap;
use merge::{charged_merge, edge_cap, GatherSeam, MergeLayout};
use plan::{Square, DcShape, SLOT_LABEL};
use scan::{BottomScan, MapRewrite};

/// Dispenses unique generation bases for pebbled traversals.
#[derive(Debug, Default)]
pub struct GenSource {
    next: u64,
}

impl GenSource {
    pub fn base(&mut self) -> u64 {
        self.next += 1;
        self.next << 24
    }
}

/// Label the image with squirrel 0 only: a z-ordered scan with depth-first
/// labeling of each newly met figure. Θ(n²) time at any power setting.
pub fn label_single_squirrel(engine: &mut Engine) -> Result<LabelMap> {
    check_cell_capacity(engine)?;
    let n = engine.n();
    let whole = Block {
        origin: Coord::new(0, 0),
        side: n,
    };
    let adjacency = engine.geom.adjacency;
    let mut gens = GenSource::default();
    let prog = BottomScan::new(vec![whole], n, adjacency, gens.base());
    engine.run_phase(vec![(0, Box::new(prog))])?;
    extract_labels(engine)
}

/// Divide-and-conquer labeling with all of the engine's squirrels.
pub fn label_divide_conquer(engine: &mut Engine) -> Result<LabelMap> {
    check_cell_capacity(engine)?;
    let n = engine.n();
    let s = engine.s();
    let max_s = n * (n as f64).log2().ceil() as u32;
    if s > max_s.max(1) {
        return Err(MeshError::domain(format!(
            "power {s} out of range; labeling supports up to n·log2(n) = {max_s}"
        )));
    }
    let mut gens = GenSource::default();
    if s > n {
        label_high_power(engine, &mut gens)?;
    } else {
        let ids: Vec<u32> = (0..s).collect();
        run_dc(engine, &ids, n, &mut gens)?;
    }
    extract_labels(engine)
}

/// Decide whether a black/white maze has a path between two free cells.
pub fn maze_reachable(
    engine: &mut Engine,
    start: Coord,
    stop: Coord,
) -> Result<bool> {
    for (name, c) in [("start", start), ("stop", stop)] {
        if !engine.geom.contains(c) {
            return Err(MeshError::domain(format!("{name} outside the grid")));
        }
        if engine.cell(c).color != 0 {
            return Err(MeshError::domain(format!(
                "{name} cell ({}, {}) is blocked",
                c.x, c.y
            )));
        }
    }
    let labels = label_divide_conquer(engine)?;
    Ok(labels.get(start) == labels.get(stop))
}

pub fn extract_labels(engine: &Engine) -> Result<LabelMap> {
    let n = engine.n();
    let mut labels = Vec::with_capacity((n * n) as usize);
    for y in 0..n {
        for x in 0..n {
            let c = Coord::new(x, y);
            let l = engine.cell(c).slot(SLOT_LABEL).ok_or_else(|| {
                MeshError::domain(format!("cell ({x}, {y}) left unlabeled"))
            })?;
            labels.push(l as u32);
        }
    }
    Ok(LabelMap { n, labels })
}

fn check_cell_capacity(engine: &Engine) -> Result<()> {
    if engine.config().w_cell < 8 || engine.config().w_sq < 8 {
        return Err(MeshError::domain(
            "labeling algorithms require at least 8 words per cell and squirrel",
        ));
    }
    Ok(())
}

/// The standard recursion: bottom scans over side-m0 squares, then one merge
/// level per doubling up to `top`.
pub fn run_dc(engine: &mut Engine, ids: &[u32], top: u32, gens: &mut GenSource) -> Result<()> {
    let n = engine.n();
    let adjacency = engine.geom.adjacency;
    let min_side = match adjacency {
        Adjacency::Edge4 => 2,
        Adjacency::Edge8 => 8.min(top),
    };
    let shape = DcShape::new(n, ids.len() as u32, top.min(n));
    let shape = if shape.m0 < min_side {
        DcShape {
            m0: min_side,
            levels: {
                let mut v = Vec::new();
                let mut k = min_side * 2;
                while k <= top.min(n) {
                    v.push(k);
                    k *= 2;
                }
                v
            },
            top: top.min(n),
        }
    } else {
        shape
    };
    bottom_scan_phase(engine, ids, shape.m0, gens)?;
    for &k in &shape.levels {
        merge_level(engine, ids, k, gens)?;
    }
    Ok(())
}

/// High-power regime (n < s ≤ n log n): label subsquares of side ≈ n²/s in
/// parallel, then a single merge over all subsquare borders at once.
fn label_high_power(engine: &mut Engine, gens: &mut GenSource) -> Result<()> {
    let n = engine.n();
    let s = engine.s();
    let adjacency = engine.geom.adjacency;
    let target = ((n as u64 * n as u64) / s as u64).max(2);
    let mut m = n / 2;
    while m as u64 > target && m > 2 {
        m /= 2;
    }
    let ids: Vec<u32> = (0..s).collect();
    run_dc(engine, &ids, m, gens)?;

    // One merge step over every inter-square border simultaneously.
    let squares = plan::squares_at_level(n, m);
    let mut anchors: Vec<(Coord, Coord)> = Vec::new();
    for sq in &squares {
        let o = sq.origin();
        if o.x + m < n {
            for y in 0..m {
                anchors.push((Coord::new(o.x + m - 1, o.y + y), Coord::new(o.x + m, o.y + y)));
                if adjacency == Adjacency::Edge8 {
                    if y > 0 {
                        anchors
                            .push((Coord::new(o.x + m - 1, o.y + y), Coord::new(o.x + m, o.y + y - 1)));
                    }
                    if o.y + y + 1 < n {
                        anchors
                            .push((Coord::new(o.x + m - 1, o.y + y), Coord::new(o.x + m, o.y + y + 1)));
                    }
                }
            }
        }
        if o.y + m < n {
            for x in 0..m {
                anchors.push((Coord::new(o.x + x, o.y + m - 1), Coord::new(o.x + x, o.y + m)));
                if adjacency == Adjacency::Edge8 {
                    if o.x + x > 0 {
                        anchors
                            .push((Coord::new(o.x + x, o.y + m - 1), Coord::new(o.x + x - 1, o.y + m)));
                    }
                    if o.x + x + 1 < n {
                        anchors
                            .push((Coord::new(o.x + x, o.y + m - 1), Coord::new(o.x + x + 1, o.y + m)));
                    }
                }
            }
        }
    }
    let whole = Square {
        block: Block {
            origin: Coord::new(0, 0),
            side: n,
        },
        index: 0,
    };
    let layout = MergeLayout::custom(whole.block, anchors.len(), s)?;
    let step = MergeStep {
        square: whole,
        squad: ids.clone(),
        layout,
        anchors,
        bound_side: m,
    };
    run_merge_steps(engine, vec![step], gens)
}

fn bottom_scan_phase(
    engine: &mut Engine,
    ids: &[u32],
    m0: u32,
    gens: &mut GenSource,
) -> Result<()> {
    let n = engine.n();
    let adjacency = engine.geom.adjacency;
    let squares = plan::squares_at_level(n, m0);
    let mut progs: Vec<(u32, Box<dyn Program>)> = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        let mine: Vec<Block> = squares
            .iter()
            .enumerate()
            .filter(|(j, _)| j % ids.len() == i)
            .map(|(_, sq)| sq.block)
            .collect();
        if mine.is_empty() {
            continue;
        }
        progs.push((id, Box::new(BottomScan::new(mine, n, adjacency, gens.base()))));
    }
    engine.run_phase(progs)?;
    Ok(())
}

/// One merge step's worth of planning data.
struct MergeStep {
    square: Square,
    squad: Vec<u32>,
    layout: MergeLayout,
    anchors: Vec<(Coord, Coord)>,
    /// Losing pieces are uniform within aligned squares of this side.
    bound_side: u32,
}

fn merge_level(engine: &mut Engine, ids: &[u32], k: u32, gens: &mut GenSource) -> Result<()> {
    let n = engine.n();
    let adjacency = engine.geom.adjacency;
    let squares = plan::squares_at_level(n, k);
    let s = ids.len();
    if squares.len() >= s {
        for chunk in squares.chunks(s) {
            let steps = chunk
                .iter()
                .zip(ids.iter())
                .map(|(sq, &id)| {
                    Ok(MergeStep {
                        square: *sq,
                        squad: vec![id],
                        layout: MergeLayout::new(sq.block, 1, adjacency)?,
                        anchors: sq.seam_anchors(adjacency),
                        bound_side: k / 2,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            run_merge_steps(engine, steps, gens)?;
        }
    } else {
        let steps = squares
            .iter()
            .map(|sq| {
                let squad: Vec<u32> = ids
                    .iter()
                    .copied()
                    .filter(|&i| (i as usize) % squares.len() == sq.index as usize)
                    .collect();
                Ok(MergeStep {
                    square: *sq,
                    squad: squad.clone(),
                    layout: MergeLayout::new(sq.block, squad.len() as u32, adjacency)?,
                    anchors: sq.seam_anchors(adjacency),
                    bound_side: k / 2,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        run_merge_steps(engine, steps, gens)?;
    }
    Ok(())
}

/// Execute a set of disjoint merge steps as three phases: gather (or walk to
/// the staging area), the charged union-find, and the eager relabeling.
fn run_merge_steps(engine: &mut Engine, steps: Vec<MergeStep>, gens: &mut GenSource) -> Result<()> {
    let n = engine.n();
    let adjacency = engine.geom.adjacency;
    // Phase A: gather seam edges (or just park at the staging region).
    let mut progs: Vec<(u32, Box<dyn Program>)> = Vec::new();
    let mut offsets: Vec<Vec<usize>> = Vec::new();
    for step in &steps {
        let g = step.squad.len();
        let mut segs = Vec::with_capacity(g);
        for (role, &id) in step.squad.iter().enumerate() {
            let lo = step.anchors.len() * role / g;
            let hi = step.anchors.len() * (role + 1) / g;
            segs.push(lo);
            let park = step.layout.arena.park(role);
            if step.layout.direct {
                progs.push((
                    id,
                    Box::new(crate::programs::WalkTo { target: park }),
                ));
            } else {
                progs.push((
                    id,
                    Box::new(GatherSeam::new(
                        step.anchors[lo..hi].to_vec(),
                        step.layout.arena.clone(),
                        step.layout.edges.start + lo..step.layout.edges.start + hi,
                        step.layout.edge_hdrs.start + role,
                        park,
                    )),
                ));
            }
        }
        offsets.push(segs);
    }
    engine.run_phase(progs)?;

    // Phase B: charged component labeling per square.
    for (step, segs) in steps.iter().zip(&offsets) {
        charged_merge(
            engine,
            &step.layout,
            step.square.block,
            &step.anchors,
            &step.squad,
            segs,
            edge_cap(step.square.side().max(2), adjacency) as u64,
        )?;
    }

    // Phase C: eager relabeling of losing pieces.
    let mut progs: Vec<(u32, Box<dyn Program>)> = Vec::new();
    for step in &steps {
        let g = step.squad.len();
        for (role, &id) in step.squad.iter().enumerate() {
            progs.push((
                id,
                Box::new(MapRewrite::new(
                    step.layout.clone(),
                    step.bound_side,
                    n,
                    adjacency,
                    role,
                    g,
                    gens.base(),
                    step.layout.arena.park(role),
                )),
            ));
        }
    }
    engine.run_phase(progs)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ModelConfig;
    use crate::image::{generate, Generator, ImageGrid};
    use crate::metrics::Trace;
    use crate::oracle::bfs_label;

    fn dc_labels(img: &ImageGrid, s: u32) -> LabelMap {
        let mut eng = Engine::new(img, s, ModelConfig::default()).unwrap();
        label_divide_conquer(&mut eng).unwrap()
    }

    #[test]
    fn uniform_image_single_label() {
        let img = ImageGrid::filled(4, 7).unwrap();
        let mut eng = Engine::new(&img, 1, ModelConfig::default()).unwrap();
        let lm = label_single_squirrel(&mut eng).unwrap();
        assert!(lm.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn checkerboard_all_distinct() {
        let mut img = ImageGrid::filled(4, 0).unwrap();
        for c in img.coords().collect::<Vec<_>>() {
            img.set(c, ((c.x + c.y) % 2) as u16);
        }
        let mut eng = Engine::new(&img, 1, ModelConfig::default()).unwrap();
        let lm = label_single_squirrel(&mut eng).unwrap();
        assert_eq!(lm, bfs_label(&img));
    }

    #[test]
    fn plus_shape_unifies_across_quadrants() {
        let mut img = ImageGrid::filled(8, 0).unwrap();
        for i in 0..8 {
            img.set(Coord::new(i, 3), 1);
            img.set(Coord::new(i, 4), 1);
            img.set(Coord::new(3, i), 1);
            img.set(Coord::new(4, i), 1);
        }
        let lm = dc_labels(&img, 4);
        assert_eq!(lm, bfs_label(&img));
        // One label on the whole plus.
        let leader_label = lm.get(Coord::new(3, 0));
        assert_eq!(lm.get(Coord::new(0, 3)), leader_label);
        assert_eq!(lm.get(Coord::new(7, 4)), leader_label);
    }

    #[test]
    fn single_squirrel_matches_oracle_random() {
        let img = generate(Generator::Uniform { colors: 3 }, 32, 11).unwrap();
        let mut eng = Engine::new(&img, 1, ModelConfig::default()).unwrap();
        let lm = label_single_squirrel(&mut eng).unwrap();
        assert_eq!(lm, bfs_label(&img));
    }

    #[test]
    fn dc_matches_oracle_across_powers() {
        for seed in [3u64, 17] {
            let img = generate(Generator::Uniform { colors: 3 }, 16, seed).unwrap();
            let expect = bfs_label(&img);
            for s in [1u32, 2, 4, 8, 16] {
                assert_eq!(dc_labels(&img, s), expect, "seed={seed} s={s}");
            }
        }
    }

    #[test]
    fn dc_peak_power_capped() {
        let img = generate(Generator::Bernoulli { density_pct: 45 }, 32, 5).unwrap();
        let mut eng = Engine::new(&img, 8, ModelConfig::default()).unwrap();
        let lm = label_divide_conquer(&mut eng).unwrap();
        assert_eq!(lm, bfs_label(&img));
        let trace = Trace::from_events(eng.events());
        assert!(trace.peak_power().unwrap() <= 8);
    }

    #[test]
    fn high_power_single_merge() {
        let img = generate(Generator::Uniform { colors: 2 }, 16, 23).unwrap();
        let lm = dc_labels(&img, 32);
        assert_eq!(lm, bfs_label(&img));
    }

    #[test]
    fn edge8_adjacency() {
        let img = generate(Generator::Bernoulli { density_pct: 50 }, 16, 9).unwrap();
        let geom = crate::geometry::GridGeometry::new(16, Adjacency::Edge8).unwrap();
        let expect = crate::oracle::bfs_label_geom(&img, &geom);
        let mut eng =
            Engine::with_adjacency(&img, 4, ModelConfig::default(), Adjacency::Edge8).unwrap();
        let lm = label_divide_conquer(&mut eng).unwrap();
        assert_eq!(lm, expect);
    }

    #[test]
    fn maze_examples() {
        let open = ImageGrid::filled(8, 0).unwrap();
        let mut eng = Engine::new(&open, 4, ModelConfig::default()).unwrap();
        assert!(maze_reachable(&mut eng, Coord::new(0, 0), Coord::new(7, 7)).unwrap());

        let mut walled = ImageGrid::filled(8, 0).unwrap();
        for x in 0..8 {
            walled.set(Coord::new(x, 3), 1);
        }
        let mut eng = Engine::new(&walled, 4, ModelConfig::default()).unwrap();
        assert!(!maze_reachable(&mut eng, Coord::new(0, 0), Coord::new(7, 7)).unwrap());
        assert!(maze_reachable(&mut eng, Coord::new(0, 0), Coord::new(0, 3)).is_err());
    }

    #[test]
    fn mismatched_power_rejected() {
        let img = ImageGrid::filled(8, 0).unwrap();
        let mut eng = Engine::new(&img, 8 * 200, ModelConfig::default()).unwrap();
        assert!(label_divide_conquer(&mut eng).is_err());
    }
}
