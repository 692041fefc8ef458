//! Input images: one color word per pixel, plus parsers (PBM P1, PGM P2,
//! whitespace-separated text grids) and seeded random generators.

use crate::error::{MeshError, Result};
use crate::geometry::{Coord, GridGeometry, MAX_SIDE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;

pub type Color = u16;

/// An n×n image, one pixel per simulated processor. Row-major storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageGrid {
    n: u32,
    pixels: Vec<Color>,
}

impl ImageGrid {
    pub fn new(n: u32, pixels: Vec<Color>) -> Result<Self> {
        if n < 2 || n > MAX_SIDE || !n.is_power_of_two() {
            return Err(MeshError::domain(format!(
                "image side must be a power of 2 in [2, {MAX_SIDE}], got {n}"
            )));
        }
        if pixels.len() != (n * n) as usize {
            return Err(MeshError::domain(format!(
                "expected {} pixels, got {}",
                n * n,
                pixels.len()
            )));
        }
        Ok(ImageGrid { n, pixels })
    }

    pub fn filled(n: u32, color: Color) -> Result<Self> {
        ImageGrid::new(n, vec![color; (n * n) as usize])
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn get(&self, c: Coord) -> Color {
        self.pixels[(c.y * self.n + c.x) as usize]
    }

    pub fn set(&mut self, c: Coord, color: Color) {
        self.pixels[(c.y * self.n + c.x) as usize] = color;
    }

    pub fn pixels(&self) -> &[Color] {
        &self.pixels
    }

    pub fn colors(&self) -> Vec<Color> {
        let mut cs = self.pixels.clone();
        cs.sort_unstable();
        cs.dedup();
        cs
    }

    pub fn is_two_color(&self) -> bool {
        self.colors().len() <= 2
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        let n = self.n;
        (0..n).flat_map(move |y| (0..n).map(move |x| Coord::new(x, y)))
    }

    /// Render as a text grid (rows of integers), the canonical emit format.
    pub fn to_text_grid(&self) -> String {
        let mut out = String::new();
        for y in 0..self.n {
            for x in 0..self.n {
                if x > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", self.get(Coord::new(x, y)));
            }
            out.push('\n');
        }
        out
    }
}

/// Parse an image file by format sniffing: PBM (P1), PGM (P2), else text grid.
pub fn parse_image(content: &str) -> Result<ImageGrid> {
    let trimmed = content.trim_start();
    if trimmed.starts_with("P1") {
        parse_netpbm(trimmed, true)
    } else if trimmed.starts_with("P2") {
        parse_netpbm(trimmed, false)
    } else {
        parse_text_grid(content)
    }
}

pub fn load_image(path: &Path) -> Result<ImageGrid> {
    let content = std::fs::read_to_string(path)?;
    parse_image(&content)
}

fn tokens(content: &str) -> impl Iterator<Item = &str> {
    content
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
}

fn parse_netpbm(content: &str, is_pbm: bool) -> Result<ImageGrid> {
    let mut toks = tokens(content);
    toks.next(); // magic
    let mut next_u32 = |what: &str| -> Result<u32> {
        toks.next()
            .ok_or_else(|| MeshError::Parse(format!("missing {what}")))?
            .parse::<u32>()
            .map_err(|e| MeshError::Parse(format!("bad {what}: {e}")))
    };
    let width = next_u32("width")?;
    let height = next_u32("height")?;
    if width != height {
        return Err(MeshError::domain(format!(
            "image must be square, got {width}x{height}"
        )));
    }
    if !is_pbm {
        let maxval = next_u32("maxval")?;
        if maxval == 0 || maxval > u16::MAX as u32 {
            return Err(MeshError::Parse(format!("unsupported maxval {maxval}")));
        }
    }
    let mut pixels = Vec::with_capacity((width * height) as usize);
    for tok in toks {
        let v: u32 = tok
            .parse()
            .map_err(|e| MeshError::Parse(format!("bad pixel {tok:?}: {e}")))?;
        if is_pbm && v > 1 {
            return Err(MeshError::Parse(format!("PBM pixel must be 0/1, got {v}")));
        }
        pixels.push(v as Color);
    }
    if pixels.len() != (width * height) as usize {
        return Err(MeshError::Parse(format!(
            "expected {} pixels, found {}",
            width * height,
            pixels.len()
        )));
    }
    ImageGrid::new(width, pixels)
}

fn parse_text_grid(content: &str) -> Result<ImageGrid> {
    let mut rows: Vec<Vec<Color>> = Vec::new();
    for line in content.lines() {
        let line = line.split('#').next().unwrap_or("");
        let row: Vec<Color> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<Color>()
                    .map_err(|e| MeshError::Parse(format!("bad value {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(MeshError::Parse("empty grid".into()));
    }
    let n = rows.len() as u32;
    for (i, row) in rows.iter().enumerate() {
        if row.len() as u32 != n {
            return Err(MeshError::domain(format!(
                "row {i} has {} values, expected {n} (square grid required)",
                row.len()
            )));
        }
    }
    ImageGrid::new(n, rows.concat())
}

/// Built-in seeded generators, so test sweeps need no external data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// Independent pixels: black (1) with density num/den, else white (0).
    Bernoulli { density_pct: u32 },
    /// Multi-color variant of Bernoulli over `colors` colors.
    Uniform { colors: u16 },
    /// Dilated random seed points, yielding blob-shaped figures.
    Blobs { seeds: u32, dilations: u32 },
    /// Concentric rings with randomized radii; exercises nesting.
    Nested { rings: u32 },
    /// Black/white maze-like walls.
    Maze { wall_pct: u32 },
}

pub fn generate(gen: Generator, n: u32, seed: u64) -> Result<ImageGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = ImageGrid::filled(n, 0)?;
    match gen {
        Generator::Bernoulli { density_pct } => {
            for y in 0..n {
                for x in 0..n {
                    if rng.gen_range(0..100) < density_pct {
                        img.set(Coord::new(x, y), 1);
                    }
                }
            }
        }
        Generator::Uniform { colors } => {
            let colors = colors.max(1);
            for y in 0..n {
                for x in 0..n {
                    img.set(Coord::new(x, y), rng.gen_range(0..colors));
                }
            }
        }
        Generator::Blobs { seeds, dilations } => {
            let geom = GridGeometry::new(n, Default::default())?;
            let mut marks = vec![false; (n * n) as usize];
            for _ in 0..seeds {
                let x = rng.gen_range(0..n);
                let y = rng.gen_range(0..n);
                marks[(y * n + x) as usize] = true;
            }
            for _ in 0..dilations {
                let snapshot = marks.clone();
                for y in 0..n {
                    for x in 0..n {
                        if snapshot[(y * n + x) as usize] {
                            continue;
                        }
                        let grow = geom
                            .neighbors(Coord::new(x, y))
                            .any(|c| snapshot[(c.y * n + c.x) as usize])
                            && rng.gen_range(0..100) < 60;
                        if grow {
                            marks[(y * n + x) as usize] = true;
                        }
                    }
                }
            }
            for y in 0..n {
                for x in 0..n {
                    if marks[(y * n + x) as usize] {
                        img.set(Coord::new(x, y), 1);
                    }
                }
            }
        }
        Generator::Nested { rings } => {
            let cx = (n / 2) as i64;
            let cy = (n / 2) as i64;
            let mut radii: Vec<i64> = Vec::new();
            let max_r = (n / 2) as i64 - 1;
            let mut r = 1 + rng.gen_range(0..2) as i64;
            while r <= max_r && (radii.len() as u32) < rings {
                radii.push(r);
                r += 2 + rng.gen_range(0..3) as i64;
            }
            for y in 0..n {
                for x in 0..n {
                    let d = (x as i64 - cx).abs().max((y as i64 - cy).abs());
                    if radii.iter().any(|&rr| d == rr) {
                        img.set(Coord::new(x, y), 1);
                    }
                }
            }
        }
        Generator::Maze { wall_pct } => {
            for y in 0..n {
                for x in 0..n {
                    if rng.gen_range(0..100) < wall_pct {
                        img.set(Coord::new(x, y), 1);
                    }
                }
            }
            // Keep the conventional corners open.
            img.set(Coord::new(0, 0), 0);
            img.set(Coord::new(n - 1, n - 1), 0);
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pbm_checkerboard() {
        let img = parse_image("P1\n2 2\n1 0\n0 1\n").unwrap();
        assert_eq!(img.n(), 2);
        assert_eq!(img.get(Coord::new(0, 0)), 1);
        assert_eq!(img.get(Coord::new(1, 0)), 0);
        assert_eq!(img.get(Coord::new(1, 1)), 1);
    }

    #[test]
    fn pgm_three_levels() {
        let img = parse_image("P2\n2 2\n7\n0 3\n7 0\n").unwrap();
        assert_eq!(img.colors(), vec![0, 3, 7]);
    }

    #[test]
    fn non_power_of_two_rejected() {
        let r = parse_image("0 1 0\n1 0 1\n0 1 0\n");
        assert!(r.is_err());
    }

    #[test]
    fn text_grid_round_trip() {
        let img = generate(Generator::Uniform { colors: 3 }, 8, 17).unwrap();
        let text = img.to_text_grid();
        let back = parse_image(&text).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn generators_are_deterministic() {
        for gen in [
            Generator::Bernoulli { density_pct: 40 },
            Generator::Blobs { seeds: 5, dilations: 3 },
            Generator::Nested { rings: 3 },
            Generator::Maze { wall_pct: 35 },
        ] {
            let a = generate(gen, 16, 42).unwrap();
            let b = generate(gen, 16, 42).unwrap();
            assert_eq!(a, b);
            let c = generate(gen, 16, 43).unwrap();
            assert!(a != c || matches!(gen, Generator::Nested { .. }));
        }
    }
}
