//! Embedded 5×7 digit glyphs, upscaled 4× into a 32×32 frame.

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const SIDE: usize = 32;
pub const MAX_JITTER: i64 = 2;

const SCALE: usize = 4;
const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;
// Centers the 20×28 scaled glyph, leaving a 2-pixel margin on the tight axis.
const ORIGIN_X: i64 = ((SIDE - GLYPH_W * SCALE) / 2) as i64;
const ORIGIN_Y: i64 = ((SIDE - GLYPH_H * SCALE) / 2) as i64;

#[rustfmt::skip]
const GLYPHS: [[&str; GLYPH_H]; 10] = [
    [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
    ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
    [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
    ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."],
    ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
    ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
    ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."],
    ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
    [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
    [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
];

pub const CLASSES: usize = GLYPHS.len();

/// A 32×32 binary mask, row-major; `true` marks a stroke pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask(pub Vec<bool>);

impl Mask {
    pub fn on_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn hamming(&self, other: &Mask) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

fn check_class(class: usize) -> Result<()> {
    if class >= CLASSES {
        return Err(Error::InvalidArgument(format!(
            "class {class} outside [0, {CLASSES})"
        )));
    }
    Ok(())
}

/// The glyph for `class` translated by `(dx, dy)`; pixels pushed out of frame are dropped.
pub fn glyph_mask(class: usize, dx: i64, dy: i64) -> Result<Mask> {
    check_class(class)?;
    let mut mask = vec![false; SIDE * SIDE];
    for (gy, row) in GLYPHS[class].iter().enumerate() {
        for (gx, cell) in row.bytes().enumerate() {
            if cell != b'#' {
                continue;
            }
            for sy in 0..SCALE {
                for sx in 0..SCALE {
                    let x = ORIGIN_X + (gx * SCALE + sx) as i64 + dx;
                    let y = ORIGIN_Y + (gy * SCALE + sy) as i64 + dy;
                    if (0..SIDE as i64).contains(&x) && (0..SIDE as i64).contains(&y) {
                        mask[y as usize * SIDE + x as usize] = true;
                    }
                }
            }
        }
    }
    Ok(Mask(mask))
}

/// Digit mask for `class`, shifted by a translation drawn uniformly from
/// `[-2, 2]²`. Deterministic in `(class, jitter_seed)`.
pub fn render_mask(class: usize, jitter_seed: u64) -> Result<Mask> {
    check_class(class)?;
    let mut rng = SeededRng::new(jitter_seed);
    let dx = rng.int_in(-MAX_JITTER, MAX_JITTER);
    let dy = rng.int_in(-MAX_JITTER, MAX_JITTER);
    glyph_mask(class, dx, dy)
}
