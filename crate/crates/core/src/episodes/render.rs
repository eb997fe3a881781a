use serde::{Deserialize, Serialize};

use super::{Direction, DoorState, Episode, GridState, KeyState, Pos, State};
use crate::{Error, Result};

/// Smallest cell size at which the player triangle is still resolvable.
pub const MIN_CELL_PX: usize = 8;

pub(crate) const WALL: f64 = 0.5;
pub(crate) const GOAL: f64 = 0.3;
pub(crate) const KEY: f64 = 0.85;
pub(crate) const DOOR: f64 = 0.7;
pub(crate) const PLAYER: f64 = 1.0;

/// Greyscale image, row-major, intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub intensities: Vec<f64>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            intensities: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut intensities = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                intensities.push(f(x, y));
            }
        }
        Raster {
            width,
            height,
            intensities,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.intensities[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.intensities[y * self.width + x] = v;
    }

    /// Copies the `w`×`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Raster {
        Raster::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invariant("raster dimensions must be ≥ 1".into()));
        }
        if self.intensities.len() != self.width * self.height {
            return Err(Error::Invariant(format!(
                "raster has {} intensities for {}x{} pixels",
                self.intensities.len(),
                self.width,
                self.height
            )));
        }
        if let Some(i) = self
            .intensities
            .iter()
            .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::Invariant(format!("intensity {i} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Membership test for the player glyph in glyph-local coordinates: `u`
/// runs from the back edge towards the facing edge, `v` is the signed offset
/// from the midline. The base spans 60% of the cell at 10% depth; the apex
/// sits at 90% depth.
fn in_glyph(u: f64, v: f64, cell: f64) -> bool {
    let back = 0.1 * cell;
    let apex = 0.9 * cell;
    u >= back && u <= apex && v.abs() <= 0.3 * cell * (apex - u) / (apex - back)
}

fn paint_player(r: &mut Raster, x0: usize, y0: usize, cell: usize, dir: Direction) {
    let c = cell as f64;
    for py in 0..cell {
        for px in 0..cell {
            let cx = px as f64 + 0.5;
            let cy = py as f64 + 0.5;
            let (u, v) = match dir {
                Direction::Right => (cx, cy - c / 2.0),
                Direction::Left => (c - cx, cy - c / 2.0),
                Direction::Down => (cy, cx - c / 2.0),
                Direction::Up => (c - cy, cx - c / 2.0),
            };
            let value = if in_glyph(u, v, c) { PLAYER } else { 0.0 };
            r.set(x0 + px, y0 + py, value);
        }
    }
}

/// A single cell containing the player glyph rotated to `heading` radians
/// (0 = right, π/2 = down). Used to synthesize off-axis decoder artifacts.
pub fn render_player_glyph(cell_px: usize, heading: f64) -> Result<Raster> {
    if cell_px < MIN_CELL_PX {
        return Err(Error::InvalidParameter(format!(
            "cell_px {cell_px} < {MIN_CELL_PX}"
        )));
    }
    let c = cell_px as f64;
    let (sin, cos) = heading.sin_cos();
    Ok(Raster::from_fn(cell_px, cell_px, |px, py| {
        let dx = px as f64 + 0.5 - c / 2.0;
        let dy = py as f64 + 0.5 - c / 2.0;
        let u = dx * cos + dy * sin + c / 2.0;
        let v = -dx * sin + dy * cos;
        if in_glyph(u, v, c) {
            PLAYER
        } else {
            0.0
        }
    }))
}

fn fill(r: &mut Raster, x0: usize, y0: usize, x1: usize, y1: usize, v: f64) {
    for y in y0..y1 {
        for x in x0..x1 {
            r.set(x, y, v);
        }
    }
}

/// Door cell pixels as rendered for `state`, without any player overlay.
pub(crate) fn door_signature(cell: usize, state: DoorState) -> Raster {
    let mut r = Raster::zeros(cell, cell);
    match state {
        DoorState::Closed | DoorState::Locked => fill(&mut r, 0, 0, cell, cell, DOOR),
        DoorState::Open => {
            let t = (cell / 8).max(1);
            fill(&mut r, 0, 0, cell, t, DOOR);
            fill(&mut r, 0, cell - t, cell, cell, DOOR);
            fill(&mut r, 0, 0, t, cell, DOOR);
            fill(&mut r, cell - t, 0, cell, cell, DOOR);
        }
    }
    r
}

/// Rasterizes a grid state. Each cell is `cell_px` square; the player's
/// cell shows only the glyph over a zero background.
pub fn render_frame(state: &GridState, cell_px: usize) -> Result<Raster> {
    if cell_px < MIN_CELL_PX {
        return Err(Error::InvalidParameter(format!(
            "cell_px {cell_px} < {MIN_CELL_PX}"
        )));
    }
    let c = cell_px;
    let mut r = Raster::zeros(state.width as usize * c, state.height as usize * c);
    let origin = |p: Pos| (p.x as usize * c, p.y as usize * c);

    for &w in &state.walls {
        let (x0, y0) = origin(w);
        fill(&mut r, x0, y0, x0 + c, y0 + c, WALL);
    }
    let (gx, gy) = origin(state.goal);
    fill(&mut r, gx, gy, gx + c, gy + c, GOAL);
    if let Some(KeyState::At(k)) = state.key {
        let (x0, y0) = origin(k);
        let lo = (3 * c) / 10;
        let hi = c - lo;
        fill(&mut r, x0 + lo, y0 + lo, x0 + hi, y0 + hi, KEY);
    }
    if let Some(door) = state.door {
        let (x0, y0) = origin(door.pos);
        let sig = door_signature(c, door.state);
        for y in 0..c {
            for x in 0..c {
                r.set(x0 + x, y0 + y, sig.get(x, y));
            }
        }
    }
    let (px, py) = origin(state.player_pos);
    paint_player(&mut r, px, py, c, state.player_dir);
    Ok(r)
}

/// The `cell_px`-square window of `frame` covering grid cell `pos`.
pub fn player_cell(frame: &Raster, pos: Pos, cell_px: usize) -> Raster {
    frame.crop(pos.x as usize * cell_px, pos.y as usize * cell_px, cell_px, cell_px)
}

/// Renders one frame per step of a grid episode.
pub fn attach_frames(episode: &mut Episode, cell_px: usize) -> Result<()> {
    let frames = episode
        .steps
        .iter()
        .map(|s| match &s.state {
            State::Grid(g) => render_frame(g, cell_px),
            State::Entities(_) => Err(Error::InvalidParameter(
                "frames are only rendered for grid episodes".into(),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    episode.frames = Some(frames);
    Ok(())
}
