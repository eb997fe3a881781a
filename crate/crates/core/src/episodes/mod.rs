//! Episode data model and deterministic trace generators.
//!
//! Two environments are supported: a MiniGrid-style grid world
//! ([`generate_grid_episode`]) driven by a breadth-first scripted planner,
//! and a multi-entity arena ([`generate_multientity_episode`]) where marines
//! greedily chase shards. Both are pure functions of their arguments.

mod entities;
mod grid;
mod io;
mod render;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use entities::{generate_multientity_episode, MultiEntityConfig, GROUP_RADIUS};
pub use grid::{generate_grid_episode, GridLayout, GRID_STEP_CAP};
pub use io::{load_episode, parse_episode, save_episode, to_json, EPISODE_FORMAT_VERSION};
pub(crate) use render::door_signature;
pub use render::{
    attach_frames, player_cell, render_frame, render_player_glyph, Raster, MIN_CELL_PX,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Pos::new(self.x + dx, self.y + dy)
    }

    pub fn chebyshev(self, other: Pos) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn euclidean(self, other: Pos) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}

impl From<[i32; 2]> for Pos {
    fn from([x, y]: [i32; 2]) -> Self {
        Pos { x, y }
    }
}

impl From<Pos> for [i32; 2] {
    fn from(p: Pos) -> Self {
        [p.x, p.y]
    }
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Heading of the grid player. `Down` is +y because rows grow downwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Left,
        Direction::Right,
        Direction::Up,
        Direction::Down,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
        }
    }

    pub fn turn_left(self) -> Self {
        match self {
            Direction::Right => Direction::Up,
            Direction::Up => Direction::Left,
            Direction::Left => Direction::Down,
            Direction::Down => Direction::Right,
        }
    }

    pub fn turn_right(self) -> Self {
        match self {
            Direction::Right => Direction::Down,
            Direction::Down => Direction::Left,
            Direction::Left => Direction::Up,
            Direction::Up => Direction::Right,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyState {
    At(Pos),
    Carried,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoorState {
    Open,
    Closed,
    Locked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Door {
    pub pos: Pos,
    pub state: DoorState,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridState {
    pub width: i32,
    pub height: i32,
    pub walls: BTreeSet<Pos>,
    pub player_pos: Pos,
    pub player_dir: Direction,
    pub goal: Pos,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<KeyState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub door: Option<Door>,
}

impl GridState {
    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    pub fn key_carried(&self) -> bool {
        matches!(self.key, Some(KeyState::Carried))
    }

    pub fn front(&self) -> Pos {
        let (dx, dy) = self.player_dir.delta();
        self.player_pos.offset(dx, dy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 {
            return Err(Error::Invariant("grid dimensions must be positive".into()));
        }
        for (name, p) in [("player_pos", self.player_pos), ("goal", self.goal)] {
            if !self.in_bounds(p) || self.walls.contains(&p) {
                return Err(Error::Invariant(format!(
                    "{name} {p} is out of bounds or on a wall"
                )));
            }
        }
        if let Some(KeyState::At(p)) = self.key {
            if !self.in_bounds(p) || self.walls.contains(&p) {
                return Err(Error::Invariant(format!("key {p} is out of bounds or on a wall")));
            }
        }
        if let Some(door) = self.door {
            if !self.in_bounds(door.pos) {
                return Err(Error::Invariant(format!("door {} is out of bounds", door.pos)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Marine,
    Shard,
    Beacon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: u64,
    pub kind: EntityKind,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: u32,
    /// Member entity ids in entity order.
    pub members: Vec<u64>,
    pub anchor: Pos,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityState {
    pub entities: Vec<Entity>,
    pub groups: Vec<Group>,
}

impl EntityState {
    pub fn entity(&self, id: u64) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn of_kind(&self, kind: EntityKind) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(move |e| e.kind == kind)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for e in &self.entities {
            if !ids.insert(e.id) {
                return Err(Error::Invariant(format!("duplicate entity id {}", e.id)));
            }
        }
        for g in &self.groups {
            if g.members.len() < 2 {
                return Err(Error::Invariant(format!("group {} has < 2 members", g.id)));
            }
            let positions: Vec<Pos> = g
                .members
                .iter()
                .map(|id| {
                    self.entity(*id).map(|e| e.pos).ok_or_else(|| {
                        Error::Invariant(format!("group {} references unknown entity {id}", g.id))
                    })
                })
                .collect::<Result<_>>()?;
            for (i, a) in positions.iter().enumerate() {
                for b in &positions[i + 1..] {
                    if a.chebyshev(*b) > GROUP_RADIUS {
                        return Err(Error::Invariant(format!(
                            "group {} members farther apart than the grouping radius",
                            g.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    Grid(GridState),
    Entities(EntityState),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    TurnLeft,
    TurnRight,
    Forward,
    Pickup,
    Drop,
    Open,
    Close,
    /// One simulation tick of the multi-entity arena.
    Tick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Grid,
    MultiEntity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub step_no: u32,
    pub state: State,
    /// Action that produced this state; `None` for the initial step.
    #[serde(default)]
    pub action: Option<Action>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub env_kind: EnvKind,
    pub seed: u64,
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<Raster>>,
}

impl Episode {
    pub fn validate(&self) -> Result<()> {
        for (i, step) in self.steps.iter().enumerate() {
            if step.step_no as usize != i {
                return Err(Error::Invariant(format!(
                    "step_no {} at position {i}; steps must count up from 0 by 1",
                    step.step_no
                )));
            }
            match (&step.state, self.env_kind) {
                (State::Grid(g), EnvKind::Grid) => g.validate()?,
                (State::Entities(e), EnvKind::MultiEntity) => e.validate()?,
                _ => {
                    return Err(Error::Invariant(format!(
                        "step {i} state does not match env_kind {:?}",
                        self.env_kind
                    )))
                }
            }
        }
        if let Some(frames) = &self.frames {
            if frames.len() != self.steps.len() {
                return Err(Error::Invariant(format!(
                    "{} frames for {} steps",
                    frames.len(),
                    self.steps.len()
                )));
            }
            for f in frames {
                f.validate()?;
            }
        }
        Ok(())
    }

    pub fn grid_states(&self) -> impl Iterator<Item = &GridState> {
        self.steps.iter().filter_map(|s| match &s.state {
            State::Grid(g) => Some(g),
            State::Entities(_) => None,
        })
    }
}
