use std::collections::{BTreeSet, HashMap, VecDeque};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Action, Direction, Door, DoorState, EnvKind, Episode, GridState, KeyState, Pos, State, Step};
use crate::rng::{derive, seeded, Rng};
use crate::{Error, Result};

pub const GRID_STEP_CAP: usize = 200;
const MAX_ATTEMPTS: usize = 16;
const PLANNER_ACTIONS: [Action; 5] = [
    Action::TurnLeft,
    Action::TurnRight,
    Action::Forward,
    Action::Pickup,
    Action::Open,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridLayout {
    FourRooms,
    DoorKey,
}

impl FromStr for GridLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "four_rooms" => Ok(GridLayout::FourRooms),
            "door_key" => Ok(GridLayout::DoorKey),
            other => Err(Error::InvalidParameter(format!("unknown grid layout `{other}`"))),
        }
    }
}

/// Generates a grid episode whose actions come from a shortest-path planner.
///
/// The episode ends when the player stands on the goal or after
/// [`GRID_STEP_CAP`] actions.
pub fn generate_grid_episode(layout: GridLayout, size: i32, seed: u64) -> Result<Episode> {
    if size < 5 {
        return Err(Error::InvalidParameter(format!("grid size {size} < 5")));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = seeded(derive(seed, attempt as u64));
        let start = match layout {
            GridLayout::FourRooms => four_rooms(size, &mut rng),
            GridLayout::DoorKey => door_key(size, &mut rng),
        };
        if let Some(plan) = plan(&start) {
            return Ok(rollout(start, &plan, seed));
        }
    }
    Err(Error::Unsolvable {
        attempts: MAX_ATTEMPTS,
    })
}

fn rollout(start: GridState, plan: &[Action], seed: u64) -> Episode {
    let mut steps = vec![Step {
        step_no: 0,
        state: State::Grid(start.clone()),
        action: None,
    }];
    let mut state = start;
    for (i, &action) in plan.iter().take(GRID_STEP_CAP).enumerate() {
        state = apply(&state, action);
        steps.push(Step {
            step_no: (i + 1) as u32,
            state: State::Grid(state.clone()),
            action: Some(action),
        });
    }
    Episode {
        env_kind: EnvKind::Grid,
        seed,
        steps,
        frames: None,
    }
}

fn border(size: i32) -> BTreeSet<Pos> {
    let mut walls = BTreeSet::new();
    for i in 0..size {
        walls.insert(Pos::new(i, 0));
        walls.insert(Pos::new(i, size - 1));
        walls.insert(Pos::new(0, i));
        walls.insert(Pos::new(size - 1, i));
    }
    walls
}

fn free_cells(size: i32, walls: &BTreeSet<Pos>, pred: impl Fn(Pos) -> bool) -> Vec<Pos> {
    (1..size - 1)
        .flat_map(|y| (1..size - 1).map(move |x| Pos::new(x, y)))
        .filter(|p| !walls.contains(p) && pred(*p))
        .collect()
}

fn random_dir(rng: &mut Rng) -> Direction {
    Direction::ALL[rng.gen_range(0..4)]
}

fn four_rooms(size: i32, rng: &mut Rng) -> GridState {
    let mut walls = border(size);
    let mid = size / 2;
    for i in 1..size - 1 {
        walls.insert(Pos::new(mid, i));
        walls.insert(Pos::new(i, mid));
    }
    // one doorway in each of the four wall arms
    let gap_lo = rng.gen_range(1..mid);
    let gap_hi = rng.gen_range(mid + 1..size - 1);
    walls.remove(&Pos::new(gap_lo, mid));
    walls.remove(&Pos::new(gap_hi, mid));
    let gap_lo = rng.gen_range(1..mid);
    let gap_hi = rng.gen_range(mid + 1..size - 1);
    walls.remove(&Pos::new(mid, gap_lo));
    walls.remove(&Pos::new(mid, gap_hi));

    let cells = free_cells(size, &walls, |_| true);
    let mut picks = cells.choose_multiple(rng, 2);
    let player_pos = *picks.next().expect("four-rooms grid has free cells");
    let goal = *picks.next().expect("four-rooms grid has two free cells");
    GridState {
        width: size,
        height: size,
        walls,
        player_pos,
        player_dir: random_dir(rng),
        goal,
        key: None,
        door: None,
    }
}

fn door_key(size: i32, rng: &mut Rng) -> GridState {
    let mut walls = border(size);
    let split = rng.gen_range(2..=size - 3);
    for y in 1..size - 1 {
        walls.insert(Pos::new(split, y));
    }
    let door_pos = Pos::new(split, rng.gen_range(1..size - 1));
    walls.remove(&door_pos);

    let left = free_cells(size, &walls, |p| p.x < split);
    let mut picks = left.choose_multiple(rng, 2);
    let key_pos = *picks.next().expect("left room is non-empty");
    let player_pos = *picks.next().unwrap_or(&key_pos);
    GridState {
        width: size,
        height: size,
        walls,
        player_pos,
        player_dir: random_dir(rng),
        goal: Pos::new(size - 2, size - 2),
        key: Some(KeyState::At(key_pos)),
        door: Some(Door {
            pos: door_pos,
            state: DoorState::Locked,
        }),
    }
}

fn passable(state: &GridState, p: Pos) -> bool {
    if !state.in_bounds(p) || state.walls.contains(&p) {
        return false;
    }
    if state.key == Some(KeyState::At(p)) {
        return false;
    }
    match state.door {
        Some(door) if door.pos == p => door.state == DoorState::Open,
        _ => true,
    }
}

/// Applies one action under MiniGrid rules; illegal actions leave the state unchanged.
pub(crate) fn apply(state: &GridState, action: Action) -> GridState {
    let mut next = state.clone();
    let front = state.front();
    match action {
        Action::TurnLeft => next.player_dir = state.player_dir.turn_left(),
        Action::TurnRight => next.player_dir = state.player_dir.turn_right(),
        Action::Forward => {
            if passable(state, front) {
                next.player_pos = front;
            }
        }
        Action::Pickup => {
            if state.key == Some(KeyState::At(front)) {
                next.key = Some(KeyState::Carried);
            }
        }
        Action::Drop => {
            if state.key_carried() && passable(state, front) && front != state.goal {
                next.key = Some(KeyState::At(front));
            }
        }
        Action::Open => {
            if let Some(door) = state.door.filter(|d| d.pos == front) {
                let opened = match door.state {
                    DoorState::Locked => state.key_carried(),
                    DoorState::Closed => true,
                    DoorState::Open => false,
                };
                if opened {
                    next.door = Some(Door {
                        state: DoorState::Open,
                        ..door
                    });
                }
            }
        }
        Action::Close => {
            if let Some(door) = state.door.filter(|d| d.pos == front && d.state == DoorState::Open)
            {
                next.door = Some(Door {
                    state: DoorState::Closed,
                    ..door
                });
            }
        }
        Action::Tick => {}
    }
    next
}

type PlanKey = (Pos, Direction, Option<KeyState>, Option<DoorState>);

fn plan_key(s: &GridState) -> PlanKey {
    (s.player_pos, s.player_dir, s.key, s.door.map(|d| d.state))
}

/// Breadth-first search over the planner's action set; returns the first
/// shortest action sequence reaching the goal.
fn plan(start: &GridState) -> Option<Vec<Action>> {
    if start.player_pos == start.goal {
        return None;
    }
    let mut parent: HashMap<PlanKey, (PlanKey, Action)> = HashMap::new();
    let mut queue = VecDeque::from([start.clone()]);
    let root = plan_key(start);
    let mut seen = std::collections::HashSet::from([root]);
    while let Some(state) = queue.pop_front() {
        for action in PLANNER_ACTIONS {
            let next = apply(&state, action);
            let key = plan_key(&next);
            if !seen.insert(key) {
                continue;
            }
            parent.insert(key, (plan_key(&state), action));
            if next.player_pos == next.goal {
                let mut actions = vec![action];
                let mut cur = plan_key(&state);
                while cur != root {
                    let (prev, a) = parent[&cur];
                    actions.push(a);
                    cur = prev;
                }
                actions.reverse();
                return Some(actions);
            }
            queue.push_back(next);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_state(e: &Episode) -> &GridState {
        e.grid_states().last().unwrap()
    }

    #[test]
    fn four_rooms_reaches_goal() {
        let e = generate_grid_episode(GridLayout::FourRooms, 9, 1).unwrap();
        let last = last_state(&e);
        assert_eq!(last.player_pos, last.goal);
        e.validate().unwrap();
    }

    #[test]
    fn door_key_orders_pickup_open_goal() {
        let e = generate_grid_episode(GridLayout::DoorKey, 8, 7).unwrap();
        let actions: Vec<Action> = e.steps.iter().filter_map(|s| s.action).collect();
        let pickup = actions.iter().position(|a| *a == Action::Pickup).unwrap();
        let open = actions.iter().position(|a| *a == Action::Open).unwrap();
        assert!(pickup < open);
        let last = last_state(&e);
        assert_eq!(last.player_pos, last.goal);
        assert_eq!(last.door.unwrap().state, DoorState::Open);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_grid_episode(GridLayout::DoorKey, 8, 7).unwrap();
        let b = generate_grid_episode(GridLayout::DoorKey, 8, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_small_grids() {
        assert!(matches!(
            generate_grid_episode(GridLayout::FourRooms, 4, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn every_seed_terminates_at_goal() {
        for layout in [GridLayout::FourRooms, GridLayout::DoorKey] {
            for size in [5, 6, 8, 11] {
                for seed in 0..40 {
                    let e = generate_grid_episode(layout, size, seed).unwrap();
                    let last = last_state(&e);
                    assert!(
                        last.player_pos == last.goal || e.steps.len() == GRID_STEP_CAP + 1,
                        "{layout:?} size {size} seed {seed}"
                    );
                }
            }
        }
    }

    #[test]
    fn locked_door_blocks_without_key() {
        let e = generate_grid_episode(GridLayout::DoorKey, 6, 3).unwrap();
        let mut s = e.grid_states().next().unwrap().clone();
        let door = s.door.unwrap();
        s.key = None;
        s.player_pos = door.pos.offset(-1, 0);
        s.player_dir = Direction::Right;
        let after = apply(&s, Action::Open);
        assert_eq!(after.door.unwrap().state, DoorState::Locked);
        assert_eq!(apply(&s, Action::Forward).player_pos, s.player_pos);
    }
}
