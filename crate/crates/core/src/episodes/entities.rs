use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Action, Entity, EntityKind, EntityState, EnvKind, Episode, Group, Pos, State, Step};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

/// Chebyshev radius within which marines count as grouped.
pub const GROUP_RADIUS: i32 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiEntityConfig {
    pub n_marines: usize,
    pub n_shards: usize,
    /// Side length of the square arena in cells.
    pub arena: i32,
    /// Number of steps including the initial one.
    pub length: usize,
    pub n_beacons: usize,
    /// Spawn a fresh shard whenever one is collected.
    pub replace_shards: bool,
    /// Probability that a marine takes a single-axis step when a diagonal
    /// step would also close in on its target.
    pub axis_step_prob: f64,
}

impl Default for MultiEntityConfig {
    fn default() -> Self {
        MultiEntityConfig {
            n_marines: 2,
            n_shards: 3,
            arena: 64,
            length: 60,
            n_beacons: 0,
            replace_shards: true,
            axis_step_prob: 0.5,
        }
    }
}

impl MultiEntityConfig {
    pub fn new(n_marines: usize, n_shards: usize, arena: i32) -> Self {
        MultiEntityConfig {
            n_marines,
            n_shards,
            arena,
            ..Default::default()
        }
    }
}

struct Sim {
    rng: Rng,
    arena: i32,
    used_ids: BTreeSet<u64>,
    next_group: u32,
}

impl Sim {
    fn fresh_id(&mut self) -> u64 {
        loop {
            let id = self.rng.gen_range(1_000_000_000u64..10_000_000_000u64);
            if self.used_ids.insert(id) {
                return id;
            }
        }
    }

    fn free_pos(&mut self, occupied: &[Entity]) -> Pos {
        loop {
            let p = Pos::new(
                self.rng.gen_range(0..self.arena),
                self.rng.gen_range(0..self.arena),
            );
            if occupied.iter().all(|e| e.pos != p) {
                return p;
            }
        }
    }

    fn spawn(&mut self, kind: EntityKind, entities: &mut Vec<Entity>) {
        let id = self.fresh_id();
        let pos = self.free_pos(entities);
        entities.push(Entity { id, kind, pos });
    }
}

/// Generates a multi-entity trace: marines walk greedily towards the nearest
/// shard (or beacon when no shard is left) and collect it on arrival.
pub fn generate_multientity_episode(config: &MultiEntityConfig, seed: u64) -> Result<Episode> {
    if config.n_marines == 0 {
        return Err(Error::InvalidParameter("n_marines must be ≥ 1".into()));
    }
    if config.arena < 2 {
        return Err(Error::InvalidParameter(format!("arena {} < 2", config.arena)));
    }
    if config.length == 0 {
        return Err(Error::InvalidParameter("episode length must be ≥ 1".into()));
    }
    let cells = (config.arena as usize).pow(2);
    if config.n_marines + config.n_shards + config.n_beacons >= cells {
        return Err(Error::InvalidParameter("arena too small for the entity count".into()));
    }
    if !(0.0..=1.0).contains(&config.axis_step_prob) {
        return Err(Error::InvalidParameter("axis_step_prob must lie in [0, 1]".into()));
    }

    let mut sim = Sim {
        rng: seeded(seed),
        arena: config.arena,
        used_ids: BTreeSet::new(),
        next_group: 1,
    };
    let mut entities = Vec::new();
    for _ in 0..config.n_marines {
        sim.spawn(EntityKind::Marine, &mut entities);
    }
    for _ in 0..config.n_shards {
        sim.spawn(EntityKind::Shard, &mut entities);
    }
    for _ in 0..config.n_beacons {
        sim.spawn(EntityKind::Beacon, &mut entities);
    }
    let groups = regroup(&entities, &[], &mut sim.next_group);
    let mut state = EntityState { entities, groups };
    let mut steps = vec![Step {
        step_no: 0,
        state: State::Entities(state.clone()),
        action: None,
    }];

    for step_no in 1..config.length {
        state = advance(&state, config, &mut sim);
        steps.push(Step {
            step_no: step_no as u32,
            state: State::Entities(state.clone()),
            action: Some(Action::Tick),
        });
    }
    Ok(Episode {
        env_kind: EnvKind::MultiEntity,
        seed,
        steps,
        frames: None,
    })
}

fn nearest(from: Pos, candidates: impl Iterator<Item = Pos>) -> Option<Pos> {
    let mut best: Option<(f64, Pos)> = None;
    for p in candidates {
        let d = from.euclidean(p);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p)
}

fn advance(prev: &EntityState, config: &MultiEntityConfig, sim: &mut Sim) -> EntityState {
    let mut entities = prev.entities.clone();
    let marine_idx: Vec<usize> = (0..entities.len())
        .filter(|&i| entities[i].kind == EntityKind::Marine)
        .collect();

    for &mi in &marine_idx {
        let from = entities[mi].pos;
        let shards = entities
            .iter()
            .filter(|e| e.kind == EntityKind::Shard)
            .map(|e| e.pos);
        let target = nearest(from, shards).or_else(|| {
            nearest(
                from,
                entities
                    .iter()
                    .filter(|e| e.kind == EntityKind::Beacon)
                    .map(|e| e.pos),
            )
        });
        let step = match target {
            Some(t) => greedy_step(from, t, config.axis_step_prob, &mut sim.rng),
            None => (sim.rng.gen_range(-1..=1), sim.rng.gen_range(-1..=1)),
        };
        let to = from.offset(step.0, step.1);
        entities[mi].pos = Pos::new(
            to.x.clamp(0, config.arena - 1),
            to.y.clamp(0, config.arena - 1),
        );

        let here = entities[mi].pos;
        if let Some(si) = entities
            .iter()
            .position(|e| e.kind == EntityKind::Shard && e.pos == here)
        {
            entities.remove(si);
            if config.replace_shards {
                sim.spawn(EntityKind::Shard, &mut entities);
            }
        }
        if let Some(bi) = entities
            .iter()
            .position(|e| e.kind == EntityKind::Beacon && e.pos == here)
        {
            let others: Vec<Entity> = entities.clone();
            entities[bi].pos = sim.free_pos(&others);
        }
    }
    let groups = regroup(&entities, &prev.groups, &mut sim.next_group);
    EntityState { entities, groups }
}

/// One-cell move that never increases the distance to `target`.
fn greedy_step(from: Pos, target: Pos, axis_prob: f64, rng: &mut Rng) -> (i32, i32) {
    let dx = (target.x - from.x).signum();
    let dy = (target.y - from.y).signum();
    if dx != 0 && dy != 0 && rng.gen_bool(axis_prob) {
        if rng.gen_bool(0.5) {
            (dx, 0)
        } else {
            (0, dy)
        }
    } else {
        (dx, dy)
    }
}

fn anchor(entities: &[Entity], members: &[u64]) -> Pos {
    let pts: Vec<Pos> = members
        .iter()
        .filter_map(|id| entities.iter().find(|e| e.id == *id).map(|e| e.pos))
        .collect();
    let n = pts.len() as i32;
    let sx: i32 = pts.iter().map(|p| p.x).sum();
    let sy: i32 = pts.iter().map(|p| p.y).sum();
    Pos::new(sx.div_euclid(n), sy.div_euclid(n))
}

/// Partitions marines into groups of ≥ 2 that are pairwise within
/// [`GROUP_RADIUS`], then carries group ids over from `prev` by largest
/// member overlap.
fn regroup(entities: &[Entity], prev: &[Group], next_group: &mut u32) -> Vec<Group> {
    let marines: Vec<&Entity> = entities
        .iter()
        .filter(|e| e.kind == EntityKind::Marine)
        .collect();
    let mut cliques: Vec<Vec<&Entity>> = Vec::new();
    for m in &marines {
        match cliques
            .iter_mut()
            .find(|c| c.iter().all(|o| o.pos.chebyshev(m.pos) <= GROUP_RADIUS))
        {
            Some(c) => c.push(m),
            None => cliques.push(vec![m]),
        }
    }
    let sets: Vec<Vec<u64>> = cliques
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| c.into_iter().map(|e| e.id).collect())
        .collect();

    // (overlap, prev group id, new set index), matched greedily
    let mut pairs = Vec::new();
    for (si, set) in sets.iter().enumerate() {
        for g in prev {
            let overlap = set.iter().filter(|id| g.members.contains(id)).count();
            if overlap > 0 {
                pairs.push((overlap, g.id, si));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned: Vec<Option<u32>> = vec![None; sets.len()];
    let mut taken = BTreeSet::new();
    for (_, gid, si) in pairs {
        if assigned[si].is_none() && !taken.contains(&gid) {
            assigned[si] = Some(gid);
            taken.insert(gid);
        }
    }
    sets.into_iter()
        .zip(assigned)
        .map(|(members, id)| {
            let id = id.unwrap_or_else(|| {
                let id = *next_group;
                *next_group += 1;
                id
            });
            Group {
                id,
                anchor: anchor(entities, &members),
                members,
            }
        })
        .collect()
}
