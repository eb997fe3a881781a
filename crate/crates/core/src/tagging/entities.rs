use std::collections::BTreeMap;

use super::{episode_ref, Tag, TagCorpus, TemplateId};
use crate::episodes::{Entity, EntityKind, EntityState, EnvKind, Episode, Group, State};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Target {
    Shard(u64),
    Group(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Trend {
    Closer,
    Farther,
}

struct OpenInterval {
    trend: Trend,
    start: u32,
    end: u32,
}

struct Emitter {
    timestamps: bool,
    tags: Vec<Tag>,
}

impl Emitter {
    fn push(&mut self, start: u32, end: u32, template: TemplateId, body: String) {
        let text = if self.timestamps {
            format!("{start} -- {end} {body}")
        } else {
            body
        };
        self.tags.push(Tag::span(start, end, template, text));
    }

    fn close(&mut self, marine: u64, target: Target, open: OpenInterval) {
        let verb = match open.trend {
            Trend::Closer => "closer to",
            Trend::Farther => "farther from",
        };
        let object = match target {
            Target::Shard(id) => format!("shard {id}"),
            Target::Group(id) => format!("group {id}"),
        };
        self.push(
            open.start,
            open.end,
            TemplateId::Relative,
            format!("Marine {marine} moves {verb} {object}"),
        );
    }
}

fn kind_name(kind: EntityKind) -> &'static str {
    match kind {
        EntityKind::Marine => "Marine",
        EntityKind::Shard => "Shard",
        EntityKind::Beacon => "Beacon",
    }
}

fn id_list(ids: &[u64]) -> String {
    ids.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
}

fn group_membership(
    out: &mut Emitter,
    step: u32,
    ids: &[u64],
    verb_one: &str,
    verb_many: &str,
    group: u32,
) {
    match ids {
        [] => {}
        [one] => out.push(
            step,
            step,
            TemplateId::EntityGroup,
            format!("Entity {one} {verb_one} group {group}"),
        ),
        many => out.push(
            step,
            step,
            TemplateId::EntitiesGroup,
            format!("Entities {} {verb_many} group {group}", id_list(many)),
        ),
    }
}

fn group_events(out: &mut Emitter, step: u32, prev: &[Group], curr: &[Group]) {
    let prev_by_id: BTreeMap<u32, &Group> = prev.iter().map(|g| (g.id, g)).collect();
    let curr_ids: Vec<u32> = curr.iter().map(|g| g.id).collect();
    let mut merged = Vec::new();

    for g in curr {
        let Some(before) = prev_by_id.get(&g.id) else {
            out.push(
                step,
                step,
                TemplateId::EntitiesGroup,
                format!("Entities {} form group {}", id_list(&g.members), g.id),
            );
            continue;
        };
        // previous groups that vanished and whose members mostly landed here
        let absorbed: Vec<&Group> = prev
            .iter()
            .filter(|h| !curr_ids.contains(&h.id))
            .filter(|h| {
                let inside = h.members.iter().filter(|m| g.members.contains(m)).count();
                2 * inside > h.members.len()
            })
            .collect();
        for h in &absorbed {
            out.push(
                step,
                step,
                TemplateId::GroupMerges,
                format!("Group {} merges with group {}", g.id, h.id),
            );
            merged.push(h.id);
        }
        let joined: Vec<u64> = g
            .members
            .iter()
            .copied()
            .filter(|m| !before.members.contains(m))
            .filter(|m| !absorbed.iter().any(|h| h.members.contains(m)))
            .collect();
        let left: Vec<u64> = before
            .members
            .iter()
            .copied()
            .filter(|m| !g.members.contains(m))
            .collect();
        group_membership(out, step, &joined, "joins", "join", g.id);
        group_membership(out, step, &left, "leaves", "leave", g.id);
        if before.anchor != g.anchor {
            out.push(
                step - 1,
                step,
                TemplateId::GroupMoves,
                format!("Group {} moves from {} to {}", g.id, before.anchor, g.anchor),
            );
        }
    }
    for h in prev {
        if !curr_ids.contains(&h.id) && !merged.contains(&h.id) {
            out.push(
                step,
                step,
                TemplateId::GroupDissolved,
                format!("Group {} is dissolved", h.id),
            );
        }
    }
}

fn entity_events(out: &mut Emitter, step: u32, prev: &EntityState, curr: &EntityState) {
    for e in &curr.entities {
        match prev.entity(e.id) {
            Some(before) if before.pos != e.pos => {
                if matches!(e.kind, EntityKind::Marine | EntityKind::Beacon) {
                    out.push(
                        step - 1,
                        step,
                        TemplateId::EntityMoves,
                        format!(
                            "{} {} moves from {} to {}",
                            kind_name(e.kind),
                            e.id,
                            before.pos,
                            e.pos
                        ),
                    );
                }
            }
            Some(_) => {}
            None => appear(out, step, e),
        }
    }
    for shard in prev.of_kind(EntityKind::Shard) {
        if curr.entity(shard.id).is_some() {
            continue;
        }
        out.push(
            step,
            step,
            TemplateId::ShardCollected,
            format!("Shard {} is collected", shard.id),
        );
        if let Some(marine) = curr
            .of_kind(EntityKind::Marine)
            .find(|m| m.pos == shard.pos)
        {
            out.push(
                step,
                step,
                TemplateId::MarineCollects,
                format!("Marine {} collects shard {}", marine.id, shard.id),
            );
        }
    }
}

fn appear(out: &mut Emitter, step: u32, e: &Entity) {
    if matches!(e.kind, EntityKind::Shard | EntityKind::Beacon) {
        out.push(
            step,
            step,
            TemplateId::Appears,
            format!("{} appears at {}", kind_name(e.kind), e.pos),
        );
    }
}

/// Distances from each marine to every shard and to every group it is not
/// a member of.
fn target_distances(s: &EntityState) -> BTreeMap<(u64, Target), f64> {
    let mut out = BTreeMap::new();
    for m in s.of_kind(EntityKind::Marine) {
        for shard in s.of_kind(EntityKind::Shard) {
            out.insert((m.id, Target::Shard(shard.id)), m.pos.euclidean(shard.pos));
        }
        for g in s.groups.iter().filter(|g| !g.members.contains(&m.id)) {
            out.insert((m.id, Target::Group(g.id)), m.pos.euclidean(g.anchor));
        }
    }
    out
}

/// Tags a multi-entity episode. With `with_timestamps`, every text starts
/// with `t1 -- t2 `.
pub fn tag_multientity_episode(e: &Episode, with_timestamps: bool) -> Result<TagCorpus> {
    if e.env_kind != EnvKind::MultiEntity {
        return Err(Error::InvalidParameter(
            "expected a multi-entity episode".into(),
        ));
    }
    let states: Vec<&EntityState> = e
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| match &s.state {
            State::Entities(st) => Ok(st),
            State::Grid(_) => Err(Error::Invariant(format!("step {i} is a grid state"))),
        })
        .collect::<Result<_>>()?;

    let mut out = Emitter {
        timestamps: with_timestamps,
        tags: Vec::new(),
    };
    let Some(first) = states.first() else {
        return Ok(TagCorpus::new(episode_ref(e), Vec::new()));
    };
    for ent in &first.entities {
        appear(&mut out, 0, ent);
    }
    group_events(&mut out, 0, &[], &first.groups);

    let mut open: BTreeMap<(u64, Target), OpenInterval> = BTreeMap::new();
    let mut prev_dist = target_distances(first);
    for (t, pair) in states.windows(2).enumerate() {
        let step = (t + 1) as u32;
        let (prev, curr) = (pair[0], pair[1]);
        entity_events(&mut out, step, prev, curr);
        group_events(&mut out, step, &prev.groups, &curr.groups);

        let dist = target_distances(curr);
        for (key, &d) in &dist {
            let trend = match prev_dist.get(key) {
                Some(&before) if d < before => Some(Trend::Closer),
                Some(&before) if d > before => Some(Trend::Farther),
                _ => None,
            };
            match (trend, open.remove(key)) {
                (Some(tr), Some(mut iv)) if iv.trend == tr && iv.end == step - 1 => {
                    iv.end = step;
                    open.insert(*key, iv);
                }
                (trend, previous) => {
                    if let Some(iv) = previous {
                        out.close(key.0, key.1, iv);
                    }
                    if let Some(tr) = trend {
                        open.insert(
                            *key,
                            OpenInterval {
                                trend: tr,
                                start: step - 1,
                                end: step,
                            },
                        );
                    }
                }
            }
        }
        // targets that vanished (collected shard, dissolved group)
        let stale: Vec<(u64, Target)> = open
            .keys()
            .filter(|k| !dist.contains_key(k))
            .copied()
            .collect();
        for key in stale {
            let iv = open.remove(&key).expect("key listed from map");
            out.close(key.0, key.1, iv);
        }
        prev_dist = dist;
    }
    for (key, iv) in open {
        out.close(key.0, key.1, iv);
    }
    Ok(TagCorpus::new(episode_ref(e), out.tags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::{
        generate_multientity_episode, Action, MultiEntityConfig, Pos, Step,
    };
    use crate::tagging::parse_tag_text;

    fn episode_from(states: Vec<EntityState>) -> Episode {
        Episode {
            env_kind: EnvKind::MultiEntity,
            seed: 0,
            steps: states
                .into_iter()
                .enumerate()
                .map(|(i, s)| Step {
                    step_no: i as u32,
                    state: State::Entities(s),
                    action: (i > 0).then_some(Action::Tick),
                })
                .collect(),
            frames: None,
        }
    }

    fn marine(id: u64, x: i32, y: i32) -> Entity {
        Entity {
            id,
            kind: EntityKind::Marine,
            pos: Pos::new(x, y),
        }
    }

    fn shard(id: u64, x: i32, y: i32) -> Entity {
        Entity {
            id,
            kind: EntityKind::Shard,
            pos: Pos::new(x, y),
        }
    }

    #[test]
    fn closer_interval_is_coalesced() {
        const M: u64 = 4299161601;
        const S: u64 = 4299423745;
        let xs = [0, 0, 0, 1, 2, 2];
        let states = xs
            .iter()
            .map(|&x| EntityState {
                entities: vec![marine(M, x, 0), shard(S, 5, 0)],
                groups: vec![],
            })
            .collect();
        let corpus = tag_multientity_episode(&episode_from(states), true).unwrap();
        let rel: Vec<&str> = corpus
            .tags
            .iter()
            .filter(|t| t.template == TemplateId::Relative)
            .map(|t| t.text.as_str())
            .collect();
        assert_eq!(rel, ["2 -- 4 Marine 4299161601 moves closer to shard 4299423745"]);
    }

    #[test]
    fn collection_emits_both_templates() {
        let states = vec![
            EntityState {
                entities: vec![marine(1111111111, 3, 3), shard(2222222222, 4, 3)],
                groups: vec![],
            },
            EntityState {
                entities: vec![marine(1111111111, 4, 3), shard(3333333333, 9, 9)],
                groups: vec![],
            },
        ];
        let corpus = tag_multientity_episode(&episode_from(states), false).unwrap();
        let texts: Vec<&str> = corpus.texts().collect();
        assert!(texts.contains(&"Shard 2222222222 is collected"));
        assert!(texts.contains(&"Marine 1111111111 collects shard 2222222222"));
        assert!(texts.contains(&"Shard appears at (9, 9)"));
        assert!(texts.contains(&"Marine 1111111111 moves from (3, 3) to (4, 3)"));
    }

    #[test]
    fn group_formation_and_dissolution() {
        let a = 4299161601;
        let b = 4298899457;
        let group = Group {
            id: 1,
            members: vec![a, b],
            anchor: Pos::new(10, 10),
        };
        let states = vec![
            EntityState {
                entities: vec![marine(a, 0, 0), marine(b, 20, 20)],
                groups: vec![],
            },
            EntityState {
                entities: vec![marine(a, 10, 10), marine(b, 11, 10)],
                groups: vec![group],
            },
            EntityState {
                entities: vec![marine(a, 0, 10), marine(b, 20, 10)],
                groups: vec![],
            },
        ];
        let corpus = tag_multientity_episode(&episode_from(states), false).unwrap();
        let texts: Vec<&str> = corpus.texts().collect();
        assert!(texts.contains(&"Entities 4299161601, 4298899457 form group 1"));
        assert!(texts.contains(&"Group 1 is dissolved"));
    }

    #[test]
    fn generated_tags_parse_and_never_touch() {
        let cfg = MultiEntityConfig {
            n_beacons: 1,
            ..MultiEntityConfig::new(4, 3, 20)
        };
        for seed in 0..8 {
            let e = generate_multientity_episode(&cfg, seed).unwrap();
            let corpus = tag_multientity_episode(&e, true).unwrap();
            let mut last_end: BTreeMap<(TemplateId, Vec<String>), u32> = BTreeMap::new();
            let mut rel = corpus.tags.clone();
            rel.sort_by_key(|t| t.step_start);
            for t in &rel {
                let p = parse_tag_text(&t.text).expect("template text");
                assert_eq!(p.template, t.template);
                assert_eq!(p.timestamp, Some((t.step_start, t.step_end)));
                if t.template == TemplateId::Relative {
                    let key = (p.template, p.slots.clone());
                    if let Some(&end) = last_end.get(&key) {
                        assert!(end < t.step_start, "touching intervals for {}", t.text);
                    }
                    last_end.insert(key, t.step_end);
                }
            }
        }
    }
}
