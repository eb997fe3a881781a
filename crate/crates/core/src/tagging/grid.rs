use super::{episode_ref, Tag, TagCorpus, TemplateId};
use crate::episodes::{
    player_cell, Action, DoorState, EnvKind, Episode, GridState, KeyState, Raster, State,
};
use crate::moments::{infer_direction, Heading};
use crate::{Error, Result};

fn door_word(state: DoorState) -> &'static str {
    match state {
        DoorState::Open => "open",
        DoorState::Closed | DoorState::Locked => "closed",
    }
}

/// State tags for `curr` plus event tags for the transition from `prev`.
pub fn tag_grid_step(
    step: u32,
    prev: Option<&GridState>,
    curr: &GridState,
    action: Option<Action>,
) -> Vec<Tag> {
    use TemplateId::*;
    let mut tags = vec![
        Tag::at(step, ObjectAt, format!("The player is at {}.", curr.player_pos)),
        Tag::at(
            step,
            Facing,
            format!("The player is facing {}.", curr.player_dir.name()),
        ),
        Tag::at(step, ObjectAt, format!("The goal is at {}.", curr.goal)),
    ];
    match curr.key {
        Some(KeyState::At(p)) => tags.push(Tag::at(step, ObjectAt, format!("The key is at {p}."))),
        Some(KeyState::Carried) => {
            tags.push(Tag::at(step, KeyPickedUp, "The key has been picked up.".into()))
        }
        None => {}
    }
    if let Some(door) = curr.door {
        tags.push(Tag::at(step, ObjectAt, format!("The door is at {}.", door.pos)));
        tags.push(Tag::at(
            step,
            DoorState,
            format!("The door is {}.", door_word(door.state)),
        ));
    }

    let (Some(prev), Some(action)) = (prev, action) else {
        return tags;
    };
    let event = |template, text: &str| Tag::at(step, template, text.to_string());
    match action {
        Action::TurnLeft if prev.player_dir != curr.player_dir => {
            tags.push(event(Turns, "The player turns left."))
        }
        Action::TurnRight if prev.player_dir != curr.player_dir => {
            tags.push(event(Turns, "The player turns right."))
        }
        Action::Forward if prev.player_pos != curr.player_pos => {
            tags.push(event(MovesForward, "The player moves forward."))
        }
        Action::Pickup if !prev.key_carried() && curr.key_carried() => {
            tags.push(event(KeyAction, "The player picks up the key."))
        }
        Action::Drop if prev.key_carried() && !curr.key_carried() => {
            tags.push(event(KeyAction, "The player drops the key."))
        }
        Action::Open | Action::Close => {
            let was_open = prev.door.map(|d| d.state == crate::episodes::DoorState::Open);
            let is_open = curr.door.map(|d| d.state == crate::episodes::DoorState::Open);
            match (was_open, is_open) {
                (Some(false), Some(true)) => tags.push(event(DoorAction, "The player opens the door.")),
                (Some(true), Some(false)) => {
                    tags.push(event(DoorAction, "The player closes the door."))
                }
                _ => {}
            }
        }
        _ => {}
    }
    if curr.player_pos == curr.goal && prev.player_pos != prev.goal {
        tags.push(event(ReachedGoal, "The player reached the goal."));
    }
    tags
}

fn matches_signature(cell: &Raster, signature: &Raster) -> bool {
    let n = cell.intensities.len() as f64;
    let mad: f64 = cell
        .intensities
        .iter()
        .zip(&signature.intensities)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n;
    mad < 0.05
}

/// Visual-anomaly tags: an off-axis player glyph, or a door cell that looks
/// neither open nor closed.
pub fn tag_grid_anomalies(step: u32, frame: &Raster, curr: &GridState) -> Vec<Tag> {
    let mut tags = Vec::new();
    if curr.width <= 0 || !frame.width.is_multiple_of(curr.width as usize) {
        return tags;
    }
    let cell_px = frame.width / curr.width as usize;
    if cell_px == 0 || frame.height != cell_px * curr.height as usize {
        return tags;
    }
    let player = player_cell(frame, curr.player_pos, cell_px);
    if infer_direction(&player) == Heading::NonCardinal {
        tags.push(Tag::at(
            step,
            TemplateId::NonCardinal,
            "The player is facing a non-cardinal direction.".into(),
        ));
    }
    if let Some(door) = curr.door.filter(|d| d.pos != curr.player_pos) {
        let cell = player_cell(frame, door.pos, cell_px);
        let open = crate::episodes::door_signature(cell_px, DoorState::Open);
        let closed = crate::episodes::door_signature(cell_px, DoorState::Closed);
        if !matches_signature(&cell, &open) && !matches_signature(&cell, &closed) {
            tags.push(Tag::at(
                step,
                TemplateId::DoorUnknown,
                "The state of the door is unknown.".into(),
            ));
        }
    }
    tags
}

/// Tags every step of a grid episode. Anomaly tags are added when
/// `anomalies` is set and the episode carries frames.
pub fn tag_grid_episode(e: &Episode, anomalies: bool) -> Result<TagCorpus> {
    if e.env_kind != EnvKind::Grid {
        return Err(Error::InvalidParameter("expected a grid episode".into()));
    }
    let mut tags = Vec::new();
    let mut prev: Option<&GridState> = None;
    for (i, step) in e.steps.iter().enumerate() {
        let State::Grid(curr) = &step.state else {
            return Err(Error::Invariant(format!("step {i} is not a grid state")));
        };
        tags.extend(tag_grid_step(step.step_no, prev, curr, step.action));
        if anomalies {
            if let Some(frame) = e.frames.as_ref().and_then(|f| f.get(i)) {
                tags.extend(tag_grid_anomalies(step.step_no, frame, curr));
            }
        }
        prev = Some(curr);
    }
    Ok(TagCorpus::new(episode_ref(e), tags))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::episodes::{
        attach_frames, generate_grid_episode, render_frame, render_player_glyph, Direction,
        GridLayout, Pos,
    };
    use crate::tagging::{parse_tag_text, TagKind};

    fn texts(tags: &[Tag]) -> Vec<&str> {
        tags.iter().map(|t| t.text.as_str()).collect()
    }

    fn door_key_episode() -> Episode {
        generate_grid_episode(GridLayout::DoorKey, 8, 7).unwrap()
    }

    #[test]
    fn forward_step_tags() {
        let e = door_key_episode();
        let states: Vec<&GridState> = e.grid_states().collect();
        let mut prev = states[0].clone();
        prev.player_pos = Pos::new(3, 1);
        prev.player_dir = Direction::Right;
        prev.key = None;
        prev.door = None;
        let mut curr = prev.clone();
        curr.player_pos = Pos::new(4, 1);
        let tags = tag_grid_step(3, Some(&prev), &curr, Some(Action::Forward));
        let t = texts(&tags);
        assert!(t.contains(&"The player is at (4, 1)."));
        assert!(t.contains(&"The player is facing right."));
        assert!(t.contains(&"The player moves forward."));
        assert_eq!(tags.iter().filter(|t| t.kind == TagKind::Event).count(), 1);
    }

    #[test]
    fn pickup_then_carried_state() {
        let e = door_key_episode();
        let corpus = tag_grid_episode(&e, false).unwrap();
        let pickup = corpus
            .tags
            .iter()
            .find(|t| t.text == "The player picks up the key.")
            .expect("pickup event");
        let carried: Vec<u32> = corpus
            .tags
            .iter()
            .filter(|t| t.text == "The key has been picked up.")
            .map(|t| t.step_start)
            .collect();
        assert_eq!(carried.first(), Some(&pickup.step_start));
        assert_eq!(*carried.last().unwrap() as usize, e.steps.len() - 1);
        assert!(corpus.texts().any(|t| t == "The player opens the door."));
        assert!(corpus.texts().any(|t| t == "The player reached the goal."));
    }

    #[test]
    fn first_step_has_no_events() {
        let e = door_key_episode();
        let first = e.grid_states().next().unwrap();
        let tags = tag_grid_step(0, None, first, None);
        assert!(tags.iter().all(|t| t.kind == TagKind::State));
        assert_eq!(tags.len(), 6);
    }

    #[test]
    fn state_tag_count_constant_per_step() {
        for (layout, per_step) in [(GridLayout::DoorKey, 6), (GridLayout::FourRooms, 3)] {
            let e = generate_grid_episode(layout, 8, 3).unwrap();
            let corpus = tag_grid_episode(&e, false).unwrap();
            for step in 0..e.steps.len() as u32 {
                let n = corpus
                    .tags
                    .iter()
                    .filter(|t| t.step_start == step && t.kind == TagKind::State)
                    .count();
                assert_eq!(n, per_step);
            }
        }
    }

    #[test]
    fn every_grid_tag_parses_back() {
        for seed in 0..10 {
            let mut e = generate_grid_episode(GridLayout::DoorKey, 7, seed).unwrap();
            attach_frames(&mut e, 8).unwrap();
            for t in tag_grid_episode(&e, true).unwrap().tags {
                let parsed = parse_tag_text(&t.text).expect("template text");
                assert_eq!(parsed.template, t.template);
                assert_eq!(t.step_start, t.step_end);
            }
        }
    }

    #[test]
    fn clean_render_has_no_anomalies() {
        let mut e = door_key_episode();
        attach_frames(&mut e, 10).unwrap();
        let corpus = tag_grid_episode(&e, true).unwrap();
        assert!(corpus.tags.iter().all(|t| t.kind != TagKind::Anomaly));
    }

    #[test]
    fn rotated_player_is_non_cardinal() {
        let e = door_key_episode();
        let state = e.grid_states().next().unwrap();
        let c = 12;
        let mut frame = render_frame(state, c).unwrap();
        let glyph = render_player_glyph(c, PI / 6.0).unwrap();
        let (x0, y0) = (state.player_pos.x as usize * c, state.player_pos.y as usize * c);
        for y in 0..c {
            for x in 0..c {
                frame.set(x0 + x, y0 + y, glyph.get(x, y));
            }
        }
        let tags = tag_grid_anomalies(0, &frame, state);
        assert_eq!(texts(&tags), ["The player is facing a non-cardinal direction."]);
    }

    #[test]
    fn zeroed_door_is_unknown() {
        let e = door_key_episode();
        let state = e.grid_states().next().unwrap();
        let c = 8;
        let mut frame = render_frame(state, c).unwrap();
        let door = state.door.unwrap().pos;
        for y in 0..c {
            for x in 0..c {
                frame.set(door.x as usize * c + x, door.y as usize * c + y, 0.0);
            }
        }
        let tags = tag_grid_anomalies(0, &frame, state);
        assert_eq!(texts(&tags), ["The state of the door is unknown."]);
    }
}
