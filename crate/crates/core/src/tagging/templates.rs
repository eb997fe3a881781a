//! The closed set of tag templates and a parser that maps text back to them.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// One row of the template tables. Variants are declared in corpus order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    /// The player/goal/key/door is at (x, y).
    ObjectAt,
    /// The player is facing left/right/up/down.
    Facing,
    /// The door is open/closed.
    DoorState,
    /// The key has been picked up.
    KeyPickedUp,
    /// The player turns left/right.
    Turns,
    /// The player moves forward.
    MovesForward,
    /// The player picks up/drops the key.
    KeyAction,
    /// The player opens/closes the door.
    DoorAction,
    /// The player reached the goal.
    ReachedGoal,
    /// The player is facing a non-cardinal direction.
    NonCardinal,
    /// The state of the door is unknown.
    DoorUnknown,
    /// Marine/Beacon [ID] moves from (x, y) to (x, y)
    EntityMoves,
    /// Beacon/Shard appears at (x, y)
    Appears,
    /// Shard [ID] is collected
    ShardCollected,
    /// Marine [ID] collects shard [ID]
    MarineCollects,
    /// Marine [ID] moves closer to/farther from group/shard [ID]
    Relative,
    /// Entity [ID] leaves/joins group [ID]
    EntityGroup,
    /// Entities [IDs] leave/join/form group [ID]
    EntitiesGroup,
    /// Group [ID] is dissolved
    GroupDissolved,
    /// Group [ID] merges with group [ID]
    GroupMerges,
    /// Group [ID] moves from (x, y) to (x, y)
    GroupMoves,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagKind {
    State,
    Event,
    Anomaly,
}

impl TemplateId {
    pub fn kind(self) -> TagKind {
        use TemplateId::*;
        match self {
            ObjectAt | Facing | DoorState | KeyPickedUp => TagKind::State,
            NonCardinal | DoorUnknown => TagKind::Anomaly,
            _ => TagKind::Event,
        }
    }

    fn pattern(self) -> &'static str {
        use TemplateId::*;
        match self {
            ObjectAt => r"^The (player|goal|key|door) is at \((-?\d+), (-?\d+)\)\.$",
            Facing => r"^The player is facing (left|right|up|down)\.$",
            DoorState => r"^The door is (open|closed)\.$",
            KeyPickedUp => r"^The key has been picked up\.$",
            Turns => r"^The player turns (left|right)\.$",
            MovesForward => r"^The player moves forward\.$",
            KeyAction => r"^The player (picks up|drops) the key\.$",
            DoorAction => r"^The player (opens|closes) the door\.$",
            ReachedGoal => r"^The player reached the goal\.$",
            NonCardinal => r"^The player is facing a non-cardinal direction\.$",
            DoorUnknown => r"^The state of the door is unknown\.$",
            EntityMoves => {
                r"^(Marine|Beacon) (\d+) moves from \((-?\d+), (-?\d+)\) to \((-?\d+), (-?\d+)\)$"
            }
            Appears => r"^(Beacon|Shard) appears at \((-?\d+), (-?\d+)\)$",
            ShardCollected => r"^Shard (\d+) is collected$",
            MarineCollects => r"^Marine (\d+) collects shard (\d+)$",
            Relative => r"^Marine (\d+) moves (closer to|farther from) (group|shard) (\d+)$",
            EntityGroup => r"^Entity (\d+) (leaves|joins) group (\d+)$",
            EntitiesGroup => r"^Entities (\d+(?:, \d+)+) (leave|join|form) group (\d+)$",
            GroupDissolved => r"^Group (\d+) is dissolved$",
            GroupMerges => r"^Group (\d+) merges with group (\d+)$",
            GroupMoves => r"^Group (\d+) moves from \((-?\d+), (-?\d+)\) to \((-?\d+), (-?\d+)\)$",
        }
    }

    pub const ALL: [TemplateId; 21] = {
        use TemplateId::*;
        [
            ObjectAt, Facing, DoorState, KeyPickedUp, Turns, MovesForward, KeyAction,
            DoorAction, ReachedGoal, NonCardinal, DoorUnknown, EntityMoves, Appears,
            ShardCollected, MarineCollects, Relative, EntityGroup, EntitiesGroup,
            GroupDissolved, GroupMerges, GroupMoves,
        ]
    };
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedTag {
    pub template: TemplateId,
    pub slots: Vec<String>,
    /// `(t1, t2)` when the text carried a `t1 -- t2 ` prefix.
    pub timestamp: Option<(u32, u32)>,
}

fn compiled() -> &'static [(TemplateId, Regex)] {
    static TABLE: OnceLock<Vec<(TemplateId, Regex)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        TemplateId::ALL
            .iter()
            .map(|&t| (t, Regex::new(t.pattern()).expect("template patterns are valid")))
            .collect()
    })
}

fn timestamp_prefix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(\d+) -- (\d+) ").expect("valid pattern"))
}

/// Strips an optional `t1 -- t2 ` prefix.
pub fn split_timestamp(text: &str) -> (Option<(u32, u32)>, &str) {
    if let Some(c) = timestamp_prefix().captures(text) {
        if let (Ok(a), Ok(b)) = (c[1].parse(), c[2].parse()) {
            return (Some((a, b)), &text[c[0].len()..]);
        }
    }
    (None, text)
}

/// Maps a tag text back to its template and slot values, or `None` for
/// free-form text.
pub fn parse_tag_text(text: &str) -> Option<ParsedTag> {
    let (timestamp, body) = split_timestamp(text);
    let mut hits = compiled().iter().filter_map(|(t, re)| {
        re.captures(body).map(|c| ParsedTag {
            template: *t,
            slots: c
                .iter()
                .skip(1)
                .flatten()
                .map(|m| m.as_str().to_string())
                .collect(),
            timestamp,
        })
    });
    let first = hits.next()?;
    // templates are mutually exclusive
    debug_assert!(hits.next().is_none(), "ambiguous tag text: {text}");
    Some(first)
}
