//! The six shipped example descriptions and their golden scenario
//! documents under assets/scenarios/.

/// A shipped description with a stable identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub id: &'static str,
    pub description: &'static str,
}

pub const FORCE_RIGHT_TURN: Preset = Preset {
    id: "force-right-turn",
    description: "On a beautiful day, in front of a crossroad, a sedan on the left turns right without fully overtaking the ego, ignoring the lane marks.",
};

pub const SUDDEN_STOP: Preset = Preset {
    id: "sudden-stop",
    description: "On a rainy day, on a curved road, a van is driving ahead of the ego vehicle at a moderate speed. A while later, it suddenly brakes at maximum deceleration and remains idle",
};

pub const RUNNING_RED_LIGHT: Preset = Preset {
    id: "running-red-light",
    description: "On a misty morning, in front of a crossroad, there's almost no one on the street, a sedan at the left entrance of the intersection ignores the red light and drives through the intersection, with no intention to yield to the ego vehicle",
};

pub const DANGEROUS: Preset = Preset {
    id: "dangerous",
    description: "In a heavy traffic, a truck on the left overtakes the ego vehicle, cut in aggressively and suddenly brakes, then kept going, a sedan follows the ego vehicle very closely behind.",
};

pub const MODERATE: Preset = Preset {
    id: "moderate",
    description: "A truck on the left overtakes the ego vehicle, cut in, then kept going, a sedan follows the ego vehicle.",
};

pub const SAFE: Preset = Preset {
    id: "safe",
    description: "There's almost no one on the street, pretty quiet, a truck on the left overtakes the ego vehicle, cuts in in a decent way, then keeps going, a sedan follows the ego vehicle remotely.",
};

pub const ALL: [Preset; 6] = [
    FORCE_RIGHT_TURN,
    SUDDEN_STOP,
    RUNNING_RED_LIGHT,
    DANGEROUS,
    MODERATE,
    SAFE,
];

pub fn by_id(id: &str) -> Option<Preset> {
    ALL.into_iter().find(|p| p.id == id)
}
