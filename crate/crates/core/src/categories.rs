//! The fixed vocabulary of goal categories.

use std::collections::BTreeSet;

/// All goal categories, alphabetical.
pub const GOAL_CATEGORIES: [&str; 22] = [
    "AlarmClock",
    "Book",
    "Bowl",
    "CellPhone",
    "Chair",
    "CoffeeMachine",
    "DeskLamp",
    "FloorLamp",
    "Fridge",
    "GarbageCan",
    "Kettle",
    "Laptop",
    "LightSwitch",
    "Microwave",
    "Pan",
    "Plate",
    "Pot",
    "RemoteControl",
    "Sink",
    "StoveBurner",
    "Television",
    "Toaster",
];

/// Goals held out of training for zero-shot evaluation.
pub const ZERO_SHOT_GOALS: [&str; 6] = [
    "Bowl",
    "DeskLamp",
    "Laptop",
    "LightSwitch",
    "Plate",
    "StoveBurner",
];

pub fn is_goal_category(name: &str) -> bool {
    GOAL_CATEGORIES.binary_search(&name).is_ok()
}

pub fn goal_index(name: &str) -> Option<usize> {
    GOAL_CATEGORIES.binary_search(&name).ok()
}

pub fn all_goals() -> BTreeSet<String> {
    GOAL_CATEGORIES.iter().map(|s| s.to_string()).collect()
}
